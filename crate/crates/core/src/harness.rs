//! End-to-end pipelines behind the command-line tool: fitting, certifying
//! and the phase-diagram sweep.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{certify, CertificateVerdict};
use crate::cluster::{kmeans, match_labels, refit_regression, RefitResult, DEFAULT_RESTARTS};
use crate::error::{MlrError, Result};
use crate::geometry::{check_conditions, ConditionReport};
use crate::io;
use crate::irls::{irls_solve, SolveTrace, SolverOptions};
use crate::model::{
    candidate_solution, recovery_error, Dataset, EstimateField, Measurement, MixtureModel,
};
use crate::synth::{derive_seed, gen_sim1, gen_sim2, Sim1Config, Sim2Config};

pub const APERTURE_MAX: f64 = 0.75;
pub const IMBALANCE_MAX: f64 = 0.062;
pub const DEFAULT_SUCCESS_TOL: f64 = 1e-5;
pub const DEFAULT_TRIALS: usize = 10;

/// Replaces `column` (0-based) by `alpha * (value - mean)`; every other
/// entry and all responses are kept.
pub fn preprocess_center_scale(dataset: &Dataset, alpha: f64, column: usize) -> Result<Dataset> {
    if column >= dataset.dim() {
        return Err(MlrError::invalid(format!(
            "column {column} out of range for d = {}",
            dataset.dim()
        )));
    }
    if !alpha.is_finite() {
        return Err(MlrError::invalid("scale must be finite"));
    }
    let mu = dataset.rows().iter().map(|r| r.a[column]).sum::<f64>() / dataset.len() as f64;
    let rows = dataset
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut a = r.a.clone();
            a[column] = alpha * (a[column] - mu);
            Measurement::new(a, r.b)
                .map_err(|e| MlrError::invalid(format!("row {} after preprocessing: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let out = Dataset::new(rows)?;
    match dataset.labels() {
        Some(l) => out.with_labels(l.to_vec()),
        None => Ok(out),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub alpha: f64,
    /// 0-based column index.
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub k: usize,
    pub solver: SolverOptions,
    pub restarts: usize,
    pub seed: u64,
    pub preprocess: Option<Preprocess>,
}

impl FitOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            solver: SolverOptions::default(),
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            preprocess: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub k: usize,
    pub m: usize,
    pub d: usize,
    pub refit: RefitResult,
    /// 0-based cluster of every row.
    pub labels: Vec<usize>,
    pub kmeans_inertia: f64,
    pub trace: SolveTrace,
    /// Fraction of rows whose cluster matches the supplied labels under the
    /// best relabeling; present only for labeled input.
    pub accuracy: Option<f64>,
    /// `permutation[cluster] = class` realizing `accuracy`.
    pub permutation: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub report: FitReport,
    pub estimates: EstimateField,
}

/// Convex fusion, then k-means on the estimates, then per-cluster least
/// squares.
pub fn run_fit(dataset: &Dataset, opts: &FitOptions) -> Result<FitOutcome> {
    if opts.k == 0 {
        return Err(MlrError::invalid("k must be at least 1"));
    }
    let prepared;
    let data = match &opts.preprocess {
        Some(p) => {
            prepared = preprocess_center_scale(dataset, p.alpha, p.column)?;
            &prepared
        }
        None => dataset,
    };
    let (z, trace) = irls_solve(data, &opts.solver)?;
    let clusters = kmeans(&z, opts.k, opts.restarts, opts.seed)?;
    let refit = refit_regression(data, &clusters.labels, opts.k)?;
    let (accuracy, permutation) = match data.labels() {
        Some(truth) if data.num_classes() == Some(opts.k) => {
            let (perm, acc) = match_labels(&clusters.labels, truth, opts.k)?;
            (Some(acc), Some(perm))
        }
        _ => (None, None),
    };
    Ok(FitOutcome {
        report: FitReport {
            k: opts.k,
            m: data.len(),
            d: data.dim(),
            refit,
            labels: clusters.labels,
            kmeans_inertia: clusters.inertia,
            trace,
            accuracy,
            permutation,
        },
        estimates: z,
    })
}

/// Runs [`run_fit`] on a CSV file and writes `report.json`, `labels.csv`,
/// `betas.csv` and `estimates.csv` into `out_dir`.
pub fn cmd_fit(
    data: impl AsRef<Path>,
    opts: &FitOptions,
    out_dir: impl AsRef<Path>,
) -> Result<FitReport> {
    let dataset = io::load_csv(data)?;
    let outcome = run_fit(&dataset, opts)?;
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| MlrError::io(out, e))?;
    io::write_json(&outcome.report, out.join("report.json"))?;
    io::write_labels(&outcome.report.labels, out.join("labels.csv"))?;
    io::write_betas(&outcome.report.refit.betas_hat, out.join("betas.csv"))?;
    io::write_estimates(
        &outcome.estimates,
        Some(&outcome.report.labels),
        out.join("estimates.csv"),
    )?;
    Ok(outcome.report)
}

/// Condition report plus certificate verdict. When the certificate is
/// undefined (a row orthogonal to its class direction) `verdict` is absent
/// and `failure` explains why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub conditions: ConditionReport,
    pub verdict: Option<CertificateVerdict>,
    pub certifies: bool,
    pub failure: Option<String>,
}

pub fn run_certify(dataset: &Dataset, betas: Vec<Vec<f64>>) -> Result<CertifyReport> {
    let model = MixtureModel::from_labeled(betas, dataset)?;
    let conditions = check_conditions(dataset, &model)?;
    match certify(dataset, &model) {
        Ok(v) => Ok(CertifyReport {
            conditions,
            certifies: v.certifies,
            verdict: Some(v),
            failure: None,
        }),
        Err(e @ MlrError::OrthogonalPoint { .. }) => Ok(CertifyReport {
            conditions,
            verdict: None,
            certifies: false,
            failure: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

pub fn cmd_certify(data: impl AsRef<Path>, betas: impl AsRef<Path>) -> Result<CertifyReport> {
    let dataset = io::load_csv(data)?;
    dataset.require_labels()?;
    run_certify(&dataset, io::load_betas(betas)?)
}

/// Solves the fusion program for a CSV file; writes `estimates.csv` and
/// `trace.json` into `out_dir`.
pub fn cmd_solve(
    data: impl AsRef<Path>,
    opts: &SolverOptions,
    out_dir: impl AsRef<Path>,
) -> Result<SolveTrace> {
    let dataset = io::load_csv(data)?;
    let (z, trace) = irls_solve(&dataset, opts)?;
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| MlrError::io(out, e))?;
    io::write_estimates(&z, None, out.join("estimates.csv"))?;
    io::write_json(&trace, out.join("trace.json"))?;
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMode {
    /// Balanced classes, sweep over the aperture.
    Aperture,
    /// Third class shifted, sweep over its imbalance.
    Imbalance,
}

impl PhaseMode {
    pub fn range_max(self) -> f64 {
        match self {
            PhaseMode::Aperture => APERTURE_MAX,
            PhaseMode::Imbalance => IMBALANCE_MAX,
        }
    }

    /// 16 evenly spaced values from 0 to the top of the range.
    pub fn default_sweep(self) -> Vec<f64> {
        let hi = self.range_max();
        (0..16).map(|i| (i as f64 / 15.0) * hi).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub mode: PhaseMode,
    pub d_values: Vec<usize>,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub success_tol: f64,
    pub base_seed: u64,
    pub solver: SolverOptions,
    /// Permit sweep values outside the mode's range.
    pub allow_unsafe: bool,
}

impl PhaseConfig {
    pub fn new(mode: PhaseMode, d_values: Vec<usize>, sweep_values: Vec<f64>) -> Self {
        Self {
            mode,
            d_values,
            sweep_values,
            trials: DEFAULT_TRIALS,
            success_tol: DEFAULT_SUCCESS_TOL,
            base_seed: 0,
            solver: SolverOptions::default(),
            allow_unsafe: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(MlrError::invalid("trials must be at least 1"));
        }
        if self.d_values.is_empty() || self.sweep_values.is_empty() {
            return Err(MlrError::invalid("empty dimension or sweep list"));
        }
        let min_d = match self.mode {
            PhaseMode::Aperture => 1,
            PhaseMode::Imbalance => 2,
        };
        if let Some(&d) = self.d_values.iter().find(|&&d| d < min_d) {
            return Err(MlrError::invalid(format!(
                "dimension {d} too small for this mode"
            )));
        }
        if self.success_tol.is_nan() || self.success_tol <= 0.0 {
            return Err(MlrError::invalid("success tolerance must be positive"));
        }
        let hi = self.mode.range_max();
        for &v in &self.sweep_values {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MlrError::invalid(format!(
                    "sweep value {v} must be finite and nonnegative"
                )));
            }
            if v > hi && !self.allow_unsafe {
                return Err(MlrError::invalid(format!(
                    "sweep value {v} exceeds {hi}; pass --unsafe to allow it"
                )));
            }
        }
        self.solver.validate()
    }

    /// Seed of one trial; depends only on the base seed and the cell and
    /// trial indices.
    pub fn trial_seed(&self, d: usize, sweep_index: usize, trial: usize) -> u64 {
        derive_seed(
            self.base_seed,
            &[d as u64, sweep_index as u64, trial as u64],
        )
    }

    pub fn generate(&self, d: usize, value: f64, seed: u64) -> Result<(Dataset, MixtureModel)> {
        match self.mode {
            PhaseMode::Aperture => gen_sim1(&Sim1Config::standard(d, value, seed)),
            PhaseMode::Imbalance => gen_sim2(&Sim2Config::new(d, value, seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub d: usize,
    pub sweep_index: usize,
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub recovery_error: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub success: bool,
    /// Whether the closed-form certificate verifies exactness; absent when
    /// it is undefined.
    pub certifies: Option<bool>,
    /// Largest increase of the smoothed objective along the run.
    pub max_objective_increase: Option<f64>,
    /// Error message when the trial failed before producing an estimate.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub mode: PhaseMode,
    pub d_values: Vec<usize>,
    pub sweep_values: Vec<f64>,
    pub trials_per_cell: usize,
    /// `fractions[d_index][sweep_index]`.
    pub fractions: Vec<Vec<f64>>,
    /// Sorted by `(d, sweep_index, trial)`.
    pub records: Vec<TrialRecord>,
}

impl PhaseGrid {
    pub fn fraction(&self, d: usize, sweep_index: usize) -> Option<f64> {
        let r = self.d_values.iter().position(|&x| x == d)?;
        self.fractions.get(r)?.get(sweep_index).copied()
    }

    pub fn fractions_csv(&self) -> String {
        let mut s = String::from("d");
        for v in &self.sweep_values {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
        for (d, row) in self.d_values.iter().zip(&self.fractions) {
            s.push_str(&d.to_string());
            for f in row {
                s.push_str(&format!(",{f}"));
            }
            s.push('\n');
        }
        s
    }

    /// Writes `fractions.csv`, `grid.pgm` and `grid.json`.
    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<()> {
        let out = out_dir.as_ref();
        std::fs::create_dir_all(out).map_err(|e| MlrError::io(out, e))?;
        let csv_path = out.join("fractions.csv");
        std::fs::write(&csv_path, self.fractions_csv()).map_err(|e| MlrError::io(&csv_path, e))?;
        io::write_pgm(&self.fractions, out.join("grid.pgm"))?;
        io::write_json(self, out.join("grid.json"))
    }
}

/// One generate-solve-compare trial. Failures are recorded, never raised.
pub fn run_trial(cfg: &PhaseConfig, d: usize, sweep_index: usize, trial: usize) -> TrialRecord {
    let value = cfg.sweep_values[sweep_index];
    let seed = cfg.trial_seed(d, sweep_index, trial);
    let mut rec = TrialRecord {
        d,
        sweep_index,
        value,
        trial,
        seed,
        recovery_error: None,
        iterations: 0,
        converged: false,
        success: false,
        certifies: None,
        max_objective_increase: None,
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        let (data, model) = cfg.generate(d, value, seed)?;
        rec.certifies = certify(&data, &model).ok().map(|v| v.certifies);
        let truth = candidate_solution(&data, &model)?;
        let (z, trace) = irls_solve(&data, &cfg.solver)?;
        rec.iterations = trace.iterations;
        rec.converged = trace.converged;
        rec.max_objective_increase = Some(trace.max_objective_increase());
        let err = recovery_error(&truth, &z)?;
        rec.recovery_error = Some(err);
        rec.success = err < cfg.success_tol;
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.success = false;
        rec.failure = Some(e.to_string());
    }
    rec
}

/// Runs every `(d, value, trial)` of the sweep on up to `workers` threads
/// (0 = rayon default). The grid does not depend on the worker count.
pub fn cmd_phase(cfg: &PhaseConfig, workers: usize) -> Result<PhaseGrid> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize, usize)> = cfg
        .d_values
        .iter()
        .flat_map(|&d| {
            (0..cfg.sweep_values.len()).flat_map(move |s| (0..cfg.trials).map(move |t| (d, s, t)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| MlrError::invalid(format!("cannot start worker pool: {e}")))?;
    let mut records: Vec<TrialRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(d, s, t)| run_trial(cfg, d, s, t))
            .collect()
    });
    records.sort_by_key(|r| (r.d, r.sweep_index, r.trial));

    let fractions = cfg
        .d_values
        .iter()
        .map(|&d| {
            (0..cfg.sweep_values.len())
                .map(|s| {
                    let wins = records
                        .iter()
                        .filter(|r| r.d == d && r.sweep_index == s && r.success)
                        .count();
                    wins as f64 / cfg.trials as f64
                })
                .collect()
        })
        .collect();
    Ok(PhaseGrid {
        mode: cfg.mode,
        d_values: cfg.d_values.clone(),
        sweep_values: cfg.sweep_values.clone(),
        trials_per_cell: cfg.trials,
        fractions,
        records,
    })
}
