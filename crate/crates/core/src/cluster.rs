//! Second stage of the pipeline: cluster the per-point estimates and fit one
//! regression per cluster.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::linalg::{dist_sq, dot, numerical_rank, rows_to_matrix, RANK_RTOL};
use crate::model::{Dataset, EstimateField};
use crate::synth::stream;

pub const DEFAULT_RESTARTS: usize = 20;
pub const MAX_LLOYD_ITER: usize = 300;
/// Largest `k` for which label matching enumerates all permutations.
pub const MAX_MATCH_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub centers: Vec<Vec<f64>>,
    /// 0-based cluster of every point.
    pub labels: Vec<usize>,
    pub inertia: f64,
    /// Restart that produced this result.
    pub restart: usize,
    pub iterations: usize,
    /// Inertia after every assignment step of the winning run.
    pub inertia_history: Vec<f64>,
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d2 = dist_sq(point, center);
        // strict comparison keeps the lowest index on ties
        if d2 < best.1 {
            best = (c, d2);
        }
    }
    best
}

fn plus_plus_seeding<R: Rng>(points: &EstimateField, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let m = points.rows();
    let mut chosen = vec![rng.random_range(0..m)];
    let mut d2: Vec<f64> = (0..m)
        .map(|i| dist_sq(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    if target < w {
                        pick = Some(i);
                        break;
                    }
                    target -= w;
                }
            }
            // rounding can run past the end; fall back to the last candidate
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every point coincides with a chosen center
            let free: Vec<usize> = (0..m).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(dist_sq(points.row(i), points.row(next)));
        }
    }
    chosen.into_iter().map(|i| points.row(i).to_vec()).collect()
}

fn lloyd(points: &EstimateField, mut centers: Vec<Vec<f64>>, restart: usize) -> ClusteringResult {
    let m = points.rows();
    let d = points.dim();
    let k = centers.len();
    let mut labels = vec![usize::MAX; m];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut inertia = 0.0;

    while iterations < MAX_LLOYD_ITER {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; m];
        for i in 0..m {
            let (c, d2) = nearest(points.row(i), &centers);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = d2;
        }

        // empty clusters take the point farthest from its center
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..m)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&i, &j| dists[i].total_cmp(&dists[j]).then(j.cmp(&i)))
                    .expect("k <= m leaves a cluster with two or more points");
                counts[labels[far]] -= 1;
                labels[far] = c;
                counts[c] = 1;
                centers[c] = points.row(far).to_vec();
                dists[far] = 0.0;
                changed = true;
            }
        }
        inertia = dists.iter().sum();
        history.push(inertia);
        if !changed && iterations > 1 {
            break;
        }

        let mut sums = vec![vec![0.0; d]; k];
        for i in 0..m {
            for (s, x) in sums[labels[i]].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }

    // final inertia against the final centers
    let final_inertia: f64 = (0..m)
        .map(|i| dist_sq(points.row(i), &centers[labels[i]]))
        .sum();
    if final_inertia < inertia {
        inertia = final_inertia;
    }
    ClusteringResult {
        centers,
        labels,
        inertia,
        restart,
        iterations,
        inertia_history: history,
    }
}

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` runs.
///
/// Restart `r` draws from its own stream derived from `(seed, r)`; the winner
/// is the lowest inertia, ties going to the lowest restart index.
pub fn kmeans(
    points: &EstimateField,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusteringResult> {
    let m = points.rows();
    if m == 0 {
        return Err(MlrError::invalid("no points to cluster"));
    }
    if k == 0 || k > m {
        return Err(MlrError::invalid(format!(
            "cannot form {k} clusters from {m} points"
        )));
    }
    let runs: Vec<ClusteringResult> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[r as u64]);
            lloyd(points, plus_plus_seeding(points, k, &mut rng), r)
        })
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, run| {
            if run.inertia < best.inertia {
                run
            } else {
                best
            }
        })
        .expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitResult {
    pub betas_hat: Vec<Vec<f64>>,
    /// `max |a_i^T beta_hat_p - b_i|` over the members of each class.
    pub per_class_residual: Vec<f64>,
    /// Classes whose rows do not span `R^d` (minimum-norm fit returned).
    pub underdetermined: Vec<bool>,
}

/// Least-squares fit of one coefficient vector per class. Rank-deficient
/// classes get the minimum-norm solution and a warning.
pub fn refit_regression(dataset: &Dataset, labels: &[usize], k: usize) -> Result<RefitResult> {
    if labels.len() != dataset.len() {
        return Err(MlrError::DimensionMismatch {
            expected: dataset.len(),
            found: labels.len(),
        });
    }
    let d = dataset.dim();
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(MlrError::LabelOutOfRange {
                row: i,
                label: l + 1,
                k,
            });
        }
        members[l].push(i);
    }
    let mut out = RefitResult {
        betas_hat: Vec::with_capacity(k),
        per_class_residual: Vec::with_capacity(k),
        underdetermined: Vec::with_capacity(k),
    };
    for (p, rows) in members.iter().enumerate() {
        if rows.is_empty() {
            return Err(MlrError::invalid(format!("class {} has no members", p + 1)));
        }
        let a: DMatrix<f64> = rows_to_matrix(rows.iter().map(|&i| dataset.row(i).a.as_slice()), d);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| dataset.row(i).b));
        let rank = numerical_rank(&a);
        if rank < d {
            log::warn!(
                "class {} has rank {rank} < {d}; returning the minimum-norm fit",
                p + 1
            );
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let beta = svd
            .solve(&b, RANK_RTOL * smax)
            .map_err(|e| MlrError::Numerical(e.to_string()))?;
        let beta: Vec<f64> = beta.iter().copied().collect();
        let resid = rows
            .iter()
            .map(|&i| (dot(&dataset.row(i).a, &beta) - dataset.row(i).b).abs())
            .fold(0.0, f64::max);
        out.betas_hat.push(beta);
        out.per_class_residual.push(resid);
        out.underdetermined.push(rank < d);
    }
    Ok(out)
}

/// Best relabeling of `predicted` onto `truth`.
///
/// Returns `perm` with `perm[predicted_label] = truth_label` and the fraction
/// of agreeing points. All `k!` permutations are tried; among equally good
/// ones the lexicographically first wins.
pub fn match_labels(predicted: &[usize], truth: &[usize], k: usize) -> Result<(Vec<usize>, f64)> {
    if predicted.len() != truth.len() {
        return Err(MlrError::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if k > MAX_MATCH_K {
        return Err(MlrError::invalid(format!(
            "label matching enumerates k! permutations; k = {k} exceeds {MAX_MATCH_K}"
        )));
    }
    if predicted.iter().chain(truth).any(|&l| l >= k) {
        return Err(MlrError::invalid("label out of range"));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    let mut best: (Vec<usize>, usize) = ((0..k).collect(), 0);
    let mut first = true;
    for perm in (0..k).permutations(k) {
        let agree: usize = perm.iter().enumerate().map(|(p, &t)| confusion[p][t]).sum();
        if first || agree > best.1 {
            best = (perm, agree);
            first = false;
        }
    }
    let acc = if truth.is_empty() {
        1.0
    } else {
        best.1 as f64 / truth.len() as f64
    };
    Ok((best.0, acc))
}
