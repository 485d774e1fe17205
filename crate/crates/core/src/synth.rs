//! Synthetic measurement ensembles.
//!
//! Both ensembles use `beta_p = e_p` and build each class around its
//! normalized weighted direction `v_p / ||v_p||`:
//!
//! * **aperture** (`gen_sim1`): half of each class is `v_hat + Q x`, the other
//!   half the mirrored `v_hat - Q x`, with `x` uniform in the ball of radius
//!   `alpha`. Every class is exactly balanced.
//! * **imbalance** (`gen_sim2`): three classes of `4d` rows at aperture 0.2;
//!   class 3 is additionally shifted by `Q w` with `w` uniform on the sphere
//!   of radius `tau`, so its imbalance equals `tau`.
//!
//! Randomness comes from ChaCha8 streams whose 64-bit seeds are derived with
//! the SplitMix64 finalizer from `(seed, class, index)`, so every sample is
//! reproducible on any platform and independent of generation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::geometry::{orthonormal_complement_basis, unit, weighted_direction};
use crate::linalg::{dot, norm};
use crate::model::{Dataset, Measurement, MixtureModel};

/// Stream tag for the class-3 shift in the imbalance ensemble.
const SHIFT_TAG: u64 = u64::MAX;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds `tags` into `base` with SplitMix64; distinct tag tuples give
/// unrelated seeds.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Independent random stream for `(base, tags...)`.
pub fn stream(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

fn gaussian_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 0.0 {
            return g.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform sample from the Euclidean ball of the given radius in `R^dim`.
pub fn sample_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    let dir = gaussian_direction(dim, rng);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim as f64);
    dir.into_iter().map(|x| x * r).collect()
}

/// Uniform sample from the sphere of the given radius in `R^dim`.
pub fn sample_sphere<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(MlrError::invalid("sphere sampling needs dim >= 1"));
    }
    Ok(gaussian_direction(dim, rng)
        .into_iter()
        .map(|x| x * radius)
        .collect())
}

/// Balanced ensemble with a fixed aperture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sim1Config {
    pub k: usize,
    pub d: usize,
    /// Rows per class; must be even.
    pub n_per_class: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Sim1Config {
    /// Three classes of 16 rows, the layout of the aperture sweep.
    pub fn standard(d: usize, alpha: f64, seed: u64) -> Self {
        Self {
            k: 3,
            d,
            n_per_class: 16,
            alpha,
            seed,
        }
    }
}

/// Imbalanced ensemble: `k = 3`, `n_p = 4d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sim2Config {
    pub d: usize,
    pub alpha: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Sim2Config {
    pub fn new(d: usize, tau: f64, seed: u64) -> Self {
        Self {
            d,
            alpha: 0.2,
            tau,
            seed,
        }
    }

    pub fn n_per_class(&self) -> usize {
        4 * self.d
    }
}

fn unit_components(k: usize, d: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|p| {
            let mut v = vec![0.0; d];
            v[p] = 1.0;
            v
        })
        .collect()
}

/// Rows `v_hat + Q x_i` followed by their mirrors `v_hat - Q x_i`, plus a
/// common shift `Q w`.
fn symmetric_class(
    model: &MixtureModel,
    p: usize,
    n: usize,
    alpha: f64,
    seed: u64,
    shift: Option<&[f64]>,
) -> Result<Vec<Measurement>> {
    let d = model.dim();
    let v_hat = unit(&weighted_direction(p, model)?)?;
    let q = orthonormal_complement_basis(&v_hat)?;
    let apply_q = |x: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|r| (0..d - 1).map(|c| q[(r, c)] * x[c]).sum::<f64>())
            .collect()
    };
    let offset = shift.map(apply_q).unwrap_or_else(|| vec![0.0; d]);
    let half = n / 2;
    let perturb: Vec<Vec<f64>> = (0..half)
        .map(|i| {
            let mut rng = stream(seed, &[p as u64, i as u64]);
            apply_q(&sample_ball(d - 1, alpha, &mut rng))
        })
        .collect();
    let beta = model.beta(p);
    let mut rows = Vec::with_capacity(n);
    for sign in [1.0, -1.0] {
        for qx in &perturb {
            let a: Vec<f64> = (0..d)
                .map(|r| v_hat[r] + sign * qx[r] + offset[r])
                .collect();
            if dot(&a, &v_hat) <= 0.0 {
                return Err(MlrError::Numerical(
                    "generated row lost alignment with its class direction".into(),
                ));
            }
            let b = dot(&a, beta);
            rows.push(Measurement::new(a, b)?);
        }
    }
    Ok(rows)
}

fn assemble(
    classes: Vec<Vec<Measurement>>,
    model: MixtureModel,
) -> Result<(Dataset, MixtureModel)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (p, class) in classes.into_iter().enumerate() {
        labels.extend(std::iter::repeat_n(p, class.len()));
        rows.extend(class);
    }
    let ds = Dataset::new(rows)?.with_labels(labels)?;
    Ok((ds, model))
}

/// Balanced, aperture-bounded ensemble.
pub fn gen_sim1(cfg: &Sim1Config) -> Result<(Dataset, MixtureModel)> {
    if cfg.k < 2 {
        return Err(MlrError::invalid("need at least two classes"));
    }
    if cfg.d < cfg.k {
        return Err(MlrError::invalid(format!(
            "dimension {} is smaller than the number of classes {}",
            cfg.d, cfg.k
        )));
    }
    if cfg.n_per_class == 0 || !cfg.n_per_class.is_multiple_of(2) {
        return Err(MlrError::invalid(
            "rows per class must be a positive even number",
        ));
    }
    if !(cfg.alpha >= 0.0 && cfg.alpha.is_finite()) {
        return Err(MlrError::invalid(
            "aperture must be a finite nonnegative number",
        ));
    }
    let model = MixtureModel::new(unit_components(cfg.k, cfg.d), vec![cfg.n_per_class; cfg.k])?;
    let classes = (0..cfg.k)
        .map(|p| symmetric_class(&model, p, cfg.n_per_class, cfg.alpha, cfg.seed, None))
        .collect::<Result<Vec<_>>>()?;
    assemble(classes, model)
}

/// Ensemble whose third class has imbalance exactly `tau`.
pub fn gen_sim2(cfg: &Sim2Config) -> Result<(Dataset, MixtureModel)> {
    if cfg.d < 3 {
        return Err(MlrError::invalid("imbalance ensemble needs d >= 3"));
    }
    if !(cfg.tau >= 0.0 && cfg.tau.is_finite()) || !(cfg.alpha >= 0.0 && cfg.alpha.is_finite()) {
        return Err(MlrError::invalid(
            "tau and alpha must be finite and nonnegative",
        ));
    }
    let n = cfg.n_per_class();
    let model = MixtureModel::new(unit_components(3, cfg.d), vec![n; 3])?;
    let mut shift_rng = stream(cfg.seed, &[2, SHIFT_TAG]);
    let w = sample_sphere(cfg.d - 1, cfg.tau, &mut shift_rng)?;
    let classes = (0..3)
        .map(|p| {
            let shift = (p == 2).then_some(w.as_slice());
            symmetric_class(&model, p, n, cfg.alpha, cfg.seed, shift)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(classes, model)
}
