//! Closed-form dual certificate for the candidate solution.
//!
//! For a labeled instance the multipliers are
//!
//! ```text
//! nu_i   = sign(v_p^T a_i) * ||v_p|| * sum_{q != p} n_q / ||P_{v_p} a_i||
//! xi_ij  = (nu_i P_{v_p^perp} a_i - nu_j P_{v_p^perp} a_j) / n_p      (i, j in S_p)
//! ```
//!
//! and the candidate `z_i = beta_{l_i}` is the unique minimizer of the fusion
//! program whenever
//!
//! * `nu_i a_i = sum_{j in S_p, j != i} xi_ij + (sum_{q != p} n_q) v_p` for every `i`,
//! * `||xi_ij|| < 1` for every within-class pair,
//! * `xi_ij = -xi_ji`,
//! * the measurement vectors of every class span `R^d`.
//!
//! Antisymmetry is structural here: each `xi` is stored once per unordered
//! pair and negated on access.

use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::geometry::{check_conditions, project, unit, weighted_direction};
use crate::linalg::{axpy, norm};
use crate::model::{Dataset, MixtureModel};

/// Default stationarity tolerance, relative to `max_i ||nu_i a_i||`.
pub const DEFAULT_S1_TOL: f64 = 1e-8;

/// Width of the band below 1 in which `gamma` is flagged as borderline.
pub const GAMMA_BORDERLINE: f64 = 1e-9;

#[derive(Debug, Clone)]
struct ClassBlock {
    members: Vec<usize>,
    /// Packed `xi` for local pairs `(a, b)`, `a < b`, row-major upper triangle.
    xi: Vec<f64>,
}

impl ClassBlock {
    fn pair_offset(&self, a: usize, b: usize, d: usize) -> usize {
        let n = self.members.len();
        // index of (a, b) among pairs with a < b, enumerated row by row
        let before = a * n - a * (a + 1) / 2;
        (before + (b - a - 1)) * d
    }
}

/// Multipliers `nu` and within-class vectors `xi` for one labeled instance.
#[derive(Debug, Clone)]
pub struct Certificate {
    nu: Vec<f64>,
    classes: Vec<ClassBlock>,
    /// `(class, local index)` of every row
    location: Vec<(usize, usize)>,
    dim: usize,
    gamma: f64,
}

impl Certificate {
    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// `max ||xi_ij||` over all within-class pairs.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `xi_ij` for two rows of the same class; `xi_ii = 0`.
    pub fn xi(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        let (ci, li) = *self
            .location
            .get(i)
            .ok_or_else(|| MlrError::invalid(format!("row {i} out of range")))?;
        let (cj, lj) = *self
            .location
            .get(j)
            .ok_or_else(|| MlrError::invalid(format!("row {j} out of range")))?;
        if ci != cj {
            return Err(MlrError::invalid(format!(
                "rows {i} and {j} belong to different classes"
            )));
        }
        let d = self.dim;
        if li == lj {
            return Ok(vec![0.0; d]);
        }
        let block = &self.classes[ci];
        let (a, b, sign) = if li < lj {
            (li, lj, 1.0)
        } else {
            (lj, li, -1.0)
        };
        let off = block.pair_offset(a, b, d);
        Ok(block.xi[off..off + d].iter().map(|x| sign * x).collect())
    }

    /// Iterates over stored unordered pairs `(i, j, xi_ij)` with `i` before `j`
    /// in row order within a class.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, &[f64])> + '_ {
        let d = self.dim;
        self.classes.iter().flat_map(move |block| {
            let n = block.members.len();
            (0..n).flat_map(move |a| {
                (a + 1..n).map(move |b| {
                    let off = block.pair_offset(a, b, d);
                    (block.members[a], block.members[b], &block.xi[off..off + d])
                })
            })
        })
    }

    /// Members of class `p` in row order.
    pub fn class_members(&self, p: usize) -> &[usize] {
        &self.classes[p].members
    }
}

fn ensure_consistent(dataset: &Dataset, model: &MixtureModel) -> Result<Vec<Vec<usize>>> {
    let members = dataset.class_members()?;
    if model.k() < 2 {
        return Err(MlrError::UndefinedDirection(
            "certificate needs at least two classes".into(),
        ));
    }
    if model.dim() != dataset.dim() {
        return Err(MlrError::DimensionMismatch {
            expected: dataset.dim(),
            found: model.dim(),
        });
    }
    if members.len() != model.k() {
        return Err(MlrError::invalid(format!(
            "labels describe {} classes but the model has {}",
            members.len(),
            model.k()
        )));
    }
    for (p, class) in members.iter().enumerate() {
        if class.len() != model.sizes()[p] {
            return Err(MlrError::invalid(format!(
                "class {} has {} rows but the model records {}",
                p + 1,
                class.len(),
                model.sizes()[p]
            )));
        }
    }
    Ok(members)
}

/// Builds the closed-form certificate. Fails with
/// [`MlrError::OrthogonalPoint`] naming the first row with `v_p^T a_i = 0`.
pub fn build_certificate(dataset: &Dataset, model: &MixtureModel) -> Result<Certificate> {
    let members = ensure_consistent(dataset, model)?;
    let d = dataset.dim();
    let m = dataset.len();
    let mut nu = vec![0.0; m];
    let mut location = vec![(0, 0); m];
    let mut classes = Vec::with_capacity(model.k());
    let mut gamma: f64 = 0.0;

    for (p, class) in members.into_iter().enumerate() {
        let v_p = weighted_direction(p, model)?;
        let v_norm = norm(&v_p);
        let v_hat = unit(&v_p)?;
        let others: usize = m - model.sizes()[p];
        let n_p = class.len() as f64;

        // nu_i P_{v^perp} a_i for each member
        let mut weighted_perp = Vec::with_capacity(class.len());
        for (local, &i) in class.iter().enumerate() {
            let pr = project(&dataset.row(i).a, &v_hat);
            if pr.along == 0.0 {
                return Err(MlrError::OrthogonalPoint { row: i });
            }
            nu[i] = pr.sign * v_norm * others as f64 / pr.along;
            location[i] = (p, local);
            weighted_perp.push(pr.perp.iter().map(|x| nu[i] * x).collect::<Vec<_>>());
        }

        let n = class.len();
        let mut xi = Vec::with_capacity(n * n.saturating_sub(1) / 2 * d);
        for a in 0..n {
            for b in a + 1..n {
                let start = xi.len();
                xi.extend(
                    weighted_perp[a]
                        .iter()
                        .zip(&weighted_perp[b])
                        .map(|(x, y)| (x - y) / n_p),
                );
                gamma = gamma.max(norm(&xi[start..]));
            }
        }
        classes.push(ClassBlock { members: class, xi });
    }

    Ok(Certificate {
        nu,
        classes,
        location,
        dim: d,
        gamma,
    })
}

/// Result of checking a certificate against the exactness conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateVerdict {
    /// `max_i ||nu_i a_i - sum_j xi_ij - (sum_{q != p} n_q) v_p||`
    pub s1_residual: f64,
    /// `max_i ||nu_i a_i||`, the scale the residual is compared against.
    pub s1_scale: f64,
    /// Relative tolerance applied to `s1_residual / s1_scale`.
    pub tol: f64,
    pub gamma: f64,
    /// `gamma < 1`, no slack.
    pub strict_gamma: bool,
    /// `gamma` lies in `[1 - 1e-9, 1)`.
    pub gamma_borderline: bool,
    pub spans_ok: bool,
    pub certifies: bool,
}

impl CertificateVerdict {
    pub fn s1_relative(&self) -> f64 {
        if self.s1_scale > 0.0 {
            self.s1_residual / self.s1_scale
        } else {
            self.s1_residual
        }
    }
}

/// Checks the stationarity, strict-norm and span conditions.
///
/// The stationarity defect is recomputed from the stored `xi` (not from the
/// closed form), so a corrupted certificate is caught.
pub fn verify_certificate(
    cert: &Certificate,
    dataset: &Dataset,
    model: &MixtureModel,
    tol: f64,
) -> Result<CertificateVerdict> {
    let members = ensure_consistent(dataset, model)?;
    if cert.nu.len() != dataset.len() || cert.dim != dataset.dim() {
        return Err(MlrError::invalid(
            "certificate was built for a different dataset",
        ));
    }
    let d = dataset.dim();
    let m = dataset.len();
    let mut residual: f64 = 0.0;
    let mut scale: f64 = 0.0;

    for (p, class) in members.iter().enumerate() {
        if cert.classes[p].members != *class {
            return Err(MlrError::invalid(
                "certificate class membership does not match the labels",
            ));
        }
        let v_p = weighted_direction(p, model)?;
        let others = (m - model.sizes()[p]) as f64;
        for &i in class {
            let a = &dataset.row(i).a;
            let mut r: Vec<f64> = a.iter().map(|x| cert.nu[i] * x).collect();
            scale = scale.max(norm(&r));
            for &j in class {
                if j != i {
                    axpy(&mut r, -1.0, &cert.xi(i, j)?);
                }
            }
            axpy(&mut r, -others, &v_p);
            debug_assert_eq!(r.len(), d);
            residual = residual.max(norm(&r));
        }
    }

    let spans_ok = check_conditions(dataset, model)?.span_ok.iter().all(|&s| s);
    let gamma = cert.gamma;
    let strict_gamma = gamma < 1.0;
    let gamma_borderline = strict_gamma && gamma >= 1.0 - GAMMA_BORDERLINE;
    if gamma_borderline {
        log::warn!("certificate gamma = {gamma} is within {GAMMA_BORDERLINE} of 1");
    }
    let s1_ok = residual <= tol * scale;
    Ok(CertificateVerdict {
        s1_residual: residual,
        s1_scale: scale,
        tol,
        gamma,
        strict_gamma,
        gamma_borderline,
        spans_ok,
        certifies: s1_ok && strict_gamma && spans_ok,
    })
}

/// Builds and verifies in one call with the default tolerance.
pub fn certify(dataset: &Dataset, model: &MixtureModel) -> Result<CertificateVerdict> {
    let cert = build_certificate(dataset, model)?;
    verify_certificate(&cert, dataset, model, DEFAULT_S1_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Measurement;

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    /// k = 3, beta_p = e_p in R^3, every class of 16 copies of the normalized
    /// class direction except row 0 which is perturbed.
    fn aligned_instance() -> (Dataset, MixtureModel) {
        let betas: Vec<Vec<f64>> = (0..3).map(|p| e(3, p)).collect();
        let sizes = vec![16, 16, 16];
        let model = MixtureModel::new(betas.clone(), sizes).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (p, beta) in betas.iter().enumerate() {
            let v_hat = unit(&weighted_direction(p, &model).unwrap()).unwrap();
            for i in 0..16 {
                let mut a = v_hat.clone();
                if p == 0 && i == 1 {
                    a[2] += 0.05;
                    a[1] -= 0.05;
                }
                let b = crate::linalg::dot(&a, beta);
                rows.push(Measurement::new(a, b).unwrap());
                labels.push(p);
            }
        }
        let ds = Dataset::new(rows).unwrap().with_labels(labels).unwrap();
        (ds, model)
    }

    #[test]
    fn nu_for_aligned_point() {
        let (ds, model) = aligned_instance();
        let cert = build_certificate(&ds, &model).unwrap();
        let expected = 16.0 * 3f64.sqrt();
        assert!((cert.nu()[0] - expected).abs() < 1e-12);
        assert!((expected - 27.712_812_921_102_035).abs() < 1e-12);
        // xi_{0,j} for j in class 1 only carries row j's orthogonal part
        let x02 = cert.xi(0, 2).unwrap();
        assert!(norm(&x02) < 1e-14);
        let x01 = cert.xi(0, 1).unwrap();
        assert!(norm(&x01) > 0.0);
    }

    #[test]
    fn xi_diagonal_and_antisymmetry() {
        let (ds, model) = aligned_instance();
        let cert = build_certificate(&ds, &model).unwrap();
        assert_eq!(cert.xi(5, 5).unwrap(), vec![0.0; 3]);
        let a = cert.xi(1, 7).unwrap();
        let b = cert.xi(7, 1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*x, -*y);
        }
        assert!(cert.xi(0, 20).is_err());
        assert_eq!(cert.pairs().count(), 3 * 16 * 15 / 2);
    }

    #[test]
    fn xi_orthogonal_to_class_direction() {
        let (ds, model) = aligned_instance();
        let cert = build_certificate(&ds, &model).unwrap();
        let labels = ds.labels().unwrap();
        for (i, _, xi) in cert.pairs() {
            let v = weighted_direction(labels[i], &model).unwrap();
            assert!(crate::linalg::dot(xi, &v).abs() < 1e-12);
        }
    }

    #[test]
    fn unbalanced_single_perturbation_fails_s1() {
        // One perturbed row breaks balance in class 1.
        let (ds, model) = aligned_instance();
        let v = certify(&ds, &model).unwrap();
        assert!(v.s1_residual > v.tol * v.s1_scale);
        assert!(!v.certifies);
    }

    #[test]
    fn orthogonal_point_is_reported() {
        let rows = vec![
            Measurement::new(vec![1.0, 0.0], 1.0).unwrap(),
            Measurement::new(vec![0.0, 1.0], 0.0).unwrap(),
            Measurement::new(vec![1.0, 0.0], -1.0).unwrap(),
        ];
        let ds = Dataset::new(rows)
            .unwrap()
            .with_labels(vec![0, 0, 1])
            .unwrap();
        let model = MixtureModel::from_labeled(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], &ds).unwrap();
        assert!(matches!(
            build_certificate(&ds, &model),
            Err(MlrError::OrthogonalPoint { row: 1 })
        ));
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let (ds, _) = aligned_instance();
        let betas: Vec<Vec<f64>> = (0..3).map(|p| e(3, p)).collect();
        let wrong = MixtureModel::new(betas, vec![15, 17, 16]).unwrap();
        assert!(build_certificate(&ds, &wrong).is_err());
    }
}
