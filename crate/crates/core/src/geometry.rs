//! Direction vectors between mixture components and the geometric recovery
//! conditions: well-separation, balance, and the per-class span condition.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::linalg::{dot, norm, numerical_rank, rows_to_matrix, scaled, sub};
use crate::model::{Dataset, MixtureModel};

/// Unit vector pointing from `beta_q` to `beta_p`.
pub fn direction_between(beta_p: &[f64], beta_q: &[f64]) -> Result<Vec<f64>> {
    if beta_p.len() != beta_q.len() {
        return Err(MlrError::DimensionMismatch {
            expected: beta_p.len(),
            found: beta_q.len(),
        });
    }
    let diff = sub(beta_p, beta_q);
    let n = norm(&diff);
    if n == 0.0 {
        return Err(MlrError::DegenerateModel(
            "direction between identical components".into(),
        ));
    }
    Ok(diff.iter().map(|x| x / n).collect())
}

/// Weighted average of `v_pq` over `q != p` with weights `sizes[q]`.
///
/// Zero weights are allowed as long as at least one other class carries
/// positive weight.
pub fn weighted_direction_with_sizes(
    p: usize,
    betas: &[Vec<f64>],
    sizes: &[usize],
) -> Result<Vec<f64>> {
    let k = betas.len();
    if k < 2 {
        return Err(MlrError::UndefinedDirection(
            "weighted direction needs at least two components".into(),
        ));
    }
    if p >= k || sizes.len() != k {
        return Err(MlrError::invalid("class index or size list out of range"));
    }
    let total: usize = (0..k).filter(|&q| q != p).map(|q| sizes[q]).sum();
    if total == 0 {
        return Err(MlrError::UndefinedDirection(format!(
            "all classes other than {} have zero weight",
            p + 1
        )));
    }
    let mut v = vec![0.0; betas[p].len()];
    for q in (0..k).filter(|&q| q != p) {
        if sizes[q] == 0 {
            continue;
        }
        let vpq = direction_between(&betas[p], &betas[q])?;
        crate::linalg::axpy(&mut v, sizes[q] as f64, &vpq);
    }
    Ok(scaled(&v, 1.0 / total as f64))
}

/// `v_p`: the class-size weighted average of the directions from the other
/// components towards `beta_p`.
pub fn weighted_direction(p: usize, model: &MixtureModel) -> Result<Vec<f64>> {
    weighted_direction_with_sizes(p, model.betas(), model.sizes())
}

/// All pairwise directions `v_pq` and weighted directions `v_p` of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionSet {
    /// `pairwise[p][q]` is `v_pq`; the diagonal is empty.
    pub pairwise: Vec<Vec<Option<Vec<f64>>>>,
    pub weighted: Vec<Vec<f64>>,
}

impl DirectionSet {
    pub fn new(model: &MixtureModel) -> Result<Self> {
        let k = model.k();
        if k < 2 {
            return Err(MlrError::UndefinedDirection(
                "direction set needs at least two components".into(),
            ));
        }
        let mut pairwise = vec![vec![None; k]; k];
        for (p, row) in pairwise.iter_mut().enumerate() {
            for (q, slot) in row.iter_mut().enumerate() {
                if p != q {
                    *slot = Some(direction_between(model.beta(p), model.beta(q))?);
                }
            }
        }
        let weighted = (0..k)
            .map(|p| weighted_direction(p, model))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { pairwise, weighted })
    }

    pub fn v_pq(&self, p: usize, q: usize) -> Option<&[f64]> {
        self.pairwise[p][q].as_deref()
    }

    pub fn v_p(&self, p: usize) -> &[f64] {
        &self.weighted[p]
    }
}

/// Decomposition of a measurement vector against a class direction.
#[derive(Debug, Clone)]
pub(crate) struct Projection {
    /// `sign(v^T a)` with `sign(0) = +1`.
    pub sign: f64,
    /// `||P_v a||`
    pub along: f64,
    /// `P_{v^perp} a`
    pub perp: Vec<f64>,
}

pub(crate) fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(MlrError::UndefinedDirection("zero direction vector".into()));
    }
    Ok(scaled(v, 1.0 / n))
}

pub(crate) fn project(a: &[f64], v_hat: &[f64]) -> Projection {
    let c = dot(v_hat, a);
    let perp: Vec<f64> = a.iter().zip(v_hat).map(|(x, u)| x - c * u).collect();
    Projection {
        sign: if c >= 0.0 { 1.0 } else { -1.0 },
        along: c.abs(),
        perp,
    }
}

/// `||P_{v^perp} a|| / ||P_v a||`, zero exactly when `a` is parallel to `v`.
pub fn separation_ratio(a: &[f64], v: &[f64]) -> Result<f64> {
    if a.len() != v.len() {
        return Err(MlrError::DimensionMismatch {
            expected: v.len(),
            found: a.len(),
        });
    }
    let v_hat = unit(v)?;
    let pr = project(a, &v_hat);
    if pr.along == 0.0 {
        return Err(MlrError::UndefinedDirection(
            "measurement is orthogonal to the direction (infinite ratio)".into(),
        ));
    }
    Ok(norm(&pr.perp) / pr.along)
}

/// Orthonormal basis of the orthogonal complement of `v`, as the columns of
/// a `d × (d-1)` matrix.
///
/// Built from the Householder reflector that maps `v/||v||` onto a multiple
/// of `e_1`; its columns `2..d` are the basis.
pub fn orthonormal_complement_basis(v: &[f64]) -> Result<DMatrix<f64>> {
    let d = v.len();
    if d == 0 {
        return Err(MlrError::invalid("empty vector"));
    }
    let v_hat = unit(v)?;
    let s = if v_hat[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut u = v_hat.clone();
    u[0] += s;
    let uu = dot(&u, &u);
    let mut q = DMatrix::zeros(d, d - 1);
    for c in 1..d {
        for r in 0..d {
            let delta = if r == c { 1.0 } else { 0.0 };
            q[(r, c - 1)] = delta - 2.0 * u[r] * u[c] / uu;
        }
    }
    Ok(q)
}

/// Outcome of checking the recovery conditions on a labeled instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Largest separation ratio over all points (infinite when some point is
    /// orthogonal to its class direction).
    pub separation_lhs: f64,
    /// `min_p n_p / (2m)`
    pub separation_rhs: f64,
    pub well_separated: bool,
    /// Imbalance `tau_p` for each class.
    pub balance_residuals: Vec<f64>,
    pub span_ok: Vec<bool>,
    /// Rows with `v_p^T a_i = 0`.
    pub orthogonal_points: Vec<usize>,
}

impl ConditionReport {
    pub fn max_imbalance(&self) -> f64 {
        self.balance_residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// Evaluates well-separation, balance and span conditions against the
/// ground-truth model.
pub fn check_conditions(dataset: &Dataset, model: &MixtureModel) -> Result<ConditionReport> {
    let members = dataset.class_members()?;
    if model.k() < 2 {
        return Err(MlrError::UndefinedDirection(
            "conditions are undefined for a single class".into(),
        ));
    }
    if members.len() > model.k() {
        return Err(MlrError::LabelOutOfRange {
            row: dataset
                .require_labels()?
                .iter()
                .position(|&l| l >= model.k())
                .unwrap_or(0),
            label: members.len(),
            k: model.k(),
        });
    }
    if model.dim() != dataset.dim() {
        return Err(MlrError::DimensionMismatch {
            expected: dataset.dim(),
            found: model.dim(),
        });
    }
    let d = dataset.dim();
    let m = dataset.len();
    let directions = DirectionSet::new(model)?;

    let mut lhs: f64 = 0.0;
    let mut orthogonal = Vec::new();
    let mut taus = Vec::with_capacity(model.k());
    let mut spans = Vec::with_capacity(model.k());
    let mut min_frac = f64::INFINITY;

    for p in 0..model.k() {
        let class = members.get(p).map(Vec::as_slice).unwrap_or(&[]);
        min_frac = min_frac.min(class.len() as f64 / m as f64);
        let v_hat = unit(directions.v_p(p))?;
        let mut sum = vec![0.0; d];
        for &i in class {
            let pr = project(&dataset.row(i).a, &v_hat);
            if pr.along == 0.0 {
                orthogonal.push(i);
                lhs = f64::INFINITY;
                continue;
            }
            lhs = lhs.max(norm(&pr.perp) / pr.along);
            crate::linalg::axpy(&mut sum, pr.sign / pr.along, &pr.perp);
        }
        let tau = if class.is_empty() {
            0.0
        } else {
            norm(&sum) / class.len() as f64
        };
        taus.push(tau);
        let rows = rows_to_matrix(class.iter().map(|&i| dataset.row(i).a.as_slice()), d);
        spans.push(class.len() >= d && numerical_rank(&rows) == d);
    }
    let rhs = 0.5 * min_frac;
    orthogonal.sort_unstable();
    Ok(ConditionReport {
        separation_lhs: lhs,
        separation_rhs: rhs,
        well_separated: orthogonal.is_empty() && lhs < rhs,
        balance_residuals: taus,
        span_ok: spans,
        orthogonal_points: orthogonal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Measurement;
    use proptest::prelude::*;

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn direction_examples() {
        assert_eq!(
            direction_between(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(),
            vec![1.0, 0.0]
        );
        let v = direction_between(&e(3, 0), &e(3, 1)).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((v[0] - s).abs() < 1e-15 && (v[1] + s).abs() < 1e-15 && v[2] == 0.0);
        assert!(matches!(
            direction_between(&[1.0, 2.0], &[1.0, 2.0]),
            Err(MlrError::DegenerateModel(_))
        ));
    }

    #[test]
    fn weighted_direction_examples() {
        let betas = vec![vec![1.0, 2.0], vec![-3.0, 0.5]];
        let model = MixtureModel::new(betas.clone(), vec![5, 9]).unwrap();
        assert_eq!(
            weighted_direction(0, &model).unwrap(),
            direction_between(&betas[0], &betas[1]).unwrap()
        );

        let betas: Vec<Vec<f64>> = (0..3).map(|p| e(3, p)).collect();
        let model = MixtureModel::new(betas.clone(), vec![16, 16, 16]).unwrap();
        let v1 = weighted_direction(0, &model).unwrap();
        let c = 1.0 / (2.0 * 2f64.sqrt());
        for (x, y) in v1.iter().zip([2.0 * c, -c, -c]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((norm(&v1) - 3f64.sqrt() / 2.0).abs() < 1e-15);

        let v = weighted_direction_with_sizes(0, &betas, &[7, 1, 0]).unwrap();
        assert_eq!(v, direction_between(&betas[0], &betas[1]).unwrap());

        let single = MixtureModel::new(vec![vec![1.0]], vec![3]).unwrap();
        assert!(matches!(
            weighted_direction(0, &single),
            Err(MlrError::UndefinedDirection(_))
        ));
    }

    #[test]
    fn separation_examples() {
        assert_eq!(separation_ratio(&[2.0, 0.0], &[-1.0, 0.0]).unwrap(), 0.0);
        assert!((separation_ratio(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let r = separation_ratio(&[1.0, -0.3, 0.0, 0.0], &e(4, 0)).unwrap();
        assert!((r - 0.3).abs() < 1e-15);
        assert!(separation_ratio(&[0.0, 1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn complement_basis_examples() {
        let q = orthonormal_complement_basis(&e(3, 0)).unwrap();
        assert_eq!(q.shape(), (3, 2));
        for c in 0..2 {
            assert!(q[(0, c)].abs() < 1e-15);
        }
        let q = orthonormal_complement_basis(&[2.5]).unwrap();
        assert_eq!(q.shape(), (1, 0));
        assert!(orthonormal_complement_basis(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn conditions_reject_single_class() {
        let rows = vec![Measurement::new(vec![1.0, 0.0], 1.0).unwrap()];
        let ds = Dataset::new(rows).unwrap().with_labels(vec![0]).unwrap();
        let model = MixtureModel::new(vec![vec![1.0, 0.0]], vec![1]).unwrap();
        assert!(check_conditions(&ds, &model).is_err());
    }

    #[test]
    fn orthogonal_point_fails_separation() {
        // v_1 = (1,0), v_2 = (-1,0); row 1 is orthogonal to v_1
        let rows = vec![
            Measurement::new(vec![1.0, 0.1], 1.0).unwrap(),
            Measurement::new(vec![0.0, 1.0], 0.0).unwrap(),
            Measurement::new(vec![1.0, 0.0], -1.0).unwrap(),
            Measurement::new(vec![1.0, 0.5], -1.0).unwrap(),
        ];
        let ds = Dataset::new(rows)
            .unwrap()
            .with_labels(vec![0, 0, 1, 1])
            .unwrap();
        let model = MixtureModel::from_labeled(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], &ds).unwrap();
        let rep = check_conditions(&ds, &model).unwrap();
        assert!(!rep.well_separated);
        assert!(rep.separation_lhs.is_infinite());
        assert_eq!(rep.orthogonal_points, vec![1]);
        assert_eq!(rep.separation_rhs, 0.25);
        assert_eq!(rep.span_ok, vec![true, true]);
    }

    #[test]
    fn span_fails_for_small_classes() {
        let rows = vec![
            Measurement::new(vec![1.0, 0.1, 0.0], 1.0).unwrap(),
            Measurement::new(vec![1.0, -0.1, 0.0], 1.0).unwrap(),
            Measurement::new(vec![0.0, 1.0, 0.1], 1.0).unwrap(),
            Measurement::new(vec![0.0, 1.0, -0.1], 1.0).unwrap(),
            Measurement::new(vec![0.1, 1.0, 0.0], 1.0).unwrap(),
        ];
        let ds = Dataset::new(rows)
            .unwrap()
            .with_labels(vec![0, 0, 1, 1, 1])
            .unwrap();
        let model = MixtureModel::from_labeled(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], &ds)
            .unwrap();
        let rep = check_conditions(&ds, &model).unwrap();
        assert_eq!(rep.span_ok, vec![false, true]);
    }

    fn arb_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, d)
    }

    proptest! {
        #[test]
        fn pythagoras(a in arb_vec(4), v in arb_vec(4)) {
            prop_assume!(norm(&v) > 1e-3);
            let v_hat = unit(&v).unwrap();
            let along = dot(&v_hat, &a).abs();
            prop_assume!(along > 1e-6);
            let r = separation_ratio(&a, &v).unwrap();
            let lhs = r * r * along * along;
            let rhs = dot(&a, &a) - along * along;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * dot(&a, &a).max(1.0));
        }

        #[test]
        fn antisymmetry_is_exact(a in arb_vec(3), b in arb_vec(3)) {
            prop_assume!(a != b);
            let u = direction_between(&a, &b).unwrap();
            let w = direction_between(&b, &a).unwrap();
            for (x, y) in u.iter().zip(&w) {
                prop_assert_eq!(*x, -*y);
            }
            prop_assert!((norm(&u) - 1.0).abs() < 1e-14);
        }

        #[test]
        fn complement_is_orthonormal(v in prop::collection::vec(-5.0f64..5.0, 1..8)) {
            prop_assume!(norm(&v) > 1e-6);
            let d = v.len();
            let q = orthonormal_complement_basis(&v).unwrap();
            prop_assert_eq!(q.shape(), (d, d - 1));
            let qtq = q.transpose() * &q;
            for i in 0..d - 1 {
                for j in 0..d - 1 {
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((qtq[(i, j)] - target).abs() < 1e-12);
                }
                let col: Vec<f64> = (0..d).map(|r| q[(r, i)]).collect();
                prop_assert!(dot(&col, &v).abs() < 1e-12 * norm(&v).max(1.0));
            }
            prop_assert_eq!(orthonormal_complement_basis(&v).unwrap(), q);
        }

        #[test]
        fn weighted_direction_norm_bounded(
            betas in prop::collection::vec(arb_vec(3), 2..5),
            sizes in prop::collection::vec(1usize..20, 5),
        ) {
            let k = betas.len();
            let model = match MixtureModel::new(betas, sizes[..k].to_vec()) {
                Ok(m) => m,
                Err(_) => return Ok(()),
            };
            for p in 0..k {
                let v = weighted_direction(p, &model).unwrap();
                prop_assert!(norm(&v) <= 1.0 + 1e-12);
            }
        }
    }
}
