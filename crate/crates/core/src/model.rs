//! Problem data: measurements, labeled datasets, mixture models and
//! per-point estimate fields, plus the basic functionals evaluated on them.
//!
//! Class labels are 0-based everywhere inside the library. The CSV layer
//! converts from and to the 1-based labels used in files.

use serde::{Deserialize, Serialize};

use crate::error::{MlrError, Result};
use crate::linalg::{dist_sq, dot, norm};

/// One noiseless linear measurement `a^T beta = b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Measurement {
    pub fn new(a: Vec<f64>, b: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(MlrError::invalid("measurement vector has dimension 0"));
        }
        if !b.is_finite() || a.iter().any(|x| !x.is_finite()) {
            return Err(MlrError::invalid("measurement contains a non-finite value"));
        }
        if a.iter().all(|&x| x == 0.0) {
            return Err(MlrError::invalid("measurement vector is zero"));
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }
}

/// An ordered collection of measurements sharing one dimension, with
/// optional ground-truth class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    rows: Vec<Measurement>,
    labels: Option<Vec<usize>>,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<Measurement>) -> Result<Self> {
        let dim = rows
            .first()
            .map(Measurement::dim)
            .ok_or_else(|| MlrError::invalid("dataset has no rows"))?;
        for r in &rows {
            if r.dim() != dim {
                return Err(MlrError::DimensionMismatch {
                    expected: dim,
                    found: r.dim(),
                });
            }
        }
        Ok(Self {
            rows,
            labels: None,
            dim,
        })
    }

    /// Attaches 0-based labels. Every class in `0..k` must occur, where
    /// `k = max(label) + 1`.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.rows.len() {
            return Err(MlrError::DimensionMismatch {
                expected: self.rows.len(),
                found: labels.len(),
            });
        }
        let k = labels.iter().max().map_or(0, |&l| l + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(MlrError::invalid(format!(
                "class {} has no members",
                missing + 1
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn rows(&self) -> &[Measurement] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &Measurement {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels().ok_or(MlrError::MissingLabels)
    }

    /// Number of classes implied by the labels.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |&x| x + 1))
    }

    /// Row indices of each class, in row order.
    pub fn class_members(&self) -> Result<Vec<Vec<usize>>> {
        let labels = self.require_labels()?;
        let k = self.num_classes().unwrap_or(0);
        let mut members = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        Ok(members)
    }

    pub fn responses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.b).collect()
    }

    /// Same measurement vectors with every response multiplied by `c`.
    pub fn with_scaled_responses(&self, c: f64) -> Result<Self> {
        let rows = self
            .rows
            .iter()
            .map(|r| Measurement::new(r.a.clone(), r.b * c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows,
            labels: self.labels.clone(),
            dim: self.dim,
        })
    }

    /// Reorders rows (and labels) so that new row `i` is old row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            rows: perm.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| perm.iter().map(|&i| l[i]).collect()),
            dim: self.dim,
        }
    }
}

/// Ground-truth mixture: `k` pairwise-distinct coefficient vectors and the
/// number of measurements in each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    betas: Vec<Vec<f64>>,
    sizes: Vec<usize>,
}

impl MixtureModel {
    pub fn new(betas: Vec<Vec<f64>>, sizes: Vec<usize>) -> Result<Self> {
        if betas.is_empty() {
            return Err(MlrError::DegenerateModel("no mixture components".into()));
        }
        if betas.len() != sizes.len() {
            return Err(MlrError::DimensionMismatch {
                expected: betas.len(),
                found: sizes.len(),
            });
        }
        let d = betas[0].len();
        if d == 0 {
            return Err(MlrError::DegenerateModel(
                "components have dimension 0".into(),
            ));
        }
        for b in &betas {
            if b.len() != d {
                return Err(MlrError::DimensionMismatch {
                    expected: d,
                    found: b.len(),
                });
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(MlrError::invalid("component contains a non-finite value"));
            }
        }
        if let Some(p) = sizes.iter().position(|&n| n == 0) {
            return Err(MlrError::DegenerateModel(format!(
                "class {} is empty",
                p + 1
            )));
        }
        for p in 0..betas.len() {
            for q in p + 1..betas.len() {
                if betas[p] == betas[q] {
                    return Err(MlrError::DegenerateModel(format!(
                        "components {} and {} coincide",
                        p + 1,
                        q + 1
                    )));
                }
            }
        }
        Ok(Self { betas, sizes })
    }

    /// Builds a model whose class sizes are counted from the dataset labels.
    pub fn from_labeled(betas: Vec<Vec<f64>>, dataset: &Dataset) -> Result<Self> {
        let labels = dataset.require_labels()?;
        let mut sizes = vec![0usize; betas.len()];
        for (row, &l) in labels.iter().enumerate() {
            if l >= betas.len() {
                return Err(MlrError::LabelOutOfRange {
                    row,
                    label: l + 1,
                    k: betas.len(),
                });
            }
            sizes[l] += 1;
        }
        Self::new(betas, sizes)
    }

    pub fn k(&self) -> usize {
        self.betas.len()
    }

    pub fn dim(&self) -> usize {
        self.betas[0].len()
    }

    pub fn betas(&self) -> &[Vec<f64>] {
        &self.betas
    }

    pub fn beta(&self, p: usize) -> &[f64] {
        &self.betas[p]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }
}

/// One estimate `z_i` per data point, stored row-major as an `m × d` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateField {
    m: usize,
    d: usize,
    data: Vec<f64>,
}

impl EstimateField {
    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            m,
            d,
            data: vec![0.0; m * d],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(MlrError::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            m: rows.len(),
            d,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.d.max(1)).take(self.m)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            m: self.m,
            d: self.d,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }
}

/// The field assigning every point its true class coefficients,
/// `z_i = beta_{label_i}`.
pub fn candidate_solution(dataset: &Dataset, model: &MixtureModel) -> Result<EstimateField> {
    let labels = dataset.require_labels()?;
    if model.dim() != dataset.dim() {
        return Err(MlrError::DimensionMismatch {
            expected: dataset.dim(),
            found: model.dim(),
        });
    }
    let mut z = EstimateField::zeros(dataset.len(), dataset.dim());
    for (i, &l) in labels.iter().enumerate() {
        if l >= model.k() {
            return Err(MlrError::LabelOutOfRange {
                row: i,
                label: l + 1,
                k: model.k(),
            });
        }
        z.row_mut(i).copy_from_slice(model.beta(l));
    }
    Ok(z)
}

/// Sum of `||z_i - z_j||` over all ordered pairs, so each unordered pair is
/// counted twice.
pub fn objective(z: &EstimateField) -> f64 {
    let mut total = 0.0;
    for i in 0..z.rows() {
        for j in i + 1..z.rows() {
            total += dist_sq(z.row(i), z.row(j)).sqrt();
        }
    }
    2.0 * total
}

/// `max_i |a_i^T z_i - b_i|`.
pub fn feasibility_residual(z: &EstimateField, dataset: &Dataset) -> Result<f64> {
    if z.rows() != dataset.len() {
        return Err(MlrError::DimensionMismatch {
            expected: dataset.len(),
            found: z.rows(),
        });
    }
    if z.dim() != dataset.dim() {
        return Err(MlrError::DimensionMismatch {
            expected: dataset.dim(),
            found: z.dim(),
        });
    }
    Ok(dataset
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| (dot(&r.a, z.row(i)) - r.b).abs())
        .fold(0.0, f64::max))
}

/// Normalized Frobenius distance `||Z_a - Z_b||_F / sqrt(m)`.
pub fn recovery_error(za: &EstimateField, zb: &EstimateField) -> Result<f64> {
    if za.rows() != zb.rows() || za.dim() != zb.dim() {
        return Err(MlrError::DimensionMismatch {
            expected: za.rows() * za.dim(),
            found: zb.rows() * zb.dim(),
        });
    }
    if za.rows() == 0 {
        return Ok(0.0);
    }
    let diff: Vec<f64> = za
        .as_slice()
        .iter()
        .zip(zb.as_slice())
        .map(|(x, y)| x - y)
        .collect();
    Ok(norm(&diff) / (za.rows() as f64).sqrt())
}
