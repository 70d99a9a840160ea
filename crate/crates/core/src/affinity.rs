//! Feature sets, cosine affinities and the squared-distance cost matrix.
//!
//! For unit-normalized rows the squared Euclidean distance reduces to
//! `d_ij = 2 (1 - v_i . v_j)`, so the whole cost matrix comes from one
//! Gram product. The masked form replaces the diagonal with `+inf`, which
//! the solver turns into an exactly zero kernel entry.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{BpaError, Result};

const ZERO_NORM: f64 = 1e-30;
const UNIT_TOLERANCE: f64 = 1e-6;

/// Row-stacked item features with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    data: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl FeatureSet {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        Self::build(data, None)
    }

    pub fn with_labels(data: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        Self::build(data, Some(labels))
    }

    fn build(data: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 {
            return Err(BpaError::TooFewRows { min: 1, got: 0 });
        }
        if d == 0 {
            return Err(BpaError::EmptyDimension);
        }
        if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(BpaError::NonFinite { row, col });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(BpaError::LabelCount {
                    labels: l.len(),
                    rows: n,
                });
            }
        }
        Ok(Self { data, labels })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    /// Replaces the data, keeping labels. Used by transforms that change
    /// the feature dimension but not the row order.
    pub fn map_data(&self, data: Array2<f64>) -> Result<Self> {
        if data.nrows() != self.n() {
            return Err(BpaError::ShapeMismatch {
                expected: (self.n(), data.ncols()),
                got: data.dim(),
            });
        }
        Self::build(data, self.labels.clone())
    }

    /// Stacks `self` on top of `other`. Labels are kept only if both sides have them.
    pub fn concat(&self, other: &FeatureSet) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(BpaError::ShapeMismatch {
                expected: (other.n(), self.dim()),
                got: (other.n(), other.dim()),
            });
        }
        let data = ndarray::concatenate(Axis(0), &[self.data.view(), other.data.view()])
            .expect("column counts checked above");
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Self::build(data, labels)
    }

    /// Gathers rows in the given order (`out[k] = self[order[k]]`).
    pub fn select_rows(&self, order: &[usize]) -> Result<Self> {
        for &i in order {
            if i >= self.n() {
                return Err(BpaError::IndexOutOfRange {
                    index: i,
                    len: self.n(),
                });
            }
        }
        let data = self.data.select(Axis(0), order);
        let labels = self
            .labels
            .as_ref()
            .map(|l| order.iter().map(|&i| l[i]).collect());
        Self::build(data, labels)
    }
}

/// Symmetric pairwise cost. When `masked`, the diagonal holds `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
    masked: bool,
}

impl CostMatrix {
    /// Wraps an unmasked cost. Requires a square, symmetric (within 1e-12),
    /// nonnegative matrix with a zero diagonal.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(BpaError::NotSquare { rows: r, cols: c });
        }
        for i in 0..r {
            if values[[i, i]] != 0.0 {
                return Err(BpaError::InvalidParameter(format!(
                    "cost diagonal must be zero (entry {i} is {})",
                    values[[i, i]]
                )));
            }
            for j in 0..r {
                let v = values[[i, j]];
                if !v.is_finite() {
                    return Err(BpaError::NonFinite { row: i, col: j });
                }
                if v < 0.0 {
                    return Err(BpaError::InvalidParameter(format!(
                        "negative cost {v} at ({i}, {j})"
                    )));
                }
                let asym = (v - values[[j, i]]).abs();
                if asym > 1e-12 {
                    return Err(BpaError::NotSymmetric(asym));
                }
            }
        }
        Ok(Self {
            values: values.as_standard_layout().into_owned(),
            masked: false,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn is_masked(&self) -> bool {
        self.masked
    }

    /// Off-diagonal entry, or 0 on the diagonal regardless of masking.
    pub fn off_diagonal(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.values[[i, j]]
        }
    }

    /// True if `c_ij == c_ji` bitwise for every pair.
    pub(crate) fn is_exactly_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (i + 1..n).all(|j| self.values[[i, j]] == self.values[[j, i]]))
    }

    /// Reorders rows and columns: `out[a][b] = self[order[a]][order[b]]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let values = self
            .values
            .select(Axis(0), order)
            .select(Axis(1), order)
            .as_standard_layout()
            .into_owned();
        Self {
            values,
            masked: self.masked,
        }
    }
}

/// Scales every row to unit Euclidean norm.
pub fn unit_normalize(features: &FeatureSet) -> Result<FeatureSet> {
    let mut data = features.data.clone();
    for (i, mut row) in data.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < ZERO_NORM {
            return Err(BpaError::ZeroNormRow(i));
        }
        row.mapv_inplace(|x| x / norm);
    }
    features.map_data(data)
}

fn check_unit_rows(features: &FeatureSet) -> Result<()> {
    for (row, r) in features.data.axis_iter(Axis(0)).enumerate() {
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(BpaError::NotNormalized { row, norm });
        }
    }
    Ok(())
}

/// Cosine affinity matrix `S = V V^T` of unit-normalized rows.
pub fn cosine_affinity(features: &FeatureSet) -> Result<Array2<f64>> {
    check_unit_rows(features)?;
    let v = features.data.view();
    Ok(v.dot(&v.t()))
}

/// `D = 2 (1 - S)` for unit-normalized rows, exactly symmetric with a zero diagonal.
pub fn pairwise_cost(features: &FeatureSet) -> Result<CostMatrix> {
    let s = cosine_affinity(features)?;
    let n = features.n();
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            // Rounding can push 1 - s slightly outside [0, 1] for (anti)parallel rows.
            let d = (2.0 * (1.0 - s[[i, j]])).clamp(0.0, 4.0);
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    Ok(CostMatrix {
        values,
        masked: false,
    })
}

/// Marks the diagonal as `+inf` so the kernel `exp(-lambda * D)` is zero there.
pub fn mask_diagonal(cost: &CostMatrix) -> Result<CostMatrix> {
    if cost.masked {
        return Err(BpaError::AlreadyMasked);
    }
    let mut values = cost.values.clone();
    values.diag_mut().fill(f64::INFINITY);
    Ok(CostMatrix {
        values,
        masked: true,
    })
}
