//! Entropic optimal self-transport between the all-ones vector and itself.
//!
//! Solves `min <D_inf, W> - (1/lambda) h(W)` over doubly-stochastic `W` by
//! alternating row and column normalizations of the kernel
//! `K = exp(-lambda * D_inf)`. The returned plan always has the form
//! `diag(u) K diag(v)`; the scalings are kept in log form so they survive
//! large `lambda`.
//!
//! One sweep is a row normalization followed by a column normalization, so
//! the column marginals are tight after every sweep and the row marginals
//! carry the remaining residual.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::CostMatrix;
use crate::error::{BpaError, Result};

/// Entropy weight used for clustering and few-shot classification.
pub const DEFAULT_LAMBDA: f64 = 0.1;
/// Entropy weight used for retrieval.
pub const RETRIEVAL_LAMBDA: f64 = 0.25;
/// Fixed number of normalization sweeps.
pub const DEFAULT_ITERATIONS: usize = 5;

// Below this size the rayon split costs more than it saves.
const PAR_THRESHOLD: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Weight of the transport cost relative to the entropy term; larger is sharper.
    pub lambda: f64,
    /// Number of row+column normalization sweeps.
    pub iterations: usize,
    /// Log-sum-exp stabilized updates instead of plain matrix scaling.
    pub log_domain: bool,
    /// Replace the final plan by `(W + W^T) / 2`.
    pub symmetrize: bool,
    /// Stop early once the row residual drops below this value.
    pub tolerance: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            iterations: DEFAULT_ITERATIONS,
            log_domain: true,
            symmetrize: false,
            tolerance: None,
        }
    }
}

impl SolverConfig {
    pub fn retrieval() -> Self {
        Self {
            lambda: RETRIEVAL_LAMBDA,
            ..Self::default()
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_log_domain(mut self, log_domain: bool) -> Self {
        self.log_domain = log_domain;
        self
    }

    pub fn with_symmetrize(mut self, symmetrize: bool) -> Self {
        self.symmetrize = symmetrize;
        self
    }

    pub fn with_tolerance(mut self, tolerance: Option<f64>) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(BpaError::InvalidConfig(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        if self.iterations == 0 {
            return Err(BpaError::InvalidConfig("iterations must be >= 1".into()));
        }
        if let Some(t) = self.tolerance {
            if t.is_nan() || t <= 0.0 {
                return Err(BpaError::InvalidConfig(format!(
                    "tolerance must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Result of a solve: the plan, its marginal residuals and the scalings.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    values: Array2<f64>,
    row_dev: f64,
    col_dev: f64,
    log_u: Array1<f64>,
    log_v: Array1<f64>,
    sweeps: usize,
}

impl TransportPlan {
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Max |row sum - 1|.
    pub fn row_dev(&self) -> f64 {
        self.row_dev
    }

    /// Max |column sum - 1|.
    pub fn col_dev(&self) -> f64 {
        self.col_dev
    }

    /// Log of the row scaling `u`.
    pub fn log_u(&self) -> &Array1<f64> {
        &self.log_u
    }

    /// Log of the column scaling `v`.
    pub fn log_v(&self) -> &Array1<f64> {
        &self.log_v
    }

    /// Sweeps actually run (less than configured only with a tolerance).
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }
}

/// Max absolute deviation of row sums and column sums from 1.
pub fn marginal_deviation(plan: ArrayView2<'_, f64>) -> (f64, f64) {
    let row = plan
        .sum_axis(Axis(1))
        .iter()
        .fold(0.0_f64, |m, s| m.max((s - 1.0).abs()));
    let col = plan
        .sum_axis(Axis(0))
        .iter()
        .fold(0.0_f64, |m, s| m.max((s - 1.0).abs()));
    (row, col)
}

/// `<D, W> - (1/lambda) h(W)` with `h(W) = -sum w log w`, masked diagonal skipped.
pub fn entropic_objective(cost: &CostMatrix, plan: ArrayView2<'_, f64>, lambda: f64) -> f64 {
    let n = cost.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = plan[[i, j]];
            if w > 0.0 {
                total += cost.off_diagonal(i, j) * w + w * w.ln() / lambda;
            }
        }
    }
    total
}

/// Dual value `(1/lambda) (sum log u + sum log v - sum W + n)` of the scalings.
///
/// Each half sweep maximizes this exactly in one block of variables, so it never
/// decreases across sweeps; at the fixed point it equals [`entropic_objective`].
pub fn dual_objective(
    log_u: &Array1<f64>,
    log_v: &Array1<f64>,
    plan: ArrayView2<'_, f64>,
    lambda: f64,
) -> f64 {
    let n = plan.nrows() as f64;
    (log_u.sum() + log_v.sum() - plan.sum() + n) / lambda
}

/// Objective values after one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepTrace {
    pub primal: f64,
    pub dual: f64,
}

fn validate_input(cost: &CostMatrix, config: &SolverConfig) -> Result<()> {
    config.validate()?;
    if !cost.is_masked() {
        return Err(BpaError::NotMasked);
    }
    if cost.n() < 2 {
        return Err(BpaError::TooFewRows {
            min: 2,
            got: cost.n(),
        });
    }
    Ok(())
}

/// Runs the configured number of sweeps on a masked cost.
pub fn solve(cost: &CostMatrix, config: &SolverConfig) -> Result<TransportPlan> {
    solve_inner(cost, config, None)
}

/// Like [`solve`], also returning primal and dual objectives after every sweep.
pub fn solve_traced(
    cost: &CostMatrix,
    config: &SolverConfig,
) -> Result<(TransportPlan, Vec<SweepTrace>)> {
    let mut trace = Vec::with_capacity(config.iterations);
    let plan = solve_inner(cost, config, Some(&mut trace))?;
    Ok((plan, trace))
}

fn solve_inner(
    cost: &CostMatrix,
    config: &SolverConfig,
    mut trace: Option<&mut Vec<SweepTrace>>,
) -> Result<TransportPlan> {
    validate_input(cost, config)?;
    let scalings: Box<dyn Scalings + '_> = if config.log_domain {
        Box::new(LogScalings::new(cost, config.lambda))
    } else {
        Box::new(LinearScalings::new(cost, config.lambda)?)
    };
    let n = cost.n();
    let mut log_u = Array1::<f64>::zeros(n);
    let mut log_v = Array1::<f64>::zeros(n);
    let mut sweeps = 0;
    for _ in 0..config.iterations {
        log_u = scalings.row_update(&log_v)?;
        log_v = scalings.col_update(&log_u)?;
        sweeps += 1;
        if trace.is_some() || config.tolerance.is_some() {
            let w = scalings.plan(&log_u, &log_v);
            if let Some(t) = trace.as_deref_mut() {
                t.push(SweepTrace {
                    primal: entropic_objective(cost, w.view(), config.lambda),
                    dual: dual_objective(&log_u, &log_v, w.view(), config.lambda),
                });
            }
            if let Some(tol) = config.tolerance {
                if marginal_deviation(w.view()).0 <= tol {
                    break;
                }
            }
        }
    }
    let mut values = scalings.plan(&log_u, &log_v);
    if config.symmetrize {
        let t = values.t().to_owned();
        values = (&values + &t) * 0.5;
    }
    let (row_dev, col_dev) = marginal_deviation(values.view());
    Ok(TransportPlan {
        values,
        row_dev,
        col_dev,
        log_u,
        log_v,
        sweeps,
    })
}

/// The two scaling updates and plan assembly, in either numeric domain.
trait Scalings {
    /// New `log u` given the current `log v`: rows of `diag(u) K diag(v)` sum to 1.
    fn row_update(&self, log_v: &Array1<f64>) -> Result<Array1<f64>>;
    /// New `log v` given `log u`: columns sum to 1.
    fn col_update(&self, log_u: &Array1<f64>) -> Result<Array1<f64>>;
    fn plan(&self, log_u: &Array1<f64>, log_v: &Array1<f64>) -> Array2<f64>;
}

/// Log-sum-exp updates over `-lambda * D` computed on the fly.
struct LogScalings<'a> {
    cost: ArrayView2<'a, f64>,
    // Transposed copy; only needed when the cost is not bitwise symmetric.
    cost_t: Option<Array2<f64>>,
    lambda: f64,
}

impl<'a> LogScalings<'a> {
    fn new(cost: &'a CostMatrix, lambda: f64) -> Self {
        let cost_t = if cost.is_exactly_symmetric() {
            None
        } else {
            Some(cost.values().t().as_standard_layout().to_owned())
        };
        Self {
            cost: cost.values(),
            cost_t,
            lambda,
        }
    }

    /// `out_i = -log sum_{j != i} exp(other_j - lambda * m_ij)`.
    fn half_sweep(&self, m: ArrayView2<'_, f64>, other: &Array1<f64>) -> Array1<f64> {
        let n = m.nrows();
        let lambda = self.lambda;
        let other = other.as_slice().expect("contiguous potential");
        let row = |i: usize| -> f64 {
            let r = m.row(i);
            let r = r.as_slice().expect("standard layout cost");
            let mut max = f64::NEG_INFINITY;
            for j in 0..n {
                if j != i {
                    max = max.max(other[j] - lambda * r[j]);
                }
            }
            let mut sum = 0.0;
            for j in 0..n {
                if j != i {
                    sum += (other[j] - lambda * r[j] - max).exp();
                }
            }
            -(max + sum.ln())
        };
        if n >= PAR_THRESHOLD {
            (0..n).into_par_iter().map(row).collect::<Vec<_>>().into()
        } else {
            (0..n).map(row).collect()
        }
    }
}

impl Scalings for LogScalings<'_> {
    fn row_update(&self, log_v: &Array1<f64>) -> Result<Array1<f64>> {
        Ok(self.half_sweep(self.cost, log_v))
    }

    fn col_update(&self, log_u: &Array1<f64>) -> Result<Array1<f64>> {
        let m = match &self.cost_t {
            Some(t) => t.view(),
            None => self.cost,
        };
        Ok(self.half_sweep(m, log_u))
    }

    fn plan(&self, log_u: &Array1<f64>, log_v: &Array1<f64>) -> Array2<f64> {
        let n = self.cost.nrows();
        let lambda = self.lambda;
        let mut w = Array2::<f64>::zeros((n, n));
        let fill = |(i, row): (usize, &mut [f64])| {
            for j in 0..n {
                if j != i {
                    row[j] = (log_u[i] - lambda * self.cost[[i, j]] + log_v[j]).exp();
                }
            }
        };
        let data = w.as_slice_mut().expect("fresh array is contiguous");
        if n >= PAR_THRESHOLD {
            data.par_chunks_mut(n).enumerate().for_each(fill);
        } else {
            data.chunks_mut(n).enumerate().for_each(fill);
        }
        w
    }
}

/// Plain matrix scaling with a precomputed kernel.
struct LinearScalings {
    kernel: Array2<f64>,
}

impl LinearScalings {
    fn new(cost: &CostMatrix, lambda: f64) -> Result<Self> {
        let kernel = cost.values().mapv(|d| (-lambda * d).exp());
        for (i, row) in kernel.axis_iter(Axis(0)).enumerate() {
            if row.iter().all(|&k| k == 0.0) {
                return Err(BpaError::NumericalUnderflow(i));
            }
        }
        Ok(Self { kernel })
    }

    fn scale(products: Array1<f64>) -> Result<Array1<f64>> {
        products
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let s = 1.0 / p;
                if p > 0.0 && s.is_finite() {
                    Ok(-p.ln())
                } else {
                    Err(BpaError::NumericalUnderflow(i))
                }
            })
            .collect()
    }
}

impl Scalings for LinearScalings {
    fn row_update(&self, log_v: &Array1<f64>) -> Result<Array1<f64>> {
        let v = log_v.mapv(f64::exp);
        Self::scale(self.kernel.dot(&v))
    }

    fn col_update(&self, log_u: &Array1<f64>) -> Result<Array1<f64>> {
        let u = log_u.mapv(f64::exp);
        Self::scale(self.kernel.t().dot(&u))
    }

    fn plan(&self, log_u: &Array1<f64>, log_v: &Array1<f64>) -> Array2<f64> {
        let u = log_u.mapv(f64::exp);
        let v = log_v.mapv(f64::exp);
        let mut w = self.kernel.clone();
        for ((i, j), x) in w.indexed_iter_mut() {
            *x *= u[i] * v[j];
        }
        w
    }
}
