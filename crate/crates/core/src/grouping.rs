//! Clustering on the sphere: synthetic generator, PCA, k-means and the
//! standard clustering scores (Hungarian accuracy, NMI, ARI).

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::affinity::{cosine_affinity, unit_normalize, FeatureSet};
use crate::assignment::min_cost_assignment;
use crate::bpa::{bpa, bpa_attn};
use crate::error::{BpaError, Result};
use crate::rng::{derive_seed, gaussian_matrix, seeded};
use crate::sinkhorn::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SphereConfig {
    pub k: usize,
    pub points_per_cluster: usize,
    pub dim: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SphereConfig {
    fn default() -> Self {
        Self {
            k: 10,
            points_per_cluster: 20,
            dim: 10,
            noise_std: 0.3,
            seed: 0,
        }
    }
}

impl SphereConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(BpaError::InvalidParameter("k must be >= 2".into()));
        }
        if self.points_per_cluster < 1 {
            return Err(BpaError::InvalidParameter(
                "points_per_cluster must be >= 1".into(),
            ));
        }
        if self.dim < 2 {
            return Err(BpaError::InvalidParameter("dim must be >= 2".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(BpaError::InvalidParameter(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

fn normalize_rows_in_place(data: &mut Array2<f64>, fallback: Option<&Array2<f64>>) {
    for (i, mut row) in data.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm > 1e-30 {
            row.mapv_inplace(|x| x / norm);
        } else if let Some(f) = fallback {
            row.assign(&f.row(i));
        }
    }
}

/// Uniform random unit centers; each point is its center plus isotropic
/// Gaussian noise, projected back onto the sphere. Rows are grouped by
/// cluster and labelled `0..k`.
pub fn generate_sphere(config: &SphereConfig) -> Result<FeatureSet> {
    config.validate()?;
    let mut rng = seeded(config.seed);
    let mut centers = gaussian_matrix(&mut rng, config.k, config.dim);
    normalize_rows_in_place(&mut centers, None);
    let n = config.k * config.points_per_cluster;
    let labels: Vec<usize> = (0..n).map(|i| i / config.points_per_cluster).collect();
    let base = centers.select(Axis(0), &labels);
    let noise = gaussian_matrix(&mut rng, n, config.dim);
    let mut data = &base + &(noise * config.noise_std);
    if config.noise_std > 0.0 {
        normalize_rows_in_place(&mut data, Some(&base));
    }
    FeatureSet::with_labels(data, labels)
}

#[derive(Debug, Clone)]
pub struct PcaResult {
    pub features: FeatureSet,
    /// Covariance eigenvalues of the kept components, descending.
    pub eigenvalues: Vec<f64>,
    /// Set when some kept component carries (numerically) zero variance.
    pub rank_deficient: bool,
}

/// Projects mean-centered rows onto the top `target_dim` principal axes.
/// Each axis is signed so its largest-magnitude coordinate is positive.
pub fn pca_reduce(features: &FeatureSet, target_dim: usize) -> Result<PcaResult> {
    let (n, d) = (features.n(), features.dim());
    let max = n.min(d);
    if target_dim == 0 || target_dim > max {
        return Err(BpaError::InvalidTargetDim {
            target: target_dim,
            max,
        });
    }
    let x = features.data();
    let mean = x.mean_axis(Axis(0)).expect("n >= 1");
    let centered = &x - &mean;
    let denom = (n.max(2) - 1) as f64;

    // Eigendecompose whichever of the d x d covariance or n x n Gram is smaller.
    let (values, mut axes): (Vec<f64>, Array2<f64>) = if d <= n {
        let cov = centered.t().dot(&centered) / denom;
        let (vals, vecs) = top_eigen(&cov, target_dim);
        (vals, vecs)
    } else {
        let gram = centered.dot(&centered.t()) / denom;
        let (vals, vecs) = top_eigen(&gram, target_dim);
        // axis_k = X^T u_k / |X^T u_k|
        let mut axes = centered.t().dot(&vecs);
        for mut col in axes.axis_iter_mut(Axis(1)) {
            let norm = col.dot(&col).sqrt();
            if norm > 1e-300 {
                col.mapv_inplace(|v| v / norm);
            }
        }
        (vals, axes)
    };
    let scale = values.first().copied().unwrap_or(0.0).abs().max(1e-300);
    let rank_deficient = values.iter().any(|&v| v <= scale * 1e-12);

    for mut col in axes.axis_iter_mut(Axis(1)) {
        let pivot = col.iter().copied().fold(
            0.0_f64,
            |best, v| if v.abs() > best.abs() { v } else { best },
        );
        if pivot < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    let projected = centered.dot(&axes);
    Ok(PcaResult {
        features: features.map_data(projected)?,
        eigenvalues: values,
        rank_deficient,
    })
}

/// Top `k` eigenpairs of a symmetric matrix, eigenvalues descending.
fn top_eigen(m: &Array2<f64>, k: usize) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let order = &order[..k];
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Array2::from_shape_fn((n, k), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vecs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squared distances.
    pub wcss: f64,
}

pub const KMEANS_MAX_ITER: usize = 300;
const KMEANS_REL_TOL: f64 = 1e-6;

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid for each row, lowest index on ties; returns (assignments, wcss).
fn assign(x: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    x.axis_iter(Axis(0))
        .map(|row| {
            centroids
                .axis_iter(Axis(0))
                .enumerate()
                .map(|(c, cen)| (c, sq_dist(row, cen)))
                .fold(
                    (0, f64::INFINITY),
                    |best, cur| if cur.1 < best.1 { cur } else { best },
                )
        })
        .unzip()
}

fn kmeans_pp(x: ArrayView2<'_, f64>, k: usize, rng: &mut crate::rng::Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut closest: Vec<f64> = x
        .axis_iter(Axis(0))
        .map(|r| sq_dist(r, x.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in closest.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.axis_iter(Axis(0)).enumerate() {
            closest[i] = closest[i].min(sq_dist(r, x.row(pick)));
        }
    }
    centroids
}

fn lloyd(x: ArrayView2<'_, f64>, mut centroids: Array2<f64>) -> KMeansResult {
    let k = centroids.nrows();
    let mut prev_wcss = f64::INFINITY;
    let (mut assignments, mut dists) = assign(x, &centroids);
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            sums.row_mut(c).scaled_add(1.0, &x.row(i));
            counts[c] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                centroids
                    .row_mut(c)
                    .assign(&(&sums.row(c) / count as f64));
            } else {
                // Empty cluster: move it onto the point worst served by its centroid.
                let far = dists
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |b, (i, &d)| if d > b.1 { (i, d) } else { b })
                    .0;
                centroids.row_mut(c).assign(&x.row(far));
                dists[far] = 0.0;
            }
        }
        let (next, next_dists) = assign(x, &centroids);
        let wcss: f64 = next_dists.iter().sum();
        let unchanged = next == assignments;
        assignments = next;
        dists = next_dists;
        let rel = if prev_wcss.is_finite() && prev_wcss > 0.0 {
            (prev_wcss - wcss).abs() / prev_wcss
        } else {
            f64::INFINITY
        };
        prev_wcss = wcss;
        if unchanged || rel < KMEANS_REL_TOL || wcss == 0.0 {
            break;
        }
    }
    KMeansResult {
        wcss: dists.iter().sum(),
        assignments,
        centroids,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the best of `restarts` runs by WCSS.
pub fn kmeans(features: &FeatureSet, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = features.n();
    if k == 0 || k > n {
        return Err(BpaError::InvalidParameter(format!(
            "k must be in [1, {n}], got {k}"
        )));
    }
    let x = features.data();
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = seeded(derive_seed(seed, &[r as u64]));
        let result = lloyd(x, kmeans_pp(x, k, &mut rng));
        if best.as_ref().is_none_or(|b| result.wcss < b.wcss) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Maps arbitrary labels to `0..m` in order of first appearance.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn contingency(pred: &[usize], truth: &[usize]) -> Result<Array2<u64>> {
    if pred.len() != truth.len() {
        return Err(BpaError::LengthMismatch(pred.len(), truth.len()));
    }
    let (p, kp) = compact(pred);
    let (t, kt) = compact(truth);
    let mut table = Array2::<u64>::zeros((kp, kt));
    for (a, b) in p.iter().zip(&t) {
        table[[*a, *b]] += 1;
    }
    Ok(table)
}

/// Fraction of items correctly labelled under the best one-to-one matching
/// of predicted to true clusters.
pub fn hungarian_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    if pred.is_empty() {
        return Err(BpaError::TooFewRows { min: 1, got: 0 });
    }
    let m = table.nrows().max(table.ncols());
    let cost: Vec<Vec<i64>> = (0..m)
        .map(|r| {
            (0..m)
                .map(|c| {
                    if r < table.nrows() && c < table.ncols() {
                        -(table[[r, c]] as i64)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let matched: i64 = min_cost_assignment(&cost)
        .iter()
        .enumerate()
        .map(|(r, &c)| -cost[r][c])
        .sum();
    Ok(matched as f64 / pred.len() as f64)
}

fn entropy(counts: &Array1<f64>, n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(pred; truth) / sqrt(H(pred) H(truth))`, natural logs.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?.mapv(|c| c as f64);
    let n = pred.len();
    if n < 2 {
        return Err(BpaError::TooFewRows { min: 2, got: n });
    }
    let n = n as f64;
    let rows = table.sum_axis(Axis(1));
    let cols = table.sum_axis(Axis(0));
    let (hp, ht) = (entropy(&rows, n), entropy(&cols, n));
    if hp == 0.0 || ht == 0.0 {
        return Ok(if hp == 0.0 && ht == 0.0 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for ((i, j), &c) in table.indexed_iter() {
        if c > 0.0 {
            mi += c / n * (n * c / (rows[i] * cols[j])).ln();
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

fn pairs(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from pair counts.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?.mapv(|c| c as f64);
    let n = pred.len();
    if n < 2 {
        return Err(BpaError::TooFewRows { min: 2, got: n });
    }
    let index: f64 = table.iter().map(|&c| pairs(c)).sum();
    let a: f64 = table.sum_axis(Axis(1)).iter().map(|&c| pairs(c)).sum();
    let b: f64 = table.sum_axis(Axis(0)).iter().map(|&c| pairs(c)).sum();
    let expected = a * b / pairs(n as f64);
    let max = (a + b) / 2.0;
    if max == expected {
        // Both partitions trivial (one cluster or all singletons).
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub accuracy: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn score_clustering(assignments: Vec<usize>, truth: &[usize]) -> Result<ClusteringResult> {
    Ok(ClusteringResult {
        accuracy: hungarian_accuracy(&assignments, truth)?,
        nmi: nmi(&assignments, truth)?,
        ari: ari(&assignments, truth)?,
        assignments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Cosine,
    Softmax,
}

/// Affinity rows without balancing: raw cosine rows, or row-softmax of them.
pub fn baseline_rows(features: &FeatureSet, kind: BaselineKind) -> Result<Array2<f64>> {
    if features.n() < 2 {
        return Err(BpaError::TooFewRows {
            min: 2,
            got: features.n(),
        });
    }
    let s = cosine_affinity(&unit_normalize(features)?)?;
    Ok(match kind {
        BaselineKind::Cosine => s,
        BaselineKind::Softmax => {
            let mut out = s;
            for mut row in out.axis_iter_mut(Axis(0)) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum);
            }
            out
        }
    })
}

/// Feature representation fed to a downstream grouping step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    #[serde(alias = "none")]
    Raw,
    Bpa,
    #[serde(alias = "bpa-attn")]
    BpaAttn,
    #[serde(alias = "cosine_rows")]
    Cosine,
    #[serde(alias = "softmax_rows")]
    Softmax,
}

impl Representation {
    pub fn name(&self) -> &'static str {
        match self {
            Representation::Raw => "raw",
            Representation::Bpa => "bpa",
            Representation::BpaAttn => "bpa_attn",
            Representation::Cosine => "cosine",
            Representation::Softmax => "softmax",
        }
    }

    pub fn apply(&self, features: &FeatureSet, config: &SolverConfig) -> Result<FeatureSet> {
        match self {
            Representation::Raw => Ok(features.clone()),
            Representation::Bpa => features.map_data(bpa(features, config)?.into_values()),
            Representation::BpaAttn => bpa_attn(features, config),
            Representation::Cosine => {
                features.map_data(baseline_rows(features, BaselineKind::Cosine)?)
            }
            Representation::Softmax => {
                features.map_data(baseline_rows(features, BaselineKind::Softmax)?)
            }
        }
    }
}

/// PCA target used when the ambient dimension is larger.
pub const SPHERE_PCA_DIM: usize = 50;

/// One sphere instance: generate, reduce to 50 dims if larger, then k-means
/// (with the true k) on each requested representation.
pub fn sphere_trial(
    config: &SphereConfig,
    representations: &[Representation],
    solver: &SolverConfig,
    restarts: usize,
) -> Result<Vec<(Representation, ClusteringResult)>> {
    let data = generate_sphere(config)?;
    let data = if config.dim > SPHERE_PCA_DIM && data.n() >= SPHERE_PCA_DIM {
        pca_reduce(&data, SPHERE_PCA_DIM)?.features
    } else {
        data
    };
    let truth = data.labels().expect("generator attaches labels").to_vec();
    representations
        .iter()
        .map(|rep| {
            let feats = rep.apply(&data, solver)?;
            let km = kmeans(
                &feats,
                config.k,
                restarts,
                derive_seed(config.seed, &[0x6b6d]),
            )?;
            Ok((*rep, score_clustering(km.assignments, &truth)?))
        })
        .collect()
}
