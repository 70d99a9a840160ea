//! The balanced pairwise-affinities transform.
//!
//! `bpa(V) = solve(mask(cost(normalize(V)))) + I`: each item is re-embedded
//! as its row of the optimal self-transport plan, with the self-affinity
//! restored to 1 on the diagonal. Full rows therefore sum to 2.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::affinity::{mask_diagonal, pairwise_cost, unit_normalize, FeatureSet};
use crate::error::{BpaError, Result};
use crate::sinkhorn::{solve, SolverConfig, TransportPlan};

/// Transport plan plus identity; row `i` is the new feature of item `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BpaEmbedding {
    values: Array2<f64>,
    source_n: usize,
    row_dev: f64,
    col_dev: f64,
}

impl BpaEmbedding {
    fn from_plan(plan: TransportPlan) -> Self {
        let (row_dev, col_dev) = (plan.row_dev(), plan.col_dev());
        let mut values = plan.into_values();
        let source_n = values.nrows();
        values.diag_mut().fill(1.0);
        Self {
            values,
            source_n,
            row_dev,
            col_dev,
        }
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Number of input items (also the embedding dimension).
    pub fn source_n(&self) -> usize {
        self.source_n
    }

    /// Row residual of the underlying plan.
    pub fn row_dev(&self) -> f64 {
        self.row_dev
    }

    /// Column residual of the underlying plan.
    pub fn col_dev(&self) -> f64 {
        self.col_dev
    }

    /// The embedding rows as a feature set, carrying over `labels`.
    /// Mixes the normalized rows of the set this embedding was computed from.
    pub fn attend(&self, features: &FeatureSet) -> Result<FeatureSet> {
        if features.n() != self.source_n {
            return Err(BpaError::LengthMismatch(features.n(), self.source_n));
        }
        let unit = unit_normalize(features)?;
        features.map_data(self.values.dot(&unit.data()))
    }

    pub fn to_features(&self, labels: Option<&[usize]>) -> Result<FeatureSet> {
        match labels {
            Some(l) => FeatureSet::with_labels(self.values.clone(), l.to_vec()),
            None => FeatureSet::new(self.values.clone()),
        }
    }
}

fn require_pair(features: &FeatureSet) -> Result<()> {
    if features.n() < 2 {
        return Err(BpaError::TooFewRows {
            min: 2,
            got: features.n(),
        });
    }
    Ok(())
}

pub fn bpa(features: &FeatureSet, config: &SolverConfig) -> Result<BpaEmbedding> {
    require_pair(features)?;
    let unit = unit_normalize(features)?;
    let cost = mask_diagonal(&pairwise_cost(&unit)?)?;
    let plan = solve(&cost, config)?;
    Ok(BpaEmbedding::from_plan(plan))
}

/// Dimension-preserving variant: `bpa(V) . normalize(V)`.
pub fn bpa_attn(features: &FeatureSet, config: &SolverConfig) -> Result<FeatureSet> {
    bpa(features, config)?.attend(features)
}

/// Split of `|w_i - w_j|` into the coordinates `{i, j}` and the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityDifference {
    /// `1 - w_ij`, the entry at coordinates `i` and `j`.
    pub direct: f64,
    /// `|w_ik - w_jk|` for every `k` outside `{i, j}`, in increasing `k`.
    pub indirect: Vec<f64>,
}

pub fn affinity_difference(
    embedding: &BpaEmbedding,
    i: usize,
    j: usize,
) -> Result<AffinityDifference> {
    let n = embedding.source_n;
    for idx in [i, j] {
        if idx >= n {
            return Err(BpaError::IndexOutOfRange { index: idx, len: n });
        }
    }
    if i == j {
        return Err(BpaError::SameIndex(i));
    }
    let w = &embedding.values;
    let indirect = (0..n)
        .filter(|&k| k != i && k != j)
        .map(|k| (w[[i, k]] - w[[j, k]]).abs())
        .collect();
    Ok(AffinityDifference {
        direct: 1.0 - w[[i, j]],
        indirect,
    })
}

/// Gradient of `L = <upstream, bpa(V)>` with respect to `V`.
///
/// Reverse accumulation through the unrolled sweeps, the kernel, the cost
/// construction and the row normalization. The log-domain recurrences are
/// differentiated for both solver modes since they compute the same function.
/// Early stopping is rejected because the unroll length must be fixed.
pub fn bpa_vjp(
    features: &FeatureSet,
    config: &SolverConfig,
    upstream: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    require_pair(features)?;
    config.validate()?;
    if config.tolerance.is_some() {
        return Err(BpaError::InvalidConfig(
            "vjp needs a fixed sweep count; disable the tolerance".into(),
        ));
    }
    let n = features.n();
    if upstream.dim() != (n, n) {
        return Err(BpaError::ShapeMismatch {
            expected: (n, n),
            got: upstream.dim(),
        });
    }
    if let Some(((row, col), _)) = upstream.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(BpaError::NonFinite { row, col });
    }

    let unit = unit_normalize(features)?;
    let cost = pairwise_cost(&unit)?;
    let lambda = config.lambda;
    let scaled = cost.values().mapv(|d| lambda * d);
    let steps = config.iterations;

    // Forward, keeping every potential: fs[t] = f^{t+1}, gs[t] = g^t.
    let mut gs = vec![Array1::<f64>::zeros(n)];
    let mut fs = Vec::with_capacity(steps);
    for t in 0..steps {
        let f = neg_lse_rows(&scaled.view(), &gs[t]);
        let g = neg_lse_rows(&scaled.t(), &f);
        fs.push(f);
        gs.push(g);
    }

    let grad_w = if config.symmetrize {
        (&upstream + &upstream.t()) * 0.5
    } else {
        upstream.to_owned()
    };

    let mut grad_c = Array2::<f64>::zeros((n, n));
    let mut grad_f = Array1::<f64>::zeros(n);
    let mut grad_g = Array1::<f64>::zeros(n);

    // W_ij = exp(f_i - C_ij + g_j)
    {
        let f = &fs[steps - 1];
        let g = &gs[steps];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let a = grad_w[[i, j]] * (f[i] - scaled[[i, j]] + g[j]).exp();
                grad_f[i] += a;
                grad_g[j] += a;
                grad_c[[i, j]] -= a;
            }
        }
    }

    for t in (0..steps).rev() {
        let f = &fs[t];
        let g_prev = &gs[t];
        let g = &gs[t + 1];
        // g_j = -lse_i(f_i - C_ij)
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let b = grad_g[j] * (f[i] - scaled[[i, j]] + g[j]).exp();
                acc += b;
                grad_c[[i, j]] += b;
            }
            grad_f[i] -= acc;
        }
        // f_i = -lse_j(g_prev_j - C_ij)
        let mut grad_g_prev = Array1::<f64>::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = grad_f[i] * (g_prev[j] - scaled[[i, j]] + f[i]).exp();
                grad_g_prev[j] -= q;
                grad_c[[i, j]] += q;
            }
        }
        grad_g = grad_g_prev;
        grad_f.fill(0.0);
    }

    // C = lambda * D, D_ij = 2 - 2 x_i . x_j (off-diagonal)
    let grad_d = grad_c * lambda;
    let sym = &grad_d + &grad_d.t();
    let x = unit.data();
    let grad_x = sym.dot(&x) * -2.0;

    // x = v / |v|  =>  dv = (dx - x (x . dx)) / |v|
    let v = features.data();
    let mut grad_v = Array2::<f64>::zeros(v.dim());
    for (i, mut out) in grad_v.axis_iter_mut(Axis(0)).enumerate() {
        let norm = v.row(i).dot(&v.row(i)).sqrt();
        let proj = x.row(i).dot(&grad_x.row(i));
        for k in 0..out.len() {
            out[k] = (grad_x[[i, k]] - x[[i, k]] * proj) / norm;
        }
    }
    Ok(grad_v)
}

/// `out_i = -log sum_{j != i} exp(other_j - m_ij)`.
fn neg_lse_rows(m: &ArrayView2<'_, f64>, other: &Array1<f64>) -> Array1<f64> {
    let n = m.nrows();
    (0..n)
        .map(|i| {
            let max = (0..n)
                .filter(|&j| j != i)
                .map(|j| other[j] - m[[i, j]])
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (other[j] - m[[i, j]] - max).exp())
                .sum();
            -(max + sum.ln())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_features;
    use ndarray::array;

    #[test]
    fn two_items_embed_to_all_ones() {
        let fs = FeatureSet::new(array![[1.0, 2.0, 0.5], [-0.3, 0.1, 4.0]]).unwrap();
        let e = bpa(&fs, &SolverConfig::default()).unwrap();
        for x in e.values().iter() {
            assert!((x - 1.0).abs() < 1e-12);
        }
        assert_eq!(e.source_n(), 2);
    }

    #[test]
    fn equidistant_triangle() {
        let s = 3f64.sqrt() / 2.0;
        let fs = FeatureSet::new(array![[1.0, 0.0], [-0.5, s], [-0.5, -s]]).unwrap();
        let e = bpa(&fs, &SolverConfig::default()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.5 };
                assert!((e.values()[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_is_one_and_rows_sum_to_two() {
        let fs = random_features(9, 5, 8);
        let e = bpa(&fs, &SolverConfig::default()).unwrap();
        for i in 0..9 {
            assert_eq!(e.values()[[i, i]], 1.0);
            let s: f64 = e.values().row(i).sum();
            assert!((s - 2.0).abs() <= e.row_dev() + 1e-12);
        }
    }

    #[test]
    fn single_item_rejected() {
        let fs = FeatureSet::new(array![[1.0, 0.0]]).unwrap();
        assert!(matches!(
            bpa(&fs, &SolverConfig::default()),
            Err(BpaError::TooFewRows { min: 2, got: 1 })
        ));
    }

    #[test]
    fn attn_shape_and_two_item_case() {
        let fs = FeatureSet::new(array![[3.0, 4.0], [0.0, 2.0]]).unwrap();
        let out = bpa_attn(&fs, &SolverConfig::default()).unwrap();
        assert_eq!((out.n(), out.dim()), (2, 2));
        for i in 0..2 {
            assert!((out.data()[[i, 0]] - 0.6).abs() < 1e-12);
            assert!((out.data()[[i, 1]] - 1.8).abs() < 1e-12);
        }
    }

    #[test]
    fn attn_matches_dense_product() {
        let fs = random_features(8, 3, 13);
        let cfg = SolverConfig::default();
        let out = bpa_attn(&fs, &cfg).unwrap();
        let w = bpa(&fs, &cfg).unwrap();
        let unit = unit_normalize(&fs).unwrap();
        for i in 0..8 {
            for k in 0..3 {
                let mut acc = 0.0;
                for j in 0..8 {
                    acc += w.values()[[i, j]] * unit.data()[[j, k]];
                }
                assert!((out.data()[[i, k]] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affinity_difference_cases() {
        let fs = FeatureSet::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let e = bpa(&fs, &SolverConfig::default()).unwrap();
        let d = affinity_difference(&e, 0, 1).unwrap();
        assert!(d.direct.abs() < 1e-12);
        assert!(d.indirect.is_empty());

        let s = 3f64.sqrt() / 2.0;
        let fs = FeatureSet::new(array![[1.0, 0.0], [-0.5, s], [-0.5, -s]]).unwrap();
        let e = bpa(&fs, &SolverConfig::default()).unwrap();
        let d = affinity_difference(&e, 0, 2).unwrap();
        assert!((d.direct - 0.5).abs() < 1e-12);
        assert_eq!(d.indirect.len(), 1);
        assert!(d.indirect[0].abs() < 1e-12);

        assert!(matches!(
            affinity_difference(&e, 0, 3),
            Err(BpaError::IndexOutOfRange { index: 3, len: 3 })
        ));
        assert_eq!(affinity_difference(&e, 1, 1), Err(BpaError::SameIndex(1)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let fs = random_features(4, 3, 2);
        let g = bpa_vjp(&fs, &SolverConfig::default(), Array2::zeros((4, 4)).view()).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn vjp_rejects_tolerance_and_bad_shape() {
        let fs = random_features(4, 3, 2);
        let cfg = SolverConfig::default().with_tolerance(Some(1e-6));
        assert!(bpa_vjp(&fs, &cfg, Array2::zeros((4, 4)).view()).is_err());
        assert!(matches!(
            bpa_vjp(&fs, &SolverConfig::default(), Array2::zeros((3, 4)).view()),
            Err(BpaError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn parameterless_and_deterministic() {
        let fs = random_features(20, 6, 77);
        let cfg = SolverConfig::default();
        let a = bpa(&fs, &cfg).unwrap();
        let b = bpa(&fs, &cfg).unwrap();
        assert!(a
            .values()
            .iter()
            .zip(b.values().iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn tight_clusters_match_long_run_reference() {
        let v = array![
            [1.0, 0.0, 0.0],
            [0.99, 0.01, 0.0],
            [0.99, 0.0, 0.01],
            [0.0, 1.0, 0.0],
            [0.01, 0.99, 0.0],
            [0.0, 0.99, 0.01],
        ];
        let fs = FeatureSet::new(v).unwrap();
        let split = |w: ArrayView2<'_, f64>| {
            let (mut within, mut nw, mut cross, mut nc) = (0.0, 0, 0.0, 0);
            for i in 0..6 {
                for j in 0..6 {
                    if i == j {
                        continue;
                    }
                    if i / 3 == j / 3 {
                        within += w[[i, j]];
                        nw += 1;
                    } else {
                        cross += w[[i, j]];
                        nc += 1;
                    }
                }
            }
            (within / nw as f64, cross / nc as f64)
        };
        let cfg = SolverConfig::default().with_lambda(10.0);
        let fixed = bpa(&fs, &cfg).unwrap();
        let reference = bpa(&fs, &cfg.with_iterations(1000)).unwrap();
        let (w5, c5) = split(fixed.values());
        let (wr, cr) = split(reference.values());
        assert!(w5 > c5, "{w5} {c5}");
        assert!(wr > cr, "{wr} {cr}");
        // The fixed budget already sits close to the converged plan here.
        assert!((w5 - wr).abs() < 1e-3);
    }

    fn finite_difference(
        fs: &FeatureSet,
        cfg: &SolverConfig,
        up: &Array2<f64>,
        h: f64,
    ) -> Array2<f64> {
        let loss = |v: &Array2<f64>| -> f64 {
            let e = bpa(&FeatureSet::new(v.clone()).unwrap(), cfg).unwrap();
            (&e.values() * up).sum()
        };
        let base = fs.data().to_owned();
        let mut g = Array2::zeros(base.dim());
        for idx in ndarray::indices(base.dim()) {
            let mut plus = base.clone();
            plus[idx] += h;
            let mut minus = base.clone();
            minus[idx] -= h;
            g[idx] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
        g
    }

    fn max_rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn vjp_matches_finite_differences() {
        for (seed, lambda) in [(1, 0.1), (2, 1.0), (3, 5.0)] {
            let fs = random_features(3, 2, seed);
            let up = random_features(3, 3, seed + 50).into_data();
            let cfg = SolverConfig::default().with_lambda(lambda);
            let g = bpa_vjp(&fs, &cfg, up.view()).unwrap();
            let fd = finite_difference(&fs, &cfg, &up, 1e-6);
            assert!(max_rel_err(&g, &fd) <= 1e-4, "{g} {fd}");
        }
    }

    #[test]
    fn vjp_handles_symmetrize_and_linear_mode() {
        let fs = random_features(5, 3, 11);
        let up = random_features(5, 5, 12).into_data();
        for cfg in [
            SolverConfig::default()
                .with_lambda(2.0)
                .with_symmetrize(true),
            SolverConfig::default()
                .with_lambda(0.5)
                .with_log_domain(false)
                .with_iterations(3),
        ] {
            let g = bpa_vjp(&fs, &cfg, up.view()).unwrap();
            let fd = finite_difference(&fs, &cfg, &up, 1e-6);
            assert!(max_rel_err(&g, &fd) <= 1e-4);
        }
    }

    #[test]
    fn vjp_is_permutation_equivariant() {
        let fs = random_features(6, 4, 21);
        let up = random_features(6, 6, 22).into_data();
        let order = [3, 0, 5, 1, 4, 2];
        let cfg = SolverConfig::default().with_lambda(1.0);
        let g = bpa_vjp(&fs, &cfg, up.view()).unwrap();
        let pf = fs.select_rows(&order).unwrap();
        let pu = up.select(Axis(0), &order).select(Axis(1), &order);
        let pg = bpa_vjp(&pf, &cfg, pu.view()).unwrap();
        for (i, &o) in order.iter().enumerate() {
            for k in 0..4 {
                assert!((pg[[i, k]] - g[[o, k]]).abs() <= 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::seq::SliceRandom;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn bpa_is_permutation_equivariant(n in 2usize..30, d in 1usize..8, seed in any::<u64>()) {
                let fs = random_features(n, d, seed);
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut crate::rng::seeded(seed ^ 0x5eed));
                let cfg = SolverConfig::default();
                let a = bpa(&fs, &cfg).unwrap();
                let b = bpa(&fs.select_rows(&order).unwrap(), &cfg).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        prop_assert!((b.values()[[i, j]] - a.values()[[order[i], order[j]]]).abs() <= 1e-10);
                    }
                }
            }

            #[test]
            fn embedding_columns_sum_to_two(n in 2usize..20, seed in any::<u64>()) {
                let e = bpa(&random_features(n, 4, seed), &SolverConfig::default()).unwrap();
                for j in 0..n {
                    prop_assert!((e.values().column(j).sum() - 2.0).abs() <= 1e-12);
                }
                prop_assert!(e.values().iter().all(|&w| (0.0..=1.0).contains(&w)));
            }
        }
    }
}
