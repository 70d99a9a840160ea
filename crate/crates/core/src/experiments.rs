//! Batch runners behind the benchmark commands.
//!
//! Every work unit (grid cell run, episode, retrieval instance, oracle trial)
//! gets its own seed from [`derive_seed`], runs independently on the rayon
//! pool, and is collected back in index order, so the thread count never
//! changes a reported number.

use rayon::prelude::*;
use serde::Serialize;

use crate::affinity::{mask_diagonal, pairwise_cost, unit_normalize};
use crate::error::{BpaError, Result};
use crate::grouping::{sphere_trial, Representation, SphereConfig};
use crate::oracle::{exact_plan, plan_cost, ExactMethod, MAX_ENUMERATION_N};
use crate::rng::{derive_seed, gaussian_matrix, seeded};
use crate::sinkhorn::{solve, SolverConfig};
use crate::tasks::{
    generate_episode, generate_retrieval, protonet_classify, retrieval_rank, EpisodeSpec,
    RetrievalSpec,
};
use crate::FeatureSet;

/// Mean with a normal-approximation 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub ci95: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                ci95: f64::NAN,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let ci95 = if count > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            1.96 * (var / count as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, ci95, count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SphereCell {
    pub dim: usize,
    pub noise_std: f64,
    pub representation: Representation,
    pub accuracy: Summary,
    pub nmi: Summary,
    pub ari: Summary,
}

/// Seed of one run of one grid cell.
pub fn sphere_run_seed(base: u64, dim: usize, noise_std: f64, run: usize) -> u64 {
    derive_seed(base, &[dim as u64, noise_std.to_bits(), run as u64])
}

/// Sphere clustering over a `dims x noise` grid, `runs` generator seeds per cell.
pub fn sphere_grid(
    base: &SphereConfig,
    dims: &[usize],
    noise: &[f64],
    runs: usize,
    restarts: usize,
    representations: &[Representation],
    solver: &SolverConfig,
) -> Result<Vec<SphereCell>> {
    if representations.is_empty() {
        return Err(BpaError::InvalidParameter(
            "no representations requested".into(),
        ));
    }
    if runs == 0 {
        return Err(BpaError::InvalidParameter("runs must be >= 1".into()));
    }
    let units: Vec<(usize, f64, usize)> = dims
        .iter()
        .flat_map(|&d| {
            noise
                .iter()
                .flat_map(move |&s| (0..runs).map(move |r| (d, s, r)))
        })
        .collect();
    let results: Vec<_> = units
        .par_iter()
        .map(|&(dim, noise_std, run)| {
            let cfg = SphereConfig {
                dim,
                noise_std,
                seed: sphere_run_seed(base.seed, dim, noise_std, run),
                ..*base
            };
            sphere_trial(&cfg, representations, solver, restarts)
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (cell_idx, chunk) in results.chunks(runs).enumerate() {
        let (dim, noise_std, _) = units[cell_idx * runs];
        for (k, rep) in representations.iter().enumerate() {
            let pick = |f: fn(&crate::grouping::ClusteringResult) -> f64| {
                Summary::of(&chunk.iter().map(|run| f(&run[k].1)).collect::<Vec<_>>())
            };
            cells.push(SphereCell {
                dim,
                noise_std,
                representation: *rep,
                accuracy: pick(|r| r.accuracy),
                nmi: pick(|r| r.nmi),
                ari: pick(|r| r.ari),
            });
        }
    }
    Ok(cells)
}

/// Few-shot accuracy per representation over `episodes` seeded episodes.
pub fn fsc_benchmark(
    spec: &EpisodeSpec,
    episodes: usize,
    representations: &[Representation],
    solver: &SolverConfig,
) -> Result<Vec<(Representation, Summary)>> {
    if representations.is_empty() {
        return Err(BpaError::InvalidParameter(
            "no representations requested".into(),
        ));
    }
    let per_episode: Vec<Vec<f64>> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let s = EpisodeSpec {
                seed: derive_seed(spec.seed, &[e as u64]),
                ..*spec
            };
            let (support, query) = generate_episode(&s)?;
            representations
                .iter()
                .map(|&t| Ok(protonet_classify(&support, &query, t, solver)?.accuracy))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(representations
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let acc: Vec<f64> = per_episode.iter().map(|e| e[k]).collect();
            (t, Summary::of(&acc))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalSummary {
    pub representation: Representation,
    pub map: Summary,
    pub rank1: Summary,
}

pub fn retrieval_benchmark(
    spec: &RetrievalSpec,
    instances: usize,
    representations: &[Representation],
    solver: &SolverConfig,
) -> Result<Vec<RetrievalSummary>> {
    if representations.is_empty() {
        return Err(BpaError::InvalidParameter(
            "no representations requested".into(),
        ));
    }
    let per_instance: Vec<Vec<(f64, f64)>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let s = RetrievalSpec {
                seed: derive_seed(spec.seed, &[i as u64]),
                ..*spec
            };
            let inst = generate_retrieval(&s)?;
            representations
                .iter()
                .map(|&t| {
                    let r = retrieval_rank(&inst, t, solver, false)?;
                    Ok((r.map, r.rank1))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(representations
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let map: Vec<f64> = per_instance.iter().map(|v| v[k].0).collect();
            let rank1: Vec<f64> = per_instance.iter().map(|v| v[k].1).collect();
            RetrievalSummary {
                representation: t,
                map: Summary::of(&map),
                rank1: Summary::of(&rank1),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTrial {
    pub trial: usize,
    pub n: usize,
    pub sinkhorn_cost: f64,
    pub exact_cost: f64,
    pub flow_cost: f64,
    /// `(sinkhorn - exact) / exact`, or 0 when both are 0.
    pub relative_gap: f64,
    /// Row-marginal residual of the entropic plan; a plan that is not exactly
    /// feasible can undercut the exact optimum by about this much per row.
    pub row_dev: f64,
    /// Enumeration and min-cost flow reached the same integer objective.
    pub methods_agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub trials: Vec<OracleTrial>,
    pub max_gap: f64,
    pub min_gap: f64,
    pub all_agree: bool,
}

/// Dimension of the random unit features behind each oracle instance.
pub const ORACLE_FEATURE_DIM: usize = 8;

/// Compares the entropic plan's transport cost with the exact optimum on
/// random instances; `n` cycles through `sizes`.
pub fn oracle_check(
    sizes: &[usize],
    trials: usize,
    solver: &SolverConfig,
    seed: u64,
) -> Result<OracleReport> {
    if sizes.is_empty() {
        return Err(BpaError::InvalidParameter("no instance sizes given".into()));
    }
    if let Some(&n) = sizes
        .iter()
        .find(|&&n| !(2..=MAX_ENUMERATION_N).contains(&n))
    {
        return Err(BpaError::TooLarge(n));
    }
    let trials: Vec<OracleTrial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let n = sizes[t % sizes.len()];
            let mut rng = seeded(derive_seed(seed, &[t as u64]));
            let feats = FeatureSet::new(gaussian_matrix(&mut rng, n, ORACLE_FEATURE_DIM))?;
            let cost = pairwise_cost(&unit_normalize(&feats)?)?;
            let plan = solve(&mask_diagonal(&cost)?, solver)?;
            let sinkhorn_cost = plan_cost(&cost, plan.values())?;
            let exact = exact_plan(&cost, ExactMethod::DerangementEnum)?;
            let flow = exact_plan(&cost, ExactMethod::MinCostFlow)?;
            let relative_gap = if exact.cost > 0.0 {
                (sinkhorn_cost - exact.cost) / exact.cost
            } else {
                sinkhorn_cost
            };
            Ok(OracleTrial {
                trial: t,
                n,
                sinkhorn_cost,
                exact_cost: exact.cost,
                flow_cost: flow.cost,
                relative_gap,
                row_dev: plan.row_dev(),
                methods_agree: exact.scaled_cost == flow.scaled_cost,
            })
        })
        .collect::<Result<_>>()?;
    let max_gap = trials
        .iter()
        .map(|t| t.relative_gap)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_gap = trials
        .iter()
        .map(|t| t.relative_gap)
        .fold(f64::INFINITY, f64::min);
    let all_agree = trials.iter().all(|t| t.methods_agree);
    Ok(OracleReport {
        trials,
        max_gap,
        min_gap,
        all_agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_constant_has_zero_width() {
        let s = Summary::of(&[0.5, 0.5, 0.5]);
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.ci95, 0.0);
        assert_eq!(s.count, 3);
    }

    #[test]
    fn two_point_oracle_has_no_gap() {
        let r = oracle_check(&[2], 5, &SolverConfig::default(), 1).unwrap();
        assert!(r.trials.iter().all(|t| t.relative_gap == 0.0));
        assert!(r.all_agree);
    }

    #[test]
    fn oracle_rejects_large_n() {
        assert_eq!(
            oracle_check(&[4, 10], 1, &SolverConfig::default(), 0),
            Err(BpaError::TooLarge(10))
        );
    }

    #[test]
    fn grid_needs_representations() {
        assert!(sphere_grid(
            &SphereConfig::default(),
            &[10],
            &[0.1],
            1,
            1,
            &[],
            &SolverConfig::default()
        )
        .is_err());
    }
}
