//! Balanced pairwise affinities (BPA).
//!
//! A parameterless set-to-set feature transform: the features of a set of
//! items are replaced by the rows of the entropic optimal transport plan
//! from the set to itself (self-matches forbidden), with the diagonal
//! restored to 1. Also included: an exact combinatorial solver for the
//! unregularized problem and synthetic clustering, few-shot and retrieval
//! harnesses for measuring the transform.
//!
//! ```
//! use bpa_core::{bpa, FeatureSet, SolverConfig};
//! use ndarray::array;
//!
//! let v = FeatureSet::new(array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]]).unwrap();
//! let w = bpa(&v, &SolverConfig::default()).unwrap();
//! assert_eq!(w.values().dim(), (4, 4));
//! assert_eq!(w.values()[[0, 0]], 1.0);
//! ```

pub mod affinity;
pub mod assignment;
pub mod bpa;
pub mod error;
pub mod experiments;
pub mod grouping;
pub mod oracle;
pub mod rng;
pub mod sinkhorn;
pub mod tasks;

#[cfg(test)]
mod testutil;

pub use affinity::{
    cosine_affinity, mask_diagonal, pairwise_cost, unit_normalize, CostMatrix, FeatureSet,
};
pub use bpa::{affinity_difference, bpa, bpa_attn, bpa_vjp, AffinityDifference, BpaEmbedding};
pub use error::{BpaError, Result};
pub use grouping::{
    ari, baseline_rows, generate_sphere, hungarian_accuracy, kmeans, nmi, pca_reduce, BaselineKind,
    ClusteringResult, KMeansResult, PcaResult, Representation, SphereConfig,
};
pub use oracle::{exact_plan, plan_cost, ExactMethod, ExactSolution};
pub use sinkhorn::{
    dual_objective, entropic_objective, marginal_deviation, solve, solve_traced, SolverConfig,
    SweepTrace, TransportPlan,
};
pub use tasks::{
    average_precision, generate_episode, generate_retrieval, protonet_classify, retrieval_rank,
    EpisodeSpec, ProtoOutcome, RetrievalInstance, RetrievalScore, RetrievalSpec,
};
