//! Fixtures shared by the benchmarks.

use bpa_core::rng::{gaussian_matrix, seeded};
use bpa_core::{mask_diagonal, pairwise_cost, unit_normalize, CostMatrix, FeatureSet};

/// Gaussian features, fixed per `(n, d)`.
pub fn features(n: usize, d: usize) -> FeatureSet {
    FeatureSet::new(gaussian_matrix(&mut seeded((n * 1_000 + d) as u64), n, d))
        .expect("gaussian rows are finite")
}

/// Unmasked pairwise cost of [`features`].
pub fn cost(n: usize, d: usize) -> CostMatrix {
    let unit = unit_normalize(&features(n, d)).expect("gaussian rows are nonzero");
    pairwise_cost(&unit).expect("rows are unit")
}

pub fn masked_cost(n: usize, d: usize) -> CostMatrix {
    mask_diagonal(&cost(n, d)).expect("fresh cost is unmasked")
}
