use crate::affinity::FeatureSet;
use crate::rng::{gaussian_matrix, seeded};

pub fn random_features(n: usize, d: usize, seed: u64) -> FeatureSet {
    FeatureSet::new(gaussian_matrix(&mut seeded(seed), n, d)).unwrap()
}
