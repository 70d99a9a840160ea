//! Few-shot episodes with a prototype classifier, and query/gallery retrieval.
//!
//! Both harnesses process the whole instance jointly: support and query (or
//! query and gallery) rows are concatenated, transformed together, and only
//! then compared. The `Raw` representation is the inductive baseline and goes
//! through exactly the same downstream code.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::affinity::{unit_normalize, FeatureSet};
use crate::error::{BpaError, Result};
use crate::grouping::Representation;
use crate::rng::{gaussian_matrix, seeded, Rng};
use crate::sinkhorn::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSpec {
    pub ways: usize,
    pub shots: usize,
    pub queries_per_way: usize,
    pub feature_dim: usize,
    /// Minimum Euclidean distance between any two (unit) class centers.
    pub class_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            ways: 5,
            shots: 1,
            queries_per_way: 15,
            feature_dim: 64,
            class_separation: 1.0,
            noise_std: 0.25,
            seed: 0,
        }
    }
}

impl EpisodeSpec {
    pub fn episode_size(&self) -> usize {
        self.ways * (self.shots + self.queries_per_way)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ways < 2 || self.shots < 1 || self.queries_per_way < 1 {
            return Err(BpaError::InvalidParameter(format!(
                "episode needs ways >= 2, shots >= 1, queries >= 1 (got {}/{}/{})",
                self.ways, self.shots, self.queries_per_way
            )));
        }
        if self.feature_dim < 1 {
            return Err(BpaError::EmptyDimension);
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(BpaError::InvalidParameter(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(BpaError::InvalidParameter(format!(
                "class_separation must be finite and >= 0, got {}",
                self.class_separation
            )));
        }
        Ok(())
    }
}

const CENTER_ATTEMPTS: usize = 10_000;

fn unit_rows(rng: &mut Rng, n: usize, d: usize) -> Array2<f64> {
    let mut m = gaussian_matrix(rng, n, d);
    for mut row in m.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        row.mapv_inplace(|v| v / norm);
    }
    m
}

/// Rejection-samples `ways` unit centers with pairwise distance >= `separation`.
fn separated_centers(
    rng: &mut Rng,
    ways: usize,
    dim: usize,
    separation: f64,
) -> Result<Array2<f64>> {
    let infeasible = BpaError::SeparationInfeasible {
        ways,
        dim,
        separation,
    };
    // No configuration of k unit vectors beats the regular simplex.
    let bound = (2.0 * ways as f64 / (ways as f64 - 1.0)).sqrt();
    if separation > bound || (dim == 1 && ways > 2 && separation > 0.0) {
        return Err(infeasible);
    }
    let mut centers = Array2::<f64>::zeros((ways, dim));
    let mut placed = 0;
    let mut attempts = 0;
    while placed < ways {
        attempts += 1;
        if attempts > CENTER_ATTEMPTS * ways {
            return Err(infeasible);
        }
        let cand = unit_rows(rng, 1, dim);
        let cand = cand.row(0);
        let ok = (0..placed).all(|c| {
            let d2: f64 = centers
                .row(c)
                .iter()
                .zip(cand.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() >= separation
        });
        if ok {
            centers.row_mut(placed).assign(&cand);
            placed += 1;
        }
    }
    Ok(centers)
}

fn noisy_points(
    rng: &mut Rng,
    centers: &Array2<f64>,
    labels: &[usize],
    noise_std: f64,
) -> Result<FeatureSet> {
    let base = centers.select(Axis(0), labels);
    let mut data = &base + &(gaussian_matrix(rng, labels.len(), centers.ncols()) * noise_std);
    if noise_std > 0.0 {
        for (i, mut row) in data.axis_iter_mut(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm > 1e-30 {
                row.mapv_inplace(|v| v / norm);
            } else {
                row.assign(&base.row(i));
            }
        }
    }
    FeatureSet::with_labels(data, labels.to_vec())
}

/// A synthetic episode: per-class support and query points around separated
/// centers, grouped by class.
pub fn generate_episode(spec: &EpisodeSpec) -> Result<(FeatureSet, FeatureSet)> {
    let counts = vec![spec.queries_per_way; spec.ways];
    generate_episode_with_queries(spec, &counts)
}

/// Like [`generate_episode`] with a per-class query count (unbalanced episodes).
pub fn generate_episode_with_queries(
    spec: &EpisodeSpec,
    queries: &[usize],
) -> Result<(FeatureSet, FeatureSet)> {
    spec.validate()?;
    if queries.len() != spec.ways {
        return Err(BpaError::LengthMismatch(queries.len(), spec.ways));
    }
    if queries.iter().sum::<usize>() == 0 {
        return Err(BpaError::InvalidParameter("episode has no queries".into()));
    }
    let mut rng = seeded(spec.seed);
    let centers = separated_centers(&mut rng, spec.ways, spec.feature_dim, spec.class_separation)?;
    let support_labels: Vec<usize> = (0..spec.ways)
        .flat_map(|c| std::iter::repeat_n(c, spec.shots))
        .collect();
    let query_labels: Vec<usize> = queries
        .iter()
        .enumerate()
        .flat_map(|(c, &q)| std::iter::repeat_n(c, q))
        .collect();
    let support = noisy_points(&mut rng, &centers, &support_labels, spec.noise_std)?;
    let query = noisy_points(&mut rng, &centers, &query_labels, spec.noise_std)?;
    Ok((support, query))
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn require_labels(fs: &FeatureSet, what: &str) -> Result<Vec<usize>> {
    fs.labels()
        .map(<[usize]>::to_vec)
        .ok_or_else(|| BpaError::InvalidParameter(format!("{what} labels are required")))
}

/// Normalizes the joint set and applies the representation.
fn embed_jointly(
    first: &FeatureSet,
    second: &FeatureSet,
    transform: Representation,
    config: &SolverConfig,
) -> Result<Array2<f64>> {
    let joint = unit_normalize(&first.concat(second)?)?;
    Ok(transform.apply(&joint, config)?.into_data())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtoOutcome {
    pub predictions: Vec<usize>,
    pub accuracy: f64,
}

/// Nearest-prototype classification over the jointly transformed episode.
/// Prototypes are per-class means of transformed support rows; distance ties
/// go to the lowest class label.
pub fn protonet_classify(
    support: &FeatureSet,
    query: &FeatureSet,
    transform: Representation,
    config: &SolverConfig,
) -> Result<ProtoOutcome> {
    let support_labels = require_labels(support, "support")?;
    let query_labels = require_labels(query, "query")?;
    let embedded = embed_jointly(support, query, transform, config)?;
    let ns = support.n();

    let mut classes = support_labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let mut prototypes = Array2::<f64>::zeros((classes.len(), embedded.ncols()));
    let mut counts = vec![0usize; classes.len()];
    for (i, label) in support_labels.iter().enumerate() {
        let c = classes.binary_search(label).expect("label collected above");
        prototypes.row_mut(c).scaled_add(1.0, &embedded.row(i));
        counts[c] += 1;
    }
    for (c, mut row) in prototypes.axis_iter_mut(Axis(0)).enumerate() {
        row.mapv_inplace(|v| v / counts[c] as f64);
    }

    let predictions: Vec<usize> = (0..query.n())
        .map(|q| {
            let row = embedded.row(ns + q);
            let mut best = (0, f64::INFINITY);
            for (c, proto) in prototypes.axis_iter(Axis(0)).enumerate() {
                let d = sq_dist(row, proto);
                if d < best.1 {
                    best = (c, d);
                }
            }
            classes[best.0]
        })
        .collect();
    let correct = predictions
        .iter()
        .zip(&query_labels)
        .filter(|(p, t)| p == t)
        .count();
    Ok(ProtoOutcome {
        accuracy: correct as f64 / query.n() as f64,
        predictions,
    })
}

/// Query and gallery sets with identities, and optional physical item ids
/// used to drop a query's own capture from its ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalInstance {
    pub query: FeatureSet,
    pub gallery: FeatureSet,
    pub query_items: Option<Vec<u64>>,
    pub gallery_items: Option<Vec<u64>>,
}

impl RetrievalInstance {
    pub fn new(query: FeatureSet, gallery: FeatureSet) -> Result<Self> {
        let q = require_labels(&query, "query")?;
        let g = require_labels(&gallery, "gallery")?;
        if let Some(missing) = q.iter().position(|id| !g.contains(id)) {
            return Err(BpaError::NoRelevant(missing));
        }
        Ok(Self {
            query,
            gallery,
            query_items: None,
            gallery_items: None,
        })
    }

    pub fn with_items(mut self, query_items: Vec<u64>, gallery_items: Vec<u64>) -> Result<Self> {
        if query_items.len() != self.query.n() {
            return Err(BpaError::LengthMismatch(query_items.len(), self.query.n()));
        }
        if gallery_items.len() != self.gallery.n() {
            return Err(BpaError::LengthMismatch(
                gallery_items.len(),
                self.gallery.n(),
            ));
        }
        self.query_items = Some(query_items);
        self.gallery_items = Some(gallery_items);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RetrievalScore {
    pub map: f64,
    pub rank1: f64,
}

/// Average precision of a ranked relevance list.
pub fn average_precision(relevant: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Ranks gallery rows per query by ascending Euclidean distance between
/// embedded rows (ties by gallery index) and scores mAP and Rank-1.
pub fn retrieval_rank(
    instance: &RetrievalInstance,
    transform: Representation,
    config: &SolverConfig,
    exclude_self: bool,
) -> Result<RetrievalScore> {
    if instance.gallery.n() == 0 {
        return Err(BpaError::TooFewRows { min: 1, got: 0 });
    }
    let q_ids = require_labels(&instance.query, "query")?;
    let g_ids = require_labels(&instance.gallery, "gallery")?;
    let embedded = embed_jointly(&instance.query, &instance.gallery, transform, config)?;
    let nq = instance.query.n();

    let mut ap_sum = 0.0;
    let mut top1 = 0usize;
    for (q, qid) in q_ids.iter().enumerate() {
        let row = embedded.row(q);
        let mut ranked: Vec<(f64, usize)> = (0..instance.gallery.n())
            .filter(|&g| {
                !exclude_self
                    || match (&instance.query_items, &instance.gallery_items) {
                        (Some(qi), Some(gi)) => qi[q] != gi[g],
                        _ => true,
                    }
            })
            .map(|g| (sq_dist(row, embedded.row(nq + g)), g))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let relevant: Vec<bool> = ranked.iter().map(|&(_, g)| g_ids[g] == *qid).collect();
        if !relevant.contains(&true) {
            return Err(BpaError::NoRelevant(q));
        }
        ap_sum += average_precision(&relevant);
        if relevant[0] {
            top1 += 1;
        }
    }
    Ok(RetrievalScore {
        map: ap_sum / nq as f64,
        rank1: top1 as f64 / nq as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSpec {
    pub identities: usize,
    pub queries_per_identity: usize,
    pub gallery_per_identity: usize,
    pub feature_dim: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for RetrievalSpec {
    fn default() -> Self {
        Self {
            identities: 20,
            queries_per_identity: 1,
            gallery_per_identity: 5,
            feature_dim: 64,
            noise_std: 0.25,
            seed: 0,
        }
    }
}

/// Synthetic identities: one random unit center each, noisy re-projected captures.
pub fn generate_retrieval(spec: &RetrievalSpec) -> Result<RetrievalInstance> {
    if spec.identities < 1 || spec.queries_per_identity < 1 || spec.gallery_per_identity < 1 {
        return Err(BpaError::InvalidParameter(
            "retrieval spec needs at least one identity, query and gallery item".into(),
        ));
    }
    if spec.feature_dim < 1 {
        return Err(BpaError::EmptyDimension);
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(BpaError::InvalidParameter(format!(
            "noise_std must be finite and >= 0, got {}",
            spec.noise_std
        )));
    }
    let mut rng = seeded(spec.seed);
    let centers = unit_rows(&mut rng, spec.identities, spec.feature_dim);
    let q_labels: Vec<usize> = (0..spec.identities)
        .flat_map(|c| std::iter::repeat_n(c, spec.queries_per_identity))
        .collect();
    let g_labels: Vec<usize> = (0..spec.identities)
        .flat_map(|c| std::iter::repeat_n(c, spec.gallery_per_identity))
        .collect();
    let query = noisy_points(&mut rng, &centers, &q_labels, spec.noise_std)?;
    let gallery = noisy_points(&mut rng, &centers, &g_labels, spec.noise_std)?;
    RetrievalInstance::new(query, gallery)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec(noise: f64, seed: u64) -> EpisodeSpec {
        EpisodeSpec {
            noise_std: noise,
            seed,
            ..EpisodeSpec::default()
        }
    }

    #[test]
    fn episode_counts_and_noiseless_queries() {
        let s = spec(0.0, 1);
        let (support, query) = generate_episode(&s).unwrap();
        assert_eq!(support.n() + query.n(), s.episode_size());
        assert_eq!(s.episode_size(), 80);
        let sl = support.labels().unwrap();
        for (q, l) in query.labels().unwrap().iter().enumerate() {
            let sup = sl.iter().position(|x| x == l).unwrap();
            assert_eq!(query.data().row(q), support.data().row(sup));
        }
    }

    #[test]
    fn episode_is_deterministic() {
        let s = EpisodeSpec {
            noise_std: 0.2,
            seed: 3,
            ..EpisodeSpec::default()
        };
        assert_eq!(generate_episode(&s).unwrap(), generate_episode(&s).unwrap());
    }

    #[test]
    fn impossible_separation_rejected() {
        let s = EpisodeSpec {
            class_separation: 1.5,
            ..spec(0.1, 0)
        };
        assert!(matches!(
            generate_episode(&s),
            Err(BpaError::SeparationInfeasible { .. })
        ));
        let s = EpisodeSpec {
            ways: 3,
            feature_dim: 1,
            class_separation: 0.5,
            ..spec(0.1, 0)
        };
        assert!(generate_episode(&s).is_err());
    }

    #[test]
    fn centers_respect_separation() {
        let mut rng = seeded(4);
        let c = separated_centers(&mut rng, 5, 8, 1.2).unwrap();
        for i in 0..5 {
            for j in 0..i {
                assert!(sq_dist(c.row(i), c.row(j)).sqrt() >= 1.2);
            }
        }
    }

    #[test]
    fn noiseless_episode_is_solved_by_every_transform() {
        let (support, query) = generate_episode(&spec(0.0, 9)).unwrap();
        for t in [
            Representation::Raw,
            Representation::Bpa,
            Representation::BpaAttn,
            Representation::Cosine,
            Representation::Softmax,
        ] {
            let out = protonet_classify(&support, &query, t, &SolverConfig::default()).unwrap();
            assert_eq!(out.accuracy, 1.0, "{t:?}");
        }
    }

    #[test]
    fn raw_path_matches_direct_prototype_oracle() {
        let s = EpisodeSpec {
            shots: 3,
            noise_std: 0.6,
            ..spec(0.6, 21)
        };
        let (support, query) = generate_episode(&s).unwrap();
        let out = protonet_classify(
            &support,
            &query,
            Representation::Raw,
            &SolverConfig::default(),
        )
        .unwrap();
        let sup = support.data();
        let sl = support.labels().unwrap();
        let mut expected = vec![];
        for q in query.data().axis_iter(Axis(0)) {
            let norm = q.dot(&q).sqrt();
            let mut best = (usize::MAX, f64::INFINITY);
            for c in 0..s.ways {
                let mut proto = vec![0.0; s.feature_dim];
                let mut cnt = 0.0;
                for (i, &l) in sl.iter().enumerate() {
                    if l == c {
                        let r = sup.row(i);
                        let rn = r.dot(&r).sqrt();
                        for k in 0..s.feature_dim {
                            proto[k] += r[k] / rn;
                        }
                        cnt += 1.0;
                    }
                }
                let d: f64 = (0..s.feature_dim)
                    .map(|k| (q[k] / norm - proto[k] / cnt).powi(2))
                    .sum();
                if d < best.1 {
                    best = (c, d);
                }
            }
            expected.push(best.0);
        }
        assert_eq!(out.predictions, expected);
    }

    #[test]
    fn prototype_ties_go_to_lowest_class() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let support = FeatureSet::with_labels(array![[0.0, 1.0], [1.0, 0.0]], vec![7, 3]).unwrap();
        let query = FeatureSet::with_labels(array![[h, h]], vec![3]).unwrap();
        let out = protonet_classify(
            &support,
            &query,
            Representation::Raw,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.predictions, vec![3]);
    }

    #[test]
    fn ap_of_hits_at_one_and_three() {
        let ap = average_precision(&[true, false, true, false]);
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((ap - 0.8333).abs() < 1e-4);
    }

    #[test]
    fn single_query_ap_through_ranking() {
        // gallery distances from the query in order: g1 (relevant), g0, g3 (relevant), g2
        let q = FeatureSet::with_labels(array![[1.0, 0.0]], vec![1]).unwrap();
        let g = FeatureSet::with_labels(
            array![[0.9, 0.3], [1.0, 0.05], [0.0, 1.0], [0.7, 0.7]],
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let inst = RetrievalInstance::new(q, g).unwrap();
        let s = retrieval_rank(
            &inst,
            Representation::Raw,
            &SolverConfig::retrieval(),
            false,
        )
        .unwrap();
        assert!((s.map - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(s.rank1, 1.0);
    }

    #[test]
    fn duplicates_in_gallery_give_perfect_rank1() {
        let inst = generate_retrieval(&RetrievalSpec {
            noise_std: 0.5,
            ..RetrievalSpec::default()
        })
        .unwrap();
        let gallery = inst.gallery.concat(&inst.query).unwrap();
        let inst = RetrievalInstance::new(inst.query.clone(), gallery).unwrap();
        let s = retrieval_rank(
            &inst,
            Representation::Raw,
            &SolverConfig::retrieval(),
            false,
        )
        .unwrap();
        assert_eq!(s.rank1, 1.0);
    }

    #[test]
    fn exclude_self_drops_the_same_item() {
        let q = FeatureSet::with_labels(array![[1.0, 0.0]], vec![0]).unwrap();
        let g = FeatureSet::with_labels(array![[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]], vec![0, 1, 0])
            .unwrap();
        let inst = RetrievalInstance::new(q, g)
            .unwrap()
            .with_items(vec![42], vec![42, 1, 2])
            .unwrap();
        let cfg = SolverConfig::retrieval();
        let kept = retrieval_rank(&inst, Representation::Raw, &cfg, false).unwrap();
        assert_eq!(kept.map, 1.0);
        let dropped = retrieval_rank(&inst, Representation::Raw, &cfg, true).unwrap();
        // only g2 is relevant now, and it ranks first
        assert_eq!(dropped.rank1, 1.0);
    }

    #[test]
    fn missing_identity_rejected() {
        let q = FeatureSet::with_labels(array![[1.0, 0.0]], vec![5]).unwrap();
        let g = FeatureSet::with_labels(array![[1.0, 0.0]], vec![0]).unwrap();
        assert_eq!(RetrievalInstance::new(q, g), Err(BpaError::NoRelevant(0)));
    }

    #[test]
    fn unbalanced_episode_runs() {
        let s = spec(0.2, 5);
        let (support, query) = generate_episode_with_queries(&s, &[1, 0, 7, 3, 2]).unwrap();
        assert_eq!(query.n(), 13);
        let out = protonet_classify(
            &support,
            &query,
            Representation::Bpa,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!((0.0..=1.0).contains(&out.accuracy));
    }

    #[test]
    fn protonet_is_invariant_to_query_order() {
        let (support, query) = generate_episode(&spec(0.3, 9)).unwrap();
        let order: Vec<usize> = (0..query.n()).rev().collect();
        let shuffled = query.select_rows(&order).unwrap();
        for t in [
            Representation::Bpa,
            Representation::BpaAttn,
            Representation::Raw,
        ] {
            let cfg = SolverConfig::default();
            let a = protonet_classify(&support, &query, t, &cfg).unwrap();
            let b = protonet_classify(&support, &shuffled, t, &cfg).unwrap();
            assert!((a.accuracy - b.accuracy).abs() <= 1e-10);
            for (i, &o) in order.iter().enumerate() {
                assert_eq!(b.predictions[i], a.predictions[o]);
            }
        }
    }

    #[test]
    fn retrieval_is_invariant_to_gallery_order() {
        let inst = generate_retrieval(&RetrievalSpec {
            noise_std: 0.6,
            seed: 4,
            ..RetrievalSpec::default()
        })
        .unwrap();
        let n = inst.gallery.n();
        let order: Vec<usize> = (0..n).map(|i| (i * 37 + 11) % n).collect();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        let shuffled = RetrievalInstance::new(
            inst.query.clone(),
            inst.gallery.select_rows(&order).unwrap(),
        )
        .unwrap();
        let cfg = SolverConfig::retrieval();
        for t in [Representation::Bpa, Representation::Raw] {
            let a = retrieval_rank(&inst, t, &cfg, false).unwrap();
            let b = retrieval_rank(&shuffled, t, &cfg, false).unwrap();
            assert!((a.map - b.map).abs() <= 1e-10);
            assert!((a.rank1 - b.rank1).abs() <= 1e-10);
        }
    }

    #[test]
    fn raw_retrieval_matches_direct_cosine_ranking() {
        let inst = generate_retrieval(&RetrievalSpec {
            noise_std: 0.8,
            seed: 12,
            ..RetrievalSpec::default()
        })
        .unwrap();
        let unit = |v: ndarray::ArrayView1<'_, f64>| &v / v.dot(&v).sqrt();
        let (q_ids, g_ids) = (inst.query.labels().unwrap(), inst.gallery.labels().unwrap());
        let mut maps = Vec::new();
        for (q, qid) in q_ids.iter().enumerate() {
            let qv = unit(inst.query.data().row(q));
            let mut order: Vec<(f64, usize)> = (0..inst.gallery.n())
                .map(|g| (-qv.dot(&unit(inst.gallery.data().row(g))), g))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let rel: Vec<bool> = order.iter().map(|&(_, g)| g_ids[g] == *qid).collect();
            maps.push(average_precision(&rel));
        }
        let expected = maps.iter().sum::<f64>() / maps.len() as f64;
        let got = retrieval_rank(
            &inst,
            Representation::Raw,
            &SolverConfig::retrieval(),
            false,
        )
        .unwrap();
        assert!((got.map - expected).abs() <= 1e-12);
    }
}
