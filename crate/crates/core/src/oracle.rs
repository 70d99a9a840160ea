//! Exact solutions of the unregularized self-matching problem.
//!
//! Minimizing `<D, W>` over doubly-stochastic matrices with a zero diagonal
//! has an integral optimum (the constraints form a bipartite incidence
//! matrix), so the answer is a minimum-cost derangement. Two independent
//! routes find it: brute-force enumeration for small `n`, and min-cost
//! max-flow on the source / left / right / sink network.
//!
//! Both routes optimize the same integer objective, `round(d_ij * 2^32)`,
//! so their costs agree exactly even when float sums would not.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::affinity::CostMatrix;
use crate::error::{BpaError, Result};

pub const MAX_ENUMERATION_N: usize = 9;
pub const MAX_FLOW_N: usize = 4096;
const COST_SCALE: f64 = 4_294_967_296.0; // 2^32

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactMethod {
    DerangementEnum,
    MinCostFlow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    /// `perm[i]` is the partner of row `i`; never `i` itself.
    pub perm: Vec<usize>,
    /// `<D, plan>` in floating point.
    pub cost: f64,
    /// The optimized objective: sum of `round(d_ij * 2^32)`.
    pub scaled_cost: i64,
    pub method: ExactMethod,
    /// Flow pushed from source to sink (min-cost-flow route only; `n` otherwise).
    pub flow: usize,
}

impl ExactSolution {
    /// The 0/1 permutation matrix of the derangement.
    pub fn plan(&self) -> Array2<f64> {
        let n = self.perm.len();
        let mut p = Array2::zeros((n, n));
        for (i, &j) in self.perm.iter().enumerate() {
            p[[i, j]] = 1.0;
        }
        p
    }
}

fn scaled(d: f64) -> i64 {
    (d * COST_SCALE).round() as i64
}

/// Frobenius product `sum_ij d_ij w_ij`, skipping the (masked) diagonal.
pub fn plan_cost(cost: &CostMatrix, plan: ArrayView2<'_, f64>) -> Result<f64> {
    let n = cost.n();
    if plan.dim() != (n, n) {
        return Err(BpaError::ShapeMismatch {
            expected: (n, n),
            got: plan.dim(),
        });
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += cost.off_diagonal(i, j) * plan[[i, j]];
            }
        }
    }
    Ok(total)
}

pub fn exact_plan(cost: &CostMatrix, method: ExactMethod) -> Result<ExactSolution> {
    let n = cost.n();
    if n < 2 {
        return Err(BpaError::TooFewRows { min: 2, got: n });
    }
    let weights: Vec<Vec<i64>> = (0..n)
        .map(|i| (0..n).map(|j| scaled(cost.off_diagonal(i, j))).collect())
        .collect();
    let (perm, flow) = match method {
        ExactMethod::DerangementEnum => {
            if n > MAX_ENUMERATION_N {
                return Err(BpaError::TooLarge(n));
            }
            (best_derangement(&weights), n)
        }
        ExactMethod::MinCostFlow => {
            if n > MAX_FLOW_N {
                return Err(BpaError::TooLarge(n));
            }
            matching_by_flow(&weights)
        }
    };
    let scaled_cost = perm.iter().enumerate().map(|(i, &j)| weights[i][j]).sum();
    let cost_f = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| cost.off_diagonal(i, j))
        .sum();
    Ok(ExactSolution {
        perm,
        cost: cost_f,
        scaled_cost,
        method,
        flow,
    })
}

/// Depth-first enumeration in lexicographic order; keeps the first minimum,
/// which is the lexicographically smallest optimal derangement.
fn best_derangement(w: &[Vec<i64>]) -> Vec<usize> {
    struct Search<'a> {
        w: &'a [Vec<i64>],
        used: Vec<bool>,
        current: Vec<usize>,
        best: Option<(i64, Vec<usize>)>,
    }
    impl Search<'_> {
        fn go(&mut self, row: usize, acc: i64) {
            let n = self.w.len();
            if row == n {
                if self.best.as_ref().is_none_or(|(b, _)| acc < *b) {
                    self.best = Some((acc, self.current.clone()));
                }
                return;
            }
            for col in 0..n {
                if col == row || self.used[col] {
                    continue;
                }
                self.used[col] = true;
                self.current.push(col);
                self.go(row + 1, acc + self.w[row][col]);
                self.current.pop();
                self.used[col] = false;
            }
        }
    }
    let n = w.len();
    let mut s = Search {
        w,
        used: vec![false; n],
        current: Vec::with_capacity(n),
        best: None,
    };
    s.go(0, 0);
    s.best.expect("a derangement exists for n >= 2").1
}

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    cap: i64,
    cost: i64,
}

/// Residual network with successive shortest augmenting paths (Dijkstra on
/// reduced costs).
struct FlowNetwork {
    adj: Vec<Vec<Edge>>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: i64) {
        let rev_from = self.adj[to].len();
        let rev_to = self.adj[from].len();
        self.adj[from].push(Edge {
            to,
            rev: rev_from,
            cap,
            cost,
        });
        self.adj[to].push(Edge {
            to: from,
            rev: rev_to,
            cap: 0,
            cost: -cost,
        });
    }

    /// Pushes as much flow as possible at minimum cost; returns (flow, cost).
    fn min_cost_max_flow(&mut self, source: usize, sink: usize) -> (i64, i64) {
        let nodes = self.adj.len();
        // All original costs are nonnegative, so zero potentials are valid.
        let mut potential = vec![0i64; nodes];
        let mut flow = 0;
        let mut total = 0;
        loop {
            let mut dist = vec![i64::MAX; nodes];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes];
            dist[source] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0i64, source)));
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for (ei, e) in self.adj[u].iter().enumerate() {
                    if e.cap <= 0 {
                        continue;
                    }
                    let nd = d + e.cost + potential[u] - potential[e.to];
                    if nd < dist[e.to] {
                        dist[e.to] = nd;
                        prev[e.to] = Some((u, ei));
                        heap.push(Reverse((nd, e.to)));
                    }
                }
            }
            if dist[sink] == i64::MAX {
                break;
            }
            for v in 0..nodes {
                if dist[v] != i64::MAX {
                    potential[v] += dist[v];
                }
            }
            let mut push = i64::MAX;
            let mut v = sink;
            while let Some((u, ei)) = prev[v] {
                push = push.min(self.adj[u][ei].cap);
                v = u;
            }
            let mut v = sink;
            while let Some((u, ei)) = prev[v] {
                let rev = self.adj[u][ei].rev;
                self.adj[u][ei].cap -= push;
                self.adj[v][rev].cap += push;
                total += push * self.adj[u][ei].cost;
                v = u;
            }
            flow += push;
        }
        (flow, total)
    }
}

/// Source -> left_i (cost 0) -> right_j (cost d_ij, i != j) -> sink (cost 0),
/// all capacities 1.
fn matching_by_flow(w: &[Vec<i64>]) -> (Vec<usize>, usize) {
    let n = w.len();
    let source = 2 * n;
    let sink = 2 * n + 1;
    let mut net = FlowNetwork::new(2 * n + 2);
    for i in 0..n {
        net.add_edge(source, i, 1, 0);
        net.add_edge(n + i, sink, 1, 0);
    }
    for (i, row) in w.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if i != j {
                net.add_edge(i, n + j, 1, c);
            }
        }
    }
    let (flow, _) = net.min_cost_max_flow(source, sink);
    let mut perm = vec![usize::MAX; n];
    for (i, slot) in perm.iter_mut().enumerate() {
        for e in &net.adj[i] {
            if e.to >= n && e.to < 2 * n && e.cap == 0 {
                *slot = e.to - n;
            }
        }
    }
    (perm, flow as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{pairwise_cost, unit_normalize};
    use crate::testutil::random_features;
    use ndarray::array;

    fn random_cost(n: usize, seed: u64) -> CostMatrix {
        pairwise_cost(&unit_normalize(&random_features(n, 3, seed)).unwrap()).unwrap()
    }

    #[test]
    fn two_points_swap() {
        let c = CostMatrix::from_values(array![[0.0, 1.25], [1.25, 0.0]]).unwrap();
        for m in [ExactMethod::DerangementEnum, ExactMethod::MinCostFlow] {
            let s = exact_plan(&c, m).unwrap();
            assert_eq!(s.perm, vec![1, 0]);
            assert_eq!(s.cost, 2.5);
            assert_eq!(s.plan(), array![[0.0, 1.0], [1.0, 0.0]]);
        }
    }

    #[test]
    fn three_points_pick_cheaper_cycle() {
        // 0->1->2->0 costs 1 + 5 + 3; 0->2->1->0 costs 3 + 5 + 1: both 9 with a
        // symmetric cost, so tie-break picks the lexicographically smaller one.
        let c = CostMatrix::from_values(array![[0.0, 1.0, 3.0], [1.0, 0.0, 5.0], [3.0, 5.0, 0.0]])
            .unwrap();
        let s = exact_plan(&c, ExactMethod::DerangementEnum).unwrap();
        assert_eq!(s.perm, vec![1, 2, 0]);
        assert_eq!(s.cost, 9.0);
    }

    #[test]
    fn enumeration_and_flow_agree() {
        for seed in 0..30 {
            let n = 2 + (seed as usize % 7);
            let c = random_cost(n, seed);
            let a = exact_plan(&c, ExactMethod::DerangementEnum).unwrap();
            let b = exact_plan(&c, ExactMethod::MinCostFlow).unwrap();
            assert_eq!(a.scaled_cost, b.scaled_cost, "seed {seed}");
            assert_eq!(b.flow, n);
            assert!(b.perm.iter().enumerate().all(|(i, &j)| i != j));
        }
    }

    #[test]
    fn enumeration_limit() {
        let c = random_cost(10, 1);
        assert_eq!(
            exact_plan(&c, ExactMethod::DerangementEnum),
            Err(BpaError::TooLarge(10))
        );
        assert!(exact_plan(&c, ExactMethod::MinCostFlow).is_ok());
    }

    #[test]
    fn plan_cost_cases() {
        let c = random_cost(6, 4);
        assert_eq!(plan_cost(&c, Array2::zeros((6, 6)).view()).unwrap(), 0.0);
        let two = CostMatrix::from_values(array![[0.0, 0.7], [0.7, 0.0]]).unwrap();
        let swap = array![[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(plan_cost(&two, swap.view()).unwrap(), 1.4);
        assert!(matches!(
            plan_cost(&c, Array2::zeros((5, 6)).view()),
            Err(BpaError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn plan_cost_matches_double_loop() {
        let c = random_cost(6, 12);
        let w = crate::rng::gaussian_matrix(&mut crate::rng::seeded(3), 6, 6).mapv(f64::abs);
        let mut expect = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    expect += c.values()[[i, j]] * w[[i, j]];
                }
            }
        }
        assert!((plan_cost(&c, w.view()).unwrap() - expect).abs() < 1e-12);
    }
}
