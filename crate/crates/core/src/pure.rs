//! Pure-strategy game: one attacked node against one path.

use serde::Serialize;

use crate::cpt::Prospect;
use crate::error::{Error, Result};
use crate::graph::{argmin_with_ties, NodeIdx, Path, RehandlingTime, SecurityGraph};

/// A strategy pair: the attacked node and the chosen path.
#[derive(Debug, Clone, PartialEq)]
pub struct PureStrategyPair {
    pub interdiction_node: NodeIdx,
    pub path: Path,
}

/// Delivery-time distribution for a single attacked node on the path:
/// `T_k = base_time + k * penalty_step` with probability `p^k (1-p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricProspect {
    pub base_time: f64,
    pub penalty_step: f64,
    pub retry_prob: f64,
}

impl GeometricProspect {
    /// Prospect faced when `n` is attacked and `h` is travelled. A node off
    /// the path yields a sure outcome.
    pub fn new(graph: &SecurityGraph, t_a: RehandlingTime, n: NodeIdx, h: &Path) -> Result<Self> {
        let base_time = h.length();
        match h.time_to(n) {
            None => Ok(Self { base_time, penalty_step: 0.0, retry_prob: 0.0 }),
            Some(f_n) => {
                let p = graph.attack_prob(n);
                if p >= 1.0 {
                    return Err(Error::DivergentProspect);
                }
                Ok(Self { base_time, penalty_step: f_n + t_a.get(), retry_prob: p })
            }
        }
    }

    pub fn outcome(&self, k: usize) -> f64 {
        self.base_time + k as f64 * self.penalty_step
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.retry_prob.powi(k as i32) * (1.0 - self.retry_prob)
    }

    /// Probability of at most `k` failed traversals.
    pub fn partial_mass(&self, k: usize) -> f64 {
        1.0 - self.retry_prob.powi(k as i32 + 1)
    }

    pub fn mean(&self) -> f64 {
        self.base_time + self.retry_prob / (1.0 - self.retry_prob) * self.penalty_step
    }

    /// First `terms` outcomes as a [`Prospect`]; remaining mass becomes the
    /// truncation tail.
    pub fn to_prospect(&self, terms: usize) -> Result<Prospect> {
        if self.retry_prob == 0.0 || self.penalty_step == 0.0 {
            return Prospect::new(vec![(self.base_time, 1.0)], 0.0);
        }
        let outcomes: Vec<(f64, f64)> =
            (0..terms).map(|k| (self.outcome(k), self.prob(k))).filter(|&(_, q)| q > 0.0).collect();
        let tail = self.retry_prob.powi(terms as i32);
        Prospect::new(outcomes, tail)
    }
}

/// Expected delivery time when `n` is attacked and `h` is travelled.
/// Infinite when `n` is on `h` and its attacks always succeed.
pub fn expected_delivery_time(graph: &SecurityGraph, t_a: RehandlingTime, n: NodeIdx, h: &Path) -> f64 {
    match h.time_to(n) {
        None => h.length(),
        Some(f_n) => {
            let p = graph.attack_prob(n);
            if p >= 1.0 {
                f64::INFINITY
            } else {
                p / (1.0 - p) * (f_n + t_a.get()) + h.length()
            }
        }
    }
}

/// Operator's reaction to an attack on `n`: index into `paths` of the
/// minimizer of expected delivery time.
pub fn best_response_in(graph: &SecurityGraph, t_a: RehandlingTime, n: NodeIdx, paths: &[Path]) -> usize {
    let values: Vec<f64> = paths.iter().map(|h| expected_delivery_time(graph, t_a, n, h)).collect();
    argmin_with_ties(&values).expect("validated graphs have at least one path")
}

/// Operator's reaction to an attack on `n`, scanning every path.
pub fn best_response(graph: &SecurityGraph, t_a: RehandlingTime, n: NodeIdx) -> Result<Path> {
    let paths = graph.enumerate_paths()?;
    let i = best_response_in(graph, t_a, n, &paths);
    Ok(paths.into_iter().nth(i).unwrap())
}

/// Which candidate the equilibrium construction settled on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SeBranch {
    /// Attack a node the operator keeps on the shortest path.
    StayOnShortest,
    /// Attack a node that drives the operator off the shortest path.
    ForceDeviation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeSolution {
    pub node: NodeIdx,
    pub path: Path,
    pub delivery_time: f64,
    pub branch: SeBranch,
}

/// Stackelberg equilibrium of the pure game, built from the shortest path
/// and the shortest detours around each of its nodes.
pub fn solve_se(graph: &SecurityGraph, t_a: RehandlingTime) -> SeSolution {
    let hs = graph.shortest_path();
    // (node, value if the operator stays, detour length or +inf)
    let mut stay: Vec<(NodeIdx, f64)> = Vec::new();
    let mut leave: Vec<(NodeIdx, f64, Path)> = Vec::new();
    let mut nodes: Vec<NodeIdx> = hs.nodes().to_vec();
    nodes.sort_unstable();
    for n in nodes {
        let e_stay = expected_delivery_time(graph, t_a, n, &hs);
        match graph.shortest_path_excluding(n) {
            Some(hn) if e_stay > hn.length() => leave.push((n, hn.length(), hn)),
            _ => stay.push((n, e_stay)),
        }
    }

    let n1 = argmax_first(stay.iter().map(|&(n, v)| (n, v)));
    let n2 = argmax_first(leave.iter().map(|(n, v, _)| (*n, *v)));
    match (n1, n2) {
        (Some((n, v1)), Some((_, v2))) if v1 > v2 => stay_solution(n, hs, v1),
        (Some((n, v)), None) => stay_solution(n, hs, v),
        (_, Some((n, v))) => {
            let path = leave.into_iter().find(|(m, _, _)| *m == n).unwrap().2;
            SeSolution { node: n, path, delivery_time: v, branch: SeBranch::ForceDeviation }
        }
        (None, None) => unreachable!("the origin always belongs to the stay set"),
    }
}

fn stay_solution(n: NodeIdx, hs: Path, v: f64) -> SeSolution {
    SeSolution { node: n, path: hs, delivery_time: v, branch: SeBranch::StayOnShortest }
}

/// Largest value, first in iteration order on ties.
pub(crate) fn argmax_first(items: impl Iterator<Item = (NodeIdx, f64)>) -> Option<(NodeIdx, f64)> {
    let mut best: Option<(NodeIdx, f64)> = None;
    for (n, v) in items {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((n, v));
        }
    }
    best
}
