//! Mixed interdiction as a Markov decision process for the operator.
//!
//! States are nodes; choosing neighbour `k` from `i` lands at `k` with
//! probability `1 - x_k p_k` and sends the UAV back to the origin otherwise,
//! at an extra cost of the rehandling time.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{argmin_with_ties, NodeId, NodeIdx, Path, RehandlingTime, SecurityGraph};

/// Attack rates at or above `1 - DIVERGENCE_EPS` make the expected delivery
/// time infinite.
pub const DIVERGENCE_EPS: f64 = 1e-12;

const SIMPLEX_TOL: f64 = 1e-9;
const IMPROVEMENT_TOL: f64 = 1e-12;

/// Interdictor's mixed strategy: a probability vector over graph nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedInterdiction {
    probs: Vec<f64>,
}

impl MixedInterdiction {
    /// Builds a strategy from raw weights, renormalizing to sum one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::InvalidParameter("interdiction weights must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("interdiction weights sum to zero".into()));
        }
        Ok(Self { probs: probs.into_iter().map(|v| v / total).collect() })
    }

    /// Builds a strategy from a `node id -> weight` map; unlisted nodes get 0.
    pub fn from_ids(graph: &SecurityGraph, weights: &BTreeMap<NodeId, f64>) -> Result<Self> {
        let mut probs = vec![0.0; graph.node_count()];
        for (&id, &w) in weights {
            let n = graph
                .index_of(id)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown node {id} in interdiction strategy")))?;
            probs[n] = w;
        }
        Self::new(probs)
    }

    /// All mass on one node.
    pub fn pure(node_count: usize, n: NodeIdx) -> Self {
        let mut probs = vec![0.0; node_count];
        probs[n] = 1.0;
        Self { probs }
    }

    pub fn uniform(node_count: usize) -> Self {
        Self { probs: vec![1.0 / node_count as f64; node_count] }
    }

    /// Wraps a vector already on the simplex without renormalizing.
    pub(crate) fn from_simplex_point(probs: Vec<f64>) -> Self {
        debug_assert!(is_on_simplex(&probs));
        Self { probs }
    }

    pub fn prob(&self, n: NodeIdx) -> f64 {
        self.probs[n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability that passing `n` ends in a successful attack, `x_n p_n`.
    pub fn attack_rate(&self, graph: &SecurityGraph, n: NodeIdx) -> f64 {
        self.probs[n] * graph.attack_prob(n)
    }

    pub fn to_id_map(&self, graph: &SecurityGraph) -> BTreeMap<NodeId, f64> {
        self.probs.iter().enumerate().map(|(n, &v)| (graph.id(n), v)).collect()
    }

    pub fn support(&self) -> Vec<NodeIdx> {
        (0..self.probs.len()).filter(|&n| self.probs[n] > 0.0).collect()
    }

    pub fn is_on_simplex(&self) -> bool {
        is_on_simplex(&self.probs)
    }
}

pub(crate) fn is_on_simplex(v: &[f64]) -> bool {
    v.iter().all(|&x| x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// On-disk form of a mixed strategy: `{"5": 0.48, "8": 0.31, ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InterdictionFile(pub BTreeMap<NodeId, f64>);

/// Deterministic stationary policy: the next node chosen at each state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    next: Vec<Option<NodeIdx>>,
}

impl Policy {
    /// Policy following `h`; states off `h` take their smallest neighbour.
    pub fn from_path(graph: &SecurityGraph, h: &Path) -> Self {
        let mut next: Vec<Option<NodeIdx>> = (0..graph.node_count())
            .map(|n| {
                if n == graph.destination() {
                    None
                } else {
                    graph.neighbors(n).first().map(|&(k, _)| k)
                }
            })
            .collect();
        for w in h.nodes().windows(2) {
            next[w[0]] = Some(w[1]);
        }
        Self { next }
    }

    /// Shortest-path-tree policy: every state heads along a shortest route
    /// to the destination, smallest neighbour first among ties.
    pub fn shortest_path_tree(graph: &SecurityGraph) -> Self {
        let dist = graph.distances_to_destination(None);
        let next = (0..graph.node_count())
            .map(|n| {
                if n == graph.destination() {
                    return None;
                }
                let nbrs = graph.neighbors(n);
                let tight = nbrs.iter().find(|&&(k, t)| {
                    dist[k].is_finite() && t + dist[k] - dist[n] <= 1e-12 * dist[n].abs().max(1.0)
                });
                tight.or_else(|| nbrs.first()).map(|&(k, _)| k)
            })
            .collect();
        Self { next }
    }

    /// Builds a policy from an explicit action table.
    pub fn from_actions(graph: &SecurityGraph, next: Vec<Option<NodeIdx>>) -> Result<Self> {
        if next.len() != graph.node_count() {
            return Err(Error::InvalidParameter("policy size does not match the graph".into()));
        }
        for (i, a) in next.iter().enumerate() {
            if let Some(k) = *a {
                if graph.travel_time(i, k).is_none() {
                    return Err(Error::InvalidTransition(format!(
                        "{} is not a neighbour of {}",
                        graph.id(k),
                        graph.id(i)
                    )));
                }
            }
        }
        Ok(Self { next })
    }

    pub fn action(&self, n: NodeIdx) -> Option<NodeIdx> {
        self.next[n]
    }

    pub fn actions(&self) -> &[Option<NodeIdx>] {
        &self.next
    }

    /// The path walked from the origin, or an error if the walk revisits a
    /// node or stops before the destination.
    pub fn induced_path(&self, graph: &SecurityGraph) -> Result<Path> {
        let mut seen = vec![false; graph.node_count()];
        let mut nodes = vec![graph.origin()];
        let mut u = graph.origin();
        seen[u] = true;
        while u != graph.destination() {
            let k = self.next[u]
                .ok_or_else(|| Error::NotPathInducing(format!("no action at node {}", graph.id(u))))?;
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::NotPathInducing(format!("walk revisits node {}", graph.id(k))));
            }
            nodes.push(k);
            u = k;
        }
        graph.path(nodes)
    }
}

/// Expected remaining delivery time per state; `None` for states the
/// policy never visits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateValues {
    value: Vec<Option<f64>>,
    origin: NodeIdx,
}

impl StateValues {
    pub fn get(&self, n: NodeIdx) -> Option<f64> {
        self.value[n]
    }

    pub fn origin_value(&self) -> f64 {
        self.value[self.origin].expect("the origin is always evaluated")
    }

    pub fn as_slice(&self) -> &[Option<f64>] {
        &self.value
    }
}

/// Probability of landing at `j` after choosing neighbour `k` from `i`.
pub fn transition_prob(
    graph: &SecurityGraph,
    x: &MixedInterdiction,
    i: NodeIdx,
    k: NodeIdx,
    j: NodeIdx,
) -> Result<f64> {
    if graph.travel_time(i, k).is_none() {
        return Err(Error::InvalidTransition(format!("{} is not a neighbour of {}", graph.id(k), graph.id(i))));
    }
    let a = x.attack_rate(graph, k);
    let o = graph.origin();
    Ok(if k == o {
        if j == o { 1.0 } else { 0.0 }
    } else if j == k {
        1.0 - a
    } else if j == o {
        a
    } else {
        0.0
    })
}

/// Time spent on the move `i -> k` that ends at `j`.
pub fn step_cost(graph: &SecurityGraph, t_a: RehandlingTime, i: NodeIdx, k: NodeIdx, j: NodeIdx) -> Result<f64> {
    let t = graph.travel_time(i, k).ok_or_else(|| {
        Error::InvalidTransition(format!("{} is not a neighbour of {}", graph.id(k), graph.id(i)))
    })?;
    if j == k {
        Ok(t)
    } else if j == graph.origin() {
        Ok(t + t_a.get())
    } else {
        Err(Error::InvalidTransition(format!(
            "move ({},{}) cannot end at {}",
            graph.id(i),
            graph.id(k),
            graph.id(j)
        )))
    }
}

/// Origin value of the path as a nested product of inverse survival
/// factors, evaluated from the first interior node outward.
pub fn origin_value_closed_form(graph: &SecurityGraph, t_a: RehandlingTime, x: &MixedInterdiction, h: &Path) -> f64 {
    let v = h.nodes();
    let ta = t_a.get();
    let rate = |n: NodeIdx| x.attack_rate(graph, n);
    if v[1..].iter().any(|&n| 1.0 - rate(n) <= DIVERGENCE_EPS) {
        return f64::INFINITY;
    }
    let t = |a: usize| graph.travel_time(v[a], v[a + 1]).expect("path edges exist");
    let last = v.len() - 1;
    // g(m, n) for the first edge, then g(k, m, n) for each later edge
    let mut acc = rate(v[1]) * (t(0) + ta) / (1.0 - rate(v[1]));
    for j in 2..=last {
        let g = rate(v[j]) * (t(j - 1) + ta) + t(j - 2);
        acc = (g + acc) / (1.0 - rate(v[j]));
    }
    t(last - 1) + acc
}

/// Backward affine solve of the consecutive-value recursion along `h`.
/// Returns the origin value and the value of every node on the path.
fn evaluate_along(graph: &SecurityGraph, t_a: RehandlingTime, x: &MixedInterdiction, h: &Path) -> (f64, Vec<f64>) {
    let v = h.nodes();
    let ta = t_a.get();
    // value(v_j) = alpha_j + beta_j * value(O)
    let mut alpha = vec![0.0; v.len()];
    let mut beta = vec![0.0; v.len()];
    for j in (0..v.len() - 1).rev() {
        let a = x.attack_rate(graph, v[j + 1]);
        let t = graph.travel_time(v[j], v[j + 1]).expect("path edges exist");
        alpha[j] = t + a * ta + (1.0 - a) * alpha[j + 1];
        beta[j] = a + (1.0 - a) * beta[j + 1];
    }
    let survive = 1.0 - beta[0];
    let e_o = if survive <= DIVERGENCE_EPS { f64::INFINITY } else { alpha[0] / survive };
    let values = alpha
        .iter()
        .zip(&beta)
        .map(|(&al, &be)| if be == 0.0 { al } else { al + be * e_o })
        .collect();
    (e_o, values)
}

/// Values of the states on the path induced by `policy`.
pub fn policy_evaluate(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    x: &MixedInterdiction,
    policy: &Policy,
) -> Result<StateValues> {
    let h = policy.induced_path(graph)?;
    let (_, on_path) = evaluate_along(graph, t_a, x, &h);
    let mut value = vec![None; graph.node_count()];
    for (&n, v) in h.nodes().iter().zip(on_path) {
        value[n] = Some(v);
    }
    Ok(StateValues { value, origin: graph.origin() })
}

/// Values of every state under `policy`, given the origin value `e_o`.
/// States whose walk cycles without reaching the origin or destination
/// never finish and get +inf.
fn evaluate_all_states(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    x: &MixedInterdiction,
    policy: &Policy,
    e_o: f64,
) -> Vec<f64> {
    const UNSET: u8 = 0;
    const ACTIVE: u8 = 1;
    const DONE: u8 = 2;
    let n_nodes = graph.node_count();
    let ta = t_a.get();
    let mut value = vec![f64::INFINITY; n_nodes];
    let mut state = vec![UNSET; n_nodes];
    value[graph.destination()] = 0.0;
    state[graph.destination()] = DONE;
    value[graph.origin()] = e_o;
    state[graph.origin()] = DONE;

    for start in 0..n_nodes {
        if state[start] != UNSET {
            continue;
        }
        let mut chain = Vec::new();
        let mut u = start;
        let terminal = loop {
            if state[u] == DONE {
                break value[u];
            }
            if state[u] == ACTIVE {
                break f64::INFINITY;
            }
            state[u] = ACTIVE;
            chain.push(u);
            match policy.action(u) {
                Some(k) => u = k,
                None => break f64::INFINITY,
            }
        };
        let mut next_value = terminal;
        for &s in chain.iter().rev() {
            let v = match policy.action(s) {
                Some(k) if next_value.is_finite() => {
                    let a = x.attack_rate(graph, k);
                    let t = graph.travel_time(s, k).unwrap();
                    let restart = if a > 0.0 { a * (ta + e_o) } else { 0.0 };
                    t + restart + (1.0 - a) * next_value
                }
                _ => f64::INFINITY,
            };
            value[s] = v;
            state[s] = DONE;
            next_value = v;
        }
    }
    value
}

/// One-step lookahead cost of moving to `k` over an edge of length `t`.
fn q_value(graph: &SecurityGraph, t_a: RehandlingTime, x: &MixedInterdiction, k: NodeIdx, t: f64, values: &[f64]) -> f64 {
    let a = x.attack_rate(graph, k);
    let e_o = values[graph.origin()];
    let restart = if a > 0.0 { a * (t_a.get() + e_o) } else { 0.0 };
    let stay = if a < 1.0 { (1.0 - a) * values[k] } else { 0.0 };
    t + restart + stay
}

/// Best response found by scanning every path.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse {
    pub path_index: usize,
    pub path: Path,
    pub value: f64,
}

/// Minimizes the closed-form origin value over `paths` (lexicographic
/// tie-break).
pub fn all_paths_best_response_in(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    x: &MixedInterdiction,
    paths: &[Path],
) -> BestResponse {
    let values: Vec<f64> = if paths.len() >= 256 {
        paths.par_iter().map(|h| origin_value_closed_form(graph, t_a, x, h)).collect()
    } else {
        paths.iter().map(|h| origin_value_closed_form(graph, t_a, x, h)).collect()
    };
    let i = argmin_with_ties(&values).expect("validated graphs have at least one path");
    BestResponse { path_index: i, path: paths[i].clone(), value: values[i] }
}

/// Enumerates every path and returns the minimizer of the origin value.
pub fn all_paths_best_response(graph: &SecurityGraph, t_a: RehandlingTime, x: &MixedInterdiction) -> Result<BestResponse> {
    let paths = graph.enumerate_paths()?;
    Ok(all_paths_best_response_in(graph, t_a, x, &paths))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyIterationResult {
    pub policy: Policy,
    pub values: StateValues,
    pub path: Path,
    pub iterations: usize,
}

/// Policy iteration started from the shortest-path-tree policy. Each sweep
/// evaluates every state under the current policy and switches a state's
/// action only on a strict improvement.
pub fn policy_iteration(graph: &SecurityGraph, t_a: RehandlingTime, x: &MixedInterdiction) -> Result<PolicyIterationResult> {
    let limit = graph.count_policies().max(1);
    let mut policy = Policy::shortest_path_tree(graph);
    let mut iterations = 0usize;
    loop {
        let h = policy.induced_path(graph)?;
        let (e_o, _) = evaluate_along(graph, t_a, x, &h);
        let values = evaluate_all_states(graph, t_a, x, &policy, e_o);

        let mut changed = false;
        let mut next = policy.next.clone();
        for s in 0..graph.node_count() {
            let Some(current) = policy.next[s] else { continue };
            let t_cur = graph.travel_time(s, current).unwrap();
            let q_cur = q_value(graph, t_a, x, current, t_cur, &values);
            let mut best = (current, q_cur);
            for &(k, t) in graph.neighbors(s) {
                let q = q_value(graph, t_a, x, k, t, &values);
                if q < best.1 - IMPROVEMENT_TOL * best.1.abs().max(1.0) || (q < best.1 && !best.1.is_finite()) {
                    best = (k, q);
                }
            }
            if best.0 != current {
                next[s] = Some(best.0);
                changed = true;
            }
        }
        iterations += 1;
        if !changed {
            let values = policy_evaluate(graph, t_a, x, &policy)?;
            return Ok(PolicyIterationResult { policy, values, path: h, iterations });
        }
        if iterations as u128 >= limit {
            return Err(Error::NonTermination(limit));
        }
        let candidate = Policy { next };
        // A switch that breaks the walk from the origin is not an improvement.
        if candidate.induced_path(graph).is_err() {
            let values = policy_evaluate(graph, t_a, x, &policy)?;
            return Ok(PolicyIterationResult { policy, values, path: h, iterations });
        }
        policy = candidate;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ta(v: f64) -> RehandlingTime {
        RehandlingTime::new(v).unwrap()
    }

    fn layered() -> SecurityGraph {
        SecurityGraph::phase_connected(&[1, 3, 2, 3, 1], |a, b| 2.0 + ((a.0 * 7 + b.0 * 3) % 5) as f64, |n| 0.1 * (n.0 % 7) as f64)
            .unwrap()
    }

    #[test]
    fn transition_kernel_sums_to_one() {
        let g = layered();
        let x = MixedInterdiction::new((0..g.node_count()).map(|n| n as f64).collect()).unwrap();
        for i in 0..g.node_count() {
            for &(k, _) in g.neighbors(i) {
                let total: f64 = (0..g.node_count()).map(|j| transition_prob(&g, &x, i, k, j).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-15);
            }
        }
        assert!(transition_prob(&g, &x, 0, 9, 9).is_err());
    }

    #[test]
    fn transition_example() {
        let g = SecurityGraph::phase_connected(&[1, 1, 1], |_, _| 1.0, |_| 0.6).unwrap();
        let x = MixedInterdiction::new(vec![0.25, 0.5, 0.25]).unwrap();
        assert!((transition_prob(&g, &x, 0, 1, 1).unwrap() - 0.7).abs() < 1e-15);
        assert!((transition_prob(&g, &x, 0, 1, 0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn step_cost_example() {
        let g = SecurityGraph::phase_connected(&[1, 1, 1], |a, _| if a.0 == 1 { 4.1 } else { 1.0 }, |_| 0.6).unwrap();
        assert_eq!(step_cost(&g, ta(5.0), 0, 1, 1).unwrap(), 4.1);
        assert!((step_cost(&g, ta(5.0), 0, 1, 0).unwrap() - 9.1).abs() < 1e-12);
        assert!(step_cost(&g, ta(5.0), 0, 1, 2).is_err());
    }

    #[test]
    fn renormalizes_on_construction() {
        let x = MixedInterdiction::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(x.as_slice(), &[0.25, 0.75]);
        assert!(MixedInterdiction::new(vec![0.0, 0.0]).is_err());
        assert!(MixedInterdiction::new(vec![-1.0, 2.0]).is_err());
    }

    #[test]
    fn closed_form_reduces_to_pure_and_to_length() {
        let g = layered();
        let paths = g.enumerate_paths().unwrap();
        for h in &paths {
            let off = (0..g.node_count()).find(|&n| !h.contains(n)).unwrap();
            let x = MixedInterdiction::pure(g.node_count(), off);
            assert!((origin_value_closed_form(&g, ta(5.0), &x, h) - h.length()).abs() < 1e-12);
            for &n in h.interior() {
                let x = MixedInterdiction::pure(g.node_count(), n);
                let e = crate::pure::expected_delivery_time(&g, ta(5.0), n, h);
                assert!((origin_value_closed_form(&g, ta(5.0), &x, h) - e).abs() < 1e-9 * e);
            }
        }
    }

    #[test]
    fn closed_form_matches_recursion() {
        let g = layered();
        let x = MixedInterdiction::new((0..g.node_count()).map(|n| 1.0 + n as f64).collect()).unwrap();
        for h in g.enumerate_paths().unwrap() {
            let pol = Policy::from_path(&g, &h);
            let sv = policy_evaluate(&g, ta(3.0), &x, &pol).unwrap();
            let cf = origin_value_closed_form(&g, ta(3.0), &x, &h);
            assert!((sv.origin_value() - cf).abs() <= 1e-9 * cf.max(1.0));
            assert_eq!(sv.get(g.destination()), Some(0.0));
        }
    }

    #[test]
    fn policy_iteration_agrees_with_all_paths() {
        let g = layered();
        let x = MixedInterdiction::new((0..g.node_count()).map(|n| ((n * 5) % 3) as f64).collect()).unwrap();
        let pi = policy_iteration(&g, ta(5.0), &x).unwrap();
        let ap = all_paths_best_response(&g, ta(5.0), &x).unwrap();
        assert!((pi.values.origin_value() - ap.value).abs() <= 1e-9 * ap.value);
    }

    #[test]
    fn non_path_inducing_policy_is_rejected() {
        let g = SecurityGraph::phase_connected(&[1, 1, 1], |_, _| 1.0, |_| 0.2).unwrap();
        let pol = Policy::from_actions(&g, vec![Some(1), None, None]).unwrap();
        let x = MixedInterdiction::uniform(3);
        assert!(matches!(policy_evaluate(&g, ta(1.0), &x, &pol), Err(Error::NotPathInducing(_))));
    }
}
