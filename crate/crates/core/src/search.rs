//! Derivative-free pattern search over the interdiction simplex.
//!
//! Poll directions move mass from one support node to another, so every
//! iterate stays exactly on the simplex.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeIdx, RehandlingTime, SecurityGraph};
use crate::mdp::{all_paths_best_response_in, MixedInterdiction};
use crate::pure::solve_se;

const ACCEPT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub initial_mesh: f64,
    pub contraction_factor: f64,
    pub min_mesh: f64,
    /// Evaluation budget per start point.
    pub max_evals: usize,
    /// Number of random start points, on top of the vertex starts.
    pub restarts: usize,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { initial_mesh: 0.25, contraction_factor: 0.5, min_mesh: 1e-4, max_evals: 20_000, restarts: 8, rng_seed: 0 }
    }
}

impl SearchConfig {
    pub fn validated(self) -> Result<Self> {
        let ok = self.initial_mesh > 0.0
            && self.min_mesh > 0.0
            && self.min_mesh < self.initial_mesh
            && self.contraction_factor > 0.0
            && self.contraction_factor < 1.0
            && self.max_evals >= 1;
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidParameter(format!("inconsistent search configuration {self:?}")))
        }
    }
}

/// Where the search runs: the nodes that may carry mass and the vertices
/// that are always tried as start points.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub node_count: usize,
    pub support: Vec<NodeIdx>,
    pub vertex_starts: Vec<NodeIdx>,
}

impl SearchSpace {
    /// Interior nodes with positive attack probability, with vertex starts
    /// on the risky nodes of the shortest path.
    pub fn for_graph(graph: &SecurityGraph) -> Self {
        let support: Vec<NodeIdx> = graph.risky_nodes();
        let hs = graph.shortest_path();
        let mut vertex_starts: Vec<NodeIdx> = hs.interior().iter().copied().filter(|n| support.contains(n)).collect();
        vertex_starts.sort_unstable();
        Self { node_count: graph.node_count(), support, vertex_starts }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub x_best: MixedInterdiction,
    pub objective_best: f64,
    pub evals_used: usize,
    /// The winning run ended because the mesh fell below `min_mesh`.
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() { f64::NEG_INFINITY } else { v }
}

/// Maximizes `objective` over the simplex restricted to `space.support`.
pub fn pattern_search_max<F>(objective: F, space: &SearchSpace, config: &SearchConfig) -> Result<SearchResult>
where
    F: Fn(&MixedInterdiction) -> f64 + Sync,
{
    let config = config.validated()?;
    if space.support.is_empty() {
        return Err(Error::SearchFailed("empty search support".into()));
    }
    let eval = |v: &[f64]| sanitize(objective(&MixedInterdiction::from_simplex_point(v.to_vec())));

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    for _ in 0..config.restarts {
        let mut v = vec![0.0; space.node_count];
        // Dirichlet(1, .., 1) via normalized exponentials
        let draws: Vec<f64> = space.support.iter().map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = draws.iter().sum();
        for (&n, d) in space.support.iter().zip(draws) {
            v[n] = d / total;
        }
        starts.push(v);
    }
    for &n in &space.vertex_starts {
        let mut v = vec![0.0; space.node_count];
        v[n] = 1.0;
        starts.push(v);
    }
    if space.vertex_starts.is_empty() {
        let mut v = vec![0.0; space.node_count];
        v[space.support[0]] = 1.0;
        starts.push(v);
    }

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut evals_used = 0;
    for start in starts {
        let (x, f, evals, converged) = poll_from(&eval, start, &space.support, &config);
        evals_used += evals;
        if best.as_ref().is_none_or(|b| f > b.1) {
            best = Some((x, f, converged));
        }
    }
    let (x, f, converged) = best.unwrap();
    if f == f64::NEG_INFINITY {
        return Err(Error::SearchFailed("objective is -inf at every evaluated point".into()));
    }
    Ok(SearchResult { x_best: MixedInterdiction::from_simplex_point(x), objective_best: f, evals_used, converged })
}

fn poll_from<E>(eval: &E, mut x: Vec<f64>, support: &[NodeIdx], config: &SearchConfig) -> (Vec<f64>, f64, usize, bool)
where
    E: Fn(&[f64]) -> f64 + Sync,
{
    let mut f = eval(&x);
    let mut evals = 1;
    let mut mesh = config.initial_mesh;
    loop {
        if mesh < config.min_mesh {
            return (x, f, evals, true);
        }
        let polls = poll_points(&x, support, mesh);
        if polls.is_empty() || evals + polls.len() > config.max_evals {
            return (x, f, evals, false);
        }
        let values: Vec<f64> = polls.par_iter().map(|y| eval(y)).collect();
        evals += polls.len();
        let mut pick: Option<usize> = None;
        for (i, &v) in values.iter().enumerate() {
            if pick.is_none_or(|j| v > values[j]) {
                pick = Some(i);
            }
        }
        let j = pick.unwrap();
        let improves = values[j] > f + ACCEPT_TOL * f.abs().max(1.0) || (f == f64::NEG_INFINITY && values[j] > f);
        if improves {
            f = values[j];
            x = polls.into_iter().nth(j).unwrap();
        } else {
            mesh *= config.contraction_factor;
        }
    }
}

/// Mass transfers `a -> b` of size `min(mesh, x_a)` over ordered support pairs.
fn poll_points(x: &[f64], support: &[NodeIdx], mesh: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for &a in support {
        if x[a] <= 0.0 {
            continue;
        }
        let step = mesh.min(x[a]);
        for &b in support {
            if a == b {
                continue;
            }
            let mut y = x.to_vec();
            if step == x[a] {
                y[a] = 0.0;
                y[b] += step;
            } else {
                y[a] -= step;
                y[b] += step;
            }
            out.push(y);
        }
    }
    out
}

/// Rational mixed-strategy equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct MseSolution {
    pub x: MixedInterdiction,
    pub path_index: usize,
    pub path: crate::graph::Path,
    pub expected_delivery_time: f64,
    pub search: SearchResult,
}

/// Searches for the interdiction strategy that maximizes the operator's
/// best-response expected delivery time.
pub fn solve_mse(graph: &SecurityGraph, t_a: RehandlingTime, config: &SearchConfig) -> Result<MseSolution> {
    let paths = graph.enumerate_paths()?;
    let space = SearchSpace::for_graph(graph);
    if space.support.is_empty() {
        // Nothing can be attacked: every strategy is equivalent.
        let x = MixedInterdiction::pure(graph.node_count(), solve_se(graph, t_a).node);
        let br = all_paths_best_response_in(graph, t_a, &x, &paths);
        let search = SearchResult { x_best: x.clone(), objective_best: br.value, evals_used: 1, converged: true };
        return Ok(MseSolution { x, path_index: br.path_index, path: br.path, expected_delivery_time: br.value, search });
    }
    let search = pattern_search_max(|x| all_paths_best_response_in(graph, t_a, x, &paths).value, &space, config)?;
    let br = all_paths_best_response_in(graph, t_a, &search.x_best, &paths);
    Ok(MseSolution {
        x: search.x_best.clone(),
        path_index: br.path_index,
        path: br.path,
        expected_delivery_time: br.value,
        search,
    })
}
