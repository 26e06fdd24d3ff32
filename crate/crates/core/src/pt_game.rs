//! Equilibria when both players value prospects with cumulative prospect
//! theory.

use crate::cpt::{valuation_mixed, valuation_pure_i, valuation_pure_u, value_fn, PtParams, Role, TruncationConfig};
use crate::error::{Error, Result};
use crate::graph::{argmin_with_ties, NodeIdx, Path, RehandlingTime, SecurityGraph};
use crate::mdp::{all_paths_best_response_in, origin_value_closed_form, BestResponse, MixedInterdiction};
use crate::pure::{argmax_first, expected_delivery_time};
use crate::search::{pattern_search_max, SearchConfig, SearchResult, SearchSpace};

/// Everything a prospect-theoretic game needs, with the path set
/// enumerated once.
#[derive(Debug, Clone)]
pub struct PtGameSpec {
    pub graph: SecurityGraph,
    pub t_a: RehandlingTime,
    pub params_i: PtParams,
    pub params_u: PtParams,
    pub trunc: TruncationConfig,
    paths: Vec<Path>,
}

impl PtGameSpec {
    pub fn new(
        graph: SecurityGraph,
        t_a: RehandlingTime,
        params_i: PtParams,
        params_u: PtParams,
        trunc: TruncationConfig,
    ) -> Result<Self> {
        let params_i = params_i.validated()?;
        let params_u = params_u.validated()?;
        let trunc = trunc.validated()?;
        let paths = graph.enumerate_paths()?;
        Ok(Self { graph, t_a, params_i, params_u, trunc, paths })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    /// Same game with different player profiles; reuses the path set.
    pub fn with_params(&self, params_i: PtParams, params_u: PtParams) -> Result<Self> {
        Ok(Self { params_i: params_i.validated()?, params_u: params_u.validated()?, ..self.clone() })
    }

    pub fn v_i(&self, n: NodeIdx, h: &Path) -> Result<f64> {
        valuation_pure_i(&self.graph, self.t_a, &self.params_i, n, h, &self.trunc)
    }

    pub fn v_u(&self, n: NodeIdx, h: &Path) -> Result<f64> {
        valuation_pure_u(&self.graph, self.t_a, &self.params_u, n, h, &self.trunc)
    }

    pub fn xi_i(&self, x: &MixedInterdiction, h: &Path) -> Result<f64> {
        valuation_mixed(&self.params_i, Role::Interdictor, &self.graph, self.t_a, x, h, &self.trunc)
    }

    pub fn xi_u(&self, x: &MixedInterdiction, h: &Path) -> Result<f64> {
        valuation_mixed(&self.params_u, Role::Operator, &self.graph, self.t_a, x, h, &self.trunc)
    }
}

/// Operator's valuation with divergent prospects mapped to +inf.
fn finite_or_inf(v: Result<f64>) -> Result<f64> {
    match v {
        Err(Error::DivergentProspect) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Operator's reaction to an attack on `n`: index of the path minimizing
/// its valuation.
pub fn rho_pt(spec: &PtGameSpec, n: NodeIdx) -> Result<usize> {
    let values = spec.paths.iter().map(|h| finite_or_inf(spec.v_u(n, h))).collect::<Result<Vec<f64>>>()?;
    Ok(argmin_with_ties(&values).unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SePtSolution {
    pub node: NodeIdx,
    pub path: Path,
    /// Interdictor's valuation of the outcome.
    pub value_i: f64,
    /// Operator's valuation of the outcome.
    pub value_u: f64,
    pub expected_delivery_time: f64,
}

/// Pure-strategy equilibrium of the prospect-theoretic game, built from
/// the shortest path and the shortest detours around its nodes.
pub fn solve_se_pt(spec: &PtGameSpec) -> Result<SePtSolution> {
    let g = &spec.graph;
    let hs = g.shortest_path();
    let mut nodes = hs.nodes().to_vec();
    nodes.sort_unstable();

    let mut stay: Vec<(NodeIdx, f64)> = Vec::new();
    let mut leave: Vec<(NodeIdx, f64, Path)> = Vec::new();
    for n in nodes {
        let vu_stay = finite_or_inf(spec.v_u(n, &hs))?;
        match g.shortest_path_excluding(n) {
            Some(hn) if vu_stay > value_fn(&spec.params_u, Role::Operator, hn.length()) => {
                let vi = value_fn(&spec.params_i, Role::Interdictor, hn.length());
                leave.push((n, vi, hn));
            }
            _ => {
                let vi = match spec.v_i(n, &hs) {
                    Err(Error::DivergentProspect) => f64::INFINITY,
                    other => other?,
                };
                stay.push((n, vi));
            }
        }
    }
    let m1 = argmax_first(stay.iter().map(|&(n, v)| (n, v)));
    let m2 = argmax_first(leave.iter().map(|(n, v, _)| (*n, *v)));
    let (node, path, value_i) = match (m1, m2) {
        (Some((n, v1)), Some((_, v2))) if v1 > v2 => (n, hs, v1),
        (Some((n, v)), None) => (n, hs, v),
        (_, Some((n, v))) => {
            let hn = leave.into_iter().find(|(m, _, _)| *m == n).unwrap().2;
            (n, hn, v)
        }
        (None, None) => unreachable!("the origin always belongs to the stay set"),
    };
    let value_u = finite_or_inf(spec.v_u(node, &path))?;
    let expected_delivery_time = expected_delivery_time(g, spec.t_a, node, &path);
    Ok(SePtSolution { node, path, value_i, value_u, expected_delivery_time })
}

/// Operator's reaction to a mixed strategy: index of the path minimizing
/// its valuation, with that valuation.
pub fn rho_pt_mixed(spec: &PtGameSpec, x: &MixedInterdiction) -> Result<(usize, f64)> {
    let values = spec.paths.iter().map(|h| finite_or_inf(spec.xi_u(x, h))).collect::<Result<Vec<f64>>>()?;
    let i = argmin_with_ties(&values).unwrap();
    if values[i] == f64::INFINITY {
        return Err(Error::DivergentProspect);
    }
    Ok((i, values[i]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsePtSolution {
    pub x: MixedInterdiction,
    pub path_index: usize,
    pub path: Path,
    /// Interdictor's valuation at the equilibrium.
    pub xi_i: f64,
    /// Operator's valuation at the equilibrium.
    pub xi_u: f64,
    /// Objective expected delivery time at the equilibrium.
    pub expected_delivery_time: f64,
    pub search: SearchResult,
}

/// Mixed-strategy equilibrium of the prospect-theoretic game.
pub fn solve_mse_pt(spec: &PtGameSpec, config: &SearchConfig) -> Result<MsePtSolution> {
    let space = SearchSpace::for_graph(&spec.graph);
    let objective = |x: &MixedInterdiction| -> f64 {
        match rho_pt_mixed(spec, x) {
            Ok((i, _)) => spec.xi_i(x, &spec.paths[i]).unwrap_or(f64::NEG_INFINITY),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let search = if space.support.is_empty() {
        let x = MixedInterdiction::pure(spec.graph.node_count(), spec.graph.origin());
        let f = objective(&x);
        SearchResult { x_best: x, objective_best: f, evals_used: 1, converged: true }
    } else {
        pattern_search_max(objective, &space, config)?
    };
    let x = search.x_best.clone();
    let (path_index, xi_u) = rho_pt_mixed(spec, &x)?;
    let path = spec.paths[path_index].clone();
    let xi_i = spec.xi_i(&x, &path)?;
    let expected_delivery_time = origin_value_closed_form(&spec.graph, spec.t_a, &x, &path);
    Ok(MsePtSolution { x, path_index, path, xi_i, xi_u, expected_delivery_time, search })
}

/// Fully rational reply to `x`, for comparison with the prospect-theoretic one.
pub fn rational_response(spec: &PtGameSpec, x: &MixedInterdiction) -> BestResponse {
    all_paths_best_response_in(&spec.graph, spec.t_a, x, &spec.paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(params_i: PtParams, params_u: PtParams) -> PtGameSpec {
        let g = SecurityGraph::phase_connected(&[1, 2, 2, 1], |a, b| 1.0 + ((a.0 * 3 + b.0) % 4) as f64, |n| 0.15 * n.0 as f64)
            .unwrap();
        PtGameSpec::new(g, RehandlingTime::new(2.0).unwrap(), params_i, params_u, TruncationConfig::default()).unwrap()
    }

    #[test]
    fn rational_reaction_matches_pure_best_response() {
        let s = spec(PtParams::rational(), PtParams::rational());
        for n in 0..s.graph.node_count() {
            let i = rho_pt(&s, n).unwrap();
            let j = crate::pure::best_response_in(&s.graph, s.t_a, n, s.paths());
            let ei = expected_delivery_time(&s.graph, s.t_a, n, &s.paths()[i]);
            let ej = expected_delivery_time(&s.graph, s.t_a, n, &s.paths()[j]);
            assert!((ei - ej).abs() < 1e-6 * ej);
        }
    }

    #[test]
    fn rational_se_pt_matches_se() {
        let s = spec(PtParams::rational(), PtParams::rational());
        let a = solve_se_pt(&s).unwrap();
        let b = crate::pure::solve_se(&s.graph, s.t_a);
        assert!((a.expected_delivery_time - b.delivery_time).abs() < 1e-6 * b.delivery_time);
    }

    #[test]
    fn rational_mixed_reaction_matches_all_paths() {
        let s = spec(PtParams::rational(), PtParams::rational());
        let x = MixedInterdiction::new(vec![0.0, 0.3, 0.2, 0.4, 0.1, 0.0]).unwrap();
        let (i, v) = rho_pt_mixed(&s, &x).unwrap();
        let br = rational_response(&s, &x);
        assert!((v - br.value).abs() < 1e-6 * br.value);
        assert_eq!(i, br.path_index);
    }
}
