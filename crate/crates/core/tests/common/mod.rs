#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use interdiction::cpt::{build_mixed_prospect, prospect_value, weight_fn};
use interdiction::graph::{EdgeSpec, GraphInstance};
use interdiction::mdp::origin_value_closed_form;
use interdiction::pure::GeometricProspect;
use interdiction::search::{pattern_search_max, solve_mse, SearchSpace};
use interdiction::{
    MixedInterdiction, NodeId, NodeIdx, Path, PtParams, RehandlingTime, Role, SearchConfig, SecurityGraph,
    TruncationConfig,
};
use proptest::test_runner::TestCaseError;
use rand::Rng;

pub fn reference_instance_path() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../instances/paper_sec6.json"))
}

pub fn reference_graph() -> (SecurityGraph, RehandlingTime) {
    let inst = GraphInstance::load(reference_instance_path()).unwrap();
    (SecurityGraph::from_instance(&inst).unwrap(), inst.rehandling().unwrap())
}

/// Path number `k` of the reference instance (1-based, enumeration order).
pub fn reference_path_number(graph: &SecurityGraph, h: &Path) -> usize {
    graph.enumerate_paths().unwrap().iter().position(|g| g == h).unwrap() + 1
}

/// Random digraph on ids 1..=n with origin 1 and destination n. A chain
/// `1 -> 2 -> .. -> n` keeps every node on some origin-destination path;
/// extra forward edges appear with `forward`, edges back toward the origin
/// (never into it) with `backward`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, forward: f64, backward: f64, p_max: f64) -> SecurityGraph {
    assert!(n >= 2);
    let mut edges = Vec::new();
    for a in 1..=n as u32 {
        for b in 1..=n as u32 {
            let keep = if b == a + 1 {
                true
            } else if b > a + 1 {
                rng.gen_bool(forward)
            } else {
                b > 1 && b < a && a < n as u32 && rng.gen_bool(backward)
            };
            if keep {
                edges.push(EdgeSpec { from: NodeId(a), to: NodeId(b), time: rng.gen_range(1.0..10.0), label: None });
            }
        }
    }
    let mut attack_prob = BTreeMap::new();
    for id in 1..=n as u32 {
        let safe = id == 1 || id == n as u32 || rng.gen_bool(0.15);
        let p = if safe { 0.0 } else { rng.gen_range(0.0..p_max) };
        attack_prob.insert(NodeId(id), p);
    }
    SecurityGraph::from_instance(&GraphInstance {
        notes: Vec::new(),
        nodes: (1..=n as u32).map(NodeId).collect(),
        origin: NodeId(1),
        destination: NodeId(n as u32),
        edges,
        attack_prob,
        rehandling_time: 0.0,
    })
    .unwrap()
}

pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p_max: f64) -> SecurityGraph {
    random_graph(rng, n, 0.35, 0.0, p_max)
}

pub fn random_t_a<R: Rng>(rng: &mut R) -> RehandlingTime {
    RehandlingTime::new(rng.gen_range(0.0..10.0)).unwrap()
}

/// Random mixed strategy over a random nonempty subset of the risky nodes;
/// falls back to the origin when nothing is risky.
pub fn random_mixed<R: Rng>(rng: &mut R, graph: &SecurityGraph) -> MixedInterdiction {
    let risky = graph.risky_nodes();
    let mut w = vec![0.0; graph.node_count()];
    for &n in &risky {
        if rng.gen_bool(0.7) {
            w[n] = -(1.0 - rng.gen::<f64>()).ln();
        }
    }
    if w.iter().all(|&v| v == 0.0) {
        let n = if risky.is_empty() { graph.origin() } else { risky[rng.gen_range(0..risky.len())] };
        w[n] = 1.0;
    }
    MixedInterdiction::new(w).unwrap()
}

pub fn random_pt_params<R: Rng>(rng: &mut R) -> PtParams {
    PtParams {
        r: rng.gen_range(5.0..60.0),
        lambda: rng.gen_range(1.0..3.0),
        beta_plus: rng.gen_range(0.3..=1.0),
        beta_minus: rng.gen_range(0.3..=1.0),
        gamma_plus: rng.gen_range(0.3..=1.0),
        gamma_minus: rng.gen_range(0.3..=1.0),
    }
}

/// Node attacked in a pure draw: usually one on `h` after the origin.
pub fn pick_attack_node<R: Rng>(rng: &mut R, graph: &SecurityGraph, h: &Path) -> NodeIdx {
    if rng.gen_bool(0.8) {
        let on = &h.nodes()[1..];
        on[rng.gen_range(0..on.len())]
    } else {
        rng.gen_range(0..graph.node_count())
    }
}

/// Term-by-term valuation of the pure prospect, independent of the
/// closed-form series. Probability weighting inflates small tail masses to
/// roughly `mass^gamma`, so the retained terms are sized on `p^(gamma K)`.
pub fn pure_valuation_by_terms(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    params: &PtParams,
    role: Role,
    n: NodeIdx,
    h: &Path,
) -> f64 {
    let g = GeometricProspect::new(graph, t_a, n, h).unwrap();
    let gamma = params.gamma_plus.min(params.gamma_minus);
    let terms = if g.retry_prob == 0.0 { 1 } else { ((1e-16f64).ln() / (gamma * g.retry_prob.ln())).ceil() as usize + 1 };
    prospect_value(params, role, &g.to_prospect(terms).unwrap()).unwrap()
}

/// Upper bound on the error of folding the truncated mass of the mixed
/// prospect onto its largest retained outcome, for the expectation.
pub fn mixed_truncation_bound(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    x: &MixedInterdiction,
    h: &Path,
    trunc: &TruncationConfig,
) -> f64 {
    let mut survive = 1.0;
    let mut max_step: f64 = 0.0;
    for (&n, &f) in h.nodes().iter().zip(h.prefix_times()).skip(1) {
        let a = x.attack_rate(graph, n);
        if a > 0.0 {
            survive *= 1.0 - a;
            max_step = max_step.max(f + t_a.get());
        }
    }
    let fail = 1.0 - survive;
    if fail == 0.0 {
        return 0.0;
    }
    let mut k_star = 0.0;
    let mut tail = fail;
    while tail > trunc.epsilon {
        k_star += 1.0;
        tail *= fail;
    }
    // conditional mean of the failure count beyond K* is K* + 1 + fail / survive
    tail * (k_star + 1.0 + fail / survive) * max_step
}

// ---- property checks shared by the proptest suite and the acceptance target

/// Every point the search evaluates, and the point it returns, lies on the
/// simplex.
pub fn check_search_iterates_on_simplex(coeffs: &[f64], curvature: f64, seed: u64, max_evals: usize) -> Result<(), TestCaseError> {
    let n = coeffs.len();
    let seen = Mutex::new(Vec::<Vec<f64>>::new());
    let space = SearchSpace { node_count: n, support: (0..n).collect(), vertex_starts: vec![0] };
    let config = SearchConfig { restarts: 3, rng_seed: seed, max_evals, ..SearchConfig::default() };
    let result = pattern_search_max(
        |x| {
            seen.lock().unwrap().push(x.as_slice().to_vec());
            x.as_slice().iter().zip(coeffs).map(|(v, c)| c * v - curvature * v * v).sum()
        },
        &space,
        &config,
    )
    .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let mut all = seen.into_inner().unwrap();
    all.push(result.x_best.as_slice().to_vec());
    for v in &all {
        let total: f64 = v.iter().sum();
        if v.iter().any(|&c| !(c >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(TestCaseError::fail(format!("off-simplex iterate {v:?}")));
        }
    }
    Ok(())
}

/// `w(0) = 0`, `w(1) = 1`, `w = id` at `gamma = 1`, and `w` increasing in
/// the probability for `gamma >= 0.3`.
pub fn check_weight_identities(gamma: f64, eta_a: f64, eta_b: f64) -> Result<(), TestCaseError> {
    if weight_fn(gamma, 0.0) != 0.0 || (weight_fn(gamma, 1.0) - 1.0).abs() > 1e-15 {
        return Err(TestCaseError::fail(format!("endpoints not fixed at gamma {gamma}")));
    }
    if (weight_fn(1.0, eta_a) - eta_a).abs() > 1e-12 {
        return Err(TestCaseError::fail(format!("w(1, {eta_a}) != {eta_a}")));
    }
    let (lo, hi) = if eta_a < eta_b { (eta_a, eta_b) } else { (eta_b, eta_a) };
    if gamma >= 0.3 && lo < hi && weight_fn(gamma, lo) > weight_fn(gamma, hi) {
        return Err(TestCaseError::fail(format!("w({gamma}, .) decreases between {lo} and {hi}")));
    }
    Ok(())
}

/// Mixed prospects carry probability one, with positive probabilities and
/// strictly increasing outcomes.
pub fn check_prospect_normalization(seed: u64) -> Result<(), TestCaseError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=7);
    let g = random_dag(&mut rng, n, 0.6);
    let t_a = random_t_a(&mut rng);
    let x = random_mixed(&mut rng, &g);
    let paths = g.enumerate_paths().unwrap();
    let h = &paths[rng.gen_range(0..paths.len())];
    let p = build_mixed_prospect(&g, t_a, &x, h, &TruncationConfig::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let mass: f64 = p.outcomes().iter().map(|o| o.1).sum::<f64>() + p.truncation_tail();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(TestCaseError::fail(format!("mass {mass}")));
    }
    if p.outcomes().iter().any(|o| !(o.1 > 0.0)) || p.outcomes().windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(TestCaseError::fail("outcomes not strictly increasing with positive mass".to_string()));
    }
    Ok(())
}

/// Moving interdiction mass onto a node of `h` from a node off `h` never
/// lowers the closed-form origin value.
pub fn check_monotone_penalty(seed: u64, shift: f64) -> Result<(), TestCaseError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=10);
    let g = random_graph(&mut rng, n, 0.4, 0.1, 0.8);
    let t_a = random_t_a(&mut rng);
    let paths = g.enumerate_paths().unwrap();
    let h = &paths[rng.gen_range(0..paths.len())];
    let x = random_mixed(&mut rng, &g);
    let on: Vec<NodeIdx> = h.nodes()[1..].iter().copied().filter(|&k| g.attack_prob(k) > 0.0).collect();
    let off: Vec<NodeIdx> = (0..g.node_count()).filter(|&k| !h.contains(k) && x.prob(k) > 0.0).collect();
    if on.is_empty() || off.is_empty() {
        return Ok(());
    }
    let to = on[rng.gen_range(0..on.len())];
    let from = off[rng.gen_range(0..off.len())];
    let mut moved = x.as_slice().to_vec();
    let d = shift * moved[from];
    moved[from] -= d;
    moved[to] += d;
    let y = MixedInterdiction::new(moved).unwrap();
    let before = origin_value_closed_form(&g, t_a, &x, h);
    let after = origin_value_closed_form(&g, t_a, &y, h);
    if after < before - 1e-12 * before.abs().max(1.0) {
        return Err(TestCaseError::fail(format!("value dropped from {before} to {after}")));
    }
    Ok(())
}

/// Solver and simulation outputs are bitwise identical on 1 and 4 threads.
pub fn check_thread_count_determinism(seed: u64) -> Result<(), TestCaseError> {
    use interdiction::montecarlo::simulate_delivery;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=8);
    let g = random_dag(&mut rng, n, 0.7);
    let t_a = random_t_a(&mut rng);
    let x = random_mixed(&mut rng, &g);
    let h = g.shortest_path();
    let config = SearchConfig { restarts: 3, max_evals: 3000, rng_seed: seed, ..SearchConfig::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mse = solve_mse(&g, t_a, &config).unwrap();
            let sim = simulate_delivery(&g, t_a, &x, &h, 20_000, seed, 10_000).unwrap();
            (mse.x, mse.expected_delivery_time.to_bits(), mse.search.evals_used, sim)
        })
    };
    let a = run(1);
    let b = run(4);
    if a != b {
        return Err(TestCaseError::fail("results depend on the thread count".to_string()));
    }
    Ok(())
}
