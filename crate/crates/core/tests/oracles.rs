mod common;

use common::*;
use interdiction::cpt::{valuation_pure_i, valuation_pure_u};
use interdiction::{PtParams, Role, TruncationConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn pure_series_matches_term_by_term_prospect() {
    let trunc = TruncationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for draw in 0..100 {
        let n_nodes = rng.gen_range(3..=9);
        let g = random_dag(&mut rng, n_nodes, 0.8);
        let t_a = random_t_a(&mut rng);
        let paths = g.enumerate_paths().unwrap();
        let h = &paths[rng.gen_range(0..paths.len())];
        let n = pick_attack_node(&mut rng, &g, h);
        let params: PtParams = random_pt_params(&mut rng);
        let vi = valuation_pure_i(&g, t_a, &params, n, h, &trunc).unwrap();
        let vu = valuation_pure_u(&g, t_a, &params, n, h, &trunc).unwrap();
        let oi = pure_valuation_by_terms(&g, t_a, &params, Role::Interdictor, n, h);
        let ou = pure_valuation_by_terms(&g, t_a, &params, Role::Operator, n, h);
        assert!((vi - oi).abs() <= 1e-6 && (vu - ou).abs() <= 1e-6, "draw {draw}: I {vi} vs {oi}, U {vu} vs {ou}, params {params:?}, p {}, base {}, t_n {:?}", g.attack_prob(n), h.length(), h.time_to(n));
    }
}

#[test]
fn weighting_near_one_matches_high_precision() {
    use interdiction::cpt::prospect_value;
    use interdiction::Prospect;
    // 1 - w(gamma, 1 - eps), evaluated with 50-digit arithmetic
    for (gamma, eps, expected) in [(0.3, 1e-12, 0.000_836_839_988_466_795_8), (0.5, 1e-9, 0.000_063_242_053_393_094_37)] {
        let params = PtParams { r: 100.0, lambda: 1.0, beta_plus: 1.0, beta_minus: 1.0, gamma_plus: 1.0, gamma_minus: gamma };
        let prospect = Prospect::new(vec![(0.0, 1.0 - eps), (50.0, eps)], 0.0).unwrap();
        // both outcomes are losses: V = -100 w + -50 (1 - w)
        let v = prospect_value(&params, Role::Interdictor, &prospect).unwrap();
        let complement = (v + 100.0) / 50.0;
        assert!((complement - expected).abs() <= 1e-9 * expected, "gamma {gamma}: {complement} vs {expected}");
    }
}

#[test]
fn reference_instance_structure() {
    use interdiction::NodeId;
    let (g, _) = reference_graph();
    let paths = g.enumerate_paths().unwrap();
    assert_eq!(paths.len(), 18);
    assert_eq!(g.count_policies(), 216);
    let hs = g.shortest_path();
    assert_eq!(reference_path_number(&g, &hs), 8);
    assert_eq!(g.path_label(&hs), "(3,5,8)");
    // published length ordering: path 8 < path 11 < path 9, and those three are the shortest
    let mut by_length: Vec<usize> = (1..=18).collect();
    by_length.sort_by(|&a, &b| paths[a - 1].length().total_cmp(&paths[b - 1].length()));
    assert_eq!(&by_length[..3], &[8, 11, 9]);
    // node 8 is the riskiest, followed by 5 and then 3
    let p = |id: u32| g.attack_prob(g.index_of(NodeId(id)).unwrap());
    let mut risky: Vec<u32> = (2..=9).collect();
    risky.sort_by(|&a, &b| p(b).total_cmp(&p(a)));
    assert_eq!(&risky[..3], &[8, 5, 3]);
    // detour around node 8 equals the exhaustive scan
    let n8 = g.index_of(NodeId(8)).unwrap();
    let scan = paths.iter().filter(|h| !h.contains(n8)).map(|h| h.length()).fold(f64::INFINITY, f64::min);
    assert_eq!(g.shortest_path_excluding(n8).unwrap().length(), scan);
}

#[test]
fn simulated_histogram_matches_mixed_prospect() {
    use interdiction::cpt::build_mixed_prospect;
    use interdiction::montecarlo::{simulate_delivery, DEFAULT_STEP_CAP};
    use interdiction::{MixedInterdiction, NodeId};
    let (g, t_a) = reference_graph();
    let weights = [(NodeId(5), 0.48), (NodeId(8), 0.31), (NodeId(9), 0.21)].into_iter().collect();
    let x = MixedInterdiction::from_ids(&g, &weights).unwrap();
    let paths = g.enumerate_paths().unwrap();
    let trials = 1_000_000u64;
    for number in [8, 9, 12] {
        let h = &paths[number - 1];
        let prospect = build_mixed_prospect(&g, t_a, &x, h, &TruncationConfig::default()).unwrap();
        let sim = simulate_delivery(&g, t_a, &x, h, trials, 17, DEFAULT_STEP_CAP).unwrap();
        for bin in &sim.histogram {
            let eta = prospect
                .outcomes()
                .iter()
                .find(|o| (o.0 - bin.outcome).abs() <= 1e-6)
                .unwrap_or_else(|| panic!("path {number}: simulated outcome {} is not in the prospect", bin.outcome))
                .1;
            // the normal band is only meaningful once the expected count is sizeable
            if eta * (trials as f64) < 10.0 {
                continue;
            }
            let sigma = (eta * (1.0 - eta) / trials as f64).sqrt();
            assert!((bin.frequency - eta).abs() <= 3.0 * sigma, "path {number}, outcome {}: {} vs {eta}", bin.outcome, bin.frequency);
        }
        let mean = interdiction::mdp::origin_value_closed_form(&g, t_a, &x, h);
        assert!((sim.mean_delivery_time - mean).abs() <= 3.0 * sim.std_error);
    }
}

#[test]
fn mixed_prospect_mean_matches_closed_form() {
    use interdiction::cpt::build_mixed_prospect;
    use interdiction::mdp::origin_value_closed_form;
    let trunc = TruncationConfig::default();
    let (g, t_a) = reference_graph();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for h in g.enumerate_paths().unwrap() {
        let x = random_mixed(&mut rng, &g);
        let prospect = build_mixed_prospect(&g, t_a, &x, &h, &trunc).unwrap();
        let e = origin_value_closed_form(&g, t_a, &x, &h);
        let bound = mixed_truncation_bound(&g, t_a, &x, &h, &trunc) + 1e-9 * e;
        assert!((prospect.mean() - e).abs() <= bound, "{} vs {e}", prospect.mean());
    }
}
