//! Cumulative prospect theory: value and weighting functions, rank-dependent
//! decision weights, and the valuations of the pure and mixed games.
//!
//! Both players look at the same delivery time with opposite preferences.
//! The interdictor ([`Role::Interdictor`]) likes long delivery times, so
//! outcomes above its reference point are gains. The operator
//! ([`Role::Operator`]) minimizes its valuation; outcomes above its
//! reference point are losses and carry a positive sign.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeIdx, Path, RehandlingTime, SecurityGraph};
use crate::mdp::{MixedInterdiction, DIVERGENCE_EPS};

const MERGE_REL_TOL: f64 = 1e-9;

/// A player's prospect-theoretic profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtParams {
    /// Reference delivery time.
    #[serde(rename = "R")]
    pub r: f64,
    pub lambda: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

impl PtParams {
    pub fn new(r: f64, lambda: f64, beta: f64, gamma: f64) -> Result<Self> {
        Self { r, lambda, beta_plus: beta, beta_minus: beta, gamma_plus: gamma, gamma_minus: gamma }.validated()
    }

    /// Risk-neutral profile under which every valuation is an expectation.
    pub fn rational() -> Self {
        Self { r: 0.0, lambda: 1.0, beta_plus: 1.0, beta_minus: 1.0, gamma_plus: 1.0, gamma_minus: 1.0 }
    }

    pub fn validated(self) -> Result<Self> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !self.r.is_finite() {
            return Err(Error::InvalidParameter(format!("reference point must be finite, got {}", self.r)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        for (name, v) in [
            ("beta_plus", self.beta_plus),
            ("beta_minus", self.beta_minus),
            ("gamma_plus", self.gamma_plus),
            ("gamma_minus", self.gamma_minus),
        ] {
            if !unit(v) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0,1], got {v}")));
            }
        }
        Ok(self)
    }

    pub fn is_rational(&self) -> bool {
        *self == Self::rational()
    }
}

impl Default for PtParams {
    fn default() -> Self {
        Self { r: 20.0, lambda: 2.5, beta_plus: 0.6, beta_minus: 0.6, gamma_plus: 0.5, gamma_minus: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Maximizer: prefers longer delivery times.
    Interdictor,
    /// Minimizer: prefers shorter delivery times.
    Operator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub epsilon: f64,
    pub k_max: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { epsilon: 1e-8, k_max: 1000 }
    }
}

impl TruncationConfig {
    pub fn validated(self) -> Result<Self> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) || self.k_max == 0 {
            return Err(Error::InvalidParameter(format!(
                "truncation needs epsilon in (0,1) and k_max >= 1, got {} / {}",
                self.epsilon, self.k_max
            )));
        }
        Ok(self)
    }
}

#[inline]
fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 { x } else { x.powf(e) }
}

/// Subjective value of delivery time `phi`.
pub fn value_fn(params: &PtParams, role: Role, phi: f64) -> f64 {
    let d = phi - params.r;
    match role {
        Role::Interdictor => {
            if d >= 0.0 {
                pow(d, params.beta_plus)
            } else {
                -params.lambda * pow(-d, params.beta_minus)
            }
        }
        Role::Operator => {
            if d > 0.0 {
                params.lambda * pow(d, params.beta_minus)
            } else {
                -pow(-d, params.beta_plus)
            }
        }
    }
}

/// Inverse-S probability weighting with rationality `gamma`.
pub fn weight_fn(gamma: f64, eta: f64) -> f64 {
    weight_split(gamma, eta, 1.0 - eta)
}

/// `weight_fn` with the complementary mass `rest = 1 - eta` supplied by the
/// caller. Near `eta = 1` the weight is very sensitive to `rest` when
/// `gamma` is small, so `rest` should come from the masses themselves rather
/// than from a rounded `eta`.
fn weight_split(gamma: f64, eta: f64, rest: f64) -> f64 {
    if eta <= 0.0 {
        return 0.0;
    }
    if rest <= 0.0 {
        return 1.0;
    }
    if gamma == 1.0 {
        return eta;
    }
    let a = eta.powf(gamma);
    let b = rest.powf(gamma);
    a / (a + b).powf(1.0 / gamma)
}

/// Ranked list of distinct delivery-time outcomes. Mass lost to truncation
/// is kept separately in `truncation_tail`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prospect {
    outcomes: Vec<(f64, f64)>,
    truncation_tail: f64,
}

impl Prospect {
    /// Sorts, merges equal outcomes and checks that the mass adds up to one.
    pub fn new(mut outcomes: Vec<(f64, f64)>, truncation_tail: f64) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyProspect);
        }
        if outcomes.iter().any(|&(phi, q)| phi.is_nan() || !(q > 0.0)) || !(truncation_tail >= 0.0) {
            return Err(Error::InvalidParameter("prospect probabilities must be positive".into()));
        }
        outcomes.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let merged = merge_sorted(outcomes);
        let total: f64 = merged.iter().map(|o| o.1).sum::<f64>() + truncation_tail;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("prospect mass sums to {total}, not 1")));
        }
        Ok(Self { outcomes: merged, truncation_tail })
    }

    pub fn sure(phi: f64) -> Self {
        Self { outcomes: vec![(phi, 1.0)], truncation_tail: 0.0 }
    }

    pub fn outcomes(&self) -> &[(f64, f64)] {
        &self.outcomes
    }

    pub fn truncation_tail(&self) -> f64 {
        self.truncation_tail
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn mean(&self) -> f64 {
        let n = self.outcomes.len();
        self.outcomes
            .iter()
            .enumerate()
            .map(|(i, &(phi, q))| phi * if i + 1 == n { q + self.truncation_tail } else { q })
            .sum()
    }
}

fn merge_sorted(outcomes: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(outcomes.len());
    for (phi, q) in outcomes {
        match merged.last_mut() {
            Some(last) if (phi - last.0).abs() <= MERGE_REL_TOL * phi.abs().max(1.0) => last.1 += q,
            _ => merged.push((phi, q)),
        }
    }
    merged
}

/// Rank-dependent valuation of a prospect. The truncation tail is folded
/// into the largest outcome.
pub fn prospect_value(params: &PtParams, role: Role, prospect: &Prospect) -> Result<f64> {
    let outs = prospect.outcomes();
    if outs.is_empty() {
        return Err(Error::EmptyProspect);
    }
    let n = outs.len();
    let prob = |i: usize| if i + 1 == n { outs[i].1 + prospect.truncation_tail } else { outs[i].1 };
    let values: Vec<f64> = outs.iter().map(|&(phi, _)| value_fn(params, role, phi)).collect();
    // Large outcomes are gains for the interdictor and losses for the operator.
    let high_is_gain = role == Role::Interdictor;
    let is_high = |i: usize| if high_is_gain { values[i] >= 0.0 } else { values[i] > 0.0 };
    let (g_high, g_low) = if high_is_gain {
        (params.gamma_plus, params.gamma_minus)
    } else {
        (params.gamma_minus, params.gamma_plus)
    };

    // below[i]: mass of outcomes 0..i; above[i]: mass of outcomes i..n
    let mut below = vec![0.0; n + 1];
    let mut above = vec![0.0; n + 1];
    for i in 0..n {
        below[i + 1] = below[i] + prob(i);
    }
    for i in (0..n).rev() {
        above[i] = above[i + 1] + prob(i);
    }

    let split = (0..n).find(|&i| is_high(i)).unwrap_or(n);
    let mut total = 0.0;
    // High side, cumulated from the top outcome down.
    let mut w_prev = 0.0;
    for i in (split..n).rev() {
        let w = weight_split(g_high, above[i], below[i]);
        total += values[i] * (w - w_prev);
        w_prev = w;
    }
    // Low side, cumulated from the bottom outcome up.
    let mut w_prev = 0.0;
    for i in 0..split {
        let w = weight_split(g_low, below[i + 1], above[i + 1]);
        total += values[i] * (w - w_prev);
        w_prev = w;
    }
    Ok(total)
}

/// Number of retained terms and the bound on the neglected tail for the
/// infinite side of a single-node series.
fn series_terms(a: f64, c: f64, p: f64, gamma: f64, scale: f64, trunc: &TruncationConfig, min_terms: usize) -> Result<usize> {
    let r = p.powf(gamma);
    let bound = |k: usize| {
        // sum over i > k of scale * (|a| + 1 + i c) r^i, using w(eta) <= eta^gamma
        let rk = r.powi(k as i32 + 1);
        let one_minus = 1.0 - r;
        scale * ((a.abs() + 1.0) * rk / one_minus + c * rk * ((k + 1) as f64 / one_minus + r / (one_minus * one_minus)))
    };
    let mut k = min_terms;
    while bound(k) >= trunc.epsilon {
        if k >= trunc.k_max {
            return Err(Error::TruncationInsufficient { tail: bound(k), k_max: trunc.k_max });
        }
        k += 1;
    }
    Ok(k)
}

/// Single-node series valuation with `terms` retained terms on the infinite
/// side (indices `0..=terms`).
fn single_node_series(params: &PtParams, role: Role, base: f64, step: f64, p: f64, terms: usize) -> f64 {
    let delta = |i: usize| base + i as f64 * step - params.r;
    let pk = |i: usize| p.powi(i as i32);
    let mut total = 0.0;
    match role {
        Role::Interdictor => {
            let (gm, gp) = (params.gamma_minus, params.gamma_plus);
            for i in 0..=terms {
                let d = delta(i);
                if d < 0.0 {
                    let w = weight_split(gm, 1.0 - pk(i + 1), pk(i + 1)) - weight_split(gm, 1.0 - pk(i), pk(i));
                    total += -params.lambda * pow(-d, params.beta_minus) * w;
                } else {
                    let w = weight_fn(gp, pk(i)) - weight_fn(gp, pk(i + 1));
                    total += pow(d, params.beta_plus) * w;
                }
            }
        }
        Role::Operator => {
            let (gm, gp) = (params.gamma_minus, params.gamma_plus);
            for i in 0..=terms {
                let d = delta(i);
                if d <= 0.0 {
                    let w = weight_split(gp, 1.0 - pk(i + 1), pk(i + 1)) - weight_split(gp, 1.0 - pk(i), pk(i));
                    total += -pow(-d, params.beta_plus) * w;
                } else {
                    let w = weight_fn(gm, pk(i)) - weight_fn(gm, pk(i + 1));
                    total += params.lambda * pow(d, params.beta_minus) * w;
                }
            }
        }
    }
    total
}

/// Index of the last outcome on the finite (low) side of the series.
fn low_side_len(base: f64, step: f64, r: f64) -> usize {
    if base >= r {
        0
    } else {
        ((r - base) / step).ceil() as usize + 1
    }
}

/// Pure-game valuation with an explicit number of retained terms. Mainly
/// useful for convergence checks.
pub fn valuation_pure_with_terms(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    params: &PtParams,
    role: Role,
    n: NodeIdx,
    h: &Path,
    terms: usize,
) -> Result<f64> {
    match h.time_to(n) {
        None => Ok(value_fn(params, role, h.length())),
        Some(f_n) => {
            let p = graph.attack_prob(n);
            if p >= 1.0 {
                return Err(Error::DivergentProspect);
            }
            if p == 0.0 {
                return Ok(value_fn(params, role, h.length()));
            }
            Ok(single_node_series(params, role, h.length(), f_n + t_a.get(), p, terms))
        }
    }
}

/// Number of terms the pure-game series keeps for `(n, h)`.
pub fn pure_series_terms(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    params: &PtParams,
    role: Role,
    n: NodeIdx,
    h: &Path,
    trunc: &TruncationConfig,
) -> Result<usize> {
    let Some(f_n) = h.time_to(n) else { return Ok(0) };
    let p = graph.attack_prob(n);
    if p >= 1.0 {
        return Err(Error::DivergentProspect);
    }
    if p == 0.0 {
        return Ok(0);
    }
    let base = h.length();
    let step = f_n + t_a.get();
    let (gamma, scale) = match role {
        Role::Interdictor => (params.gamma_plus, 1.0),
        Role::Operator => (params.gamma_minus, params.lambda),
    };
    let a = base - params.r;
    series_terms(a, step, p, gamma, scale, trunc, low_side_len(base, step, params.r))
}

fn valuation_pure(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    params: &PtParams,
    role: Role,
    n: NodeIdx,
    h: &Path,
    trunc: &TruncationConfig,
) -> Result<f64> {
    let terms = pure_series_terms(graph, t_a, params, role, n, h, trunc)?;
    valuation_pure_with_terms(graph, t_a, params, role, n, h, terms)
}

/// Interdictor's valuation of attacking `n` while the operator takes `h`.
pub fn valuation_pure_i(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    params: &PtParams,
    n: NodeIdx,
    h: &Path,
    trunc: &TruncationConfig,
) -> Result<f64> {
    valuation_pure(graph, t_a, params, Role::Interdictor, n, h, trunc)
}

/// Operator's valuation of taking `h` while `n` is attacked.
pub fn valuation_pure_u(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    params: &PtParams,
    n: NodeIdx,
    h: &Path,
    trunc: &TruncationConfig,
) -> Result<f64> {
    valuation_pure(graph, t_a, params, Role::Operator, n, h, trunc)
}

/// Delivery-time prospect of path `h` under the mixed strategy `x`.
///
/// Every traversal attempt either completes, with probability
/// `s = prod (1 - a_i)`, or fails at the i-th attacked node with probability
/// `xi_i = prod_{r<i} (1 - a_r) * a_i`. After `K` failures split as
/// `(k_1, .., k_m)` the probability is the negative multinomial
/// `s * K! / prod k_i! * prod xi_i^k_i`. Failure totals are enumerated up to
/// the smallest `K` whose remaining mass `(1 - s)^(K+1)` is below epsilon.
pub fn build_mixed_prospect(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    x: &MixedInterdiction,
    h: &Path,
    trunc: &TruncationConfig,
) -> Result<Prospect> {
    let base = h.length();
    let mut xi = Vec::new();
    let mut step = Vec::new();
    let mut survive = 1.0;
    for (&n, &f_n) in h.nodes().iter().zip(h.prefix_times()).skip(1) {
        let a = x.attack_rate(graph, n);
        if a > 0.0 {
            xi.push(survive * a);
            step.push(f_n + t_a.get());
            survive *= 1.0 - a;
        }
    }
    if xi.is_empty() {
        return Ok(Prospect::sure(base));
    }
    if survive <= DIVERGENCE_EPS {
        return Err(Error::DivergentProspect);
    }
    let fail = 1.0 - survive;
    let mut k_star = 0usize;
    let mut tail = fail;
    while tail > trunc.epsilon {
        if k_star >= trunc.k_max {
            return Err(Error::TruncationInsufficient { tail, k_max: trunc.k_max });
        }
        k_star += 1;
        tail *= fail;
    }

    let mut outcomes = Vec::new();
    enumerate_counts(&xi, &step, 0, k_star, 0, survive, base, &mut outcomes);
    let mass: f64 = outcomes.iter().map(|o| o.1).sum();
    let tail = (1.0 - mass).max(0.0);
    Prospect::new(outcomes, tail)
}

/// Depth-first enumeration of failure counts; `used` failures are already
/// assigned to earlier nodes, and `prob` carries the running product of
/// binomial factors and powers of `xi`.
#[allow(clippy::too_many_arguments)]
fn enumerate_counts(
    xi: &[f64],
    step: &[f64],
    i: usize,
    budget: usize,
    used: usize,
    prob: f64,
    time: f64,
    out: &mut Vec<(f64, f64)>,
) {
    if i == xi.len() {
        if prob > 0.0 {
            out.push((time, prob));
        }
        return;
    }
    let mut factor = prob;
    for k in 0..=budget {
        if k > 0 {
            // C(used + k, k) xi^k from C(used + k - 1, k - 1) xi^(k-1)
            factor *= (used + k) as f64 / k as f64 * xi[i];
            if factor == 0.0 {
                break;
            }
        }
        enumerate_counts(xi, step, i + 1, budget - k, used + k, factor, time + k as f64 * step[i], out);
    }
}

/// Prospect-theoretic valuation of `(x, h)` for the given role.
pub fn valuation_mixed(
    params: &PtParams,
    role: Role,
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    x: &MixedInterdiction,
    h: &Path,
    trunc: &TruncationConfig,
) -> Result<f64> {
    let prospect = build_mixed_prospect(graph, t_a, x, h, trunc)?;
    prospect_value(params, role, &prospect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn value_fn_examples() {
        let p = PtParams { r: 20.0, lambda: 2.5, beta_plus: 0.6, beta_minus: 0.6, gamma_plus: 0.5, gamma_minus: 0.5 };
        assert_eq!(value_fn(&p, Role::Interdictor, 20.0), 0.0);
        assert_eq!(value_fn(&p, Role::Operator, 20.0), 0.0);
        // 5^0.6 = exp(0.6 ln 5) = 2.626527804403767...
        assert_relative_eq!(value_fn(&p, Role::Interdictor, 15.0), -2.5 * 2.626_527_804_403_767, max_relative = 1e-14);
        assert_relative_eq!(value_fn(&p, Role::Operator, 25.0), 2.5 * 2.626_527_804_403_767, max_relative = 1e-14);
        assert_relative_eq!(value_fn(&p, Role::Operator, 15.0), -2.626_527_804_403_767, max_relative = 1e-14);
        let rat = PtParams::rational();
        assert_eq!(value_fn(&rat, Role::Interdictor, 17.25), 17.25);
        assert_eq!(value_fn(&rat, Role::Operator, 17.25), 17.25);
    }

    #[test]
    fn weight_fn_examples() {
        assert_eq!(weight_fn(0.5, 0.0), 0.0);
        assert_eq!(weight_fn(0.5, 1.0), 1.0);
        assert_eq!(weight_fn(1.0, 0.37), 0.37);
        // 0.5^0.5 / (2 * 0.5^0.5)^2 = 0.70710678.. / 2 = 0.35355339059327373
        assert_relative_eq!(weight_fn(0.5, 0.5), 0.353_553_390_593_273_8, max_relative = 1e-14);
        // 0.1^0.61 / (0.1^0.61 + 0.9^0.61)^(1/0.61), evaluated with 50-digit arithmetic
        assert_relative_eq!(weight_fn(0.61, 0.1), 0.186_302_566_377_174_15, max_relative = 1e-12);
    }

    #[test]
    fn two_outcome_prospect_by_hand() {
        // Interdictor, R = 20: 10 with 0.4 (loss), 30 with 0.6 (gain).
        let p = PtParams { r: 20.0, lambda: 2.0, beta_plus: 0.5, beta_minus: 0.5, gamma_plus: 0.5, gamma_minus: 0.5 };
        let pr = Prospect::new(vec![(30.0, 0.6), (10.0, 0.4)], 0.0).unwrap();
        let expect = 10f64.sqrt() * weight_fn(0.5, 0.6) - 2.0 * 10f64.sqrt() * weight_fn(0.5, 0.4);
        assert_relative_eq!(prospect_value(&p, Role::Interdictor, &pr).unwrap(), expect, max_relative = 1e-14);
        // Operator sees 30 as a loss, 10 as a gain.
        let expect_u = 2.0 * 10f64.sqrt() * weight_fn(0.5, 0.6) - 10f64.sqrt() * weight_fn(0.5, 0.4);
        assert_relative_eq!(prospect_value(&p, Role::Operator, &pr).unwrap(), expect_u, max_relative = 1e-14);
    }

    #[test]
    fn rational_prospect_value_is_mean() {
        let pr = Prospect::new(vec![(3.0, 0.2), (5.0, 0.3), (11.0, 0.5)], 0.0).unwrap();
        let rat = PtParams::rational();
        let mean = 0.6 + 1.5 + 5.5;
        assert_relative_eq!(prospect_value(&rat, Role::Interdictor, &pr).unwrap(), mean, max_relative = 1e-14);
        assert_relative_eq!(prospect_value(&rat, Role::Operator, &pr).unwrap(), mean, max_relative = 1e-14);
    }

    #[test]
    fn sure_prospect_is_its_value() {
        let p = PtParams::default();
        let pr = Prospect::sure(26.0);
        assert_eq!(prospect_value(&p, Role::Operator, &pr).unwrap(), value_fn(&p, Role::Operator, 26.0));
    }

    #[test]
    fn equal_outcomes_merge() {
        let pr = Prospect::new(vec![(1.0, 0.25), (2.0, 0.5), (1.0 + 1e-12, 0.25)], 0.0).unwrap();
        assert_eq!(pr.len(), 2);
        assert_eq!(pr.outcomes()[0].1, 0.5);
        assert!(Prospect::new(vec![(1.0, 0.5)], 0.0).is_err());
        assert!(matches!(Prospect::new(vec![], 1.0), Err(Error::EmptyProspect)));
    }

    #[test]
    fn params_validation() {
        assert!(PtParams::new(20.0, 2.5, 0.6, 0.0).is_err());
        assert!(PtParams::new(20.0, 0.0, 0.6, 0.5).is_err());
        assert!(PtParams::new(20.0, 2.5, 0.6, 0.5).is_ok());
        assert!(PtParams::rational().is_rational());
    }
}
