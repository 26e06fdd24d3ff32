//! Stochastic simulation of UAV traversals, used as an independent check
//! of the analytic delivery-time formulas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Path, RehandlingTime, SecurityGraph};
use crate::mdp::MixedInterdiction;

/// Trials per RNG stream. Chunk `c` draws from stream `c` of the seeded
/// generator, so results do not depend on the thread count.
pub const CHUNK: u64 = 1024;

pub const DEFAULT_STEP_CAP: u64 = 10_000;

const HIST_SCALE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub outcome: f64,
    pub frequency: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    /// Completed runs (runs hitting the step cap are excluded).
    pub trials: u64,
    pub mean_delivery_time: f64,
    pub std_error: f64,
    pub histogram: Vec<HistogramBin>,
    pub truncated_runs: u64,
}

impl SimulationReport {
    pub fn frequency_of(&self, outcome: f64) -> f64 {
        let key = hist_key(outcome);
        self.histogram.iter().find(|b| hist_key(b.outcome) == key).map_or(0.0, |b| b.frequency)
    }
}

fn hist_key(t: f64) -> i64 {
    (t * HIST_SCALE).round() as i64
}

#[derive(Debug, Clone, Default)]
struct Partial {
    n: u64,
    mean: f64,
    m2: f64,
    hist: std::collections::BTreeMap<i64, u64>,
    truncated: u64,
}

impl Partial {
    fn push(&mut self, t: f64) {
        self.n += 1;
        let d = t - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (t - self.mean);
        *self.hist.entry(hist_key(t)).or_default() += 1;
    }

    fn merge(mut self, other: Partial) -> Partial {
        if other.n > 0 {
            let n = self.n + other.n;
            let d = other.mean - self.mean;
            self.mean += d * other.n as f64 / n as f64;
            self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
            self.n = n;
        }
        for (k, c) in other.hist {
            *self.hist.entry(k).or_default() += c;
        }
        self.truncated += other.truncated;
        self
    }
}

/// Pairwise combination in a fixed tree order.
fn combine(mut parts: Vec<Partial>) -> Partial {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Simulates `trials` deliveries along `h` under interdiction `x`. On each
/// arrival at a node the attack succeeds with probability `x_n p_n`; a
/// success costs the rehandling time and restarts the UAV at the origin.
pub fn simulate_delivery(
    graph: &SecurityGraph,
    t_a: RehandlingTime,
    x: &MixedInterdiction,
    h: &Path,
    trials: u64,
    seed: u64,
    step_cap: u64,
) -> Result<SimulationReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    // (arrival time from the origin, attack rate) for nodes after the origin
    let stops: Vec<(f64, f64)> = h
        .nodes()
        .iter()
        .zip(h.prefix_times())
        .skip(1)
        .map(|(&n, &f)| (f, x.attack_rate(graph, n)))
        .filter(|&(_, a)| a > 0.0)
        .collect();
    let length = h.length();
    let ta = t_a.get();

    let chunks = trials.div_ceil(CHUNK);
    let parts: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let count = CHUNK.min(trials - c * CHUNK);
            let mut part = Partial::default();
            'trial: for _ in 0..count {
                let mut elapsed = 0.0;
                let mut attacks = 0u64;
                'attempt: loop {
                    for &(f, a) in &stops {
                        if rng.gen::<f64>() < a {
                            elapsed += f + ta;
                            attacks += 1;
                            if attacks > step_cap {
                                part.truncated += 1;
                                continue 'trial;
                            }
                            continue 'attempt;
                        }
                    }
                    break;
                }
                part.push(elapsed + length);
            }
            part
        })
        .collect();

    let total = combine(parts);
    if total.n == 0 {
        return Err(Error::AllRunsTruncated(step_cap));
    }
    let var = if total.n > 1 { total.m2 / (total.n - 1) as f64 } else { 0.0 };
    let histogram = total
        .hist
        .iter()
        .map(|(&k, &c)| HistogramBin { outcome: k as f64 / HIST_SCALE, frequency: c as f64 / total.n as f64, count: c })
        .collect();
    Ok(SimulationReport {
        trials: total.n,
        mean_delivery_time: total.mean,
        std_error: var.max(0.0).sqrt() / (total.n as f64).sqrt(),
        histogram,
        truncated_runs: total.truncated,
    })
}
