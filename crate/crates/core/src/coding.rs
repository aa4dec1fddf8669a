//! Posterior-matching feedback coding over a unifilar FSC driven by a
//! Q-graph and a BCJR-invariant input policy, with Monte-Carlo error-rate
//! measurement.
//!
//! The message posterior is held exactly in a run-length form: messages
//! that have never been separated by an encoding cut share a group with a
//! common per-message weight and hypothetical channel state. Each round
//! splits at most `|S| (|X|-1)` groups, so blocklengths with astronomically
//! many messages stay cheap while the arithmetic remains the plain
//! per-message recursion.

use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};
use crate::probcore::conditional_mi_xsq;
use crate::qbound::build_joint;
use crate::qgraph::{sq_kernel, stationary_distribution, InputPolicy, QGraph, SqStationary};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Weights below this are treated as vanished; renormalization spreads the
/// lost mass over the survivors.
const WEIGHT_FLOOR: f64 = 1e-300;

/// A maximal run of consecutive messages sharing the same posterior weight
/// and hypothetical channel state.
#[derive(Debug, Clone)]
struct MessageGroup {
    start: u128,
    count: u128,
    /// Per-message posterior probability.
    weight: f64,
    /// Hypothetical channel state `s(m)` shared by the run.
    state: usize,
    /// Input symbol assigned in the current round.
    input: usize,
}

/// The per-message posterior `lambda(m)` together with the per-message
/// hypothetical states, in exact grouped form.
#[derive(Debug, Clone)]
pub struct PosteriorVector {
    groups: Vec<MessageGroup>,
    message_count: u128,
}

impl PosteriorVector {
    /// Uniform prior with every message starting from channel state `s0`.
    pub fn uniform(message_count: u128, s0: usize) -> Self {
        PosteriorVector {
            groups: vec![MessageGroup {
                start: 0,
                count: message_count,
                weight: 1.0 / message_count as f64,
                state: s0,
                input: 0,
            }],
            message_count,
        }
    }

    pub fn message_count(&self) -> u128 {
        self.message_count
    }

    /// Posterior probability of one message (linear scan over groups).
    pub fn lambda(&self, m: u128) -> f64 {
        self.groups
            .iter()
            .find(|g| g.start <= m && m < g.start + g.count)
            .map(|g| g.weight)
            .unwrap_or(0.0)
    }

    /// Hypothetical state of one message.
    pub fn state_of(&self, m: u128) -> usize {
        self.groups
            .iter()
            .find(|g| g.start <= m && m < g.start + g.count)
            .map(|g| g.state)
            .unwrap_or(0)
    }

    /// Input symbol assigned to a message in the current round.
    pub fn input_of(&self, m: u128) -> usize {
        self.groups
            .iter()
            .find(|g| g.start <= m && m < g.start + g.count)
            .map(|g| g.input)
            .unwrap_or(0)
    }

    pub fn total_mass(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.weight * g.count as f64)
            .sum()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Decode: the smallest message index attaining the maximal posterior.
    pub fn argmax(&self) -> u128 {
        let mut best_weight = f64::NEG_INFINITY;
        let mut best_start = 0u128;
        for g in &self.groups {
            if g.count == 0 {
                continue;
            }
            if g.weight > best_weight {
                best_weight = g.weight;
                best_start = g.start;
            }
        }
        best_start
    }
}

/// Assign an input symbol to every message by posterior matching: within
/// each state class, the cumulative class posterior (normalized by
/// `pi_{S|Q}(s|q)`) is pushed through the generalized inverse CDF of
/// `P(x | s, q)`. Groups straddling an input boundary are split, so the
/// assignment is exact. Returns the input of the true message.
pub fn encode_step(
    pp: &mut PosteriorVector,
    q: usize,
    m_star: u128,
    pol: &InputPolicy,
    pi_s_given_q: &[f64],
    input_count: usize,
) -> Result<usize> {
    let state_count = pi_s_given_q.len();
    // Cumulative input CDF per state.
    let mut cdf = vec![vec![0.0; input_count + 1]; state_count];
    for (s, row) in cdf.iter_mut().enumerate() {
        for x in 0..input_count {
            row[x + 1] = row[x] + pol.prob(x, s, q);
        }
    }
    let mut class_mass = vec![0.0; state_count];
    let mut split: Vec<MessageGroup> = Vec::with_capacity(pp.groups.len() + state_count);
    for g in &pp.groups {
        let s = g.state;
        if g.weight <= 0.0 {
            // Dead messages occupy zero posterior width; their placement is
            // immaterial, and their hypothetical state may sit in a pair
            // the stationary law never visits.
            let x = (0..input_count)
                .max_by(|&a, &b| pol.prob(a, s, q).partial_cmp(&pol.prob(b, s, q)).unwrap())
                .unwrap();
            let mut dead = g.clone();
            dead.input = x;
            split.push(dead);
            continue;
        }
        if pi_s_given_q[s] <= 0.0 {
            return Err(Error::InvalidConfig {
                msg: format!(
                    "posterior matching reached state {s} at node {q} with pi(s|q) = 0 and positive posterior mass"
                ),
            });
        }
        let scale = pi_s_given_q[s];
        let mut remaining = g.count;
        let mut offset = 0u128;
        while remaining > 0 {
            let position = (class_mass[s] + offset as f64 * g.weight) / scale;
            // Generalized inverse CDF: smallest x with F(x) > position.
            let mut x = (0..input_count)
                .find(|&x| cdf[s][x + 1] > position.min(1.0 - 1e-15))
                .unwrap_or(input_count - 1);
            // Number of whole messages fitting before the next boundary.
            let take = if g.weight <= 0.0 {
                remaining
            } else {
                let boundary = cdf[s][x + 1] * scale;
                let room = boundary - (class_mass[s] + offset as f64 * g.weight);
                if room <= 0.0 {
                    // Degenerate zero-width interval: advance to the next
                    // input with mass.
                    x = ((x + 1)..input_count)
                        .find(|&xx| pol.prob(xx, s, q) > 0.0)
                        .unwrap_or(x);
                    remaining
                } else {
                    let fit = (room / g.weight).ceil() as u128;
                    fit.clamp(1, remaining)
                }
            };
            split.push(MessageGroup {
                start: g.start + offset,
                count: take,
                weight: g.weight,
                state: s,
                input: x,
            });
            offset += take;
            remaining -= take;
        }
        class_mass[s] += g.weight * g.count as f64;
    }
    pp.groups = split;
    Ok(pp.input_of(m_star))
}

/// Posterior update after output `y`: each message's weight is scaled by
/// its own channel likelihood over the aggregate output probability, then
/// renormalized; hypothetical states advance through `f`.
///
/// Returns the pre-renormalization drift `|sum lambda - 1|`.
pub fn pp_update(
    pp: &mut PosteriorVector,
    y: usize,
    ch: &UnifilarFsc,
) -> Result<f64> {
    let aggregate: f64 = pp
        .groups
        .iter()
        .map(|g| g.weight * g.count as f64 * ch.prob(y, g.input, g.state))
        .sum();
    if aggregate <= 0.0 {
        return Err(Error::ZeroProbabilityOutput { y });
    }
    for g in &mut pp.groups {
        let like = ch.prob(y, g.input, g.state);
        g.weight = g.weight * like / aggregate;
        if g.weight < WEIGHT_FLOOR {
            g.weight = 0.0;
        }
        g.state = ch.next_state(g.state, g.input, y);
    }
    let mass = pp.total_mass();
    let drift = (mass - 1.0).abs();
    if mass > 0.0 {
        for g in &mut pp.groups {
            g.weight /= mass;
        }
    }
    Ok(drift)
}

/// Configuration of one coding experiment.
#[derive(Debug, Clone)]
pub struct SchemeConfig<'a> {
    pub ch: &'a UnifilarFsc,
    pub g: &'a QGraph,
    pub pol: &'a InputPolicy,
    /// Blocklength in channel uses.
    pub n: usize,
    /// Requested rate in bits per use; the realized message count is
    /// `floor(2^{n R})` (at least 1; a single message means rate zero).
    pub rate: f64,
    pub s0: usize,
    pub seed: u64,
}

/// Outcome of a single coded transmission.
#[derive(Debug, Clone, Copy)]
pub struct TrialResult {
    pub decoded: u128,
    pub sent: u128,
    pub correct: bool,
    pub realized_rate: f64,
    /// Largest pre-renormalization posterior drift seen in the trial.
    pub max_drift: f64,
}

fn message_count_for(n: usize, rate: f64) -> Result<u128> {
    let bits = n as f64 * rate;
    if bits > 120.0 {
        return Err(Error::SizeGuard {
            what: "message count exponent",
            size: bits as usize,
            limit: 120,
        });
    }
    Ok(bits.exp2().floor().max(1.0) as u128)
}

/// Run one posterior-matching trial: `n` rounds of encode, transmit,
/// update; then argmax decoding with ties broken toward the smallest
/// message index. Deterministic for a fixed seed.
pub fn run_trial(cfg: &SchemeConfig, stationary: &SqStationary) -> Result<TrialResult> {
    let m_count = message_count_for(cfg.n, cfg.rate)?;
    let realized_rate = if cfg.n > 0 {
        (m_count as f64).log2() / cfg.n as f64
    } else {
        0.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m_star = if m_count > 1 {
        // Rejection-free: message counts fit comfortably in f64 precision
        // only up to 2^53, so draw from the high bits directly.
        let u: u64 = rng.gen();
        (u as u128).wrapping_mul(m_count) >> 64
    } else {
        0
    };
    let mut pp = PosteriorVector::uniform(m_count, cfg.s0);
    // Start from a node whose stationary conditional actually carries the
    // initial state; the graph's own q0 may pair with s0 only transiently.
    let mut q = cfg.g.q0;
    if stationary.s_given_q(q)[cfg.s0] <= 0.0 {
        q = (0..cfg.g.node_count())
            .find(|&cand| stationary.s_given_q(cand)[cfg.s0] > 0.0)
            .ok_or(Error::InvalidConfig {
                msg: format!("no Q-graph node supports initial state {}", cfg.s0),
            })?;
    }
    let mut max_drift = 0.0_f64;
    for _ in 0..cfg.n {
        let pi_s = stationary.s_given_q(q);
        let x_star = encode_step(&mut pp, q, m_star, cfg.pol, &pi_s, cfg.ch.input_count())?;
        let s_star = pp.state_of(m_star);
        // Channel draw under the true message's conditional.
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut y = cfg.ch.output_count() - 1;
        for cand in 0..cfg.ch.output_count() {
            acc += cfg.ch.prob(cand, x_star, s_star);
            if u < acc {
                y = cand;
                break;
            }
        }
        let drift = pp_update(&mut pp, y, cfg.ch)?;
        max_drift = max_drift.max(drift);
        q = cfg.g.next(q, y);
    }
    let decoded = pp.argmax();
    Ok(TrialResult {
        decoded,
        sent: m_star,
        correct: decoded == m_star,
        realized_rate,
        max_drift,
    })
}

/// One row of the error-curve table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ErrorPoint {
    pub n: usize,
    pub trials: usize,
    pub errors: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub realized_rate: f64,
}

/// Wilson score interval at 95%.
fn wilson(errors: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let radius = z * ((p * (1.0 - p) + z * z / (4.0 * n)) / n).sqrt() / denom;
    ((center - radius).max(0.0), (center + radius).min(1.0))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Per-trial seed derivation: one splitmix64 step over the master seed
/// combined with the blocklength and trial index.
pub fn trial_seed(master: u64, n: usize, trial: usize) -> u64 {
    splitmix64(master ^ (n as u64).rotate_left(32) ^ trial as u64)
}

/// Monte-Carlo error rates of the scheme at `rate_fraction` times the
/// policy's achievable rate `I(X,S;Y|Q)`, across blocklengths. Trials can
/// run on several threads (`threads >= 1`); the outcome is independent of
/// the thread count because each trial owns a derived seed and only error
/// counts are aggregated.
#[allow(clippy::too_many_arguments)]
pub fn error_curve(
    ch: &UnifilarFsc,
    g: &QGraph,
    pol: &InputPolicy,
    rate_fraction: f64,
    n_list: &[usize],
    trials: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<ErrorPoint>> {
    let base_rate = conditional_mi_xsq(&build_joint(ch, g, pol)?);
    let kernel = sq_kernel(ch, g, pol)?;
    let stationary = stationary_distribution(&kernel, ch.state_count(), g.node_count())?;
    let rate = rate_fraction * base_rate;
    let mut table = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let worker_count = threads.max(1).min(trials.max(1));
        let errors = std::thread::scope(|scope| -> Result<usize> {
            let mut handles = Vec::new();
            for w in 0..worker_count {
                let stationary = &stationary;
                handles.push(scope.spawn(move || -> Result<usize> {
                    let mut local = 0usize;
                    let mut trial = w;
                    while trial < trials {
                        let cfg = SchemeConfig {
                            ch,
                            g,
                            pol,
                            n,
                            rate,
                            s0: 0,
                            seed: trial_seed(seed, n, trial),
                        };
                        if !run_trial(&cfg, stationary)?.correct {
                            local += 1;
                        }
                        trial += worker_count;
                    }
                    Ok(local)
                }));
            }
            let mut total = 0usize;
            for h in handles {
                total += h.join().expect("trial worker panicked")?;
            }
            Ok(total)
        })?;
        let (ci_low, ci_high) = wilson(errors, trials);
        let m_count = message_count_for(n, rate)?;
        table.push(ErrorPoint {
            n,
            trials,
            errors,
            p_hat: errors as f64 / trials.max(1) as f64,
            ci_low,
            ci_high,
            realized_rate: (m_count as f64).log2() / n.max(1) as f64,
        });
    }
    Ok(table)
}
