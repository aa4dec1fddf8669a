//! The feedback-capacity MDP of a unifilar FSC: the decoder's belief is the
//! state, input stochastic matrices are the actions, the channel output is
//! the disturbance, and the reward is `I(X, S; Y)` under the current belief
//! and action. Value iteration over a discretized belief space brackets the
//! optimal average reward; for the binary Ising channel the specialized
//! operator and its closed-form fixed point are also provided.

use crate::channels::{make_binary_ising, UnifilarFsc};
use crate::error::{Error, Result};
use crate::opt;
use crate::probcore::{entropy, h2, Pmf};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A belief over channel states: a point of the `|S|`-simplex.
pub type Belief = Pmf;

/// An `|S| x |X|` stochastic matrix: row `s` is the input pmf used when the
/// channel state is `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMatrix(Vec<Vec<f64>>);

impl ActionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in rows.iter().enumerate() {
            for &w in row {
                if w < -1e-12 {
                    return Err(Error::NegativeProbability {
                        what: format!("action row {s}"),
                        value: w,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::NotNormalized {
                    what: format!("action row {s}"),
                    sum,
                });
            }
        }
        Ok(ActionMatrix(rows))
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.0
    }

    #[inline]
    pub fn prob(&self, s: usize, x: usize) -> f64 {
        self.0[s][x]
    }
}

/// Output distribution `P(y | beta, Pi) = sum_{x,s} beta(s) Pi(s,x) P(y|x,s)`.
pub fn disturbance_dist(beta: &Belief, pi: &ActionMatrix, ch: &UnifilarFsc) -> Result<Pmf> {
    check_shapes(beta, pi, ch)?;
    let mut out = vec![0.0; ch.output_count()];
    for s in 0..ch.state_count() {
        if beta[s] == 0.0 {
            continue;
        }
        for x in 0..ch.input_count() {
            let w = beta[s] * pi.prob(s, x);
            if w == 0.0 {
                continue;
            }
            for (y, o) in out.iter_mut().enumerate() {
                *o += w * ch.prob(y, x, s);
            }
        }
    }
    Pmf::normalized(out)
}

/// One belief-MDP transition: the posterior over the next channel state
/// after output `y`, `beta'(s') ~ sum_{s,x: f(s,x,y)=s'} beta(s) Pi(s,x) P(y|x,s)`.
pub fn belief_update(
    beta: &Belief,
    pi: &ActionMatrix,
    y: usize,
    ch: &UnifilarFsc,
) -> Result<Belief> {
    check_shapes(beta, pi, ch)?;
    let mut next = vec![0.0; ch.state_count()];
    for s in 0..ch.state_count() {
        if beta[s] == 0.0 {
            continue;
        }
        for x in 0..ch.input_count() {
            let w = beta[s] * pi.prob(s, x) * ch.prob(y, x, s);
            if w > 0.0 {
                next[ch.next_state(s, x, y)] += w;
            }
        }
    }
    if next.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroProbabilityOutput { y });
    }
    Pmf::normalized(next)
}

/// The MDP reward `I(X, S; Y | beta, Pi) = H(Y) - sum beta(s) Pi(s,x) H(P(.|x,s))`.
pub fn reward(beta: &Belief, pi: &ActionMatrix, ch: &UnifilarFsc) -> Result<f64> {
    check_shapes(beta, pi, ch)?;
    let py = disturbance_dist(beta, pi, ch)?;
    let mut cond = 0.0;
    for s in 0..ch.state_count() {
        for x in 0..ch.input_count() {
            let w = beta[s] * pi.prob(s, x);
            if w > 0.0 {
                cond += w * entropy(ch.output_row(x, s));
            }
        }
    }
    Ok((py.entropy() - cond).max(0.0))
}

fn check_shapes(beta: &Belief, pi: &ActionMatrix, ch: &UnifilarFsc) -> Result<()> {
    if beta.len() != ch.state_count() {
        return Err(Error::ShapeMismatch {
            what: "belief length",
            expected: ch.state_count(),
            got: beta.len(),
        });
    }
    if pi.rows().len() != ch.state_count() {
        return Err(Error::ShapeMismatch {
            what: "action matrix rows",
            expected: ch.state_count(),
            got: pi.rows().len(),
        });
    }
    if pi.rows()[0].len() != ch.input_count() {
        return Err(Error::ShapeMismatch {
            what: "action matrix columns",
            expected: ch.input_count(),
            got: pi.rows()[0].len(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Binary Ising channel: reparameterized actions, specialized operator, and
// the closed-form solution.
// ---------------------------------------------------------------------------

/// Root `a` of `a^3 = (1-a)^4` on `[0, 1]` and the capacity
/// `rho* = -0.5 log2 a` in bits per channel use.
#[derive(Debug, Clone, Copy)]
pub struct IsingSolution {
    pub a: f64,
    pub rho_star: f64,
}

/// Bisection for the unique root of `x^3 = (1-x)^4` on `[0, 1]`.
pub fn ising_solution() -> IsingSolution {
    let f = |x: f64| x.powi(3) - (1.0 - x).powi(4);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    IsingSolution {
        a,
        rho_star: -0.5 * a.log2(),
    }
}

/// Closed-form feedback capacity of the Ising channel with input alphabet
/// size `2 <= x_size <= 8`: the quartic root `p` and the capacity value,
/// which equals both `2 (H2(p) + (1-p) log2(x_size - 1)) / (p + 3)` and
/// `0.5 log2(1/p)`.
#[derive(Debug, Clone, Copy)]
pub struct QaryIsingCapacity {
    pub p: f64,
    pub value_bits: f64,
}

pub fn qary_ising_capacity(x_size: usize) -> Result<QaryIsingCapacity> {
    if !(2..=8).contains(&x_size) {
        return Err(Error::InvalidConfig {
            msg: format!("q-ary Ising capacity supports 2 <= |X| <= 8, got {x_size}"),
        });
    }
    let k = (x_size - 1) as f64;
    let c3 = k.powi(4) + 4.0;
    let f = |x: f64| x.powi(4) - c3 * x.powi(3) + 6.0 * x * x - 4.0 * x + 1.0;
    // f(0) = 1 > 0, f(1) = -k^4 < 0: bisect.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    Ok(QaryIsingCapacity {
        p,
        value_bits: 0.5 * (1.0 / p).log2(),
    })
}

/// The `max_p`-form objective of the q-ary Ising capacity theorem,
/// `2 (H2(p) + (1-p) log2(|X|-1)) / (p+3)`.
pub fn qary_ising_objective(p: f64, x_size: usize) -> f64 {
    let k = (x_size - 1) as f64;
    2.0 * (h2(p) + (1.0 - p) * k.log2()) / (p + 3.0)
}

/// One step of the reparameterized Ising belief recursion, where
/// `z` is the belief of state 0 and `(delta, gamma)` satisfy
/// `0 <= delta <= z`, `0 <= gamma <= 1-z`.
pub fn ising_state_update(z: f64, delta: f64, gamma: f64, y: usize) -> f64 {
    let next = if y == 0 {
        let denom = 1.0 + delta - gamma;
        assert!(denom > 0.0, "y=0 branch requires P(y=0) > 0");
        1.0 + (delta - z) / denom
    } else {
        let denom = 1.0 + gamma - delta;
        assert!(denom > 0.0, "y=1 branch requires P(y=1) > 0");
        (1.0 - z - gamma) / denom
    };
    next.clamp(0.0, 1.0)
}

/// Options for the inner `(delta, gamma)` optimization of the Ising
/// Bellman operator: a coarse seed grid followed by Nelder-Mead refinement.
#[derive(Debug, Clone, Copy)]
pub struct InnerOpt {
    pub seed_grid: usize,
    pub refine_tol: f64,
}

impl Default for InnerOpt {
    fn default() -> Self {
        InnerOpt {
            seed_grid: 32,
            refine_tol: 1e-7,
        }
    }
}

/// Value and maximizer of the Ising Bellman operator at a single belief.
#[derive(Debug, Clone, Copy)]
pub struct IsingActionValue {
    pub value: f64,
    pub delta: f64,
    pub gamma: f64,
}

/// Apply the Ising Bellman operator to an arbitrary value function `h` at
/// belief `z`:
/// `(Th)(z) = sup H2((1+d-g)/2) + d + g - 1 + p0 h(z0') + p1 h(z1')`
/// over `0 <= d <= z`, `0 <= g <= 1-z`, with `p0 = (1+d-g)/2`.
pub fn ising_bellman_apply(
    h: &dyn Fn(f64) -> f64,
    z: f64,
    inner: InnerOpt,
    warm: Option<(f64, f64)>,
) -> IsingActionValue {
    let objective = |d: f64, g: f64| -> f64 {
        let d = d.clamp(0.0, z);
        let g = g.clamp(0.0, 1.0 - z);
        let p0 = 0.5 * (1.0 + d - g);
        let p1 = 1.0 - p0;
        let mut val = h2(p0) + d + g - 1.0;
        if p0 > 1e-14 {
            val += p0 * h(ising_state_update(z, d, g, 0));
        }
        if p1 > 1e-14 {
            val += p1 * h(ising_state_update(z, d, g, 1));
        }
        val
    };

    // Seed scan over the constrained box.
    let n = 1.max(inner.seed_grid);
    let mut seeds: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..=n {
        let d = z * i as f64 / n as f64;
        for j in 0..=n {
            let g = (1.0 - z) * j as f64 / n as f64;
            seeds.push((objective(d, g), d, g));
        }
    }
    if let Some((d, g)) = warm {
        let d = d.clamp(0.0, z);
        let g = g.clamp(0.0, 1.0 - z);
        seeds.push((objective(d, g), d, g));
    }
    seeds.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut best = IsingActionValue {
        value: seeds[0].0,
        delta: seeds[0].1,
        gamma: seeds[0].2,
    };
    for &(_, d, g) in seeds.iter().take(3) {
        let mut f = |p: &[f64]| objective(p[0], p[1]);
        let (p, v) = opt::nelder_mead_max(
            &mut f,
            &[d, g],
            &[0.0, 0.0],
            &[z, 1.0 - z],
            inner.refine_tol,
            400,
        );
        if v > best.value {
            best = IsingActionValue {
                value: v,
                delta: p[0],
                gamma: p[1],
            };
        }
    }
    best
}

/// A value function tabulated on a sorted grid with linear interpolation.
#[derive(Debug, Clone)]
pub struct GridValueFunction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridValueFunction {
    pub fn zeros(points: usize) -> Self {
        GridValueFunction {
            grid: uniform_grid(points),
            values: vec![0.0; points],
        }
    }

    /// Piecewise-linear evaluation, clamped to the grid range.
    pub fn eval(&self, z: f64) -> f64 {
        let g = &self.grid;
        if z <= g[0] {
            return self.values[0];
        }
        if z >= g[g.len() - 1] {
            return self.values[g.len() - 1];
        }
        let hi = g.partition_point(|&t| t < z).max(1);
        let lo = hi - 1;
        let t = (z - g[lo]) / (g[hi] - g[lo]);
        self.values[lo] * (1.0 - t) + self.values[hi] * t
    }
}

fn uniform_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| i as f64 / (points - 1) as f64)
        .collect()
}

/// One sweep of the Ising Bellman operator over a grid value function.
/// Returns the updated values and the argmax actions per grid point.
pub fn ising_bellman_operator(
    h: &GridValueFunction,
    inner: InnerOpt,
) -> (GridValueFunction, IsingPolicy) {
    let mut values = Vec::with_capacity(h.grid.len());
    let mut delta = Vec::with_capacity(h.grid.len());
    let mut gamma = Vec::with_capacity(h.grid.len());
    let eval = |z: f64| h.eval(z);
    let mut warm: Option<(f64, f64)> = None;
    for &z in &h.grid {
        let out = ising_bellman_apply(&eval, z, inner, warm);
        warm = Some((out.delta, out.gamma));
        values.push(out.value);
        delta.push(out.delta);
        gamma.push(out.gamma);
    }
    (
        GridValueFunction {
            grid: h.grid.clone(),
            values,
        },
        IsingPolicy {
            grid: h.grid.clone(),
            delta,
            gamma,
        },
    )
}

/// A stationary Ising policy tabulated on the belief grid: the maximizing
/// `(delta, gamma)` per grid point, interpolated linearly in between and
/// clamped to the feasible box at the queried belief.
#[derive(Debug, Clone)]
pub struct IsingPolicy {
    pub grid: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl IsingPolicy {
    pub fn action(&self, z: f64) -> (f64, f64) {
        let d = GridValueFunction {
            grid: self.grid.clone(),
            values: self.delta.clone(),
        }
        .eval(z);
        let g = GridValueFunction {
            grid: self.grid.clone(),
            values: self.gamma.clone(),
        }
        .eval(z);
        (d.clamp(0.0, z), g.clamp(0.0, 1.0 - z))
    }
}

/// The closed-form Bellman solution of the binary Ising channel. Outside
/// the central entropy window the value is given by the auxiliary `eta`
/// curve, mirrored for small beliefs.
pub fn ising_hstar(z: f64, sol: &IsingSolution) -> f64 {
    let a = sol.a;
    let lo = (1.0 - a) / (1.0 + a);
    let hi = 2.0 * a / (1.0 + a);
    if z < lo {
        ising_eta(1.0 - z, sol)
    } else if z <= hi {
        h2(z)
    } else {
        ising_eta(z, sol)
    }
}

fn ising_eta(z: f64, sol: &IsingSolution) -> f64 {
    let a = sol.a;
    let u = 2.0 * a + (1.0 - a) * z;
    (1.0 / (1.0 - a)) * h2(u / 2.0) - z - (4.0 * a + (1.0 - a) * z) / (2.0 * (1.0 - a)) * sol.rho_star
        + u / (2.0 * (1.0 - a)) * h2(2.0 * a / u)
}

// ---------------------------------------------------------------------------
// Value iteration.
// ---------------------------------------------------------------------------

/// Result of value iteration: the span interval `[rho_low, rho_high]`
/// bracketing the optimal average reward, the final iterate, the greedy
/// policy, and the per-iteration span history.
#[derive(Debug, Clone)]
pub struct ViResult {
    pub rho_low: f64,
    pub rho_high: f64,
    /// `(min, max)` of `h_{k+1} - h_k` per iteration.
    pub span_history: Vec<(f64, f64)>,
    /// Belief grid (belief of state 0 for two-state channels; the single
    /// point 1.0 for one-state channels).
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Greedy actions per grid point.
    pub actions: Vec<ActionMatrix>,
    /// For two-state channels: the `(delta, gamma)` parameterization of the
    /// greedy policy, used by the simulator and the CSV dump.
    pub ising_policy: Option<IsingPolicy>,
    /// Estimated piecewise-linear interpolation error of the final iterate
    /// (largest second difference over 8). The raw span brackets the
    /// discretized MDP's average reward; the channel's own optimum can sit
    /// up to this much outside it.
    pub interp_slack: f64,
}

impl ViResult {
    /// Span interval widened by the interpolation slack: a bracket for the
    /// channel's optimal average reward rather than the grid MDP's.
    pub fn capacity_bracket(&self) -> (f64, f64) {
        (self.rho_low - self.interp_slack, self.rho_high + self.interp_slack)
    }
}

/// Largest second difference of a uniformly gridded function, over eight:
/// the standard piecewise-linear interpolation error estimate.
fn interpolation_slack(values: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for w in values.windows(3) {
        worst = worst.max((w[2] - 2.0 * w[1] + w[0]).abs());
    }
    worst / 8.0
}

/// Options controlling both the grid and the inner action search.
#[derive(Debug, Clone, Copy, Default)]
pub struct ViOptions {
    pub inner: InnerOpt,
}

fn is_binary_ising(ch: &UnifilarFsc) -> bool {
    if ch.state_count() != 2 || ch.input_count() != 2 || ch.output_count() != 2 {
        return false;
    }
    let reference = make_binary_ising();
    for x in 0..2 {
        for s in 0..2 {
            for y in 0..2 {
                if (ch.prob(y, x, s) - reference.prob(y, x, s)).abs() > 1e-15 {
                    return false;
                }
            }
            for y in 0..2 {
                if ch.next_state(s, x, y) != reference.next_state(s, x, y) {
                    return false;
                }
            }
        }
    }
    true
}

/// Value iteration for the feedback-capacity MDP.
///
/// Supports one- and two-state channels on a dense belief grid. The binary
/// Ising channel is routed through its specialized operator. Channels with
/// `3 <= |S| <= 4` run on a coarse simplex lattice with nearest-point value
/// lookup; larger state spaces are rejected.
pub fn value_iteration(
    ch: &UnifilarFsc,
    grid_points: usize,
    iterations: usize,
    opts: ViOptions,
) -> Result<ViResult> {
    if iterations < 1 {
        return Err(Error::InvalidConfig {
            msg: "value iteration needs at least one iteration".into(),
        });
    }
    if grid_points < 2 && ch.state_count() > 1 {
        return Err(Error::InvalidConfig {
            msg: "belief grid needs at least two points".into(),
        });
    }
    match ch.state_count() {
        1 => vi_single_state(ch, iterations, opts),
        2 => {
            if is_binary_ising(ch) {
                Ok(ising_value_iteration(grid_points, iterations, opts.inner))
            } else {
                vi_two_state(ch, grid_points, iterations, opts)
            }
        }
        3 | 4 => vi_simplex_lattice(ch, grid_points, iterations, opts),
        n => Err(Error::SizeGuard {
            what: "value-iteration state count",
            size: n,
            limit: 4,
        }),
    }
}

/// Value iteration specialized to the binary Ising channel.
pub fn ising_value_iteration(grid_points: usize, iterations: usize, inner: InnerOpt) -> ViResult {
    let mut h = GridValueFunction::zeros(grid_points);
    let mut span_history = Vec::with_capacity(iterations);
    let mut policy = IsingPolicy {
        grid: h.grid.clone(),
        delta: vec![0.0; grid_points],
        gamma: vec![0.0; grid_points],
    };
    for _ in 0..iterations {
        let (next, pol) = ising_bellman_operator(&h, inner);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (new, old) in next.values.iter().zip(&h.values) {
            let d = new - old;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span_history.push((lo, hi));
        h = next;
        policy = pol;
    }
    let (rho_low, rho_high) = *span_history.last().unwrap();
    let actions = h
        .grid
        .iter()
        .zip(policy.delta.iter().zip(&policy.gamma))
        .map(|(&z, (&d, &g))| ising_action_matrix(z, d, g))
        .collect();
    let interp_slack = interpolation_slack(&h.values);
    ViResult {
        rho_low,
        rho_high,
        span_history,
        grid: h.grid.clone(),
        values: h.values,
        actions,
        ising_policy: Some(policy),
        interp_slack,
    }
}

fn ising_action_matrix(z: f64, delta: f64, gamma: f64) -> ActionMatrix {
    let p00 = if z > 1e-12 { (delta / z).clamp(0.0, 1.0) } else { 1.0 };
    let p11 = if 1.0 - z > 1e-12 {
        (gamma / (1.0 - z)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    ActionMatrix(vec![vec![p00, 1.0 - p00], vec![1.0 - p11, p11]])
}

/// Stick-breaking map from a box point to a pmf, used to search over input
/// rows with box-constrained optimizers.
fn stick_to_pmf(coords: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(coords.len() + 1);
    let mut rest = 1.0;
    for &c in coords {
        let w = c.clamp(0.0, 1.0) * rest;
        p.push(w);
        rest -= w;
    }
    p.push(rest.max(0.0));
    p
}

fn action_from_coords(ch: &UnifilarFsc, coords: &[f64]) -> ActionMatrix {
    let per_row = ch.input_count() - 1;
    let rows = (0..ch.state_count())
        .map(|s| stick_to_pmf(&coords[s * per_row..(s + 1) * per_row]))
        .collect();
    ActionMatrix(rows)
}

/// Generic Bellman step at a single belief: seed lattice + Nelder-Mead over
/// the stick-breaking coordinates of all action rows.
fn generic_bellman_apply(
    ch: &UnifilarFsc,
    beta: &Belief,
    h: &dyn Fn(&Belief) -> f64,
    inner: InnerOpt,
) -> (f64, ActionMatrix) {
    let per_row = ch.input_count() - 1;
    let dim = ch.state_count() * per_row;
    let objective = |coords: &[f64]| -> f64 {
        let action = action_from_coords(ch, coords);
        let mut val = match reward(beta, &action, ch) {
            Ok(v) => v,
            Err(_) => return f64::NEG_INFINITY,
        };
        let py = match disturbance_dist(beta, &action, ch) {
            Ok(p) => p,
            Err(_) => return f64::NEG_INFINITY,
        };
        for y in 0..ch.output_count() {
            if py[y] > 1e-14 {
                if let Ok(next) = belief_update(beta, &action, y, ch) {
                    val += py[y] * h(&next);
                }
            }
        }
        val
    };
    if dim == 0 {
        // Single-input channel: nothing to optimize.
        let action = action_from_coords(ch, &[]);
        return (objective(&[]), action);
    }
    // Seed lattice: resolution chosen so the seed count stays modest.
    let res = match dim {
        1 => 32,
        2 => 16,
        3 => 8,
        _ => 4,
    };
    let mut best_seed = vec![0.0; dim];
    let mut best_val = f64::NEG_INFINITY;
    let mut idx = vec![0usize; dim];
    loop {
        let coords: Vec<f64> = idx.iter().map(|&i| i as f64 / res as f64).collect();
        let v = objective(&coords);
        if v > best_val {
            best_val = v;
            best_seed = coords;
        }
        let mut k = 0;
        loop {
            if k == dim {
                break;
            }
            idx[k] += 1;
            if idx[k] <= res {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dim {
            break;
        }
    }
    let mut f = |p: &[f64]| objective(p);
    let (coords, val) = opt::nelder_mead_max(
        &mut f,
        &best_seed,
        &vec![0.0; dim],
        &vec![1.0; dim],
        inner.refine_tol,
        400,
    );
    (val.max(best_val), action_from_coords(ch, &coords))
}

fn vi_single_state(ch: &UnifilarFsc, iterations: usize, opts: ViOptions) -> Result<ViResult> {
    let beta = Pmf::new(vec![1.0]).unwrap();
    let h = |_: &Belief| 0.0;
    let (capacity, action) = generic_bellman_apply(ch, &beta, &h, opts.inner);
    // h is constant on a single point: every iterate adds the same amount.
    let span_history = vec![(capacity, capacity); iterations];
    Ok(ViResult {
        rho_low: capacity,
        rho_high: capacity,
        span_history,
        grid: vec![1.0],
        values: vec![capacity * iterations as f64],
        actions: vec![action],
        ising_policy: None,
        interp_slack: 0.0,
    })
}

fn vi_two_state(
    ch: &UnifilarFsc,
    grid_points: usize,
    iterations: usize,
    opts: ViOptions,
) -> Result<ViResult> {
    let grid = uniform_grid(grid_points);
    let mut h = GridValueFunction {
        grid: grid.clone(),
        values: vec![0.0; grid_points],
    };
    let mut span_history = Vec::with_capacity(iterations);
    let mut actions: Vec<ActionMatrix> = Vec::new();
    for _ in 0..iterations {
        let mut values = Vec::with_capacity(grid_points);
        let mut step_actions = Vec::with_capacity(grid_points);
        let href = &h;
        let eval = move |b: &Belief| href.eval(b[0]);
        for &z in &grid {
            let beta = Pmf::new(vec![z, 1.0 - z]).unwrap();
            let (v, act) = generic_bellman_apply(ch, &beta, &eval, opts.inner);
            values.push(v);
            step_actions.push(act);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (new, old) in values.iter().zip(&h.values) {
            let d = new - old;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span_history.push((lo, hi));
        h.values = values;
        actions = step_actions;
    }
    let (rho_low, rho_high) = *span_history.last().unwrap();
    let ising_policy = Some(IsingPolicy {
        grid: grid.clone(),
        delta: grid
            .iter()
            .zip(&actions)
            .map(|(&z, a)| z * a.prob(0, 0))
            .collect(),
        gamma: grid
            .iter()
            .zip(&actions)
            .map(|(&z, a)| (1.0 - z) * a.prob(1, ch.input_count() - 1))
            .collect(),
    });
    let interp_slack = interpolation_slack(&h.values);
    Ok(ViResult {
        rho_low,
        rho_high,
        span_history,
        grid,
        values: h.values,
        actions,
        ising_policy: if ch.input_count() == 2 { ising_policy } else { None },
        interp_slack,
    })
}

/// Coarse lattice path for 3- and 4-state channels: beliefs on the simplex
/// lattice `{ k/r : sum k = r }`, value lookup at the nearest lattice point.
/// Rough by construction; documented as exponential in `|S|`.
fn vi_simplex_lattice(
    ch: &UnifilarFsc,
    resolution: usize,
    iterations: usize,
    opts: ViOptions,
) -> Result<ViResult> {
    let ns = ch.state_count();
    let r = resolution.clamp(4, 40);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut stack = vec![(Vec::<usize>::new(), r)];
    while let Some((prefix, rest)) = stack.pop() {
        if prefix.len() == ns - 1 {
            let mut p: Vec<f64> = prefix.iter().map(|&k| k as f64 / r as f64).collect();
            p.push(rest as f64 / r as f64);
            points.push(p);
        } else {
            for k in 0..=rest {
                let mut next = prefix.clone();
                next.push(k);
                stack.push((next, rest - k));
            }
        }
    }
    let nearest = |b: &Belief, values: &[f64], pts: &[Vec<f64>]| -> f64 {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in pts.iter().enumerate() {
            let d: f64 = p.iter().zip(b.weights()).map(|(a, c)| (a - c) * (a - c)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        values[best]
    };
    let mut values = vec![0.0; points.len()];
    let mut span_history = Vec::with_capacity(iterations);
    let mut actions: Vec<ActionMatrix> = Vec::new();
    for _ in 0..iterations {
        let snapshot = values.clone();
        let pts = points.clone();
        let eval = move |b: &Belief| nearest(b, &snapshot, &pts);
        let mut next_values = Vec::with_capacity(points.len());
        let mut step_actions = Vec::with_capacity(points.len());
        for p in &points {
            let beta = Pmf::normalized(p.clone()).unwrap();
            let (v, act) = generic_bellman_apply(ch, &beta, &eval, opts.inner);
            next_values.push(v);
            step_actions.push(act);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (new, old) in next_values.iter().zip(&values) {
            let d = new - old;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span_history.push((lo, hi));
        values = next_values;
        actions = step_actions;
    }
    let (rho_low, rho_high) = *span_history.last().unwrap();
    Ok(ViResult {
        rho_low,
        rho_high,
        span_history,
        grid: points.iter().map(|p| p[0]).collect(),
        values,
        actions,
        ising_policy: None,
        // Nearest-point lookup has first-order error; no tight estimate.
        interp_slack: f64::NAN,
    })
}

// ---------------------------------------------------------------------------
// Policy simulation.
// ---------------------------------------------------------------------------

/// Trajectory, visitation histogram, and empirical average reward of a
/// stationary policy simulated on the belief MDP.
#[derive(Debug, Clone)]
pub struct SimulationReport {
    /// Belief-of-state-0 trajectory, post burn-in.
    pub trajectory: Vec<f64>,
    /// Relative frequency per histogram cell (cells partition `[0, 1]`).
    pub histogram: Vec<f64>,
    pub cell_centers: Vec<f64>,
    pub avg_reward: f64,
}

/// Simulate a two-state channel under an Ising-parameterized grid policy.
/// Outputs are sampled from the disturbance law; beliefs evolve through the
/// reparameterized recursion. Reproducible for a fixed seed.
pub fn simulate_policy(
    ch: &UnifilarFsc,
    policy: &IsingPolicy,
    steps: usize,
    burn_in: usize,
    cells: usize,
    seed: u64,
) -> Result<SimulationReport> {
    if ch.state_count() != 2 || ch.input_count() != 2 {
        return Err(Error::InvalidConfig {
            msg: "policy simulation expects a two-state, binary-input channel".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = 1.0_f64; // decoder starts certain of state 0
    let mut trajectory = Vec::with_capacity(steps.saturating_sub(burn_in));
    let mut histogram = vec![0.0; cells];
    let mut reward_acc = 0.0;
    let mut counted = 0usize;
    for t in 0..steps {
        let (d, g) = policy.action(z);
        let action = ising_action_matrix(z, d, g);
        let beta = Pmf::new(vec![z, 1.0 - z]).unwrap();
        let py = disturbance_dist(&beta, &action, ch)?;
        let r = reward(&beta, &action, ch)?;
        let u: f64 = rng.gen();
        let y = if u < py[0] { 0 } else { 1 };
        let z_next = if is_binary_ising(ch) {
            ising_state_update(z, d, g, y)
        } else {
            belief_update(&beta, &action, y, ch)?[0]
        };
        if t >= burn_in {
            trajectory.push(z);
            let cell = ((z * cells as f64) as usize).min(cells - 1);
            histogram[cell] += 1.0;
            reward_acc += r;
            counted += 1;
        }
        z = z_next;
    }
    let total: f64 = histogram.iter().sum();
    if total > 0.0 {
        for h in &mut histogram {
            *h /= total;
        }
    }
    Ok(SimulationReport {
        trajectory,
        histogram,
        cell_centers: (0..cells).map(|i| (i as f64 + 0.5) / cells as f64).collect(),
        avg_reward: if counted > 0 { reward_acc / counted as f64 } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{make_bsc, make_dmc};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn ising_root_and_capacity() {
        let sol = ising_solution();
        assert!((sol.a.powi(3) - (1.0 - sol.a).powi(4)).abs() < 1e-12);
        assert_close(sol.a, 0.4503, 5e-4);
        assert_close(sol.rho_star, 0.5755, 5e-4);
    }

    #[test]
    fn disturbance_examples() {
        let ch = make_binary_ising();
        // Point belief on state 0, deterministic input 0: clean zero.
        let beta = Pmf::new(vec![1.0, 0.0]).unwrap();
        let pi = ActionMatrix::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let py = disturbance_dist(&beta, &pi, &ch).unwrap();
        assert_close(py[0], 1.0, 1e-15);

        // Uniform everything: uniform output by symmetry.
        let beta = Pmf::new(vec![0.5, 0.5]).unwrap();
        let pi = ActionMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let py = disturbance_dist(&beta, &pi, &ch).unwrap();
        assert_close(py[0], 0.5, 1e-12);

        // State 0 known, input forced to 1: coin flip.
        let pi = ActionMatrix::new(vec![vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let beta = Pmf::new(vec![1.0, 0.0]).unwrap();
        let py = disturbance_dist(&beta, &pi, &ch).unwrap();
        assert_close(py[0], 0.5, 1e-15);
        assert_close(py[1], 0.5, 1e-15);
    }

    #[test]
    fn belief_update_matches_ising_recursion() {
        let ch = make_binary_ising();
        let mut state = 12345u64;
        let mut next_f64 = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let z = next_f64();
            let d = next_f64() * z;
            let g = next_f64() * (1.0 - z);
            let pi = ising_action_matrix(z, d, g);
            let beta = Pmf::new(vec![z, 1.0 - z]).unwrap();
            for y in 0..2 {
                let p_y = disturbance_dist(&beta, &pi, &ch).unwrap()[y];
                if p_y < 1e-12 {
                    continue;
                }
                let generic = belief_update(&beta, &pi, y, &ch).unwrap();
                let fast = ising_state_update(z, d, g, y);
                assert_close(generic[0], fast, 1e-10);
            }
        }
    }

    #[test]
    fn zero_probability_output_errors() {
        let ch = make_binary_ising();
        let beta = Pmf::new(vec![1.0, 0.0]).unwrap();
        let pi = ActionMatrix::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            belief_update(&beta, &pi, 1, &ch),
            Err(Error::ZeroProbabilityOutput { y: 1 })
        ));
    }

    #[test]
    fn reward_extremes() {
        // Noiseless identity DMC: uniform input gives 1 bit.
        let ch = make_dmc("id", vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let beta = Pmf::new(vec![1.0]).unwrap();
        let pi = ActionMatrix::new(vec![vec![0.5, 0.5]]).unwrap();
        assert_close(reward(&beta, &pi, &ch).unwrap(), 1.0, 1e-12);

        // Useless channel: zero reward for any action.
        let ch = make_bsc(0.5).unwrap();
        let pi = ActionMatrix::new(vec![vec![0.3, 0.7]]).unwrap();
        assert_close(reward(&beta, &pi, &ch).unwrap(), 0.0, 1e-12);
    }

    #[test]
    fn state_update_formulas() {
        assert_close(ising_state_update(0.5, 0.25, 0.25, 0), 0.75, 1e-15);
        assert_close(ising_state_update(0.5, 0.25, 0.25, 1), 0.25, 1e-15);
        // Full-mass actions pin the next state.
        let z = 0.37;
        assert_close(ising_state_update(z, z, 1.0 - z, 0), 1.0, 1e-12);
    }

    #[test]
    fn operator_at_zero_matches_1d_oracle() {
        // h == 0 and z = 0: the box degenerates to delta = 0, so the sup is
        // a one-dimensional problem in gamma.
        let zero = |_: f64| 0.0;
        let out = ising_bellman_apply(&zero, 0.0, InnerOpt::default(), None);
        let (g_star, val) =
            opt::golden_section_max(|g: f64| h2(0.5 - g / 2.0) + g - 1.0, 0.0, 1.0, 1e-10);
        assert_close(out.value, val, 1e-8);
        assert_close(out.gamma, g_star, 1e-4);
        assert!(out.delta.abs() < 1e-12);
    }

    #[test]
    fn operator_symmetry_on_zero_function() {
        let zero = |_: f64| 0.0;
        for i in 0..=10 {
            let z = i as f64 / 10.0;
            let a = ising_bellman_apply(&zero, z, InnerOpt::default(), None);
            let b = ising_bellman_apply(&zero, 1.0 - z, InnerOpt::default(), None);
            assert_close(a.value, b.value, 1e-9);
        }
    }

    #[test]
    fn hstar_continuity_and_symmetry() {
        let sol = ising_solution();
        let lo = (1.0 - sol.a) / (1.0 + sol.a);
        let hi = 2.0 * sol.a / (1.0 + sol.a);
        assert_close(ising_eta(1.0 - lo, &sol), h2(lo), 1e-9);
        assert_close(ising_eta(hi, &sol), h2(hi), 1e-9);
        for i in 0..=1000 {
            let z = i as f64 / 1000.0;
            assert_close(ising_hstar(z, &sol), ising_hstar(1.0 - z, &sol), 1e-9);
        }
    }

    #[test]
    fn closed_form_solves_bellman_on_sample() {
        // Coarse version of the acceptance check: 50 points, 1e-5.
        let sol = ising_solution();
        let h = move |z: f64| ising_hstar(z, &sol);
        for i in 0..=50 {
            let z = i as f64 / 50.0;
            let out = ising_bellman_apply(&h, z, InnerOpt::default(), None);
            assert_close(out.value - ising_hstar(z, &sol), sol.rho_star, 1e-5);
        }
    }

    #[test]
    fn vi_single_state_noiseless() {
        let ch = make_dmc("id", vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let res = value_iteration(&ch, 2, 1, ViOptions::default()).unwrap();
        assert_close(res.rho_low, 1.0, 1e-9);
        assert_close(res.rho_high, 1.0, 1e-9);
    }

    #[test]
    fn vi_output_independent_channel() {
        let ch = make_bsc(0.5).unwrap();
        let res = value_iteration(&ch, 2, 3, ViOptions::default()).unwrap();
        assert!(res.rho_high.abs() < 1e-9);
    }

    #[test]
    fn vi_bsc_matches_closed_form() {
        let ch = make_bsc(0.1).unwrap();
        let res = value_iteration(&ch, 2, 1, ViOptions::default()).unwrap();
        let expect = 1.0 - h2(0.1);
        assert_close(res.rho_low, expect, 1e-6);
    }

    #[test]
    fn vi_ising_small_grid_brackets_capacity() {
        let sol = ising_solution();
        let res = ising_value_iteration(201, 24, InnerOpt::default());
        assert!(res.rho_low <= sol.rho_star + 1e-3);
        assert!(res.rho_high >= sol.rho_star - 1e-3);
        assert!(res.rho_high - res.rho_low < 0.05);
        // Span interval shrinks (non-strictly) along iterations.
        for w in res.span_history.windows(2) {
            let (w0, w1) = (w[0], w[1]);
            assert!(w1.1 - w1.0 <= w0.1 - w0.0 + 1e-9);
        }
    }

    #[test]
    fn generic_two_state_path_agrees_with_ising_operator() {
        // Run the generic two-state machinery on a non-Ising-labelled copy
        // of the Ising tables to make sure both paths agree.
        let ising = make_binary_ising();
        let mut kernel = vec![vec![vec![0.0; 2]; 2]; 2];
        let mut next_state = vec![vec![vec![0usize; 2]; 2]; 2];
        for x in 0..2 {
            for s in 0..2 {
                for y in 0..2 {
                    kernel[x][s][y] = ising.prob(y, x, s);
                    next_state[s][x][y] = ising.next_state(s, x, y);
                }
            }
        }
        // Perturb nothing; the constructor name difference is irrelevant,
        // so both dispatches must produce close brackets.
        let copy = UnifilarFsc::new("ising-copy", kernel, next_state).unwrap();
        let spec = ising_value_iteration(81, 10, InnerOpt::default());
        let gen = vi_two_state(&copy, 81, 10, ViOptions::default()).unwrap();
        assert_close(spec.rho_low, gen.rho_low, 5e-3);
        assert_close(spec.rho_high, gen.rho_high, 5e-3);
    }

    #[test]
    fn simulate_deterministic_policy_on_noiseless_channel() {
        // Noiseless binary channel with two frozen states: under the
        // always-send-0 policy the belief is constant.
        let ch = make_binary_ising();
        let grid = vec![0.0, 1.0];
        let policy = IsingPolicy {
            grid: grid.clone(),
            delta: vec![0.0, 1.0], // delta = z: always send x = 0
            gamma: vec![0.0, 0.0],
        };
        let report = simulate_policy(&ch, &policy, 200, 50, 100, 7).unwrap();
        let occupied: Vec<usize> = report
            .histogram
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(occupied.len(), 1);
    }
}
