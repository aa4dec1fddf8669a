//! Extended Blahut-Arimoto optimization of the n-letter directed
//! information over causal-conditioning input laws, with upper and lower
//! sandwich bounds evaluated at every iteration. Blocklengths are desk
//! scale: all sequence tables are dense.

use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};


/// Guard on the dense sequence-table size.
const MAX_TABLE_ENTRIES: usize = 2_000_000;

/// A causal-conditioning channel at horizon `n`: the conditionals
/// `P(y_i | y^{i-1}, x^i)` for `i = 1..n`, stored as a dense table over
/// full sequence codes (the value depends only on the prefix).
#[derive(Debug, Clone)]
pub struct CcKernelTable {
    pub n: usize,
    pub x_size: usize,
    pub y_size: usize,
    /// `cc[xcode][ycode] = P(y^n || x^n)`.
    cc: Vec<Vec<f64>>,
    /// `steps[i-1][ctx(x^i, y^{i-1})][y_i] = P(y_i | y^{i-1}, x^i)`.
    steps: Vec<Vec<Vec<f64>>>,
}

impl CcKernelTable {
    /// Build from per-step conditionals. `steps[i-1]` is indexed by the
    /// history code `x^i * |Y|^{i-1} + y^{i-1}` (digits most significant
    /// first) and lists a pmf over `y_i`.
    pub fn new(
        n: usize,
        x_size: usize,
        y_size: usize,
        steps: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if n == 0 || steps.len() != n {
            return Err(Error::InvalidConfig {
                msg: "causal kernel needs one conditional table per step".into(),
            });
        }
        let xn = x_size.pow(n as u32);
        let yn = y_size.pow(n as u32);
        if xn.saturating_mul(yn) > MAX_TABLE_ENTRIES {
            return Err(Error::SizeGuard {
                what: "sequence table",
                size: xn * yn,
                limit: MAX_TABLE_ENTRIES,
            });
        }
        for (i, table) in steps.iter().enumerate() {
            let contexts = x_size.pow((i + 1) as u32) * y_size.pow(i as u32);
            if table.len() != contexts {
                return Err(Error::ShapeMismatch {
                    what: "causal kernel step contexts",
                    expected: contexts,
                    got: table.len(),
                });
            }
            for row in table {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::NotNormalized {
                        what: format!("causal kernel step {}", i + 1),
                        sum,
                    });
                }
            }
        }
        let mut cc = vec![vec![0.0; yn]; xn];
        for (xcode, row) in cc.iter_mut().enumerate() {
            for (ycode, val) in row.iter_mut().enumerate() {
                let mut p = 1.0;
                for i in 1..=n {
                    let xi_prefix = xcode / x_size.pow((n - i) as u32);
                    let y_prefix = ycode / y_size.pow((n - i + 1) as u32);
                    let y_i = (ycode / y_size.pow((n - i) as u32)) % y_size;
                    let ctx = xi_prefix * y_size.pow((i - 1) as u32) + y_prefix;
                    p *= steps[i - 1][ctx][y_i];
                    if p == 0.0 {
                        break;
                    }
                }
                *val = p;
            }
        }
        Ok(CcKernelTable {
            n,
            x_size,
            y_size,
            cc,
            steps,
        })
    }

    #[inline]
    pub fn cc_prob(&self, xcode: usize, ycode: usize) -> f64 {
        self.cc[xcode][ycode]
    }

    /// `P(y_i | y^{i-1}, x^i)` with 1-based `i` and digit-coded prefixes.
    pub fn step_prob(&self, i: usize, x_prefix: usize, y_prefix: usize, y_i: usize) -> f64 {
        let ctx = x_prefix * self.y_size.pow((i - 1) as u32) + y_prefix;
        self.steps[i - 1][ctx][y_i]
    }
}

/// Materialize the causal conditionals of a unifilar FSC at horizon `n`
/// from a known initial state: the hidden state is tracked exactly through
/// the deterministic evolution.
pub fn unroll_channel(ch: &UnifilarFsc, n: usize, s0: usize) -> Result<CcKernelTable> {
    if s0 >= ch.state_count() {
        return Err(Error::InvalidConfig {
            msg: format!("initial state {s0} out of range"),
        });
    }
    let (xs, ys) = (ch.input_count(), ch.output_count());
    let mut steps = Vec::with_capacity(n);
    for i in 1..=n {
        let contexts = xs.pow(i as u32) * ys.pow((i - 1) as u32);
        let mut table = vec![vec![0.0; ys]; contexts];
        for xcode in 0..xs.pow(i as u32) {
            for ycode in 0..ys.pow((i - 1) as u32) {
                // Replay the prefix to find s_{i-1}.
                let mut s = s0;
                for j in 1..i {
                    let xj = (xcode / xs.pow((i - j) as u32)) % xs;
                    let yj = (ycode / ys.pow((i - 1 - j) as u32)) % ys;
                    s = ch.next_state(s, xj, yj);
                }
                let xi = xcode % xs;
                let ctx = xcode * ys.pow((i - 1) as u32) + ycode;
                for y in 0..ys {
                    table[ctx][y] = ch.prob(y, xi, s);
                }
            }
        }
        steps.push(table);
    }
    CcKernelTable::new(n, xs, ys, steps)
}

/// State of the alternating optimization: the input policy tables
/// `r(x_i | x^{i-1}, y^{i-1})`, the reverse conditional `q(x^n | y^n)`,
/// and the current sandwich.
#[derive(Debug, Clone)]
pub struct BaState {
    pub n: usize,
    /// `r[i-1][ctx(x^{i-1}, y^{i-1})][x_i]`.
    pub r: Vec<Vec<Vec<f64>>>,
    /// `q[xcode][ycode] = q(x^n | y^n)`.
    pub q: Vec<Vec<f64>>,
    pub i_l: f64,
    pub i_u: f64,
    /// `(I_L, I_U)` after every iteration.
    pub history: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

impl BaState {
    /// `r(x^n || y^{n-1})`: product of the per-step input conditionals.
    fn r_cc(&self, table: &CcKernelTable, xcode: usize, ycode: usize) -> f64 {
        let (xs, ys, n) = (table.x_size, table.y_size, self.n);
        let mut p = 1.0;
        for i in 1..=n {
            let x_prefix = xcode / xs.pow((n - i + 1) as u32);
            let y_prefix = ycode / ys.pow((n - i + 1) as u32);
            let x_i = (xcode / xs.pow((n - i) as u32)) % xs;
            let ctx = x_prefix * ys.pow((i - 1) as u32) + y_prefix;
            p *= self.r[i - 1][ctx][x_i];
            if p == 0.0 {
                break;
            }
        }
        p
    }
}

/// Extended Blahut-Arimoto: alternate the backward geometric-mean update of
/// the input tables with the closed-form reverse-conditional update until
/// the sandwich gap `I_U - I_L` falls below `eps` or the budget runs out.
/// A result that exhausts the budget is returned with `converged = false`.
pub fn ba_iterate(table: &CcKernelTable, eps: f64, max_iter: usize) -> Result<BaState> {
    let (n, xs, ys) = (table.n, table.x_size, table.y_size);
    let xn = xs.pow(n as u32);
    let yn = ys.pow(n as u32);

    let mut r: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            let contexts = xs.pow(i as u32) * ys.pow(i as u32);
            vec![vec![1.0 / xs as f64; xs]; contexts]
        })
        .collect();
    let mut state = BaState {
        n,
        r: r.clone(),
        q: vec![vec![0.0; yn]; xn],
        i_l: f64::NEG_INFINITY,
        i_u: f64::INFINITY,
        history: Vec::new(),
        iterations: 0,
        converged: false,
    };
    update_q(&mut state, table);

    for iter in 1..=max_iter {
        // Backward sweep over the input tables, using freshly updated
        // deeper tables within the same sweep.
        for i in (1..=n).rev() {
            let contexts = xs.pow((i - 1) as u32) * ys.pow((i - 1) as u32);
            for ctx in 0..contexts {
                let x_prefix = ctx / ys.pow((i - 1) as u32);
                let y_prefix = ctx % ys.pow((i - 1) as u32);
                let mut weights = vec![0.0; xs];
                for (x_i, w) in weights.iter_mut().enumerate() {
                    let mut exponent = 0.0;
                    // Enumerate futures (y_i..y_n, x_{i+1}..x_n).
                    let x_tail = xs.pow((n - i) as u32);
                    let y_tail = ys.pow((n - i + 1) as u32);
                    for xt in 0..x_tail {
                        let xcode = (x_prefix * xs + x_i) * x_tail + xt;
                        for yt in 0..y_tail {
                            let ycode = y_prefix * y_tail + yt;
                            // Weight: channel terms from step i on, input
                            // terms from step i+1 on.
                            let mut weight = 1.0;
                            let mut log_r_tail = 0.0;
                            for j in i..=n {
                                let xp = xcode / xs.pow((n - j + 1) as u32);
                                let yp = ycode / ys.pow((n - j + 1) as u32);
                                let xj = (xcode / xs.pow((n - j) as u32)) % xs;
                                let yj = (ycode / ys.pow((n - j) as u32)) % ys;
                                weight *= table.step_prob(j, xp * xs + xj, yp, yj);
                                if j > i {
                                    let rctx = xp * ys.pow((j - 1) as u32) + yp;
                                    let rj = state.r[j - 1][rctx][xj];
                                    weight *= rj;
                                    log_r_tail += rj.max(1e-300).log2();
                                }
                                if weight == 0.0 {
                                    break;
                                }
                            }
                            if weight <= 0.0 {
                                continue;
                            }
                            let q_val = state.q[xcode][ycode].max(1e-300);
                            exponent += weight * (q_val.log2() - log_r_tail);
                        }
                    }
                    *w = exponent;
                }
                // Geometric-mean update, normalized over x_i.
                let peak = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut row: Vec<f64> = weights.iter().map(|&e| (e - peak).exp2()).collect();
                let total: f64 = row.iter().sum();
                for v in &mut row {
                    *v /= total;
                }
                state.r[i - 1][ctx] = row;
            }
        }
        r.clone_from(&state.r);
        update_q(&mut state, table);
        let (i_l, i_u) = di_bounds(&state, table);
        state.i_l = i_l;
        state.i_u = i_u;
        state.history.push((i_l, i_u));
        state.iterations = iter;
        if i_u - i_l <= eps {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

fn update_q(state: &mut BaState, table: &CcKernelTable) {
    let xn = table.x_size.pow(table.n as u32);
    let yn = table.y_size.pow(table.n as u32);
    for ycode in 0..yn {
        let mut denom = 0.0;
        for xcode in 0..xn {
            denom += state.r_cc(table, xcode, ycode) * table.cc_prob(xcode, ycode);
        }
        for xcode in 0..xn {
            state.q[xcode][ycode] = if denom > 0.0 {
                state.r_cc(table, xcode, ycode) * table.cc_prob(xcode, ycode) / denom
            } else {
                0.0
            };
        }
    }
}

/// The sandwich bounds of the current state, in bits per symbol:
/// `I_L <= I(X^n -> Y^n)/n <= I_U`.
pub fn di_bounds(state: &BaState, table: &CcKernelTable) -> (f64, f64) {
    let (n, xs, ys) = (table.n, table.x_size, table.y_size);
    let xn = xs.pow(n as u32);
    let yn = ys.pow(n as u32);

    // Lower bound: sum over sequences of P r log(q / r).
    let mut i_l = 0.0;
    for xcode in 0..xn {
        for ycode in 0..yn {
            let p = table.cc_prob(xcode, ycode);
            let rr = state.r_cc(table, xcode, ycode);
            let w = p * rr;
            if w <= 0.0 {
                continue;
            }
            i_l += w * (state.q[xcode][ycode].max(1e-300) / rr).log2();
        }
    }
    i_l /= n as f64;

    // Upper bound: alternating max-over-input / expectation-over-output of
    // the end log-ratio against the induced output law.
    let mut output_law = vec![0.0; yn];
    for (ycode, out) in output_law.iter_mut().enumerate() {
        for xcode in 0..xn {
            *out += table.cc_prob(xcode, ycode) * state.r_cc(table, xcode, ycode);
        }
    }
    let i_u = max_sum_recursion(table, &output_law, 0, 0, 0) / n as f64;
    (i_l, i_u)
}

fn max_sum_recursion(
    table: &CcKernelTable,
    output_law: &[f64],
    level: usize,
    xcode: usize,
    ycode: usize,
) -> f64 {
    let (n, xs, ys) = (table.n, table.x_size, table.y_size);
    if level == n {
        let p = table.cc_prob(xcode, ycode);
        if p <= 0.0 {
            return 0.0;
        }
        return (p / output_law[ycode].max(1e-300)).log2();
    }
    let mut best = f64::NEG_INFINITY;
    for x in 0..xs {
        let x_next = xcode * xs + x;
        let mut acc = 0.0;
        for y in 0..ys {
            let p = table.step_prob(level + 1, x_next, ycode, y);
            if p > 0.0 {
                acc += p * max_sum_recursion(table, output_law, level + 1, x_next, ycode * ys + y);
            }
        }
        best = best.max(acc);
    }
    best
}

/// Report emitted by the CLI wrapper.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BaReport {
    pub n: usize,
    pub iterations: usize,
    pub i_l: f64,
    pub i_u: f64,
    pub converged: bool,
}

impl From<&BaState> for BaReport {
    fn from(s: &BaState) -> Self {
        BaReport {
            n: s.n,
            iterations: s.iterations,
            i_l: s.i_l,
            i_u: s.i_u,
            converged: s.converged,
        }
    }
}
