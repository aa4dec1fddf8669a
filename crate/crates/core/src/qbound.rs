//! The Q-graph upper bound on feedback capacity as a convex program over
//! joint distributions `P(s, q, x, y)`, the BCJR forward map and its
//! invariance test, and the matching lower bound for BCJR-invariant input
//! policies.
//!
//! The program minimizes `-I(X,S;Y|Q)` over the probability simplex subject
//! to two linear operators vanishing: a stationarity operator on the
//! `(S, Q)` marginal and a channel-law consistency operator. It is solved
//! with an augmented-Lagrangian projected-gradient method, then polished in
//! policy coordinates and re-projected onto the exactly feasible set.

use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};
use crate::opt;
use crate::probcore::{conditional_mi_xsq, SqxyTensor};
use crate::qgraph::{sq_kernel, stationary_distribution, InputPolicy, QGraph, SqStationary};

/// Joint distribution over `(S, Q, X, Y)`: the convex-program variable.
pub type JointDist = SqxyTensor;

/// Residuals of the two linear feasibility operators, in max-abs form.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintResiduals {
    pub stationarity: f64,
    pub channel_law: f64,
}

impl ConstraintResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.channel_law)
    }
}

/// The minimization objective `f(P) = -I(X,S;Y|Q)` in bits.
pub fn objective(p: &JointDist) -> f64 {
    -conditional_mi_xsq(p)
}

/// Evaluate both feasibility operators at `P`.
///
/// Stationarity: `P_{S+,Q+}(s,q) - P_{S,Q}(s,q)` where the next-state law
/// pushes mass along `(f(s,x,y), Phi(q,y))`. Channel law:
/// `P(s,q,x,y) - P(y|x,s) sum_y' P(s,q,x,y')`.
pub fn residuals(p: &JointDist, ch: &UnifilarFsc, g: &QGraph) -> ConstraintResiduals {
    let st = stationarity_residual_field(p, ch, g);
    let chl = channel_law_residual_field(p, ch);
    let stationarity = st.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let channel_law = chl.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    ConstraintResiduals {
        stationarity,
        channel_law,
    }
}

fn stationarity_residual_field(p: &JointDist, ch: &UnifilarFsc, g: &QGraph) -> Vec<f64> {
    let (ns, nq, nx, ny) = p.dims;
    let mut field = vec![0.0; ns * nq];
    for s in 0..ns {
        for q in 0..nq {
            for x in 0..nx {
                for y in 0..ny {
                    let w = p.get(s, q, x, y);
                    if w == 0.0 {
                        continue;
                    }
                    let dest = ch.next_state(s, x, y) * nq + g.next(q, y);
                    field[dest] += w;
                    field[s * nq + q] -= w;
                }
            }
        }
    }
    field
}

fn channel_law_residual_field(p: &JointDist, ch: &UnifilarFsc) -> Vec<f64> {
    let (ns, nq, nx, ny) = p.dims;
    let mut field = vec![0.0; ns * nq * nx * ny];
    for s in 0..ns {
        for q in 0..nq {
            for x in 0..nx {
                let row_sum: f64 = (0..ny).map(|y| p.get(s, q, x, y)).sum();
                for y in 0..ny {
                    field[p.idx(s, q, x, y)] = p.get(s, q, x, y) - ch.prob(y, x, s) * row_sum;
                }
            }
        }
    }
    field
}

/// Build the exactly feasible joint `pi(s,q) P(x|s,q) P(y|x,s)` induced by a
/// policy, where `pi` is the stationary law of the `(S, Q)` chain.
pub fn build_joint(ch: &UnifilarFsc, g: &QGraph, pol: &InputPolicy) -> Result<JointDist> {
    let kernel = sq_kernel(ch, g, pol)?;
    let st = stationary_distribution(&kernel, ch.state_count(), g.node_count())?;
    Ok(joint_from_stationary(ch, g, pol, &st))
}

fn joint_from_stationary(
    ch: &UnifilarFsc,
    g: &QGraph,
    pol: &InputPolicy,
    st: &SqStationary,
) -> JointDist {
    let dims = (
        ch.state_count(),
        g.node_count(),
        ch.input_count(),
        ch.output_count(),
    );
    let mut p = SqxyTensor::zeros(dims);
    for s in 0..dims.0 {
        for q in 0..dims.1 {
            for x in 0..dims.2 {
                for y in 0..dims.3 {
                    p.set(s, q, x, y, st.pi[s][q] * pol.prob(x, s, q) * ch.prob(y, x, s));
                }
            }
        }
    }
    p
}

/// Conditional `P(x | s, q)` extracted from a joint. Pairs with marginal
/// mass below `1e-9` get uniform rows; they carry no stationary weight.
pub fn extract_policy(p: &JointDist) -> InputPolicy {
    let (ns, nq, nx, ny) = p.dims;
    let mut rows = vec![vec![vec![1.0 / nx as f64; nx]; nq]; ns];
    for s in 0..ns {
        for q in 0..nq {
            let mass: f64 = (0..nx)
                .map(|x| (0..ny).map(|y| p.get(s, q, x, y)).sum::<f64>())
                .sum();
            if mass < 1e-9 {
                continue;
            }
            for x in 0..nx {
                let xm: f64 = (0..ny).map(|y| p.get(s, q, x, y)).sum();
                rows[s][q][x] = xm / mass;
            }
        }
    }
    InputPolicy { rows }
}

/// Solver configuration. Defaults satisfy the bound's feasibility and
/// accuracy contracts on the built-in channels.
#[derive(Debug, Clone, Copy)]
pub struct QBoundConfig {
    pub feas_tol: f64,
    pub obj_tol: f64,
    pub max_outer: usize,
    pub inner_iters: usize,
    pub penalty0: f64,
    pub penalty_growth: f64,
    /// Nelder-Mead polish in policy coordinates after the first-order stage.
    pub polish: bool,
}

impl Default for QBoundConfig {
    fn default() -> Self {
        QBoundConfig {
            feas_tol: 1e-8,
            obj_tol: 1e-9,
            max_outer: 60,
            inner_iters: 1500,
            penalty0: 4.0,
            penalty_growth: 1.6,
            polish: true,
        }
    }
}

/// Output of the upper-bound solver.
#[derive(Debug, Clone)]
pub struct UpperBoundSolution {
    /// `sup I(X,S;Y|Q)` over the feasible set, in bits.
    pub bound_bits: f64,
    pub joint: JointDist,
    pub policy: InputPolicy,
    pub residuals: ConstraintResiduals,
    pub iterations: usize,
    /// `(s, q)` pairs carrying at least `1e-9` of stationary mass at the
    /// optimum; an optimum may legitimately put zero mass on some pairs.
    pub effective_support: Vec<(usize, usize)>,
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let n = v.len();
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut tau = 0.0;
    let mut hit = false;
    for (k, &u) in sorted.iter().enumerate() {
        acc += u;
        let t = (acc - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            hit = true;
            break;
        }
    }
    if !hit {
        tau = (acc - 1.0) / n as f64;
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// Solve the upper-bound program for a strongly connected channel and an
/// irreducible Q-graph. Returns the bound, an (approximately) maximizing
/// joint with exact feasibility after re-projection, and diagnostics.
pub fn solve_upper(
    ch: &UnifilarFsc,
    g: &QGraph,
    cfg: QBoundConfig,
) -> Result<UpperBoundSolution> {
    if g.output_count() != ch.output_count() {
        return Err(Error::ShapeMismatch {
            what: "Q-graph output alphabet",
            expected: ch.output_count(),
            got: g.output_count(),
        });
    }
    let (ns, nq, nx, ny) = (
        ch.state_count(),
        g.node_count(),
        ch.input_count(),
        ch.output_count(),
    );
    let dims = (ns, nq, nx, ny);
    let n = ns * nq * nx * ny;

    // Start from the uniform-policy feasible point when available, else the
    // uniform tensor.
    let uniform_pol = InputPolicy::uniform(ns, nq, nx);
    let mut p = match build_joint(ch, g, &uniform_pol) {
        Ok(j) => j,
        Err(_) => SqxyTensor::from_data(dims, vec![1.0 / n as f64; n])?,
    };

    let mut lambda_st = vec![0.0; ns * nq];
    let mut lambda_ch = vec![0.0; n];
    let mut penalty = cfg.penalty0;
    let mut iterations = 0usize;
    let mut prev_obj = f64::INFINITY;

    // Destination map for the stationarity operator.
    let mut dest = vec![0usize; n];
    for s in 0..ns {
        for q in 0..nq {
            for x in 0..nx {
                for y in 0..ny {
                    dest[p.idx(s, q, x, y)] = ch.next_state(s, x, y) * nq + g.next(q, y);
                }
            }
        }
    }

    for _outer in 0..cfg.max_outer {
        let step = 0.25 / penalty;
        for _ in 0..cfg.inner_iters {
            iterations += 1;
            let grad = al_gradient(&p, ch, g, &dest, &lambda_st, &lambda_ch, penalty);
            let data = p.data_mut();
            for (v, g_i) in data.iter_mut().zip(&grad) {
                *v -= step * g_i;
            }
            project_simplex(data);
        }
        let st_field = stationarity_residual_field(&p, ch, g);
        let ch_field = channel_law_residual_field(&p, ch);
        for (l, r) in lambda_st.iter_mut().zip(&st_field) {
            *l += penalty * r;
        }
        for (l, r) in lambda_ch.iter_mut().zip(&ch_field) {
            *l += penalty * r;
        }
        let res = residuals(&p, ch, g);
        let obj = objective(&p);
        let feasible = res.max() <= cfg.feas_tol.max(1e-7);
        let settled = (prev_obj - obj).abs() <= cfg.obj_tol.max(1e-8) * obj.abs().max(1.0);
        if feasible && settled {
            break;
        }
        prev_obj = obj;
        penalty = (penalty * cfg.penalty_growth).min(1e7);
    }

    // Re-projection: rebuild the exactly feasible joint from the extracted
    // policy, then locally polish the bound in policy coordinates.
    let mut best_pol = extract_policy(&p);
    let mut best_val = match build_joint(ch, g, &best_pol) {
        Ok(j) => conditional_mi_xsq(&j),
        Err(_) => f64::NEG_INFINITY,
    };
    if cfg.polish {
        let (pol, val) = polish_policy(ch, g, &best_pol, best_val);
        if val > best_val {
            best_val = val;
            best_pol = pol;
        }
        // The optimal face need not be a single point. The lower-bound
        // pipeline wants a BCJR-invariant optimizer when one exists, so
        // walk the face toward small invariance residual without giving up
        // objective value.
        if let Ok(res) = bcjr_invariance_residual(&best_pol, ch, g) {
            if res > 1e-8 {
                if let Some((pol, val)) = select_invariant_on_face(ch, g, &best_pol, best_val) {
                    best_pol = pol;
                    best_val = val;
                }
            }
        }
    }
    let joint = match build_joint(ch, g, &best_pol) {
        Ok(j) => j,
        Err(_) => {
            let res = residuals(&p, ch, g);
            return Err(Error::NonConvergence {
                what: "qbound solver (degenerate extracted policy)",
                iterations,
                residual: res.max(),
            });
        }
    };
    let res = residuals(&joint, ch, g);
    if res.max() > cfg.feas_tol {
        return Err(Error::NonConvergence {
            what: "qbound solver feasibility",
            iterations,
            residual: res.max(),
        });
    }
    let sq = joint.sq_marginal();
    let mut effective_support = Vec::new();
    for (s, row) in sq.iter().enumerate() {
        for (q, &mass) in row.iter().enumerate() {
            if mass >= 1e-9 {
                effective_support.push((s, q));
            }
        }
    }
    Ok(UpperBoundSolution {
        bound_bits: best_val,
        joint,
        policy: best_pol,
        residuals: res,
        iterations,
        effective_support,
    })
}

fn al_gradient(
    p: &JointDist,
    ch: &UnifilarFsc,
    g: &QGraph,
    dest: &[usize],
    lambda_st: &[f64],
    lambda_ch: &[f64],
    penalty: f64,
) -> Vec<f64> {
    let (ns, nq, nx, ny) = p.dims;
    let n = ns * nq * nx * ny;

    // Gradient of the convex surrogate -H(Y|Q) + sum P(s,q,x) H(P(.|x,s)),
    // which agrees with -I(X,S;Y|Q) on the channel-law-consistent set and
    // is convex everywhere: log2 P(y|q) + H(P(.|x,s)), with clamped logs.
    let mut pq = vec![0.0; nq];
    let mut pqy = vec![0.0; nq * ny];
    for s in 0..ns {
        for q in 0..nq {
            for x in 0..nx {
                for y in 0..ny {
                    let w = p.get(s, q, x, y);
                    pq[q] += w;
                    pqy[q * ny + y] += w;
                }
            }
        }
    }
    let row_entropy: Vec<f64> = (0..nx * ns)
        .map(|i| crate::probcore::entropy(ch.output_row(i / ns, i % ns)))
        .collect();
    let st_field = stationarity_residual_field(p, ch, g);
    let ch_field = channel_law_residual_field(p, ch);
    let w_st: Vec<f64> = st_field
        .iter()
        .zip(lambda_st)
        .map(|(r, l)| penalty * r + l)
        .collect();
    let w_ch: Vec<f64> = ch_field
        .iter()
        .zip(lambda_ch)
        .map(|(r, l)| penalty * r + l)
        .collect();

    let mut grad = vec![0.0; n];
    for s in 0..ns {
        for q in 0..nq {
            for x in 0..nx {
                // Block sum for the channel-law operator gradient.
                let mut block = 0.0;
                for y in 0..ny {
                    block += w_ch[p.idx(s, q, x, y)] * ch.prob(y, x, s);
                }
                for y in 0..ny {
                    let idx = p.idx(s, q, x, y);
                    let y_given_q = (pqy[q * ny + y] / pq[q].max(1e-300)).max(1e-15);
                    let obj = y_given_q.log2() + row_entropy[x * ns + s];
                    let st = w_st[dest[idx]] - w_st[s * nq + q];
                    let chl = w_ch[idx] - block;
                    grad[idx] = obj + st + chl;
                }
            }
        }
    }
    grad
}

/// Nelder-Mead refinement of the bound in policy coordinates (the bound as
/// a function of `P(x|s,q)` through the induced stationary law). Local, but
/// seeded at the convex-stage optimum.
fn polish_policy(
    ch: &UnifilarFsc,
    g: &QGraph,
    seed: &InputPolicy,
    seed_val: f64,
) -> (InputPolicy, f64) {
    let (ns, nq, nx) = (ch.state_count(), g.node_count(), ch.input_count());
    let per_row = nx - 1;
    let dim = ns * nq * per_row;
    if dim == 0 {
        return (seed.clone(), seed_val);
    }
    let coords_to_policy = |coords: &[f64]| -> InputPolicy {
        let mut rows = vec![vec![vec![0.0; nx]; nq]; ns];
        for s in 0..ns {
            for q in 0..nq {
                let base = (s * nq + q) * per_row;
                let mut rest = 1.0;
                for x in 0..per_row {
                    let w = coords[base + x].clamp(0.0, 1.0) * rest;
                    rows[s][q][x] = w;
                    rest -= w;
                }
                rows[s][q][nx - 1] = rest.max(0.0);
            }
        }
        InputPolicy { rows }
    };
    // Invert the stick-breaking map at the seed policy.
    let mut start = vec![0.0; dim];
    for s in 0..ns {
        for q in 0..nq {
            let base = (s * nq + q) * per_row;
            let mut rest = 1.0;
            for x in 0..per_row {
                let w = seed.prob(x, s, q);
                start[base + x] = if rest > 1e-12 { (w / rest).clamp(0.0, 1.0) } else { 0.0 };
                rest -= w;
            }
        }
    }
    let mut eval = |coords: &[f64]| -> f64 {
        let pol = coords_to_policy(coords);
        match build_joint(ch, g, &pol) {
            Ok(j) => conditional_mi_xsq(&j),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let (coords, val) = opt::nelder_mead_max(
        &mut eval,
        &start,
        &vec![0.0; dim],
        &vec![1.0; dim],
        1e-12,
        4000,
    );
    (coords_to_policy(&coords), val)
}

/// Walk the (possibly non-unique) optimal face toward a BCJR-invariant
/// maximizer: minimize the invariance residual with a penalty pinning the
/// objective at the optimum. Returns a replacement policy only when it
/// preserves the bound to `1e-9` and strictly reduces the residual.
fn select_invariant_on_face(
    ch: &UnifilarFsc,
    g: &QGraph,
    seed: &InputPolicy,
    bound: f64,
) -> Option<(InputPolicy, f64)> {
    let (ns, nq, nx) = (ch.state_count(), g.node_count(), ch.input_count());
    let per_row = nx - 1;
    let dim = ns * nq * per_row;
    if dim == 0 {
        return None;
    }
    let coords_to_policy = |coords: &[f64]| -> InputPolicy {
        let mut rows = vec![vec![vec![0.0; nx]; nq]; ns];
        for s in 0..ns {
            for q in 0..nq {
                let base = (s * nq + q) * per_row;
                let mut rest = 1.0;
                for x in 0..per_row {
                    let w = coords[base + x].clamp(0.0, 1.0) * rest;
                    rows[s][q][x] = w;
                    rest -= w;
                }
                rows[s][q][nx - 1] = rest.max(0.0);
            }
        }
        InputPolicy { rows }
    };
    let mut start = vec![0.0; dim];
    for s in 0..ns {
        for q in 0..nq {
            let base = (s * nq + q) * per_row;
            let mut rest = 1.0;
            for x in 0..per_row {
                let w = seed.prob(x, s, q);
                start[base + x] = if rest > 1e-12 { (w / rest).clamp(0.0, 1.0) } else { 0.0 };
                rest -= w;
            }
        }
    }
    let seed_res = bcjr_invariance_residual(seed, ch, g).ok()?;
    // Penalty weight schedule: heavier pinning of the objective as the
    // residual shrinks.
    let mut current = start;
    for &pin in &[1e2, 1e4, 1e6] {
        let mut eval = |coords: &[f64]| -> f64 {
            let pol = coords_to_policy(coords);
            let val = match build_joint(ch, g, &pol) {
                Ok(j) => conditional_mi_xsq(&j),
                Err(_) => return f64::NEG_INFINITY,
            };
            let res = match bcjr_invariance_residual(&pol, ch, g) {
                Ok(r) => r,
                Err(_) => return f64::NEG_INFINITY,
            };
            -(res + pin * (bound - val).max(0.0))
        };
        let (coords, _) = opt::nelder_mead_max(
            &mut eval,
            &current,
            &vec![0.0; dim],
            &vec![1.0; dim],
            1e-12,
            6000,
        );
        current = coords;
    }
    let pol = coords_to_policy(&current);
    let val = build_joint(ch, g, &pol)
        .map(|j| conditional_mi_xsq(&j))
        .ok()?;
    let res = bcjr_invariance_residual(&pol, ch, g).ok()?;
    if val >= bound - 1e-9 && res < seed_res {
        Some((pol, val))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// BCJR forward map, invariance, and the lower bound.
// ---------------------------------------------------------------------------

/// One BCJR forward step: update the belief over channel states held at
/// node `q` after observing output `y`, under policy `P(x|s,q)`.
pub fn bcjr_map(
    pi_s_given_q: &[f64],
    y: usize,
    pol: &InputPolicy,
    ch: &UnifilarFsc,
    q: usize,
) -> Result<Vec<f64>> {
    let ns = ch.state_count();
    let mut next = vec![0.0; ns];
    for s in 0..ns {
        for x in 0..ch.input_count() {
            let w = pi_s_given_q[s] * pol.prob(x, s, q) * ch.prob(y, x, s);
            if w > 0.0 {
                next[ch.next_state(s, x, y)] += w;
            }
        }
    }
    let total: f64 = next.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroProbabilityOutput { y });
    }
    for v in &mut next {
        *v /= total;
    }
    Ok(next)
}

/// Maximum over `(q, y)` with positive output mass of the sup-norm gap
/// between the BCJR image of `pi_{S|Q=q}` and `pi_{S|Q=Phi(q,y)}`.
pub fn bcjr_invariance_residual(
    pol: &InputPolicy,
    ch: &UnifilarFsc,
    g: &QGraph,
) -> Result<f64> {
    let kernel = sq_kernel(ch, g, pol)?;
    let st = stationary_distribution(&kernel, ch.state_count(), g.node_count())?;
    let mut worst = 0.0_f64;
    for q in 0..g.node_count() {
        let belief = st.s_given_q(q);
        for y in 0..ch.output_count() {
            let mass: f64 = (0..ch.state_count())
                .map(|s| {
                    (0..ch.input_count())
                        .map(|x| belief[s] * pol.prob(x, s, q) * ch.prob(y, x, s))
                        .sum::<f64>()
                })
                .sum();
            if mass <= 1e-12 {
                continue;
            }
            let mapped = bcjr_map(&belief, y, pol, ch, q)?;
            let target = st.s_given_q(g.next(q, y));
            let gap = mapped
                .iter()
                .zip(&target)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(gap);
        }
    }
    Ok(worst)
}

/// Q-graph lower bound `I(X,S;Y|Q)` for a BCJR-invariant policy. Errors
/// when the invariance residual exceeds `tol` (the bound is then invalid).
pub fn lower_bound(pol: &InputPolicy, ch: &UnifilarFsc, g: &QGraph, tol: f64) -> Result<f64> {
    let residual = bcjr_invariance_residual(pol, ch, g)?;
    if residual > tol {
        return Err(Error::LowerBoundInapplicable { residual, tol });
    }
    let joint = build_joint(ch, g, pol)?;
    Ok(conditional_mi_xsq(&joint))
}

/// The BCJR-invariant maximizer of the binary Ising channel on its 4-node
/// output graph, parameterized by the root `a` of `a^3 = (1-a)^4`. Rows for
/// the two zero-mass pairs are completed uniformly.
pub fn ising_q1_invariant_policy(a: f64) -> InputPolicy {
    let b = (1.0 - a) / (2.0 * a + 6.0);
    let heavy = 0.25 - 1.5 * b; // joint mass of the clean action at q = 3, 4
    let keep = heavy / (0.25 + 0.5 * b);
    let flip = 2.0 * b / (0.25 + 0.5 * b);
    // rows[s][q] = P(x | s, q), nodes 0..3 are the source's q = 1..4.
    let rows = vec![
        vec![
            vec![0.5, 0.5],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![keep, flip],
        ],
        vec![
            vec![flip, keep],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5],
        ],
    ];
    InputPolicy { rows }
}
