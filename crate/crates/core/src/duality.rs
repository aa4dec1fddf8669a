//! Dual upper bounds on feedback capacity from graph-based test
//! distributions. Fixing a Q-graph and edge weights `T(y|q)` turns the
//! bound into a finite average-reward MDP over `(s, q)` with deterministic
//! input actions and KL rewards; policy iteration, fixed-policy solves, and
//! Bellman verification certify the resulting number as an upper bound.

use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};
use crate::linalg;
use crate::markov;
use crate::opt;
use crate::probcore::PMF_TOL;
use crate::qgraph::QGraph;

/// Edge weights `T(y | q)` on a Q-graph: one output pmf per node.
#[derive(Debug, Clone, PartialEq)]
pub struct TestDistribution {
    /// `rows[q][y]`
    pub rows: Vec<Vec<f64>>,
}

impl TestDistribution {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (q, row) in rows.iter().enumerate() {
            for &w in row {
                if w < 0.0 {
                    return Err(Error::NegativeProbability {
                        what: format!("test distribution row q={q}"),
                        value: w,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PMF_TOL {
                return Err(Error::NotNormalized {
                    what: format!("test distribution row q={q}"),
                    sum,
                });
            }
        }
        Ok(TestDistribution { rows })
    }

    #[inline]
    pub fn prob(&self, y: usize, q: usize) -> f64 {
        self.rows[q][y]
    }
}

/// The test distribution family for the Ising channel on its 4-node graph:
/// `T(y=0|q) = [(1-a)/2, (1-a)/(1+a), 2a/(1+a), (1+a)/2]` for the source's
/// nodes `q = 1..4`.
pub fn ising_test_dist(a: f64) -> Result<TestDistribution> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::OutOfRange {
            what: "Ising test-distribution parameter",
            value: a,
            range: "(0, 1)",
        });
    }
    let zeros = [
        (1.0 - a) / 2.0,
        (1.0 - a) / (1.0 + a),
        2.0 * a / (1.0 + a),
        (1.0 + a) / 2.0,
    ];
    TestDistribution::new(zeros.iter().map(|&t| vec![t, 1.0 - t]).collect())
}

/// The finite MDP of the dual bound: states `(s, q)` flattened as
/// `s * |Q| + q`, actions are channel inputs, rewards are KL divergences
/// `D(P(.|x,s) || T(.|q))` in bits, and transitions follow
/// `(s, q) -> (f(s,x,y), Phi(q,y))` with probability `P(y|x,s)`.
#[derive(Debug, Clone)]
pub struct DualMdp {
    pub state_count: usize,
    pub node_count: usize,
    pub action_count: usize,
    /// `rewards[z][x]`
    pub rewards: Vec<Vec<f64>>,
    /// `transitions[z][x]` is a sparse list of `(next_state, prob)`.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
}

impl DualMdp {
    pub fn flat_states(&self) -> usize {
        self.state_count * self.node_count
    }

    /// Transition matrix and reward vector induced by a deterministic
    /// policy (one action per flat state).
    pub fn induced(&self, policy: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.flat_states();
        let mut p = vec![vec![0.0; n]; n];
        let mut r = vec![0.0; n];
        for z in 0..n {
            let x = policy[z];
            r[z] = self.rewards[z][x];
            for &(dest, w) in &self.transitions[z][x] {
                p[z][dest] += w;
            }
        }
        (p, r)
    }
}

/// Build the dual MDP, checking the support condition: wherever the channel
/// can emit `y`, the test distribution must give it positive mass.
pub fn build_dual_mdp(ch: &UnifilarFsc, g: &QGraph, t: &TestDistribution) -> Result<DualMdp> {
    if t.rows.len() != g.node_count() {
        return Err(Error::ShapeMismatch {
            what: "test distribution node count",
            expected: g.node_count(),
            got: t.rows.len(),
        });
    }
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
    let n = ns * nq;
    let mut rewards = vec![vec![0.0; nx]; n];
    let mut transitions = vec![vec![Vec::new(); nx]; n];
    for s in 0..ns {
        for q in 0..nq {
            let z = s * nq + q;
            for x in 0..nx {
                let mut kl = 0.0;
                for y in 0..ny {
                    let p = ch.prob(y, x, s);
                    if p <= 0.0 {
                        continue;
                    }
                    let tq = t.prob(y, q);
                    if tq <= 0.0 {
                        return Err(Error::TestSupportViolation { y, x, s, q });
                    }
                    kl += p * (p / tq).log2();
                    transitions[z][x].push((ch.next_state(s, x, y) * nq + g.next(q, y), p));
                }
                rewards[z][x] = kl.max(0.0);
            }
        }
    }
    Ok(DualMdp {
        state_count: ns,
        node_count: nq,
        action_count: nx,
        rewards,
        transitions,
    })
}

/// Scalar average reward and relative value of a fixed deterministic
/// policy, solved from `rho + V(z) = r(z) + sum_z' P(z,z') V(z')`.
///
/// The induced chain may have several closed classes provided they share
/// the same gain (otherwise no scalar `rho` exists and the solve errors).
/// `V` carries one free constant per closed class; `gauges` pins them,
/// giving each listed recurrent state the listed value. Classes without a
/// pin are anchored at their first state with value zero.
#[derive(Debug, Clone)]
pub struct FixedPolicyValue {
    pub rho: f64,
    pub v: Vec<f64>,
    /// Max residual of the fixed-policy equations at the solution.
    pub residual: f64,
}

pub fn fixed_policy_solve(
    mdp: &DualMdp,
    policy: &[usize],
    gauges: &[(usize, f64)],
) -> Result<FixedPolicyValue> {
    let n = mdp.flat_states();
    let (p, r) = mdp.induced(policy);
    let structure = markov::chain_structure(&p);
    let mut gains = Vec::new();
    for class in &structure.closed_classes {
        let mu = markov::stationary_in_class(&p, class)?;
        gains.push(mu.iter().zip(&r).map(|(m, rew)| m * rew).sum::<f64>());
    }
    let spread = gains.iter().fold(f64::NEG_INFINITY, |m, &g| m.max(g))
        - gains.iter().fold(f64::INFINITY, |m, &g| m.min(g));
    if spread > 1e-9 {
        return Err(Error::MultichainUnequalGains { gains });
    }
    let rho = gains[0];

    // Stack (I - P) V = r - rho with one gauge row per closed class.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + structure.closed_classes.len());
    let mut rhs: Vec<f64> = Vec::with_capacity(n + structure.closed_classes.len());
    for z in 0..n {
        let mut row = vec![0.0; n];
        row[z] += 1.0;
        for (j, w) in p[z].iter().enumerate() {
            row[j] -= w;
        }
        rows.push(row);
        rhs.push(r[z] - rho);
    }
    for class in &structure.closed_classes {
        let pin = gauges
            .iter()
            .find(|(state, _)| class.contains(state))
            .copied()
            .unwrap_or((class[0], 0.0));
        let mut row = vec![0.0; n];
        row[pin.0] = 1.0;
        rows.push(row);
        rhs.push(pin.1);
    }
    let v = linalg::lstsq(&rows, &rhs)?;
    let mut residual = 0.0_f64;
    for z in 0..n {
        let mut acc = r[z] - rho - v[z];
        for (j, w) in p[z].iter().enumerate() {
            acc += w * v[j];
        }
        residual = residual.max(acc.abs());
    }
    if residual > 1e-9 {
        return Err(Error::SingularSystem);
    }
    Ok(FixedPolicyValue { rho, v, residual })
}

/// Solution of the dual MDP: the certified upper bound `rho` (the minimum
/// over initial states of the optimal gain), the optimal deterministic
/// policy, per-state gains, a bias vector, and the Bellman residual.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub rho: f64,
    pub gains: Vec<f64>,
    pub v: Vec<f64>,
    pub policy: Vec<usize>,
    pub bellman_violation: f64,
    pub iterations: usize,
}

/// Howard-style policy iteration with exact gain/bias evaluation. Candidate
/// policies may induce several closed classes; gains are handled as a
/// vector, so no unichain assumption is needed. Improvement is two-phase:
/// first on the gain, then on the bias among gain-preserving actions.
pub fn policy_iteration(mdp: &DualMdp) -> Result<DualSolution> {
    let n = mdp.flat_states();
    let tol = 1e-10;
    // Greedy-on-reward start.
    let mut policy: Vec<usize> = (0..n)
        .map(|z| {
            (0..mdp.action_count)
                .max_by(|&a, &b| {
                    mdp.rewards[z][a]
                        .partial_cmp(&mdp.rewards[z][b])
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .unwrap()
        })
        .collect();
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        if iterations > 500 {
            return Err(Error::NonConvergence {
                what: "dual policy iteration",
                iterations,
                residual: f64::NAN,
            });
        }
        let (p, r) = mdp.induced(&policy);
        let (gain, bias) = markov::gain_bias(&p, &r)?;
        let mut changed = false;
        let mut next_policy = policy.clone();
        for z in 0..n {
            let q_gain = |x: usize| -> f64 {
                mdp.transitions[z][x]
                    .iter()
                    .map(|&(dest, w)| w * gain[dest])
                    .sum()
            };
            let q_bias = |x: usize| -> f64 {
                mdp.rewards[z][x] - gain[z]
                    + mdp.transitions[z][x]
                        .iter()
                        .map(|&(dest, w)| w * bias[dest])
                        .sum::<f64>()
            };
            let current_gain = q_gain(policy[z]);
            let best_gain = (0..mdp.action_count)
                .map(q_gain)
                .fold(f64::NEG_INFINITY, f64::max);
            if best_gain > current_gain + tol {
                let x = (0..mdp.action_count)
                    .find(|&x| q_gain(x) >= best_gain - tol)
                    .unwrap();
                next_policy[z] = x;
                changed = true;
                continue;
            }
            // Among gain-preserving actions, improve the bias.
            let current_bias = q_bias(policy[z]);
            let mut best_x = policy[z];
            let mut best_bias = current_bias;
            for x in 0..mdp.action_count {
                if q_gain(x) >= best_gain - tol && q_bias(x) > best_bias + tol {
                    best_x = x;
                    best_bias = q_bias(x);
                }
            }
            if best_x != policy[z] {
                next_policy[z] = best_x;
                changed = true;
            }
        }
        if !changed {
            let rho = gain.iter().fold(f64::INFINITY, |m, &g| m.min(g));
            let violation = bellman_verify(mdp, rho, &bias);
            return Ok(DualSolution {
                rho,
                gains: gain,
                v: bias,
                policy,
                bellman_violation: violation,
                iterations,
            });
        }
        policy = next_policy;
    }
}

/// Maximum Bellman-equation violation of a candidate `(rho, V)` pair:
/// `max_z [ max_x (r(z,x) + sum P(z,x,.) V) - (rho + V(z)) ]`.
/// A non-positive result (within tolerance) certifies `rho` as an upper
/// bound on the optimal average reward.
pub fn bellman_verify(mdp: &DualMdp, rho: f64, v: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for z in 0..mdp.flat_states() {
        let best = (0..mdp.action_count)
            .map(|x| {
                mdp.rewards[z][x]
                    + mdp.transitions[z][x]
                        .iter()
                        .map(|&(dest, w)| w * v[dest])
                        .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(best - (rho + v[z]));
    }
    worst
}

/// Scalar test-distribution families for the parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFamily {
    /// The 4-node Ising family `ising_test_dist(a)`.
    IsingQ1,
    /// A single-node Bernoulli test distribution `T(y=0) = t` for binary
    /// output channels quantized to one node.
    BernoulliSingleNode,
}

impl TestFamily {
    pub fn make(&self, a: f64, node_count: usize) -> Result<TestDistribution> {
        match self {
            TestFamily::IsingQ1 => {
                if node_count != 4 {
                    return Err(Error::InvalidConfig {
                        msg: "Ising test family needs the 4-node graph".into(),
                    });
                }
                ising_test_dist(a)
            }
            TestFamily::BernoulliSingleNode => {
                if node_count != 1 {
                    return Err(Error::InvalidConfig {
                        msg: "Bernoulli test family needs a single-node graph".into(),
                    });
                }
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::OutOfRange {
                        what: "Bernoulli test parameter",
                        value: a,
                        range: "(0, 1)",
                    });
                }
                TestDistribution::new(vec![vec![a, 1.0 - a]])
            }
        }
    }
}

/// Result of the scalar sweep: the minimizing parameter and bound, plus a
/// flag marking a minimizer pinned at the range boundary.
#[derive(Debug, Clone, Copy)]
pub struct OptimizedTestParam {
    pub a: f64,
    pub rho: f64,
    pub boundary: bool,
}

/// Minimize the policy-iteration bound over a scalar test family by a
/// coarse unimodality scan followed by golden-section refinement.
pub fn optimize_test_param(
    ch: &UnifilarFsc,
    g: &QGraph,
    family: TestFamily,
    range: (f64, f64),
    tol: f64,
) -> Result<OptimizedTestParam> {
    let (lo, hi) = range;
    // Negated so NaN endpoints are rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(lo < hi) {
        return Err(Error::InvalidConfig {
            msg: "empty test-parameter range".into(),
        });
    }
    let bound_at = |a: f64| -> Result<f64> {
        let t = family.make(a, g.node_count())?;
        let mdp = build_dual_mdp(ch, g, &t)?;
        Ok(policy_iteration(&mdp)?.rho)
    };
    let scan_points = 33usize;
    let mut scan = Vec::with_capacity(scan_points);
    for i in 0..scan_points {
        let a = lo + (hi - lo) * i as f64 / (scan_points - 1) as f64;
        scan.push((a, bound_at(a)?));
    }
    // Unimodality check: a single descending-then-ascending pattern.
    let min_idx = scan
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let noise = 1e-12;
    for w in scan[..=min_idx].windows(2) {
        if w[1].1 > w[0].1 + noise {
            return Err(Error::BracketFailure);
        }
    }
    for w in scan[min_idx..].windows(2) {
        if w[1].1 < w[0].1 - noise {
            return Err(Error::BracketFailure);
        }
    }
    if min_idx == 0 || min_idx == scan_points - 1 {
        let (a, rho) = scan[min_idx];
        return Ok(OptimizedTestParam {
            a,
            rho,
            boundary: true,
        });
    }
    let bracket = (scan[min_idx - 1].0, scan[min_idx + 1].0);
    let (a, rho) = opt::golden_section_min(
        |a| bound_at(a).unwrap_or(f64::INFINITY),
        bracket.0,
        bracket.1,
        tol,
    );
    Ok(OptimizedTestParam {
        a,
        rho,
        boundary: false,
    })
}

/// Flat index of the dual-MDP state `(s, q)` using the customary
/// 1-indexed node labels.
pub fn state_index(mdp: &DualMdp, s: usize, q_one_indexed: usize) -> usize {
    s * mdp.node_count + (q_one_indexed - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief_mdp::ising_solution;
    use crate::channels::{make_binary_ising, make_bsc};
    use crate::probcore::h2;
    use crate::qgraph::ising_q1;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn ising_mdp(a: f64) -> DualMdp {
        let ch = make_binary_ising();
        let g = ising_q1();
        build_dual_mdp(&ch, &g, &ising_test_dist(a).unwrap()).unwrap()
    }

    /// The repeat-state policy x(s, q) = s.
    fn repeat_state_policy(mdp: &DualMdp) -> Vec<usize> {
        (0..mdp.flat_states())
            .map(|z| z / mdp.node_count)
            .collect()
    }

    /// Closed-form value function of the dual Ising MDP, in bits.
    fn closed_form_values(a: f64) -> Vec<(usize, usize, f64)> {
        let rho = -0.5 * a.log2();
        vec![
            (0, 1, 1.0 - (1.0 - a).log2()),
            (0, 2, ((1.0 + a) / (1.0 - a)).log2()),
            (0, 3, (1.0 + a).log2() + 2.0 * rho - 1.0),
            (0, 4, rho),
            (1, 1, rho),
            (1, 2, (1.0 + a).log2() + 2.0 * rho - 1.0),
            (1, 3, ((1.0 + a) / (1.0 - a)).log2()),
            (1, 4, 1.0 - (1.0 - a).log2()),
        ]
    }

    #[test]
    fn rewards_match_closed_forms() {
        let a = 0.4;
        let mdp = ising_mdp(a);
        // (s=0, q=1, x=0): clean zero against T(0|1) = (1-a)/2.
        let z = state_index(&mdp, 0, 1);
        assert_close(mdp.rewards[z][0], (2.0 / (1.0 - a)).log2(), 1e-12);
        // Uniform test row on a single-node graph: log2|Y| - H(P(.|x,s)).
        let ch = make_bsc(0.1).unwrap();
        let g1 = crate::qgraph::QGraph::new("q1node", vec![vec![0, 0]], 0).unwrap();
        let t = TestDistribution::new(vec![vec![0.5, 0.5]]).unwrap();
        let m = build_dual_mdp(&ch, &g1, &t).unwrap();
        assert_close(m.rewards[0][0], 1.0 - h2(0.1), 1e-12);
    }

    #[test]
    fn test_dist_rows() {
        // At a = 1/3 the second node's row is the fair coin.
        let t = ising_test_dist(1.0 / 3.0).unwrap();
        assert_close(t.prob(0, 1), 0.5, 1e-15);
        // Node 3 carries 2a/(1+a) on y = 0.
        let a = 0.4;
        let t = ising_test_dist(a).unwrap();
        assert_close(t.prob(0, 2), 2.0 * a / (1.0 + a), 1e-15);
        for q in 0..4 {
            assert_close(t.prob(0, q) + t.prob(1, q), 1.0, 1e-15);
        }
        assert!(ising_test_dist(0.0).is_err());
        assert!(ising_test_dist(1.0).is_err());
    }

    #[test]
    fn support_violation_is_reported() {
        let ch = make_binary_ising();
        let g = ising_q1();
        let t = TestDistribution::new(vec![
            vec![1.0, 0.0],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        ])
        .unwrap();
        assert!(matches!(
            build_dual_mdp(&ch, &g, &t),
            Err(Error::TestSupportViolation { q: 0, .. })
        ));
    }

    #[test]
    fn fixed_policy_reproduces_closed_form_on_grid() {
        // rho(a) = -0.5 log2 a and the value identities hold for every a,
        // with gauges pinning V(0,4) and V(1,1) to rho(a).
        for i in 0..=30 {
            let a = 0.3 + 0.3 * i as f64 / 30.0;
            let mdp = ising_mdp(a);
            let policy = repeat_state_policy(&mdp);
            let rho = -0.5 * a.log2();
            let gauges = [
                (state_index(&mdp, 0, 4), rho),
                (state_index(&mdp, 1, 1), rho),
            ];
            let sol = fixed_policy_solve(&mdp, &policy, &gauges).unwrap();
            assert_close(sol.rho, rho, 1e-10);
            for (s, q, expect) in closed_form_values(a) {
                assert_close(sol.v[state_index(&mdp, s, q)], expect, 1e-9);
            }
        }
    }

    #[test]
    fn constant_rewards_give_constant_gain() {
        let mut mdp = ising_mdp(0.45);
        for z in 0..mdp.flat_states() {
            for x in 0..mdp.action_count {
                mdp.rewards[z][x] = 0.7;
            }
        }
        let policy = repeat_state_policy(&mdp);
        let sol = fixed_policy_solve(&mdp, &policy, &[]).unwrap();
        assert_close(sol.rho, 0.7, 1e-12);
        for &v in &sol.v {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn bellman_holds_at_the_root_and_breaks_above_it() {
        let sol = ising_solution();
        let mdp = ising_mdp(sol.a);
        let policy = repeat_state_policy(&mdp);
        let rho = -0.5 * sol.a.log2();
        let gauges = [
            (state_index(&mdp, 0, 4), rho),
            (state_index(&mdp, 1, 1), rho),
        ];
        let fixed = fixed_policy_solve(&mdp, &policy, &gauges).unwrap();
        let violation = bellman_verify(&mdp, fixed.rho, &fixed.v);
        assert!(violation.abs() <= 1e-9, "violation {violation}");

        // Above the root the repeat-state policy stops being optimal: the
        // max-form equation is strictly violated somewhere.
        let a = 0.55;
        let mdp = ising_mdp(a);
        let rho = -0.5 * a.log2();
        let gauges = [
            (state_index(&mdp, 0, 4), rho),
            (state_index(&mdp, 1, 1), rho),
        ];
        let fixed = fixed_policy_solve(&mdp, &policy, &gauges).unwrap();
        let violation = bellman_verify(&mdp, fixed.rho, &fixed.v);
        assert!(violation > 1e-3, "violation {violation}");
    }

    #[test]
    fn suboptimal_action_gap_at_state_01_is_one_bit() {
        // At (s=0, q=1) the clean action beats the flip action by exactly
        // one bit for every parameter value.
        for &a in &[0.3, 0.4503, 0.6] {
            let mdp = ising_mdp(a);
            let policy = repeat_state_policy(&mdp);
            let rho = -0.5 * a.log2();
            let gauges = [
                (state_index(&mdp, 0, 4), rho),
                (state_index(&mdp, 1, 1), rho),
            ];
            let fixed = fixed_policy_solve(&mdp, &policy, &gauges).unwrap();
            let z = state_index(&mdp, 0, 1);
            let q_value = |x: usize| {
                mdp.rewards[z][x]
                    + mdp.transitions[z][x]
                        .iter()
                        .map(|&(d, w)| w * fixed.v[d])
                        .sum::<f64>()
            };
            assert_close(q_value(0) - q_value(1), 1.0, 1e-9);
        }
    }

    #[test]
    fn policy_iteration_solves_the_ising_mdp() {
        let sol = ising_solution();
        // At and below the root the bound is exactly -0.5 log2 a.
        for &a in &[0.32, 0.4, sol.a] {
            let mdp = ising_mdp(a);
            let out = policy_iteration(&mdp).unwrap();
            assert_close(out.rho, -0.5 * a.log2(), 1e-9);
            assert!(out.bellman_violation <= 1e-9, "{}", out.bellman_violation);
        }
        // Above the root some policy beats repeat-state, so the bound is
        // strictly larger than -0.5 log2 a and larger than rho*.
        let a = 0.55;
        let mdp = ising_mdp(a);
        let out = policy_iteration(&mdp).unwrap();
        assert!(out.rho > -0.5 * a.log2() + 1e-4);
        assert!(out.rho > sol.rho_star);
    }

    #[test]
    fn single_action_mdp_gain_is_stationary_average() {
        let mdp = ising_mdp(0.45);
        let only_zero = DualMdp {
            state_count: mdp.state_count,
            node_count: mdp.node_count,
            action_count: 1,
            rewards: mdp.rewards.iter().map(|r| vec![r[0]]).collect(),
            transitions: mdp.transitions.iter().map(|t| vec![t[0].clone()]).collect(),
        };
        let out = policy_iteration(&only_zero).unwrap();
        let (p, r) = only_zero.induced(&vec![0; only_zero.flat_states()]);
        let (gain, _) = markov::gain_bias(&p, &r).unwrap();
        let expect = gain.iter().fold(f64::INFINITY, |m, &g| m.min(g));
        assert_close(out.rho, expect, 1e-12);
    }

    #[test]
    fn policy_iteration_matches_exhaustive_enumeration() {
        // Oracle: max over all |X|^{|S||Q|} deterministic policies of the
        // min-over-states gain, on small random instances.
        let mut state = 7u64;
        let mut unit = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let g = crate::qgraph::debruijn(1, 2).unwrap();
        for _ in 0..12 {
            // Random 2-state binary channel with full-support rows and a
            // random deterministic state map.
            let mut kernel = vec![vec![vec![0.0; 2]; 2]; 2];
            let mut next_state = vec![vec![vec![0usize; 2]; 2]; 2];
            for x in 0..2 {
                for s in 0..2 {
                    let w = 0.05 + 0.9 * unit();
                    kernel[x][s] = vec![w, 1.0 - w];
                    for y in 0..2 {
                        next_state[s][x][y] = if unit() < 0.5 { 0 } else { 1 };
                    }
                }
            }
            let ch = crate::channels::UnifilarFsc::new("rand", kernel, next_state).unwrap();
            let t = TestDistribution::new(vec![vec![0.4, 0.6], vec![0.55, 0.45]]).unwrap();
            let mdp = match build_dual_mdp(&ch, &g, &t) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let n = mdp.flat_states();
            let mut oracle = f64::NEG_INFINITY;
            for mask in 0..(1usize << n) {
                let policy: Vec<usize> = (0..n).map(|z| (mask >> z) & 1).collect();
                let (p, r) = mdp.induced(&policy);
                let (gain, _) = markov::gain_bias(&p, &r).unwrap();
                let min_gain = gain.iter().fold(f64::INFINITY, |m, &g| m.min(g));
                oracle = oracle.max(min_gain);
            }
            let out = policy_iteration(&mdp).unwrap();
            assert_close(out.rho, oracle, 1e-9);
        }
    }

    #[test]
    fn golden_section_recovers_the_root() {
        let sol = ising_solution();
        let ch = make_binary_ising();
        let g = ising_q1();
        let out = optimize_test_param(&ch, &g, TestFamily::IsingQ1, (0.3, 0.6), 1e-6).unwrap();
        assert!(!out.boundary);
        assert_close(out.a, sol.a, 1e-4);
        assert_close(out.rho, sol.rho_star, 1e-6);

        // A range that excludes the root pins the minimizer at a boundary.
        let out = optimize_test_param(&ch, &g, TestFamily::IsingQ1, (0.2, 0.35), 1e-6).unwrap();
        assert!(out.boundary);
        assert_close(out.a, 0.35, 1e-12);
    }

    #[test]
    fn degenerate_family_recovers_dual_dmc_bound() {
        let ch = make_bsc(0.1).unwrap();
        let g = crate::qgraph::QGraph::new("q1node", vec![vec![0, 0]], 0).unwrap();
        let out =
            optimize_test_param(&ch, &g, TestFamily::BernoulliSingleNode, (0.05, 0.95), 1e-9)
                .unwrap();
        // min over T of max_x D(P(.|x) || T) is the BSC capacity at T = 1/2.
        // The minimum is V-shaped, so the value error is linear in the
        // parameter tolerance.
        assert_close(out.a, 0.5, 1e-6);
        assert_close(out.rho, 1.0 - h2(0.1), 1e-7);
    }

    #[test]
    fn kl_rewards_nonnegative_and_rho_nonnegative() {
        let mdp = ising_mdp(0.37);
        for row in &mdp.rewards {
            for &r in row {
                assert!(r >= 0.0);
            }
        }
        let out = policy_iteration(&mdp).unwrap();
        assert!(out.rho >= 0.0);
    }
}
