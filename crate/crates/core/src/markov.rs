//! Finite Markov-chain structure analysis: communicating classes, periods,
//! stationary distributions, the Cesàro limiting matrix, and average-reward
//! gain/bias pairs for a fixed transition matrix.

use crate::error::{Error, Result};
use crate::linalg;

/// Support threshold below which a transition probability is treated as zero.
const SUPPORT_TOL: f64 = 1e-14;

/// Decomposition of a finite chain into closed (recurrent) classes and the
/// remaining transient states.
#[derive(Debug, Clone)]
pub struct ChainStructure {
    /// Closed communicating classes, each sorted ascending.
    pub closed_classes: Vec<Vec<usize>>,
    /// States not in any closed class.
    pub transient: Vec<usize>,
}

/// Strongly connected components of the support graph (Kosaraju).
fn sccs(p: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = p.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    // Iterative DFS with explicit post-order.
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        seen[start] = true;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < n {
                let j = *next;
                *next += 1;
                if p[node][j] > SUPPORT_TOL && !seen[j] {
                    seen[j] = true;
                    stack.push((j, 0));
                }
            } else {
                order.push(node);
                stack.pop();
            }
        }
    }
    // Reverse graph DFS in reverse post-order.
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    for &start in order.iter().rev() {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = count;
        while let Some(node) = stack.pop() {
            for i in 0..n {
                if p[i][node] > SUPPORT_TOL && comp[i] == usize::MAX {
                    comp[i] = count;
                    stack.push(i);
                }
            }
        }
        count += 1;
    }
    let mut classes = vec![Vec::new(); count];
    for (state, &c) in comp.iter().enumerate() {
        classes[c].push(state);
    }
    classes
}

/// Classify states of a stochastic matrix into closed classes and transients.
pub fn chain_structure(p: &[Vec<f64>]) -> ChainStructure {
    let classes = sccs(p);
    let mut closed_classes = Vec::new();
    let mut transient = Vec::new();
    for class in classes {
        let inside: std::collections::HashSet<usize> = class.iter().copied().collect();
        let closed = class.iter().all(|&i| {
            p[i].iter()
                .enumerate()
                .all(|(j, &w)| w <= SUPPORT_TOL || inside.contains(&j))
        });
        if closed {
            let mut c = class;
            c.sort_unstable();
            closed_classes.push(c);
        } else {
            transient.extend(class);
        }
    }
    closed_classes.sort();
    transient.sort_unstable();
    ChainStructure {
        closed_classes,
        transient,
    }
}

/// Period of an irreducible class: gcd of all cycle-length differences found
/// by a BFS levelling.
pub fn class_period(p: &[Vec<f64>], class: &[usize]) -> usize {
    let inside: std::collections::HashMap<usize, usize> =
        class.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let mut level = vec![None::<i64>; class.len()];
    level[0] = Some(0);
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut g: u64 = 0;
    while let Some(u) = queue.pop_front() {
        let state = class[u];
        for (j, &w) in p[state].iter().enumerate() {
            if w <= SUPPORT_TOL {
                continue;
            }
            let v = inside[&j];
            match level[v] {
                None => {
                    level[v] = Some(level[u].unwrap() + 1);
                    queue.push_back(v);
                }
                Some(lv) => {
                    let diff = (level[u].unwrap() + 1 - lv).unsigned_abs();
                    g = gcd(g, diff);
                }
            }
        }
    }
    g.max(1) as usize
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Stationary distribution restricted to an irreducible closed class,
/// returned over the full state space (zero off the class).
pub fn stationary_in_class(p: &[Vec<f64>], class: &[usize]) -> Result<Vec<f64>> {
    let m = class.len();
    // (K^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (row, &i) in class.iter().enumerate() {
        for (col, &j) in class.iter().enumerate() {
            a[row][col] = p[j][i] - if row == col { 1.0 } else { 0.0 };
        }
    }
    for col in 0..m {
        a[m - 1][col] = 1.0;
    }
    b[m - 1] = 1.0;
    let pi = linalg::solve(a, b)?;
    let mut full = vec![0.0; p.len()];
    for (k, &s) in class.iter().enumerate() {
        full[s] = pi[k].max(0.0);
    }
    let total: f64 = full.iter().sum();
    for v in &mut full {
        *v /= total;
    }
    Ok(full)
}

/// Unique stationary distribution of a unichain matrix (single closed class,
/// arbitrary transients). Errors with `Reducible` when several closed classes
/// exist.
pub fn unichain_stationary(p: &[Vec<f64>], what: &'static str) -> Result<Vec<f64>> {
    let structure = chain_structure(p);
    if structure.closed_classes.len() != 1 {
        return Err(Error::Reducible { what });
    }
    stationary_in_class(p, &structure.closed_classes[0])
}

/// Cesàro limiting matrix `P* = lim (1/n) sum_k P^k`, computed exactly from
/// the class structure: stationary rows inside closed classes, absorption
/// mixtures for transient states.
pub fn limiting_matrix(p: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = p.len();
    let structure = chain_structure(p);
    let mut stationary = Vec::new();
    for class in &structure.closed_classes {
        stationary.push(stationary_in_class(p, class)?);
    }
    let mut star = vec![vec![0.0; n]; n];
    for (c, class) in structure.closed_classes.iter().enumerate() {
        for &i in class {
            star[i] = stationary[c].clone();
        }
    }
    let t = structure.transient.len();
    if t > 0 {
        // Absorption probabilities: (I - P_TT) B = P_TC (one column per class).
        let mut class_of = vec![usize::MAX; n];
        for (c, class) in structure.closed_classes.iter().enumerate() {
            for &s in class {
                class_of[s] = c;
            }
        }
        for (c, _) in structure.closed_classes.iter().enumerate() {
            let mut a = vec![vec![0.0; t]; t];
            let mut b = vec![0.0; t];
            for (row, &i) in structure.transient.iter().enumerate() {
                for (col, &j) in structure.transient.iter().enumerate() {
                    a[row][col] = (if row == col { 1.0 } else { 0.0 }) - p[i][j];
                }
                b[row] = p[i]
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| class_of[j] == c)
                    .map(|(_, &w)| w)
                    .sum();
            }
            let absorb = linalg::solve(a, b)?;
            for (&i, &prob) in structure.transient.iter().zip(absorb.iter()) {
                for j in 0..n {
                    star[i][j] += prob * stationary[c][j];
                }
            }
        }
    }
    Ok(star)
}

/// Average-reward gain and bias of a fixed chain: `g = P* r`, and the bias
/// `h` is the unique solution of `(I - P + P*) h = (I - P*) r`, which
/// satisfies `P* h = 0`.
pub fn gain_bias(p: &[Vec<f64>], r: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = p.len();
    let star = limiting_matrix(p)?;
    let gain: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| star[i][j] * r[j]).sum())
        .collect();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = (if i == j { 1.0 } else { 0.0 }) - p[i][j] + star[i][j];
        }
        b[i] = r[i] - gain[i];
    }
    let bias = linalg::solve(a, b)?;
    Ok((gain, bias))
}
