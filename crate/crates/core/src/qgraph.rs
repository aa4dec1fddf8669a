//! Q-graphs: directed, irreducible, edge-labeled automata of constant
//! out-degree `|Y|` that quantize output histories into finitely many nodes,
//! plus the Markov chain they induce on `S x Q` under an input policy.

use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};
use crate::markov;
use crate::probcore::PMF_TOL;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Node-count guard for generated graphs.
const MAX_NODES: usize = 1_000_000;

/// An output-quantization automaton. `phi[q][y]` is the successor of node
/// `q` on output `y`; every node has exactly one successor per output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QGraph {
    pub name: String,
    node_count: usize,
    output_count: usize,
    phi: Vec<Vec<usize>>,
    /// Initial node. Bounds are initial-node independent for irreducible
    /// graphs; this only matters for simulations.
    pub q0: usize,
}

impl QGraph {
    /// Build and validate: total transition map and irreducibility.
    pub fn new(name: impl Into<String>, phi: Vec<Vec<usize>>, q0: usize) -> Result<Self> {
        let node_count = phi.len();
        let output_count = phi.first().map(|r| r.len()).unwrap_or(0);
        if node_count == 0 || output_count == 0 {
            return Err(Error::InvalidConfig {
                msg: "Q-graph must have at least one node and one output label".into(),
            });
        }
        for (q, row) in phi.iter().enumerate() {
            if row.len() != output_count {
                return Err(Error::ShapeMismatch {
                    what: "Q-graph out-degree",
                    expected: output_count,
                    got: row.len(),
                });
            }
            for (y, &succ) in row.iter().enumerate() {
                if succ >= node_count {
                    return Err(Error::InvalidConfig {
                        msg: format!("phi({q}, {y}) = {succ} is out of range (|Q| = {node_count})"),
                    });
                }
            }
        }
        if q0 >= node_count {
            return Err(Error::InvalidConfig {
                msg: format!("initial node {q0} out of range"),
            });
        }
        let graph = QGraph {
            name: name.into(),
            node_count,
            output_count,
            phi,
            q0,
        };
        if !graph.is_irreducible() {
            return Err(Error::Reducible { what: "Q-graph" });
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn output_count(&self) -> usize {
        self.output_count
    }

    /// Transition `Phi(q, y)`.
    #[inline]
    pub fn next(&self, q: usize, y: usize) -> usize {
        self.phi[q][y]
    }

    /// Every node reachable from every node.
    pub fn is_irreducible(&self) -> bool {
        for start in 0..self.node_count {
            let mut seen = vec![false; self.node_count];
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(q) = stack.pop() {
                for &succ in &self.phi[q] {
                    if !seen[succ] {
                        seen[succ] = true;
                        stack.push(succ);
                    }
                }
            }
            if seen.iter().any(|&b| !b) {
                return false;
            }
        }
        true
    }

    /// Export as edge-list text: one `from to label` triple per line.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for (q, row) in self.phi.iter().enumerate() {
            for (y, &succ) in row.iter().enumerate() {
                out.push_str(&format!("{q} {succ} {y}\n"));
            }
        }
        out
    }
}

/// The canonical 4-node Q-graph for the binary Ising channel. With the
/// customary 1-indexed node labels, `q+ = [4,4,4,3]` on `y = 0` and
/// `q+ = [2,1,1,1]` on `y = 1`; stored 0-indexed here.
pub fn ising_q1() -> QGraph {
    let phi = vec![vec![3, 1], vec![3, 0], vec![3, 0], vec![2, 0]];
    QGraph::new("ising_q1", phi, 0).expect("ising_q1 is irreducible")
}

/// De Bruijn graph of order `m` over an output alphabet of size `y_size`:
/// nodes are the `y_size^m` output strings, and the edge labeled `y` maps
/// `y_1..y_m` to `y_2..y_m y`.
pub fn debruijn(m: usize, y_size: usize) -> Result<QGraph> {
    if m == 0 || y_size < 2 {
        return Err(Error::InvalidConfig {
            msg: "de Bruijn graph needs m >= 1 and an output alphabet of size >= 2".into(),
        });
    }
    let nodes = y_size
        .checked_pow(m as u32)
        .filter(|&n| n <= MAX_NODES)
        .ok_or(Error::SizeGuard {
            what: "de Bruijn node count",
            size: usize::MAX,
            limit: MAX_NODES,
        })?;
    let tail = nodes / y_size;
    let phi = (0..nodes)
        .map(|q| (0..y_size).map(|y| (q % tail) * y_size + y).collect())
        .collect();
    QGraph::new(format!("debruijn{m}"), phi, 0)
}

/// Conditional input pmfs `P(x | s, q)` for every state/node pair.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPolicy {
    /// `rows[s][q]` is a pmf over inputs.
    pub rows: Vec<Vec<Vec<f64>>>,
}

impl InputPolicy {
    pub fn new(rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        for (s, per_q) in rows.iter().enumerate() {
            for (q, row) in per_q.iter().enumerate() {
                for &w in row {
                    if w < 0.0 {
                        return Err(Error::NegativeProbability {
                            what: format!("policy row (s={s}, q={q})"),
                            value: w,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PMF_TOL {
                    return Err(Error::NotNormalized {
                        what: format!("policy row (s={s}, q={q})"),
                        sum,
                    });
                }
            }
        }
        Ok(InputPolicy { rows })
    }

    pub fn uniform(state_count: usize, node_count: usize, input_count: usize) -> Self {
        let w = 1.0 / input_count as f64;
        InputPolicy {
            rows: vec![vec![vec![w; input_count]; node_count]; state_count],
        }
    }

    #[inline]
    pub fn prob(&self, x: usize, s: usize, q: usize) -> f64 {
        self.rows[s][q][x]
    }
}

/// Transition matrix of the Markov chain induced on `S x Q`:
/// `P(s', q' | s, q) = sum_{y: Phi(q,y)=q'} sum_{x: f(s,x,y)=s'} P(x|s,q) P(y|x,s)`.
///
/// States are flattened as `s * |Q| + q`.
pub fn sq_kernel(ch: &UnifilarFsc, g: &QGraph, pol: &InputPolicy) -> Result<Vec<Vec<f64>>> {
    if g.output_count() != ch.output_count() {
        return Err(Error::ShapeMismatch {
            what: "Q-graph output alphabet",
            expected: ch.output_count(),
            got: g.output_count(),
        });
    }
    let (ns, nq) = (ch.state_count(), g.node_count());
    let n = ns * nq;
    let mut kernel = vec![vec![0.0; n]; n];
    for s in 0..ns {
        for q in 0..nq {
            let row = &mut kernel[s * nq + q];
            for x in 0..ch.input_count() {
                let px = pol.prob(x, s, q);
                if px == 0.0 {
                    continue;
                }
                for y in 0..ch.output_count() {
                    let w = px * ch.prob(y, x, s);
                    if w == 0.0 {
                        continue;
                    }
                    let dest = ch.next_state(s, x, y) * nq + g.next(q, y);
                    row[dest] += w;
                }
            }
        }
    }
    Ok(kernel)
}

/// Joint stationary pmf on `S x Q`.
#[derive(Debug, Clone)]
pub struct SqStationary {
    pub state_count: usize,
    pub node_count: usize,
    /// `pi[s][q]`
    pub pi: Vec<Vec<f64>>,
}

impl SqStationary {
    /// Conditional `pi(s | q)`.
    pub fn s_given_q(&self, q: usize) -> Vec<f64> {
        let mass: f64 = (0..self.state_count).map(|s| self.pi[s][q]).sum();
        (0..self.state_count)
            .map(|s| self.pi[s][q] / mass)
            .collect()
    }

    /// Node marginal `P_Q(q)`.
    pub fn q_marginal(&self) -> Vec<f64> {
        (0..self.node_count)
            .map(|q| (0..self.state_count).map(|s| self.pi[s][q]).sum())
            .collect()
    }
}

/// Stationary distribution of an `S x Q` transition matrix. The chain must
/// be unichain (a unique closed class) and aperiodic on that class; the
/// fixed point is computed by a dense linear solve.
pub fn stationary_distribution(
    kernel: &[Vec<f64>],
    state_count: usize,
    node_count: usize,
) -> Result<SqStationary> {
    let structure = markov::chain_structure(kernel);
    if structure.closed_classes.len() != 1 {
        return Err(Error::Reducible { what: "(S,Q) chain" });
    }
    let class = &structure.closed_classes[0];
    let period = markov::class_period(kernel, class);
    if period > 1 {
        return Err(Error::Periodic {
            what: "(S,Q) chain",
            period,
        });
    }
    let flat = markov::stationary_in_class(kernel, class)?;
    let mut pi = vec![vec![0.0; node_count]; state_count];
    for (idx, &w) in flat.iter().enumerate() {
        pi[idx / node_count][idx % node_count] = w;
    }
    Ok(SqStationary {
        state_count,
        node_count,
        pi,
    })
}

/// On-disk Q-graph description (`phi[q][y]`, 0-indexed).
#[derive(Debug, Serialize, Deserialize)]
pub struct QGraphSpecFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "Y")]
    pub y: usize,
    pub phi: Vec<Vec<usize>>,
    #[serde(default)]
    pub q0: usize,
}

/// Load and validate a Q-graph spec file (TOML).
pub fn load_qgraph(path: impl AsRef<Path>) -> Result<QGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let spec: QGraphSpecFile = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    if spec.phi.len() != spec.q {
        return Err(Error::ShapeMismatch {
            what: "Q-graph node count",
            expected: spec.q,
            got: spec.phi.len(),
        });
    }
    if spec.phi.first().map(|r| r.len()).unwrap_or(0) != spec.y {
        return Err(Error::ShapeMismatch {
            what: "Q-graph output alphabet",
            expected: spec.y,
            got: spec.phi.first().map(|r| r.len()).unwrap_or(0),
        });
    }
    QGraph::new(
        spec.name.unwrap_or_else(|| "qgraph".to_string()),
        spec.phi,
        spec.q0,
    )
}

/// Save a Q-graph in the spec file format.
pub fn save_qgraph(g: &QGraph, path: impl AsRef<Path>) -> Result<()> {
    let spec = QGraphSpecFile {
        name: Some(g.name.clone()),
        q: g.node_count(),
        y: g.output_count(),
        phi: (0..g.node_count())
            .map(|q| (0..g.output_count()).map(|y| g.next(q, y)).collect())
            .collect(),
        q0: g.q0,
    };
    let text = toml::to_string(&spec).map_err(|e| Error::Parse {
        path: path.as_ref().display().to_string(),
        msg: e.to_string(),
    })?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::make_binary_ising;

    #[test]
    fn ising_q1_transitions() {
        let g = ising_q1();
        // 1-indexed: Phi(1,0) = 4 and Phi(4,1) = 1.
        assert_eq!(g.next(0, 0), 3);
        assert_eq!(g.next(3, 1), 0);
        assert!(g.is_irreducible());
    }

    #[test]
    fn debruijn_shapes() {
        let g = debruijn(1, 2).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.next(0, 1), 1);
        assert_eq!(g.next(1, 0), 0);

        let g = debruijn(2, 2).unwrap();
        assert_eq!(g.node_count(), 4);
        // 01 --1--> 11
        assert_eq!(g.next(0b01, 1), 0b11);
        for m in 1..=4 {
            assert!(debruijn(m, 2).unwrap().is_irreducible());
            assert!(debruijn(m, 3).unwrap().is_irreducible());
        }
    }

    #[test]
    fn reducible_graph_rejected() {
        // Node 1 is absorbing.
        let r = QGraph::new("bad", vec![vec![1, 1], vec![1, 1]], 0);
        assert!(matches!(r, Err(Error::Reducible { .. })));
    }

    #[test]
    fn sq_kernel_rows_are_pmfs() {
        let ch = make_binary_ising();
        let g = ising_q1();
        let pol = InputPolicy::uniform(2, 4, 2);
        let k = sq_kernel(&ch, &g, &pol).unwrap();
        for row in &k {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_channel_gives_01_kernel() {
        // Noiseless identity DMC with 1 state; de Bruijn(1) tracks the output.
        let ch = crate::channels::make_dmc("id", vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = debruijn(1, 2).unwrap();
        let pol = InputPolicy::new(vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]).unwrap();
        let k = sq_kernel(&ch, &g, &pol).unwrap();
        for row in &k {
            for &w in row {
                assert!(w == 0.0 || w == 1.0);
            }
        }
    }

    #[test]
    fn stationary_symmetric_two_state() {
        let ch = crate::channels::make_bsc(0.5).unwrap();
        let g = debruijn(1, 2).unwrap();
        let pol = InputPolicy::uniform(1, 2, 2);
        let k = sq_kernel(&ch, &g, &pol).unwrap();
        let st = stationary_distribution(&k, 1, 2).unwrap();
        assert!((st.pi[0][0] - 0.5).abs() < 1e-12);
        assert!((st.pi[0][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_satisfies_the_fixed_point() {
        // pi^T K = pi^T to 1e-10 on a non-trivial unichain instance.
        let ch = make_binary_ising();
        let g = ising_q1();
        let pol = crate::qbound::ising_q1_invariant_policy(crate::belief_mdp::ising_solution().a);
        let k = sq_kernel(&ch, &g, &pol).unwrap();
        let st = stationary_distribution(&k, 2, 4).unwrap();
        let flat: Vec<f64> = (0..8).map(|i| st.pi[i / 4][i % 4]).collect();
        for j in 0..8 {
            let pushed: f64 = (0..8).map(|i| flat[i] * k[i][j]).sum();
            assert!((pushed - flat[j]).abs() < 1e-10, "component {j}");
        }
    }

    #[test]
    fn identity_kernel_is_reducible() {
        let k = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            stationary_distribution(&k, 1, 2),
            Err(Error::Reducible { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join("dicap-test-qgraphs");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("q1.toml");
        let g = ising_q1();
        save_qgraph(&g, &path).unwrap();
        let loaded = load_qgraph(&path).unwrap();
        assert_eq!(g, loaded);
    }

    #[test]
    fn edge_list_format() {
        let g = debruijn(1, 2).unwrap();
        assert_eq!(g.edge_list(), "0 0 0\n0 1 1\n1 0 0\n1 1 1\n");
    }

    #[test]
    fn debruijn_order_one_tracks_the_last_output() {
        let g = debruijn(1, 3).unwrap();
        let mut state = 77u64;
        let mut q = g.q0;
        for _ in 0..200 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let y = (state % 3) as usize;
            q = g.next(q, y);
            assert_eq!(q, y, "last output is the bin");
        }
    }
}
