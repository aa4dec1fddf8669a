//! Unifilar finite-state channels: representation, validation, built-in
//! Ising constructors, and the on-disk spec format.

use crate::error::{Error, Result};
use crate::probcore::PMF_TOL;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A unifilar finite-state channel: an output law `P(y | x, s)` together
/// with a deterministic next-state map `f(s, x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifilarFsc {
    pub name: String,
    state_count: usize,
    input_count: usize,
    output_count: usize,
    /// `kernel[x][s][y] = P(y | x, s)`; each `(x, s)` row is a pmf.
    kernel: Vec<Vec<Vec<f64>>>,
    /// `next_state[s][x][y] = f(s, x, y)`.
    next_state: Vec<Vec<Vec<usize>>>,
}

impl UnifilarFsc {
    pub fn new(
        name: impl Into<String>,
        kernel: Vec<Vec<Vec<f64>>>,
        next_state: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        let input_count = kernel.len();
        let state_count = kernel.first().map(|k| k.len()).unwrap_or(0);
        let output_count = kernel
            .first()
            .and_then(|k| k.first())
            .map(|k| k.len())
            .unwrap_or(0);
        if input_count == 0 || state_count == 0 || output_count == 0 {
            return Err(Error::InvalidConfig {
                msg: "channel alphabets must be non-empty".into(),
            });
        }
        let ch = UnifilarFsc {
            name: name.into(),
            state_count,
            input_count,
            output_count,
            kernel,
            next_state,
        };
        ch.validate()?;
        Ok(ch)
    }

    fn validate(&self) -> Result<()> {
        if self.kernel.len() != self.input_count {
            return Err(Error::ShapeMismatch {
                what: "kernel input dimension",
                expected: self.input_count,
                got: self.kernel.len(),
            });
        }
        for (x, per_state) in self.kernel.iter().enumerate() {
            if per_state.len() != self.state_count {
                return Err(Error::ShapeMismatch {
                    what: "kernel state dimension",
                    expected: self.state_count,
                    got: per_state.len(),
                });
            }
            for (s, row) in per_state.iter().enumerate() {
                if row.len() != self.output_count {
                    return Err(Error::ShapeMismatch {
                        what: "kernel output dimension",
                        expected: self.output_count,
                        got: row.len(),
                    });
                }
                for &w in row {
                    if w < 0.0 {
                        return Err(Error::NegativeProbability {
                            what: format!("kernel row (x={x}, s={s})"),
                            value: w,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PMF_TOL {
                    return Err(Error::NotNormalized {
                        what: format!("kernel row (x={x}, s={s})"),
                        sum,
                    });
                }
            }
        }
        if self.next_state.len() != self.state_count {
            return Err(Error::ShapeMismatch {
                what: "next_state state dimension",
                expected: self.state_count,
                got: self.next_state.len(),
            });
        }
        for (s, per_input) in self.next_state.iter().enumerate() {
            if per_input.len() != self.input_count {
                return Err(Error::ShapeMismatch {
                    what: "next_state input dimension",
                    expected: self.input_count,
                    got: per_input.len(),
                });
            }
            for (x, row) in per_input.iter().enumerate() {
                if row.len() != self.output_count {
                    return Err(Error::ShapeMismatch {
                        what: "next_state output dimension",
                        expected: self.output_count,
                        got: row.len(),
                    });
                }
                for (y, &t) in row.iter().enumerate() {
                    if t >= self.state_count {
                        return Err(Error::InvalidConfig {
                            msg: format!(
                                "next_state entry f(s={s}, x={x}, y={y}) = {t} is out of range (|S| = {})",
                                self.state_count
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn output_count(&self) -> usize {
        self.output_count
    }

    /// `P(y | x, s)`.
    #[inline]
    pub fn prob(&self, y: usize, x: usize, s: usize) -> f64 {
        self.kernel[x][s][y]
    }

    /// Output law of the pair `(x, s)` as a slice over `y`.
    #[inline]
    pub fn output_row(&self, x: usize, s: usize) -> &[f64] {
        &self.kernel[x][s]
    }

    /// Deterministic state evolution `f(s, x, y)`.
    #[inline]
    pub fn next_state(&self, s: usize, x: usize, y: usize) -> usize {
        self.next_state[s][x][y]
    }
}

/// The binary Ising channel: clean when the input repeats the state, a fair
/// coin between input and state otherwise; the new state is the input.
pub fn make_binary_ising() -> UnifilarFsc {
    make_qary_ising(2).expect("q=2 is in range")
}

/// The q-ary Ising channel on alphabets `{0, .., q-1}`: `Y = X` w.p. 1/2,
/// `Y = S` w.p. 1/2 (merged when `X = S`), and the new state is the input.
pub fn make_qary_ising(q: usize) -> Result<UnifilarFsc> {
    if !(2..=8).contains(&q) {
        return Err(Error::InvalidConfig {
            msg: format!("q-ary Ising supports 2 <= q <= 8, got {q}"),
        });
    }
    let mut kernel = vec![vec![vec![0.0; q]; q]; q];
    for x in 0..q {
        for s in 0..q {
            if x == s {
                kernel[x][s][x] = 1.0;
            } else {
                kernel[x][s][x] = 0.5;
                kernel[x][s][s] = 0.5;
            }
        }
    }
    let next_state: Vec<Vec<Vec<usize>>> = (0..q)
        .map(|_s| (0..q).map(|x| vec![x; q]).collect())
        .collect();
    let name = if q == 2 {
        "ising2".to_string()
    } else {
        format!("ising{q}")
    };
    UnifilarFsc::new(name, kernel, next_state)
}

/// A memoryless channel wrapped as a single-state unifilar FSC.
pub fn make_dmc(name: impl Into<String>, transition: Vec<Vec<f64>>) -> Result<UnifilarFsc> {
    let input_count = transition.len();
    let output_count = transition.first().map(|r| r.len()).unwrap_or(0);
    let kernel: Vec<Vec<Vec<f64>>> = transition.into_iter().map(|row| vec![row]).collect();
    let next_state = vec![vec![vec![0usize; output_count]; input_count]];
    UnifilarFsc::new(name, kernel, next_state)
}

/// Binary symmetric channel with crossover probability `p`, as a DMC.
pub fn make_bsc(p: f64) -> Result<UnifilarFsc> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange {
            what: "BSC crossover probability",
            value: p,
            range: "[0, 1]",
        });
    }
    make_dmc(format!("bsc:{p}"), vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
}

/// True iff every state is reachable from every state in the directed graph
/// with an edge `s -> f(s, x, y)` whenever `P(y | x, s) > 0` for some `x`.
pub fn is_strongly_connected(ch: &UnifilarFsc) -> bool {
    let n = ch.state_count();
    let mut adj = vec![vec![false; n]; n];
    for s in 0..n {
        for x in 0..ch.input_count() {
            for y in 0..ch.output_count() {
                if ch.prob(y, x, s) > 0.0 {
                    adj[s][ch.next_state(s, x, y)] = true;
                }
            }
        }
    }
    for start in 0..n {
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for (v, &e) in adj[u].iter().enumerate() {
                if e && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().any(|&b| !b) {
            return false;
        }
    }
    true
}

/// On-disk channel description. Kernel is stored as `kernel[y][x][s]` and
/// the state map as `next_state[s][x][y]`, all 0-indexed.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChannelSpecFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "X")]
    pub x: usize,
    #[serde(rename = "Y")]
    pub y: usize,
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub next_state: Vec<Vec<Vec<usize>>>,
}

impl ChannelSpecFile {
    pub fn from_channel(ch: &UnifilarFsc) -> Self {
        let kernel = (0..ch.output_count())
            .map(|y| {
                (0..ch.input_count())
                    .map(|x| (0..ch.state_count()).map(|s| ch.prob(y, x, s)).collect())
                    .collect()
            })
            .collect();
        let next_state = (0..ch.state_count())
            .map(|s| {
                (0..ch.input_count())
                    .map(|x| (0..ch.output_count()).map(|y| ch.next_state(s, x, y)).collect())
                    .collect()
            })
            .collect();
        ChannelSpecFile {
            name: Some(ch.name.clone()),
            s: ch.state_count(),
            x: ch.input_count(),
            y: ch.output_count(),
            kernel,
            next_state,
        }
    }

    pub fn into_channel(self) -> Result<UnifilarFsc> {
        if self.kernel.len() != self.y {
            return Err(Error::ShapeMismatch {
                what: "kernel outer (y) dimension",
                expected: self.y,
                got: self.kernel.len(),
            });
        }
        let mut kernel = vec![vec![vec![0.0; self.y]; self.s]; self.x];
        for (y, per_x) in self.kernel.iter().enumerate() {
            if per_x.len() != self.x {
                return Err(Error::ShapeMismatch {
                    what: "kernel middle (x) dimension",
                    expected: self.x,
                    got: per_x.len(),
                });
            }
            for (x, per_s) in per_x.iter().enumerate() {
                if per_s.len() != self.s {
                    return Err(Error::ShapeMismatch {
                        what: "kernel inner (s) dimension",
                        expected: self.s,
                        got: per_s.len(),
                    });
                }
                for (s, &w) in per_s.iter().enumerate() {
                    kernel[x][s][y] = w;
                }
            }
        }
        let name = self.name.unwrap_or_else(|| "channel".to_string());
        UnifilarFsc::new(name, kernel, self.next_state)
    }
}

/// Load and validate a channel spec file (TOML).
pub fn load_channel(path: impl AsRef<Path>) -> Result<UnifilarFsc> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let spec: ChannelSpecFile = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    spec.into_channel()
}

/// Save a channel in the spec file format.
pub fn save_channel(ch: &UnifilarFsc, path: impl AsRef<Path>) -> Result<()> {
    let spec = ChannelSpecFile::from_channel(ch);
    let text = toml::to_string(&spec).map_err(|e| Error::Parse {
        path: path.as_ref().display().to_string(),
        msg: e.to_string(),
    })?;
    std::fs::write(path, text)?;
    Ok(())
}
