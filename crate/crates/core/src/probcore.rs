//! Exact probability and information primitives shared by every other
//! module: entropies, KL divergence, conditional mutual information, exact
//! directed information of a finite-horizon joint, and the InfoMat.
//!
//! Everything here is in bits. `0 log 0 = 0` throughout, while `p log(p/0)`
//! with `p > 0` is a support error rather than infinity.

use crate::error::{Error, Result};

/// Normalization tolerance for probability vectors and tensors.
pub const PMF_TOL: f64 = 1e-12;

/// `x log2 x` with the `0 log 0 = 0` convention.
#[inline]
pub fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Shannon entropy of a nonnegative weight vector, in bits.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&x| xlog2x(x)).sum::<f64>()
}

/// Binary entropy `H2(p)` in bits.
///
/// Errors when `p` lies outside `[0, 1]`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange {
            what: "binary entropy argument",
            value: p,
            range: "[0, 1]",
        });
    }
    Ok(-xlog2x(p) - xlog2x(1.0 - p))
}

/// Binary entropy without the range check, for hot inner loops. The argument
/// is clamped to `[0, 1]`.
#[inline]
pub fn h2(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    -xlog2x(p) - xlog2x(1.0 - p)
}

/// Binary KL divergence `d(p || q)` in bits, with clamped logs.
#[inline]
pub fn binary_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| {
        if a <= 0.0 {
            0.0
        } else {
            a * (a / b.max(1e-300)).log2()
        }
    };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// A probability mass function over a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf(Vec<f64>);

impl Pmf {
    /// Validate weights: nonnegative, summing to 1 within `PMF_TOL`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        for &w in &weights {
            if w < 0.0 {
                return Err(Error::NegativeProbability {
                    what: "pmf".into(),
                    value: w,
                });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PMF_TOL {
            return Err(Error::NotNormalized {
                what: "pmf".into(),
                sum,
            });
        }
        Ok(Pmf(weights))
    }

    /// Normalize arbitrary nonnegative weights into a pmf.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::NotNormalized {
                what: "pmf weights".into(),
                sum,
            });
        }
        for w in &mut weights {
            *w /= sum;
        }
        Pmf::new(weights)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.0)
    }
}

impl std::ops::Index<usize> for Pmf {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::Deref for Pmf {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// KL divergence `D(p || q)` in bits.
///
/// A point with `p(x) > 0` and `q(x) = 0` is a support error.
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch {
            what: "kl divergence alphabets",
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.weights().iter().zip(q.weights()).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::KlSupport { index: i, p_val: pi });
        }
        acc += pi * (pi / qi).log2();
    }
    Ok(acc.max(0.0))
}

/// Joint distribution of a pair of sequences `(x^n, y^n)` over finite
/// alphabets, stored densely. Index layout: `x^n` and `y^n` are read as
/// base-`|X|` / base-`|Y|` numbers with `x_1` the most significant digit,
/// and the table index is `xcode * y_size^n + ycode`.
#[derive(Debug, Clone)]
pub struct JointSequencePmf {
    pub n: usize,
    pub x_size: usize,
    pub y_size: usize,
    table: Vec<f64>,
}

/// Horizon cap for exact enumeration of binary-alphabet joints.
pub const MAX_EXACT_HORIZON: usize = 8;

impl JointSequencePmf {
    pub fn new(n: usize, x_size: usize, y_size: usize, table: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig {
                msg: "sequence horizon must be at least 1".into(),
            });
        }
        if n > MAX_EXACT_HORIZON {
            return Err(Error::SizeGuard {
                what: "exact-enumeration horizon",
                size: n,
                limit: MAX_EXACT_HORIZON,
            });
        }
        let expect = x_size.pow(n as u32) * y_size.pow(n as u32);
        if table.len() != expect {
            return Err(Error::ShapeMismatch {
                what: "joint sequence table",
                expected: expect,
                got: table.len(),
            });
        }
        for &w in &table {
            if w < 0.0 {
                return Err(Error::NegativeProbability {
                    what: "joint sequence table".into(),
                    value: w,
                });
            }
        }
        let sum: f64 = table.iter().sum();
        if (sum - 1.0).abs() > PMF_TOL {
            return Err(Error::NotNormalized {
                what: "joint sequence table".into(),
                sum,
            });
        }
        Ok(JointSequencePmf {
            n,
            x_size,
            y_size,
            table,
        })
    }

    pub fn prob(&self, xcode: usize, ycode: usize) -> f64 {
        self.table[xcode * self.y_size.pow(self.n as u32) + ycode]
    }

    /// Digit `i` (1-based time index) of a sequence code.
    #[inline]
    fn digit(code: usize, i: usize, n: usize, base: usize) -> usize {
        (code / base.pow((n - i) as u32)) % base
    }

    /// Prefix of length `k` of a sequence code (the first `k` symbols).
    #[inline]
    fn prefix(code: usize, k: usize, n: usize, base: usize) -> usize {
        code / base.pow((n - k) as u32)
    }

    /// Conditional mutual information `I(A; B | Z)` where the three parts
    /// are extracted from `(xcode, ycode)` by the given maps. Operates on a
    /// grouped histogram to stay exact.
    fn grouped_cmi(
        &self,
        part: impl Fn(usize, usize) -> (usize, usize, usize),
    ) -> f64 {
        use std::collections::HashMap;
        let mut joint: HashMap<(usize, usize, usize), f64> = HashMap::new();
        let yn = self.y_size.pow(self.n as u32);
        for (idx, &w) in self.table.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let (xcode, ycode) = (idx / yn, idx % yn);
            let key = part(xcode, ycode);
            *joint.entry(key).or_insert(0.0) += w;
        }
        let mut az: HashMap<(usize, usize), f64> = HashMap::new();
        let mut bz: HashMap<(usize, usize), f64> = HashMap::new();
        let mut z: HashMap<usize, f64> = HashMap::new();
        for (&(a, b, zz), &w) in &joint {
            *az.entry((a, zz)).or_insert(0.0) += w;
            *bz.entry((b, zz)).or_insert(0.0) += w;
            *z.entry(zz).or_insert(0.0) += w;
        }
        let mut acc = 0.0;
        for (&(a, b, zz), &w) in &joint {
            let denom = az[&(a, zz)] * bz[&(b, zz)];
            if denom > 0.0 {
                acc += w * (w * z[&zz] / denom).log2();
            }
        }
        acc.max(0.0)
    }

    /// `I(X^i; Y_i | Y^{i-1})` for a 1-based time index `i`.
    pub fn cmi_term_forward(&self, i: usize) -> f64 {
        let (n, xs, ys) = (self.n, self.x_size, self.y_size);
        self.grouped_cmi(|xc, yc| {
            let a = Self::prefix(xc, i, n, xs);
            let b = Self::digit(yc, i, n, ys);
            let z = Self::prefix(yc, i - 1, n, ys);
            (a, b, z)
        })
    }

    /// `I(Y^{i-1}; X_i | X^{i-1})` for a 1-based time index `i`.
    pub fn cmi_term_reverse(&self, i: usize) -> f64 {
        let (n, xs, ys) = (self.n, self.x_size, self.y_size);
        self.grouped_cmi(|xc, yc| {
            let a = Self::prefix(yc, i - 1, n, ys);
            let b = Self::digit(xc, i, n, xs);
            let z = Self::prefix(xc, i - 1, n, xs);
            (a, b, z)
        })
    }

    /// Full-block mutual information `I(X^n; Y^n)`.
    pub fn mutual_information(&self) -> f64 {
        self.grouped_cmi(|xc, yc| (xc, yc, 0))
    }
}

/// Exact directed information of a finite-horizon joint:
/// `(di, reverse_di, mi)` where `di = sum_i I(X^i; Y_i | Y^{i-1})`,
/// `reverse_di = sum_i I(Y^{i-1}; X_i | X^{i-1})` and `mi = I(X^n; Y^n)`.
///
/// The conservation law `di + reverse_di = mi` holds exactly for every
/// joint.
pub fn exact_directed_info(joint: &JointSequencePmf) -> (f64, f64, f64) {
    let di: f64 = (1..=joint.n).map(|i| joint.cmi_term_forward(i)).sum();
    let rev: f64 = (1..=joint.n).map(|i| joint.cmi_term_reverse(i)).sum();
    let mi = joint.mutual_information();
    (di, rev, mi)
}

/// Matrix of conditional mutual information terms
/// `I[i][j] = I(X_i; Y_j | X^{i-1}, Y^{j-1})` (1-based in the math,
/// 0-based in storage).
#[derive(Debug, Clone)]
pub struct InfoMat {
    pub n: usize,
    pub entries: Vec<Vec<f64>>,
}

impl InfoMat {
    /// Sum of entries with `i <= j` (upper triangle including the diagonal):
    /// equals the directed information `I(X^n -> Y^n)`.
    pub fn upper_triangle_sum(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                acc += self.entries[i][j];
            }
        }
        acc
    }

    /// Sum of entries with `i > j` (strict lower triangle): equals the
    /// reverse flow `I(D Y^n -> X^n)`.
    pub fn lower_triangle_sum(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                acc += self.entries[i][j];
            }
        }
        acc
    }

    /// Sum of entries with `i < j` (strict upper triangle): the
    /// time-shifted flow `I(D X^n -> Y^n)`.
    pub fn strict_upper_sum(&self) -> f64 {
        self.upper_triangle_sum() - self.diagonal_sum()
    }

    /// Diagonal sum: the instantaneous information exchange.
    pub fn diagonal_sum(&self) -> f64 {
        (0..self.n).map(|i| self.entries[i][i]).sum()
    }

    pub fn total(&self) -> f64 {
        self.upper_triangle_sum() + self.lower_triangle_sum()
    }
}

/// Compute the InfoMat of a joint by exact enumeration.
pub fn infomat(joint: &JointSequencePmf) -> InfoMat {
    let n = joint.n;
    let mut entries = vec![vec![0.0; n]; n];
    for i in 1..=n {
        for j in 1..=n {
            let (xs, ys) = (joint.x_size, joint.y_size);
            entries[i - 1][j - 1] = joint.grouped_cmi(|xc, yc| {
                let a = JointSequencePmf::digit(xc, i, n, xs);
                let b = JointSequencePmf::digit(yc, j, n, ys);
                let zx = JointSequencePmf::prefix(xc, i - 1, n, xs);
                let zy = JointSequencePmf::prefix(yc, j - 1, n, ys);
                (a, b, zx * ys.pow((j - 1) as u32) + zy)
            });
        }
    }
    InfoMat { n, entries }
}

/// Conditional mutual information `I(X,S; Y | Q)` of a joint tensor
/// `P(s, q, x, y)`, in bits: `H(Y|Q) - H(Y|X,S,Q)`.
///
/// The tensor is validated (nonnegative, sums to 1 within `PMF_TOL`).
pub fn conditional_mi_xsq(p: &SqxyTensor) -> f64 {
    let (ns, nq, nx, ny) = p.dims;
    // H(Y|Q)
    let mut pq = vec![0.0; nq];
    let mut pqy = vec![vec![0.0; ny]; nq];
    let mut psqx = vec![0.0; ns * nq * nx];
    for s in 0..ns {
        for q in 0..nq {
            for x in 0..nx {
                for y in 0..ny {
                    let w = p.get(s, q, x, y);
                    pq[q] += w;
                    pqy[q][y] += w;
                    psqx[(s * nq + q) * nx + x] += w;
                }
            }
        }
    }
    let mut h_y_q = 0.0;
    for q in 0..nq {
        for y in 0..ny {
            h_y_q -= xlog2x(pqy[q][y]);
        }
        h_y_q += xlog2x(pq[q]);
    }
    let mut h_y_xsq = 0.0;
    for s in 0..ns {
        for q in 0..nq {
            for x in 0..nx {
                for y in 0..ny {
                    h_y_xsq -= xlog2x(p.get(s, q, x, y));
                }
                h_y_xsq += xlog2x(psqx[(s * nq + q) * nx + x]);
            }
        }
    }
    (h_y_q - h_y_xsq).max(0.0)
}

/// Dense joint tensor `P(s, q, x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SqxyTensor {
    /// `(|S|, |Q|, |X|, |Y|)`
    pub dims: (usize, usize, usize, usize),
    data: Vec<f64>,
}

impl SqxyTensor {
    pub fn zeros(dims: (usize, usize, usize, usize)) -> Self {
        let len = dims.0 * dims.1 * dims.2 * dims.3;
        SqxyTensor {
            dims,
            data: vec![0.0; len],
        }
    }

    pub fn from_data(dims: (usize, usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let len = dims.0 * dims.1 * dims.2 * dims.3;
        if data.len() != len {
            return Err(Error::ShapeMismatch {
                what: "joint tensor",
                expected: len,
                got: data.len(),
            });
        }
        Ok(SqxyTensor { dims, data })
    }

    /// Validate pmf invariants.
    pub fn validate(&self) -> Result<()> {
        for &w in &self.data {
            if w < 0.0 {
                return Err(Error::NegativeProbability {
                    what: "joint tensor".into(),
                    value: w,
                });
            }
        }
        let sum: f64 = self.data.iter().sum();
        if (sum - 1.0).abs() > PMF_TOL {
            return Err(Error::NotNormalized {
                what: "joint tensor".into(),
                sum,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn idx(&self, s: usize, q: usize, x: usize, y: usize) -> usize {
        ((s * self.dims.1 + q) * self.dims.2 + x) * self.dims.3 + y
    }

    #[inline]
    pub fn get(&self, s: usize, q: usize, x: usize, y: usize) -> f64 {
        self.data[self.idx(s, q, x, y)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, q: usize, x: usize, y: usize, v: f64) {
        let i = self.idx(s, q, x, y);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Marginal onto `(s, q)`.
    pub fn sq_marginal(&self) -> Vec<Vec<f64>> {
        let (ns, nq, nx, ny) = self.dims;
        let mut m = vec![vec![0.0; nq]; ns];
        for s in 0..ns {
            for q in 0..nq {
                for x in 0..nx {
                    for y in 0..ny {
                        m[s][q] += self.get(s, q, x, y);
                    }
                }
            }
        }
        m
    }
}
