//! Small dense linear-algebra helpers. Everything in this crate solves
//! systems of at most a few hundred unknowns, so plain Gaussian elimination
//! and Householder QR are sufficient.

use crate::error::{Error, Result};

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
/// `a` is row-major, consumed. Errors if a pivot falls below `1e-13`.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.len();
    debug_assert!(a.iter().all(|r| r.len() == n) && b.len() == n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-13 {
            return Err(Error::SingularSystem);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Least-squares solution of an overdetermined `A x = b` via Householder QR.
/// Requires `rows >= cols` and full column rank.
pub fn lstsq(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    assert!(rows >= cols && b.len() == rows);
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut qtb: Vec<f64> = b.to_vec();
    for k in 0..cols {
        let mut norm = 0.0;
        for i in k..rows {
            norm += r[i][k] * r[i][k];
        }
        let norm = norm.sqrt();
        if norm < 1e-13 {
            return Err(Error::SingularSystem);
        }
        let alpha = if r[k][k] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; rows];
        v[k] = r[k][k] - alpha;
        for i in k + 1..rows {
            v[i] = r[i][k];
        }
        let vtv: f64 = v[k..].iter().map(|x| x * x).sum();
        if vtv < 1e-300 {
            continue;
        }
        for col in k..cols {
            let dot: f64 = (k..rows).map(|i| v[i] * r[i][col]).sum();
            let scale = 2.0 * dot / vtv;
            for i in k..rows {
                r[i][col] -= scale * v[i];
            }
        }
        let dot: f64 = (k..rows).map(|i| v[i] * qtb[i]).sum();
        let scale = 2.0 * dot / vtv;
        for i in k..rows {
            qtb[i] -= scale * v[i];
        }
    }
    let mut x = vec![0.0; cols];
    for row in (0..cols).rev() {
        let mut acc = qtb[row];
        for k in row + 1..cols {
            acc -= r[row][k] * x[k];
        }
        if r[row][row].abs() < 1e-13 {
            return Err(Error::SingularSystem);
        }
        x[row] = acc / r[row][row];
    }
    Ok(x)
}
