//! Derivative-free optimization helpers: golden-section line search and a
//! box-clamped Nelder-Mead simplex for the small inner problems that show
//! up in the Bellman operators.

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
/// Returns `(argmin, min)` with the argument located to within `tol`.
pub fn golden_section_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    if fx <= fc && fx <= fd {
        (x, fx)
    } else if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Golden-section maximization on `[lo, hi]`. Used as a one-dimensional
/// oracle in tests.
#[cfg_attr(not(test), allow(dead_code))]
pub fn golden_section_max(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> (f64, f64) {
    let (x, neg) = golden_section_min(|t| -f(t), lo, hi, tol);
    (x, -neg)
}

/// Nelder-Mead maximization over a box `[lo_i, hi_i]` in low dimension.
/// Points outside the box are clamped before evaluation. Terminates when
/// the simplex diameter falls below `tol` or after `max_iter` iterations.
/// Returns `(argmax, max)`.
pub fn nelder_mead_max(
    f: &mut dyn FnMut(&[f64]) -> f64,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let dim = start.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..dim {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    // Initial simplex: start plus per-coordinate nudges scaled to the box.
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(dim + 1);
    let mut p0 = start.to_vec();
    clamp(&mut p0);
    for k in 0..=dim {
        let mut p = p0.clone();
        if k > 0 {
            let i = k - 1;
            let width = (hi[i] - lo[i]).max(1e-12);
            let step = 0.05 * width;
            p[i] = if p[i] + step <= hi[i] { p[i] + step } else { p[i] - step };
            clamp(&mut p);
        }
        let v = f(&p);
        pts.push(p);
        vals.push(v);
    }
    for _ in 0..max_iter {
        // Order descending by value (maximization).
        let mut idx: Vec<usize> = (0..=dim).collect();
        idx.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap());
        let reorder_pts: Vec<Vec<f64>> = idx.iter().map(|&i| pts[i].clone()).collect();
        let reorder_vals: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
        pts = reorder_pts;
        vals = reorder_vals;

        let diam = (0..dim)
            .map(|i| {
                let lo_i = pts.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
                let hi_i = pts.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
                hi_i - lo_i
            })
            .fold(0.0_f64, f64::max);
        if diam < tol {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|i| pts[..dim].iter().map(|p| p[i]).sum::<f64>() / dim as f64)
            .collect();
        let worst = pts[dim].clone();
        let mut reflect: Vec<f64> = (0..dim)
            .map(|i| centroid[i] + (centroid[i] - worst[i]))
            .collect();
        clamp(&mut reflect);
        let fr = f(&reflect);
        if fr > vals[0] {
            let mut expand: Vec<f64> = (0..dim)
                .map(|i| centroid[i] + 2.0 * (centroid[i] - worst[i]))
                .collect();
            clamp(&mut expand);
            let fe = f(&expand);
            if fe > fr {
                pts[dim] = expand;
                vals[dim] = fe;
            } else {
                pts[dim] = reflect;
                vals[dim] = fr;
            }
        } else if fr > vals[dim - 1] {
            pts[dim] = reflect;
            vals[dim] = fr;
        } else {
            let mut contract: Vec<f64> = (0..dim)
                .map(|i| centroid[i] + 0.5 * (worst[i] - centroid[i]))
                .collect();
            clamp(&mut contract);
            let fc = f(&contract);
            if fc > vals[dim] {
                pts[dim] = contract;
                vals[dim] = fc;
            } else {
                // Shrink toward the best point.
                for k in 1..=dim {
                    for i in 0..dim {
                        pts[k][i] = pts[0][i] + 0.5 * (pts[k][i] - pts[0][i]);
                    }
                    clamp(&mut pts[k]);
                    vals[k] = f(&pts[k]);
                }
            }
        }
    }
    let best = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    (pts[best].clone(), vals[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_min_quadratic() {
        let (x, fx) = golden_section_min(|t| (t - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(fx < 1e-15);
    }

    #[test]
    fn nm_max_concave_2d() {
        let mut f = |p: &[f64]| -((p[0] - 0.2).powi(2) + (p[1] - 0.7).powi(2));
        let (p, _) = nelder_mead_max(&mut f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], 1e-9, 500);
        assert!((p[0] - 0.2).abs() < 1e-6);
        assert!((p[1] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn nm_max_on_boundary() {
        // Max at the corner (1, 0).
        let mut f = |p: &[f64]| p[0] - p[1];
        let (p, v) = nelder_mead_max(&mut f, &[0.4, 0.6], &[0.0, 0.0], &[1.0, 1.0], 1e-9, 500);
        assert!((p[0] - 1.0).abs() < 1e-6);
        assert!(p[1].abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-6);
    }
}
