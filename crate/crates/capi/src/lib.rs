//! C ABI for the dicap toolkit: opaque handles over channels and Q-graphs,
//! integer status codes, and flat-buffer results, so other languages can
//! bind without Rust in the loop.
//!
//! Conventions: every fallible function returns a `DicapStatus`; outputs go
//! through pointers that must be non-null and are written only on
//! `DICAP_STATUS_OK`. `dicap_last_error_message` returns a thread-local,
//! NUL-terminated description of the most recent failure on the calling
//! thread. Handles are freed exactly once with their `_free` function.

use dicap_core::belief_mdp::{ising_solution, qary_ising_capacity, value_iteration, ViOptions};
use dicap_core::channels::{load_channel, make_bsc, make_qary_ising, UnifilarFsc};
use dicap_core::duality::{optimize_test_param, TestFamily};
use dicap_core::estimators::{ctw_di, SamplePath};
use dicap_core::qbound::{bcjr_invariance_residual, lower_bound, solve_upper, QBoundConfig};
use dicap_core::qgraph::{debruijn, ising_q1, load_qgraph, QGraph};
use dicap_core::Error;
use libc::{c_char, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::sync::OnceLock;

/// Status codes mirroring the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DicapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    NumericFailure = 3,
    DomainError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> DicapStatus {
    match err {
        Error::Parse { .. }
        | Error::InvalidConfig { .. }
        | Error::Io(_)
        | Error::ShapeMismatch { .. }
        | Error::NotNormalized { .. }
        | Error::NegativeProbability { .. }
        | Error::OutOfRange { .. }
        | Error::SizeGuard { .. } => DicapStatus::InvalidConfig,
        Error::NonConvergence { .. } | Error::SingularSystem | Error::BracketFailure => {
            DicapStatus::NumericFailure
        }
        _ => DicapStatus::DomainError,
    }
}

fn fail(err: Error) -> DicapStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

/// Opaque unifilar channel handle.
pub struct DicapChannel {
    inner: UnifilarFsc,
}

/// Opaque Q-graph handle.
pub struct DicapQGraph {
    inner: QGraph,
}

/// Last error message for the calling thread. The pointer stays valid
/// until the next failing call on the same thread and must not be freed.
#[no_mangle]
pub extern "C" fn dicap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dicap_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(dicap_core::VERSION).expect("version"))
        .as_ptr()
}

/// Build the q-ary Ising channel (`2 <= q <= 8`).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dicap_channel_ising(
    q: size_t,
    out: *mut *mut DicapChannel,
) -> DicapStatus {
    if out.is_null() {
        return DicapStatus::NullPointer;
    }
    match make_qary_ising(q) {
        Ok(ch) => {
            *out = Box::into_raw(Box::new(DicapChannel { inner: ch }));
            DicapStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Build a binary symmetric channel wrapped as a one-state unifilar FSC.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dicap_channel_bsc(p: f64, out: *mut *mut DicapChannel) -> DicapStatus {
    if out.is_null() {
        return DicapStatus::NullPointer;
    }
    match make_bsc(p) {
        Ok(ch) => {
            *out = Box::into_raw(Box::new(DicapChannel { inner: ch }));
            DicapStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Load a channel spec file (TOML).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dicap_channel_load(
    path: *const c_char,
    out: *mut *mut DicapChannel,
) -> DicapStatus {
    if path.is_null() || out.is_null() {
        return DicapStatus::NullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return DicapStatus::InvalidConfig;
        }
    };
    match load_channel(path) {
        Ok(ch) => {
            *out = Box::into_raw(Box::new(DicapChannel { inner: ch }));
            DicapStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Release a channel handle.
///
/// # Safety
/// `ch` must come from a `dicap_channel_*` constructor, not freed twice.
#[no_mangle]
pub unsafe extern "C" fn dicap_channel_free(ch: *mut DicapChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// The 4-node output-quantization graph of the binary Ising channel.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dicap_qgraph_ising_q1(out: *mut *mut DicapQGraph) -> DicapStatus {
    if out.is_null() {
        return DicapStatus::NullPointer;
    }
    *out = Box::into_raw(Box::new(DicapQGraph { inner: ising_q1() }));
    DicapStatus::Ok
}

/// De Bruijn graph of order `m` over an output alphabet of size `y_size`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dicap_qgraph_debruijn(
    m: size_t,
    y_size: size_t,
    out: *mut *mut DicapQGraph,
) -> DicapStatus {
    if out.is_null() {
        return DicapStatus::NullPointer;
    }
    match debruijn(m, y_size) {
        Ok(g) => {
            *out = Box::into_raw(Box::new(DicapQGraph { inner: g }));
            DicapStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Load a Q-graph spec file (TOML).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dicap_qgraph_load(
    path: *const c_char,
    out: *mut *mut DicapQGraph,
) -> DicapStatus {
    if path.is_null() || out.is_null() {
        return DicapStatus::NullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return DicapStatus::InvalidConfig;
        }
    };
    match load_qgraph(path) {
        Ok(g) => {
            *out = Box::into_raw(Box::new(DicapQGraph { inner: g }));
            DicapStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Release a Q-graph handle.
///
/// # Safety
/// `g` must come from a `dicap_qgraph_*` constructor, not freed twice.
#[no_mangle]
pub unsafe extern "C" fn dicap_qgraph_free(g: *mut DicapQGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Root of `a^3 = (1-a)^4` and the binary Ising feedback capacity in bits.
///
/// # Safety
/// Both output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dicap_ising_solution(out_a: *mut f64, out_rho: *mut f64) -> DicapStatus {
    if out_a.is_null() || out_rho.is_null() {
        return DicapStatus::NullPointer;
    }
    let sol = ising_solution();
    *out_a = sol.a;
    *out_rho = sol.rho_star;
    DicapStatus::Ok
}

/// Closed-form feedback capacity of the q-ary Ising channel.
///
/// # Safety
/// Both output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dicap_qary_ising_capacity(
    x_size: size_t,
    out_p: *mut f64,
    out_value: *mut f64,
) -> DicapStatus {
    if out_p.is_null() || out_value.is_null() {
        return DicapStatus::NullPointer;
    }
    match qary_ising_capacity(x_size) {
        Ok(sol) => {
            *out_p = sol.p;
            *out_value = sol.value_bits;
            DicapStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Value iteration on the belief MDP: writes the span bracket
/// `[rho_low, rho_high]` around the feedback capacity, in bits.
///
/// # Safety
/// `ch` must be a live channel handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dicap_value_iteration(
    ch: *const DicapChannel,
    grid: size_t,
    iters: size_t,
    out_rho_low: *mut f64,
    out_rho_high: *mut f64,
) -> DicapStatus {
    if ch.is_null() || out_rho_low.is_null() || out_rho_high.is_null() {
        return DicapStatus::NullPointer;
    }
    match value_iteration(&(*ch).inner, grid, iters, ViOptions::default()) {
        Ok(res) => {
            *out_rho_low = res.rho_low;
            *out_rho_high = res.rho_high;
            DicapStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Q-graph sandwich: the convex-program upper bound, the matching lower
/// bound of the extracted policy, and its BCJR-invariance residual.
///
/// # Safety
/// `ch` and `g` must be live handles; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dicap_qbound(
    ch: *const DicapChannel,
    g: *const DicapQGraph,
    out_upper: *mut f64,
    out_lower: *mut f64,
    out_invariance: *mut f64,
) -> DicapStatus {
    if ch.is_null()
        || g.is_null()
        || out_upper.is_null()
        || out_lower.is_null()
        || out_invariance.is_null()
    {
        return DicapStatus::NullPointer;
    }
    let channel = &(*ch).inner;
    let graph = &(*g).inner;
    let solution = match solve_upper(channel, graph, QBoundConfig::default()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let invariance = match bcjr_invariance_residual(&solution.policy, channel, graph) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let lower = match lower_bound(&solution.policy, channel, graph, 1e-6) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    *out_upper = solution.bound_bits;
    *out_lower = lower;
    *out_invariance = invariance;
    DicapStatus::Ok
}

/// Dual bound: golden-section over the scalar Ising test family on
/// `[lo, hi]`, writing the minimizing parameter and the bound in bits.
///
/// # Safety
/// `ch` and `g` must be live handles; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dicap_duality_optimize(
    ch: *const DicapChannel,
    g: *const DicapQGraph,
    lo: f64,
    hi: f64,
    out_a: *mut f64,
    out_rho: *mut f64,
) -> DicapStatus {
    if ch.is_null() || g.is_null() || out_a.is_null() || out_rho.is_null() {
        return DicapStatus::NullPointer;
    }
    match optimize_test_param(&(*ch).inner, &(*g).inner, TestFamily::IsingQ1, (lo, hi), 1e-7) {
        Ok(opt) => {
            *out_a = opt.a;
            *out_rho = opt.rho;
            DicapStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Extended Blahut-Arimoto at blocklength `n` from initial state `s0`:
/// writes the sandwich `[i_l, i_u]` in bits per symbol.
///
/// # Safety
/// `ch` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dicap_ba_bounds(
    ch: *const DicapChannel,
    n: size_t,
    s0: size_t,
    eps: f64,
    max_iter: size_t,
    out_i_l: *mut f64,
    out_i_u: *mut f64,
) -> DicapStatus {
    if ch.is_null() || out_i_l.is_null() || out_i_u.is_null() {
        return DicapStatus::NullPointer;
    }
    let table = match dicap_core::ba_di::unroll_channel(&(*ch).inner, n, s0) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    match dicap_core::ba_di::ba_iterate(&table, eps, max_iter) {
        Ok(state) => {
            *out_i_l = state.i_l;
            *out_i_u = state.i_u;
            DicapStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// CTW estimate of the DI rate from two parallel symbol buffers.
///
/// # Safety
/// `x` and `y` must point to `len` readable elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dicap_ctw_di(
    x: *const size_t,
    y: *const size_t,
    len: size_t,
    x_size: size_t,
    y_size: size_t,
    depth: size_t,
    variant: u8,
    out: *mut f64,
) -> DicapStatus {
    if x.is_null() || y.is_null() || out.is_null() {
        return DicapStatus::NullPointer;
    }
    let xs = std::slice::from_raw_parts(x, len).to_vec();
    let ys = std::slice::from_raw_parts(y, len).to_vec();
    let path = match SamplePath::new(xs, ys, x_size, y_size) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    match ctw_di(&path, depth, variant) {
        Ok(report) => {
            *out = report.value_bits;
            DicapStatus::Ok
        }
        Err(e) => fail(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn version_is_non_null() {
        let v = dicap_version();
        assert!(!v.is_null());
        let s = unsafe { CStr::from_ptr(v) }.to_str().unwrap();
        assert_eq!(s, dicap_core::VERSION);
    }

    #[test]
    fn ising_solution_through_ffi() {
        let (mut a, mut rho) = (0.0, 0.0);
        let status = unsafe { dicap_ising_solution(&mut a, &mut rho) };
        assert_eq!(status, DicapStatus::Ok);
        assert!((a - 0.4503).abs() < 5e-4);
        assert!((rho - 0.5755).abs() < 5e-4);
    }

    #[test]
    fn channel_lifecycle_and_value_iteration() {
        unsafe {
            let mut ch: *mut DicapChannel = ptr::null_mut();
            assert_eq!(dicap_channel_bsc(0.1, &mut ch), DicapStatus::Ok);
            let (mut lo, mut hi) = (0.0, 0.0);
            assert_eq!(
                dicap_value_iteration(ch, 2, 1, &mut lo, &mut hi),
                DicapStatus::Ok
            );
            assert!((lo - 0.531).abs() < 1e-3);
            dicap_channel_free(ch);
        }
    }

    #[test]
    fn invalid_configs_set_messages() {
        unsafe {
            let mut ch: *mut DicapChannel = ptr::null_mut();
            assert_eq!(dicap_channel_ising(1, &mut ch), DicapStatus::InvalidConfig);
            let msg = CStr::from_ptr(dicap_last_error_message())
                .to_str()
                .unwrap()
                .to_string();
            assert!(msg.contains("Ising"), "{msg}");
            assert_eq!(
                dicap_channel_bsc(0.1, ptr::null_mut()),
                DicapStatus::NullPointer
            );
        }
    }

    #[test]
    fn qary_capacity_values() {
        unsafe {
            let (mut p, mut v) = (0.0, 0.0);
            assert_eq!(
                dicap_qary_ising_capacity(2, &mut p, &mut v),
                DicapStatus::Ok
            );
            assert!((v - 0.5755).abs() < 5e-4);
            assert_eq!(
                dicap_qary_ising_capacity(9, &mut p, &mut v),
                DicapStatus::InvalidConfig
            );
        }
    }

    #[test]
    fn ba_through_ffi() {
        unsafe {
            let mut ch: *mut DicapChannel = ptr::null_mut();
            assert_eq!(dicap_channel_bsc(0.1, &mut ch), DicapStatus::Ok);
            let (mut il, mut iu) = (0.0, 0.0);
            assert_eq!(
                dicap_ba_bounds(ch, 1, 0, 1e-8, 20_000, &mut il, &mut iu),
                DicapStatus::Ok
            );
            assert!((il - 0.531004).abs() < 1e-5, "{il}");
            dicap_channel_free(ch);
        }
    }

    #[test]
    fn ctw_through_ffi() {
        let n = 4000usize;
        let x: Vec<size_t> = (0..n).map(|t| (t / 2) % 2).collect();
        let y: Vec<size_t> = (0..n)
            .map(|t| if t == 0 { 0 } else { x[t - 1] })
            .collect();
        let mut out = 0.0;
        let status = unsafe { dicap_ctw_di(x.as_ptr(), y.as_ptr(), n, 2, 2, 3, 1, &mut out) };
        assert_eq!(status, DicapStatus::Ok);
        assert!(out.is_finite());
    }
}
