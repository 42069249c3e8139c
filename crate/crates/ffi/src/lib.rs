//! C interface to `kpzlab`.
//!
//! Every fallible function returns a [`KpzStatus`] and writes its result
//! through an out-pointer, which is left untouched on failure. The message
//! for the most recent failure on the calling thread is available from
//! [`kpz_last_error_message`]. Panics never cross the boundary.
//!
//! Pointer arguments may be null, which is reported as an error. A non-null
//! out-pointer must be valid for one write of its type, an input array must
//! hold `k` readable elements, and an environment handle must come from
//! [`kpz_environment_new`] and not have been freed.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use kpzlab::environment::{sample_environment, Disorder, DisorderKind, Environment, EnvironmentSpec};
use kpzlab::ldp::{ldp_limit, rate_pair, ssrw_log_prob};
use kpzlab::moments::{beta_moment_contour, critical_point, she_moment_contour, BetaMomentJob, SheMomentJob};
use kpzlab::rwre::{evolve_rwre, rescaled_rwre};
use kpzlab::scaling::ScalingFrame;
use kpzlab::she::heat_solution;
use kpzlab::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KpzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    /// A contour or time step the caller chose is unusable.
    BadDiscretisation = 3,
    /// The computation ran but produced an unusable result.
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KpzDisorder {
    Rademacher = 0,
    /// Uniform on `[−a, a]`.
    Uniform = 1,
    /// `2ε^{-1/2}(B − ½)` with `B ~ Beta(1/ε, 1/ε)`.
    Beta = 2,
}

/// Opaque sampled environment.
pub struct KpzEnvironment(Environment);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> KpzStatus {
    match e {
        Error::InvalidParameter { .. } => KpzStatus::InvalidParameter,
        Error::Unstable { .. } | Error::ContourTooClose { .. } | Error::InsufficientTruncation { .. } => {
            KpzStatus::BadDiscretisation
        }
        _ => KpzStatus::Numerical,
    }
}

/// Runs `f`, stores its value in `out`, and converts errors and panics.
///
/// # Safety
/// `out` must be null or valid for a write of `T`.
unsafe fn guard<T>(out: *mut T, f: impl FnOnce() -> kpzlab::Result<T>) -> KpzStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return KpzStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => {
            out.write(v);
            KpzStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            KpzStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize) -> kpzlab::Result<&'a [T]> {
    if ptr.is_null() || len == 0 {
        return Err(Error::InvalidParameter {
            name: "points",
            reason: "null or empty array".into(),
        });
    }
    Ok(slice::from_raw_parts(ptr, len))
}

/// Copies the last error message, NUL-terminated and truncated to fit, into
/// `buf`. Returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn kpz_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates an environment declared on time indices below `n_max`. `a` is
/// read only for [`KpzDisorder::Uniform`]. Free with
/// [`kpz_environment_free`].
///
/// # Safety
/// Out-pointers must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn kpz_environment_new(
    kind: KpzDisorder,
    a: f64,
    epsilon: f64,
    seed: u64,
    n_max: u64,
    out: *mut *mut KpzEnvironment,
) -> KpzStatus {
    guard(out, || {
        let kind = match kind {
            KpzDisorder::Rademacher => DisorderKind::Rademacher,
            KpzDisorder::Uniform => DisorderKind::UniformBounded { a },
            KpzDisorder::Beta => DisorderKind::BetaSymmetric,
        };
        let env = sample_environment(EnvironmentSpec::new(kind, epsilon, seed)?, n_max)?;
        Ok(Box::into_raw(Box::new(KpzEnvironment(env))))
    })
}

/// # Safety
/// `env` must be null or a live handle from [`kpz_environment_new`]; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn kpz_environment_free(env: *mut KpzEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

unsafe fn env_ref<'a>(env: *const KpzEnvironment) -> kpzlab::Result<&'a Environment> {
    env.as_ref().map(|e| &e.0).ok_or_else(|| Error::InvalidParameter {
        name: "env",
        reason: "null handle".into(),
    })
}

/// # Safety
/// `env` must be null or a live handle; `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn kpz_environment_omega(env: *const KpzEnvironment, i: u64, j: i64, out: *mut f64) -> KpzStatus {
    guard(out, || Ok(env_ref(env)?.omega(i, j)))
}

/// `ln P^ω(S_n = y)`.
///
/// # Safety
/// `env` must be null or a live handle; `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn kpz_rwre_log_prob(env: *const KpzEnvironment, n: u64, y: i64, out: *mut f64) -> KpzStatus {
    guard(out, || Ok(evolve_rwre(env_ref(env)?, n)?.get(y)))
}

/// Rescaled walk probability at the lattice point snapped from `(t, x)`.
///
/// # Safety
/// `env` must be null or a live handle; `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn kpz_rescaled_rwre(
    env: *const KpzEnvironment,
    v: f64,
    t: f64,
    x: f64,
    out: *mut f64,
) -> KpzStatus {
    guard(out, || {
        let env = env_ref(env)?;
        let frame = ScalingFrame::new(env.spec().epsilon, v)?;
        Ok(rescaled_rwre(env, &frame, t, x)?.value)
    })
}

/// `ln P⁰(S_n = m)`; `-inf` off the support.
#[no_mangle]
pub extern "C" fn kpz_ssrw_log_prob(n: u64, m: i64) -> f64 {
    ssrw_log_prob(n, m).ln()
}

/// Rate function `I(v)` and its slope `I'(v)`.
///
/// # Safety
/// Out-pointers must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn kpz_rate(v: f64, rate: *mut f64, slope: *mut f64) -> KpzStatus {
    if slope.is_null() {
        set_error("null output pointer".into());
        return KpzStatus::NullPointer;
    }
    let mut s = 0.0;
    let status = guard(rate, || {
        let rp = rate_pair(v)?;
        s = rp.slope;
        Ok(rp.rate)
    });
    if status == KpzStatus::Ok {
        slope.write(s);
    }
    status
}

/// # Safety
/// Out-pointers must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn kpz_ldp_limit(v: f64, t: f64, x: f64, m1: i32, m2: i32, out: *mut f64) -> KpzStatus {
    guard(out, || ldp_limit(v, t, x, m1, m2))
}

/// `2 p_{1−v²}(t, x)`.
///
/// # Safety
/// Out-pointers must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn kpz_heat_solution(v: f64, t: f64, x: f64, out: *mut f64) -> KpzStatus {
    guard(out, || heat_solution(v, t, x))
}

/// `E[Z(T, n_1) ⋯ Z(T, n_k)]` for the Beta(α, β) polymer by contour
/// integration, `k ∈ {1, 2}`, sites non-increasing.
///
/// # Safety
/// The input array must be null or hold `k` readable elements; `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn kpz_beta_moment(
    steps: u64,
    sites: *const i64,
    k: usize,
    alpha: f64,
    beta: f64,
    n_points: usize,
    out: *mut f64,
) -> KpzStatus {
    guard(out, || {
        let sites = input(sites, k)?.to_vec();
        Ok(beta_moment_contour(&BetaMomentJob::new(steps, sites, alpha, beta, n_points))?.value)
    })
}

/// `E[u(t, x_1) ⋯ u(t, x_k)]` for the limiting SHE, `k ∈ {1, 2}`.
///
/// # Safety
/// The input array must be null or hold `k` readable elements; `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn kpz_she_moment(
    t: f64,
    xs: *const f64,
    k: usize,
    gamma: f64,
    n_points: usize,
    out: *mut f64,
) -> KpzStatus {
    guard(out, || {
        let xs = input(xs, k)?.to_vec();
        Ok(she_moment_contour(&SheMomentJob::new(t, xs, gamma, n_points))?.value)
    })
}

/// Saddle point of the moment exponent: the asymptotic `z₀` and the root
/// found numerically.
///
/// # Safety
/// Out-pointers must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn kpz_critical_point(
    gamma: f64,
    epsilon: f64,
    t: f64,
    x: f64,
    z0_asymptotic: *mut f64,
    z0_numeric: *mut f64,
) -> KpzStatus {
    if z0_numeric.is_null() {
        set_error("null output pointer".into());
        return KpzStatus::NullPointer;
    }
    let mut numeric = 0.0;
    let status = guard(z0_asymptotic, || {
        let cp = critical_point(gamma, epsilon, t, x)?;
        numeric = cp.z0_numeric;
        Ok(cp.z0_asymptotic)
    });
    if status == KpzStatus::Ok {
        z0_numeric.write(numeric);
    }
    status
}
