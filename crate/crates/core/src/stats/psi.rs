//! The mutual-information-to-demographic-parity bound.
//!
//! `psi` is a strictly increasing nonnegative convex function with the
//! property that `I(Z;S) >= psi(dp)` for the demographic parity violation
//! `dp` of any downstream model built on `Z`. Certifying
//! `I(Z;S) <= psi(epsilon)` therefore certifies `dp <= epsilon` for every
//! downstream model at once. `psi_inverse` converts a certified bound on the
//! mutual-information side back into the demographic-parity bound it implies.

use crate::error::CoreError;
use crate::Result;

/// Tolerance for "priors sum to one" checks.
const PRIOR_SUM_TOL: f64 = 1e-9;

/// Absolute bisection tolerance for [`psi_inverse`].
const INVERSE_TOL: f64 = 1e-9;

/// The helper function underlying `psi`:
/// `f(v) = max( ln((2+v)/(2-v)) - 2v/(2+v), v^2/2 + v^4/36 + v^6/288 )`
/// on the domain `0 <= v < 2`. Nonnegative, increasing, convex, `f(0) = 0`.
pub fn helper_f(v: f64) -> Result<f64> {
    if !v.is_finite() || !(0.0..2.0).contains(&v) {
        return Err(CoreError::domain(format!(
            "helper_f: v={v} outside [0, 2)"
        )));
    }
    let log_branch = ((2.0 + v) / (2.0 - v)).ln() - 2.0 * v / (2.0 + v);
    let poly_branch = v * v / 2.0 + v.powi(4) / 36.0 + v.powi(6) / 288.0;
    Ok(log_branch.max(poly_branch))
}

fn check_delta_dp(delta_dp: f64) -> Result<()> {
    if !delta_dp.is_finite() || !(0.0..=1.0).contains(&delta_dp) {
        return Err(CoreError::domain(format!(
            "psi: delta_dp={delta_dp} outside [0, 1]"
        )));
    }
    Ok(())
}

/// `psi` for a binary sensitive attribute with `pi = Pr(S = 1)`:
/// `(1-pi) f(pi d) + pi f((1-pi) d)`.
pub fn psi_binary(delta_dp: f64, pi: f64) -> Result<f64> {
    check_delta_dp(delta_dp)?;
    if !pi.is_finite() || pi <= 0.0 || pi >= 1.0 {
        return Err(CoreError::domain(format!(
            "psi_binary: pi={pi} outside (0, 1)"
        )));
    }
    Ok((1.0 - pi) * helper_f(pi * delta_dp)? + pi * helper_f((1.0 - pi) * delta_dp)?)
}

/// `psi` for a K-group sensitive attribute: `f(alpha d)` with
/// `alpha = min_k pi_k`.
pub fn psi_multinomial(delta_dp: f64, pis: &[f64]) -> Result<f64> {
    check_delta_dp(delta_dp)?;
    validate_priors(pis)?;
    let alpha = pis.iter().cloned().fold(f64::INFINITY, f64::min);
    helper_f(alpha * delta_dp)
}

/// Dispatch on the number of groups: the two-group form for K = 2 (with
/// `pi = pis[1]`, matching the convention that group 1 is `S = 1`), the
/// minimum-prior form otherwise.
pub fn psi(delta_dp: f64, pis: &[f64]) -> Result<f64> {
    if pis.len() == 2 {
        psi_binary(delta_dp, pis[1])
    } else {
        psi_multinomial(delta_dp, pis)
    }
}

/// The unique `d` in `[0, 1]` with `psi(d) = target`, or `1.0` when even
/// `psi(1)` falls below the target. Bisection to 1e-9 absolute.
pub fn psi_inverse(target: f64, pis: &[f64]) -> Result<f64> {
    if !target.is_finite() || target < 0.0 {
        return Err(CoreError::domain(format!(
            "psi_inverse: target={target} must be >= 0"
        )));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    if psi(1.0, pis)? < target {
        return Ok(1.0);
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while hi - lo > INVERSE_TOL {
        let mid = 0.5 * (lo + hi);
        if psi(mid, pis)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub(crate) fn validate_priors(pis: &[f64]) -> Result<()> {
    if pis.len() < 2 {
        return Err(CoreError::domain(
            "priors must cover at least two groups".to_string(),
        ));
    }
    let mut sum = 0.0;
    for (k, &p) in pis.iter().enumerate() {
        if !p.is_finite() || p <= 0.0 {
            return Err(CoreError::domain(format!(
                "prior for group {k} is {p}; every group needs positive probability"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PRIOR_SUM_TOL {
        return Err(CoreError::domain(format!(
            "priors sum to {sum}, expected 1"
        )));
    }
    Ok(())
}
