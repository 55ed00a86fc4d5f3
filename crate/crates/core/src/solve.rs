//! 1D root solving on monotone functions.
//!
//! The controller inverts predicted response curves with plain bisection.
//! The solver always returns the *lower* end of the final bracket, so for
//! a non-decreasing `f` the returned point satisfies `f(α) ≤ target`; the
//! controller never plans to exceed a constraint because of solver slack.

use thiserror::Error;

use crate::num::Real;

/// Default relative interval tolerance for constraint solves.
pub const DEFAULT_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SolveError {
    #[error("empty bracket: lo={lo} must be < hi={hi}")]
    EmptyBracket { lo: f64, hi: f64 },
    #[error("relative tolerance must be positive, got {0}")]
    NonPositiveTol(f64),
}

/// Where the returned multiplier sits relative to the bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    /// A root was bracketed strictly inside `[lo, hi]`.
    Interior,
    /// `f(lo) > target`; the target is unreachable from below.
    AtLow,
    /// `f(hi) < target`; the target is unreachable within the bracket.
    AtHigh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection<S> {
    pub alpha: S,
    pub clamp: Clamp,
}

/// Solve `f(α) = target` for non-decreasing `f` on `[lo, hi]`.
///
/// Runs until the bracket width drops below `rel_tol · (hi − lo)` and
/// returns the lower endpoint. Out-of-range targets clamp to the nearest
/// endpoint with the corresponding [`Clamp`] flag.
pub fn bisect_monotone<S: Real>(
    f: impl Fn(S) -> S,
    target: S,
    lo: S,
    hi: S,
    rel_tol: S,
) -> Result<Bisection<S>, SolveError> {
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(SolveError::EmptyBracket { lo: lo.as_f64(), hi: hi.as_f64() });
    }
    if rel_tol <= S::zero() {
        return Err(SolveError::NonPositiveTol(rel_tol.as_f64()));
    }
    if f(hi) < target {
        return Ok(Bisection { alpha: hi, clamp: Clamp::AtHigh });
    }
    if f(lo) > target {
        return Ok(Bisection { alpha: lo, clamp: Clamp::AtLow });
    }
    let alpha = shrink_bracket(&f, target, lo, hi, rel_tol * (hi - lo));
    Ok(Bisection { alpha, clamp: Clamp::Interior })
}

/// Shrink a bracket with `f(lo) ≤ target ≤ f(hi)` down to `width_tol` and
/// return its lower end.
pub fn shrink_bracket<S: Real>(
    f: impl Fn(S) -> S,
    target: S,
    mut lo: S,
    mut hi: S,
    width_tol: S,
) -> S {
    let half = S::of(0.5);
    while hi - lo > width_tol {
        let mid = half * (lo + hi);
        if f(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
