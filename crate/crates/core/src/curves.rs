//! Monotone saturating response curves over the pacing multiplier.
//!
//! The primary family is a normalized log-sigmoid: a standard-normal CDF
//! applied to `b·ln(α+ε) + c`, shifted and rescaled so the curve is exactly
//! zero at `α = 0` and approaches the saturation level `a` as `α → ∞`.
//! Ablation variants (linear, piecewise-linear, plain sigmoid) sit behind
//! the same [`ResponseCurve`] interface, each constrained to stay monotone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{softplus, Real};
use crate::special::{normal_cdf, normal_pdf};

/// Default log-offset constant `ε`.
pub const DEFAULT_EPS: f64 = 1e-3;

/// Guard range for the unconstrained shift parameter during fitting.
pub const RAW_SHIFT_BOUND: f64 = 20.0;

/// Softplus underflows to zero for very negative raw inputs; constrained
/// parameters are floored here to keep curves valid.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("curve scale and sensitivity must be positive (a={a}, b={b})")]
    NonPositiveShape { a: f64, b: f64 },
    #[error("log-offset eps must be positive (eps={0})")]
    NonPositiveEps(f64),
    #[error("multiplier must be nonnegative (alpha={0})")]
    NegativeAlpha(f64),
    #[error("slope is defined for alpha > 0 only (alpha={0})")]
    NonPositiveSlopeAlpha(f64),
}

/// Upper tail `P(Z > x)` of the standard normal, exact where `Φ` rounds
/// to one.
fn upper_tail<S: Real>(x: S) -> S {
    S::of(0.5) * crate::special::erfc(x / S::of(std::f64::consts::SQRT_2))
}

/// Normalized log-sigmoid `(Φ(b·ln(α+ε)+c) − Φ(b·ln ε+c)) / (1 − Φ(b·ln ε+c))`.
///
/// Evaluated in the complementary form `1 − Q(z)/Q(z₀)` with
/// `Q(x) = erfc(x/√2)/2`, which avoids cancellation when the shift puts
/// the normalization point deep in the upper tail. Zero at `α = 0`,
/// strictly increasing, limit 1 as `α → ∞`.
pub fn normalized_sigmoid<S: Real>(b: S, c: S, alpha: S, eps: S) -> Result<S, CurveError> {
    if b <= S::zero() {
        return Err(CurveError::NonPositiveShape { a: 1.0, b: b.as_f64() });
    }
    if eps <= S::zero() {
        return Err(CurveError::NonPositiveEps(eps.as_f64()));
    }
    if alpha < S::zero() {
        return Err(CurveError::NegativeAlpha(alpha.as_f64()));
    }
    let tail_floor = upper_tail(b * eps.ln() + c);
    if tail_floor == S::zero() {
        // The normalization point is beyond floating-point resolution:
        // the curve is saturated for every positive multiplier.
        return Ok(if alpha > S::zero() { S::one() } else { S::zero() });
    }
    let tail = upper_tail(b * (alpha + eps).ln() + c);
    Ok(S::one() - tail / tail_floor)
}

/// Parameters of one normalized log-sigmoid curve.
///
/// `a` is the saturation level in per-opportunity output units, `b` the
/// log-scale sensitivity, `c` the shift. Construction validates `a, b,
/// eps > 0`; [`CurveParams::from_raw`] maps unconstrained reals through
/// softplus instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams<S: Real> {
    pub a: S,
    pub b: S,
    pub c: S,
    #[serde(default = "default_eps")]
    pub eps: S,
}

fn default_eps<S: Real>() -> S {
    S::of(DEFAULT_EPS)
}

impl<S: Real> CurveParams<S> {
    pub fn new(a: S, b: S, c: S) -> Result<Self, CurveError> {
        Self::with_eps(a, b, c, S::of(DEFAULT_EPS))
    }

    pub fn with_eps(a: S, b: S, c: S, eps: S) -> Result<Self, CurveError> {
        if a <= S::zero() || b <= S::zero() {
            return Err(CurveError::NonPositiveShape { a: a.as_f64(), b: b.as_f64() });
        }
        if eps <= S::zero() {
            return Err(CurveError::NonPositiveEps(eps.as_f64()));
        }
        Ok(Self { a, b, c, eps })
    }

    /// Map unconstrained `(raw_a, raw_b, raw_c)` into valid parameters:
    /// softplus for positivity of `a` and `b`, a smooth ±20 bound on `c`.
    pub fn from_raw(raw_a: S, raw_b: S, raw_c: S) -> Self {
        let bound = S::of(RAW_SHIFT_BOUND);
        let floor = S::of(POSITIVITY_FLOOR);
        Self {
            a: softplus(raw_a).max(floor),
            b: softplus(raw_b).max(floor),
            c: bound * (raw_c / bound).tanh(),
            eps: S::of(DEFAULT_EPS),
        }
    }

    /// `a · Φ̃(b, c, α, ε)`, in `[0, a)`.
    pub fn try_eval(&self, alpha: S) -> Result<S, CurveError> {
        Ok(self.a * normalized_sigmoid(self.b, self.c, alpha, self.eps)?)
    }

    /// Analytic derivative `d/dα`, strictly positive for `α > 0`.
    pub fn try_slope(&self, alpha: S) -> Result<S, CurveError> {
        if alpha <= S::zero() {
            return Err(CurveError::NonPositiveSlopeAlpha(alpha.as_f64()));
        }
        let tail_floor = upper_tail(self.b * self.eps.ln() + self.c);
        if tail_floor == S::zero() {
            return Ok(S::zero());
        }
        let z = self.b * (alpha + self.eps).ln() + self.c;
        Ok(self.a * normal_pdf(z) * self.b / ((alpha + self.eps) * tail_floor))
    }
}

/// Per-opportunity expected response as a function of the multiplier.
///
/// Implementors must be non-decreasing on `α ≥ 0` with `eval(0) ≥ 0`.
pub trait ResponseCurve<S: Real> {
    fn eval(&self, alpha: S) -> S;

    /// Derivative in `α`; callers only query `α > 0`.
    fn slope(&self, alpha: S) -> S;

    /// Least upper bound of the curve over `α ≥ 0` (`+∞` if unbounded).
    fn level(&self) -> S;
}

impl<S: Real> ResponseCurve<S> for CurveParams<S> {
    fn eval(&self, alpha: S) -> S {
        self.try_eval(alpha).expect("validated params, alpha >= 0")
    }

    fn slope(&self, alpha: S) -> S {
        self.try_slope(alpha).expect("validated params, alpha > 0")
    }

    fn level(&self) -> S {
        self.a
    }
}

impl<S: Real, C: ResponseCurve<S> + ?Sized> ResponseCurve<S> for &C {
    fn eval(&self, alpha: S) -> S {
        (**self).eval(alpha)
    }
    fn slope(&self, alpha: S) -> S {
        (**self).slope(alpha)
    }
    fn level(&self) -> S {
        (**self).level()
    }
}

impl<S: Real, C: ResponseCurve<S> + ?Sized> ResponseCurve<S> for Box<C> {
    fn eval(&self, alpha: S) -> S {
        (**self).eval(alpha)
    }
    fn slope(&self, alpha: S) -> S {
        (**self).slope(alpha)
    }
    fn level(&self) -> S {
        (**self).level()
    }
}

/// Which parametric family a fitted curve belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    LogSigmoid,
    Linear,
    PiecewiseLinear,
    Sigmoid,
}

/// Number of interior knots for the piecewise-linear family.
pub const PIECEWISE_SEGMENTS: usize = 6;

/// A fitted member of one of the curve families.
///
/// All variants pass through the origin and are non-decreasing by
/// construction, so they can stand in for [`CurveParams`] anywhere the
/// controller evaluates a predicted curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CurveModel<S: Real> {
    LogSigmoid(CurveParams<S>),
    /// `slope · α`, unbounded.
    Linear { slope: S },
    /// Non-decreasing interpolation through knots at multiples of
    /// `knot_step`, flat beyond the last knot.
    PiecewiseLinear { knot_step: S, heights: Vec<S> },
    /// Normalized plain sigmoid `a·(Φ(bα+c) − Φ(c))/(1 − Φ(c))`.
    Sigmoid { a: S, b: S, c: S },
}

impl<S: Real> CurveModel<S> {
    pub fn kind(&self) -> FamilyKind {
        match self {
            CurveModel::LogSigmoid(_) => FamilyKind::LogSigmoid,
            CurveModel::Linear { .. } => FamilyKind::Linear,
            CurveModel::PiecewiseLinear { .. } => FamilyKind::PiecewiseLinear,
            CurveModel::Sigmoid { .. } => FamilyKind::Sigmoid,
        }
    }

    /// Dimension of the unconstrained parameter vector for fitting.
    pub fn param_count(kind: FamilyKind) -> usize {
        match kind {
            FamilyKind::LogSigmoid | FamilyKind::Sigmoid => 3,
            FamilyKind::Linear => 1,
            FamilyKind::PiecewiseLinear => PIECEWISE_SEGMENTS,
        }
    }

    /// Build a family member from unconstrained parameters.
    ///
    /// `alpha_max` fixes the knot layout of the piecewise family; other
    /// families ignore it.
    pub fn from_raw(kind: FamilyKind, raw: &[S], alpha_max: S) -> Self {
        assert_eq!(raw.len(), Self::param_count(kind), "raw parameter length");
        match kind {
            FamilyKind::LogSigmoid => CurveModel::LogSigmoid(CurveParams::from_raw(raw[0], raw[1], raw[2])),
            FamilyKind::Linear => CurveModel::Linear { slope: softplus(raw[0]).max(S::of(POSITIVITY_FLOOR)) },
            FamilyKind::PiecewiseLinear => {
                let step = alpha_max / S::of(PIECEWISE_SEGMENTS as f64);
                let mut heights = Vec::with_capacity(PIECEWISE_SEGMENTS);
                let mut h = S::zero();
                for &r in raw {
                    h += softplus(r).max(S::of(POSITIVITY_FLOOR));
                    heights.push(h);
                }
                CurveModel::PiecewiseLinear { knot_step: step, heights }
            }
            FamilyKind::Sigmoid => {
                let bound = S::of(RAW_SHIFT_BOUND);
                let floor = S::of(POSITIVITY_FLOOR);
                CurveModel::Sigmoid {
                    a: softplus(raw[0]).max(floor),
                    b: softplus(raw[1]).max(floor),
                    c: bound * (raw[2] / bound).tanh(),
                }
            }
        }
    }
}

impl<S: Real> ResponseCurve<S> for CurveModel<S> {
    fn eval(&self, alpha: S) -> S {
        match self {
            CurveModel::LogSigmoid(p) => p.eval(alpha),
            CurveModel::Linear { slope } => *slope * alpha.max(S::zero()),
            CurveModel::PiecewiseLinear { knot_step, heights } => {
                piecewise_eval(*knot_step, heights, alpha)
            }
            CurveModel::Sigmoid { a, b, c } => {
                let floor = normal_cdf(*c);
                *a * (normal_cdf(*b * alpha + *c) - floor) / (S::one() - floor)
            }
        }
    }

    fn slope(&self, alpha: S) -> S {
        match self {
            CurveModel::LogSigmoid(p) => p.slope(alpha),
            CurveModel::Linear { slope } => *slope,
            CurveModel::PiecewiseLinear { knot_step, heights } => {
                piecewise_slope(*knot_step, heights, alpha)
            }
            CurveModel::Sigmoid { a, b, c } => {
                *a * *b * normal_pdf(*b * alpha + *c) / (S::one() - normal_cdf(*c))
            }
        }
    }

    fn level(&self) -> S {
        match self {
            CurveModel::LogSigmoid(p) => p.a,
            CurveModel::Linear { .. } => S::infinity(),
            CurveModel::PiecewiseLinear { heights, .. } => {
                heights.last().copied().unwrap_or_else(S::zero)
            }
            CurveModel::Sigmoid { a, .. } => *a,
        }
    }
}

fn piecewise_eval<S: Real>(step: S, heights: &[S], alpha: S) -> S {
    if alpha <= S::zero() {
        return S::zero();
    }
    let n = heights.len();
    let pos = alpha / step;
    let idx = pos.floor().as_f64() as usize;
    if idx >= n {
        return heights[n - 1];
    }
    let prev = if idx == 0 { S::zero() } else { heights[idx - 1] };
    let frac = pos - S::of(idx as f64);
    prev + (heights[idx] - prev) * frac
}

fn piecewise_slope<S: Real>(step: S, heights: &[S], alpha: S) -> S {
    let n = heights.len();
    let idx = (alpha / step).floor().as_f64() as usize;
    if idx >= n {
        return S::zero();
    }
    let prev = if idx == 0 { S::zero() } else { heights[idx - 1] };
    (heights[idx] - prev) / step
}
