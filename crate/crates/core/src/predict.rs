//! Response-bundle forecasts consumed by the pacing controller.
//!
//! A bundle is the remaining-traffic forecast plus per-opportunity cost and
//! value curves for the rest of the horizon. Two predictor families live
//! here: the exact oracle over the synthetic market, with optional
//! injectable sup-norm errors for the violation analysis, and the curve
//! evaluation plumbing shared with the empirical fitter in [`crate::fit`].

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{CurveModel, ResponseCurve};
use crate::market::{aggregate_response, AggregateCurve, GroundTruth, MarketError};
use crate::num::Real;

/// Forecast floor so a perturbed traffic estimate stays positive.
pub const TRAFFIC_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("curve fit failed: {0}")]
    Fit(String),
    #[error("traffic forecast must be positive, got {0}")]
    NonPositiveTraffic(f64),
}

/// Remaining-horizon forecast: traffic plus the two aggregate curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseBundle<S: Real, C: ResponseCurve<S>> {
    pub traffic: S,
    pub cost: C,
    pub value: C,
}

impl<S: Real, C: ResponseCurve<S>> ResponseBundle<S, C> {
    pub fn new(traffic: S, cost: C, value: C) -> Result<Self, PredictError> {
        if traffic <= S::zero() {
            return Err(PredictError::NonPositiveTraffic(traffic.as_f64()));
        }
        Ok(Self { traffic, cost, value })
    }

    /// Predicted total remaining cost `Î·C̄̂(α)`.
    pub fn total_cost(&self, alpha: S) -> S {
        self.traffic * self.cost.eval(alpha)
    }

    /// Predicted total remaining value `Î·V̄̂(α)`.
    pub fn total_value(&self, alpha: S) -> S {
        self.traffic * self.value.eval(alpha)
    }

    /// Predicted total `Ψ̂(α) = Î·(C̄̂(α) − τ·V̄̂(α))`.
    pub fn total_psi(&self, alpha: S, target_cpa: S) -> S {
        self.traffic * (self.cost.eval(alpha) - target_cpa * self.value.eval(alpha))
    }

    /// Slope of [`Self::total_psi`] in `α`.
    pub fn total_psi_slope(&self, alpha: S, target_cpa: S) -> S {
        self.traffic * (self.cost.slope(alpha) - target_cpa * self.value.slope(alpha))
    }
}

/// Curve representation a predictor can hand to the controller: a fitted
/// parametric model, the exact synthetic aggregate, or either of those
/// shifted by a constant per-opportunity offset (clamped at zero).
#[derive(Debug, Clone)]
pub enum PredictedCurve {
    Model(CurveModel<f64>),
    Exact(AggregateCurve),
    Shifted { base: Box<PredictedCurve>, offset: f64 },
}

impl ResponseCurve<f64> for PredictedCurve {
    fn eval(&self, alpha: f64) -> f64 {
        match self {
            PredictedCurve::Model(m) => m.eval(alpha),
            PredictedCurve::Exact(c) => c.eval(alpha),
            PredictedCurve::Shifted { base, offset } => (base.eval(alpha) + offset).max(0.0),
        }
    }

    fn slope(&self, alpha: f64) -> f64 {
        match self {
            PredictedCurve::Model(m) => m.slope(alpha),
            PredictedCurve::Exact(c) => c.slope(alpha),
            PredictedCurve::Shifted { base, offset } => {
                if base.eval(alpha) + offset <= 0.0 {
                    0.0
                } else {
                    base.slope(alpha)
                }
            }
        }
    }

    fn level(&self) -> f64 {
        match self {
            PredictedCurve::Model(m) => m.level(),
            PredictedCurve::Exact(c) => c.level(),
            PredictedCurve::Shifted { base, offset } => (base.level() + offset).max(0.0),
        }
    }
}

/// Bundle type flowing through episodes.
pub type Bundle = ResponseBundle<f64, PredictedCurve>;

/// Sign convention for injected prediction errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignPattern {
    /// Predictions overstate: `predicted = true + ε`.
    #[default]
    Inflate,
    /// Predictions understate: `predicted = true − ε`.
    Deflate,
    /// Per-component signs drawn once per predictor.
    Random,
}

/// Requested sup-norm prediction errors (all nonnegative magnitudes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub eps_cost: f64,
    pub eps_value: f64,
    pub eps_traffic: f64,
    #[serde(default)]
    pub pattern: SignPattern,
}

impl ErrorSpec {
    pub const ZERO: ErrorSpec = ErrorSpec {
        eps_cost: 0.0,
        eps_value: 0.0,
        eps_traffic: 0.0,
        pattern: SignPattern::Inflate,
    };

    pub fn validate(&self) -> Result<(), PredictError> {
        if self.eps_cost < 0.0 || self.eps_value < 0.0 || self.eps_traffic < 0.0 {
            return Err(PredictError::Fit("error magnitudes must be nonnegative".into()));
        }
        Ok(())
    }

    /// Fix concrete signed offsets per the pattern.
    pub fn resolve<R: Rng>(&self, rng: &mut R) -> SignedErrors {
        let sign = |rng: &mut R| if rng.gen::<bool>() { 1.0 } else { -1.0 };
        match self.pattern {
            SignPattern::Inflate => SignedErrors {
                d_cost: self.eps_cost,
                d_value: self.eps_value,
                d_traffic: self.eps_traffic,
            },
            SignPattern::Deflate => SignedErrors {
                d_cost: -self.eps_cost,
                d_value: -self.eps_value,
                d_traffic: -self.eps_traffic,
            },
            SignPattern::Random => SignedErrors {
                d_cost: sign(rng) * self.eps_cost,
                d_value: sign(rng) * self.eps_value,
                d_traffic: sign(rng) * self.eps_traffic,
            },
        }
    }

    /// Signs chosen adversarially against both constraints: costs
    /// understated, value overstated, traffic understated.
    pub fn worst_case(&self) -> SignedErrors {
        SignedErrors {
            d_cost: -self.eps_cost,
            d_value: self.eps_value,
            d_traffic: -self.eps_traffic,
        }
    }
}

/// Concrete signed offsets applied to every prediction of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SignedErrors {
    pub d_cost: f64,
    pub d_value: f64,
    pub d_traffic: f64,
}

impl SignedErrors {
    pub fn is_zero(&self) -> bool {
        self.d_cost == 0.0 && self.d_value == 0.0 && self.d_traffic == 0.0
    }
}

/// Anything that can produce a bundle for an anchor tick.
pub trait Predictor {
    fn predict(&mut self, t: usize) -> Result<Bundle, PredictError>;
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&mut self, t: usize) -> Result<Bundle, PredictError> {
        (**self).predict(t)
    }
}

/// Oracle over the synthetic market: returns the true aggregate response,
/// optionally shifted by fixed signed offsets.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    gt: Arc<GroundTruth>,
    errors: SignedErrors,
}

impl OraclePredictor {
    /// Error-free oracle.
    pub fn exact(gt: Arc<GroundTruth>) -> Self {
        Self { gt, errors: SignedErrors::default() }
    }

    /// Oracle with signs resolved from an [`ErrorSpec`].
    pub fn with_errors<R: Rng>(
        gt: Arc<GroundTruth>,
        spec: &ErrorSpec,
        rng: &mut R,
    ) -> Result<Self, PredictError> {
        spec.validate()?;
        Ok(Self { gt, errors: spec.resolve(rng) })
    }

    /// Oracle with pre-resolved signed offsets.
    pub fn with_signed(gt: Arc<GroundTruth>, errors: SignedErrors) -> Self {
        Self { gt, errors }
    }

    pub fn errors(&self) -> SignedErrors {
        self.errors
    }
}

impl Predictor for OraclePredictor {
    fn predict(&mut self, t: usize) -> Result<Bundle, PredictError> {
        let (traffic, cost, value) = aggregate_response(&self.gt, t)?;
        let shift = |curve: AggregateCurve, offset: f64| {
            if offset == 0.0 {
                PredictedCurve::Exact(curve)
            } else {
                PredictedCurve::Shifted { base: Box::new(PredictedCurve::Exact(curve)), offset }
            }
        };
        ResponseBundle::new(
            (traffic + self.errors.d_traffic).max(TRAFFIC_FLOOR),
            shift(cost, self.errors.d_cost),
            shift(value, self.errors.d_value),
        )
    }
}

/// Largest absolute gap between two curves on an `n`-point grid over
/// `[lo, hi]` (endpoints included).
pub fn sup_deviation(
    a: &impl ResponseCurve<f64>,
    b: &impl ResponseCurve<f64>,
    lo: f64,
    hi: f64,
    n: usize,
) -> f64 {
    debug_assert!(n >= 2 && lo < hi);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let alpha = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        worst = worst.max((a.eval(alpha) - b.eval(alpha)).abs());
    }
    worst
}
