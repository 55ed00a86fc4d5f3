//! Analytic min-pacing control on predicted response bundles.
//!
//! Per tick the controller solves two 1D root problems on the predicted
//! horizon totals: the multiplier `α_B` that spends exactly the remaining
//! budget, and the multiplier `α_C` that lands on the CPA boundary. It
//! executes the conservative `min(α_B, α_C)` and replans every tick on
//! the realized state.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::ResponseCurve;
use crate::market::{
    run_tick, ActionRange, CampaignConfig, EpisodeState, GroundTruth, MarketError, Mode,
    TickOutcome,
};
use crate::num::Real;
use crate::predict::{Bundle, PredictError, Predictor, ResponseBundle};
use crate::solve::{bisect_monotone, shrink_bracket, Clamp, DEFAULT_REL_TOL};

/// Grid resolution of the Ψ̂ slope-sign monotonicity probe.
pub const PSI_SLOPE_GRID: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("episode state violated an invariant: {0}")]
    State(String),
}

/// Remaining budget and CPA slack at the current tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints<S> {
    pub remaining_budget: S,
    pub cpa_slack: S,
}

/// `B_t = B − Cost_{<t}` and `Δ_t = τ·Val_{<t} − Cost_{<t}`.
pub fn remaining_constraints(state: &EpisodeState, config: &CampaignConfig) -> Constraints<f64> {
    Constraints {
        remaining_budget: config.budget - state.cost_so_far,
        cpa_slack: config.target_cpa * state.value_so_far - state.cost_so_far,
    }
}

/// Which special cases fired while solving the two roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DecisionFlags {
    /// Max predicted spend cannot exhaust the remaining budget.
    pub budget_unbinding: bool,
    /// Predicted Ψ̂ stays below the slack across the whole range.
    pub cpa_slack_unbinding: bool,
    /// Ψ̂ failed the slope-sign probe; the first root was used.
    pub psi_nonmonotone: bool,
    /// Hard budget stop suppressed bidding this tick.
    pub budget_stopped: bool,
}

/// One controller step: both candidate multipliers and the executed min.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision<S> {
    pub alpha_budget: S,
    pub alpha_cpa: S,
    pub alpha: S,
    pub flags: DecisionFlags,
}

impl<S: Real> ControlDecision<S> {
    /// A decision that executes `alpha` with no controller diagnostics,
    /// for baseline policies that pick the multiplier directly.
    pub fn direct(alpha: S) -> Self {
        Self { alpha_budget: alpha, alpha_cpa: alpha, alpha, flags: DecisionFlags::default() }
    }
}

/// Solve `Î·C̄̂(α_B) = B_t` on the action range.
///
/// Returns `(α_high, true)` when even saturated spend cannot exhaust the
/// remaining budget; otherwise clamps into the range with the flag false.
pub fn solve_budget_alpha<S: Real, C: ResponseCurve<S>>(
    bundle: &ResponseBundle<S, C>,
    remaining_budget: S,
    range: &ActionRange<S>,
    rel_tol: S,
) -> (S, bool) {
    if remaining_budget > bundle.traffic * bundle.cost.level() {
        return (range.hi, true);
    }
    let sol = bisect_monotone(
        |alpha| bundle.total_cost(alpha),
        remaining_budget,
        range.lo,
        range.hi,
        rel_tol,
    )
    .expect("validated action range");
    (sol.alpha, false)
}

/// Flags produced by the CPA-side solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CpaOutcome {
    pub slack_unbinding: bool,
    pub nonmonotone: bool,
}

/// Solve `Ψ̂(α_C) = Δ_t` with `Ψ̂(α) = Î·(C̄̂(α) − τ·V̄̂(α))`.
///
/// When the slope-sign probe finds Ψ̂ monotone the root is bisected
/// directly. Otherwise the range is scanned from `α_low` and the first
/// upward crossing — the right endpoint of the feasible interval
/// containing `α_low` — is returned.
pub fn solve_cpa_alpha<S: Real, C: ResponseCurve<S>>(
    bundle: &ResponseBundle<S, C>,
    target_cpa: S,
    cpa_slack: S,
    range: &ActionRange<S>,
    rel_tol: S,
) -> (S, CpaOutcome) {
    let psi = |alpha: S| bundle.total_psi(alpha, target_cpa);
    if psi_is_monotone(bundle, target_cpa, range) {
        let sol = bisect_monotone(psi, cpa_slack, range.lo, range.hi, rel_tol)
            .expect("validated action range");
        let outcome = CpaOutcome { slack_unbinding: sol.clamp == Clamp::AtHigh, nonmonotone: false };
        return (sol.alpha, outcome);
    }

    let outcome = CpaOutcome { slack_unbinding: false, nonmonotone: true };
    if psi(range.lo) > cpa_slack {
        return (range.lo, outcome);
    }
    // First upward crossing of the slack level, scanned at probe resolution.
    let mut prev = range.lo;
    for x in psi_probe_points(range, PSI_SLOPE_GRID + 1).skip(1) {
        if psi(x) > cpa_slack {
            let alpha = shrink_bracket(psi, cpa_slack, prev, x, rel_tol * (range.hi - range.lo));
            return (alpha, outcome);
        }
        prev = x;
    }
    (range.hi, CpaOutcome { slack_unbinding: true, nonmonotone: true })
}

/// Probe points for Ψ̂ checks: log-spaced, matching the curve family's
/// natural scale, endpoints included.
fn psi_probe_points<S: Real>(range: &ActionRange<S>, n: usize) -> impl Iterator<Item = S> + '_ {
    let ratio = range.hi / range.lo;
    (0..n).map(move |i| range.lo * ratio.powf(S::of(i as f64 / (n - 1) as f64)))
}

/// Slope-sign probe for Ψ̂ on a log-spaced grid over the range.
pub fn psi_is_monotone<S: Real, C: ResponseCurve<S>>(
    bundle: &ResponseBundle<S, C>,
    target_cpa: S,
    range: &ActionRange<S>,
) -> bool {
    let mut scale = S::zero();
    let mut min_slope = S::infinity();
    for alpha in psi_probe_points(range, PSI_SLOPE_GRID) {
        let s = bundle.total_psi_slope(alpha, target_cpa);
        scale = scale.max(s.abs());
        min_slope = min_slope.min(s);
    }
    min_slope >= -S::of(1e-10) * scale.max(S::one())
}

/// One full controller step: both roots, then the conservative minimum.
pub fn min_pacing_step<S: Real, C: ResponseCurve<S>>(
    bundle: &ResponseBundle<S, C>,
    constraints: &Constraints<S>,
    target_cpa: S,
    range: &ActionRange<S>,
    rel_tol: S,
) -> ControlDecision<S> {
    let (alpha_budget, budget_unbinding) =
        solve_budget_alpha(bundle, constraints.remaining_budget, range, rel_tol);
    let (alpha_cpa, cpa) = solve_cpa_alpha(bundle, target_cpa, constraints.cpa_slack, range, rel_tol);
    ControlDecision {
        alpha_budget,
        alpha_cpa,
        alpha: alpha_budget.min(alpha_cpa),
        flags: DecisionFlags {
            budget_unbinding,
            cpa_slack_unbinding: cpa.slack_unbinding,
            psi_nonmonotone: cpa.nonmonotone,
            budget_stopped: false,
        },
    }
}

/// Per-tick policy driving an episode.
pub trait TickController {
    fn decide(&mut self, ctx: &TickContext<'_>) -> Result<ControlDecision<f64>, ControlError>;
}

/// Read-only view handed to a controller at decision time.
#[derive(Debug, Clone, Copy)]
pub struct TickContext<'a> {
    pub t: usize,
    pub config: &'a CampaignConfig,
    pub state: &'a EpisodeState,
}

/// Receding-horizon min-pacing on a predictor's bundles.
#[derive(Debug, Clone)]
pub struct MinPacingController<P> {
    predictor: P,
    rel_tol: f64,
}

impl<P: Predictor> MinPacingController<P> {
    pub fn new(predictor: P) -> Self {
        Self { predictor, rel_tol: DEFAULT_REL_TOL }
    }

    pub fn with_rel_tol(predictor: P, rel_tol: f64) -> Self {
        Self { predictor, rel_tol }
    }

    /// Predict without stepping, for diagnostics.
    pub fn peek(&mut self, t: usize) -> Result<Bundle, PredictError> {
        self.predictor.predict(t)
    }
}

impl<P: Predictor> TickController for MinPacingController<P> {
    fn decide(&mut self, ctx: &TickContext<'_>) -> Result<ControlDecision<f64>, ControlError> {
        let constraints = remaining_constraints(ctx.state, ctx.config);
        let bundle = self.predictor.predict(ctx.t)?;
        Ok(min_pacing_step(
            &bundle,
            &constraints,
            ctx.config.target_cpa,
            &ctx.config.action_range,
            self.rel_tol,
        ))
    }
}

/// Trace row: the decision taken at one tick and its realized outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickTrace {
    pub t: usize,
    pub alpha: f64,
    #[serde(rename = "I")]
    pub opportunities: u64,
    pub cost: f64,
    pub value: f64,
    pub alpha_budget: f64,
    pub alpha_cpa: f64,
    pub remaining_budget: f64,
    pub cpa_slack: f64,
    pub flags: DecisionFlags,
}

/// Completed episode: full trace plus terminal totals and violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub trace: Vec<TickTrace>,
    pub total_cost: f64,
    pub total_value: f64,
    /// `Cost / Val`; `None` when no value was realized.
    pub realized_cpa: Option<f64>,
    /// `max(0, ΣCost − B)`.
    pub budget_violation: f64,
    /// `max(0, ΣCost − τ·ΣVal)`, the Ψ-form CPA excess in currency.
    pub cpa_violation: f64,
}

impl EpisodeResult {
    pub fn violated(&self, config: &CampaignConfig) -> bool {
        self.total_cost > config.budget
            || self.realized_cpa.map(|c| c > config.target_cpa).unwrap_or(self.total_cost > 0.0)
    }
}

/// Run Algorithm-style receding-horizon control over a full episode:
/// observe state, solve, execute, accumulate, repeat.
pub fn run_episode<R: Rng>(
    controller: &mut dyn TickController,
    gt: &Arc<GroundTruth>,
    config: &CampaignConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<EpisodeResult, ControlError> {
    config.validate()?;
    if gt.horizon() != config.horizon {
        return Err(ControlError::State(format!(
            "ground truth horizon {} != config horizon {}",
            gt.horizon(),
            config.horizon
        )));
    }
    let mut state = EpisodeState::fresh();
    let mut trace = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        let constraints = remaining_constraints(&state, config);
        let (decision, outcome) =
            if config.hard_budget_stop && state.cost_so_far >= config.budget {
                let mut decision = ControlDecision::direct(config.action_range.lo);
                decision.flags.budget_stopped = true;
                (decision, TickOutcome { cost: 0.0, value: 0.0, opportunities: 0 })
            } else {
                let ctx = TickContext { t, config, state: &state };
                let decision = controller.decide(&ctx)?;
                if !config.action_range.contains(decision.alpha) {
                    return Err(ControlError::State(format!(
                        "controller produced alpha {} outside the action range",
                        decision.alpha
                    )));
                }
                let outcome = run_tick(gt, t, decision.alpha, &config.action_range, mode, rng)?;
                (decision, outcome)
            };
        if outcome.cost < 0.0 || outcome.value < 0.0 {
            return Err(ControlError::State("negative tick outcome".into()));
        }
        trace.push(TickTrace {
            t,
            alpha: decision.alpha,
            opportunities: outcome.opportunities,
            cost: outcome.cost,
            value: outcome.value,
            alpha_budget: decision.alpha_budget,
            alpha_cpa: decision.alpha_cpa,
            remaining_budget: constraints.remaining_budget,
            cpa_slack: constraints.cpa_slack,
            flags: decision.flags,
        });
        state.record(decision.alpha, &outcome);
    }
    let total_cost = state.cost_so_far;
    let total_value = state.value_so_far;
    Ok(EpisodeResult {
        trace,
        total_cost,
        total_value,
        realized_cpa: (total_value > 0.0).then(|| total_cost / total_value),
        budget_violation: (total_cost - config.budget).max(0.0),
        cpa_violation: (total_cost - config.target_cpa * total_value).max(0.0),
    })
}
