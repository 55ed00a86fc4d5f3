//! Synthetic tick-level auction market with closed-form ground truth.
//!
//! Each opportunity is a second-price auction against a single competitor
//! whose top bid is uniform on `[0, M_k]`. With our bid `α·v_k` the
//! per-opportunity expected curves have closed forms
//!
//! ```text
//! C_k(α) = (α v_k)² / (2 M_k)          for α v_k ≤ M_k, else M_k / 2
//! V_k(α) = p_k · min(α v_k / M_k, 1)
//! ```
//!
//! so curve predictions, controller roots, and the theorem checks can all
//! be validated against exact values. Fluid execution returns the expected
//! outcome per tick; stochastic execution samples every auction.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::ResponseCurve;

/// Per-tick traffic used by the built-in campaign profiles.
pub const PROFILE_BASE_TRAFFIC: u64 = 1_000;
const PROFILE_VALUE_SCALE: f64 = 1.0;
const PROFILE_CONV_RATE: f64 = 0.3;
const PROFILE_COMPETITOR_CAP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("invalid campaign config: {0}")]
    InvalidConfig(String),
    #[error("tick {t} out of range 1..={horizon}")]
    TickOutOfRange { t: usize, horizon: usize },
    #[error("alpha {alpha} outside action range [{lo}, {hi}]")]
    AlphaOutOfRange { alpha: f64, lo: f64, hi: f64 },
    #[error("ground truth arrays must share length >= 1 and stay positive")]
    MalformedGroundTruth,
}

/// Bounded operating range for the pacing multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionRange<S = f64> {
    pub lo: S,
    pub hi: S,
}

impl ActionRange {
    /// Default range for production-scale multipliers.
    pub const DEFAULT: ActionRange = ActionRange { lo: 0.01, hi: 300.0 };
}

impl<S: crate::num::Real> ActionRange<S> {
    pub fn new(lo: S, hi: S) -> Result<Self, MarketError> {
        if !(S::zero() < lo && lo < hi) {
            return Err(MarketError::InvalidConfig(format!(
                "action range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, alpha: S) -> bool {
        self.lo <= alpha && alpha <= self.hi
    }

    pub fn clamp(&self, alpha: S) -> S {
        alpha.max(self.lo).min(self.hi)
    }

    pub fn width(&self) -> S {
        self.hi - self.lo
    }
}

/// Budget, CPA target, horizon, and operating range for one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub budget: f64,
    pub target_cpa: f64,
    pub horizon: usize,
    pub action_range: ActionRange,
    pub seed: u64,
    /// Stop entering auctions once realized cost reaches the budget.
    #[serde(default)]
    pub hard_budget_stop: bool,
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        if self.budget <= 0.0 {
            return Err(MarketError::InvalidConfig(format!("budget must be > 0, got {}", self.budget)));
        }
        if self.target_cpa <= 0.0 {
            return Err(MarketError::InvalidConfig(format!(
                "target_cpa must be > 0, got {}",
                self.target_cpa
            )));
        }
        if self.horizon < 1 {
            return Err(MarketError::InvalidConfig("horizon must be >= 1".into()));
        }
        ActionRange::new(self.action_range.lo, self.action_range.hi)?;
        Ok(())
    }
}

/// Traffic profile used when generating a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Uniform,
    Diurnal,
    Heterogeneous,
}

/// Per-tick market primitives: traffic, value scale, conversion rate,
/// competitor cap. Arrays share the horizon length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub traffic: Vec<u64>,
    pub value_scale: Vec<f64>,
    pub conv_rate: Vec<f64>,
    pub competitor_cap: Vec<f64>,
    /// Lower end of the competitor bid support; empty means zero floors.
    #[serde(default)]
    pub bid_floor: Vec<f64>,
}

impl GroundTruth {
    pub fn horizon(&self) -> usize {
        self.traffic.len()
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let t = self.traffic.len();
        if t == 0
            || self.value_scale.len() != t
            || self.conv_rate.len() != t
            || self.competitor_cap.len() != t
            || !(self.bid_floor.is_empty() || self.bid_floor.len() == t)
        {
            return Err(MarketError::MalformedGroundTruth);
        }
        let floors_ok = (0..t).all(|k| {
            let floor = self.floor_at(k + 1);
            0.0 <= floor && floor < self.competitor_cap[k]
        });
        let ok = floors_ok
            && self.traffic.iter().all(|&i| i >= 1)
            && self.value_scale.iter().all(|&v| v > 0.0)
            && self.competitor_cap.iter().all(|&m| m > 0.0)
            && self.conv_rate.iter().all(|&p| 0.0 < p && p <= 1.0);
        if ok {
            Ok(())
        } else {
            Err(MarketError::MalformedGroundTruth)
        }
    }

    /// Competitor bid floor at tick `k` (1-based); zero when unset.
    pub fn floor_at(&self, k: usize) -> f64 {
        self.bid_floor.get(k - 1).copied().unwrap_or(0.0)
    }

    /// Homogeneous market: every tick identical.
    pub fn uniform(horizon: usize, traffic: u64, value_scale: f64, conv_rate: f64, cap: f64) -> Self {
        Self {
            traffic: vec![traffic; horizon],
            value_scale: vec![value_scale; horizon],
            conv_rate: vec![conv_rate; horizon],
            competitor_cap: vec![cap; horizon],
            bid_floor: Vec::new(),
        }
    }

    /// Remaining opportunity count `Σ_{k≥t} I_k`.
    pub fn remaining_traffic(&self, t: usize) -> f64 {
        self.traffic[t - 1..].iter().map(|&i| i as f64).sum()
    }

    /// Scale the currency units of competition: caps and any floors.
    pub fn scale_competitor_caps(&mut self, factor: f64) {
        for m in &mut self.competitor_cap {
            *m *= factor;
        }
        for f in &mut self.bid_floor {
            *f *= factor;
        }
    }

    /// Stiffen competition by `scale`: every competitor bid translates
    /// upward so the support becomes `[(scale−1)·M, scale·M]`. Wins get
    /// costlier and rarer; repeated application compounds on the cap.
    pub fn stiffen_competition(&mut self, scale: f64) {
        debug_assert!(scale >= 1.0);
        if scale == 1.0 {
            return;
        }
        let horizon = self.horizon();
        if self.bid_floor.is_empty() {
            self.bid_floor = vec![0.0; horizon];
        }
        for k in 0..horizon {
            let width = self.competitor_cap[k] - self.bid_floor[k];
            let shift = (scale - 1.0) * self.competitor_cap[k];
            self.bid_floor[k] += shift;
            self.competitor_cap[k] = self.bid_floor[k] + width;
        }
    }

    /// Largest pre-saturation multiplier: below this, every tick's cost
    /// curve is strictly increasing (no tick has saturated).
    pub fn saturation_alpha(&self) -> f64 {
        self.competitor_cap
            .iter()
            .zip(&self.value_scale)
            .map(|(&m, &v)| m / v)
            .fold(f64::INFINITY, f64::min)
    }
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer; decorrelates derived rng streams.
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a decorrelated child seed for replication or restart streams.
pub fn child_seed(seed: u64, stream: u64) -> u64 {
    mix_seed(seed, stream.wrapping_add(1))
}

/// Generate a campaign's ground truth, deterministic in `(seed, profile)`.
pub fn generate_campaign(config: &CampaignConfig, profile: Profile) -> Result<GroundTruth, MarketError> {
    config.validate()?;
    let t = config.horizon;
    let base = PROFILE_BASE_TRAFFIC;
    let gt = match profile {
        Profile::Uniform => GroundTruth::uniform(
            t,
            base,
            PROFILE_VALUE_SCALE,
            PROFILE_CONV_RATE,
            PROFILE_COMPETITOR_CAP,
        ),
        Profile::Diurnal => {
            // Two-peak sinusoid, rounded, floored at one opportunity.
            let traffic = (0..t)
                .map(|k| {
                    let phase = 4.0 * std::f64::consts::PI * k as f64 / t as f64;
                    let scaled = base as f64 * (1.0 + 0.6 * phase.sin());
                    scaled.round().max(1.0) as u64
                })
                .collect();
            GroundTruth {
                traffic,
                value_scale: vec![PROFILE_VALUE_SCALE; t],
                conv_rate: vec![PROFILE_CONV_RATE; t],
                competitor_cap: vec![PROFILE_COMPETITOR_CAP; t],
                bid_floor: Vec::new(),
            }
        }
        Profile::Heterogeneous => {
            use rand::SeedableRng;
            let mut rng = rand::rngs::StdRng::seed_from_u64(mix_seed(config.seed, 0x48_45_54));
            let conv_rate = (0..t)
                .map(|_| (PROFILE_CONV_RATE * rng.gen_range(0.5..1.5)).clamp(0.02, 1.0))
                .collect();
            let competitor_cap = (0..t)
                .map(|_| PROFILE_COMPETITOR_CAP * rng.gen_range(0.6..1.4))
                .collect();
            GroundTruth {
                traffic: vec![base; t],
                value_scale: vec![PROFILE_VALUE_SCALE; t],
                conv_rate,
                competitor_cap,
                bid_floor: Vec::new(),
            }
        }
    };
    debug_assert!(gt.validate().is_ok());
    Ok(gt)
}

/// Closed-form per-opportunity response at one tick. The competitor's
/// top bid is uniform on `[floor, cap]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickResponse {
    pub value_scale: f64,
    pub conv_rate: f64,
    pub cap: f64,
    pub floor: f64,
}

impl TickResponse {
    fn width(&self) -> f64 {
        self.cap - self.floor
    }

    /// Probability of winning an opportunity at multiplier `alpha`.
    pub fn win_rate(&self, alpha: f64) -> f64 {
        ((alpha * self.value_scale - self.floor) / self.width()).clamp(0.0, 1.0)
    }

    /// Expected cost per opportunity at multiplier `alpha`.
    pub fn cost(&self, alpha: f64) -> f64 {
        let bid = alpha * self.value_scale;
        if bid <= self.floor {
            0.0
        } else if bid >= self.cap {
            0.5 * (self.floor + self.cap)
        } else {
            (bid * bid - self.floor * self.floor) / (2.0 * self.width())
        }
    }

    /// Expected value per opportunity at multiplier `alpha`.
    pub fn value(&self, alpha: f64) -> f64 {
        self.conv_rate * self.win_rate(alpha)
    }

    pub fn cost_slope(&self, alpha: f64) -> f64 {
        let bid = alpha * self.value_scale;
        if self.floor < bid && bid < self.cap {
            self.value_scale * bid / self.width()
        } else {
            0.0
        }
    }

    pub fn value_slope(&self, alpha: f64) -> f64 {
        let bid = alpha * self.value_scale;
        if self.floor < bid && bid < self.cap {
            self.conv_rate * self.value_scale / self.width()
        } else {
            0.0
        }
    }

    /// Per-opportunity `Ψ(α) = C(α) − τ·V(α)`.
    pub fn psi(&self, alpha: f64, target_cpa: f64) -> f64 {
        self.cost(alpha) - target_cpa * self.value(alpha)
    }
}

/// Per-opportunity expected curves `(C_k, V_k)` at tick `k` (1-based).
pub fn true_tick_curves(gt: &GroundTruth, k: usize) -> Result<TickResponse, MarketError> {
    if k < 1 || k > gt.horizon() {
        return Err(MarketError::TickOutOfRange { t: k, horizon: gt.horizon() });
    }
    Ok(TickResponse {
        value_scale: gt.value_scale[k - 1],
        conv_rate: gt.conv_rate[k - 1],
        cap: gt.competitor_cap[k - 1],
        floor: gt.floor_at(k),
    })
}

/// Cost or value side of an aggregate curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSide {
    Cost,
    Value,
}

/// Traffic-weighted average of the true per-tick curves from tick `from`
/// to the horizon end. Implements [`ResponseCurve`] so the exact oracle
/// can hand it straight to the controller.
#[derive(Debug, Clone)]
pub struct AggregateCurve {
    gt: Arc<GroundTruth>,
    from: usize,
    side: CurveSide,
    total_traffic: f64,
}

impl AggregateCurve {
    pub fn new(gt: Arc<GroundTruth>, from: usize, side: CurveSide) -> Result<Self, MarketError> {
        if from < 1 || from > gt.horizon() {
            return Err(MarketError::TickOutOfRange { t: from, horizon: gt.horizon() });
        }
        let total_traffic = gt.remaining_traffic(from);
        Ok(Self { gt, from, side, total_traffic })
    }

    fn weighted<F: Fn(&TickResponse) -> f64>(&self, f: F) -> f64 {
        let mut acc = 0.0;
        for k in self.from..=self.gt.horizon() {
            let tick = TickResponse {
                value_scale: self.gt.value_scale[k - 1],
                conv_rate: self.gt.conv_rate[k - 1],
                cap: self.gt.competitor_cap[k - 1],
                floor: self.gt.floor_at(k),
            };
            acc += self.gt.traffic[k - 1] as f64 * f(&tick);
        }
        acc / self.total_traffic
    }
}

impl ResponseCurve<f64> for AggregateCurve {
    fn eval(&self, alpha: f64) -> f64 {
        match self.side {
            CurveSide::Cost => self.weighted(|t| t.cost(alpha)),
            CurveSide::Value => self.weighted(|t| t.value(alpha)),
        }
    }

    fn slope(&self, alpha: f64) -> f64 {
        match self.side {
            CurveSide::Cost => self.weighted(|t| t.cost_slope(alpha)),
            CurveSide::Value => self.weighted(|t| t.value_slope(alpha)),
        }
    }

    fn level(&self) -> f64 {
        match self.side {
            CurveSide::Cost => self.weighted(|t| 0.5 * (t.floor + t.cap)),
            CurveSide::Value => self.weighted(|t| t.conv_rate),
        }
    }
}

/// Remaining traffic plus both horizon-aggregate curves from tick `t`.
pub fn aggregate_response(
    gt: &Arc<GroundTruth>,
    t: usize,
) -> Result<(f64, AggregateCurve, AggregateCurve), MarketError> {
    let cost = AggregateCurve::new(Arc::clone(gt), t, CurveSide::Cost)?;
    let value = AggregateCurve::new(Arc::clone(gt), t, CurveSide::Value)?;
    Ok((gt.remaining_traffic(t), cost, value))
}

/// Deterministic expectation vs sampled auctions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fluid,
    Stochastic,
}

/// Realized outcome of one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickOutcome {
    pub cost: f64,
    pub value: f64,
    pub opportunities: u64,
}

/// Running episode state: cumulatives before the current tick plus the
/// executed multiplier history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    /// Next tick to execute, 1-based.
    pub tick: usize,
    pub cost_so_far: f64,
    pub value_so_far: f64,
    pub alpha_history: Vec<f64>,
    #[serde(default)]
    pub last_tick_cost: f64,
}

impl EpisodeState {
    pub fn fresh() -> Self {
        Self {
            tick: 1,
            cost_so_far: 0.0,
            value_so_far: 0.0,
            alpha_history: Vec::new(),
            last_tick_cost: 0.0,
        }
    }

    pub fn record(&mut self, alpha: f64, outcome: &TickOutcome) {
        debug_assert!(outcome.cost >= 0.0 && outcome.value >= 0.0);
        self.cost_so_far += outcome.cost;
        self.value_so_far += outcome.value;
        self.last_tick_cost = outcome.cost;
        self.alpha_history.push(alpha);
        self.tick += 1;
    }

    /// Contextual feature vector exposed for sequence models:
    /// `(t/T, B_t/B, Δ_t, last tick's spend rate vs B/T)`.
    pub fn features(&self, config: &CampaignConfig) -> [f64; 4] {
        let horizon = config.horizon as f64;
        let remaining = config.budget - self.cost_so_far;
        let slack = config.target_cpa * self.value_so_far - self.cost_so_far;
        let per_tick_budget = config.budget / horizon;
        [
            self.tick as f64 / horizon,
            remaining / config.budget,
            slack,
            self.last_tick_cost / per_tick_budget,
        ]
    }
}

/// Execute tick `t` of the market at multiplier `alpha`.
pub fn run_tick<R: Rng>(
    gt: &GroundTruth,
    t: usize,
    alpha: f64,
    range: &ActionRange,
    mode: Mode,
    rng: &mut R,
) -> Result<TickOutcome, MarketError> {
    if !range.contains(alpha) {
        return Err(MarketError::AlphaOutOfRange { alpha, lo: range.lo, hi: range.hi });
    }
    let tick = true_tick_curves(gt, t)?;
    let opportunities = gt.traffic[t - 1];
    let outcome = match mode {
        Mode::Fluid => TickOutcome {
            cost: opportunities as f64 * tick.cost(alpha),
            value: opportunities as f64 * tick.value(alpha),
            opportunities,
        },
        Mode::Stochastic => {
            let bid = alpha * tick.value_scale;
            let mut cost = 0.0;
            let mut value = 0.0;
            for _ in 0..opportunities {
                let competing = rng.gen_range(tick.floor..tick.cap);
                if bid > competing {
                    cost += competing;
                    if rng.gen::<f64>() < tick.conv_rate {
                        value += 1.0;
                    }
                }
            }
            TickOutcome { cost, value, opportunities }
        }
    };
    Ok(outcome)
}
