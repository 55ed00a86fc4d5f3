//! Config-driven benchmark harness: scoring, baseline controllers,
//! replication runs, and distribution-shift scenarios.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    run_episode, ControlDecision, ControlError, EpisodeResult, MinPacingController, TickContext,
    TickController,
};
use crate::curves::FamilyKind;
use crate::fit::{FitError, FitOptions, FittedPredictor, TickRecord};
use crate::market::{
    child_seed, generate_campaign, run_tick, CampaignConfig, GroundTruth, MarketError, Mode,
    Profile,
};
use crate::predict::{ErrorSpec, OraclePredictor, PredictError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
}

/// Score of one episode under the CPA-penalized value metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub total_value: f64,
    /// `None` when the episode realized no value.
    pub realized_cpa: Option<f64>,
    pub penalty: f64,
    pub score: f64,
}

/// `score = p · Σ Val` with `p = min{(target/cpa)^β, 1}`.
///
/// Degenerate episodes: zero value with positive spend scores a full
/// penalty (`p = 0`); zero value with zero spend is penalty-free.
pub fn score(total_value: f64, total_cost: f64, target_cpa: f64, beta: f64) -> ScoreResult {
    debug_assert!(total_value >= 0.0 && total_cost >= 0.0 && target_cpa > 0.0);
    let realized_cpa = (total_value > 0.0).then(|| total_cost / total_value);
    let penalty = match realized_cpa {
        Some(cpa) if cpa <= target_cpa => 1.0,
        Some(cpa) => (target_cpa / cpa).powf(beta),
        None if total_cost > 0.0 => 0.0,
        None => 1.0,
    };
    ScoreResult { total_value, realized_cpa, penalty, score: penalty * total_value }
}

/// Default CPA-penalty exponent.
pub const SCORE_BETA: f64 = 2.0;

/// Always bids one constant multiplier.
#[derive(Debug, Clone, Copy)]
pub struct FixedAlphaController {
    pub alpha: f64,
}

impl TickController for FixedAlphaController {
    fn decide(&mut self, _ctx: &TickContext<'_>) -> Result<ControlDecision<f64>, ControlError> {
        Ok(ControlDecision::direct(self.alpha))
    }
}

/// Multiplicative feedback pacer tracking the uniform spend schedule
/// `B·t/T`: overspending lowers the next multiplier, underspending raises
/// it, clamped to the action range.
#[derive(Debug, Clone, Copy)]
pub struct FeedbackPacingController {
    pub gain: f64,
    alpha: f64,
}

impl FeedbackPacingController {
    pub fn new(initial_alpha: f64, gain: f64) -> Self {
        Self { gain, alpha: initial_alpha }
    }
}

impl TickController for FeedbackPacingController {
    fn decide(&mut self, ctx: &TickContext<'_>) -> Result<ControlDecision<f64>, ControlError> {
        if ctx.t > 1 {
            let schedule =
                ctx.config.budget * (ctx.t - 1) as f64 / ctx.config.horizon as f64;
            let err = (ctx.state.cost_so_far - schedule) / ctx.config.budget;
            self.alpha = ctx.config.action_range.clamp(self.alpha * (-self.gain * err).exp());
        }
        Ok(ControlDecision::direct(self.alpha))
    }
}

/// Which forecast feeds the min-pacing controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSpec {
    Oracle,
    NoisyOracle {
        #[serde(flatten)]
        errors: ErrorSpec,
    },
    Fitted {
        #[serde(default = "default_future_samples")]
        future_samples: usize,
        #[serde(default = "default_traffic_weight")]
        traffic_weight: f64,
        #[serde(default = "default_restarts")]
        restarts: usize,
        #[serde(default = "default_family")]
        family: FamilyKind,
    },
}

fn default_future_samples() -> usize {
    crate::fit::DEFAULT_FUTURE_SAMPLES
}
fn default_traffic_weight() -> f64 {
    crate::fit::DEFAULT_TRAFFIC_WEIGHT
}
fn default_restarts() -> usize {
    crate::fit::DEFAULT_RESTARTS
}
fn default_family() -> FamilyKind {
    FamilyKind::LogSigmoid
}

/// Which policy runs the episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    MinPacing,
    FixedAlpha { alpha: f64 },
    FeedbackPacing { gain: f64, initial_alpha: f64 },
}

/// One benchmark definition: campaign, market, policy, replication count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub campaign: CampaignConfig,
    pub profile: Profile,
    pub predictor: PredictorSpec,
    pub controller: ControllerSpec,
    pub mode: Mode,
    pub replications: usize,
    /// Competition stiffness: rival bids translate upward so their
    /// support becomes `[(s−1)·M, s·M]` (competition-surge knob).
    #[serde(default = "default_competition_scale")]
    pub competition_scale: f64,
}

fn default_competition_scale() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        self.campaign.validate()?;
        if self.replications == 0 {
            return Err(BenchError::InvalidConfig("replications must be >= 1".into()));
        }
        if self.competition_scale < 1.0 {
            return Err(BenchError::InvalidConfig(
                "competition_scale must be at least 1".into(),
            ));
        }
        let range = &self.campaign.action_range;
        match self.controller {
            ControllerSpec::FixedAlpha { alpha } if !range.contains(alpha) => {
                return Err(BenchError::InvalidConfig(format!(
                    "fixed alpha {alpha} outside the action range"
                )));
            }
            ControllerSpec::FeedbackPacing { initial_alpha, gain } => {
                if !range.contains(initial_alpha) {
                    return Err(BenchError::InvalidConfig(format!(
                        "initial alpha {initial_alpha} outside the action range"
                    )));
                }
                if gain < 0.0 {
                    return Err(BenchError::InvalidConfig("gain must be nonnegative".into()));
                }
            }
            _ => {}
        }
        if let PredictorSpec::NoisyOracle { errors } = self.predictor {
            errors.validate()?;
        }
        Ok(())
    }
}

/// Environment-shift scenarios applied to whole episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftScenario {
    /// Competitor clearing prices stiffen by 1.1×.
    CompetitionSurge,
    /// Target CPA tightens to 0.8×.
    CpaTighten,
}

/// Apply a shift scenario; repeated application composes multiplicatively.
pub fn shift_scenario(config: &ExperimentConfig, scenario: ShiftScenario) -> ExperimentConfig {
    let mut shifted = config.clone();
    match scenario {
        ShiftScenario::CompetitionSurge => shifted.competition_scale *= 1.1,
        ShiftScenario::CpaTighten => shifted.campaign.target_cpa *= 0.8,
    }
    shifted
}

/// Per-replication benchmark row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub replication: usize,
    pub seed: u64,
    pub total_value: f64,
    pub total_cost: f64,
    pub realized_cpa: Option<f64>,
    pub penalty: f64,
    pub score: f64,
    pub budget_violated: bool,
    pub cpa_violated: bool,
}

/// Benchmark outcome: per-seed rows plus aggregate statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<SeedRow>,
    pub mean_score: f64,
    pub std_score: f64,
    pub mean_value: f64,
    pub mean_cost: f64,
    /// Fraction of replications breaching either terminal constraint.
    pub violation_rate: f64,
}

impl BenchmarkReport {
    pub fn csv_header() -> Vec<&'static str> {
        vec![
            "replication",
            "seed",
            "total_value",
            "total_cost",
            "realized_cpa",
            "penalty",
            "score",
            "budget_violated",
            "cpa_violated",
        ]
    }

    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        use crate::io::fmt_sig;
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.replication.to_string(),
                    r.seed.to_string(),
                    fmt_sig(r.total_value),
                    fmt_sig(r.total_cost),
                    r.realized_cpa.map(fmt_sig).unwrap_or_default(),
                    fmt_sig(r.penalty),
                    fmt_sig(r.score),
                    (r.budget_violated as u8).to_string(),
                    (r.cpa_violated as u8).to_string(),
                ]
            })
            .collect()
    }
}

/// Deterministic logging pass used to train the fitted predictor: cycles
/// the multiplier over a log-spaced grid so every anchor sees several
/// distinct logged actions.
pub fn generate_log(
    gt: &Arc<GroundTruth>,
    config: &CampaignConfig,
    seed: u64,
) -> Result<Vec<TickRecord>, BenchError> {
    let range = &config.action_range;
    let levels = 8;
    let ratio = range.hi / range.lo;
    let mut rng = StdRng::seed_from_u64(child_seed(seed, 0x10_60));
    let mut records = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        let level = (t - 1) % levels;
        let alpha = range.lo * ratio.powf(level as f64 / (levels - 1) as f64);
        let outcome = run_tick(gt, t, alpha, range, Mode::Fluid, &mut rng)?;
        records.push(TickRecord::new(
            t as u32,
            alpha,
            outcome.opportunities as f64,
            outcome.cost,
            outcome.value,
        ));
    }
    Ok(records)
}

/// Instantiate the controller described by an experiment config.
pub fn build_controller(
    config: &ExperimentConfig,
    gt: &Arc<GroundTruth>,
    seed: u64,
) -> Result<Box<dyn TickController>, BenchError> {
    Ok(match config.controller {
        ControllerSpec::FixedAlpha { alpha } => Box::new(FixedAlphaController { alpha }),
        ControllerSpec::FeedbackPacing { gain, initial_alpha } => {
            Box::new(FeedbackPacingController::new(initial_alpha, gain))
        }
        ControllerSpec::MinPacing => match config.predictor {
            PredictorSpec::Oracle => {
                Box::new(MinPacingController::new(OraclePredictor::exact(Arc::clone(gt))))
            }
            PredictorSpec::NoisyOracle { errors } => {
                let mut rng = StdRng::seed_from_u64(child_seed(seed, 0x0E_44));
                Box::new(MinPacingController::new(OraclePredictor::with_errors(
                    Arc::clone(gt),
                    &errors,
                    &mut rng,
                )?))
            }
            PredictorSpec::Fitted { future_samples, traffic_weight, restarts, family } => {
                let campaign = CampaignConfig { seed, ..config.campaign.clone() };
                let records = generate_log(gt, &campaign, seed)?;
                let opts = FitOptions {
                    future_samples,
                    traffic_weight,
                    restarts,
                    family,
                    ..FitOptions::default()
                };
                Box::new(MinPacingController::new(FittedPredictor::new(records, opts, seed)?))
            }
        },
    })
}

/// Run one replication and return the episode plus its score.
pub fn run_replication(
    config: &ExperimentConfig,
    replication: usize,
) -> Result<(u64, EpisodeResult, ScoreResult), BenchError> {
    let seed = child_seed(config.campaign.seed, replication as u64);
    let campaign = CampaignConfig { seed, ..config.campaign.clone() };
    let mut gt = generate_campaign(&campaign, config.profile)?;
    gt.stiffen_competition(config.competition_scale);
    let gt = Arc::new(gt);
    let mut controller = build_controller(config, &gt, seed)?;
    let mut rng = StdRng::seed_from_u64(child_seed(seed, 0xE9));
    let episode = run_episode(controller.as_mut(), &gt, &campaign, config.mode, &mut rng)?;
    let scored = score(episode.total_value, episode.total_cost, campaign.target_cpa, SCORE_BETA);
    Ok((seed, episode, scored))
}

/// Run every replication of an experiment and aggregate.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<BenchmarkReport, BenchError> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.replications);
    for replication in 0..config.replications {
        let (seed, episode, scored) = run_replication(config, replication)?;
        rows.push(SeedRow {
            replication,
            seed,
            total_value: episode.total_value,
            total_cost: episode.total_cost,
            realized_cpa: scored.realized_cpa,
            penalty: scored.penalty,
            score: scored.score,
            budget_violated: episode.total_cost > config.campaign.budget,
            cpa_violated: scored
                .realized_cpa
                .map(|c| c > config.campaign.target_cpa)
                .unwrap_or(episode.total_cost > 0.0),
        });
    }
    let n = rows.len() as f64;
    let mean_score = rows.iter().map(|r| r.score).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r.score - mean_score).powi(2)).sum::<f64>() / n;
    let violations = rows.iter().filter(|r| r.budget_violated || r.cpa_violated).count();
    Ok(BenchmarkReport {
        mean_score,
        std_score: var.sqrt(),
        mean_value: rows.iter().map(|r| r.total_value).sum::<f64>() / n,
        mean_cost: rows.iter().map(|r| r.total_cost).sum::<f64>() / n,
        violation_rate: violations as f64 / n,
        rows,
    })
}

/// Baseline-vs-shifted comparison for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub scenario: ShiftScenario,
    pub baseline: BenchmarkReport,
    pub shifted: BenchmarkReport,
    /// Percentage score drop from baseline to shifted.
    pub degradation_pct: f64,
}

/// Run an experiment unshifted and under a scenario, reporting degradation.
pub fn run_shift(config: &ExperimentConfig, scenario: ShiftScenario) -> Result<ShiftReport, BenchError> {
    let baseline = run_benchmark(config)?;
    let shifted_config = shift_scenario(config, scenario);
    let shifted = run_benchmark(&shifted_config)?;
    let degradation_pct = if baseline.mean_score > 0.0 {
        100.0 * (baseline.mean_score - shifted.mean_score) / baseline.mean_score
    } else {
        0.0
    };
    Ok(ShiftReport { scenario, baseline, shifted, degradation_pct })
}

/// Grid-search the best constant multiplier on the (unshifted) experiment.
pub fn tune_fixed_alpha(config: &ExperimentConfig, grid_n: usize) -> Result<f64, BenchError> {
    let range = &config.campaign.action_range;
    let mut best = (range.lo, f64::NEG_INFINITY);
    for i in 0..grid_n {
        let alpha = range.lo + range.width() * i as f64 / (grid_n - 1) as f64;
        let candidate = ExperimentConfig {
            controller: ControllerSpec::FixedAlpha { alpha },
            ..config.clone()
        };
        let report = run_benchmark(&candidate)?;
        if report.mean_score > best.1 {
            best = (alpha, report.mean_score);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::ActionRange;

    fn cpa_binding_config() -> ExperimentConfig {
        ExperimentConfig {
            campaign: CampaignConfig {
                budget: 1e9,
                target_cpa: 0.4,
                horizon: 12,
                action_range: ActionRange { lo: 0.05, hi: 0.95 },
                seed: 11,
                hard_budget_stop: false,
            },
            profile: Profile::Heterogeneous,
            predictor: PredictorSpec::Oracle,
            controller: ControllerSpec::MinPacing,
            mode: Mode::Fluid,
            replications: 4,
            competition_scale: 1.0,
        }
    }

    #[test]
    fn score_analytic_cases() {
        // cpa = d, 2d, 1.25d
        let d = 8.0;
        assert!((score(10.0, 10.0 * d, d, 2.0).penalty - 1.0).abs() < 1e-12);
        assert!((score(10.0, 10.0 * 2.0 * d, d, 2.0).penalty - 0.25).abs() < 1e-12);
        assert!((score(10.0, 10.0 * 1.25 * d, d, 2.0).penalty - 0.64).abs() < 1e-12);
    }

    #[test]
    fn score_degenerate_cases() {
        let spent = score(0.0, 5.0, 1.0, 2.0);
        assert_eq!(spent.penalty, 0.0);
        assert_eq!(spent.score, 0.0);
        let idle = score(0.0, 0.0, 1.0, 2.0);
        assert_eq!(idle.penalty, 1.0);
    }

    #[test]
    fn score_bounds_hold() {
        for i in 0..100 {
            let v = i as f64 * 0.7;
            let c = (i % 13) as f64 * 1.1;
            let s = score(v, c, 2.0, 2.0);
            assert!((0.0..=1.0).contains(&s.penalty));
            assert!(s.score <= s.total_value + 1e-12);
        }
    }

    #[test]
    fn fixed_alpha_is_constant() {
        let mut config = cpa_binding_config();
        config.controller = ControllerSpec::FixedAlpha { alpha: 0.3 };
        let (_, episode, _) = run_replication(&config, 0).unwrap();
        assert!(episode.trace.iter().all(|r| r.alpha == 0.3));
    }

    #[test]
    fn feedback_zero_gain_is_constant() {
        let mut config = cpa_binding_config();
        config.controller = ControllerSpec::FeedbackPacing { gain: 0.0, initial_alpha: 0.4 };
        let (_, episode, _) = run_replication(&config, 0).unwrap();
        assert!(episode.trace.iter().all(|r| r.alpha == 0.4));
    }

    #[test]
    fn feedback_overspend_lowers_next_alpha() {
        // Tiny budget: the pacer overspends the schedule immediately.
        let mut config = cpa_binding_config();
        config.campaign.budget = 10.0;
        config.controller = ControllerSpec::FeedbackPacing { gain: 1.0, initial_alpha: 0.9 };
        let (_, episode, _) = run_replication(&config, 0).unwrap();
        assert!(episode.trace[1].alpha < episode.trace[0].alpha);
    }

    #[test]
    fn min_pacing_beats_aggressive_fixed_alpha_when_cpa_binds() {
        let config = cpa_binding_config();
        let min_pacing = run_benchmark(&config).unwrap();
        let fixed = run_benchmark(&ExperimentConfig {
            controller: ControllerSpec::FixedAlpha { alpha: 0.95 },
            ..config.clone()
        })
        .unwrap();
        assert!(
            min_pacing.mean_score > fixed.mean_score,
            "min-pacing {} vs fixed {}",
            min_pacing.mean_score,
            fixed.mean_score
        );
        assert!(min_pacing.violation_rate <= fixed.violation_rate);
    }

    #[test]
    fn replication_is_deterministic() {
        let config = cpa_binding_config();
        let a = run_benchmark(&config).unwrap();
        let b = run_benchmark(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.csv_rows(), b.csv_rows());
    }

    #[test]
    fn single_fluid_replication_has_zero_std() {
        let mut config = cpa_binding_config();
        config.replications = 1;
        let report = run_benchmark(&config).unwrap();
        assert_eq!(report.std_score, 0.0);
        assert_eq!(report.rows.len(), 1);
    }

    #[test]
    fn shifts_compose_multiplicatively() {
        let config = cpa_binding_config();
        let once = shift_scenario(&config, ShiftScenario::CpaTighten);
        let twice = shift_scenario(&once, ShiftScenario::CpaTighten);
        assert!((once.campaign.target_cpa - 0.4 * 0.8).abs() < 1e-15);
        assert!((twice.campaign.target_cpa - 0.4 * 0.8 * 0.8).abs() < 1e-15);
        let surge = shift_scenario(&config, ShiftScenario::CompetitionSurge);
        assert!((surge.competition_scale - 1.1).abs() < 1e-15);
        let surge2 = shift_scenario(&surge, ShiftScenario::CompetitionSurge);
        assert!((surge2.competition_scale - 1.21).abs() < 1e-12);
    }

    #[test]
    fn cpa_tighten_shifts_realized_cpa_down_or_value_down() {
        let config = cpa_binding_config();
        let report = run_shift(&config, ShiftScenario::CpaTighten).unwrap();
        for (base, shifted) in report.baseline.rows.iter().zip(&report.shifted.rows) {
            let base_cpa = base.realized_cpa.unwrap();
            let shifted_cpa = shifted.realized_cpa.unwrap();
            let cpa_down = shifted_cpa <= base_cpa + 1e-12;
            let value_down = shifted.total_value <= base.total_value + 1e-12;
            assert!(cpa_down || value_down, "neither cpa nor value moved down");
            assert!(!(shifted_cpa > base_cpa + 1e-9 && shifted.total_value > base.total_value + 1e-9));
        }
    }

    #[test]
    fn fitted_predictor_episode_completes() {
        let mut config = cpa_binding_config();
        config.campaign.horizon = 16;
        config.predictor = PredictorSpec::Fitted {
            future_samples: 12,
            traffic_weight: 0.1,
            restarts: 3,
            family: FamilyKind::LogSigmoid,
        };
        config.replications = 1;
        let report = run_benchmark(&config).unwrap();
        assert!(report.rows[0].total_value > 0.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut config = cpa_binding_config();
        config.controller = ControllerSpec::FixedAlpha { alpha: 5.0 };
        assert!(matches!(run_benchmark(&config), Err(BenchError::InvalidConfig(_))));
        let mut config = cpa_binding_config();
        config.replications = 0;
        assert!(matches!(run_benchmark(&config), Err(BenchError::InvalidConfig(_))));
    }
}
