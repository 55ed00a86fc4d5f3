//! Directional curve-family comparison on the synthetic market.
//!
//! The log-axis family approximates the true saturating aggregates far
//! better than a line, and in closed loop the linear family's missing
//! saturation shows up as budget overspend on bend-stressed instances
//! while the log-sigmoid stays feasible.

use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;

use bidpace::bench::score;
use bidpace::control::{run_episode, MinPacingController};
use bidpace::curves::FamilyKind;
use bidpace::fit::fit_family_to_curve;
use bidpace::market::{
    aggregate_response, child_seed, generate_campaign, ActionRange, CampaignConfig, GroundTruth,
    Mode, Profile,
};
use bidpace::predict::{Bundle, PredictError, PredictedCurve, Predictor, ResponseBundle};

#[test]
fn log_sigmoid_projects_the_aggregate_far_better_than_linear() {
    for seed in 0..5u64 {
        let config = CampaignConfig {
            budget: 100.0,
            target_cpa: 0.5,
            horizon: 6,
            action_range: ActionRange { lo: 0.05, hi: 0.55 },
            seed,
            hard_budget_stop: false,
        };
        let gt = Arc::new(generate_campaign(&config, Profile::Heterogeneous).unwrap());
        let (_, cost, _) = aggregate_response(&gt, 1).unwrap();
        let sup = |family: FamilyKind| {
            let mut rng = StdRng::seed_from_u64(child_seed(seed, 1));
            fit_family_to_curve(&cost, family, 0.05, 0.55, 96, 4, &mut rng).1
        };
        let log_sigmoid = sup(FamilyKind::LogSigmoid);
        let linear = sup(FamilyKind::Linear);
        assert!(
            3.0 * log_sigmoid < linear,
            "seed {seed}: log-sigmoid {log_sigmoid:.3e} vs linear {linear:.3e}"
        );
    }
}

/// Predictor that projects the true aggregate into one family per anchor.
struct ProjectedPredictor {
    gt: Arc<GroundTruth>,
    family: FamilyKind,
    lo: f64,
    hi: f64,
}

impl Predictor for ProjectedPredictor {
    fn predict(&mut self, t: usize) -> Result<Bundle, PredictError> {
        let (traffic, cost, value) = aggregate_response(&self.gt, t)?;
        let mut rng = StdRng::seed_from_u64(child_seed(9, t as u64));
        let (cost_model, _) = fit_family_to_curve(&cost, self.family, self.lo, self.hi, 48, 2, &mut rng);
        let (value_model, _) =
            fit_family_to_curve(&value, self.family, self.lo, self.hi, 48, 2, &mut rng);
        ResponseBundle::new(
            traffic,
            PredictedCurve::Model(cost_model),
            PredictedCurve::Model(value_model),
        )
    }
}

#[test]
fn linear_family_overspends_where_log_sigmoid_stays_feasible() {
    // Budget binding inside the saturation bend: a chord through bend
    // data understates cost there, so the linear controller overbids.
    let config = CampaignConfig {
        budget: 3600.0,
        target_cpa: 5.0,
        horizon: 12,
        action_range: ActionRange { lo: 0.05, hi: 1.6 },
        seed: 3,
        hard_budget_stop: false,
    };
    let gt = Arc::new(generate_campaign(&config, Profile::Heterogeneous).unwrap());
    let run = |family: FamilyKind| {
        let predictor = ProjectedPredictor {
            gt: Arc::clone(&gt),
            family,
            lo: config.action_range.lo,
            hi: config.action_range.hi,
        };
        let mut controller = MinPacingController::new(predictor);
        let mut rng = StdRng::seed_from_u64(0);
        let episode = run_episode(&mut controller, &gt, &config, Mode::Fluid, &mut rng).unwrap();
        let scored = score(episode.total_value, episode.total_cost, config.target_cpa, 2.0);
        (episode.budget_violation, scored.score)
    };
    let (log_violation, log_score) = run(FamilyKind::LogSigmoid);
    let (linear_violation, _) = run(FamilyKind::Linear);
    let (sigmoid_violation, _) = run(FamilyKind::Sigmoid);
    let (piecewise_violation, _) = run(FamilyKind::PiecewiseLinear);
    assert!(log_violation <= 1e-6, "log-sigmoid overspent by {log_violation}");
    assert!(
        linear_violation > 10.0 * (log_violation + 1.0),
        "linear violation {linear_violation} vs log-sigmoid {log_violation}"
    );
    assert!(log_score > 0.0);
    // The saturating families all stay feasible on this instance.
    assert!(sigmoid_violation <= 1e-6 && piecewise_violation <= 1e-6);
}
