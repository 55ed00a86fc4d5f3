//! Property and statistical invariants across the library.

mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use bidpace::control::{
    min_pacing_step, remaining_constraints, run_episode, Constraints, MinPacingController,
    TickContext, TickController,
};
use bidpace::curves::{CurveParams, ResponseCurve};
use bidpace::fit::{fit_loss, TickRecord};
use bidpace::market::{
    aggregate_response, generate_campaign, run_tick, ActionRange, CampaignConfig, GroundTruth,
    Mode, Profile,
};
use bidpace::predict::{ErrorSpec, OraclePredictor, Predictor, ResponseBundle, SignPattern};
use bidpace::solve::DEFAULT_REL_TOL;
use bidpace::verify::efficiency_dispersion;

fn params() -> impl Strategy<Value = CurveParams<f64>> {
    (-4.0..6.0f64, -4.0..4.0f64, -30.0..30.0f64)
        .prop_map(|(ra, rb, rc)| CurveParams::from_raw(ra, rb, rc))
}

proptest! {
    #[test]
    fn curve_zero_at_origin_exactly(p in params()) {
        prop_assert_eq!(p.eval(0.0), 0.0);
    }

    #[test]
    fn curve_non_decreasing_everywhere(p in params(), a1 in 0.0..1e6f64, step in 1e-6..1e6f64) {
        let a2 = a1 + step;
        prop_assert!(p.eval(a1) <= p.eval(a2), "eval({a1}) > eval({a2})");
    }

    #[test]
    fn curve_strictly_monotone_in_active_band(
        p in params(),
        q1 in -2.5..1.5f64,
        dq in 0.05..1.0f64,
    ) {
        // Multipliers placed by their z-coordinate, where adjacent curve
        // values are separated at f64 resolution.
        let alpha_at = |q: f64| (((q - p.c) / p.b).exp() - p.eps).max(0.0);
        let (a1, a2) = (alpha_at(q1), alpha_at(q1 + dq));
        prop_assume!(a1.is_finite() && a2.is_finite() && a1 < a2);
        prop_assert!(p.eval(a1) < p.eval(a2), "eval({a1}) >= eval({a2})");
    }

    #[test]
    fn curve_bounded_by_level(p in params(), alpha in 0.0..1e6f64) {
        let v = p.eval(alpha);
        prop_assert!((0.0..=p.a).contains(&v));
    }

    #[test]
    fn slope_matches_finite_difference(p in params(), q in -2.0..2.0f64) {
        let alpha = ((q - p.c) / p.b).exp() - p.eps;
        prop_assume!(alpha.is_finite() && alpha > 1e-6 && alpha < 1e9);
        let h = 1e-5 * alpha;
        let an = p.slope(alpha);
        // Only judge the difference quotient where it can resolve the
        // slope above f64 rounding of the curve values.
        prop_assume!(an * h > 1e3 * f64::EPSILON * p.a);
        let fd = (p.eval(alpha + h) - p.eval(alpha - h)) / (2.0 * h);
        prop_assert!(((an - fd) / fd).abs() < 1e-5, "an {an} fd {fd} at alpha {alpha}");
    }

    #[test]
    fn softplus_mapping_always_valid(ra in -500.0..500.0f64, rb in -500.0..500.0f64, rc in -500.0..500.0f64) {
        let p = CurveParams::from_raw(ra, rb, rc);
        prop_assert!(p.a > 0.0 && p.b > 0.0 && p.eps > 0.0);
    }

    #[test]
    fn budget_root_monotone_in_remaining_budget(
        cost in params(),
        value in params(),
        traffic in 1.0..1e4f64,
        b1 in 0.0..100.0f64,
        extra in 0.0..100.0f64,
    ) {
        let bundle = ResponseBundle { traffic, cost, value };
        let range = ActionRange { lo: 0.01, hi: 50.0 };
        let (a1, _) = bidpace::control::solve_budget_alpha(&bundle, b1, &range, 1e-9);
        let (a2, _) = bidpace::control::solve_budget_alpha(&bundle, b1 + extra, &range, 1e-9);
        prop_assert!(a2 >= a1 - 1e-9, "budget {b1}->{} lowered alpha {a1}->{a2}", b1 + extra);
    }

    #[test]
    fn min_pacing_plans_feasibly(
        cost in params(),
        value in params(),
        traffic in 1.0..1e4f64,
        budget_frac in 0.0..1.2f64,
        slack_frac in -0.3..0.6f64,
        target_cpa in 0.1..2.0f64,
    ) {
        let bundle = ResponseBundle { traffic, cost, value };
        let range = ActionRange { lo: 0.01, hi: 50.0 };
        let scale = traffic * cost.a;
        let constraints = Constraints {
            remaining_budget: budget_frac * scale,
            cpa_slack: slack_frac * scale,
        };
        let d = min_pacing_step(&bundle, &constraints, target_cpa, &range, DEFAULT_REL_TOL);
        prop_assert!(range.contains(d.alpha));
        // Planned totals respect each solved (non-clamped) constraint.
        if !d.flags.budget_unbinding && d.alpha_budget > range.lo {
            prop_assert!(bundle.total_cost(d.alpha) <= constraints.remaining_budget + 1e-6 * scale.max(1.0));
        }
        if !d.flags.cpa_slack_unbinding && !d.flags.psi_nonmonotone && d.alpha_cpa > range.lo {
            prop_assert!(bundle.total_psi(d.alpha, target_cpa) <= constraints.cpa_slack + 1e-6 * scale.max(1.0));
        }
    }

    #[test]
    fn fit_loss_is_nonnegative(
        cost in params(),
        value in params(),
        alpha in 0.01..10.0f64,
        observations in (1.0..1e4f64, 0.0..100.0f64, 0.0..100.0f64),
        forecast in 1.0..1e5f64,
    ) {
        let (traffic, observed_cost, observed_value) = observations;
        let rec = TickRecord::new(1, alpha, traffic, observed_cost, observed_value);
        let bundle = ResponseBundle { traffic: forecast, cost, value };
        let loss = fit_loss(&bundle, &[rec], 0.1, 500.0).unwrap();
        prop_assert!(loss >= 0.0);
    }

    #[test]
    fn score_penalty_within_unit_interval(value in 0.0..1e6f64, cost in 0.0..1e6f64, target in 0.01..100.0f64) {
        let s = bidpace::bench::score(value, cost, target, 2.0);
        prop_assert!((0.0..=1.0).contains(&s.penalty));
        prop_assert!(s.score <= s.total_value + 1e-9);
    }
}

#[test]
fn duplicated_traffic_weight_doubles_marginal_loss_contribution() {
    // Same residual, doubled tick traffic: the sample's loss share and
    // hence its gradient magnitude double.
    let cost = CurveParams::new(1.0, 1.0, 0.0).unwrap();
    let value = CurveParams::new(0.5, 1.0, 0.0).unwrap();
    let residual = 0.07;
    let make = |traffic: f64| {
        let alpha = 0.5;
        TickRecord::new(1, alpha, traffic, traffic * (cost.eval(alpha) - residual), traffic * value.eval(alpha))
    };
    let bundle = ResponseBundle { traffic: 10.0, cost, value };
    let light = fit_loss(&bundle, &[make(5.0)], 0.0, 10.0).unwrap();
    let heavy = fit_loss(&bundle, &[make(10.0)], 0.0, 10.0).unwrap();
    assert!((heavy - 2.0 * light).abs() < 1e-12, "heavy {heavy} light {light}");
    assert!(heavy > light);
}

#[test]
fn stochastic_mean_matches_fluid_within_two_percent() {
    let gt = GroundTruth::uniform(1, 10_000, 1.0, 0.4, 1.0);
    let range = ActionRange { lo: 0.01, hi: 2.0 };
    let alpha = 0.55;
    let mut rng = StdRng::seed_from_u64(0);
    let fluid = run_tick(&gt, 1, alpha, &range, Mode::Fluid, &mut rng).unwrap();
    let mut cost_sum = 0.0;
    let mut value_sum = 0.0;
    let seeds = 200;
    for seed in 0..seeds {
        let mut rng = StdRng::seed_from_u64(seed);
        let out = run_tick(&gt, 1, alpha, &range, Mode::Stochastic, &mut rng).unwrap();
        cost_sum += out.cost;
        value_sum += out.value;
    }
    let mean_cost = cost_sum / seeds as f64;
    let mean_value = value_sum / seeds as f64;
    assert!(
        ((mean_cost - fluid.cost) / fluid.cost).abs() < 0.02,
        "cost {mean_cost} vs {}",
        fluid.cost
    );
    assert!(
        ((mean_value - fluid.value) / fluid.value).abs() < 0.02,
        "value {mean_value} vs {}",
        fluid.value
    );
}

#[test]
fn true_curves_satisfy_monotonicity_and_bounds() {
    let config = CampaignConfig {
        budget: 100.0,
        target_cpa: 0.5,
        horizon: 8,
        action_range: ActionRange { lo: 0.01, hi: 2.0 },
        seed: 99,
        hard_budget_stop: false,
    };
    for profile in [Profile::Uniform, Profile::Diurnal, Profile::Heterogeneous] {
        let gt = generate_campaign(&config, profile).unwrap();
        for k in 1..=config.horizon {
            let tick = bidpace::market::true_tick_curves(&gt, k).unwrap();
            let sat = tick.cap / tick.value_scale;
            let mut prev_cost = -1.0;
            let mut prev_value = -1.0;
            for i in 0..=100 {
                // Sweep across saturation; strict cost increase applies
                // below it, boundedness everywhere.
                let alpha = 1.6 * sat * i as f64 / 100.0;
                let c = tick.cost(alpha);
                let v = tick.value(alpha);
                if alpha < sat {
                    assert!(c > prev_cost || i == 0);
                }
                assert!(c >= prev_cost && v >= prev_value);
                assert!(c <= tick.cap / 2.0 + 1e-12);
                assert!(v <= tick.conv_rate + 1e-12);
                prev_cost = c;
                prev_value = v;
            }
        }
    }
}

#[test]
fn dispersion_zero_iff_homogeneous() {
    let uniform = GroundTruth::uniform(5, 500, 1.0, 0.3, 1.0);
    assert_eq!(efficiency_dispersion(&uniform, 1, 0.4, 0.3 / 0.4), 0.0);
    let config = CampaignConfig {
        budget: 100.0,
        target_cpa: 0.5,
        horizon: 5,
        action_range: ActionRange { lo: 0.05, hi: 0.6 },
        seed: 5,
        hard_budget_stop: false,
    };
    let hetero = generate_campaign(&config, Profile::Heterogeneous).unwrap();
    // Any interior multiplier: the conversion-rate spread keeps per-tick
    // marginal efficiency dispersed around any single dual value.
    let alpha = 0.4;
    let (sc, sv) = {
        let gt = Arc::new(hetero.clone());
        let (_, c, v) = aggregate_response(&gt, 1).unwrap();
        (c.slope(alpha), v.slope(alpha))
    };
    assert!(efficiency_dispersion(&hetero, 1, alpha, sv / sc) > 0.0);
}

#[test]
fn replanning_stays_conservative_under_inflated_cost_error() {
    // One-sided (inflated) cost error: at every tick, the executed
    // multiplier never exceeds what the exact oracle would choose from
    // the same realized state, and the run never overshoots the budget.
    let config = CampaignConfig {
        budget: 40.0,
        target_cpa: 10.0, // budget-binding
        horizon: 6,
        action_range: ActionRange { lo: 0.05, hi: 0.9 },
        seed: 13,
        hard_budget_stop: false,
    };
    let gt = Arc::new(generate_campaign(&config, Profile::Uniform).unwrap());
    let spec = ErrorSpec { eps_cost: 0.004, pattern: SignPattern::Inflate, ..ErrorSpec::ZERO };
    let mut rng = StdRng::seed_from_u64(1);
    let noisy = OraclePredictor::with_errors(Arc::clone(&gt), &spec, &mut rng).unwrap();
    let mut noisy_controller = MinPacingController::new(noisy);
    let mut episode_rng = StdRng::seed_from_u64(2);
    let result =
        run_episode(&mut noisy_controller, &gt, &config, Mode::Fluid, &mut episode_rng).unwrap();

    // Replay the trace, asking the exact oracle at each realized state.
    let mut exact = OraclePredictor::exact(Arc::clone(&gt));
    let mut state = bidpace::market::EpisodeState::fresh();
    for row in &result.trace {
        let constraints = remaining_constraints(&state, &config);
        let bundle = exact.predict(row.t).unwrap();
        let exact_decision = min_pacing_step(
            &bundle,
            &constraints,
            config.target_cpa,
            &config.action_range,
            DEFAULT_REL_TOL,
        );
        assert!(
            row.alpha <= exact_decision.alpha + 1e-6,
            "tick {}: inflated-error alpha {} above exact {}",
            row.t,
            row.alpha,
            exact_decision.alpha
        );
        state.record(
            row.alpha,
            &bidpace::market::TickOutcome {
                cost: row.cost,
                value: row.value,
                opportunities: row.opportunities,
            },
        );
    }
    assert!(result.total_cost <= config.budget + 1e-9);
}

#[test]
fn min_pacing_decision_is_pure_in_its_inputs() {
    // The controller step depends only on (bundle, constraints, config):
    // deciding twice from identical context gives identical output.
    let config = CampaignConfig {
        budget: 50.0,
        target_cpa: 0.5,
        horizon: 4,
        action_range: ActionRange { lo: 0.05, hi: 0.9 },
        seed: 3,
        hard_budget_stop: false,
    };
    let gt = Arc::new(generate_campaign(&config, Profile::Heterogeneous).unwrap());
    let state = bidpace::market::EpisodeState::fresh();
    let ctx = TickContext { t: 1, config: &config, state: &state };
    let mut c1 = MinPacingController::new(OraclePredictor::exact(Arc::clone(&gt)));
    let mut c2 = MinPacingController::new(OraclePredictor::exact(Arc::clone(&gt)));
    assert_eq!(c1.decide(&ctx).unwrap(), c2.decide(&ctx).unwrap());
}

#[test]
fn oracle_frozen_constants_regenerate() {
    // The library's frozen reference values must match this independent
    // quadrature/continued-fraction oracle.
    let cases = [
        (1.0, 0.841_344_746_068_543),
        (-1.0, 0.158_655_253_931_457_02),
        (2.5, 0.993_790_334_674_224),
        (-3.0, 1.349_898_031_630_094_6e-3),
        (-6.907_755_278_982_137, 2.461_912_018_815_506e-12),
        (5.0, 0.999_999_713_348_428_1),
        (-8.3, 5.205_569_744_890_247e-17),
    ];
    for (x, frozen) in cases {
        let oracle = common::normal_cdf_oracle(x);
        assert!(
            ((oracle - frozen) / frozen).abs() < 1e-12,
            "frozen constant for Phi({x}) drifted: oracle {oracle:e} vs {frozen:e}"
        );
    }
    let ns = common::normalized_sigmoid_oracle(1.0, 0.0, 1.0, 1e-3);
    assert!((ns - 0.500_398_742_874_521_6).abs() < 1e-12);
    // Root of 2·Φ̃ = 1, frozen in the solver tests.
    let root = common::invert_monotone(
        |a| 2.0 * common::normalized_sigmoid_oracle(1.0, 0.0, a, 1e-3),
        1.0,
        0.5,
        2.0,
    );
    assert!((root - 0.999_000_000_003_085_6).abs() < 1e-9);
}

#[test]
fn library_cdf_agrees_with_quadrature_oracle_on_random_points() {
    let mut rng = StdRng::seed_from_u64(77);
    for _ in 0..500 {
        let x = rng.gen_range(-12.0..8.0);
        let lib = bidpace::special::normal_cdf(x);
        let oracle = common::normal_cdf_oracle(x);
        let denom = oracle.abs().max(1e-300);
        assert!(
            ((lib - oracle) / denom).abs() < 1e-11,
            "Phi({x}): lib {lib:e} oracle {oracle:e}"
        );
    }
}
