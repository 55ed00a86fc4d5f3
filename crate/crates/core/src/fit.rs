//! Empirical curve fitting from logged tick records.
//!
//! Each logged tick provides `(t, α, I, Cost, Val)`. For an anchor tick the
//! fitter samples future ticks uniformly with replacement, forms
//! per-opportunity targets `Cost/I` and `Val/I`, and minimizes a
//! traffic-weighted squared loss plus a log-traffic penalty with damped
//! least squares on softplus-reparameterized curve parameters,
//! multi-started to dodge bad basins.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{CurveModel, FamilyKind, ResponseCurve};
use crate::market::child_seed;
use crate::num::softplus_inv;
use crate::predict::{Bundle, PredictError, PredictedCurve, Predictor, ResponseBundle};

/// Default number of sampled future ticks per anchor.
pub const DEFAULT_FUTURE_SAMPLES: usize = 8;
/// Default weight of the log-traffic loss term.
pub const DEFAULT_TRAFFIC_WEIGHT: f64 = 0.1;
/// Default number of multi-start restarts.
pub const DEFAULT_RESTARTS: usize = 5;
/// Default iteration cap per restart.
pub const DEFAULT_MAX_ITERS: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("{0}")]
    Domain(String),
    #[error("only {distinct} distinct logged multipliers among the sampled futures; need at least 3")]
    Identifiability { distinct: usize },
    #[error("no restart converged within {max_iters} iterations")]
    NonConvergence { max_iters: usize },
    #[error("curve family cannot match the target: sup error {achieved:.3e} exceeds tolerance {tol:.3e}")]
    FamilyMismatch { achieved: f64, tol: f64 },
}

impl From<FitError> for PredictError {
    fn from(e: FitError) -> Self {
        PredictError::Fit(e.to_string())
    }
}

/// One logged tick observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: u32,
    pub alpha: f64,
    #[serde(rename = "I")]
    pub traffic: f64,
    pub cost: f64,
    pub value: f64,
    /// Unknown JSONL fields, preserved on round trip.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl TickRecord {
    pub fn new(t: u32, alpha: f64, traffic: f64, cost: f64, value: f64) -> Self {
        Self { t, alpha, traffic, cost, value, extra: serde_json::Map::new() }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if self.traffic < 1.0 {
            return Err(FitError::Domain(format!(
                "tick {} has traffic {} < 1",
                self.t, self.traffic
            )));
        }
        if self.cost < 0.0 || self.value < 0.0 {
            return Err(FitError::Domain(format!("tick {} has a negative outcome", self.t)));
        }
        if self.alpha <= 0.0 {
            return Err(FitError::Domain(format!(
                "tick {} logged a non-positive multiplier",
                self.t
            )));
        }
        Ok(())
    }
}

/// Future-sampling loss for a candidate bundle against sampled records.
///
/// `(1/M)·Σ I_k [(C̄̂(α_k) − Cost_k/I_k)² + (V̄̂(α_k) − Val_k/I_k)²]
///  + λ_I (ln Î − ln I_true)²`
pub fn fit_loss<C: ResponseCurve<f64>>(
    bundle: &ResponseBundle<f64, C>,
    samples: &[TickRecord],
    traffic_weight: f64,
    true_traffic: f64,
) -> Result<f64, FitError> {
    if samples.is_empty() {
        return Err(FitError::Domain("no sampled records".into()));
    }
    if bundle.traffic <= 0.0 || true_traffic <= 0.0 {
        return Err(FitError::Domain("traffic forecast and total must be positive".into()));
    }
    let m = samples.len() as f64;
    let mut acc = 0.0;
    for rec in samples {
        if rec.traffic < 1.0 {
            return Err(FitError::Domain(format!("tick {} has traffic < 1", rec.t)));
        }
        let rc = bundle.cost.eval(rec.alpha) - rec.cost / rec.traffic;
        let rv = bundle.value.eval(rec.alpha) - rec.value / rec.traffic;
        acc += rec.traffic * (rc * rc + rv * rv);
    }
    let dt = bundle.traffic.ln() - true_traffic.ln();
    Ok(acc / m + traffic_weight * dt * dt)
}

/// Knobs for [`fit_bundle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub future_samples: usize,
    pub traffic_weight: f64,
    pub restarts: usize,
    pub max_iters: usize,
    pub family: FamilyKind,
    /// Error out unless at least one restart converged. The episode
    /// predictor relaxes this: a plateaued best restart is still a valid
    /// monotone bundle.
    #[serde(default = "default_require_convergence")]
    pub require_convergence: bool,
}

fn default_require_convergence() -> bool {
    true
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            future_samples: DEFAULT_FUTURE_SAMPLES,
            traffic_weight: DEFAULT_TRAFFIC_WEIGHT,
            restarts: DEFAULT_RESTARTS,
            max_iters: DEFAULT_MAX_ITERS,
            family: FamilyKind::LogSigmoid,
            require_convergence: true,
        }
    }
}

/// Per-restart convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartDiag {
    pub loss: f64,
    pub iters: usize,
    pub converged: bool,
}

/// A fitted bundle with its achieved loss and restart diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub bundle: ResponseBundle<f64, CurveModel<f64>>,
    pub loss: f64,
    pub restarts: Vec<RestartDiag>,
}

/// Fit a bundle for anchor `t` from logged records.
///
/// Records must cover every tick from `t` to the horizon end. Future
/// indices are drawn uniformly with replacement; the traffic forecast is
/// initialized at the observed `Σ_{k≥t} I_k`.
pub fn fit_bundle(
    records: &[TickRecord],
    anchor: usize,
    opts: &FitOptions,
    rng: &mut StdRng,
) -> Result<FitOutcome, FitError> {
    for rec in records {
        rec.validate()?;
    }
    let horizon = records.iter().map(|r| r.t as usize).max().unwrap_or(0);
    if anchor < 1 || anchor > horizon {
        return Err(FitError::Domain(format!("anchor {anchor} outside 1..={horizon}")));
    }
    let mut future: Vec<&TickRecord> = Vec::new();
    for k in anchor..=horizon {
        let rec = records
            .iter()
            .find(|r| r.t as usize == k)
            .ok_or_else(|| FitError::Domain(format!("records missing tick {k}")))?;
        future.push(rec);
    }
    let true_traffic: f64 = future.iter().map(|r| r.traffic).sum();

    let n = opts.future_samples.max(1);
    let samples: Vec<TickRecord> =
        (0..n).map(|_| future[rng.gen_range(0..future.len())].clone()).collect();

    let mut alphas: Vec<f64> = samples.iter().map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    if alphas.len() < 3 {
        return Err(FitError::Identifiability { distinct: alphas.len() });
    }

    fit_samples(&samples, true_traffic, opts, rng)
}

/// Core least-squares fit on an explicit sample set.
fn fit_samples(
    samples: &[TickRecord],
    true_traffic: f64,
    opts: &FitOptions,
    rng: &mut StdRng,
) -> Result<FitOutcome, FitError> {
    let family = opts.family;
    let nc = CurveModel::<f64>::param_count(family);
    let dim = 2 * nc + 1;
    let m = samples.len();
    let inv_m = 1.0 / m as f64;
    let alpha_max =
        1.25 * samples.iter().map(|r| r.alpha).fold(f64::NEG_INFINITY, f64::max);

    let max_cost_target = samples
        .iter()
        .map(|r| r.cost / r.traffic)
        .fold(0.0f64, f64::max)
        .max(1e-6);
    let max_value_target = samples
        .iter()
        .map(|r| r.value / r.traffic)
        .fold(0.0f64, f64::max)
        .max(1e-6);

    // The log-axis families have an unbounded ridge against power-law
    // targets (a → ∞, b → 0 keeps improving); a smooth cap on the raw
    // saturation parameter keeps the search region compact. Fifty times
    // the observed per-opportunity maximum is far above any plausible
    // saturation level.
    let sigmoid_like = matches!(family, FamilyKind::LogSigmoid | FamilyKind::Sigmoid);
    let cap_cost = softplus_inv(50.0 * max_cost_target);
    let cap_value = softplus_inv(50.0 * max_value_target);
    let bound_raw = |raw: f64, cap: f64| cap * (raw / cap).tanh();
    let unpack = move |x: &[f64]| -> (CurveModel<f64>, CurveModel<f64>, f64) {
        let mut raw_cost = x[0..nc].to_vec();
        let mut raw_value = x[nc..2 * nc].to_vec();
        if sigmoid_like {
            raw_cost[0] = bound_raw(raw_cost[0], cap_cost);
            raw_value[0] = bound_raw(raw_value[0], cap_value);
            raw_cost[1] = bound_raw(raw_cost[1], 100.0);
            raw_value[1] = bound_raw(raw_value[1], 100.0);
        }
        let cost = CurveModel::from_raw(family, &raw_cost, alpha_max);
        let value = CurveModel::from_raw(family, &raw_value, alpha_max);
        (cost, value, x[2 * nc])
    };

    let residuals = |x: &[f64], out: &mut Vec<f64>| {
        out.clear();
        let (cost, value, log_traffic) = unpack(x);
        for rec in samples {
            let w = (rec.traffic * inv_m).sqrt();
            out.push(w * (cost.eval(rec.alpha) - rec.cost / rec.traffic));
            out.push(w * (value.eval(rec.alpha) - rec.value / rec.traffic));
        }
        out.push(opts.traffic_weight.sqrt() * (log_traffic - true_traffic.ln()));
    };

    let init = |restart: usize, rng: &mut StdRng| -> Vec<f64> {
        let mut x = vec![0.0; dim];
        let heuristic_raw = |peak: f64, rng: &mut StdRng, jitter: bool| -> f64 {
            let scale = if jitter { rng.gen_range(0.7f64..1.5) } else { 1.0 };
            softplus_inv((1.5 * peak * scale).max(1e-6))
        };
        match family {
            FamilyKind::LogSigmoid | FamilyKind::Sigmoid => {
                let jitter = restart > 0;
                x[0] = heuristic_raw(max_cost_target, rng, jitter);
                x[nc] = heuristic_raw(max_value_target, rng, jitter);
                if restart == 0 {
                    x[1] = softplus_inv(1.0);
                    x[2] = 0.0;
                    x[nc + 1] = softplus_inv(1.0);
                    x[nc + 2] = 0.0;
                } else {
                    for &i in &[1, nc + 1] {
                        x[i] = softplus_inv(rng.gen_range(0.3f64.ln()..3.0f64.ln()).exp());
                    }
                    for &i in &[2, nc + 2] {
                        x[i] = rng.gen_range(-3.0..3.0);
                    }
                }
            }
            FamilyKind::Linear => {
                x[0] = softplus_inv((max_cost_target / alpha_max).max(1e-9));
                x[1] = softplus_inv((max_value_target / alpha_max).max(1e-9));
                if restart > 0 {
                    x[0] += rng.gen_range(-1.0..1.0);
                    x[1] += rng.gen_range(-1.0..1.0);
                }
            }
            FamilyKind::PiecewiseLinear => {
                let inc_c = softplus_inv((max_cost_target / nc as f64).max(1e-9));
                let inc_v = softplus_inv((max_value_target / nc as f64).max(1e-9));
                for i in 0..nc {
                    x[i] = inc_c + if restart > 0 { rng.gen_range(-0.5..0.5) } else { 0.0 };
                    x[nc + i] = inc_v + if restart > 0 { rng.gen_range(-0.5..0.5) } else { 0.0 };
                }
            }
        }
        x[2 * nc] = true_traffic.ln();
        x
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_converged = false;
    let mut diags = Vec::with_capacity(opts.restarts.max(1));
    for restart in 0..opts.restarts.max(1) {
        let x0 = init(restart, rng);
        let result = levenberg_marquardt(&residuals, x0, opts.max_iters);
        any_converged |= result.converged;
        diags.push(RestartDiag {
            loss: result.ssq,
            iters: result.iters,
            converged: result.converged,
        });
        let better = best.as_ref().map(|(_, l)| result.ssq < *l).unwrap_or(true);
        if better && (result.converged || !opts.require_convergence) {
            best = Some((result.x, result.ssq));
        }
    }
    if opts.require_convergence && !any_converged {
        return Err(FitError::NonConvergence { max_iters: opts.max_iters });
    }
    let (x, _) = best.ok_or(FitError::NonConvergence { max_iters: opts.max_iters })?;
    let (cost, value, log_traffic) = unpack(&x);
    let bundle = ResponseBundle {
        traffic: log_traffic.clamp(-700.0, 700.0).exp(),
        cost,
        value,
    };
    let loss = fit_loss(&bundle, samples, opts.traffic_weight, true_traffic)?;
    Ok(FitOutcome { bundle, loss, restarts: diags })
}

struct LmResult {
    x: Vec<f64>,
    ssq: f64,
    iters: usize,
    converged: bool,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Damped least squares with a numerically differenced Jacobian and
/// Marquardt diagonal scaling.
#[allow(clippy::needless_range_loop)]
fn levenberg_marquardt(
    residuals: &dyn Fn(&[f64], &mut Vec<f64>),
    mut x: Vec<f64>,
    max_iters: usize,
) -> LmResult {
    const FTOL: f64 = 1e-10;
    const XTOL: f64 = 1e-10;
    const GTOL: f64 = 1e-12;
    const LAMBDA_MAX: f64 = 1e14;

    let dim = x.len();
    let mut r = Vec::new();
    residuals(&x, &mut r);
    let n_res = r.len();
    let mut ssq = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut stalled = 0;
    let mut converged = false;
    let mut iters = 0;

    let mut jac = vec![vec![0.0; dim]; n_res];
    let mut r_hi = Vec::new();
    let mut r_lo = Vec::new();
    let mut trial = Vec::new();

    while iters < max_iters {
        iters += 1;
        // Central-difference Jacobian.
        for j in 0..dim {
            let h = 1e-6 * (1.0 + x[j].abs());
            let saved = x[j];
            x[j] = saved + h;
            residuals(&x, &mut r_hi);
            x[j] = saved - h;
            residuals(&x, &mut r_lo);
            x[j] = saved;
            for i in 0..n_res {
                jac[i][j] = (r_hi[i] - r_lo[i]) / (2.0 * h);
            }
        }
        // Normal equations.
        let mut a = vec![vec![0.0; dim]; dim];
        let mut g = vec![0.0; dim];
        for i in 0..n_res {
            for j in 0..dim {
                g[j] += jac[i][j] * r[i];
                for k in j..dim {
                    a[j][k] += jac[i][j] * jac[i][k];
                }
            }
        }
        for j in 0..dim {
            for k in 0..j {
                a[j][k] = a[k][j];
            }
        }
        let g_inf = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if g_inf < GTOL {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = a.clone();
            for j in 0..dim {
                damped[j][j] += lambda * a[j][j].max(1e-12);
            }
            let mut step = g.iter().map(|v| -v).collect::<Vec<_>>();
            if !solve_spd(&mut damped, &mut step) {
                lambda *= 10.0;
                continue;
            }
            trial.clear();
            trial.extend(x.iter().zip(&step).map(|(xi, si)| xi + si));
            residuals(&trial, &mut r_hi);
            let trial_ssq = sum_sq(&r_hi);
            if trial_ssq.is_finite() && trial_ssq < ssq {
                let improvement = ssq - trial_ssq;
                let step_small = step
                    .iter()
                    .zip(&x)
                    .all(|(s, xi)| s.abs() <= XTOL * (1.0 + xi.abs()));
                x.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut r_hi);
                ssq = trial_ssq;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if improvement <= FTOL * (ssq + 1e-30) || step_small {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                break;
            }
            lambda *= 2.0;
        }
        if ssq <= 1e-24 || stalled >= 2 {
            converged = true;
            break;
        }
        if !accepted {
            // Damping exhausted: local minimum to working precision.
            converged = true;
            break;
        }
    }
    LmResult { x, ssq, iters, converged }
}

/// In-place Cholesky solve of a symmetric positive-definite system.
#[allow(clippy::needless_range_loop)]
fn solve_spd(a: &mut [Vec<f64>], b: &mut [f64]) -> bool {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i][k] * b[k];
        }
        b[i] = s / a[i][i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k][i] * b[k];
        }
        b[i] = s / a[i][i];
    }
    true
}

/// Fit one family member to an arbitrary target curve on a dense grid.
///
/// Used to project the exact synthetic aggregate into a parametric family
/// and to run the curve-family comparison. Returns the fitted model and
/// its sup-norm error against the target on the grid.
pub fn fit_family_to_curve(
    target: &impl ResponseCurve<f64>,
    family: FamilyKind,
    lo: f64,
    hi: f64,
    grid_n: usize,
    restarts: usize,
    rng: &mut StdRng,
) -> (CurveModel<f64>, f64) {
    let samples: Vec<TickRecord> = (0..grid_n)
        .map(|i| {
            let alpha = lo + (hi - lo) * i as f64 / (grid_n - 1) as f64;
            TickRecord::new(i as u32 + 1, alpha, 1.0, target.eval(alpha), 0.0)
        })
        .collect();
    let opts = FitOptions {
        future_samples: grid_n,
        restarts,
        family,
        require_convergence: false,
        ..FitOptions::default()
    };
    let outcome = fit_samples(&samples, 1.0, &opts, rng).expect("grid fit is well-posed");
    let model = outcome.bundle.cost;
    let sup = crate::predict::sup_deviation(&model, target, lo, hi, 4 * grid_n);
    (model, sup)
}

/// Oracle that projects the true aggregate into log-sigmoid parameters,
/// failing loudly when the family cannot reach `tol` (model-family
/// mismatch).
pub fn parametric_oracle_bundle(
    gt: &std::sync::Arc<crate::market::GroundTruth>,
    t: usize,
    lo: f64,
    hi: f64,
    tol: f64,
    rng: &mut StdRng,
) -> Result<ResponseBundle<f64, CurveModel<f64>>, FitError> {
    let (traffic, cost, value) = crate::market::aggregate_response(gt, t)
        .map_err(|e| FitError::Domain(e.to_string()))?;
    let (cost_model, cost_err) =
        fit_family_to_curve(&cost, FamilyKind::LogSigmoid, lo, hi, 96, 4, rng);
    let (value_model, value_err) =
        fit_family_to_curve(&value, FamilyKind::LogSigmoid, lo, hi, 96, 4, rng);
    let achieved = cost_err.max(value_err);
    if achieved > tol {
        return Err(FitError::FamilyMismatch { achieved, tol });
    }
    Ok(ResponseBundle { traffic, cost: cost_model, value: value_model })
}

/// Predictor that refits curves from a logged dataset at every anchor.
///
/// Anchors too close to the horizon end can lack three distinct logged
/// multipliers among the sampled futures; the predictor then reuses the
/// last identifiable fit with the traffic forecast refreshed from the log.
#[derive(Debug, Clone)]
pub struct FittedPredictor {
    records: Vec<TickRecord>,
    opts: FitOptions,
    seed: u64,
    last: Option<ResponseBundle<f64, CurveModel<f64>>>,
    pub fallback_count: usize,
}

impl FittedPredictor {
    pub fn new(records: Vec<TickRecord>, opts: FitOptions, seed: u64) -> Result<Self, FitError> {
        if records.is_empty() {
            return Err(FitError::Domain("empty record log".into()));
        }
        for rec in &records {
            rec.validate()?;
        }
        let opts = FitOptions { require_convergence: false, ..opts };
        Ok(Self { records, opts, seed, last: None, fallback_count: 0 })
    }

    fn observed_remaining(&self, t: usize) -> f64 {
        self.records.iter().filter(|r| r.t as usize >= t).map(|r| r.traffic).sum()
    }
}

impl Predictor for FittedPredictor {
    fn predict(&mut self, t: usize) -> Result<Bundle, PredictError> {
        let mut rng = StdRng::seed_from_u64(child_seed(self.seed, t as u64));
        match fit_bundle(&self.records, t, &self.opts, &mut rng) {
            Ok(outcome) => {
                self.last = Some(outcome.bundle.clone());
                Ok(ResponseBundle {
                    traffic: outcome.bundle.traffic,
                    cost: PredictedCurve::Model(outcome.bundle.cost),
                    value: PredictedCurve::Model(outcome.bundle.value),
                })
            }
            Err(FitError::Identifiability { .. }) => {
                let last = self
                    .last
                    .clone()
                    .ok_or_else(|| PredictError::Fit("no identifiable anchor yet".into()))?;
                self.fallback_count += 1;
                Ok(ResponseBundle {
                    traffic: self.observed_remaining(t).max(crate::predict::TRAFFIC_FLOOR),
                    cost: PredictedCurve::Model(last.cost),
                    value: PredictedCurve::Model(last.value),
                })
            }
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::CurveParams;

    fn records_from_params(
        cost: &CurveParams<f64>,
        value: &CurveParams<f64>,
        alphas: &[f64],
        traffic: f64,
    ) -> Vec<TickRecord> {
        alphas
            .iter()
            .enumerate()
            .map(|(i, &alpha)| {
                TickRecord::new(
                    i as u32 + 1,
                    alpha,
                    traffic,
                    traffic * cost.eval(alpha),
                    traffic * value.eval(alpha),
                )
            })
            .collect()
    }

    fn grid_alphas(n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.1 * 10f64.powf(2.0 * i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn loss_is_zero_for_perfect_fit() {
        let cost = CurveParams::new(2.0, 1.0, 0.0).unwrap();
        let value = CurveParams::new(1.0, 0.8, 0.3).unwrap();
        let records = records_from_params(&cost, &value, &grid_alphas(6), 50.0);
        let true_traffic: f64 = records.iter().map(|r| r.traffic).sum();
        let bundle = ResponseBundle { traffic: true_traffic, cost, value };
        let loss = fit_loss(&bundle, &records, 0.1, true_traffic).unwrap();
        assert!(loss < 1e-24, "loss {loss}");
    }

    #[test]
    fn traffic_term_alone_equals_weight() {
        // Perfect curves but Î = e·I_true makes the loss exactly λ_I.
        let cost = CurveParams::new(2.0, 1.0, 0.0).unwrap();
        let value = CurveParams::new(1.0, 0.8, 0.3).unwrap();
        let records = records_from_params(&cost, &value, &[0.5], 10.0);
        let bundle =
            ResponseBundle { traffic: 10.0 * std::f64::consts::E, cost, value };
        let loss = fit_loss(&bundle, &records, 0.37, 10.0).unwrap();
        assert!((loss - 0.37).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn loss_matches_hand_computed_residuals() {
        // Flat per-opportunity targets 0.3/0.1 against curves evaluated at
        // two points; weights I/M with I=4 and I=9.
        let cost = CurveParams::new(1.0, 1.0, 0.0).unwrap();
        let value = CurveParams::new(0.5, 1.0, 0.0).unwrap();
        let recs = vec![
            TickRecord::new(1, 0.4, 4.0, 4.0 * 0.3, 4.0 * 0.1),
            TickRecord::new(2, 0.9, 9.0, 9.0 * 0.3, 9.0 * 0.1),
        ];
        let bundle = ResponseBundle { traffic: 13.0, cost, value };
        let mut want = 0.0;
        for r in &recs {
            let dc = cost.eval(r.alpha) - r.cost / r.traffic;
            let dv = value.eval(r.alpha) - r.value / r.traffic;
            want += r.traffic * (dc * dc + dv * dv);
        }
        want /= 2.0;
        let got = fit_loss(&bundle, &recs, 0.0, 13.0).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn loss_rejects_zero_traffic_ticks() {
        let cost = CurveParams::new(1.0, 1.0, 0.0).unwrap();
        let recs = vec![TickRecord::new(1, 0.4, 0.0, 0.0, 0.0)];
        let bundle = ResponseBundle { traffic: 1.0, cost, value: cost };
        assert!(matches!(fit_loss(&bundle, &recs, 0.1, 1.0), Err(FitError::Domain(_))));
    }

    #[test]
    fn recovers_known_parameters_from_noiseless_records() {
        let cost = CurveParams::new(1.8, 1.3, -0.4).unwrap();
        let value = CurveParams::new(0.9, 0.7, 0.5).unwrap();
        let records = records_from_params(&cost, &value, &grid_alphas(8), 100.0);
        let opts = FitOptions { future_samples: 24, ..FitOptions::default() };
        let mut rng = StdRng::seed_from_u64(17);
        let outcome = fit_bundle(&records, 1, &opts, &mut rng).unwrap();
        assert!(outcome.loss < 1e-8, "loss {}", outcome.loss);
        let got = match outcome.bundle.cost {
            CurveModel::LogSigmoid(p) => p,
            ref other => panic!("unexpected family {other:?}"),
        };
        for (g, w) in [(got.a, cost.a), (got.b, cost.b), (got.c, cost.c)] {
            assert!(((g - w) / w).abs() < 1e-3, "param {g} vs {w}");
        }
    }

    #[test]
    fn single_logged_alpha_is_unidentifiable() {
        let cost = CurveParams::new(1.0, 1.0, 0.0).unwrap();
        let value = CurveParams::new(0.5, 1.0, 0.0).unwrap();
        let records = records_from_params(&cost, &value, &[0.4, 0.4, 0.4, 0.4], 10.0);
        let mut rng = StdRng::seed_from_u64(0);
        let res = fit_bundle(&records, 1, &FitOptions::default(), &mut rng);
        assert!(matches!(res, Err(FitError::Identifiability { .. })));
    }

    #[test]
    fn missing_tick_coverage_is_a_domain_error() {
        let cost = CurveParams::new(1.0, 1.0, 0.0).unwrap();
        let value = CurveParams::new(0.5, 1.0, 0.0).unwrap();
        let mut records = records_from_params(&cost, &value, &grid_alphas(5), 10.0);
        records.remove(2);
        let mut rng = StdRng::seed_from_u64(0);
        assert!(matches!(
            fit_bundle(&records, 1, &FitOptions::default(), &mut rng),
            Err(FitError::Domain(_))
        ));
    }

    #[test]
    fn parametric_oracle_surfaces_family_mismatch() {
        use crate::market::{generate_campaign, ActionRange, CampaignConfig, Profile};
        let config = CampaignConfig {
            budget: 100.0,
            target_cpa: 0.5,
            horizon: 6,
            action_range: ActionRange { lo: 0.05, hi: 0.55 },
            seed: 3,
            hard_budget_stop: false,
        };
        let gt = std::sync::Arc::new(generate_campaign(&config, Profile::Uniform).unwrap());
        // The quadratic aggregate is outside the family at tight tolerance.
        let mut rng = StdRng::seed_from_u64(4);
        assert!(matches!(
            parametric_oracle_bundle(&gt, 1, 0.05, 0.55, 1e-4, &mut rng),
            Err(FitError::FamilyMismatch { .. })
        ));
        // At a tolerance the family can meet, the projection goes through
        // and stays within it on a dense grid.
        let mut rng = StdRng::seed_from_u64(4);
        let bundle = parametric_oracle_bundle(&gt, 1, 0.05, 0.55, 5e-3, &mut rng).unwrap();
        let (traffic, cost, _) = crate::market::aggregate_response(&gt, 1).unwrap();
        assert_eq!(bundle.traffic, traffic);
        let sup = crate::predict::sup_deviation(&bundle.cost, &cost, 0.05, 0.55, 256);
        assert!(sup <= 5e-3, "sup {sup}");
    }

    #[test]
    fn fitted_curves_stay_monotone() {
        let cost = CurveParams::new(1.8, 1.3, -0.4).unwrap();
        let value = CurveParams::new(0.9, 0.7, 0.5).unwrap();
        let records = records_from_params(&cost, &value, &grid_alphas(8), 100.0);
        let opts = FitOptions { future_samples: 16, ..FitOptions::default() };
        let mut rng = StdRng::seed_from_u64(3);
        let outcome = fit_bundle(&records, 1, &opts, &mut rng).unwrap();
        let mut prev = 0.0;
        for i in 1..=100 {
            let alpha = 12.0 * i as f64 / 100.0;
            let v = outcome.bundle.cost.eval(alpha);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }
}
