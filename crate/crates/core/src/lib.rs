//! Tick-level auto-bidding under a budget and a CPA target.
//!
//! The pipeline: predict the remaining horizon's response — traffic plus
//! per-opportunity cost and value curves over the pacing multiplier —
//! then solve two 1D roots per tick (spend the remaining budget; land on
//! the CPA boundary) and execute the smaller multiplier, replanning on
//! realized state. A closed-form synthetic auction market makes the
//! optimality-gap, exactness, and violation-bound guarantees checkable
//! against brute force, and a benchmark harness compares the controller
//! with fixed and feedback baselines under distribution shift.
//!
//! Numeric kernel modules ([`curves`], [`special`], [`solve`], the pure
//! controller math in [`control`]) are generic over the scalar type via
//! [`num::Real`]; the simulator, fitter, verification, and benchmark
//! layers run on the `f64` aliases below.
//!
//! ```
//! use std::sync::Arc;
//! use bidpace::control::{run_episode, MinPacingController};
//! use bidpace::market::{generate_campaign, ActionRange, CampaignConfig, Mode, Profile};
//! use bidpace::predict::OraclePredictor;
//! use rand::{rngs::StdRng, SeedableRng};
//!
//! let config = CampaignConfig {
//!     budget: 150.0,
//!     target_cpa: 1.0,
//!     horizon: 8,
//!     action_range: ActionRange { lo: 0.05, hi: 0.95 },
//!     seed: 7,
//!     hard_budget_stop: false,
//! };
//! let market = Arc::new(generate_campaign(&config, Profile::Heterogeneous)?);
//! let mut controller = MinPacingController::new(OraclePredictor::exact(Arc::clone(&market)));
//! let mut rng = StdRng::seed_from_u64(config.seed);
//! let episode = run_episode(&mut controller, &market, &config, Mode::Fluid, &mut rng)?;
//! assert!(episode.total_cost <= config.budget * (1.0 + 1e-9));
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod bench;
pub mod control;
pub mod curves;
pub mod fit;
pub mod io;
pub mod market;
pub mod num;
pub mod predict;
pub mod solve;
pub mod special;
pub mod verify;

pub use curves::{normalized_sigmoid, CurveError, CurveModel, CurveParams, FamilyKind, ResponseCurve};
pub use num::Real;

/// Log-sigmoid curve parameters at the default scalar.
pub type CurveParams64 = CurveParams<f64>;
/// Fitted curve model at the default scalar.
pub type CurveModel64 = CurveModel<f64>;
/// Action range at the default scalar.
pub type ActionRange64 = market::ActionRange<f64>;
/// Controller decision at the default scalar.
pub type ControlDecision64 = control::ControlDecision<f64>;
/// Constraint pair at the default scalar.
pub type Constraints64 = control::Constraints<f64>;
