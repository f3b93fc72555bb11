//! Split conformal prediction with a probability-integral-transform (PIT)
//! correction for approximate conditional coverage.
//!
//! The numerical core (scores, calibration, networks, density models and the
//! corrected pipeline) is generic over the scalar type; the aliases below fix
//! it to `f64` or `f32`. Evaluation, synthetic data and the experiment runner
//! work in `f64`.

pub mod cli;
pub mod conformal;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod nn;
pub mod pit;
pub mod quadrature;
pub mod random;
pub mod real;
pub mod scores;
pub mod synth;

pub use error::{Error, Result};
pub use real::Real;

pub type Dataset64 = scores::Dataset<f64>;
pub type ScoreFunction64 = scores::ScoreFunction<f64>;
pub type Calibrator = conformal::ConformalCalibrator<f64>;
pub type Mlp64 = nn::Mlp<f64>;
pub type Mlp32 = nn::Mlp<f32>;
pub type Mdn = density::MdnModel<f64>;
pub type Mdn32 = density::MdnModel<f32>;
pub type SplineFlow = density::SplineFlowModel<f64>;
pub type SplineFlow32 = density::SplineFlowModel<f32>;
pub type Oracle = density::OracleModel<f64>;
pub type PitPipeline64 = pit::PitPipeline<f64>;
pub type PitPipeline32 = pit::PitPipeline<f32>;
