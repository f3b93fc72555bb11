//! Probability-integral-transform correction of a base score.
//!
//! The corrected score is `ŝ(x, y) = F̂(s(x, y) | x)`, the base score pushed
//! through an estimated conditional CDF. When `F̂` is the true conditional
//! CDF the corrected score is uniform on `(0, 1)` whatever `x` is, so split
//! conformal calibration on it gives conditional coverage. Because `F̂(·|x)`
//! is increasing, every corrected region is still a sublevel set of the base
//! score; only the level changes with `x`.
//!
//! For flows the calibration can equally run on the latent value `f(s|x)`
//! (any strictly increasing transform of the CDF gives the same regions).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conformal::{ConformalCalibrator, PredictionRegion, RegionProvider, SplitConformal, Threshold};
use crate::density::{ConditionalScoreModel, Variant};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::scores::{Dataset, Interval, NonconformityScore, Role, ScoreFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentMode {
    /// Calibrate on `F̂(s|x) ∈ [0, 1]`.
    Probability,
    /// Calibrate on the model's latent transport value.
    FlowLatent,
}

impl LatentMode {
    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::SplineFlow => LatentMode::FlowLatent,
            Variant::Oracle | Variant::Mdn => LatentMode::Probability,
        }
    }
}

/// Base score composed with a conditional score model.
#[derive(Clone)]
pub struct PitCorrectedScore<T: Real> {
    base: ScoreFunction<T>,
    model: Arc<dyn ConditionalScoreModel<T>>,
    mode: LatentMode,
}

impl<T: Real> std::fmt::Debug for PitCorrectedScore<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PitCorrectedScore")
            .field("base", &self.base)
            .field("model", &self.model.variant())
            .field("mode", &self.mode)
            .finish()
    }
}

impl<T: Real> PitCorrectedScore<T> {
    pub fn new(base: ScoreFunction<T>, model: Arc<dyn ConditionalScoreModel<T>>, mode: LatentMode) -> Self {
        Self { base, model, mode }
    }

    pub fn base(&self) -> &ScoreFunction<T> {
        &self.base
    }

    pub fn model(&self) -> &Arc<dyn ConditionalScoreModel<T>> {
        &self.model
    }

    pub fn mode(&self) -> LatentMode {
        self.mode
    }

    /// Transforms an already computed base score.
    pub fn correct(&self, x: &[T], base_score: T) -> Result<T> {
        match self.mode {
            LatentMode::Probability => self.model.cdf(x, base_score),
            LatentMode::FlowLatent => self.model.latent(x, base_score),
        }
    }

    /// Base-score level equivalent to a corrected-score threshold at `x`.
    pub fn base_threshold(&self, x: &[T], threshold: Threshold<T>) -> Result<Option<Threshold<T>>> {
        let t = match threshold {
            Threshold::Infinite => return Ok(Some(Threshold::Infinite)),
            Threshold::Finite(t) => t,
        };
        Ok(match self.mode {
            LatentMode::Probability if t >= T::one() => Some(Threshold::Infinite),
            // {y : F̂(s) ≤ 0} has zero probability
            LatentMode::Probability if t <= T::zero() => None,
            LatentMode::Probability => Some(Threshold::Finite(self.model.inverse_cdf(x, t)?)),
            LatentMode::FlowLatent => Some(Threshold::Finite(self.model.inverse_latent(x, t)?)),
        })
    }
}

impl<T: Real> NonconformityScore<T> for PitCorrectedScore<T> {
    fn evaluate(&self, x: &[T], y: &[T]) -> Result<T> {
        let s = self.base.evaluate(x, y)?;
        self.correct(x, s)
    }

    fn sublevel_intervals(&self, x: &[T], threshold: Threshold<T>) -> Result<Vec<Interval<T>>> {
        match self.base_threshold(x, threshold)? {
            Some(t) => self.base.sublevel_intervals(x, t),
            None => Ok(Vec::new()),
        }
    }

    fn describe(&self) -> String {
        format!("pit({}, {})", self.base.describe(), self.model.variant())
    }
}

/// Split conformal calibration on PIT-corrected scores.
pub struct PitPipeline<T: Real> {
    inner: SplitConformal<T, PitCorrectedScore<T>>,
}

/// Builds a corrected pipeline from a fitted model and a calibration split.
///
/// Fails if the data is not tagged as calibration or if the model was fitted
/// on this very dataset.
pub fn build_pipeline<T: Real>(
    base: ScoreFunction<T>,
    model: Arc<dyn ConditionalScoreModel<T>>,
    calibration: &Dataset<T>,
    mode: LatentMode,
) -> Result<PitPipeline<T>> {
    if calibration.role() != Role::Calibration {
        return Err(Error::RoleViolation(format!(
            "pipeline calibration needs a calibration split, got {}",
            calibration.role()
        )));
    }
    if calibration.is_empty() {
        return Err(Error::Empty("calibration data"));
    }
    if model.training_fingerprint() == Some(calibration.fingerprint()) {
        return Err(Error::RoleViolation("model was trained on the calibration data".into()));
    }
    let score = PitCorrectedScore::new(base, model, mode);
    let corrected = calibration.scores(&score)?;
    Ok(PitPipeline {
        inner: SplitConformal::new(score, ConformalCalibrator::new(corrected)?),
    })
}

impl<T: Real> PitPipeline<T> {
    pub fn score(&self) -> &PitCorrectedScore<T> {
        self.inner.score()
    }

    /// Sorted corrected calibration scores `U_(1) ≤ … ≤ U_(n)`.
    pub fn calibration_scores(&self) -> &[T] {
        self.inner.calibrator().sorted_scores()
    }

    pub fn threshold(&self, alpha: f64) -> Result<Threshold<T>> {
        self.inner.calibrator().threshold(alpha)
    }

    pub fn corrected_region(&self, alpha: f64) -> Result<PredictionRegion<'_, T>> {
        self.inner.region(alpha)
    }

    /// The region at `x` in outcome space (1-D outcomes).
    pub fn intervals(&self, x: &[T], alpha: f64) -> Result<Vec<Interval<T>>> {
        self.inner.region(alpha)?.intervals(x)
    }

    pub fn export(&self, model_reference: &str) -> PipelineExport {
        PipelineExport {
            sorted_scores: self.calibration_scores().iter().map(|v| v.as_f64()).collect(),
            base_score: self.score().base().describe(),
            latent_mode: self.score().mode(),
            model_variant: self.score().model().variant(),
            model_reference: model_reference.to_string(),
        }
    }
}

impl<T: Real> RegionProvider<T> for PitPipeline<T> {
    fn contains(&self, x: &[T], y: &[T], alpha: f64) -> Result<bool> {
        self.inner.contains(x, y, alpha)
    }

    fn membership_grid(&self, x: &[T], y: &[T], alphas: &[f64]) -> Result<Vec<bool>> {
        self.inner.membership_grid(x, y, alphas)
    }
}

/// JSON export of a calibrated pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineExport {
    pub sorted_scores: Vec<f64>,
    pub base_score: String,
    pub latent_mode: LatentMode,
    pub model_variant: Variant,
    /// Path or name of the persisted model document.
    pub model_reference: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{OracleFamily, OracleModel};

    fn half_normal() -> Arc<dyn ConditionalScoreModel<f64>> {
        Arc::new(OracleModel::new(OracleFamily::HalfNormalScale, |_: &[f64]| 1.0))
    }

    #[test]
    fn corrected_score_examples() {
        let score = PitCorrectedScore::new(
            ScoreFunction::absolute_residual(),
            half_normal(),
            LatentMode::Probability,
        );
        assert_eq!(score.evaluate(&[0.0], &[0.0]).unwrap(), 0.0);
        let v = score.evaluate(&[0.0], &[1.959964]).unwrap();
        assert!((v - 0.95).abs() < 1e-6, "{v}");

        let exp: Arc<dyn ConditionalScoreModel<f64>> =
            Arc::new(OracleModel::new(OracleFamily::ExponentialRate, |x: &[f64]| x[0] + 1.0));
        let score = PitCorrectedScore::new(ScoreFunction::absolute_residual(), exp, LatentMode::Probability);
        assert!((score.evaluate(&[0.0], &[-1.0]).unwrap() - 0.63212).abs() < 1e-5);
    }

    #[test]
    fn interval_through_inverse_cdf() {
        let score = PitCorrectedScore::new(
            ScoreFunction::absolute_residual(),
            half_normal(),
            LatentMode::Probability,
        );
        let iv = score.sublevel_intervals(&[0.0], Threshold::Finite(0.95)).unwrap();
        assert_eq!(iv.len(), 1);
        assert!((iv[0].hi - 1.959964).abs() < 1e-5 && (iv[0].lo + iv[0].hi).abs() < 1e-12);
        let all = score.sublevel_intervals(&[0.0], Threshold::Finite(1.0)).unwrap();
        assert_eq!(all[0].hi, f64::INFINITY);
    }

    #[test]
    fn pipeline_thresholds_from_sorted_scores() {
        // Oracle CDF is the identity on [0, 1] for raw scores u ~ Unif(0,1).
        struct Identity;
        impl ConditionalScoreModel<f64> for Identity {
            fn variant(&self) -> Variant {
                Variant::Oracle
            }
            fn cdf(&self, _: &[f64], s: f64) -> Result<f64> {
                Ok(s.clamp(0.0, 1.0))
            }
            fn log_density(&self, _: &[f64], _: f64) -> Result<f64> {
                Ok(0.0)
            }
            fn inverse_cdf(&self, _: &[f64], u: f64) -> Result<f64> {
                Ok(u)
            }
        }
        let cal = Dataset::from_scalars(&[0.0; 4], &[0.9, 0.1, 0.6, 0.4], Role::Calibration).unwrap();
        let pipe = build_pipeline(
            ScoreFunction::raw_response(),
            Arc::new(Identity),
            &cal,
            LatentMode::Probability,
        )
        .unwrap();
        assert_eq!(pipe.calibration_scores(), &[0.1, 0.4, 0.6, 0.9]);
        assert_eq!(pipe.threshold(0.5).unwrap(), Threshold::Finite(0.6));
        assert_eq!(pipe.threshold(0.1).unwrap(), Threshold::Infinite);
        let export = pipe.export("identity");
        assert_eq!(export.sorted_scores, vec![0.1, 0.4, 0.6, 0.9]);
        let json = serde_json::to_string(&export).unwrap();
        assert!(json.contains("\"latent_mode\":\"probability\""));
    }

    #[test]
    fn pipeline_rejects_wrong_role() {
        let data = Dataset::from_scalars(&[0.0, 0.5], &[0.2, 0.1], Role::Train).unwrap();
        let err = build_pipeline(
            ScoreFunction::absolute_residual(),
            half_normal(),
            &data,
            LatentMode::Probability,
        );
        assert!(matches!(err, Err(Error::RoleViolation(_))));
    }
}
