//! Conditional distribution estimators for a nonconformity score given the
//! features: `F̂(s|x)`, `log p̂(s|x)` and `F̂⁻¹(u|x)`.
//!
//! Three implementations share the [`ConditionalScoreModel`] interface: a
//! closed-form [`OracleModel`], a Gaussian mixture density network
//! ([`MdnModel`]) and a one-dimensional conditional rational-quadratic
//! spline flow ([`SplineFlowModel`]). The two learned models are fitted by
//! maximum likelihood with [`fit_mle`].

mod mdn;
mod oracle;
mod spline;

pub use mdn::{MdnConfig, MdnModel, MixtureHead, MixtureParams};
pub use oracle::{OracleFamily, OracleModel};
pub use spline::{SplineFlowConfig, SplineFlowModel, SplineHead, SplineKnots, TAIL_MASS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Mlp, MlpDocument, TrainConfig};
use crate::real::Real;
use crate::scores::{Dataset, NonconformityScore, Role};

/// Floor applied to densities reported by the learned models.
pub const DENSITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Oracle,
    Mdn,
    SplineFlow,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Oracle => "oracle",
            Variant::Mdn => "mdn",
            Variant::SplineFlow => "spline_flow",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Variant::Oracle),
            "mdn" => Ok(Variant::Mdn),
            "spline_flow" | "flow" => Ok(Variant::SplineFlow),
            other => Err(Error::Parse(format!("unknown model `{other}`"))),
        }
    }
}

/// Conditional distribution of a scalar score given features.
pub trait ConditionalScoreModel<T: Real>: Send + Sync {
    fn variant(&self) -> Variant;

    fn cdf(&self, x: &[T], s: T) -> Result<T>;

    fn log_density(&self, x: &[T], s: T) -> Result<T>;

    /// `F̂⁻¹(u|x)` for `u ∈ (0, 1)`.
    fn inverse_cdf(&self, x: &[T], u: T) -> Result<T>;

    /// A strictly increasing transport of the score. Defaults to the CDF;
    /// flows return their untransformed latent value instead.
    fn latent(&self, x: &[T], s: T) -> Result<T> {
        self.cdf(x, s)
    }

    fn inverse_latent(&self, x: &[T], z: T) -> Result<T> {
        self.inverse_cdf(x, z)
    }

    /// Fingerprint of the dataset the model was fitted on, if any.
    fn training_fingerprint(&self) -> Option<u64> {
        None
    }
}

impl<T: Real, M: ConditionalScoreModel<T> + ?Sized> ConditionalScoreModel<T> for std::sync::Arc<M> {
    fn variant(&self) -> Variant {
        (**self).variant()
    }
    fn cdf(&self, x: &[T], s: T) -> Result<T> {
        (**self).cdf(x, s)
    }
    fn log_density(&self, x: &[T], s: T) -> Result<T> {
        (**self).log_density(x, s)
    }
    fn inverse_cdf(&self, x: &[T], u: T) -> Result<T> {
        (**self).inverse_cdf(x, u)
    }
    fn latent(&self, x: &[T], s: T) -> Result<T> {
        (**self).latent(x, s)
    }
    fn inverse_latent(&self, x: &[T], z: T) -> Result<T> {
        (**self).inverse_latent(x, z)
    }
    fn training_fingerprint(&self) -> Option<u64> {
        (**self).training_fingerprint()
    }
}

pub(crate) fn check_unit_open<T: Real>(u: T) -> Result<()> {
    if u > T::zero() && u < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("probability {u} outside (0, 1)")))
    }
}

/// Per-coordinate affine feature standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> FeatureScaler<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![T::zero(); dim],
            scale: vec![T::one(); dim],
        }
    }

    /// z-score scaler fitted on `rows`; constant coordinates keep unit scale.
    pub fn fit(rows: &[&[T]], dim: usize) -> Self {
        let n = rows.len().max(1);
        let nf = T::from_len(n);
        let mut mean = vec![T::zero(); dim];
        for r in rows {
            mean.iter_mut().zip(r.iter()).for_each(|(m, &v)| *m = *m + v);
        }
        mean.iter_mut().for_each(|m| *m = *m / nf);
        let mut var = vec![T::zero(); dim];
        for r in rows {
            var.iter_mut()
                .zip(r.iter().zip(&mean))
                .for_each(|(v, (&x, &m))| *v = *v + (x - m) * (x - m));
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / nf).sqrt();
                if sd > T::lit(1e-12) {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                what: "features",
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect())
    }

    pub fn fit_dataset(data: &crate::scores::Dataset<T>) -> Self {
        let rows: Vec<&[T]> = data.iter().map(|s| s.features.as_slice()).collect();
        Self::fit(&rows, data.feature_dim())
    }

    pub(crate) fn to_f64(&self) -> FeatureScaler<f64> {
        FeatureScaler {
            mean: self.mean.iter().map(|v| v.as_f64()).collect(),
            scale: self.scale.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub(crate) fn from_f64(s: &FeatureScaler<f64>) -> Self {
        Self {
            mean: s.mean.iter().map(|&v| T::lit(v)).collect(),
            scale: s.scale.iter().map(|&v| T::lit(v)).collect(),
        }
    }
}

/// Negative log-likelihood of one training target given the trunk output.
pub trait DensityHead<T: Real>: Sync {
    /// Returns the sample's negative log-likelihood and writes its gradient
    /// with respect to `out` into `grad`.
    fn nll(&self, out: &[T], target: T, grad: &mut [T]) -> T;
}

/// A model made of a feature network and a likelihood head.
pub trait TrainableDensity<T: Real> {
    type Head: DensityHead<T>;

    /// Maps a raw feature vector to the network input.
    fn network_input(&self, x: &[T]) -> Result<Vec<T>>;

    /// Maps a raw score to the head's target coordinate.
    fn head_target(&self, s: T) -> T;

    fn parts_mut(&mut self) -> (&mut Mlp<T>, &Self::Head);

    fn set_training_fingerprint(&mut self, fingerprint: u64);
}

/// Fits `model` by maximum likelihood on the scores of `train`.
///
/// Returns the mean negative log-likelihood of every epoch (in the head's
/// target coordinates). Zero epochs leave the model untouched.
pub fn fit_mle<T, M>(
    model: &mut M,
    train: &Dataset<T>,
    score: &(impl NonconformityScore<T> + ?Sized),
    config: &TrainConfig,
) -> Result<Vec<f64>>
where
    T: Real,
    M: TrainableDensity<T>,
{
    if train.role() != Role::Train {
        return Err(Error::RoleViolation(format!(
            "fitting requires a train split, got {}",
            train.role()
        )));
    }
    if train.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let scores = train.scores(score)?;
    let inputs = train
        .iter()
        .map(|s| model.network_input(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<T> = scores.iter().map(|&s| model.head_target(s)).collect();
    let (trunk, head) = model.parts_mut();
    let trace = nn::train(trunk, &inputs, config, |i, out, grad| head.nll(out, targets[i], grad))?;
    check_loss_trace(&trace);
    model.set_training_fingerprint(train.fingerprint());
    Ok(trace)
}

fn check_loss_trace(trace: &[f64]) {
    const WINDOW: usize = 10;
    let bumps = trace.windows(WINDOW + 1).filter(|w| w[WINDOW] > w[0]).count();
    if bumps > 0 {
        log::debug!("training loss rose over {bumps} windows of {WINDOW} epochs");
    }
}

/// Serialized learned model: a variant header plus the trunk network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub variant: Variant,
    #[serde(flatten)]
    pub header: serde_json::Value,
    pub features: FeatureScaler<f64>,
    pub network: MlpDocument,
}
