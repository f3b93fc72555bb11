//! Labeled data, dataset splits and base nonconformity scores.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conformal::Threshold;
use crate::error::{Error, Result};
use crate::random;
use crate::real::Real;

/// One observation: features `x ∈ R^p` and outcome `y ∈ R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T> {
    pub features: Vec<T>,
    pub outcome: Vec<T>,
}

impl<T: Real> LabeledSample<T> {
    pub fn new(features: Vec<T>, outcome: Vec<T>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Empty("features"));
        }
        if outcome.is_empty() {
            return Err(Error::Empty("outcome"));
        }
        if features.iter().chain(&outcome).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample"));
        }
        Ok(Self { features, outcome })
    }

    /// Scalar-feature, scalar-outcome shorthand.
    pub fn scalar(x: T, y: T) -> Result<Self> {
        Self::new(vec![x], vec![y])
    }
}

/// Which part of the split-conformal procedure a dataset feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Calibration,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Calibration => "calibration",
            Role::Test => "test",
        })
    }
}

/// Ordered samples sharing one feature and outcome dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    samples: Vec<LabeledSample<T>>,
    role: Role,
}

impl<T: Real> Dataset<T> {
    pub fn new(samples: Vec<LabeledSample<T>>, role: Role) -> Result<Self> {
        if let Some(first) = samples.first() {
            let (p, d) = (first.features.len(), first.outcome.len());
            for s in &samples {
                if s.features.len() != p {
                    return Err(Error::DimensionMismatch {
                        what: "features",
                        expected: p,
                        got: s.features.len(),
                    });
                }
                if s.outcome.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "outcome",
                        expected: d,
                        got: s.outcome.len(),
                    });
                }
            }
        }
        Ok(Self { samples, role })
    }

    /// Builds a 1-D feature, 1-D outcome dataset from parallel slices.
    pub fn from_scalars(xs: &[T], ys: &[T], role: Role) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                what: "outcomes",
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let samples = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| LabeledSample::scalar(x, y))
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples, role)
    }

    pub fn samples(&self) -> &[LabeledSample<T>] {
        &self.samples
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Feature dimension, zero for an empty dataset.
    pub fn feature_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn outcome_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.outcome.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledSample<T>> {
        self.samples.iter()
    }

    /// Evaluates `score` on every sample.
    pub fn scores<S: NonconformityScore<T> + ?Sized>(&self, score: &S) -> Result<Vec<T>> {
        self.samples
            .iter()
            .map(|s| score.evaluate(&s.features, &s.outcome))
            .collect()
    }

    /// Content hash over the bit patterns of every entry, used to detect a
    /// model being calibrated on the data it was trained on.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for s in &self.samples {
            for v in s.features.iter().chain(&s.outcome) {
                hasher.update(v.as_f64().to_bits().to_le_bytes());
            }
            hasher.update([0xff]);
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    /// Writes `x_0..x_{p-1},y_0..y_{d-1}` CSV.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (0..self.feature_dim())
            .map(|i| format!("x_{i}"))
            .chain((0..self.outcome_dim()).map(|i| format!("y_{i}")))
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for s in &self.samples {
            let row: Vec<String> = s
                .features
                .iter()
                .chain(&s.outcome)
                .map(|v| v.as_f64().to_string())
                .collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>, role: Role) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, role)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, role: Role) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        let mut p = 0;
        let mut d = 0;
        for (i, name) in header.iter().enumerate() {
            if name == format!("x_{p}") && d == 0 {
                p += 1;
            } else if name == format!("y_{d}") {
                d += 1;
            } else {
                return Err(Error::Parse(format!("unexpected column `{name}` at position {i}")));
            }
        }
        let mut samples = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            let values = record
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|e| Error::Parse(format!("`{f}`: {e}")))
                })
                .collect::<Result<Vec<T>>>()?;
            if values.len() != p + d {
                return Err(Error::DimensionMismatch {
                    what: "csv row",
                    expected: p + d,
                    got: values.len(),
                });
            }
            samples.push(LabeledSample::new(values[..p].to_vec(), values[p..].to_vec())?);
        }
        Self::new(samples, role)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Seeded shuffle followed by a floor allocation of the three fractions;
/// the rounding remainder goes to the training split.
pub fn split_dataset<T: Real>(
    data: &Dataset<T>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>, Dataset<T>)> {
    let (ft, fc, fe) = fractions;
    if !(ft > 0.0 && fc > 0.0 && fe > 0.0) || ((ft + fc + fe) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    if data.is_empty() {
        return Err(Error::Empty("dataset to split"));
    }
    let n = data.len();
    let floor = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
    let (n_cal, n_test) = (floor(fc), floor(fe));
    let n_train = n - n_cal - n_test;
    for (name, size) in [("train", n_train), ("calibration", n_cal), ("test", n_test)] {
        if size == 0 {
            return Err(Error::InvalidArgument(format!("{name} split is empty for {n} samples")));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut random::stream(seed, 0));
    let take = |idx: &[usize], role| Dataset::new(idx.iter().map(|&i| data.samples[i].clone()).collect(), role);
    Ok((
        take(&order[..n_train], Role::Train)?,
        take(&order[n_train..n_train + n_cal], Role::Calibration)?,
        take(&order[n_train + n_cal..], Role::Test)?,
    ))
}

/// Closed interval `[lo, hi]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, y: T) -> bool {
        self.lo <= y && y <= self.hi
    }

    pub fn length(&self) -> T {
        self.hi - self.lo
    }
}

/// A deterministic map `(x, y) → s(x, y)`.
pub trait NonconformityScore<T: Real>: Send + Sync {
    fn evaluate(&self, x: &[T], y: &[T]) -> Result<T>;

    /// The sublevel set `{y : s(x, y) ≤ threshold}` as disjoint intervals
    /// when the outcome is one-dimensional.
    fn sublevel_intervals(&self, _x: &[T], _threshold: Threshold<T>) -> Result<Vec<Interval<T>>> {
        Err(Error::UnsupportedScore("interval extraction"))
    }

    fn describe(&self) -> String;
}

/// Conditional density of the outcome, used by the negative-density score.
pub trait ResponseDensity<T: Real>: Send + Sync {
    fn density(&self, x: &[T], y: &[T]) -> Result<T>;

    /// Superlevel set `{y : p(y|x) ≥ level}` for 1-D outcomes, when known.
    fn superlevel_intervals(&self, _x: &[T], _level: T) -> Option<Vec<Interval<T>>> {
        None
    }
}

pub type Predictor<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// `|y − f̂(x)|`
    AbsoluteResidual,
    /// `y − f̂(x)`
    RawResponse,
    /// `−p̂(y|x)`
    NegativeDensity,
    /// `‖D⁻¹(y − f̂(x))‖_∞`
    ScaledLinfResidual,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::AbsoluteResidual => "absolute_residual",
            ScoreKind::RawResponse => "raw_response",
            ScoreKind::NegativeDensity => "negative_density",
            ScoreKind::ScaledLinfResidual => "scaled_linf_residual",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "absolute_residual" | "abs" => ScoreKind::AbsoluteResidual,
            "raw_response" | "raw" => ScoreKind::RawResponse,
            "negative_density" | "neg_density" => ScoreKind::NegativeDensity,
            "scaled_linf_residual" | "linf" => ScoreKind::ScaledLinfResidual,
            other => return Err(Error::Parse(format!("unknown score kind `{other}`"))),
        })
    }
}

/// One of the base nonconformity scores.
///
/// The point predictor is a frozen black box supplied by the caller; when
/// absent the residual is taken against zero.
#[derive(Clone)]
pub struct ScoreFunction<T: Real> {
    kind: ScoreKind,
    predictor: Option<Predictor<T>>,
    scale: Option<Vec<T>>,
    density: Option<Arc<dyn ResponseDensity<T>>>,
}

impl<T: Real> fmt::Debug for ScoreFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoreFunction")
            .field("kind", &self.kind)
            .field("predictor", &self.predictor.is_some())
            .field("scale", &self.scale)
            .field("density", &self.density.is_some())
            .finish()
    }
}

impl<T: Real> ScoreFunction<T> {
    pub fn absolute_residual() -> Self {
        Self::bare(ScoreKind::AbsoluteResidual)
    }

    pub fn raw_response() -> Self {
        Self::bare(ScoreKind::RawResponse)
    }

    pub fn negative_density(density: Arc<dyn ResponseDensity<T>>) -> Self {
        Self {
            density: Some(density),
            ..Self::bare(ScoreKind::NegativeDensity)
        }
    }

    pub fn scaled_linf_residual(predictor: Predictor<T>, scale: Vec<T>) -> Result<Self> {
        if scale.is_empty() || scale.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::InvalidArgument(
                "scaled_linf_residual needs a positive finite scale vector".into(),
            ));
        }
        Ok(Self {
            predictor: Some(predictor),
            scale: Some(scale),
            ..Self::bare(ScoreKind::ScaledLinfResidual)
        })
    }

    /// Attaches a point predictor to a residual score.
    pub fn with_predictor(mut self, predictor: Predictor<T>) -> Self {
        self.predictor = Some(predictor);
        self
    }

    fn bare(kind: ScoreKind) -> Self {
        Self {
            kind,
            predictor: None,
            scale: None,
            density: None,
        }
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    fn prediction(&self, x: &[T], d: usize) -> Result<Vec<T>> {
        match &self.predictor {
            Some(f) => {
                let pred = f(x);
                if pred.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "prediction",
                        expected: d,
                        got: pred.len(),
                    });
                }
                Ok(pred)
            }
            None => Ok(vec![T::zero(); d]),
        }
    }

    fn require_scalar(&self, y: &[T]) -> Result<()> {
        if y.len() != 1 {
            return Err(Error::DimensionMismatch {
                what: "outcome",
                expected: 1,
                got: y.len(),
            });
        }
        Ok(())
    }
}

impl<T: Real> NonconformityScore<T> for ScoreFunction<T> {
    fn evaluate(&self, x: &[T], y: &[T]) -> Result<T> {
        let value = match self.kind {
            ScoreKind::AbsoluteResidual => {
                self.require_scalar(y)?;
                (y[0] - self.prediction(x, 1)?[0]).abs()
            }
            ScoreKind::RawResponse => {
                self.require_scalar(y)?;
                y[0] - self.prediction(x, 1)?[0]
            }
            ScoreKind::NegativeDensity => {
                let density = self
                    .density
                    .as_ref()
                    .ok_or(Error::UnsupportedScore("negative_density without a density"))?;
                -density.density(x, y)?
            }
            ScoreKind::ScaledLinfResidual => {
                let scale = self
                    .scale
                    .as_ref()
                    .ok_or(Error::UnsupportedScore("scaled_linf_residual without a scale"))?;
                if y.len() != scale.len() {
                    return Err(Error::DimensionMismatch {
                        what: "outcome",
                        expected: scale.len(),
                        got: y.len(),
                    });
                }
                let pred = self.prediction(x, y.len())?;
                y.iter()
                    .zip(&pred)
                    .zip(scale)
                    .map(|((&yi, &pi), &di)| ((yi - pi) / di).abs())
                    .fold(T::zero(), T::max)
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFinite("score value"));
        }
        Ok(value)
    }

    fn sublevel_intervals(&self, x: &[T], threshold: Threshold<T>) -> Result<Vec<Interval<T>>> {
        let t = match threshold {
            Threshold::Infinite => {
                return Ok(vec![Interval::new(T::neg_infinity(), T::infinity())]);
            }
            Threshold::Finite(t) => t,
        };
        match self.kind {
            ScoreKind::AbsoluteResidual => {
                if t < T::zero() {
                    return Ok(Vec::new());
                }
                let c = self.prediction(x, 1)?[0];
                Ok(vec![Interval::new(c - t, c + t)])
            }
            ScoreKind::RawResponse => {
                let c = self.prediction(x, 1)?[0];
                Ok(vec![Interval::new(T::neg_infinity(), c + t)])
            }
            ScoreKind::NegativeDensity => {
                if t >= T::zero() {
                    return Ok(vec![Interval::new(T::neg_infinity(), T::infinity())]);
                }
                self.density
                    .as_ref()
                    .and_then(|d| d.superlevel_intervals(x, -t))
                    .ok_or(Error::UnsupportedScore("negative_density"))
            }
            ScoreKind::ScaledLinfResidual => {
                let scale = self.scale.as_ref().expect("validated at construction");
                if scale.len() != 1 {
                    return Err(Error::UnsupportedScore("multivariate scaled_linf_residual"));
                }
                if t < T::zero() {
                    return Ok(Vec::new());
                }
                let c = self.prediction(x, 1)?[0];
                Ok(vec![Interval::new(c - t * scale[0], c + t * scale[0])])
            }
        }
    }

    fn describe(&self) -> String {
        self.kind.name().to_string()
    }
}
