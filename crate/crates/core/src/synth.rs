//! Synthetic data with closed-form oracles.
//!
//! * `laplace_het`: `X ~ Unif(0,1)`, `Y | x ~ Laplace(0, 1/(x+1))`, so the
//!   absolute score is `Exp(x+1)` given `x`.
//! * `candy_gaussian`: `X ~ Unif(−1,1)`, `Y | x ~ N(0, σ(x)²)` with
//!   `σ(x) = |1 − 2x²| + 1/10`.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{OracleFamily, OracleModel};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::random;
use crate::real::{normal_cdf, normal_pdf, normal_quantile};
use crate::scores::{Dataset, Interval, LabeledSample, ResponseDensity, Role, ScoreKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    LaplaceHet,
    CandyGaussian,
}

impl std::fmt::Display for DgpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DgpKind::LaplaceHet => "laplace_het",
            DgpKind::CandyGaussian => "candy_gaussian",
        })
    }
}

impl std::str::FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace_het" => Ok(DgpKind::LaplaceHet),
            "candy_gaussian" | "candy" => Ok(DgpKind::CandyGaussian),
            other => Err(Error::Parse(format!("unknown data-generating process `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub seed: u64,
}

impl DgpSpec {
    pub fn laplace_het(seed: u64) -> Self {
        Self {
            kind: DgpKind::LaplaceHet,
            seed,
        }
    }

    pub fn candy_gaussian(seed: u64) -> Self {
        Self {
            kind: DgpKind::CandyGaussian,
            seed,
        }
    }

    /// Support of the feature.
    pub fn feature_range(&self) -> (f64, f64) {
        match self.kind {
            DgpKind::LaplaceHet => (0.0, 1.0),
            DgpKind::CandyGaussian => (-1.0, 1.0),
        }
    }
}

/// Noise scale of the candy model.
pub fn candy_sigma(x: f64) -> f64 {
    (1.0 - 2.0 * x * x).abs() + 0.1
}

/// Rate of `|Y|` given `x` in the Laplace model.
pub fn laplace_rate(x: f64) -> f64 {
    x + 1.0
}

/// One `(x, y)` draw by inverse-CDF sampling.
pub fn draw_point(kind: DgpKind, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u = random::open_unit(rng);
    let v = random::open_unit(rng);
    match kind {
        DgpKind::LaplaceHet => {
            let x = u;
            let b = 1.0 / laplace_rate(x);
            let y = if v < 0.5 {
                b * (2.0 * v).ln()
            } else {
                -b * (2.0 * (1.0 - v)).ln()
            };
            (x, y)
        }
        DgpKind::CandyGaussian => {
            let x = 2.0 * u - 1.0;
            (x, candy_sigma(x) * normal_quantile(v))
        }
    }
}

/// `n` i.i.d. draws from stream 0 of the spec's seed, tagged as training data.
pub fn sample(spec: &DgpSpec, n: usize) -> Result<Dataset<f64>> {
    sample_stream(spec, n, 0, Role::Train)
}

/// `n` i.i.d. draws from stream `stream`; distinct streams are independent.
pub fn sample_stream(spec: &DgpSpec, n: usize, stream: u64, role: Role) -> Result<Dataset<f64>> {
    if n == 0 {
        return Err(Error::Empty("sample size"));
    }
    let mut rng = random::stream(spec.seed, stream);
    let samples = (0..n)
        .map(|_| {
            let (x, y) = draw_point(spec.kind, &mut rng);
            LabeledSample::scalar(x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, role)
}

fn require_abs(score: ScoreKind) -> Result<()> {
    if score == ScoreKind::AbsoluteResidual {
        Ok(())
    } else {
        Err(Error::UnsupportedScore("oracle score CDF is closed-form for |y| only"))
    }
}

/// `F_{S|X=x}(t)` for the base score `|y|`.
pub fn oracle_score_cdf(spec: &DgpSpec, score: ScoreKind, x: f64, t: f64) -> Result<f64> {
    require_abs(score)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    Ok(match spec.kind {
        DgpKind::LaplaceHet => -(-laplace_rate(x) * t).exp_m1(),
        DgpKind::CandyGaussian => 2.0 * normal_cdf(t / candy_sigma(x)) - 1.0,
    })
}

/// Marginal `F_S(t)` of the base score `|y|`.
pub fn oracle_marginal_cdf(spec: &DgpSpec, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match spec.kind {
        DgpKind::LaplaceHet => {
            if t < 1e-4 {
                t * (1.5 - t * (7.0 / 6.0 - t * 5.0 / 8.0))
            } else {
                1.0 - ((-t).exp() - (-2.0 * t).exp()) / t
            }
        }
        DgpKind::CandyGaussian => {
            // symmetric in x; the kink of σ sits at 1/√2
            let f = |x: f64| 2.0 * normal_cdf(t / candy_sigma(x)) - 1.0;
            let k = std::f64::consts::FRAC_1_SQRT_2;
            quadrature::integrate(f, 0.0, k, 1e-9) + quadrature::integrate(f, k, 1.0, 1e-9)
        }
    }
}

/// Exact conditional model of a base score.
pub fn oracle_model(spec: &DgpSpec, score: ScoreKind) -> Result<OracleModel<f64>> {
    let sigma = |x: &[f64]| candy_sigma(x[0]);
    match (spec.kind, score) {
        (DgpKind::LaplaceHet, ScoreKind::AbsoluteResidual) => {
            Ok(OracleModel::new(OracleFamily::ExponentialRate, |x: &[f64]| {
                laplace_rate(x[0])
            }))
        }
        (DgpKind::CandyGaussian, ScoreKind::AbsoluteResidual) => {
            Ok(OracleModel::new(OracleFamily::HalfNormalScale, sigma))
        }
        (DgpKind::CandyGaussian, ScoreKind::RawResponse) => Ok(OracleModel::new(OracleFamily::NormalScale, sigma)),
        (DgpKind::CandyGaussian, ScoreKind::NegativeDensity) => {
            Ok(OracleModel::new(OracleFamily::NegativeNormalDensity, sigma))
        }
        _ => Err(Error::UnsupportedScore("no oracle model for this score and process")),
    }
}

/// The candy model's response density `N(0, σ(x)²)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CandyDensity;

impl CandyDensity {
    pub fn shared() -> Arc<dyn ResponseDensity<f64>> {
        Arc::new(CandyDensity)
    }
}

impl ResponseDensity<f64> for CandyDensity {
    fn density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let s = candy_sigma(x[0]);
        Ok(normal_pdf(y[0] / s) / s)
    }

    fn superlevel_intervals(&self, x: &[f64], level: f64) -> Option<Vec<Interval<f64>>> {
        let s = candy_sigma(x[0]);
        if level <= 0.0 {
            return Some(vec![Interval::new(f64::NEG_INFINITY, f64::INFINITY)]);
        }
        let peak = normal_pdf(0.0) / s;
        if level > peak {
            return Some(Vec::new());
        }
        let half = s * (2.0 * (peak / level).ln()).sqrt();
        Some(vec![Interval::new(-half, half)])
    }
}

/// Laplace-model density of `Y` given `x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LaplaceDensity;

impl ResponseDensity<f64> for LaplaceDensity {
    fn density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let r = laplace_rate(x[0]);
        Ok(0.5 * r * (-r * y[0].abs()).exp())
    }

    fn superlevel_intervals(&self, x: &[f64], level: f64) -> Option<Vec<Interval<f64>>> {
        let r = laplace_rate(x[0]);
        if level <= 0.0 {
            return Some(vec![Interval::new(f64::NEG_INFINITY, f64::INFINITY)]);
        }
        if level > 0.5 * r {
            return Some(Vec::new());
        }
        let half = (0.5 * r / level).ln() / r;
        Some(vec![Interval::new(-half, half)])
    }
}

/// Samples `(x, y)` pairs into separate vectors; a convenience for
/// Monte-Carlo loops that do not need a [`Dataset`].
pub fn draw_many(kind: DgpKind, rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n).map(|_| draw_point(kind, rng)).unzip()
}

/// Uniform feature draw for the process.
pub fn draw_feature(kind: DgpKind, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    match kind {
        DgpKind::LaplaceHet => u,
        DgpKind::CandyGaussian => 2.0 * u - 1.0,
    }
}
