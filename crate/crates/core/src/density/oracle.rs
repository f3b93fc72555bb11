use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_unit_open, ConditionalScoreModel, Variant};
use crate::error::{Error, Result};
use crate::real::{erf, erf_inv, normal_cdf, normal_pdf, normal_quantile, Real};

/// Closed-form conditional score distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleFamily {
    /// `Exp(λ(x))`; parameter is the rate.
    ExponentialRate,
    /// `|N(0, σ(x)²)|`; parameter is the scale.
    HalfNormalScale,
    /// `N(0, σ(x)²)`; parameter is the scale.
    NormalScale,
    /// Law of `−φ(Y/σ)/σ` for `Y ~ N(0, σ(x)²)`, i.e. the negative density
    /// score of a centered Gaussian; parameter is the scale.
    NegativeNormalDensity,
}

/// Oracle conditional score distribution: a family plus a map from
/// features to its parameter.
#[derive(Clone)]
pub struct OracleModel<T: Real> {
    family: OracleFamily,
    parameter: Arc<dyn Fn(&[T]) -> T + Send + Sync>,
}

impl<T: Real> fmt::Debug for OracleModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleModel").field("family", &self.family).finish()
    }
}

impl<T: Real> OracleModel<T> {
    pub fn new(family: OracleFamily, parameter: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        Self {
            family,
            parameter: Arc::new(parameter),
        }
    }

    pub fn family(&self) -> OracleFamily {
        self.family
    }

    pub fn parameter(&self, x: &[T]) -> Result<T> {
        let p = (self.parameter)(x);
        if p > T::zero() && p.is_finite() {
            Ok(p)
        } else {
            Err(Error::InvalidArgument(format!("oracle parameter {p} must be positive")))
        }
    }
}

impl<T: Real> ConditionalScoreModel<T> for OracleModel<T> {
    fn variant(&self) -> Variant {
        Variant::Oracle
    }

    fn cdf(&self, x: &[T], t: T) -> Result<T> {
        let p = self.parameter(x)?;
        let (zero, one) = (T::zero(), T::one());
        Ok(match self.family {
            OracleFamily::ExponentialRate => {
                if t <= zero {
                    zero
                } else {
                    -(-p * t).exp_m1()
                }
            }
            OracleFamily::HalfNormalScale => {
                if t <= zero {
                    zero
                } else {
                    erf(t / (p * T::SQRT_2()))
                }
            }
            OracleFamily::NormalScale => normal_cdf(t / p),
            OracleFamily::NegativeNormalDensity => {
                let peak = peak_density(p);
                if t <= -peak {
                    zero
                } else if t >= zero {
                    one
                } else {
                    erf((-(-t / peak).ln()).sqrt())
                }
            }
        })
    }

    fn log_density(&self, x: &[T], t: T) -> Result<T> {
        let p = self.parameter(x)?;
        let zero = T::zero();
        Ok(match self.family {
            OracleFamily::ExponentialRate => {
                if t < zero {
                    T::neg_infinity()
                } else {
                    p.ln() - p * t
                }
            }
            OracleFamily::HalfNormalScale => {
                if t < zero {
                    T::neg_infinity()
                } else {
                    (T::lit(2.0) * normal_pdf(t / p) / p).ln()
                }
            }
            OracleFamily::NormalScale => (normal_pdf(t / p) / p).ln(),
            OracleFamily::NegativeNormalDensity => {
                let peak = peak_density(p);
                if t <= -peak || t >= zero {
                    T::neg_infinity()
                } else {
                    // F(t) = erf(a) with a = √(−ln(−t/c)); F'(t) = 1/(√π a c).
                    let a = (-(-t / peak).ln()).sqrt();
                    -(T::PI().sqrt() * a * peak).ln()
                }
            }
        })
    }

    fn inverse_cdf(&self, x: &[T], u: T) -> Result<T> {
        check_unit_open(u)?;
        let p = self.parameter(x)?;
        Ok(match self.family {
            OracleFamily::ExponentialRate => -(-u).ln_1p() / p,
            OracleFamily::HalfNormalScale => p * T::SQRT_2() * erf_inv(u),
            OracleFamily::NormalScale => p * normal_quantile(u),
            OracleFamily::NegativeNormalDensity => {
                let a = erf_inv(u);
                -peak_density(p) * (-(a * a)).exp()
            }
        })
    }
}

/// `1/(σ√(2π))`, the maximum of the `N(0, σ²)` density.
fn peak_density<T: Real>(sigma: T) -> T {
    T::one() / (sigma * T::TAU().sqrt())
}
