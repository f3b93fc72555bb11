//! Conditional monotone rational-quadratic spline flow for a scalar score.
//!
//! The score is first mapped affinely onto `ξ ∈ [0, 1]` using the fitted
//! range `[s_lo, s_hi]`. Inside that interval a `K`-bin rational-quadratic
//! spline maps `ξ` onto `z ∈ [0, 1]`; outside it the map continues affinely
//! with the boundary derivative (fixed to 1). `z` is the flow latent value.
//!
//! The base distribution is uniform on `[0, 1]` with exponential tails of
//! mass [`TAIL_MASS`] on each side, so the CDF
//! `G(z) = τ + (1 − 2τ) z` on `[0, 1]` is the conditional CDF of the score
//! and stays strictly increasing on the whole line.

use serde::{Deserialize, Serialize};

use super::{
    check_unit_open, ConditionalScoreModel, DensityHead, FeatureScaler, ModelDocument, TrainableDensity, Variant,
    DENSITY_FLOOR,
};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::real::{sigmoid, softmax, softplus, Real};
use crate::scores::Dataset;

/// Probability mass of each exponential tail of the base distribution.
pub const TAIL_MASS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFlowConfig {
    pub bins: usize,
    pub hidden: Vec<usize>,
    pub min_bin_width: f64,
    pub min_bin_height: f64,
    pub min_derivative: f64,
    /// Fraction of the observed score range added on each side.
    pub range_padding: f64,
}

impl Default for SplineFlowConfig {
    fn default() -> Self {
        Self {
            bins: 8,
            hidden: vec![32, 32],
            min_bin_width: 1e-3,
            min_bin_height: 1e-3,
            min_derivative: 1e-4,
            range_padding: 0.05,
        }
    }
}

/// Decodes `3K − 1` network outputs into spline knots: `K` width logits,
/// `K` height logits and `K − 1` interior derivative pre-activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineHead {
    pub bins: usize,
    pub min_bin_width: f64,
    pub min_bin_height: f64,
    pub min_derivative: f64,
}

/// Knot positions, values and derivatives of one spline, all in
/// normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineKnots<T> {
    pub xs: Vec<T>,
    pub ys: Vec<T>,
    pub derivatives: Vec<T>,
    width_softmax: Vec<T>,
    height_softmax: Vec<T>,
}

/// Per-bin quantities of the rational-quadratic map at one point.
struct BinEval<T> {
    bin: usize,
    w: T,
    h: T,
    slope: T,
    t: T,
    d0: T,
    d1: T,
    den: T,
    num_deriv: T,
}

impl SplineHead {
    pub fn outputs(&self) -> usize {
        3 * self.bins - 1
    }

    /// Shift making a zero pre-activation decode to derivative exactly 1.
    fn derivative_shift(&self) -> f64 {
        (1.0 - self.min_derivative).exp_m1().ln()
    }

    pub fn knots<T: Real>(&self, out: &[T]) -> SplineKnots<T> {
        let k = self.bins;
        let width_softmax = softmax(&out[..k]);
        let height_softmax = softmax(&out[k..2 * k]);
        let cumulative = |sm: &[T], min: f64| {
            let (min, rest) = (T::lit(min), T::one() - T::lit(min * k as f64));
            let mut knots = Vec::with_capacity(k + 1);
            knots.push(T::zero());
            let mut acc = T::zero();
            for &p in &sm[..k - 1] {
                acc = acc + min + rest * p;
                knots.push(acc);
            }
            knots.push(T::one());
            knots
        };
        let shift = T::lit(self.derivative_shift());
        let mut derivatives = Vec::with_capacity(k + 1);
        derivatives.push(T::one());
        for &c in &out[2 * k..3 * k - 1] {
            derivatives.push(T::lit(self.min_derivative) + softplus(c + shift));
        }
        derivatives.push(T::one());
        SplineKnots {
            xs: cumulative(&width_softmax, self.min_bin_width),
            ys: cumulative(&height_softmax, self.min_bin_height),
            derivatives,
            width_softmax,
            height_softmax,
        }
    }

    /// Gradient of `ln(dz/dξ)` at a point inside `[0, 1]` with respect to
    /// the raw head outputs, written into `grad`.
    fn log_derivative_gradient<T: Real>(&self, out: &[T], knots: &SplineKnots<T>, e: &BinEval<T>, grad: &mut [T]) {
        let k = self.bins;
        let two = T::lit(2.0);
        let (s, t, d0, d1) = (e.slope, e.t, e.d0, e.d1);
        let tt = t * (T::one() - t);
        let (nd, den) = (e.num_deriv, e.den);

        let dl_ds = two / s + two * tt / nd - two * (T::one() - two * tt) / den;
        let dl_dt = (two * d1 * t + two * s * (T::one() - two * t) - two * d0 * (T::one() - t)) / nd
            - two * (d0 + d1 - two * s) * (T::one() - two * t) / den;
        let dl_dd0 = (T::one() - t) * (T::one() - t) / nd - two * tt / den;
        let dl_dd1 = t * t / nd - two * tt / den;

        // w = X_{b+1} − X_b, t = (ξ − X_b)/w, s = h/w, h = Y_{b+1} − Y_b
        let dl_dw = dl_ds * (-s / e.w) + dl_dt * (-t / e.w);
        let dl_dh = dl_ds / e.w;
        let mut g_x = vec![T::zero(); k + 1];
        g_x[e.bin + 1] = g_x[e.bin + 1] + dl_dw;
        g_x[e.bin] = g_x[e.bin] - dl_dw - dl_dt / e.w;
        let mut g_y = vec![T::zero(); k + 1];
        g_y[e.bin + 1] = g_y[e.bin + 1] + dl_dh;
        g_y[e.bin] = g_y[e.bin] - dl_dh;

        // Interior knots X_i = Σ_{j<i} W_j for 1 ≤ i ≤ K−1; X_0, X_K fixed.
        let back_to_logits = |g_knots: &[T], sm: &[T], min: f64, dst: &mut [T]| {
            let rest = T::one() - T::lit(min * k as f64);
            let mut g_w = vec![T::zero(); k];
            let mut suffix = T::zero();
            for i in (1..k).rev() {
                suffix = suffix + g_knots[i];
                g_w[i - 1] = suffix;
            }
            let mean: T = sm.iter().zip(&g_w).map(|(&p, &g)| p * g).sum();
            for j in 0..k {
                dst[j] = rest * sm[j] * (g_w[j] - mean);
            }
        };
        back_to_logits(&g_x, &knots.width_softmax, self.min_bin_width, &mut grad[..k]);
        back_to_logits(&g_y, &knots.height_softmax, self.min_bin_height, &mut grad[k..2 * k]);

        let shift = T::lit(self.derivative_shift());
        grad[2 * k..3 * k - 1].iter_mut().for_each(|g| *g = T::zero());
        for (idx, dl) in [(e.bin, dl_dd0), (e.bin + 1, dl_dd1)] {
            if idx >= 1 && idx <= k - 1 {
                let c = out[2 * k + idx - 1];
                grad[2 * k + idx - 1] = grad[2 * k + idx - 1] + dl * sigmoid(c + shift);
            }
        }
    }
}

fn locate<T: Real>(knots: &[T], v: T) -> usize {
    let k = knots.len() - 1;
    // first index with knots[i] > v, minus one, clamped to a valid bin
    let upper = knots.partition_point(|&kn| kn <= v);
    upper.saturating_sub(1).min(k - 1)
}

impl<T: Real> SplineKnots<T> {
    pub fn bins(&self) -> usize {
        self.xs.len() - 1
    }

    fn eval_bin(&self, xi: T) -> BinEval<T> {
        let bin = locate(&self.xs, xi);
        let w = self.xs[bin + 1] - self.xs[bin];
        let h = self.ys[bin + 1] - self.ys[bin];
        let slope = h / w;
        let t = ((xi - self.xs[bin]) / w).max(T::zero()).min(T::one());
        let (d0, d1) = (self.derivatives[bin], self.derivatives[bin + 1]);
        let tt = t * (T::one() - t);
        let den = slope + (d0 + d1 - T::lit(2.0) * slope) * tt;
        let num_deriv = d1 * t * t + T::lit(2.0) * slope * tt + d0 * (T::one() - t) * (T::one() - t);
        BinEval {
            bin,
            w,
            h,
            slope,
            t,
            d0,
            d1,
            den,
            num_deriv,
        }
    }

    /// `(z, dz/dξ)` with affine continuation outside `[0, 1]`.
    pub fn forward(&self, xi: T) -> (T, T) {
        let k = self.bins();
        if xi < T::zero() {
            return (self.derivatives[0] * xi, self.derivatives[0]);
        }
        if xi > T::one() {
            return (T::one() + self.derivatives[k] * (xi - T::one()), self.derivatives[k]);
        }
        let e = self.eval_bin(xi);
        let z = self.ys[e.bin] + e.h * (e.slope * e.t * e.t + e.d0 * e.t * (T::one() - e.t)) / e.den;
        let dz = e.slope * e.slope * e.num_deriv / (e.den * e.den);
        (z, dz)
    }

    /// Inverse of [`forward`](Self::forward), solving the per-bin quadratic.
    pub fn inverse(&self, z: T) -> T {
        let k = self.bins();
        if z < T::zero() {
            return z / self.derivatives[0];
        }
        if z > T::one() {
            return T::one() + (z - T::one()) / self.derivatives[k];
        }
        let bin = locate(&self.ys, z);
        let w = self.xs[bin + 1] - self.xs[bin];
        let h = self.ys[bin + 1] - self.ys[bin];
        let s = h / w;
        let (d0, d1) = (self.derivatives[bin], self.derivatives[bin + 1]);
        let delta = z - self.ys[bin];
        let sum = d0 + d1 - T::lit(2.0) * s;
        let a = h * (s - d0) + delta * sum;
        let b = h * d0 - delta * sum;
        let c = -s * delta;
        let disc = (b * b - T::lit(4.0) * a * c).max(T::zero());
        let denom = -b - disc.sqrt();
        let t = if denom == T::zero() {
            T::zero()
        } else {
            (T::lit(2.0) * c / denom).max(T::zero()).min(T::one())
        };
        self.xs[bin] + t * w
    }
}

/// `G(z)`: CDF of the tailed uniform base distribution.
fn base_cdf<T: Real>(z: T) -> T {
    let tau = T::lit(TAIL_MASS);
    if z < T::zero() {
        tau * z.exp()
    } else if z > T::one() {
        T::one() - tau * (T::one() - z).exp()
    } else {
        tau + (T::one() - T::lit(2.0) * tau) * z
    }
}

fn base_log_density<T: Real>(z: T) -> T {
    let tau = T::lit(TAIL_MASS);
    if z < T::zero() {
        tau.ln() + z
    } else if z > T::one() {
        tau.ln() + (T::one() - z)
    } else {
        (T::one() - T::lit(2.0) * tau).ln()
    }
}

fn base_quantile<T: Real>(u: T) -> T {
    let tau = T::lit(TAIL_MASS);
    if u < tau {
        (u / tau).ln()
    } else if u > T::one() - tau {
        T::one() - ((T::one() - u) / tau).ln()
    } else {
        (u - tau) / (T::one() - T::lit(2.0) * tau)
    }
}

impl<T: Real> DensityHead<T> for SplineHead {
    /// `target` is the normalized score `ξ`.
    fn nll(&self, out: &[T], target: T, grad: &mut [T]) -> T {
        let knots = self.knots(out);
        if target < T::zero() || target > T::one() {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let (z, dz) = knots.forward(target);
            return -(base_log_density(z) + dz.ln());
        }
        let e = knots.eval_bin(target);
        let dz = e.slope * e.slope * e.num_deriv / (e.den * e.den);
        self.log_derivative_gradient(out, &knots, &e, grad);
        grad.iter_mut().for_each(|g| *g = -*g);
        -(base_log_density(T::lit(0.5)) + dz.ln())
    }
}

/// Conditional spline flow `z = f(s | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineFlowModel<T> {
    trunk: Mlp<T>,
    head: SplineHead,
    features: FeatureScaler<T>,
    s_lo: T,
    s_hi: T,
    trained_on: Option<u64>,
}

impl<T: Real> SplineFlowModel<T> {
    /// Flow on `[s_lo, s_hi]`. The output layer starts at zero, which
    /// decodes to the identity spline.
    pub fn new(config: &SplineFlowConfig, features: FeatureScaler<T>, range: (T, T), seed: u64) -> Result<Self> {
        let (s_lo, s_hi) = range;
        if !(s_hi > s_lo) || !s_lo.is_finite() || !s_hi.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid spline range [{s_lo}, {s_hi}]")));
        }
        if config.bins < 2
            || config.min_bin_width * config.bins as f64 >= 1.0
            || config.min_bin_height * config.bins as f64 >= 1.0
            || !(config.min_derivative > 0.0 && config.min_derivative < 1.0)
        {
            return Err(Error::InvalidArgument(format!(
                "invalid spline configuration {config:?}"
            )));
        }
        let head = SplineHead {
            bins: config.bins,
            min_bin_width: config.min_bin_width,
            min_bin_height: config.min_bin_height,
            min_derivative: config.min_derivative,
        };
        let mut sizes = vec![features.mean.len()];
        sizes.extend(&config.hidden);
        sizes.push(head.outputs());
        let mut trunk = Mlp::new(&sizes, seed)?;
        let last = trunk.num_layers() - 1;
        let (w, b) = trunk.layer_mut(last);
        w.iter_mut().for_each(|v| *v = T::zero());
        b.iter_mut().for_each(|v| *v = T::zero());
        Ok(Self {
            trunk,
            head,
            features,
            s_lo,
            s_hi,
            trained_on: None,
        })
    }

    /// Flow whose range is the observed score range padded by
    /// `config.range_padding` on each side, with standardized features.
    pub fn for_training(config: &SplineFlowConfig, train: &Dataset<T>, scores: &[T], seed: u64) -> Result<Self> {
        if scores.is_empty() || train.is_empty() {
            return Err(Error::Empty("spline training data"));
        }
        let lo = scores.iter().copied().fold(T::infinity(), T::min);
        let hi = scores.iter().copied().fold(T::neg_infinity(), T::max);
        let span = if hi > lo { hi - lo } else { T::one() };
        let pad = T::lit(config.range_padding) * span;
        let features = FeatureScaler::fit_dataset(train);
        Self::new(config, features, (lo - pad, hi + pad), seed)
    }

    pub fn range(&self) -> (T, T) {
        (self.s_lo, self.s_hi)
    }

    pub fn trunk(&self) -> &Mlp<T> {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp<T> {
        &mut self.trunk
    }

    pub fn head(&self) -> &SplineHead {
        &self.head
    }

    pub fn knots(&self, x: &[T]) -> Result<SplineKnots<T>> {
        let out = self.trunk.forward(&self.features.apply(x)?)?;
        Ok(self.head.knots(&out))
    }

    fn normalize(&self, s: T) -> T {
        (s - self.s_lo) / (self.s_hi - self.s_lo)
    }

    /// `(F̂(s|x), log p̂(s|x))` in one pass.
    pub fn spline_forward(&self, x: &[T], s: T) -> Result<(T, T)> {
        let knots = self.knots(x)?;
        let (z, dz) = knots.forward(self.normalize(s));
        let log_p = base_log_density(z) + dz.ln() - (self.s_hi - self.s_lo).ln();
        Ok((base_cdf(z), log_p.max(T::lit(DENSITY_FLOOR.ln()))))
    }

    /// `F̂⁻¹(u|x)` for `u ∈ (0, 1)`.
    pub fn spline_inverse(&self, x: &[T], u: T) -> Result<T> {
        check_unit_open(u)?;
        self.inverse_latent(x, base_quantile(u))
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            variant: Variant::SplineFlow,
            header: serde_json::json!({
                "bins": self.head.bins,
                "min_bin_width": self.head.min_bin_width,
                "min_bin_height": self.head.min_bin_height,
                "min_derivative": self.head.min_derivative,
                "s_lo": self.s_lo.as_f64(),
                "s_hi": self.s_hi.as_f64(),
                "tail_mass": TAIL_MASS,
            }),
            features: self.features.to_f64(),
            network: self.trunk.to_document(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.variant != Variant::SplineFlow {
            return Err(Error::Parse(format!(
                "expected a spline_flow document, got {}",
                doc.variant
            )));
        }
        #[derive(Deserialize)]
        struct Header {
            bins: usize,
            min_bin_width: f64,
            min_bin_height: f64,
            min_derivative: f64,
            s_lo: f64,
            s_hi: f64,
        }
        let h: Header = serde_json::from_value(doc.header.clone())?;
        let head = SplineHead {
            bins: h.bins,
            min_bin_width: h.min_bin_width,
            min_bin_height: h.min_bin_height,
            min_derivative: h.min_derivative,
        };
        let trunk = Mlp::from_document(&doc.network)?;
        if trunk.output_dim() != head.outputs() {
            return Err(Error::DimensionMismatch {
                what: "spline network outputs",
                expected: head.outputs(),
                got: trunk.output_dim(),
            });
        }
        Ok(Self {
            trunk,
            head,
            features: FeatureScaler::from_f64(&doc.features),
            s_lo: T::lit(h.s_lo),
            s_hi: T::lit(h.s_hi),
            trained_on: None,
        })
    }
}

impl<T: Real> ConditionalScoreModel<T> for SplineFlowModel<T> {
    fn variant(&self) -> Variant {
        Variant::SplineFlow
    }

    fn cdf(&self, x: &[T], s: T) -> Result<T> {
        Ok(base_cdf(self.latent(x, s)?))
    }

    fn log_density(&self, x: &[T], s: T) -> Result<T> {
        Ok(self.spline_forward(x, s)?.1)
    }

    fn inverse_cdf(&self, x: &[T], u: T) -> Result<T> {
        self.spline_inverse(x, u)
    }

    fn latent(&self, x: &[T], s: T) -> Result<T> {
        Ok(self.knots(x)?.forward(self.normalize(s)).0)
    }

    fn inverse_latent(&self, x: &[T], z: T) -> Result<T> {
        let xi = self.knots(x)?.inverse(z);
        Ok(self.s_lo + xi * (self.s_hi - self.s_lo))
    }

    fn training_fingerprint(&self) -> Option<u64> {
        self.trained_on
    }
}

impl<T: Real> TrainableDensity<T> for SplineFlowModel<T> {
    type Head = SplineHead;

    fn network_input(&self, x: &[T]) -> Result<Vec<T>> {
        self.features.apply(x)
    }

    fn head_target(&self, s: T) -> T {
        self.normalize(s)
    }

    fn parts_mut(&mut self) -> (&mut Mlp<T>, &Self::Head) {
        (&mut self.trunk, &self.head)
    }

    fn set_training_fingerprint(&mut self, fingerprint: u64) {
        self.trained_on = Some(fingerprint);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::Rng;

    fn head(bins: usize) -> SplineHead {
        SplineHead {
            bins,
            min_bin_width: 1e-3,
            min_bin_height: 1e-3,
            min_derivative: 1e-4,
        }
    }

    fn random_out(rng: &mut impl Rng, n: usize, spread: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-spread..spread)).collect()
    }

    fn identity_flow() -> SplineFlowModel<f64> {
        SplineFlowModel::new(&SplineFlowConfig::default(), FeatureScaler::identity(1), (-1.0, 3.0), 0).unwrap()
    }

    #[test]
    fn zero_outputs_give_identity_spline() {
        let knots = head(8).knots(&vec![0.0_f64; 23]);
        for i in 0..=100 {
            let xi = i as f64 / 100.0;
            let (z, dz) = knots.forward(xi);
            assert!((z - xi).abs() < 1e-12);
            assert!((dz - 1.0).abs() < 1e-12);
        }
        let flow = identity_flow();
        let u = flow.cdf(&[0.4], 0.0).unwrap();
        assert!((u - 0.25).abs() < 1e-9);
        assert!((flow.spline_inverse(&[0.4], 0.5).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_knot_maps_to_zero() {
        let flow = identity_flow();
        let u = flow.cdf(&[0.0], -1.0).unwrap();
        assert!(u >= 0.0 && u < 1e-9);
        let u = flow.cdf(&[0.0], 3.0).unwrap();
        assert!(u <= 1.0 && u > 1.0 - 1e-9);
    }

    #[test]
    fn forward_inverse_round_trip_random_knots() {
        let mut rng = random::stream(12, 0);
        let h = head(8);
        for _ in 0..200 {
            let knots = h.knots(&random_out(&mut rng, 23, 3.0));
            for _ in 0..20 {
                let xi: f64 = rng.random_range(-0.5..1.5);
                let (z, _) = knots.forward(xi);
                assert!((knots.inverse(z) - xi).abs() < 1e-9, "xi={xi}");
            }
        }
    }

    #[test]
    fn forward_derivative_matches_finite_difference() {
        let mut rng = random::stream(13, 0);
        let h = head(6);
        for _ in 0..50 {
            let knots = h.knots(&random_out(&mut rng, 17, 2.0));
            let xi: f64 = rng.random_range(0.01..0.99);
            let eps = 1e-7;
            let fd = (knots.forward(xi + eps).0 - knots.forward(xi - eps).0) / (2.0 * eps);
            let (_, dz) = knots.forward(xi);
            assert!((fd - dz).abs() < 1e-5 * (1.0 + dz), "{fd} vs {dz}");
        }
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let mut rng = random::stream(14, 0);
        for bins in [2, 3, 8] {
            let h = head(bins);
            let n = h.outputs();
            for _ in 0..30 {
                let out = random_out(&mut rng, n, 1.5);
                let target: f64 = rng.random_range(0.0..1.0);
                let mut grad = vec![0.0; n];
                h.nll(&out, target, &mut grad);
                let mut scratch = vec![0.0; n];
                for i in 0..n {
                    let eps = 1e-6;
                    let mut plus = out.clone();
                    plus[i] += eps;
                    let mut minus = out.clone();
                    minus[i] -= eps;
                    let fd = (h.nll(&plus, target, &mut scratch) - h.nll(&minus, target, &mut scratch)) / (2.0 * eps);
                    assert!(
                        (fd - grad[i]).abs() < 1e-5 * (1.0 + fd.abs()),
                        "bins={bins} i={i} target={target}: {fd} vs {}",
                        grad[i]
                    );
                }
            }
        }
    }

    #[test]
    fn inverse_rejects_out_of_range_probability() {
        let flow = identity_flow();
        assert!(flow.spline_inverse(&[0.0], 0.0).is_err());
        assert!(flow.spline_inverse(&[0.0], 1.0).is_err());
        assert!(flow.spline_inverse(&[0.0], 1.5).is_err());
    }

    #[test]
    fn tails_are_strictly_increasing_in_latent_space() {
        let flow = identity_flow();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..200 {
            let s = -50.0 + i as f64 * 0.5;
            let z = flow.latent(&[0.1], s).unwrap();
            assert!(z > prev);
            prev = z;
        }
        assert!(flow.cdf(&[0.1], -50.0).unwrap() < 1e-6);
        assert!(flow.cdf(&[0.1], 50.0).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn document_round_trip() {
        let mut flow = identity_flow();
        let mut rng = random::stream(3, 0);
        flow.trunk_mut()
            .params_mut()
            .iter_mut()
            .for_each(|p| *p = rng.random_range(-0.5..0.5));
        let doc = flow.to_document();
        let json = serde_json::to_string_pretty(&doc).unwrap();
        let back = SplineFlowModel::<f64>::from_document(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.cdf(&[0.2], 1.1).unwrap(), flow.cdf(&[0.2], 1.1).unwrap());
        assert!(super::super::MdnModel::<f64>::from_document(&doc).is_err());
    }
}
