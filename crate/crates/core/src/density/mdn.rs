use serde::{Deserialize, Serialize};

use super::{
    check_unit_open, ConditionalScoreModel, DensityHead, FeatureScaler, ModelDocument, TrainableDensity, Variant,
    DENSITY_FLOOR,
};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::real::{log_sum_exp, normal_cdf, sigmoid, softmax, softplus, Real};
use crate::scores::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdnConfig {
    pub components: usize,
    pub hidden: Vec<usize>,
    pub sigma_floor: f64,
}

impl Default for MdnConfig {
    fn default() -> Self {
        Self {
            components: 5,
            hidden: vec![32, 32],
            sigma_floor: 1e-3,
        }
    }
}

/// Decodes `3m` network outputs into mixture weights (softmax), means
/// (identity) and scales (softplus plus a floor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureHead {
    pub components: usize,
    pub sigma_floor: f64,
}

/// Gaussian mixture parameters at one feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams<T> {
    pub weights: Vec<T>,
    pub means: Vec<T>,
    pub scales: Vec<T>,
}

impl MixtureHead {
    fn decode<T: Real>(&self, out: &[T]) -> MixtureParams<T> {
        let m = self.components;
        let floor = T::lit(self.sigma_floor);
        MixtureParams {
            weights: softmax(&out[..m]),
            means: out[m..2 * m].to_vec(),
            scales: out[2 * m..3 * m].iter().map(|&r| floor + softplus(r)).collect(),
        }
    }
}

impl<T: Real> DensityHead<T> for MixtureHead {
    fn nll(&self, out: &[T], target: T, grad: &mut [T]) -> T {
        let m = self.components;
        let p = self.decode(out);
        let half_log_tau = T::lit(0.5) * T::TAU().ln();
        let logs: Vec<T> = (0..m)
            .map(|j| {
                let z = (target - p.means[j]) / p.scales[j];
                p.weights[j].ln() - half_log_tau - p.scales[j].ln() - T::lit(0.5) * z * z
            })
            .collect();
        let total = log_sum_exp(&logs);
        for j in 0..m {
            let resp = (logs[j] - total).exp();
            let (mu, sigma) = (p.means[j], p.scales[j]);
            let r = target - mu;
            grad[j] = p.weights[j] - resp;
            grad[m + j] = -resp * r / (sigma * sigma);
            let d_sigma = -resp * (r * r / (sigma * sigma * sigma) - T::one() / sigma);
            grad[2 * m + j] = d_sigma * sigmoid(out[2 * m + j]);
        }
        -total
    }
}

/// Mixture density network over a standardized score.
#[derive(Debug, Clone, PartialEq)]
pub struct MdnModel<T> {
    trunk: Mlp<T>,
    head: MixtureHead,
    features: FeatureScaler<T>,
    score_shift: T,
    score_scale: T,
    trained_on: Option<u64>,
}

impl<T: Real> MdnModel<T> {
    /// Network with `3m` outputs; score and features are standardized with
    /// the given statistics.
    pub fn new(
        config: &MdnConfig,
        features: FeatureScaler<T>,
        score_shift: T,
        score_scale: T,
        seed: u64,
    ) -> Result<Self> {
        if config.components == 0 || !(config.sigma_floor > 0.0) {
            return Err(Error::InvalidArgument(
                "mixture needs ≥ 1 component and a positive scale floor".into(),
            ));
        }
        if !(score_scale > T::zero()) {
            return Err(Error::InvalidArgument("score scale must be positive".into()));
        }
        let mut sizes = vec![features.mean.len()];
        sizes.extend(&config.hidden);
        sizes.push(3 * config.components);
        let mut trunk = Mlp::new(&sizes, seed)?;
        // Spread the initial means so components do not start identical.
        let last = trunk.num_layers() - 1;
        let m = config.components;
        let (w, b) = trunk.layer_mut(last);
        w.iter_mut().for_each(|v| *v = *v * T::lit(0.1));
        for j in 0..m {
            let spread = if m > 1 {
                -1.5 + 3.0 * j as f64 / (m - 1) as f64
            } else {
                0.0
            };
            b[m + j] = T::lit(spread);
            b[2 * m + j] = T::lit(0.0);
        }
        Ok(Self {
            trunk,
            head: MixtureHead {
                components: config.components,
                sigma_floor: config.sigma_floor,
            },
            features,
            score_shift,
            score_scale,
            trained_on: None,
        })
    }

    /// Model whose standardization is fitted to `train` and its scores.
    pub fn for_training(config: &MdnConfig, train: &Dataset<T>, scores: &[T], seed: u64) -> Result<Self> {
        if scores.is_empty() || train.is_empty() {
            return Err(Error::Empty("mixture training data"));
        }
        let features = FeatureScaler::fit_dataset(train);
        let n = T::from_len(scores.len());
        let mean = scores.iter().copied().sum::<T>() / n;
        let var = scores.iter().map(|&s| (s - mean) * (s - mean)).sum::<T>() / n;
        let sd = if var.sqrt() > T::lit(1e-12) {
            var.sqrt()
        } else {
            T::one()
        };
        Self::new(config, features, mean, sd, seed)
    }

    /// Fixed mixture, independent of the features (for tests and oracles).
    pub fn constant(feature_dim: usize, weights: &[f64], means: &[f64], scales: &[f64]) -> Result<Self> {
        let m = weights.len();
        if means.len() != m || scales.len() != m || m == 0 {
            return Err(Error::InvalidArgument("mixture parameter lengths differ".into()));
        }
        if weights.iter().any(|&w| w < 0.0) || scales.iter().any(|&s| s <= 1e-3) {
            return Err(Error::InvalidArgument("weights ≥ 0 and scales > floor required".into()));
        }
        let config = MdnConfig {
            components: m,
            hidden: vec![],
            sigma_floor: 1e-3,
        };
        let mut model = Self::new(&config, FeatureScaler::identity(feature_dim), T::zero(), T::one(), 0)?;
        let (w, b) = model.trunk.layer_mut(0);
        w.iter_mut().for_each(|v| *v = T::zero());
        for j in 0..m {
            b[j] = if weights[j] > 0.0 {
                T::lit(weights[j].ln())
            } else {
                T::lit(-1e4)
            };
            b[m + j] = T::lit(means[j]);
            // inverse softplus of (σ − floor)
            let target = scales[j] - 1e-3;
            b[2 * m + j] = T::lit(target.exp_m1().ln());
        }
        Ok(model)
    }

    pub fn components(&self) -> usize {
        self.head.components
    }

    pub fn trunk(&self) -> &Mlp<T> {
        &self.trunk
    }

    /// Mixture parameters in the original score units.
    pub fn mixture(&self, x: &[T]) -> Result<MixtureParams<T>> {
        let out = self.trunk.forward(&self.features.apply(x)?)?;
        let mut p = self.head.decode(&out);
        p.means
            .iter_mut()
            .for_each(|mu| *mu = self.score_shift + self.score_scale * *mu);
        p.scales.iter_mut().for_each(|s| *s = *s * self.score_scale);
        Ok(p)
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            variant: Variant::Mdn,
            header: serde_json::json!({
                "components": self.head.components,
                "sigma_floor": self.head.sigma_floor,
                "score_shift": self.score_shift.as_f64(),
                "score_scale": self.score_scale.as_f64(),
            }),
            features: self.features.to_f64(),
            network: self.trunk.to_document(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.variant != Variant::Mdn {
            return Err(Error::Parse(format!("expected an mdn document, got {}", doc.variant)));
        }
        #[derive(Deserialize)]
        struct Header {
            components: usize,
            sigma_floor: f64,
            score_shift: f64,
            score_scale: f64,
        }
        let h: Header = serde_json::from_value(doc.header.clone())?;
        let trunk = Mlp::from_document(&doc.network)?;
        if trunk.output_dim() != 3 * h.components {
            return Err(Error::DimensionMismatch {
                what: "mixture network outputs",
                expected: 3 * h.components,
                got: trunk.output_dim(),
            });
        }
        Ok(Self {
            trunk,
            head: MixtureHead {
                components: h.components,
                sigma_floor: h.sigma_floor,
            },
            features: FeatureScaler::from_f64(&doc.features),
            score_shift: T::lit(h.score_shift),
            score_scale: T::lit(h.score_scale),
            trained_on: None,
        })
    }
}

impl<T: Real> ConditionalScoreModel<T> for MdnModel<T> {
    fn variant(&self) -> Variant {
        Variant::Mdn
    }

    fn cdf(&self, x: &[T], s: T) -> Result<T> {
        let p = self.mixture(x)?;
        let value: T = (0..p.weights.len())
            .map(|j| p.weights[j] * normal_cdf((s - p.means[j]) / p.scales[j]))
            .sum();
        Ok(value.max(T::zero()).min(T::one()))
    }

    fn log_density(&self, x: &[T], s: T) -> Result<T> {
        let p = self.mixture(x)?;
        let half_log_tau = T::lit(0.5) * T::TAU().ln();
        let logs: Vec<T> = (0..p.weights.len())
            .map(|j| {
                let z = (s - p.means[j]) / p.scales[j];
                p.weights[j].ln() - half_log_tau - p.scales[j].ln() - T::lit(0.5) * z * z
            })
            .collect();
        Ok(log_sum_exp(&logs).max(T::lit(DENSITY_FLOOR.ln())))
    }

    /// Bisection on `[min μ − 10 max σ, max μ + 10 max σ]` to `1e-8`.
    fn inverse_cdf(&self, x: &[T], u: T) -> Result<T> {
        check_unit_open(u)?;
        let p = self.mixture(x)?;
        let smax = p.scales.iter().copied().fold(T::zero(), T::max);
        let ten = T::lit(10.0);
        let mut lo = p.means.iter().copied().fold(T::infinity(), T::min) - ten * smax;
        let mut hi = p.means.iter().copied().fold(T::neg_infinity(), T::max) + ten * smax;
        let cdf = |s: T| -> T {
            (0..p.weights.len())
                .map(|j| p.weights[j] * normal_cdf((s - p.means[j]) / p.scales[j]))
                .sum()
        };
        let tol = T::lit(1e-8);
        for _ in 0..200 {
            if hi - lo <= tol * (T::one() + lo.abs().max(hi.abs())) {
                break;
            }
            let mid = T::lit(0.5) * (lo + hi);
            if cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(T::lit(0.5) * (lo + hi))
    }

    fn training_fingerprint(&self) -> Option<u64> {
        self.trained_on
    }
}

impl<T: Real> TrainableDensity<T> for MdnModel<T> {
    type Head = MixtureHead;

    fn network_input(&self, x: &[T]) -> Result<Vec<T>> {
        self.features.apply(x)
    }

    fn head_target(&self, s: T) -> T {
        (s - self.score_shift) / self.score_scale
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
    use super::super::test_support::trapezoid;
    use super::*;
    use crate::density::fit_mle;
    use crate::nn::{AdamConfig, TrainConfig};
    use crate::random;
    use crate::scores::{Role, ScoreFunction};
    use rand::Rng;

    #[test]
    fn cdf_examples() {
        let one = MdnModel::<f64>::constant(1, &[1.0], &[0.0], &[1.0]).unwrap();
        assert!((one.cdf(&[0.3], 0.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((one.cdf(&[0.3], 1.959964).unwrap() - 0.975).abs() < 1e-6);
        let two = MdnModel::<f64>::constant(1, &[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((two.cdf(&[0.0], 0.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn log_density_examples() {
        let one = MdnModel::<f64>::constant(1, &[1.0], &[0.0], &[1.0]).unwrap();
        let expected = -0.5 * std::f64::consts::TAU.ln();
        assert!((one.log_density(&[0.0], 0.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected + 0.91894).abs() < 1e-5);
        let degenerate = MdnModel::<f64>::constant(1, &[1.0, 0.0], &[0.0, 3.0], &[1.0, 0.5]).unwrap();
        for s in [-1.0, 0.0, 0.7] {
            let a = degenerate.log_density(&[0.0], s).unwrap();
            let b = one.log_density(&[0.0], s).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn random_mixture_integrates_to_one() {
        let mut rng = random::stream(5, 0);
        for _ in 0..5 {
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|v| v / total).collect();
            let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sd: Vec<f64> = (0..3).map(|_| rng.random_range(0.3..1.5)).collect();
            let m = MdnModel::<f64>::constant(1, &w, &mu, &sd).unwrap();
            let lo = mu.iter().copied().fold(f64::INFINITY, f64::min) - 8.0 * 1.5;
            let hi = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 8.0 * 1.5;
            let mass = trapezoid(|s| m.log_density(&[0.0], s).unwrap().exp(), lo, hi, 2000);
            assert!((mass - 1.0).abs() < 1e-3, "{mass}");
        }
    }

    #[test]
    fn inverse_cdf_round_trip() {
        let m = MdnModel::<f64>::constant(1, &[0.3, 0.7], &[-1.0, 2.0], &[0.4, 1.1]).unwrap();
        for s in [-2.0, -1.0, 0.0, 1.5, 4.0] {
            let u = m.cdf(&[0.0], s).unwrap();
            assert!((m.inverse_cdf(&[0.0], u).unwrap() - s).abs() < 1e-6);
        }
        assert!(m.inverse_cdf(&[0.0], 1.0).is_err());
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let head = MixtureHead {
            components: 3,
            sigma_floor: 1e-3,
        };
        let mut rng = random::stream(8, 0);
        for _ in 0..20 {
            let out: Vec<f64> = (0..9).map(|_| rng.random_range(-1.5..1.5)).collect();
            let target = rng.random_range(-2.0..2.0);
            let mut grad = vec![0.0; 9];
            head.nll(&out, target, &mut grad);
            for i in 0..9 {
                let h = 1e-6;
                let mut plus = out.clone();
                plus[i] += h;
                let mut minus = out.clone();
                minus[i] -= h;
                let mut scratch = vec![0.0; 9];
                let fd = (head.nll(&plus, target, &mut scratch) - head.nll(&minus, target, &mut scratch)) / (2.0 * h);
                assert!(
                    (fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "i={i}: {fd} vs {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn single_component_recovers_sample_moments() {
        let mut rng = random::stream(21, 0);
        let n = 2000;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let ys: Vec<f64> = (0..n)
            .map(|_| 1.5 + 0.7 * crate::real::normal_quantile(random::open_unit(&mut rng)))
            .collect();
        let train = Dataset::from_scalars(&xs, &ys, Role::Train).unwrap();
        let score = ScoreFunction::raw_response();
        let config = MdnConfig {
            components: 1,
            hidden: vec![8],
            sigma_floor: 1e-3,
        };
        let mut model = MdnModel::for_training(&config, &train, &ys, 3).unwrap();
        let train_cfg = TrainConfig {
            epochs: 300,
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        fit_mle(&mut model, &train, &score, &train_cfg).unwrap();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let p = model.mixture(&[0.5]).unwrap();
        let se_mean = sd / (n as f64).sqrt();
        let se_sd = sd / (2.0 * n as f64).sqrt();
        assert!((p.means[0] - mean).abs() < 3.0 * se_mean, "{} vs {mean}", p.means[0]);
        assert!((p.scales[0] - sd).abs() < 3.0 * se_sd, "{} vs {sd}", p.scales[0]);
        assert_eq!(model.training_fingerprint(), Some(train.fingerprint()));
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let xs = [0.1, 0.5, 0.9];
        let ys = [1.0, 2.0, 0.5];
        let train = Dataset::from_scalars(&xs, &ys, Role::Train).unwrap();
        let mut model = MdnModel::for_training(&MdnConfig::default(), &train, &ys, 1).unwrap();
        let before = model.trunk().clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let trace = fit_mle(&mut model, &train, &ScoreFunction::raw_response(), &cfg).unwrap();
        assert!(trace.is_empty());
        assert_eq!(model.trunk(), &before);
    }

    #[test]
    fn fit_rejects_calibration_split() {
        let data = Dataset::from_scalars(&[0.1], &[1.0], Role::Calibration).unwrap();
        let mut model = MdnModel::for_training(&MdnConfig::default(), &data, &[1.0], 1).unwrap();
        let err = fit_mle(
            &mut model,
            &data,
            &ScoreFunction::raw_response(),
            &TrainConfig::default(),
        );
        assert!(matches!(err, Err(Error::RoleViolation(_))));
    }

    #[test]
    fn document_round_trip() {
        let m = MdnModel::<f64>::constant(2, &[0.3, 0.7], &[-1.0, 2.0], &[0.4, 1.1]).unwrap();
        let json = serde_json::to_string(&m.to_document()).unwrap();
        assert!(json.contains("\"variant\":\"mdn\""));
        let doc: ModelDocument = serde_json::from_str(&json).unwrap();
        let back = MdnModel::<f64>::from_document(&doc).unwrap();
        assert_eq!(back.cdf(&[0.1, 0.2], 0.4).unwrap(), m.cdf(&[0.1, 0.2], 0.4).unwrap());
    }
}
