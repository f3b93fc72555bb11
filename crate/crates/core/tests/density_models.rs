use std::sync::Arc;

use pivotal::density::{
    fit_mle, ConditionalScoreModel, FeatureScaler, MdnConfig, MdnModel, SplineFlowConfig, SplineFlowModel,
};
use pivotal::diagnostics::{ks_distance_functions, model_kl, spearman};
use pivotal::nn::{AdamConfig, LrSchedule, TrainConfig};
use pivotal::random;
use pivotal::scores::{Dataset, Role, ScoreFunction};
use pivotal::synth::{self, DgpSpec};
use rand::Rng;

fn random_mdn(seed: u64) -> MdnModel<f64> {
    let features = FeatureScaler::identity(1);
    let mut m = MdnModel::new(&MdnConfig::default(), features, 0.5, 2.0, seed).unwrap();
    let mut rng = random::stream(seed, 1);
    let mut doc = m.to_document();
    for layer in &mut doc.network.layers {
        layer.weights.iter_mut().for_each(|w| *w += rng.random_range(-0.3..0.3));
    }
    m = MdnModel::from_document(&doc).unwrap();
    m
}

fn random_flow(seed: u64) -> SplineFlowModel<f64> {
    let mut flow = SplineFlowModel::new(
        &SplineFlowConfig::default(),
        FeatureScaler::identity(1),
        (0.0, 4.0),
        seed,
    )
    .unwrap();
    let mut rng = random::stream(seed, 1);
    flow.trunk_mut()
        .params_mut()
        .iter_mut()
        .for_each(|p| *p += rng.random_range(-0.5..0.5));
    flow
}

/// Bounds of the fitted range extended by 10 scale units.
fn check_cdf_validity(model: &dyn ConditionalScoreModel<f64>, x: f64, lo: f64, hi: f64) {
    let grid: Vec<f64> = (0..1000).map(|i| lo + (hi - lo) * i as f64 / 999.0).collect();
    let values: Vec<f64> = grid.iter().map(|&t| model.cdf(&[x], t).unwrap()).collect();
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(values.windows(2).all(|w| w[0] <= w[1]), "cdf decreases at x={x}");
    assert!(
        values[0] < 1e-6 && values[999] > 1.0 - 1e-6,
        "tails {} {} at x={x}",
        values[0],
        values[999]
    );
}

#[test]
fn cdfs_are_valid_distribution_functions() {
    let mdn = random_mdn(3);
    let flow = random_flow(4);
    let oracle = synth::oracle_model(&DgpSpec::laplace_het(0), pivotal::scores::ScoreKind::AbsoluteResidual).unwrap();
    let mut rng = random::stream(5, 0);
    for _ in 0..100 {
        let x: f64 = rng.random_range(-1.0..1.0);
        let p = mdn.mixture(&[x]).unwrap();
        let smax = p.scales.iter().copied().fold(0.0, f64::max);
        let mlo = p.means.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * smax;
        let mhi = p.means.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * smax;
        check_cdf_validity(&mdn, x, mlo, mhi);
        check_cdf_validity(&flow, x, -40.0, 44.0);
        check_cdf_validity(&oracle, x.abs(), -1.0, 30.0);
    }
}

#[test]
fn density_is_the_cdf_derivative() {
    let models: Vec<(Box<dyn ConditionalScoreModel<f64>>, f64, f64)> = vec![
        (Box::new(random_mdn(6)), -3.0, 4.0),
        (Box::new(random_flow(7)), 0.05, 3.95),
    ];
    let h = 1e-5;
    for (model, lo, hi) in &models {
        for x in [-0.8, 0.0, 0.6] {
            for i in 1..200 {
                let t = lo + (hi - lo) * i as f64 / 200.0;
                let fd = (model.cdf(&[x], t + h).unwrap() - model.cdf(&[x], t - h).unwrap()) / (2.0 * h);
                let p = model.log_density(&[x], t).unwrap().exp();
                assert!((fd - p).abs() < 1e-3, "{:?} x={x} t={t}: {fd} vs {p}", model.variant());
            }
        }
    }
}

#[test]
fn inverse_cdf_round_trips() {
    let mdn = random_mdn(8);
    let flow = random_flow(9);
    let mut rng = random::stream(10, 0);
    for _ in 0..500 {
        let x = [rng.random_range(-1.0..1.0)];
        let s: f64 = rng.random_range(0.2..3.8);
        for model in [&mdn as &dyn ConditionalScoreModel<f64>, &flow] {
            let u = model.cdf(&x, s).unwrap();
            if u > 1e-9 && u < 1.0 - 1e-9 {
                let back = model.inverse_cdf(&x, u).unwrap();
                assert!((back - s).abs() < 1e-6, "{:?}: {s} → {u} → {back}", model.variant());
            }
        }
    }
}

fn laplace_train(n: usize) -> (Dataset<f64>, Vec<f64>) {
    let train = synth::sample_stream(&DgpSpec::laplace_het(21), n, 0, Role::Train).unwrap();
    let scores = train.scores(&ScoreFunction::absolute_residual()).unwrap();
    (train, scores)
}

fn mean_ks_to_oracle(model: &dyn ConditionalScoreModel<f64>) -> f64 {
    let spec = DgpSpec::laplace_het(0);
    let grid: Vec<f64> = (0..=200).map(|i| 8.0 * i as f64 / 200.0).collect();
    let xs: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    xs.iter()
        .map(|&x| {
            ks_distance_functions(
                |t| model.cdf(&[x], t).unwrap(),
                |t| synth::oracle_score_cdf(&spec, pivotal::scores::ScoreKind::AbsoluteResidual, x, t).unwrap(),
                &grid,
            )
        })
        .sum::<f64>()
        / xs.len() as f64
}

#[test]
fn spline_flow_learns_the_exponential_family() {
    let (train, scores) = laplace_train(4000);
    let mut flow = SplineFlowModel::for_training(&SplineFlowConfig::default(), &train, &scores, 1).unwrap();
    let config = TrainConfig {
        epochs: 300,
        batch_size: Some(128),
        adam: AdamConfig {
            learning_rate: 2e-3,
            ..AdamConfig::default()
        },
        schedule: LrSchedule::Cosine { floor: 0.05 },
        seed: 2,
        ..TrainConfig::default()
    };
    fit_mle(&mut flow, &train, &ScoreFunction::absolute_residual(), &config).unwrap();
    let ks = mean_ks_to_oracle(&flow);
    assert!(ks < 0.05, "mean KS {ks}");
}

#[test]
fn likelihood_and_forward_kl_decrease_together() {
    let (train, scores) = laplace_train(4000);
    let mut mdn = MdnModel::for_training(&MdnConfig::default(), &train, &scores, 3).unwrap();
    let oracle: Arc<dyn ConditionalScoreModel<f64>> =
        Arc::new(synth::oracle_model(&DgpSpec::laplace_het(0), pivotal::scores::ScoreKind::AbsoluteResidual).unwrap());
    let config = TrainConfig {
        epochs: 4,
        batch_size: Some(256),
        seed: 4,
        ..TrainConfig::default()
    };
    let xs = [0.1, 0.3, 0.5, 0.7, 0.9];
    let (mut nll, mut kl) = (Vec::new(), Vec::new());
    for _ in 0..15 {
        let trace = fit_mle(&mut mdn, &train, &ScoreFunction::absolute_residual(), &config).unwrap();
        nll.push(*trace.last().unwrap());
        let k: f64 = xs
            .iter()
            .map(|&x| model_kl(oracle.as_ref(), &mdn, &[x], (0.0, 25.0)).unwrap())
            .sum();
        kl.push(k / xs.len() as f64);
    }
    let rho = spearman(&nll, &kl).unwrap();
    assert!(rho > 0.9, "Spearman {rho}; nll {nll:?}; kl {kl:?}");
}
