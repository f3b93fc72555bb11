use std::sync::Arc;

use pivotal::cli::{self, Experiment, ExperimentConfig};
use pivotal::conformal::SplitConformal;
use pivotal::density::ConditionalScoreModel;
use pivotal::diagnostics::{alpha_grid, kmeans_fit, l1_gap_over_grid, oracle_inclusion_check, KmeansModel};
use pivotal::pit::{build_pipeline, LatentMode};
use pivotal::scores::{Dataset, Role, ScoreFunction, ScoreKind};
use pivotal::synth::{self, DgpSpec};

fn toy_setup(seed: u64, n_test: usize) -> (DgpSpec, Dataset<f64>, Dataset<f64>, KmeansModel) {
    let spec = DgpSpec::candy_gaussian(seed);
    let calibration = synth::sample_stream(&spec, 1000, 1, Role::Calibration).unwrap();
    let test = synth::sample_stream(&spec, n_test, 2, Role::Test).unwrap();
    let points: Vec<Vec<f64>> = test.iter().map(|s| s.features.clone()).collect();
    let bins = kmeans_fit(&points, 10, 0).unwrap();
    (spec, calibration, test, bins)
}

/// The shipped oracle toy configuration (seed 0).
#[test]
fn oracle_toy_run_has_small_binned_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy_oracle.conf");
    let mut config = ExperimentConfig::load(&path, Experiment::Toy).unwrap();
    config.out = dir.path().to_path_buf();
    let report = cli::run_toy(&config).unwrap();
    for pair in &report.pairs {
        let c = &pair.corrected;
        assert!(
            c.bins.iter().all(|b| (b.coverage - c.overall).abs() <= 0.04),
            "{}: {c:?}",
            pair.score.name()
        );
        assert!(c.gap < pair.base.gap);
        assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), 5000);
        if pair.score == ScoreKind::NegativeDensity {
            assert!(c.gap < 0.06, "{c:?}");
        }
    }
}

#[test]
fn oracle_l1_gap_is_at_the_noise_floor() {
    let (spec, calibration, test, bins) = toy_setup(1, 5000);
    let base = ScoreFunction::absolute_residual();
    let oracle = Arc::new(synth::oracle_model(&spec, ScoreKind::AbsoluteResidual).unwrap());
    let pipe = build_pipeline(base.clone(), oracle, &calibration, LatentMode::Probability).unwrap();
    let grid = alpha_grid(98);
    let corrected = l1_gap_over_grid(&pipe, &test, &bins, &grid).unwrap();
    let plain = l1_gap_over_grid(
        &SplitConformal::calibrate(base, &calibration).unwrap(),
        &test,
        &bins,
        &grid,
    )
    .unwrap();
    assert!(corrected < 0.08, "{corrected}");
    assert!(plain > corrected, "{plain} vs {corrected}");
}

#[test]
fn oracle_inclusion_fails_rarely() {
    let spec = DgpSpec::candy_gaussian(2);
    let oracle: Arc<dyn ConditionalScoreModel<f64>> =
        Arc::new(synth::oracle_model(&spec, ScoreKind::AbsoluteResidual).unwrap());
    let test_xs: Vec<Vec<f64>> = (0..=20).map(|i| vec![-1.0 + 0.1 * i as f64]).collect();
    let (delta, resamples) = (0.1, 500);
    let build = |r: u64| {
        let calibration = synth::sample_stream(&spec, 200, 100 + r, Role::Calibration)?;
        build_pipeline(
            ScoreFunction::absolute_residual(),
            oracle.clone(),
            &calibration,
            LatentMode::Probability,
        )
    };
    // The oracle correction is exactly pivotal, so d_KS vanishes.
    let rate = oracle_inclusion_check(build, oracle.as_ref(), 0.2, delta, &test_xs, &|_| 0.0, resamples).unwrap();
    let band = 3.0 * (delta * (1.0 - delta) / resamples as f64).sqrt();
    assert!(rate <= delta + band, "violation rate {rate}");
}
