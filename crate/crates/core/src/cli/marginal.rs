//! Monte-Carlo marginal coverage of base and corrected pipelines against the
//! finite-sample bracket.

use std::path::PathBuf;
use std::sync::Arc;

use super::{base_score, derive_seed, num, ExperimentConfig, OutputDir};
use crate::conformal::{marginal_bracket, marginal_coverage_trial, CoverageEstimate};
use crate::density::{ConditionalScoreModel, MdnConfig, MdnModel, SplineFlowConfig, SplineFlowModel, Variant};
use crate::error::Result;
use crate::pit::{LatentMode, PitCorrectedScore};
use crate::scores::{NonconformityScore, Role};
use crate::synth::{draw_point, oracle_model, sample_stream, DgpSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalRow {
    pub n: usize,
    pub alpha: f64,
    pub pipeline: &'static str,
    pub estimate: CoverageEstimate,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct MarginalReport {
    pub rows: Vec<MarginalRow>,
    pub manifest: PathBuf,
}

pub fn run_marginal_check(config: &ExperimentConfig) -> Result<MarginalReport> {
    config.validate()?;
    let spec = DgpSpec {
        kind: config.dgp,
        seed: config.seed,
    };
    let base = base_score(config.dgp, config.single_score())?;
    let train = sample_stream(&spec, config.n_train, 0, Role::Train)?;
    let train_scores = train.scores(&base)?;
    let init = derive_seed(config.seed, 2);
    let untrained: Arc<dyn ConditionalScoreModel<f64>> = match config.model {
        Variant::Mdn => Arc::new(MdnModel::for_training(
            &MdnConfig::default(),
            &train,
            &train_scores,
            init,
        )?),
        _ => Arc::new(SplineFlowModel::for_training(
            &SplineFlowConfig::default(),
            &train,
            &train_scores,
            init,
        )?),
    };
    let oracle: Arc<dyn ConditionalScoreModel<f64>> = Arc::new(oracle_model(&spec, base.kind())?);
    let pipelines: Vec<(&'static str, Box<dyn NonconformityScore<f64>>)> = vec![
        ("base", Box::new(base.clone())),
        (
            "pit_oracle",
            Box::new(PitCorrectedScore::new(base.clone(), oracle, LatentMode::Probability)),
        ),
        (
            "pit_untrained",
            Box::new(PitCorrectedScore::new(
                base.clone(),
                untrained,
                LatentMode::default_for(config.model),
            )),
        ),
    ];

    let mut rows = Vec::new();
    for &n in &config.n_calibration {
        for (a, &alpha) in config.alphas.iter().enumerate() {
            let seed = derive_seed(config.seed, 1000 + (n as u64) * 64 + a as u64);
            let (lower, upper) = marginal_bracket(n, alpha);
            for (pipeline, score) in &pipelines {
                let draw = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
                    let mut eval = || {
                        let (x, y) = draw_point(spec.kind, rng);
                        score.evaluate(&[x], &[y])
                    };
                    let cal = (0..n).map(|_| eval()).collect::<Result<Vec<f64>>>()?;
                    Ok((cal, eval()?))
                };
                let estimate = marginal_coverage_trial(draw, n, alpha, config.repetitions, seed)?;
                log::info!(
                    "n={n} α={alpha} {pipeline}: coverage {:.4} in [{lower:.4}, {upper:.4}]",
                    estimate.coverage
                );
                rows.push(MarginalRow {
                    n,
                    alpha,
                    pipeline,
                    estimate,
                    lower,
                    upper,
                });
            }
        }
    }

    let mut out = OutputDir::create(&config.out)?;
    for &n in &config.n_calibration {
        out.csv(
            &format!("marginal_n{n}.csv"),
            &["alpha", "pipeline", "coverage", "lower", "upper", "stderr"],
            rows.iter().filter(|r| r.n == n).map(|r| {
                vec![
                    num(r.alpha),
                    r.pipeline.to_string(),
                    num(r.estimate.coverage),
                    num(r.lower),
                    num(r.upper),
                    num(r.estimate.stderr),
                ]
            }),
        )?;
    }
    let manifest = out.finish(config)?;
    Ok(MarginalReport { rows, manifest })
}
