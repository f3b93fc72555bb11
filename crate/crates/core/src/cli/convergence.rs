//! L¹ conditional coverage gap as the training set grows.

use std::path::PathBuf;

use rayon::prelude::*;

use super::{base_score, derive_seed, fit_model, num, ExperimentConfig, OutputDir};
use crate::conformal::SplitConformal;
use crate::density::Variant;
use crate::diagnostics::{alpha_grid, kmeans_fit, l1_gap_over_grid};
use crate::error::Result;
use crate::pit::{build_pipeline, LatentMode};
use crate::scores::Role;
use crate::synth::{sample_stream, DgpSpec};

/// Mean and standard deviation over runs for one `(model, N)` rung.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub model: Variant,
    pub n_train: usize,
    pub mean: f64,
    pub sd: f64,
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub manifest: PathBuf,
}

impl ConvergenceReport {
    pub fn row(&self, model: Variant, n_train: usize) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.model == model && r.n_train == n_train)
    }
}

#[derive(Clone, Copy)]
struct Job {
    run: usize,
    n_train: usize,
    model: Option<Variant>,
}

pub fn run_convergence(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let mut jobs = Vec::new();
    for run in 0..config.n_runs {
        for &n_train in &config.n_ladder {
            if n_train == 0 {
                jobs.push(Job {
                    run,
                    n_train,
                    model: None,
                });
            } else {
                jobs.extend(config.models.iter().map(|&m| Job {
                    run,
                    n_train,
                    model: Some(m),
                }));
            }
        }
    }
    let gaps = jobs
        .par_iter()
        .map(|job| run_job(config, job))
        .collect::<Result<Vec<f64>>>()?;

    let mut rows = Vec::new();
    for &model in &config.models {
        for &n_train in &config.n_ladder {
            let values: Vec<f64> = jobs
                .iter()
                .zip(&gaps)
                .filter(|(j, _)| j.n_train == n_train && (n_train == 0 || j.model == Some(model)))
                .map(|(_, &g)| g)
                .collect();
            let (mean, sd) = mean_sd(&values);
            rows.push(ConvergenceRow {
                model,
                n_train,
                mean,
                sd,
                gaps: values,
            });
        }
    }
    soft_check(&rows);

    let mut out = OutputDir::create(&config.out)?;
    out.csv(
        "runs.csv",
        &["model", "N", "run", "l1_gap"],
        rows.iter().flat_map(|r| {
            r.gaps
                .iter()
                .enumerate()
                .map(move |(k, g)| vec![r.model.to_string(), r.n_train.to_string(), k.to_string(), num(*g)])
        }),
    )?;
    out.csv(
        "summary.csv",
        &["model", "N", "mean", "sd", "runs"],
        rows.iter().map(|r| {
            vec![
                r.model.to_string(),
                r.n_train.to_string(),
                num(r.mean),
                num(r.sd),
                r.gaps.len().to_string(),
            ]
        }),
    )?;
    let manifest = out.finish(config)?;
    Ok(ConvergenceReport { rows, manifest })
}

fn run_job(config: &ExperimentConfig, job: &Job) -> Result<f64> {
    let run_seed = derive_seed(config.seed, job.run as u64);
    let spec = DgpSpec {
        kind: config.dgp,
        seed: run_seed,
    };
    let base = base_score(config.dgp, config.single_score())?;
    let calibration = sample_stream(&spec, config.calibration_size(), 1, Role::Calibration)?;
    let test = sample_stream(&spec, config.n_test, 2, Role::Test)?;
    let points: Vec<Vec<f64>> = test.iter().map(|s| s.features.clone()).collect();
    let bins = kmeans_fit(&points, config.bins, derive_seed(run_seed, 10))?;
    let grid = alpha_grid(config.alpha_levels);
    let gap = match job.model {
        None => l1_gap_over_grid(&SplitConformal::calibrate(base, &calibration)?, &test, &bins, &grid)?,
        Some(model) => {
            // Every rung of one run shares a prefix of the same training stream.
            let train = sample_stream(&spec, job.n_train, 0, Role::Train)?;
            let tag = 100 + job.n_train as u64 * 4 + model as u64;
            let fitted = fit_model(model, &spec, Some(&train), &base, config, derive_seed(run_seed, tag))?;
            let pipe = build_pipeline(base, fitted.model, &calibration, LatentMode::default_for(model))?;
            l1_gap_over_grid(&pipe, &test, &bins, &grid)?
        }
    };
    log::info!(
        "run {} N={} {}: L1 gap {gap:.4}",
        job.run,
        job.n_train,
        job.model.map_or("base".to_string(), |m| m.to_string())
    );
    Ok(gap)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Logs rungs where the mean gap rises by more than one standard deviation.
fn soft_check(rows: &[ConvergenceRow]) {
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.model == b.model && b.mean > a.mean + a.sd.max(b.sd) {
            log::warn!(
                "{}: gap rose from {:.4} (N={}) to {:.4} (N={})",
                a.model,
                a.mean,
                a.n_train,
                b.mean,
                b.n_train
            );
        }
    }
}
