//! Base versus corrected regions on one DGP for three `(score, α)` pairs.

use std::path::PathBuf;

use rayon::prelude::*;

use super::{base_score, derive_seed, fit_model, num, ExperimentConfig, OutputDir};
use crate::conformal::SplitConformal;
use crate::diagnostics::{coverage_report, kmeans_fit, membership_matrix, Binning, GapReport, KmeansModel};
use crate::error::Result;
use crate::pit::{build_pipeline, LatentMode, PitPipeline};
use crate::scores::{Dataset, Role, ScoreFunction, ScoreKind};
use crate::synth::{sample_stream, DgpSpec};

#[derive(Debug, Clone)]
pub struct ToyPair {
    pub score: ScoreKind,
    pub alpha: f64,
    pub base: GapReport,
    pub corrected: GapReport,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyReport {
    pub pairs: Vec<ToyPair>,
    pub centers: Vec<f64>,
    pub manifest: PathBuf,
}

struct PairRun {
    pair: ToyPair,
    base_hits: Vec<bool>,
    corrected_hits: Vec<bool>,
    curves: Vec<[String; 7]>,
}

pub fn run_toy(config: &ExperimentConfig) -> Result<ToyReport> {
    config.validate()?;
    let spec = DgpSpec {
        kind: config.dgp,
        seed: config.seed,
    };
    let train = (config.n_train > 0)
        .then(|| sample_stream(&spec, config.n_train, 0, Role::Train))
        .transpose()?;
    let calibration = sample_stream(&spec, config.calibration_size(), 1, Role::Calibration)?;
    let test = sample_stream(&spec, config.n_test, 2, Role::Test)?;
    let points: Vec<Vec<f64>> = test.iter().map(|s| s.features.clone()).collect();
    let bins = kmeans_fit(&points, config.bins, derive_seed(config.seed, 10))?;
    let labels: Vec<usize> = points.iter().map(|p| bins.assign(p)).collect();

    let runs = config
        .toy_pairs()
        .into_par_iter()
        .enumerate()
        .map(|(i, (kind, alpha))| {
            run_pair(
                config,
                &spec,
                train.as_ref(),
                &calibration,
                &test,
                &labels,
                kind,
                alpha,
                i as u64,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = OutputDir::create(&config.out)?;
    let centers: Vec<f64> = bins.centers().iter().map(|c| c[0]).collect();
    write_outputs(&mut out, &runs, &test, &labels, &centers, &bins)?;
    for r in &runs {
        log::info!(
            "{} α={}: MAE base {:.4}, corrected {:.4}",
            r.pair.score.name(),
            r.pair.alpha,
            r.pair.base.mae,
            r.pair.corrected.mae
        );
    }
    let manifest = out.finish(config)?;
    Ok(ToyReport {
        pairs: runs.into_iter().map(|r| r.pair).collect(),
        centers,
        manifest,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_pair(
    config: &ExperimentConfig,
    spec: &DgpSpec,
    train: Option<&Dataset<f64>>,
    calibration: &Dataset<f64>,
    test: &Dataset<f64>,
    labels: &[usize],
    kind: ScoreKind,
    alpha: f64,
    index: u64,
) -> Result<PairRun> {
    let base = base_score(config.dgp, kind)?;
    let fitted = fit_model(
        config.model,
        spec,
        train,
        &base,
        config,
        derive_seed(config.seed, 100 + index),
    )?;
    let mode = LatentMode::default_for(config.model);
    let corrected = build_pipeline(base.clone(), fitted.model, calibration, mode)?;
    let plain = SplitConformal::calibrate(base, calibration)?;
    let base_hits = column(membership_matrix(&plain, test, &[alpha])?);
    let corrected_hits = column(membership_matrix(&corrected, test, &[alpha])?);
    let curves = boundary_curves(config, spec, &plain, &corrected, kind, alpha)?;
    Ok(PairRun {
        pair: ToyPair {
            score: kind,
            alpha,
            base: coverage_report(&base_hits, labels, config.bins, alpha)?,
            corrected: coverage_report(&corrected_hits, labels, config.bins, alpha)?,
            losses: fitted.losses,
        },
        base_hits,
        corrected_hits,
        curves,
    })
}

fn column(m: Vec<Vec<bool>>) -> Vec<bool> {
    m.into_iter().map(|r| r[0]).collect()
}

fn boundary_curves(
    config: &ExperimentConfig,
    spec: &DgpSpec,
    plain: &SplitConformal<f64, ScoreFunction<f64>>,
    corrected: &PitPipeline<f64>,
    kind: ScoreKind,
    alpha: f64,
) -> Result<Vec<[String; 7]>> {
    let (lo, hi) = spec.feature_range();
    let steps = config.grid_points.max(2) - 1;
    let region = plain.region(alpha)?;
    let mut rows = Vec::new();
    for i in 0..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        for (pipeline, intervals) in [
            ("base", region.intervals(&[x])?),
            ("corrected", corrected.intervals(&[x], alpha)?),
        ] {
            for (k, iv) in intervals.iter().enumerate() {
                rows.push([
                    kind.name().to_string(),
                    num(alpha),
                    pipeline.to_string(),
                    num(x),
                    k.to_string(),
                    num(iv.lo),
                    num(iv.hi),
                ]);
            }
        }
    }
    Ok(rows)
}

fn write_outputs(
    out: &mut OutputDir,
    runs: &[PairRun],
    test: &Dataset<f64>,
    labels: &[usize],
    centers: &[f64],
    bins: &KmeansModel,
) -> Result<()> {
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    out.csv(
        "membership.csv",
        &["score", "alpha", "point", "x", "y", "bin", "base", "corrected"],
        runs.iter().flat_map(|r| {
            test.iter().enumerate().map(move |(i, s)| {
                vec![
                    r.pair.score.name().to_string(),
                    num(r.pair.alpha),
                    i.to_string(),
                    num(s.features[0]),
                    num(s.outcome[0]),
                    labels[i].to_string(),
                    flag(r.base_hits[i]),
                    flag(r.corrected_hits[i]),
                ]
            })
        }),
    )?;
    let reports = |r: &'_ PairRun| [("base", r.pair.base.clone()), ("corrected", r.pair.corrected.clone())];
    out.csv(
        "bin_coverage.csv",
        &["score", "alpha", "pipeline", "bin", "center", "count", "coverage"],
        runs.iter().flat_map(|r| {
            reports(r).into_iter().flat_map(move |(pipeline, rep)| {
                rep.bins
                    .into_iter()
                    .map(move |b| {
                        vec![
                            r.pair.score.name().to_string(),
                            num(r.pair.alpha),
                            pipeline.to_string(),
                            b.bin.to_string(),
                            num(centers[b.bin]),
                            b.count.to_string(),
                            num(b.coverage),
                        ]
                    })
                    .collect::<Vec<_>>()
            })
        }),
    )?;
    out.csv(
        "summary.csv",
        &["score", "alpha", "pipeline", "overall", "gap", "mae"],
        runs.iter().flat_map(|r| {
            reports(r).into_iter().map(move |(pipeline, rep)| {
                vec![
                    r.pair.score.name().to_string(),
                    num(r.pair.alpha),
                    pipeline.to_string(),
                    num(rep.overall),
                    num(rep.gap),
                    num(rep.mae),
                ]
            })
        }),
    )?;
    out.csv(
        "boundaries.csv",
        &["score", "alpha", "pipeline", "x", "interval", "lower", "upper"],
        runs.iter().flat_map(|r| r.curves.iter().map(|row| row.to_vec())),
    )?;
    out.csv(
        "training.csv",
        &["score", "epoch", "loss"],
        runs.iter().flat_map(|r| {
            r.pair
                .losses
                .iter()
                .enumerate()
                .map(move |(e, l)| vec![r.pair.score.name().to_string(), e.to_string(), num(*l)])
        }),
    )?;
    log::debug!("k-means used {} iterations", bins.iterations);
    Ok(())
}
