//! Experiment runner behind the `pivotal` binary.
//!
//! Each experiment writes long-format CSV files plus a `manifest.json` with
//! the resolved configuration and the SHA-256 of every output. All
//! randomness comes from seeded streams, so reruns are byte-identical.

pub mod config;
mod convergence;
mod illustration;
mod marginal;
mod toy;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{Experiment, ExperimentConfig, ScoreChoice};
pub use convergence::{run_convergence, ConvergenceReport, ConvergenceRow};
pub use illustration::{run_illustration_ks, KsReport, KsRow};
pub use marginal::{run_marginal_check, MarginalReport, MarginalRow};
pub use toy::{run_toy, ToyPair, ToyReport};

use crate::density::{fit_mle, ConditionalScoreModel, MdnConfig, MdnModel, SplineFlowConfig, SplineFlowModel, Variant};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, LrSchedule, TrainConfig};
use crate::random;
use crate::scores::{Dataset, ScoreFunction, ScoreKind};
use crate::synth::{self, CandyDensity, DgpKind, DgpSpec, LaplaceDensity};

/// Process exit code for an error.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config { .. } => 2,
        Error::Io(_) | Error::Json(_) => 1,
        _ => 3,
    }
}

/// Runs the configured experiment and returns the manifest path.
pub fn run(config: &ExperimentConfig) -> Result<PathBuf> {
    match config.experiment {
        Experiment::Toy => run_toy(config).map(|r| r.manifest),
        Experiment::Convergence => run_convergence(config).map(|r| r.manifest),
        Experiment::IllustrationKs => run_illustration_ks(config).map(|r| r.manifest),
        Experiment::MarginalCheck => run_marginal_check(config).map(|r| r.manifest),
    }
}

/// An independent seed for sub-task `tag` of a run.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    random::stream(seed, tag).random()
}

pub(crate) fn base_score(dgp: DgpKind, kind: ScoreKind) -> Result<ScoreFunction<f64>> {
    Ok(match kind {
        ScoreKind::AbsoluteResidual => ScoreFunction::absolute_residual(),
        ScoreKind::RawResponse => ScoreFunction::raw_response(),
        ScoreKind::NegativeDensity => ScoreFunction::negative_density(match dgp {
            DgpKind::CandyGaussian => CandyDensity::shared(),
            DgpKind::LaplaceHet => Arc::new(LaplaceDensity),
        }),
        ScoreKind::ScaledLinfResidual => return Err(Error::UnsupportedScore("scaled L∞ residual on scalar data")),
    })
}

pub(crate) fn train_config(config: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: config.epochs,
        batch_size: (config.batch_size > 0).then_some(config.batch_size),
        adam: AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        clip_norm: Some(10.0),
        schedule: if config.lr_floor < 1.0 {
            LrSchedule::Cosine { floor: config.lr_floor }
        } else {
            LrSchedule::Constant
        },
        seed,
    }
}

/// A fitted conditional score model and its per-epoch training loss.
pub(crate) struct Fitted {
    pub model: Arc<dyn ConditionalScoreModel<f64>>,
    pub losses: Vec<f64>,
}

/// Builds the requested model for `base`; learned variants are fitted on
/// `train`, the oracle comes from the closed form of `spec`.
pub(crate) fn fit_model(
    variant: Variant,
    spec: &DgpSpec,
    train: Option<&Dataset<f64>>,
    base: &ScoreFunction<f64>,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Fitted> {
    if variant == Variant::Oracle {
        return Ok(Fitted {
            model: Arc::new(synth::oracle_model(spec, base.kind())?),
            losses: Vec::new(),
        });
    }
    let train = train.ok_or(Error::Empty("training data"))?;
    let scores = train.scores(base)?;
    let tc = train_config(config, derive_seed(seed, 1));
    let init = derive_seed(seed, 0);
    Ok(match variant {
        Variant::Mdn => {
            let mut m = MdnModel::for_training(&MdnConfig::default(), train, &scores, init)?;
            let losses = fit_mle(&mut m, train, base, &tc)?;
            Fitted {
                model: Arc::new(m),
                losses,
            }
        }
        _ => {
            let mut m = SplineFlowModel::for_training(&SplineFlowConfig::default(), train, &scores, init)?;
            let losses = fit_mle(&mut m, train, base, &tc)?;
            Fitted {
                model: Arc::new(m),
                losses,
            }
        }
    })
}

/// Collects output files in one directory and records their hashes.
pub(crate) struct OutputDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

#[derive(Debug, Serialize)]
struct OutputFile {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
    outputs: &'a [OutputFile],
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Writes a CSV file with `header` and string `rows`.
    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn finish(self, config: &ExperimentConfig) -> Result<PathBuf> {
        let manifest = Manifest {
            experiment: config.experiment.name(),
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config,
            outputs: &self.files,
        };
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn num(v: f64) -> String {
    v.to_string()
}
