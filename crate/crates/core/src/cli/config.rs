//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::density::Variant;
use crate::error::{Error, Result};
use crate::scores::ScoreKind;
use crate::synth::{self, DgpKind, DgpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Toy,
    Convergence,
    IllustrationKs,
    MarginalCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Toy => "toy",
            Experiment::Convergence => "convergence",
            Experiment::IllustrationKs => "illustration_ks",
            Experiment::MarginalCheck => "marginal_check",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "toy" => Ok(Experiment::Toy),
            "convergence" => Ok(Experiment::Convergence),
            "illustration_ks" => Ok(Experiment::IllustrationKs),
            "marginal_check" => Ok(Experiment::MarginalCheck),
            _ => Err(Error::Parse(format!("unknown experiment `{s}`"))),
        }
    }
}

/// Base score selection; `All` is the toy study's three canonical
/// `(score, α)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreChoice {
    All,
    One(ScoreKind),
}

impl Serialize for ScoreChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            ScoreChoice::All => "all",
            ScoreChoice::One(kind) => kind.name(),
        })
    }
}

/// Every knob of an experiment run. Keys in the file use the field names
/// below, except `N_train` and `N_ladder`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dgp: DgpKind,
    #[serde(rename = "N_train")]
    pub n_train: usize,
    pub n_calibration: Vec<usize>,
    pub n_test: usize,
    pub alphas: Vec<f64>,
    pub model: Variant,
    pub models: Vec<Variant>,
    pub score: ScoreChoice,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Final learning rate of the cosine schedule as a fraction of the
    /// initial one; 1 keeps it constant.
    pub lr_floor: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub n_runs: usize,
    #[serde(rename = "N_ladder")]
    pub n_ladder: Vec<usize>,
    pub bins: usize,
    pub alpha_levels: usize,
    pub repetitions: usize,
    pub trials: usize,
    pub x_grid: Vec<f64>,
    pub grid_points: usize,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            dgp: DgpKind::CandyGaussian,
            n_train: 5000,
            n_calibration: vec![1000],
            n_test: 5000,
            alphas: vec![0.1],
            model: Variant::SplineFlow,
            models: vec![Variant::Mdn, Variant::SplineFlow],
            score: ScoreChoice::One(ScoreKind::AbsoluteResidual),
            epochs: 1000,
            batch_size: 128,
            learning_rate: 2e-3,
            lr_floor: 0.05,
            seed: 0,
            out: PathBuf::from(format!("out/{}", experiment.name())),
            n_runs: 5,
            n_ladder: vec![0, 1000, 2000, 3000, 4000, 5000],
            bins: 10,
            alpha_levels: 98,
            repetitions: 2000,
            trials: 10_000,
            x_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            grid_points: 101,
        };
        match experiment {
            Experiment::Toy => Self {
                score: ScoreChoice::All,
                ..base
            },
            Experiment::Convergence => Self { epochs: 400, ..base },
            Experiment::IllustrationKs => Self {
                dgp: DgpKind::LaplaceHet,
                alphas: vec![0.2],
                ..base
            },
            Experiment::MarginalCheck => Self {
                dgp: DgpKind::LaplaceHet,
                n_train: 1000,
                n_calibration: vec![99, 999],
                alphas: vec![0.1, 0.2, 0.3],
                model: Variant::Mdn,
                ..base
            },
        }
    }

    /// Reads `path` on top of the defaults of `experiment`.
    pub fn load(path: &Path, experiment: Experiment) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_error("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text, experiment)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, experiment: Experiment) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_error("config", format!("line {} is not `key = value`", i + 1)))?;
            let key = key.trim();
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(config_error(key, "set more than once".into()));
            }
        }
        if let Some(name) = entries.get("experiment") {
            let named = Experiment::from_str(name).map_err(|e| config_error("experiment", e.to_string()))?;
            if named != experiment {
                return Err(config_error(
                    "experiment",
                    format!(
                        "file is for `{}` but the command is `{}`",
                        named.name(),
                        experiment.name()
                    ),
                ));
            }
        }
        let mut config = Self::defaults(experiment);
        for (key, value) in &entries {
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => {}
            "dgp" => self.dgp = parse_one(key, value)?,
            "N_train" => self.n_train = parse_one(key, value)?,
            "n_calibration" => self.n_calibration = parse_list(key, value)?,
            "n_test" => self.n_test = parse_one(key, value)?,
            "alphas" => self.alphas = parse_list(key, value)?,
            "model" => self.model = parse_one(key, value)?,
            "models" => self.models = parse_list(key, value)?,
            "score" => {
                self.score = if value == "all" {
                    ScoreChoice::All
                } else {
                    ScoreChoice::One(parse_one(key, value)?)
                }
            }
            "epochs" => self.epochs = parse_one(key, value)?,
            "batch_size" => self.batch_size = parse_one(key, value)?,
            "learning_rate" => self.learning_rate = parse_one(key, value)?,
            "lr_floor" => self.lr_floor = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "n_runs" => self.n_runs = parse_one(key, value)?,
            "N_ladder" => self.n_ladder = parse_list(key, value)?,
            "bins" => self.bins = parse_one(key, value)?,
            "alpha_levels" => self.alpha_levels = parse_one(key, value)?,
            "repetitions" => self.repetitions = parse_one(key, value)?,
            "trials" => self.trials = parse_one(key, value)?,
            "x_grid" => self.x_grid = parse_list(key, value)?,
            "grid_points" => self.grid_points = parse_one(key, value)?,
            _ => return Err(config_error(key, "unknown field".into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_test", self.n_test),
            ("n_runs", self.n_runs),
            ("alpha_levels", self.alpha_levels),
            ("repetitions", self.repetitions),
            ("trials", self.trials),
            ("grid_points", self.grid_points),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(config_error(field, "must be at least 1".into()));
            }
        }
        if self.n_calibration.is_empty() || self.n_calibration.contains(&0) {
            return Err(config_error("n_calibration", "every size must be at least 1".into()));
        }
        if self.experiment != Experiment::MarginalCheck && self.n_calibration.len() != 1 {
            return Err(config_error("n_calibration", "expected a single size".into()));
        }
        if self.alphas.is_empty() {
            return Err(config_error("alphas", "empty list".into()));
        }
        if let Some(a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return Err(config_error("alphas", format!("{a} is outside (0, 1)")));
        }
        if self.bins < 2 {
            return Err(config_error("bins", "need at least 2 bins".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(config_error("learning_rate", "must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lr_floor) {
            return Err(config_error("lr_floor", "must lie in [0, 1]".into()));
        }
        let (lo, hi) = DgpSpec {
            kind: self.dgp,
            seed: 0,
        }
        .feature_range();
        if let Some(x) = self.x_grid.iter().find(|&&x| !(lo..=hi).contains(&x)) {
            return Err(config_error(
                "x_grid",
                format!("{x} is outside the feature range [{lo}, {hi}]"),
            ));
        }
        let scores = match self.score {
            ScoreChoice::All => {
                if self.experiment != Experiment::Toy {
                    return Err(config_error(
                        "score",
                        "`all` is only valid for the toy experiment".into(),
                    ));
                }
                vec![
                    ScoreKind::AbsoluteResidual,
                    ScoreKind::NegativeDensity,
                    ScoreKind::RawResponse,
                ]
            }
            ScoreChoice::One(kind) => vec![kind],
        };
        for &kind in &scores {
            if kind == ScoreKind::ScaledLinfResidual {
                return Err(config_error(
                    "score",
                    "the scaled L∞ residual needs a multivariate outcome".into(),
                ));
            }
        }
        match self.experiment {
            Experiment::Toy => {
                if self.model == Variant::Oracle {
                    for &kind in &scores {
                        synth::oracle_model(
                            &DgpSpec {
                                kind: self.dgp,
                                seed: 0,
                            },
                            kind,
                        )
                        .map_err(|e| config_error("score", e.to_string()))?;
                    }
                } else if self.n_train == 0 {
                    return Err(config_error(
                        "N_train",
                        format!("the {} model needs training data", self.model),
                    ));
                }
            }
            Experiment::Convergence => {
                if self.models.is_empty() || self.models.contains(&Variant::Oracle) {
                    return Err(config_error("models", "list one or more of mdn, spline_flow".into()));
                }
                if self.n_ladder.is_empty() {
                    return Err(config_error("N_ladder", "empty list".into()));
                }
                if self.n_ladder.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(config_error("N_ladder", "must be strictly increasing".into()));
                }
            }
            Experiment::IllustrationKs => {
                if self.dgp != DgpKind::LaplaceHet || scores != [ScoreKind::AbsoluteResidual] {
                    return Err(config_error(
                        "dgp",
                        "the KS illustration uses laplace_het with the absolute score".into(),
                    ));
                }
                if self.x_grid.is_empty() {
                    return Err(config_error("x_grid", "empty list".into()));
                }
            }
            Experiment::MarginalCheck => {
                if self.model == Variant::Oracle {
                    return Err(config_error(
                        "model",
                        "the untrained pipeline needs mdn or spline_flow".into(),
                    ));
                }
                if self.n_train == 0 {
                    return Err(config_error(
                        "N_train",
                        "needed to set the untrained model's input scaling".into(),
                    ));
                }
                for &kind in &scores {
                    synth::oracle_model(
                        &DgpSpec {
                            kind: self.dgp,
                            seed: 0,
                        },
                        kind,
                    )
                    .map_err(|e| config_error("score", e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    /// `(score, α)` pairs of the toy study.
    pub fn toy_pairs(&self) -> Vec<(ScoreKind, f64)> {
        match self.score {
            ScoreChoice::All => vec![
                (ScoreKind::AbsoluteResidual, 0.3),
                (ScoreKind::NegativeDensity, 0.2),
                (ScoreKind::RawResponse, 0.1),
            ],
            ScoreChoice::One(kind) => self.alphas.iter().map(|&a| (kind, a)).collect(),
        }
    }

    /// The single base score of the non-toy experiments.
    pub fn single_score(&self) -> ScoreKind {
        match self.score {
            ScoreChoice::One(kind) => kind,
            ScoreChoice::All => ScoreKind::AbsoluteResidual,
        }
    }

    pub fn calibration_size(&self) -> usize {
        self.n_calibration[0]
    }
}

pub fn config_error(field: &str, message: String) -> Error {
    Error::Config {
        field: field.to_string(),
        message,
    }
}

fn parse_one<T: FromStr>(field: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| config_error(field, format!("`{value}`: {e}")))
}

fn parse_list<T: FromStr>(field: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_one(field, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults() {
        let c = ExperimentConfig::parse(
            "# toy\nN_train = 2000\nalphas = 0.1, 0.2\nscore = abs\nmodel=mdn\n",
            Experiment::Toy,
        )
        .unwrap();
        assert_eq!(c.n_train, 2000);
        assert_eq!(c.alphas, vec![0.1, 0.2]);
        assert_eq!(c.model, Variant::Mdn);
        assert_eq!(
            c.toy_pairs(),
            vec![(ScoreKind::AbsoluteResidual, 0.1), (ScoreKind::AbsoluteResidual, 0.2)]
        );
        assert_eq!(c.n_test, 5000);
    }

    fn field_of(text: &str, experiment: Experiment) -> String {
        match ExperimentConfig::parse(text, experiment) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of("N_train = 0\nmodel = mdn", Experiment::Toy), "N_train");
        assert_eq!(field_of("alphas = 0.1, 1.5", Experiment::Toy), "alphas");
        assert_eq!(field_of("n_test = many", Experiment::Toy), "n_test");
        assert_eq!(field_of("colour = blue", Experiment::Toy), "colour");
        assert_eq!(field_of("experiment = toy", Experiment::Convergence), "experiment");
        assert_eq!(field_of("n_calibration = 10, 20", Experiment::Toy), "n_calibration");
        assert_eq!(field_of("models = oracle", Experiment::Convergence), "models");
        assert_eq!(field_of("seed = 1\nseed = 2", Experiment::Toy), "seed");
        assert_eq!(
            field_of("score = raw\nmodel = oracle", Experiment::MarginalCheck),
            "model"
        );
    }

    #[test]
    fn oracle_toy_allows_no_training_data() {
        let c = ExperimentConfig::parse("N_train = 0\nmodel = oracle", Experiment::Toy).unwrap();
        assert_eq!(c.n_train, 0);
    }
}
