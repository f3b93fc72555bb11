//! Conditional versus marginal score CDFs on the Laplace model and the
//! Monte-Carlo conditional coverage gap they bound.

use std::path::PathBuf;

use rayon::prelude::*;

use super::{derive_seed, num, ExperimentConfig, OutputDir};
use crate::conformal::calibrate;
use crate::diagnostics::ks_distance_functions;
use crate::error::Result;
use crate::random;
use crate::scores::ScoreKind;
use crate::synth::{draw_point, laplace_rate, oracle_marginal_cdf, oracle_score_cdf, DgpSpec};

/// Upper end of the score grid.
const T_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KsRow {
    pub x: f64,
    pub d_ks: f64,
    pub conditional_coverage: f64,
    pub marginal_coverage: f64,
    /// `|conditional − marginal|`
    pub gap: f64,
    pub stderr: f64,
}

impl KsRow {
    pub fn within_band(&self) -> bool {
        self.gap <= self.d_ks + 3.0 * self.stderr
    }
}

#[derive(Debug, Clone)]
pub struct KsReport {
    pub rows: Vec<KsRow>,
    pub manifest: PathBuf,
}

/// Per-trial hit counts: conditional hits per x, the marginal hit, and the
/// paired differences needed for the standard error.
#[derive(Clone)]
struct Tally {
    conditional: Vec<u64>,
    marginal: u64,
    diff: Vec<i64>,
    diff_sq: Vec<u64>,
}

impl Tally {
    fn zero(k: usize) -> Self {
        Self {
            conditional: vec![0; k],
            marginal: 0,
            diff: vec![0; k],
            diff_sq: vec![0; k],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.marginal += other.marginal;
        for i in 0..self.conditional.len() {
            self.conditional[i] += other.conditional[i];
            self.diff[i] += other.diff[i];
            self.diff_sq[i] += other.diff_sq[i];
        }
        self
    }
}

pub fn run_illustration_ks(config: &ExperimentConfig) -> Result<KsReport> {
    config.validate()?;
    let spec = DgpSpec {
        kind: config.dgp,
        seed: config.seed,
    };
    let steps = config.grid_points.max(2) - 1;
    let t_grid: Vec<f64> = (0..=steps).map(|i| T_MAX * i as f64 / steps as f64).collect();
    let alpha = config.alphas[0];
    let n = config.calibration_size();
    let xs = &config.x_grid;

    let conditional = |x: f64, t: f64| oracle_score_cdf(&spec, ScoreKind::AbsoluteResidual, x, t);
    let marginal = |t: f64| oracle_marginal_cdf(&spec, t);
    let d_ks: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let f = |t: f64| conditional(x, t).expect("absolute score");
            ks_distance_functions(f, marginal, &t_grid)
        })
        .collect();

    let mc_seed = derive_seed(config.seed, 1);
    let tally = (0..config.trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = random::stream(mc_seed, k as u64);
            let scores: Vec<f64> = (0..n).map(|_| draw_point(spec.kind, &mut rng).1.abs()).collect();
            let threshold = calibrate(&scores, alpha)?;
            let mut t = Tally::zero(xs.len());
            let m = threshold.admits(draw_point(spec.kind, &mut rng).1.abs());
            t.marginal = m as u64;
            for (i, &x) in xs.iter().enumerate() {
                let s = -random::open_unit(&mut rng).ln() / laplace_rate(x);
                let c = threshold.admits(s);
                let d = c as i64 - m as i64;
                t.conditional[i] = c as u64;
                t.diff[i] = d;
                t.diff_sq[i] = (d * d) as u64;
            }
            Ok::<_, crate::Error>(t)
        })
        .try_reduce(|| Tally::zero(xs.len()), |a, b| Ok(a.merge(b)))?;

    let trials = config.trials as f64;
    let marginal_coverage = tally.marginal as f64 / trials;
    let rows: Vec<KsRow> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mean = tally.diff[i] as f64 / trials;
            let var = (tally.diff_sq[i] as f64 / trials - mean * mean).max(0.0);
            let conditional_coverage = tally.conditional[i] as f64 / trials;
            KsRow {
                x,
                d_ks: d_ks[i],
                conditional_coverage,
                marginal_coverage,
                gap: (conditional_coverage - marginal_coverage).abs(),
                stderr: (var / trials).sqrt(),
            }
        })
        .collect();
    for r in &rows {
        if !r.within_band() {
            log::warn!("x={}: gap {:.4} exceeds d_KS {:.4} + 3σ", r.x, r.gap, r.d_ks);
        }
    }

    let mut out = OutputDir::create(&config.out)?;
    let mut curves = Vec::new();
    for &x in xs {
        for &t in &t_grid {
            curves.push(vec!["conditional".to_string(), num(x), num(t), num(conditional(x, t)?)]);
        }
    }
    curves.extend(
        t_grid
            .iter()
            .map(|&t| vec!["marginal".to_string(), String::new(), num(t), num(marginal(t))]),
    );
    out.csv("cdf_curves.csv", &["curve", "x", "t", "cdf"], curves)?;
    out.csv(
        "ks.csv",
        &[
            "x",
            "d_ks",
            "conditional_coverage",
            "marginal_coverage",
            "gap",
            "stderr",
            "within_band",
        ],
        rows.iter().map(|r| {
            vec![
                num(r.x),
                num(r.d_ks),
                num(r.conditional_coverage),
                num(r.marginal_coverage),
                num(r.gap),
                num(r.stderr),
                r.within_band().to_string(),
            ]
        }),
    )?;
    let manifest = out.finish(config)?;
    Ok(KsReport { rows, manifest })
}
