//! Split conformal calibration.
//!
//! Given calibration scores `S_1..S_n` the threshold at level `1 − α` is the
//! `k = ⌈(n+1)(1−α)⌉`-th smallest element of `{S_i} ∪ {+∞}`, and the region at
//! `x` is the closed sublevel set `{y : s(x, y) ≤ threshold}`. Under
//! exchangeability its marginal coverage lies in `[1−α, 1−α + 1/(n+1))`; the
//! upper end assumes the scores have no ties, which is why ties are broken by
//! a tiny seeded jitter before calibration.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::random;
use crate::real::Real;
use crate::scores::{Interval, NonconformityScore};

/// Calibrated score threshold; `Infinite` is the `+∞` order-statistic
/// sentinel and admits every score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold<T> {
    Finite(T),
    Infinite,
}

impl<T: Real> Threshold<T> {
    #[inline]
    pub fn admits(&self, score: T) -> bool {
        match *self {
            Threshold::Finite(t) => score <= t,
            Threshold::Infinite => true,
        }
    }

    pub fn finite(&self) -> Option<T> {
        match *self {
            Threshold::Finite(t) => Some(t),
            Threshold::Infinite => None,
        }
    }

    /// Applies a nondecreasing map to a finite threshold.
    pub fn map(self, f: impl FnOnce(T) -> T) -> Self {
        match self {
            Threshold::Finite(t) => Threshold::Finite(f(t)),
            Threshold::Infinite => Threshold::Infinite,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Order-statistic rank `k = ⌈(n+1)(1−α)⌉`.
pub fn quantile_rank(n: usize, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    let raw = (n as f64 + 1.0) * (1.0 - alpha);
    // Guard against (n+1)(1-α) landing a rounding error above an integer.
    let nearest = raw.round();
    let k = if (raw - nearest).abs() < 1e-9 * raw.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    Ok(k as usize)
}

/// The split-conformal threshold for unsorted `scores`.
pub fn calibrate<T: Real>(scores: &[T], alpha: f64) -> Result<Threshold<T>> {
    if scores.is_empty() {
        return Err(Error::Empty("calibration scores"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("calibration scores"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    threshold_from_sorted(&sorted, alpha)
}

fn threshold_from_sorted<T: Real>(sorted: &[T], alpha: f64) -> Result<Threshold<T>> {
    let k = quantile_rank(sorted.len(), alpha)?;
    Ok(if k > sorted.len() {
        Threshold::Infinite
    } else {
        Threshold::Finite(sorted[k.max(1) - 1])
    })
}

/// Sorted calibration scores; thresholds for any `α` are an index lookup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformalCalibrator<T> {
    scores: Vec<T>,
    jittered: bool,
}

const TIE_JITTER: f64 = 1e-12;

impl<T: Real> ConformalCalibrator<T> {
    pub fn new(scores: Vec<T>) -> Result<Self> {
        Self::with_jitter_seed(scores, 0)
    }

    /// Builds the calibrator; exact ties are broken with uniform jitter of
    /// relative magnitude `1e-12` drawn from stream `seed`.
    pub fn with_jitter_seed(mut scores: Vec<T>, seed: u64) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("calibration scores"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("calibration scores"));
        }
        scores.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let tied = scores.windows(2).any(|w| w[0] == w[1]);
        if tied {
            log::debug!("tied calibration scores detected; applying seeded jitter");
            let mut rng = random::stream(seed, 0x7469_6573);
            for s in scores.iter_mut() {
                let u: f64 = rng.random::<f64>() - 0.5;
                let magnitude = s.abs().max(T::one());
                *s = *s + T::lit(u * TIE_JITTER) * magnitude;
            }
            scores.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        }
        Ok(Self { scores, jittered: tied })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn sorted_scores(&self) -> &[T] {
        &self.scores
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }

    pub fn threshold(&self, alpha: f64) -> Result<Threshold<T>> {
        threshold_from_sorted(&self.scores, alpha)
    }
}

/// `{y : score(x, y) ≤ threshold}` at one miscoverage level.
#[derive(Clone, Copy)]
pub struct PredictionRegion<'a, T: Real> {
    pub score: &'a dyn NonconformityScore<T>,
    pub threshold: Threshold<T>,
    pub alpha: f64,
}

impl<'a, T: Real> PredictionRegion<'a, T> {
    pub fn contains(&self, x: &[T], y: &[T]) -> Result<bool> {
        if self.threshold == Threshold::Infinite {
            return Ok(true);
        }
        Ok(self.threshold.admits(self.score.evaluate(x, y)?))
    }

    /// The region at `x` as disjoint intervals (1-D outcomes only).
    pub fn intervals(&self, x: &[T]) -> Result<Vec<Interval<T>>> {
        self.score.sublevel_intervals(x, self.threshold)
    }
}

/// Anything that answers "is `y` in the level-`1−α` region at `x`".
pub trait RegionProvider<T: Real>: Sync {
    fn contains(&self, x: &[T], y: &[T], alpha: f64) -> Result<bool>;

    fn membership_grid(&self, x: &[T], y: &[T], alphas: &[f64]) -> Result<Vec<bool>> {
        alphas.iter().map(|&a| self.contains(x, y, a)).collect()
    }
}

/// A score paired with its calibrator.
pub struct SplitConformal<T: Real, S> {
    score: S,
    calibrator: ConformalCalibrator<T>,
}

impl<T: Real, S: NonconformityScore<T>> SplitConformal<T, S> {
    pub fn new(score: S, calibrator: ConformalCalibrator<T>) -> Self {
        Self { score, calibrator }
    }

    /// Scores the calibration set and builds the calibrator.
    pub fn calibrate(score: S, calibration: &crate::scores::Dataset<T>) -> Result<Self> {
        let scores = calibration.scores(&score)?;
        Ok(Self::new(score, ConformalCalibrator::new(scores)?))
    }

    pub fn score(&self) -> &S {
        &self.score
    }

    pub fn calibrator(&self) -> &ConformalCalibrator<T> {
        &self.calibrator
    }

    pub fn region(&self, alpha: f64) -> Result<PredictionRegion<'_, T>> {
        Ok(PredictionRegion {
            score: &self.score,
            threshold: self.calibrator.threshold(alpha)?,
            alpha,
        })
    }
}

impl<T: Real, S: NonconformityScore<T>> RegionProvider<T> for SplitConformal<T, S> {
    fn contains(&self, x: &[T], y: &[T], alpha: f64) -> Result<bool> {
        self.region(alpha)?.contains(x, y)
    }

    fn membership_grid(&self, x: &[T], y: &[T], alphas: &[f64]) -> Result<Vec<bool>> {
        let s = self.score.evaluate(x, y)?;
        alphas
            .iter()
            .map(|&a| Ok(self.calibrator.threshold(a)?.admits(s)))
            .collect()
    }
}

/// Theoretical marginal coverage bracket `[1−α, 1−α + 1/(n+1)]`.
pub fn marginal_bracket(n: usize, alpha: f64) -> (f64, f64) {
    (1.0 - alpha, 1.0 - alpha + 1.0 / (n as f64 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageEstimate {
    pub coverage: f64,
    pub stderr: f64,
    pub repetitions: usize,
}

/// Monte-Carlo marginal coverage of split conformal prediction.
///
/// `draw(rng, n)` returns `n` calibration scores and the score of one fresh
/// test point. Repetition `r` uses stream `r` of `seed`, so the result does
/// not depend on thread scheduling.
pub fn marginal_coverage_trial<F>(
    draw: F,
    n: usize,
    alpha: f64,
    repetitions: usize,
    seed: u64,
) -> Result<CoverageEstimate>
where
    F: Fn(&mut ChaCha8Rng, usize) -> Result<(Vec<f64>, f64)> + Sync,
{
    check_alpha(alpha)?;
    if repetitions == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "coverage trial needs n ≥ 1 and repetitions ≥ 1".into(),
        ));
    }
    let hits = (0..repetitions)
        .into_par_iter()
        .map(|r| {
            let mut rng = random::stream(seed, r as u64);
            let (cal, test) = draw(&mut rng, n)?;
            Ok(calibrate(&cal, alpha)?.admits(test))
        })
        .collect::<Result<Vec<bool>>>()?;
    let coverage = hits.iter().filter(|&&h| h).count() as f64 / repetitions as f64;
    Ok(CoverageEstimate {
        coverage,
        stderr: (coverage * (1.0 - coverage) / repetitions as f64).sqrt(),
        repetitions,
    })
}
