//! Evaluation metrics: Kolmogorov–Smirnov distances, binned conditional
//! coverage (gap, MAE, L¹ gap over an α-grid), k-means bins, forward KL by
//! quadrature, Monte-Carlo HPD volume and the oracle inclusion check.

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{RegionProvider, Threshold};
use crate::density::{ConditionalScoreModel, MdnModel, OracleModel, SplineFlowModel};
use crate::error::{Error, Result};
use crate::pit::PitPipeline;
use crate::quadrature;
use crate::random;
use crate::scores::Dataset;

/// `sup_t |F(t) − G(t)|`, evaluated on `grid` and on successive midpoint
/// refinements until the maximum moves by less than `1e−4` on two
/// consecutive doublings or the grid reaches 2¹⁶ points.
pub fn ks_distance_functions(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, grid: &[f64]) -> f64 {
    const MAX_POINTS: usize = 1 << 16;
    let mut points = grid.to_vec();
    let mut best = points.iter().map(|&t| (f(t) - g(t)).abs()).fold(0.0, f64::max);
    let mut quiet = 0;
    while points.len() > 1 && points.len() < MAX_POINTS {
        let mids: Vec<f64> = points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let next = mids.iter().map(|&t| (f(t) - g(t)).abs()).fold(best, f64::max);
        let mut merged = Vec::with_capacity(points.len() + mids.len());
        for (p, m) in points.iter().zip(&mids) {
            merged.push(*p);
            merged.push(*m);
        }
        merged.push(*points.last().expect("nonempty"));
        points = merged;
        let change = next - best;
        best = next;
        quiet = if change < 1e-4 { quiet + 1 } else { 0 };
        if quiet == 2 {
            break;
        }
    }
    best
}

/// One-sample KS statistic of `samples` against `Unif(0, 1)`.
pub fn ks_distance_sample_vs_uniform(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("KS samples"));
    }
    let mut u = samples.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    Ok(u.iter().enumerate().fold(0.0, |d, (i, &v)| {
        let above = (i + 1) as f64 / n - v;
        let below = v - i as f64 / n;
        d.max(above).max(below)
    }))
}

/// Asymptotic critical value of the one-sample KS statistic with Stephens'
/// finite-sample correction. Supported levels: 0.10, 0.05, 0.01.
pub fn ks_critical_value(n: usize, level: f64) -> Result<f64> {
    const TABLE: [(f64, f64); 3] = [(0.10, 1.22385), (0.05, 1.35810), (0.01, 1.62762)];
    let c = TABLE
        .iter()
        .find(|(a, _)| (a - level).abs() < 1e-12)
        .map(|&(_, c)| c)
        .ok_or_else(|| Error::InvalidArgument(format!("no KS critical value tabulated for level {level}")))?;
    if n == 0 {
        return Err(Error::Empty("KS samples"));
    }
    let rn = (n as f64).sqrt();
    Ok(c / (rn + 0.12 + 0.11 / rn))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsTest {
    pub statistic: f64,
    pub critical: f64,
    pub level: f64,
    pub passed: bool,
}

/// KS test of uniformity at `level`.
pub fn ks_test_uniform(samples: &[f64], level: f64) -> Result<KsTest> {
    let statistic = ks_distance_sample_vs_uniform(samples)?;
    let critical = ks_critical_value(samples.len(), level)?;
    Ok(KsTest {
        statistic,
        critical,
        level,
        passed: statistic <= critical,
    })
}

/// Partition of feature space into numbered bins.
pub trait Binning: Sync {
    fn num_bins(&self) -> usize;

    fn assign(&self, x: &[f64]) -> usize;
}

/// `k` equal-width bins of the first feature on `[lo, hi]`; points outside
/// go to the end bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBins {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl UniformBins {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::InvalidArgument(format!(
                "uniform bins need lo < hi and at least one bin, got [{lo}, {hi}] / {bins}"
            )));
        }
        Ok(Self { lo, hi, bins })
    }
}

impl Binning for UniformBins {
    fn num_bins(&self) -> usize {
        self.bins
    }

    fn assign(&self, x: &[f64]) -> usize {
        let r = (x[0] - self.lo) / (self.hi - self.lo) * self.bins as f64;
        (r.max(0.0) as usize).min(self.bins - 1)
    }
}

/// k-means on z-scored features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansModel {
    /// Centers in standardized coordinates.
    centers: Vec<Vec<f64>>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Bin of each fitted point.
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

impl KmeansModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Centers in the original feature units.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        self.centers
            .iter()
            .map(|c| {
                c.iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(&z, (&m, &s))| z * s + m)
                    .collect()
            })
            .collect()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}

impl Binning for KmeansModel {
    fn num_bins(&self) -> usize {
        self.k()
    }

    fn assign(&self, x: &[f64]) -> usize {
        nearest(&self.centers, &self.standardize(x)).0
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center and its squared distance; ties go to the lowest index.
fn nearest(centers: &[Vec<f64>], z: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(c, z);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Seeded k-means++ initialization followed by Lloyd iterations until the
/// assignment stops changing (at most 100 rounds).
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KmeansModel> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-means needs K ≥ 2, got {k}")));
    }
    let dim = points.first().ok_or(Error::Empty("k-means points"))?.len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidArgument("k-means points of unequal dimension".into()));
    }
    let mut distinct: Vec<Vec<u64>> = points.iter().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if k > distinct.len() {
        return Err(Error::InvalidArgument(format!(
            "K = {k} exceeds the {} distinct points",
            distinct.len()
        )));
    }

    let n = points.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            let sd = (points.iter().map(|p| (p[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            p.iter()
                .zip(mean.iter().zip(&scale))
                .map(|(&v, (&m, &s))| (v - m) / s)
                .collect()
        })
        .collect();

    let mut rng = random::stream(seed, 0x6b6d);
    let mut centers = vec![z.choose(&mut rng).expect("nonempty").clone()];
    let mut d2: Vec<f64> = z.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut pick = d2
            .iter()
            .rposition(|&d| d > 0.0)
            .expect("a point away from every center");
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && r < d {
                pick = i;
                break;
            }
            r -= d;
        }
        centers.push(z[pick].clone());
        for (d, p) in d2.iter_mut().zip(&z) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let mut assignments = vec![usize::MAX; z.len()];
    let mut iterations = 0;
    for _ in 0..100 {
        iterations += 1;
        let next: Vec<usize> = z.iter().map(|p| nearest(&centers, p).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in z.iter().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for ((c, s), &m) in centers.iter_mut().zip(sums).zip(&counts) {
            if m > 0 {
                *c = s.into_iter().map(|v| v / m as f64).collect();
            }
        }
    }
    let inertia = z.iter().zip(&assignments).map(|(p, &a)| sq_dist(p, &centers[a])).sum();
    Ok(KmeansModel {
        centers,
        mean,
        scale,
        assignments,
        inertia,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinCoverage {
    pub bin: usize,
    pub count: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub alpha: f64,
    pub bins: Vec<BinCoverage>,
    pub overall: f64,
    /// `max_k c_k − min_k c_k`
    pub gap: f64,
    /// Count-weighted mean of `|c_k − overall|`.
    pub mae: f64,
}

impl GapReport {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["alpha", "bin", "count", "coverage"]).map_err(csv_err)?;
        for b in &self.bins {
            w.write_record([
                self.alpha.to_string(),
                b.bin.to_string(),
                b.count.to_string(),
                b.coverage.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Gap report from per-point hits and bin labels.
pub fn coverage_report(hits: &[bool], bins: &[usize], num_bins: usize, alpha: f64) -> Result<GapReport> {
    if hits.len() != bins.len() {
        return Err(Error::DimensionMismatch {
            what: "bin labels",
            expected: hits.len(),
            got: bins.len(),
        });
    }
    let mut counts = vec![0usize; num_bins];
    let mut covered = vec![0usize; num_bins];
    for (&h, &b) in hits.iter().zip(bins) {
        counts[b] += 1;
        covered[b] += h as usize;
    }
    if let Some(bin) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyBin { bin });
    }
    let total = hits.len() as f64;
    let overall = covered.iter().sum::<usize>() as f64 / total;
    let bins: Vec<BinCoverage> = (0..num_bins)
        .map(|bin| BinCoverage {
            bin,
            count: counts[bin],
            coverage: covered[bin] as f64 / counts[bin] as f64,
        })
        .collect();
    let max = bins.iter().map(|b| b.coverage).fold(f64::NEG_INFINITY, f64::max);
    let min = bins.iter().map(|b| b.coverage).fold(f64::INFINITY, f64::min);
    let mae = bins
        .iter()
        .map(|b| b.count as f64 * (b.coverage - overall).abs())
        .sum::<f64>()
        / total;
    Ok(GapReport {
        alpha,
        bins,
        overall,
        gap: max - min,
        mae,
    })
}

fn bin_labels(test: &Dataset<f64>, bins: &dyn Binning) -> Vec<usize> {
    test.iter().map(|s| bins.assign(&s.features)).collect()
}

/// Per-point membership of every test point at every level (rows = points).
pub fn membership_matrix(
    regions: &dyn RegionProvider<f64>,
    test: &Dataset<f64>,
    alphas: &[f64],
) -> Result<Vec<Vec<bool>>> {
    test.samples()
        .par_iter()
        .map(|s| regions.membership_grid(&s.features, &s.outcome, alphas))
        .collect()
}

/// Binned conditional coverage of the level-`1−α` regions on `test`.
pub fn conditional_gap_mae(
    regions: &dyn RegionProvider<f64>,
    test: &Dataset<f64>,
    bins: &dyn Binning,
    alpha: f64,
) -> Result<GapReport> {
    let hits: Vec<bool> = membership_matrix(regions, test, &[alpha])?
        .into_iter()
        .map(|r| r[0])
        .collect();
    coverage_report(&hits, &bin_labels(test, bins), bins.num_bins(), alpha)
}

/// Count-weighted mean over bins of `max_α |c_k(α) − c̄(α)|`, from a
/// membership matrix (rows = points, columns = levels).
pub fn l1_gap_from_membership(membership: &[Vec<bool>], labels: &[usize], num_bins: usize) -> Result<f64> {
    let levels = membership.first().map_or(0, Vec::len);
    if levels == 0 {
        return Err(Error::Empty("alpha grid"));
    }
    let mut worst = vec![0.0_f64; num_bins];
    let mut counts = vec![0usize; num_bins];
    labels.iter().for_each(|&b| counts[b] += 1);
    for a in 0..levels {
        let hits: Vec<bool> = membership.iter().map(|r| r[a]).collect();
        let report = coverage_report(&hits, labels, num_bins, f64::NAN)?;
        for b in &report.bins {
            worst[b.bin] = worst[b.bin].max((b.coverage - report.overall).abs());
        }
    }
    let total = labels.len() as f64;
    Ok(worst.iter().zip(&counts).map(|(w, &c)| w * c as f64).sum::<f64>() / total)
}

/// Binned estimate of `E[sup_α |c(α | X) − c̄(α)|]` over `alpha_grid`.
pub fn l1_gap_over_grid(
    regions: &dyn RegionProvider<f64>,
    test: &Dataset<f64>,
    bins: &dyn Binning,
    alpha_grid: &[f64],
) -> Result<f64> {
    if let Some(&a) = alpha_grid.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidAlpha(a));
    }
    let membership = membership_matrix(regions, test, alpha_grid)?;
    l1_gap_from_membership(&membership, &bin_labels(test, bins), bins.num_bins())
}

/// `k/(m+1)` for `k = 1..=m`.
pub fn alpha_grid(m: usize) -> Vec<f64> {
    (1..=m).map(|k| k as f64 / (m + 1) as f64).collect()
}

/// `∫ p log(p/q)` over `support` by adaptive trapezoid quadrature (tolerance
/// `1e−4`).
///
/// The integrand is written as `p log(p/q) − p + q`, which is pointwise
/// nonnegative and integrates to the same value for normalized densities.
pub fn forward_kl_1d(p: impl Fn(f64) -> f64, q: impl Fn(f64) -> f64, support: (f64, f64)) -> Result<f64> {
    let integrand = |t: f64| -> Result<f64> {
        let (pv, qv) = (p(t), q(t));
        for v in [pv, qv] {
            if v < 0.0 || v.is_nan() {
                return Err(Error::NegativeDensity { value: v, at: t });
            }
        }
        if pv == 0.0 {
            return Ok(qv);
        }
        if qv == 0.0 {
            return Err(Error::NonFinite("KL integrand: q vanishes where p is positive"));
        }
        Ok(pv * (pv / qv).ln() - pv + qv)
    };
    let kl = quadrature::adaptive_trapezoid(integrand, support.0, support.1, 1e-4)?;
    debug_assert!(kl >= 0.0);
    Ok(kl)
}

/// Forward KL between two conditional score models at `x`.
pub fn model_kl(
    p: &dyn ConditionalScoreModel<f64>,
    q: &dyn ConditionalScoreModel<f64>,
    x: &[f64],
    support: (f64, f64),
) -> Result<f64> {
    forward_kl_1d(
        |t| p.log_density(x, t).map_or(f64::NAN, f64::exp),
        |t| q.log_density(x, t).map_or(f64::NAN, f64::exp),
        support,
    )
}

/// A conditional density that can be evaluated and sampled.
pub trait SampleableDensity: Sync {
    fn density(&self, x: &[f64], y: f64) -> Result<f64>;

    fn sample(&self, _x: &[f64], _rng: &mut rand_chacha::ChaCha8Rng) -> Result<f64> {
        Err(Error::UnsupportedScore("sampling"))
    }
}

macro_rules! inverse_cdf_sampler {
    ($($model:ty),*) => {$(
        impl SampleableDensity for $model {
            fn density(&self, x: &[f64], y: f64) -> Result<f64> {
                Ok(self.log_density(x, y)?.exp())
            }

            fn sample(&self, x: &[f64], rng: &mut rand_chacha::ChaCha8Rng) -> Result<f64> {
                self.inverse_cdf(x, random::open_unit(rng))
            }
        }
    )*};
}

inverse_cdf_sampler!(OracleModel<f64>, MdnModel<f64>, SplineFlowModel<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub stderr: f64,
}

/// Monte-Carlo estimate of `Vol{y : p(y|x) ≥ τ} = E_{Y∼p}[1{p(Y) ≥ τ}/p(Y)]`.
pub fn hpd_volume_mc(
    density: &dyn SampleableDensity,
    x: &[f64],
    tau: f64,
    draws: usize,
    seed: u64,
) -> Result<VolumeEstimate> {
    if !(tau > 0.0) || draws == 0 {
        return Err(Error::InvalidArgument(format!(
            "HPD volume needs τ > 0 and B ≥ 1, got {tau}, {draws}"
        )));
    }
    let mut rng = random::stream(seed, 0x687064);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let y = density.sample(x, &mut rng)?;
        let p = density.density(x, y)?;
        let v = if p >= tau { 1.0 / p } else { 0.0 };
        sum += v;
        sum_sq += v * v;
    }
    let b = draws as f64;
    let volume = sum / b;
    let var = if draws > 1 {
        (sum_sq - b * volume * volume).max(0.0) / (b - 1.0)
    } else {
        0.0
    };
    Ok(VolumeEstimate {
        volume,
        stderr: (var / b).sqrt(),
    })
}

/// `d_KS + √(ln(2/δ)/(2n)) + 2/n`.
pub fn inclusion_slack(d_ks: f64, n: usize, delta: f64) -> f64 {
    let n = n as f64;
    d_ks + ((2.0 / delta).ln() / (2.0 * n)).sqrt() + 2.0 / n
}

/// Whether `C*_{1−α−L̂}(x) ⊆ Ĉ_{1−α}(x) ⊆ C*_{1−α+L̂}(x)` fails at any of
/// `test_xs`, with levels truncated to `[0, 1]`.
///
/// `oracle` is the true conditional CDF of the base score and `d_ks(x)` the
/// distance between the corrected score's conditional and marginal laws.
/// Both oracle regions are sublevel sets of the base score, so the inclusions
/// reduce to comparing `F*(t̂(x) | x)` with the two levels.
pub fn oracle_inclusion_violated(
    pipe: &PitPipeline<f64>,
    oracle: &dyn ConditionalScoreModel<f64>,
    alpha: f64,
    delta: f64,
    test_xs: &[Vec<f64>],
    d_ks: &dyn Fn(&[f64]) -> f64,
) -> Result<bool> {
    let n = pipe.calibration_scores().len();
    let q_hat = pipe.threshold(alpha)?;
    for x in test_xs {
        let slack = inclusion_slack(d_ks(x), n, delta);
        let lower = 1.0 - alpha - slack;
        let upper = 1.0 - alpha + slack;
        let level = match pipe.score().base_threshold(x, q_hat)? {
            None => 0.0,
            Some(Threshold::Infinite) => 1.0,
            Some(Threshold::Finite(t)) => oracle.cdf(x, t)?,
        };
        let inner_ok = lower <= 0.0 || level >= lower - 1e-12;
        let outer_ok = upper >= 1.0 || level <= upper + 1e-12;
        if !(inner_ok && outer_ok) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Fraction of calibration resamples whose pipeline violates the oracle
/// inclusion at some test point. `build(r)` calibrates on resample `r`.
pub fn oracle_inclusion_check(
    build: impl Fn(u64) -> Result<PitPipeline<f64>> + Sync,
    oracle: &dyn ConditionalScoreModel<f64>,
    alpha: f64,
    delta: f64,
    test_xs: &[Vec<f64>],
    d_ks: &(dyn Fn(&[f64]) -> f64 + Sync),
    resamples: usize,
) -> Result<f64> {
    if resamples == 0 {
        return Err(Error::Empty("resamples"));
    }
    let flags = (0..resamples as u64)
        .into_par_iter()
        .map(|r| oracle_inclusion_violated(&build(r)?, oracle, alpha, delta, test_xs, d_ks))
        .collect::<Result<Vec<bool>>>()?;
    Ok(flags.iter().filter(|&&f| f).count() as f64 / resamples as f64)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "spearman samples",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Empty("spearman samples"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    Ok(cov / (va * vb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        idx[i..=j].iter().for_each(|&k| r[k] = avg);
        i = j + 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{OracleFamily, OracleModel};
    use crate::real::normal_pdf;

    #[test]
    fn ks_sample_examples() {
        assert!((ks_distance_sample_vs_uniform(&[0.25, 0.75]).unwrap() - 0.25).abs() < 1e-15);
        let lattice: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        assert!((ks_distance_sample_vs_uniform(&lattice).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(ks_distance_sample_vs_uniform(&[0.5]).unwrap(), 0.5);
        assert!(matches!(ks_distance_sample_vs_uniform(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn ks_jump_points_match_dense_grid() {
        let samples = [0.13, 0.4, 0.41, 0.77, 0.9];
        let exact = ks_distance_sample_vs_uniform(&samples).unwrap();
        let n = samples.len() as f64;
        let mut brute = 0.0_f64;
        for i in 0..=200_000 {
            let t = i as f64 / 200_000.0;
            let below = samples.iter().filter(|&&s| s < t).count() as f64 / n;
            let upto = samples.iter().filter(|&&s| s <= t).count() as f64 / n;
            brute = brute.max((upto - t).abs()).max((below - t).abs());
        }
        assert!((exact - brute).abs() < 1e-9, "{exact} vs {brute}");
    }

    #[test]
    fn ks_functions_examples() {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let f = |t: f64| 1.0 - (-t).exp();
        assert_eq!(ks_distance_functions(f, f, &grid), 0.0);
        let g = |t: f64| 1.0 - (-2.0 * t).exp();
        let d = ks_distance_functions(f, g, &grid);
        assert!((d - 0.25).abs() < 1e-4, "{d}");
    }

    #[test]
    fn critical_values() {
        let c = ks_critical_value(100, 0.05).unwrap();
        assert!((c - 1.3581 / (10.0 + 0.12 + 0.011)).abs() < 1e-4);
        assert!(ks_critical_value(100, 0.2).is_err());
    }

    #[test]
    fn kmeans_examples() {
        let pts: Vec<Vec<f64>> = [0.0, 0.1, 0.9, 1.0].iter().map(|&v| vec![v]).collect();
        let m = kmeans_fit(&pts, 2, 7).unwrap();
        let mut c: Vec<f64> = m.centers().into_iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 0.95).abs() < 1e-12);
        assert_eq!(m.assignments[0], m.assignments[1]);
        assert_ne!(m.assignments[1], m.assignments[2]);

        let full = kmeans_fit(&pts, 4, 1).unwrap();
        assert!(full.inertia < 1e-24);
        let mut a = full.assignments.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3]);

        assert!(kmeans_fit(&pts, 5, 1).is_err());
        let dup = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert!(kmeans_fit(&dup, 3, 1).is_err());
    }

    #[test]
    fn kmeans_is_deterministic() {
        let mut rng = random::stream(9, 0);
        let pts: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.random(), rng.random::<f64>() * 10.0])
            .collect();
        let a = kmeans_fit(&pts, 10, 3).unwrap();
        let b = kmeans_fit(&pts, 10, 3).unwrap();
        assert_eq!(a, b);
        for (p, &l) in pts.iter().zip(&a.assignments) {
            assert_eq!(a.assign(p), l);
        }
    }

    #[test]
    fn gap_and_mae_arithmetic() {
        let mut hits = Vec::new();
        let mut bins = Vec::new();
        for (b, covered) in [(0, 16), (1, 18), (2, 19)] {
            for i in 0..20 {
                hits.push(i < covered);
                bins.push(b);
            }
        }
        let r = coverage_report(&hits, &bins, 3, 0.1).unwrap();
        assert!((r.gap - 0.15).abs() < 1e-12);
        let overall: f64 = 53.0 / 60.0;
        let mae = ((0.8 - overall).abs() + (0.9 - overall).abs() + (0.95 - overall).abs()) / 3.0;
        assert!((r.mae - mae).abs() < 1e-12);

        let flat = coverage_report(&[true, false, true, false], &[0, 0, 1, 1], 2, 0.5).unwrap();
        assert_eq!((flat.gap, flat.mae), (0.0, 0.0));

        assert!(matches!(
            coverage_report(&[true], &[0], 2, 0.1),
            Err(Error::EmptyBin { bin: 1 })
        ));
    }

    #[test]
    fn gap_invariant_under_relabeling() {
        let hits = [true, false, true, true, false, true, true];
        let bins = [0, 1, 2, 0, 1, 2, 2];
        let perm = [2, 0, 1];
        let relabeled: Vec<usize> = bins.iter().map(|&b| perm[b]).collect();
        let a = coverage_report(&hits, &bins, 3, 0.2).unwrap();
        let b = coverage_report(&hits, &relabeled, 3, 0.2).unwrap();
        assert_eq!(a.gap, b.gap);
        assert!((a.mae - b.mae).abs() < 1e-15);
    }

    #[test]
    fn l1_gap_single_level_equals_max_statistic() {
        let hits = [true, false, true, true, false, true];
        let bins = [0, 0, 1, 1, 2, 2];
        let rows: Vec<Vec<bool>> = hits.iter().map(|&h| vec![h]).collect();
        let l1 = l1_gap_from_membership(&rows, &bins, 3).unwrap();
        assert!((l1 - coverage_report(&hits, &bins, 3, 0.1).unwrap().mae).abs() < 1e-15);
    }

    #[test]
    fn uniform_bins_cover_range() {
        let b = UniformBins::new(0.0, 1.0, 4).unwrap();
        assert_eq!(b.assign(&[0.0]), 0);
        assert_eq!(b.assign(&[0.26]), 1);
        assert_eq!(b.assign(&[1.0]), 3);
        assert_eq!(b.assign(&[-3.0]), 0);
    }

    #[test]
    fn kl_closed_forms() {
        let n0 = |t: f64| normal_pdf(t);
        let n1 = |t: f64| normal_pdf(t - 1.0);
        assert!(forward_kl_1d(n0, n0, (-11.0, 11.0)).unwrap().abs() < 1e-6);
        let kl = forward_kl_1d(n0, n1, (-10.0, 11.0)).unwrap();
        assert!((kl - 0.5).abs() < 1e-3, "{kl}");
        let e1 = |t: f64| (-t).exp();
        let e2 = |t: f64| 2.0 * (-2.0 * t).exp();
        let kl = forward_kl_1d(e1, e2, (0.0, 11.0)).unwrap();
        assert!((kl - (1.0 - 2.0_f64.ln())).abs() < 1e-3, "{kl}");
        let neg = forward_kl_1d(|t| t - 1.0, n0, (0.0, 2.0));
        assert!(matches!(neg, Err(Error::NegativeDensity { .. })));
    }

    struct UnitUniform;
    impl SampleableDensity for UnitUniform {
        fn density(&self, _: &[f64], y: f64) -> Result<f64> {
            Ok(if (0.0..=1.0).contains(&y) { 1.0 } else { 0.0 })
        }
        fn sample(&self, _: &[f64], rng: &mut rand_chacha::ChaCha8Rng) -> Result<f64> {
            Ok(rng.random())
        }
    }

    struct NoSampler;
    impl SampleableDensity for NoSampler {
        fn density(&self, _: &[f64], _: f64) -> Result<f64> {
            Ok(1.0)
        }
    }

    #[test]
    fn hpd_volume_examples() {
        let normal = OracleModel::new(OracleFamily::NormalScale, |_: &[f64]| 1.0);
        let v = hpd_volume_mc(&normal, &[0.0], normal_pdf(1.96), 10_000, 1).unwrap();
        assert!((v.volume - 3.92).abs() < 3.0 * v.stderr, "{v:?}");
        assert_eq!(hpd_volume_mc(&normal, &[0.0], 1.0, 100, 1).unwrap().volume, 0.0);
        let u = hpd_volume_mc(&UnitUniform, &[], 1e-300, 1000, 1).unwrap();
        assert!((u.volume - 1.0).abs() < 1e-12);
        assert!(matches!(
            hpd_volume_mc(&NoSampler, &[], 0.1, 10, 1),
            Err(Error::UnsupportedScore(_))
        ));
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn slack_truncation_makes_inclusion_trivial() {
        assert!(inclusion_slack(0.0, 2, 0.1) >= 1.0);
    }
}
