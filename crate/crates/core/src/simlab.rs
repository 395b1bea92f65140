//! Simulation designs for time-varying sparse coefficients and the scores used to judge fits.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Normal};

use crate::cavi::{fit, FitOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::rng::substream;

pub const DEFAULT_RHO: f64 = 0.98;
pub const DEFAULT_AR_VAR: f64 = 0.1;
pub const DEFAULT_NOISE_VAR: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    AlwaysOn,
    OneSwitch,
    TwoSwitch,
    ShortLived,
    AlwaysZero,
}

impl PatternKind {
    pub fn label(self) -> &'static str {
        match self {
            PatternKind::AlwaysOn => "always-on",
            PatternKind::OneSwitch => "one-switch",
            PatternKind::TwoSwitch => "two-switch",
            PatternKind::ShortLived => "short-lived",
            PatternKind::AlwaysZero => "always-zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefPattern {
    pub kind: PatternKind,
    pub beta: Vec<f64>,
    pub gamma_true: Vec<u8>,
}

/// Stationary AR(1) path `a_t = rho a_{t-1} + e_t`, `e_t ~ N(0, var)`, started from its stationary law.
pub fn ar1_path<R: Rng + ?Sized>(n: usize, rho: f64, var: f64, rng: &mut R) -> Vec<f64> {
    let sd0 = (var / (1.0 - rho * rho)).sqrt();
    let sd = var.sqrt();
    let mut out = Vec::with_capacity(n);
    let mut a = sd0 * rng.sample::<f64, _>(StandardNormal);
    for _ in 0..n {
        out.push(a);
        a = rho * a + sd * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

pub fn gen_always_on<R: Rng + ?Sized>(n: usize, rho: f64, var: f64, rng: &mut R) -> Result<CoefPattern> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("AR coefficient must satisfy |rho| < 1, got {rho}")));
    }
    Ok(CoefPattern {
        kind: PatternKind::AlwaysOn,
        beta: ar1_path(n, rho, var, rng),
        gamma_true: vec![1; n],
    })
}

pub fn gen_always_zero(n: usize) -> CoefPattern {
    CoefPattern {
        kind: PatternKind::AlwaysZero,
        beta: vec![0.0; n],
        gamma_true: vec![0; n],
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(u64::MAX)
}

/// Segment lengths covering `n` periods, drawn as `Pois(mean_len)`.
///
/// Zero draws are skipped. A final segment truncated to less than half its drawn
/// length is merged into the preceding one.
pub fn segment_lengths<R: Rng + ?Sized>(n: usize, mean_len: f64, rng: &mut R) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut covered = 0usize;
    while covered < n {
        let d = poisson(mean_len, rng);
        if d == 0 {
            continue;
        }
        let d = usize::try_from(d).unwrap_or(usize::MAX);
        let take = d.min(n - covered);
        if take < d && 2 * take < d && !out.is_empty() {
            *out.last_mut().unwrap() += take;
        } else {
            out.push(take);
        }
        covered += take;
    }
    out
}

/// Alternating on/off segments with `Pois(n / expected_segments)` lengths.
pub fn gen_switching<R: Rng + ?Sized>(n: usize, expected_segments: usize, rng: &mut R) -> Result<CoefPattern> {
    let kind = match expected_segments {
        2 => PatternKind::OneSwitch,
        4 => PatternKind::TwoSwitch,
        other => return Err(Error::invalid(format!("expected_segments must be 2 or 4, got {other}"))),
    };
    let mut pat = gen_switching_with_mean(n, n as f64 / expected_segments as f64, rng);
    pat.kind = kind;
    Ok(pat)
}

/// Switching pattern with an explicit mean segment length.
pub fn gen_switching_with_mean<R: Rng + ?Sized>(n: usize, mean_len: f64, rng: &mut R) -> CoefPattern {
    let segments = segment_lengths(n, mean_len, rng);
    let mut on = rng.random::<bool>();
    let path = ar1_path(n, DEFAULT_RHO, DEFAULT_AR_VAR, rng);
    let mut gamma = Vec::with_capacity(n);
    for len in &segments {
        gamma.extend(std::iter::repeat_n(u8::from(on), *len));
        on = !on;
    }
    let beta = path.iter().zip(&gamma).map(|(b, &g)| if g == 1 { *b } else { 0.0 }).collect();
    let kind = if segments.len() <= 2 {
        PatternKind::OneSwitch
    } else {
        PatternKind::TwoSwitch
    };
    CoefPattern {
        kind,
        beta,
        gamma_true: gamma,
    }
}

/// One active window of length `Pois(n/10)` placed uniformly.
pub fn gen_short_lived<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CoefPattern {
    let len = (poisson(n as f64 / 10.0, rng) as usize).min(n);
    gen_short_lived_with_len(n, len, rng)
}

pub fn gen_short_lived_with_len<R: Rng + ?Sized>(n: usize, len: usize, rng: &mut R) -> CoefPattern {
    let len = len.min(n);
    if len == 0 {
        return gen_always_zero(n);
    }
    let start = rng.random_range(0..=n - len);
    let path = ar1_path(len, DEFAULT_RHO, DEFAULT_AR_VAR, rng);
    let mut beta = vec![0.0; n];
    let mut gamma = vec![0; n];
    for (k, b) in path.into_iter().enumerate() {
        beta[start + k] = b;
        gamma[start + k] = 1;
    }
    CoefPattern {
        kind: PatternKind::ShortLived,
        beta,
        gamma_true: gamma,
    }
}

pub fn gen_pattern<R: Rng + ?Sized>(kind: PatternKind, n: usize, rng: &mut R) -> Result<CoefPattern> {
    match kind {
        PatternKind::AlwaysOn => gen_always_on(n, DEFAULT_RHO, DEFAULT_AR_VAR, rng),
        PatternKind::OneSwitch => gen_switching(n, 2, rng),
        PatternKind::TwoSwitch => gen_switching(n, 4, rng),
        PatternKind::ShortLived => Ok(gen_short_lived(n, rng)),
        PatternKind::AlwaysZero => Ok(gen_always_zero(n)),
    }
}

/// Predictor design knobs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Design {
    /// AR(1) coefficient in time for each predictor (unit marginal variance).
    pub x_ar: Option<f64>,
    /// Cross-sectional correlation matrix, `p x p` row-major.
    pub correlation: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub kinds: Vec<PatternKind>,
    /// `p` vectors of length `n`.
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<u8>>,
    pub noise: Vec<f64>,
}

/// `y_t = sum_j beta_jt x_{j,t-1} + eps_t`, `eps_t ~ N(0, noise_var)`.
pub fn gen_dataset<R: Rng + ?Sized>(
    patterns: &[CoefPattern],
    noise_var: f64,
    design: &Design,
    rng: &mut R,
) -> Result<(Dataset, Truth)> {
    if patterns.is_empty() {
        return Err(Error::invalid("need at least one pattern"));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::invalid(format!("noise variance must be nonnegative, got {noise_var}")));
    }
    let n = patterns[0].beta.len();
    let p = patterns.len();
    if patterns.iter().any(|pt| pt.beta.len() != n) {
        return Err(Error::invalid("patterns have different lengths"));
    }
    let chol = match &design.correlation {
        Some(c) => {
            if c.len() != p || c.iter().any(|r| r.len() != p) {
                return Err(Error::DimensionMismatch {
                    context: "correlation matrix",
                    expected: p,
                    actual: c.len(),
                });
            }
            let m = DMatrix::from_fn(p, p, |i, j| c[i][j]);
            Some(
                m.cholesky()
                    .ok_or(Error::NotPositiveDefinite { pivot: 0 })?
                    .l(),
            )
        }
        None => None,
    };
    if let Some(phi) = design.x_ar {
        if !(phi.abs() < 1.0) {
            return Err(Error::invalid(format!("x_ar must satisfy |phi| < 1, got {phi}")));
        }
    }
    let mut x = DMatrix::zeros(n, p);
    let mut prev = vec![0.0; p];
    for i in 0..n {
        let e: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let innov: Vec<f64> = match &chol {
            Some(l) => (0..p).map(|r| (0..=r).map(|c| l[(r, c)] * e[c]).sum()).collect(),
            None => e,
        };
        for j in 0..p {
            let v = match design.x_ar {
                Some(phi) if i > 0 => phi * prev[j] + (1.0 - phi * phi).sqrt() * innov[j],
                _ => innov[j],
            };
            x[(i, j)] = v;
            prev[j] = v;
        }
    }
    let sd = noise_var.sqrt();
    let noise: Vec<f64> = (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let y = (0..n)
        .map(|i| noise[i] + (0..p).map(|j| patterns[j].beta[i] * x[(i, j)]).sum::<f64>())
        .collect();
    let names = (0..p).map(|j| format!("x{}", j + 1)).collect();
    let data = Dataset::new(y, x, names)?;
    let truth = Truth {
        kinds: patterns.iter().map(|pt| pt.kind).collect(),
        beta: patterns.iter().map(|pt| pt.beta.clone()).collect(),
        gamma: patterns.iter().map(|pt| pt.gamma_true.clone()).collect(),
        noise,
    };
    Ok((data, truth))
}

fn confusion(gamma_hat: &[f64], gamma_true: &[u8], threshold: f64) -> (usize, usize, usize, usize) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&g, &t) in gamma_hat.iter().zip(gamma_true) {
        match (g > threshold, t == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

/// `2TP / (2TP + FP + FN)` after thresholding; 1 when there is nothing to find and nothing was flagged.
pub fn f1_score(gamma_hat: &[f64], gamma_true: &[u8], threshold: f64) -> f64 {
    let (tp, fp, fn_, _) = confusion(gamma_hat, gamma_true, threshold);
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub fn accuracy(gamma_hat: &[f64], gamma_true: &[u8], threshold: f64) -> f64 {
    let (tp, _, _, tn) = confusion(gamma_hat, gamma_true, threshold);
    (tp + tn) as f64 / gamma_true.len().max(1) as f64
}

/// F1 when the truth has positives, classification accuracy otherwise.
pub fn selection_score(gamma_hat: &[f64], gamma_true: &[u8], threshold: f64) -> f64 {
    if gamma_true.contains(&1) {
        f1_score(gamma_hat, gamma_true, threshold)
    } else {
        accuracy(gamma_hat, gamma_true, threshold)
    }
}

pub fn mse_path(beta_hat: &[f64], beta_true: &[f64]) -> f64 {
    let n = beta_true.len().max(1) as f64;
    beta_hat.iter().zip(beta_true).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}

/// `100 (1 - 0.5 * integral |f - g|)` by the trapezoid rule on `points` nodes over `[lo, hi]`.
pub fn overlap_densities(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    let points = points.max(2);
    let h = (hi - lo) / (points - 1) as f64;
    let mut acc = 0.0;
    let mut prev = (f(lo) - g(lo)).abs();
    for k in 1..points {
        let x = lo + h * k as f64;
        let cur = (f(x) - g(x)).abs();
        acc += 0.5 * h * (prev + cur);
        prev = cur;
    }
    (100.0 * (1.0 - 0.5 * acc)).clamp(0.0, 100.0)
}

/// Marginal variational density of one coefficient: a point mass `1 - weight` at zero plus `weight * N(mean, var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeSlab {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

impl SpikeSlab {
    pub fn gaussian(mean: f64, var: f64) -> Self {
        SpikeSlab { weight: 1.0, mean, var }
    }

    fn slab_pdf(&self, x: f64) -> f64 {
        let sd = self.var.max(1e-300).sqrt();
        self.weight * Normal::new(self.mean, sd).map(|d| d.pdf(x)).unwrap_or(0.0)
    }
}

/// Histogram of samples with Freedman-Diaconis bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    /// Densities (integrating to `mass`).
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn freedman_diaconis(samples: &[f64], mass: f64) -> Option<Histogram> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        let n = s.len();
        let (min, max) = (s[0], s[n - 1]);
        let quant = |q: f64| {
            let pos = q * (n - 1) as f64;
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            s[k] + frac * (s[(k + 1).min(n - 1)] - s[k])
        };
        let iqr = quant(0.75) - quant(0.25);
        let mut width = 2.0 * iqr / (n as f64).cbrt();
        if !(width > 0.0) {
            width = (max - min) / (n as f64).sqrt();
        }
        if !(width > 0.0) {
            width = 1e-6 * min.abs().max(1.0);
        }
        let bins = (((max - min) / width).floor() as usize + 1).min(100_000);
        let width = if bins == 100_000 { (max - min) / (bins - 1) as f64 } else { width };
        let mut counts = vec![0usize; bins];
        for &v in &s {
            let k = (((v - min) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        let scale = mass / (n as f64 * width);
        Some(Histogram {
            lo: min,
            width,
            density: counts.into_iter().map(|c| c as f64 * scale).collect(),
        })
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.width * self.density.len() as f64
    }
}

/// Overlap (in percent) between a spike-and-slab marginal and MCMC draws.
///
/// Exact zeros in `samples` form the empirical point mass; the remaining draws are binned.
pub fn overlap_accuracy(q: &SpikeSlab, samples: &[f64]) -> f64 {
    const SUB: usize = 16;
    if samples.is_empty() {
        return 0.0;
    }
    let zeros = samples.iter().filter(|&&v| v == 0.0).count();
    let p0 = zeros as f64 / samples.len() as f64;
    let q0 = 1.0 - q.weight;
    let nonzero: Vec<f64> = samples.iter().copied().filter(|&v| v != 0.0).collect();
    let mut l1 = (q0 - p0).abs();

    let sd = q.var.max(0.0).sqrt();
    let (q_lo, q_hi) = (q.mean - 10.0 * sd, q.mean + 10.0 * sd);
    match Histogram::freedman_diaconis(&nonzero, 1.0 - p0) {
        None => {
            l1 += q.weight;
        }
        Some(hist) => {
            let trap = |a: f64, b: f64, f: &dyn Fn(f64) -> f64, pieces: usize| -> f64 {
                if b <= a {
                    return 0.0;
                }
                let h = (b - a) / pieces as f64;
                (0..pieces)
                    .map(|k| 0.5 * h * (f(a + h * k as f64) + f(a + h * (k + 1) as f64)))
                    .sum()
            };
            for (k, &d) in hist.density.iter().enumerate() {
                let a = hist.lo + hist.width * k as f64;
                let b = a + hist.width;
                l1 += trap(a, b, &|x| (q.slab_pdf(x) - d).abs(), SUB);
            }
            // slab mass outside the histogram range
            if q.weight > 0.0 && sd > 0.0 {
                let pieces = 400;
                l1 += trap(q_lo.min(hist.lo), hist.lo, &|x| q.slab_pdf(x), pieces);
                l1 += trap(hist.hi(), q_hi.max(hist.hi()), &|x| q.slab_pdf(x), pieces);
            }
        }
    }
    (100.0 * (1.0 - 0.5 * l1)).clamp(0.0, 100.0)
}

/// Overlap (in percent) between `Bernoulli(prob)` and the empirical frequency of ones.
pub fn bernoulli_overlap(prob: f64, samples: &[u8]) -> f64 {
    let freq = samples.iter().filter(|&&g| g == 1).count() as f64 / samples.len().max(1) as f64;
    100.0 * (1.0 - (prob - freq).abs())
}

/// A group of identical predictor patterns in a simulation spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternGroup {
    pub kind: PatternKind,
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_VAR
}

/// Full description of a simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n: usize,
    #[serde(default = "default_noise")]
    pub noise_var: f64,
    #[serde(default)]
    pub design: Design,
    pub predictors: Vec<PatternGroup>,
}

impl SimSpec {
    pub fn kinds(&self) -> Vec<PatternKind> {
        self.predictors
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.kind, g.count))
            .collect()
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Dataset, Truth)> {
        if self.n < 2 {
            return Err(Error::invalid("simulation needs n >= 2"));
        }
        let patterns = self
            .kinds()
            .into_iter()
            .map(|k| gen_pattern(k, self.n, rng))
            .collect::<Result<Vec<_>>>()?;
        gen_dataset(&patterns, self.noise_var, &self.design, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorScore {
    pub replicate: usize,
    pub predictor: usize,
    pub kind: PatternKind,
    /// F1, or classification accuracy for a predictor that is never active.
    pub selection: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub iterations: usize,
    pub converged: bool,
    pub dropped: usize,
    pub scores: Vec<PredictorScore>,
}

/// Scores a fitted replicate against its truth.
pub fn score_fit(replicate: usize, res: &crate::cavi::FitResult, truth: &Truth) -> ReplicateResult {
    let scores = res
        .state
        .predictors
        .iter()
        .enumerate()
        .map(|(j, pred)| PredictorScore {
            replicate,
            predictor: j,
            kind: truth.kinds[j],
            selection: selection_score(&pred.mu_gamma, &truth.gamma[j], 0.5),
            mse: mse_path(&pred.mean_beta(), &truth.beta[j]),
        })
        .collect();
    ReplicateResult {
        replicate,
        iterations: res.iterations,
        converged: res.converged,
        dropped: res.dropped.len(),
        scores,
    }
}

/// Simulates and fits `replicates` datasets in parallel; replicate `r` draws from substream `("data", r)`.
pub fn run_replicates(
    spec: &SimSpec,
    replicates: usize,
    master_seed: u64,
    hyper: &Hyperparams,
    opts: &FitOptions,
) -> Result<Vec<ReplicateResult>> {
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(master_seed, "data", r as u64);
            let (data, truth) = spec.generate(&mut rng)?;
            let res = fit(&data, hyper, opts)?;
            Ok(score_fit(r, &res, &truth))
        })
        .collect()
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: PatternKind,
    pub count: usize,
    pub median_selection: f64,
    pub mean_selection: f64,
    pub median_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub replicates: usize,
    pub converged: usize,
    pub kinds: Vec<KindSummary>,
}

pub fn summarize(results: &[ReplicateResult]) -> Summary {
    let mut kinds: Vec<PatternKind> = results.iter().flat_map(|r| r.scores.iter().map(|s| s.kind)).collect();
    kinds.sort();
    kinds.dedup();
    let kinds = kinds
        .into_iter()
        .map(|k| {
            let sel: Vec<f64> = results
                .iter()
                .flat_map(|r| r.scores.iter().filter(|s| s.kind == k).map(|s| s.selection))
                .collect();
            let mse: Vec<f64> = results
                .iter()
                .flat_map(|r| r.scores.iter().filter(|s| s.kind == k).map(|s| s.mse))
                .collect();
            KindSummary {
                kind: k,
                count: sel.len(),
                median_selection: median(&sel),
                mean_selection: sel.iter().sum::<f64>() / sel.len() as f64,
                median_mse: median(&mse),
            }
        })
        .collect();
    Summary {
        replicates: results.len(),
        converged: results.iter().filter(|r| r.converged).count(),
        kinds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use rand::SeedableRng;

    fn rng(seed: u64) -> StreamRng {
        StreamRng::seed_from_u64(seed)
    }

    #[test]
    fn zero_innovation_path_is_constant() {
        let p = gen_always_on(50, 0.98, 0.0, &mut rng(1)).unwrap();
        assert!(p.beta.iter().all(|&b| b == p.beta[0]));
    }

    #[test]
    fn always_on_autocorrelation() {
        let p = gen_always_on(10_000, 0.98, 0.1, &mut rng(2)).unwrap();
        let b = &p.beta;
        let m = b.iter().sum::<f64>() / b.len() as f64;
        let num: f64 = b.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        let den: f64 = b.iter().map(|v| (v - m) * (v - m)).sum();
        assert!((num / den - 0.98).abs() < 0.02, "acf {}", num / den);
        assert!(p.gamma_true.iter().all(|&g| g == 1));
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(gen_always_on(30, 0.98, 0.1, &mut rng(3)).unwrap(), gen_always_on(30, 0.98, 0.1, &mut rng(3)).unwrap());
        assert_eq!(gen_switching(30, 2, &mut rng(3)).unwrap(), gen_switching(30, 2, &mut rng(3)).unwrap());
        assert_eq!(gen_short_lived(30, &mut rng(3)), gen_short_lived(30, &mut rng(3)));
    }

    #[test]
    fn always_on_rejects_unit_root() {
        assert!(gen_always_on(10, 1.0, 0.1, &mut rng(4)).is_err());
    }

    #[test]
    fn huge_segments_give_one_block() {
        let p = gen_switching_with_mean(100, 1e9, &mut rng(5));
        assert!(p.gamma_true.iter().all(|&g| g == p.gamma_true[0]));
    }

    #[test]
    fn segment_counts_match_design() {
        for (segs, n) in [(2usize, 200usize), (4, 200), (2, 100), (4, 100)] {
            let mut r = rng(6 + segs as u64 + n as u64);
            let reps = 10_000;
            let total: usize = (0..reps).map(|_| segment_lengths(n, n as f64 / segs as f64, &mut r).len()).sum();
            let mean = total as f64 / reps as f64;
            assert!((mean - segs as f64).abs() <= 0.1 * segs as f64, "segs={segs} n={n} mean={mean}");
        }
    }

    #[test]
    fn supports_agree() {
        let mut r = rng(7);
        for _ in 0..200 {
            for p in [
                gen_switching(80, 2, &mut r).unwrap(),
                gen_switching(80, 4, &mut r).unwrap(),
                gen_short_lived(80, &mut r),
                gen_always_on(80, 0.98, 0.1, &mut r).unwrap(),
                gen_always_zero(80),
            ] {
                for (b, g) in p.beta.iter().zip(&p.gamma_true) {
                    assert_eq!(*g == 1, *b != 0.0);
                }
            }
        }
    }

    #[test]
    fn empty_window_is_always_zero() {
        let p = gen_short_lived_with_len(50, 0, &mut rng(8));
        assert_eq!(p.kind, PatternKind::AlwaysZero);
        assert!(p.gamma_true.iter().all(|&g| g == 0));
    }

    #[test]
    fn short_window_statistics() {
        let mut r = rng(9);
        let n = 200;
        let reps = 5_000;
        let mut total = 0usize;
        for _ in 0..reps {
            let p = gen_short_lived(n, &mut r);
            assert_eq!(p.beta.len(), n);
            let on: Vec<usize> = (0..n).filter(|&t| p.gamma_true[t] == 1).collect();
            if let (Some(a), Some(b)) = (on.first(), on.last()) {
                assert_eq!(b - a + 1, on.len());
            }
            total += on.len();
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 20.0).abs() < 0.5, "mean window {mean}");
    }

    #[test]
    fn dataset_noise_and_signal() {
        let pats = vec![gen_always_zero(2_000), gen_always_zero(2_000)];
        let (d, truth) = gen_dataset(&pats, 0.25, &Design::default(), &mut rng(10)).unwrap();
        assert_eq!(d.y, truth.noise);
        let m = d.y.iter().sum::<f64>() / 2_000.0;
        let v = d.y.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / 1_999.0;
        assert!((v - 0.25).abs() < 0.025, "var {v}");

        let pats = vec![gen_always_on(50, 0.98, 0.1, &mut rng(11)).unwrap()];
        let (d, truth) = gen_dataset(&pats, 0.0, &Design::default(), &mut rng(12)).unwrap();
        for i in 0..50 {
            assert_eq!(d.y[i], truth.beta[0][i] * d.x[(i, 0)]);
        }
    }

    #[test]
    fn correlated_design() {
        let pats = vec![gen_always_zero(20_000), gen_always_zero(20_000)];
        let design = Design {
            x_ar: Some(0.5),
            correlation: Some(vec![vec![1.0, 0.6], vec![0.6, 1.0]]),
        };
        let (d, _) = gen_dataset(&pats, 0.25, &design, &mut rng(13)).unwrap();
        let a = d.col(0);
        let b = d.col(1);
        let corr = a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>() / 20_000.0;
        assert!((corr - 0.6).abs() < 0.05, "corr {corr}");
        let ac = a.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / 19_999.0;
        assert!((ac - 0.5).abs() < 0.05, "acf {ac}");
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1_score(&[0.9, 0.1, 0.8], &[1, 0, 1], 0.5), 1.0);
        assert_eq!(f1_score(&[0.1, 0.9], &[1, 0], 0.5), 0.0);
        let hat = [0.9, 0.9, 0.9, 0.1, 0.1];
        let truth = [1, 1, 0, 1, 0];
        assert!((f1_score(&hat, &truth, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(selection_score(&[0.1, 0.7, 0.2, 0.3], &[0, 0, 0, 0], 0.5), 0.75);
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse_path(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(mse_path(&[2.0, 3.0], &[1.0, 2.0]), 1.0);
        let mut r = rng(14);
        let a: Vec<f64> = (0..20).map(|_| r.random()).collect();
        let b: Vec<f64> = (0..20).map(|_| r.random()).collect();
        let mut want = 0.0;
        for i in 0..20 {
            want += (a[i] - b[i]) * (a[i] - b[i]);
        }
        assert!((mse_path(&a, &b) - want / 20.0).abs() < 1e-15);
    }

    fn npdf(m: f64) -> impl Fn(f64) -> f64 {
        move |x| (-(x - m) * (x - m) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn density_overlap_cases() {
        assert!((overlap_densities(npdf(0.0), npdf(0.0), -10.0, 10.0, 2001) - 100.0).abs() < 1e-12);
        assert!(overlap_densities(npdf(0.0), npdf(10.0), -10.0, 20.0, 3001) < 1e-3);
        // 2 Phi(-1/2)
        let want = 100.0 * 2.0 * 0.308_537_538_725_986_9;
        let got = overlap_densities(npdf(0.0), npdf(1.0), -12.0, 13.0, 20_001);
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        let sym = overlap_densities(npdf(1.0), npdf(0.0), -12.0, 13.0, 20_001);
        assert!((got - sym).abs() < 1e-12);
    }

    #[test]
    fn sample_overlap_cases() {
        let mut r = rng(15);
        let s: Vec<f64> = (0..200_000).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let same = overlap_accuracy(&SpikeSlab::gaussian(0.0, 1.0), &s);
        assert!(same > 97.0, "{same}");
        let shifted = overlap_accuracy(&SpikeSlab::gaussian(1.0, 1.0), &s);
        assert!((shifted - 61.7).abs() < 2.0, "{shifted}");
        let far = overlap_accuracy(&SpikeSlab::gaussian(10.0, 1.0), &s);
        assert!(far < 1.0, "{far}");
        // point mass handled separately
        let spike: Vec<f64> = s.iter().enumerate().map(|(i, &v)| if i % 2 == 0 { 0.0 } else { v }).collect();
        let mix = overlap_accuracy(&SpikeSlab { weight: 0.5, mean: 0.0, var: 1.0 }, &spike);
        assert!(mix > 97.0, "{mix}");
        let all_zero = vec![0.0; 100];
        assert!((overlap_accuracy(&SpikeSlab { weight: 0.0, mean: 0.0, var: 1.0 }, &all_zero) - 100.0).abs() < 1e-12);
        assert!(overlap_accuracy(&SpikeSlab::gaussian(0.0, 1.0), &all_zero) < 1e-9);
    }

    #[test]
    fn bernoulli_overlap_cases() {
        assert_eq!(bernoulli_overlap(0.5, &[0, 1, 0, 1]), 100.0);
        assert_eq!(bernoulli_overlap(1.0, &[0, 0]), 0.0);
    }

    #[test]
    fn spec_parses_from_toml_shape() {
        let spec = SimSpec {
            n: 50,
            noise_var: 0.25,
            design: Design::default(),
            predictors: vec![
                PatternGroup {
                    kind: PatternKind::AlwaysOn,
                    count: 1,
                },
                PatternGroup {
                    kind: PatternKind::AlwaysZero,
                    count: 3,
                },
            ],
        };
        let (d, truth) = spec.generate(&mut rng(16)).unwrap();
        assert_eq!(d.p(), 4);
        assert_eq!(truth.kinds[3], PatternKind::AlwaysZero);
    }

    #[test]
    fn replicates_are_reproducible() {
        let spec = SimSpec {
            n: 60,
            noise_var: 0.25,
            design: Design::default(),
            predictors: vec![
                PatternGroup {
                    kind: PatternKind::AlwaysOn,
                    count: 1,
                },
                PatternGroup {
                    kind: PatternKind::AlwaysZero,
                    count: 1,
                },
            ],
        };
        let h = Hyperparams::default();
        let o = FitOptions::default();
        let a = run_replicates(&spec, 3, 42, &h, &o).unwrap();
        let b = run_replicates(&spec, 3, 42, &h, &o).unwrap();
        assert_eq!(a, b);
        let s = summarize(&a);
        assert_eq!(s.replicates, 3);
        assert_eq!(s.kinds.len(), 2);
    }
}
