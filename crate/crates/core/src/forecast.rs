//! Out-of-sample evaluation: predictive densities, loss differentials and
//! Diebold-Mariano tests.
//!
//! The predictive distribution is a moment-matched Gaussian, not the exact
//! mixture over inclusion patterns.

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cavi::{fit, FitOptions};
use crate::data::{fmt_f64, Dataset};
use crate::error::{Error, Result};
use crate::model::{sample_variance, Hyperparams, ModelState, Volatility};
use crate::vb::{expit, lognormal_sigma_moments};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// Last observation used for estimation (zero-based row).
    pub origin: usize,
    /// Row being forecast.
    pub target: usize,
    pub y_true: f64,
    pub mean: f64,
    pub variance: f64,
    pub log_score: f64,
}

impl ForecastRecord {
    pub fn new(origin: usize, target: usize, y_true: f64, mean: f64, variance: f64) -> Self {
        ForecastRecord {
            origin,
            target,
            y_true,
            mean,
            variance,
            log_score: gaussian_log_density(y_true, mean, variance),
        }
    }

    pub fn error(&self) -> f64 {
        self.y_true - self.mean
    }
}

pub fn gaussian_log_density(y: f64, mean: f64, variance: f64) -> f64 {
    let e = y - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * variance).ln() + e * e / variance)
}

/// Probability that predictor `j` is included one step past the sample.
///
/// Carries the last inclusion logit forward unchanged.
pub fn next_inclusion(state: &ModelState, j: usize) -> f64 {
    let p = &state.predictors[j];
    if !p.active {
        return 0.0;
    }
    expit(p.omega.mean[state.n])
}

/// Expected observation variance `steps` periods after the end of the sample.
pub fn next_sigma2(state: &ModelState, steps: usize) -> f64 {
    let h = steps as f64;
    match &state.volatility {
        Volatility::Stochastic { h: path } => {
            let n = state.n;
            lognormal_sigma_moments(path.mean[n], path.var(n) + h * state.nu2.mean_proxy()).0
        }
        Volatility::Homoskedastic { sigma2 } => sigma2.mean_proxy(),
    }
}

/// Gaussian predictive `(mean, variance)` for predictors `x_next`, `steps` periods ahead.
pub fn predictive_density(state: &ModelState, x_next: &[f64], steps: usize) -> Result<(f64, f64)> {
    if state.sweeps == 0 {
        return Err(Error::InvalidState("predictive density requested from an unfitted state".into()));
    }
    if steps == 0 {
        return Err(Error::invalid("forecast horizon must be at least 1"));
    }
    if x_next.len() != state.p() {
        return Err(Error::DimensionMismatch {
            context: "predictive_density",
            expected: state.p(),
            actual: x_next.len(),
        });
    }
    let n = state.n;
    let mut mean = 0.0;
    let mut var = next_sigma2(state, steps);
    for (j, (pred, &x)) in state.predictors.iter().zip(x_next).enumerate() {
        if !pred.active {
            continue;
        }
        let p = next_inclusion(state, j);
        let mu = pred.b.mean[n];
        let vb = pred.b.var(n) + steps as f64 * pred.eta2.mean_proxy();
        mean += x * p * mu;
        var += x * x * (p * (vb + mu * mu) - p * p * mu * mu);
    }
    Ok((mean, var))
}

fn check_pair(a: &[f64], b: &[f64], context: &'static str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// `sum e_model^2 - sum e_bench^2`.
pub fn rmsfe(model: &[f64], bench: &[f64]) -> Result<f64> {
    check_pair(model, bench, "rmsfe")?;
    Ok(model.iter().map(|e| e * e).sum::<f64>() - bench.iter().map(|e| e * e).sum::<f64>())
}

/// `sum |e_model| - sum |e_bench|`.
pub fn rmae(model: &[f64], bench: &[f64]) -> Result<f64> {
    check_pair(model, bench, "rmae")?;
    Ok(model.iter().map(|e| e.abs()).sum::<f64>() - bench.iter().map(|e| e.abs()).sum::<f64>())
}

/// Average log-score differential.
pub fn als(model: &[f64], bench: &[f64]) -> Result<f64> {
    check_pair(model, bench, "als")?;
    if model.is_empty() {
        return Err(Error::invalid("als needs at least one score"));
    }
    Ok(model.iter().zip(bench).map(|(a, b)| a - b).sum::<f64>() / model.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    Squared,
    Absolute,
}

impl Loss {
    fn apply(self, e: f64) -> f64 {
        match self {
            Loss::Squared => e * e,
            Loss::Absolute => e.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub const DM_MIN_LEN: usize = 10;

/// Diebold-Mariano test of equal predictive accuracy.
///
/// Positive statistics mean `errors_a` has the larger loss.
pub fn dm_test(errors_a: &[f64], errors_b: &[f64], loss: Loss, horizon: usize) -> Result<DmResult> {
    check_pair(errors_a, errors_b, "dm_test")?;
    if errors_a.len() < DM_MIN_LEN {
        return Err(Error::invalid(format!(
            "dm_test needs at least {DM_MIN_LEN} observations, got {}",
            errors_a.len()
        )));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let d: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| loss.apply(*a) - loss.apply(*b)).collect();
    let t = d.len() as f64;
    let mean = d.iter().sum::<f64>() / t;
    let autocov = |k: usize| -> f64 { (k..d.len()).map(|i| (d[i] - mean) * (d[i - k] - mean)).sum::<f64>() / t };
    let lags = (horizon - 1).min(d.len() - 1);
    let mut lrv = autocov(0);
    for k in 1..=lags {
        lrv += 2.0 * (1.0 - k as f64 / (lags as f64 + 1.0)) * autocov(k);
    }
    // constant differentials leave only rounding noise in the variance
    if !(lrv > 0.0) || lrv <= 1e-24 * mean * mean {
        return Ok(DmResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let statistic = mean / (lrv / t).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p_value = (2.0 * normal.sf(statistic.abs())).min(1.0);
    Ok(DmResult { statistic, p_value })
}

/// Estimation window scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Fixed-length window of the most recent `w` observations.
    Rolling(usize),
    /// All observations so far, starting with the first `burnin`.
    Expanding(usize),
}

impl Scheme {
    pub fn window(&self) -> usize {
        match *self {
            Scheme::Rolling(w) | Scheme::Expanding(w) => w,
        }
    }

    /// Training rows `start..end` used to forecast row `target`.
    fn training_rows(&self, target: usize, horizon: usize) -> (usize, usize) {
        let end = target + 1 - horizon;
        match *self {
            Scheme::Rolling(w) => (end - w, end),
            Scheme::Expanding(_) => (0, end),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, w) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("scheme '{s}' is not of the form kind:N")))?;
        let w: usize = w
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("scheme window '{w}' is not a non-negative integer")))?;
        match kind.trim() {
            "rolling" => Ok(Scheme::Rolling(w)),
            "expanding" => Ok(Scheme::Expanding(w)),
            other => Err(Error::invalid(format!("unknown scheme '{other}', expected rolling or expanding"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Rolling(w) => write!(f, "rolling:{w}"),
            Scheme::Expanding(w) => write!(f, "expanding:{w}"),
        }
    }
}

/// First row that can be forecast. Row `i` pairs `y` with predictors observed
/// `horizon` rows earlier, so training for target `k` stops at row `k - horizon`.
pub fn first_target(n: usize, scheme: Scheme, horizon: usize) -> Result<usize> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let w = scheme.window();
    if w < 2 {
        return Err(Error::invalid(format!("estimation window must hold at least 2 rows, got {w}")));
    }
    let first = w + horizon - 1;
    if first >= n {
        return Err(Error::invalid(format!(
            "window {w} with horizon {horizon} leaves no forecast origins in {n} rows"
        )));
    }
    Ok(first)
}

/// Fits at every origin and forecasts `horizon` rows ahead.
pub fn run_oos(
    data: &Dataset,
    hyper: &Hyperparams,
    opts: &FitOptions,
    scheme: Scheme,
    horizon: usize,
) -> Result<Vec<ForecastRecord>> {
    let first = first_target(data.n(), scheme, horizon)?;
    (first..data.n())
        .into_par_iter()
        .map(|k| {
            let (start, end) = scheme.training_rows(k, horizon);
            let train = data.slice(start, end)?;
            let res = fit(&train, hyper, opts)?;
            let x: Vec<f64> = data.x.row(k).iter().copied().collect();
            let (mean, var) = predictive_density(&res.state, &x, horizon)?;
            Ok(ForecastRecord::new(end - 1, k, data.y[k], mean, var))
        })
        .collect()
}

/// No-predictability benchmark: `N(ybar, s^2 (1 + 1/T))` from the training responses.
pub fn recursive_mean_forecast(train_y: &[f64]) -> Result<(f64, f64)> {
    if train_y.len() < 2 {
        return Err(Error::invalid("benchmark needs at least 2 observations"));
    }
    let t = train_y.len() as f64;
    let mean = train_y.iter().sum::<f64>() / t;
    let var = sample_variance(train_y).max(1e-12) * (1.0 + 1.0 / t);
    Ok((mean, var))
}

/// Benchmark records aligned with [`run_oos`].
pub fn benchmark_oos(data: &Dataset, scheme: Scheme, horizon: usize) -> Result<Vec<ForecastRecord>> {
    let first = first_target(data.n(), scheme, horizon)?;
    (first..data.n())
        .map(|k| {
            let (start, end) = scheme.training_rows(k, horizon);
            let (mean, var) = recursive_mean_forecast(&data.y[start..end])?;
            Ok(ForecastRecord::new(end - 1, k, data.y[k], mean, var))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    pub benchmark: String,
    pub records: usize,
    pub rmsfe: f64,
    pub rmae: f64,
    pub als: f64,
    pub mean_log_score_model: f64,
    pub mean_log_score_benchmark: f64,
    pub dm_squared: DmResult,
    pub dm_absolute: DmResult,
}

/// Pairwise accuracy summary. DM tests need at least 10 records.
pub fn compare(
    model_name: &str,
    model: &[ForecastRecord],
    bench_name: &str,
    bench: &[ForecastRecord],
    horizon: usize,
) -> Result<Comparison> {
    if model.len() != bench.len() {
        return Err(Error::DimensionMismatch {
            context: "compare",
            expected: model.len(),
            actual: bench.len(),
        });
    }
    if model.iter().zip(bench).any(|(a, b)| a.target != b.target) {
        return Err(Error::invalid("forecast records are not aligned by target row"));
    }
    let em: Vec<f64> = model.iter().map(ForecastRecord::error).collect();
    let eb: Vec<f64> = bench.iter().map(ForecastRecord::error).collect();
    let lm: Vec<f64> = model.iter().map(|r| r.log_score).collect();
    let lb: Vec<f64> = bench.iter().map(|r| r.log_score).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(Comparison {
        model: model_name.to_string(),
        benchmark: bench_name.to_string(),
        records: model.len(),
        rmsfe: rmsfe(&em, &eb)?,
        rmae: rmae(&em, &eb)?,
        als: als(&lm, &lb)?,
        mean_log_score_model: mean(&lm),
        mean_log_score_benchmark: mean(&lb),
        dm_squared: dm_test(&em, &eb, Loss::Squared, horizon)?,
        dm_absolute: dm_test(&em, &eb, Loss::Absolute, horizon)?,
    })
}

/// Writes `origin,target,truth,mean,variance,log_score`.
pub fn write_forecast_csv(path: impl AsRef<Path>, records: &[ForecastRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["origin", "target", "truth", "mean", "variance", "log_score"])?;
    for r in records {
        w.write_record([
            r.origin.to_string(),
            r.target.to_string(),
            fmt_f64(r.y_true),
            fmt_f64(r.mean),
            fmt_f64(r.variance),
            fmt_f64(r.log_score),
        ])?;
    }
    w.flush()?;
    Ok(())
}
