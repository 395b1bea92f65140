//! Variational state, hyper-parameters and their initialisation.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gmrf::{build_q, SymBand, TridiagPrecision};

/// Floor applied to every `E[1/.]` quantity.
pub const INVERSE_FLOOR: f64 = 1e-12;

/// Inverse-gamma distribution `IG(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGamma {
    pub shape: f64,
    pub rate: f64,
}

impl InverseGamma {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::Numeric(format!("inverse-gamma shape must be positive, got {shape}")));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Numeric(format!("inverse-gamma rate must be positive, got {rate}")));
        }
        Ok(InverseGamma { shape, rate })
    }

    /// `E[1/x] = shape / rate`, floored.
    pub fn mean_inverse(&self) -> f64 {
        (self.shape / self.rate).max(INVERSE_FLOOR)
    }

    /// `E[x]` when `shape > 1`, otherwise the proxy `rate / shape`.
    pub fn mean_proxy(&self) -> f64 {
        if self.shape > 1.0 {
            self.rate / (self.shape - 1.0)
        } else {
            self.rate / self.shape
        }
    }
}

/// Gaussian factor over a length `n+1` path: mean and the tridiagonal band of its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPath {
    pub mean: Vec<f64>,
    pub cov: SymBand,
}

impl GaussianPath {
    pub fn var(&self, t: usize) -> f64 {
        self.cov.get(t, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_eta: f64,
    pub b_eta: f64,
    pub a_xi: f64,
    pub b_xi: f64,
    pub a_nu: f64,
    pub b_nu: f64,
    pub k0: f64,
    pub prune_eps: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            a_sigma: 0.01,
            b_sigma: 0.01,
            a_eta: 0.01,
            b_eta: 0.01,
            a_xi: 2.0,
            b_xi: 5.0,
            a_nu: 0.01,
            b_nu: 0.01,
            k0: 100.0,
            prune_eps: 0.01,
            tol: 1e-4,
            max_iter: 500,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_eta", self.a_eta),
            ("b_eta", self.b_eta),
            ("a_xi", self.a_xi),
            ("b_xi", self.b_xi),
            ("a_nu", self.a_nu),
            ("b_nu", self.b_nu),
            ("k0", self.k0),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.prune_eps > 0.0 && self.prune_eps < 0.5) {
            return Err(Error::invalid(format!("prune_eps must lie in (0, 0.5), got {}", self.prune_eps)));
        }
        // an infinite tolerance is allowed and means "single sweep"
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Variational factors for one predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    /// `q(b_j)`, length `n+1`.
    pub b: GaussianPath,
    /// Inclusion probabilities for `t = 1..n` (length `n`).
    pub mu_gamma: Vec<f64>,
    /// Bernoulli logits behind `mu_gamma` (length `n`).
    pub logit_gamma: Vec<f64>,
    /// `q(omega_j)`, length `n+1`.
    pub omega: GaussianPath,
    /// Polya-Gamma means, length `n`.
    pub mu_z: Vec<f64>,
    pub eta2: InverseGamma,
    pub xi2: InverseGamma,
    pub active: bool,
}

impl PredictorState {
    /// `E[beta_jt] = mu_gamma_t * mu_b_t` for `t = 1..n`.
    pub fn mean_beta(&self) -> Vec<f64> {
        self.mu_gamma
            .iter()
            .enumerate()
            .map(|(i, g)| g * self.b.mean[i + 1])
            .collect()
    }

    /// Marginal variance of `beta_jt` for `t = 1..n`.
    pub fn var_beta(&self) -> Vec<f64> {
        self.mu_gamma
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let m = self.b.mean[i + 1];
                let v = self.b.var(i + 1);
                g * (m * m + v) - g * g * m * m
            })
            .collect()
    }

    pub(crate) fn deactivate(&mut self) {
        self.active = false;
        self.mu_gamma.iter_mut().for_each(|g| *g = 0.0);
        self.b.mean.iter_mut().for_each(|b| *b = 0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Volatility {
    /// Log-variance path `h`, length `n+1`.
    Stochastic { h: GaussianPath },
    Homoskedastic { sigma2: InverseGamma },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub n: usize,
    pub predictors: Vec<PredictorState>,
    pub volatility: Volatility,
    pub nu2: InverseGamma,
    pub q: TridiagPrecision,
    /// Completed coordinate-ascent sweeps; zero for a freshly initialised state.
    pub sweeps: usize,
}

impl ModelState {
    /// Starting point for coordinate ascent.
    pub fn init(data: &Dataset, hyper: &Hyperparams, heteroskedastic: bool) -> Result<Self> {
        hyper.validate()?;
        let n = data.n();
        let q = build_q(n, hyper.k0)?;
        let eta2 = InverseGamma::new(hyper.a_eta, hyper.b_eta)?;
        let xi2 = InverseGamma::new(hyper.a_xi, hyper.b_xi)?;
        let prior_b = q
            .scaled_plus_diag(eta2.mean_inverse(), &vec![0.0; n + 1])
            .factor()?
            .selected_inverse();
        let omega_prec = q.scaled_plus_diag(xi2.mean_inverse(), &omega_shift(&vec![0.25; n]));
        let omega_cov = omega_prec.factor()?.selected_inverse();
        let predictor = PredictorState {
            b: GaussianPath {
                mean: vec![0.0; n + 1],
                cov: prior_b,
            },
            mu_gamma: vec![0.5; n],
            logit_gamma: vec![0.0; n],
            omega: GaussianPath {
                mean: vec![0.0; n + 1],
                cov: omega_cov,
            },
            mu_z: vec![0.25; n],
            eta2,
            xi2,
            active: true,
        };
        let var_y = sample_variance(&data.y).max(1e-8);
        let volatility = if heteroskedastic {
            let mut cov = SymBand::zeros(n + 1, 1);
            for t in 0..=n {
                cov.set(t, t, 0.1);
            }
            Volatility::Stochastic {
                h: GaussianPath {
                    mean: vec![var_y.ln(); n + 1],
                    cov,
                },
            }
        } else {
            let shape = hyper.a_sigma + n as f64 / 2.0;
            Volatility::Homoskedastic {
                sigma2: InverseGamma::new(shape, shape * var_y)?,
            }
        };
        Ok(ModelState {
            n,
            predictors: vec![predictor; data.p()],
            volatility,
            nu2: InverseGamma::new(hyper.a_nu, hyper.b_nu)?,
            q,
            sweeps: 0,
        })
    }

    pub fn p(&self) -> usize {
        self.predictors.len()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.predictors[j].active).collect()
    }

    /// `E[1/sigma_t^2]` for `t = 1..n`.
    pub fn inv_sigma2(&self) -> Vec<f64> {
        match &self.volatility {
            Volatility::Stochastic { h } => (1..=self.n)
                .map(|t| crate::vb::lognormal_sigma_moments(h.mean[t], h.var(t)).1.max(INVERSE_FLOOR))
                .collect(),
            Volatility::Homoskedastic { sigma2 } => vec![sigma2.mean_inverse(); self.n],
        }
    }

    /// `E[sigma_t^2]` for `t = 1..n`.
    pub fn sigma2_mean(&self) -> Vec<f64> {
        match &self.volatility {
            Volatility::Stochastic { h } => (1..=self.n)
                .map(|t| crate::vb::lognormal_sigma_moments(h.mean[t], h.var(t)).0)
                .collect(),
            Volatility::Homoskedastic { sigma2 } => vec![sigma2.mean_proxy(); self.n],
        }
    }

    /// `E[sigma_t]` for `t = 1..n`; lognormal in SV mode, `sqrt(E[sigma^2])` otherwise.
    pub fn sigma_mean(&self) -> Vec<f64> {
        match &self.volatility {
            Volatility::Stochastic { h } => (1..=self.n)
                .map(|t| (0.5 * h.mean[t] + 0.125 * h.var(t)).exp())
                .collect(),
            Volatility::Homoskedastic { sigma2 } => vec![sigma2.mean_proxy().sqrt(); self.n],
        }
    }

    /// `sum_j x_{j,t-1} E[beta_jt]` for `t = 1..n`, active predictors only.
    pub fn fitted(&self, data: &Dataset) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (j, pred) in self.predictors.iter().enumerate() {
            if !pred.active {
                continue;
            }
            let x = data.col(j);
            for i in 0..self.n {
                out[i] += x[i] * pred.mu_gamma[i] * pred.b.mean[i + 1];
            }
        }
        out
    }
}

/// `(0, v_1, ..., v_n)`.
pub(crate) fn omega_shift(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.push(0.0);
    out.extend_from_slice(v);
    out
}

pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}
