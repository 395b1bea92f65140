//! Optimal variational density updates.
//!
//! Each public update reads a [`ModelState`] and returns the new parameters of
//! one factor without mutating anything; [`crate::cavi`] decides the order and
//! writes results back. The `*_with` variants take precomputed residuals and
//! volatility moments so a sweep stays linear in `n * p`.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gmrf::{SymBand, TridiagPrecision};
use crate::model::{omega_shift, GaussianPath, Hyperparams, InverseGamma, ModelState, PredictorState, Volatility};

/// Maximum number of step halvings in the volatility Newton update.
pub const MAX_HALVINGS: usize = 20;

/// Numerically stable logistic function.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y_t - sum_{k != j} x_{k,t-1} mu_gamma_kt mu_b_kt`, with a leading zero for the initial state.
pub fn partial_residuals(state: &ModelState, data: &Dataset, j: usize) -> Vec<f64> {
    let fitted = state.fitted(data);
    residuals_from_fitted(state, data, j, &fitted)
}

pub(crate) fn residuals_from_fitted(state: &ModelState, data: &Dataset, j: usize, fitted: &[f64]) -> Vec<f64> {
    let pred = &state.predictors[j];
    let x = data.col(j);
    let mut out = vec![0.0; state.n + 1];
    for i in 0..state.n {
        let own = if pred.active {
            x[i] * pred.mu_gamma[i] * pred.b.mean[i + 1]
        } else {
            0.0
        };
        out[i + 1] = data.y[i] - fitted[i] + own;
    }
    out
}

/// New `q(b_j)`: precision `D^2 + E[1/eta^2] Q`, mean `Sigma D (0, resid)`.
pub fn update_b(state: &ModelState, data: &Dataset, j: usize) -> Result<GaussianPath> {
    let resid = partial_residuals(state, data, j);
    update_b_with(&state.predictors[j], data.col(j), &state.inv_sigma2(), &resid, &state.q)
}

pub(crate) fn update_b_with(
    pred: &PredictorState,
    x: &[f64],
    inv_s2: &[f64],
    resid: &[f64],
    q: &TridiagPrecision,
) -> Result<GaussianPath> {
    let n = x.len();
    let mut shift = vec![0.0; n + 1];
    let mut rhs = vec![0.0; n + 1];
    for i in 0..n {
        let d = inv_s2[i] * pred.mu_gamma[i] * x[i];
        shift[i + 1] = d * x[i];
        rhs[i + 1] = d * resid[i + 1];
    }
    let chol = q.scaled_plus_diag(pred.eta2.mean_inverse(), &shift).factor()?;
    Ok(GaussianPath {
        mean: chol.solve(&rhs),
        cov: chol.selected_inverse(),
    })
}

/// Bernoulli logit for `gamma_jt`.
pub fn gamma_logit(mu_omega: f64, inv_s2: f64, x: f64, mu_b: f64, var_b: f64, resid: f64) -> f64 {
    let eb2 = mu_b * mu_b + var_b;
    mu_omega - 0.5 * inv_s2 * (x * x * eb2 - 2.0 * mu_b * x * resid)
}

/// New `(logit, probability)` for `gamma_jt`, `t` in `1..=n`.
pub fn update_gamma(state: &ModelState, data: &Dataset, j: usize, t: usize) -> (f64, f64) {
    assert!(t >= 1 && t <= state.n, "t must lie in 1..=n");
    let resid = partial_residuals(state, data, j);
    let pred = &state.predictors[j];
    let logit = gamma_logit(
        pred.omega.mean[t],
        state.inv_sigma2()[t - 1],
        data.col(j)[t - 1],
        pred.b.mean[t],
        pred.b.var(t),
        resid[t],
    );
    (logit, expit(logit))
}

/// New `q(omega_j)`: precision `Diag(0, mu_z) + E[1/xi^2] Q`, mean `Sigma (0, mu_gamma - 1/2)`.
pub fn update_omega(state: &ModelState, j: usize) -> Result<GaussianPath> {
    update_omega_with(&state.predictors[j], &state.q)
}

pub(crate) fn update_omega_with(pred: &PredictorState, q: &TridiagPrecision) -> Result<GaussianPath> {
    let chol = q
        .scaled_plus_diag(pred.xi2.mean_inverse(), &omega_shift(&pred.mu_z))
        .factor()?;
    let rhs: Vec<f64> = omega_shift(&pred.mu_gamma.iter().map(|g| g - 0.5).collect::<Vec<_>>());
    Ok(GaussianPath {
        mean: chol.solve(&rhs),
        cov: chol.selected_inverse(),
    })
}

/// Mean of `PG(1, c)`: `tanh(c/2) / (2c)`.
pub fn pg_mean(c: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(Error::invalid(format!("pg_mean needs c >= 0, got {c}")));
    }
    if c < 1e-8 {
        return Ok(0.25 - c * c / 48.0);
    }
    Ok((0.5 * c).tanh() / (2.0 * c))
}

/// Polya-Gamma means `mu_z` for `t = 1..n` from the current `q(omega_j)`.
pub(crate) fn update_z_with(pred: &PredictorState) -> Vec<f64> {
    (1..pred.omega.mean.len())
        .map(|t| {
            let m = pred.omega.mean[t];
            let c = (m * m + pred.omega.var(t)).sqrt();
            pg_mean(c).expect("second moment is nonnegative")
        })
        .collect()
}

/// Inverse-gamma update shared by the state variances: `IG(A + (n+1)/2, B + quad/2)`.
pub fn update_variance_ig(a_prior: f64, b_prior: f64, quad: f64, n: usize) -> Result<InverseGamma> {
    if quad < 0.0 && quad > -1e-9 * b_prior.max(1.0) {
        // rounding below zero on an exactly zero quadratic form
        return InverseGamma::new(a_prior + (n as f64 + 1.0) / 2.0, b_prior);
    }
    let b_post = b_prior + 0.5 * quad;
    if !(b_post > 0.0) {
        return Err(Error::Numeric(format!("posterior rate {b_post} is not positive")));
    }
    InverseGamma::new(a_prior + (n as f64 + 1.0) / 2.0, b_post)
}

/// `E[(y_t - beta_t' x_{t-1})^2]` for `t = 1..n` under the mean-field factors of the active predictors.
pub fn expected_sq_residuals(state: &ModelState, data: &Dataset) -> Vec<f64> {
    let fitted = state.fitted(data);
    let mut out: Vec<f64> = data.y.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).collect();
    for (j, pred) in state.predictors.iter().enumerate() {
        if !pred.active {
            continue;
        }
        let x = data.col(j);
        for i in 0..state.n {
            let g = pred.mu_gamma[i];
            let m = pred.b.mean[i + 1];
            let v = pred.b.var(i + 1);
            out[i] += x[i] * x[i] * (g * (m * m + v) - g * g * m * m);
        }
    }
    out
}

/// Homoskedastic variance update `IG(A + n/2, B + E[e'e]/2)`.
pub fn update_sigma2_homo(state: &ModelState, data: &Dataset, hyper: &Hyperparams) -> Result<InverseGamma> {
    let e2: f64 = expected_sq_residuals(state, data).iter().sum();
    InverseGamma::new(hyper.a_sigma + state.n as f64 / 2.0, hyper.b_sigma + 0.5 * e2)
}

/// `(E[sigma^2], E[1/sigma^2])` for `log sigma^2 ~ N(mu, var)`.
pub fn lognormal_sigma_moments(mu: f64, var: f64) -> (f64, f64) {
    ((mu + 0.5 * var).exp(), (-mu + 0.5 * var).exp())
}

/// Volatility objective `S(mu, Sigma)` up to a constant.
///
/// `e2` is padded: `e2[0] = 0` and `e2[t]` is the expected squared residual at `t`.
pub fn sv_objective(mu: &[f64], cov: &SymBand, e2: &[f64], nu_inv: f64, q: &TridiagPrecision) -> f64 {
    let mut s = 0.0;
    for t in 1..mu.len() {
        s -= 0.5 * mu[t] + 0.5 * e2[t] * (-mu[t] + 0.5 * cov.get(t, t)).exp();
    }
    s - 0.5 * nu_inv * (q.quad(mu) + q.trace_with(cov))
}

/// Gradient of [`sv_objective`] in `mu`; `var` is the diagonal of the covariance.
pub fn sv_gradient(mu: &[f64], var: &[f64], e2: &[f64], nu_inv: f64, q: &TridiagPrecision) -> Vec<f64> {
    let qmu = q.mul_vec(mu);
    (0..mu.len())
        .map(|t| {
            let data_term = if t == 0 {
                0.0
            } else {
                -0.5 + 0.5 * e2[t] * (-mu[t] + 0.5 * var[t]).exp()
            };
            data_term - nu_inv * qmu[t]
        })
        .collect()
}

/// Negative Hessian of [`sv_objective`] in `mu`.
pub fn sv_neg_hessian(mu: &[f64], var: &[f64], e2: &[f64], nu_inv: f64, q: &TridiagPrecision) -> SymBand {
    let shift: Vec<f64> = (0..mu.len())
        .map(|t| 0.5 * e2[t] * (-mu[t] + 0.5 * var[t]).exp())
        .collect();
    q.scaled_plus_diag(nu_inv, &shift)
}

/// One damped Newton step on the log-variance path.
pub fn update_h(state: &ModelState, data: &Dataset) -> Result<GaussianPath> {
    let h = match &state.volatility {
        Volatility::Stochastic { h } => h,
        Volatility::Homoskedastic { .. } => {
            return Err(Error::InvalidState("update_h needs stochastic volatility".into()))
        }
    };
    let e2 = omega_shift(&expected_sq_residuals(state, data));
    update_h_with(h, &e2, state.nu2.mean_inverse(), &state.q)
}

pub(crate) fn update_h_with(h: &GaussianPath, e2: &[f64], nu_inv: f64, q: &TridiagPrecision) -> Result<GaussianPath> {
    let var_old: Vec<f64> = (0..h.mean.len()).map(|t| h.var(t)).collect();
    let grad = sv_gradient(&h.mean, &var_old, e2, nu_inv, q);
    let chol = sv_neg_hessian(&h.mean, &var_old, e2, nu_inv, q).factor()?;
    let cov = chol.selected_inverse();
    let dir = chol.solve(&grad);
    let base = sv_objective(&h.mean, &cov, e2, nu_inv, q);
    let mut step = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let cand: Vec<f64> = h.mean.iter().zip(&dir).map(|(m, d)| m + step * d).collect();
        let val = sv_objective(&cand, &cov, e2, nu_inv, q);
        if val.is_finite() && val >= base {
            return Ok(GaussianPath { mean: cand, cov });
        }
        step *= 0.5;
    }
    Ok(GaussianPath {
        mean: h.mean.clone(),
        cov,
    })
}

/// Mean and covariance of `beta_j = Gamma_j b_j` under `q(b_j) q(gamma_j)`.
///
/// `mu_b` and `sigma_b` have dimension `n+1`; `mu_gamma` has length `n` (the initial state is always included).
pub fn beta_moments(mu_b: &[f64], sigma_b: &DMatrix<f64>, mu_gamma: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = mu_b.len();
    if mu_gamma.len() + 1 != m {
        return Err(Error::DimensionMismatch {
            context: "beta_moments (mu_gamma)",
            expected: m - 1,
            actual: mu_gamma.len(),
        });
    }
    if sigma_b.nrows() != m || sigma_b.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "beta_moments (sigma_b)",
            expected: m,
            actual: sigma_b.nrows(),
        });
    }
    let g: Vec<f64> = std::iter::once(1.0).chain(mu_gamma.iter().copied()).collect();
    // the initial state is never switched off, so its Bernoulli variance is zero
    let w: Vec<f64> = g.iter().enumerate().map(|(t, &v)| if t == 0 { 0.0 } else { v * (1.0 - v) }).collect();
    let mean = mu_b.iter().zip(&g).map(|(b, g)| b * g).collect();
    let cov = DMatrix::from_fn(m, m, |r, c| {
        let mut v = g[r] * g[c] * sigma_b[(r, c)];
        if r == c {
            v += w[r] * (sigma_b[(r, r)] + mu_b[r] * mu_b[r]);
        }
        v
    });
    Ok((mean, cov))
}
