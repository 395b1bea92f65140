//! Coordinate-ascent driver with optional on-line pruning.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::gmrf::SymBand;
use crate::model::{omega_shift, Hyperparams, ModelState, Volatility};
use crate::smoothing::{bspline_basis, fit_smooth_gamma, SplineBasis};
use crate::vb::{
    expected_sq_residuals, expit, gamma_logit, residuals_from_fitted, update_b_with, update_h_with,
    update_omega_with, update_sigma2_homo, update_variance_ig, update_z_with,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub smooth: bool,
    pub heteroskedastic: bool,
    pub prune: bool,
    /// Interior knots of the smoothing basis.
    pub knots: usize,
    pub degree: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            smooth: false,
            heteroskedastic: true,
            prune: true,
            knots: 20,
            degree: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub predictor: usize,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: ModelState,
    pub iterations: usize,
    pub converged: bool,
    pub dropped: Vec<Dropped>,
    /// Max-abs change of `(mu_b, mu_gamma)` per iteration.
    pub trace: Vec<f64>,
}

pub fn fit(data: &Dataset, hyper: &Hyperparams, opts: &FitOptions) -> Result<FitResult> {
    fit_with_observer(data, hyper, opts, |_, _| {})
}

/// Like [`fit`], calling `observer(iteration, state)` after every sweep.
pub fn fit_with_observer<F>(data: &Dataset, hyper: &Hyperparams, opts: &FitOptions, mut observer: F) -> Result<FitResult>
where
    F: FnMut(usize, &ModelState),
{
    let mut state = ModelState::init(data, hyper, opts.heteroskedastic)?;
    let n = state.n;
    let basis: Option<SplineBasis> = if opts.smooth {
        Some(bspline_basis(n, opts.knots, opts.degree)?)
    } else {
        None
    };
    let mut prev_bands: Vec<SymBand> = state.predictors.iter().map(|p| p.omega.cov.clone()).collect();
    let mut dropped = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=hyper.max_iter {
        iterations = iter;
        let inv_s2 = state.inv_sigma2();
        let mut fitted = state.fitted(data);
        let mut delta: f64 = 0.0;

        for j in 0..state.p() {
            if !state.predictors[j].active {
                continue;
            }
            let resid = residuals_from_fitted(&state, data, j, &fitted);
            let x = data.col(j);
            let q = &state.q;
            let pred = &mut state.predictors[j];
            let old_contrib: Vec<f64> = (0..n).map(|i| x[i] * pred.mu_gamma[i] * pred.b.mean[i + 1]).collect();

            let b = update_b_with(pred, x, &inv_s2, &resid, q).map_err(|e| e.in_fit("b", Some(j), iter))?;
            delta = pred.b.mean.iter().zip(&b.mean).fold(delta, |d, (o, nw)| d.max((o - nw).abs()));
            pred.b = b;
            pred.eta2 = update_variance_ig(hyper.a_eta, hyper.b_eta, q.quad(&pred.b.mean) + q.trace_with(&pred.b.cov), n)
                .map_err(|e| e.in_fit("eta2", Some(j), iter))?;
            pred.omega = update_omega_with(pred, q).map_err(|e| e.in_fit("omega", Some(j), iter))?;
            pred.xi2 = update_variance_ig(
                hyper.a_xi,
                hyper.b_xi,
                q.quad(&pred.omega.mean) + q.trace_with(&pred.omega.cov),
                n,
            )
            .map_err(|e| e.in_fit("xi2", Some(j), iter))?;
            pred.mu_z = update_z_with(pred);

            let mut new_gamma = vec![0.0; n];
            for i in 0..n {
                let t = i + 1;
                let l = gamma_logit(pred.omega.mean[t], inv_s2[i], x[i], pred.b.mean[t], pred.b.var(t), resid[t]);
                pred.logit_gamma[i] = l;
                new_gamma[i] = expit(l);
            }
            if let Some(basis) = &basis {
                new_gamma = fit_smooth_gamma(&pred.logit_gamma, basis)
                    .map_err(|e| e.in_fit("smooth_gamma", Some(j), iter))?
                    .probs;
            }
            delta = pred.mu_gamma.iter().zip(&new_gamma).fold(delta, |d, (o, nw)| d.max((o - nw).abs()));
            pred.mu_gamma = new_gamma;

            if opts.prune && iter >= 2 && prune_check(&state, &prev_bands[j], j, hyper) {
                state.predictors[j].deactivate();
                dropped.push(Dropped { predictor: j, iteration: iter });
            }
            let pred = &state.predictors[j];
            for i in 0..n {
                let new = if pred.active {
                    x[i] * pred.mu_gamma[i] * pred.b.mean[i + 1]
                } else {
                    0.0
                };
                fitted[i] += new - old_contrib[i];
            }
            prev_bands[j] = pred.omega.cov.clone();
        }

        if matches!(state.volatility, Volatility::Stochastic { .. }) {
            let e2 = omega_shift(&expected_sq_residuals(&state, data));
            let nu_inv = state.nu2.mean_inverse();
            if let Volatility::Stochastic { h } = &mut state.volatility {
                *h = update_h_with(h, &e2, nu_inv, &state.q).map_err(|e| e.in_fit("h", None, iter))?;
                let quad = state.q.quad(&h.mean) + state.q.trace_with(&h.cov);
                state.nu2 = update_variance_ig(hyper.a_nu, hyper.b_nu, quad, n).map_err(|e| e.in_fit("nu2", None, iter))?;
            }
        } else {
            let s2 = update_sigma2_homo(&state, data, hyper).map_err(|e| e.in_fit("sigma2", None, iter))?;
            state.volatility = Volatility::Homoskedastic { sigma2: s2 };
        }

        state.sweeps = iter;
        observer(iter, &state);
        trace.push(delta);
        if delta < hyper.tol {
            converged = hyper.tol.is_finite();
            break;
        }
    }

    Ok(FitResult {
        state,
        iterations,
        converged,
        dropped,
        trace,
    })
}

/// Pruning rule: every inclusion probability below `prune_eps` and the stored band of
/// `Sigma_omega` (diagonal and first off-diagonal) no smaller than at the previous iteration.
pub fn prune_check(state: &ModelState, prev_band: &SymBand, j: usize, hyper: &Hyperparams) -> bool {
    let pred = &state.predictors[j];
    let max_gamma = pred.mu_gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max_gamma < hyper.prune_eps) {
        return false;
    }
    let cur = &pred.omega.cov;
    let grown = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(c, p)| c >= p);
    grown(cur.diag(), prev_band.diag()) && grown(cur.subdiag(), prev_band.subdiag())
}

/// Closed-form approximation of the inclusion probability for a predictor whose
/// probabilities have collapsed: `expit(mu_omega - 0.5 E[1/sigma^2] x^2 [Q^{-1}]_tt / E[1/eta^2])`.
pub fn approx_gamma_update(state: &ModelState, data: &Dataset, j: usize, t: usize) -> Result<f64> {
    let pred = &state.predictors[j];
    let qinv = state.q.as_band().factor()?.selected_inverse();
    let x = data.col(j)[t - 1];
    let s = state.inv_sigma2()[t - 1];
    Ok(expit(pred.omega.mean[t] - 0.5 * s * x * x * qinv.get(t, t) / pred.eta2.mean_inverse()))
}
