//! Smoothed inclusion probabilities through a B-spline basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::vb::expit;

pub const MAX_STEPS: usize = 1000;
pub const GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    /// `n x k` evaluations at `t = 1..n`.
    pub w: DMatrix<f64>,
    /// Full (clamped) knot vector.
    pub knots: Vec<f64>,
    pub degree: usize,
}

impl SplineBasis {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }
}

/// Clamped B-spline basis with `knots` equally spaced interior knots on `[1, n]`.
pub fn bspline_basis(n: usize, knots: usize, degree: usize) -> Result<SplineBasis> {
    if n <= knots + degree {
        return Err(Error::invalid(format!(
            "spline basis needs n > knots + degree (n = {n}, knots = {knots}, degree = {degree})"
        )));
    }
    if n < 2 {
        return Err(Error::invalid("spline basis needs n >= 2"));
    }
    let lo = 1.0;
    let hi = n as f64;
    let mut tau = vec![lo; degree + 1];
    for i in 1..=knots {
        tau.push(lo + (hi - lo) * i as f64 / (knots + 1) as f64);
    }
    tau.extend(std::iter::repeat_n(hi, degree + 1));
    let k = knots + degree + 1;
    let mut w = DMatrix::zeros(n, k);
    for r in 0..n {
        let x = (r + 1) as f64;
        let span = find_span(&tau, degree, k, x);
        let vals = basis_funs(&tau, degree, span, x);
        for (i, v) in vals.into_iter().enumerate() {
            w[(r, span - degree + i)] = v;
        }
    }
    Ok(SplineBasis { w, knots: tau, degree })
}

/// Index `s` with `tau[s] <= x < tau[s+1]`, the last span being closed.
fn find_span(tau: &[f64], degree: usize, k: usize, x: f64) -> usize {
    if x >= tau[k] {
        return k - 1;
    }
    let mut s = degree;
    while s + 1 < k && tau[s + 1] <= x {
        s += 1;
    }
    s
}

/// Nonzero basis values on span `s` (triangular Cox-de Boor table).
fn basis_funs(tau: &[f64], degree: usize, s: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - tau[s + 1 - j];
        right[j] = tau[s + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { out[r] / denom };
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
    out
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `psi(f) = sum_t (omega_t - u_t) expit(u_t) + log(1 + e^{u_t})` with `u = W f`.
pub fn psi(f: &DVector<f64>, logits: &[f64], basis: &SplineBasis) -> f64 {
    let u = &basis.w * f;
    u.iter()
        .zip(logits)
        .map(|(&u, &om)| (om - u) * expit(u) + softplus(u))
        .sum()
}

pub fn psi_grad(f: &DVector<f64>, logits: &[f64], basis: &SplineBasis) -> DVector<f64> {
    let u = &basis.w * f;
    let d = DVector::from_iterator(
        u.len(),
        u.iter().zip(logits).map(|(&u, &om)| {
            let s = expit(u);
            (om - u) * s * (1.0 - s)
        }),
    );
    basis.w.tr_mul(&d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothFit {
    pub f: DVector<f64>,
    pub probs: Vec<f64>,
    pub steps: usize,
}

/// One Armijo-backtracked ascent step from `f` with initial trial step `alpha`.
///
/// Returns the new point and the accepted step length (zero when no step improves `psi`).
pub fn ascent_step(f: &DVector<f64>, alpha: f64, logits: &[f64], basis: &SplineBasis) -> (DVector<f64>, f64) {
    let g = psi_grad(f, logits, basis);
    let g2 = g.norm_squared();
    let base = psi(f, logits, basis);
    let mut a = alpha;
    for _ in 0..60 {
        let cand = f + a * &g;
        let val = psi(&cand, logits, basis);
        if val >= base + 1e-4 * a * g2 {
            return (cand, a);
        }
        a *= 0.5;
    }
    (f.clone(), 0.0)
}

/// Maximises `psi` by gradient ascent from `f = 0`; returns `expit(W f)`.
pub fn fit_smooth_gamma(logits: &[f64], basis: &SplineBasis) -> Result<SmoothFit> {
    if logits.len() != basis.n() {
        return Err(Error::DimensionMismatch {
            context: "fit_smooth_gamma",
            expected: basis.n(),
            actual: logits.len(),
        });
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("logit {i} is not finite")));
    }
    let mut f = DVector::zeros(basis.k());
    let mut g = psi_grad(&f, logits, basis);
    let mut alpha = 1.0;
    let mut steps = 0;
    while steps < MAX_STEPS && g.norm() > GRAD_TOL {
        let (next, used) = ascent_step(&f, alpha, logits, basis);
        steps += 1;
        if used == 0.0 {
            break;
        }
        let g_next = psi_grad(&next, logits, basis);
        let s = &next - &f;
        let yv = &g - &g_next;
        let sy = s.dot(&yv);
        alpha = if sy > 0.0 { s.norm_squared() / sy } else { used * 2.0 };
        f = next;
        g = g_next;
    }
    let probs = (&basis.w * &f).iter().map(|&u| expit(u)).collect();
    Ok(SmoothFit { f, probs, steps })
}
