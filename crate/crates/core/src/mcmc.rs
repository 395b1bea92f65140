//! Gibbs sampler for the homoskedastic model and an exact Polya-Gamma `PG(1, c)` sampler.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{fmt_f64, Dataset};
use crate::error::{Error, Result};
use crate::gmrf::{build_q, TridiagPrecision};
use crate::model::{omega_shift, sample_variance, Hyperparams};
use crate::rng::StreamRng;
use crate::vb::expit;

/// Truncation point of the alternating-series proposal.
const TRUNC: f64 = 0.64;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid normal")
}

/// Series coefficient `a_n(x)` of the `J*(1, z)` density.
fn a_coef(n: usize, x: f64) -> f64 {
    let k = n as f64 + 0.5;
    if x > TRUNC {
        PI * k * (-0.5 * k * k * PI * PI * x).exp()
    } else {
        (2.0 / (PI * x)).powf(1.5) * PI * k * (-2.0 * k * k / x).exp()
    }
}

/// Probability of drawing from the exponential (right) piece of the proposal.
fn mass_right(z: f64) -> f64 {
    let t = TRUNC;
    let fz = PI * PI / 8.0 + 0.5 * z * z;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let nrm = std_normal();
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + nrm.cdf(b).ln();
    let xa = x0 + z + nrm.cdf(a).ln();
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse-Gaussian `IG(1/z, 1)` truncated to `(0, TRUNC)`.
fn truncated_inv_gauss<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let r = TRUNC;
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > r {
        loop {
            let (mut e1, mut e2): (f64, f64) = (rng.sample(Exp1), rng.sample(Exp1));
            while e1 * e1 > 2.0 * e2 / r {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
            }
            let x = r / ((1.0 + r * e1) * (1.0 + r * e1));
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        loop {
            let y: f64 = rng.sample::<f64, _>(StandardNormal).powi(2);
            let mut x = mu + 0.5 * mu * mu * y - 0.5 * mu * (4.0 * mu * y + (mu * y).powi(2)).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < r {
                return x;
            }
        }
    }
}

/// Exact draw from `PG(1, c)` by the alternating-series accept/reject method.
pub fn sample_pg1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    let fz = PI * PI / 8.0 + 0.5 * z * z;
    let p_right = mass_right(z);
    loop {
        let x = if rng.random::<f64>() < p_right {
            TRUNC + rng.sample::<f64, _>(Exp1) / fz
        } else {
            truncated_inv_gauss(z, rng)
        };
        let mut s = a_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= a_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += a_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// `IG(shape, rate)` draw as `rate / Gamma(shape, 1)`.
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::Numeric(format!("gamma({shape}): {e}")))?;
    Ok(rate / g.sample(rng).max(f64::MIN_POSITIVE))
}

/// One state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    /// `p` paths of length `n+1`.
    pub b: Vec<Vec<f64>>,
    /// `p` indicator vectors of length `n`.
    pub gamma: Vec<Vec<u8>>,
    pub omega: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub eta2: Vec<f64>,
    pub xi2: Vec<f64>,
    pub sigma2: f64,
}

impl GibbsState {
    /// `b = 0`, `gamma = 1`, `omega = 0`, `z = 1/4`, variances at `B/A` and `sigma2 = var(y)`.
    pub fn init(data: &Dataset, hyper: &Hyperparams) -> Self {
        let (n, p) = (data.n(), data.p());
        GibbsState {
            b: vec![vec![0.0; n + 1]; p],
            gamma: vec![vec![1; n]; p],
            omega: vec![vec![0.0; n + 1]; p],
            z: vec![vec![0.25; n]; p],
            eta2: vec![hyper.b_eta / hyper.a_eta; p],
            xi2: vec![hyper.b_xi / hyper.a_xi; p],
            sigma2: sample_variance(&data.y).max(1e-8),
        }
    }

    /// `sum_j x_{j,t-1} gamma_jt b_jt` for `t = 1..n`.
    pub fn fitted(&self, data: &Dataset) -> Vec<f64> {
        let n = data.n();
        let mut out = vec![0.0; n];
        for j in 0..self.b.len() {
            let x = data.col(j);
            for i in 0..n {
                if self.gamma[j][i] == 1 {
                    out[i] += x[i] * self.b[j][i + 1];
                }
            }
        }
        out
    }
}

/// Which blocks a sweep resamples; everything by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepBlocks {
    pub b: bool,
    pub gamma: bool,
    pub sigma2: bool,
}

impl Default for SweepBlocks {
    fn default() -> Self {
        SweepBlocks {
            b: true,
            gamma: true,
            sigma2: true,
        }
    }
}

fn tagged(e: Error, component: &'static str, j: Option<usize>, sweep: usize) -> Error {
    e.in_fit(component, j, sweep)
}

/// One full sweep over all full conditionals, updating `state` in place.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut GibbsState,
    data: &Dataset,
    hyper: &Hyperparams,
    q: &TridiagPrecision,
    blocks: SweepBlocks,
    sweep: usize,
    rng: &mut R,
) -> Result<()> {
    let n = data.n();
    let m = (n + 1) as f64;
    let mut fitted = state.fitted(data);
    for j in 0..data.p() {
        let x = data.col(j);
        let own = |st: &GibbsState, i: usize| if st.gamma[j][i] == 1 { x[i] * st.b[j][i + 1] } else { 0.0 };
        let resid: Vec<f64> = (0..n).map(|i| data.y[i] - fitted[i] + own(state, i)).collect();
        let old: Vec<f64> = (0..n).map(|i| own(state, i)).collect();
        let inv_s2 = 1.0 / state.sigma2;

        if blocks.b {
            let mut shift = vec![0.0; n + 1];
            let mut rhs = vec![0.0; n + 1];
            for i in 0..n {
                if state.gamma[j][i] == 1 {
                    shift[i + 1] = inv_s2 * x[i] * x[i];
                    rhs[i + 1] = inv_s2 * x[i] * resid[i];
                }
            }
            let chol = q
                .scaled_plus_diag(1.0 / state.eta2[j], &shift)
                .factor()
                .map_err(|e| tagged(e, "b", Some(j), sweep))?;
            let mean = chol.solve(&rhs);
            state.b[j] = chol.sample(&mean, rng);
        }
        state.eta2[j] = sample_inv_gamma(hyper.a_eta + 0.5 * m, hyper.b_eta + 0.5 * q.quad(&state.b[j]), rng)
            .map_err(|e| tagged(e, "eta2", Some(j), sweep))?;

        let chol = q
            .scaled_plus_diag(1.0 / state.xi2[j], &omega_shift(&state.z[j]))
            .factor()
            .map_err(|e| tagged(e, "omega", Some(j), sweep))?;
        let rhs = omega_shift(&state.gamma[j].iter().map(|&g| g as f64 - 0.5).collect::<Vec<_>>());
        let mean = chol.solve(&rhs);
        state.omega[j] = chol.sample(&mean, rng);
        state.xi2[j] = sample_inv_gamma(hyper.a_xi + 0.5 * m, hyper.b_xi + 0.5 * q.quad(&state.omega[j]), rng)
            .map_err(|e| tagged(e, "xi2", Some(j), sweep))?;

        for i in 0..n {
            let t = i + 1;
            state.z[j][i] = sample_pg1(state.omega[j][t].abs(), rng);
            if blocks.gamma {
                let b = state.b[j][t];
                let logit = state.omega[j][t] - 0.5 * inv_s2 * (b * b * x[i] * x[i] - 2.0 * b * x[i] * resid[i]);
                state.gamma[j][i] = u8::from(rng.random::<f64>() < expit(logit));
            }
        }
        for i in 0..n {
            fitted[i] += own(state, i) - old[i];
        }
    }
    if blocks.sigma2 {
        let sse: f64 = data.y.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
        state.sigma2 = sample_inv_gamma(hyper.a_sigma + 0.5 * n as f64, hyper.b_sigma + 0.5 * sse, rng)
            .map_err(|e| tagged(e, "sigma2", None, sweep))?;
    }
    Ok(())
}

/// Post-burn-in draws, stored flat with index `(draw, predictor, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsDraws {
    pub draws: usize,
    pub p: usize,
    pub n: usize,
    pub b: Vec<f64>,
    pub gamma: Vec<u8>,
    pub omega: Vec<f64>,
    pub z: Vec<f64>,
    pub eta2: Vec<f64>,
    pub xi2: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl GibbsDraws {
    fn with_capacity(draws: usize, p: usize, n: usize) -> Self {
        GibbsDraws {
            draws: 0,
            p,
            n,
            b: Vec::with_capacity(draws * p * (n + 1)),
            gamma: Vec::with_capacity(draws * p * n),
            omega: Vec::with_capacity(draws * p * (n + 1)),
            z: Vec::with_capacity(draws * p * n),
            eta2: Vec::with_capacity(draws * p),
            xi2: Vec::with_capacity(draws * p),
            sigma2: Vec::with_capacity(draws),
        }
    }

    fn push(&mut self, s: &GibbsState) {
        for j in 0..self.p {
            self.b.extend_from_slice(&s.b[j]);
            self.gamma.extend_from_slice(&s.gamma[j]);
            self.omega.extend_from_slice(&s.omega[j]);
            self.z.extend_from_slice(&s.z[j]);
        }
        self.eta2.extend_from_slice(&s.eta2);
        self.xi2.extend_from_slice(&s.xi2);
        self.sigma2.push(s.sigma2);
        self.draws += 1;
    }

    /// `b_jt` at draw `d`, `t` in `0..=n`.
    pub fn b_at(&self, d: usize, j: usize, t: usize) -> f64 {
        self.b[(d * self.p + j) * (self.n + 1) + t]
    }

    /// `gamma_jt` at draw `d`, `t` in `1..=n`.
    pub fn gamma_at(&self, d: usize, j: usize, t: usize) -> u8 {
        self.gamma[(d * self.p + j) * self.n + t - 1]
    }

    pub fn omega_at(&self, d: usize, j: usize, t: usize) -> f64 {
        self.omega[(d * self.p + j) * (self.n + 1) + t]
    }

    /// Draws of `beta_jt = gamma_jt b_jt`, `t` in `1..=n`.
    pub fn beta_series(&self, j: usize, t: usize) -> Vec<f64> {
        (0..self.draws)
            .map(|d| if self.gamma_at(d, j, t) == 1 { self.b_at(d, j, t) } else { 0.0 })
            .collect()
    }

    pub fn b_series(&self, j: usize, t: usize) -> Vec<f64> {
        (0..self.draws).map(|d| self.b_at(d, j, t)).collect()
    }

    pub fn gamma_series(&self, j: usize, t: usize) -> Vec<u8> {
        (0..self.draws).map(|d| self.gamma_at(d, j, t)).collect()
    }

    /// Long-format CSV: one row per `(draw, predictor, t)`; globals are repeated on each row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "draw,predictor,t,b,gamma,omega,z,eta2,xi2,sigma2")?;
        for d in 0..self.draws {
            for j in 0..self.p {
                for t in 1..=self.n {
                    writeln!(
                        f,
                        "{d},{j},{t},{},{},{},{},{},{},{}",
                        fmt_f64(self.b_at(d, j, t)),
                        self.gamma_at(d, j, t),
                        fmt_f64(self.omega_at(d, j, t)),
                        fmt_f64(self.z[(d * self.p + j) * self.n + t - 1]),
                        fmt_f64(self.eta2[d * self.p + j]),
                        fmt_f64(self.xi2[d * self.p + j]),
                        fmt_f64(self.sigma2[d]),
                    )?;
                }
            }
        }
        f.flush()?;
        Ok(())
    }
}

/// Runs `draws` sweeps and keeps the last `draws - burnin`.
pub fn run_gibbs(data: &Dataset, hyper: &Hyperparams, draws: usize, burnin: usize, rng: &mut StreamRng) -> Result<GibbsDraws> {
    let mut out = GibbsDraws::with_capacity(draws.saturating_sub(burnin), data.p(), data.n());
    run_gibbs_with(data, hyper, draws, burnin, rng, |s| out.push(s))?;
    Ok(out)
}

/// Like [`run_gibbs`] but hands each kept state to `sink` instead of storing it.
pub fn run_gibbs_with<R, F>(data: &Dataset, hyper: &Hyperparams, draws: usize, burnin: usize, rng: &mut R, mut sink: F) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(&GibbsState),
{
    if draws <= burnin {
        return Err(Error::invalid(format!("draws ({draws}) must exceed burnin ({burnin})")));
    }
    hyper.validate()?;
    let q = build_q(data.n(), hyper.k0)?;
    let mut state = GibbsState::init(data, hyper);
    for sweep in 0..draws {
        gibbs_sweep(&mut state, data, hyper, &q, SweepBlocks::default(), sweep, rng)?;
        if sweep >= burnin {
            sink(&state);
        }
    }
    Ok(())
}
