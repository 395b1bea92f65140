//! Random-walk GMRF precision matrices and banded SPD linear algebra.
//!
//! Every latent path in the model (`b_j`, `omega_j`, `h`) has a first-order
//! random-walk prior whose precision is the tridiagonal matrix built by
//! [`build_q`]. Posterior precisions are that matrix scaled and shifted by a
//! diagonal, so a banded Cholesky factor covers every solve, every draw and
//! every covariance entry the updates need.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest dimension for which [`solve_banded`] also materialises the dense inverse.
pub const FULL_INVERSE_CAP: usize = 512;

/// Random-walk precision `Q` of dimension `(n+1) x (n+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagPrecision {
    n: usize,
    k0: f64,
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

/// Builds the random-walk precision for `n` observations and initial-state inflation `k0`.
pub fn build_q(n: usize, k0: f64) -> Result<TridiagPrecision> {
    if n < 1 {
        return Err(Error::invalid(format!("build_q needs n >= 1, got {n}")));
    }
    if !(k0 > 0.0) || !k0.is_finite() {
        return Err(Error::invalid(format!("k0 must be positive and finite, got {k0}")));
    }
    let mut diag = vec![2.0; n + 1];
    diag[0] = 1.0 + 1.0 / k0;
    diag[n] = 1.0;
    Ok(TridiagPrecision {
        n,
        k0,
        diag,
        offdiag: vec![-1.0; n],
    })
}

impl TridiagPrecision {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// Matrix dimension, `n + 1`.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.offdiag[i - 1] * v[i - 1];
            }
            if i + 1 < m {
                acc += self.offdiag[i] * v[i + 1];
            }
            out[i] = acc;
        }
        out
    }

    /// `v' Q v`.
    pub fn quad(&self, v: &[f64]) -> f64 {
        let m = self.dim();
        let mut acc = 0.0;
        for i in 0..m {
            acc += self.diag[i] * v[i] * v[i];
            if i + 1 < m {
                acc += 2.0 * self.offdiag[i] * v[i] * v[i + 1];
            }
        }
        acc
    }

    /// `tr(Sigma Q)`; only the tridiagonal band of `Sigma` contributes.
    pub fn trace_with(&self, sigma: &SymBand) -> f64 {
        let m = self.dim();
        let mut acc = 0.0;
        for i in 0..m {
            acc += self.diag[i] * sigma.get(i, i);
            if i + 1 < m {
                acc += 2.0 * self.offdiag[i] * sigma.get(i + 1, i);
            }
        }
        acc
    }

    /// `scale * Q + Diag(shift)` as a tridiagonal band.
    pub fn scaled_plus_diag(&self, scale: f64, shift: &[f64]) -> SymBand {
        let m = self.dim();
        debug_assert_eq!(shift.len(), m);
        let mut band = SymBand::zeros(m, 1);
        for i in 0..m {
            band.bands[0][i] = scale * self.diag[i] + shift[i];
        }
        for i in 0..m - 1 {
            band.bands[1][i] = scale * self.offdiag[i];
        }
        band
    }

    pub fn as_band(&self) -> SymBand {
        self.scaled_plus_diag(1.0, &vec![0.0; self.dim()])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.as_band().to_dense()
    }
}

/// `mu' Q mu + tr(Sigma Q)`, the expectation of `x' Q x` under `x ~ N(mu, Sigma)`.
///
/// Only the tridiagonal band of `sigma` is read.
pub fn quad_form_expectation(mu: &[f64], sigma: &SymBand, q: &TridiagPrecision) -> Result<f64> {
    if mu.len() != q.dim() {
        return Err(Error::DimensionMismatch {
            context: "quad_form_expectation (mean)",
            expected: q.dim(),
            actual: mu.len(),
        });
    }
    if sigma.size() != q.dim() {
        return Err(Error::DimensionMismatch {
            context: "quad_form_expectation (covariance)",
            expected: q.dim(),
            actual: sigma.size(),
        });
    }
    Ok(q.quad(mu) + q.trace_with(sigma))
}

/// Symmetric banded matrix in lower-band storage: `bands[d][i] = A[i + d, i]`.
///
/// Used both for SPD precisions (which can be factorised) and for the band of
/// a covariance matrix returned by selected inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    size: usize,
    bands: Vec<Vec<f64>>,
}

/// Banded symmetric positive-definite matrix.
pub type BandedSpd = SymBand;

impl SymBand {
    pub fn zeros(size: usize, bandwidth: usize) -> Self {
        let bands = (0..=bandwidth)
            .map(|d| vec![0.0; size.saturating_sub(d)])
            .collect();
        SymBand { size, bands }
    }

    pub fn identity(size: usize) -> Self {
        let mut out = Self::zeros(size, 0);
        out.bands[0].iter_mut().for_each(|v| *v = 1.0);
        out
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        SymBand {
            size: diag.len(),
            bands: vec![diag.to_vec()],
        }
    }

    /// Copies the lower band of a dense matrix; entries outside the band are ignored.
    pub fn from_dense(a: &DMatrix<f64>, bandwidth: usize) -> Self {
        let size = a.nrows();
        let mut out = Self::zeros(size, bandwidth);
        for d in 0..=bandwidth.min(size.saturating_sub(1)) {
            for i in 0..size - d {
                out.bands[d][i] = a[(i + d, i)];
            }
        }
        out
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bandwidth(&self) -> usize {
        self.bands.len() - 1
    }

    pub fn diag(&self) -> &[f64] {
        &self.bands[0]
    }

    /// First sub-diagonal, empty for a diagonal matrix.
    pub fn subdiag(&self) -> &[f64] {
        self.bands.get(1).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let d = r - c;
        if d > self.bandwidth() {
            0.0
        } else {
            self.bands[d][c]
        }
    }

    /// Sets `A[i, j]` (and its mirror). Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.bands[r - c][c] = v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.size, self.size);
        for (d, band) in self.bands.iter().enumerate() {
            for (i, &v) in band.iter().enumerate() {
                out[(i + d, i)] = v;
                out[(i, i + d)] = v;
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (d, band) in self.bands.iter().enumerate() {
            for (i, &a) in band.iter().enumerate() {
                out[i + d] += a * v[i];
                if d > 0 {
                    out[i] += a * v[i + d];
                }
            }
        }
        out
    }

    /// Banded Cholesky `A = L L'`.
    pub fn factor(&self) -> Result<BandCholesky> {
        let n = self.size;
        let w = self.bandwidth();
        let mut l = self.bands.clone();
        for j in 0..n {
            let lo = j.saturating_sub(w);
            let mut pivot = l[0][j];
            for k in lo..j {
                let v = l[j - k][k];
                pivot -= v * v;
            }
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = pivot.sqrt();
            l[0][j] = ljj;
            for i in j + 1..(j + w + 1).min(n) {
                let mut acc = l[i - j][j];
                for k in i.saturating_sub(w)..j {
                    acc -= l[i - k][k] * l[j - k][k];
                }
                l[i - j][j] = acc / ljj;
            }
        }
        Ok(BandCholesky { size: n, l })
    }
}

/// Lower Cholesky factor of a banded SPD matrix, same storage layout as [`SymBand`].
#[derive(Debug, Clone)]
pub struct BandCholesky {
    size: usize,
    l: Vec<Vec<f64>>,
}

impl BandCholesky {
    pub fn size(&self) -> usize {
        self.size
    }

    fn w(&self) -> usize {
        self.l.len() - 1
    }

    fn lij(&self, i: usize, j: usize) -> f64 {
        self.l[i - j][j]
    }

    /// Solves `L x = b` in place.
    pub fn forward(&self, x: &mut [f64]) {
        let w = self.w();
        for i in 0..self.size {
            let mut acc = x[i];
            for k in i.saturating_sub(w)..i {
                acc -= self.lij(i, k) * x[k];
            }
            x[i] = acc / self.l[0][i];
        }
    }

    /// Solves `L' x = b` in place.
    pub fn backward(&self, x: &mut [f64]) {
        let w = self.w();
        for i in (0..self.size).rev() {
            let mut acc = x[i];
            for k in i + 1..(i + w + 1).min(self.size) {
                acc -= self.lij(k, i) * x[k];
            }
            x[i] = acc / self.l[0][i];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l[0].iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Entries of `A^{-1}` inside the band of `A` (Takahashi recursion).
    pub fn selected_inverse(&self) -> SymBand {
        let n = self.size;
        let w = self.w();
        let mut sig = SymBand::zeros(n, w);
        for j in (0..n).rev() {
            let ljj = self.l[0][j];
            let hi = (j + w).min(n - 1);
            for i in (j..=hi).rev() {
                let mut acc = if i == j { 1.0 / ljj } else { 0.0 };
                for k in j + 1..=hi {
                    acc -= sig.get(i, k) * self.lij(k, j);
                }
                sig.set(i, j, acc / ljj);
            }
        }
        sig
    }

    pub fn full_inverse(&self) -> DMatrix<f64> {
        let n = self.size;
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            self.forward(&mut e);
            self.backward(&mut e);
            for r in 0..n {
                out[(r, c)] = e[r];
            }
        }
        out
    }

    /// Draw from `N(mean, A^{-1})`.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.size).map(|_| rng.sample(StandardNormal)).collect();
        self.backward(&mut z);
        z.iter_mut().zip(mean).for_each(|(zi, m)| *zi += m);
        z
    }
}

/// Output of [`solve_banded`].
#[derive(Debug, Clone)]
pub struct BandedSolution {
    /// `A^{-1} rhs`.
    pub solution: DMatrix<f64>,
    /// `A^{-1}` restricted to the band of `A`.
    pub inverse_band: SymBand,
    /// Dense `A^{-1}`, present when the dimension is at most [`FULL_INVERSE_CAP`].
    pub full_inverse: Option<DMatrix<f64>>,
}

pub fn solve_banded(a: &BandedSpd, rhs: &DMatrix<f64>) -> Result<BandedSolution> {
    if rhs.nrows() != a.size() {
        return Err(Error::DimensionMismatch {
            context: "solve_banded",
            expected: a.size(),
            actual: rhs.nrows(),
        });
    }
    let chol = a.factor()?;
    let mut solution = rhs.clone();
    for mut col in solution.column_iter_mut() {
        let x = chol.solve(col.as_slice());
        col.copy_from_slice(&x);
    }
    let full_inverse = (a.size() <= FULL_INVERSE_CAP).then(|| chol.full_inverse());
    Ok(BandedSolution {
        solution,
        inverse_band: chol.selected_inverse(),
        full_inverse,
    })
}

/// Draw from `N(mean, precision^{-1})`.
pub fn sample_gmrf<R: Rng + ?Sized>(precision: &BandedSpd, mean: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if mean.len() != precision.size() {
        return Err(Error::DimensionMismatch {
            context: "sample_gmrf",
            expected: precision.size(),
            actual: mean.len(),
        });
    }
    Ok(precision.factor()?.sample(mean, rng))
}
