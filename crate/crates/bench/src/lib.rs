//! Shared fixtures for the criterion benches.

use dynsparse::rng::substream;
use dynsparse::simlab::PatternGroup;
use dynsparse::{build_q, Dataset, PatternKind, SimSpec, SymBand};

pub const SEED: u64 = 7;

/// One always-on, one one-switch predictor and `p - 2` nulls.
pub fn dataset(n: usize, p: usize) -> Dataset {
    assert!(p >= 2);
    let spec = SimSpec {
        n,
        noise_var: 0.25,
        design: Default::default(),
        predictors: vec![
            PatternGroup { kind: PatternKind::AlwaysOn, count: 1 },
            PatternGroup { kind: PatternKind::OneSwitch, count: 1 },
            PatternGroup { kind: PatternKind::AlwaysZero, count: p - 2 },
        ],
    };
    spec.generate(&mut substream(SEED, "bench", 0)).unwrap().0
}

/// Random-walk precision plus a positive observation term, as in a coefficient update.
pub fn tridiag_system(n: usize) -> SymBand {
    let obs: Vec<f64> = (0..=n).map(|t| if t == 0 { 0.0 } else { 1.0 + (t % 7) as f64 * 0.1 }).collect();
    build_q(n, 100.0).unwrap().scaled_plus_diag(2.0, &obs)
}

/// Diagonally dominant band matrix of the given half-bandwidth.
pub fn band_system(size: usize, bandwidth: usize) -> SymBand {
    let mut a = SymBand::zeros(size, bandwidth);
    for i in 0..size {
        a.set(i, i, 2.0 * bandwidth as f64 + 1.0);
        for k in 1..=bandwidth.min(i) {
            a.set(i, i - k, -1.0 / k as f64);
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_shape() {
        let d = dataset(50, 6);
        assert_eq!((d.n(), d.p()), (50, 6));
        assert_eq!(tridiag_system(30).size(), 31);
        let a = band_system(20, 3);
        assert_eq!(a.bandwidth(), 3);
        assert!(a.factor().is_ok());
    }
}
