//! Dynamic Bernoulli-Gaussian variable selection for time-varying-parameter
//! regressions.
//!
//! Coefficients are `beta_jt = b_jt * gamma_jt`, where `b_j` is a Gaussian
//! random walk and `gamma_jt` is a Bernoulli inclusion indicator whose logit
//! `omega_j` is itself a random walk. The posterior is approximated by
//! mean-field variational Bayes ([`cavi::fit`]); a Gibbs sampler
//! ([`mcmc::run_gibbs`]) targets the same posterior for validation.

pub mod cavi;
pub mod data;
pub mod error;
pub mod forecast;
pub mod gmrf;
pub mod mcmc;
pub mod model;
pub mod rng;
pub mod simlab;
pub mod smoothing;
pub mod vb;

pub use cavi::{fit, fit_with_observer, Dropped, FitOptions, FitResult};
pub use data::{load_csv, Dataset, LoadOptions, Transform};
pub use error::{Error, Result};
pub use gmrf::{build_q, BandedSpd, SymBand, TridiagPrecision};
pub use forecast::{dm_test, predictive_density, run_oos, ForecastRecord, Loss, Scheme};
pub use mcmc::{run_gibbs, GibbsDraws, GibbsState};
pub use simlab::{gen_dataset, CoefPattern, PatternKind, SimSpec};
pub use model::{GaussianPath, Hyperparams, InverseGamma, ModelState, PredictorState, Volatility};
