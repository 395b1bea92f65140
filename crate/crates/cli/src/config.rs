//! Run configuration: TOML file values merged under command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dynsparse::{FitOptions, Hyperparams, Scheme, Transform};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 42;

/// Everything a command needs, after merging. Written back out as `run.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub target: String,
    pub date_column: Option<String>,
    pub horizon: usize,
    pub transform: Transform,
    pub standardize: bool,
    pub seed: u64,
    pub scheme: Option<String>,
    pub draws: usize,
    pub burnin: usize,
    pub replicates: usize,
    pub pattern: Option<PathBuf>,
    pub options: FitOptions,
    pub hyper: Hyperparams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            target: "y".into(),
            date_column: None,
            horizon: 1,
            transform: Transform::None,
            standardize: false,
            seed: DEFAULT_SEED,
            scheme: None,
            draws: 20_000,
            burnin: 5_000,
            replicates: 1,
            pattern: None,
            options: FitOptions::default(),
            hyper: Hyperparams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_file(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn input(&self) -> Result<&Path> {
        match &self.input {
            Some(p) if p.exists() => Ok(p),
            Some(p) => bail!("input file {} does not exist", p.display()),
            None => bail!("no input file given (use --input or set `input` in the config)"),
        }
    }

    pub fn scheme(&self) -> Result<Scheme> {
        let s = self.scheme.as_deref().context("no window scheme given (use --scheme expanding:N or rolling:N)")?;
        s.parse().map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.horizon == 0 {
            bail!("horizon must be at least 1");
        }
        if let Some(p) = &self.pattern {
            if !p.exists() {
                bail!("pattern file {} does not exist", p.display());
            }
        }
        Ok(())
    }
}

/// Flags shared by every command that touches data or fitting. `None` leaves the config value alone.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Response column.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub date_column: Option<String>,
    /// Forecast horizon; predictors are lagged by this many rows.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Apply the annualised log-difference transform to the target.
    #[arg(long)]
    pub inflation: bool,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub smooth: bool,
    #[arg(long)]
    pub homoskedastic: bool,
    #[arg(long)]
    pub no_prune: bool,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub prune_eps: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &self.target {
            cfg.target = v.clone();
        }
        if let Some(v) = &self.date_column {
            cfg.date_column = Some(v.clone());
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if self.inflation {
            cfg.transform = Transform::Inflation;
        }
        if self.standardize {
            cfg.standardize = true;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if self.smooth {
            cfg.options.smooth = true;
        }
        if self.homoskedastic {
            cfg.options.heteroskedastic = false;
        }
        if self.no_prune {
            cfg.options.prune = false;
        }
        if let Some(v) = self.tol {
            cfg.hyper.tol = v;
        }
        if let Some(v) = self.max_iter {
            cfg.hyper.max_iter = v;
        }
        if let Some(v) = self.prune_eps {
            cfg.hyper.prune_eps = v;
        }
    }
}
