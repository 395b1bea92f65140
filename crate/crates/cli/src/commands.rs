use std::path::Path;

use anyhow::{bail, Context, Result};
use dynsparse::data::write_raw_csv;
use dynsparse::forecast::{benchmark_oos, compare, write_forecast_csv};
use dynsparse::rng::substream;
use dynsparse::simlab::{bernoulli_overlap, overlap_accuracy, run_replicates, summarize, SpikeSlab};
use dynsparse::{fit, load_csv, FitOptions, run_gibbs, run_oos, Dataset, LoadOptions, SimSpec};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{five_numbers, write_json, write_manifest, write_paths};

pub fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let opts = LoadOptions {
        target: cfg.target.clone(),
        date_column: cfg.date_column.clone(),
        horizon: cfg.horizon,
        transform: cfg.transform,
        standardize: cfg.standardize,
    };
    let path = cfg.input()?;
    load_csv(path, &opts).with_context(|| format!("loading {}", path.display()))
}

fn row_labels(data: &Dataset) -> Vec<String> {
    match &data.timestamps {
        Some(ts) => ts.clone(),
        None => (1..=data.n()).map(|t| t.to_string()).collect(),
    }
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DroppedEntry {
    pub predictor: usize,
    pub name: String,
    pub iteration: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub dropped: Vec<DroppedEntry>,
}

pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    prepare_out(out)?;
    let res = fit(&data, &cfg.hyper, &cfg.options)?;
    let labels = row_labels(&data);
    let preds = &res.state.predictors;
    let beta: Vec<Vec<f64>> = preds.iter().map(|p| p.mean_beta()).collect();
    let gamma: Vec<Vec<f64>> = preds.iter().map(|p| p.mu_gamma.clone()).collect();
    write_paths(&out.join("coefficients.csv"), &labels, &data.names, &beta)?;
    write_paths(&out.join("inclusion.csv"), &labels, &data.names, &gamma)?;
    write_paths(&out.join("volatility.csv"), &labels, &["sigma".to_string()], &[res.state.sigma_mean()])?;
    let summary = FitSummary {
        iterations: res.iterations,
        converged: res.converged,
        dropped: res
            .dropped
            .iter()
            .map(|d| DroppedEntry {
                predictor: d.predictor,
                name: data.names[d.predictor].clone(),
                iteration: d.iteration,
            })
            .collect(),
    };
    write_json(&out.join("dropped.json"), &summary)?;
    write_manifest(out, "fit", cfg)?;
    println!(
        "fit: n={} p={} iterations={} converged={} dropped={}",
        data.n(),
        data.p(),
        res.iterations,
        res.converged,
        summary.dropped.len()
    );
    Ok(())
}

fn truth_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path, evaluate: bool) -> Result<()> {
    cfg.validate()?;
    let path = cfg.pattern.as_deref().context("no pattern file given (use --pattern spec.toml)")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec: SimSpec = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if cfg.replicates == 0 {
        bail!("replicates must be at least 1");
    }
    prepare_out(out)?;
    let labels: Vec<String> = (1..=spec.n).map(|t| t.to_string()).collect();
    for r in 0..cfg.replicates {
        let (data, truth) = spec.generate(&mut substream(cfg.seed, "data", r as u64))?;
        write_raw_csv(out.join(format!("replicate_{r:03}.csv")), &data)?;
        let names = truth_names(data.p());
        write_paths(&out.join(format!("truth_beta_{r:03}.csv")), &labels, &names, &truth.beta)?;
        let gamma: Vec<Vec<f64>> = truth.gamma.iter().map(|g| g.iter().map(|&v| v as f64).collect()).collect();
        write_paths(&out.join(format!("truth_gamma_{r:03}.csv")), &labels, &names, &gamma)?;
    }
    if evaluate {
        let results = run_replicates(&spec, cfg.replicates, cfg.seed, &cfg.hyper, &cfg.options)?;
        let mut w = csv::Writer::from_path(out.join("scores.csv"))?;
        w.write_record(["replicate", "predictor", "kind", "selection", "mse"])?;
        for r in &results {
            for s in &r.scores {
                w.write_record([
                    s.replicate.to_string(),
                    s.predictor.to_string(),
                    s.kind.label().to_string(),
                    dynsparse::data::fmt_f64(s.selection),
                    dynsparse::data::fmt_f64(s.mse),
                ])?;
            }
        }
        w.flush()?;
        let summary = summarize(&results);
        write_json(&out.join("summary.json"), &summary)?;
        for k in &summary.kinds {
            println!(
                "{:<12} n={:<4} median selection {:.3}  median mse {:.4}",
                k.kind.label(),
                k.count,
                k.median_selection,
                k.median_mse
            );
        }
    }
    write_manifest(out, "simulate", cfg)?;
    println!("simulate: wrote {} replicate(s) to {}", cfg.replicates, out.display());
    Ok(())
}

pub fn cmd_compare_mcmc(cfg: &RunConfig, out: &Path, export_draws: bool) -> Result<()> {
    cfg.validate()?;
    if cfg.draws == 0 {
        bail!("draws must be at least 1");
    }
    let data = load_data(cfg)?;
    prepare_out(out)?;
    // dropped predictors would collapse to a point mass, so every marginal is kept
    let mut opts = FitOptions { prune: false, ..cfg.options.clone() };
    if opts.heteroskedastic {
        eprintln!("compare-mcmc: the sampler is homoskedastic; fitting the homoskedastic variational model");
        opts.heteroskedastic = false;
    }
    let vb = fit(&data, &cfg.hyper, &opts)?;
    let mut rng = substream(cfg.seed, "mcmc", 0);
    let draws = run_gibbs(&data, &cfg.hyper, cfg.draws + cfg.burnin, cfg.burnin, &mut rng)?;
    let (n, p) = (data.n(), data.p());
    let quantities = ["beta", "b", "gamma"];
    let mut per: Vec<Vec<Vec<f64>>> = vec![vec![Vec::with_capacity(n); p]; 3];
    for j in 0..p {
        let pred = &vb.state.predictors[j];
        for t in 1..=n {
            let g = pred.mu_gamma[t - 1];
            let (m, v) = (pred.b.mean[t], pred.b.var(t));
            let q = SpikeSlab { weight: g, mean: m, var: v };
            per[0][j].push(overlap_accuracy(&q, &draws.beta_series(j, t)));
            per[1][j].push(overlap_accuracy(&SpikeSlab::gaussian(m, v), &draws.b_series(j, t)));
            per[2][j].push(bernoulli_overlap(g, &draws.gamma_series(j, t)));
        }
    }
    let mut summary = csv::Writer::from_path(out.join("overlap_summary.csv"))?;
    summary.write_record(["quantity", "predictor", "min", "q1", "median", "q3", "max"])?;
    for (qi, name) in quantities.iter().enumerate() {
        let mut w = csv::Writer::from_path(out.join(format!("overlap_{name}.csv")))?;
        w.write_record(["predictor", "t", "overlap"])?;
        for j in 0..p {
            for (i, v) in per[qi][j].iter().enumerate() {
                w.write_record([data.names[j].clone(), (i + 1).to_string(), dynsparse::data::fmt_f64(*v)])?;
            }
            let f = five_numbers(&per[qi][j]);
            let mut row = vec![name.to_string(), data.names[j].clone()];
            row.extend(f.iter().map(|v| dynsparse::data::fmt_f64(*v)));
            summary.write_record(&row)?;
        }
        w.flush()?;
    }
    summary.flush()?;
    if export_draws {
        draws.write_csv(out.join("draws.csv"))?;
    }
    write_manifest(out, "compare-mcmc", cfg)?;
    for j in 0..p {
        println!(
            "{:<12} median overlap beta {:.1}%  b {:.1}%  gamma {:.1}%",
            data.names[j],
            five_numbers(&per[0][j])[2],
            five_numbers(&per[1][j])[2],
            five_numbers(&per[2][j])[2]
        );
    }
    Ok(())
}

pub fn cmd_forecast(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let scheme = cfg.scheme()?;
    let data = load_data(cfg)?;
    prepare_out(out)?;
    let model = run_oos(&data, &cfg.hyper, &cfg.options, scheme, cfg.horizon)?;
    let bench = benchmark_oos(&data, scheme, cfg.horizon)?;
    write_forecast_csv(out.join("forecasts.csv"), &model)?;
    write_forecast_csv(out.join("benchmark.csv"), &bench)?;
    let cmp = compare("bg", &model, "recursive-mean", &bench, cfg.horizon)?;
    write_json(&out.join("comparison.json"), &cmp)?;
    write_manifest(out, "forecast", cfg)?;
    println!(
        "forecast {scheme} h={}: {} records, mean log score {:.4} vs {:.4}, DM(squared) {:.3} (p={:.3})",
        cfg.horizon,
        cmp.records,
        cmp.mean_log_score_model,
        cmp.mean_log_score_benchmark,
        cmp.dm_squared.statistic,
        cmp.dm_squared.p_value
    );
    Ok(())
}

/// Plain-text summary of a finished run directory.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .with_context(|| format!("{} has no manifest.json; is it an output directory?", dir.display()))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)?;
    let mut s = String::new();
    let field = |k: &str| manifest.get(k).map(|v| v.to_string()).unwrap_or_else(|| "?".into());
    s += &format!("command  {}\nseed     {}\ngit      {}\n", field("command"), field("seed"), field("git_hash"));
    let dropped = dir.join("dropped.json");
    if dropped.exists() {
        let f: FitSummary = serde_json::from_str(&std::fs::read_to_string(dropped)?)?;
        s += &format!("fit      {} iterations, converged {}, {} dropped\n", f.iterations, f.converged, f.dropped.len());
        for d in &f.dropped {
            s += &format!("  dropped {} at iteration {}\n", d.name, d.iteration);
        }
    }
    let cmp = dir.join("comparison.json");
    if cmp.exists() {
        let c: dynsparse::forecast::Comparison = serde_json::from_str(&std::fs::read_to_string(cmp)?)?;
        s += &format!(
            "forecast {} records; log score {:.4} vs {:.4} (ALS {:.4}); RMSFE diff {:.4}; DM squared {:.3} (p={:.3}), absolute {:.3} (p={:.3})\n",
            c.records,
            c.mean_log_score_model,
            c.mean_log_score_benchmark,
            c.als,
            c.rmsfe,
            c.dm_squared.statistic,
            c.dm_squared.p_value,
            c.dm_absolute.statistic,
            c.dm_absolute.p_value
        );
    }
    let overlap = dir.join("overlap_summary.csv");
    if overlap.exists() {
        let mut r = csv::Reader::from_path(overlap)?;
        s += "overlap  quantity predictor median\n";
        for rec in r.records() {
            let rec = rec?;
            let med: f64 = rec[4].parse().unwrap_or(f64::NAN);
            s += &format!("  {} {} {:.1}%\n", &rec[0], &rec[1], med);
        }
    }
    let summary = dir.join("summary.json");
    if summary.exists() {
        let sm: dynsparse::simlab::Summary = serde_json::from_str(&std::fs::read_to_string(summary)?)?;
        s += &format!("simulate {} replicates, {} converged\n", sm.replicates, sm.converged);
        for k in &sm.kinds {
            s += &format!("  {} median selection {:.3}\n", k.kind.label(), k.median_selection);
        }
    }
    Ok(s)
}
