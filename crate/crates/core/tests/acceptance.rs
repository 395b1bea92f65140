//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use dynsparse::cavi::{approx_gamma_update, prune_check};
use dynsparse::forecast::{benchmark_oos, dm_test, run_oos, Loss, Scheme};
use dynsparse::gmrf::{build_q, solve_banded, SymBand};
use dynsparse::mcmc::{run_gibbs_with, sample_pg1};
use dynsparse::rng::{substream, StreamRng};
use dynsparse::simlab::{
    gen_always_on, gen_always_zero, gen_dataset, median, overlap_accuracy, run_replicates, summarize, Design,
    PatternGroup, PatternKind, SimSpec, SpikeSlab,
};
use dynsparse::smoothing::{bspline_basis, psi, psi_grad};
use dynsparse::vb::{beta_moments, pg_mean, sv_gradient, sv_neg_hessian, sv_objective, update_gamma};
use dynsparse::{fit, fit_with_observer, Dataset, FitOptions, Hyperparams, ModelState};

const MASTER_SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn small_design() -> SimSpec {
    SimSpec {
        n: 100,
        noise_var: 0.25,
        design: Design::default(),
        predictors: vec![
            PatternGroup {
                kind: PatternKind::AlwaysOn,
                count: 1,
            },
            PatternGroup {
                kind: PatternKind::AlwaysZero,
                count: 1,
            },
            PatternGroup {
                kind: PatternKind::OneSwitch,
                count: 1,
            },
        ],
    }
}

fn signal_design(p: usize) -> SimSpec {
    let g = |kind, count| PatternGroup { kind, count };
    SimSpec {
        n: 200,
        noise_var: 0.25,
        design: Design::default(),
        predictors: vec![
            g(PatternKind::AlwaysOn, 1),
            g(PatternKind::OneSwitch, 2),
            g(PatternKind::TwoSwitch, 2),
            g(PatternKind::ShortLived, 2),
            g(PatternKind::AlwaysZero, p - 7),
        ],
    }
}

fn comparison_opts() -> FitOptions {
    FitOptions {
        heteroskedastic: false,
        prune: false,
        ..FitOptions::default()
    }
}

const MCMC_KEEP: usize = 20_000;
const MCMC_BURNIN: usize = 5_000;

/// Per-(t) overlap accuracies (fractions) of `q(beta_jt)` against Gibbs draws for predictors `js`.
fn replicate_overlaps(r: usize, js: &[usize]) -> Vec<Vec<f64>> {
    let spec = small_design();
    let (data, _) = spec.generate(&mut substream(MASTER_SEED, "data", r as u64)).unwrap();
    let hyper = Hyperparams::default();
    let vb = fit(&data, &hyper, &comparison_opts()).unwrap();
    let n = data.n();
    let mut draws: Vec<Vec<Vec<f64>>> = vec![vec![Vec::with_capacity(MCMC_KEEP); n]; js.len()];
    let mut rng = substream(MASTER_SEED, "mcmc", r as u64);
    run_gibbs_with(&data, &hyper, MCMC_KEEP + MCMC_BURNIN, MCMC_BURNIN, &mut rng, |s| {
        for (k, &j) in js.iter().enumerate() {
            for t in 1..=n {
                let v = if s.gamma[j][t - 1] == 1 { s.b[j][t] } else { 0.0 };
                draws[k][t - 1].push(v);
            }
        }
    })
    .unwrap();
    js.iter()
        .enumerate()
        .map(|(k, &j)| {
            let pred = &vb.state.predictors[j];
            (1..=n)
                .map(|t| {
                    let q = SpikeSlab {
                        weight: pred.mu_gamma[t - 1],
                        mean: pred.b.mean[t],
                        var: pred.b.var(t),
                    };
                    overlap_accuracy(&q, &draws[k][t - 1]) / 100.0
                })
                .collect()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let reps = 20;
    let per_rep: Vec<Vec<Vec<f64>>> = (0..reps).into_par_iter().map(|r| replicate_overlaps(r, &[0, 1])).collect();
    let on: Vec<f64> = per_rep.iter().flat_map(|v| v[0].iter().copied()).collect();
    let zero: Vec<f64> = per_rep.iter().flat_map(|v| v[1].iter().copied()).collect();
    let (m_on, m_zero) = (median(&on), median(&zero));
    let elapsed = start.elapsed();
    let pass = m_on >= 0.65 && m_zero >= 0.65 && elapsed <= Duration::from_secs(30 * 60);
    outcome(
        pass,
        format!(
            "median overlap always-on {m_on:.3} (>= 0.65), always-zero {m_zero:.3} (>= 0.65), {reps} replicates in {:.1}s (<= 1800s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let spec = small_design();
    let hyper = Hyperparams::default();
    let mut ratios = Vec::new();
    let mut last = (0.0, 0.0);
    for r in 0..3u64 {
        let (data, _) = spec.generate(&mut substream(MASTER_SEED, "timing", r)).unwrap();
        let t0 = Instant::now();
        fit(&data, &hyper, &FitOptions::default()).unwrap();
        let vb_default = t0.elapsed();
        let t0 = Instant::now();
        fit(&data, &hyper, &comparison_opts()).unwrap();
        let vb_homo = t0.elapsed();
        let vb = vb_default.max(vb_homo).as_secs_f64();
        let mut rng = substream(MASTER_SEED, "timing-mcmc", r);
        let t0 = Instant::now();
        let mut kept = 0usize;
        run_gibbs_with(&data, &hyper, MCMC_KEEP, 0, &mut rng, |_| kept += 1).unwrap();
        let mc = t0.elapsed().as_secs_f64();
        assert_eq!(kept, MCMC_KEEP);
        ratios.push(mc / vb);
        last = (vb, mc);
    }
    let ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        ratio >= 5.0,
        format!(
            "min speed ratio MCMC/VB over 3 datasets {ratio:.1}x (>= 5x); last VB {:.4}s vs MCMC {:.2}s",
            last.0, last.1
        ),
    )
}

fn criterion_3() -> Outcome {
    let spec = signal_design(50);
    let results = run_replicates(&spec, 30, MASTER_SEED, &Hyperparams::default(), &FitOptions::default()).unwrap();
    let summary = summarize(&results);
    let get = |k: PatternKind| summary.kinds.iter().find(|s| s.kind == k).map(|s| s.median_selection).unwrap();
    let on = get(PatternKind::AlwaysOn);
    let one = get(PatternKind::OneSwitch);
    let zero = get(PatternKind::AlwaysZero);
    outcome(
        on >= 0.9 && one >= 0.6 && zero >= 0.95,
        format!("median F1 always-on {on:.3} (>= 0.9), one-switch {one:.3} (>= 0.6); always-zero accuracy {zero:.3} (>= 0.95)"),
    )
}

fn timed_fit(data: &Dataset, hyper: &Hyperparams, prune: bool) -> (dynsparse::FitResult, f64) {
    let opts = FitOptions {
        prune,
        ..FitOptions::default()
    };
    let t0 = Instant::now();
    let res = fit(data, hyper, &opts).unwrap();
    (res, t0.elapsed().as_secs_f64())
}

fn criterion_4() -> Outcome {
    let hyper = Hyperparams {
        max_iter: 2000,
        ..Hyperparams::default()
    };
    let mut notes = Vec::new();
    let mut pass = true;

    let (data, truth) = signal_design(200).generate(&mut substream(MASTER_SEED, "prune", 0)).unwrap();
    let (pruned, _) = timed_fit(&data, &hyper, true);
    let (full, _) = timed_fit(&data, &hyper, false);
    let nulls: Vec<usize> = (0..data.p()).filter(|&j| truth.kinds[j] == PatternKind::AlwaysZero).collect();
    let dropped_nulls = pruned
        .dropped
        .iter()
        .filter(|d| truth.kinds[d.predictor] == PatternKind::AlwaysZero && d.iteration < pruned.iterations)
        .count();
    let frac = dropped_nulls as f64 / nulls.len() as f64;
    pass &= frac >= 0.9 && pruned.converged;
    notes.push(format!(
        "dropped {dropped_nulls}/{} nulls before convergence ({:.1}%, >= 90%; converged at {})",
        nulls.len(),
        100.0 * frac,
        pruned.iterations
    ));

    let mut max_diff: f64 = 0.0;
    for (j, pred) in pruned.state.predictors.iter().enumerate() {
        if !pred.active {
            continue;
        }
        let a = pred.mean_beta();
        let b = full.state.predictors[j].mean_beta();
        max_diff = a.iter().zip(&b).fold(max_diff, |m, (x, y)| m.max((x - y).abs()));
    }
    pass &= max_diff <= 1e-4;
    notes.push(format!("retained max-abs diff {max_diff:.2e} (<= 1e-4)"));

    let mut speedups = Vec::new();
    for p in [50usize, 100, 200] {
        let (data, _) = signal_design(p).generate(&mut substream(MASTER_SEED, "prune-timing", p as u64)).unwrap();
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        for _ in 0..3 {
            t2.push(timed_fit(&data, &hyper, true).1);
            t1.push(timed_fit(&data, &hyper, false).1);
        }
        speedups.push(median(&t1) / median(&t2));
    }
    let monotone = speedups.windows(2).all(|w| w[1] >= w[0]);
    pass &= monotone;
    notes.push(format!(
        "speedup unpruned/pruned at p=50,100,200: {:.2}, {:.2}, {:.2} (non-decreasing)",
        speedups[0], speedups[1], speedups[2]
    ));
    outcome(pass, notes.join("; "))
}

fn criterion_5() -> Outcome {
    let hyper = Hyperparams::default();
    let mut rng = substream(MASTER_SEED, "noise-predictor", 0);
    let n = 100;
    let patterns = vec![gen_always_on(n, 0.98, 0.1, &mut rng).unwrap(), gen_always_zero(n)];
    let (data, _) = gen_dataset(&patterns, 0.25, &Design::default(), &mut rng).unwrap();
    let j = 1;
    let mut history: Vec<(Vec<f64>, bool)> = Vec::new();
    let mut prev_band: Option<SymBand> = None;
    let opts = FitOptions {
        prune: false,
        ..FitOptions::default()
    };
    fit_with_observer(&data, &hyper, &opts, |iter, state: &ModelState| {
        let band = state.predictors[j].omega.cov.clone();
        let holds = match &prev_band {
            Some(prev) => iter >= 2 && prune_check(state, prev, j, &hyper),
            None => false,
        };
        history.push((state.predictors[j].omega.mean.clone(), holds));
        prev_band = Some(band);
    })
    .unwrap();
    let Some(first) = history.iter().position(|(_, h)| *h) else {
        return outcome(false, format!("prune precondition never held in {} iterations", history.len()));
    };
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for k in first + 1..history.len() {
        for t in 1..=n {
            let rise = history[k].0[t] - history[k - 1].0[t];
            if rise > 0.0 {
                violations += 1;
                worst = worst.max(rise);
            }
        }
    }
    let checked = history.len() - first - 1;
    outcome(
        violations == 0 && checked > 0,
        format!(
            "precondition first held at iteration {}, {checked} later iterations checked, {violations} increases (max {worst:.2e}; zero tolerance)",
            first + 1
        ),
    )
}

fn enumerate_beta(mu_b: &[f64], sigma: &DMatrix<f64>, g: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let m = mu_b.len();
    let n = m - 1;
    let mut mean = DVector::zeros(m);
    let mut second = DMatrix::zeros(m, m);
    for mask in 0u32..(1 << n) {
        let mut w = 1.0;
        let mut s = vec![1.0; m];
        for t in 1..=n {
            let on = mask >> (t - 1) & 1 == 1;
            s[t] = if on { 1.0 } else { 0.0 };
            w *= if on { g[t - 1] } else { 1.0 - g[t - 1] };
        }
        for r in 0..m {
            mean[r] += w * s[r] * mu_b[r];
            for c in 0..m {
                second[(r, c)] += w * s[r] * s[c] * (sigma[(r, c)] + mu_b[r] * mu_b[c]);
            }
        }
    }
    let cov = &second - &mean * mean.transpose();
    (mean, cov)
}

fn random_spd(m: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(m, m) * 0.5
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn criterion_6() -> Outcome {
    let mut rng = substream(MASTER_SEED, "oracles", 0);
    let mut notes = Vec::new();
    let mut pass = true;

    // beta moments against enumeration
    let mut err_beta: f64 = 0.0;
    for n in 1..=10 {
        let m = n + 1;
        let mu: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigma = random_spd(m, &mut rng);
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let (mean, cov) = beta_moments(&mu, &sigma, &g).unwrap();
        let (me, ce) = enumerate_beta(&mu, &sigma, &g);
        err_beta = mean.iter().zip(me.iter()).fold(err_beta, |e, (a, b)| e.max((a - b).abs()));
        err_beta = err_beta.max((&cov - &ce).abs().max());
    }
    pass &= err_beta <= 1e-12;
    notes.push(format!("beta moments {err_beta:.1e}"));

    // banded solves and selected inverses against dense
    let mut err_solve: f64 = 0.0;
    for size in [1usize, 2, 5, 17, 50] {
        for w in 1..=3usize {
            let w = w.min(size - 1);
            let mut dense = DMatrix::<f64>::zeros(size, size);
            for i in 0..size {
                for k in i.saturating_sub(w)..i {
                    let v = rng.random_range(-1.0..1.0);
                    dense[(i, k)] = v;
                    dense[(k, i)] = v;
                }
            }
            for i in 0..size {
                let row: f64 = (0..size).filter(|&k| k != i).map(|k| dense[(i, k)].abs()).sum();
                dense[(i, i)] = row + rng.random_range(0.5..2.0);
            }
            let band = SymBand::from_dense(&dense, w);
            let rhs = DMatrix::from_fn(size, 2, |_, _| rng.random_range(-1.0..1.0));
            let sol = solve_banded(&band, &rhs).unwrap();
            let inv = dense.clone().try_inverse().unwrap();
            err_solve = err_solve.max((&sol.solution - &inv * &rhs).abs().max());
            for d in 0..=w {
                for i in d..size {
                    err_solve = err_solve.max((sol.inverse_band.get(i, i - d) - inv[(i, i - d)]).abs());
                }
            }
        }
    }
    let q = build_q(40, 100.0).unwrap();
    let qd = q.to_dense();
    let rhs = DMatrix::from_fn(41, 1, |_, _| rng.random_range(-1.0..1.0));
    let sol = solve_banded(&q.as_band(), &rhs).unwrap();
    let dense_sol = qd.clone().lu().solve(&rhs).unwrap();
    err_solve = err_solve.max(((&sol.solution - &dense_sol).abs().max()) / dense_sol.abs().max().max(1.0));
    pass &= err_solve <= 1e-10;
    notes.push(format!("banded solves {err_solve:.1e}"));

    // finite differences for the volatility objective and the smoothing objective
    let n = 30;
    let q = build_q(n, 100.0).unwrap();
    let mu: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut e2: Vec<f64> = (0..=n).map(|_| rng.random_range(0.1..3.0)).collect();
    e2[0] = 0.0;
    let var: Vec<f64> = (0..=n).map(|_| rng.random_range(0.01..0.5)).collect();
    let cov = SymBand::from_diag(&var);
    let nu_inv = 7.0;
    let grad = sv_gradient(&mu, &var, &e2, nu_inv, &q);
    let hess = sv_neg_hessian(&mu, &var, &e2, nu_inv, &q).to_dense();
    let mut err_fd: f64 = 0.0;
    let h = 1e-5;
    for t in 0..=n {
        let mut up = mu.clone();
        let mut dn = mu.clone();
        up[t] += h;
        dn[t] -= h;
        let fd = (sv_objective(&up, &cov, &e2, nu_inv, &q) - sv_objective(&dn, &cov, &e2, nu_inv, &q)) / (2.0 * h);
        err_fd = err_fd.max(rel_err(fd, grad[t]));
        let gu = sv_gradient(&up, &var, &e2, nu_inv, &q);
        let gd = sv_gradient(&dn, &var, &e2, nu_inv, &q);
        for s in 0..=n {
            let fd2 = -(gu[s] - gd[s]) / (2.0 * h);
            err_fd = err_fd.max(rel_err(fd2, hess[(s, t)]));
        }
    }
    let basis = bspline_basis(80, 10, 3).unwrap();
    let logits: Vec<f64> = (0..80).map(|_| rng.random_range(-4.0..4.0)).collect();
    let f = DVector::from_fn(basis.k(), |_, _| rng.random_range(-1.0..1.0));
    let g = psi_grad(&f, &logits, &basis);
    for i in 0..basis.k() {
        let mut up = f.clone();
        let mut dn = f.clone();
        up[i] += h;
        dn[i] -= h;
        let fd = (psi(&up, &logits, &basis) - psi(&dn, &logits, &basis)) / (2.0 * h);
        err_fd = err_fd.max(rel_err(fd, g[i]));
    }
    pass &= err_fd <= 1e-5;
    notes.push(format!("finite differences rel {err_fd:.1e}"));

    // Polya-Gamma mean against sampler draws
    let mut worst_z: f64 = 0.0;
    for (i, c) in [0.0, 0.5, 2.0, 6.0].into_iter().enumerate() {
        let mut prng = substream(MASTER_SEED, "pg", i as u64);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_pg1(c, &mut prng)).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let v = draws.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (draws.len() - 1) as f64;
        let se = (v / draws.len() as f64).sqrt();
        worst_z = worst_z.max((m - pg_mean(c).unwrap()).abs() / se);
    }
    pass &= worst_z <= 3.0;
    notes.push(format!("pg mean max |z| {worst_z:.2} (<= 3)"));

    // collapsed-probability approximation against the full update
    let eps = 1e-4;
    let (data, state) = collapsed_state(eps);
    let mut err_approx: f64 = 0.0;
    for t in 1..=data.n() {
        let (_, full) = update_gamma(&state, &data, 1, t);
        let approx = approx_gamma_update(&state, &data, 1, t).unwrap();
        err_approx = err_approx.max((full - approx).abs());
    }
    pass &= err_approx <= 10.0 * eps;
    notes.push(format!("collapsed approximation {err_approx:.1e} (<= {:.0e})", 10.0 * eps));

    outcome(pass, notes.join("; "))
}

/// A fitted state whose second predictor has every inclusion probability at or below `eps`.
fn collapsed_state(eps: f64) -> (Dataset, ModelState) {
    let mut rng = substream(MASTER_SEED, "collapsed", 0);
    let n = 100;
    let patterns = vec![gen_always_on(n, 0.98, 0.1, &mut rng).unwrap(), gen_always_zero(n)];
    let (data, _) = gen_dataset(&patterns, 0.25, &Design::default(), &mut rng).unwrap();
    let opts = FitOptions {
        prune: false,
        ..FitOptions::default()
    };
    let mut state = fit(&data, &Hyperparams::default(), &opts).unwrap().state;
    let pred = &mut state.predictors[1];
    let top = pred.mu_gamma.iter().copied().fold(0.0, f64::max);
    if top > eps {
        let scale = eps / top;
        pred.mu_gamma.iter_mut().for_each(|g| *g *= scale);
    }
    let b = dynsparse::vb::update_b(&state, &data, 1).unwrap();
    state.predictors[1].b = b;
    (data, state)
}

fn criterion_7() -> Outcome {
    let reps = 20;
    let n = 160;
    let burnin = 100;
    let hyper = Hyperparams::default();
    let scores: Vec<(f64, f64, usize)> = (0..reps)
        .map(|r| {
            let mut rng = substream(MASTER_SEED, "forecast", r as u64);
            let pattern = gen_always_on(n, 0.98, 0.1, &mut rng).unwrap();
            let (data, _) = gen_dataset(&[pattern], 0.25, &Design::default(), &mut rng).unwrap();
            let scheme = Scheme::Expanding(burnin);
            let model = run_oos(&data, &hyper, &FitOptions::default(), scheme, 1).unwrap();
            let bench = benchmark_oos(&data, scheme, 1).unwrap();
            let sm: f64 = model.iter().map(|r| r.log_score).sum();
            let sb: f64 = bench.iter().map(|r| r.log_score).sum();
            (sm, sb, model.len())
        })
        .collect();
    let count: usize = scores.iter().map(|s| s.2).sum();
    let model = scores.iter().map(|s| s.0).sum::<f64>() / count as f64;
    let bench = scores.iter().map(|s| s.1).sum::<f64>() / count as f64;
    outcome(
        model > bench,
        format!("mean log score model {model:.4} vs recursive mean {bench:.4} over {reps} replicates, {count} forecasts"),
    )
}

fn criterion_8() -> Outcome {
    let reps = 500;
    let len = 200;
    let mut rng = substream(MASTER_SEED, "dm-size", 0);
    let mut rejections = 0;
    for _ in 0..reps {
        let a: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if dm_test(&a, &b, Loss::Squared, 1).unwrap().p_value < 0.10 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    outcome(
        (0.05..=0.15).contains(&rate),
        format!("rejection rate at 10% level {:.1}% over {reps} replicates (within [5%, 15%])", 100.0 * rate),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture` or a name filter; honour `--list`.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("VB vs MCMC overlap accuracy", criterion_1),
        ("VB faster than 20k MCMC draws", criterion_2),
        ("dynamic selection quality", criterion_3),
        ("pruning soundness", criterion_4),
        ("monotone omega decay", criterion_5),
        ("oracle equivalences", criterion_6),
        ("forecast beats recursive mean", criterion_7),
        ("DM test size", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {name}: {} ({:.1}s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
