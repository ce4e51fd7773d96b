//! Command implementations behind the `mtpinn` subcommands.

use anyhow::{bail, Context, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mtpinn_core::backtest::{
    estimate_volatility, ingest_and_window, run_backtest, simulate_feed, Policy, DEFAULT_EPS,
};
use mtpinn_core::closed_form::{simulate_gbm, StatePoint};
use mtpinn_core::derive_seed;
use mtpinn_core::evalkit::{
    path_error_curves, rollout_policy, surface_errors, terminal_stats, ExactField,
    RolloutConstraints, TerminalStats, ValueField,
};
use mtpinn_core::sampler::lattice;
use mtpinn_core::trainer::run_curriculum;

use crate::checkpoint::Checkpoint;
use crate::config::FileConfig;
use crate::manifest::ManifestBuilder;

fn write_file(out_dir: &Path, name: &str, text: &str, mb: &mut ManifestBuilder) -> Result<()> {
    std::fs::write(out_dir.join(name), text)
        .with_context(|| format!("writing {name}"))?;
    mb.record(name);
    Ok(())
}

/// Train a preset and write checkpoints, the loss history, and a manifest.
pub fn cmd_train(
    fc: &FileConfig,
    config_path: Option<&Path>,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let rc = fc.resolve()?;
    let config_text = toml::to_string_pretty(fc)?;
    let mut mb = ManifestBuilder::start("train", config_path, &config_text, seed, out_dir)?;
    write_file(out_dir, "config.toml", &config_text, &mut mb)?;

    let out = run_curriculum(rc.preset, &rc.schedule, &rc.hjb, seed, &rc.train)?;

    // per-stage checkpoints make every stage a resume point
    for stage in &out.stages {
        let ckpt = Checkpoint::new(rc.preset, &rc.hjb, stage.lambda, &stage.params);
        let name = format!("checkpoint_{}.json", stage.label);
        ckpt.save(&out_dir.join(&name))?;
        mb.record(&name);
    }
    let last = out.stages.last().expect("at least one stage");
    let final_ckpt = Checkpoint::new(rc.preset, &rc.hjb, last.lambda, &out.params);
    final_ckpt.save(&out_dir.join("checkpoint.json"))?;
    mb.record("checkpoint.json");

    let mut csv = String::from("epoch,term,raw_loss,weight,total\n");
    let mut offset = 0usize;
    for (_label, hist) in &out.history {
        for rec in hist {
            for (term, raw, w) in &rec.terms {
                writeln!(csv, "{},{term},{raw},{w},{}", offset + rec.epoch, rec.total)?;
            }
        }
        offset += hist.len();
    }
    write_file(out_dir, "loss_history.csv", &csv, &mut mb)?;

    mb.finish(out_dir)?;
    Ok(())
}

/// Roll the policy over seeded GBM paths and score it against the closed
/// form. Prints the terminal-inventory row and writes all reports.
pub fn cmd_eval(
    checkpoint_path: &Path,
    out_dir: &Path,
    seed: u64,
    n_paths: usize,
    eps: f64,
) -> Result<TerminalStats> {
    std::fs::create_dir_all(out_dir)?;
    let ckpt = Checkpoint::load(checkpoint_path)?;
    let cfg = ckpt.hjb();
    let field: Box<dyn ValueField> = if ckpt.exact {
        Box::new(ExactField(cfg))
    } else {
        Box::new(ckpt.params()?)
    };
    let config_text = format!(
        "checkpoint = {:?}\nn_paths = {n_paths}\neps = {e}\n",
        checkpoint_path.display().to_string(),
        e = eps
    );
    let mut mb = ManifestBuilder::start("eval", None, &config_text, seed, out_dir)?;

    // terminal inventories over seeded GBM paths from the top of the
    // inventory domain
    let x0 = cfg.x_range.1;
    let s0 = 0.5 * (cfg.s_range.0 + cfg.s_range.1);
    let n_dt = 100;
    let mut terminals = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let path = simulate_gbm(s0, &cfg, n_dt, derive_seed(seed, &format!("gbm/{i}")));
        let r = rollout_policy(
            field.as_ref(),
            &cfg,
            x0,
            s0,
            cfg.horizon_t,
            n_dt,
            Some(&path.prices),
            RolloutConstraints::default(),
        )?;
        terminals.push(r.terminal());
    }
    let stats = terminal_stats(&terminals, eps);
    let mut csv = String::from("mean_abs,max_abs,std_abs,p95_abs,frac_within_eps,eps,n\n");
    writeln!(
        csv,
        "{},{},{},{},{},{},{}",
        stats.mean_abs, stats.max_abs, stats.std_abs, stats.p95_abs, stats.frac_within_eps,
        stats.eps, stats.n
    )?;
    write_file(out_dir, "terminal_stats.csv", &csv, &mut mb)?;
    println!(
        "terminal |X_T| over {} paths: mean {:.6} std {:.6} p95 {:.6} p_eps({:.4}) {:.3}",
        stats.n, stats.mean_abs, stats.std_abs, stats.p95_abs, stats.eps, stats.frac_within_eps
    );

    // value-surface errors against the closed form on an even lattice
    let taus = lattice((cfg.tau_min(), cfg.horizon_t), 20);
    let xs = lattice(cfg.x_range, 20);
    let ss = lattice(cfg.s_range, 3);
    let mut points = Vec::new();
    for &tau in &taus {
        for &x in &xs {
            if cfg.is_risk_neutral() {
                points.push(StatePoint::new(tau, x, s0));
            } else {
                for &s in &ss {
                    points.push(StatePoint::new(tau, x, s));
                }
            }
        }
    }
    let rep = surface_errors(field.as_ref(), &cfg, &points)?;
    let mut csv =
        String::from("mae,max_ae,rmse,mre,mae_asinh,max_ae_asinh,rmse_asinh,n\n");
    writeln!(
        csv,
        "{},{},{},{},{},{},{},{}",
        rep.mae, rep.max_ae, rep.rmse, rep.mre, rep.mae_asinh, rep.max_ae_asinh, rep.rmse_asinh,
        rep.n
    )?;
    write_file(out_dir, "surface_errors.csv", &csv, &mut mb)?;

    // per-time error curves along closed-form trajectories over GBM paths
    let curve_paths: Vec<_> = (0..20)
        .map(|i| simulate_gbm(s0, &cfg, n_dt, derive_seed(seed, &format!("curves/{i}"))))
        .collect();
    let curves = path_error_curves(field.as_ref(), &cfg, &curve_paths, x0)?;
    let mut csv = String::from(
        "step,t,gamma_err_mean,gamma_err_std,x_err_mean,x_err_std,v_err_mean,v_err_std\n",
    );
    for k in 0..curves.times.len() {
        let (gm, gs) = curves.gamma[k];
        let (xm, xs) = curves.inventory[k];
        let (vm, vs) = curves
            .rate
            .get(k)
            .map_or((String::new(), String::new()), |&(m, s)| {
                (m.to_string(), s.to_string())
            });
        writeln!(csv, "{k},{},{gm},{gs},{xm},{xs},{vm},{vs}", curves.times[k])?;
    }
    write_file(out_dir, "path_errors.csv", &csv, &mut mb)?;

    mb.finish(out_dir)?;
    Ok(stats)
}

/// Backtest data source.
pub enum DataSource {
    Csv(PathBuf),
    Synthetic { days: usize, sigma: f64 },
}

/// Run TWAP plus every checkpointed policy over the windowed feed.
pub fn cmd_backtest(
    checkpoint_paths: &[PathBuf],
    source: &DataSource,
    out_dir: &Path,
    seed: u64,
    eps: f64,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let ckpts: Vec<Checkpoint> = checkpoint_paths
        .iter()
        .map(|p| Checkpoint::load(p))
        .collect::<Result<_>>()?;
    if ckpts.is_empty() {
        bail!("backtest needs at least one checkpoint");
    }
    // all checkpoints must share the regime except the risk aversion
    let base = ckpts[0].hjb();
    for c in &ckpts[1..] {
        let h = c.hjb();
        if (h.kappa, h.sigma, h.horizon_t, h.x_range, h.s_range)
            != (base.kappa, base.sigma, base.horizon_t, base.x_range, base.s_range)
        {
            bail!("checkpoints disagree on the regime (only lambda may differ)");
        }
    }

    let config_text = format!(
        "checkpoints = {:?}\nsynthetic = {}\neps = {e}\n",
        checkpoint_paths
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>(),
        matches!(source, DataSource::Synthetic { .. }),
        e = eps
    );
    let mut mb = ManifestBuilder::start("backtest", None, &config_text, seed, out_dir)?;

    let feed = match source {
        DataSource::Csv(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading feed {}", path.display()))?,
        DataSource::Synthetic { days, sigma } => simulate_feed(
            *days,
            chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            *sigma,
            (590.0, 620.0),
            derive_seed(seed, "feed"),
        ),
    };
    let ingest = ingest_and_window(&feed)?;
    if ingest.windows.is_empty() {
        bail!("no usable windows in the feed");
    }
    for w in &ingest.warnings {
        eprintln!("warning: {w}");
    }
    let sigma_hat = estimate_volatility(&ingest.windows);

    let model_params: Vec<_> = ckpts
        .iter()
        .map(|c| c.params())
        .collect::<Result<Vec<_>>>()?;
    let mut policies = vec![Policy::Twap];
    for (c, p) in ckpts.iter().zip(&model_params) {
        policies.push(Policy::MtPinn {
            params: p,
            lambda: c.lambda,
        });
    }
    let report = run_backtest(&policies, &ingest.windows, &base, eps)?;

    let mut csv = String::from("window_id,policy,lambda,exposure,cost_bps\n");
    for o in &report.outcomes {
        writeln!(
            csv,
            "{},{},{},{},{}",
            o.window_id, o.policy, o.lambda, o.exposure, o.cost_bps
        )?;
    }
    write_file(out_dir, "windows.csv", &csv, &mut mb)?;

    // Table-shaped aggregate: one row per policy, exposure and cost
    // mean +/- std over windows. Realized volatility uses the
    // sqrt(N)-scaled estimator (per-sample std alone is not in per-day
    // units).
    let aggregate = serde_json::json!({
        "n_windows": ingest.windows.len(),
        "realized_volatility_daily": sigma_hat,
        "volatility_note": "sample std of log-returns scaled by sqrt(N)/sqrt(dt_w); consistent for GBM",
        "warnings": ingest.warnings,
        "policies": report.aggregates,
    });
    write_file(
        out_dir,
        "aggregate.json",
        &serde_json::to_string_pretty(&aggregate)?,
        &mut mb,
    )?;
    for a in &report.aggregates {
        println!(
            "{} (lambda {:.3}): exposure {:.4} +/- {:.4}, cost {:.3} +/- {:.3} bps ({} windows, {} violations)",
            a.policy, a.lambda, a.mean_exposure, a.std_exposure, a.mean_cost_bps,
            a.std_cost_bps, a.n_windows, a.violations
        );
    }

    mb.finish(out_dir)?;
    Ok(())
}

/// Write a synthetic GBM feed CSV.
pub fn cmd_simulate_feed(
    out_dir: &Path,
    days: usize,
    sigma: f64,
    s0_range: (f64, f64),
    seed: u64,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let config_text = format!("days = {days}\nsigma = {sigma}\n");
    let mut mb = ManifestBuilder::start("simulate-feed", None, &config_text, seed, out_dir)?;
    let feed = simulate_feed(
        days,
        chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
        sigma,
        s0_range,
        derive_seed(seed, "feed"),
    );
    write_file(out_dir, "feed.csv", &feed, &mut mb)?;
    mb.finish(out_dir)?;
    Ok(out_dir.join("feed.csv"))
}

/// Default residual-inventory tolerance for backtests.
pub const DEFAULT_BACKTEST_EPS: f64 = DEFAULT_EPS;
