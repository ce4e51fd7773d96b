// Scratch harness: times one desk-scale phase A run and reports terminal
// inventory quality of the learned policy.

use mtpinn_core::closed_form::HJBConfig;
use mtpinn_core::evalkit::{rollout_policy, terminal_stats, RolloutConstraints};
use mtpinn_core::trainer::{desk_scale, run_curriculum, CurriculumSchedule, Preset};

fn main() {
    let cfg = HJBConfig {
        kappa: 0.1,
        sigma: 0.1,
        lambda: 0.0,
        horizon_t: 5.0,
        x_range: (-10.0, 10.0),
        s_range: (10.0, 100.0),
    };
    let preset = Preset::MtPinnCurriculum;
    let (tc, _) = desk_scale(preset);
    let (_, schedule) = desk_scale(preset);
    let t0 = std::time::Instant::now();
    let out = run_curriculum(preset, &schedule, &cfg, 12345, &tc).unwrap();
    let dt = t0.elapsed();
    println!("full curriculum took {:.1}s", dt.as_secs_f64());
    for (label, hist) in &out.history {
        let first = &hist[0];
        let last = hist.last().unwrap();
        println!("{label}: total {:.4e} -> {:.4e}", first.total, last.total);
        for (name, raw, w) in &last.terms {
            println!("  {name}: raw {raw:.4e} w {w:.3}");
        }
        let (gmax, gmax_e) = hist
            .iter()
            .map(|r| (r.grad_norm, r.epoch))
            .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
        println!("  grad norm max {gmax:.3e} at epoch {gmax_e}");
        for r in hist.iter().step_by(100) {
            println!("    e{:04} total {:.3e} |g| {:.3e}", r.epoch, r.total, r.grad_norm);
        }
    }
    // policy quality of each stage checkpoint: 200 GBM paths from x0 = 10,
    // at the training rollout resolution and a finer one
    for stage in &out.stages {
        for n_dt in [100usize, 400] {
            let mut terms = Vec::new();
            for i in 0..200 {
                let path = mtpinn_core::closed_form::simulate_gbm(55.0, &cfg, n_dt, 1000 + i);
                let r = rollout_policy(
                    &stage.params,
                    &cfg,
                    10.0,
                    path.prices[0],
                    5.0,
                    n_dt,
                    Some(&path.prices),
                    RolloutConstraints::default(),
                )
                .unwrap();
                terms.push(r.terminal());
            }
            let stats = terminal_stats(&terms, 0.05);
            println!(
                "{} (lambda {:.3}) n_dt {n_dt} |X_T|: mean {:.4} max {:.4} p95 {:.4} p_eps {:.2}",
                stage.label, stage.lambda, stats.mean_abs, stats.max_abs, stats.p95_abs, stats.frac_within_eps
            );
        }
    }
}
