// Scratch harness: calibrates the intraday-regime curriculum used by the
// risk-frontier checks. Prints exact-policy exposures first, then trains a
// small curriculum and backtests each stage checkpoint.

use mtpinn_core::backtest::{
    estimate_volatility, ingest_and_window, run_backtest, simulate_feed, Policy,
};
use mtpinn_core::closed_form::{optimal_rate, HJBConfig};
use mtpinn_core::sampler::SampleCounts;
use mtpinn_core::trainer::{
    run_curriculum, AdamWConfig, CurriculumSchedule, DwaConfig, InitialWeights, Preset,
    TrainConfig, TrajSettings,
};

fn main() {
    let t_w = 2.0 / 6.5;
    let cfg = |lambda: f64| HJBConfig {
        kappa: 0.2,
        sigma: 0.0038,
        lambda,
        horizon_t: t_w,
        x_range: (-1.0, 1.0),
        s_range: (580.0, 630.0),
    };

    let feed = simulate_feed(
        7,
        chrono::NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
        0.0038,
        (590.0, 620.0),
        77,
    );
    let ingest = ingest_and_window(&feed).unwrap();
    println!(
        "windows: {} sigma_hat {:.5}",
        ingest.windows.len(),
        estimate_volatility(&ingest.windows)
    );

    // exact-policy exposures as the target for the trained nets
    for lambda in [0.0, 0.05, 0.10] {
        let c = cfg(lambda);
        let mut exposures = Vec::new();
        for w in &ingest.windows {
            let n = w.n_steps();
            let dt = t_w / n as f64;
            let mut chi = 1.0_f64;
            let mut sum_sq = 0.0;
            for k in 0..n {
                sum_sq += chi * chi;
                if chi <= 0.0 {
                    continue;
                }
                let t = k as f64 * dt;
                let v = optimal_rate(t, chi, w.prices[k], &c).unwrap();
                let q = (v * dt).clamp(0.0, chi);
                chi -= q;
            }
            exposures.push(sum_sq / n as f64);
        }
        let mean = exposures.iter().sum::<f64>() / exposures.len() as f64;
        println!("exact lambda {lambda:.2}: mean exposure {mean:.4}");
    }

    let tc = TrainConfig {
        widths: vec![32, 32, 32],
        optimizer: AdamWConfig {
            lr: 2e-3,
            ..AdamWConfig::default()
        },
        counts: SampleCounts {
            n_pde: 2000,
            n_ic: 400,
            n_term: 400,
            n_zero_term: 200,
        },
        resample_each_epoch: false,
        traj: TrajSettings {
            n_x: 31,
            n_s: 2,
            horizon_fractions: vec![0.1, 0.4, 1.0],
            n_dt: 50,
        },
        dwa: DwaConfig {
            delta: 400,
            ..DwaConfig::default()
        },
        initial_weights: InitialWeights::default(),
        term_penalty_c: 100.0,
        input_scaling: true,
        grad_clip: 1e3,
    };
    let schedule = CurriculumSchedule {
        lambda_star: 0.1,
        fractions: vec![0.5, 1.0],
        epochs_per_stage: 1000,
        phase_a_epochs: 2000,
    };
    let t0 = std::time::Instant::now();
    let out = run_curriculum(Preset::MtPinnCurriculum, &schedule, &cfg(0.1), 2718, &tc).unwrap();
    println!("curriculum took {:.1}s", t0.elapsed().as_secs_f64());
    for (label, hist) in &out.history {
        let last = hist.last().unwrap();
        println!("{label}: final total {:.4e}", last.total);
    }

    let mut policies = vec![Policy::Twap];
    for stage in &out.stages {
        policies.push(Policy::MtPinn {
            params: &stage.params,
            lambda: stage.lambda,
        });
    }
    let report = run_backtest(&policies, &ingest.windows, &cfg(0.1), 0.005).unwrap();
    for a in &report.aggregates {
        println!(
            "{} lambda {:.2}: exposure {:.4} cost {:.3} bps, {} violations",
            a.policy, a.lambda, a.mean_exposure, a.mean_cost_bps, a.violations
        );
    }
}
