// Scratch harness: forward vs backward split of the trajectory gradient.

use mtpinn_core::closed_form::HJBConfig;
use mtpinn_core::diffnet::{grad_of_loss, init_params};
use mtpinn_core::losses::{traj_loss, TrajLoss, TrajectorySpec};
use mtpinn_core::sampler::make_trajectory_spec;

fn main() {
    let cfg = HJBConfig {
        kappa: 0.1,
        sigma: 0.1,
        lambda: 0.1,
        horizon_t: 5.0,
        x_range: (-10.0, 10.0),
        s_range: (10.0, 100.0),
    };
    let params = init_params(3, &[32, 32, 32], 0).unwrap();
    let spec: TrajectorySpec =
        make_trajectory_spec(&cfg, 41, 2, &[0.02, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0], 100);
    println!("starts {} x horizons {} = {} cols", spec.n_starts(), spec.horizons.len(), spec.n_starts() * spec.horizons.len());
    let reps = 20;

    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        traj_loss(&params, &spec, &cfg).unwrap();
    }
    println!("forward only (no tapes): {:.1} ms", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let loss = TrajLoss { spec: &spec, cfg };
    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        grad_of_loss(&params, &loss).unwrap();
    }
    println!("full grad: {:.1} ms", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);
}
