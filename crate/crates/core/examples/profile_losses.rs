// Scratch harness: per-term gradient timing at desk scale.

use mtpinn_core::closed_form::HJBConfig;
use mtpinn_core::diffnet::{grad_of_loss, init_params};
use mtpinn_core::losses::{IcLoss, PdeLoss, SymLoss, TrajLoss};
use mtpinn_core::sampler::{make_trajectory_spec, sample_batch, SampleCounts};

fn main() {
    let cfg = HJBConfig {
        kappa: 0.1,
        sigma: 0.1,
        lambda: 0.0,
        horizon_t: 5.0,
        x_range: (-10.0, 10.0),
        s_range: (10.0, 100.0),
    };
    let params = init_params(2, &[32, 32, 32], 0).unwrap();
    let counts = SampleCounts {
        n_pde: 3000,
        n_ic: 500,
        n_term: 500,
        n_zero_term: 200,
    };
    let batch = sample_batch(&cfg, &counts, 1);
    let spec = make_trajectory_spec(&cfg, 41, 2, &[0.02, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0], 100);
    println!("traj starts: {}", spec.n_starts());

    let reps = 50;
    let mut time = |name: &str, f: &dyn Fn()| {
        let t0 = std::time::Instant::now();
        for _ in 0..reps {
            f();
        }
        println!("{name}: {:.2} ms/call", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);
    };
    let pde = PdeLoss { batch: &batch, cfg };
    time("pde", &|| {
        grad_of_loss(&params, &pde).unwrap();
    });
    let ic = IcLoss { batch: &batch, cfg };
    time("ic", &|| {
        grad_of_loss(&params, &ic).unwrap();
    });
    let sym = SymLoss { batch: &batch, cfg };
    time("sym", &|| {
        grad_of_loss(&params, &sym).unwrap();
    });
    let traj = TrajLoss { spec: &spec, cfg };
    time("traj", &|| {
        grad_of_loss(&params, &traj).unwrap();
    });
}
