// Scratch harness: tape-forward and backward timing in isolation.

use mtpinn_core::diffnet::{init_params, GradientAccumulator, SeedBundle, Streams};
use ndarray::{Array1, Array2};

fn main() {
    let params = init_params(3, &[32, 32, 32], 0).unwrap();
    let batch = 574;
    let mut z = Array2::zeros((3, batch));
    for j in 0..batch {
        z[(0, j)] = 0.1 + j as f64 * 0.001;
        z[(1, j)] = -3.0 + j as f64 * 0.01;
        z[(2, j)] = 50.0;
    }
    let streams = Streams {
        tau: false,
        x: true,
        s: false,
        xx: true,
        ss: false,
    };
    let reps = 500;

    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        let tape = params.forward_batch(&z, streams);
        std::hint::black_box(tape.d_x()[0]);
    }
    println!("forward(x,xx): {:.3} ms", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let light = Streams {
        tau: false,
        x: true,
        s: false,
        xx: false,
        ss: false,
    };
    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        let tape = params.forward_batch(&z, light);
        std::hint::black_box(tape.d_x()[0]);
    }
    println!("forward(x): {:.3} ms", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let tape = params.forward_batch(&z, streams);
    let seed = SeedBundle {
        d_x: Some(Array1::from_elem(batch, 0.01)),
        ..Default::default()
    };
    let mut acc = GradientAccumulator::zeros_like(&params);
    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        tape.backward(&seed, &mut acc);
    }
    println!("backward(d_x seed): {:.3} ms", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);
}
