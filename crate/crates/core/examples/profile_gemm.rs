// Scratch harness: dgemm throughput at rollout-relevant shapes.

use ndarray::Array2;

fn main() {
    for &(m, k, n) in &[
        (32usize, 32usize, 574usize),
        (32, 32, 1722),
        (32, 32, 3000),
        (32, 32, 9000),
        (32, 574, 32),
        (32, 1722, 32),
    ] {
        let a = Array2::<f64>::from_elem((m, k), 0.5);
        let b = Array2::<f64>::from_elem((k, n), 0.25);
        let reps = 2000;
        let t0 = std::time::Instant::now();
        let mut acc = 0.0;
        for _ in 0..reps {
            let c = a.dot(&b);
            acc += c[(0, 0)];
        }
        let dt = t0.elapsed().as_secs_f64();
        let gf = (2.0 * m as f64 * k as f64 * n as f64 * reps as f64) / dt / 1e9;
        println!("{m}x{k}x{n}: {gf:.2} GFLOP/s (acc {acc:.1})");
    }
    // elementwise cost reference: tanh + 1-t^2 over 32x574
    let p = Array2::<f64>::from_elem((32, 574), 0.3);
    let reps = 2000;
    let t0 = std::time::Instant::now();
    let mut acc = 0.0;
    for _ in 0..reps {
        let t = p.mapv(f64::tanh);
        let s1 = t.mapv(|v| 1.0 - v * v);
        acc += s1[(0, 0)];
    }
    println!(
        "tanh+s1 32x574: {:.3} ms (acc {acc:.1})",
        t0.elapsed().as_secs_f64() * 1e3 / reps as f64
    );
}
