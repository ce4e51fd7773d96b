//! Deterministic, seeded generation of collocation and trajectory batches.
//!
//! All points are i.i.d. uniform over their domain boxes; batches are
//! reproducible per seed. Time-to-maturity is sampled no closer to the
//! terminal than `tau_min` to stay clear of the off-axis singularity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::closed_form::{HJBConfig, StatePoint};
use crate::losses::TrajectorySpec;

/// Sampled points for the PDE, internal-condition, terminal and zero-term
/// losses.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationBatch {
    pub pde_points: Vec<StatePoint>,
    /// `(tau, S)` tuples; S is ignored in the risk-neutral regime.
    pub ic_points: Vec<(f64, f64)>,
    /// `(X, S)` tuples at `tau = 0` for the baseline terminal penalty.
    pub term_points: Vec<(f64, f64)>,
    /// S values at `(tau, X) = (0, 0)`.
    pub zero_term_points: Vec<f64>,
}

/// Point counts per loss term.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SampleCounts {
    pub n_pde: usize,
    pub n_ic: usize,
    pub n_term: usize,
    pub n_zero_term: usize,
}

fn uniform(rng: &mut ChaCha20Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Draw one collocation batch uniformly over the configured domains.
pub fn sample_batch(cfg: &HJBConfig, counts: &SampleCounts, seed: u64) -> CollocationBatch {
    assert!(counts.n_pde > 0 && counts.n_ic > 0, "counts must be positive");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let tau_range = (cfg.tau_min(), cfg.horizon_t);
    let pde_points = (0..counts.n_pde)
        .map(|_| {
            StatePoint::new(
                uniform(&mut rng, tau_range),
                uniform(&mut rng, cfg.x_range),
                uniform(&mut rng, cfg.s_range),
            )
        })
        .collect();
    let ic_points = (0..counts.n_ic)
        .map(|_| (uniform(&mut rng, tau_range), uniform(&mut rng, cfg.s_range)))
        .collect();
    let term_points = (0..counts.n_term)
        .map(|_| (uniform(&mut rng, cfg.x_range), uniform(&mut rng, cfg.s_range)))
        .collect();
    let zero_term_points = (0..counts.n_zero_term)
        .map(|_| uniform(&mut rng, cfg.s_range))
        .collect();
    CollocationBatch {
        pde_points,
        ic_points,
        term_points,
        zero_term_points,
    }
}

/// Even lattice over `[lo, hi]` including both endpoints for `n >= 2`;
/// the single-point lattice is the midpoint.
pub fn lattice((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    assert!(n >= 1);
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Midpoints of `n` equal bins over `[lo, hi]` (cell-centered lattice).
pub fn centered_lattice((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    assert!(n >= 1);
    let w = (hi - lo) / n as f64;
    (0..n).map(|i| lo + w * (i as f64 + 0.5)).collect()
}

/// Build the rollout batch: inventory/price lattices over the configured
/// domains and horizons as fractions of the full horizon. The inventory
/// lattice includes the box endpoints; the price grid is cell-centered so
/// rollouts train where simulated paths actually live rather than at the
/// price-box boundary.
pub fn make_trajectory_spec(
    cfg: &HJBConfig,
    n_x: usize,
    n_s: usize,
    horizon_fractions: &[f64],
    n_dt: usize,
) -> TrajectorySpec {
    assert!(n_x >= 1, "n_x must be >= 1");
    let x0_grid = lattice(cfg.x_range, n_x);
    let s0_grid = if cfg.is_risk_neutral() || n_s == 0 {
        Vec::new()
    } else {
        centered_lattice(cfg.s_range, n_s)
    };
    let horizons = horizon_fractions
        .iter()
        .map(|&f| f * cfg.horizon_t)
        .collect();
    TrajectorySpec {
        x0_grid,
        s0_grid,
        horizons,
        n_dt,
    }
}

/// The paper's horizon set `{T/50, T/10, T/5, 2T/5, 3T/5, 4T/5, T}` as
/// fractions.
pub const BENCHMARK_HORIZON_FRACTIONS: [f64; 7] = [0.02, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(lambda: f64) -> HJBConfig {
        HJBConfig {
            kappa: 0.1,
            sigma: 0.1,
            lambda,
            horizon_t: 5.0,
            x_range: (-10.0, 10.0),
            s_range: (10.0, 100.0),
        }
    }

    fn counts() -> SampleCounts {
        SampleCounts {
            n_pde: 3000,
            n_ic: 500,
            n_term: 500,
            n_zero_term: 100,
        }
    }

    #[test]
    fn batch_is_reproducible_and_in_bounds() {
        let c = cfg(0.1);
        let a = sample_batch(&c, &counts(), 17);
        let b = sample_batch(&c, &counts(), 17);
        assert_eq!(a, b);
        for p in &a.pde_points {
            assert!(p.tau >= c.tau_min() && p.tau <= c.horizon_t);
            assert!(p.x >= -10.0 && p.x <= 10.0);
            assert!(p.s >= 10.0 && p.s <= 100.0);
        }
        let mean_abs_x: f64 =
            a.pde_points.iter().map(|p| p.x.abs()).sum::<f64>() / a.pde_points.len() as f64;
        assert!((mean_abs_x - 5.0).abs() / 5.0 < 0.05, "mean |X| = {mean_abs_x}");
    }

    #[test]
    fn degenerate_domain_collapses() {
        let mut c = cfg(0.0);
        c.x_range = (3.0, 3.0);
        let b = sample_batch(&c, &counts(), 0);
        assert!(b.pde_points.iter().all(|p| p.x == 3.0));
    }

    #[test]
    fn trajectory_spec_counts() {
        let spec = make_trajectory_spec(&cfg(0.1), 41, 20, &BENCHMARK_HORIZON_FRACTIONS, 200);
        assert_eq!(spec.n_starts(), 820);
        let spec0 = make_trajectory_spec(&cfg(0.0), 41, 20, &BENCHMARK_HORIZON_FRACTIONS, 200);
        assert_eq!(spec0.n_starts(), 41);
        assert!(spec0.s0_grid.is_empty());
        let single = make_trajectory_spec(&cfg(0.0), 1, 0, &[1.0], 10);
        assert_eq!(single.x0_grid, vec![0.0]);
    }

    #[test]
    fn lattice_includes_endpoints() {
        let l = lattice((-10.0, 10.0), 5);
        assert_eq!(l.first(), Some(&-10.0));
        assert_eq!(l.last(), Some(&10.0));
    }

    proptest! {
        #[test]
        fn fuzz_points_stay_in_bounds(seed in 0u64..1000) {
            let c = cfg(0.1);
            let b = sample_batch(&c, &SampleCounts { n_pde: 1000, n_ic: 10, n_term: 10, n_zero_term: 10 }, seed);
            for p in &b.pde_points {
                prop_assert!(p.tau >= c.tau_min() && p.tau <= c.horizon_t);
                prop_assert!(p.x >= c.x_range.0 && p.x <= c.x_range.1);
                prop_assert!(p.s >= c.s_range.0 && p.s <= c.s_range.1);
            }
        }
    }
}
