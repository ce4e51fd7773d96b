//! Loss terms of the MT-PINN and the baseline PINNs, per risk regime,
//! including the Euler rollout feeding the trajectory penalty.
//!
//! Every loss implements [`LossFunctional`], so parameter gradients come
//! from the shared reverse pass in `diffnet`. The trajectory loss runs the
//! adjoint recursion backward through the Euler chain step by step.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::closed_form::HJBConfig;
use crate::diffnet::{
    BatchTape, DiffNetError, GradientAccumulator, LossFunctional, ModelParams, SeedBundle, Streams,
};
use crate::sampler::CollocationBatch;

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    DiffNet(#[from] DiffNetError),
    #[error("rollout produced non-finite inventory at step {step} (horizon {horizon})")]
    RolloutDiverged { step: usize, horizon: f64 },
    #[error("invalid trajectory spec: {0}")]
    InvalidSpec(&'static str),
}

/// Initial-state grid and horizon set for the trajectory loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub x0_grid: Vec<f64>,
    /// Empty in the risk-neutral regime.
    pub s0_grid: Vec<f64>,
    /// Horizons in `(0, T]`, sorted ascending.
    pub horizons: Vec<f64>,
    /// Euler steps per horizon.
    pub n_dt: usize,
}

impl TrajectorySpec {
    pub fn validate(&self, cfg: &HJBConfig) -> Result<(), LossError> {
        if self.x0_grid.is_empty() {
            return Err(LossError::InvalidSpec("x0_grid must be nonempty"));
        }
        if self.horizons.is_empty() {
            return Err(LossError::InvalidSpec("horizons must be nonempty"));
        }
        if self.n_dt < 1 {
            return Err(LossError::InvalidSpec("n_dt must be >= 1"));
        }
        if self.horizons.windows(2).any(|w| w[1] < w[0]) {
            return Err(LossError::InvalidSpec("horizons must be sorted ascending"));
        }
        if self
            .horizons
            .iter()
            .any(|&t| !(t > 0.0) || t > cfg.horizon_t * (1.0 + 1e-12))
        {
            return Err(LossError::InvalidSpec("horizons must lie in (0, T]"));
        }
        Ok(())
    }

    /// Number of initial states `P = n_X * max(n_S, 1)`.
    pub fn n_starts(&self) -> usize {
        self.x0_grid.len() * self.s0_grid.len().max(1)
    }

    /// Enumerate `(x0, s0)` pairs; `s0` is a placeholder for 2-input nets.
    pub fn starts(&self) -> Vec<(f64, f64)> {
        if self.s0_grid.is_empty() {
            self.x0_grid.iter().map(|&x| (x, 0.0)).collect()
        } else {
            let mut out = Vec::with_capacity(self.n_starts());
            for &x in &self.x0_grid {
                for &s in &self.s0_grid {
                    out.push((x, s));
                }
            }
            out
        }
    }
}

/// Raw per-term losses of one epoch; terms inactive in the current
/// regime/preset are absent.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossVector {
    pub pde: Option<f64>,
    pub traj: Option<f64>,
    pub ic: Option<f64>,
    pub sym: Option<f64>,
    pub zero_term: Option<f64>,
    pub term_penalty: Option<f64>,
}

impl LossVector {
    pub fn terms(&self) -> impl Iterator<Item = (&'static str, f64)> {
        [
            ("pde", self.pde),
            ("traj", self.traj),
            ("ic", self.ic),
            ("sym", self.sym),
            ("zero_term", self.zero_term),
            ("term_penalty", self.term_penalty),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.map(|v| (n, v)))
    }
}

/// Composite terminal penalty: `|x|` inside the unit band, `x^2` outside.
/// Continuous at the knee, even, zero only at zero.
pub fn psi(x_t: f64) -> f64 {
    if x_t.abs() <= 1.0 {
        x_t.abs()
    } else {
        x_t * x_t
    }
}

fn psi_prime(x_t: f64) -> f64 {
    if x_t.abs() <= 1.0 {
        if x_t == 0.0 {
            0.0
        } else {
            x_t.signum()
        }
    } else {
        2.0 * x_t
    }
}

// ---------------------------------------------------------------------------
// Collocation losses
// ---------------------------------------------------------------------------

fn stack_inputs(input_dim: usize, taus: &[f64], xs: &[f64], ss: &[f64]) -> Array2<f64> {
    let n = taus.len();
    let mut z = Array2::zeros((input_dim, n));
    for j in 0..n {
        z[(0, j)] = taus[j];
        z[(1, j)] = xs[j];
        if input_dim == 3 {
            z[(2, j)] = ss[j];
        }
    }
    z
}

/// Mean squared HJB residual over the collocation points.
pub struct PdeLoss<'a> {
    pub batch: &'a CollocationBatch,
    pub cfg: HJBConfig,
}

impl PdeLoss<'_> {
    fn run(&self, params: &ModelParams, want_grad: bool) -> Result<(f64, Option<GradientAccumulator>), DiffNetError> {
        let risk_neutral = self.cfg.is_risk_neutral() || params.input_dim == 2;
        let pts = &self.batch.pde_points;
        let n = pts.len();
        let taus: Vec<f64> = pts.iter().map(|p| p.tau).collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
        let ss: Vec<f64> = pts.iter().map(|p| p.s).collect();
        let z = stack_inputs(params.input_dim, &taus, &xs, &ss);
        let streams = Streams {
            tau: true,
            x: true,
            s: false,
            xx: false,
            ss: params.input_dim == 3 && !risk_neutral,
        };
        let tape = params.forward_batch(&z, streams);
        let d_tau = tape.d_tau();
        let d_x = tape.d_x();
        let k2 = self.cfg.kappa * self.cfg.kappa;
        let mut resid = Array1::zeros(n);
        for j in 0..n {
            let mut r = d_tau[j] - k2 * xs[j] * xs[j] + 0.25 * d_x[j] * d_x[j];
            if !risk_neutral {
                r -= 0.5 * self.cfg.sigma * self.cfg.sigma * ss[j] * ss[j] * tape.d_ss()[j];
                r -= self.cfg.lambda * ss[j] * xs[j];
            }
            resid[j] = r;
        }
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
        if !want_grad {
            return Ok((loss, None));
        }
        let scale = 2.0 / n as f64;
        let seed_tau = resid.mapv(|r| scale * r);
        let seed_x = Array1::from_shape_fn(n, |j| scale * resid[j] * 0.5 * d_x[j]);
        let mut seed = SeedBundle {
            d_tau: Some(seed_tau),
            d_x: Some(seed_x),
            ..Default::default()
        };
        if !risk_neutral {
            seed.d_ss = Some(Array1::from_shape_fn(n, |j| {
                scale * resid[j] * (-0.5 * self.cfg.sigma * self.cfg.sigma * ss[j] * ss[j])
            }));
        }
        let mut acc = GradientAccumulator::zeros_like(params);
        tape.backward(&seed, &mut acc);
        Ok((loss, Some(acc)))
    }
}

impl LossFunctional for PdeLoss<'_> {
    fn name(&self) -> &'static str {
        "pde"
    }
    fn eval(&self, params: &ModelParams) -> Result<f64, DiffNetError> {
        self.run(params, false).map(|(v, _)| v)
    }
    fn eval_with_grad(&self, params: &ModelParams) -> Result<(f64, GradientAccumulator), DiffNetError> {
        self.run(params, true).map(|(v, g)| (v, g.unwrap()))
    }
}

/// Internal condition on the zero-inventory axis: `Gamma(tau, 0) = 0` in
/// the risk-neutral regime, one-sided `Gamma(tau, 0, S) <= 0` otherwise.
pub struct IcLoss<'a> {
    pub batch: &'a CollocationBatch,
    pub cfg: HJBConfig,
}

impl IcLoss<'_> {
    fn run(&self, params: &ModelParams, want_grad: bool) -> Result<(f64, Option<GradientAccumulator>), DiffNetError> {
        let risk_neutral = self.cfg.is_risk_neutral() || params.input_dim == 2;
        let pts = &self.batch.ic_points;
        let n = pts.len();
        let taus: Vec<f64> = pts.iter().map(|&(t, _)| t).collect();
        let xs = vec![0.0; n];
        let ss: Vec<f64> = pts.iter().map(|&(_, s)| s).collect();
        let z = stack_inputs(params.input_dim, &taus, &xs, &ss);
        let tape = params.forward_batch(&z, Streams::value_only());
        let gamma = tape.gamma();
        let hinge: Array1<f64> = if risk_neutral {
            gamma.clone()
        } else {
            gamma.mapv(|g| g.max(0.0))
        };
        let loss = hinge.iter().map(|g| g * g).sum::<f64>() / n as f64;
        if !want_grad {
            return Ok((loss, None));
        }
        let scale = 2.0 / n as f64;
        let seed = SeedBundle {
            gamma: Some(hinge.mapv(|g| scale * g)),
            ..Default::default()
        };
        let mut acc = GradientAccumulator::zeros_like(params);
        tape.backward(&seed, &mut acc);
        Ok((loss, Some(acc)))
    }
}

impl LossFunctional for IcLoss<'_> {
    fn name(&self) -> &'static str {
        "ic"
    }
    fn eval(&self, params: &ModelParams) -> Result<f64, DiffNetError> {
        self.run(params, false).map(|(v, _)| v)
    }
    fn eval_with_grad(&self, params: &ModelParams) -> Result<(f64, GradientAccumulator), DiffNetError> {
        self.run(params, true).map(|(v, g)| (v, g.unwrap()))
    }
}

/// Even-symmetry penalty: `[Gamma(tau,X) - Gamma(tau,-X)]^2` (risk
/// neutral) or `[Gamma(tau,X,S) - Gamma(tau,-X,-S)]^2` (risk averse),
/// averaged over the PDE collocation points.
pub struct SymLoss<'a> {
    pub batch: &'a CollocationBatch,
    pub cfg: HJBConfig,
}

impl SymLoss<'_> {
    fn run(&self, params: &ModelParams, want_grad: bool) -> Result<(f64, Option<GradientAccumulator>), DiffNetError> {
        let pts = &self.batch.pde_points;
        let n = pts.len();
        let taus: Vec<f64> = pts.iter().map(|p| p.tau).collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
        let ss: Vec<f64> = pts.iter().map(|p| p.s).collect();
        let xs_m: Vec<f64> = xs.iter().map(|&x| -x).collect();
        let ss_m: Vec<f64> = ss.iter().map(|&s| -s).collect();
        let z = stack_inputs(params.input_dim, &taus, &xs, &ss);
        let zm = stack_inputs(params.input_dim, &taus, &xs_m, &ss_m);
        let tape = params.forward_batch(&z, Streams::value_only());
        let tape_m = params.forward_batch(&zm, Streams::value_only());
        let diff = tape.gamma() - tape_m.gamma();
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
        if !want_grad {
            return Ok((loss, None));
        }
        let scale = 2.0 / n as f64;
        let seed_pos = diff.mapv(|d| scale * d);
        let seed_neg = diff.mapv(|d| -scale * d);
        let mut acc = GradientAccumulator::zeros_like(params);
        tape.backward(
            &SeedBundle {
                gamma: Some(seed_pos),
                ..Default::default()
            },
            &mut acc,
        );
        tape_m.backward(
            &SeedBundle {
                gamma: Some(seed_neg),
                ..Default::default()
            },
            &mut acc,
        );
        Ok((loss, Some(acc)))
    }
}

impl LossFunctional for SymLoss<'_> {
    fn name(&self) -> &'static str {
        "sym"
    }
    fn eval(&self, params: &ModelParams) -> Result<f64, DiffNetError> {
        self.run(params, false).map(|(v, _)| v)
    }
    fn eval_with_grad(&self, params: &ModelParams) -> Result<(f64, GradientAccumulator), DiffNetError> {
        self.run(params, true).map(|(v, g)| (v, g.unwrap()))
    }
}

/// `Gamma(0, 0, S)^2` average; active only in the risk-averse regime.
pub struct ZeroTermLoss<'a> {
    pub batch: &'a CollocationBatch,
}

impl ZeroTermLoss<'_> {
    fn run(&self, params: &ModelParams, want_grad: bool) -> Result<(f64, Option<GradientAccumulator>), DiffNetError> {
        assert_eq!(params.input_dim, 3, "zero-term loss is risk-averse only");
        let ss = &self.batch.zero_term_points;
        let n = ss.len();
        let taus = vec![0.0; n];
        let xs = vec![0.0; n];
        let z = stack_inputs(3, &taus, &xs, ss);
        let tape = params.forward_batch(&z, Streams::value_only());
        let gamma = tape.gamma();
        let loss = gamma.iter().map(|g| g * g).sum::<f64>() / n as f64;
        if !want_grad {
            return Ok((loss, None));
        }
        let scale = 2.0 / n as f64;
        let seed = SeedBundle {
            gamma: Some(gamma.mapv(|g| scale * g)),
            ..Default::default()
        };
        let mut acc = GradientAccumulator::zeros_like(params);
        tape.backward(&seed, &mut acc);
        Ok((loss, Some(acc)))
    }
}

impl LossFunctional for ZeroTermLoss<'_> {
    fn name(&self) -> &'static str {
        "zero_term"
    }
    fn eval(&self, params: &ModelParams) -> Result<f64, DiffNetError> {
        self.run(params, false).map(|(v, _)| v)
    }
    fn eval_with_grad(&self, params: &ModelParams) -> Result<(f64, GradientAccumulator), DiffNetError> {
        self.run(params, true).map(|(v, g)| (v, g.unwrap()))
    }
}

/// Baseline quadratic terminal penalty `(Gamma(0, X[, S]) - c X^2)^2`.
pub struct TermPenaltyLoss<'a> {
    pub batch: &'a CollocationBatch,
    /// Penalty strength, > 0.
    pub c: f64,
}

impl TermPenaltyLoss<'_> {
    fn run(&self, params: &ModelParams, want_grad: bool) -> Result<(f64, Option<GradientAccumulator>), DiffNetError> {
        assert!(self.c > 0.0, "penalty strength must be positive");
        let pts = &self.batch.term_points;
        let n = pts.len();
        let taus = vec![0.0; n];
        let xs: Vec<f64> = pts.iter().map(|&(x, _)| x).collect();
        let ss: Vec<f64> = pts.iter().map(|&(_, s)| s).collect();
        let z = stack_inputs(params.input_dim, &taus, &xs, &ss);
        let tape = params.forward_batch(&z, Streams::value_only());
        let gamma = tape.gamma();
        let diff = Array1::from_shape_fn(n, |j| gamma[j] - self.c * xs[j] * xs[j]);
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
        if !want_grad {
            return Ok((loss, None));
        }
        let scale = 2.0 / n as f64;
        let seed = SeedBundle {
            gamma: Some(diff.mapv(|d| scale * d)),
            ..Default::default()
        };
        let mut acc = GradientAccumulator::zeros_like(params);
        tape.backward(&seed, &mut acc);
        Ok((loss, Some(acc)))
    }
}

impl LossFunctional for TermPenaltyLoss<'_> {
    fn name(&self) -> &'static str {
        "term_penalty"
    }
    fn eval(&self, params: &ModelParams) -> Result<f64, DiffNetError> {
        self.run(params, false).map(|(v, _)| v)
    }
    fn eval_with_grad(&self, params: &ModelParams) -> Result<(f64, GradientAccumulator), DiffNetError> {
        self.run(params, true).map(|(v, g)| (v, g.unwrap()))
    }
}

// ---------------------------------------------------------------------------
// Trajectory loss (rollouts + BPTT)
// ---------------------------------------------------------------------------

/// Roll inventory forward under the network-implied control
/// `v = Gamma_X / 2`, queried each Euler step with the time-to-maturity
/// clamped at `tau_min`. The price is held at `s0` for the whole rollout.
/// Returns the terminal inventory.
pub fn rollout_inventory(
    params: &ModelParams,
    x0: f64,
    s0: f64,
    horizon: f64,
    n_dt: usize,
    cfg: &HJBConfig,
) -> Result<f64, LossError> {
    let xs = rollout_multi(params, &[(x0, s0, horizon)], n_dt, cfg, false)?.terminal;
    Ok(xs[0])
}

struct RolloutForward<'p> {
    terminal: Array1<f64>,
    /// Per-step tapes when gradients are needed.
    tapes: Vec<BatchTape<'p>>,
    /// Per-column step size (columns may carry different horizons).
    dts: Vec<f64>,
}

/// Batched Euler rollout; every column carries its own `(x0, s0, horizon)`
/// and all columns take `n_dt` steps of their own size, so mixed-horizon
/// batches run in a single gemm per step.
fn rollout_multi<'p>(
    params: &'p ModelParams,
    cols: &[(f64, f64, f64)],
    n_dt: usize,
    cfg: &HJBConfig,
    keep_tapes: bool,
) -> Result<RolloutForward<'p>, LossError> {
    let p = cols.len();
    let dts: Vec<f64> = cols.iter().map(|&(_, _, h)| h / n_dt as f64).collect();
    let tau_min = cfg.tau_min();
    let mut x = Array1::from_iter(cols.iter().map(|&(x0, _, _)| x0));
    let streams = Streams {
        tau: false,
        x: true,
        s: false,
        xx: keep_tapes,
        ss: false,
    };
    let mut tapes = Vec::new();
    for k in 0..n_dt {
        let mut z = Array2::zeros((params.input_dim, p));
        for j in 0..p {
            z[(0, j)] = (cols[j].2 - k as f64 * dts[j]).max(tau_min);
            z[(1, j)] = x[j];
            if params.input_dim == 3 {
                z[(2, j)] = cols[j].1;
            }
        }
        let tape = params.forward_batch(&z, streams);
        {
            let d_x = tape.d_x();
            for j in 0..p {
                let v = 0.5 * d_x[j];
                x[j] -= v * dts[j];
                if !x[j].is_finite() {
                    return Err(LossError::RolloutDiverged {
                        step: k,
                        horizon: cols[j].2,
                    });
                }
            }
        }
        if keep_tapes {
            tapes.push(tape);
        }
    }
    Ok(RolloutForward {
        terminal: x,
        tapes,
        dts,
    })
}

/// Mean composite terminal penalty over all `P * J` rollouts; the gradient
/// flows through every Euler step via the backward adjoint recursion.
pub struct TrajLoss<'a> {
    pub spec: &'a TrajectorySpec,
    pub cfg: HJBConfig,
}

impl TrajLoss<'_> {
    fn run(&self, params: &ModelParams, want_grad: bool) -> Result<(f64, Option<GradientAccumulator>), LossError> {
        self.spec.validate(&self.cfg)?;
        let starts = self.spec.starts();
        // all P * J rollouts as one batch; columns carry their horizons
        let cols: Vec<(f64, f64, f64)> = self
            .spec
            .horizons
            .iter()
            .flat_map(|&h| starts.iter().map(move |&(x0, s0)| (x0, s0, h)))
            .collect();
        let norm = 1.0 / cols.len() as f64;
        let fwd = rollout_multi(params, &cols, self.spec.n_dt, &self.cfg, want_grad)?;
        let loss = fwd.terminal.iter().map(|&x| psi(x)).sum::<f64>() * norm;
        let mut acc = want_grad.then(|| GradientAccumulator::zeros_like(params));
        if let Some(acc) = acc.as_mut() {
            // lambda_N = d(mean psi)/d x_N, then walk the chain backward:
            // lambda_k = lambda_{k+1} (1 - dt/2 Gamma_XX), with the
            // parameter contribution -dt/2 lambda_{k+1} dGamma_X/dtheta
            // at every step.
            let mut adjoint = fwd.terminal.mapv(|x| norm * psi_prime(x));
            for k in (0..self.spec.n_dt).rev() {
                let tape = &fwd.tapes[k];
                let mut seed_dx = adjoint.clone();
                for (l, &dt) in seed_dx.iter_mut().zip(&fwd.dts) {
                    *l *= -0.5 * dt;
                }
                let seed = SeedBundle {
                    d_x: Some(seed_dx),
                    ..Default::default()
                };
                tape.backward(&seed, acc);
                let d_xx = tape.d_xx();
                for (jj, &dt) in fwd.dts.iter().enumerate() {
                    adjoint[jj] *= 1.0 - 0.5 * dt * d_xx[jj];
                }
            }
        }
        Ok((loss, acc))
    }
}

impl LossFunctional for TrajLoss<'_> {
    fn name(&self) -> &'static str {
        "traj"
    }
    fn eval(&self, params: &ModelParams) -> Result<f64, DiffNetError> {
        self.run(params, false).map(|(v, _)| v).map_err(loss_to_diffnet)
    }
    fn eval_with_grad(&self, params: &ModelParams) -> Result<(f64, GradientAccumulator), DiffNetError> {
        self.run(params, true)
            .map(|(v, g)| (v, g.unwrap()))
            .map_err(loss_to_diffnet)
    }
}

fn loss_to_diffnet(e: LossError) -> DiffNetError {
    match e {
        LossError::DiffNet(d) => d,
        other => DiffNetError::NonFinite {
            term: "traj".to_string(),
            detail: format!(" ({other})"),
        },
    }
}

/// Convenience wrappers matching the per-operation contracts.
pub fn traj_loss(params: &ModelParams, spec: &TrajectorySpec, cfg: &HJBConfig) -> Result<f64, LossError> {
    TrajLoss { spec, cfg: *cfg }.run(params, false).map(|(v, _)| v)
}

pub fn pde_loss(params: &ModelParams, batch: &CollocationBatch, cfg: &HJBConfig) -> Result<f64, DiffNetError> {
    PdeLoss { batch, cfg: *cfg }.eval(params)
}

pub fn ic_loss(params: &ModelParams, batch: &CollocationBatch, cfg: &HJBConfig) -> Result<f64, DiffNetError> {
    IcLoss { batch, cfg: *cfg }.eval(params)
}

pub fn sym_loss(params: &ModelParams, batch: &CollocationBatch, cfg: &HJBConfig) -> Result<f64, DiffNetError> {
    SymLoss { batch, cfg: *cfg }.eval(params)
}

pub fn zero_term_loss(params: &ModelParams, batch: &CollocationBatch) -> Result<f64, DiffNetError> {
    ZeroTermLoss { batch }.eval(params)
}

pub fn terminal_penalty_loss(
    params: &ModelParams,
    batch: &CollocationBatch,
    c: f64,
) -> Result<f64, DiffNetError> {
    TermPenaltyLoss { batch, c }.eval(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::StatePoint;
    use crate::diffnet::init_params;

    #[test]
    fn psi_examples() {
        assert_eq!(psi(0.0), 0.0);
        assert_eq!(psi(0.5), 0.5);
        assert_eq!(psi(-0.5), 0.5);
        assert_eq!(psi(2.0), 4.0);
        assert_eq!(psi(1.0), 1.0); // continuity at the knee from both branches
        assert_eq!(psi(1.0), 1.0f64 * 1.0);
    }

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

    fn zero_net(input_dim: usize) -> ModelParams {
        let mut p = init_params(input_dim, &[4], 0).unwrap();
        for l in &mut p.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        p
    }

    fn tiny_batch() -> CollocationBatch {
        CollocationBatch {
            pde_points: vec![
                StatePoint::new(1.0, 2.0, 50.0),
                StatePoint::new(2.0, -1.0, 60.0),
            ],
            ic_points: vec![(1.0, 50.0), (2.0, 60.0)],
            term_points: vec![(1.0, 50.0), (-2.0, 60.0)],
            zero_term_points: vec![40.0, 70.0],
        }
    }

    #[test]
    fn zero_network_pde_loss_is_mean_k2x2_squared() {
        let b = tiny_batch();
        let c = cfg(0.0);
        let loss = pde_loss(&zero_net(2), &b, &c).unwrap();
        let k2 = 0.01;
        let expect = ((k2 * 4.0f64).powi(2) + (k2 * 1.0f64).powi(2)) / 2.0;
        approx::assert_relative_eq!(loss, expect, max_relative = 1e-14);
    }

    #[test]
    fn ic_loss_hinge_behaviour() {
        let b = tiny_batch();
        // network identically -1: inequality satisfied, zero loss in
        // risk-averse regime; squared value otherwise.
        let mut p = zero_net(3);
        p.layers.last_mut().unwrap().b[0] = -1.0;
        assert_eq!(ic_loss(&p, &b, &cfg(0.1)).unwrap(), 0.0);
        let mut p2 = zero_net(3);
        p2.layers.last_mut().unwrap().b[0] = 2.0;
        assert_eq!(ic_loss(&p2, &b, &cfg(0.1)).unwrap(), 4.0);
        let mut p1 = zero_net(2);
        p1.layers.last_mut().unwrap().b[0] = -1.0;
        assert_eq!(ic_loss(&p1, &b, &cfg(0.0)).unwrap(), 1.0);
    }

    #[test]
    fn zero_term_loss_constant_network() {
        let b = tiny_batch();
        assert_eq!(zero_term_loss(&zero_net(3), &b).unwrap(), 0.0);
        let mut p = zero_net(3);
        p.layers.last_mut().unwrap().b[0] = 3.0;
        assert_eq!(zero_term_loss(&p, &b).unwrap(), 9.0);
    }

    #[test]
    fn sym_loss_on_even_and_odd_fields() {
        let b = tiny_batch();
        // constant network is trivially even
        assert_eq!(sym_loss(&zero_net(2), &b, &cfg(0.0)).unwrap(), 0.0);
        let p = init_params(2, &[6, 6], 4).unwrap();
        let l = sym_loss(&p, &b, &cfg(0.0)).unwrap();
        assert!(l > 0.0);
    }

    #[test]
    fn term_penalty_matches_hand_value() {
        let b = CollocationBatch {
            term_points: vec![(1.0, 50.0)],
            ..tiny_batch()
        };
        let loss = terminal_penalty_loss(&zero_net(2), &b, 100.0).unwrap();
        assert_eq!(loss, 1.0e4);
    }

    #[test]
    fn rollout_zero_control_keeps_inventory() {
        let c = cfg(0.0);
        let x_t = rollout_inventory(&zero_net(2), 3.0, 0.0, 5.0, 10, &c).unwrap();
        assert_eq!(x_t, 3.0);
    }

    #[test]
    fn traj_loss_zero_control_examples() {
        let c = cfg(0.0);
        let spec = TrajectorySpec {
            x0_grid: vec![0.0],
            s0_grid: vec![],
            horizons: vec![5.0],
            n_dt: 5,
        };
        assert_eq!(traj_loss(&zero_net(2), &spec, &c).unwrap(), 0.0);
        let spec2 = TrajectorySpec {
            x0_grid: vec![2.0, -2.0],
            s0_grid: vec![],
            horizons: vec![5.0],
            n_dt: 5,
        };
        assert_eq!(traj_loss(&zero_net(2), &spec2, &c).unwrap(), 4.0);
    }

    #[test]
    fn traj_loss_degenerate_batch_equals_single_rollout() {
        let c = cfg(0.0);
        let p = init_params(2, &[6], 8).unwrap();
        let spec = TrajectorySpec {
            x0_grid: vec![4.0],
            s0_grid: vec![],
            horizons: vec![2.5],
            n_dt: 7,
        };
        let x_t = rollout_inventory(&p, 4.0, 0.0, 2.5, 7, &c).unwrap();
        assert_eq!(traj_loss(&p, &spec, &c).unwrap(), psi(x_t));
    }

    #[test]
    fn spec_validation() {
        let c = cfg(0.0);
        let bad = TrajectorySpec {
            x0_grid: vec![],
            s0_grid: vec![],
            horizons: vec![1.0],
            n_dt: 5,
        };
        assert!(bad.validate(&c).is_err());
        let bad2 = TrajectorySpec {
            x0_grid: vec![1.0],
            s0_grid: vec![],
            horizons: vec![3.0, 1.0],
            n_dt: 5,
        };
        assert!(bad2.validate(&c).is_err());
    }
}
