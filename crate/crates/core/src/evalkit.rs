//! Evaluation utilities: policy rollouts with execution constraints,
//! terminal-inventory statistics, and value-surface error reports against
//! the closed form.

use crate::closed_form::{optimal_rate, value_exact, ClosedFormError, HJBConfig, PricePath, StatePoint};
use crate::diffnet::{DiffNetError, ModelParams};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    DiffNet(#[from] DiffNetError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
    #[error("invalid rollout: {0}")]
    InvalidRollout(&'static str),
}

/// A value surface with its feedback control, evaluated pointwise. Lets
/// the whole evaluation pipeline run on either a trained network or the
/// closed form (the latter yields all-zero error reports by construction).
pub trait ValueField {
    /// `(Gamma, v)` at `(tau, x, s)` with `v = dGamma/dX / 2`.
    fn eval(&self, tau: f64, x: f64, s: f64) -> Result<(f64, f64), EvalError>;
}

impl ValueField for ModelParams {
    fn eval(&self, tau: f64, x: f64, s: f64) -> Result<(f64, f64), EvalError> {
        let f = self.eval_field(StatePoint::new(tau, x, s));
        Ok((f.gamma, 0.5 * f.d_x))
    }
}

/// The closed-form solution as a [`ValueField`] stub.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactField(pub HJBConfig);

impl ValueField for ExactField {
    fn eval(&self, tau: f64, x: f64, s: f64) -> Result<(f64, f64), EvalError> {
        let gamma = value_exact(StatePoint::new(tau, x, s), &self.0)?;
        let v = optimal_rate(self.0.horizon_t - tau, x, s, &self.0)?;
        Ok((gamma, v))
    }
}

/// Execution constraints applied during evaluation rollouts. Training
/// rollouts use no constraints; execution-style rollouts clamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RolloutConstraints {
    /// Never let inventory cross zero (no shorting); once at zero, stay.
    pub no_short: bool,
}

/// A single policy rollout on an explicit Euler grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// Grid times, length `n_dt + 1`.
    pub times: Vec<f64>,
    /// Inventory at each grid node, length `n_dt + 1`.
    pub inventory: Vec<f64>,
    /// Trading rate used on each step, length `n_dt`.
    pub rates: Vec<f64>,
    /// Value `Gamma` along the trajectory, length `n_dt + 1` (the terminal
    /// node is evaluated at the clamped `tau_min`).
    pub values: Vec<f64>,
    pub dt: f64,
}

impl RolloutResult {
    pub fn terminal(&self) -> f64 {
        *self.inventory.last().unwrap()
    }
}

/// Roll the field's feedback control `v = dGamma/dX / 2` from
/// `(horizon, x0)` to the terminal time. Price is held at `s0` (prices
/// from `prices`, if given, override it per step).
pub fn rollout_policy<F: ValueField + ?Sized>(
    field: &F,
    cfg: &HJBConfig,
    x0: f64,
    s0: f64,
    horizon: f64,
    n_dt: usize,
    prices: Option<&[f64]>,
    constraints: RolloutConstraints,
) -> Result<RolloutResult, EvalError> {
    if n_dt == 0 || !(horizon > 0.0) {
        return Err(EvalError::InvalidRollout("need n_dt >= 1 and horizon > 0"));
    }
    if let Some(p) = prices {
        if p.len() < n_dt {
            return Err(EvalError::InvalidRollout("price path shorter than rollout"));
        }
    }
    let dt = horizon / n_dt as f64;
    let tau_min = cfg.tau_min();
    let mut x = x0;
    let mut times = Vec::with_capacity(n_dt + 1);
    let mut inventory = Vec::with_capacity(n_dt + 1);
    let mut rates = Vec::with_capacity(n_dt);
    let mut values = Vec::with_capacity(n_dt + 1);
    times.push(0.0);
    inventory.push(x);
    for k in 0..n_dt {
        let tau = (horizon - k as f64 * dt).max(tau_min);
        let s = prices.map_or(s0, |p| p[k]);
        let (gamma, mut v) = field.eval(tau, x, s)?;
        values.push(gamma);
        if constraints.no_short {
            if x <= 0.0 {
                v = 0.0;
                x = 0.0;
            } else {
                // cap the step so inventory cannot cross zero
                v = v.min(x / dt).max(0.0);
            }
        }
        x -= v * dt;
        if !x.is_finite() {
            return Err(EvalError::InvalidRollout("rollout diverged"));
        }
        times.push((k + 1) as f64 * dt);
        rates.push(v);
        inventory.push(x);
    }
    let s_t = prices.map_or(s0, |p| p[n_dt.min(p.len() - 1)]);
    values.push(field.eval(tau_min, x, s_t)?.0);
    Ok(RolloutResult {
        times,
        inventory,
        rates,
        values,
        dt,
    })
}

/// Summary statistics over a set of terminal inventories.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TerminalStats {
    pub mean_abs: f64,
    pub max_abs: f64,
    /// Unbiased standard deviation of `|x_T|` (0 for a single sample).
    pub std_abs: f64,
    /// Nearest-rank 95th percentile of `|x_T|`.
    pub p95_abs: f64,
    /// Fraction with `|x_T| <= eps`.
    pub frac_within_eps: f64,
    pub eps: f64,
    pub n: usize,
}

pub fn terminal_stats(terminals: &[f64], eps: f64) -> TerminalStats {
    assert!(!terminals.is_empty(), "need at least one terminal");
    let n = terminals.len();
    let abs: Vec<f64> = terminals.iter().map(|x| x.abs()).collect();
    let mean = abs.iter().sum::<f64>() / n as f64;
    let max = abs.iter().cloned().fold(0.0_f64, f64::max);
    let std = if n > 1 {
        (abs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = abs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // nearest-rank: ceil(0.95 n), 1-based
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    let p95 = sorted[rank - 1];
    let within = abs.iter().filter(|a| **a <= eps).count() as f64 / n as f64;
    TerminalStats {
        mean_abs: mean,
        max_abs: max,
        std_abs: std,
        p95_abs: p95,
        frac_within_eps: within,
        eps,
        n,
    }
}

/// Surface-error metrics in both raw value units and arcsinh-compressed
/// units (the value spans orders of magnitude near the terminal).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SurfaceErrorReport {
    pub mae: f64,
    pub max_ae: f64,
    pub rmse: f64,
    /// Mean relative error with the denominator floored at 1e-8.
    pub mre: f64,
    pub mae_asinh: f64,
    pub max_ae_asinh: f64,
    pub rmse_asinh: f64,
    pub n: usize,
}

/// Compare a value surface against the closed form on a point set.
pub fn surface_errors<F: ValueField + ?Sized>(
    field: &F,
    cfg: &HJBConfig,
    points: &[StatePoint],
) -> Result<SurfaceErrorReport, EvalError> {
    assert!(!points.is_empty(), "need at least one evaluation point");
    let n = points.len();
    let mut sum_ae = 0.0;
    let mut max_ae = 0.0_f64;
    let mut sum_sq = 0.0;
    let mut sum_re = 0.0;
    let mut sum_ae_a = 0.0;
    let mut max_ae_a = 0.0_f64;
    let mut sum_sq_a = 0.0;
    for p in points {
        let (pred, _) = field.eval(p.tau, p.x, p.s)?;
        let exact = value_exact(*p, cfg)?;
        let ae = (pred - exact).abs();
        sum_ae += ae;
        max_ae = max_ae.max(ae);
        sum_sq += ae * ae;
        sum_re += ae / exact.abs().max(1e-8);
        let ae_a = (pred.asinh() - exact.asinh()).abs();
        sum_ae_a += ae_a;
        max_ae_a = max_ae_a.max(ae_a);
        sum_sq_a += ae_a * ae_a;
    }
    Ok(SurfaceErrorReport {
        mae: sum_ae / n as f64,
        max_ae,
        rmse: (sum_sq / n as f64).sqrt(),
        mre: sum_re / n as f64,
        mae_asinh: sum_ae_a / n as f64,
        max_ae_asinh: max_ae_a / n as f64,
        rmse_asinh: (sum_sq_a / n as f64).sqrt(),
        n,
    })
}

/// Per-time mean and standard deviation of the absolute errors along
/// rollouts: value `|Gamma - Gamma_hat|`, inventory `|x - x_hat|`, and
/// rate `|v - v_hat|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathErrorCurves {
    /// Grid times, length `n + 1`.
    pub times: Vec<f64>,
    /// `(mean, std)` of `|Gamma - Gamma_hat|` per node, length `n + 1`.
    pub gamma: Vec<(f64, f64)>,
    /// `(mean, std)` of `|x - x_hat|` per node, length `n + 1`.
    pub inventory: Vec<(f64, f64)>,
    /// `(mean, std)` of `|v - v_hat|` per step, length `n`.
    pub rate: Vec<(f64, f64)>,
}

fn mean_std_unbiased(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Errors of a learned field along optimal trajectories over a set of
/// price paths sharing one time grid. The reference trajectory is the
/// closed-form feedback control stepped on the same Euler grid, so the
/// exact field reproduces it bit for bit and all curves vanish; `Gamma`
/// and `v` errors are evaluated at the reference states.
pub fn path_error_curves<F: ValueField + ?Sized>(
    field: &F,
    cfg: &HJBConfig,
    paths: &[PricePath],
    x0: f64,
) -> Result<PathErrorCurves, EvalError> {
    if paths.len() < 2 {
        return Err(EvalError::InvalidRollout("need at least two price paths"));
    }
    let n = paths[0].times.len() - 1;
    let horizon = *paths[0].times.last().unwrap();
    if paths
        .iter()
        .any(|p| p.times.len() != n + 1 || (p.times.last().unwrap() - horizon).abs() > 1e-12)
    {
        return Err(EvalError::InvalidRollout("paths must share one time grid"));
    }
    let exact = ExactField(*cfg);
    let mut e_gamma = vec![Vec::with_capacity(paths.len()); n + 1];
    let mut e_x = vec![Vec::with_capacity(paths.len()); n + 1];
    let mut e_v = vec![Vec::with_capacity(paths.len()); n];
    let none = RolloutConstraints::default();
    for path in paths {
        let reference =
            rollout_policy(&exact, cfg, x0, path.prices[0], horizon, n, Some(&path.prices), none)?;
        let learned =
            rollout_policy(field, cfg, x0, path.prices[0], horizon, n, Some(&path.prices), none)?;
        let tau_min = cfg.tau_min();
        for k in 0..=n {
            e_x[k].push((learned.inventory[k] - reference.inventory[k]).abs());
            let tau = (horizon - reference.times[k]).max(tau_min);
            let s = path.prices[k.min(path.prices.len() - 1)];
            let x_ref = reference.inventory[k];
            let (g_hat, v_hat) = field.eval(tau, x_ref, s)?;
            let (g_ref, v_ref) = exact.eval(tau, x_ref, s)?;
            e_gamma[k].push((g_hat - g_ref).abs());
            if k < n {
                e_v[k].push((v_hat - v_ref).abs());
            }
        }
    }
    Ok(PathErrorCurves {
        times: paths[0].times.clone(),
        gamma: e_gamma.iter().map(|v| mean_std_unbiased(v)).collect(),
        inventory: e_x.iter().map(|v| mean_std_unbiased(v)).collect(),
        rate: e_v.iter().map(|v| mean_std_unbiased(v)).collect(),
    })
}
