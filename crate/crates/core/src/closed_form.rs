//! Exact Gatheral-Schied solutions, HJB residual definitions and GBM path
//! simulation.
//!
//! Closed forms implemented here (value function, optimal strategy, optimal
//! trading rate) are the ground truth for every benchmark in the crate.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Market/model constants for the execution problem.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HJBConfig {
    /// Permanent-impact strength (1/time).
    pub kappa: f64,
    /// GBM volatility (1/sqrt(time)).
    pub sigma: f64,
    /// Risk-aversion weight, >= 0. Zero selects the price-invariant regime.
    pub lambda: f64,
    /// Trading horizon.
    pub horizon_t: f64,
    /// Inventory domain.
    pub x_range: (f64, f64),
    /// Price domain (ignored in the risk-neutral regime).
    pub s_range: (f64, f64),
}

impl HJBConfig {
    pub fn validate(&self) -> Result<(), ClosedFormError> {
        if !(self.kappa > 0.0) {
            return Err(ClosedFormError::InvalidConfig("kappa must be > 0"));
        }
        if !(self.sigma >= 0.0) {
            return Err(ClosedFormError::InvalidConfig("sigma must be >= 0"));
        }
        if !(self.lambda >= 0.0) {
            return Err(ClosedFormError::InvalidConfig("lambda must be >= 0"));
        }
        if !(self.horizon_t > 0.0) {
            return Err(ClosedFormError::InvalidConfig("horizon_t must be > 0"));
        }
        if self.x_range.1 < self.x_range.0 || self.s_range.1 < self.s_range.0 {
            return Err(ClosedFormError::InvalidConfig("ranges must be nonempty"));
        }
        Ok(())
    }

    /// True when the value function is price-invariant (1D state).
    pub fn is_risk_neutral(&self) -> bool {
        self.lambda == 0.0
    }

    /// Smallest admissible time-to-maturity for this horizon.
    pub fn tau_min(&self) -> f64 {
        crate::TAU_MIN_FRAC * self.horizon_t
    }
}

/// A state `(tau, X, S)`; `s` is ignored in the risk-neutral regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePoint {
    pub tau: f64,
    pub x: f64,
    pub s: f64,
}

impl StatePoint {
    pub fn new(tau: f64, x: f64, s: f64) -> Self {
        Self { tau, x, s }
    }
}

/// A realized price path on a monotone time grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
}

impl PricePath {
    pub fn new(times: Vec<f64>, prices: Vec<f64>) -> Result<Self, ClosedFormError> {
        if times.len() != prices.len() || times.is_empty() {
            return Err(ClosedFormError::InvalidPath("length mismatch or empty"));
        }
        if times[0] != 0.0 {
            return Err(ClosedFormError::InvalidPath("times must start at 0"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ClosedFormError::InvalidPath("times must be strictly increasing"));
        }
        if prices.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(ClosedFormError::InvalidPath("prices must be positive and finite"));
        }
        Ok(Self { times, prices })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Serialize as `time,price` CSV rows with a header line.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,price")?;
        for (t, p) in self.times.iter().zip(&self.prices) {
            writeln!(w, "{t},{p}")?;
        }
        Ok(())
    }

    /// Parse the `time,price` CSV format produced by [`PricePath::write_csv`].
    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self, ClosedFormError> {
        let mut times = Vec::new();
        let mut prices = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|_| ClosedFormError::InvalidPath("io error"))?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("time")) {
                continue;
            }
            let mut parts = line.split(',');
            let t = parts
                .next()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or(ClosedFormError::InvalidPath("bad time field"))?;
            let p = parts
                .next()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or(ClosedFormError::InvalidPath("bad price field"))?;
            times.push(t);
            prices.push(p);
        }
        Self::new(times, prices)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ClosedFormError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("tau must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("rate is singular at t == T")]
    TerminalTime,
    #[error("invalid price path: {0}")]
    InvalidPath(&'static str),
    #[error("quadrature did not converge: subinterval budget exhausted (err {0:.3e})")]
    QuadratureNonConvergence(f64),
}

fn coth(z: f64) -> f64 {
    1.0 / z.tanh()
}

/// Closed-form value function.
///
/// `Gamma*(tau, X, S) = kappa X^2 coth(tau kappa)
///   + (lambda X S / kappa) tanh(tau kappa / 2)
///   - (lambda^2 S^2 e^{sigma^2 tau} / 4 kappa^2)
///     * int_0^tau tanh^2(u kappa / 2) e^{-sigma^2 u} du`
///
/// The integral is evaluated by adaptive Simpson quadrature to absolute
/// tolerance 1e-10. For `lambda == 0` the cross and integral terms vanish
/// exactly and the result is price-invariant.
pub fn value_exact(p: StatePoint, cfg: &HJBConfig) -> Result<f64, ClosedFormError> {
    if !(p.tau > 0.0) {
        return Err(ClosedFormError::NonPositiveTau(p.tau));
    }
    let k = cfg.kappa;
    let mut v = k * p.x * p.x * coth(p.tau * k);
    if cfg.lambda > 0.0 {
        let lam = cfg.lambda;
        v += lam * p.x * p.s / k * (p.tau * k / 2.0).tanh();
        let s2 = cfg.sigma * cfg.sigma;
        let integral = adaptive_simpson(
            |u| {
                let t = (u * k / 2.0).tanh();
                t * t * (-s2 * u).exp()
            },
            0.0,
            p.tau,
            1e-10,
        )?;
        v -= lam * lam * p.s * p.s * (s2 * p.tau).exp() / (4.0 * k * k) * integral;
    }
    Ok(v)
}

/// Analytic derivatives of the risk-neutral closed form:
/// returns `(Gamma_tau, Gamma_X)` of `kappa X^2 coth(tau kappa)`.
pub fn exact_derivs_risk_neutral(tau: f64, x: f64, cfg: &HJBConfig) -> Result<(f64, f64), ClosedFormError> {
    if !(tau > 0.0) {
        return Err(ClosedFormError::NonPositiveTau(tau));
    }
    let k = cfg.kappa;
    let sh = (tau * k).sinh();
    let d_tau = -k * k * x * x / (sh * sh);
    let d_x = 2.0 * k * x * coth(tau * k);
    Ok((d_tau, d_x))
}

/// Closed-form optimal trading rate
/// `v* = X kappa coth(kappa (T - t)) + (lambda S / 2 kappa) tanh(kappa (T - t) / 2)`.
pub fn optimal_rate(t: f64, x: f64, s: f64, cfg: &HJBConfig) -> Result<f64, ClosedFormError> {
    let tau = cfg.horizon_t - t;
    if !(tau > 0.0) {
        return Err(ClosedFormError::TerminalTime);
    }
    let k = cfg.kappa;
    let mut v = x * k * coth(k * tau);
    if cfg.lambda > 0.0 {
        v += cfg.lambda * s / (2.0 * k) * (k * tau / 2.0).tanh();
    }
    Ok(v)
}

/// Closed-form optimal inventory along a realized price path:
/// `X*_t = sinh((T-t)kappa) [ x0 / sinh(T kappa)
///   - (lambda / 2 kappa) int_0^t S_s / (1 + cosh((T-s)kappa)) ds ]`,
/// with the inner integral by trapezoid on the path grid.
pub fn optimal_inventory_path(
    path: &PricePath,
    x0: f64,
    cfg: &HJBConfig,
) -> Result<Vec<f64>, ClosedFormError> {
    let t_end = *path.times.last().expect("nonempty path");
    if t_end < cfg.horizon_t * (1.0 - 1e-9) {
        return Err(ClosedFormError::InvalidPath("path must cover [0, T]"));
    }
    let k = cfg.kappa;
    let big_t = cfg.horizon_t;
    let sh_t = (big_t * k).sinh();
    let integrand = |t: f64, s: f64| s / (1.0 + ((big_t - t) * k).cosh());
    let mut out = Vec::with_capacity(path.len());
    let mut integral = 0.0;
    let mut prev_f = integrand(path.times[0], path.prices[0]);
    let mut prev_t = path.times[0];
    for (i, (&t, &s)) in path.times.iter().zip(&path.prices).enumerate() {
        if i > 0 {
            let f = integrand(t, s);
            integral += 0.5 * (f + prev_f) * (t - prev_t);
            prev_f = f;
            prev_t = t;
        }
        let bracket = x0 / sh_t - cfg.lambda / (2.0 * k) * integral;
        out.push(((big_t - t).max(0.0) * k).sinh() * bracket);
    }
    Ok(out)
}

/// Derivative bundle consumed by [`hjb_residual_exact`].
#[derive(Debug, Clone, Copy)]
pub struct HJBDerivs {
    pub d_tau: f64,
    pub d_x: f64,
    /// Second derivative in S; ignored in the risk-neutral regime.
    pub d_ss: f64,
}

/// HJB residual at a state given derivative values.
///
/// Risk-neutral: `Gamma_tau - kappa^2 X^2 + Gamma_X^2 / 4`.
/// Risk-averse: `Gamma_tau - sigma^2 S^2 Gamma_SS / 2 - kappa^2 X^2
///   - lambda S X + Gamma_X^2 / 4`.
pub fn hjb_residual_exact(p: StatePoint, d: HJBDerivs, cfg: &HJBConfig) -> f64 {
    let k2x2 = cfg.kappa * cfg.kappa * p.x * p.x;
    let base = d.d_tau - k2x2 + 0.25 * d.d_x * d.d_x;
    if cfg.is_risk_neutral() {
        base
    } else {
        base - 0.5 * cfg.sigma * cfg.sigma * p.s * p.s * d.d_ss - cfg.lambda * p.s * p.x
    }
}

/// Simulate a driftless GBM path on a uniform grid over `[0, horizon_t]`
/// with the exact-distribution log-Euler update. Deterministic per seed.
pub fn simulate_gbm(s0: f64, cfg: &HJBConfig, n_steps: usize, seed: u64) -> PricePath {
    assert!(s0 > 0.0, "s0 must be positive");
    assert!(n_steps >= 1, "n_steps must be >= 1");
    let dt = cfg.horizon_t / n_steps as f64;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut prices = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    prices.push(s0);
    let mut s = s0;
    let drift = -0.5 * cfg.sigma * cfg.sigma * dt;
    let vol = cfg.sigma * dt.sqrt();
    for k in 1..=n_steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        s *= (drift + vol * z).exp();
        times.push(k as f64 * dt);
        prices.push(s);
    }
    PricePath { times, prices }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
///
/// The subinterval budget is capped at 2^16; exceeding it reports
/// non-convergence rather than silently truncating.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, ClosedFormError> {
    if a == b {
        return Ok(0.0);
    }
    const MAX_INTERVALS: u32 = 1 << 16;
    let mut budget = MAX_INTERVALS;
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let mut worst_err = 0.0f64;
    let result = simpson_rec(
        &f, a, b, fa, fm, fb, whole, tol, 48, &mut budget, &mut worst_err,
    );
    result.ok_or(ClosedFormError::QuadratureNonConvergence(worst_err))
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut u32,
    worst_err: &mut f64,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = (left + right - whole) / 15.0;
    if err.abs() <= tol || depth == 0 {
        if depth == 0 && err.abs() > tol {
            *worst_err = worst_err.max(err.abs());
            return None;
        }
        return Some(left + right + err);
    }
    if *budget < 2 {
        *worst_err = worst_err.max(err.abs());
        return None;
    }
    *budget -= 2;
    let l = simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, budget, worst_err)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, budget, worst_err)?;
    Some(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

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

    #[test]
    fn value_zero_inventory_risk_neutral() {
        let v = value_exact(StatePoint::new(5.0, 0.0, 55.0), &cfg(0.0)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn value_risk_neutral_matches_formula() {
        // kappa X^2 coth(tau kappa) = 10 coth(0.5)
        let v = value_exact(StatePoint::new(5.0, 10.0, 1.0), &cfg(0.0)).unwrap();
        assert_relative_eq!(v, 10.0 / 0.5f64.tanh(), max_relative = 1e-14);
        assert_relative_eq!(v, 21.639534137386527, max_relative = 1e-12);
    }

    #[test]
    fn value_rejects_nonpositive_tau() {
        assert!(matches!(
            value_exact(StatePoint::new(0.0, 1.0, 55.0), &cfg(0.0)),
            Err(ClosedFormError::NonPositiveTau(_))
        ));
    }

    #[test]
    fn rate_matches_formula() {
        let v = optimal_rate(0.0, 10.0, 0.0, &cfg(0.0)).unwrap();
        assert_relative_eq!(v, 0.5f64.tanh().recip(), max_relative = 1e-14);
        assert_relative_eq!(v, 2.1639534137386525, max_relative = 1e-12);
        assert_eq!(optimal_rate(0.0, 0.0, 0.0, &cfg(0.0)).unwrap(), 0.0);
        let v = optimal_rate(0.0, 0.0, 55.0, &cfg(0.1)).unwrap();
        assert_relative_eq!(v, 0.1 * 55.0 / 0.2 * 0.25f64.tanh(), max_relative = 1e-14);
    }

    #[test]
    fn rate_singular_at_terminal() {
        assert_eq!(
            optimal_rate(5.0, 1.0, 55.0, &cfg(0.0)),
            Err(ClosedFormError::TerminalTime)
        );
    }

    #[test]
    fn inventory_path_risk_neutral() {
        let times: Vec<f64> = (0..=1000).map(|i| i as f64 * 5.0 / 1000.0).collect();
        let prices = vec![55.0; times.len()];
        let path = PricePath::new(times, prices).unwrap();
        let xs = optimal_inventory_path(&path, 10.0, &cfg(0.0)).unwrap();
        assert_relative_eq!(xs[0], 10.0, max_relative = 1e-14);
        // t = 2.5 -> 10 sinh(0.25)/sinh(0.5)
        assert_relative_eq!(xs[500], 10.0 * 0.25f64.sinh() / 0.5f64.sinh(), max_relative = 1e-12);
        assert_relative_eq!(xs[500], 4.847718145701073, max_relative = 1e-10);
        assert_eq!(*xs.last().unwrap(), 0.0);
    }

    #[test]
    fn inventory_path_price_invariant_when_risk_neutral() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.05).collect();
        let p1 = PricePath::new(times.clone(), vec![55.0; times.len()]).unwrap();
        let p2 = simulate_gbm(55.0, &cfg(0.0), 100, 3);
        let a = optimal_inventory_path(&p1, 10.0, &cfg(0.0)).unwrap();
        let b = optimal_inventory_path(&p2, 10.0, &cfg(0.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_paths() {
        assert!(PricePath::new(vec![0.0, 1.0, 0.5], vec![1.0, 1.0, 1.0]).is_err());
        assert!(PricePath::new(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(PricePath::new(vec![0.1, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn residual_zero_on_exact_risk_neutral_field() {
        let c = cfg(0.0);
        let (d_tau, d_x) = exact_derivs_risk_neutral(3.0, 4.0, &c).unwrap();
        let r = hjb_residual_exact(
            StatePoint::new(3.0, 4.0, 0.0),
            HJBDerivs { d_tau, d_x, d_ss: 0.0 },
            &c,
        );
        assert!(r.abs() < 1e-12, "residual {r}");
    }

    #[test]
    fn residual_zero_derivatives_at_origin() {
        let r = hjb_residual_exact(
            StatePoint::new(1.0, 0.0, 0.0),
            HJBDerivs { d_tau: 0.0, d_x: 0.0, d_ss: 0.0 },
            &cfg(0.0),
        );
        assert_eq!(r, 0.0);
    }

    #[test]
    fn gbm_zero_vol_constant_and_deterministic() {
        let mut c = cfg(0.0);
        c.sigma = 0.0;
        let p = simulate_gbm(55.0, &c, 10, 42);
        assert!(p.prices.iter().all(|&s| s == 55.0));
        let a = simulate_gbm(55.0, &cfg(0.0), 50, 42);
        let b = simulate_gbm(55.0, &cfg(0.0), 50, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn price_path_csv_round_trip() {
        let p = simulate_gbm(55.0, &cfg(0.0), 20, 9);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = PricePath::read_csv(&buf[..]).unwrap();
        assert_eq!(p.times.len(), q.times.len());
        for (a, b) in p.prices.iter().zip(&q.prices) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
    }

    #[test]
    fn simpson_on_known_integral() {
        let v = adaptive_simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn symmetry_properties() {
        let c0 = cfg(0.0);
        let cl = cfg(0.1);
        for &(tau, x, s) in &[(0.5, 3.0, 40.0), (2.0, -7.0, 80.0), (4.9, 1.2, 12.0)] {
            let a = value_exact(StatePoint::new(tau, x, s), &c0).unwrap();
            let b = value_exact(StatePoint::new(tau, -x, s), &c0).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            let a = value_exact(StatePoint::new(tau, x, s), &cl).unwrap();
            let b = value_exact(StatePoint::new(tau, -x, -s), &cl).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn zero_inventory_value_nonpositive_when_risk_averse() {
        let c = cfg(0.1);
        for &tau in &[0.5, 1.0, 3.0, 5.0] {
            for &s in &[10.0, 55.0, 100.0] {
                let v = value_exact(StatePoint::new(tau, 0.0, s), &c).unwrap();
                assert!(v <= 0.0, "Gamma(tau,0,S) = {v} should be <= 0");
            }
        }
    }
}
