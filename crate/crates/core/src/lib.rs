//! Multi-trajectory physics-informed solver for the Gatheral-Schied
//! optimal trade-execution HJB with a hard-zero terminal-inventory
//! constraint.
//!
//! The crate is organized around the pipeline used by the benchmark and
//! backtest drivers:
//!
//! * [`closed_form`] — exact value function, optimal strategy and GBM
//!   simulation; the ground-truth oracle everything else is tested against.
//! * [`diffnet`] — the tanh MLP value network together with analytic input
//!   derivatives and parameter gradients of the loss family (including
//!   multi-step rollouts via backpropagation through time).
//! * [`losses`] — PDE residual, trajectory, internal-condition, symmetry and
//!   terminal-penalty losses per risk regime.
//! * [`sampler`] — seeded collocation and trajectory batch generation.
//! * [`trainer`] — AdamW, adaptive loss-weight rebalancing, the
//!   lambda-curriculum and the three model presets.
//! * [`evalkit`] — terminal-inventory statistics, error surfaces and
//!   pathwise error curves.
//! * [`backtest`] — intraday window segmentation, realized-volatility
//!   estimation, TWAP and policy execution with exposure/cost reporting.

pub mod backtest;
pub mod closed_form;
pub mod diffnet;
pub mod evalkit;
pub mod losses;
pub mod sampler;
pub mod trainer;

mod seed;

pub use closed_form::HJBConfig;
pub use seed::derive_seed;

/// Relative clamp applied to time-to-maturity: consumers never query the
/// value network or the closed form below `TAU_MIN_FRAC * horizon_T`, since
/// the terminal condition is singular off the zero-inventory axis.
pub const TAU_MIN_FRAC: f64 = 1e-6;
