//! The tanh MLP value network and its differentiation engine.
//!
//! The engine delivers three things:
//!
//! 1. network output `Gamma(z)`,
//! 2. first derivatives in each input coordinate and pure second
//!    derivatives in X and S, propagated analytically through the layer
//!    recursion (forward mode over the closed-form tanh chain, not finite
//!    differences),
//! 3. parameter gradients of any scalar loss assembled from (1) and (2),
//!    obtained by a reverse pass over the cached forward recursion.
//!
//! Multi-step rollout losses reuse the same reverse pass step by step
//! (adjoint recursion through the Euler chain); see `losses::traj_loss`.
//!
//! The forward pass is a plain MLP: hidden tanh layers, scalar linear
//! output, no normalization layers and no stochastic regularizers.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::closed_form::StatePoint;

/// Input coordinate indices.
pub const DIR_TAU: usize = 0;
pub const DIR_X: usize = 1;
pub const DIR_S: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum DiffNetError {
    #[error("widths must be nonempty")]
    EmptyWidths,
    #[error("input dim must be 2 or 3, got {0}")]
    BadInputDim(usize),
    #[error("dimension mismatch: expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered in loss term `{term}`{detail}")]
    NonFinite { term: String, detail: String },
}

/// One dense layer: `out = w . in + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Fixed (non-trainable) per-coordinate affine applied to the inputs:
/// `z' = scale * z + shift`. Off by default; the models train on raw
/// domain units unless a config enables it.
#[derive(Debug, Clone, PartialEq)]
pub struct InputAffine {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

/// Weights and biases of the value network.
///
/// Hidden layers use tanh activation; the output layer is linear with a
/// single row.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub input_affine: Option<InputAffine>,
}

impl ModelParams {
    /// Hidden widths (excludes the scalar output layer).
    pub fn widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.w.nrows())
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flatten all parameters (row-major weights then bias, layer by layer).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut i = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut() {
                *v = flat[i];
                i += 1;
            }
            for v in l.b.iter_mut() {
                *v = flat[i];
                i += 1;
            }
        }
    }

    pub fn assert_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }
}

/// Network output and input derivatives at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEval {
    pub gamma: f64,
    pub d_tau: f64,
    pub d_x: f64,
    /// Present iff the network has a price input.
    pub d_s: Option<f64>,
    /// Present iff the network has a price input.
    pub d_ss: Option<f64>,
}

impl FieldEval {
    pub fn is_finite(&self) -> bool {
        self.gamma.is_finite()
            && self.d_tau.is_finite()
            && self.d_x.is_finite()
            && self.d_s.is_none_or(|v| v.is_finite())
            && self.d_ss.is_none_or(|v| v.is_finite())
    }
}

/// Per-parameter partials mirroring a [`ModelParams`] shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientAccumulator {
    pub layers: Vec<Layer>,
}

impl GradientAccumulator {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| Layer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    /// Global l2 norm over all weight and bias entries.
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().map(|g| g * g).sum::<f64>() + l.b.iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn add(&mut self, other: &GradientAccumulator) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.w *= c;
            l.b *= c;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }
}

/// Which derivative streams a forward pass should carry.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Streams {
    pub tau: bool,
    pub x: bool,
    pub s: bool,
    /// Second derivative in X (requires `x`).
    pub xx: bool,
    /// Second derivative in S (requires `s`).
    pub ss: bool,
}

impl Streams {
    /// Everything the public [`FieldEval`] reports for a given input dim.
    pub fn full(input_dim: usize) -> Self {
        Streams {
            tau: true,
            x: true,
            s: input_dim == 3,
            xx: false,
            ss: input_dim == 3,
        }
    }

    pub fn value_only() -> Self {
        Streams::default()
    }

    fn first(&self, dir: usize) -> bool {
        match dir {
            DIR_TAU => self.tau,
            DIR_X => self.x || self.xx,
            DIR_S => self.s || self.ss,
            _ => false,
        }
    }

    fn second(&self, dir: usize) -> bool {
        match dir {
            DIR_X => self.xx,
            DIR_S => self.ss,
            _ => false,
        }
    }
}

/// Initialize a network deterministically from a seed.
///
/// Weights are drawn uniform in `±sqrt(6 / (fan_in + fan_out))`, biases are
/// zero.
pub fn init_params(input_dim: usize, widths: &[usize], seed: u64) -> Result<ModelParams, DiffNetError> {
    if widths.is_empty() || widths.contains(&0) {
        return Err(DiffNetError::EmptyWidths);
    }
    if input_dim != 2 && input_dim != 3 {
        return Err(DiffNetError::BadInputDim(input_dim));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut dims = vec![input_dim];
    dims.extend_from_slice(widths);
    dims.push(1);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for win in dims.windows(2) {
        let (fan_in, fan_out) = (win[0], win[1]);
        let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-scale..scale));
        layers.push(Layer {
            w,
            b: Array1::zeros(fan_out),
        });
    }
    Ok(ModelParams {
        input_dim,
        layers,
        input_affine: None,
    })
}

/// Widen a risk-neutral `(tau, X)` network to `(tau, X, S)` by appending a
/// zero column for S to the first layer. The widened network returns the
/// same value and derivatives as the original for every S at handoff.
pub fn warm_start_1d_to_2d(p1: &ModelParams) -> ModelParams {
    assert_eq!(p1.input_dim, 2, "warm start expects a 2-input network");
    let mut layers = p1.layers.clone();
    let first = &mut layers[0];
    let n = first.w.nrows();
    let mut w = Array2::zeros((n, 3));
    w.column_mut(0).assign(&first.w.column(0));
    w.column_mut(1).assign(&first.w.column(1));
    first.w = w;
    let input_affine = p1.input_affine.as_ref().map(|a| InputAffine {
        scale: vec![a.scale[0], a.scale[1], 1.0],
        shift: vec![a.shift[0], a.shift[1], 0.0],
    });
    ModelParams {
        input_dim: 3,
        layers,
        input_affine,
    }
}

// ---------------------------------------------------------------------------
// Forward/backward tape
// ---------------------------------------------------------------------------

type StreamMats = [Option<Array2<f64>>; 3];

/// Quantities entering a linear layer (post-activation of the previous one).
struct LayerInput {
    a: Array2<f64>,
    au: StreamMats,
    aw: StreamMats,
}

/// Cached tanh intermediates between layer `l` and layer `l+1`.
struct ActCache {
    pu: StreamMats,
    pw: StreamMats,
}

/// Cached forward pass over a batch of points.
///
/// Column `j` of the input matrix is one state; rows are `(tau, X[, S])`.
pub struct BatchTape<'p> {
    params: &'p ModelParams,
    streams: Streams,
    inputs: Vec<LayerInput>,
    acts: Vec<ActCache>,
    out_gamma: Array1<f64>,
    out_u: [Option<Array1<f64>>; 3],
    out_w: [Option<Array1<f64>>; 3],
}

/// Output adjoints seeding a reverse pass; entries default to zero.
#[derive(Debug, Default, Clone)]
pub struct SeedBundle {
    pub gamma: Option<Array1<f64>>,
    pub d_tau: Option<Array1<f64>>,
    pub d_x: Option<Array1<f64>>,
    pub d_s: Option<Array1<f64>>,
    pub d_xx: Option<Array1<f64>>,
    pub d_ss: Option<Array1<f64>>,
}

impl ModelParams {
    /// Run the forward recursion over a batch (inputs as a `dim x B` matrix),
    /// caching everything a later [`BatchTape::backward`] needs.
    pub fn forward_batch(&self, z: &Array2<f64>, streams: Streams) -> BatchTape<'_> {
        assert_eq!(z.nrows(), self.input_dim, "input row count");
        let batch = z.ncols();
        let n_layers = self.layers.len();
        let dirs: Vec<usize> = (0..self.input_dim).filter(|&d| streams.first(d)).collect();

        let mut inputs: Vec<LayerInput> = Vec::with_capacity(n_layers);
        let mut acts: Vec<ActCache> = Vec::with_capacity(n_layers - 1);

        // Input streams: value = z, first derivatives = coordinate one-hots,
        // second derivatives = 0 (represented as None).
        let mut a0 = z.clone();
        if let Some(aff) = &self.input_affine {
            for d in 0..self.input_dim {
                let mut row = a0.row_mut(d);
                row.mapv_inplace(|v| aff.scale[d] * v + aff.shift[d]);
            }
        }
        let mut au: StreamMats = [None, None, None];
        for &d in &dirs {
            let mut m = Array2::zeros((self.input_dim, batch));
            let unit = self.input_affine.as_ref().map_or(1.0, |a| a.scale[d]);
            m.row_mut(d).fill(unit);
            au[d] = Some(m);
        }
        inputs.push(LayerInput {
            a: a0,
            au,
            aw: [None, None, None],
        });

        for (l, layer) in self.layers.iter().enumerate() {
            let cur = inputs.last().unwrap();
            // Linear part of the layer for every stream.
            let mut pv = layer.w.dot(&cur.a);
            pv += &layer
                .b
                .view()
                .insert_axis(Axis(1))
                .broadcast(pv.raw_dim())
                .unwrap();
            let mut pu: StreamMats = [None, None, None];
            let mut pw: StreamMats = [None, None, None];
            for &d in &dirs {
                pu[d] = cur.au[d].as_ref().map(|m| layer.w.dot(m));
                if streams.second(d) {
                    pw[d] = cur.aw[d].as_ref().map(|m| layer.w.dot(m));
                }
            }

            if l + 1 == n_layers {
                // Linear scalar output.
                let row = |m: &Array2<f64>| m.row(0).to_owned();
                let out_gamma = row(&pv);
                let mut out_u: [Option<Array1<f64>>; 3] = [None, None, None];
                let mut out_w: [Option<Array1<f64>>; 3] = [None, None, None];
                for &d in &dirs {
                    out_u[d] = pu[d].as_ref().map(&row);
                    if streams.second(d) {
                        out_w[d] = Some(
                            pw[d].as_ref().map(&row).unwrap_or_else(|| Array1::zeros(batch)),
                        );
                    }
                }
                return BatchTape {
                    params: self,
                    streams,
                    inputs,
                    acts,
                    out_gamma,
                    out_u,
                    out_w,
                };
            }

            // tanh activation over all streams, fused per element.
            pv.mapv_inplace(f64::tanh);
            let t = pv;
            let mut au: StreamMats = [None, None, None];
            let mut aw: StreamMats = [None, None, None];
            for &d in &dirs {
                let pud = pu[d].as_ref().expect("first-derivative stream present");
                let mut m = Array2::zeros(t.raw_dim());
                Zip::from(&mut m).and(&t).and(pud).for_each(|o, &t, &pu| {
                    *o = (1.0 - t * t) * pu;
                });
                au[d] = Some(m);
                if streams.second(d) {
                    let mut w2 = Array2::zeros(t.raw_dim());
                    match pw[d].as_ref() {
                        Some(pwd) => {
                            Zip::from(&mut w2).and(&t).and(pud).and(pwd).for_each(
                                |o, &t, &pu, &pw| {
                                    let s1 = 1.0 - t * t;
                                    *o = s1 * pw - 2.0 * t * s1 * pu * pu;
                                },
                            );
                        }
                        None => {
                            Zip::from(&mut w2).and(&t).and(pud).for_each(|o, &t, &pu| {
                                *o = -2.0 * t * (1.0 - t * t) * pu * pu;
                            });
                        }
                    }
                    aw[d] = Some(w2);
                }
            }
            acts.push(ActCache { pu, pw });
            inputs.push(LayerInput { a: t, au, aw });
        }
        unreachable!("network has at least one layer");
    }

    /// Evaluate output and derivatives at one state. For a 2-input network
    /// the price coordinate of `p` is ignored (the regime is
    /// price-invariant); `d_s`/`d_ss` are absent.
    pub fn eval_field(&self, p: StatePoint) -> FieldEval {
        let z = self.state_to_input(p);
        let tape = self.forward_batch(&z, Streams::full(self.input_dim));
        tape.field_at(0)
    }

    /// Strict-arity evaluation: `z` must have exactly `input_dim` entries.
    pub fn eval_field_dims(&self, z: &[f64]) -> Result<FieldEval, DiffNetError> {
        if z.len() != self.input_dim {
            return Err(DiffNetError::DimensionMismatch {
                expected: self.input_dim,
                got: z.len(),
            });
        }
        let col = Array2::from_shape_vec((self.input_dim, 1), z.to_vec()).unwrap();
        let tape = self.forward_batch(&col, Streams::full(self.input_dim));
        Ok(tape.field_at(0))
    }

    pub fn state_to_input(&self, p: StatePoint) -> Array2<f64> {
        if self.input_dim == 2 {
            Array2::from_shape_vec((2, 1), vec![p.tau, p.x]).unwrap()
        } else {
            Array2::from_shape_vec((3, 1), vec![p.tau, p.x, p.s]).unwrap()
        }
    }
}

impl BatchTape<'_> {
    pub fn batch_len(&self) -> usize {
        self.out_gamma.len()
    }

    pub fn gamma(&self) -> &Array1<f64> {
        &self.out_gamma
    }

    pub fn d_tau(&self) -> &Array1<f64> {
        self.out_u[DIR_TAU].as_ref().expect("tau stream requested")
    }

    pub fn d_x(&self) -> &Array1<f64> {
        self.out_u[DIR_X].as_ref().expect("x stream requested")
    }

    pub fn d_s(&self) -> &Array1<f64> {
        self.out_u[DIR_S].as_ref().expect("s stream requested")
    }

    pub fn d_xx(&self) -> &Array1<f64> {
        self.out_w[DIR_X].as_ref().expect("xx stream requested")
    }

    pub fn d_ss(&self) -> &Array1<f64> {
        self.out_w[DIR_S].as_ref().expect("ss stream requested")
    }

    pub fn field_at(&self, j: usize) -> FieldEval {
        FieldEval {
            gamma: self.out_gamma[j],
            d_tau: self.out_u[DIR_TAU].as_ref().map_or(0.0, |v| v[j]),
            d_x: self.out_u[DIR_X].as_ref().map_or(0.0, |v| v[j]),
            d_s: self.out_u[DIR_S].as_ref().map(|v| v[j]),
            d_ss: self.out_w[DIR_S].as_ref().map(|v| v[j]),
        }
    }

    /// Reverse pass: accumulate `d(seed . outputs)/d(params)` into `acc`.
    ///
    /// Each seed entry is a per-point adjoint on the corresponding output
    /// stream; absent entries are zero.
    pub fn backward(&self, seed: &SeedBundle, acc: &mut GradientAccumulator) {
        let batch = self.batch_len();
        let to_row = |v: &Array1<f64>| {
            let mut m = Array2::zeros((1, batch));
            m.row_mut(0).assign(v);
            m
        };
        // Adjoints w.r.t. the pre-activation streams of the current layer.
        let mut g_v: Array2<f64> = seed
            .gamma
            .as_ref()
            .map(&to_row)
            .unwrap_or_else(|| Array2::zeros((1, batch)));
        let mut g_u: StreamMats = [None, None, None];
        let mut g_w: StreamMats = [None, None, None];
        g_u[DIR_TAU] = seed.d_tau.as_ref().map(&to_row);
        g_u[DIR_X] = seed.d_x.as_ref().map(&to_row);
        g_u[DIR_S] = seed.d_s.as_ref().map(&to_row);
        g_w[DIR_X] = seed.d_xx.as_ref().map(&to_row);
        g_w[DIR_S] = seed.d_ss.as_ref().map(&to_row);

        let dirs: Vec<usize> = (0..self.params.input_dim)
            .filter(|&d| self.streams.first(d))
            .collect();

        for l in (0..self.params.layers.len()).rev() {
            let layer = &self.params.layers[l];
            let input = &self.inputs[l];

            // Parameter gradients of the linear map, accumulated in place.
            {
                let gl = &mut acc.layers[l];
                general_mat_mul(1.0, &g_v, &input.a.t(), 1.0, &mut gl.w);
                gl.b += &g_v.sum_axis(Axis(1));
                for &d in &dirs {
                    if let (Some(g), Some(a)) = (g_u[d].as_ref(), input.au[d].as_ref()) {
                        general_mat_mul(1.0, g, &a.t(), 1.0, &mut gl.w);
                    }
                    if let (Some(g), Some(a)) = (g_w[d].as_ref(), input.aw[d].as_ref()) {
                        general_mat_mul(1.0, g, &a.t(), 1.0, &mut gl.w);
                    }
                }
            }
            if l == 0 {
                break;
            }

            // Adjoints w.r.t. the layer's input streams (post-activation of
            // layer l-1).
            let wt = layer.w.t();
            let ga_v = wt.dot(&g_v);
            let mut ga_u: StreamMats = [None, None, None];
            let mut ga_w: StreamMats = [None, None, None];
            for &d in &dirs {
                ga_u[d] = g_u[d].as_ref().map(|g| wt.dot(g));
                ga_w[d] = g_w[d].as_ref().map(|g| wt.dot(g));
            }

            // tanh backward using cached intermediates, fused per element.
            let t = &self.inputs[l].a;
            let act = &self.acts[l - 1];
            let mut gp = Array2::zeros(t.raw_dim());
            Zip::from(&mut gp).and(&ga_v).and(t).for_each(|o, &g, &t| {
                *o = g * (1.0 - t * t);
            });
            let mut gp_u: StreamMats = [None, None, None];
            let mut gp_w: StreamMats = [None, None, None];
            for &d in &dirs {
                let pud = act.pu[d].as_ref().expect("cached pu stream");
                if let Some(gau) = ga_u[d].as_ref() {
                    let mut gu = Array2::zeros(t.raw_dim());
                    Zip::from(&mut gu)
                        .and(&mut gp)
                        .and(gau)
                        .and(t)
                        .and(pud)
                        .for_each(|gu, gp, &g, &t, &pu| {
                            let s1 = 1.0 - t * t;
                            *gp += g * pu * (-2.0 * t * s1);
                            *gu = g * s1;
                        });
                    gp_u[d] = Some(gu);
                }
                if let Some(gaw) = ga_w[d].as_ref() {
                    // AW = s1*PW - 2 t s1 PU^2; PW may be absent (zero)
                    let mut gw = Array2::zeros(t.raw_dim());
                    let mut gu_extra = Array2::zeros(t.raw_dim());
                    Zip::from(&mut gw)
                        .and(&mut gu_extra)
                        .and(&mut gp)
                        .and(gaw)
                        .and(t)
                        .and(pud)
                        .for_each(|gw, gu, gp, &g, &t, &pu| {
                            let s1 = 1.0 - t * t;
                            *gp += g * (-2.0 * pu * pu * (s1 * s1 - 2.0 * t * t * s1));
                            *gu = g * (-4.0 * t * s1 * pu);
                            *gw = g * s1;
                        });
                    if let Some(pwd) = act.pw[d].as_ref() {
                        Zip::from(&mut gp).and(gaw).and(t).and(pwd).for_each(
                            |gp, &g, &t, &pw| {
                                *gp += g * pw * (-2.0 * t * (1.0 - t * t));
                            },
                        );
                    }
                    match gp_u[d].as_mut() {
                        Some(g) => *g += &gu_extra,
                        None => gp_u[d] = Some(gu_extra),
                    }
                    gp_w[d] = Some(gw);
                }
            }
            g_v = gp;
            g_u = gp_u;
            g_w = gp_w;
        }
    }
}

/// A scalar loss together with its analytic parameter gradient.
///
/// Implementations cover exactly the loss family of this crate; this is not
/// a general-purpose autodiff surface.
pub trait LossFunctional {
    /// Name used in non-finite diagnostics.
    fn name(&self) -> &'static str;
    fn eval(&self, params: &ModelParams) -> Result<f64, DiffNetError>;
    fn eval_with_grad(&self, params: &ModelParams) -> Result<(f64, GradientAccumulator), DiffNetError>;
}

/// Evaluate a loss together with its parameter gradient, verifying both are
/// finite. Non-finite results fail hard with the loss term named.
pub fn grad_of_loss<L: LossFunctional>(
    params: &ModelParams,
    loss: &L,
) -> Result<(f64, GradientAccumulator), DiffNetError> {
    let (value, grad) = loss.eval_with_grad(params)?;
    if !value.is_finite() {
        return Err(DiffNetError::NonFinite {
            term: loss.name().to_string(),
            detail: format!(" (loss value {value})"),
        });
    }
    if !grad.is_finite() {
        return Err(DiffNetError::NonFinite {
            term: loss.name().to_string(),
            detail: " (gradient)".to_string(),
        });
    }
    Ok((value, grad))
}
