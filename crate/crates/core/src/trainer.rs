//! Optimization loop: AdamW, adaptive loss-weight rebalancing, the
//! lambda-curriculum with 1D-to-2D warm start, and the three model presets
//! (vanilla PINN, PINN + curriculum, MT-PINN + curriculum).

use std::collections::BTreeMap;

use ndarray::Array1;
use thiserror::Error;

use crate::closed_form::HJBConfig;
use crate::diffnet::{
    grad_of_loss, init_params, warm_start_1d_to_2d, DiffNetError, GradientAccumulator, InputAffine,
    Layer, ModelParams,
};
use crate::losses::{
    IcLoss, LossError, PdeLoss, SymLoss, TermPenaltyLoss, TrajLoss, ZeroTermLoss,
};
use crate::sampler::{make_trajectory_spec, sample_batch, SampleCounts};
use crate::{derive_seed, losses::TrajectorySpec, sampler::CollocationBatch};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    DiffNet(#[from] DiffNetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("invalid curriculum schedule: {0}")]
    InvalidSchedule(&'static str),
}

/// The three models of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Single-stage PINN with the quadratic terminal penalty.
    Vanilla,
    /// Terminal-penalty PINN trained through the lambda curriculum.
    PinnCurriculum,
    /// Trajectory-loss model trained through the lambda curriculum.
    MtPinnCurriculum,
}

impl Preset {
    /// Loss terms this preset trains, given the regime.
    pub fn active_terms(self, risk_neutral: bool) -> Vec<&'static str> {
        match self {
            Preset::MtPinnCurriculum => {
                let mut t = vec!["pde", "traj", "ic", "sym"];
                if !risk_neutral {
                    t.push("zero_term");
                }
                t
            }
            Preset::Vanilla | Preset::PinnCurriculum => {
                vec!["pde", "ic", "sym", "term_penalty"]
            }
        }
    }

    pub fn uses_curriculum(self) -> bool {
        !matches!(self, Preset::Vanilla)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Cosine-decay floor as a fraction of `lr`, applied per stage;
    /// 1.0 keeps the learning rate constant.
    pub lr_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            lr_decay: 1.0,
        }
    }
}

/// First/second moment accumulators for AdamW.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub step: u64,
    pub cfg: AdamWConfig,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, cfg: AdamWConfig) -> Self {
        let zeros = || {
            params
                .layers
                .iter()
                .map(|l| Layer {
                    w: ndarray::Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
            cfg,
        }
    }
}

/// One decoupled-weight-decay Adam update, in place.
pub fn adamw_step(params: &mut ModelParams, grads: &GradientAccumulator, opt: &mut OptimizerState) {
    opt.step += 1;
    let c = opt.cfg;
    let t = opt.step as f64;
    let bc1 = 1.0 - c.beta1.powf(t);
    let bc2 = 1.0 - c.beta2.powf(t);
    for (li, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads.layers[li];
        let m = &mut opt.m[li];
        let v = &mut opt.v[li];
        for ((((p, &gw), mw), vw), _) in layer
            .w
            .iter_mut()
            .zip(g.w.iter())
            .zip(m.w.iter_mut())
            .zip(v.w.iter_mut())
            .zip(std::iter::repeat(()))
        {
            *mw = c.beta1 * *mw + (1.0 - c.beta1) * gw;
            *vw = c.beta2 * *vw + (1.0 - c.beta2) * gw * gw;
            let update = (*mw / bc1) / ((*vw / bc2).sqrt() + c.eps);
            *p -= c.lr * update + c.lr * c.weight_decay * *p;
        }
        for (((p, &gb), mb), vb) in layer
            .b
            .iter_mut()
            .zip(g.b.iter())
            .zip(m.b.iter_mut())
            .zip(v.b.iter_mut())
        {
            *mb = c.beta1 * *mb + (1.0 - c.beta1) * gb;
            *vb = c.beta2 * *vb + (1.0 - c.beta2) * gb * gb;
            let update = (*mb / bc1) / ((*vb / bc2).sqrt() + c.eps);
            *p -= c.lr * update + c.lr * c.weight_decay * *p;
        }
    }
}

// ---------------------------------------------------------------------------
// DWA-style weight rebalancing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DwaConfig {
    /// EMA smoothing factor.
    pub beta: f64,
    /// Inverse power-law update strength.
    pub alpha: f64,
    /// Update cadence in epochs.
    pub delta: usize,
    pub clip: (f64, f64),
    pub freeze_tol: f64,
    /// Consecutive sub-tolerance updates before freezing.
    pub freeze_updates: u32,
}

impl Default for DwaConfig {
    fn default() -> Self {
        Self {
            beta: 0.95,
            alpha: 0.3,
            delta: 1000,
            clip: (0.1, 2.0),
            freeze_tol: 1e-4,
            freeze_updates: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct TermWeight {
    weight: f64,
    ema: Option<f64>,
    initial: Option<f64>,
    frozen: bool,
    below_count: u32,
}

/// Per-term loss weights with their adaptation state.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    terms: BTreeMap<&'static str, TermWeight>,
    cfg: DwaConfig,
}

impl WeightState {
    pub fn new(terms: &[(&'static str, f64)], cfg: DwaConfig) -> Self {
        Self {
            terms: terms
                .iter()
                .map(|&(n, w)| {
                    (
                        n,
                        TermWeight {
                            weight: w,
                            ema: None,
                            initial: None,
                            frozen: false,
                            below_count: 0,
                        },
                    )
                })
                .collect(),
            cfg,
        }
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.terms[term].weight
    }

    pub fn is_frozen(&self, term: &str) -> bool {
        self.terms[term].frozen
    }

    pub fn active_weights(&self) -> Vec<(&'static str, f64)> {
        self.terms
            .iter()
            .filter(|(_, t)| !t.frozen)
            .map(|(&n, t)| (n, t.weight))
            .collect()
    }

    /// Record the first observed raw loss of a stage as the relative scale.
    fn observe_initial(&mut self, losses: &BTreeMap<&'static str, f64>) {
        for (name, tw) in self.terms.iter_mut() {
            if tw.initial.is_none() {
                if let Some(&l) = losses.get(name) {
                    tw.initial = Some(l.abs().max(1e-12));
                }
            }
        }
    }

    /// Reset adaptation state (EMA, initial scale, freeze counters) for a
    /// fresh curriculum stage while keeping the current weight values.
    pub fn reset_adaptation(&mut self) {
        for tw in self.terms.values_mut() {
            tw.ema = None;
            tw.initial = None;
            tw.frozen = false;
            tw.below_count = 0;
        }
    }
}

/// One scheduled weight update:
/// EMA of losses relative to their initial scale, geometric-mean centering
/// across active terms, a gentle inverse power-law step, clipping, and
/// mean-one renormalization. Terms whose EMA stays below the freeze
/// tolerance for several consecutive updates freeze at their current
/// weight (they keep contributing to the total loss; only the weight stops
/// adapting).
pub fn dwa_update(ws: &mut WeightState, losses: &BTreeMap<&'static str, f64>) {
    let cfg = ws.cfg;
    ws.observe_initial(losses);
    // 1. EMA of relative losses.
    for (name, tw) in ws.terms.iter_mut() {
        let Some(&raw) = losses.get(name) else { continue };
        let rel = raw / tw.initial.expect("initial scale set");
        tw.ema = Some(match tw.ema {
            Some(e) => cfg.beta * e + (1.0 - cfg.beta) * rel,
            None => rel,
        });
    }
    // 6. freeze bookkeeping before the move so "several updates" means
    // consecutive scheduled calls.
    for tw in ws.terms.values_mut() {
        if tw.frozen {
            continue;
        }
        if let Some(e) = tw.ema {
            if e < cfg.freeze_tol {
                tw.below_count += 1;
                if tw.below_count >= cfg.freeze_updates {
                    tw.frozen = true;
                }
            } else {
                tw.below_count = 0;
            }
        }
    }
    let active: Vec<&'static str> = ws
        .terms
        .iter()
        .filter(|(_, t)| !t.frozen && t.ema.is_some())
        .map(|(&n, _)| n)
        .collect();
    if active.is_empty() {
        return;
    }
    // 2. geometric-mean centering.
    let log_mean = active
        .iter()
        .map(|n| ws.terms[n].ema.unwrap().max(1e-300).ln())
        .sum::<f64>()
        / active.len() as f64;
    let geomean = log_mean.exp();
    // 3-4. inverse power-law proposal and clip.
    for n in &active {
        let tw = ws.terms.get_mut(n).unwrap();
        let r = tw.ema.unwrap().max(1e-300) / geomean;
        tw.weight = (tw.weight * r.powf(cfg.alpha)).clamp(cfg.clip.0, cfg.clip.1);
    }
    // 5. mean-one renormalization of active weights, kept inside the clip
    // box by alternating scale and clamp until the fixed point.
    for _ in 0..256 {
        let mean = active.iter().map(|n| ws.terms[n].weight).sum::<f64>() / active.len() as f64;
        if (mean - 1.0).abs() <= 1e-15 {
            break;
        }
        for n in &active {
            let tw = ws.terms.get_mut(n).unwrap();
            tw.weight = (tw.weight / mean).clamp(cfg.clip.0, cfg.clip.1);
        }
    }
}

// ---------------------------------------------------------------------------
// Training configuration and stages
// ---------------------------------------------------------------------------

/// Initial loss weights.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InitialWeights {
    pub pde: f64,
    pub traj: f64,
    pub ic: f64,
    pub sym: f64,
    pub zero_term: f64,
    pub term_penalty: f64,
}

impl Default for InitialWeights {
    fn default() -> Self {
        Self {
            pde: 1.0,
            traj: 1.0,
            ic: 0.1,
            sym: 0.5,
            zero_term: 0.5,
            term_penalty: 1.0,
        }
    }
}

impl InitialWeights {
    fn get(&self, term: &str) -> f64 {
        match term {
            "pde" => self.pde,
            "traj" => self.traj,
            "ic" => self.ic,
            "sym" => self.sym,
            "zero_term" => self.zero_term,
            "term_penalty" => self.term_penalty,
            _ => unreachable!("unknown loss term {term}"),
        }
    }
}

/// Rollout batch settings for the trajectory loss.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrajSettings {
    pub n_x: usize,
    pub n_s: usize,
    pub horizon_fractions: Vec<f64>,
    pub n_dt: usize,
}

/// Full training configuration for one run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub widths: Vec<usize>,
    pub optimizer: AdamWConfig,
    pub counts: SampleCounts,
    /// Resample the collocation batch every epoch instead of once per
    /// stage. Off by default (static collocation set). Applies to
    /// risk-averse (lambda > 0) training only: risk-neutral fits always
    /// keep a static batch, since they need a tight terminal optimum and
    /// fresh draws leave a noise floor.
    pub resample_each_epoch: bool,
    pub traj: TrajSettings,
    pub dwa: DwaConfig,
    pub initial_weights: InitialWeights,
    /// Baseline terminal-penalty strength.
    pub term_penalty_c: f64,
    /// Normalize the price input to [-1, 1] (tau and X stay in raw domain
    /// units). Off by default.
    pub input_scaling: bool,
    /// Global l2 gradient-norm cap; `INFINITY` disables clipping.
    pub grad_clip: f64,
}

/// Staged risk-aversion schedule.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CurriculumSchedule {
    pub lambda_star: f64,
    /// Stage fractions of `lambda_star`; strictly increasing, last = 1.
    pub fractions: Vec<f64>,
    pub epochs_per_stage: usize,
    pub phase_a_epochs: usize,
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.lambda_star > 0.0 {
            if self.fractions.is_empty() {
                return Err(TrainError::InvalidSchedule("fractions must be nonempty"));
            }
            if self.fractions.windows(2).any(|w| w[1] <= w[0]) {
                return Err(TrainError::InvalidSchedule("fractions must be strictly increasing"));
            }
            if (self.fractions.last().unwrap() - 1.0).abs() > 1e-12 {
                return Err(TrainError::InvalidSchedule("last fraction must be 1.0"));
            }
        }
        Ok(())
    }

    pub fn stage_lambdas(&self) -> Vec<f64> {
        if self.lambda_star == 0.0 {
            Vec::new()
        } else {
            self.fractions.iter().map(|&a| a * self.lambda_star).collect()
        }
    }
}

/// One epoch's bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// `(term, raw loss, weight)` for every active term.
    pub terms: Vec<(&'static str, f64, f64)>,
    pub total: f64,
    /// Global l2 norm of the weighted gradient (0 on skipped epochs).
    pub grad_norm: f64,
}

#[derive(Debug)]
pub struct StageOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub weights: WeightState,
    pub opt: OptimizerState,
}

/// Identity on `tau` and `X` (their raw scales feed the policy gradient),
/// price mapped to [-1, 1]: raw prices saturate the tanh stack, while
/// shrinking the inventory axis starves `Gamma_X` early in training.
fn input_affine_for(cfg: &HJBConfig, input_dim: usize) -> InputAffine {
    let half = ((cfg.s_range.1 - cfg.s_range.0) / 2.0).max(1e-12);
    let mid = (cfg.s_range.1 + cfg.s_range.0) / 2.0;
    let mut scale = vec![1.0; input_dim];
    let mut shift = vec![0.0; input_dim];
    if input_dim == 3 {
        scale[2] = 1.0 / half;
        shift[2] = -mid / half;
    }
    InputAffine { scale, shift }
}

struct StageLosses<'a> {
    pde: PdeLoss<'a>,
    ic: IcLoss<'a>,
    sym: SymLoss<'a>,
    zero_term: ZeroTermLoss<'a>,
    term_penalty: TermPenaltyLoss<'a>,
    traj: Option<TrajLoss<'a>>,
}

impl StageLosses<'_> {
    fn grad(
        &self,
        term: &str,
        params: &ModelParams,
    ) -> Result<(f64, GradientAccumulator), DiffNetError> {
        match term {
            "pde" => grad_of_loss(params, &self.pde),
            "ic" => grad_of_loss(params, &self.ic),
            "sym" => grad_of_loss(params, &self.sym),
            "zero_term" => grad_of_loss(params, &self.zero_term),
            "term_penalty" => grad_of_loss(params, &self.term_penalty),
            "traj" => grad_of_loss(params, self.traj.as_ref().expect("traj spec present")),
            _ => unreachable!("unknown loss term {term}"),
        }
    }
}

/// Train one stage at a fixed lambda. The collocation batch is sampled once
/// (static set) unless `resample_each_epoch` is on and lambda > 0; the
/// per-epoch total is the weighted sum of the preset's active terms.
#[allow(clippy::too_many_arguments)]
pub fn train_stage(
    preset: Preset,
    params: ModelParams,
    cfg: &HJBConfig,
    epochs: usize,
    seed: u64,
    tc: &TrainConfig,
    weights: Option<WeightState>,
    opt: Option<OptimizerState>,
) -> Result<StageOutcome, TrainError> {
    let risk_neutral = cfg.is_risk_neutral();
    let active = preset.active_terms(risk_neutral);
    let mut weights = weights.unwrap_or_else(|| {
        WeightState::new(
            &active
                .iter()
                .map(|&n| (n, tc.initial_weights.get(n)))
                .collect::<Vec<_>>(),
            tc.dwa,
        )
    });
    let mut opt = opt.unwrap_or_else(|| OptimizerState::new(&params, tc.optimizer));
    let mut params = params;
    let mut history = Vec::with_capacity(epochs);

    let spec: Option<TrajectorySpec> = if active.contains(&"traj") {
        Some(make_trajectory_spec(
            cfg,
            tc.traj.n_x,
            tc.traj.n_s,
            &tc.traj.horizon_fractions,
            tc.traj.n_dt,
        ))
    } else {
        None
    };
    let mut batch = sample_batch(cfg, &tc.counts, derive_seed(seed, "collocation"));

    let lr0 = tc.optimizer.lr;
    let lr_min = lr0 * tc.optimizer.lr_decay.clamp(0.0, 1.0);
    for epoch in 0..epochs {
        // per-stage cosine schedule from lr0 down to lr_min
        let frac = epoch as f64 / epochs.saturating_sub(1).max(1) as f64;
        opt.cfg.lr = lr_min + (lr0 - lr_min) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
        if tc.resample_each_epoch && cfg.lambda > 0.0 && epoch > 0 {
            batch = sample_batch(
                cfg,
                &tc.counts,
                derive_seed(seed, &format!("collocation/{epoch}")),
            );
        }
        let losses = stage_losses(&batch, spec.as_ref(), cfg, tc);
        let mut raw = BTreeMap::new();
        let mut total = 0.0;
        let mut grad_total = GradientAccumulator::zeros_like(&params);
        let mut diverged = false;
        let mut terms = Vec::with_capacity(active.len());
        for &term in &active {
            let w = weights.weight(term);
            match losses.grad(term, &params) {
                Ok((value, mut g)) => {
                    raw.insert(term, value);
                    total += w * value;
                    g.scale(w);
                    grad_total.add(&g);
                    terms.push((term, value, w));
                }
                Err(DiffNetError::NonFinite { .. }) if term == "traj" => {
                    // Diverged rollout: surface +inf as a diagnostic and
                    // skip this epoch's update so a restart can recover.
                    diverged = true;
                    terms.push((term, f64::INFINITY, w));
                }
                Err(e) => return Err(e.into()),
            }
        }
        let mut grad_norm = 0.0;
        if diverged {
            total = f64::INFINITY;
        } else {
            grad_norm = grad_total.norm();
            if grad_norm > tc.grad_clip {
                grad_total.scale(tc.grad_clip / grad_norm);
            }
            adamw_step(&mut params, &grad_total, &mut opt);
        }
        weights.observe_initial(&raw);
        if tc.dwa.delta > 0 && epoch > 0 && epoch % tc.dwa.delta == 0 {
            dwa_update(&mut weights, &raw);
        }
        history.push(EpochRecord { epoch, terms, total, grad_norm });
    }
    Ok(StageOutcome {
        params,
        history,
        weights,
        opt,
    })
}

fn stage_losses<'a>(
    batch: &'a CollocationBatch,
    spec: Option<&'a TrajectorySpec>,
    cfg: &HJBConfig,
    tc: &TrainConfig,
) -> StageLosses<'a> {
    StageLosses {
        pde: PdeLoss { batch, cfg: *cfg },
        ic: IcLoss { batch, cfg: *cfg },
        sym: SymLoss { batch, cfg: *cfg },
        zero_term: ZeroTermLoss { batch },
        term_penalty: TermPenaltyLoss {
            batch,
            c: tc.term_penalty_c,
        },
        traj: spec.map(|spec| TrajLoss { spec, cfg: *cfg }),
    }
}

/// A labeled model snapshot taken after a curriculum stage.
#[derive(Debug)]
pub struct StageCheckpoint {
    pub label: String,
    pub lambda: f64,
    pub params: ModelParams,
}

#[derive(Debug)]
pub struct CurriculumOutcome {
    pub params: ModelParams,
    pub stages: Vec<StageCheckpoint>,
    pub history: Vec<(String, Vec<EpochRecord>)>,
}

/// Run the full training recipe for a preset.
///
/// Curriculum presets train phase A at `lambda = 0` on `(tau, X)` inputs,
/// warm start to `(tau, X, S)`, then walk the staged lambda schedule; the
/// vanilla preset trains the target lambda directly for the same total
/// epoch budget.
pub fn run_curriculum(
    preset: Preset,
    schedule: &CurriculumSchedule,
    cfg: &HJBConfig,
    seed: u64,
    tc: &TrainConfig,
) -> Result<CurriculumOutcome, TrainError> {
    schedule.validate()?;
    let lambda_star = schedule.lambda_star;
    let mut stages = Vec::new();
    let mut history = Vec::new();

    let affine = |dim: usize| tc.input_scaling.then(|| input_affine_for(cfg, dim));

    if !preset.uses_curriculum() {
        let input_dim = if lambda_star == 0.0 { 2 } else { 3 };
        let mut params = init_params(input_dim, &tc.widths, derive_seed(seed, "init"))?;
        params.input_affine = affine(input_dim);
        let total_epochs = schedule.phase_a_epochs
            + if lambda_star > 0.0 {
                schedule.fractions.len() * schedule.epochs_per_stage
            } else {
                0
            };
        let run_cfg = HJBConfig {
            lambda: lambda_star,
            ..*cfg
        };
        let out = train_stage(
            preset,
            params,
            &run_cfg,
            total_epochs,
            derive_seed(seed, "vanilla"),
            tc,
            None,
            None,
        )?;
        history.push(("vanilla".to_string(), out.history));
        stages.push(StageCheckpoint {
            label: "vanilla".to_string(),
            lambda: lambda_star,
            params: out.params.clone(),
        });
        return Ok(CurriculumOutcome {
            params: out.params,
            stages,
            history,
        });
    }

    // Phase A: risk-neutral, price-invariant inputs.
    let mut params = init_params(2, &tc.widths, derive_seed(seed, "init"))?;
    params.input_affine = affine(2);
    let phase_a_cfg = HJBConfig { lambda: 0.0, ..*cfg };
    let out = train_stage(
        preset,
        params,
        &phase_a_cfg,
        schedule.phase_a_epochs,
        derive_seed(seed, "phase_a"),
        tc,
        None,
        None,
    )?;
    history.push(("phase_a".to_string(), out.history));
    stages.push(StageCheckpoint {
        label: "phase_a".to_string(),
        lambda: 0.0,
        params: out.params.clone(),
    });
    let mut params = out.params;

    if lambda_star == 0.0 {
        return Ok(CurriculumOutcome {
            params,
            stages,
            history,
        });
    }

    // Phase B: widen to the price input and walk the lambda schedule,
    // warm-starting every stage from the previous one.
    params = warm_start_1d_to_2d(&params);
    if tc.input_scaling {
        params.input_affine = Some(input_affine_for(cfg, 3));
    }
    let mut weights: Option<WeightState> = None;
    for (k, &lambda_k) in schedule.stage_lambdas().iter().enumerate() {
        let stage_cfg = HJBConfig {
            lambda: lambda_k,
            ..*cfg
        };
        let label = format!("stage_{}", k + 1);
        // Optimizer moments restart per stage; the lambda change alters the
        // loss landscape. Weight values carry over, adaptation state resets.
        let ws = weights.take().map(|mut w| {
            w.reset_adaptation();
            w
        });
        let out = train_stage(
            preset,
            params,
            &stage_cfg,
            schedule.epochs_per_stage,
            derive_seed(seed, &label),
            tc,
            ws,
            None,
        )?;
        history.push((label.clone(), out.history));
        stages.push(StageCheckpoint {
            label,
            lambda: lambda_k,
            params: out.params.clone(),
        });
        params = out.params;
        weights = Some(out.weights);
    }

    Ok(CurriculumOutcome {
        params,
        stages,
        history,
    })
}

// ---------------------------------------------------------------------------
// Scale presets
// ---------------------------------------------------------------------------

/// Full-size settings: widths (500,500,500) for the baselines and
/// (32,32,32) for the MT-PINN, 30k collocation points, 30k + 5x5k epochs.
pub fn paper_scale(preset: Preset) -> (TrainConfig, CurriculumSchedule) {
    let widths = match preset {
        Preset::MtPinnCurriculum => vec![32, 32, 32],
        _ => vec![500, 500, 500],
    };
    let n_term = match preset {
        Preset::MtPinnCurriculum => 2000,
        _ => 5000,
    };
    (
        TrainConfig {
            widths,
            optimizer: AdamWConfig::default(),
            counts: SampleCounts {
                n_pde: 30_000,
                n_ic: 5000,
                n_term,
                n_zero_term: 2000,
            },
            resample_each_epoch: false,
            traj: TrajSettings {
                n_x: 41,
                n_s: 20,
                horizon_fractions: crate::sampler::BENCHMARK_HORIZON_FRACTIONS.to_vec(),
                n_dt: 200,
            },
            dwa: DwaConfig::default(),
            initial_weights: InitialWeights::default(),
            term_penalty_c: 100.0,
            input_scaling: false,
            grad_clip: f64::INFINITY,
        },
        CurriculumSchedule {
            lambda_star: 0.1,
            fractions: vec![0.25, 0.5, 0.75, 0.9, 1.0],
            epochs_per_stage: 5000,
            phase_a_epochs: 30_000,
        },
    )
}

/// Desk-size settings: everything shrunk so a full run finishes in minutes
/// on a laptop CPU. Widths (32,32,32), 3k collocation points, 3k + 5x1k
/// epochs, P = 82 rollout starts with 100 Euler steps.
pub fn desk_scale(_preset: Preset) -> (TrainConfig, CurriculumSchedule) {
    (
        TrainConfig {
            widths: vec![32, 32, 32],
            optimizer: AdamWConfig {
                lr: 2e-3,
                // faster second-moment tracking: the DWA weight jumps and
                // occasional rollout spikes destabilize beta2 = 0.999
                beta2: 0.99,
                ..AdamWConfig::default()
            },
            counts: SampleCounts {
                n_pde: 3000,
                n_ic: 500,
                n_term: 500,
                n_zero_term: 200,
            },
            // redraw the small desk batch each lambda stage epoch: a fixed
            // 3k-point set overfits and the stiffer risk-averse PDE fit
            // benefits from the sampling noise
            resample_each_epoch: true,
            traj: TrajSettings {
                n_x: 41,
                n_s: 2,
                // trimmed horizon set; the full 7-horizon benchmark grid is
                // paper-scale only
                horizon_fractions: vec![0.1, 0.4, 1.0],
                n_dt: 100,
            },
            dwa: DwaConfig::default(),
            initial_weights: InitialWeights::default(),
            term_penalty_c: 100.0,
            input_scaling: true,
            // lambda stages see rare 1e4-1e9 gradient spikes against a
            // ~1e2-1e3 baseline; cap them
            grad_clip: 1e3,
        },
        CurriculumSchedule {
            lambda_star: 0.1,
            fractions: vec![0.25, 0.5, 0.75, 0.9, 1.0],
            epochs_per_stage: 1000,
            phase_a_epochs: 3000,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_zero_gradient_identities() {
        let mut p = init_params(2, &[3], 0).unwrap();
        let orig = p.clone();
        let g = GradientAccumulator::zeros_like(&p);
        // zero decay: parameters unchanged
        let mut opt = OptimizerState::new(
            &p,
            AdamWConfig {
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
        );
        adamw_step(&mut p, &g, &mut opt);
        assert_eq!(p, orig);
        // decay d: parameters scaled by (1 - lr d) per step
        let lr = 5e-4;
        let d = 0.1;
        let mut p2 = orig.clone();
        let mut opt2 = OptimizerState::new(
            &p2,
            AdamWConfig {
                lr,
                weight_decay: d,
                ..AdamWConfig::default()
            },
        );
        adamw_step(&mut p2, &g, &mut opt2);
        for (a, b) in p2.layers[0].w.iter().zip(orig.layers[0].w.iter()) {
            approx::assert_relative_eq!(*a, b * (1.0 - lr * d), max_relative = 1e-12);
        }
    }

    #[test]
    fn adamw_converges_on_scalar_quadratic() {
        // minimize theta^2 / 2 for a single scalar parameter
        let mut p = ModelParams {
            input_dim: 2,
            layers: vec![Layer {
                w: ndarray::Array2::zeros((1, 2)),
                b: ndarray::arr1(&[1.0]),
            }],
            input_affine: None,
        };
        let mut opt = OptimizerState::new(
            &p,
            AdamWConfig {
                lr: 5e-3,
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
        );
        for _ in 0..1000 {
            let mut g = GradientAccumulator::zeros_like(&p);
            g.layers[0].b[0] = p.layers[0].b[0];
            adamw_step(&mut p, &g, &mut opt);
        }
        assert!(p.layers[0].b[0].abs() <= 1e-3, "theta = {}", p.layers[0].b[0]);
    }

    #[test]
    fn dwa_equal_losses_is_fixed_point() {
        let mut ws = WeightState::new(&[("pde", 1.0), ("traj", 1.0)], DwaConfig::default());
        let losses: BTreeMap<&'static str, f64> = [("pde", 2.0), ("traj", 2.0)].into();
        for _ in 0..5 {
            dwa_update(&mut ws, &losses);
        }
        approx::assert_relative_eq!(ws.weight("pde"), 1.0, max_relative = 1e-12);
        approx::assert_relative_eq!(ws.weight("traj"), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn dwa_clip_and_mean_one() {
        let cfg = DwaConfig {
            clip: (0.1, 2.0),
            ..DwaConfig::default()
        };
        let mut ws = WeightState::new(&[("pde", 1.9), ("traj", 0.2), ("ic", 0.9)], cfg);
        // strongly unequal relative losses push proposals past the clip
        let l0: BTreeMap<&'static str, f64> = [("pde", 1.0), ("traj", 1.0), ("ic", 1.0)].into();
        dwa_update(&mut ws, &l0);
        let l1: BTreeMap<&'static str, f64> = [("pde", 1e3), ("traj", 1e-3), ("ic", 1.0)].into();
        for _ in 0..10 {
            dwa_update(&mut ws, &l1);
            let active = ws.active_weights();
            let mean: f64 = active.iter().map(|(_, w)| w).sum::<f64>() / active.len() as f64;
            approx::assert_relative_eq!(mean, 1.0, epsilon = 1e-12);
            for (_, w) in &active {
                assert!(*w >= 0.1 - 1e-12 && *w <= 2.0 + 1e-12, "weight {w} outside clip");
            }
        }
    }

    #[test]
    fn dwa_freeze_after_consecutive_tiny_updates() {
        let cfg = DwaConfig {
            freeze_tol: 1e-4,
            freeze_updates: 3,
            ..DwaConfig::default()
        };
        let mut ws = WeightState::new(&[("pde", 1.0), ("sym", 1.0)], cfg);
        let warm: BTreeMap<&'static str, f64> = [("pde", 1.0), ("sym", 1.0)].into();
        dwa_update(&mut ws, &warm); // sets initial scales
        // sym collapses far below tolerance relative to its initial scale
        // the 0.95-EMA needs ~180 updates to decay below 1e-4
        let tiny: BTreeMap<&'static str, f64> = [("pde", 1.0), ("sym", 1e-12)].into();
        for _ in 0..300 {
            dwa_update(&mut ws, &tiny);
        }
        assert!(ws.is_frozen("sym"));
        assert!(!ws.is_frozen("pde"));
    }

    #[test]
    fn activation_matrix() {
        assert_eq!(
            Preset::MtPinnCurriculum.active_terms(true),
            vec!["pde", "traj", "ic", "sym"]
        );
        assert_eq!(
            Preset::MtPinnCurriculum.active_terms(false),
            vec!["pde", "traj", "ic", "sym", "zero_term"]
        );
        assert!(!Preset::Vanilla.active_terms(false).contains(&"traj"));
        assert!(Preset::Vanilla.active_terms(false).contains(&"term_penalty"));
        assert!(!Preset::MtPinnCurriculum.active_terms(false).contains(&"term_penalty"));
    }

    #[test]
    fn curriculum_schedule_lambdas() {
        let s = CurriculumSchedule {
            lambda_star: 0.1,
            fractions: vec![0.25, 0.5, 0.75, 0.9, 1.0],
            epochs_per_stage: 10,
            phase_a_epochs: 10,
        };
        s.validate().unwrap();
        let l = s.stage_lambdas();
        let expect = [0.025, 0.05, 0.075, 0.09, 0.1];
        for (a, b) in l.iter().zip(expect.iter()) {
            approx::assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        let bad = CurriculumSchedule {
            fractions: vec![0.5, 0.5, 1.0],
            ..s
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_epochs_leaves_params_unchanged() {
        let cfg = HJBConfig {
            kappa: 0.1,
            sigma: 0.1,
            lambda: 0.0,
            horizon_t: 5.0,
            x_range: (-10.0, 10.0),
            s_range: (10.0, 100.0),
        };
        let (mut tc, _) = desk_scale(Preset::MtPinnCurriculum);
        tc.counts.n_pde = 10;
        tc.counts.n_ic = 5;
        let p = init_params(2, &[4], 0).unwrap();
        let out = train_stage(Preset::MtPinnCurriculum, p.clone(), &cfg, 0, 1, &tc, None, None).unwrap();
        assert_eq!(out.params, p);
    }
}
