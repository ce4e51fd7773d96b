//! Run configuration: TOML schema, scale presets, and flag overrides.

use anyhow::{bail, Context, Result};
use mtpinn_core::closed_form::HJBConfig;
use mtpinn_core::sampler::SampleCounts;
use mtpinn_core::trainer::{
    desk_scale, paper_scale, AdamWConfig, CurriculumSchedule, DwaConfig, InitialWeights, Preset,
    TrainConfig, TrajSettings,
};
use serde::{Deserialize, Serialize};

/// Shipped scale profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Minutes on a laptop CPU.
    Desk,
    /// The full budget (500-wide baselines, 55k epochs); hours to days.
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => bail!("unknown scale `{other}` (expected `desk` or `paper`)"),
        }
    }
}

impl std::str::FromStr for PresetArg {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(PresetArg(Preset::Vanilla)),
            "pinn-curr" | "pinn_curriculum" => Ok(PresetArg(Preset::PinnCurriculum)),
            "mtpinn" | "mt_pinn_curriculum" => Ok(PresetArg(Preset::MtPinnCurriculum)),
            other => bail!("unknown preset `{other}` (expected `mtpinn`, `pinn-curr` or `vanilla`)"),
        }
    }
}

/// Newtype so clap can parse the preset names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetArg(pub Preset);

/// On-disk TOML schema. Every key is required; a missing key fails parsing
/// with the key named.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Preset,
    pub model: ModelSection,
    pub hjb: HjbSection,
    pub sampler: SamplerSection,
    pub dwa: DwaSection,
    pub curriculum: CurriculumSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub widths: Vec<usize>,
    pub input_scaling: bool,
    pub lr: f64,
    /// Per-stage cosine-decay floor as a fraction of `lr` (1.0 = constant).
    pub lr_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub weight_decay: f64,
    /// Global l2 gradient-norm cap (`inf` disables clipping).
    pub grad_clip: f64,
    pub term_penalty_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbSection {
    pub kappa: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub horizon_t: f64,
    pub x_range: [f64; 2],
    pub s_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub n_pde: usize,
    pub n_ic: usize,
    pub n_term: usize,
    pub n_zero_term: usize,
    pub resample_each_epoch: bool,
    pub traj_n_x: usize,
    pub traj_n_s: usize,
    pub traj_horizon_fractions: Vec<f64>,
    pub traj_n_dt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwaSection {
    pub beta: f64,
    pub alpha: f64,
    pub delta: usize,
    pub clip_min: f64,
    pub clip_max: f64,
    pub freeze_tol: f64,
    pub freeze_updates: u32,
    pub w_pde: f64,
    pub w_traj: f64,
    pub w_ic: f64,
    pub w_sym: f64,
    pub w_zero_term: f64,
    pub w_term_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumSection {
    pub fractions: Vec<f64>,
    pub epochs_per_stage: usize,
    pub phase_a_epochs: usize,
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub hjb: HJBConfig,
    pub train: TrainConfig,
    pub schedule: CurriculumSchedule,
}

impl FileConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// A complete config for a preset at a scale, as shipped defaults.
    pub fn for_scale(preset: Preset, scale: Scale) -> Self {
        let (tc, schedule) = match scale {
            Scale::Desk => desk_scale(preset),
            Scale::Paper => paper_scale(preset),
        };
        Self {
            preset,
            model: ModelSection {
                widths: tc.widths.clone(),
                input_scaling: tc.input_scaling,
                lr: tc.optimizer.lr,
                lr_decay: tc.optimizer.lr_decay,
                adam_beta1: tc.optimizer.beta1,
                adam_beta2: tc.optimizer.beta2,
                weight_decay: tc.optimizer.weight_decay,
                grad_clip: tc.grad_clip,
                term_penalty_c: tc.term_penalty_c,
            },
            hjb: HjbSection {
                kappa: 0.1,
                sigma: 0.1,
                lambda: schedule.lambda_star,
                horizon_t: 5.0,
                x_range: [-10.0, 10.0],
                s_range: [10.0, 100.0],
            },
            sampler: SamplerSection {
                n_pde: tc.counts.n_pde,
                n_ic: tc.counts.n_ic,
                n_term: tc.counts.n_term,
                n_zero_term: tc.counts.n_zero_term,
                resample_each_epoch: tc.resample_each_epoch,
                traj_n_x: tc.traj.n_x,
                traj_n_s: tc.traj.n_s,
                traj_horizon_fractions: tc.traj.horizon_fractions.clone(),
                traj_n_dt: tc.traj.n_dt,
            },
            dwa: DwaSection {
                beta: tc.dwa.beta,
                alpha: tc.dwa.alpha,
                delta: tc.dwa.delta,
                clip_min: tc.dwa.clip.0,
                clip_max: tc.dwa.clip.1,
                freeze_tol: tc.dwa.freeze_tol,
                freeze_updates: tc.dwa.freeze_updates,
                w_pde: tc.initial_weights.pde,
                w_traj: tc.initial_weights.traj,
                w_ic: tc.initial_weights.ic,
                w_sym: tc.initial_weights.sym,
                w_zero_term: tc.initial_weights.zero_term,
                w_term_penalty: tc.initial_weights.term_penalty,
            },
            curriculum: CurriculumSection {
                fractions: schedule.fractions.clone(),
                epochs_per_stage: schedule.epochs_per_stage,
                phase_a_epochs: schedule.phase_a_epochs,
            },
        }
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let hjb = HJBConfig {
            kappa: self.hjb.kappa,
            sigma: self.hjb.sigma,
            lambda: self.hjb.lambda,
            horizon_t: self.hjb.horizon_t,
            x_range: (self.hjb.x_range[0], self.hjb.x_range[1]),
            s_range: (self.hjb.s_range[0], self.hjb.s_range[1]),
        };
        hjb.validate()?;
        let train = TrainConfig {
            widths: self.model.widths.clone(),
            optimizer: AdamWConfig {
                lr: self.model.lr,
                lr_decay: self.model.lr_decay,
                beta1: self.model.adam_beta1,
                beta2: self.model.adam_beta2,
                weight_decay: self.model.weight_decay,
                ..AdamWConfig::default()
            },
            counts: SampleCounts {
                n_pde: self.sampler.n_pde,
                n_ic: self.sampler.n_ic,
                n_term: self.sampler.n_term,
                n_zero_term: self.sampler.n_zero_term,
            },
            resample_each_epoch: self.sampler.resample_each_epoch,
            traj: TrajSettings {
                n_x: self.sampler.traj_n_x,
                n_s: self.sampler.traj_n_s,
                horizon_fractions: self.sampler.traj_horizon_fractions.clone(),
                n_dt: self.sampler.traj_n_dt,
            },
            dwa: DwaConfig {
                beta: self.dwa.beta,
                alpha: self.dwa.alpha,
                delta: self.dwa.delta,
                clip: (self.dwa.clip_min, self.dwa.clip_max),
                freeze_tol: self.dwa.freeze_tol,
                freeze_updates: self.dwa.freeze_updates,
            },
            initial_weights: InitialWeights {
                pde: self.dwa.w_pde,
                traj: self.dwa.w_traj,
                ic: self.dwa.w_ic,
                sym: self.dwa.w_sym,
                zero_term: self.dwa.w_zero_term,
                term_penalty: self.dwa.w_term_penalty,
            },
            term_penalty_c: self.model.term_penalty_c,
            input_scaling: self.model.input_scaling,
            grad_clip: self.model.grad_clip,
        };
        let schedule = CurriculumSchedule {
            lambda_star: self.hjb.lambda,
            fractions: self.curriculum.fractions.clone(),
            epochs_per_stage: self.curriculum.epochs_per_stage,
            phase_a_epochs: self.curriculum.phase_a_epochs,
        };
        Ok(RunConfig {
            preset: self.preset,
            hjb,
            train,
            schedule,
        })
    }
}
