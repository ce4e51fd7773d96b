//! Versioned JSON checkpoints for trained networks.

use anyhow::{bail, Context, Result};
use mtpinn_core::closed_form::HJBConfig;
use mtpinn_core::diffnet::{InputAffine, Layer, ModelParams};
use mtpinn_core::trainer::Preset;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: &str = "MTPINN-CKPT-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDump {
    pub rows: usize,
    pub cols: usize,
    /// Row-major weight matrix.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineDump {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

/// One trained model plus the regime it was trained for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub preset: Preset,
    /// Training-time regime; `lambda` is the stage's risk aversion.
    pub kappa: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub horizon_t: f64,
    pub x_range: [f64; 2],
    pub s_range: [f64; 2],
    pub input_dim: usize,
    pub widths: Vec<usize>,
    pub layers: Vec<LayerDump>,
    pub input_affine: Option<AffineDump>,
    /// Closed-form stub: evaluation uses the exact solution instead of a
    /// network (zero-error baseline for the report pipeline).
    #[serde(default)]
    pub exact: bool,
}

impl Checkpoint {
    pub fn new(preset: Preset, cfg: &HJBConfig, lambda: f64, params: &ModelParams) -> Self {
        Self {
            version: CHECKPOINT_VERSION.to_string(),
            preset,
            kappa: cfg.kappa,
            sigma: cfg.sigma,
            lambda,
            horizon_t: cfg.horizon_t,
            x_range: [cfg.x_range.0, cfg.x_range.1],
            s_range: [cfg.s_range.0, cfg.s_range.1],
            input_dim: params.input_dim,
            widths: params.widths(),
            layers: params
                .layers
                .iter()
                .map(|l| LayerDump {
                    rows: l.w.nrows(),
                    cols: l.w.ncols(),
                    w: l.w.iter().copied().collect(),
                    b: l.b.to_vec(),
                })
                .collect(),
            input_affine: params.input_affine.as_ref().map(|a| AffineDump {
                scale: a.scale.clone(),
                shift: a.shift.clone(),
            }),
            exact: false,
        }
    }

    /// A closed-form stub checkpoint for the given regime.
    pub fn new_exact(cfg: &HJBConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION.to_string(),
            preset: Preset::MtPinnCurriculum,
            kappa: cfg.kappa,
            sigma: cfg.sigma,
            lambda: cfg.lambda,
            horizon_t: cfg.horizon_t,
            x_range: [cfg.x_range.0, cfg.x_range.1],
            s_range: [cfg.s_range.0, cfg.s_range.1],
            input_dim: 3,
            widths: Vec::new(),
            layers: Vec::new(),
            input_affine: None,
            exact: true,
        }
    }

    /// The regime this model was trained at (with its stage lambda).
    pub fn hjb(&self) -> HJBConfig {
        HJBConfig {
            kappa: self.kappa,
            sigma: self.sigma,
            lambda: self.lambda,
            horizon_t: self.horizon_t,
            x_range: (self.x_range[0], self.x_range[1]),
            s_range: (self.s_range[0], self.s_range[1]),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        if self.exact {
            bail!("exact stub checkpoints carry no network parameters");
        }
        let layers = self
            .layers
            .iter()
            .map(|l| {
                if l.w.len() != l.rows * l.cols || l.b.len() != l.rows {
                    bail!("checkpoint layer shape mismatch");
                }
                Ok(Layer {
                    w: Array2::from_shape_vec((l.rows, l.cols), l.w.clone())
                        .context("weight shape")?,
                    b: Array1::from_vec(l.b.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams {
            input_dim: self.input_dim,
            layers,
            input_affine: self.input_affine.as_ref().map(|a| InputAffine {
                scale: a.scale.clone(),
                shift: a.shift.clone(),
            }),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading checkpoint {}", path.display()))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .with_context(|| format!("parsing checkpoint {}", path.display()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            bail!(
                "unsupported checkpoint version `{}` (expected `{CHECKPOINT_VERSION}`)",
                ckpt.version
            );
        }
        Ok(ckpt)
    }
}
