//! Experiment configuration: a single structured text file (TOML or JSON)
//! validated against the schema below. Unknown keys are rejected so that a
//! config diff is always meaningful provenance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{AmbientModel, ModelKind};
use crate::curvfunc::{Composite, CurvatureSpec, DeformSpec};
use crate::flow::{FlowConfig, PrescribedCurvature};
use crate::grid::{default_order, make_grid, BaseGrid, Field, StencilOrder, Topology};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config field {field}: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Flow,
    Imcf,
    Foliate,
    ValidateIdentities,
    ValidateConcavity,
    CheckBarrier,
    CheckDecay,
    CertConvex,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelCfg {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GridCfg {
    pub topology: Topology,
    pub resolution: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CurvatureCfg {
    pub f: String,
    #[serde(default = "default_phi")]
    pub phi: String,
}

fn default_phi() -> String {
    "id".to_string()
}

impl Default for CurvatureCfg {
    fn default() -> Self {
        CurvatureCfg {
            f: "H".into(),
            phi: "id".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum RhsCfg {
    Const { value: f64 },
    AffineX0 { base: f64, slope: f64 },
    NuTilt { base: f64, eps: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum InitialCfg {
    /// u ≡ value.
    Const { value: f64 },
    /// u = value + amplitude · Π_axes sin(mode_a · x_a).
    Sine {
        value: f64,
        amplitude: f64,
        mode: Vec<u32>,
    },
    /// u = value + amplitude · ½(3cos²θ − 1) (axisymmetric grids).
    Legendre2 { value: f64, amplitude: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FlowCfgIn {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_stationary: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polish: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FoliateCfg {
    pub taus: Vec<f64>,
    pub upper_barrier: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct IdentitiesCfg {
    pub dt_probe: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConcavityCfg {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_spread")]
    pub spread_floor: f64,
}

fn default_samples() -> usize {
    10_000
}

fn default_spread() -> f64 {
    1e-2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DecayCfg {
    pub x0_interval: [f64; 2],
    #[serde(default = "default_tau_samples")]
    pub n_tau_samples: usize,
}

fn default_tau_samples() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConvexCfg {
    pub x0_interval: [f64; 2],
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_points: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_x0_samples")]
    pub n_x0_samples: usize,
}

fn default_lambda_max() -> f64 {
    65536.0
}

fn default_x0_samples() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct OutputCfg {
    #[serde(default = "default_prefix")]
    pub prefix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot_monitor: Option<String>,
}

fn default_prefix() -> String {
    "run".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: ModelCfg,
    pub grid: GridCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<CurvatureCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<RhsCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowCfgIn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foliate: Option<FoliateCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identities: Option<IdentitiesCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concavity: Option<ConcavityCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convex: Option<ConvexCfg>,
    #[serde(default)]
    pub output: Option<OutputCfg>,
}

impl ExperimentConfig {
    /// Parses TOML (default) or JSON (when the text starts with '{').
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn output(&self) -> OutputCfg {
        self.output.clone().unwrap_or(OutputCfg {
            prefix: default_prefix(),
            plot_monitor: None,
        })
    }
}

/// Everything the dispatcher needs, validated and constructed.
pub struct RunPlan {
    pub model: Arc<AmbientModel>,
    pub grid: Arc<BaseGrid>,
    pub comp: Composite,
    pub rhs: Option<PrescribedCurvature>,
    pub initial: Option<Field>,
    pub flow: FlowConfig,
    pub polish: bool,
    pub newton_tol: f64,
}

pub fn build_model(cfg: &ModelCfg, topology: Topology) -> Result<Arc<AmbientModel>, ConfigError> {
    let kind = match cfg.id.as_str() {
        "lorentz-product" => ModelKind::LorentzProduct,
        "flrw-collapse" => {
            let t_final = cfg.t_final.ok_or(ConfigError::Invalid {
                field: "model.t-final",
                message: "flrw-collapse requires t-final > 0".into(),
            })?;
            if t_final <= 0.0 {
                return Err(ConfigError::Invalid {
                    field: "model.t-final",
                    message: format!("must be positive, got {t_final}"),
                });
            }
            ModelKind::FlrwCollapse { t_final }
        }
        "de-sitter" => ModelKind::DeSitter,
        "euclidean-polar" => ModelKind::EuclideanPolar,
        "hyperbolic-polar" => ModelKind::HyperbolicPolar,
        other => {
            return Err(ConfigError::Invalid {
                field: "model.id",
                message: format!("unknown model '{other}'"),
            })
        }
    };
    if kind != ModelKind::LorentzProduct
        && !matches!(kind, ModelKind::FlrwCollapse { .. })
        && cfg.t_final.is_some()
    {
        return Err(ConfigError::Invalid {
            field: "model.t-final",
            message: format!("{} takes no t-final parameter", cfg.id),
        });
    }
    AmbientModel::new(kind, topology)
        .map(Arc::new)
        .map_err(|e| ConfigError::Invalid {
            field: "model",
            message: e.to_string(),
        })
}

pub fn build_plan(
    cfg: &ExperimentConfig,
    resolution_override: Option<usize>,
) -> Result<RunPlan, ConfigError> {
    let order = match cfg.grid.order {
        None => default_order(cfg.grid.topology),
        Some(2) => StencilOrder::Two,
        Some(4) => StencilOrder::Four,
        Some(other) => {
            return Err(ConfigError::Invalid {
                field: "grid.order",
                message: format!("stencil order must be 2 or 4, got {other}"),
            })
        }
    };
    let mut res = match cfg.grid.resolution.as_slice() {
        [r] => [*r, *r],
        [a, b] => [*a, *b],
        _ => {
            return Err(ConfigError::Invalid {
                field: "grid.resolution",
                message: "expected one or two entries".into(),
            })
        }
    };
    if let Some(r) = resolution_override {
        res = [r, r];
    }
    let grid = make_grid(cfg.grid.topology, res, order).map_err(|e| ConfigError::Invalid {
        field: "grid.resolution",
        message: e.to_string(),
    })?;
    let grid = Arc::new(grid);
    let model = build_model(&cfg.model, cfg.grid.topology)?;

    let curvature = cfg.curvature.clone().unwrap_or_default();
    let fspec = CurvatureSpec::parse(&curvature.f).map_err(|e| ConfigError::Invalid {
        field: "curvature.f",
        message: e.to_string(),
    })?;
    let phi = DeformSpec::parse(&curvature.phi).map_err(|e| ConfigError::Invalid {
        field: "curvature.phi",
        message: e.to_string(),
    })?;
    let comp = Composite::new(fspec, phi);

    let rhs = cfg.rhs.as_ref().map(|r| match *r {
        RhsCfg::Const { value } => PrescribedCurvature::Const { value },
        RhsCfg::AffineX0 { base, slope } => PrescribedCurvature::AffineX0 { base, slope },
        RhsCfg::NuTilt { base, eps } => PrescribedCurvature::NuTilt { base, eps },
    });

    let initial = match &cfg.initial {
        None => None,
        Some(InitialCfg::Const { value }) => Some(Field::constant(grid.clone(), *value)),
        Some(InitialCfg::Sine {
            value,
            amplitude,
            mode,
        }) => {
            let axes = grid.storage_axes();
            if mode.len() != axes {
                return Err(ConfigError::Invalid {
                    field: "initial.mode",
                    message: format!("expected {axes} mode entries"),
                });
            }
            let mode = mode.clone();
            let (value, amplitude) = (*value, *amplitude);
            let f = Field::from_fn(grid.clone(), move |c| {
                let mut p = amplitude;
                for (a, m) in mode.iter().enumerate() {
                    p *= (*m as f64 * c[a]).sin();
                }
                value + p
            })
            .map_err(|e| ConfigError::Invalid {
                field: "initial",
                message: e.to_string(),
            })?;
            Some(f)
        }
        Some(InitialCfg::Legendre2 { value, amplitude }) => {
            if grid.topology() != Topology::SphereAxisym {
                return Err(ConfigError::Invalid {
                    field: "initial.kind",
                    message: "legendre2 requires the sphere-axisym grid".into(),
                });
            }
            let (value, amplitude) = (*value, *amplitude);
            let f = Field::from_fn(grid.clone(), move |c| {
                let ct = c[0].cos();
                value + amplitude * 0.5 * (3.0 * ct * ct - 1.0)
            })
            .map_err(|e| ConfigError::Invalid {
                field: "initial",
                message: e.to_string(),
            })?;
            Some(f)
        }
    };

    let fin = cfg.flow.clone().unwrap_or_default();
    let defaults = FlowConfig::default();
    let flow = FlowConfig {
        cfl: fin.cfl.unwrap_or(defaults.cfl),
        tol_stationary: fin.tol_stationary.unwrap_or(defaults.tol_stationary),
        max_steps: fin.max_steps.unwrap_or(defaults.max_steps),
        dt_min: fin.dt_min.unwrap_or(defaults.dt_min),
        dt_max: fin.dt_max.unwrap_or(defaults.dt_max),
        t_end: fin.t_end,
        output_every: fin.output_every.unwrap_or(defaults.output_every).max(1),
        monitors: true,
        h_floor: fin.h_floor.unwrap_or(defaults.h_floor),
        seed: cfg.seed(),
    };
    if !(flow.cfl > 0.0 && flow.cfl <= 0.5) {
        return Err(ConfigError::Invalid {
            field: "flow.cfl",
            message: format!("cfl must lie in (0, 0.5], got {}", flow.cfl),
        });
    }
    if flow.tol_stationary <= 0.0 {
        return Err(ConfigError::Invalid {
            field: "flow.tol-stationary",
            message: "tolerance must be positive".into(),
        });
    }

    Ok(RunPlan {
        model,
        grid,
        comp,
        rhs,
        initial,
        flow,
        polish: fin.polish.unwrap_or(false),
        newton_tol: fin.newton_tol.unwrap_or(1e-12),
    })
}
