//! Experiment configuration, read from JSON.

use crate::error::{CliError, Result};
use pat_core::forward::{LateralBoundary, PhantomSpec, Primitive};
use pat_core::masks::MaskSpec;
use pat_core::recon::ReconOptions;
use pat_core::WindowSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub phantom: PhantomConfig,
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub masks: Vec<MaskConfig>,
    #[serde(default)]
    pub recon: ReconConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    #[serde(default)]
    pub smooth_px: f64,
    pub primitives: Vec<PrimitiveConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrimitiveConfig {
    Ball { center: Vec<f64>, radius: f64, value: f64 },
    Cuboid { min: Vec<f64>, max: Vec<f64>, value: f64 },
    Segment { a: Vec<f64>, b: Vec<f64>, radius: f64, value: f64 },
    Gaussian { center: Vec<f64>, sigma: f64, amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Fourier,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lateral {
    Periodic,
    ZeroPad(usize),
}

impl Default for Lateral {
    fn default() -> Self {
        Lateral::ZeroPad(2)
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    #[serde(default)]
    pub engine: Engine,
    pub nt: usize,
    #[serde(default = "one")]
    pub sound_speed: f64,
    /// Defaults to the depth spacing over the sound speed.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub lateral: Lateral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr_db: f64,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskConfig {
    pub label: String,
    pub layout: LayoutConfig,
    #[serde(default)]
    pub n: Option<usize>,
    /// Standoff of the centre of interest, physical units.
    #[serde(default)]
    pub r0: Option<f64>,
    /// Lateral centre of interest, physical units.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub snap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayoutConfig {
    Full,
    Equispaced { intervals: Vec<usize> },
    Equiangular,
    Equisteradian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Gridding in time, and across the sensors when they are scattered.
    Nufft,
    /// Linear interpolation across sensors and along the frequency axis.
    Interp,
    /// Linear interpolation across sensors, gridding in time.
    GridNufft,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nufft => "nufft",
            Method::Interp => "interp",
            Method::GridNufft => "grid_nufft",
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Nufft]
}

fn default_upsample() -> usize {
    1
}

fn default_c() -> f64 {
    2.0
}

fn default_k() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default = "default_upsample")]
    pub upsample: usize,
    #[serde(default = "default_c")]
    pub oversampling: f64,
    #[serde(default = "default_k")]
    pub half_width: usize,
    #[serde(default)]
    pub axial_pad: Option<usize>,
    /// Store every reconstruction as an array file besides its preview.
    #[serde(default = "yes")]
    pub save_arrays: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            methods: default_methods(),
            depth: None,
            upsample: 1,
            oversampling: default_c(),
            half_width: default_k(),
            axial_pad: None,
            save_arrays: true,
        }
    }
}

impl ReconConfig {
    pub fn options(&self) -> ReconOptions {
        ReconOptions {
            window: WindowSpec::kaiser_bessel(self.oversampling, self.half_width),
            upsample: self.upsample,
            depth: self.depth,
            axial_pad: self.axial_pad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelStandard {
    /// The phantom itself.
    #[default]
    Phantom,
    /// The reconstruction from every grid node.
    FullGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscConfig {
    /// Pixel coordinates (row, column) of the evaluated image.
    pub center: [f64; 2],
    pub diameter: f64,
}

fn default_fraction() -> f64 {
    0.04
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default)]
    pub model: ModelStandard,
    /// Depth-axis projection is used for volumes.
    #[serde(default)]
    pub disc: Option<DiscConfig>,
    #[serde(default)]
    pub threshold: f64,
    /// Disc diameters, pixels, for the sweep at `sweep_threshold`.
    #[serde(default)]
    pub diameters: Vec<f64>,
    #[serde(default = "default_fraction")]
    pub sweep_threshold: f64,
    /// Pixel counts for the sweep inside `disc`.
    #[serde(default)]
    pub counts: Vec<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            model: ModelStandard::Phantom,
            disc: None,
            threshold: 0.0,
            diameters: Vec::new(),
            sweep_threshold: default_fraction(),
            counts: Vec::new(),
        }
    }
}

impl PrimitiveConfig {
    pub fn to_core(&self) -> Primitive {
        match self.clone() {
            PrimitiveConfig::Ball { center, radius, value } => Primitive::Ball { center, radius, value },
            PrimitiveConfig::Cuboid { min, max, value } => Primitive::Cuboid { min, max, value },
            PrimitiveConfig::Segment { a, b, radius, value } => Primitive::Segment { a, b, radius, value },
            PrimitiveConfig::Gaussian { center, sigma, amplitude } => Primitive::Gaussian { center, sigma, amplitude },
        }
    }
}

impl PhantomConfig {
    pub fn spec(&self) -> PhantomSpec {
        PhantomSpec {
            dims: self.dims.clone(),
            spacing: self.spacing.clone(),
            primitives: self.primitives.iter().map(PrimitiveConfig::to_core).collect(),
            smooth_px: self.smooth_px,
        }
    }
}

impl Lateral {
    pub fn to_core(self) -> LateralBoundary {
        match self {
            Lateral::Periodic => LateralBoundary::Periodic,
            Lateral::ZeroPad(k) => LateralBoundary::ZeroPad(k),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {}", self.schema_version));
        }
        let d = self.phantom.dims.len();
        if !(2..=3).contains(&d) || self.phantom.spacing.len() != d {
            return bad("phantom needs 2 or 3 dims with one spacing each".into());
        }
        if d == 3 && self.phantom.dims[0] != self.phantom.dims[1] {
            return bad("lateral dims of a volume must be equal".into());
        }
        if self.acquisition.nt == 0 || self.acquisition.nt % 2 == 1 {
            return bad("nt must be positive and even".into());
        }
        if self.acquisition.engine == Engine::Analytic {
            if d != 3 {
                return bad("the analytic engine is three dimensional".into());
            }
            if self.phantom.primitives.iter().any(|p| !matches!(p, PrimitiveConfig::Ball { .. })) {
                return bad("the analytic engine accepts ball primitives only".into());
            }
        }
        let mut labels = std::collections::HashSet::new();
        for m in &self.masks {
            if !labels.insert(&m.label) {
                return bad(format!("duplicate mask label {}", m.label));
            }
            let needs_geometry = !matches!(m.layout, LayoutConfig::Full);
            if needs_geometry && (m.n.is_none() || m.r0.is_none()) {
                return bad(format!("mask {} needs n and r0", m.label));
            }
        }
        if self.recon.methods.is_empty() {
            return bad("at least one reconstruction method is required".into());
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        let d = self.phantom.dims.len();
        self.acquisition.dt.unwrap_or(self.phantom.spacing[d - 1] / self.acquisition.sound_speed)
    }

    pub fn mask_spec(&self, m: &MaskConfig) -> MaskSpec {
        let d = self.phantom.dims.len();
        let mut spec = MaskSpec::new(d, self.phantom.dims[0], self.phantom.spacing[0], m.r0.unwrap_or(1.0), m.n.unwrap_or(1))
            .with_snap(m.snap);
        if let Some(c) = &m.center {
            spec.center = c.clone();
        }
        spec
    }
}
