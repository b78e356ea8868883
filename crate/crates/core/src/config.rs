//! TOML experiment configuration. Unknown keys are rejected.
//!
//! ```toml
//! seed = 42
//! output_dir = "results"
//!
//! [source]
//! kind = "phantom"        # or "kcpx" with files = ["a.kcpx", ...]
//! count = 20
//! height = 256
//! width = 256
//! baseline_snr = 15.0     # reference SNR; 0 keeps references noiseless
//!
//! [sampling]
//! strategies = ["gradient", "random", "uniform"]
//! accelerations = [2.0, 5.0, 10.0]
//! acs_fractions = [0.25, 0.10, 0.04]
//!
//! [artifacts]
//! kinds = ["none", "noise", "motion", "noise+motion"]
//! noise_target_snr_factor = 0.5
//! motion_order = "linear"
//! [[artifacts.motion_events]]
//! onset = 0.6
//! rotation_deg = 5.0
//! shift = [3.0, 0.0]
//!
//! [[recon]]
//! name = "zero_filled"
//! method = "zero_filled"
//!
//! [[recon]]
//! name = "cascade"
//! method = "cascade"
//! k_stage = "hermitian_fill"
//! i_stage = "tv"
//! tv_lambda = 0.05
//! tv_steps = 10
//! iterations = 20
//!
//! [output]
//! write_images = false
//! ```
//!
//! An optional `[[cells]]` list (`strategy`, `acceleration`, `artifact`,
//! optional `acs_fraction`) replaces the full strategy x acceleration x
//! artifact product.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::artifacts::{MotionEvent, NoiseMode, OrderKind};
use crate::error::{Error, Result};
use crate::phantom::Ellipse;
use crate::recon::{CascadeConfig, IStage, KStage};
use crate::sampling::{MaskSpec, Strategy, DEFAULT_GRADIENT_POWER};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub source: SourceConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub artifacts: ArtifactConfig,
    #[serde(default = "default_recons")]
    pub recon: Vec<ReconEntry>,
    #[serde(default)]
    pub cells: Vec<CellEntry>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Phantom,
    Kcpx,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_size")]
    pub height: usize,
    #[serde(default = "default_size")]
    pub width: usize,
    #[serde(default = "default_baseline_snr")]
    pub baseline_snr: f64,
    /// Replaces the randomized brain phantoms with one fixed ellipse set.
    #[serde(default)]
    pub ellipses: Option<Vec<Ellipse>>,
    #[serde(default = "default_texture")]
    pub texture_amplitude: f64,
    #[serde(default)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_accelerations")]
    pub accelerations: Vec<f64>,
    /// Paired element-wise with `accelerations`; defaults to 25%, 10% and 4%
    /// for 2x, 5x and 10x.
    #[serde(default)]
    pub acs_fractions: Option<Vec<f64>>,
    #[serde(default = "default_gradient_power")]
    pub gradient_power: f64,
    #[serde(default)]
    pub per_image_masks: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            strategies: default_strategies(),
            accelerations: default_accelerations(),
            acs_fractions: None,
            gradient_power: DEFAULT_GRADIENT_POWER,
            per_image_masks: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
pub enum ArtifactKind {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "noise")]
    Noise,
    #[serde(rename = "motion")]
    Motion,
    #[serde(rename = "noise+motion")]
    NoiseMotion,
}

impl ArtifactKind {
    pub fn has_noise(self) -> bool {
        matches!(self, ArtifactKind::Noise | ArtifactKind::NoiseMotion)
    }

    pub fn has_motion(self) -> bool {
        matches!(self, ArtifactKind::Motion | ArtifactKind::NoiseMotion)
    }

    pub fn label(self) -> &'static str {
        match self {
            ArtifactKind::None => "none",
            ArtifactKind::Noise => "noise",
            ArtifactKind::Motion => "motion",
            ArtifactKind::NoiseMotion => "noise+motion",
        }
    }

    /// File-name safe label.
    pub fn slug(self) -> &'static str {
        match self {
            ArtifactKind::NoiseMotion => "noise-motion",
            other => other.label(),
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactConfig {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ArtifactKind>,
    #[serde(default)]
    pub noise_target_snr_factor: Option<f64>,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default)]
    pub motion_order: OrderKind,
    #[serde(default = "default_motion_events")]
    pub motion_events: Vec<MotionEvent>,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        ArtifactConfig {
            kinds: default_kinds(),
            noise_target_snr_factor: None,
            noise_sigma: None,
            motion_order: OrderKind::Linear,
            motion_events: default_motion_events(),
        }
    }
}

impl ArtifactConfig {
    pub fn noise_mode(&self) -> Result<NoiseMode> {
        match (self.noise_sigma, self.noise_target_snr_factor) {
            (Some(_), Some(_)) => Err(Error::Config(
                "set at most one of noise_sigma and noise_target_snr_factor".into(),
            )),
            (Some(s), None) => Ok(NoiseMode::Sigma(s)),
            (None, Some(f)) => Ok(NoiseMode::TargetSnrFactor(f)),
            (None, None) => Ok(NoiseMode::TargetSnrFactor(DEFAULT_NOISE_FACTOR)),
        }
    }
}

/// Strongest noise level: half the original SNR.
pub const DEFAULT_NOISE_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMethod {
    ZeroFilled,
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IStageKind {
    None,
    Tv,
    RealPositivity,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconEntry {
    pub name: String,
    pub method: ReconMethod,
    #[serde(default = "default_k_stage")]
    pub k_stage: KStage,
    #[serde(default = "default_i_stage")]
    pub i_stage: IStageKind,
    #[serde(default = "default_lambda")]
    pub tv_lambda: f64,
    #[serde(default = "default_tv_steps")]
    pub tv_steps: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

impl ReconEntry {
    pub fn cascade_config(&self) -> CascadeConfig {
        CascadeConfig {
            k_stage: self.k_stage,
            i_stage: match self.i_stage {
                IStageKind::None => IStage::None,
                IStageKind::Tv => IStage::TvDenoise { lambda: self.tv_lambda, steps: self.tv_steps },
                IStageKind::RealPositivity => IStage::RealPositivity,
            },
            iterations: self.iterations,
            record_diagnostics: false,
        }
    }

    pub fn zero_filled(name: &str) -> Self {
        ReconEntry {
            name: name.into(),
            method: ReconMethod::ZeroFilled,
            k_stage: KStage::ZeroFill,
            i_stage: IStageKind::None,
            tv_lambda: 0.0,
            tv_steps: 1,
            iterations: 1,
        }
    }

    pub fn default_cascade(name: &str) -> Self {
        ReconEntry {
            name: name.into(),
            method: ReconMethod::Cascade,
            k_stage: default_k_stage(),
            i_stage: default_i_stage(),
            tv_lambda: default_lambda(),
            tv_steps: default_tv_steps(),
            iterations: default_iterations(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellEntry {
    pub strategy: Strategy,
    pub acceleration: f64,
    #[serde(default)]
    pub acs_fraction: Option<f64>,
    #[serde(default = "default_artifact")]
    pub artifact: ArtifactKind,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub write_images: bool,
}

/// One (strategy, acceleration, artifact) combination of the experiment
/// matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    pub strategy: Strategy,
    pub acceleration: f64,
    pub acs_fraction: f64,
    pub artifact: ArtifactKind,
}

impl CellSpec {
    pub fn id(&self) -> String {
        format!("r{}_{}_{}", self.acceleration, self.strategy, self.artifact.slug())
    }

    pub fn mask_spec(&self, num_lines: usize, seed: u64, gradient_power: f64) -> MaskSpec {
        MaskSpec {
            gradient_power,
            ..MaskSpec::new(self.strategy, self.acceleration, self.acs_fraction, num_lines, seed)
        }
    }
}

fn acs_for(acceleration: f64, explicit: Option<f64>) -> Result<f64> {
    explicit
        .or_else(|| MaskSpec::default_acs_fraction(acceleration))
        .ok_or_else(|| {
            Error::Config(format!(
                "no default central-line fraction for {acceleration}x; set acs_fractions"
            ))
        })
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Cells in run order: the explicit `[[cells]]` list, or the product
    /// acceleration x strategy x artifact.
    pub fn cells(&self) -> Result<Vec<CellSpec>> {
        if !self.cells.is_empty() {
            return self
                .cells
                .iter()
                .map(|c| {
                    Ok(CellSpec {
                        strategy: c.strategy,
                        acceleration: c.acceleration,
                        acs_fraction: acs_for(c.acceleration, c.acs_fraction)?,
                        artifact: c.artifact,
                    })
                })
                .collect();
        }
        let s = &self.sampling;
        if let Some(f) = &s.acs_fractions {
            if f.len() != s.accelerations.len() {
                return Err(Error::Config("acs_fractions must pair one-to-one with accelerations".into()));
            }
        }
        let mut out = Vec::new();
        for (i, &acceleration) in s.accelerations.iter().enumerate() {
            let acs_fraction = acs_for(acceleration, s.acs_fractions.as_ref().map(|f| f[i]))?;
            for &strategy in &s.strategies {
                for &artifact in &self.artifacts.kinds {
                    out.push(CellSpec { strategy, acceleration, acs_fraction, artifact });
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.cells()?;
        if cells.is_empty() || self.recon.is_empty() {
            return Err(Error::Config("experiment matrix is empty".into()));
        }
        let src = &self.source;
        match src.kind {
            SourceKind::Phantom if src.count == 0 => {
                return Err(Error::Config("source.count must be positive".into()))
            }
            SourceKind::Kcpx if src.files.is_empty() => {
                return Err(Error::Config("source.files must list at least one kcpx file".into()))
            }
            _ => {}
        }
        if !(src.baseline_snr >= 0.0) {
            return Err(Error::Config("source.baseline_snr must be >= 0".into()));
        }
        let mut names: Vec<&str> = self.recon.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("recon names must be unique".into()));
        }
        for r in &self.recon {
            if r.name.is_empty() || !r.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::Config(format!("recon name {:?} must be [A-Za-z0-9_-]+", r.name)));
            }
            if r.method == ReconMethod::Cascade {
                r.cascade_config().validate().map_err(|e| Error::Config(format!("recon {}: {e}", r.name)))?;
            }
        }
        self.artifacts.noise_mode()?;
        Ok(())
    }
}

fn default_count() -> usize {
    20
}
fn default_size() -> usize {
    256
}
fn default_baseline_snr() -> f64 {
    15.0
}
fn default_texture() -> f64 {
    0.02
}
fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}
fn default_accelerations() -> Vec<f64> {
    vec![2.0, 5.0, 10.0]
}
fn default_gradient_power() -> f64 {
    DEFAULT_GRADIENT_POWER
}
fn default_kinds() -> Vec<ArtifactKind> {
    vec![ArtifactKind::None]
}
fn default_artifact() -> ArtifactKind {
    ArtifactKind::None
}
/// One mid-acquisition step: 5 degrees and 3 pixels along the readout.
pub fn default_motion_events() -> Vec<MotionEvent> {
    vec![MotionEvent { onset: 0.6, rotation_deg: 5.0, shift: [3.0, 0.0], transient: false }]
}
fn default_recons() -> Vec<ReconEntry> {
    vec![ReconEntry::zero_filled("zero_filled"), ReconEntry::default_cascade("cascade")]
}
fn default_k_stage() -> KStage {
    KStage::HermitianFill
}
fn default_i_stage() -> IStageKind {
    IStageKind::Tv
}
fn default_lambda() -> f64 {
    0.05
}
fn default_tv_steps() -> usize {
    10
}
fn default_iterations() -> usize {
    20
}
