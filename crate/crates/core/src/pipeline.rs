//! The degradation chain: motion, then noise, then line dropping, all on the
//! fully sampled k-space.

use crate::artifacts::{
    acquisition_order, add_gaussian_noise, calibrate_sigma, simulate_motion, MotionEvent, NoiseMode, OrderKind,
};
use crate::error::{Error, Result};
use crate::fft::ifft2c;
use crate::image::{magnitude, KSpace};
use crate::phantom::{estimate_foreground, MaskPair};
use crate::sampling::{apply_mask, make_mask, MaskSpec, SamplingMask};

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSpec {
    pub events: Vec<MotionEvent>,
    pub order: OrderKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskChoice {
    /// Keep every line.
    Full,
    Spec(MaskSpec),
    Fixed(SamplingMask),
}

/// Everything needed to degrade one fully sampled k-space.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationSpec {
    pub motion: Option<MotionSpec>,
    pub noise: Option<NoiseMode>,
    pub mask: MaskChoice,
    /// Seed of the noise draw. Experiments use `master_seed ^ image_index`.
    pub seed: u64,
    /// Subject masks for SNR-targeted noise. Estimated from the input when
    /// absent.
    pub subject: Option<MaskPair>,
}

impl DegradationSpec {
    /// No artifacts and no line dropping.
    pub fn identity() -> Self {
        DegradationSpec { motion: None, noise: None, mask: MaskChoice::Full, seed: 0, subject: None }
    }
}

/// Per-image seed used throughout experiments.
pub fn image_seed(master_seed: u64, image_index: usize) -> u64 {
    master_seed ^ image_index as u64
}

/// Applies motion (re-synthesising k-space from the transformed image
/// states), then additive noise, then the sampling mask.
pub fn degrade(k_full: &KSpace, spec: &DegradationSpec) -> Result<(KSpace, SamplingMask)> {
    let mut k = match &spec.motion {
        Some(m) if !m.events.is_empty() => {
            let img = ifft2c(k_full)?;
            let order = acquisition_order(k_full.height(), m.order)?;
            simulate_motion(&img, &m.events, &order)?
        }
        _ => k_full.clone(),
    };

    if let Some(mode) = spec.noise {
        let sigma = match mode {
            NoiseMode::Sigma(s) => s,
            NoiseMode::TargetSnrFactor(f) => {
                // calibrated on the clean input so that motion does not bias the level
                let subject = match &spec.subject {
                    Some(m) => m.clone(),
                    None => estimate_foreground(&magnitude(&ifft2c(k_full)?))?,
                };
                calibrate_sigma(k_full, &subject, f)?
            }
        };
        k = add_gaussian_noise(&k, sigma, spec.seed)?;
    }

    let mask = match &spec.mask {
        MaskChoice::Full => SamplingMask::full(k.height()),
        MaskChoice::Spec(s) => {
            if s.num_lines != k.height() {
                return Err(Error::validation(format!(
                    "mask spec covers {} lines but k-space has {} rows",
                    s.num_lines,
                    k.height()
                )));
            }
            make_mask(s)?
        }
        MaskChoice::Fixed(m) => m.clone(),
    };
    let k = apply_mask(&k, &mask)?;
    Ok((k, mask))
}
