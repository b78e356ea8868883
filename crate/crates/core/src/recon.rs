//! Reconstruction from under-sampled k-space.
//!
//! The cascade alternates a k-space stage that fills missing lines, a
//! data-consistency projection that reinstates every acquired line, an
//! inverse transform and an image-domain stage. One iteration is a single
//! feed-forward pass; more iterations turn it into a POCS-style scheme.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft2c, ifft2c};
use crate::image::{magnitude, normalize01, ComplexImage, KSpace, RealImage};
use crate::metrics::{self, ImageMetrics, MetricsReport, SsimParams};
use crate::phantom::MaskPair;
use crate::sampling::{apply_mask, data_consistency, SamplingMask};

/// Zero-filled baseline: inverse transform with dropped lines set to zero.
pub fn zero_filled(k_acq: &KSpace, mask: &SamplingMask) -> Result<ComplexImage> {
    ifft2c(&apply_mask(k_acq, mask)?)
}

/// Row reflected through DC, wrapping periodically (an even-sized grid's
/// first row is its own partner).
fn partner(i: usize, n: usize) -> usize {
    (2 * (n / 2) + n - i) % n
}

/// Fills each dropped line whose point-reflected partner line was acquired
/// with the conjugate of the reflected partner samples. The spectrum of a
/// real image satisfies `X(-k) = conj(X(k))`, so the fill is exact there.
pub fn hermitian_fill(k: &KSpace, mask: &SamplingMask) -> Result<KSpace> {
    let (h, w) = k.dims();
    if mask.len() != h {
        return Err(Error::validation(format!(
            "mask has {} lines but k-space has {h} rows",
            mask.len()
        )));
    }
    let keep = mask.keep();
    let mut out = k.clone();
    for line in 0..h {
        let p = partner(line, h);
        if keep[line] || !keep[p] {
            continue;
        }
        let src = k.row(p);
        for (v, z) in out.row_mut(line).iter_mut().enumerate() {
            *z = src[partner(v, w)].conj();
        }
    }
    Ok(out)
}

pub const TV_STEP: f64 = 0.1;
pub const TV_EPSILON: f64 = 1e-6;
const TV_MAX_HALVINGS: usize = 40;

fn tv_objective(m: &[f64], m0: &[f64], h: usize, w: usize, lambda: f64) -> f64 {
    let mut fidelity = 0.0;
    let mut tv = 0.0;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            fidelity += 0.5 * (m[i] - m0[i]).powi(2);
            let gx = if c + 1 < w { m[i + 1] - m[i] } else { 0.0 };
            let gy = if r + 1 < h { m[i + w] - m[i] } else { 0.0 };
            tv += (gx * gx + gy * gy + TV_EPSILON).sqrt();
        }
    }
    fidelity + lambda * tv
}

fn tv_gradient(m: &[f64], m0: &[f64], h: usize, w: usize, lambda: f64) -> Vec<f64> {
    let mut px = vec![0.0; h * w];
    let mut py = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let gx = if c + 1 < w { m[i + 1] - m[i] } else { 0.0 };
            let gy = if r + 1 < h { m[i + w] - m[i] } else { 0.0 };
            let norm = (gx * gx + gy * gy + TV_EPSILON).sqrt();
            px[i] = gx / norm;
            py[i] = gy / norm;
        }
    }
    let mut g = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            // adjoint of the forward difference is the negative backward divergence
            let mut div = px[i] + py[i];
            if c > 0 {
                div -= px[i - 1];
            }
            if r > 0 {
                div -= py[i - w];
            }
            g[i] = (m[i] - m0[i]) - lambda * div;
        }
    }
    g
}

/// Result of [`tv_denoise_traced`]: the denoised image and the objective
/// value before the first step and after every step.
#[derive(Debug, Clone)]
pub struct TvTrace {
    pub image: ComplexImage,
    pub objective: Vec<f64>,
}

/// Smoothed isotropic TV denoising of the magnitude, phase preserved.
pub fn tv_denoise(img: &ComplexImage, lambda: f64, steps: usize) -> Result<ComplexImage> {
    tv_denoise_traced(img, lambda, steps).map(|t| t.image)
}

/// Projected gradient descent on `0.5 |m - m0|^2 + lambda * TV_eps(m)` over
/// non-negative magnitudes `m`. Each step uses [`TV_STEP`] unless that would
/// raise the objective, in which case the step is halved until it does not.
pub fn tv_denoise_traced(img: &ComplexImage, lambda: f64, steps: usize) -> Result<TvTrace> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::validation(format!("TV weight must be >= 0, got {lambda}")));
    }
    if steps == 0 {
        return Err(Error::validation("TV denoising needs at least one step"));
    }
    let (h, w) = img.dims();
    let m0: Vec<f64> = img.as_slice().iter().map(|z| z.norm()).collect();
    let mut m = m0.clone();
    let mut f = tv_objective(&m, &m0, h, w, lambda);
    let mut objective = vec![f];
    if lambda == 0.0 {
        objective.resize(steps + 1, f);
        return Ok(TvTrace { image: img.clone(), objective });
    }

    for _ in 0..steps {
        let g = tv_gradient(&m, &m0, h, w, lambda);
        let mut tau = TV_STEP;
        let mut accepted = None;
        for _ in 0..TV_MAX_HALVINGS {
            let trial: Vec<f64> = m.iter().zip(&g).map(|(v, d)| (v - tau * d).max(0.0)).collect();
            let ft = tv_objective(&trial, &m0, h, w, lambda);
            if ft <= f {
                accepted = Some((trial, ft));
                break;
            }
            tau *= 0.5;
        }
        if let Some((trial, ft)) = accepted {
            m = trial;
            f = ft;
        }
        objective.push(f);
    }

    let data = img
        .as_slice()
        .iter()
        .zip(&m)
        .map(|(z, &mag)| {
            let r = z.norm();
            if r > 0.0 {
                z * (mag / r)
            } else {
                Complex64::new(mag, 0.0)
            }
        })
        .collect();
    Ok(TvTrace { image: ComplexImage::new(h, w, data)?, objective })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KStage {
    /// Leaves missing lines as they are.
    #[default]
    ZeroFill,
    HermitianFill,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IStage {
    #[default]
    None,
    TvDenoise { lambda: f64, steps: usize },
    /// Projects onto real, non-negative images.
    RealPositivity,
}

pub const MAX_ITERATIONS: usize = 500;
/// Image-change norm, relative to the zero-filled image norm, treated as
/// divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeConfig {
    pub k_stage: KStage,
    pub i_stage: IStage,
    pub iterations: usize,
    pub record_diagnostics: bool,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            k_stage: KStage::HermitianFill,
            i_stage: IStage::TvDenoise { lambda: 0.05, steps: 10 },
            iterations: 20,
            record_diagnostics: false,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.iterations > MAX_ITERATIONS {
            return Err(Error::validation(format!(
                "cascade iterations must lie in 1..={MAX_ITERATIONS}, got {}",
                self.iterations
            )));
        }
        if let IStage::TvDenoise { lambda, steps } = self.i_stage {
            if !(lambda >= 0.0) || steps == 0 {
                return Err(Error::validation("TV stage needs lambda >= 0 and steps >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// `|M (k_i - k_acq)|_2` after the image stage, before the next projection.
    pub dc_residual: f64,
    pub image_change: f64,
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    pub image: ComplexImage,
    pub final_k: KSpace,
    pub diagnostics: Vec<IterationDiagnostics>,
}

impl ReconResult {
    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from("iteration,dc_residual,image_change\n");
        for d in &self.diagnostics {
            s.push_str(&format!("{},{},{}\n", d.iteration, d.dc_residual, d.image_change));
        }
        s
    }
}

fn masked_residual(k: &KSpace, acquired: &KSpace, mask: &SamplingMask) -> f64 {
    mask.keep()
        .iter()
        .enumerate()
        .filter(|(_, &keep)| keep)
        .map(|(r, _)| {
            k.row(r)
                .iter()
                .zip(acquired.row(r))
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

fn difference_norm(a: &ComplexImage, b: &ComplexImage) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn image_stage(x: ComplexImage, stage: IStage) -> Result<ComplexImage> {
    match stage {
        IStage::None => Ok(x),
        IStage::TvDenoise { lambda, steps } => tv_denoise(&x, lambda, steps),
        IStage::RealPositivity => {
            let (h, w) = x.dims();
            let data = x.into_vec().into_iter().map(|z| Complex64::new(z.re.max(0.0), 0.0)).collect();
            Ok(ComplexImage::from_parts_unchecked(h, w, data))
        }
    }
}

/// Runs the cascade. The acquired lines are re-inserted once more before the
/// final inverse transform, so kept lines of `final_k` always equal the
/// acquisition bit for bit.
pub fn cascade_run(k_acq: &KSpace, mask: &SamplingMask, cfg: &CascadeConfig) -> Result<ReconResult> {
    cfg.validate()?;
    let acquired = apply_mask(k_acq, mask)?;
    let baseline = ifft2c(&acquired)?;
    let baseline_norm = baseline.energy().sqrt();

    let mut k = acquired.clone();
    let mut previous = baseline;
    let mut diagnostics = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        if cfg.k_stage == KStage::HermitianFill {
            k = hermitian_fill(&k, mask)?;
        }
        k = data_consistency(&k, &acquired, mask)?;
        let x = image_stage(ifft2c(&k)?, cfg.i_stage)?;
        k = fft2c(&x)?;

        let diag = IterationDiagnostics {
            iteration,
            dc_residual: masked_residual(&k, &acquired, mask),
            image_change: difference_norm(&x, &previous),
        };
        diagnostics.push(diag);
        if baseline_norm > 0.0 && !(diag.image_change <= DIVERGENCE_FACTOR * baseline_norm) {
            let mut dump = String::from("iteration,dc_residual,image_change\n");
            for d in &diagnostics {
                dump.push_str(&format!("{},{},{}\n", d.iteration, d.dc_residual, d.image_change));
            }
            return Err(Error::Divergence { iteration, dump });
        }
        previous = x;
    }

    let final_k = data_consistency(&k, &acquired, mask)?;
    let image = ifft2c(&final_k)?;
    if !cfg.record_diagnostics {
        diagnostics.clear();
    }
    Ok(ReconResult { image, final_k, diagnostics })
}

/// Scores one reconstruction against its reference. Both magnitudes are
/// normalized to `[0, 1]` for the reference-based metrics and for contrast;
/// SNR is computed on the raw reconstruction magnitude and is `None` when the
/// background is exactly noiseless.
pub fn score_image(
    image_id: impl Into<String>,
    recon: &ComplexImage,
    reference: &ComplexImage,
    masks: &MaskPair,
) -> Result<ImageMetrics> {
    if recon.dims() != reference.dims() {
        return Err(Error::validation(format!(
            "reconstruction is {:?} but reference is {:?}",
            recon.dims(),
            reference.dims()
        )));
    }
    let raw: RealImage = magnitude(recon);
    let test = normalize01(&raw);
    let truth = normalize01(&magnitude(reference));
    let params = SsimParams::default();
    let snr = match metrics::snr_rf(&raw, masks) {
        Ok(v) => Some(v),
        Err(Error::Numerical(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ImageMetrics {
        image_id: image_id.into(),
        ssimf: metrics::ssimf(&test, &truth, masks, &params)?,
        psnr_db: metrics::psnr(&test, &truth)?,
        ms_ssim: metrics::ms_ssim(&test, &truth)?,
        snr,
        contrast: metrics::contrast(&test, masks)?,
    })
}

/// Scores a batch of externally produced reconstructions with the same
/// metric pipeline as the built-in reconstructors.
pub fn evaluate_external(
    recon_images: &[ComplexImage],
    refs: &[ComplexImage],
    masks: &[MaskPair],
) -> Result<MetricsReport> {
    if recon_images.len() != refs.len() || refs.len() != masks.len() {
        return Err(Error::validation(format!(
            "batch sizes differ: {} reconstructions, {} references, {} masks",
            recon_images.len(),
            refs.len(),
            masks.len()
        )));
    }
    let images = recon_images
        .iter()
        .zip(refs)
        .zip(masks)
        .enumerate()
        .map(|(i, ((x, r), m))| score_image(i.to_string(), x, r, m))
        .collect::<Result<_>>()?;
    Ok(MetricsReport { images })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partner_rows() {
        assert_eq!(partner(0, 8), 0);
        assert_eq!(partner(1, 8), 7);
        assert_eq!(partner(4, 8), 4);
        assert_eq!(partner(0, 9), 8);
        assert_eq!(partner(4, 9), 4);
    }

    #[test]
    fn tv_zero_weight_is_identity() {
        let img = ComplexImage::from_fn(12, 12, |r, c| Complex64::new(r as f64, c as f64 - 3.0)).unwrap();
        let out = tv_denoise(&img, 0.0, 5).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn tv_preserves_phase() {
        let img = ComplexImage::from_fn(16, 16, |r, c| Complex64::from_polar(1.0 + ((r * c) % 5) as f64, 0.3 * r as f64)).unwrap();
        let out = tv_denoise(&img, 0.1, 5).unwrap();
        for (a, b) in img.as_slice().iter().zip(out.as_slice()) {
            if b.norm() > 1e-9 {
                assert!((a.arg() - b.arg()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = CascadeConfig { iterations: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = CascadeConfig { iterations: 501, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = CascadeConfig { i_stage: IStage::TvDenoise { lambda: -1.0, steps: 2 }, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn batch_size_mismatch() {
        let x = ComplexImage::zeros(16, 16).unwrap();
        assert!(evaluate_external(&[x.clone()], &[], &[]).is_err());
    }
}
