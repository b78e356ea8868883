//! Image quality metrics.
//!
//! Reference-based metrics (PSNR, SSIM, SSIMf, MS-SSIM) expect images
//! normalized to `[0, 1]` with dynamic range 1. SNR and contrast are
//! reference-free and use a subject/background [`MaskPair`]. All standard
//! deviations use the unbiased `N - 1` estimator.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::RealImage;
use crate::phantom::MaskPair;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 300.0;

/// Standard MS-SSIM scale weights, finest first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, dynamic_range: 1.0 }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1D Gaussian taps; the 2D window is their outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let half = (self.window / 2) as f64;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.window == 0 || !(self.sigma > 0.0) {
            return Err(Error::validation("SSIM window must be odd with positive sigma"));
        }
        Ok(())
    }
}

fn same_dims(a: &RealImage, b: &RealImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::validation(format!(
            "image dimensions differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

pub fn mse(test: &RealImage, reference: &RealImage) -> Result<f64> {
    same_dims(test, reference)?;
    let n = test.as_slice().len() as f64;
    Ok(test
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
}

/// `10 log10(1 / MSE)` in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(test: &RealImage, reference: &RealImage) -> Result<f64> {
    let mse = mse(test, reference)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

// Half-sample symmetric reflection: -1 -> 0, n -> n - 1.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn blur(data: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let half = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        let row = &data[r * w..(r + 1) * w];
        for c in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * row[reflect(c as isize + t as isize - half, w)];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for (t, &k) in kernel.iter().enumerate() {
            let src = reflect(r as isize + t as isize - half, h);
            let src_row = &tmp[src * w..(src + 1) * w];
            let dst = &mut out[r * w..(r + 1) * w];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += k * s;
            }
        }
    }
    out
}

/// Luminance and contrast-structure maps; SSIM is their product.
struct SsimComponents {
    luminance: Vec<f64>,
    contrast_structure: Vec<f64>,
}

fn ssim_components(x: &RealImage, y: &RealImage, params: &SsimParams) -> Result<SsimComponents> {
    same_dims(x, y)?;
    params.validate()?;
    let (h, w) = x.dims();
    if h.min(w) < params.window {
        return Err(Error::validation(format!(
            "image of {h}x{w} is smaller than the {}-pixel SSIM window",
            params.window
        )));
    }
    let kernel = params.kernel();
    let (xs, ys) = (x.as_slice(), y.as_slice());
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a * b).collect();
    let mu_x = blur(xs, h, w, &kernel);
    let mu_y = blur(ys, h, w, &kernel);
    let e_xx = blur(&xx, h, w, &kernel);
    let e_yy = blur(&yy, h, w, &kernel);
    let e_xy = blur(&xy, h, w, &kernel);
    let (c1, c2) = (params.c1(), params.c2());

    let mut luminance = Vec::with_capacity(h * w);
    let mut contrast_structure = Vec::with_capacity(h * w);
    for i in 0..h * w {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        luminance.push((2.0 * mx * my + c1) / (mx * mx + my * my + c1));
        contrast_structure.push((2.0 * cov + c2) / (var_x + var_y + c2));
    }
    Ok(SsimComponents { luminance, contrast_structure })
}

/// Per-pixel SSIM with a Gaussian window and symmetric boundary reflection.
pub fn ssim_map(test: &RealImage, reference: &RealImage, params: &SsimParams) -> Result<RealImage> {
    let comp = ssim_components(test, reference, params)?;
    let data = comp
        .luminance
        .iter()
        .zip(&comp.contrast_structure)
        .map(|(l, cs)| l * cs)
        .collect();
    RealImage::new(test.height(), test.width(), data)
}

/// Mean of the SSIM map over the whole image.
pub fn ssim(test: &RealImage, reference: &RealImage, params: &SsimParams) -> Result<f64> {
    let map = ssim_map(test, reference, params)?;
    Ok(mean(map.as_slice()))
}

/// Mean of the SSIM map over the subject only.
pub fn ssimf(test: &RealImage, reference: &RealImage, masks: &MaskPair, params: &SsimParams) -> Result<f64> {
    if masks.dims() != test.dims() {
        return Err(Error::validation("mask dimensions do not match the image"));
    }
    let map = ssim_map(test, reference, params)?;
    let selected: Vec<f64> = select(map.as_slice(), masks.foreground());
    if selected.is_empty() {
        return Err(Error::validation("empty foreground"));
    }
    Ok(mean(&selected))
}

/// Number of dyadic scales usable for an image whose smaller side is
/// `min_dim`, capped at five.
pub fn ms_ssim_scales(min_dim: usize, window: usize) -> usize {
    let mut scales = 0;
    let mut d = min_dim;
    while scales < MS_SSIM_WEIGHTS.len() && d >= window {
        scales += 1;
        d /= 2;
    }
    scales
}

/// Five-scale MS-SSIM, or as many scales as the image size allows with the
/// leading weights renormalized.
pub fn ms_ssim(test: &RealImage, reference: &RealImage) -> Result<f64> {
    same_dims(test, reference)?;
    let params = SsimParams::default();
    let scales = ms_ssim_scales(test.height().min(test.width()), params.window);
    ms_ssim_with_scales(test, reference, &params, scales)
}

/// MS-SSIM over an explicit number of scales. Contrast-structure means are
/// taken at every scale but the coarsest, where the full SSIM mean is used;
/// all terms are floored at zero before exponentiation.
pub fn ms_ssim_with_scales(
    test: &RealImage,
    reference: &RealImage,
    params: &SsimParams,
    scales: usize,
) -> Result<f64> {
    same_dims(test, reference)?;
    if scales == 0 || scales > MS_SSIM_WEIGHTS.len() {
        return Err(Error::validation(format!(
            "MS-SSIM needs between 1 and {} scales, got {scales} (image too small?)",
            MS_SSIM_WEIGHTS.len()
        )));
    }
    let total: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let mut x = test.clone();
    let mut y = reference.clone();
    let mut value = 1.0;
    for (s, &w) in MS_SSIM_WEIGHTS[..scales].iter().enumerate() {
        let weight = w / total;
        let comp = ssim_components(&x, &y, params)?;
        let term = if s + 1 == scales {
            mean_of_products(&comp.luminance, &comp.contrast_structure)
        } else {
            mean(&comp.contrast_structure)
        };
        value *= term.max(0.0).powf(weight);
        if s + 1 < scales {
            x = downsample2(&x);
            y = downsample2(&y);
        }
    }
    Ok(value)
}

fn mean_of_products(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / a.len() as f64
}

/// 2x2 mean pooling; an odd trailing row or column is dropped.
fn downsample2(img: &RealImage) -> RealImage {
    let (h, w) = (img.height() / 2, img.width() / 2);
    let src = img.as_slice();
    let sw = img.width();
    let mut data = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (r0, c0) = (2 * r, 2 * c);
            data.push(
                0.25 * (src[r0 * sw + c0] + src[r0 * sw + c0 + 1] + src[(r0 + 1) * sw + c0] + src[(r0 + 1) * sw + c0 + 1]),
            );
        }
    }
    RealImage::from_parts_unchecked(h, w, data)
}

/// Reference-free SNR: mean over the subject divided by the standard
/// deviation over the background.
pub fn snr_rf(img: &RealImage, masks: &MaskPair) -> Result<f64> {
    if masks.dims() != img.dims() {
        return Err(Error::validation("mask dimensions do not match the image"));
    }
    let fg = select(img.as_slice(), masks.foreground());
    let bg = select(img.as_slice(), &masks.background());
    if fg.is_empty() || bg.len() < 2 {
        return Err(Error::validation("SNR needs a foreground and at least two background pixels"));
    }
    let sd = std_dev(&bg);
    if sd == 0.0 {
        return Err(Error::Numerical("noiseless background, SNR undefined".into()));
    }
    Ok(mean(&fg) / sd)
}

/// Standard deviation of the subject signal.
pub fn contrast(img: &RealImage, masks: &MaskPair) -> Result<f64> {
    if masks.dims() != img.dims() {
        return Err(Error::validation("mask dimensions do not match the image"));
    }
    let fg = select(img.as_slice(), masks.foreground());
    if fg.len() < 2 {
        return Err(Error::validation("contrast needs at least two foreground pixels"));
    }
    Ok(std_dev(&fg))
}

fn select(values: &[f64], keep: &[bool]) -> Vec<f64> {
    values.iter().zip(keep).filter(|(_, &k)| k).map(|(&v, _)| v).collect()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-pass unbiased standard deviation; zero for fewer than two values.
pub(crate) fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Metrics of one reconstructed image against its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub image_id: String,
    pub ssimf: f64,
    pub psnr_db: f64,
    pub ms_ssim: f64,
    /// `None` when the background is exactly noiseless.
    pub snr: Option<f64>,
    pub contrast: f64,
}

/// Mean and unbiased standard deviation of one metric column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        Some(Summary { mean: mean(values), std: std_dev(values), count: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub ssimf: Option<Summary>,
    pub psnr_db: Option<Summary>,
    pub ms_ssim: Option<Summary>,
    pub snr: Option<Summary>,
    pub contrast: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub images: Vec<ImageMetrics>,
}

pub const CSV_COLUMNS: [&str; 6] = ["image_id", "ssimf", "psnr_db", "ms_ssim", "snr", "contrast"];

impl MetricsReport {
    pub fn aggregate(&self) -> Aggregate {
        let col = |f: &dyn Fn(&ImageMetrics) -> Option<f64>| -> Option<Summary> {
            Summary::of(&self.images.iter().filter_map(f).collect::<Vec<_>>())
        };
        Aggregate {
            ssimf: col(&|m| Some(m.ssimf)),
            psnr_db: col(&|m| Some(m.psnr_db)),
            ms_ssim: col(&|m| Some(m.ms_ssim)),
            snr: col(&|m| m.snr),
            contrast: col(&|m| Some(m.contrast)),
        }
    }

    /// CSV with one row per image followed by `mean` and `std` rows. Undefined
    /// values are written as empty fields; floats use the shortest exact
    /// decimal representation.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Numerical(format!("csv encoding failed: {e}"));
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for m in &self.images {
            w.write_record([
                m.image_id.clone(),
                fmt(Some(m.ssimf)),
                fmt(Some(m.psnr_db)),
                fmt(Some(m.ms_ssim)),
                fmt(m.snr),
                fmt(Some(m.contrast)),
            ])
            .map_err(csv_err)?;
        }
        let agg = self.aggregate();
        let cols = [agg.ssimf, agg.psnr_db, agg.ms_ssim, agg.snr, agg.contrast];
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            let mut rec = vec![label.to_string()];
            rec.extend(cols.iter().map(|s| fmt(s.map(|s| if pick == 0 { s.mean } else { s.std }))));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv()?.as_bytes())
    }
}
