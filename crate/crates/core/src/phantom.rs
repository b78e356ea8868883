//! Synthetic ellipse phantoms and subject/background masks.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{normalize01, ComplexImage, RealImage, MIN_DIM};
use crate::rng::{seeded, Stream};

/// One additive ellipse. Coordinates are normalized so that `[-1, 1]` spans
/// the image along each axis (x to the right, y downward); semi-axes are in
/// the same units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    #[serde(default)]
    pub rotation_deg: f64,
    pub intensity: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.center_x, y - self.center_y);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_x).powi(2) + (v / self.semi_y).powi(2) <= 1.0
    }

    fn area(&self) -> f64 {
        PI * self.semi_x * self.semi_y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub ellipses: Vec<Ellipse>,
    /// Relative amplitude of the smooth multiplicative texture; 0 disables it.
    #[serde(default)]
    pub texture_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Largest texture amplitude accepted, relative to the image maximum.
pub const MAX_TEXTURE_AMPLITUDE: f64 = 0.05;

impl PhantomSpec {
    /// Brain-like default: an outer head ellipse, two darker ventricles and a
    /// small bright lesion.
    pub fn brain(height: usize, width: usize) -> Self {
        PhantomSpec {
            height,
            width,
            ellipses: vec![
                Ellipse { center_x: 0.0, center_y: 0.0, semi_x: 0.69, semi_y: 0.92, rotation_deg: 0.0, intensity: 1.0 },
                Ellipse { center_x: -0.22, center_y: -0.05, semi_x: 0.11, semi_y: 0.31, rotation_deg: -18.0, intensity: -0.3 },
                Ellipse { center_x: 0.22, center_y: -0.05, semi_x: 0.16, semi_y: 0.41, rotation_deg: 18.0, intensity: -0.3 },
                Ellipse { center_x: 0.30, center_y: 0.50, semi_x: 0.09, semi_y: 0.07, rotation_deg: 0.0, intensity: 0.4 },
            ],
            texture_amplitude: 0.0,
            seed: 0,
        }
    }

    /// A seeded perturbation of [`PhantomSpec::brain`] with texture, used to
    /// build phantom suites that stand in for a cohort of subjects.
    pub fn brain_variant(height: usize, width: usize, seed: u64) -> Self {
        let mut spec = Self::brain(height, width);
        let mut rng = seeded(seed, Stream::PhantomJitter);
        for e in spec.ellipses.iter_mut() {
            e.center_x += rng.random_range(-0.03..0.03);
            e.center_y += rng.random_range(-0.03..0.03);
            e.semi_x *= rng.random_range(0.95..1.05);
            e.semi_y *= rng.random_range(0.95..1.05);
            e.rotation_deg += rng.random_range(-5.0..5.0);
            e.intensity *= rng.random_range(0.9..1.1);
        }
        spec.texture_amplitude = 0.02;
        spec.seed = seed;
        spec
    }

    fn validate(&self) -> Result<()> {
        if self.height < MIN_DIM || self.width < MIN_DIM {
            return Err(Error::validation(format!(
                "phantom must be at least {MIN_DIM}x{MIN_DIM}, got {}x{}",
                self.height, self.width
            )));
        }
        if self.ellipses.is_empty() {
            return Err(Error::validation("phantom spec needs at least one ellipse"));
        }
        for (i, e) in self.ellipses.iter().enumerate() {
            if !(-1.0..=1.0).contains(&e.center_x) || !(-1.0..=1.0).contains(&e.center_y) {
                return Err(Error::validation(format!("ellipse {i} centre outside [-1, 1]")));
            }
            if !(e.semi_x > 0.0 && e.semi_y > 0.0) || !e.intensity.is_finite() || !e.rotation_deg.is_finite() {
                return Err(Error::validation(format!("ellipse {i} has invalid geometry or intensity")));
            }
        }
        if !(0.0..=MAX_TEXTURE_AMPLITUDE).contains(&self.texture_amplitude) {
            return Err(Error::validation(format!(
                "texture amplitude must lie in [0, {MAX_TEXTURE_AMPLITUDE}]"
            )));
        }
        Ok(())
    }
}

/// Partition of the pixel grid into subject (foreground) and air
/// (background). Only the foreground is stored; the background is its
/// complement, so the two are disjoint and exhaustive by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPair {
    height: usize,
    width: usize,
    foreground: Vec<bool>,
}

impl MaskPair {
    pub fn new(height: usize, width: usize, foreground: Vec<bool>) -> Result<Self> {
        if foreground.len() != height * width {
            return Err(Error::validation("mask size does not match its dimensions"));
        }
        let n_fg = foreground.iter().filter(|&&f| f).count();
        if n_fg == 0 {
            return Err(Error::validation("foreground mask is empty"));
        }
        if n_fg == foreground.len() {
            return Err(Error::validation("background mask is empty"));
        }
        Ok(Self { height, width, foreground })
    }

    /// Every pixel foreground. The only way to build a pair with an empty
    /// background; SNR is undefined for it.
    pub fn whole_image(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::validation("mask must cover at least one pixel"));
        }
        Ok(Self { height, width, foreground: vec![true; height * width] })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn foreground(&self) -> &[bool] {
        &self.foreground
    }

    pub fn background(&self) -> Vec<bool> {
        self.foreground.iter().map(|&f| !f).collect()
    }

    pub fn foreground_count(&self) -> usize {
        self.foreground.iter().filter(|&&f| f).count()
    }

    pub fn background_count(&self) -> usize {
        self.foreground.len() - self.foreground_count()
    }

    /// Dice overlap between the two foregrounds.
    pub fn dice(&self, other: &MaskPair) -> f64 {
        let inter = self
            .foreground
            .iter()
            .zip(&other.foreground)
            .filter(|(a, b)| **a && **b)
            .count();
        2.0 * inter as f64 / (self.foreground_count() + other.foreground_count()) as f64
    }

    /// Foreground as a 0/1 weight image.
    pub fn foreground_image(&self) -> RealImage {
        RealImage::from_parts_unchecked(
            self.height,
            self.width,
            self.foreground.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect(),
        )
    }
}

/// Renders the ellipse sum, normalized to `[0, 1]`, with zero imaginary part.
/// The foreground is the interior of the largest-area ellipse.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(ComplexImage, MaskPair)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let outer = spec
        .ellipses
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.area().total_cmp(&b.1.area()).then(b.0.cmp(&a.0)))
        .map(|(_, e)| *e)
        .expect("non-empty");

    let mut values = vec![0.0; h * w];
    let mut fg = vec![false; h * w];
    for r in 0..h {
        let y = 2.0 * (r as f64 + 0.5) / h as f64 - 1.0;
        for c in 0..w {
            let x = 2.0 * (c as f64 + 0.5) / w as f64 - 1.0;
            values[r * w + c] = spec
                .ellipses
                .iter()
                .filter(|e| e.contains(x, y))
                .map(|e| e.intensity)
                .sum();
            fg[r * w + c] = outer.contains(x, y);
        }
    }

    if let Some(v) = values.iter().copied().find(|v| *v < -1e-12) {
        return Err(Error::validation(format!(
            "ellipse intensities sum to a negative value ({v})"
        )));
    }

    if spec.texture_amplitude > 0.0 {
        let texture = smooth_texture(h, w, spec.seed);
        for (v, t) in values.iter_mut().zip(texture) {
            if *v > 0.0 {
                *v *= 1.0 + spec.texture_amplitude * t;
            }
        }
    }

    let max = values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::validation("phantom has no positive intensity"));
    }
    let data = values
        .iter()
        .map(|&v| Complex64::new(v.max(0.0) / max, 0.0))
        .collect();
    let masks = MaskPair::new(h, w, fg)?;
    Ok((ComplexImage::new(h, w, data)?, masks))
}

/// Band-limited field in `[-1, 1]`: a sum of a few low-frequency cosines
/// with random orientation and phase.
fn smooth_texture(h: usize, w: usize, seed: u64) -> Vec<f64> {
    const TERMS: usize = 6;
    let mut rng = seeded(seed, Stream::Texture);
    let waves: Vec<(f64, f64, f64)> = (0..TERMS)
        .map(|_| {
            let cycles = rng.random_range(1.0..4.0);
            let angle = rng.random_range(0.0..PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            (cycles * angle.cos(), cycles * angle.sin(), phase)
        })
        .collect();
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        let y = r as f64 / h as f64;
        for c in 0..w {
            let x = c as f64 / w as f64;
            let s: f64 = waves
                .iter()
                .map(|(fx, fy, p)| (2.0 * PI * (fx * x + fy * y) + p).cos())
                .sum();
            out.push(s / TERMS as f64);
        }
    }
    out
}

const HISTOGRAM_BINS: usize = 256;

/// Subject mask from a magnitude image: between-class-variance (Otsu)
/// threshold on a 256-bin histogram, 3x3 closing, then the largest
/// 8-connected component.
pub fn estimate_foreground(img: &RealImage) -> Result<MaskPair> {
    let (h, w) = img.dims();
    if !(img.max() > img.min()) {
        return Err(Error::validation("no subject detected: image is constant"));
    }
    let norm = normalize01(img);
    let bins: Vec<usize> = norm
        .as_slice()
        .iter()
        .map(|&v| ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1))
        .collect();
    let threshold = otsu_bin(&bins);

    let raw: Vec<bool> = bins.iter().map(|&b| b > threshold).collect();
    let closed = erode3(&dilate3(&raw, h, w), h, w);
    let fg = largest_component(&closed, h, w);

    let n_fg = fg.iter().filter(|&&f| f).count();
    if n_fg == 0 {
        return Err(Error::validation("no subject detected"));
    }
    if n_fg == fg.len() {
        return Err(Error::validation(
            "no subject detected: background is empty after closing",
        ));
    }
    MaskPair::new(h, w, fg)
}

/// Last bin of the lower class.
fn otsu_bin(bins: &[usize]) -> usize {
    let mut hist = [0usize; HISTOGRAM_BINS];
    for &b in bins {
        hist[b] += 1;
    }
    let total = bins.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_var) = (0, f64::NEG_INFINITY);
    for (t, &n) in hist.iter().enumerate().take(HISTOGRAM_BINS - 1) {
        w0 += n as f64;
        sum0 += t as f64 * n as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1).powi(2);
        if var > best_var {
            best_var = var;
            best = t;
        }
    }
    best
}

fn dilate3(m: &[bool], h: usize, w: usize) -> Vec<bool> {
    morph3(m, h, w, false, |acc, v| acc || v, false)
}

// pixels outside the grid count as foreground, so closing never shrinks the set
fn erode3(m: &[bool], h: usize, w: usize) -> Vec<bool> {
    morph3(m, h, w, true, |acc, v| acc && v, true)
}

fn morph3(
    m: &[bool],
    h: usize,
    w: usize,
    outside: bool,
    op: impl Fn(bool, bool) -> bool,
    init: bool,
) -> Vec<bool> {
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = init;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    let v = if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        outside
                    } else {
                        m[rr as usize * w + cc as usize]
                    };
                    acc = op(acc, v);
                }
            }
            out[r * w + c] = acc;
        }
    }
    out
}

fn largest_component(m: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut label = vec![0usize; h * w];
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !m[start] || label[start] != 0 {
            continue;
        }
        let id = sizes.len();
        sizes.push(0);
        label[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            sizes[id] += 1;
            let (r, c) = ((p / w) as i64, (p % w) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    let q = rr as usize * w + cc as usize;
                    if m[q] && label[q] == 0 {
                        label[q] = id;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    // first-found wins ties
    let best = (1..sizes.len()).fold(0, |best, id| if sizes[id] > sizes[best] { id } else { best });
    label.iter().map(|&l| best != 0 && l == best).collect()
}
