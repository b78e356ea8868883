//! k-space degradations: complex Gaussian noise and rigid in-plane motion.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft2c, ifft2c};
use crate::image::{ComplexImage, KSpace, RealImage};
use crate::metrics::snr_rf;
use crate::phantom::MaskPair;
use crate::rng::{seeded, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseMode {
    /// Absolute per-component standard deviation in k-space units.
    Sigma(f64),
    /// Desired ratio of degraded to original image SNR, in `(0, 1]`.
    TargetSnrFactor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            NoiseMode::Sigma(s) if !(s >= 0.0 && s.is_finite()) => {
                Err(Error::validation(format!("noise sigma must be finite and >= 0, got {s}")))
            }
            NoiseMode::TargetSnrFactor(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::validation(format!("target SNR factor must lie in (0, 1], got {f}")))
            }
            _ => Ok(()),
        }
    }
}

/// Unit-variance complex noise field: real and imaginary parts independent
/// standard normals.
fn unit_noise(len: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = seeded(seed, Stream::Noise);
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect()
}

/// Adds i.i.d. `N(0, sigma^2)` noise to the real and imaginary part of every
/// sample. `sigma == 0` returns the input unchanged.
pub fn add_gaussian_noise(k: &KSpace, sigma: f64, seed: u64) -> Result<KSpace> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::validation(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(k.clone());
    }
    let noise = unit_noise(k.as_slice().len(), seed);
    let data = k.as_slice().iter().zip(noise).map(|(z, n)| z + n * sigma).collect();
    KSpace::new(k.height(), k.width(), data)
}

/// Noise seeds averaged by the calibration objective.
pub const CALIBRATION_SEEDS: [u64; 8] = [
    0x00c0_ffee_0001,
    0x00c0_ffee_0002,
    0x00c0_ffee_0003,
    0x00c0_ffee_0004,
    0x00c0_ffee_0005,
    0x00c0_ffee_0006,
    0x00c0_ffee_0007,
    0x00c0_ffee_0008,
];
pub const CALIBRATION_MAX_ITERATIONS: usize = 60;
/// Bisection stops once the objective is this close to the target.
const CALIBRATION_STOP: f64 = 0.002;
/// Worst relative error accepted from a terminated bisection.
pub const CALIBRATION_TOLERANCE: f64 = 0.02;

/// Sigma that lowers the image SNR to `target_factor` times the SNR of
/// `|ifft2c(k)|`, averaged over [`CALIBRATION_SEEDS`].
pub fn calibrate_sigma(k: &KSpace, masks: &MaskPair, target_factor: f64) -> Result<f64> {
    if !(target_factor > 0.0 && target_factor <= 1.0) {
        return Err(Error::validation(format!(
            "target SNR factor must lie in (0, 1], got {target_factor}"
        )));
    }
    let original = snr_rf(&crate::image::magnitude(&ifft2c(k)?), masks)?;
    if target_factor == 1.0 {
        return Ok(0.0);
    }
    calibrate_sigma_for_snr(k, masks, target_factor * original)
}

/// Sigma at which the mean post-noise SNR equals `target_snr`, found by
/// bisection on `[0, rms(k)]`. Works on noiseless inputs, whose SNR is
/// unbounded.
pub fn calibrate_sigma_for_snr(k: &KSpace, masks: &MaskPair, target_snr: f64) -> Result<f64> {
    if !(target_snr > 0.0 && target_snr.is_finite()) {
        return Err(Error::validation(format!("target SNR must be positive, got {target_snr}")));
    }
    if masks.dims() != k.dims() {
        return Err(Error::validation("mask dimensions do not match k-space"));
    }
    let clean = ifft2c(k)?;
    let (h, w) = k.dims();
    // noise is linear and the transform unitary, so each seed's image-domain
    // field is computed once and scaled per evaluation
    let fields: Vec<Vec<Complex64>> = CALIBRATION_SEEDS
        .iter()
        .map(|&s| {
            let n = KSpace::from_parts_unchecked(h, w, unit_noise(h * w, s));
            ifft2c(&n).map(ComplexImage::into_vec)
        })
        .collect::<Result<_>>()?;

    let objective = |sigma: f64| -> Result<f64> {
        let mut total = 0.0;
        for field in &fields {
            let mag: Vec<f64> = clean
                .as_slice()
                .iter()
                .zip(field)
                .map(|(x, n)| (x + n * sigma).norm())
                .collect();
            total += snr_rf(&RealImage::new(h, w, mag)?, masks)?;
        }
        Ok(total / fields.len() as f64)
    };

    let rms = (k.energy() / (h * w) as f64).sqrt();
    let (mut lo, mut hi) = (0.0, rms);
    if objective(hi)? > target_snr {
        return Err(Error::Calibration { iterations: 0, lo, hi });
    }
    let mut best = (f64::INFINITY, hi);
    for _ in 0..CALIBRATION_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let value = objective(mid)?;
        let rel = (value / target_snr - 1.0).abs();
        if rel < best.0 {
            best = (rel, mid);
        }
        if rel <= CALIBRATION_STOP {
            return Ok(mid);
        }
        if value > target_snr {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 <= CALIBRATION_TOLERANCE {
        return Ok(best.1);
    }
    Err(Error::Calibration { iterations: CALIBRATION_MAX_ITERATIONS, lo, hi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrderKind {
    /// Top row to bottom row.
    #[default]
    Linear,
    /// Centre line first, then alternating outward: c, c-1, c+1, c-2, ...
    Centric,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcquisitionOrder {
    pub kind: OrderKind,
    /// `permutation[line]` is the acquisition time index of that line.
    pub permutation: Vec<usize>,
}

impl AcquisitionOrder {
    /// Lines in the order they are acquired.
    pub fn sequence(&self) -> Vec<usize> {
        let mut seq = vec![0; self.permutation.len()];
        for (line, &t) in self.permutation.iter().enumerate() {
            seq[t] = line;
        }
        seq
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }
}

pub fn acquisition_order(num_lines: usize, kind: OrderKind) -> Result<AcquisitionOrder> {
    if num_lines == 0 {
        return Err(Error::validation("acquisition order needs at least one line"));
    }
    let sequence: Vec<usize> = match kind {
        OrderKind::Linear => (0..num_lines).collect(),
        OrderKind::Centric => {
            let center = num_lines / 2;
            let mut seq = vec![center];
            let mut step = 1;
            while seq.len() < num_lines {
                if let Some(below) = center.checked_sub(step) {
                    seq.push(below);
                }
                if center + step < num_lines {
                    seq.push(center + step);
                }
                step += 1;
            }
            seq
        }
    };
    let mut permutation = vec![0; num_lines];
    for (t, &line) in sequence.iter().enumerate() {
        permutation[line] = t;
    }
    Ok(AcquisitionOrder { kind, permutation })
}

/// A step change of pose at a fraction of the acquisition time. Rotation is
/// about the image centre, positive from the column axis toward the row
/// axis; shift `[dx, dy]` is in pixels along columns and rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionEvent {
    pub onset: f64,
    #[serde(default)]
    pub rotation_deg: f64,
    #[serde(default)]
    pub shift: [f64; 2],
    /// A transient event holds only until the next event, after which the
    /// subject returns to the pose preceding it.
    #[serde(default)]
    pub transient: bool,
}

pub const MAX_ROTATION_DEG: f64 = 45.0;
pub const MAX_SHIFT_FRACTION: f64 = 0.25;

pub fn validate_events(events: &[MotionEvent], height: usize, width: usize) -> Result<()> {
    for (i, e) in events.iter().enumerate() {
        if !(0.0..1.0).contains(&e.onset) {
            return Err(Error::validation(format!("motion event {i}: onset must lie in [0, 1)")));
        }
        if !(e.rotation_deg.abs() <= MAX_ROTATION_DEG) {
            return Err(Error::validation(format!(
                "motion event {i}: |rotation| exceeds {MAX_ROTATION_DEG} degrees"
            )));
        }
        if !(e.shift[0].abs() <= MAX_SHIFT_FRACTION * width as f64)
            || !(e.shift[1].abs() <= MAX_SHIFT_FRACTION * height as f64)
        {
            return Err(Error::validation(format!(
                "motion event {i}: shift exceeds a quarter of the image size"
            )));
        }
        if i > 0 && !(e.onset > events[i - 1].onset) {
            return Err(Error::validation(format!(
                "motion events must be sorted by strictly increasing onset (event {i})"
            )));
        }
    }
    Ok(())
}

/// Rigid pose: rotate about the centre, then translate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pose {
    angle: f64,
    dx: f64,
    dy: f64,
}

impl Pose {
    const IDENTITY: Pose = Pose { angle: 0.0, dx: 0.0, dy: 0.0 };

    /// `event` applied after `self`.
    fn then(self, event: &MotionEvent) -> Pose {
        let theta = event.rotation_deg.to_radians();
        let (s, c) = theta.sin_cos();
        Pose {
            angle: self.angle + theta,
            dx: c * self.dx - s * self.dy + event.shift[0],
            dy: s * self.dx + c * self.dy + event.shift[1],
        }
    }
}

/// Poses of states `0..=events.len()`; state 0 is the initial pose.
fn state_poses(events: &[MotionEvent]) -> Vec<Pose> {
    let mut poses = vec![Pose::IDENTITY];
    let mut base = Pose::IDENTITY;
    for e in events {
        let pose = base.then(e);
        poses.push(pose);
        if !e.transient {
            base = pose;
        }
    }
    poses
}

/// Bilinear rotation about `(H/2, W/2)` with zero fill.
fn rotate(img: &ComplexImage, angle: f64) -> ComplexImage {
    let (h, w) = img.dims();
    let (ch, cw) = ((h / 2) as f64, (w / 2) as f64);
    let (s, c) = angle.sin_cos();
    let zero = Complex64::new(0.0, 0.0);
    let at = |r: isize, col: isize| -> Complex64 {
        if r < 0 || col < 0 || r >= h as isize || col >= w as isize {
            zero
        } else {
            img.get(r as usize, col as usize)
        }
    };
    let mut data = Vec::with_capacity(h * w);
    for r in 0..h {
        let ty = r as f64 - ch;
        for col in 0..w {
            let tx = col as f64 - cw;
            // inverse map of the output pixel into the source
            let sx = c * tx + s * ty + cw;
            let sy = -s * tx + c * ty + ch;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = at(y0, x0) * ((1.0 - fx) * (1.0 - fy))
                + at(y0, x0 + 1) * (fx * (1.0 - fy))
                + at(y0 + 1, x0) * ((1.0 - fx) * fy)
                + at(y0 + 1, x0 + 1) * (fx * fy);
            data.push(v);
        }
    }
    ComplexImage::from_parts_unchecked(h, w, data)
}

/// Multiplies by the linear phase that shifts the image by `(dx, dy)`.
fn shift_phase(k: &mut KSpace, dx: f64, dy: f64) {
    let (h, w) = k.dims();
    let (ch, cw) = ((h / 2) as f64, (w / 2) as f64);
    for u in 0..h {
        let row_phase = (u as f64 - ch) * dy / h as f64;
        let row = k.row_mut(u);
        for (v, z) in row.iter_mut().enumerate() {
            let phase = -2.0 * PI * ((v as f64 - cw) * dx / w as f64 + row_phase);
            *z *= Complex64::from_polar(1.0, phase);
        }
    }
}

fn state_kspace(img: &ComplexImage, pose: Pose) -> Result<KSpace> {
    let mut k = if pose.angle == 0.0 {
        fft2c(img)?
    } else {
        fft2c(&rotate(img, pose.angle))?
    };
    if pose.dx != 0.0 || pose.dy != 0.0 {
        shift_phase(&mut k, pose.dx, pose.dy);
    }
    Ok(k)
}

/// Image-domain view of every motion state, for visual inspection.
pub fn motion_state_images(img: &ComplexImage, events: &[MotionEvent]) -> Result<Vec<ComplexImage>> {
    validate_events(events, img.height(), img.width())?;
    state_poses(events)
        .into_iter()
        .map(|p| ifft2c(&state_kspace(img, p)?))
        .collect()
}

/// Composite k-space of a subject that moves during the acquisition. Line
/// `l` is acquired at time `order.permutation[l] / H` and copied from the
/// spectrum of the pose active at that time.
pub fn simulate_motion(img: &ComplexImage, events: &[MotionEvent], order: &AcquisitionOrder) -> Result<KSpace> {
    let (h, w) = img.dims();
    validate_events(events, h, w)?;
    if order.len() != h {
        return Err(Error::validation(format!(
            "acquisition order covers {} lines but the image has {h} rows",
            order.len()
        )));
    }
    let poses = state_poses(events);
    let state_of_line: Vec<usize> = order
        .permutation
        .iter()
        .map(|&t| {
            let time = t as f64 / h as f64;
            events.iter().take_while(|e| e.onset <= time).count()
        })
        .collect();

    let mut spectra: Vec<Option<KSpace>> = vec![None; poses.len()];
    for &s in &state_of_line {
        if spectra[s].is_none() {
            spectra[s] = Some(state_kspace(img, poses[s])?);
        }
    }

    let mut out = KSpace::from_parts_unchecked(h, w, vec![Complex64::new(0.0, 0.0); h * w]);
    for (line, &s) in state_of_line.iter().enumerate() {
        let src = spectra[s].as_ref().expect("computed above");
        out.row_mut(line).copy_from_slice(src.row(line));
    }
    Ok(out)
}
