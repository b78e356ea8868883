//! Centred, unitary 2D discrete Fourier transforms.
//!
//! Both directions scale by `1/sqrt(H*W)` so the pair is orthonormal and
//! Parseval holds without correction factors. The zero frequency lands at
//! `(H/2, W/2)` (integer division), and the image-domain origin is the same
//! central pixel, so a centred impulse transforms to a constant.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::Result;
use crate::image::{ComplexImage, KSpace};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward transform, image domain to DC-centred k-space.
pub fn fft2c(image: &ComplexImage) -> Result<KSpace> {
    image.validate()?;
    let (h, w) = image.dims();
    let data = centered_transform(image.as_slice(), h, w, FftDirection::Forward);
    Ok(KSpace::from_parts_unchecked(h, w, data))
}

/// Inverse of [`fft2c`].
pub fn ifft2c(k: &KSpace) -> Result<ComplexImage> {
    k.validate()?;
    let (h, w) = k.dims();
    let data = centered_transform(k.as_slice(), h, w, FftDirection::Inverse);
    Ok(ComplexImage::from_parts_unchecked(h, w, data))
}

fn centered_transform(
    input: &[Complex64],
    h: usize,
    w: usize,
    direction: FftDirection,
) -> Vec<Complex64> {
    let (ch, cw) = (h / 2, w / 2);

    // pre-shift moves the centre sample to the origin
    let mut buf = Vec::with_capacity(h * w);
    for r in 0..h {
        let src = &input[((r + ch) % h) * w..][..w];
        buf.extend_from_slice(&src[cw..]);
        buf.extend_from_slice(&src[..cw]);
    }

    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft(w, direction), p.plan_fft(h, direction))
    });

    row_fft.process(&mut buf);

    let mut cols = vec![Complex64::new(0.0, 0.0); h * w];
    for r in 0..h {
        for c in 0..w {
            cols[c * h + r] = buf[r * w + c];
        }
    }
    col_fft.process(&mut cols);

    // post-shift moves the origin back to the centre, with unitary scaling
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for u in 0..h {
        let su = (u + h - ch) % h;
        for v in 0..w {
            let sv = (v + w - cw) % w;
            out[u * w + v] = cols[sv * h + su] * scale;
        }
    }
    out
}
