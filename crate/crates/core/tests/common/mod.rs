//! Independent reference implementations used as test oracles. None of these
//! call into the library's own algorithms.
#![allow(dead_code)]

use std::f64::consts::PI;

use ksim::{ComplexImage, KSpace, RealImage};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex(h: usize, w: usize, seed: u64) -> ComplexImage {
    let mut r = rng(seed);
    let data = (0..h * w)
        .map(|_| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect();
    ComplexImage::new(h, w, data).unwrap()
}

pub fn random_real(h: usize, w: usize, seed: u64) -> RealImage {
    let mut r = rng(seed);
    RealImage::new(h, w, (0..h * w).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
}

/// Direct O(N^2) centered unitary DFT.
pub fn dft2c(x: &ComplexImage) -> Vec<Complex64> {
    let (h, w) = x.dims();
    let (ch, cw) = ((h / 2) as f64, (w / 2) as f64);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..h {
                for n in 0..w {
                    let phase = -2.0
                        * PI
                        * ((u as f64 - ch) * (m as f64 - ch) / h as f64 + (v as f64 - cw) * (n as f64 - cw) / w as f64);
                    acc += x.get(m, n) * Complex64::from_polar(1.0, phase);
                }
            }
            out[u * w + v] = acc * scale;
        }
    }
    out
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn mirror(mut i: isize, n: isize) -> usize {
    while i < 0 || i >= n {
        i = if i < 0 { -i - 1 } else { 2 * n - 1 - i };
    }
    i as usize
}

/// Per-pixel SSIM computed directly from an explicit 11x11 Gaussian window,
/// with local moments taken about the local means.
pub fn brute_ssim_map(x: &RealImage, y: &RealImage) -> Vec<f64> {
    let (h, w) = x.dims();
    let radius = 5isize;
    let sigma = 1.5;
    let mut win = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let sample = |img: &RealImage, i: isize, j: isize| img.get(mirror(r + i, h as isize), mirror(c + j, w as isize));
            let (mut mx, mut my) = (0.0, 0.0);
            for i in -radius..=radius {
                for j in -radius..=radius {
                    let k = win[(i + radius) as usize][(j + radius) as usize] / total;
                    mx += k * sample(x, i, j);
                    my += k * sample(y, i, j);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in -radius..=radius {
                for j in -radius..=radius {
                    let k = win[(i + radius) as usize][(j + radius) as usize] / total;
                    let (dx, dy) = (sample(x, i, j) - mx, sample(y, i, j) - my);
                    vx += k * dx * dx;
                    vy += k * dy * dy;
                    cov += k * dx * dy;
                }
            }
            out.push(((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)));
        }
    }
    out
}

pub fn brute_mse(x: &RealImage, y: &RealImage) -> f64 {
    let (h, w) = x.dims();
    let mut acc = 0.0;
    for r in 0..h {
        for c in 0..w {
            let d = x.get(r, c) - y.get(r, c);
            acc += d * d;
        }
    }
    acc / (h * w) as f64
}

/// Minimal KCPX writer, written from the format description alone.
pub fn reference_kcpx(h: usize, w: usize, kspace: bool, samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"KCPX1\n");
    out.extend_from_slice(h.to_string().as_bytes());
    out.push(b'\n');
    out.extend_from_slice(w.to_string().as_bytes());
    out.push(b'\n');
    out.extend_from_slice(if kspace { b"kspace\n" } else { b"image\n" });
    for z in samples {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

/// Reference PGM (P5) reader accepting any whitespace in the header and a
/// single whitespace byte before the raster.
pub fn read_pgm(bytes: &[u8]) -> (usize, usize, u32, Vec<u16>) {
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).unwrap().to_string());
    }
    assert_eq!(fields[0], "P5");
    let w: usize = fields[1].parse().unwrap();
    let h: usize = fields[2].parse().unwrap();
    let maxval: u32 = fields[3].parse().unwrap();
    let raster = &bytes[i + 1..];
    assert_eq!(raster.len(), 2 * w * h);
    let samples = raster.chunks(2).map(|c| ((c[0] as u16) << 8) | c[1] as u16).collect();
    (h, w, maxval, samples)
}

/// Asymptotic Kolmogorov-Smirnov p-value for a sample against a continuous
/// CDF.
pub fn ks_pvalue(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

pub fn kspace_of(data: Vec<Complex64>, h: usize, w: usize) -> KSpace {
    KSpace::new(h, w, data).unwrap()
}
