//! Shared fixtures for the kernel benchmarks.

use ksim::{apply_mask, fft2c, generate_phantom, make_mask, KSpace, MaskPair, MaskSpec, PhantomSpec, RealImage, SamplingMask, Strategy};

/// A seeded square phantom: its k-space, magnitude image and subject masks.
pub struct Fixture {
    pub kspace: KSpace,
    pub magnitude: RealImage,
    pub masks: MaskPair,
}

pub fn phantom(size: usize, seed: u64) -> Fixture {
    let (img, masks) = generate_phantom(&PhantomSpec::brain_variant(size, size, seed)).expect("phantom");
    let magnitude = ksim::normalize01(&ksim::magnitude(&img));
    Fixture { kspace: fft2c(&img).expect("fft"), magnitude, masks }
}

/// Gradient mask at the given acceleration with its default central block.
pub fn gradient_mask(lines: usize, acceleration: f64, seed: u64) -> SamplingMask {
    let acs = MaskSpec::default_acs_fraction(acceleration).expect("default acs");
    make_mask(&MaskSpec::new(Strategy::Gradient, acceleration, acs, lines, seed)).expect("mask")
}

/// Acquired k-space of a phantom under a gradient mask.
pub fn undersampled(size: usize, acceleration: f64, seed: u64) -> (KSpace, SamplingMask) {
    let f = phantom(size, seed);
    let mask = gradient_mask(size, acceleration, seed);
    (apply_mask(&f.kspace, &mask).expect("apply"), mask)
}
