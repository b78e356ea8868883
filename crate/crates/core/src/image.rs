//! Complex and real sample grids.
//!
//! [`ComplexImage`] and [`KSpace`] share a layout (row-major, `height` rows of
//! `width` samples) but are kept as distinct types so that image-domain and
//! frequency-domain data cannot be mixed up. k-space is stored DC-centred: the
//! zero frequency sits at `(height / 2, width / 2)`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Smallest accepted side length of a complex grid.
pub const MIN_DIM: usize = 8;

fn check_complex(height: usize, width: usize, data: &[Complex64], what: &str) -> Result<()> {
    if height < MIN_DIM || width < MIN_DIM {
        return Err(Error::validation(format!(
            "{what} must be at least {MIN_DIM}x{MIN_DIM}, got {height}x{width}"
        )));
    }
    let expected = height
        .checked_mul(width)
        .ok_or_else(|| Error::validation(format!("{what} dimensions overflow")))?;
    if data.len() != expected {
        return Err(Error::validation(format!(
            "{what} of {height}x{width} needs {expected} samples, got {}",
            data.len()
        )));
    }
    if let Some(i) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::validation(format!(
            "{what} sample {i} (row {}, col {}) is not finite",
            i / width,
            i % width
        )));
    }
    Ok(())
}

macro_rules! complex_grid {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            height: usize,
            width: usize,
            data: Vec<Complex64>,
        }

        impl $name {
            pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
                check_complex(height, width, &data, $what)?;
                Ok(Self { height, width, data })
            }

            pub fn zeros(height: usize, width: usize) -> Result<Self> {
                Self::new(height, width, vec![Complex64::new(0.0, 0.0); height * width])
            }

            /// Builds a grid by evaluating `f(row, col)` at every sample.
            pub fn from_fn(
                height: usize,
                width: usize,
                mut f: impl FnMut(usize, usize) -> Complex64,
            ) -> Result<Self> {
                let mut data = Vec::with_capacity(height * width);
                for r in 0..height {
                    for c in 0..width {
                        data.push(f(r, c));
                    }
                }
                Self::new(height, width, data)
            }

            pub(crate) fn from_parts_unchecked(
                height: usize,
                width: usize,
                data: Vec<Complex64>,
            ) -> Self {
                debug_assert_eq!(data.len(), height * width);
                Self { height, width, data }
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

            pub fn as_slice(&self) -> &[Complex64] {
                &self.data
            }

            /// Mutable access to the samples. Finiteness is re-checked by every
            /// transform that consumes the grid.
            pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<Complex64> {
                self.data
            }

            pub fn get(&self, row: usize, col: usize) -> Complex64 {
                self.data[row * self.width + col]
            }

            pub fn row(&self, row: usize) -> &[Complex64] {
                &self.data[row * self.width..(row + 1) * self.width]
            }

            pub fn row_mut(&mut self, row: usize) -> &mut [Complex64] {
                &mut self.data[row * self.width..(row + 1) * self.width]
            }

            /// Sum of squared moduli.
            pub fn energy(&self) -> f64 {
                self.data.iter().map(|z| z.norm_sqr()).sum()
            }

            /// Re-runs the construction checks, e.g. after mutation through
            /// [`Self::as_mut_slice`].
            pub fn validate(&self) -> Result<()> {
                check_complex(self.height, self.width, &self.data, $what)
            }

            pub fn scale(&self, factor: f64) -> Self {
                Self {
                    height: self.height,
                    width: self.width,
                    data: self.data.iter().map(|z| z * factor).collect(),
                }
            }
        }
    };
}

complex_grid!(
    /// Complex image-domain samples.
    ComplexImage,
    "image"
);

complex_grid!(
    /// DC-centred frequency-domain samples. Rows are phase-encode lines.
    KSpace,
    "k-space"
);

impl ComplexImage {
    /// Lifts a real image into the complex plane with zero imaginary part.
    pub fn from_real(img: &RealImage) -> Result<Self> {
        Self::new(
            img.height(),
            img.width(),
            img.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }
}

/// Real-valued image, typically a magnitude image or a mask weight map.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RealImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::validation(format!(
                "real image must be non-empty, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::validation(format!(
                "real image of {height}x{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("real image sample {i} is not finite")));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data)
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// Per-pixel modulus.
pub fn magnitude(x: &ComplexImage) -> RealImage {
    RealImage::from_parts_unchecked(
        x.height(),
        x.width(),
        x.as_slice().iter().map(|z| z.norm()).collect(),
    )
}

/// Affine map onto `[0, 1]`. A constant image maps to all zeros.
pub fn normalize01(x: &RealImage) -> RealImage {
    let (lo, hi) = (x.min(), x.max());
    let span = hi - lo;
    let data = if span > 0.0 {
        x.as_slice().iter().map(|&v| (v - lo) / span).collect()
    } else {
        vec![0.0; x.as_slice().len()]
    };
    RealImage::from_parts_unchecked(x.height(), x.width(), data)
}
