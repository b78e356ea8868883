//! File formats: the `KCPX1` complex interchange format and 16-bit PGM.
//!
//! A KCPX file is a four-line ASCII header followed by a raw payload:
//!
//! ```text
//! KCPX1\n
//! <height>\n
//! <width>\n
//! image|kspace\n
//! <height * width pairs of little-endian f64 (re, im), row-major>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{ComplexImage, KSpace, RealImage};

pub const KCPX_MAGIC: &str = "KCPX1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Image,
    KSpace,
}

impl Domain {
    pub fn tag(self) -> &'static str {
        match self {
            Domain::Image => "image",
            Domain::KSpace => "kspace",
        }
    }
}

/// Contents of a KCPX file, tagged by domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Kcpx {
    Image(ComplexImage),
    KSpace(KSpace),
}

impl Kcpx {
    pub fn domain(&self) -> Domain {
        match self {
            Kcpx::Image(_) => Domain::Image,
            Kcpx::KSpace(_) => Domain::KSpace,
        }
    }

    fn parts(&self) -> (usize, usize, &[Complex64]) {
        match self {
            Kcpx::Image(x) => (x.height(), x.width(), x.as_slice()),
            Kcpx::KSpace(k) => (k.height(), k.width(), k.as_slice()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (h, w, data) = self.parts();
        let header = format!("{KCPX_MAGIC}\n{h}\n{w}\n{}\n", self.domain().tag());
        let mut out = Vec::with_capacity(header.len() + 16 * data.len());
        out.extend_from_slice(header.as_bytes());
        for z in data {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            let start = pos;
            let end = bytes[start..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|i| start + i)
                .ok_or_else(|| Error::Parse {
                    offset: bytes.len() as u64,
                    message: format!("unexpected end of header while reading {what}"),
                })?;
            pos = end + 1;
            let text = std::str::from_utf8(&bytes[start..end]).map_err(|_| Error::Parse {
                offset: start as u64,
                message: format!("{what} is not ASCII"),
            })?;
            Ok((start, text.to_string()))
        };

        let (off, magic) = next_line("magic")?;
        if magic != KCPX_MAGIC {
            return Err(Error::Parse { offset: off as u64, message: format!("bad magic {magic:?}, expected {KCPX_MAGIC:?}") });
        }
        let mut dim = |what: &str| -> Result<(usize, usize)> {
            let (off, text) = next_line(what)?;
            let v = text.parse::<usize>().map_err(|_| Error::Parse {
                offset: off as u64,
                message: format!("{what} {text:?} is not a non-negative integer"),
            })?;
            Ok((off, v))
        };
        let (h_off, h) = dim("height")?;
        let (w_off, w) = dim("width")?;
        let (d_off, domain) = next_line("domain")?;
        let domain = match domain.as_str() {
            "image" => Domain::Image,
            "kspace" => Domain::KSpace,
            other => {
                return Err(Error::Parse { offset: d_off as u64, message: format!("unknown domain {other:?}") })
            }
        };

        let expected = h
            .checked_mul(w)
            .and_then(|n| n.checked_mul(16))
            .ok_or_else(|| Error::Parse { offset: w_off as u64, message: format!("dimensions {h}x{w} overflow") })?;
        let payload = &bytes[pos..];
        if payload.len() < expected {
            return Err(Error::Parse {
                offset: bytes.len() as u64,
                message: format!("truncated payload: expected {expected} bytes after header, found {}", payload.len()),
            });
        }
        if payload.len() > expected {
            return Err(Error::Parse {
                offset: (pos + expected) as u64,
                message: format!("{} trailing bytes after payload", payload.len() - expected),
            });
        }

        let mut data = Vec::with_capacity(h * w);
        for (i, chunk) in payload.chunks_exact(16).enumerate() {
            let re = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
            if !(re.is_finite() && im.is_finite()) {
                return Err(Error::Parse { offset: (pos + 16 * i) as u64, message: "non-finite sample".into() });
            }
            data.push(Complex64::new(re, im));
        }
        let invalid = |e: Error| Error::Parse { offset: h_off as u64, message: e.to_string() };
        Ok(match domain {
            Domain::Image => Kcpx::Image(ComplexImage::new(h, w, data).map_err(invalid)?),
            Domain::KSpace => Kcpx::KSpace(KSpace::new(h, w, data).map_err(invalid)?),
        })
    }

    pub fn into_image(self) -> Result<ComplexImage> {
        match self {
            Kcpx::Image(x) => Ok(x),
            Kcpx::KSpace(_) => Err(Error::validation("expected an image-domain file, found k-space")),
        }
    }

    pub fn into_kspace(self) -> Result<KSpace> {
        match self {
            Kcpx::KSpace(k) => Ok(k),
            Kcpx::Image(_) => Err(Error::validation("expected a k-space file, found an image")),
        }
    }
}

/// Writes through a sibling temporary file and renames, so readers never
/// observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn export_kcpx(x: &Kcpx, path: &Path) -> Result<()> {
    write_atomic(path, &x.to_bytes())
}

pub fn import_kcpx(path: &Path) -> Result<Kcpx> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Kcpx::from_bytes(&bytes)
}

/// Binary PGM (P5), maxval 65535, big-endian samples `round(v * 65535)` with
/// `v` clamped to `[0, 1]`.
pub fn pgm_bytes(img: &RealImage) -> Vec<u8> {
    let header = format!("P5 {} {} 65535\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + 2 * img.as_slice().len());
    out.extend_from_slice(header.as_bytes());
    for &v in img.as_slice() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn export_pgm(img: &RealImage, path: &Path) -> Result<()> {
    write_atomic(path, &pgm_bytes(img))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_quantization() {
        let img = RealImage::new(2, 2, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let bytes = pgm_bytes(&img);
        let header = b"P5 2 2 65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let samples: Vec<u16> = bytes[header.len()..]
            .chunks(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        assert_eq!(samples, vec![0, 65535, 32768, 16384]);
    }

    #[test]
    fn kcpx_header_errors() {
        let err = Kcpx::from_bytes(b"KCPX2\n8\n8\nimage\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }));
        let err = Kcpx::from_bytes(b"KCPX1\n8\nx\nimage\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 8, .. }), "{err}");
        let err = Kcpx::from_bytes(b"KCPX1\n8\n8\nsinogram\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 10, .. }), "{err}");
        let err = Kcpx::from_bytes(b"KCPX1\n99999999999\n99999999999\nimage\n").unwrap_err();
        assert!(err.to_string().contains("overflow"), "{err}");
        let err = Kcpx::from_bytes(b"KCPX1\n8").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn kcpx_rejects_trailing_and_non_finite() {
        let x = Kcpx::Image(ComplexImage::zeros(8, 8).unwrap());
        let mut bytes = x.to_bytes();
        bytes.push(0);
        let err = Kcpx::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::Parse { offset, .. } if offset as usize == bytes.len() - 1));

        let mut bytes = x.to_bytes();
        let header_len = bytes.len() - 16 * 64;
        bytes[header_len + 16 * 3..header_len + 16 * 3 + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        let err = Kcpx::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::Parse { offset, .. } if offset as usize == header_len + 48));
    }

    #[test]
    fn domain_accessors() {
        let k = Kcpx::KSpace(KSpace::zeros(8, 8).unwrap());
        assert_eq!(k.domain(), Domain::KSpace);
        assert!(k.clone().into_image().is_err());
        assert!(k.into_kspace().is_ok());
    }
}
