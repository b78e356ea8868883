//! Cartesian phase-encode under-sampling.
//!
//! Lines are rows of the k-space grid. Every mask keeps a contiguous block of
//! central (auto-calibration) lines centred on row `H/2`, and these lines
//! count against the line budget `round(H / R)`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::KSpace;
use crate::rng::{seeded, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Density decaying away from the k-space centre.
    Gradient,
    Random,
    /// Evenly spaced, seed independent.
    Uniform,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Gradient, Strategy::Random, Strategy::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Gradient => "gradient",
            Strategy::Random => "random",
            Strategy::Uniform => "uniform",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(Strategy::Gradient),
            "random" => Ok(Strategy::Random),
            "uniform" => Ok(Strategy::Uniform),
            _ => Err(Error::validation(format!("unknown mask strategy {s:?}"))),
        }
    }
}

/// Decay exponent of the gradient density `(1 - d)^power`.
pub const DEFAULT_GRADIENT_POWER: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub strategy: Strategy,
    pub acceleration: f64,
    pub acs_fraction: f64,
    pub num_lines: usize,
    pub seed: u64,
    pub gradient_power: f64,
}

impl MaskSpec {
    pub fn new(strategy: Strategy, acceleration: f64, acs_fraction: f64, num_lines: usize, seed: u64) -> Self {
        MaskSpec {
            strategy,
            acceleration,
            acs_fraction,
            num_lines,
            seed,
            gradient_power: DEFAULT_GRADIENT_POWER,
        }
    }

    /// Central-line fraction paired with the three standard acceleration
    /// factors: 25% at 2x, 10% at 5x, 4% at 10x.
    pub fn default_acs_fraction(acceleration: f64) -> Option<f64> {
        match acceleration {
            a if a == 2.0 => Some(0.25),
            a if a == 5.0 => Some(0.10),
            a if a == 10.0 => Some(0.04),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineBudget {
    pub budget: usize,
    pub acs_count: usize,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Number of acquired lines and of central lines for `num_lines` phase
/// encodes at acceleration `acceleration`.
pub fn line_budget(num_lines: usize, acceleration: f64, acs_fraction: f64) -> Result<LineBudget> {
    if num_lines == 0 {
        return Err(Error::InvalidSpec("num_lines must be positive".into()));
    }
    if !(acceleration > 1.0) || !acceleration.is_finite() {
        return Err(Error::InvalidSpec(format!("acceleration must exceed 1, got {acceleration}")));
    }
    if !(acs_fraction > 0.0 && acs_fraction < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "acs fraction must lie in (0, 1), got {acs_fraction}"
        )));
    }
    let budget = round_half_up(num_lines as f64 / acceleration);
    let acs_count = round_half_up(acs_fraction * num_lines as f64);
    if acs_count > budget {
        return Err(Error::InvalidSpec(format!(
            "{acs_count} central lines exceed the budget of {budget} lines ({num_lines} lines at {acceleration}x)"
        )));
    }
    Ok(LineBudget { budget, acs_count })
}

/// Index range of the `acs_count` central lines.
pub fn acs_range(num_lines: usize, acs_count: usize) -> std::ops::Range<usize> {
    let start = num_lines / 2 - acs_count / 2;
    start..start + acs_count
}

/// Per-line keep vector, broadcast along the readout direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    keep: Vec<bool>,
    provenance: Option<MaskSpec>,
}

impl SamplingMask {
    pub fn from_keep(keep: Vec<bool>) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::validation("mask must cover at least one line"));
        }
        Ok(SamplingMask { keep, provenance: None })
    }

    /// Keeps every line.
    pub fn full(num_lines: usize) -> Self {
        SamplingMask { keep: vec![true; num_lines], provenance: None }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn provenance(&self) -> Option<&MaskSpec> {
        self.provenance.as_ref()
    }

    /// One `0` or `1` per text line, in line order.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.keep.len() * 2);
        for &k in &self.keep {
            s.push(if k { '1' } else { '0' });
            s.push('\n');
        }
        s
    }

    /// Parses the format of [`Self::to_text`]. Blank lines and lines starting
    /// with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut keep = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            match trimmed {
                "" => {}
                t if t.starts_with('#') => {}
                "1" => keep.push(true),
                "0" => keep.push(false),
                other => {
                    return Err(Error::Parse {
                        offset,
                        message: format!("expected 0 or 1, found {other:?}"),
                    })
                }
            }
            offset += line.len() as u64;
        }
        Self::from_keep(keep)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Draws a mask. The central block is always kept and the remaining
/// `budget - acs_count` lines are chosen among the other positions according
/// to the strategy, so the kept count equals the budget exactly.
pub fn make_mask(spec: &MaskSpec) -> Result<SamplingMask> {
    let LineBudget { budget, acs_count } = line_budget(spec.num_lines, spec.acceleration, spec.acs_fraction)?;
    let h = spec.num_lines;
    let acs = acs_range(h, acs_count);
    let mut keep = vec![false; h];
    for i in acs.clone() {
        keep[i] = true;
    }
    let outside: Vec<usize> = (0..h).filter(|i| !acs.contains(i)).collect();
    let extra = budget - acs_count;

    if extra > 0 {
        let chosen: Vec<usize> = match spec.strategy {
            Strategy::Uniform => (0..extra).map(|j| outside[j * outside.len() / extra]).collect(),
            Strategy::Random => {
                let mut rng = seeded(spec.seed, Stream::Mask);
                index::sample(&mut rng, outside.len(), extra)
                    .into_iter()
                    .map(|i| outside[i])
                    .collect()
            }
            Strategy::Gradient => {
                if !(spec.gradient_power >= 0.0) {
                    return Err(Error::InvalidSpec("gradient power must be non-negative".into()));
                }
                let center = (h / 2) as f64;
                let half = h as f64 / 2.0;
                let weights: Vec<f64> = outside
                    .iter()
                    .map(|&i| (1.0 - ((i as f64 - center).abs() / half).min(1.0)).powf(spec.gradient_power))
                    .collect();
                let mut rng = seeded(spec.seed, Stream::Mask);
                weighted_without_replacement(&mut rng, &weights, extra)
                    .into_iter()
                    .map(|i| outside[i])
                    .collect()
            }
        };
        for i in chosen {
            keep[i] = true;
        }
    }

    Ok(SamplingMask { keep, provenance: Some(*spec) })
}

/// Exact-size weighted sampling without replacement (Efraimidis-Spirakis):
/// each item gets key `ln(u) / w` and the `k` largest keys win. Zero-weight
/// items sort after every positive-weight item and among themselves by a
/// uniform key, so `k` larger than the positive support still succeeds.
fn weighted_without_replacement<R: Rng>(rng: &mut R, weights: &[f64], k: usize) -> Vec<usize> {
    let mut keyed: Vec<(bool, f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            if w > 0.0 {
                (true, u.ln() / w, i)
            } else {
                (false, u, i)
            }
        })
        .collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    keyed.into_iter().take(k).map(|(_, _, i)| i).collect()
}

fn check_lines(k: &KSpace, mask: &SamplingMask) -> Result<()> {
    if mask.len() != k.height() {
        return Err(Error::validation(format!(
            "mask has {} lines but k-space has {} rows",
            mask.len(),
            k.height()
        )));
    }
    Ok(())
}

/// Zeroes every dropped row.
pub fn apply_mask(k: &KSpace, mask: &SamplingMask) -> Result<KSpace> {
    check_lines(k, mask)?;
    let mut out = k.clone();
    for (r, &keep) in mask.keep().iter().enumerate() {
        if !keep {
            out.row_mut(r).fill(num_complex::Complex64::new(0.0, 0.0));
        }
    }
    Ok(out)
}

/// Acquired rows where the mask keeps the line, predicted rows elsewhere.
pub fn data_consistency(predicted: &KSpace, acquired: &KSpace, mask: &SamplingMask) -> Result<KSpace> {
    if predicted.dims() != acquired.dims() {
        return Err(Error::validation(format!(
            "predicted k-space is {:?} but acquired is {:?}",
            predicted.dims(),
            acquired.dims()
        )));
    }
    check_lines(acquired, mask)?;
    let mut out = predicted.clone();
    for (r, &keep) in mask.keep().iter().enumerate() {
        if keep {
            out.row_mut(r).copy_from_slice(acquired.row(r));
        }
    }
    Ok(out)
}
