//! Runs the strategy x acceleration x artifact x reconstructor matrix over a
//! subject suite and writes per-cell CSVs, a summary table and a markdown
//! report.
//!
//! Output layout under the output directory:
//!
//! ```text
//! summary.csv                 one row per (cell, recon) plus an "original" row
//! report.md                   the summary as a table, trend checks, errors
//! cells/original.csv          per-image metrics of the references
//! cells/<cell>__<recon>.csv   per-image metrics with mean/std rows
//! images/...                  PGM magnitudes when output.write_images is set
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::artifacts::{add_gaussian_noise, calibrate_sigma, calibrate_sigma_for_snr, NoiseMode};
use crate::config::{ArtifactKind, CellSpec, ExperimentConfig, ReconEntry, ReconMethod, SourceKind};
use crate::error::{Error, Result};
use crate::fft::{fft2c, ifft2c};
use crate::image::{magnitude, normalize01, ComplexImage, KSpace};
use crate::io::{export_pgm, import_kcpx, write_atomic, Kcpx};
use crate::metrics::{ImageMetrics, MetricsReport, Summary};
use crate::phantom::{estimate_foreground, generate_phantom, MaskPair, PhantomSpec};
use crate::pipeline::{degrade, image_seed, DegradationSpec, MaskChoice, MotionSpec};
use crate::recon::{cascade_run, score_image, zero_filled};
use crate::rng::mix_seed;
use crate::sampling::{make_mask, SamplingMask};

const BASELINE_NOISE_TAG: u64 = 0xBA5E;

/// One fully sampled subject together with its scoring reference.
#[derive(Debug, Clone)]
pub struct Subject {
    /// Fully sampled acquisition that every cell degrades.
    pub kspace: KSpace,
    /// Image of the fully sampled acquisition, the scoring reference.
    pub reference: ComplexImage,
    pub masks: MaskPair,
}

/// Metrics of one reconstructor on one cell.
#[derive(Debug, Clone)]
pub struct RowResult {
    pub cell: CellSpec,
    pub recon: String,
    pub report: MetricsReport,
    /// Indices of subjects that failed, with their error messages.
    pub failures: Vec<(usize, String)>,
}

impl RowResult {
    pub fn file_stem(&self) -> String {
        format!("{}__{}", self.cell.id(), self.recon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub original: MetricsReport,
    pub rows: Vec<RowResult>,
    pub trends: Vec<TrendCheck>,
    /// Every file written, in write order.
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn row(&self, cell: &CellSpec, recon: &str) -> Option<&RowResult> {
        self.rows.iter().find(|r| r.cell == *cell && r.recon == recon)
    }
}

/// Builds the subject suite: seeded phantoms (optionally with a calibrated
/// baseline noise floor so that the acquisitions have a finite SNR) or
/// imported KCPX files.
pub fn load_subjects(cfg: &ExperimentConfig) -> Result<Vec<Subject>> {
    let src = &cfg.source;
    match src.kind {
        SourceKind::Phantom => (0..src.count)
            .into_par_iter()
            .map(|i| {
                let seed = image_seed(cfg.seed, i);
                let spec = match &src.ellipses {
                    Some(ellipses) => PhantomSpec {
                        height: src.height,
                        width: src.width,
                        ellipses: ellipses.clone(),
                        texture_amplitude: src.texture_amplitude,
                        seed,
                    },
                    None => PhantomSpec {
                        texture_amplitude: src.texture_amplitude,
                        ..PhantomSpec::brain_variant(src.height, src.width, seed)
                    },
                };
                let (img, masks) = generate_phantom(&spec)?;
                let mut kspace = fft2c(&img)?;
                if src.baseline_snr > 0.0 {
                    let sigma = calibrate_sigma_for_snr(&kspace, &masks, src.baseline_snr)?;
                    kspace = add_gaussian_noise(&kspace, sigma, mix_seed(seed, BASELINE_NOISE_TAG))?;
                }
                let reference = ifft2c(&kspace)?;
                Ok(Subject { kspace, reference, masks })
            })
            .collect(),
        SourceKind::Kcpx => src
            .files
            .par_iter()
            .map(|path| {
                let (kspace, reference) = match import_kcpx(path)? {
                    Kcpx::Image(x) => (fft2c(&x)?, x),
                    Kcpx::KSpace(k) => {
                        let x = ifft2c(&k)?;
                        (k, x)
                    }
                };
                let masks = estimate_foreground(&magnitude(&reference))?;
                Ok(Subject { kspace, reference, masks })
            })
            .collect(),
    }
}

fn reconstruct(entry: &ReconEntry, k: &KSpace, mask: &SamplingMask) -> Result<ComplexImage> {
    match entry.method {
        ReconMethod::ZeroFilled => zero_filled(k, mask),
        ReconMethod::Cascade => Ok(cascade_run(k, mask, &entry.cascade_config())?.image),
    }
}

struct ImageOutput {
    degraded: ComplexImage,
    recons: Vec<Result<(ComplexImage, ImageMetrics)>>,
}

fn run_image(
    cfg: &ExperimentConfig,
    cell: &CellSpec,
    index: usize,
    subject: &Subject,
    sigma: Option<&Result<f64>>,
    shared_mask: Option<&SamplingMask>,
) -> Result<ImageOutput> {
    let seed = image_seed(cfg.seed, index);
    let mask = match shared_mask {
        Some(m) => m.clone(),
        None => make_mask(&cell.mask_spec(subject.kspace.height(), seed, cfg.sampling.gradient_power))?,
    };
    let noise = match sigma {
        Some(Ok(s)) => Some(NoiseMode::Sigma(*s)),
        Some(Err(e)) => return Err(Error::Numerical(format!("noise level unavailable: {e}"))),
        None => None,
    };
    let spec = DegradationSpec {
        motion: cell.artifact.has_motion().then(|| MotionSpec {
            events: cfg.artifacts.motion_events.clone(),
            order: cfg.artifacts.motion_order,
        }),
        noise,
        mask: MaskChoice::Fixed(mask),
        seed,
        subject: Some(subject.masks.clone()),
    };
    let (k_deg, mask) = degrade(&subject.kspace, &spec)?;
    let degraded = zero_filled(&k_deg, &mask)?;
    let recons = cfg
        .recon
        .iter()
        .map(|entry| {
            let image = reconstruct(entry, &k_deg, &mask)?;
            let metrics = score_image(index.to_string(), &image, &subject.reference, &subject.masks)?;
            Ok((image, metrics))
        })
        .collect();
    Ok(ImageOutput { degraded, recons })
}

fn write_pgm_magnitude(x: &ComplexImage, path: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    export_pgm(&normalize01(&magnitude(x)), path)?;
    files.push(path.to_path_buf());
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs the whole matrix and writes all outputs under `out_dir`. Failures of
/// individual images or cells are recorded in the outputs and do not abort the
/// run; only configuration, subject-loading and I/O errors do.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let cells = cfg.cells()?;
    let subjects = load_subjects(cfg)?;
    let mut files = Vec::new();

    create_dir(&out_dir.join("cells"))?;
    let images_dir = out_dir.join("images");
    if cfg.output.write_images {
        create_dir(&images_dir.join("original"))?;
        for (i, s) in subjects.iter().enumerate() {
            write_pgm_magnitude(&s.reference, &images_dir.join("original").join(format!("{i}.pgm")), &mut files)?;
        }
    }

    let original = MetricsReport {
        images: subjects
            .iter()
            .enumerate()
            .map(|(i, s)| score_image(i.to_string(), &s.reference, &s.reference, &s.masks))
            .collect::<Result<_>>()?,
    };

    // one noise level per subject, shared by every noisy cell
    let needs_noise = cells.iter().any(|c| c.artifact.has_noise());
    let sigmas: Vec<Result<f64>> = if needs_noise {
        let mode = cfg.artifacts.noise_mode()?;
        subjects
            .par_iter()
            .map(|s| match mode {
                NoiseMode::Sigma(v) => Ok(v),
                NoiseMode::TargetSnrFactor(f) => calibrate_sigma(&s.kspace, &s.masks, f),
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut rows = Vec::new();
    for cell in &cells {
        let shared_mask = if cfg.sampling.per_image_masks {
            None
        } else {
            let num_lines = subjects[0].kspace.height();
            Some(make_mask(&cell.mask_spec(num_lines, cfg.seed, cfg.sampling.gradient_power)))
        };
        let outputs: Vec<Result<ImageOutput>> = match &shared_mask {
            Some(Err(e)) => subjects.iter().map(|_| Err(Error::InvalidSpec(e.to_string()))).collect(),
            _ => {
                let mask = shared_mask.as_ref().map(|m| m.as_ref().expect("checked above"));
                subjects
                    .par_iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let sigma = cell.artifact.has_noise().then(|| &sigmas[i]);
                        run_image(cfg, cell, i, s, sigma, mask)
                    })
                    .collect()
            }
        };

        let cell_images = images_dir.join(cell.id());
        if cfg.output.write_images {
            create_dir(&cell_images)?;
        }
        let mut cell_rows: Vec<RowResult> = cfg
            .recon
            .iter()
            .map(|r| RowResult { cell: *cell, recon: r.name.clone(), report: MetricsReport::default(), failures: Vec::new() })
            .collect();
        for (i, out) in outputs.into_iter().enumerate() {
            match out {
                Err(e) => {
                    for row in cell_rows.iter_mut() {
                        row.failures.push((i, e.to_string()));
                    }
                }
                Ok(out) => {
                    if cfg.output.write_images {
                        write_pgm_magnitude(&out.degraded, &cell_images.join(format!("{i}_degraded.pgm")), &mut files)?;
                    }
                    for (row, res) in cell_rows.iter_mut().zip(out.recons) {
                        match res {
                            Ok((image, metrics)) => {
                                if cfg.output.write_images {
                                    let path = cell_images.join(format!("{i}_{}.pgm", row.recon));
                                    write_pgm_magnitude(&image, &path, &mut files)?;
                                }
                                row.report.images.push(metrics);
                            }
                            Err(e) => row.failures.push((i, e.to_string())),
                        }
                    }
                }
            }
        }
        rows.extend(cell_rows);
    }

    let original_path = out_dir.join("cells").join("original.csv");
    original.write_csv(&original_path)?;
    files.push(original_path);
    for row in &rows {
        let path = out_dir.join("cells").join(format!("{}.csv", row.file_stem()));
        row.report.write_csv(&path)?;
        files.push(path);
    }

    let trends = trend_checks(cfg, &rows);
    let summary_path = out_dir.join("summary.csv");
    write_atomic(&summary_path, summary_csv(&original, subjects.len(), &rows)?.as_bytes())?;
    files.push(summary_path);
    let report_path = out_dir.join("report.md");
    write_atomic(&report_path, report_markdown(cfg, &original, subjects.len(), &rows, &trends).as_bytes())?;
    files.push(report_path);

    Ok(ExperimentOutcome { original, rows, trends, files })
}

fn metric_columns(report: &MetricsReport) -> [Option<Summary>; 5] {
    let a = report.aggregate();
    [a.ssimf, a.psnr_db, a.ms_ssim, a.snr, a.contrast]
}

const METRIC_NAMES: [&str; 5] = ["ssimf", "psnr_db", "ms_ssim", "snr", "contrast"];

fn error_text(failures: &[(usize, String)]) -> String {
    match failures.first() {
        None => String::new(),
        Some((i, msg)) if failures.len() == 1 => format!("image {i}: {msg}"),
        Some((i, msg)) => format!("image {i}: {msg} (and {} more)", failures.len() - 1),
    }
}

fn summary_csv(original: &MetricsReport, n_subjects: usize, rows: &[RowResult]) -> Result<String> {
    let csv_err = |e: csv::Error| Error::Numerical(format!("csv encoding failed: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["cell", "strategy", "acceleration", "acs_fraction", "artifact", "recon"].map(String::from).to_vec();
    for m in METRIC_NAMES {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    header.extend(["n_images", "n_failed", "error"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;

    let fmt = |s: &Option<Summary>| -> [String; 2] {
        match s {
            Some(s) => [s.mean.to_string(), s.std.to_string()],
            None => [String::new(), String::new()],
        }
    };
    let mut record = |lead: [String; 6], report: &MetricsReport, failures: &[(usize, String)]| -> Result<()> {
        let mut rec: Vec<String> = lead.to_vec();
        for s in metric_columns(report) {
            rec.extend(fmt(&s));
        }
        rec.push(report.images.len().to_string());
        rec.push(failures.len().to_string());
        rec.push(error_text(failures));
        w.write_record(&rec).map_err(csv_err)
    };
    let missing: Vec<(usize, String)> = (original.images.len()..n_subjects).map(|i| (i, "not scored".into())).collect();
    record(
        ["original".into(), String::new(), String::new(), String::new(), String::new(), String::new()],
        original,
        &missing,
    )?;
    for row in rows {
        let c = &row.cell;
        record(
            [
                c.id(),
                c.strategy.to_string(),
                c.acceleration.to_string(),
                c.acs_fraction.to_string(),
                c.artifact.to_string(),
                row.recon.clone(),
            ],
            &row.report,
            &row.failures,
        )?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn pm(s: &Option<Summary>, digits: usize) -> String {
    match s {
        Some(s) => format!("{:.*} ± {:.*}", digits, s.mean, digits, s.std),
        None => "n/a".into(),
    }
}

fn report_markdown(
    cfg: &ExperimentConfig,
    original: &MetricsReport,
    n_subjects: usize,
    rows: &[RowResult],
    trends: &[TrendCheck],
) -> String {
    let mut md = String::new();
    let src = match cfg.source.kind {
        SourceKind::Phantom => format!("{} phantoms of {}x{}", n_subjects, cfg.source.height, cfg.source.width),
        SourceKind::Kcpx => format!("{} imported subjects", n_subjects),
    };
    let _ = writeln!(md, "# Experiment report\n");
    let _ = writeln!(md, "Master seed {}, {}.\n", cfg.seed, src);
    let _ = writeln!(md, "## Results\n");
    let _ = writeln!(md, "| Strategy | R | Artifact | Recon | SSIMf | PSNR (dB) | MS-SSIM | SNR | Contrast | n | failed |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|---|---|---|---|");
    let o = metric_columns(original);
    let _ = writeln!(
        md,
        "| Original | | | | | | | {} | {} | {} | 0 |",
        pm(&o[3], 3),
        pm(&o[4], 4),
        original.images.len()
    );
    for row in rows {
        let m = metric_columns(&row.report);
        let _ = writeln!(
            md,
            "| {} | {}x | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            row.cell.strategy,
            row.cell.acceleration,
            row.cell.artifact,
            row.recon,
            pm(&m[0], 4),
            pm(&m[1], 2),
            pm(&m[2], 4),
            pm(&m[3], 3),
            pm(&m[4], 4),
            row.report.images.len(),
            row.failures.len()
        );
    }

    let _ = writeln!(md, "\n## Trend checks\n");
    if trends.is_empty() {
        let _ = writeln!(md, "No trend applies to this matrix.");
    }
    for t in trends {
        let tag = if t.holds { "ok" } else { "DEVIATION" };
        let _ = writeln!(md, "- [{tag}] {}: {}", t.name, t.detail);
    }

    let failed: Vec<&RowResult> = rows.iter().filter(|r| !r.failures.is_empty()).collect();
    if !failed.is_empty() {
        let _ = writeln!(md, "\n## Errors\n");
        for row in failed {
            let _ = writeln!(md, "- {} / {}: {}", row.cell.id(), row.recon, error_text(&row.failures));
        }
    }
    md
}

/// Summary of the `ssimf` column, if any image was scored.
fn ssimf_of(row: &RowResult) -> Option<Summary> {
    row.report.aggregate().ssimf
}

/// Checks the orderings the experiment matrix is expected to reproduce:
/// SSIMf falling with acceleration for gradient masks, the gradient >=
/// random >= uniform strategy ranking within one standard deviation, and
/// each iterative reconstructor beating zero-filling image by image.
pub fn trend_checks(cfg: &ExperimentConfig, rows: &[RowResult]) -> Vec<TrendCheck> {
    use crate::sampling::Strategy;
    let mut out = Vec::new();
    let key = |a: f64| (a * 1000.0).round() as i64;

    for recon in &cfg.recon {
        let of_recon: Vec<&RowResult> = rows.iter().filter(|r| r.recon == recon.name).collect();
        let mut artifacts: Vec<ArtifactKind> = Vec::new();
        for r in &of_recon {
            if !artifacts.contains(&r.cell.artifact) {
                artifacts.push(r.cell.artifact);
            }
        }

        for &artifact in &artifacts {
            // acceleration trend with gradient masks
            let mut by_r: BTreeMap<i64, (f64, Summary)> = BTreeMap::new();
            for r in of_recon.iter().filter(|r| r.cell.artifact == artifact && r.cell.strategy == Strategy::Gradient) {
                if let Some(s) = ssimf_of(r) {
                    by_r.insert(key(r.cell.acceleration), (r.cell.acceleration, s));
                }
            }
            if by_r.len() >= 2 {
                let seq: Vec<&(f64, Summary)> = by_r.values().collect();
                let holds = seq.windows(2).all(|w| w[1].1.mean < w[0].1.mean);
                let detail = seq.iter().map(|(a, s)| format!("{a}x {:.4}", s.mean)).collect::<Vec<_>>().join(" > ");
                out.push(TrendCheck {
                    name: format!("SSIMf decreases with acceleration (gradient, {artifact}, {})", recon.name),
                    holds,
                    detail,
                });
            }

            // strategy ranking at each acceleration
            let mut accels: Vec<f64> = of_recon.iter().filter(|r| r.cell.artifact == artifact).map(|r| r.cell.acceleration).collect();
            accels.sort_by(f64::total_cmp);
            accels.dedup();
            for a in accels {
                let get = |s: Strategy| {
                    of_recon
                        .iter()
                        .find(|r| r.cell.artifact == artifact && r.cell.strategy == s && key(r.cell.acceleration) == key(a))
                        .and_then(|r| ssimf_of(r))
                };
                let (Some(g), Some(rn), Some(u)) = (get(Strategy::Gradient), get(Strategy::Random), get(Strategy::Uniform)) else {
                    continue;
                };
                let within = |hi: &Summary, lo: &Summary| hi.mean >= lo.mean - hi.std.max(lo.std);
                let holds = within(&g, &rn) && within(&rn, &u);
                let strict = g.mean >= rn.mean && rn.mean >= u.mean;
                out.push(TrendCheck {
                    name: format!("strategy ranking gradient >= random >= uniform ({a}x, {artifact}, {})", recon.name),
                    holds,
                    detail: format!(
                        "gradient {} / random {} / uniform {}{}",
                        pm(&Some(g), 4),
                        pm(&Some(rn), 4),
                        pm(&Some(u), 4),
                        if strict { "" } else { "; means not strictly ordered" }
                    ),
                });
            }
        }

        // iterative reconstruction against zero-filling, paired per image
        if recon.method == ReconMethod::ZeroFilled {
            continue;
        }
        let Some(baseline) = cfg.recon.iter().find(|r| r.method == ReconMethod::ZeroFilled) else {
            continue;
        };
        for r in &of_recon {
            let Some(zf) = rows.iter().find(|z| z.cell == r.cell && z.recon == baseline.name) else {
                continue;
            };
            let zf_by_id: BTreeMap<&str, f64> = zf.report.images.iter().map(|m| (m.image_id.as_str(), m.ssimf)).collect();
            let pairs: Vec<(f64, f64)> = r
                .report
                .images
                .iter()
                .filter_map(|m| zf_by_id.get(m.image_id.as_str()).map(|&z| (m.ssimf, z)))
                .collect();
            if pairs.is_empty() {
                continue;
            }
            let wins = pairs.iter().filter(|(c, z)| c > z).count();
            let frac = wins as f64 / pairs.len() as f64;
            out.push(TrendCheck {
                name: format!("{} above {} ({})", recon.name, baseline.name, r.cell.id()),
                holds: frac >= 0.95,
                detail: format!("{wins}/{} images", pairs.len()),
            });
        }
    }
    out
}
