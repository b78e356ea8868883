//! Simulation and evaluation toolkit for undersampled Cartesian MRI
//! reconstruction.
//!
//! The crate covers the whole loop: synthetic phantoms with subject masks,
//! centered unitary 2-D FFTs, line-dropping masks, noise and rigid-motion
//! artifacts, zero-filled and iterative cascade reconstruction, and the
//! SSIMf / PSNR / MS-SSIM / SNR / contrast metric suite. [`experiment`] ties
//! these together into reproducible experiment matrices.
//!
//! ```
//! use ksim::{fft2c, generate_phantom, make_mask, apply_mask, zero_filled, score_image};
//! use ksim::{MaskSpec, PhantomSpec, Strategy};
//!
//! let (img, masks) = generate_phantom(&PhantomSpec::brain(64, 64)).unwrap();
//! let k = fft2c(&img).unwrap();
//! let mask = make_mask(&MaskSpec::new(Strategy::Gradient, 2.0, 0.25, 64, 7)).unwrap();
//! let recon = zero_filled(&apply_mask(&k, &mask).unwrap(), &mask).unwrap();
//! let m = score_image("0", &recon, &img, &masks).unwrap();
//! assert!(m.ssimf > 0.5 && m.ssimf <= 1.0);
//! ```

pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod image;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod recon;
mod rng;
pub mod sampling;

pub use artifacts::{
    acquisition_order, add_gaussian_noise, calibrate_sigma, calibrate_sigma_for_snr, motion_state_images,
    simulate_motion, AcquisitionOrder, MotionEvent, NoiseMode, NoiseSpec, OrderKind,
};
pub use config::{ArtifactKind, CellSpec, ExperimentConfig, ReconEntry, ReconMethod};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentOutcome, RowResult, TrendCheck};
pub use fft::{fft2c, ifft2c};
pub use image::{magnitude, normalize01, ComplexImage, KSpace, RealImage};
pub use io::{export_kcpx, export_pgm, import_kcpx, Domain, Kcpx};
pub use metrics::{ImageMetrics, MetricsReport, SsimParams, Summary};
pub use phantom::{estimate_foreground, generate_phantom, Ellipse, MaskPair, PhantomSpec};
pub use pipeline::{degrade, image_seed, DegradationSpec, MaskChoice, MotionSpec};
pub use recon::{
    cascade_run, evaluate_external, hermitian_fill, score_image, tv_denoise, zero_filled, CascadeConfig, IStage,
    KStage, ReconResult,
};
pub use rng::mix_seed;
pub use sampling::{apply_mask, data_consistency, line_budget, make_mask, MaskSpec, SamplingMask, Strategy};
