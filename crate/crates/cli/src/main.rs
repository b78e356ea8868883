use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ksim::artifacts::{motion_state_images, NoiseMode, OrderKind};
use ksim::config::IStageKind;
use ksim::image::{magnitude, normalize01};
use ksim::{
    cascade_run, degrade, estimate_foreground, evaluate_external, export_kcpx, export_pgm, fft2c, generate_phantom,
    ifft2c, import_kcpx, make_mask, run_experiment, ComplexImage, DegradationSpec, Error, ExperimentConfig, KSpace,
    KStage, Kcpx, MaskChoice, MaskSpec, MotionSpec, PhantomSpec, ReconEntry, ReconMethod, Result, SamplingMask,
    Strategy,
};

#[derive(Parser, Debug)]
#[command(name = "ksim", version, about = "Simulate undersampled, corrupted MRI acquisitions and score reconstructions")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (TOML). Other subcommands read their defaults from it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config file. Defaults to the current directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a phantom image with its foreground mask.
    Phantom(PhantomArgs),
    /// Write a sampling mask file.
    Mask(MaskArgs),
    /// Apply motion, noise and line dropping to a fully sampled acquisition.
    Degrade(DegradeArgs),
    /// Reconstruct an undersampled acquisition.
    Recon(ReconArgs),
    /// Score reconstructions against references.
    Eval(EvalArgs),
    /// Run a full experiment from a config file.
    Run,
}

#[derive(Args, Debug)]
struct PhantomArgs {
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 256)]
    width: usize,
    /// Seeded perturbation of the default phantom instead of the default itself.
    #[arg(long)]
    variant: bool,
}

#[derive(Args, Debug)]
struct MaskSelection {
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    acceleration: Option<f64>,
    /// Fraction of lines in the central block; defaults by acceleration.
    #[arg(long)]
    acs: Option<f64>,
}

#[derive(Args, Debug)]
struct MaskArgs {
    #[command(flatten)]
    select: MaskSelection,
    /// Number of phase-encode lines.
    #[arg(long, default_value_t = 256)]
    lines: usize,
}

#[derive(Args, Debug)]
struct DegradeArgs {
    /// Fully sampled KCPX file, image or k-space domain.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    select: MaskSelection,
    /// Use an existing mask file instead of generating one.
    #[arg(long, conflicts_with_all = ["strategy", "acceleration", "acs"])]
    mask: Option<PathBuf>,
    /// Ratio of degraded to original SNR, in (0, 1].
    #[arg(long, conflicts_with = "noise_sigma")]
    noise_factor: Option<f64>,
    /// Absolute k-space noise standard deviation per component.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Apply the motion events from the config (or the default event).
    #[arg(long)]
    motion: bool,
    #[arg(long, value_enum)]
    order: Option<OrderArg>,
    /// Also write the magnitude of every motion state.
    #[arg(long)]
    preview: bool,
}

#[derive(Args, Debug)]
struct ReconArgs {
    /// Undersampled k-space KCPX file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Reconstructor entry from the config file to start from.
    #[arg(long)]
    recon: Option<String>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, value_enum)]
    k_stage: Option<KStageArg>,
    #[arg(long, value_enum)]
    i_stage: Option<IStageArg>,
    #[arg(long)]
    tv_lambda: Option<f64>,
    #[arg(long)]
    tv_steps: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Write per-iteration diagnostics to diagnostics.csv.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Reconstructions, paired in order with --reference.
    #[arg(long = "recon", required = true, num_args = 1..)]
    recons: Vec<PathBuf>,
    #[arg(long = "reference", required = true, num_args = 1..)]
    references: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Gradient,
    Random,
    Uniform,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Gradient => Strategy::Gradient,
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Uniform => Strategy::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OrderArg {
    Linear,
    Centric,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    ZeroFilled,
    Cascade,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KStageArg {
    ZeroFill,
    HermitianFill,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum IStageArg {
    None,
    Tv,
    RealPositivity,
}

struct Context {
    seed: Option<u64>,
    config: Option<ExperimentConfig>,
    out_dir: PathBuf,
    quiet: bool,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let config = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| config.as_ref().and_then(|c| c.output_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out_dir).map_err(|e| Error::Io { path: out_dir.clone(), source: e })?;
        Ok(Context { seed: cli.seed, config, out_dir, quiet: cli.quiet })
    }

    fn seed(&self) -> u64 {
        self.seed.or(self.config.as_ref().map(|c| c.seed)).unwrap_or(0)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn wrote(&self, path: &Path) {
        self.say(format!("wrote {}", path.display()));
    }
}

fn write_magnitude(ctx: &Context, img: &ComplexImage, name: &str) -> Result<()> {
    let path = ctx.path(name);
    export_pgm(&normalize01(&magnitude(img)), &path)?;
    ctx.wrote(&path);
    Ok(())
}

fn write_kcpx(ctx: &Context, file: &Kcpx, name: &str) -> Result<()> {
    let path = ctx.path(name);
    export_kcpx(file, &path)?;
    ctx.wrote(&path);
    Ok(())
}

fn read_kspace(path: &Path) -> Result<KSpace> {
    match import_kcpx(path)? {
        Kcpx::KSpace(k) => Ok(k),
        Kcpx::Image(x) => fft2c(&x),
    }
}

fn read_image(path: &Path) -> Result<ComplexImage> {
    match import_kcpx(path)? {
        Kcpx::KSpace(k) => ifft2c(&k),
        Kcpx::Image(x) => Ok(x),
    }
}

fn mask_spec(ctx: &Context, select: &MaskSelection, lines: usize) -> Result<MaskSpec> {
    let strategy = select.strategy.ok_or_else(|| Error::Validation("--strategy is required".into()))?;
    let acceleration = select.acceleration.ok_or_else(|| Error::Validation("--acceleration is required".into()))?;
    let acs = match select.acs {
        Some(a) => a,
        None => MaskSpec::default_acs_fraction(acceleration).ok_or_else(|| {
            Error::Validation(format!("no default central-line fraction for {acceleration}x; pass --acs"))
        })?,
    };
    let mut spec = MaskSpec::new(strategy.into(), acceleration, acs, lines, ctx.seed());
    if let Some(cfg) = &ctx.config {
        spec.gradient_power = cfg.sampling.gradient_power;
    }
    Ok(spec)
}

fn cmd_phantom(ctx: &Context, args: &PhantomArgs) -> Result<()> {
    let spec = match &ctx.config {
        Some(cfg) => {
            let src = &cfg.source;
            let base = match &src.ellipses {
                Some(e) => PhantomSpec { height: src.height, width: src.width, ellipses: e.clone(), texture_amplitude: 0.0, seed: 0 },
                None if args.variant => PhantomSpec::brain_variant(src.height, src.width, ctx.seed()),
                None => PhantomSpec::brain(src.height, src.width),
            };
            PhantomSpec { texture_amplitude: src.texture_amplitude, seed: ctx.seed(), ..base }
        }
        None if args.variant => PhantomSpec::brain_variant(args.height, args.width, ctx.seed()),
        None => PhantomSpec::brain(args.height, args.width),
    };
    let (img, masks) = generate_phantom(&spec)?;
    write_kcpx(ctx, &Kcpx::Image(img.clone()), "phantom.kcpx")?;
    write_magnitude(ctx, &img, "phantom.pgm")?;
    let path = ctx.path("foreground.pgm");
    export_pgm(&masks.foreground_image(), &path)?;
    ctx.wrote(&path);
    Ok(())
}

fn cmd_mask(ctx: &Context, args: &MaskArgs) -> Result<()> {
    let mask = make_mask(&mask_spec(ctx, &args.select, args.lines)?)?;
    let path = ctx.path("mask.txt");
    mask.write(&path)?;
    ctx.say(format!("wrote {} ({} of {} lines)", path.display(), mask.kept_count(), mask.len()));
    Ok(())
}

fn cmd_degrade(ctx: &Context, args: &DegradeArgs) -> Result<()> {
    let k = read_kspace(&args.input)?;
    let artifacts = ctx.config.as_ref().map(|c| c.artifacts.clone()).unwrap_or_default();
    let order = match args.order {
        Some(OrderArg::Linear) => OrderKind::Linear,
        Some(OrderArg::Centric) => OrderKind::Centric,
        None => artifacts.motion_order,
    };
    let motion = args.motion.then(|| MotionSpec { events: artifacts.motion_events.clone(), order });
    let noise = match (args.noise_factor, args.noise_sigma) {
        (Some(f), _) => Some(NoiseMode::TargetSnrFactor(f)),
        (_, Some(s)) => Some(NoiseMode::Sigma(s)),
        _ => None,
    };
    let mask = match &args.mask {
        Some(path) => MaskChoice::Fixed(SamplingMask::read(path)?),
        None if args.select.strategy.is_none() && args.select.acceleration.is_none() => MaskChoice::Full,
        None => MaskChoice::Spec(mask_spec(ctx, &args.select, k.height())?),
    };
    let spec = DegradationSpec { motion, noise, mask, seed: ctx.seed(), subject: None };

    if args.preview {
        let events = spec.motion.as_ref().map(|m| m.events.clone()).unwrap_or_default();
        for (i, state) in motion_state_images(&ifft2c(&k)?, &events)?.iter().enumerate() {
            write_magnitude(ctx, state, &format!("state_{i}.pgm"))?;
        }
    }

    let (k_deg, mask) = degrade(&k, &spec)?;
    write_kcpx(ctx, &Kcpx::KSpace(k_deg.clone()), "degraded.kcpx")?;
    let path = ctx.path("mask.txt");
    mask.write(&path)?;
    ctx.wrote(&path);
    write_magnitude(ctx, &ifft2c(&k_deg)?, "degraded.pgm")
}

fn recon_entry(ctx: &Context, args: &ReconArgs) -> Result<ReconEntry> {
    let mut entry = match &args.recon {
        Some(name) => ctx
            .config
            .as_ref()
            .and_then(|c| c.recon.iter().find(|r| &r.name == name))
            .cloned()
            .ok_or_else(|| Error::Validation(format!("no reconstructor named {name:?} in the config")))?,
        None => ReconEntry::default_cascade("cli"),
    };
    if let Some(m) = args.method {
        entry.method = match m {
            MethodArg::ZeroFilled => ReconMethod::ZeroFilled,
            MethodArg::Cascade => ReconMethod::Cascade,
        };
    }
    if let Some(k) = args.k_stage {
        entry.k_stage = match k {
            KStageArg::ZeroFill => KStage::ZeroFill,
            KStageArg::HermitianFill => KStage::HermitianFill,
        };
    }
    if let Some(i) = args.i_stage {
        entry.i_stage = match i {
            IStageArg::None => IStageKind::None,
            IStageArg::Tv => IStageKind::Tv,
            IStageArg::RealPositivity => IStageKind::RealPositivity,
        };
    }
    entry.tv_lambda = args.tv_lambda.unwrap_or(entry.tv_lambda);
    entry.tv_steps = args.tv_steps.unwrap_or(entry.tv_steps);
    entry.iterations = args.iterations.unwrap_or(entry.iterations);
    Ok(entry)
}

fn cmd_recon(ctx: &Context, args: &ReconArgs) -> Result<()> {
    let k = read_kspace(&args.input)?;
    let mask = SamplingMask::read(&args.mask)?;
    let entry = recon_entry(ctx, args)?;
    let image = match entry.method {
        ReconMethod::ZeroFilled => {
            if args.diagnostics {
                return Err(Error::Validation("--diagnostics needs the cascade method".into()));
            }
            ksim::zero_filled(&k, &mask)?
        }
        ReconMethod::Cascade => {
            let cfg = ksim::CascadeConfig { record_diagnostics: args.diagnostics, ..entry.cascade_config() };
            let out = cascade_run(&k, &mask, &cfg)?;
            if args.diagnostics {
                let path = ctx.path("diagnostics.csv");
                ksim::io::write_atomic(&path, out.diagnostics_csv().as_bytes())?;
                ctx.wrote(&path);
            }
            out.image
        }
    };
    write_kcpx(ctx, &Kcpx::Image(image.clone()), "recon.kcpx")?;
    write_magnitude(ctx, &image, "recon.pgm")
}

fn cmd_eval(ctx: &Context, args: &EvalArgs) -> Result<()> {
    if args.recons.len() != args.references.len() {
        return Err(Error::Validation(format!(
            "{} reconstructions but {} references",
            args.recons.len(),
            args.references.len()
        )));
    }
    let recons = args.recons.iter().map(|p| read_image(p)).collect::<Result<Vec<_>>>()?;
    let refs = args.references.iter().map(|p| read_image(p)).collect::<Result<Vec<_>>>()?;
    let masks = refs.iter().map(|r| estimate_foreground(&magnitude(r))).collect::<Result<Vec<_>>>()?;
    let report = evaluate_external(&recons, &refs, &masks)?;
    let path = ctx.path("metrics.csv");
    report.write_csv(&path)?;
    ctx.wrote(&path);
    if let Some(s) = report.aggregate().ssimf {
        ctx.say(format!("SSIMf {:.4} ± {:.4} over {} images", s.mean, s.std, s.count));
    }
    Ok(())
}

fn cmd_run(ctx: &Context) -> Result<()> {
    let mut cfg = ctx.config.clone().ok_or_else(|| Error::Validation("run needs --config".into()))?;
    cfg.seed = ctx.seed();
    let outcome = run_experiment(&cfg, &ctx.out_dir)?;
    ctx.say(format!("wrote {} files under {}", outcome.files.len(), ctx.out_dir.display()));
    for t in &outcome.trends {
        ctx.say(format!("[{}] {}: {}", if t.holds { "ok" } else { "DEVIATION" }, t.name, t.detail));
    }
    let failed: usize = outcome.rows.iter().map(|r| r.failures.len()).sum();
    if failed > 0 {
        ctx.say(format!("{failed} image failures recorded; see report.md"));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Phantom(a) => cmd_phantom(&ctx, a),
        Command::Mask(a) => cmd_mask(&ctx, a),
        Command::Degrade(a) => cmd_degrade(&ctx, a),
        Command::Recon(a) => cmd_recon(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Run => cmd_run(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
