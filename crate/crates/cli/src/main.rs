use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lerf_core::geometry::{load_flow, load_homography};
use lerf_core::lut::{frozen_bank, structure_bank};
use lerf_core::{
    bench_run, load_image, load_lut_bank, resample, save_image, save_lut_bank, BenchReport, BenchTask,
    GeometricTransform, HyperParamMap, KernelFamily, LerfError, LutBank, Method, PreprocessConfig, ResampleJob,
};

#[derive(Parser)]
#[command(name = "lerf", version, about = "Image resampling with fixed and LUT-driven adaptive kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rescale an image.
    Resize(ResizeArgs),
    /// Warp an image with a target-to-source homography.
    Warp(WarpArgs),
    /// Warp an image with a backward optical flow field (.flo).
    FlowWarp(FlowWarpArgs),
    /// Score a kernel on a directory of high-resolution PNGs.
    Bench(BenchArgs),
    /// Score a kernel on homography warps read from per-image text files.
    WarpBench(WarpBenchArgs),
    /// Write one of the built-in LUT banks.
    MakeBank(MakeBankArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Nearest,
    Bilinear,
    Bicubic,
    Lanczos2,
    Lanczos3,
    #[value(name = "lerf-l")]
    LerfL,
    #[value(name = "lerf-g")]
    LerfG,
}

impl KernelArg {
    fn family(self) -> KernelFamily {
        match self {
            KernelArg::Nearest => KernelFamily::Nearest,
            KernelArg::Bilinear => KernelFamily::Linear,
            KernelArg::Bicubic => KernelFamily::BICUBIC,
            KernelArg::Lanczos2 => KernelFamily::Lanczos { lobes: 2 },
            KernelArg::Lanczos3 => KernelFamily::Lanczos { lobes: 3 },
            KernelArg::LerfL => KernelFamily::AmplifiedLinear,
            KernelArg::LerfG => KernelFamily::AnisoGaussian,
        }
    }
}

#[derive(Args)]
struct KernelOpts {
    #[arg(long, value_enum)]
    kernel: KernelArg,
    /// LUT bank for lerf kernels; the built-in structure bank is used when absent.
    #[arg(long)]
    lut: Option<PathBuf>,
    /// Per-source-pixel hyper-parameters; replaces LUT prediction.
    #[arg(long, conflicts_with = "lut")]
    hyper_map: Option<PathBuf>,
}

#[derive(Args)]
struct IoOpts {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ResizeArgs {
    #[command(flatten)]
    io: IoOpts,
    /// Vertical factor (and horizontal unless --scale-w is given).
    #[arg(long)]
    scale: f64,
    #[arg(long)]
    scale_w: Option<f64>,
    #[command(flatten)]
    kernel: KernelOpts,
    /// Gaussian pre-filter for downscaling, sigma = 0.5 / r - 0.5 per axis.
    #[arg(long)]
    aa: bool,
}

#[derive(Args)]
struct WarpArgs {
    #[command(flatten)]
    io: IoOpts,
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    kernel: KernelOpts,
    /// Output height; defaults to the source height.
    #[arg(long)]
    height: Option<usize>,
    /// Output width; defaults to the source width.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    emit_mask: Option<PathBuf>,
}

#[derive(Args)]
struct FlowWarpArgs {
    #[command(flatten)]
    io: IoOpts,
    #[arg(long)]
    flow: PathBuf,
    #[command(flatten)]
    kernel: KernelOpts,
    #[arg(long)]
    emit_mask: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "2.0x2.0,3.0x3.0,4.0x4.0")]
    tasks: String,
    #[arg(long, value_enum)]
    kernel: KernelArg,
    #[arg(long)]
    lut: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct WarpBenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Directory holding `<image stem>.txt` homographies in high-resolution pixels.
    #[arg(long)]
    matrices: PathBuf,
    #[arg(long, value_enum)]
    kernel: KernelArg,
    #[arg(long)]
    lut: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BankKind {
    /// Unit alpha or isotropic unit Gaussian everywhere.
    Frozen,
    /// Gradient-steered parameters computed analytically.
    Structure,
}

#[derive(Args)]
struct MakeBankArgs {
    #[arg(long, value_enum)]
    kernel: KernelArg,
    #[arg(long, value_enum, default_value = "structure")]
    kind: BankKind,
    /// Also emit enhancer tables (structure banks only).
    #[arg(long)]
    enhancer: bool,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &LerfError) -> u8 {
    match e {
        LerfError::Io { .. } => 3,
        LerfError::Decode { .. } | LerfError::Format { .. } => 4,
        LerfError::Evaluation(_) => 1,
        _ => 2,
    }
}

fn misuse(msg: impl Into<String>) -> LerfError {
    LerfError::Misuse(msg.into())
}

fn bank_for(kernel: KernelArg, lut: Option<&Path>) -> lerf_core::Result<Option<LutBank>> {
    let family = kernel.family();
    match (family.is_adaptive(), lut) {
        (false, Some(_)) => Err(misuse(format!("--lut has no effect with {}", family.name()))),
        (false, None) => Ok(None),
        (true, Some(p)) => load_lut_bank(p).map(Some),
        (true, None) => {
            log::info!("no --lut given, using the built-in structure bank for {}", family.name());
            structure_bank(family, false).map(Some)
        }
    }
}

fn render(
    src: &lerf_core::ImageBuffer,
    t: &GeometricTransform,
    dims: (usize, usize),
    opts: &KernelOpts,
    preproc: PreprocessConfig,
) -> lerf_core::Result<lerf_core::Resampled> {
    let family = opts.kernel.family();
    let map = match &opts.hyper_map {
        Some(p) if family.is_adaptive() => Some(HyperParamMap::load(p)?),
        Some(_) => return Err(misuse(format!("--hyper-map has no effect with {}", family.name()))),
        None => None,
    };
    let bank = match map {
        Some(_) => None,
        None => bank_for(opts.kernel, opts.lut.as_deref())?,
    };
    let mut job = ResampleJob::new(src, t, family).target_dims(dims.0, dims.1).preprocess(preproc);
    if let Some(b) = &bank {
        job = job.bank(b);
    }
    if let Some(m) = &map {
        job = job.hyper_map(m);
    }
    resample(&job)
}

fn run_resize(a: &ResizeArgs) -> lerf_core::Result<()> {
    let src = load_image(&a.io.input)?;
    let (r_h, r_w) = (a.scale, a.scale_w.unwrap_or(a.scale));
    let t = GeometricTransform::scale(r_h, r_w);
    t.validate()?;
    let preproc = if a.aa {
        if r_h >= 1.0 && r_w >= 1.0 {
            return Err(misuse("--aa only applies when downscaling"));
        }
        PreprocessConfig::anti_alias_for_scale(r_h, r_w)
    } else {
        PreprocessConfig::Identity
    };
    let dims = t.natural_target_dims(src.height(), src.width());
    let out = render(&src, &t, dims, &a.kernel, preproc)?;
    log::info!("{}x{} -> {}x{}", src.height(), src.width(), dims.0, dims.1);
    save_image(&out.image, &a.io.out)
}

fn run_warp(a: &WarpArgs) -> lerf_core::Result<()> {
    let src = load_image(&a.io.input)?;
    let t = GeometricTransform::backward_homography(load_homography(&a.matrix)?);
    let dims = (a.height.unwrap_or(src.height()), a.width.unwrap_or(src.width()));
    let out = render(&src, &t, dims, &a.kernel, PreprocessConfig::Identity)?;
    log::info!("{:.1}% of target pixels valid", 100.0 * out.mask.fraction());
    save_image(&out.image, &a.io.out)?;
    if let Some(p) = &a.emit_mask {
        save_image(&out.mask.to_image(), p)?;
    }
    Ok(())
}

fn run_flow_warp(a: &FlowWarpArgs) -> lerf_core::Result<()> {
    let src = load_image(&a.io.input)?;
    let flow = load_flow(&a.flow)?;
    let dims = (flow.height, flow.width);
    let t = GeometricTransform::Flow(flow);
    let out = render(&src, &t, dims, &a.kernel, PreprocessConfig::Identity)?;
    save_image(&out.image, &a.io.out)?;
    if let Some(p) = &a.emit_mask {
        save_image(&out.mask.to_image(), p)?;
    }
    Ok(())
}

fn method_for(kernel: KernelArg, lut: Option<&Path>) -> lerf_core::Result<Method> {
    Ok(match bank_for(kernel, lut)? {
        Some(bank) => Method::Lerf { bank, preproc: PreprocessConfig::Identity },
        None => Method::Fixed(kernel.family()),
    })
}

fn finish_bench(report: &BenchReport, csv: Option<&Path>) -> lerf_core::Result<()> {
    print!("{}", report.pretty());
    if let Some(p) = csv {
        report.write_csv(p)?;
    }
    Ok(())
}

fn run() -> lerf_core::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Resize(a) => run_resize(&a),
        Command::Warp(a) => run_warp(&a),
        Command::FlowWarp(a) => run_flow_warp(&a),
        Command::Bench(a) => {
            let tasks = BenchTask::parse_scales(&a.tasks).map_err(|e| misuse(e.to_string()))?;
            let report = bench_run(&a.dataset, &tasks, &method_for(a.kernel, a.lut.as_deref())?)?;
            finish_bench(&report, a.csv.as_deref())
        }
        Command::WarpBench(a) => {
            let tasks = [BenchTask::Warp { matrices: a.matrices.clone() }];
            let report = bench_run(&a.dataset, &tasks, &method_for(a.kernel, a.lut.as_deref())?)?;
            finish_bench(&report, a.csv.as_deref())
        }
        Command::MakeBank(a) => {
            let family = a.kernel.family();
            if !family.is_adaptive() {
                return Err(misuse(format!("{} has no LUT bank", family.name())));
            }
            let bank = match a.kind {
                BankKind::Frozen if a.enhancer => return Err(misuse("--enhancer needs --kind structure")),
                BankKind::Frozen => frozen_bank(family)?,
                BankKind::Structure => structure_bank(family, a.enhancer)?,
            };
            save_lut_bank(&bank, &a.out)?;
            println!("{} {:016x}", a.out.display(), bank.digest());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
