//! `blindlens`: detect, compensate and synthesize lens distortion.
//!
//! Exit codes: 0 success, 2 I/O or file format error, 3 degenerate signal
//! (nothing to measure), 4 invalid configuration.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blindlens::detect::{self, Criterion, DetectionConfig, DetectionResult};
use blindlens::hosa::{self, SegmentPolicy, Window};
use blindlens::image::{extract_slices, load_image, save_image, Image};
use blindlens::models::{DistortionModel, ModelKind, ModelRecord, SearchRange};
use blindlens::synthgen::{make_fixture, FixtureSidecar, SceneKind, SceneSpec};
use blindlens::warp::{self, WarpMethod};
use blindlens::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "blindlens", version, about = "Blind lens distortion detection and compensation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate distortion coefficients from one or more images.
    Detect(DetectArgs),
    /// Remove distortion from an image with a known model.
    Undistort(UndistortArgs),
    /// Bicoherence of an image's slices or of a 1-D signal file.
    Bico(BicoArgs),
    /// Write a synthetic fixture and its ground-truth sidecar.
    Synth(SynthArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KindArg {
    Poly1,
    Rational1,
    RationalGeo2,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Poly1 => ModelKind::Poly1,
            KindArg::Rational1 => ModelKind::Rational1,
            KindArg::RationalGeo2 => ModelKind::RationalGeo2,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CriterionArg {
    Max,
    Mean,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum WindowArg {
    Rect,
    Hann,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Inverse,
    Forward,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SceneArg {
    Checkerboard,
    Radial,
    Noise,
}

/// Slice and segmentation settings shared by `detect` and `bico`.
#[derive(Args, Debug)]
struct SliceArgs {
    /// Angular spacing of slices through the center, degrees.
    #[arg(long, default_value_t = detect::DEFAULT_ANGLE_STEP)]
    slices_deg: f64,
    /// Samples per slice.
    #[arg(long, default_value_t = detect::DEFAULT_SAMPLES)]
    samples: usize,
    /// Segment length (power of two).
    #[arg(long, default_value_t = detect::DEFAULT_SEGMENT)]
    segment: usize,
    #[arg(long, value_enum, default_value = "rect")]
    window: WindowArg,
}

impl SliceArgs {
    fn policy(&self) -> SegmentPolicy {
        SegmentPolicy {
            window: match self.window {
                WindowArg::Rect => Window::Rectangular,
                WindowArg::Hann => Window::Hann,
            },
            ..SegmentPolicy::with_length(self.segment)
        }
    }
}

#[derive(Args, Debug)]
struct DetectArgs {
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "rational1")]
    model: KindArg,
    #[arg(long, allow_hyphen_values = true)]
    range_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    range_hi: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// k2 axis of the geometric stage (defaults to the grid around the radial seed).
    #[arg(long = "range-lo-2", allow_hyphen_values = true)]
    range_lo_2: Option<f64>,
    #[arg(long = "range-hi-2", allow_hyphen_values = true)]
    range_hi_2: Option<f64>,
    #[arg(long = "step-2")]
    step_2: Option<f64>,
    #[arg(long, value_enum, default_value = "max")]
    criterion: CriterionArg,
    #[command(flatten)]
    slices: SliceArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// J-curve CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct UndistortArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value = "rational1")]
    model: KindArg,
    #[arg(long, allow_hyphen_values = true)]
    k1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    k2: Option<f64>,
    /// Model record (e.g. a fixture sidecar) instead of --k1/--k2.
    #[arg(long, conflicts_with_all = ["k1", "k2"])]
    sidecar: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "inverse")]
    method: MethodArg,
    #[arg(long, default_value_t = 1)]
    fill_radius: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BicoArgs {
    /// PGM/PNG image, or a text file with one sample per line.
    input: PathBuf,
    #[command(flatten)]
    slices: SliceArgs,
    /// Grid CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "checkerboard")]
    scene: SceneArg,
    #[arg(long, default_value_t = 20)]
    square: usize,
    /// Radial frequencies in cycles per pixel.
    #[arg(long, value_delimiter = ',', default_value = "0.07")]
    freqs: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 320)]
    width: usize,
    #[arg(long, default_value_t = 240)]
    height: usize,
    #[arg(long, value_enum, default_value = "rational1")]
    model: KindArg,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    k1: f64,
    #[arg(long, allow_hyphen_values = true)]
    k2: Option<f64>,
    /// Image path; the sidecar is written next to it with a .json extension.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Lib(Error),
    Io(PathBuf, std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(..) => 2,
            Failure::Lib(Error::Io { .. } | Error::Format(_)) => 2,
            Failure::Lib(Error::Degenerate(_)) => 3,
            Failure::Lib(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Io(p, e) => format!("i/o error on {}: {e}", p.display()),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Lib(Error::InvalidConfig(msg.into()))
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(f) = configure_threads().and_then(|_| run(cli)) {
        eprintln!("error: {}", f.message());
        return ExitCode::from(f.code());
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("BLINDLENS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid(format!("BLINDLENS_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| invalid(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Undistort(a) => cmd_undistort(a),
        Command::Bico(a) => cmd_bico(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| Failure::Io(path.into(), e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Failure::Io(path.into(), e))
}

fn override_range(base: SearchRange, lo: Option<f64>, hi: Option<f64>, step: Option<f64>) -> CliResult<SearchRange> {
    Ok(SearchRange::new(lo.unwrap_or(base.lo), hi.unwrap_or(base.hi), step.unwrap_or(base.step))?)
}

#[derive(Serialize)]
struct DetectReport<'a> {
    inputs: &'a [PathBuf],
    config: &'a DetectionConfig,
    /// First stage of a geometric search.
    radial_stage: Option<&'a DetectionResult>,
    result: &'a DetectionResult,
}

fn cmd_detect(a: DetectArgs) -> CliResult<()> {
    if a.inputs.is_empty() {
        return Err(invalid("detect needs at least one input image"));
    }
    let images = a.inputs.iter().map(load_image).collect::<blindlens::Result<Vec<Image>>>()?;
    let dims = images[0].dims();
    if images.iter().any(|i| i.dims() != dims) {
        return Err(invalid("all input images must share the same dimensions"));
    }
    let kind: ModelKind = a.model.into();
    let center = images[0].center();
    // Stage one of a geometric search runs the rational radial grid.
    let radial_kind = if kind == ModelKind::RationalGeo2 { ModelKind::Rational1 } else { kind };
    let scale = SearchRange::scaled_default(radial_kind, center).step / SearchRange::default_for(radial_kind).step;
    let range1 = override_range(SearchRange::scaled_default(radial_kind, center), a.range_lo, a.range_hi, a.step)?;
    let range2 = if a.range_lo_2.is_some() || a.range_hi_2.is_some() || a.step_2.is_some() {
        let base = SearchRange::scaled_default(ModelKind::Rational1, center);
        Some(override_range(base, a.range_lo_2, a.range_hi_2, a.step_2)?)
    } else {
        None
    };
    let cfg = DetectionConfig {
        range1,
        range2,
        geometric_step: detect::DEFAULT_GEOMETRIC_STEP * scale,
        criterion: match a.criterion {
            CriterionArg::Max => Criterion::Max,
            CriterionArg::Mean => Criterion::Mean,
        },
        angle_step: a.slices.slices_deg,
        n_samples: a.slices.samples,
        segment: a.slices.policy(),
        seed: a.seed,
        ..DetectionConfig::new(kind)
    };
    cfg.validate()?;

    let (radial, result) = if kind == ModelKind::RationalGeo2 {
        let (r, g) = detect::detect_two_stage(&images, &cfg)?;
        (Some(r), g)
    } else {
        (None, detect::detect_radial(&images, &cfg)?)
    };

    if let Some(r) = &radial {
        println!("radial seed: {:.4e}", r.group_mean.k1);
    }
    for (path, r) in a.inputs.iter().zip(&result.per_image) {
        if kind == ModelKind::RationalGeo2 {
            println!("{}: k1={:.4e} k2={:.4e}", path.display(), r.best.k1, r.best.k2);
        } else {
            println!("{}: k={:.4e}", path.display(), r.best.k1);
        }
    }
    if kind == ModelKind::RationalGeo2 {
        println!("group mean: k1={:.4e} k2={:.4e}", result.group_mean.k1, result.group_mean.k2);
    } else {
        println!("group mean: k={:.4e}", result.group_mean.k1);
    }

    if let Some(path) = &a.report {
        let report = DetectReport { inputs: &a.inputs, config: &cfg, radial_stage: radial.as_ref(), result: &result };
        let json = serde_json::to_string_pretty(&report).map_err(|e| invalid(e.to_string()))?;
        write_file(path, |w| writeln!(w, "{json}"))?;
    }
    if let Some(path) = &a.out {
        write_file(path, |w| result.write_curves_csv(w))?;
    }
    Ok(())
}

fn read_model(path: &Path) -> CliResult<ModelRecord> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(path.into(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Lib(Error::Format(format!("{}: {e}", path.display()))))
}

fn cmd_undistort(a: UndistortArgs) -> CliResult<()> {
    let img = load_image(&a.input)?;
    let model = if let Some(side) = &a.sidecar {
        read_model(side)?.model()
    } else {
        let k1 = a.k1.ok_or_else(|| invalid("give --k1 (and --k2 for rational-geo2) or --sidecar"))?;
        let kind: ModelKind = a.model.into();
        let k2 = match kind {
            ModelKind::RationalGeo2 => a.k2.ok_or_else(|| invalid("rational-geo2 needs --k2"))?,
            _ => k1,
        };
        DistortionModel::new(kind, k1, k2, img.center())
    };
    let method = match a.method {
        MethodArg::Inverse => WarpMethod::InverseBilinear,
        MethodArg::Forward => WarpMethod::ForwardFillAverage { radius: a.fill_radius },
    };
    let out = warp::undistort_image(&img, &model, method)?;
    if matches!(method, WarpMethod::ForwardFillAverage { .. }) {
        println!("holes: {}", out.holes);
    }
    save_image(&out.image, &a.out)?;
    Ok(())
}

fn is_image_file(path: &Path) -> CliResult<bool> {
    let bytes = fs::read(path).map_err(|e| Failure::Io(path.into(), e))?;
    Ok(bytes.starts_with(b"P2") || bytes.starts_with(b"P5") || bytes.starts_with(b"\x89PNG"))
}

fn read_signal(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(path.into(), e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Failure::Lib(Error::Format(format!("{}:{}: not a number: '{l}'", path.display(), i + 1))))
        })
        .collect()
}

fn cmd_bico(a: BicoArgs) -> CliResult<()> {
    let mut policy = a.slices.policy();
    let (segments, n1, n2) = if is_image_file(&a.input)? {
        let img = load_image(&a.input)?;
        let mut segs = Vec::new();
        for s in extract_slices(&img, img.center(), a.slices.slices_deg, a.slices.samples)? {
            segs.extend(hosa::segment(&s.samples, &policy)?);
        }
        (segs, img.width(), img.height())
    } else {
        let signal = read_signal(&a.input)?;
        if signal.len() < 2 {
            return Err(Failure::Lib(Error::Format("signal file needs at least 2 samples".into())));
        }
        // A short signal becomes one segment of the largest fitting power of two.
        if signal.len() < policy.length {
            let n = 1usize << signal.len().ilog2();
            policy = SegmentPolicy { length: n, hop: (n / 2).max(1), ..policy };
        }
        let n = signal.len();
        (hosa::segment(&signal, &policy)?, n, 1)
    };
    let grid = hosa::bicoherence(&segments, policy.length)?;
    let j_max = hosa::objective_max(&grid, n1, n2)?;
    let j_mean = hosa::objective_mean(&grid)?;
    println!("segments: {}", segments.len());
    println!("j_max: {j_max:e}");
    println!("j_mean: {j_mean:e}");
    if let Some(path) = &a.out {
        write_file(path, |w| grid.write_csv(w))?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let kind = match a.scene {
        SceneArg::Checkerboard => SceneKind::Checkerboard { square: a.square },
        SceneArg::Radial => SceneKind::RadialSinusoid { frequencies: a.freqs.clone() },
        SceneArg::Noise => SceneKind::Noise { seed: a.seed },
    };
    let spec = SceneSpec::new(kind, a.width, a.height)?;
    let model_kind: ModelKind = a.model.into();
    let model = DistortionModel::new(model_kind, a.k1, a.k2.unwrap_or(a.k1), spec.center());
    let (img, truth) = make_fixture(&spec, &model)?;
    save_image(&img, &a.out)?;
    let sidecar_path = a.out.with_extension("json");
    let sidecar = FixtureSidecar { model: truth.record(), scene: spec };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| invalid(e.to_string()))?;
    write_file(&sidecar_path, |w| writeln!(w, "{json}"))?;
    println!("wrote {} and {}", a.out.display(), sidecar_path.display());
    Ok(())
}
