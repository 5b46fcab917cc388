//! `pano`: detect, describe, match, stitch and bench from the command line.

mod exit;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pano_core::descriptor::{write_binary, DescriptorRecord};
use pano_core::eval::{
    emit_report, emit_timings, generate_sequence, run_variant, ReportFormat, SequenceParams, Variant,
};
use pano_core::pipeline::{timings_csv, FrameFeatures, Pipeline};
use pano_core::stitcher::{stitch_sequence, StitchFailure, StitchOutput};
use pano_core::synth::textured_image;
use pano_core::{load_image, save_image, Config, Corner, GrayImage};
use serde_json::json;

use exit::{ExitClass, Usage};

#[derive(Parser, Debug)]
#[command(name = "pano", version, about = "Harris + CORDIC descriptor panorama stitching")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML config file; sections mirror `pano_core::Config`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Config override, e.g. `--set harris.alpha=0.02`. Repeatable; wins over the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for consensus sampling and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; stdout when omitted (stitch defaults to `panorama.png`).
    #[arg(long, short, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Output format (default: csv for bench, json otherwise).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

impl Global {
    fn format(&self) -> Format {
        self.format.unwrap_or(Format::Json)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Harris corners of one image.
    Detect {
        image: PathBuf,
        /// Also write a PNG with each corner marked.
        #[arg(long, value_name = "PATH")]
        annotate: Option<PathBuf>,
    },
    /// Descriptors for the corners of one image.
    Describe {
        image: PathBuf,
        /// Packed little-endian records instead of `--format`.
        #[arg(long)]
        binary: bool,
    },
    /// Matches and the estimated transform between two images.
    Match { image_a: PathBuf, image_b: PathBuf },
    /// Stitch an ordered frame sequence into a panorama.
    Stitch {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Compare the classic and optimized variants on a synthetic pan.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Master image to crop frames from; a seeded synthetic texture when omitted.
    #[arg(long)]
    master: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    /// Horizontal motion per frame in pixels (at most 10% of frame width).
    #[arg(long, default_value_t = 48.0)]
    dx: f64,
    /// Rotation per frame in degrees (at most 1.2).
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Gaussian noise sigma in gray levels.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 640)]
    frame_width: usize,
    #[arg(long, default_value_t = 480)]
    frame_height: usize,
    /// Per-stage timing CSV destination.
    #[arg(long, value_name = "PATH")]
    timings: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let class = ExitClass::of(&err);
            eprintln!("error: {err:#}");
            ExitCode::from(class.code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let config = load_config(g)?;
    match &cli.command {
        Command::Detect { image, annotate } => detect(g, &config, image, annotate.as_deref()),
        Command::Describe { image, binary } => describe(g, &config, image, *binary),
        Command::Match { image_a, image_b } => match_pair(g, &config, image_a, image_b),
        Command::Stitch { images } => stitch(g, &config, images),
        Command::Bench(args) => bench(g, &config, args),
    }
}

fn load_config(g: &Global) -> Result<Config> {
    let mut overrides = Vec::with_capacity(g.overrides.len() + 1);
    for o in &g.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Usage(format!("--set expects KEY=VALUE, got '{o}'")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = g.seed {
        overrides.push(("matcher.seed".into(), seed.to_string()));
    }
    Ok(Config::load(g.config.as_deref(), &overrides)?)
}

fn emit(g: &Global, bytes: &[u8]) -> Result<()> {
    match &g.output {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn features(pipeline: &Pipeline, img: &GrayImage, index: usize) -> Result<FrameFeatures> {
    Ok(pipeline.extract(img, index, &mut Vec::new())?)
}

fn csv_or_text(format: Format, header: &str, rows: impl Iterator<Item = Vec<String>>) -> String {
    let sep = if format == Format::Csv { "," } else { " " };
    let mut s = String::new();
    if format == Format::Csv {
        s.push_str(header);
        s.push('\n');
    }
    for r in rows {
        s.push_str(&r.join(sep));
        s.push('\n');
    }
    s
}

fn pretty(v: &serde_json::Value) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn detect(g: &Global, config: &Config, path: &Path, annotate: Option<&Path>) -> Result<()> {
    let img = load_image(path)?;
    let pipeline = Pipeline::new(*config)?;
    let grads = pipeline.gradients(&img)?;
    let corners = pano_core::detect_corners(&grads, &config.harris)?;
    let out = match g.format() {
        Format::Json => pretty(&serde_json::to_value(&corners)?)?,
        f => csv_or_text(
            f,
            "x,y,response",
            corners.iter().map(|c| vec![c.x.to_string(), c.y.to_string(), format!("{:.6}", c.response)]),
        )
        .into_bytes(),
    };
    emit(g, &out)?;
    if let Some(p) = annotate {
        save_image(p, &mark_corners(&img, &corners))?;
    }
    Ok(())
}

/// Copy of `img` with a 5-pixel cross on each corner, drawn in whichever of
/// black or white contrasts with the local intensity.
fn mark_corners(img: &GrayImage, corners: &[Corner]) -> GrayImage {
    let mut out = img.clone();
    for c in corners {
        let (x, y) = (c.x as i64, c.y as i64);
        let ink = if img.get(c.x as usize, c.y as usize) < 128 { 255 } else { 0 };
        for d in -2i64..=2 {
            for (px, py) in [(x + d, y), (x, y + d)] {
                if px >= 0 && py >= 0 && (px as usize) < img.width() && (py as usize) < img.height() {
                    out.set(px as usize, py as usize, ink);
                }
            }
        }
    }
    out
}

fn describe(g: &Global, config: &Config, path: &Path, binary: bool) -> Result<()> {
    let img = load_image(path)?;
    let pipeline = Pipeline::new(*config)?;
    let feats = features(&pipeline, &img, 0)?;
    let out = if binary {
        let mut buf = Vec::new();
        write_binary(&feats.descriptors, &mut buf)?;
        buf
    } else {
        match g.format() {
            Format::Json => {
                let records: Vec<DescriptorRecord> = feats.descriptors.iter().map(DescriptorRecord::from).collect();
                pretty(&serde_json::to_value(records)?)?
            }
            f => {
                let header = std::iter::once("x,y,angle".to_string())
                    .chain((0..pano_core::descriptor::DESCRIPTOR_LEN).map(|i| format!("v{i}")))
                    .collect::<Vec<_>>()
                    .join(",");
                let rows = feats.descriptors.iter().map(|d| {
                    let mut r = vec![d.corner.x.to_string(), d.corner.y.to_string(), format!("{}", d.main_angle_deg)];
                    r.extend(d.vec.iter().map(|v| format!("{v:.7}")));
                    r
                });
                csv_or_text(f, &header, rows).into_bytes()
            }
        }
    };
    emit(g, &out)
}

fn match_pair(g: &Global, config: &Config, path_a: &Path, path_b: &Path) -> Result<()> {
    let (a, b) = (load_image(path_a)?, load_image(path_b)?);
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(pano_core::Error::DimensionMismatch(format!(
            "{} is {}x{}, {} is {}x{}",
            path_a.display(),
            a.width(),
            a.height(),
            path_b.display(),
            b.width(),
            b.height()
        ))
        .into());
    }
    let pipeline = Pipeline::new(*config)?;
    let (fa, fb) = (features(&pipeline, &a, 0)?, features(&pipeline, &b, 1)?);
    let outcome = pipeline.align_pair(&fa, &fb, 0, &mut Vec::new())?;
    let (ca, cb) = (fa.descriptor_corners(), fb.descriptor_corners());
    let rows: Vec<serde_json::Value> = outcome
        .matches
        .matches
        .iter()
        .map(|m| {
            json!({
                "index_a": m.index_a, "index_b": m.index_b,
                "xa": ca[m.index_a].x, "ya": ca[m.index_a].y,
                "xb": cb[m.index_b].x, "yb": cb[m.index_b].y,
                "distance": m.distance, "ratio": m.ratio,
            })
        })
        .collect();
    let transform = outcome.transform.as_ref().ok();
    let out = match g.format() {
        Format::Json => pretty(&json!({
            "candidate_pairs": outcome.matches.candidate_pairs,
            "full_frame_retry": outcome.fell_back,
            "matches": rows,
            "transform": transform,
            "error": outcome.transform.as_ref().err().map(|e| e.to_string()),
        }))?,
        f => {
            let fields = ["index_a", "index_b", "xa", "ya", "xb", "yb", "distance", "ratio"];
            let mut s = String::new();
            if f == Format::Text {
                match transform {
                    Some(t) => s.push_str(&format!(
                        "# transform dx={} dy={} theta_deg={} inliers={} residual_rms={}\n",
                        t.dx, t.dy, t.theta_deg, t.inliers, t.residual_rms
                    )),
                    None => s.push_str("# transform none\n"),
                }
            }
            let body = rows.iter().map(|r| fields.iter().map(|k| r[k].to_string()).collect());
            s.push_str(&csv_or_text(f, &fields.join(","), body));
            s.into_bytes()
        }
    };
    emit(g, &out)?;
    outcome.transform.map(|_| ()).map_err(Into::into)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "panorama".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_stitch(out: &StitchOutput, pano_path: &Path) -> Result<()> {
    save_image(pano_path, out.panorama.canvas())?;
    let log = sibling(pano_path, ".transforms.json");
    std::fs::write(&log, out.log_json() + "\n").with_context(|| format!("writing {}", log.display()))?;
    let timing = sibling(pano_path, ".timing.csv");
    std::fs::write(&timing, timings_csv(&out.timings)).with_context(|| format!("writing {}", timing.display()))?;
    Ok(())
}

fn stitch(g: &Global, config: &Config, paths: &[PathBuf]) -> Result<()> {
    if paths.len() < 2 {
        return Err(Usage(format!("stitch needs at least 2 images, got {}", paths.len())).into());
    }
    let frames = paths.iter().map(load_image).collect::<pano_core::Result<Vec<_>>>()?;
    let pano_path = g.output.clone().unwrap_or_else(|| PathBuf::from("panorama.png"));
    match stitch_sequence(&frames, config) {
        Ok(out) => write_stitch(&out, &pano_path),
        Err(StitchFailure { error, partial }) => {
            if let Some(out) = partial {
                write_stitch(&out, &pano_path)?;
                eprintln!("partial panorama of {} frame(s) written to {}", out.log.len() + 1, pano_path.display());
            }
            Err(error.into())
        }
    }
}

/// Master large enough for `p`: frames advance along x and stay vertically centered.
fn synthetic_master(p: &SequenceParams) -> GrayImage {
    let (w, h) = (p.frame_width as f64, p.frame_height as f64);
    let t = (p.theta_per_frame.abs() * p.n_frames.saturating_sub(1) as f64).to_radians();
    let (bw, bh) = (w * t.cos() + h * t.sin(), w * t.sin() + h * t.cos());
    let width = (p.dx_per_frame.abs() * p.n_frames.saturating_sub(1) as f64 + bw.max(w)).ceil() as usize + 8;
    let height = bh.max(h).ceil() as usize + 8;
    textured_image(width, height, p.seed)
}

fn bench(g: &Global, config: &Config, args: &BenchArgs) -> Result<()> {
    let params = SequenceParams {
        frame_width: args.frame_width,
        frame_height: args.frame_height,
        n_frames: args.frames,
        dx_per_frame: args.dx,
        theta_per_frame: args.theta,
        noise_sigma: args.noise,
        seed: g.seed.unwrap_or(SequenceParams::default().seed),
    };
    if args.frames < 2 {
        return Err(Usage(format!("--frames must be at least 2, got {}", args.frames)).into());
    }
    params.validate().map_err(|e| Usage(e.to_string()))?;
    let master = match &args.master {
        Some(p) => load_image(p)?,
        None => synthetic_master(&params),
    };
    let seq = generate_sequence(&master, &params)?;
    let reports = [Variant::ClassicFull, Variant::OptimizedHalf]
        .into_iter()
        .map(|v| run_variant(&seq, v, config))
        .collect::<pano_core::Result<Vec<_>>>()?;
    let format = match g.format.unwrap_or(Format::Csv) {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
        Format::Text => ReportFormat::Text,
    };
    emit(g, emit_report(&reports, format)?.as_bytes())?;
    if let Some(p) = &args.timings {
        std::fs::write(p, emit_timings(&reports)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
