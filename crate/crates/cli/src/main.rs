use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use callisense_core::compare::{build_report, DEFAULT_GRID_MS, DEFAULT_SAMPLES};
use callisense_core::ingest::Size;
use callisense_core::model::{Role, ValidationLimits};
use callisense_core::pipeline::{load_glyph_session, load_session, run, write_outputs, PipelineConfig, ProcessOptions};
use callisense_core::synth::{
    generate_session, read_script, score_against_truth, write_session, GroundTruth, Noise, Occlusion,
    SynthOptions,
};

#[derive(Parser)]
#[command(name = "callisense", version, about = "Brush-writing process capture and comparison")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reconstruct a session from a frame manifest and its sensor logs.
    Process(ProcessArgs),
    /// Render a scripted synthetic session with ground truth.
    Synth(SynthArgs),
    /// Compare a teacher session with a student session.
    Compare(CompareArgs),
    /// Score a processed session against synthetic ground truth.
    Score(ScoreArgs),
    /// Serve a directory of sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ProcessArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// JSON config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Session id (default: output file stem).
    #[arg(long)]
    id: Option<String>,
    #[arg(long, default_value = "teacher")]
    role: Role,
    #[arg(long, default_value = "")]
    label: String,
    /// Keep rectified frames next to the session for the timeline view.
    #[arg(long)]
    keep_frames: bool,
    #[arg(long)]
    ink_threshold: Option<u8>,
    #[arg(long)]
    slack_ms: Option<i64>,
    #[arg(long)]
    n_tiers: Option<u32>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    script: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    fps: u32,
    #[arg(long, default_value_t = 100)]
    hz: u32,
    #[arg(long, default_value_t = 256)]
    width: u32,
    #[arg(long, default_value_t = 256)]
    height: u32,
    #[arg(long, default_value_t = 0.0)]
    gap_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pressure_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    angle_noise: f64,
    /// Hide ink around the tip for this many frames at a time.
    #[arg(long)]
    occlusion_k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    occlusion_every: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    student: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_MS)]
    grid_ms: i64,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Built UI assets to serve at `/`.
    #[arg(long)]
    ui: Option<PathBuf>,
}

/// Exit 2: bad input. Exit 3: processing failed.
enum Failure {
    Input(anyhow::Error),
    Processing(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Processing(_) => 3,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

fn processing(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Processing(e.into())
}

fn cmd_process(a: ProcessArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p).map_err(input)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = a.ink_threshold {
        cfg.ingest.ink_threshold = v;
    }
    if let Some(v) = a.slack_ms {
        cfg.segment.slack_ms = v;
    }
    if let Some(v) = a.n_tiers {
        cfg.fusion.n_tiers = v;
    }
    let id = a.id.clone().unwrap_or_else(|| {
        a.out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "session".into())
    });
    let opts = ProcessOptions {
        id,
        role: a.role,
        character_label: a.label,
        keep_frames: a.keep_frames,
    };
    let stage = |e: callisense_core::pipeline::PipelineError| {
        if e.is_input_error() {
            input(e)
        } else {
            processing(e)
        }
    };
    let result = run(&a.manifest, &cfg, &a.out, &opts).map_err(stage)?;
    write_outputs(&a.out, &result, &cfg.validation_limits()).map_err(stage)?;
    println!("{}: {}", a.out.display(), result.summary);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let script = read_script(&a.script).map_err(input)?;
    let opts = SynthOptions {
        fps: a.fps,
        sensor_hz: a.hz,
        noise: Noise {
            gap_px_sd: a.gap_noise,
            pressure_sd: a.pressure_noise,
            angle_sd_deg: a.angle_noise,
        },
        seed: a.seed,
        canvas: Size { w: a.width, h: a.height },
        occlusion: a.occlusion_k.map(|k| Occlusion {
            k_frames: k,
            every_frames: a.occlusion_every,
        }),
    };
    let out = generate_session(&script, &opts).map_err(input)?;
    write_session(&a.out, &out).map_err(processing)?;
    println!(
        "{}: strokes={} frames={}",
        a.out.display(),
        out.truth.strokes.len(),
        out.frames.len()
    );
    Ok(())
}

fn write_file(path: &Path, body: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn cmd_compare(a: CompareArgs) -> CmdResult {
    let limits = ValidationLimits::default();
    let t = load_glyph_session(&a.teacher, &limits).map_err(input)?;
    let s = load_glyph_session(&a.student, &limits).map_err(input)?;
    let report = build_report(&t, &s, a.samples, a.grid_ms)
        .context("compare")
        .map_err(processing)?;
    write_file(&a.out, &report.to_json()).map_err(processing)?;
    println!(
        "{}: pairs={} mismatched={}",
        a.out.display(),
        report.stroke_count,
        report.mismatch.len()
    );
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> CmdResult {
    let (session, _) = load_session(&a.session, &ValidationLimits::default()).map_err(input)?;
    let truth = GroundTruth::read(&a.truth).map_err(input)?;
    let m = score_against_truth(&session, &truth);
    println!("{}", serde_json::to_string_pretty(&m).map_err(processing)?);
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> CmdResult {
    let rt = tokio::runtime::Runtime::new().map_err(processing)?;
    rt.block_on(callisense_server::serve(&a.data, a.port, a.ui.as_deref()))
        .with_context(|| format!("serving {}", a.data.display()))
        .map_err(input)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CALLISENSE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Process(a) => cmd_process(a),
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Score(a) => cmd_score(a),
        Cmd::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Input(e) | Failure::Processing(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
