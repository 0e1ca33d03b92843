//! Command-line front end: `zoom-solve`, `sweep`, `simulate`, `reconstruct`, `metrics`.

mod config;
mod run;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::fmt::fmt_sig;
use crate::illumination::classify_scheme_with;
use crate::metrics::MetricsReport;

pub use config::{
    AcquisitionSection, IlluminationSection, MetricsSection, ReconSection, RunConfig, SceneSection,
    SchemeEntry, SweepSection, ZoomSection,
};
pub use run::{
    best_index, evaluate_scheme, imaging_fluence, measure, noise_seed, phantom, read_frame,
    read_image, read_record, reconstruct, run_sweep, scheme_stem, simulate_scheme, write_image,
    write_simulation, write_sweep, write_sweep_csv, zoom_solve, SchemeOutcome, SimulationRecord,
    FRAME_FILE, IMAGE_FILE, IMAGE_SIDECAR, METRICS_FILE, SCENE_FILE, SWEEP_CSV_HEADER,
};

pub const ZOOM_CSV: &str = "zoom_trajectory.csv";

#[derive(Debug, Parser)]
#[command(
    name = "lapai",
    version,
    about = "Zoom-probe design, illumination sweeps and PA imaging"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N", env = "LAPAI_THREADS")]
    pub threads: Option<usize>,
    /// Skip wavelet denoising before beamforming.
    #[arg(long, global = true)]
    pub no_denoise: bool,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct SchemeArgs {
    /// Beam diameter (mm); defaults to the first sweep entry.
    #[arg(long)]
    pub d_mm: Option<f64>,
    /// Incidence angle (degrees); defaults to the first sweep entry.
    #[arg(long)]
    pub theta_deg: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the zoom trajectory and verify it by ray tracing.
    ZoomSolve,
    /// Evaluate every illumination scheme in the config.
    Sweep,
    /// Forward-simulate one scheme and write the PAF1 frame and scene record.
    Simulate(SchemeArgs),
    /// Beamform a PAF1 frame into an envelope image.
    Reconstruct {
        /// Defaults to `<out>/frame.paf`.
        #[arg(long)]
        frame: Option<PathBuf>,
    },
    /// Contrast and node count of a reconstructed image.
    Metrics {
        /// Defaults to `<out>/image.pgm`; the sidecar is the same path with `.csv`.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Defaults to `<out>/scene.json`.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if cli.global.no_denoise {
        cfg.recon.denoise = false;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<i32> {
    if matches!(cli.command, Command::Sweep) && cli.global.config.is_none() {
        return Err(Error::invalid("arguments", "sweep requires --config"));
    }
    let cfg = load_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid("threads", e))?;
    pool.install(|| dispatch(cli, &cfg))
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<i32> {
    let out = cli.global.out.as_path();
    match &cli.command {
        Command::ZoomSolve => cmd_zoom_solve(cfg, out),
        Command::Sweep => cmd_sweep(cfg, out),
        Command::Simulate(s) => cmd_simulate(cfg, *s, out),
        Command::Reconstruct { frame } => {
            let frame = frame.clone().unwrap_or_else(|| out.join(FRAME_FILE));
            cmd_reconstruct(cfg, &frame, out)
        }
        Command::Metrics { image, scene } => {
            let image = image.clone().unwrap_or_else(|| out.join(IMAGE_FILE));
            let scene = scene.clone().unwrap_or_else(|| out.join(SCENE_FILE));
            cmd_metrics(cfg, &image, &scene, out)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Exit 0 when every invariant holds, 2 otherwise.
pub fn cmd_zoom_solve(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let (traj, report) = zoom_solve(cfg)?;
    std::fs::create_dir_all(out)?;
    let mut w = create(&out.join(ZOOM_CSV))?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    let (lo, hi) = traj.expansion_range();
    println!("states: {}", traj.states.len());
    println!("expansion range: {} .. {}", fmt_sig(lo, 9), fmt_sig(hi, 9));
    println!("max afocality residual (rad): {:e}", report.max_slope);
    println!("max conservation residual: {:e}", report.max_conservation);
    println!("max height error: {:e}", report.max_height_error);
    println!("variator line residual (mm): {:e}", report.linearity);
    println!("max root product error: {:e}", report.max_vieta);
    let pass = report.passes();
    println!("verification: {}", if pass { "pass" } else { "FAIL" });
    Ok(if pass { 0 } else { 2 })
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let outcomes = run_sweep(cfg)?;
    let csv = write_sweep(&outcomes, out)?;
    let best = best_index(&outcomes);
    for (i, o) in outcomes.iter().enumerate() {
        let r = &o.report;
        println!(
            "d={} theta={} {} contrast={} nodes={}{}",
            fmt_sig(r.scheme.d_mm, 6),
            fmt_sig(r.scheme.theta_deg, 6),
            r.class.as_str(),
            fmt_sig(r.contrast, 6),
            r.node_count,
            if best == Some(i) { "  <- best" } else { "" }
        );
    }
    println!("wrote {}", csv.display());
    Ok(0)
}

fn pick_scheme(cfg: &RunConfig, s: SchemeArgs) -> SchemeEntry {
    let first = cfg.sweep.entries().first().copied().unwrap_or(SchemeEntry {
        d_mm: 20.0,
        theta_deg: 45.0,
    });
    SchemeEntry {
        d_mm: s.d_mm.unwrap_or(first.d_mm),
        theta_deg: s.theta_deg.unwrap_or(first.theta_deg),
    }
}

pub fn cmd_simulate(cfg: &RunConfig, s: SchemeArgs, out: &Path) -> Result<i32> {
    cfg.validate()?;
    let e = pick_scheme(cfg, s);
    let scheme = cfg.illumination.scheme(e.d_mm, e.theta_deg);
    scheme.validate()?;
    let scene = phantom(cfg)?;
    let frame = simulate_scheme(cfg, &scene, &scheme)?;
    write_simulation(&frame, &SimulationRecord { scheme, scene }, out)?;
    println!("wrote {}", out.join(FRAME_FILE).display());
    Ok(0)
}

pub fn cmd_reconstruct(cfg: &RunConfig, frame: &Path, out: &Path) -> Result<i32> {
    cfg.validate()?;
    let frame = read_frame(frame)?;
    let c = cfg.scene.phantom.sound_speed;
    let image = reconstruct(cfg, &frame, c)?;
    write_image(&image, out)?;
    println!("wrote {}", out.join(IMAGE_FILE).display());
    Ok(0)
}

pub fn cmd_metrics(cfg: &RunConfig, image: &Path, scene: &Path, out: &Path) -> Result<i32> {
    cfg.validate()?;
    let img = read_image(image, &image.with_extension("csv"))?;
    let record = read_record(scene)?;
    let class = classify_scheme_with(&record.scheme, cfg.illumination.thresholds)?;
    let report = measure(cfg, &record.scene, &img, class, record.scheme)?;
    std::fs::create_dir_all(out)?;
    MetricsReport::write_csv(&[report], create(&out.join(METRICS_FILE))?)?;
    println!("{}", MetricsReport::CSV_HEADER);
    println!("{}", report.csv_row());
    Ok(0)
}
