//! The sweep pipeline and the single-step operations behind each subcommand.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, SchemeEntry};
use crate::error::{Error, Result};
use crate::fmt::fmt_sig;
use crate::illumination::{
    classify_scheme_with, fluence_surface, fluence_volume, FluenceMap, IlluminationScheme, Lattice,
    SchemeClass,
};
use crate::metrics::{contrast_with, count_nodes_with, MetricsReport};
use crate::pa_forward::{make_vessel_phantom_with, simulate, Scene, SignalFrame};
use crate::recon::{pipeline_with, ReconImage};
use crate::zoom::{solve_trajectory, verify_trajectory, VerificationReport, ZoomTrajectory};

/// Keeps the noise stream independent of the phantom stream for the same seed.
const NOISE_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn noise_seed(seed: u64) -> u64 {
    seed ^ NOISE_SEED_MIX
}

pub fn phantom(cfg: &RunConfig) -> Result<Scene> {
    make_vessel_phantom_with(cfg.scene.n_crossings, &cfg.scene.phantom, cfg.seed)
}

/// Fluence volume in the imaging plane (y = 0) for one scheme, deep enough for
/// the phantom and wide enough for both footprints and the phantom FOV.
pub fn imaging_fluence(cfg: &RunConfig, scheme: &IlluminationScheme) -> Result<FluenceMap> {
    let fov = cfg.scene.phantom.fov;
    let mut lattice = Lattice::for_scheme(scheme)?;
    let need_x = fov.x_min.abs().max(fov.x_max.abs()) + 1.0;
    if lattice.x_max() < need_x {
        lattice = Lattice::symmetric(need_x, lattice.y_max(), lattice.dx)?;
    }
    let surface = fluence_surface(scheme, &lattice)?.row(0.0)?;
    let dz = cfg.illumination.depth_step_mm;
    let nz = (fov.z_max / dz).ceil() as usize + 2;
    fluence_volume(&surface, cfg.scene.phantom.background_mu_eff, nz, dz)
}

/// Forward-simulated frame at storage precision, exactly as written to PAF1.
pub fn simulate_scheme(
    cfg: &RunConfig,
    scene: &Scene,
    scheme: &IlluminationScheme,
) -> Result<SignalFrame> {
    let fluence = imaging_fluence(cfg, scheme)?;
    let acq = cfg.acquisition.config(noise_seed(cfg.seed));
    Ok(simulate(scene, &fluence, &cfg.array, &acq)?.to_storage_precision())
}

/// `c` in m/s.
pub fn reconstruct(cfg: &RunConfig, frame: &SignalFrame, c: f64) -> Result<ReconImage> {
    pipeline_with(
        frame,
        &cfg.array,
        &cfg.recon.grid()?,
        c,
        &cfg.recon.options(),
    )
}

pub fn measure(
    cfg: &RunConfig,
    scene: &Scene,
    image: &ReconImage,
    class: SchemeClass,
    scheme: IlluminationScheme,
) -> Result<MetricsReport> {
    let (roi, bg) = cfg.metrics.roi.masks(&image.grid, &scene.segments)?;
    Ok(MetricsReport {
        scheme,
        class: class.label,
        contrast: contrast_with(image, &roi, &bg, cfg.metrics.contrast)?,
        node_count: count_nodes_with(image, &cfg.metrics.nodes)?,
        roi: cfg.metrics.roi,
    })
}

#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub report: MetricsReport,
    pub image: ReconImage,
}

/// Classify, illuminate, simulate, reconstruct and measure one scheme.
pub fn evaluate_scheme(
    cfg: &RunConfig,
    scene: &Scene,
    entry: SchemeEntry,
) -> Result<SchemeOutcome> {
    let run = || -> Result<SchemeOutcome> {
        let scheme = cfg.illumination.scheme(entry.d_mm, entry.theta_deg);
        let class = classify_scheme_with(&scheme, cfg.illumination.thresholds)?;
        let frame = simulate_scheme(cfg, scene, &scheme)?;
        let image = reconstruct(cfg, &frame, scene.sound_speed)?;
        let report = measure(cfg, scene, &image, class, scheme)?;
        Ok(SchemeOutcome { report, image })
    };
    run().map_err(|e| Error::Scheme {
        d_mm: entry.d_mm,
        theta_deg: entry.theta_deg,
        source: Box::new(e),
    })
}

/// Evaluate every sweep entry, in parallel, returning results in list order.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SchemeOutcome>> {
    let entries = cfg.sweep.entries();
    if entries.is_empty() {
        return Err(Error::invalid("sweep", "no schemes listed"));
    }
    cfg.validate()?;
    let scene = phantom(cfg)?;
    entries
        .par_iter()
        .map(|e| evaluate_scheme(cfg, &scene, *e))
        .collect()
}

/// Index of the highest-contrast row; the first one on ties.
pub fn best_index(outcomes: &[SchemeOutcome]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if best.is_none_or(|b| o.report.contrast > outcomes[b].report.contrast) {
            best = Some(i);
        }
    }
    best
}

pub const SWEEP_CSV_HEADER: &str = "d_mm,theta_deg,class,contrast,node_count,best";

pub fn write_sweep_csv<W: Write>(outcomes: &[SchemeOutcome], mut w: W) -> std::io::Result<()> {
    let best = best_index(outcomes);
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for (i, o) in outcomes.iter().enumerate() {
        writeln!(w, "{},{}", o.report.csv_row(), u8::from(best == Some(i)))?;
    }
    w.flush()
}

/// File stem for a scheme's image, e.g. `scheme_d12_t45`.
pub fn scheme_stem(scheme: &IlluminationScheme) -> String {
    format!(
        "scheme_d{}_t{}",
        fmt_sig(scheme.d_mm, 9),
        fmt_sig(scheme.theta_deg, 9)
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Write `sweep.csv` plus one PGM and sidecar per scheme; returns the CSV path.
pub fn write_sweep(outcomes: &[SchemeOutcome], out: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    for o in outcomes {
        let stem = scheme_stem(&o.report.scheme);
        o.image.write_pgm(
            create(&out.join(format!("{stem}.pgm")))?,
            create(&out.join(format!("{stem}.csv")))?,
        )?;
    }
    let csv = out.join("sweep.csv");
    write_sweep_csv(outcomes, create(&csv)?)?;
    Ok(csv)
}

pub fn zoom_solve(cfg: &RunConfig) -> Result<(ZoomTrajectory, VerificationReport)> {
    let z = &cfg.zoom;
    let traj = solve_trajectory(&z.config()?, z.samples)?;
    let report = verify_trajectory(&traj, &z.probe_heights_mm)?;
    Ok((traj, report))
}

/// What `simulate` leaves next to the frame so later steps know the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationRecord {
    pub scheme: IlluminationScheme,
    pub scene: Scene,
}

pub const FRAME_FILE: &str = "frame.paf";
pub const SCENE_FILE: &str = "scene.json";
pub const IMAGE_FILE: &str = "image.pgm";
pub const IMAGE_SIDECAR: &str = "image.csv";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn write_simulation(frame: &SignalFrame, record: &SimulationRecord, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut w = create(&out.join(FRAME_FILE))?;
    frame.write_paf(&mut w)?;
    w.flush()?;
    let json =
        serde_json::to_string_pretty(record).map_err(|e| Error::invalid("scene record", e))?;
    std::fs::write(out.join(SCENE_FILE), json + "\n")?;
    Ok(())
}

pub fn read_record(path: &Path) -> Result<SimulationRecord> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::invalid("scene record", e))
}

pub fn read_frame(path: &Path) -> Result<SignalFrame> {
    SignalFrame::read_paf(std::io::BufReader::new(File::open(path)?))
}

pub fn write_image(image: &ReconImage, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    image.write_pgm(
        create(&out.join(IMAGE_FILE))?,
        create(&out.join(IMAGE_SIDECAR))?,
    )?;
    Ok(())
}

pub fn read_image(pgm: &Path, sidecar: &Path) -> Result<ReconImage> {
    let side = std::fs::read_to_string(sidecar)?;
    ReconImage::read_pgm(std::io::BufReader::new(File::open(pgm)?), &side)
}
