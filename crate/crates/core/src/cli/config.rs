//! JSON run configuration. Every section is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::illumination::{
    ClassThresholds, IlluminationScheme, DEFAULT_PIVOT_HEIGHT_MM, DEFAULT_PIVOT_OFFSET_MM,
    DEFAULT_PULSE_ENERGY_MJ,
};
use crate::metrics::{ContrastKind, NodeOptions, RoiSpec};
use crate::pa_forward::{
    AcquisitionConfig, NoiseReference, PhantomOptions, Point, TransducerArray,
};
use crate::recon::{EnvelopeMethod, ReconGrid, ReconOptions, DEFAULT_LEVELS};
use crate::zoom::ZoomConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives phantom generation and measurement noise.
    pub seed: u64,
    pub zoom: ZoomSection,
    pub illumination: IlluminationSection,
    pub scene: SceneSection,
    pub array: TransducerArray,
    pub acquisition: AcquisitionSection,
    pub recon: ReconSection,
    pub metrics: MetricsSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZoomSection {
    pub f1_mm: f64,
    pub f2_mm: f64,
    pub f3_mm: f64,
    pub zoom_ratio: f64,
    pub m2_long: f64,
    pub m1_long: f64,
    /// Number of states on the solved trajectory.
    pub samples: usize,
    /// Collimated probe-ray heights used by the ray-trace verifier (mm).
    pub probe_heights_mm: [f64; 2],
}

impl Default for ZoomSection {
    fn default() -> Self {
        let d = ZoomConfig::demo();
        Self {
            f1_mm: d.f1,
            f2_mm: d.f2,
            f3_mm: d.f3,
            zoom_ratio: d.zoom_ratio,
            m2_long: d.m2_long,
            m1_long: d.m1_long,
            samples: 200,
            probe_heights_mm: [1.5, -0.75],
        }
    }
}

impl ZoomSection {
    pub fn config(&self) -> Result<ZoomConfig> {
        ZoomConfig::new(
            self.f1_mm,
            self.f2_mm,
            self.f3_mm,
            self.zoom_ratio,
            self.m2_long,
            self.m1_long,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IlluminationSection {
    pub pivot_offset_mm: f64,
    pub pivot_height_mm: f64,
    pub pulse_energy_mj: f64,
    pub thresholds: ClassThresholds,
    /// Depth step of the fluence volume (mm).
    pub depth_step_mm: f64,
}

impl Default for IlluminationSection {
    fn default() -> Self {
        Self {
            pivot_offset_mm: DEFAULT_PIVOT_OFFSET_MM,
            pivot_height_mm: DEFAULT_PIVOT_HEIGHT_MM,
            pulse_energy_mj: DEFAULT_PULSE_ENERGY_MJ,
            thresholds: ClassThresholds::default(),
            depth_step_mm: 0.25,
        }
    }
}

impl IlluminationSection {
    pub fn scheme(&self, d_mm: f64, theta_deg: f64) -> IlluminationScheme {
        IlluminationScheme {
            d_mm,
            theta_deg,
            pivot_offset_mm: self.pivot_offset_mm,
            pivot_height_mm: self.pivot_height_mm,
            pulse_energy_mj: self.pulse_energy_mj,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub n_crossings: usize,
    pub phantom: PhantomOptions,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            n_crossings: 8,
            phantom: PhantomOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSection {
    pub sample_rate_mhz: f64,
    pub n_samples: usize,
    pub t0_us: f64,
    pub noise_snr_db: Option<f64>,
    pub noise_reference: NoiseReference,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        let a = AcquisitionConfig::default();
        Self {
            sample_rate_mhz: a.sample_rate_mhz,
            n_samples: a.n_samples,
            t0_us: a.t0_us,
            noise_snr_db: Some(20.0),
            noise_reference: NoiseReference::Flood {
                fluence_mj_cm2: 1.0,
            },
        }
    }
}

impl AcquisitionSection {
    pub fn config(&self, seed: u64) -> AcquisitionConfig {
        AcquisitionConfig {
            sample_rate_mhz: self.sample_rate_mhz,
            n_samples: self.n_samples,
            t0_us: self.t0_us,
            noise_snr_db: self.noise_snr_db,
            noise_reference: self.noise_reference,
            rng_seed: seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconSection {
    pub denoise: bool,
    pub levels: usize,
    pub envelope: EnvelopeMethod,
    pub center_x_mm: f64,
    pub center_z_mm: f64,
    pub size_mm: f64,
    pub pitch_mm: f64,
}

impl Default for ReconSection {
    fn default() -> Self {
        Self {
            denoise: true,
            levels: DEFAULT_LEVELS,
            envelope: EnvelopeMethod::Hilbert,
            center_x_mm: 0.0,
            center_z_mm: 22.0,
            size_mm: 40.0,
            pitch_mm: 0.2,
        }
    }
}

impl ReconSection {
    pub fn grid(&self) -> Result<ReconGrid> {
        ReconGrid::square(
            Point::new(self.center_x_mm, self.center_z_mm),
            self.size_mm,
            self.pitch_mm,
        )
    }

    pub fn options(&self) -> ReconOptions {
        ReconOptions {
            denoise: self.denoise,
            levels: self.levels,
            envelope: self.envelope,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub roi: RoiSpec,
    pub nodes: NodeOptions,
    pub contrast: ContrastKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeEntry {
    pub d_mm: f64,
    pub theta_deg: f64,
}

/// Schemes to evaluate: the explicit `schemes` list first, then every
/// combination of `d_mm` and `theta_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub schemes: Vec<SchemeEntry>,
    pub d_mm: Vec<f64>,
    pub theta_deg: Vec<f64>,
}

impl SweepSection {
    pub fn entries(&self) -> Vec<SchemeEntry> {
        let mut out = self.schemes.clone();
        for &d_mm in &self.d_mm {
            for &theta_deg in &self.theta_deg {
                out.push(SchemeEntry { d_mm, theta_deg });
            }
        }
        out
    }

    /// The six schemes of the d and θ study: d = 12/16/20 mm at 45°, then
    /// θ = 50/60/87° at d = 20 mm.
    pub fn study_grid() -> Self {
        let s = |d_mm, theta_deg| SchemeEntry { d_mm, theta_deg };
        Self {
            schemes: vec![
                s(12.0, 45.0),
                s(16.0, 45.0),
                s(20.0, 45.0),
                s(20.0, 50.0),
                s(20.0, 60.0),
                s(20.0, 87.0),
            ],
            d_mm: Vec::new(),
            theta_deg: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid("config", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Check every module precondition before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.acquisition.config(self.seed).validate(&self.array)?;
        self.recon.grid()?;
        if self.recon.levels == 0
            || self.acquisition.n_samples < (1usize << self.recon.levels.min(63))
        {
            return Err(Error::invalid(
                "recon",
                "wavelet levels need 1 <= levels and n_samples >= 2^levels",
            ));
        }
        if !(self.illumination.depth_step_mm > 0.0) {
            return Err(Error::invalid("illumination", "depth step must be > 0"));
        }
        let t = self.illumination.thresholds;
        if !(0.0 <= t.dark && t.dark < t.bright && t.bright <= 1.0) {
            return Err(Error::invalid(
                "illumination",
                "need 0 <= dark < bright <= 1",
            ));
        }
        for e in self.sweep.entries() {
            self.illumination.scheme(e.d_mm, e.theta_deg).validate()?;
        }
        let n = self.metrics.nodes;
        if !(n.threshold_fraction > 0.0 && n.threshold_fraction < 1.0) {
            return Err(Error::invalid(
                "metrics",
                "threshold fraction must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}
