//! Synthetic photoacoustic channel data.
//!
//! Geometry is 2D: `x` is lateral, `z` is depth below the tissue surface
//! (z = 0). Each absorber is an ideal point source whose amplitude is
//! `mu_a * fluence` (Grüneisen parameter 1); every element is an ideal point
//! receiver and picks up `amplitude * pulse(t - r/c) / r`.

mod phantom;

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::illumination::FluenceMap;

pub use phantom::{
    make_vessel_phantom, make_vessel_phantom_with, segment_intersection, Fov, PhantomOptions,
    Segment,
};

/// Pulse support in units of the envelope width; the wavelet is below 1e-15 beyond it.
const PULSE_SUPPORT: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub z: f64,
}

impl Point {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.z - other.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Absorber {
    pub pos: Point,
    /// Absorption coefficient (1/mm).
    pub mu_a: f64,
    /// Nominal size (mm). Sources are points; the radius is descriptive only.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub absorbers: Vec<Absorber>,
    /// Effective optical attenuation of the background medium (1/mm).
    pub background_mu_eff: f64,
    /// m/s
    pub sound_speed: f64,
    /// Vessel centre lines, when the scene came from the phantom generator.
    #[serde(default)]
    pub segments: Vec<Segment>,
    /// Ground-truth vessel crossings.
    #[serde(default)]
    pub crossings: Vec<Point>,
}

impl Scene {
    pub fn new(absorbers: Vec<Absorber>) -> Self {
        Self {
            absorbers,
            background_mu_eff: 0.0,
            sound_speed: 1500.0,
            segments: Vec::new(),
            crossings: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sound_speed > 0.0) || !self.sound_speed.is_finite() {
            return Err(Error::invalid(
                "scene",
                format!("sound speed {} m/s must be > 0", self.sound_speed),
            ));
        }
        if !(self.background_mu_eff >= 0.0) || !self.background_mu_eff.is_finite() {
            return Err(Error::invalid("scene", "background mu_eff must be >= 0"));
        }
        for (i, a) in self.absorbers.iter().enumerate() {
            if !(a.mu_a >= 0.0)
                || !a.mu_a.is_finite()
                || !a.pos.x.is_finite()
                || !a.pos.z.is_finite()
            {
                return Err(Error::invalid(
                    "scene",
                    format!("absorber {i} has invalid position or mu_a"),
                ));
            }
            if !(a.radius >= 0.0) {
                return Err(Error::invalid(
                    "scene",
                    format!("absorber {i} has negative radius"),
                ));
            }
        }
        Ok(())
    }

    /// Sound speed in mm/µs.
    pub fn c_mm_per_us(&self) -> f64 {
        self.sound_speed * 1e-3
    }

    /// Copy of the scene with every absorption coefficient multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Scene {
        let mut s = self.clone();
        for a in &mut s.absorbers {
            a.mu_a *= k;
        }
        s
    }
}

/// Arc-shaped receiving array. The arc's centre of curvature lies on the probe
/// axis at depth `focus_depth`; the apex is the element nearest the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransducerArray {
    pub n_elements: usize,
    pub arc_radius_mm: f64,
    pub angular_span_deg: f64,
    pub center_frequency_mhz: f64,
    pub fractional_bandwidth: f64,
    pub focus_depth_mm: f64,
}

impl Default for TransducerArray {
    fn default() -> Self {
        Self {
            n_elements: 32,
            arc_radius_mm: 40.0,
            angular_span_deg: 120.0,
            center_frequency_mhz: 2.5,
            fractional_bandwidth: 0.6,
            focus_depth_mm: 20.0,
        }
    }
}

impl TransducerArray {
    pub fn validate(&self) -> Result<()> {
        if self.n_elements == 0 {
            return Err(Error::invalid(
                "transducer array",
                "need at least one element",
            ));
        }
        if !(self.arc_radius_mm > 0.0) || !self.arc_radius_mm.is_finite() {
            return Err(Error::invalid("transducer array", "arc radius must be > 0"));
        }
        if !(0.0..=360.0).contains(&self.angular_span_deg) {
            return Err(Error::invalid(
                "transducer array",
                "angular span must lie in [0, 360] deg",
            ));
        }
        if !(self.center_frequency_mhz > 0.0) || !self.center_frequency_mhz.is_finite() {
            return Err(Error::invalid(
                "transducer array",
                "center frequency must be > 0",
            ));
        }
        if !(self.fractional_bandwidth > 0.0 && self.fractional_bandwidth < 2.0) {
            return Err(Error::invalid(
                "transducer array",
                format!(
                    "fractional bandwidth {} outside (0, 2)",
                    self.fractional_bandwidth
                ),
            ));
        }
        if !self.focus_depth_mm.is_finite() {
            return Err(Error::invalid(
                "transducer array",
                "focus depth must be finite",
            ));
        }
        Ok(())
    }

    /// Angular pitch between adjacent elements (degrees).
    pub fn angular_pitch_deg(&self) -> f64 {
        if self.n_elements > 1 {
            self.angular_span_deg / (self.n_elements - 1) as f64
        } else {
            0.0
        }
    }

    /// Gaussian envelope width `tau` (µs) of the wavelet `exp(-(t/tau)^2) cos(2 pi f0 t)`.
    ///
    /// The amplitude spectrum falls to one half at `f0 ± ln(2)^0.5 / (pi tau)`,
    /// so the -6 dB full width equals `fractional_bandwidth * f0` for this tau.
    pub fn pulse_tau_us(&self) -> f64 {
        2.0 * std::f64::consts::LN_2.sqrt()
            / (std::f64::consts::PI * self.fractional_bandwidth * self.center_frequency_mhz)
    }

    /// Highest frequency (MHz) the array is considered to pass.
    pub fn band_edge_mhz(&self) -> f64 {
        self.center_frequency_mhz * (1.0 + 0.5 * self.fractional_bandwidth)
    }
}

/// Element centres, in element order from the `-x` end to the `+x` end.
pub fn element_positions(array: &TransducerArray) -> Vec<Point> {
    let n = array.n_elements;
    let pitch = array.angular_pitch_deg().to_radians();
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|k| {
            let phi = (k as f64 - mid) * pitch;
            Point::new(
                array.arc_radius_mm * phi.sin(),
                array.focus_depth_mm - array.arc_radius_mm * phi.cos(),
            )
        })
        .collect()
}

/// Unit-peak source wavelet at time `t` (µs).
pub fn pa_pulse(t: f64, array: &TransducerArray) -> f64 {
    let tau = array.pulse_tau_us();
    let e = t / tau;
    (-e * e).exp() * (2.0 * std::f64::consts::PI * array.center_frequency_mhz * t).cos()
}

/// Which noiseless signal the SNR of the added noise is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum NoiseReference {
    /// RMS of the frame being simulated.
    #[default]
    FrameRms,
    /// RMS of the same scene under uniform fluence (mJ/cm²). Gives every
    /// illumination scheme the same absolute noise floor.
    Flood { fluence_mj_cm2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub sample_rate_mhz: f64,
    pub n_samples: usize,
    #[serde(default)]
    pub t0_us: f64,
    /// Additive white Gaussian noise level; `None` for a noiseless frame.
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
    #[serde(default)]
    pub noise_reference: NoiseReference,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            sample_rate_mhz: 40.0,
            n_samples: 2048,
            t0_us: 0.0,
            noise_snr_db: None,
            noise_reference: NoiseReference::FrameRms,
            rng_seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self, array: &TransducerArray) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("acquisition", "need at least one sample"));
        }
        if !self.t0_us.is_finite() {
            return Err(Error::invalid("acquisition", "t0 must be finite"));
        }
        let nyquist = 2.0 * array.band_edge_mhz();
        if !(self.sample_rate_mhz > nyquist) || !self.sample_rate_mhz.is_finite() {
            return Err(Error::invalid(
                "acquisition",
                format!(
                    "sample rate {} MHz must exceed {nyquist} MHz",
                    self.sample_rate_mhz
                ),
            ));
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                return Err(Error::invalid("acquisition", "noise SNR must be finite"));
            }
        }
        if let NoiseReference::Flood { fluence_mj_cm2 } = self.noise_reference {
            if !(fluence_mj_cm2 > 0.0) || !fluence_mj_cm2.is_finite() {
                return Err(Error::invalid(
                    "acquisition",
                    "flood reference fluence must be > 0",
                ));
            }
        }
        Ok(())
    }
}

/// Channel data, `data[k * n_samples + i]` is sample `i` of element `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    pub n_elements: usize,
    pub n_samples: usize,
    pub sample_rate_mhz: f64,
    pub t0_us: f64,
    pub data: Vec<f64>,
}

const PAF_MAGIC: &[u8; 4] = b"PAF1";

impl SignalFrame {
    pub fn zeros(n_elements: usize, n_samples: usize, sample_rate_mhz: f64, t0_us: f64) -> Self {
        Self {
            n_elements,
            n_samples,
            sample_rate_mhz,
            t0_us,
            data: vec![0.0; n_elements * n_samples],
        }
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_samples..(k + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n_samples..(k + 1) * self.n_samples]
    }

    /// Time of sample `i` (µs).
    pub fn time(&self, i: usize) -> f64 {
        self.t0_us + i as f64 / self.sample_rate_mhz
    }

    pub fn rms(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        (self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.n_elements * self.n_samples {
            return Err(Error::invalid(
                "signal frame",
                "data length does not match dimensions",
            ));
        }
        if !(self.sample_rate_mhz > 0.0) || !self.t0_us.is_finite() {
            return Err(Error::invalid("signal frame", "bad sample rate or t0"));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("signal frame", "non-finite samples"));
        }
        Ok(())
    }

    /// Values rounded to the f32 precision used on disk.
    pub fn to_storage_precision(&self) -> SignalFrame {
        let mut f = self.clone();
        for v in &mut f.data {
            *v = *v as f32 as f64;
        }
        f
    }

    /// PAF1: little-endian magic, u32 n_elements, u32 n_samples, f64 sample
    /// rate (MHz), f64 t0 (µs), then row-major f32 samples.
    pub fn write_paf<W: Write>(&self, mut w: W) -> Result<()> {
        let n_el = u32::try_from(self.n_elements)
            .map_err(|_| Error::invalid("signal frame", "too many elements"))?;
        let n_s = u32::try_from(self.n_samples)
            .map_err(|_| Error::invalid("signal frame", "too many samples"))?;
        let mut buf = Vec::with_capacity(28 + 4 * self.data.len());
        buf.extend_from_slice(PAF_MAGIC);
        buf.extend_from_slice(&n_el.to_le_bytes());
        buf.extend_from_slice(&n_s.to_le_bytes());
        buf.extend_from_slice(&self.sample_rate_mhz.to_le_bytes());
        buf.extend_from_slice(&self.t0_us.to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_paf<R: Read>(mut r: R) -> Result<SignalFrame> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let take = |pos: usize, n: usize, what: &str| -> Result<&[u8]> {
            bytes.get(pos..pos + n).ok_or_else(|| Error::Format {
                offset: bytes.len() as u64,
                msg: format!(
                    "PAF1 truncated while reading {what} (expected {n} bytes at offset {pos})"
                ),
            })
        };
        if take(0, 4, "magic")? != PAF_MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "bad PAF1 magic".into(),
            });
        }
        let u32_at = |pos, what| -> Result<u32> {
            Ok(u32::from_le_bytes(take(pos, 4, what)?.try_into().unwrap()))
        };
        let f64_at = |pos, what| -> Result<f64> {
            Ok(f64::from_le_bytes(take(pos, 8, what)?.try_into().unwrap()))
        };
        let n_elements = u32_at(4, "n_elements")? as usize;
        let n_samples = u32_at(8, "n_samples")? as usize;
        let sample_rate_mhz = f64_at(12, "sample rate")?;
        let t0_us = f64_at(20, "t0")?;
        let n = n_elements
            .checked_mul(n_samples)
            .ok_or_else(|| Error::Format {
                offset: 4,
                msg: "PAF1 dimensions overflow".into(),
            })?;
        let body = take(28, 4 * n, "samples")?;
        if bytes.len() > 28 + 4 * n {
            return Err(Error::Format {
                offset: (28 + 4 * n) as u64,
                msg: "trailing bytes after PAF1 samples".into(),
            });
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let frame = SignalFrame {
            n_elements,
            n_samples,
            sample_rate_mhz,
            t0_us,
            data,
        };
        if !(sample_rate_mhz > 0.0) || !t0_us.is_finite() {
            return Err(Error::Format {
                offset: 12,
                msg: "invalid sample rate or t0 in PAF1 header".into(),
            });
        }
        Ok(frame)
    }

    /// One row per sample: `t_us,ch0,ch1,...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t_us")?;
        for k in 0..self.n_elements {
            write!(w, ",ch{k}")?;
        }
        writeln!(w)?;
        for i in 0..self.n_samples {
            write!(w, "{}", crate::fmt::fmt_sig(self.time(i), 9))?;
            for k in 0..self.n_elements {
                write!(
                    w,
                    ",{}",
                    crate::fmt::fmt_sig(self.data[k * self.n_samples + i], 9)
                )?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Fluence (mJ/cm²) at every absorber, in absorber order.
fn absorber_fluence(scene: &Scene, fluence: &FluenceMap) -> Result<Vec<f64>> {
    let y = if fluence.lattice.ny == 1 {
        fluence.lattice.y0
    } else {
        0.0
    };
    scene
        .absorbers
        .iter()
        .enumerate()
        .map(|(index, a)| {
            fluence
                .sample(a.pos.x, y, a.pos.z)
                .ok_or(Error::AbsorberOutsideGrid {
                    index,
                    x_mm: a.pos.x,
                    z_mm: a.pos.z,
                })
        })
        .collect()
}

/// Noiseless traces for source amplitudes `amps`.
fn render(
    scene: &Scene,
    amps: &[f64],
    array: &TransducerArray,
    acq: &AcquisitionConfig,
) -> SignalFrame {
    let elements = element_positions(array);
    let c = scene.c_mm_per_us();
    let fs = acq.sample_rate_mhz;
    let support = PULSE_SUPPORT * array.pulse_tau_us();
    let ns = acq.n_samples;
    let mut frame = SignalFrame::zeros(elements.len(), ns, fs, acq.t0_us);
    frame
        .data
        .par_chunks_mut(ns)
        .zip(elements.par_iter())
        .for_each(|(trace, e)| {
            for (a, &amp) in scene.absorbers.iter().zip(amps) {
                if amp == 0.0 {
                    continue;
                }
                let r = a.pos.dist(e);
                let tof = r / c;
                let lo = ((tof - support - acq.t0_us) * fs).ceil().max(0.0);
                let hi = ((tof + support - acq.t0_us) * fs)
                    .floor()
                    .min(ns as f64 - 1.0);
                if hi < lo {
                    continue;
                }
                let gain = amp / r;
                let lo = lo as usize;
                for (i, v) in trace[lo..=hi as usize].iter_mut().enumerate() {
                    let t = acq.t0_us + (lo + i) as f64 / fs;
                    *v += gain * pa_pulse(t - tof, array);
                }
            }
        });
    frame
}

/// Forward-simulate one acquisition.
pub fn simulate(
    scene: &Scene,
    fluence: &FluenceMap,
    array: &TransducerArray,
    acq: &AcquisitionConfig,
) -> Result<SignalFrame> {
    scene.validate()?;
    array.validate()?;
    acq.validate(array)?;
    let phi = absorber_fluence(scene, fluence)?;
    let amps: Vec<f64> = scene
        .absorbers
        .iter()
        .zip(&phi)
        .map(|(a, f)| a.mu_a * f)
        .collect();
    let mut frame = render(scene, &amps, array, acq);

    if let Some(snr_db) = acq.noise_snr_db {
        let reference = match acq.noise_reference {
            NoiseReference::FrameRms => frame.rms(),
            NoiseReference::Flood { fluence_mj_cm2 } => {
                let flood: Vec<f64> = scene
                    .absorbers
                    .iter()
                    .map(|a| a.mu_a * fluence_mj_cm2)
                    .collect();
                render(scene, &flood, array, acq).rms()
            }
        };
        let sigma = reference / 10f64.powf(snr_db / 20.0);
        add_noise(&mut frame, sigma, acq.rng_seed);
    }
    Ok(frame)
}

/// Add white Gaussian noise of standard deviation `sigma`. Channel `k` draws
/// from its own ChaCha stream, so the result does not depend on thread count.
pub fn add_noise(frame: &mut SignalFrame, sigma: f64, seed: u64) {
    if !(sigma > 0.0) {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let ns = frame.n_samples;
    frame
        .data
        .par_chunks_mut(ns)
        .enumerate()
        .for_each(|(k, trace)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            for v in trace.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        });
}

#[cfg(test)]
mod tests;
