//! Image reconstruction: wavelet denoising, delay-and-sum beamforming and
//! envelope detection.

mod wavelet;

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pa_forward::{element_positions, Point, SignalFrame, TransducerArray};

pub use wavelet::{denoise_trace, dwt, idwt, wavelet_denoise, DB4_LO};

pub const DEFAULT_LEVELS: usize = 4;

/// Pixel grid in the imaging plane. Row `iz` lies at depth `origin.z + iz * pitch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconGrid {
    pub nx: usize,
    pub ny: usize,
    pub pitch: f64,
    pub origin: Point,
}

impl ReconGrid {
    pub fn new(nx: usize, ny: usize, pitch: f64, origin: Point) -> Result<Self> {
        let g = Self {
            nx,
            ny,
            pitch,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square grid of side `size` mm centred at `center`.
    pub fn square(center: Point, size: f64, pitch: f64) -> Result<Self> {
        if !(pitch > 0.0) || !(size >= 0.0) {
            return Err(Error::invalid("recon grid", "need pitch > 0 and size >= 0"));
        }
        let n = (size / pitch).round() as usize + 1;
        let half = (n - 1) as f64 / 2.0 * pitch;
        Self::new(n, n, pitch, Point::new(center.x - half, center.z - half))
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::invalid("recon grid", "nx and ny must be >= 1"));
        }
        if !(self.pitch > 0.0)
            || !self.pitch.is_finite()
            || !self.origin.x.is_finite()
            || !self.origin.z.is_finite()
        {
            return Err(Error::invalid(
                "recon grid",
                "pitch must be > 0 and origin finite",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.origin.x + ix as f64 * self.pitch
    }

    pub fn z(&self, iz: usize) -> f64 {
        self.origin.z + iz as f64 * self.pitch
    }

    pub fn point(&self, ix: usize, iz: usize) -> Point {
        Point::new(self.x(ix), self.z(iz))
    }

    /// Nearest pixel to `p`, if it falls on the grid.
    pub fn pixel_of(&self, p: &Point) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.pitch).round();
        let fz = ((p.z - self.origin.z) / self.pitch).round();
        if fx < 0.0 || fz < 0.0 || fx >= self.nx as f64 || fz >= self.ny as f64 {
            return None;
        }
        Some((fx as usize, fz as usize))
    }
}

/// Image on a [`ReconGrid`], `values[iz * nx + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconImage {
    pub grid: ReconGrid,
    pub values: Vec<f64>,
}

impl ReconImage {
    pub fn zeros(grid: ReconGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn at(&self, ix: usize, iz: usize) -> f64 {
        self.values[iz * self.grid.nx + ix]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(ix, iz)` of the largest value; the first one in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best % self.grid.nx, best / self.grid.nx)
    }

    pub fn scaled(&self, k: f64) -> ReconImage {
        ReconImage {
            grid: self.grid,
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    /// 16-bit PGM normalised to the image maximum, and its sidecar CSV.
    pub fn write_pgm<W: Write, S: Write>(&self, pgm: W, mut sidecar: S) -> std::io::Result<()> {
        let g = &self.grid;
        let max = self.max().max(0.0);
        crate::io::write_pgm16(pgm, g.nx, g.ny, &self.values, max)?;
        writeln!(sidecar, "nx,ny,pitch_mm,origin_x_mm,origin_y_mm,max_value")?;
        writeln!(
            sidecar,
            "{},{},{},{},{},{}",
            g.nx,
            g.ny,
            crate::fmt::fmt_sig(g.pitch, 9),
            crate::fmt::fmt_sig(g.origin.x, 9),
            crate::fmt::fmt_sig(g.origin.z, 9),
            crate::fmt::fmt_sig(max, 9)
        )
    }

    /// Load an image written by [`ReconImage::write_pgm`]. Values are the
    /// 16-bit samples rescaled by the sidecar maximum.
    pub fn read_pgm<R: Read>(pgm: R, sidecar: &str) -> Result<ReconImage> {
        let bad = |msg: &str| Error::invalid("image sidecar", msg);
        let mut lines = sidecar.lines();
        if lines.next().map(str::trim) != Some("nx,ny,pitch_mm,origin_x_mm,origin_y_mm,max_value") {
            return Err(bad("unexpected header"));
        }
        let row: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("missing data row"))?
            .trim()
            .split(',')
            .collect();
        if row.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer field"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad numeric field"));
        let grid = ReconGrid::new(
            int(row[0])?,
            int(row[1])?,
            num(row[2])?,
            Point::new(num(row[3])?, num(row[4])?),
        )?;
        let max = num(row[5])?;
        let (nx, ny, samples) = crate::io::read_pgm16(pgm)?;
        if nx != grid.nx || ny != grid.ny {
            return Err(bad("dimensions differ from the PGM header"));
        }
        let k = max / 65535.0;
        Ok(ReconImage {
            grid,
            values: samples.iter().map(|&q| q as f64 * k).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeMethod {
    /// Magnitude of the analytic signal along each depth column.
    #[default]
    Hilbert,
    /// Absolute value of the beamformed RF image.
    Rectify,
}

fn check_inputs(
    frame: &SignalFrame,
    array: &TransducerArray,
    grid: &ReconGrid,
    c: f64,
) -> Result<()> {
    frame.validate()?;
    array.validate()?;
    grid.validate()?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid(
            "sound speed",
            format!("{c} m/s must be > 0"),
        ));
    }
    if frame.n_elements != array.n_elements {
        return Err(Error::invalid(
            "signal frame",
            format!(
                "{} channels but the array has {} elements",
                frame.n_elements, array.n_elements
            ),
        ));
    }
    Ok(())
}

/// Delay-and-sum RF image (before envelope detection). Sample positions
/// between samples are linearly interpolated; delays outside the record add
/// nothing.
pub fn das_rf(
    frame: &SignalFrame,
    array: &TransducerArray,
    grid: &ReconGrid,
    c: f64,
) -> Result<ReconImage> {
    check_inputs(frame, array, grid, c)?;
    let elements = element_positions(array);
    let c_mm_us = c * 1e-3;
    let fs = frame.sample_rate_mhz;
    let last = frame.n_samples as f64 - 1.0;
    let mut img = ReconImage::zeros(*grid);
    img.values
        .par_chunks_mut(grid.nx)
        .enumerate()
        .for_each(|(iz, row)| {
            for (ix, px) in row.iter_mut().enumerate() {
                let p = grid.point(ix, iz);
                let mut acc = 0.0;
                for (k, e) in elements.iter().enumerate() {
                    let s = (p.dist(e) / c_mm_us - frame.t0_us) * fs;
                    if !(s >= 0.0 && s <= last) {
                        continue;
                    }
                    let trace = frame.channel(k);
                    let i = (s.floor() as usize).min(frame.n_samples.saturating_sub(2));
                    let w = s - i as f64;
                    acc += if w == 0.0 || frame.n_samples == 1 {
                        trace[i]
                    } else {
                        (1.0 - w) * trace[i] + w * trace[i + 1]
                    };
                }
                *px = acc;
            }
        });
    Ok(img)
}

fn analytic_magnitude(
    col: &[f64],
    fwd: &Arc<dyn Fft<f64>>,
    inv: &Arc<dyn Fft<f64>>,
    m: usize,
) -> Vec<f64> {
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    for (b, &v) in buf.iter_mut().zip(col) {
        b.re = v;
    }
    fwd.process(&mut buf);
    for (i, b) in buf.iter_mut().enumerate() {
        let h = if i == 0 || i * 2 == m {
            1.0
        } else if i * 2 < m {
            2.0
        } else {
            0.0
        };
        *b *= h;
    }
    inv.process(&mut buf);
    buf[..col.len()]
        .iter()
        .map(|b| b.norm() / m as f64)
        .collect()
}

/// Envelope of an RF image. The Hilbert variant zero-pads each depth column
/// to at least twice its length to limit wrap-around.
pub fn envelope(rf: &ReconImage, method: EnvelopeMethod) -> ReconImage {
    let g = rf.grid;
    match method {
        EnvelopeMethod::Rectify => ReconImage {
            grid: g,
            values: rf.values.iter().map(|v| v.abs()).collect(),
        },
        EnvelopeMethod::Hilbert => {
            let m = (2 * g.ny).next_power_of_two();
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(m);
            let inv = planner.plan_fft_inverse(m);
            let cols: Vec<Vec<f64>> = (0..g.nx)
                .into_par_iter()
                .map(|ix| {
                    let col: Vec<f64> = (0..g.ny).map(|iz| rf.values[iz * g.nx + ix]).collect();
                    analytic_magnitude(&col, &fwd, &inv, m)
                })
                .collect();
            let mut out = ReconImage::zeros(g);
            for (ix, col) in cols.iter().enumerate() {
                for (iz, v) in col.iter().enumerate() {
                    out.values[iz * g.nx + ix] = *v;
                }
            }
            out
        }
    }
}

/// Delay-and-sum followed by analytic-signal envelope detection.
pub fn das_reconstruct(
    frame: &SignalFrame,
    array: &TransducerArray,
    grid: &ReconGrid,
    c: f64,
) -> Result<ReconImage> {
    Ok(envelope(
        &das_rf(frame, array, grid, c)?,
        EnvelopeMethod::Hilbert,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconOptions {
    #[serde(default = "default_true")]
    pub denoise: bool,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default)]
    pub envelope: EnvelopeMethod,
}

fn default_true() -> bool {
    true
}
fn default_levels() -> usize {
    DEFAULT_LEVELS
}

impl Default for ReconOptions {
    fn default() -> Self {
        Self {
            denoise: true,
            levels: DEFAULT_LEVELS,
            envelope: EnvelopeMethod::Hilbert,
        }
    }
}

/// Optional denoising, then DAS and envelope detection.
pub fn pipeline(
    frame: &SignalFrame,
    array: &TransducerArray,
    grid: &ReconGrid,
    c: f64,
    denoise: bool,
) -> Result<ReconImage> {
    pipeline_with(
        frame,
        array,
        grid,
        c,
        &ReconOptions {
            denoise,
            ..ReconOptions::default()
        },
    )
}

pub fn pipeline_with(
    frame: &SignalFrame,
    array: &TransducerArray,
    grid: &ReconGrid,
    c: f64,
    opts: &ReconOptions,
) -> Result<ReconImage> {
    check_inputs(frame, array, grid, c)?;
    let rf = if opts.denoise {
        das_rf(&wavelet_denoise(frame, opts.levels)?, array, grid, c)?
    } else {
        das_rf(frame, array, grid, c)?
    };
    Ok(envelope(&rf, opts.envelope))
}
