//! Image quality figures: contrast, vessel-crossing node count and trace SNR.

mod skeleton;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::fmt_sig;
use crate::illumination::{FieldLabel, IlluminationScheme};
use crate::pa_forward::{Point, Segment};
use crate::recon::{ReconGrid, ReconImage};

pub use skeleton::{branch_points, prune_spurs, thin};

/// Reported instead of +inf when a signal matches its reference exactly.
pub const SNR_CAP_DB: f64 = 300.0;

/// Pixel mask over a [`ReconGrid`], row-major like [`ReconImage::values`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub nx: usize,
    pub ny: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            bits: vec![false; nx * ny],
        }
    }

    pub fn from_fn(grid: &ReconGrid, f: impl Fn(Point) -> bool) -> Self {
        let mut m = Self::new(grid.nx, grid.ny);
        for iz in 0..grid.ny {
            for ix in 0..grid.nx {
                m.bits[iz * grid.nx + ix] = f(grid.point(ix, iz));
            }
        }
        m
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn get(&self, ix: usize, iz: usize) -> bool {
        self.bits[iz * self.nx + ix]
    }

    pub fn set(&mut self, ix: usize, iz: usize, v: bool) {
        self.bits[iz * self.nx + ix] = v;
    }
}

/// Distance from `p` to the closest point of `s`.
pub fn segment_distance(p: &Point, s: &Segment) -> f64 {
    let (dx, dz) = (s.b.x - s.a.x, s.b.z - s.a.z);
    let len2 = dx * dx + dz * dz;
    let t = if len2 > 0.0 {
        (((p.x - s.a.x) * dx + (p.z - s.a.z) * dz) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist(&Point::new(s.a.x + t * dx, s.a.z + t * dz))
}

fn nearest_segment(p: &Point, segments: &[Segment]) -> f64 {
    segments
        .iter()
        .map(|s| segment_distance(p, s))
        .fold(f64::INFINITY, f64::min)
}

/// How vessel and background regions are carved out of an image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoiSpec {
    /// Pixels within this distance of a vessel centre line form the ROI (mm).
    pub roi_radius_mm: f64,
    /// Pixels farther than this from every vessel form the background (mm).
    pub background_min_dist_mm: f64,
}

impl Default for RoiSpec {
    fn default() -> Self {
        Self {
            roi_radius_mm: 0.5,
            background_min_dist_mm: 3.0,
        }
    }
}

impl RoiSpec {
    pub fn masks(&self, grid: &ReconGrid, segments: &[Segment]) -> Result<(Mask, Mask)> {
        if !(self.roi_radius_mm > 0.0) || !(self.background_min_dist_mm > self.roi_radius_mm) {
            return Err(Error::invalid(
                "roi spec",
                "need 0 < roi radius < background distance",
            ));
        }
        let roi = Mask::from_fn(grid, |p| {
            nearest_segment(&p, segments) <= self.roi_radius_mm
        });
        let bg = Mask::from_fn(grid, |p| {
            nearest_segment(&p, segments) > self.background_min_dist_mm
        });
        Ok((roi, bg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContrastKind {
    /// `(roi - bg) / bg`
    #[default]
    Weber,
    /// `(roi - bg) / (roi + bg)`
    Michelson,
}

fn masked_mean(image: &ReconImage, mask: &Mask) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (v, b) in image.values.iter().zip(&mask.bits) {
        if *b {
            sum += v;
            n += 1;
        }
    }
    sum / n as f64
}

fn check_masks(image: &ReconImage, roi: &Mask, bg: &Mask) -> Result<()> {
    let g = &image.grid;
    for m in [roi, bg] {
        if m.nx != g.nx || m.ny != g.ny || m.bits.len() != g.len() {
            return Err(Error::invalid("mask", "dimensions differ from the image"));
        }
        if m.count() == 0 {
            return Err(Error::invalid("mask", "empty"));
        }
    }
    if roi.bits.iter().zip(&bg.bits).any(|(a, b)| *a && *b) {
        return Err(Error::invalid("mask", "ROI and background overlap"));
    }
    Ok(())
}

/// Weber contrast of the ROI against the background.
pub fn contrast(image: &ReconImage, roi: &Mask, bg: &Mask) -> Result<f64> {
    contrast_with(image, roi, bg, ContrastKind::Weber)
}

pub fn contrast_with(image: &ReconImage, roi: &Mask, bg: &Mask, kind: ContrastKind) -> Result<f64> {
    check_masks(image, roi, bg)?;
    let (r, b) = (masked_mean(image, roi), masked_mean(image, bg));
    let den = match kind {
        ContrastKind::Weber => b,
        ContrastKind::Michelson => r + b,
    };
    if !(b > 0.0) || !(den > 0.0) {
        return Err(Error::DegenerateBackground(b));
    }
    Ok((r - b) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodeOptions {
    /// Binarisation level as a fraction of the image maximum.
    pub threshold_fraction: f64,
    /// Branch points closer than this (pixels) count as one node.
    pub merge_radius_px: f64,
    /// Skeleton spurs shorter than this (pixels) are removed before counting.
    pub min_branch_px: usize,
}

impl Default for NodeOptions {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.5,
            merge_radius_px: 3.0,
            min_branch_px: 5,
        }
    }
}

/// Number of vessel crossings, with default merging and spur pruning.
pub fn count_nodes(image: &ReconImage, threshold_fraction: f64) -> Result<usize> {
    count_nodes_with(
        image,
        &NodeOptions {
            threshold_fraction,
            ..NodeOptions::default()
        },
    )
}

/// Binarise, thin to a one-pixel skeleton, prune short spurs, then count
/// clusters of branch points.
pub fn count_nodes_with(image: &ReconImage, opts: &NodeOptions) -> Result<usize> {
    let f = opts.threshold_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::invalid(
            "threshold fraction",
            format!("{f} outside (0, 1)"),
        ));
    }
    if !(opts.merge_radius_px >= 0.0) {
        return Err(Error::invalid("merge radius", "must be >= 0"));
    }
    let max = image.max();
    if !(max > 0.0) {
        return Ok(0);
    }
    let level = f * max;
    let mut mask = Mask {
        nx: image.grid.nx,
        ny: image.grid.ny,
        bits: image.values.iter().map(|v| *v >= level).collect(),
    };
    if mask.count() == 0 {
        return Ok(0);
    }
    thin(&mut mask);
    prune_spurs(&mut mask, opts.min_branch_px);
    Ok(merge(&branch_points(&mask), opts.merge_radius_px))
}

/// Greedy single-linkage clustering of points in raster order.
fn merge(points: &[(f64, f64)], radius: f64) -> usize {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let dx = points[i].0 - points[j].0;
            let dz = points[i].1 - points[j].1;
            if dx.hypot(dz) <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// Rasterise vessel centre lines with the given half-width, no blur.
pub fn render_segments(grid: &ReconGrid, segments: &[Segment], half_width_mm: f64) -> ReconImage {
    let mask = Mask::from_fn(grid, |p| nearest_segment(&p, segments) <= half_width_mm);
    ReconImage {
        grid: *grid,
        values: mask
            .bits
            .iter()
            .map(|b| if *b { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// `10 log10(|ref|^2 / |signal - ref|^2)`, capped at [`SNR_CAP_DB`].
pub fn snr_db(signal: &[f64], reference: &[f64]) -> Result<f64> {
    if signal.len() != reference.len() {
        return Err(Error::invalid(
            "snr",
            format!(
                "length {} differs from reference length {}",
                signal.len(),
                reference.len()
            ),
        ));
    }
    let power: f64 = reference.iter().map(|v| v * v).sum();
    if !(power > 0.0) {
        return Err(Error::ZeroReference);
    }
    let err: f64 = signal
        .iter()
        .zip(reference)
        .map(|(s, r)| (s - r) * (s - r))
        .sum();
    if err == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (power / err).log10()).min(SNR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub scheme: IlluminationScheme,
    pub class: FieldLabel,
    pub contrast: f64,
    pub node_count: usize,
    pub roi: RoiSpec,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "d_mm,theta_deg,class,contrast,node_count";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            fmt_sig(self.scheme.d_mm, 9),
            fmt_sig(self.scheme.theta_deg, 9),
            self.class.as_str(),
            fmt_sig(self.contrast, 9),
            self.node_count
        )
    }

    pub fn write_csv<W: Write>(reports: &[MetricsReport], mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in reports {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
