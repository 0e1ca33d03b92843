//! Double-sided oblique illumination.
//!
//! Two identical beams pivot on mirrors at `(±a, h)` above the sample surface and
//! tilt inward by `theta` from the surface normal. Each beam has a Gaussian
//! cross-section with 1/e² diameter `d`; oblique incidence stretches the
//! footprint by `1/cos(theta)` along x and lowers its peak by `cos(theta)`, so
//! the pulse energy (split 1:1) is conserved. Below the surface the fluence
//! decays as `exp(-mu_eff z)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// mm² per cm².
const MM2_PER_CM2: f64 = 100.0;

pub const DEFAULT_PIVOT_OFFSET_MM: f64 = 55.0;
pub const DEFAULT_PIVOT_HEIGHT_MM: f64 = 55.0;
pub const DEFAULT_PULSE_ENERGY_MJ: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationScheme {
    /// 1/e² beam diameter after the zoom unit (mm).
    pub d_mm: f64,
    /// Incidence angle from the surface normal (degrees).
    pub theta_deg: f64,
    #[serde(default = "default_pivot_offset")]
    pub pivot_offset_mm: f64,
    #[serde(default = "default_pivot_height")]
    pub pivot_height_mm: f64,
    /// Energy per pulse, both beams together (mJ).
    #[serde(default = "default_pulse_energy")]
    pub pulse_energy_mj: f64,
}

fn default_pivot_offset() -> f64 {
    DEFAULT_PIVOT_OFFSET_MM
}
fn default_pivot_height() -> f64 {
    DEFAULT_PIVOT_HEIGHT_MM
}
fn default_pulse_energy() -> f64 {
    DEFAULT_PULSE_ENERGY_MJ
}

impl IlluminationScheme {
    /// Scheme with the default probe geometry and pulse energy.
    pub fn new(d_mm: f64, theta_deg: f64) -> Self {
        Self {
            d_mm,
            theta_deg,
            pivot_offset_mm: DEFAULT_PIVOT_OFFSET_MM,
            pivot_height_mm: DEFAULT_PIVOT_HEIGHT_MM,
            pulse_energy_mj: DEFAULT_PULSE_ENERGY_MJ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.d_mm,
            self.theta_deg,
            self.pivot_offset_mm,
            self.pivot_height_mm,
            self.pulse_energy_mj,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid(
                "illumination scheme",
                "values must be finite",
            ));
        }
        if self.d_mm <= 0.0 {
            return Err(Error::invalid(
                "illumination scheme",
                format!("d = {} mm must be > 0", self.d_mm),
            ));
        }
        if !(0.0..90.0).contains(&self.theta_deg) {
            return Err(Error::invalid(
                "illumination scheme",
                format!("theta = {} deg must lie in [0, 90)", self.theta_deg),
            ));
        }
        if self.pivot_offset_mm <= 0.0 || self.pivot_height_mm <= 0.0 {
            return Err(Error::invalid(
                "illumination scheme",
                "pivot offset and height must be > 0",
            ));
        }
        if self.pulse_energy_mj <= 0.0 {
            return Err(Error::invalid(
                "illumination scheme",
                "pulse energy must be > 0",
            ));
        }
        Ok(())
    }

    /// 1/e² radius across the tilt plane (mm).
    pub fn waist_y(&self) -> f64 {
        0.5 * self.d_mm
    }

    /// 1/e² radius of the footprint along the tilt axis (mm).
    pub fn waist_x(&self) -> f64 {
        self.waist_y() / self.theta_deg.to_radians().cos()
    }

    /// Peak surface fluence of one beam (mJ/cm²).
    pub fn beam_peak(&self) -> f64 {
        let per_beam = 0.5 * self.pulse_energy_mj;
        2.0 * per_beam / (std::f64::consts::PI * self.waist_x() * self.waist_y()) * MM2_PER_CM2
    }
}

/// Surface landing points `(x_left, x_right)` of the two beam axes (mm).
pub fn spot_centers(scheme: &IlluminationScheme) -> Result<(f64, f64)> {
    scheme.validate()?;
    let reach =
        scheme.pivot_offset_mm - scheme.pivot_height_mm * scheme.theta_deg.to_radians().tan();
    Ok((-reach, reach))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Surface fluence of one beam at `(x, y)` in mJ/cm².
fn beam_fluence(scheme: &IlluminationScheme, center_x: f64, x: f64, y: f64) -> f64 {
    let (wx, wy) = (scheme.waist_x(), scheme.waist_y());
    let u = x - center_x;
    scheme.beam_peak() * (-2.0 * (u * u / (wx * wx) + y * y / (wy * wy))).exp()
}

/// Total surface fluence at `(x, y)` in mJ/cm².
pub fn surface_fluence_at(scheme: &IlluminationScheme, x: f64, y: f64) -> Result<f64> {
    let (xl, xr) = spot_centers(scheme)?;
    Ok(beam_fluence(scheme, xl, x, y) + beam_fluence(scheme, xr, x, y))
}

/// Regular lattice: x fastest, then y, then depth z (z starts at the surface).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Lattice {
    /// Surface lattice centred on the probe axis, covering `[-half_x, half_x] × [-half_y, half_y]`.
    ///
    /// Node coordinates are computed as `(i - (n-1)/2) * spacing`, so mirrored
    /// nodes are exact negatives of each other.
    pub fn symmetric(half_x: f64, half_y: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(half_x >= 0.0) || !(half_y >= 0.0) {
            return Err(Error::invalid(
                "lattice",
                "spacing must be > 0 and extents >= 0",
            ));
        }
        let nx = 2 * (half_x / spacing).ceil() as usize + 1;
        let ny = 2 * (half_y / spacing).ceil() as usize + 1;
        Ok(Self {
            nx,
            ny,
            nz: 1,
            dx: spacing,
            dy: spacing,
            dz: 1.0,
            x0: -((nx - 1) as f64 / 2.0) * spacing,
            y0: -((ny - 1) as f64 / 2.0) * spacing,
        })
    }

    /// A lattice that holds both footprints out past four 1/e² radii.
    pub fn for_scheme(scheme: &IlluminationScheme) -> Result<Self> {
        let (_, xr) = spot_centers(scheme)?;
        let (wx, wy) = (scheme.waist_x(), scheme.waist_y());
        let half_x = xr.abs() + (2.0 * scheme.d_mm).max(2.0 * wx);
        let half_y = 2.0 * scheme.d_mm;
        Self::symmetric(half_x, half_y, wy / 8.0)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    fn x_centered(&self, i: usize) -> f64 {
        (i as f64 - (self.nx - 1) as f64 / 2.0) * self.dx
    }

    fn y_centered(&self, j: usize) -> f64 {
        (j as f64 - (self.ny - 1) as f64 / 2.0) * self.dy
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.dy
    }

    pub fn z(&self, k: usize) -> f64 {
        k as f64 * self.dz
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    fn is_centered(&self) -> bool {
        let cx = -((self.nx - 1) as f64 / 2.0) * self.dx;
        let cy = -((self.ny - 1) as f64 / 2.0) * self.dy;
        self.x0 == cx && self.y0 == cy
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + (self.nx - 1) as f64 * self.dx
    }

    pub fn y_max(&self) -> f64 {
        self.y0 + (self.ny - 1) as f64 * self.dy
    }

    pub fn z_max(&self) -> f64 {
        (self.nz - 1) as f64 * self.dz
    }
}

/// Fluence (mJ/cm²) on a [`Lattice`].
#[derive(Debug, Clone, PartialEq)]
pub struct FluenceMap {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    pub scheme: Option<IlluminationScheme>,
}

impl FluenceMap {
    /// Spatially uniform fluence, mostly for tests and reference frames.
    pub fn uniform(lattice: Lattice, value: f64) -> Self {
        Self {
            lattice,
            values: vec![value; lattice.len()],
            scheme: None,
        }
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Energy through the z = 0 slice (mJ), summed in lattice order.
    pub fn surface_energy(&self) -> f64 {
        let l = &self.lattice;
        let sum: f64 = self.values[..l.nx * l.ny].iter().sum();
        sum * l.dx * l.dy / MM2_PER_CM2
    }

    /// Linear interpolation at `(x, y, z)`; `None` outside the lattice.
    /// Degenerate axes (one node) only accept that node's coordinate.
    pub fn sample(&self, x: f64, y: f64, z: f64) -> Option<f64> {
        let l = &self.lattice;
        let (i0, ti) = locate(x, l.x0, l.dx, l.nx)?;
        let (j0, tj) = locate(y, l.y0, l.dy, l.ny)?;
        let (k0, tk) = locate(z, 0.0, l.dz, l.nz)?;
        let mut acc = 0.0;
        for (dk, wk) in [(0, 1.0 - tk), (1, tk)] {
            if wk == 0.0 {
                continue;
            }
            for (dj, wj) in [(0, 1.0 - tj), (1, tj)] {
                if wj == 0.0 {
                    continue;
                }
                for (di, wi) in [(0, 1.0 - ti), (1, ti)] {
                    if wi == 0.0 {
                        continue;
                    }
                    acc += wk * wj * wi * self.values[l.index(i0 + di, j0 + dj, k0 + dk)];
                }
            }
        }
        Some(acc)
    }

    /// The y = `y` line of a surface map as a one-row map, for 2D imaging.
    pub fn row(&self, y: f64) -> Result<FluenceMap> {
        let l = self.lattice;
        if l.nz != 1 {
            return Err(Error::invalid("fluence map", "row() needs a surface map"));
        }
        let values = (0..l.nx)
            .map(|i| self.sample(l.x(i), y, 0.0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::invalid("fluence map", format!("y = {y} mm outside lattice")))?;
        Ok(FluenceMap {
            lattice: Lattice { ny: 1, y0: y, ..l },
            values,
            scheme: self.scheme,
        })
    }

    /// Export as 16-bit PGM (scaled to the map peak) and its sidecar CSV.
    pub fn write_pgm<W: Write, S: Write>(&self, pgm: W, sidecar: S) -> std::io::Result<()> {
        let l = &self.lattice;
        let peak = self.peak();
        crate::io::write_pgm16(pgm, l.nx, l.ny, &self.values[..l.nx * l.ny], peak)?;
        let mut sidecar = sidecar;
        writeln!(sidecar, "nx,ny,dx_mm,dy_mm,peak_mJ_cm2")?;
        writeln!(
            sidecar,
            "{},{},{},{},{}",
            l.nx,
            l.ny,
            l.dx,
            l.dy,
            crate::fmt::fmt_sig(peak, 9)
        )
    }
}

/// Node index and fractional offset for coordinate `v` on an axis.
fn locate(v: f64, origin: f64, step: f64, n: usize) -> Option<(usize, f64)> {
    if n == 1 {
        return (v == origin).then_some((0, 0.0));
    }
    let s = (v - origin) / step;
    let last = (n - 1) as f64;
    // Tolerate round-off at the far edge.
    if !(s >= -1e-9 && s <= last + 1e-9) {
        return None;
    }
    let s = s.clamp(0.0, last);
    let i = (s.floor() as usize).min(n - 2);
    Some((i, s - i as f64))
}

fn check_coverage(scheme: &IlluminationScheme, lattice: &Lattice) -> Result<()> {
    let (_, xr) = spot_centers(scheme)?;
    let need_x = xr.abs() + 2.0 * scheme.d_mm;
    let need_y = 2.0 * scheme.d_mm;
    let covers_x = lattice.x0 <= -need_x && lattice.x_max() >= need_x;
    let covers_y = lattice.y0 <= -need_y && lattice.y_max() >= need_y;
    if covers_x && covers_y {
        Ok(())
    } else {
        Err(Error::GridTooSmall {
            need_x_mm: need_x,
            need_y_mm: need_y,
        })
    }
}

/// Surface fluence of a single beam, e.g. for per-beam energy checks.
pub fn beam_surface(
    scheme: &IlluminationScheme,
    side: Side,
    lattice: &Lattice,
) -> Result<FluenceMap> {
    check_coverage(scheme, lattice)?;
    let (xl, xr) = spot_centers(scheme)?;
    let center = match side {
        Side::Left => xl,
        Side::Right => xr,
    };
    let surface = Lattice { nz: 1, ..*lattice };
    let mut values = Vec::with_capacity(surface.nx * surface.ny);
    for j in 0..surface.ny {
        for i in 0..surface.nx {
            values.push(beam_fluence(scheme, center, surface.x(i), surface.y(j)));
        }
    }
    Ok(FluenceMap {
        lattice: surface,
        values,
        scheme: Some(*scheme),
    })
}

/// Surface fluence of both beams on `lattice` (its z extent is ignored).
pub fn fluence_surface(scheme: &IlluminationScheme, lattice: &Lattice) -> Result<FluenceMap> {
    check_coverage(scheme, lattice)?;
    let (xl, xr) = spot_centers(scheme)?;
    let surface = Lattice { nz: 1, ..*lattice };
    let centered = surface.is_centered();
    let mut values = Vec::with_capacity(surface.nx * surface.ny);
    for j in 0..surface.ny {
        let y = if centered {
            surface.y_centered(j)
        } else {
            surface.y(j)
        };
        for i in 0..surface.nx {
            let x = if centered {
                surface.x_centered(i)
            } else {
                surface.x(i)
            };
            values.push(beam_fluence(scheme, xl, x, y) + beam_fluence(scheme, xr, x, y));
        }
    }
    Ok(FluenceMap {
        lattice: surface,
        values,
        scheme: Some(*scheme),
    })
}

/// Extrude a surface map into depth with Beer-Lambert decay `exp(-mu_eff z)`.
pub fn fluence_volume(map: &FluenceMap, mu_eff: f64, nz: usize, dz: f64) -> Result<FluenceMap> {
    if !(mu_eff >= 0.0) || !mu_eff.is_finite() {
        return Err(Error::invalid(
            "mu_eff",
            format!("{mu_eff} 1/mm, need >= 0"),
        ));
    }
    if nz == 0 || !(dz > 0.0) {
        return Err(Error::invalid("depth sampling", "need nz >= 1 and dz > 0"));
    }
    if map.lattice.nz != 1 {
        return Err(Error::invalid("fluence map", "expected a surface map"));
    }
    let plane = map.lattice.nx * map.lattice.ny;
    let mut values = Vec::with_capacity(plane * nz);
    for k in 0..nz {
        let atten = (-mu_eff * k as f64 * dz).exp();
        values.extend(map.values.iter().map(|v| v * atten));
    }
    Ok(FluenceMap {
        lattice: Lattice {
            nz,
            dz,
            ..map.lattice
        },
        values,
        scheme: map.scheme,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldLabel {
    Bright,
    Dark,
    Hybrid,
}

impl FieldLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldLabel::Bright => "bright",
            FieldLabel::Dark => "dark",
            FieldLabel::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeClass {
    pub label: FieldLabel,
    /// Surface fluence on the axis over peak surface fluence.
    pub center_ratio: f64,
}

/// Center-ratio thresholds: bright at or above `bright`, dark at or below `dark`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassThresholds {
    pub bright: f64,
    pub dark: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self {
            bright: 0.5,
            dark: 0.1,
        }
    }
}

/// Peak of the surface fluence. It lies on y = 0, so a 1D search along x suffices.
fn peak_surface_fluence(scheme: &IlluminationScheme) -> Result<f64> {
    let (_, xr) = spot_centers(scheme)?;
    let f = |x: f64| surface_fluence_at(scheme, x, 0.0).expect("validated scheme");
    let span = xr.abs() + 2.0 * scheme.waist_x();
    let n = 4000;
    let step = span / n as f64;
    let (mut best_x, mut best) = (0.0, f(0.0));
    for i in 1..=n {
        let x = i as f64 * step;
        let v = f(x);
        if v > best {
            best = v;
            best_x = x;
        }
    }
    // Golden-section refinement around the best grid point.
    let (mut a, mut b) = ((best_x - step).max(0.0), best_x + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) >= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(best.max(f(0.5 * (a + b))))
}

pub fn classify_scheme_with(
    scheme: &IlluminationScheme,
    thresholds: ClassThresholds,
) -> Result<SchemeClass> {
    let center = surface_fluence_at(scheme, 0.0, 0.0)?;
    let peak = peak_surface_fluence(scheme)?;
    let center_ratio = if peak > 0.0 {
        (center / peak).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let label = if center_ratio >= thresholds.bright {
        FieldLabel::Bright
    } else if center_ratio <= thresholds.dark {
        FieldLabel::Dark
    } else {
        FieldLabel::Hybrid
    };
    Ok(SchemeClass {
        label,
        center_ratio,
    })
}

pub fn classify_scheme(scheme: &IlluminationScheme) -> Result<SchemeClass> {
    classify_scheme_with(scheme, ClassThresholds::default())
}
