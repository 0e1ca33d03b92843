//! Gaussian solution of the spot-size adjustable unit: a three-lens,
//! continuously variable Galilean beam expander.
//!
//! Light enters collimated through the compensator L1 (f1 > 0), which focuses
//! towards its rear focal point. The variator L2 (f2 < 0) intercepts the
//! converging beam and forms a virtual image of that focus with magnification
//! `m2`; the fixed lens L3 (f3 > 0) has its front focal point pinned on that
//! image, so the output stays collimated at every zoom position. The L1+L2
//! pair behaves as a single lens of focal length `f1 * m2`, and the beam
//! diameter grows by `f3 / |f_comb|`.
//!
//! The compensator motion is parametrised by the conserved quantity
//! `U(m1, m2) = f1 (1/m1 + m1) + f2 (1/m2 + m2)`, which gives the quadratic
//! `m1^2 - b m1 + 1 = 0` at each variator position. Both roots describe the same
//! lens placement; which one is reported is tracked by [`Branch`].

mod paraxial;

use std::io::Write;

use crate::error::{Error, Result};
use crate::fmt::fmt_sig;

pub use paraxial::{ray_trace, LensLayout, ParaxialRay};

/// `|f1 + f2 - d1|` below this (mm) is treated as afocal.
pub const AFOCAL_EPS: f64 = 1e-12;
/// `|b + 2|` (or `|b - 2|`) below this marks coalescing roots.
pub const COALESCENCE_EPS: f64 = 1e-9;

/// Focal length of a two-lens group; `Afocal` when the group is a telescope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FocalLength {
    Finite(f64),
    Afocal,
}

impl FocalLength {
    pub fn finite(self) -> Option<f64> {
        match self {
            FocalLength::Finite(f) => Some(f),
            FocalLength::Afocal => None,
        }
    }
}

/// Focal length of two thin lenses `d1` mm apart.
pub fn combined_focal_length(f1: f64, f2: f64, d1: f64) -> FocalLength {
    let denom = f1 + f2 - d1;
    if denom.abs() < AFOCAL_EPS {
        FocalLength::Afocal
    } else {
        FocalLength::Finite(f1 * f2 / denom)
    }
}

/// Signed ratio `f3 / f_comb`. Its magnitude is the beam-diameter expansion.
pub fn expansion_ratio(f3: f64, f_comb: FocalLength) -> Result<f64> {
    match f_comb {
        FocalLength::Finite(f) if f != 0.0 && f.is_finite() => Ok(f3 / f),
        _ => Err(Error::DegenerateTelescope),
    }
}

/// Variator magnification range `[-sqrt(N), -1/sqrt(N)]` for a zoom ratio `N`.
pub fn variator_range(zoom_ratio: f64) -> Result<(f64, f64)> {
    if !(zoom_ratio >= 1.0) || !zoom_ratio.is_finite() {
        return Err(Error::invalid(
            "zoom ratio",
            format!("N = {zoom_ratio}, need N >= 1"),
        ));
    }
    let s = zoom_ratio.sqrt();
    Ok((-s, -1.0 / s))
}

/// Variator travel from its long-focus position; a straight line in `m2`.
pub fn variator_displacement(f2: f64, m2: f64, m2_long: f64) -> f64 {
    f2 * (m2 - m2_long)
}

#[inline]
fn conjugate_sum(m: f64) -> f64 {
    m + 1.0 / m
}

/// Which root of `m^2 - b m + 1 = 0` is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `(b + sqrt(b^2 - 4)) / 2`, the larger root.
    First,
    /// `(b - sqrt(b^2 - 4)) / 2`, the smaller root.
    Second,
}

impl Branch {
    pub fn other(self) -> Self {
        match self {
            Branch::First => Branch::Second,
            Branch::Second => Branch::First,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::First => "first",
            Branch::Second => "second",
        }
    }
}

/// Both real roots `(m_a, m_b)` of `m^2 - b m + 1 = 0`, with `m_a >= m_b`.
///
/// `|b|` within [`COALESCENCE_EPS`] below 2 is accepted as a double root.
pub fn compensator_roots(b: f64) -> Result<(f64, f64)> {
    if !b.is_finite() {
        return Err(Error::NoRealSolution { b });
    }
    let disc = b * b - 4.0;
    if disc < 0.0 {
        if b.abs() > 2.0 - COALESCENCE_EPS {
            let m = b.signum();
            return Ok((m, m));
        }
        return Err(Error::NoRealSolution { b });
    }
    // Larger-magnitude root first, then Vieta for the other: avoids cancellation.
    let big = 0.5 * (b + b.signum() * disc.sqrt());
    let small = 1.0 / big;
    Ok(if big >= small {
        (big, small)
    } else {
        (small, big)
    })
}

/// Lens prescription and long-focus starting point of the zoom unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoomConfig {
    /// Compensator L1 focal length (mm), converging.
    pub f1: f64,
    /// Variator L2 focal length (mm), diverging.
    pub f2: f64,
    /// Fixed output lens L3 focal length (mm), converging.
    pub f3: f64,
    /// Blanket zoom ratio N.
    pub zoom_ratio: f64,
    pub m2_long: f64,
    pub m1_long: f64,
    /// L1-L2 spacing at long focus (mm). Fixed by f1, f2 and `m2_long`.
    pub d1_long: f64,
}

impl ZoomConfig {
    /// Build and validate a prescription; `d1_long` follows from the conjugates.
    pub fn new(
        f1: f64,
        f2: f64,
        f3: f64,
        zoom_ratio: f64,
        m2_long: f64,
        m1_long: f64,
    ) -> Result<Self> {
        let d1_long = f1 + f2 - f2 / m2_long;
        let cfg = Self {
            f1,
            f2,
            f3,
            zoom_ratio,
            m2_long,
            m1_long,
            d1_long,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Demo prescription: 1.2x to 4.8x, collision-free over the whole range.
    pub fn demo() -> Self {
        Self::new(100.0, -25.0, 240.0, 4.0, -2.0, -3.0).expect("demo prescription is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.f1,
            self.f2,
            self.f3,
            self.zoom_ratio,
            self.m2_long,
            self.m1_long,
            self.d1_long,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("zoom config", "all values must be finite"));
        }
        if self.f1 <= 0.0 {
            return Err(Error::invalid(
                "zoom config",
                format!("f1 = {} must be > 0", self.f1),
            ));
        }
        if self.f2 >= 0.0 {
            return Err(Error::invalid(
                "zoom config",
                format!("f2 = {} must be < 0", self.f2),
            ));
        }
        if self.f3 <= 0.0 {
            return Err(Error::invalid(
                "zoom config",
                format!("f3 = {} must be > 0", self.f3),
            ));
        }
        if self.zoom_ratio < 1.0 {
            return Err(Error::invalid(
                "zoom config",
                format!("N = {} must be >= 1", self.zoom_ratio),
            ));
        }
        if self.m2_long >= 0.0 || self.m1_long >= 0.0 {
            return Err(Error::invalid(
                "zoom config",
                "m2_long and m1_long must be negative",
            ));
        }
        if self.d1_long <= 0.0 {
            return Err(Error::invalid(
                "zoom config",
                format!("long-focus L1-L2 spacing {} mm must be > 0", self.d1_long),
            ));
        }
        let expected = self.f1 + self.f2 - self.f2 / self.m2_long;
        if (self.d1_long - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::invalid(
                "zoom config",
                format!(
                    "d1_long = {} inconsistent with conjugates (expected {expected})",
                    self.d1_long
                ),
            ));
        }
        let (lo, hi) = variator_range(self.zoom_ratio)?;
        let tol = 1e-12 * lo.abs();
        if self.m2_long < lo - tol || self.m2_long > hi + tol {
            return Err(Error::invalid(
                "zoom config",
                format!(
                    "m2_long = {} outside variator range [{lo}, {hi}]",
                    self.m2_long
                ),
            ));
        }
        Ok(())
    }

    /// The constant `C` conserved along the compensation curve.
    pub fn conserved_c(&self) -> f64 {
        self.f1 * conjugate_sum(self.m1_long) + self.f2 * conjugate_sum(self.m2_long)
    }

    /// `U(m1, m2)`; equals [`conserved_c`](Self::conserved_c) on a valid trajectory.
    pub fn u(&self, m1: f64, m2: f64) -> f64 {
        self.f1 * conjugate_sum(m1) + self.f2 * conjugate_sum(m2)
    }

    /// The linear coefficient `b` of the compensator quadratic at variator magnification `m2`.
    pub fn compensation_coefficient(&self, m2: f64) -> Result<f64> {
        if m2 == 0.0 || !m2.is_finite() {
            return Err(Error::invalid(
                "variator magnification",
                "m2 must be finite and nonzero",
            ));
        }
        Ok(
            -(self.f2 / self.f1) * (1.0 / m2 - 1.0 / self.m2_long + m2 - self.m2_long)
                + (1.0 / self.m1_long + self.m1_long),
        )
    }

    /// Root that contains `m1_long` at the long-focus position.
    fn start_branch(&self) -> Branch {
        if self.m1_long.abs() <= 1.0 {
            Branch::First
        } else {
            Branch::Second
        }
    }

    /// True when the root pair meets at -1 at `m2 = -1`, the extremum of `b`.
    pub fn coalesces(&self) -> bool {
        self.compensation_coefficient(-1.0)
            .map(|b| (b.abs() - 2.0).abs() < COALESCENCE_EPS)
            .unwrap_or(false)
    }

    /// The open `m2` interval inside the variator range where `|b| < 2`, if any.
    pub fn infeasible_interval(&self) -> Option<(f64, f64)> {
        let b_peak = self.compensation_coefficient(-1.0).ok()?;
        if b_peak.abs() >= 2.0 - COALESCENCE_EPS {
            return None;
        }
        // |b| < 2 around m2 = -1; the edges solve m + 1/m = g*.
        let g_star = conjugate_sum(self.m2_long)
            - (self.f1 / self.f2) * (-2.0 - conjugate_sum(self.m1_long));
        let disc = (g_star * g_star - 4.0).max(0.0).sqrt();
        let (r1, r2) = (0.5 * (g_star - disc), 0.5 * (g_star + disc));
        let (lo, hi) = variator_range(self.zoom_ratio).ok()?;
        Some((r1.max(lo), r2.min(hi)))
    }

    pub fn is_solvable(&self) -> bool {
        self.infeasible_interval().is_none()
    }

    /// Full zoom state at variator magnification `m2`.
    pub fn state_at(&self, m2: f64) -> Result<ZoomState> {
        let b = self.compensation_coefficient(m2)?;
        let (ma, mb) = compensator_roots(b)?;
        let start = self.start_branch();
        let crossed = (self.m2_long + 1.0) != 0.0 && (m2 + 1.0) * (self.m2_long + 1.0) <= 0.0;
        let branch = if self.coalesces() && crossed {
            start.other()
        } else {
            start
        };
        let (mut m1, mut conj) = match branch {
            Branch::First => (ma, mb),
            Branch::Second => (mb, ma),
        };
        if m2 == self.m2_long {
            m1 = self.m1_long;
            conj = 1.0 / self.m1_long;
        }
        let dx2 = variator_displacement(self.f2, m2, self.m2_long);
        // Compensator travel that keeps the L1 focus imaged onto L3's front focal point.
        let dx1 = self.f1 * (conjugate_sum(self.m1_long) - conjugate_sum(m1));
        let d1 = self.d1_long + dx2 - dx1;
        let f_comb = combined_focal_length(self.f1, self.f2, d1);
        let expansion = expansion_ratio(self.f3, f_comb)?.abs();
        Ok(ZoomState {
            m2,
            m1,
            m1_conjugate: conj,
            b,
            dx1,
            dx2,
            d1,
            f_comb: f_comb.finite().expect("finite: expansion_ratio succeeded"),
            expansion,
            branch,
        })
    }
}

/// One sampled zoom position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoomState {
    pub m2: f64,
    pub m1: f64,
    /// The other root of the quadratic; `m1 * m1_conjugate == 1`.
    pub m1_conjugate: f64,
    pub b: f64,
    /// Compensator displacement from its long-focus position (mm).
    pub dx1: f64,
    /// Variator displacement from its long-focus position (mm).
    pub dx2: f64,
    /// L1-L2 spacing (mm).
    pub d1: f64,
    /// L1+L2 combined focal length (mm); negative for this Galilean layout.
    pub f_comb: f64,
    /// Beam-diameter expansion `|f3 / f_comb|`.
    pub expansion: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone)]
pub struct ZoomTrajectory {
    pub config: ZoomConfig,
    /// Ordered by increasing `m2`.
    pub states: Vec<ZoomState>,
    pub conserved_c: f64,
    /// First sample on the post-switch branch, if the roots coalesce inside the range.
    pub switch_index: Option<usize>,
}

/// Sample the compensation curve uniformly in `m2` over the variator range.
///
/// A unit zoom ratio collapses the range to a single state.
pub fn solve_trajectory(config: &ZoomConfig, n_samples: usize) -> Result<ZoomTrajectory> {
    config.validate()?;
    if n_samples < 2 {
        return Err(Error::invalid(
            "sample count",
            format!("{n_samples}, need >= 2"),
        ));
    }
    if let Some((lo, hi)) = config.infeasible_interval() {
        return Err(Error::InfeasibleZoom { lo, hi });
    }
    let (lo, hi) = variator_range(config.zoom_ratio)?;
    let m2s: Vec<f64> = if lo == hi {
        vec![lo]
    } else {
        let step = (hi - lo) / (n_samples - 1) as f64;
        (0..n_samples)
            .map(|i| {
                if i + 1 == n_samples {
                    hi
                } else {
                    lo + step * i as f64
                }
            })
            .collect()
    };
    let states = m2s
        .iter()
        .map(|&m2| config.state_at(m2))
        .collect::<Result<Vec<_>>>()?;
    let switch_index = states.iter().position(|s| s.branch != states[0].branch);
    Ok(ZoomTrajectory {
        config: *config,
        states,
        conserved_c: config.conserved_c(),
        switch_index,
    })
}

impl ZoomTrajectory {
    /// `(M_min, M_max)` over the sampled states.
    pub fn expansion_range(&self) -> (f64, f64) {
        self.states
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s.expansion), hi.max(s.expansion))
            })
    }

    /// Zoom state whose expansion equals `target` to within 1e-12 relative.
    ///
    /// The bracketing samples give a linear-in-`m2` first guess, refined by
    /// bisection on the exact state.
    pub fn state_for_expansion(&self, target: f64) -> Result<ZoomState> {
        let (min, max) = self.expansion_range();
        let tol = 1e-12 * max;
        if !(target >= min - tol && target <= max + tol) {
            return Err(Error::ExpansionOutOfRange { target, min, max });
        }
        if self.states.len() == 1 {
            return Ok(self.states[0]);
        }
        let i = self
            .states
            .windows(2)
            .position(|w| {
                let (a, b) = (w[0].expansion, w[1].expansion);
                (a.min(b) - tol..=a.max(b) + tol).contains(&target)
            })
            .ok_or(Error::ExpansionOutOfRange { target, min, max })?;
        let (s0, s1) = (self.states[i], self.states[i + 1]);
        let rising = s1.expansion >= s0.expansion;
        let (mut lo, mut hi) = (s0.m2, s1.m2);
        let t = ((target - s0.expansion) / (s1.expansion - s0.expansion)).clamp(0.0, 1.0);
        let mut m2 = if t.is_finite() {
            lo + t * (hi - lo)
        } else {
            lo
        };
        for _ in 0..200 {
            let s = self.config.state_at(m2)?;
            let err = s.expansion - target;
            if err.abs() <= 1e-12 * target {
                return Ok(s);
            }
            if (err < 0.0) == rising {
                lo = m2;
            } else {
                hi = m2;
            }
            m2 = 0.5 * (lo + hi);
        }
        self.config.state_at(m2)
    }

    /// Export as CSV with nine significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "m2,m1,branch,dx1_mm,dx2_mm,f_comb_mm,M")?;
        for s in &self.states {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_sig(s.m2, 9),
                fmt_sig(s.m1, 9),
                s.branch.label(),
                fmt_sig(s.dx1, 9),
                fmt_sig(s.dx2, 9),
                fmt_sig(s.f_comb, 9),
                fmt_sig(s.expansion, 9)
            )?;
        }
        Ok(())
    }
}

/// Output diameter (mm) of a collimated beam expanded to `m_target`.
pub fn beam_expand(trajectory: &ZoomTrajectory, input_diameter: f64, m_target: f64) -> Result<f64> {
    if !(input_diameter > 0.0) {
        return Err(Error::invalid(
            "input diameter",
            format!("{input_diameter} mm"),
        ));
    }
    let state = trajectory.state_for_expansion(m_target)?;
    Ok(input_diameter * state.expansion)
}

/// Residuals of the invariant suite for a solved trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationReport {
    /// Largest |output slope| (rad) over states and probe heights.
    pub max_slope: f64,
    /// Largest relative error of output height against `M * h`.
    pub max_height_error: f64,
    /// Largest `|U - C| / |C|`.
    pub max_conservation: f64,
    /// Largest |residual| of a least-squares line through `(m2, dx2)` (mm).
    pub linearity: f64,
    /// Largest `|f_comb - f1 m2| / |f_comb|`.
    pub max_focal_mismatch: f64,
    /// Largest `|m1 * m1_conjugate - 1|`.
    pub max_vieta: f64,
    /// Largest jump in `m1` across the branch switch divided by the median step.
    pub switch_jump_ratio: f64,
}

/// Tolerances the verification report is judged against.
pub mod tolerance {
    pub const SLOPE: f64 = 1e-9;
    pub const HEIGHT: f64 = 1e-6;
    pub const CONSERVATION: f64 = 1e-9;
    pub const LINEARITY: f64 = 1e-12;
    pub const VIETA: f64 = 1e-9;
    pub const JUMP: f64 = 10.0;
}

impl VerificationReport {
    pub fn passes(&self) -> bool {
        self.max_slope < tolerance::SLOPE
            && self.max_height_error < tolerance::HEIGHT
            && self.max_conservation < tolerance::CONSERVATION
            && self.linearity < tolerance::LINEARITY
            && self.max_vieta < tolerance::VIETA
            && self.max_focal_mismatch < tolerance::HEIGHT
            && self.switch_jump_ratio <= tolerance::JUMP
    }
}

/// Least-squares line through the points; returns the largest |residual|.
pub fn line_fit_residual(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 3 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return ys.iter().map(|y| (y - my).abs()).fold(0.0, f64::max);
    }
    let slope = sxy / sxx;
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (y - (my + slope * (x - mx))).abs())
        .fold(0.0, f64::max)
}

/// Ray-trace every state with collimated rays of the given heights and check
/// the algebraic invariants.
pub fn verify_trajectory(
    trajectory: &ZoomTrajectory,
    heights: &[f64],
) -> Result<VerificationReport> {
    let cfg = &trajectory.config;
    let c = trajectory.conserved_c;
    let mut report = VerificationReport {
        max_slope: 0.0,
        max_height_error: 0.0,
        max_conservation: 0.0,
        linearity: 0.0,
        max_focal_mismatch: 0.0,
        max_vieta: 0.0,
        switch_jump_ratio: 0.0,
    };
    for s in &trajectory.states {
        for &h in heights {
            let out = ray_trace(cfg, s, ParaxialRay::collimated(h))?;
            report.max_slope = report.max_slope.max(out.slope.abs());
            let rel = (out.height - s.expansion * h).abs() / (s.expansion * h).abs();
            report.max_height_error = report.max_height_error.max(rel);
        }
        let res = (cfg.u(s.m1, s.m2) - c).abs() / c.abs().max(f64::MIN_POSITIVE);
        report.max_conservation = report.max_conservation.max(res);
        let eq3 = cfg.f1 * s.m2;
        report.max_focal_mismatch = report
            .max_focal_mismatch
            .max((s.f_comb - eq3).abs() / s.f_comb.abs());
        report.max_vieta = report.max_vieta.max((s.m1 * s.m1_conjugate - 1.0).abs());
    }
    let m2s: Vec<f64> = trajectory.states.iter().map(|s| s.m2).collect();
    let dx2s: Vec<f64> = trajectory.states.iter().map(|s| s.dx2).collect();
    report.linearity = line_fit_residual(&m2s, &dx2s);
    if let Some(k) = trajectory.switch_index {
        report.switch_jump_ratio = switch_jump_ratio(&trajectory.states, k);
    }
    Ok(report)
}

fn switch_jump_ratio(states: &[ZoomState], k: usize) -> f64 {
    if k == 0 || states.len() < 3 {
        return 0.0;
    }
    let step = |i: usize| (states[i + 1].m1 - states[i].m1).abs();
    let jump = step(k - 1);
    // Local reference: the neighbouring steps on either side of the switch.
    let mut local = Vec::new();
    if k >= 2 {
        local.push(step(k - 2));
    }
    if k + 1 < states.len() {
        local.push(step(k));
    }
    let reference = local.iter().copied().fold(0.0, f64::max);
    if reference == 0.0 {
        if jump == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        jump / reference
    }
}
