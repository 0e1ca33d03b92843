//! Vessel phantom: two families of straight vessels at ±45° forming a
//! lattice with a prescribed number of crossings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Absorber, Point, Scene};
use crate::error::{Error, Result};

const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.a.dist(&self.b)
    }
}

/// Axis-aligned region in the imaging plane (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fov {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for Fov {
    fn default() -> Self {
        Self {
            x_min: -12.0,
            x_max: 12.0,
            z_min: 10.0,
            z_max: 34.0,
        }
    }
}

impl Fov {
    pub fn contains(&self, p: &Point) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.z_min..=self.z_max).contains(&p.z)
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.z_min, self.z_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.z_max > self.z_min;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("fov", "need finite bounds with max > min"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomOptions {
    #[serde(default)]
    pub fov: Fov,
    /// Vessel absorption coefficient (1/mm).
    #[serde(default = "default_mu_a")]
    pub mu_a: f64,
    #[serde(default = "default_radius")]
    pub vessel_radius_mm: f64,
    /// Spacing of point sources along each vessel (mm).
    #[serde(default = "default_step")]
    pub absorber_step_mm: f64,
    /// Smallest allowed distance between parallel vessels (mm).
    #[serde(default = "default_min_spacing")]
    pub min_spacing_mm: f64,
    #[serde(default = "default_mu_eff")]
    pub background_mu_eff: f64,
    #[serde(default = "default_c")]
    pub sound_speed: f64,
}

fn default_mu_a() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    0.2
}
fn default_step() -> f64 {
    0.1
}
fn default_min_spacing() -> f64 {
    2.0
}
fn default_mu_eff() -> f64 {
    0.05
}
fn default_c() -> f64 {
    1500.0
}

impl Default for PhantomOptions {
    fn default() -> Self {
        Self {
            fov: Fov::default(),
            mu_a: default_mu_a(),
            vessel_radius_mm: default_radius(),
            absorber_step_mm: default_step(),
            min_spacing_mm: default_min_spacing(),
            background_mu_eff: default_mu_eff(),
            sound_speed: default_c(),
        }
    }
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.x - o.x) * (b.z - o.z) - (a.z - o.z) * (b.x - o.x)
}

/// Proper intersection point of two segments. Touching endpoints and
/// collinear overlaps are not crossings.
pub fn segment_intersection(s: &Segment, t: &Segment) -> Option<Point> {
    let d1 = cross(&t.a, &t.b, &s.a);
    let d2 = cross(&t.a, &t.b, &s.b);
    let d3 = cross(&s.a, &s.b, &t.a);
    let d4 = cross(&s.a, &s.b, &t.b);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        let k = d1 / (d1 - d2);
        Some(Point::new(
            s.a.x + k * (s.b.x - s.a.x),
            s.a.z + k * (s.b.z - s.a.z),
        ))
    } else {
        None
    }
}

fn all_crossings(segments: &[Segment]) -> Vec<Point> {
    let mut out = Vec::new();
    for i in 0..segments.len() {
        for j in i + 1..segments.len() {
            if let Some(p) = segment_intersection(&segments[i], &segments[j]) {
                out.push(p);
            }
        }
    }
    out
}

/// Phantom with default options inside `fov`.
pub fn make_vessel_phantom(n_crossings: usize, fov: &Fov, seed: u64) -> Result<Scene> {
    make_vessel_phantom_with(
        n_crossings,
        &PhantomOptions {
            fov: *fov,
            ..PhantomOptions::default()
        },
        seed,
    )
}

/// Family A runs along +45°, family B along -45°. With `a` A-vessels and `b`
/// B-vessels all but the last B-vessel cross every A-vessel; the last one
/// stops early so the total is exactly `n_crossings`. `n_crossings = 0` gives
/// two parallel vessels.
pub fn make_vessel_phantom_with(
    n_crossings: usize,
    opts: &PhantomOptions,
    seed: u64,
) -> Result<Scene> {
    opts.fov.validate()?;
    if !(opts.absorber_step_mm > 0.0) || !(opts.mu_a >= 0.0) || !(opts.vessel_radius_mm >= 0.0) {
        return Err(Error::invalid(
            "phantom",
            "need step > 0, mu_a >= 0, radius >= 0",
        ));
    }
    let n = n_crossings;
    let (na, nb) = if n == 0 {
        (2, 0)
    } else {
        let a = (n as f64).sqrt().ceil() as usize;
        (a, n.div_ceil(a))
    };
    let last_hits = if nb == 0 { 0 } else { n - na * (nb - 1) };
    let fov = &opts.fov;
    let span = (fov.x_max - fov.x_min).min(fov.z_max - fov.z_min);
    let s = 0.9 * span * std::f64::consts::SQRT_2 / (na + nb.max(1)) as f64;
    if s < opts.min_spacing_mm {
        return Err(Error::InfeasiblePacking(format!(
            "{n} crossings need vessel spacing {s:.3} mm, below the {} mm minimum",
            opts.min_spacing_mm
        )));
    }
    let center = Point::new(0.5 * (fov.x_min + fov.x_max), 0.5 * (fov.z_min + fov.z_max));

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let segments = layout(na, nb, last_hits, s, center, &mut rng);
        if !segments
            .iter()
            .all(|g| fov.contains(&g.a) && fov.contains(&g.b))
        {
            continue;
        }
        let crossings = all_crossings(&segments);
        if crossings.len() != n {
            continue;
        }
        let absorbers = segments
            .iter()
            .flat_map(|g| {
                let steps = (g.length() / opts.absorber_step_mm).ceil().max(1.0) as usize;
                (0..=steps).map(move |i| {
                    let k = i as f64 / steps as f64;
                    Point::new(g.a.x + k * (g.b.x - g.a.x), g.a.z + k * (g.b.z - g.a.z))
                })
            })
            .map(|pos| Absorber {
                pos,
                mu_a: opts.mu_a,
                radius: opts.vessel_radius_mm,
            })
            .collect();
        return Ok(Scene {
            absorbers,
            background_mu_eff: opts.background_mu_eff,
            sound_speed: opts.sound_speed,
            segments,
            crossings,
        });
    }
    Err(Error::InfeasiblePacking(format!(
        "no layout with exactly {n} crossings after {MAX_ATTEMPTS} attempts"
    )))
}

/// Lay the vessels out in the rotated (u, v) frame, then map to (x, z).
fn layout(
    na: usize,
    nb: usize,
    last_hits: usize,
    s: f64,
    center: Point,
    rng: &mut ChaCha8Rng,
) -> Vec<Segment> {
    let pos = |i: usize, n: usize| (i as f64 - (n as f64 - 1.0) / 2.0) * s;
    let mut jitter = |scale: f64| rng.random_range(-scale..scale);
    let v: Vec<f64> = (0..na).map(|i| pos(i, na) + jitter(0.15 * s)).collect();
    let u: Vec<f64> = (0..nb).map(|j| pos(j, nb) + jitter(0.15 * s)).collect();
    // Without crossings the vessels stay exactly parallel.
    let max_tilt = if nb == 0 { 0.0 } else { 2f64.to_radians() };
    let tilts: Vec<f64> = (0..na + nb)
        .map(|_| {
            if max_tilt > 0.0 {
                jitter(max_tilt)
            } else {
                0.0
            }
        })
        .collect();

    let u_half = if nb == 0 {
        s
    } else {
        pos(nb - 1, nb) + 0.5 * s
    };
    let v_lo = pos(0, na) - 0.5 * s;
    let v_hi = pos(na - 1, na) + 0.5 * s;

    let mut local = Vec::with_capacity(na + nb);
    for &vi in &v {
        local.push(((-u_half, vi), (u_half, vi)));
    }
    for (j, &uj) in u.iter().enumerate() {
        let end = if j + 1 == nb && last_hits < na {
            0.5 * (pos(last_hits - 1, na) + pos(last_hits, na))
        } else {
            v_hi
        };
        local.push(((uj, v_lo), (uj, end)));
    }

    let r = std::f64::consts::FRAC_1_SQRT_2;
    let to_world = |(u, v): (f64, f64)| Point::new(center.x + r * (u - v), center.z + r * (u + v));
    local
        .into_iter()
        .zip(tilts)
        .map(|((p, q), tilt)| {
            let (mu, mv) = (0.5 * (p.0 + q.0), 0.5 * (p.1 + q.1));
            let (c, sn) = (tilt.cos(), tilt.sin());
            let rot = |(x, y): (f64, f64)| {
                let (dx, dy) = (x - mu, y - mv);
                (mu + c * dx - sn * dy, mv + sn * dx + c * dy)
            };
            Segment {
                a: to_world(rot(p)),
                b: to_world(rot(q)),
            }
        })
        .collect()
}
