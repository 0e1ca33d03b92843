//! Thin-lens paraxial ray transfer, used to verify solved zoom states
//! independently of the closed-form Gaussian solution.

use crate::error::{Error, Result};
use crate::zoom::{ZoomConfig, ZoomState};

/// A meridional ray: height above the axis (mm) and paraxial slope (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParaxialRay {
    pub height: f64,
    pub slope: f64,
}

impl ParaxialRay {
    pub fn new(height: f64, slope: f64) -> Result<Self> {
        if !height.is_finite() || !slope.is_finite() {
            return Err(Error::invalid("ray", "height and slope must be finite"));
        }
        Ok(Self { height, slope })
    }

    pub fn collimated(height: f64) -> Self {
        Self { height, slope: 0.0 }
    }

    /// Thin lens of focal length `f` (mm).
    pub fn refract(self, f: f64) -> Self {
        Self {
            height: self.height,
            slope: self.slope - self.height / f,
        }
    }

    /// Free-space gap of `d` mm.
    pub fn transfer(self, d: f64) -> Self {
        Self {
            height: self.height + d * self.slope,
            slope: self.slope,
        }
    }
}

/// Axial positions (mm) of the three lenses. L1 sits at z = 0 at the long-focus
/// position; L3 never moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensLayout {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
}

impl LensLayout {
    pub fn for_state(config: &ZoomConfig, state: &ZoomState) -> Self {
        let z2_long = config.d1_long;
        // L3's front focal point sits on L2's (virtual) image of the L1 focus.
        let z3 = z2_long + config.f2 * (1.0 - config.m2_long) + config.f3;
        Self {
            z1: state.dx1,
            z2: z2_long + state.dx2,
            z3,
        }
    }

    pub fn gaps(&self) -> (f64, f64) {
        (self.z2 - self.z1, self.z3 - self.z2)
    }

    pub fn check_clearance(&self) -> Result<()> {
        let (g12, g23) = self.gaps();
        if g12 < 0.0 {
            return Err(Error::LensCollision {
                between: "L1 and L2",
                gap_mm: g12,
            });
        }
        if g23 < 0.0 {
            return Err(Error::LensCollision {
                between: "L2 and L3",
                gap_mm: g23,
            });
        }
        Ok(())
    }
}

/// Trace `input` (given at the L1 plane) through L1, L2 and L3 at the lens
/// positions of `state`; the returned ray is taken just after L3.
pub fn ray_trace(
    config: &ZoomConfig,
    state: &ZoomState,
    input: ParaxialRay,
) -> Result<ParaxialRay> {
    let layout = LensLayout::for_state(config, state);
    layout.check_clearance()?;
    let (g12, g23) = layout.gaps();
    Ok(input
        .refract(config.f1)
        .transfer(g12)
        .refract(config.f2)
        .transfer(g23)
        .refract(config.f3))
}
