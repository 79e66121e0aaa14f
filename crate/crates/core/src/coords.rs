//! Symmetry-breaking nuclear coordinates of an X₃ molecule.
//!
//! The degenerate `e` mode is described either by the mass-scaled
//! cartesian pair `(qx, qy)` or by its polar form `(rho, phi)` with
//! `qx = rho cos(phi)` and `qy = rho sin(phi)`. The totally symmetric mode
//! is frozen at zero and does not appear anywhere in the models.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Conversion constant between bond displacements and `(qx, qy)`, in 1/a₀.
pub const BOND_SCALE: f64 = 2.639255;

/// Equilibrium bond length of the reference ion, in a₀.
pub const EQUILIBRIUM_BOND: f64 = 1.65;

/// Value at which the symmetric stretch is frozen.
pub const SYMMETRIC_MODE: f64 = 0.0;

/// A point in the `(qx, qy)` plane, carrying both representations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NuclearCoords {
    qx: f64,
    qy: f64,
    rho: f64,
    phi: f64,
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} is not finite ({x})")))
    }
}

/// Maps an angle into `[0, 2π)`.
pub fn normalize_angle(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl NuclearCoords {
    pub fn origin() -> Self {
        Self {
            qx: 0.0,
            qy: 0.0,
            rho: 0.0,
            phi: 0.0,
        }
    }

    pub fn cartesian(qx: f64, qy: f64) -> Result<Self> {
        check_finite("qx", qx)?;
        check_finite("qy", qy)?;
        let rho = qx.hypot(qy);
        let phi = if rho == 0.0 {
            0.0
        } else {
            normalize_angle(qy.atan2(qx))
        };
        Ok(Self { qx, qy, rho, phi })
    }

    /// `rho` must be non-negative; `phi` is in radians and is wrapped into `[0, 2π)`.
    pub fn polar(rho: f64, phi: f64) -> Result<Self> {
        check_finite("rho", rho)?;
        check_finite("phi", phi)?;
        if rho < 0.0 {
            return Err(Error::Domain(format!("rho must be non-negative, got {rho}")));
        }
        if rho == 0.0 {
            return Ok(Self::origin());
        }
        let phi = normalize_angle(phi);
        let (s, c) = phi.sin_cos();
        Ok(Self {
            qx: rho * c,
            qy: rho * s,
            rho,
            phi,
        })
    }

    /// Builds the point from the three bond displacements `Δr₁, Δr₂, Δr₃` (a₀).
    pub fn from_bond_displacements(dr: [f64; 3]) -> Result<Self> {
        for (i, &d) in dr.iter().enumerate() {
            check_finite(&format!("dr{}", i + 1), d)?;
        }
        let qx = BOND_SCALE / 3f64.sqrt() * (2.0 * dr[0] - dr[1] - dr[2]);
        let qy = BOND_SCALE * (dr[1] - dr[2]);
        Self::cartesian(qx, qy)
    }

    pub fn qx(&self) -> f64 {
        self.qx
    }

    pub fn qy(&self) -> f64 {
        self.qy
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Euclidean distance in the `(qx, qy)` plane.
    pub fn distance(&self, other: &NuclearCoords) -> f64 {
        (self.qx - other.qx).hypot(self.qy - other.qy)
    }

    /// Shifted copy, used for finite-difference stencils.
    pub fn offset(&self, dqx: f64, dqy: f64) -> Result<Self> {
        Self::cartesian(self.qx + dqx, self.qy + dqy)
    }
}
