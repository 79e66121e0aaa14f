//! Complex-symmetric diabatic potential matrices.
//!
//! States are ordered `(A, Ex, Ey)` for the three-state model and `(Ex, Ey)`
//! for the two-state one. Everything is built from the cartesian pair so the
//! polar and cartesian forms of one point give bitwise identical matrices.

use nalgebra::{Matrix3, Vector3};

use crate::coords::NuclearCoords;
use crate::error::{Error, Result};
use crate::params::{JtParams, Model, PjtParams, C64};

/// Points with `|qy|` below this count as lying on the `qy = 0` slice.
pub const SLICE_TOLERANCE: f64 = 1e-12;

/// A symmetric 2×2 or 3×3 complex potential matrix (Hartree).
///
/// Two-state matrices live in the upper-left block of the 3×3 storage; the
/// remaining entries are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiabaticMatrix {
    dim: usize,
    m: Matrix3<C64>,
}

impl DiabaticMatrix {
    /// Wraps a square matrix given by rows. Symmetry is not enforced here so
    /// the eigensolver can report violations.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if !(dim == 2 || dim == 3) || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Contract(format!("expected a 2x2 or 3x3 matrix, got {dim} rows")));
        }
        let mut m = Matrix3::zeros();
        for (i, r) in rows.iter().enumerate() {
            for (j, &z) in r.iter().enumerate() {
                m[(i, j)] = z;
            }
        }
        Ok(Self { dim, m })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        assert!(i < self.dim && j < self.dim, "index out of range");
        self.m[(i, j)]
    }

    /// The 3×3 storage (padded with zeros for two-state matrices).
    pub fn storage(&self) -> &Matrix3<C64> {
        &self.m
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.m[(i, i)]).sum()
    }

    /// Frobenius norm of the active block.
    pub fn norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.m[(i, j)] == self.m[(j, i)]))
    }

    pub fn real_part(&self) -> Matrix3<f64> {
        self.m.map(|z| z.re)
    }

    pub fn imag_part(&self) -> Matrix3<f64> {
        self.m.map(|z| z.im)
    }
}

/// Coupling matrices multiplying `k`, `g` and `alpha` at a geometry.
///
/// In polar form the E-blocks are `ρ[[cos φ, sin φ], [sin φ, −cos φ]]` and
/// `ρ²[[cos 2φ, −sin 2φ], [−sin 2φ, −cos 2φ]]`; the A–E row is
/// `ρ(cos φ, −sin φ)`.
pub fn coupling_matrices(q: &NuclearCoords) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let (x, y) = (q.qx(), q.qy());
    let c2 = x * x - y * y;
    let s2 = 2.0 * x * y;
    #[rustfmt::skip]
    let jk = Matrix3::new(
        0.0, 0.0, 0.0,
        0.0, x, y,
        0.0, y, -x,
    );
    #[rustfmt::skip]
    let jg = Matrix3::new(
        0.0, 0.0, 0.0,
        0.0, c2, -s2,
        0.0, -s2, -c2,
    );
    #[rustfmt::skip]
    let ja = Matrix3::new(
        0.0, x, -y,
        x, 0.0, 0.0,
        -y, 0.0, 0.0,
    );
    (jk, jg, ja)
}

fn symmetric(diag: [C64; 3], ae_x: C64, ae_y: C64, exy: C64) -> Matrix3<C64> {
    let mut m = Matrix3::from_diagonal(&Vector3::from(diag));
    m[(0, 1)] = ae_x;
    m[(1, 0)] = ae_x;
    m[(0, 2)] = ae_y;
    m[(2, 0)] = ae_y;
    m[(1, 2)] = exy;
    m[(2, 1)] = exy;
    m
}

/// Three-state `(A, Ex, Ey)` potential matrix.
///
/// Third-order parameters are only defined on the `qy = 0` slice; elsewhere an
/// [`Error::Unsupported`] is returned.
pub fn build_pjt_diabatic(p: &PjtParams, q: &NuclearCoords) -> Result<DiabaticMatrix> {
    let (x, y) = (q.qx(), q.qy());
    let harm = p.omega * (0.5 * (x * x + y * y));
    let c2 = x * x - y * y;
    let s2 = 2.0 * x * y;
    let split = p.k * x + p.g * c2;
    let mut diag = [p.eps_a + harm, p.eps_e + harm + split, p.eps_e + harm - split];
    let mut ae_x = p.alpha * x;
    let ae_y = -(p.alpha * y);
    let exy = p.k * y - p.g * s2;
    if let Some(t) = p.third {
        if y.abs() > SLICE_TOLERANCE {
            return Err(Error::Unsupported(format!(
                "third-order terms are only defined on the qy = 0 slice (qy = {y})"
            )));
        }
        let x2 = x * x;
        let x3 = x2 * x;
        let cubic = t.nu * x3;
        let skew = t.mu * x3;
        diag[0] += cubic;
        diag[1] += cubic + skew;
        diag[2] += cubic - skew;
        ae_x += t.beta * x2;
    }
    Ok(DiabaticMatrix {
        dim: 3,
        m: symmetric(diag, ae_x, ae_y, exy),
    })
}

/// Two-state `(Ex, Ey)` potential matrix.
pub fn build_jt_diabatic(p: &JtParams, q: &NuclearCoords) -> DiabaticMatrix {
    let (x, y) = (q.qx(), q.qy());
    let harm = p.eps_e + p.omega * (0.5 * (x * x + y * y));
    let split = p.k * x + p.g * (x * x - y * y);
    let off = p.k * y - p.g * (2.0 * x * y);
    let mut m = Matrix3::zeros();
    m[(0, 0)] = harm + split;
    m[(1, 1)] = harm - split;
    m[(0, 1)] = off;
    m[(1, 0)] = off;
    DiabaticMatrix { dim: 2, m }
}

/// Width matrix `Γ = −2 Im V` of the three-state model.
pub fn gamma_matrix(p: &PjtParams, q: &NuclearCoords) -> Result<Matrix3<f64>> {
    Ok(build_pjt_diabatic(p, q)?.imag_part() * -2.0)
}

/// Cartesian derivatives `[∂V/∂qx, ∂V/∂qy]` of the diabatic matrix.
pub fn diabatic_gradient(model: &Model, q: &NuclearCoords) -> Result<[DiabaticMatrix; 2]> {
    let (x, y) = (q.qx(), q.qy());
    let (dim, omega, k, g, alpha) = match model {
        Model::Pjt(p) => {
            if p.third.is_some() {
                return Err(Error::Unsupported(
                    "derivatives across the slice are undefined for third-order models".into(),
                ));
            }
            (3, p.omega, p.k, p.g, p.alpha)
        }
        Model::Jt(p) => (2, p.omega, p.k, p.g, C64::new(0.0, 0.0)),
    };
    // ∂/∂qx
    let hx = omega * x;
    let sx = k + g * (2.0 * x);
    let ox = -(g * (2.0 * y));
    // ∂/∂qy
    let hy = omega * y;
    let sy = -(g * (2.0 * y));
    let oy = k - g * (2.0 * x);
    let zero = C64::new(0.0, 0.0);
    let (dx, dy) = if dim == 3 {
        (
            symmetric([hx, hx + sx, hx - sx], alpha, zero, ox),
            symmetric([hy, hy + sy, hy - sy], zero, -alpha, oy),
        )
    } else {
        let mut dx = Matrix3::zeros();
        dx[(0, 0)] = hx + sx;
        dx[(1, 1)] = hx - sx;
        dx[(0, 1)] = ox;
        dx[(1, 0)] = ox;
        let mut dy = Matrix3::zeros();
        dy[(0, 0)] = hy + sy;
        dy[(1, 1)] = hy - sy;
        dy[(0, 1)] = oy;
        dy[(1, 0)] = oy;
        (dx, dy)
    };
    Ok([DiabaticMatrix { dim, m: dx }, DiabaticMatrix { dim, m: dy }])
}
