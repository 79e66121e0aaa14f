//! Real geometry of complex-orthogonal eigenvector frames.
//!
//! A matrix with `TᵀT = I` factors as `T = R·P` with `R` real orthogonal and
//! `P` Hermitian positive definite. The pair of columns of `R` belonging to
//! the two tracked states spans an oriented plane in ℝ³; its rotation and
//! tilt along a path define the connection whose loop integral is the
//! geometric phase.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::params::C64;

/// Real orthogonal factor of `T`, with the data needed to differentiate it.
pub(crate) struct Polar {
    pub r: Matrix3<f64>,
    /// Right singular vectors of `T` (eigenvectors of `P`).
    v: Matrix3<C64>,
    s: Vector3<f64>,
}

pub(crate) fn real_polar(t: &Matrix3<C64>) -> Polar {
    let svd = t.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let r = (u * vt).map(|z| z.re);
    Polar {
        r,
        v: vt.adjoint(),
        s: svd.singular_values,
    }
}

impl Polar {
    /// `K = Rᵀ dR` given `F = Tᵀ dT`, from `KP + PK = PF − F†P`.
    pub fn derivative(&self, f: &Matrix3<C64>) -> Matrix3<f64> {
        let p = self.v * Matrix3::from_diagonal(&self.s.map(|x| C64::new(x, 0.0))) * self.v.adjoint();
        let rhs = p * f - f.adjoint() * p;
        let mut k = self.v.adjoint() * rhs * self.v;
        for i in 0..3 {
            for j in 0..3 {
                k[(i, j)] /= self.s[i] + self.s[j];
            }
        }
        (self.v * k * self.v.adjoint()).map(|z| z.re)
    }
}

/// Reference direction the pair-plane normal is oriented towards: the
/// diabatic A state for three-state models and the padding axis for two.
pub(crate) fn reference_axis(dim: usize) -> Vector3<f64> {
    if dim == 3 {
        Vector3::x()
    } else {
        Vector3::z()
    }
}

/// Oriented orthonormal frame `(e1, e2, n)` of a state pair.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PairFrame {
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    pub n: Vector3<f64>,
    pub sigma: f64,
}

impl PairFrame {
    /// With `sigma = None` the orientation is chosen so that `n·a > 0`.
    pub fn new(r: &Matrix3<f64>, pair: (usize, usize), axis: &Vector3<f64>, sigma: Option<f64>) -> Self {
        let e1 = r.column(pair.0).into_owned();
        let rj = r.column(pair.1).into_owned();
        let sigma = sigma.unwrap_or_else(|| if e1.cross(&rj).dot(axis) >= 0.0 { 1.0 } else { -1.0 });
        let e2 = rj * sigma;
        PairFrame {
            e1,
            e2,
            n: e1.cross(&e2),
            sigma,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.e1, self.e2, self.n])
    }

    /// Connection one-form along a direction, given `dR = R K`.
    ///
    /// The in-plane rotation rate `e2·de1` plus the solid-angle rate of the
    /// normal about the reference axis.
    pub fn connection(&self, r: &Matrix3<f64>, k: &Matrix3<f64>, pair: (usize, usize), axis: &Vector3<f64>) -> f64 {
        let dr = r * k;
        let de1 = dr.column(pair.0).into_owned();
        let de2 = dr.column(pair.1).into_owned() * self.sigma;
        self.connection_from(&de1, &de2, axis)
    }

    pub fn connection_from(&self, de1: &Vector3<f64>, de2: &Vector3<f64>, axis: &Vector3<f64>) -> f64 {
        let dn = de1.cross(&self.e2) + self.e1.cross(de2);
        self.e2.dot(de1) + axis.dot(&self.n.cross(&dn)) / (1.0 + axis.dot(&self.n))
    }
}

/// Discrete connection increment between consecutive frames.
pub(crate) fn increment(a: &PairFrame, b: &PairFrame, axis: &Vector3<f64>) -> f64 {
    let g = a.rotation().transpose() * b.rotation();
    let twist = (0.5 * (g[(1, 0)] - g[(0, 1)])).atan2(0.5 * (g[(0, 0)] + g[(1, 1)]));
    let solid = 2.0
        * axis
            .dot(&a.n.cross(&b.n))
            .atan2(1.0 + axis.dot(&a.n) + axis.dot(&b.n) + a.n.dot(&b.n));
    twist + solid
}

/// Spin-lifted rotation angle about the initial normal accumulated along a
/// sequence of frames. Exact modulo 4π for closed loops.
pub(crate) fn lifted_holonomy(frames: &[PairFrame]) -> (f64, f64) {
    let mut total = UnitQuaternion::identity();
    for w in frames.windows(2) {
        let g = w[0].rotation().transpose() * w[1].rotation();
        let mut q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(g));
        if q.quaternion().w < 0.0 {
            q = UnitQuaternion::new_unchecked(-q.into_inner());
        }
        total *= q;
    }
    let q = total.quaternion();
    // Residual tilt of the final normal: zero for a loop that closes.
    let tilt = (q.i * q.i + q.j * q.j).sqrt();
    (2.0 * q.k.atan2(q.w), tilt)
}
