//! Closed-form adiabatic surfaces: the three-state model on the `qy = 0`
//! slice and the two-state model everywhere.

use nalgebra::Matrix2;

use crate::coords::NuclearCoords;
use crate::params::{JtParams, PjtParams, C64};

/// `(V1, V2, V3)` on the `qy = 0` slice.
///
/// `V2` is the `Ey` (B₂) state, which decouples on the slice. `V1` and `V3`
/// are the two A₁ states, the `−` and `+` branches of the principal square
/// root. Third-order terms are included when present.
pub fn analytic_slice_potentials(p: &PjtParams, qx: f64) -> (C64, C64, C64) {
    let x = qx;
    let x2 = x * x;
    let x3 = x2 * x;
    let harm = p.omega * (0.5 * x2);
    let mut split = p.k * x + p.g * x2;
    let mut couple = p.alpha * x;
    let mut cubic = C64::new(0.0, 0.0);
    if let Some(t) = p.third {
        split += t.mu * x3;
        couple += t.beta * x2;
        cubic = t.nu * x3;
    }
    let a = p.eps_a + harm + cubic;
    let ex = p.eps_e + harm + cubic + split;
    let ey = p.eps_e + harm + cubic - split;
    let mean = (a + ex) * 0.5;
    let half = (a - ex) * 0.5;
    let root = (half * half + couple * couple).sqrt();
    (mean - root, ey, mean + root)
}

/// Closed-form quantities of the two-state model at one geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JtAdiabatic {
    /// `ε_E + ½ωρ² − u`.
    pub v1: C64,
    /// `ε_E + ½ωρ² + u`.
    pub v2: C64,
    /// Mixing angle with `tan θ = λ`, continuous in `φ` on circles that avoid
    /// the exceptional radius.
    pub theta: C64,
    /// `(k sin φ − gρ sin 2φ) / (k cos φ + gρ cos 2φ)`; infinite at a pole.
    pub lambda: C64,
    pub u: C64,
    /// Set when the denominator of `λ` vanishes. `θ` and `u` stay finite.
    pub pole: bool,
}

/// Mixing angle from `e^{2iθ} = (k e^{iφ} + gρ e^{−2iφ}) / (k e^{−iφ} + gρ e^{2iφ})`.
///
/// Inside the exceptional radius the branch is fixed by `θ → φ` as `g → 0`;
/// outside it by `θ → −2φ` as `k → 0`.
fn mixing_angle(k: C64, g: C64, rho: f64, phi: f64) -> C64 {
    let half_over_i = C64::new(0.0, -0.5);
    let e3 = C64::from_polar(1.0, 3.0 * phi);
    let e3c = C64::from_polar(1.0, -3.0 * phi);
    if k.norm() >= g.norm() * rho {
        let r = g * rho / k;
        C64::new(phi, 0.0) + half_over_i * ((r * e3c + 1.0).ln() - (r * e3 + 1.0).ln())
    } else {
        let s = k / (g * rho);
        C64::new(-2.0 * phi, 0.0) + half_over_i * ((s * e3 + 1.0).ln() - (s * e3c + 1.0).ln())
    }
}

pub fn jt_adiabatic(p: &JtParams, q: &NuclearCoords) -> JtAdiabatic {
    let (rho, phi) = (q.rho(), q.phi());
    let base = p.eps_e + p.omega * (0.5 * rho * rho);
    if rho == 0.0 {
        return JtAdiabatic {
            v1: base,
            v2: base,
            theta: C64::new(0.0, 0.0),
            lambda: C64::new(0.0, 0.0),
            u: C64::new(0.0, 0.0),
            pole: false,
        };
    }
    let x = p.k * phi.cos() + p.g * (rho * (2.0 * phi).cos());
    let y = p.k * phi.sin() - p.g * (rho * (2.0 * phi).sin());
    let scale = p.k.norm() + p.g.norm() * rho;
    let pole = x.norm() <= 1e-14 * scale;
    let lambda = if pole { C64::new(f64::INFINITY, 0.0) } else { y / x };
    let theta = mixing_angle(p.k, p.g, rho, phi);
    let u = (x * theta.cos() + y * theta.sin()) * rho;
    JtAdiabatic {
        v1: base - u,
        v2: base + u,
        theta,
        lambda,
        u,
        pole,
    }
}

/// `T(θ) = [[cos θ/2, sin θ/2], [sin θ/2, −cos θ/2]]`.
///
/// The first column belongs to `V2 = ε + ½ωρ² + u`, the second to `V1`.
pub fn jt_eigvecs(theta: C64) -> Matrix2<C64> {
    let h = theta * 0.5;
    let (c, s) = (h.cos(), h.sin());
    Matrix2::new(c, s, s, -c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diabatic::{build_jt_diabatic, build_pjt_diabatic};
    use crate::eigen::eig_complex_symmetric;
    use crate::params::published;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn slice_at_origin() {
        let p = published::pjt_second_order();
        let (v1, v2, v3) = analytic_slice_potentials(&p, 0.0);
        assert_eq!(v1, c(0.3339, -0.0121));
        assert_eq!(v2, c(0.3339, -0.0121));
        assert!((v3 - c(0.3760, -0.0027)).norm() < 1e-16);
    }

    #[test]
    fn b2_state_at_half() {
        let p = published::pjt_second_order();
        let (_, v2, _) = analytic_slice_potentials(&p, 0.5);
        // εE + ½ω x² − k x − g x², evaluated independently
        let want = c(0.3339 + 0.5 * -0.0031 * 0.25 + 0.0037 * 0.5 - 0.0085 * 0.25, -0.0121 + 0.5 * 0.0019 * 0.25 + 0.0012 * 0.5 + 0.0021 * 0.25);
        assert!((v2 - want).norm() < 1e-15);
        assert!((v2 - c(0.33324, -0.01074)).norm() < 5e-6);
    }

    #[test]
    fn decoupled_limit_matches_two_state_model() {
        let j = published::jt_second_order();
        let p = j.as_pjt(c(0.5, -0.001));
        for x in [-0.4, -0.1, 0.2, 0.45] {
            let (v1, v2, _) = analytic_slice_potentials(&p, x);
            let a = jt_adiabatic(&j, &NuclearCoords::cartesian(x, 0.0).unwrap());
            let split = j.k * x + j.g * x * x;
            let base = j.eps_e + j.omega * 0.5 * x * x;
            assert!((v1 - (base + split)).norm() < 1e-15);
            assert!((v2 - (base - split)).norm() < 1e-15);
            let mut want = [base + split, base - split];
            let mut got = [a.v1, a.v2];
            want.sort_by(|a, b| a.re.total_cmp(&b.re));
            got.sort_by(|a, b| a.re.total_cmp(&b.re));
            assert!((want[0] - got[0]).norm() < 1e-15 && (want[1] - got[1]).norm() < 1e-15);
        }
    }

    #[test]
    fn linear_limit() {
        let p = JtParams::new(c(0.3, -0.01), c(0.1, 0.01), c(-0.004, -0.001), c(0.0, 0.0)).unwrap();
        for phi in [0.1, 1.0, 2.5, 4.0, 6.0] {
            let q = NuclearCoords::polar(0.3, phi).unwrap();
            let a = jt_adiabatic(&p, &q);
            assert!((a.theta - c(phi, 0.0)).norm() < 1e-15);
            let base = p.eps_e + p.omega * (0.5 * 0.09);
            let set = [base - p.k * 0.3, base + p.k * 0.3];
            for v in [a.v1, a.v2] {
                assert!(set.iter().any(|s| (s - v).norm() < 1e-15));
            }
        }
    }

    #[test]
    fn origin() {
        let p = published::jt_second_order();
        let a = jt_adiabatic(&p, &NuclearCoords::origin());
        assert_eq!((a.v1, a.v2, a.u), (p.eps_e, p.eps_e, c(0.0, 0.0)));
    }

    #[test]
    fn eigvec_examples() {
        let t = jt_eigvecs(c(0.0, 0.0));
        assert_eq!(t, Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)));
        let t = jt_eigvecs(c(PI, 0.0));
        assert!((t - Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))).norm() < 1e-15);
        let t = jt_eigvecs(c(0.7, -1.3));
        assert!((t.transpose() * t - Matrix2::identity()).norm() < 1e-14);
    }

    #[test]
    fn pole_is_flagged() {
        // k cos φ + gρ cos 2φ = 0 at φ = π/2 when ρ g = 0 is impossible, so
        // choose real k, g with a root on the circle.
        let p = JtParams::new(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        // cos φ + ρ cos 2φ = 0 at φ = π/2 for ρ→0 only; use φ = π/3, ρ = 1: 1/2 − 1/2 = 0
        let q = NuclearCoords::polar(1.0, PI / 3.0).unwrap();
        let a = jt_adiabatic(&p, &q);
        assert!(a.pole);
        assert!(a.theta.re.is_finite() && a.u.re.is_finite());
    }

    #[test]
    fn critical_radius_coalescence() {
        let p = published::jt_second_order();
        let rc = p.k.norm() / p.g.norm();
        assert!((rc - 0.1332).abs() < 5e-5);
        // λ = ±i ⇔ 1 + r ρ e^{±3iφ} = 0 with r = g/k; solve for φ on ρ = ρc
        let r = p.g / p.k;
        let target = (-1.0 / (r * rc)).arg();
        let phi = target / 3.0;
        let q = NuclearCoords::polar(rc, phi).unwrap();
        let a = jt_adiabatic(&p, &q);
        assert!(a.u.norm() < 1e-10, "u = {}", a.u);
        let es = eig_complex_symmetric(&build_jt_diabatic(&p, &q)).unwrap();
        assert!(es.pair(0, 1).coalesced);
    }

    proptest::proptest! {
        #[test]
        fn slice_matches_numeric(qx in -0.5f64..0.5) {
            for p in [published::pjt_second_order(), published::pjt_third_order()] {
                let (v1, v2, v3) = analytic_slice_potentials(&p, qx);
                let m = build_pjt_diabatic(&p, &NuclearCoords::cartesian(qx, 0.0).unwrap()).unwrap();
                let es = eig_complex_symmetric(&m).unwrap();
                for v in [v1, v2, v3] {
                    let best = es.values.iter().map(|w| (w - v).norm()).fold(f64::INFINITY, f64::min);
                    proptest::prop_assert!(best <= 1e-12 * v.norm());
                }
            }
        }

        #[test]
        fn jt_matches_numeric(rho in 0.01f64..0.5, phi in 0.0f64..6.3) {
            let p = published::jt_second_order();
            let q = NuclearCoords::polar(rho, phi).unwrap();
            let a = jt_adiabatic(&p, &q);
            let es = eig_complex_symmetric(&build_jt_diabatic(&p, &q)).unwrap();
            proptest::prop_assume!(es.pair(0, 1).rigidity > 1e-6);
            let base = p.eps_e + p.omega * (0.5 * rho * rho);
            let closed = (p.k * p.k + p.g * p.g * rho * rho + p.k * p.g * (2.0 * rho * (3.0 * phi).cos())).sqrt() * rho;
            for v in [a.v1, a.v2] {
                let best = es.values.iter().map(|w| (w - v).norm()).fold(f64::INFINITY, f64::min);
                proptest::prop_assert!(best <= 1e-12 * v.norm());
                let alt = [base - closed, base + closed];
                proptest::prop_assert!(alt.iter().any(|w| (w - v).norm() <= 1e-12 * v.norm()));
            }
            // columns of T(θ) diagonalise the matrix, first column with +u
            let t = jt_eigvecs(a.theta);
            let m = build_jt_diabatic(&p, &q);
            let m2 = m.storage().fixed_view::<2, 2>(0, 0).into_owned();
            let d = t.transpose() * m2 * t;
            proptest::prop_assert!((d[(0, 0)] - a.v2).norm() < 1e-13);
            proptest::prop_assert!((d[(1, 1)] - a.v1).norm() < 1e-13);
            proptest::prop_assert!(d[(0, 1)].norm() < 1e-13);
            if !a.pole {
                proptest::prop_assert!((a.theta.tan() - a.lambda).norm() <= 1e-9 * (1.0 + a.lambda.norm_sqr()));
                // u = a √(1+λ²) up to the branch of the square root
                let lead = (p.k * phi.cos() + p.g * (rho * (2.0 * phi).cos())) * rho;
                let alt = lead * (a.lambda * a.lambda + 1.0).sqrt();
                proptest::prop_assert!((alt - a.u).norm().min((alt + a.u).norm()) <= 1e-12 * (1.0 + a.u.norm()));
            }
        }
    }
}
