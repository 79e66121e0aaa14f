//! First-derivative nonadiabatic couplings `F = Tᵀ∇T` and the single-valued gauge.
//!
//! Couplings are returned in the eigenvector frame of the standalone
//! eigensolver (branches by ascending real part). In the single-valued gauge
//! the two lowest states carry the phase `e^{−iχ}` with `∇χ` the pair
//! connection, which adds `−i∇χ` to both diagonal entries.

use nalgebra::{Matrix3, Vector3};

use crate::coords::NuclearCoords;
use crate::eigen::{eig_complex_symmetric, frame_derivative, Eigensystem};
use crate::error::{Error, Result};
use crate::frame::{increment, lifted_holonomy, real_polar, reference_axis, PairFrame};
use crate::params::{JtParams, Model, C64};
use crate::tracking::{aligned_eigensystem, OVERLAP_THRESHOLD};

/// States whose phase is fixed by the single-valued gauge.
pub const GAUGE_PAIR: (usize, usize) = (0, 1);

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gauge {
    Raw,
    SingleValued,
}

impl Gauge {
    pub fn as_str(&self) -> &'static str {
        match self {
            Gauge::Raw => "raw",
            Gauge::SingleValued => "single_valued",
        }
    }
}

/// Coupling matrices along `qx` and `qy` at one geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct NacField {
    pub q: NuclearCoords,
    pub dim: usize,
    pub x: Matrix3<C64>,
    pub y: Matrix3<C64>,
    pub gauge: Gauge,
    /// Eigenvalues and right eigenvectors the couplings refer to.
    pub values: Vec<C64>,
    pub frame: Matrix3<C64>,
}

impl NacField {
    /// Component along `ρ̂ = (cos φ, sin φ)`.
    pub fn radial(&self) -> Matrix3<C64> {
        let (s, c) = self.q.phi().sin_cos();
        self.x * C64::new(c, 0.0) + self.y * C64::new(s, 0.0)
    }

    /// Component along `φ̂ = (−sin φ, cos φ)`.
    pub fn angular(&self) -> Matrix3<C64> {
        let (s, c) = self.q.phi().sin_cos();
        self.y * C64::new(c, 0.0) - self.x * C64::new(s, 0.0)
    }

    pub fn entry(&self, i: usize, j: usize) -> [C64; 2] {
        [self.x[(i, j)], self.y[(i, j)]]
    }

    /// Drops the gauge term from the diagonal.
    pub fn raw(&self) -> NacField {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.x[(i, i)] = ZERO;
            out.y[(i, i)] = ZERO;
        }
        out.gauge = Gauge::Raw;
        out
    }
}

/// Gradient of the connection `χ` of the gauge pair, given `F` along two directions.
fn connection_gradient(es: &Eigensystem, fx: &Matrix3<C64>, fy: &Matrix3<C64>) -> [f64; 2] {
    let polar = real_polar(&es.vectors);
    let axis = reference_axis(es.dim());
    let frame = PairFrame::new(&polar.r, GAUGE_PAIR, &axis, None);
    let ax = frame.connection(&polar.r, &polar.derivative(fx), GAUGE_PAIR, &axis);
    let ay = frame.connection(&polar.r, &polar.derivative(fy), GAUGE_PAIR, &axis);
    [ax, ay]
}

fn with_gauge(mut fx: Matrix3<C64>, mut fy: Matrix3<C64>, grad: [f64; 2]) -> (Matrix3<C64>, Matrix3<C64>) {
    for i in [GAUGE_PAIR.0, GAUGE_PAIR.1] {
        fx[(i, i)] = C64::new(0.0, -grad[0]);
        fy[(i, i)] = C64::new(0.0, -grad[1]);
    }
    (fx, fy)
}

fn check_regular(es: &Eigensystem, q: &NuclearCoords) -> Result<()> {
    let scale = es.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if es.any_coalesced() || es.pairs.iter().any(|p| p.gap <= 1e-13 * scale) {
        return Err(Error::Singularity { qx: q.qx(), qy: q.qy() });
    }
    Ok(())
}

fn field_in_frame(model: &Model, q: &NuclearCoords, es: &Eigensystem) -> Result<NacField> {
    check_regular(es, q)?;
    let [dx, dy] = model.diabatic_gradient(q)?;
    let fx = frame_derivative(&es.vectors, &es.values, dx.storage());
    let fy = frame_derivative(&es.vectors, &es.values, dy.storage());
    let grad = connection_gradient(es, &fx, &fy);
    let (x, y) = with_gauge(fx, fy, grad);
    Ok(NacField {
        q: *q,
        dim: es.dim(),
        x,
        y,
        gauge: Gauge::SingleValued,
        values: es.values.clone(),
        frame: es.vectors,
    })
}

/// Couplings from first-order perturbation theory,
/// `F_mn = (Tᵀ ∂V T)_mn / (V_n − V_m)`, in the single-valued gauge.
pub fn nac_field(model: &Model, q: &NuclearCoords) -> Result<NacField> {
    let es = eig_complex_symmetric(&model.diabatic(q)?)?;
    field_in_frame(model, q, &es)
}

fn stencil(model: &Model, q: &NuclearCoords, reference: &Matrix3<C64>, dx: f64, dy: f64, index: usize) -> Result<Eigensystem> {
    let p = q.offset(dx, dy)?;
    aligned_eigensystem(model, &p, reference).map_err(|reason| Error::Refinement {
        segment: (index, index + 1),
        reason,
    })
}

/// Central finite differences `Tᵀ (T(q+h) − T(q−h)) / 2h` of overlap-aligned
/// frames. The gauge term is differenced from the real polar frames.
pub fn numeric_nac(model: &Model, q: &NuclearCoords, step: f64) -> Result<NacField> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {step}")));
    }
    let es = eig_complex_symmetric(&model.diabatic(q)?)?;
    check_regular(&es, q)?;
    let t = es.vectors;
    let dim = es.dim();
    let axis = reference_axis(dim);
    let centre = real_polar(&t);
    let frame = PairFrame::new(&centre.r, GAUGE_PAIR, &axis, None);

    let mut comps = [Matrix3::zeros(); 2];
    let mut grad = [0.0; 2];
    for (c, (hx, hy)) in [(step, 0.0), (0.0, step)].into_iter().enumerate() {
        let plus = stencil(model, q, &t, hx, hy, 2 * c)?;
        let minus = stencil(model, q, &t, -hx, -hy, 2 * c + 1)?;
        let mut f = t.transpose() * (plus.vectors - minus.vectors) / C64::new(2.0 * step, 0.0);
        for i in 0..dim {
            f[(i, i)] = ZERO;
        }
        for i in dim..3 {
            for j in 0..3 {
                f[(i, j)] = ZERO;
                f[(j, i)] = ZERO;
            }
        }
        let rp = real_polar(&plus.vectors).r;
        let rm = real_polar(&minus.vectors).r;
        let dr = (rp - rm) / (2.0 * step);
        let de1: Vector3<f64> = dr.column(GAUGE_PAIR.0).into_owned();
        let de2: Vector3<f64> = dr.column(GAUGE_PAIR.1).into_owned() * frame.sigma;
        grad[c] = frame.connection_from(&de1, &de2, &axis);
        comps[c] = f;
    }
    let (x, y) = with_gauge(comps[0], comps[1], grad);
    Ok(NacField {
        q: *q,
        dim,
        x,
        y,
        gauge: Gauge::SingleValued,
        values: es.values,
        frame: t,
    })
}

/// Richardson-extrapolated [`numeric_nac`]: `(4 F(h/2) − F(h)) / 3`.
pub fn numeric_nac_extrapolated(model: &Model, q: &NuclearCoords, step: f64) -> Result<NacField> {
    let coarse = numeric_nac(model, q, step)?;
    let mut fine = numeric_nac(model, q, 0.5 * step)?;
    let w = C64::new(1.0 / 3.0, 0.0);
    fine.x = (fine.x * C64::new(4.0, 0.0) - coarse.x) * w;
    fine.y = (fine.y * C64::new(4.0, 0.0) - coarse.y) * w;
    Ok(fine)
}

/// Closed-form quantities of the two-state model: `∇θ` as `(ρ̂, φ̂)` components
/// and the single-valued coupling
/// `F = ½[[−i∇Re θ, ∇θ], [−∇θ, −i∇Re θ]]`, indexed like the columns of
/// [`crate::analytic::jt_eigvecs`].
pub fn analytic_jt_nac(p: &JtParams, q: &NuclearCoords) -> Result<([C64; 2], NacField)> {
    let (rho, phi) = (q.rho(), q.phi());
    if rho == 0.0 || p.k.norm() == 0.0 {
        return Err(Error::Singularity { qx: q.qx(), qy: q.qy() });
    }
    let r = p.g / p.k;
    let c3 = (3.0 * phi).cos();
    let s3 = (3.0 * phi).sin();
    let den = r * r * (rho * rho) + r * (2.0 * rho * c3) + 1.0;
    if den.norm() <= 1e-14 {
        return Err(Error::Singularity { qx: q.qx(), qy: q.qy() });
    }
    let d_rho = -(r * s3) / den;
    let d_phi = (-(r * r) * (2.0 * rho * rho) - r * (rho * c3) + 1.0) / (den * rho);
    let (s, c) = phi.sin_cos();
    let gx = d_rho * c - d_phi * s;
    let gy = d_rho * s + d_phi * c;

    let half = C64::new(0.5, 0.0);
    let block = |g: C64| {
        let mut m = Matrix3::zeros();
        m[(0, 0)] = C64::new(0.0, -0.5 * g.re);
        m[(1, 1)] = C64::new(0.0, -0.5 * g.re);
        m[(0, 1)] = g * half;
        m[(1, 0)] = -g * half;
        m
    };
    let a = crate::analytic::jt_adiabatic(p, q);
    let t2 = crate::analytic::jt_eigvecs(a.theta);
    let mut frame = Matrix3::identity();
    frame.fixed_view_mut::<2, 2>(0, 0).copy_from(&t2);
    Ok((
        [d_rho, d_phi],
        NacField {
            q: *q,
            dim: 2,
            x: block(gx),
            y: block(gy),
            gauge: Gauge::SingleValued,
            values: vec![a.v2, a.v1],
            frame,
        },
    ))
}

/// Scalar pieces of the second-derivative operator.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaTerms {
    /// `Σ_k F_nk · F_km` (dot product over the two coordinates).
    pub ff: Matrix3<C64>,
    /// `∇·F_nm`.
    pub div: Matrix3<C64>,
    pub field: NacField,
}

/// `F·F` and `∇·F` from the single-valued perturbative field; the divergence
/// uses central differences with frames aligned to the centre point.
pub fn lambda_terms(model: &Model, q: &NuclearCoords, step: f64) -> Result<LambdaTerms> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {step}")));
    }
    let field = nac_field(model, q)?;
    let ff = field.x * field.x + field.y * field.y;
    let mut div = Matrix3::zeros();
    for (c, (hx, hy)) in [(step, 0.0), (0.0, step)].into_iter().enumerate() {
        let plus = stencil(model, q, &field.frame, hx, hy, 2 * c)?;
        let minus = stencil(model, q, &field.frame, -hx, -hy, 2 * c + 1)?;
        let fp = field_in_frame(model, &q.offset(hx, hy)?, &plus)?;
        let fm = field_in_frame(model, &q.offset(-hx, -hy)?, &minus)?;
        let d = if c == 0 { fp.x - fm.x } else { fp.y - fm.y };
        div += d / C64::new(2.0 * step, 0.0);
    }
    Ok(LambdaTerms { ff, div, field })
}

/// Applies the single-valued phase `e^{−iχ}` to the columns `pair` of a
/// sequence of overlap-tracked frames. The dual frames are the transposes
/// with the inverse phase, so `T̃ T = I` is preserved.
///
/// For closed paths the accumulated phase is pinned to the exact holonomy so
/// the returned frames are single-valued whenever the pair returns to itself.
pub fn gauge_smooth(frames: &[Matrix3<C64>], dim: usize, pair: (usize, usize)) -> Result<Vec<Matrix3<C64>>> {
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    for (k, w) in frames.windows(2).enumerate() {
        let o = (w[0].transpose() * w[1]).map(|z| z.norm());
        for i in 0..dim {
            let competing = (0..dim).any(|j| j != i && o[(i, j)] >= OVERLAP_THRESHOLD);
            if o[(i, i)] < OVERLAP_THRESHOLD || competing {
                return Err(Error::Refinement {
                    segment: (k, k + 1),
                    reason: format!("frames are not overlap-continuous for branch {i}"),
                });
            }
        }
    }
    let axis = reference_axis(dim);
    let first = real_polar(&frames[0]).r;
    let start = PairFrame::new(&first, pair, &axis, None);
    let sigma = Some(start.sigma);
    let pf: Vec<PairFrame> = frames
        .iter()
        .map(|t| PairFrame::new(&real_polar(t).r, pair, &axis, sigma))
        .collect();
    let mut chi = vec![0.0; frames.len()];
    for k in 1..frames.len() {
        chi[k] = chi[k - 1] + increment(&pf[k - 1], &pf[k], &axis);
    }
    let n = frames.len() - 1;
    let (hol, tilt) = lifted_holonomy(&pf);
    let closes = n > 0 && tilt < 1e-10 && pf[n].n.dot(&pf[0].n) > 0.0;
    if closes {
        // representative of the exact holonomy (mod 4π) nearest the sum
        let four_pi = 4.0 * std::f64::consts::PI;
        let exact = hol + four_pi * ((chi[n] - hol) / four_pi).round();
        let err = exact - chi[n];
        for (k, c) in chi.iter_mut().enumerate() {
            *c += err * k as f64 / n as f64;
        }
    }
    Ok(frames
        .iter()
        .zip(&chi)
        .map(|(t, &c)| {
            let mut out = *t;
            let phase = C64::from_polar(1.0, -c);
            for j in [pair.0, pair.1] {
                let col = out.column(j) * phase;
                out.set_column(j, &col);
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{c, published};
    use crate::tracking::{circle_points, track_along_path};

    /// Column map `numeric → analytic` and the sign of each matched column.
    fn column_map(num: &Matrix3<C64>, ana: &Matrix3<C64>) -> ([usize; 2], [C64; 2]) {
        let mut map = [0; 2];
        let mut sign = [C64::new(1.0, 0.0); 2];
        for i in 0..2 {
            let o: Vec<C64> = (0..2).map(|j| (num.column(i).transpose() * ana.column(j))[0]).collect();
            let j = if o[0].norm() > o[1].norm() { 0 } else { 1 };
            map[i] = j;
            sign[i] = o[j];
        }
        (map, sign)
    }

    fn assert_matches_analytic(field: &NacField, p: &JtParams, tol: f64) {
        let (_, ana) = analytic_jt_nac(p, &field.q).unwrap();
        let (map, sign) = column_map(&field.frame, &ana.frame);
        for s in sign {
            assert!((s.norm() - 1.0).abs() < 1e-9 && (s.re.abs() - 1.0).abs() < 1e-9);
        }
        for (fx, ax) in [(&field.x, &ana.x), (&field.y, &ana.y)] {
            for i in 0..2 {
                for j in 0..2 {
                    let expect = ax[(map[i], map[j])] * if i == j { C64::new(1.0, 0.0) } else { sign[i] * sign[j] };
                    let scale = ax.norm().max(1e-12);
                    assert!((fx[(i, j)] - expect).norm() <= tol * scale, "({i},{j}) {} vs {}", fx[(i, j)], expect);
                }
            }
        }
    }

    #[test]
    fn perturbative_matches_closed_form() {
        let p = published::jt_second_order();
        for (rho, phi) in [(0.05, 0.3), (0.1, 1.7), (0.2, 2.9), (0.3, -0.8)] {
            let q = NuclearCoords::polar(rho, phi).unwrap();
            let f = nac_field(&Model::Jt(p), &q).unwrap();
            assert_matches_analytic(&f, &p, 1e-9);
        }
    }

    #[test]
    fn finite_differences_match_closed_form() {
        let p = published::jt_second_order();
        for (rho, phi) in [(0.05, 0.3), (0.2, 2.9)] {
            let q = NuclearCoords::polar(rho, phi).unwrap();
            let f = numeric_nac_extrapolated(&Model::Jt(p), &q, 1e-4).unwrap();
            assert_matches_analytic(&f, &p, 1e-6);
        }
    }

    #[test]
    fn linear_coupling_gradient_is_angular() {
        let p = JtParams::new(c(0.3, -0.01), c(0.0, 0.0), c(0.01, 0.002), c(0.0, 0.0)).unwrap();
        let q = NuclearCoords::polar(0.2, 0.7).unwrap();
        let ([dr, dp], _) = analytic_jt_nac(&p, &q).unwrap();
        assert_eq!(dr, c(0.0, 0.0));
        assert!((dp - c(5.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn linear_coupling_lambda_terms() {
        let p = JtParams::new(c(0.3, -0.01), c(0.0, 0.0), c(0.01, 0.0), c(0.0, 0.0)).unwrap();
        let rho = 0.1;
        let q = NuclearCoords::polar(rho, 0.4).unwrap();
        let t = lambda_terms(&Model::Jt(p), &q, 1e-5).unwrap();
        let s = 1.0 / (2.0 * rho * rho);
        assert!((t.ff[(0, 0)] - c(-s, 0.0)).norm() < 1e-8 * s);
        assert!((t.ff[(1, 1)] - c(-s, 0.0)).norm() < 1e-8 * s);
        assert!((t.ff[(0, 1)].norm() - s).abs() < 1e-8 * s);
        assert!((t.ff[(0, 1)] + t.ff[(1, 0)]).norm() < 1e-8 * s);
        assert!((t.ff[(0, 1)].re).abs() < 1e-8 * s);
        assert!(t.div.norm() < 1e-5 * s, "{}", t.div);
    }

    #[test]
    fn off_diagonal_is_antisymmetric() {
        let m = Model::Pjt(published::pjt_second_order());
        for (rho, phi) in [(0.03, 0.2), (0.15, 1.0), (0.3, 4.0), (0.5, 2.2)] {
            let f = nac_field(&m, &NuclearCoords::polar(rho, phi).unwrap()).unwrap();
            for comp in [f.x, f.y] {
                for i in 0..3 {
                    for j in 0..3 {
                        if i != j {
                            assert!((comp[(i, j)] + comp[(j, i)]).norm() <= 1e-8 * comp.norm());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn real_parameters_give_real_couplings() {
        let m = Model::Pjt(published::pjt_second_order().real_part());
        let f = nac_field(&m, &NuclearCoords::polar(0.2, 0.9).unwrap()).unwrap().raw();
        for comp in [f.x, f.y] {
            assert!(comp.iter().all(|z| z.im.abs() <= 1e-12 * comp.norm()));
        }
    }

    #[test]
    fn coupling_diverges_like_inverse_distance() {
        let m = Model::Pjt(published::pjt_second_order());
        let a = nac_field(&m, &NuclearCoords::polar(1e-3, 0.5).unwrap()).unwrap();
        let b = nac_field(&m, &NuclearCoords::polar(1e-2, 0.5).unwrap()).unwrap();
        let slope = (b.angular()[(0, 1)].norm() / a.angular()[(0, 1)].norm()).log10();
        assert!((slope + 1.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn degeneracies_are_singular() {
        let m = Model::Pjt(published::pjt_second_order());
        assert!(matches!(nac_field(&m, &NuclearCoords::origin()), Err(Error::Singularity { .. })));
        let p = published::jt_second_order();
        assert!(matches!(analytic_jt_nac(&p, &NuclearCoords::origin()), Err(Error::Singularity { .. })));
        let q = NuclearCoords::polar(0.1, 0.2).unwrap();
        assert!(matches!(numeric_nac(&m, &q, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn smoothed_frames_are_single_valued() {
        let m = Model::Jt(published::jt_second_order());
        for radius in [0.05, 0.2] {
            let pts = circle_points(&NuclearCoords::origin(), radius, 400, 0.0).unwrap();
            let trace = track_along_path(&m, &pts).unwrap();
            let first = trace.smoothed[0];
            let last = *trace.smoothed.last().unwrap();
            assert!((first - last).norm() < 1e-8, "radius {radius}: {}", (first - last).norm());
        }
        // raw frames around the central intersection change sign
        let pts = circle_points(&NuclearCoords::origin(), 0.05, 400, 0.0).unwrap();
        let trace = track_along_path(&m, &pts).unwrap();
        assert!((trace.frames[0] + trace.frames[400]).fixed_view::<2, 2>(0, 0).norm() < 1e-8);
    }

    #[test]
    fn smoothing_keeps_biorthogonality() {
        let m = Model::Pjt(published::pjt_second_order());
        let pts = circle_points(&NuclearCoords::origin(), 0.05, 200, 0.0).unwrap();
        let trace = track_along_path(&m, &pts).unwrap();
        for t in &trace.smoothed {
            // a pure phase per column: Tᵀ T stays diagonal with unit moduli
            let g = t.transpose() * t;
            for i in 0..3 {
                assert!((g[(i, i)].norm() - 1.0).abs() < 1e-10);
                for j in 0..3 {
                    if i != j {
                        assert!(g[(i, j)].norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn smoothing_rejects_jumps() {
        let a = Matrix3::<C64>::identity();
        let mut b = a;
        b.swap_columns(0, 1);
        assert!(matches!(gauge_smooth(&[a, b], 3, (0, 1)), Err(Error::Refinement { .. })));
        assert!(gauge_smooth(&[], 3, (0, 1)).unwrap().is_empty());
    }
}
