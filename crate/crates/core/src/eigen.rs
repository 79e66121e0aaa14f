//! Eigendecomposition of complex-symmetric 2×2 and 3×3 matrices.
//!
//! Eigenvectors are normalised with the bilinear product (`vᵀv = 1`), so the
//! right-eigenvector matrix `T` satisfies `TᵀT = I` and `Tᵀ` is the left
//! eigenvector matrix. Near an exceptional point `vᵀv → 0`; such vectors are
//! returned unnormalised and flagged.

use nalgebra::{Matrix3, Vector3};

use crate::diabatic::DiabaticMatrix;
use crate::error::{Error, Result};
use crate::params::C64;

/// Phase rigidity below which a state (or pair) counts as coalesced.
pub const COALESCENCE_THRESHOLD: f64 = 1e-8;

/// Relative size of the adjugate below which a degenerate eigenvalue is treated
/// as semisimple (two independent eigenvectors).
const SEMISIMPLE_RATIO: f64 = 1e-10;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Diagnostics for one pair of eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairDiagnostic {
    pub i: usize,
    pub j: usize,
    /// `|V_i − V_j|`.
    pub gap: f64,
    /// Rigidity of the pair-centred adjugate; ~1 for a diagonalisable
    /// degeneracy and → 0 (quadratically in the gap) at an exceptional point.
    pub rigidity: f64,
    pub coalesced: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Eigensystem {
    dim: usize,
    /// Eigenvalues sorted by ascending real part (then imaginary part).
    pub values: Vec<C64>,
    /// Right eigenvectors as columns. Two-state systems are padded with a unit
    /// third column so `TᵀT = I₃` holds for the storage.
    pub vectors: Matrix3<C64>,
    /// `|vᵀv| / (v†v)` of each eigenvector before normalisation.
    pub phase_rigidity: Vec<f64>,
    /// Whether each column carries the bilinear normalisation.
    pub normalized: Vec<bool>,
    pub pairs: Vec<PairDiagnostic>,
}

impl Eigensystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, i: usize) -> Vector3<C64> {
        self.vectors.column(i).into_owned()
    }

    /// Left eigenvectors as rows (`Tᵀ`).
    pub fn left(&self) -> Matrix3<C64> {
        self.vectors.transpose()
    }

    pub fn pair(&self, i: usize, j: usize) -> &PairDiagnostic {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.pairs
            .iter()
            .find(|p| p.i == a && p.j == b)
            .expect("pair index out of range")
    }

    /// The pair with the smallest gap.
    pub fn closest_pair(&self) -> &PairDiagnostic {
        self.pairs
            .iter()
            .min_by(|a, b| a.gap.total_cmp(&b.gap))
            .expect("at least one pair")
    }

    pub fn any_coalesced(&self) -> bool {
        self.pairs.iter().any(|p| p.coalesced) || self.phase_rigidity.iter().any(|&r| r < COALESCENCE_THRESHOLD)
    }

    pub fn trace(&self) -> C64 {
        self.values.iter().sum()
    }
}

/// Phase rigidity `|vᵀv| / (v†v)`.
pub fn phase_rigidity(v: &Vector3<C64>) -> f64 {
    let h = v.norm_squared();
    if h == 0.0 {
        return 0.0;
    }
    v.dot(v).norm() / h
}

fn cross(a: &Vector3<C64>, b: &Vector3<C64>) -> Vector3<C64> {
    Vector3::new(
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )
}

fn det3(m: &Matrix3<C64>) -> C64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

/// Columns of the adjugate of a symmetric 3×3 matrix (cross products of rows).
fn adjugate_columns(b: &Matrix3<C64>) -> [Vector3<C64>; 3] {
    let r: Vec<Vector3<C64>> = (0..3).map(|i| b.row(i).transpose()).collect();
    [cross(&r[1], &r[2]), cross(&r[2], &r[0]), cross(&r[0], &r[1])]
}

fn largest(cols: &[Vector3<C64>]) -> Vector3<C64> {
    *cols
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
        .expect("non-empty")
}

/// Coefficients of `χ(x) = det(xI − M)`: `(trace, e2, det)` for 3×3, so
/// `χ = x³ − t x² + e2 x − d`.
pub(crate) fn char_coefficients(m: &Matrix3<C64>, dim: usize) -> (C64, C64, C64) {
    if dim == 2 {
        let t = m[(0, 0)] + m[(1, 1)];
        let d = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        (t, d, ZERO)
    } else {
        let t = m.trace();
        let e2 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]
            + m[(1, 1)] * m[(2, 2)]
            - m[(1, 2)] * m[(2, 1)];
        (t, e2, det3(m))
    }
}

/// `(χ(x), χ'(x), χ''(x))` for the characteristic polynomial.
pub(crate) fn char_poly(m: &Matrix3<C64>, dim: usize, x: C64) -> (C64, C64, C64) {
    if dim == 2 {
        let (t, d, _) = char_coefficients(m, 2);
        ((x - t) * x + d, x * 2.0 - t, C64::new(2.0, 0.0))
    } else {
        let (t, e2, d) = char_coefficients(m, 3);
        (((x - t) * x + e2) * x - d, (x * 3.0 - t * 2.0) * x + e2, x * 6.0 - t * 2.0)
    }
}

fn two_by_two_values(m: &Matrix3<C64>) -> [C64; 2] {
    let mean = (m[(0, 0)] + m[(1, 1)]) * 0.5;
    let a = (m[(0, 0)] - m[(1, 1)]) * 0.5;
    let b = m[(0, 1)];
    let ib = b * C64::i();
    // a² + b² as a product avoids cancellation close to an exceptional point.
    let delta = ((a + ib) * (a - ib)).sqrt();
    [mean - delta, mean + delta]
}

fn cubic_values(m: &Matrix3<C64>) -> [C64; 3] {
    let shift = m.trace() / 3.0;
    let b = m - Matrix3::from_diagonal_element(shift);
    // traceless: x³ + c1 x + c0
    let c1 = -(b.component_mul(&b.transpose())).sum() * 0.5;
    let c0 = -det3(&b);
    let p = |x: C64| (x * x + c1) * x + c0;
    let dp = |x: C64| x * x * 3.0 + c1;

    let disc = (c0 * c0 * 0.25 + c1 * c1 * c1 / 27.0).sqrt();
    let u1 = -c0 * 0.5 + disc;
    let u2 = -c0 * 0.5 - disc;
    let u = if u1.norm() >= u2.norm() { u1 } else { u2 };
    let mut x = [ZERO; 3];
    if u.norm() > 0.0 {
        let cbrt = u.cbrt();
        let w = C64::new(-0.5, 0.75f64.sqrt());
        let mut rot = C64::new(1.0, 0.0);
        for xi in x.iter_mut() {
            let cc = cbrt * rot;
            *xi = cc - c1 / (cc * 3.0);
            rot *= w;
        }
    }

    let scale = x.iter().map(|z| z.norm()).fold(b.norm(), f64::max);
    if scale == 0.0 {
        return [shift; 3];
    }

    // Closest pair and the remaining root.
    let (mut pi, mut pj, mut best) = (0, 1, f64::INFINITY);
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let d = (x[i] - x[j]).norm();
        if d < best {
            (pi, pj, best) = (i, j, d);
        }
    }
    let pk = 3 - pi - pj;

    let polish = |mut r: C64| {
        for _ in 0..4 {
            let f = p(r);
            let d = dp(r);
            if d.norm() == 0.0 {
                break;
            }
            let next = r - f / d;
            if p(next).norm() < f.norm() {
                r = next;
            } else {
                break;
            }
        }
        r
    };

    x[pk] = polish(x[pk]);
    if best > 1e-2 * scale {
        x[pi] = polish(x[pi]);
        x[pj] = polish(x[pj]);
    } else if (x[pk] - (x[pi] + x[pj]) * 0.5).norm() > 1e-3 * scale {
        // Deflate the well-separated root and solve the quadratic for the
        // close pair in a frame centred on it, where the determinant is small
        // and carries little rounding error.
        for _ in 0..2 {
            let mu = (x[pi] + x[pj]) * 0.5;
            let c = b - Matrix3::from_diagonal_element(mu);
            let t = c.trace();
            let d = det3(&c);
            let rr = x[pk] - mu;
            let bq = rr - t;
            let cq = d / rr;
            let s = (bq * bq - cq * 4.0).sqrt();
            let (plus, minus) = (bq + s, bq - s);
            let big = if plus.norm() >= minus.norm() { plus } else { minus };
            let r1 = -big * 0.5;
            let r2 = if r1.norm() > 0.0 { cq / r1 } else { ZERO };
            x[pi] = mu + r1;
            x[pj] = mu + r2;
        }
    }
    [x[0] + shift, x[1] + shift, x[2] + shift]
}

fn sort_values(v: &mut [C64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Eigenvalues only, sorted by ascending real part.
pub fn eigenvalues(m: &DiabaticMatrix) -> Vec<C64> {
    let s = m.storage();
    let n = m.dim();
    let diagonal = (0..n).all(|i| (0..i).all(|j| s[(i, j)] == ZERO && s[(j, i)] == ZERO));
    let mut v = if diagonal {
        (0..n).map(|i| s[(i, i)]).collect()
    } else if n == 2 {
        two_by_two_values(m.storage()).to_vec()
    } else {
        cubic_values(m.storage()).to_vec()
    };
    sort_values(&mut v);
    v
}

/// Largest-magnitude component gets a positive real part.
fn fix_sign(v: &mut Vector3<C64>) {
    let mut idx = 0;
    for i in 1..3 {
        if v[i].norm() > v[idx].norm() * (1.0 + 1e-12) {
            idx = i;
        }
    }
    if v[idx].re < 0.0 {
        *v = -*v;
    }
}

fn bilinear_normalize(v: &mut Vector3<C64>) -> (f64, bool) {
    // Pivot on the largest component first; exact for unit coordinate vectors.
    let mut idx = 0;
    for i in 1..3 {
        if v[i].norm() > v[idx].norm() {
            idx = i;
        }
    }
    if v[idx].norm() > 0.0 {
        let pivot = v[idx];
        *v /= pivot;
    }
    let r = phase_rigidity(v);
    if r < COALESCENCE_THRESHOLD {
        return (r, false);
    }
    let n = v.dot(v).sqrt();
    *v /= n;
    fix_sign(v);
    (r, true)
}

/// Two bilinearly orthogonal null vectors of a rank-one symmetric matrix.
fn semisimple_basis(b: &Matrix3<C64>, dim: usize) -> [Vector3<C64>; 2] {
    if dim == 2 {
        return [Vector3::new(C64::new(1.0, 0.0), ZERO, ZERO), Vector3::new(ZERO, C64::new(1.0, 0.0), ZERO)];
    }
    let rows: Vec<Vector3<C64>> = (0..3).map(|i| b.row(i).transpose()).collect();
    let w = largest(&rows);
    if w.norm() == 0.0 {
        let e = |i: usize| {
            let mut v = Vector3::zeros();
            v[i] = C64::new(1.0, 0.0);
            v
        };
        return [e(0), e(1)];
    }
    let mut k = 0;
    for i in 1..3 {
        if w[i].norm() < w[k].norm() {
            k = i;
        }
    }
    let mut ek = Vector3::zeros();
    ek[k] = C64::new(1.0, 0.0);
    let u1 = cross(&w, &ek);
    let u2 = cross(&w, &u1);
    [u1, u2]
}

fn check_input(m: &DiabaticMatrix) -> Result<()> {
    let s = m.storage();
    let n = m.dim();
    if s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let tol = 1e-14 * s.norm();
    for i in 0..n {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).norm() > tol {
                return Err(Error::Contract(format!(
                    "matrix is not symmetric: entry ({i},{j}) = {} but ({j},{i}) = {}",
                    s[(i, j)],
                    s[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Rigidity of the eigenvector pair belonging to `a` and `b`, from the
/// adjugate of `M − ½(a+b)`.
///
/// At an exceptional point the adjugate collapses onto the single
/// self-orthogonal eigenvector and the value goes to zero with the square of
/// the gap; at a diagonalisable degeneracy it stays close to one.
pub fn pair_rigidity(m: &DiabaticMatrix, a: C64, b: C64) -> f64 {
    let mu = (a + b) * 0.5;
    let dim = m.dim();
    let mut shifted = *m.storage();
    for i in 0..dim {
        shifted[(i, i)] -= mu;
    }
    if dim == 2 {
        let x = Vector3::new(shifted[(1, 1)], -shifted[(0, 1)], ZERO);
        let y = Vector3::new(-shifted[(0, 1)], shifted[(0, 0)], ZERO);
        let col = largest(&[x, y]);
        if col.norm() <= SEMISIMPLE_RATIO * m.norm().max(f64::MIN_POSITIVE) {
            return 1.0;
        }
        return phase_rigidity(&col);
    }
    let cols = adjugate_columns(&shifted);
    let col = largest(&cols);
    let bn = shifted.norm();
    if col.norm() <= SEMISIMPLE_RATIO * bn * bn {
        let [u1, u2] = semisimple_basis(&shifted, 3);
        return phase_rigidity(&u1).min(phase_rigidity(&u2));
    }
    phase_rigidity(&col)
}

/// Full eigendecomposition with coalescence diagnostics.
pub fn eig_complex_symmetric(m: &DiabaticMatrix) -> Result<Eigensystem> {
    check_input(m)?;
    let dim = m.dim();
    let values = eigenvalues(m);
    let a = m.storage();

    let mut vectors = Matrix3::<C64>::identity();
    let mut rigidity = vec![0.0; dim];
    let mut normalized = vec![false; dim];
    let mut done = vec![false; dim];

    for i in 0..dim {
        if done[i] {
            continue;
        }
        let mut b = *a;
        for d in 0..dim {
            b[(d, d)] -= values[i];
        }
        let (col, semisimple) = if dim == 2 {
            let x = Vector3::new(b[(1, 1)], -b[(0, 1)], ZERO);
            let y = Vector3::new(-b[(0, 1)], b[(0, 0)], ZERO);
            let col = largest(&[x, y]);
            (col, col.norm() <= SEMISIMPLE_RATIO * a.norm().max(f64::MIN_POSITIVE))
        } else {
            let col = largest(&adjugate_columns(&b));
            let bn = b.norm();
            (col, col.norm() <= SEMISIMPLE_RATIO * bn * bn)
        };
        if semisimple {
            // Degenerate but diagonalisable: the partner is the nearest other value.
            let partner = (0..dim)
                .filter(|&j| j != i && !done[j])
                .min_by(|&x, &y| (values[x] - values[i]).norm().total_cmp(&(values[y] - values[i]).norm()));
            let [mut u1, mut u2] = semisimple_basis(&b, dim);
            let (r1, n1) = bilinear_normalize(&mut u1);
            vectors.set_column(i, &u1);
            rigidity[i] = r1;
            normalized[i] = n1;
            done[i] = true;
            if let Some(j) = partner {
                let (r2, n2) = bilinear_normalize(&mut u2);
                vectors.set_column(j, &u2);
                rigidity[j] = r2;
                normalized[j] = n2;
                done[j] = true;
            }
            continue;
        }
        let mut v = col;
        let (r, n) = bilinear_normalize(&mut v);
        vectors.set_column(i, &v);
        rigidity[i] = r;
        normalized[i] = n;
        done[i] = true;
    }

    let mut pairs = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            let rig = pair_rigidity(m, values[i], values[j]);
            pairs.push(PairDiagnostic {
                i,
                j,
                gap: (values[i] - values[j]).norm(),
                rigidity: rig,
                coalesced: rig < COALESCENCE_THRESHOLD
                    || rigidity[i] < COALESCENCE_THRESHOLD && rigidity[j] < COALESCENCE_THRESHOLD,
            });
        }
    }

    Ok(Eigensystem {
        dim,
        values,
        vectors,
        phase_rigidity: rigidity,
        normalized,
        pairs,
    })
}

/// Perturbative derivative of a frame, `F = Tᵀ ∂T`, given `∂M`.
///
/// `F_mn = (Tᵀ ∂M T)_mn / (V_n − V_m)` for `m ≠ n` and zero on the diagonal.
/// Entries of a degenerate pair are set to zero.
pub(crate) fn frame_derivative(t: &Matrix3<C64>, values: &[C64], dm: &Matrix3<C64>) -> Matrix3<C64> {
    let proj = t.transpose() * dm * t;
    let mut f = Matrix3::zeros();
    let dim = values.len();
    for m in 0..dim {
        for n in 0..dim {
            if m == n {
                continue;
            }
            let gap = values[n] - values[m];
            if gap.norm() > 0.0 {
                f[(m, n)] = proj[(m, n)] / gap;
            }
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coords::NuclearCoords;
    use crate::diabatic::{build_jt_diabatic, build_pjt_diabatic};
    use crate::params::published;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn mat(rows: &[&[C64]]) -> DiabaticMatrix {
        DiabaticMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn check_contract(m: &DiabaticMatrix, es: &Eigensystem, tol: f64) {
        let n = m.dim();
        let t = es.vectors;
        let s = m.storage();
        let scale = s.norm();
        for i in 0..n {
            let v = t.column(i);
            let r = s * v - v * es.values[i];
            assert!(r.norm() <= tol * scale, "residual {} for state {i}", r.norm());
        }
        let g = t.transpose() * t;
        assert!((g - Matrix3::identity()).norm() < 1e-10, "TᵀT = {g}");
        assert!((es.trace() - m.trace()).norm() <= 1e-12 * m.trace().norm().max(scale));
    }

    #[test]
    fn diagonal_matrix() {
        let m = mat(&[&[c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(1.0, -1.0), c(0.0, 0.0)], &[
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(2.0, 0.5),
        ]]);
        let es = eig_complex_symmetric(&m).unwrap();
        assert_eq!(es.values, vec![c(1.0, -1.0), c(2.0, 0.5), c(3.0, 0.0)]);
        #[rustfmt::skip]
        let perm = Matrix3::new(
            c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0),
            c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0),
        );
        assert_eq!(es.vectors, perm);
    }

    #[test]
    fn pauli_x() {
        let m = mat(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)]]);
        let es = eig_complex_symmetric(&m).unwrap();
        assert_eq!(es.values, vec![c(-1.0, 0.0), c(1.0, 0.0)]);
        check_contract(&m, &es, 1e-15);
    }

    #[test]
    fn exceptional_point_matrix() {
        let m = mat(&[&[c(1.0, 0.0), c(0.0, 1.0)], &[c(0.0, 1.0), c(-1.0, 0.0)]]);
        let es = eig_complex_symmetric(&m).unwrap();
        assert_eq!(es.values, vec![c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(es.pair(0, 1).coalesced);
        assert!(es.phase_rigidity.iter().all(|&r| r < COALESCENCE_THRESHOLD));
        assert!(!es.normalized[0]);
        // the unnormalised vector is still an eigenvector
        let v = es.vector(0);
        assert!((m.storage() * v).norm() < 1e-15);
    }

    #[test]
    fn three_state_exceptional_point() {
        // EP block embedded next to a far state
        let m = mat(&[
            &[c(5.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)],
            &[c(0.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)],
        ]);
        let es = eig_complex_symmetric(&m).unwrap();
        assert!(es.values[0].norm() < 1e-7 && es.values[1].norm() < 1e-7);
        assert!((es.trace() - c(5.0, 0.0)).norm() < 1e-15);
        assert!(es.pair(0, 1).coalesced);
        assert!(!es.pair(0, 2).coalesced);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = mat(&[&[c(0.0, 0.0), c(1.0, 0.0)], &[c(2.0, 0.0), c(0.0, 0.0)]]);
        assert!(matches!(eig_complex_symmetric(&m), Err(Error::Contract(_))));
    }

    #[test]
    fn conical_intersection_is_not_coalesced() {
        let p = published::pjt_second_order();
        let m = build_pjt_diabatic(&p, &NuclearCoords::origin()).unwrap();
        let es = eig_complex_symmetric(&m).unwrap();
        let pair = es.pair(0, 1);
        assert_eq!(pair.gap, 0.0);
        assert!(pair.rigidity > 0.99);
        assert!(!pair.coalesced);
        check_contract(&m, &es, 1e-14);
    }

    #[test]
    fn pair_rigidity_scales_with_gap_squared() {
        // [[1, i+e],[i+e, -1]] has gap ∝ sqrt(e)
        let mut last = None;
        for e in [1e-4, 1e-6] {
            let m = mat(&[&[c(1.0, 0.0), c(e, 1.0)], &[c(e, 1.0), c(-1.0, 0.0)]]);
            let v = eigenvalues(&m);
            let r = pair_rigidity(&m, v[0], v[1]);
            let gap = (v[0] - v[1]).norm();
            assert!((r / (gap * gap) - 0.125).abs() < 1e-3, "r = {r}, gap = {gap}");
            if let Some(prev) = last {
                assert!(r < prev);
            }
            last = Some(r);
        }
    }

    #[test]
    fn matches_jt_model_values() {
        let p = published::jt_second_order();
        let q = NuclearCoords::polar(0.2, 0.4).unwrap();
        let m = build_jt_diabatic(&p, &q);
        let es = eig_complex_symmetric(&m).unwrap();
        check_contract(&m, &es, 1e-14);
        assert_eq!(es.vectors[(2, 2)], c(1.0, 0.0));
    }

    #[test]
    fn near_exceptional_point_keeps_accuracy() {
        // An almost-defective block next to a far state: the pair gap is
        // ~3e-6 while Cardano alone would only resolve it to ~1e-8.
        let e = 1e-12;
        let m = mat(&[
            &[c(5.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            &[c(0.0, 0.0), c(1.0, 0.0), c(e, 1.0)],
            &[c(0.0, 0.0), c(e, 1.0), c(-1.0, 0.0)],
        ]);
        let es = eig_complex_symmetric(&m).unwrap();
        let exact = (c(1.0, 0.0) + c(e, 1.0) * c(e, 1.0)).sqrt() * 2.0;
        let gap = (es.values[1] - es.values[0]).norm();
        assert!((gap - exact.norm()).abs() < 1e-6 * exact.norm(), "{gap} vs {}", exact.norm());
        assert!((es.trace() - m.trace()).norm() < 1e-15);
        assert!(es.pair(0, 1).rigidity < 1e-8);
    }

    proptest::proptest! {
        #[test]
        fn random_symmetric_contract(vals in proptest::collection::vec(-1.0f64..1.0, 12)) {
            let z = |i: usize| c(vals[2 * i], vals[2 * i + 1]);
            let m = mat(&[
                &[z(0), z(3), z(4)],
                &[z(3), z(1), z(5)],
                &[z(4), z(5), z(2)],
            ]);
            let es = eig_complex_symmetric(&m).unwrap();
            let closest = es.closest_pair().gap;
            proptest::prop_assume!(closest > 1e-3 && es.phase_rigidity.iter().all(|&r| r > 1e-3));
            let n = m.storage().norm();
            let t = es.vectors;
            for i in 0..3 {
                let v = t.column(i);
                let r = m.storage() * v - v * es.values[i];
                // residual relative to the norm of M and of the vector
                proptest::prop_assert!(r.norm() <= 1e-12 * n * v.norm());
            }
            let g = t.transpose() * t - Matrix3::identity();
            proptest::prop_assert!(g.norm() < 1e-10);
            proptest::prop_assert!((es.trace() - m.trace()).norm() <= 1e-12 * n);
        }

        #[test]
        fn trace_identity_on_pjt_model(rho in 0.0f64..0.6, phi in 0.0f64..6.3) {
            let p = published::pjt_second_order();
            let q = NuclearCoords::polar(rho, phi).unwrap();
            let es = eig_complex_symmetric(&build_pjt_diabatic(&p, &q).unwrap()).unwrap();
            let want = p.omega * (1.5 * rho * rho) + p.eps_a + p.eps_e * 2.0;
            proptest::prop_assert!((es.trace() - want).norm() <= 1e-12 * want.norm());
        }
    }
}
