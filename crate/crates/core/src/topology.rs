//! Degeneracies of the complex adiabatic surfaces.
//!
//! The central conical intersection, the exceptional points where two
//! eigenvectors coalesce, and the seams on which only the real or only the
//! imaginary parts of two surfaces coincide. The two-state model has closed
//! forms; the three-state model is searched numerically.

use std::f64::consts::TAU;

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::coords::{normalize_angle, NuclearCoords};
use crate::eigen::{char_poly, eig_complex_symmetric, eigenvalues};
use crate::error::{Error, Result};
use crate::nac::GAUGE_PAIR;
use crate::params::{JtParams, Model, C64};
use crate::tracking::align;

/// Fit range of the models plus a margin; results beyond it are flagged.
pub const VALIDITY_RADIUS: f64 = 0.6;

/// `|k| / |g|`, the radius of the six exceptional points of the two-state model.
pub fn jt_critical_radius(p: &JtParams) -> Result<f64> {
    if p.g.norm() == 0.0 {
        return Err(Error::NoFiniteEp(
            "g = 0: the linear model only has the central intersection".into(),
        ));
    }
    Ok(p.k.norm() / p.g.norm())
}

/// Closed-form exceptional points of the two-state model (`λ = ±i`).
///
/// They sit on `ρ = |k|/|g|` where `1 + (g/k) ρ e^{±3iφ} = 0`.
pub fn jt_exceptional_points(p: &JtParams) -> Result<Vec<NuclearCoords>> {
    let rc = jt_critical_radius(p)?;
    if p.k.norm() == 0.0 {
        return Ok(Vec::new());
    }
    let target = (-(p.k / p.g)).arg();
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        for n in 0..3 {
            let phi = sign * (target + TAU * n as f64) / 3.0;
            out.push(NuclearCoords::polar(rc, phi)?);
        }
    }
    out.sort_by(|a, b| a.phi().total_cmp(&b.phi()));
    Ok(out)
}

/// Angles on the circle of radius `rho` where the two-state surfaces have
/// equal real or equal imaginary parts.
///
/// They solve `Im(k² + g²ρ² + 2kgρ cos 3φ) = 0`, i.e.
/// `cos 3φ = −(Re k Im k + Re g Im g ρ²) / (ρ (Re k Im g + Im k Re g))`.
pub fn jt_seam_angles(p: &JtParams, rho: f64) -> Result<Vec<f64>> {
    let den = p.k.re * p.g.im + p.k.im * p.g.re;
    if den == 0.0 || rho == 0.0 {
        return Err(Error::DegenerateParameters(
            "Im(kg) = 0: no isolated seams (bound-state limit)".into(),
        ));
    }
    let rhs = -(p.k.re * p.k.im + p.g.re * p.g.im * rho * rho) / (rho * den);
    if rhs.abs() > 1.0 + 1e-12 {
        return Ok(Vec::new());
    }
    let base = rhs.clamp(-1.0, 1.0).acos();
    let mut out = Vec::new();
    for n in 0..3 {
        for s in [1.0, -1.0] {
            let phi = normalize_angle((s * base + TAU * n as f64) / 3.0);
            if !out.iter().any(|&x: &f64| (x - phi).abs() < 1e-15) {
                out.push(phi);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Annular sector in polar coordinates (radians).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub rho_min: f64,
    pub rho_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl Region {
    pub fn annulus(rho_min: f64, rho_max: f64) -> Result<Self> {
        Self::sector(rho_min, rho_max, 0.0, TAU)
    }

    pub fn disc(rho_max: f64) -> Result<Self> {
        Self::annulus(0.0, rho_max)
    }

    pub fn sector(rho_min: f64, rho_max: f64, phi_min: f64, phi_max: f64) -> Result<Self> {
        let ok = rho_min.is_finite() && rho_max.is_finite() && phi_min.is_finite() && phi_max.is_finite();
        if !ok || rho_min < 0.0 || rho_max <= rho_min || phi_max <= phi_min || phi_max - phi_min > TAU + 1e-12 {
            return Err(Error::Domain(format!(
                "invalid region rho [{rho_min}, {rho_max}], phi [{phi_min}, {phi_max}]"
            )));
        }
        Ok(Self {
            rho_min,
            rho_max,
            phi_min,
            phi_max,
        })
    }

    pub fn full_circle(&self) -> bool {
        self.phi_max - self.phi_min >= TAU - 1e-12
    }

    pub fn contains(&self, q: &NuclearCoords) -> bool {
        if q.rho() < self.rho_min - 1e-12 || q.rho() > self.rho_max + 1e-12 {
            return false;
        }
        if self.full_circle() {
            return true;
        }
        let rel = (q.phi() - self.phi_min).rem_euclid(TAU);
        rel <= self.phi_max - self.phi_min + 1e-12
    }
}

/// Grid spacing of the coarse scans.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    pub d_rho: f64,
    /// Radians.
    pub d_phi: f64,
    pub validity_radius: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            d_rho: 0.002,
            d_phi: 0.25f64.to_radians(),
            validity_radius: VALIDITY_RADIUS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DegeneracyKind {
    ConicalIntersection,
    ExceptionalPoint,
}

impl DegeneracyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DegeneracyKind::ConicalIntersection => "conical_intersection",
            DegeneracyKind::ExceptionalPoint => "exceptional_point",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegeneracyPoint {
    pub coords: NuclearCoords,
    pub kind: DegeneracyKind,
    /// Branch indices (ascending real part) of the degenerate pair.
    pub branches: (usize, usize),
    /// `|V_i − V_j|` at the point (Hartree).
    pub residual: f64,
    pub rigidity: f64,
    /// Outside the validity radius of the expansion.
    pub extrapolated: bool,
}

/// Grid with `n` nodes covering `[min, max]` at roughly spacing `d`.
fn axis(min: f64, max: f64, d: f64, periodic: bool) -> Vec<f64> {
    let span = max - min;
    let cells = (span / d).round().max(1.0) as usize;
    let n = if periodic { cells } else { cells + 1 };
    (0..n).map(|i| min + span * i as f64 / cells as f64).collect()
}

fn scale_of(model: &Model) -> f64 {
    match model {
        Model::Pjt(p) => p.eps_a.norm().max(p.eps_e.norm()),
        Model::Jt(p) => p.eps_e.norm(),
    }
    .max(1e-300)
}

fn pair_gaps(model: &Model, q: &NuclearCoords) -> Result<(f64, (usize, usize))> {
    let v = eigenvalues(&model.diabatic(q)?);
    let mut best = (f64::INFINITY, (0, 1));
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            let g = (v[i] - v[j]).norm();
            if g < best.0 {
                best = (g, (i, j));
            }
        }
    }
    Ok(best)
}

fn min_gap(model: &Model, x: f64, y: f64) -> f64 {
    NuclearCoords::cartesian(x, y)
        .ok()
        .and_then(|q| pair_gaps(model, &q).ok())
        .map(|g| g.0)
        .unwrap_or(f64::INFINITY)
}

/// Plain Nelder–Mead on a function of two variables.
fn nelder_mead(f: impl Fn(f64, f64) -> f64, start: [f64; 2], step: f64, max_iter: usize) -> [f64; 2] {
    let mut s = [start, [start[0] + step, start[1]], [start[0], start[1] + step]];
    let mut v = s.map(|p| f(p[0], p[1]));
    for _ in 0..max_iter {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        s = idx.map(|i| s[i]);
        v = idx.map(|i| v[i]);
        let size = ((s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1])).max((s[2][0] - s[0][0]).hypot(s[2][1] - s[0][1]));
        if size < 1e-16 * (1.0 + s[0][0].abs() + s[0][1].abs()) {
            break;
        }
        let c = [(s[0][0] + s[1][0]) / 2.0, (s[0][1] + s[1][1]) / 2.0];
        let at = |t: f64| [c[0] + t * (s[2][0] - c[0]), c[1] + t * (s[2][1] - c[1])];
        let r = at(-1.0);
        let fr = f(r[0], r[1]);
        if fr < v[0] {
            let e = at(-2.0);
            let fe = f(e[0], e[1]);
            if fe < fr {
                (s[2], v[2]) = (e, fe);
            } else {
                (s[2], v[2]) = (r, fr);
            }
        } else if fr < v[1] {
            (s[2], v[2]) = (r, fr);
        } else {
            let k = if fr < v[2] { at(-0.5) } else { at(0.5) };
            let fk = f(k[0], k[1]);
            if fk < v[2].min(fr) {
                (s[2], v[2]) = (k, fk);
            } else {
                for i in 1..3 {
                    s[i] = [(s[i][0] + s[0][0]) / 2.0, (s[i][1] + s[0][1]) / 2.0];
                    v[i] = f(s[i][0], s[i][1]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(0);
    s[best]
}

/// Newton iteration on `χ(λ; q) = χ'(λ; q) = 0` for the double root `λ`.
fn polish_double_root(model: &Model, start: NuclearCoords, lambda: C64) -> Option<NuclearCoords> {
    let dim = model.dim();
    let eval = |x: f64, y: f64, l: C64| -> Option<(C64, C64, C64)> {
        let q = NuclearCoords::cartesian(x, y).ok()?;
        let m = model.diabatic(&q).ok()?;
        Some(char_poly(m.storage(), dim, l))
    };
    let mut x = Vector4::new(start.qx(), start.qy(), lambda.re, lambda.im);
    let resid = |x: &Vector4<f64>| -> Option<Vector4<f64>> {
        let (f, d, _) = eval(x[0], x[1], C64::new(x[2], x[3]))?;
        Some(Vector4::new(f.re, f.im, d.re, d.im))
    };
    let mut r = resid(&x)?;
    for _ in 0..60 {
        let l = C64::new(x[2], x[3]);
        let (_, d1, d2) = eval(x[0], x[1], l)?;
        let h = 1e-7 * (1.0 + x[0].abs().max(x[1].abs()));
        let mut jac = Matrix4::zeros();
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let col = (resid(&xp)? - resid(&xm)?) / (2.0 * h);
            jac.set_column(c, &col);
        }
        // analytic in λ: ∂/∂Re λ = f', ∂/∂Im λ = i f'
        jac.set_column(2, &Vector4::new(d1.re, d1.im, d2.re, d2.im));
        jac.set_column(3, &Vector4::new(-d1.im, d1.re, -d2.im, d2.re));
        let dx = jac.lu().solve(&(-r))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial = x + dx * t;
            if let Some(rt) = resid(&trial) {
                if rt.norm() < r.norm() {
                    x = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted || (dx * t).norm() <= 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    NuclearCoords::cartesian(x[0], x[1]).ok()
}

fn classify(model: &Model, q: &NuclearCoords, opts: &SearchOptions) -> Result<Option<DegeneracyPoint>> {
    let es = eig_complex_symmetric(&model.diabatic(q)?)?;
    let pair = *es.closest_pair();
    let scale = scale_of(model);
    let kind = if pair.rigidity < crate::eigen::COALESCENCE_THRESHOLD && pair.gap < 1e-9 {
        DegeneracyKind::ExceptionalPoint
    } else if pair.gap <= 1e-10 * scale && pair.rigidity > 0.5 {
        DegeneracyKind::ConicalIntersection
    } else {
        return Ok(None);
    };
    Ok(Some(DegeneracyPoint {
        coords: *q,
        kind,
        branches: (pair.i, pair.j),
        residual: pair.gap,
        rigidity: pair.rigidity,
        extrapolated: q.rho() > opts.validity_radius,
    }))
}

/// Number of successively finer scans around each hit.
const ZOOM_LEVELS: usize = 3;

/// Coarse polar scan of the smallest pair gap, then refinement of every
/// local minimum to a classified degeneracy.
fn scan_and_refine(model: &Model, region: &Region, opts: &SearchOptions) -> Result<Vec<DegeneracyPoint>> {
    let periodic = region.full_circle();
    let rho_lo = region.rho_min.max(opts.d_rho * 0.5);
    let rhos = axis(rho_lo, region.rho_max, opts.d_rho.min((region.rho_max - rho_lo) / 4.0), false);
    let phis = axis(region.phi_min, region.phi_max, opts.d_phi, periodic);
    let (nr, np) = (rhos.len(), phis.len());
    let grid: Vec<f64> = (0..nr * np)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / np, idx % np);
            let q = NuclearCoords::polar(rhos[i], phis[j]).expect("finite grid");
            pair_gaps(model, &q).map(|g| g.0).unwrap_or(f64::INFINITY)
        })
        .collect();
    let at = |i: usize, j: usize| grid[i * np + j];

    let mut candidates = Vec::new();
    // boundary rows are kept: a point there is discarded later if the
    // refinement leaves the region
    for i in 0..nr {
        for j in 0..np {
            let v = at(i, j);
            let mut is_min = true;
            'n: for di in [-1i64, 0, 1] {
                for dj in [-1i64, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let ii = i as i64 + di;
                    if ii < 0 || ii >= nr as i64 {
                        continue;
                    }
                    let ii = ii as usize;
                    let jj = j as i64 + dj;
                    if !periodic && (jj < 0 || jj >= np as i64) {
                        continue;
                    }
                    let jj = jj.rem_euclid(np as i64) as usize;
                    if at(ii, jj) < v {
                        is_min = false;
                        break 'n;
                    }
                }
            }
            if is_min {
                candidates.push(NuclearCoords::polar(rhos[i], phis[j])?);
            }
        }
    }

    let refined: Vec<Option<DegeneracyPoint>> = candidates
        .par_iter()
        .map(|q| -> Result<Option<DegeneracyPoint>> {
            let f = |x: f64, y: f64| min_gap(model, x, y);
            // half a grid cell, so close pairs of minima stay apart
            let step = 0.5 * opts.d_rho.min(q.rho() * opts.d_phi);
            let best = nelder_mead(f, [q.qx(), q.qy()], step, 400);
            let start = NuclearCoords::cartesian(best[0], best[1])?;
            let es = eig_complex_symmetric(&model.diabatic(&start)?)?;
            let pair = es.closest_pair();
            let lambda = (es.values[pair.i] + es.values[pair.j]) * 0.5;
            let Some(polished) = polish_double_root(model, start, lambda) else {
                return Ok(None);
            };
            // the gap is square-root sensitive at an exceptional point, so finish
            // by minimizing it directly at roundoff scale
            let fine = nelder_mead(f, [polished.qx(), polished.qy()], 1e-11 * (1.0 + polished.rho()), 200);
            let polished = NuclearCoords::cartesian(fine[0], fine[1])?;
            if polished.distance(&start) > 10.0 * opts.d_rho || !region.contains(&polished) {
                return Ok(None);
            }
            classify(model, &polished, opts)
        })
        .collect::<Result<_>>()?;
    Ok(refined.into_iter().flatten().collect())
}

/// Local minima of the pairwise gap on a polar grid, refined and classified.
///
/// Exceptional points are returned together with the central conical
/// intersection when the region contains the origin.
pub fn find_exceptional_points(model: &Model, region: &Region, opts: &SearchOptions) -> Result<Vec<DegeneracyPoint>> {
    if model.order() == 3 {
        return Err(Error::Unsupported(
            "degeneracy search needs the full (qx, qy) model; third-order terms are slice-only".into(),
        ));
    }
    let mut found = scan_and_refine(model, region, opts)?;
    // pairs closer than about two grid cells share one basin; successively
    // finer scans around every hit separate them
    let mut level = *opts;
    for _ in 0..ZOOM_LEVELS {
        let fine = SearchOptions {
            d_rho: level.d_rho / 8.0,
            d_phi: level.d_phi / 8.0,
            ..level
        };
        let zoomed: Vec<Vec<DegeneracyPoint>> = found
            .par_iter()
            .filter(|p| p.coords.rho() > 2.0 * level.d_rho)
            .map(|p| {
                let (r, f) = (p.coords.rho(), p.coords.phi());
                let patch = Region::sector(r - 2.0 * level.d_rho, r + 2.0 * level.d_rho, f - 2.0 * level.d_phi, f + 2.0 * level.d_phi)?;
                scan_and_refine(model, &patch, &fine)
            })
            .collect::<Result<_>>()?;
        for p in zoomed.into_iter().flatten() {
            if region.contains(&p.coords) && !found.iter().any(|o| o.coords.distance(&p.coords) < 1e-6) {
                found.push(p);
            }
        }
        level = fine;
    }

    let mut out: Vec<DegeneracyPoint> = Vec::new();
    if region.rho_min == 0.0 {
        if let Some(p) = classify(model, &NuclearCoords::origin(), opts)? {
            out.push(p);
        }
    }
    for p in found {
        if p.coords.rho() < 1e-6 && out.iter().any(|o| o.coords.rho() == 0.0) {
            continue;
        }
        if !out.iter().any(|o| o.coords.distance(&p.coords) < 1e-6) {
            out.push(p);
        }
    }
    // ties in ρ to roundoff are ordered by angle
    let key = |p: &DegeneracyPoint| ((p.coords.rho() * 1e9).round(), p.coords.phi());
    out.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeamKind {
    /// `Re V_i = Re V_j`.
    ReSeam,
    /// `Im V_i = Im V_j`.
    ImSeam,
}

impl SeamKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeamKind::ReSeam => "re_seam",
            SeamKind::ImSeam => "im_seam",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeamCurve {
    pub kind: SeamKind,
    pub points: Vec<NuclearCoords>,
    pub branches: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeamReport {
    pub curves: Vec<SeamCurve>,
    /// Set when the imaginary parts vanish identically (real parameters), so
    /// the whole plane is an `Im` seam and no curves are emitted.
    pub degenerate: bool,
}

fn pair_delta_sq(model: &Model, q: &NuclearCoords) -> Option<C64> {
    let v = eigenvalues(&model.diabatic(q).ok()?);
    let d = v[GAUGE_PAIR.0] - v[GAUGE_PAIR.1];
    Some(d * d)
}

fn is_real_model(model: &Model) -> bool {
    let v = match model {
        Model::Pjt(p) => p.to_vec(),
        Model::Jt(p) => p.to_vec(),
    };
    v.iter().all(|z| z.im == 0.0)
}

/// Zero set of `Im (V_i − V_j)²` for the two lowest states, traced by
/// marching squares on the polar grid and refined by bisection. Each piece is
/// labelled by the sign of `Re (V_i − V_j)²`: negative on `Re` seams,
/// positive on `Im` seams. Curves break where the label changes, which
/// happens at exceptional points.
pub fn trace_seams(model: &Model, region: &Region, opts: &SearchOptions) -> Result<SeamReport> {
    if model.order() == 3 {
        return Err(Error::Unsupported(
            "seam tracing needs the full (qx, qy) model; third-order terms are slice-only".into(),
        ));
    }
    if is_real_model(model) {
        return Ok(SeamReport {
            curves: Vec::new(),
            degenerate: true,
        });
    }
    let periodic = region.full_circle();
    let rhos = axis(region.rho_min.max(opts.d_rho * 0.5), region.rho_max, opts.d_rho, false);
    let phis = axis(region.phi_min, region.phi_max, opts.d_phi, periodic);
    let (nr, np) = (rhos.len(), phis.len());
    let ncol = if periodic { np } else { np - 1 };
    let node = |i: usize, j: usize| (rhos[i], if j == np { region.phi_max } else { phis[j] });
    let s_at = |r: f64, p: f64| -> f64 {
        NuclearCoords::polar(r, p)
            .ok()
            .and_then(|q| pair_delta_sq(model, &q))
            .map(|d| d.im)
            .unwrap_or(f64::NAN)
    };
    let grid: Vec<f64> = (0..nr * np)
        .into_par_iter()
        .map(|idx| s_at(rhos[idx / np], phis[idx % np]))
        .collect();
    let val = |i: usize, j: usize| grid[i * np + (j % np)];

    // Edge ids: horizontal (i, j)→(i, j+1) and vertical (i, j)→(i+1, j).
    #[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
    enum Edge {
        H(usize, usize),
        V(usize, usize),
    }
    let crossing = |e: Edge| -> Option<(f64, f64)> {
        let (a, b) = match e {
            Edge::H(i, j) => ((i, j), (i, j + 1)),
            Edge::V(i, j) => ((i, j), (i + 1, j)),
        };
        let (sa, sb) = (val(a.0, a.1), val(b.0, b.1));
        if !(sa.is_finite() && sb.is_finite()) || (sa >= 0.0) == (sb >= 0.0) {
            return None;
        }
        let pa = node(a.0, a.1);
        let pb = node(b.0, b.1);
        let pb = if matches!(e, Edge::H(_, _)) && b.1 == np {
            (pb.0, phis[0] + region.phi_max - region.phi_min)
        } else {
            pb
        };
        let lerp = |t: f64| (pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1));
        let (mut lo, mut hi, mut slo) = (0.0f64, 1.0f64, sa);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let (r, p) = lerp(mid);
            let sm = s_at(r, p);
            if sm == 0.0 {
                return Some(lerp(mid));
            }
            if (sm >= 0.0) == (slo >= 0.0) {
                lo = mid;
                slo = sm;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        Some(lerp(0.5 * (lo + hi)))
    };

    // Segments per cell.
    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..nr - 1 {
        for j in 0..ncol {
            let edges = [Edge::H(i, j), Edge::V(i, j + 1), Edge::H(i + 1, j), Edge::V(i, j)];
            let edges = edges.map(|e| match e {
                Edge::V(a, b) if periodic && b == np => Edge::V(a, 0),
                other => other,
            });
            let signs = [val(i, j), val(i, j + 1), val(i + 1, j + 1), val(i + 1, j)].map(|s| s >= 0.0);
            let cut: Vec<Edge> = (0..4).filter(|&k| signs[k] != signs[(k + 1) % 4]).map(|k| edges[k]).collect();
            match cut.len() {
                2 => segments.push((cut[0], cut[1])),
                4 => {
                    let (r, p) = node(i, j);
                    let centre = s_at(r + 0.5 * (rhos[i + 1] - rhos[i]), p + 0.5 * opts.d_phi) >= 0.0;
                    if centre == signs[0] {
                        segments.push((cut[0], cut[1]));
                        segments.push((cut[2], cut[3]));
                    } else {
                        segments.push((cut[3], cut[0]));
                        segments.push((cut[1], cut[2]));
                    }
                }
                _ => {}
            }
        }
    }

    // Link segments into polylines through shared edges.
    use std::collections::HashMap;
    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(k);
        by_edge.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut chains: Vec<Vec<Edge>> = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut chain = vec![segments[start].0, segments[start].1];
        for dir in 0..2 {
            loop {
                let tail = *chain.last().expect("non-empty");
                let next = by_edge
                    .get(&tail)
                    .and_then(|v| v.iter().copied().find(|&k| !used[k]));
                let Some(k) = next else { break };
                used[k] = true;
                let (a, b) = segments[k];
                chain.push(if a == tail { b } else { a });
            }
            if dir == 0 {
                chain.reverse();
            }
        }
        chains.push(chain);
    }

    let edge_points: HashMap<Edge, NuclearCoords> = by_edge
        .keys()
        .copied()
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter_map(|e| crossing(e).and_then(|(r, p)| NuclearCoords::polar(r, p).ok()).map(|q| (e, q)))
        .collect();

    let mut curves = Vec::new();
    for chain in chains {
        let mut current: Option<SeamCurve> = None;
        for e in chain {
            let Some(q) = edge_points.get(&e) else { continue };
            let Some(d2) = pair_delta_sq(model, q) else { continue };
            let kind = if d2.re < 0.0 { SeamKind::ReSeam } else { SeamKind::ImSeam };
            match current.as_mut() {
                Some(c) if c.kind == kind => c.points.push(*q),
                _ => {
                    if let Some(c) = current.take() {
                        if c.points.len() >= 2 {
                            curves.push(c);
                        }
                    }
                    current = Some(SeamCurve {
                        kind,
                        points: vec![*q],
                        branches: GAUGE_PAIR,
                    });
                }
            }
        }
        if let Some(c) = current {
            if c.points.len() >= 2 {
                curves.push(c);
            }
        }
    }
    Ok(SeamReport {
        curves,
        degenerate: false,
    })
}

/// `(|Re(V_i − V_j)|, |Im(V_i − V_j)|)` of the seam pair at a point.
pub fn seam_residual(model: &Model, q: &NuclearCoords) -> Result<(f64, f64)> {
    let v = eigenvalues(&model.diabatic(q)?);
    let d = v[GAUGE_PAIR.0] - v[GAUGE_PAIR.1];
    Ok((d.re.abs(), d.im.abs()))
}

/// Evenly spaced nodes `min, …, max` (`n ≥ 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || n == 0 || (n > 1 && max < min) {
            return Err(Error::Domain(format!("invalid axis {min}:{max}:{n}")));
        }
        Ok(Self { min, max, n })
    }

    pub fn nodes(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.min];
        }
        (0..self.n)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.n - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridSpec {
    Cartesian { qx: Axis, qy: Axis },
    /// `phi` in radians.
    Polar { rho: Axis, phi: Axis },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceRow {
    pub q: NuclearCoords,
    pub values: Vec<C64>,
    /// Pair rigidity of the closest pair.
    pub rigidity: f64,
    /// False where continuity could not be established and labels restart
    /// from the ascending-real-part order.
    pub tracked: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceTable {
    pub dim: usize,
    pub rows: Vec<SurfaceRow>,
}

fn surface_row(model: &Model, q: NuclearCoords, reference: Option<&nalgebra::Matrix3<C64>>) -> Result<(SurfaceRow, nalgebra::Matrix3<C64>)> {
    let mut es = eig_complex_symmetric(&model.diabatic(&q)?)?;
    let rigidity = es.closest_pair().rigidity;
    let tracked = match reference {
        Some(r) if !es.any_coalesced() => align(r, &mut es).is_ok(),
        Some(_) => false,
        None => true,
    };
    if !tracked {
        es = eig_complex_symmetric(&model.diabatic(&q)?)?;
    }
    Ok((
        SurfaceRow {
            q,
            values: es.values.clone(),
            rigidity,
            tracked,
        },
        es.vectors,
    ))
}

/// Surfaces on a rectangular or polar grid. Rows (fixed `qy` or `φ`) are
/// tracked along the first coordinate, each row starting from the first
/// column, which is itself tracked across rows.
pub fn grid_scan(model: &Model, grid: &GridSpec) -> Result<SurfaceTable> {
    let (outer, inner, polar) = match grid {
        GridSpec::Cartesian { qx, qy } => (qy.nodes(), qx.nodes(), false),
        GridSpec::Polar { rho, phi } => (phi.nodes(), rho.nodes(), true),
    };
    let point = |o: f64, i: f64| -> Result<NuclearCoords> {
        if polar {
            NuclearCoords::polar(i, o)
        } else {
            NuclearCoords::cartesian(i, o)
        }
    };
    let mut starts = Vec::with_capacity(outer.len());
    let mut prev: Option<nalgebra::Matrix3<C64>> = None;
    for &o in &outer {
        let (row, frame) = surface_row(model, point(o, inner[0])?, prev.as_ref())?;
        prev = Some(frame);
        starts.push((row, frame));
    }
    let rows: Vec<Vec<SurfaceRow>> = outer
        .par_iter()
        .zip(starts.into_par_iter())
        .map(|(&o, (first, frame))| -> Result<Vec<SurfaceRow>> {
            let mut out = vec![first];
            let mut reference = frame;
            for &i in &inner[1..] {
                let (row, f) = surface_row(model, point(o, i)?, Some(&reference))?;
                reference = f;
                out.push(row);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(SurfaceTable {
        dim: model.dim(),
        rows: rows.into_iter().flatten().collect(),
    })
}

/// Angle of a point relative to the nearest axis `φ = 60°, 180°, 300°`, in degrees.
pub fn offset_from_axis(q: &NuclearCoords) -> f64 {
    let deg = q.phi().to_degrees();
    let centre = 60.0 + 120.0 * ((deg - 60.0) / 120.0).round();
    deg - centre
}
