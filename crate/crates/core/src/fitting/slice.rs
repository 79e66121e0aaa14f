//! Fits of the slice potentials to complex resonance energies.

use nalgebra::{DMatrix, DVector};

use super::lm::{minimize, singular_values};
use super::{complex_names, diagnostics, to_complex, to_real, FitOptions, FitResult, FittedParams, ResonanceSample, Weights};
use crate::analytic::analytic_slice_potentials;
use crate::diabatic::SLICE_TOLERANCE;
use crate::error::{Error, Result};
use crate::params::{JtParams, PjtParams, ThirdOrder, C64};

/// Relative singular-value cutoff below which a design is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

fn jt_branches(p: &JtParams, x: f64) -> (C64, C64) {
    let base = p.eps_e + p.omega * (0.5 * x * x);
    let split = p.k * x + p.g * (x * x);
    (base + split, base - split)
}

/// Model value of `branch` (1-based) at `qx` on the slice.
///
/// Labels are analytic, not sorted: branch 2 is the unmixed `Ey` state and
/// may cross branch 1.
pub fn slice_model_value(params: &FittedParams, qx: f64, branch: u8) -> Result<C64> {
    match params {
        FittedParams::Pjt(p) => {
            let (v1, v2, v3) = analytic_slice_potentials(p, qx);
            match branch {
                1 => Ok(v1),
                2 => Ok(v2),
                3 => Ok(v3),
                b => Err(Error::Domain(format!("no branch {b} in the three-state model"))),
            }
        }
        FittedParams::Jt(p) => {
            let (v1, v2) = jt_branches(p, qx);
            match branch {
                1 => Ok(v1),
                2 => Ok(v2),
                b => Err(Error::Domain(format!("no branch {b} in the two-state model"))),
            }
        }
        FittedParams::BreitWigner { .. } => Err(Error::Domain("Breit-Wigner parameters have no slice model".into())),
    }
}

/// Model value paired with a sample: branch 2 by label, branches 1 and 3
/// (both totally symmetric on the slice) by the nearer model value.
fn pjt_match(p: &PjtParams, s: &ResonanceSample, data: C64) -> C64 {
    let (v1, v2, v3) = analytic_slice_potentials(p, s.q.qx());
    match s.branch {
        2 => v2,
        _ => {
            if (v1 - data).norm() <= (v3 - data).norm() {
                v1
            } else {
                v3
            }
        }
    }
}

fn weighted(d: C64, w: &Weights) -> [f64; 2] {
    [w.re * d.re, w.im * d.im]
}

/// Weighted SSE of `params` on `data`, with the same branch pairing the fits use.
/// Two-state fits ignore branch-3 samples.
pub fn slice_sse(params: &FittedParams, data: &[ResonanceSample], weights: &Weights) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        let v = s.potential()?;
        let m = match params {
            FittedParams::Pjt(p) => pjt_match(p, s, v),
            FittedParams::Jt(_) if s.branch == 3 => continue,
            other => slice_model_value(other, s.q.qx(), s.branch)?,
        };
        let [a, b] = weighted(m - v, weights);
        total += a * a + b * b;
    }
    Ok(total)
}

fn check_slice(data: &[ResonanceSample], labels: &[u8]) -> Result<()> {
    if let Some(s) = data.iter().find(|s| s.q.qy().abs() > SLICE_TOLERANCE) {
        return Err(Error::Domain(format!("sample at qy = {} is off the qy = 0 slice", s.q.qy())));
    }
    for &b in labels {
        let pts: Vec<f64> = data.iter().filter(|s| s.branch == b).map(|s| s.q.qx()).collect();
        if pts.is_empty() {
            return Err(Error::IllPosed(format!("no samples for branch {b}")));
        }
    }
    let used = data.iter().filter(|s| labels.contains(&s.branch));
    let (neg, pos) = used.fold((false, false), |(n, p), s| (n || s.q.qx() < 0.0, p || s.q.qx() > 0.0));
    if !(neg && pos) {
        return Err(Error::IllPosed("data must cover both signs of qx".into()));
    }
    Ok(())
}

/// Real least squares; `None` if the design is rank deficient.
fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let s = singular_values(a);
    if s.len() < a.ncols() || s.last().copied().unwrap_or(0.0) <= RANK_TOLERANCE * s[0] {
        return None;
    }
    a.clone().svd(true, true).solve(b, 0.0).ok()
}

/// Complex polynomial of degree `deg` through the samples of one branch.
fn branch_poly(data: &[ResonanceSample], branch: u8, deg: usize) -> Option<Vec<C64>> {
    let pts: Vec<(f64, C64)> = data
        .iter()
        .filter(|s| s.branch == branch)
        .filter_map(|s| s.potential().ok().map(|v| (s.q.qx(), v)))
        .collect();
    let a = DMatrix::from_fn(pts.len(), deg + 1, |i, j| pts[i].0.powi(j as i32));
    let re = lstsq(&a, &DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1.re)))?;
    let im = lstsq(&a, &DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1.im)))?;
    Some(re.iter().zip(im.iter()).map(|(r, i)| C64::new(*r, *i)).collect())
}

fn canonical(mut p: PjtParams) -> PjtParams {
    // the potentials depend on α only through (αx + βx²)²
    if p.alpha.re < 0.0 || (p.alpha.re == 0.0 && p.alpha.im < 0.0) {
        p.alpha = -p.alpha;
        if let Some(t) = p.third.as_mut() {
            t.beta = -t.beta;
        }
    }
    p
}

/// Moment estimates: `ε_E`, `k` and `ω/2 − g` from a quadratic through
/// branch 2; `ω` from the curvature of the branch sum; `α²` from the
/// splitting of branches 1 and 3.
fn moment_init(data: &[ResonanceSample]) -> Result<PjtParams> {
    let fail = || Error::IllPosed("too few distinct qx values for the initial estimates".into());
    let p1 = branch_poly(data, 1, 2).ok_or_else(fail)?;
    let p2 = branch_poly(data, 2, 2).ok_or_else(fail)?;
    let p3 = branch_poly(data, 3, 2).ok_or_else(fail)?;
    let eps_e = p2[0];
    let k = -p2[1];
    let omega = (p1[2] + p2[2] + p3[2]) * (2.0 / 3.0);
    let g = omega * 0.5 - p2[2];
    let eps_a = p1[0] + p3[0] - eps_e;
    let (mut num, mut den) = (C64::new(0.0, 0.0), 0.0);
    for s in data.iter().filter(|s| s.branch == 1 || s.branch == 3) {
        let x = s.q.qx();
        let at = |p: &[C64]| p[0] + p[1] * x + p[2] * (x * x);
        let half = (at(&p3) - at(&p1)) * 0.5;
        let diag = (eps_a - eps_e - k * x - g * (x * x)) * 0.5;
        num += (half * half - diag * diag) * (x * x);
        den += x.powi(4);
    }
    let alpha = if den > 0.0 { (num / den).sqrt() } else { C64::new(0.0, 0.0) };
    Ok(canonical(PjtParams {
        eps_e,
        eps_a,
        omega,
        k,
        g,
        alpha,
        third: None,
    }))
}

fn pjt_residuals(data: &[(ResonanceSample, C64)], x: &[f64], w: &Weights) -> Option<DVector<f64>> {
    let p = PjtParams::from_slice(&to_complex(x)).ok()?;
    let mut r = DVector::zeros(2 * data.len());
    for (i, (s, v)) in data.iter().enumerate() {
        let [a, b] = weighted(pjt_match(&p, s, *v) - v, w);
        r[2 * i] = a;
        r[2 * i + 1] = b;
    }
    Some(r)
}

/// Each potential is holomorphic in each complex parameter, so one complex
/// difference gives both the `re` and `im` columns.
fn pjt_jacobian(data: &[(ResonanceSample, C64)], x: &[f64], w: &Weights) -> Option<DMatrix<f64>> {
    let z = to_complex(x);
    let p = PjtParams::from_slice(&z).ok()?;
    let picks: Vec<u8> = data
        .iter()
        .map(|(s, v)| {
            let (v1, _, _) = analytic_slice_potentials(&p, s.q.qx());
            match s.branch {
                2 => 2,
                _ if pjt_match(&p, s, *v) == v1 => 1,
                _ => 3,
            }
        })
        .collect();
    let eval = |z: &[C64], s: &ResonanceSample, b: u8| -> Option<C64> {
        let p = PjtParams::from_slice(z).ok()?;
        slice_model_value(&FittedParams::Pjt(p), s.q.qx(), b).ok()
    };
    let mut j = DMatrix::zeros(2 * data.len(), x.len());
    for c in 0..z.len() {
        let h = 1e-6 * z[c].norm().max(1e-3);
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[c] += h;
        zm[c] -= h;
        for (i, (s, _)) in data.iter().enumerate() {
            let d = (eval(&zp, s, picks[i])? - eval(&zm, s, picks[i])?) / (2.0 * h);
            j[(2 * i, 2 * c)] = w.re * d.re;
            j[(2 * i + 1, 2 * c)] = w.im * d.im;
            j[(2 * i, 2 * c + 1)] = -w.re * d.im;
            j[(2 * i + 1, 2 * c + 1)] = w.im * d.re;
        }
    }
    Some(j)
}

fn run_pjt(data: &[(ResonanceSample, C64)], start: PjtParams, opts: &FitOptions) -> Result<(PjtParams, super::lm::LmOutcome)> {
    let w = opts.weights;
    let x0 = to_real(&start.to_vec());
    let out = minimize(|x| pjt_residuals(data, x, &w), |x| pjt_jacobian(data, x, &w), &x0, &opts.lm)?;
    let p = canonical(PjtParams::from_slice(&to_complex(&out.x))?);
    Ok((p, out))
}

/// Joint fit of the real and imaginary parts of all three slice potentials.
///
/// Order 3 starts from an order-2 fit of the same data unless `init` is given.
pub fn fit_pjt_slice(data: &[ResonanceSample], order: u8, init: Option<&PjtParams>, opts: &FitOptions) -> Result<FitResult> {
    if order != 2 && order != 3 {
        return Err(Error::Domain(format!("order must be 2 or 3, got {order}")));
    }
    check_slice(data, &[1, 2, 3])?;
    let n_par = if order == 2 { 12 } else { 18 };
    if 2 * data.len() < n_par {
        return Err(Error::IllPosed(format!("{} samples cannot determine {n_par} real parameters", data.len())));
    }
    let pairs: Vec<(ResonanceSample, C64)> = data.iter().map(|s| Ok((*s, s.potential()?))).collect::<Result<_>>()?;
    let mut start = match init {
        Some(p) => *p,
        None => moment_init(data)?,
    };
    let mut iterations = 0;
    let mut history = Vec::new();
    if order == 3 && start.third.is_none() {
        if init.is_none() {
            let (p, out) = run_pjt(&pairs, start, opts)?;
            iterations += out.iterations;
            history.extend(out.history);
            start = p;
        }
        let zero = C64::new(0.0, 0.0);
        start.third = Some(ThirdOrder {
            beta: zero,
            nu: zero,
            mu: zero,
        });
    } else if order == 2 {
        start.third = None;
    }
    let (p, out) = run_pjt(&pairs, start, opts)?;
    iterations += out.iterations;
    history.extend(out.history.iter().copied());
    let x = to_real(&p.to_vec());
    let j = pjt_jacobian(&pairs, &x, &opts.weights).ok_or_else(|| Error::Domain("jacobian undefined at the optimum".into()))?;
    let s = singular_values(&j);
    if s.last().copied().unwrap_or(0.0) <= RANK_TOLERANCE * s[0] {
        return Err(Error::RankDeficient(format!(
            "jacobian singular values span {:e} to {:e}; the data do not determine all parameters",
            s[0],
            s.last().copied().unwrap_or(0.0)
        )));
    }
    let params = FittedParams::Pjt(p);
    let residual = slice_sse(&params, data, &opts.weights)?;
    let (condition_number, diags) = diagnostics(&complex_names(PjtParams::names(order)), &x, &j, residual);
    Ok(FitResult {
        params,
        residual,
        iterations,
        converged: out.converged,
        condition_number,
        diagnostics: diags,
        history,
    })
}

/// Two-state slice fit. The model `ε + ½ωx² ± (kx + gx²)` is linear in its
/// parameters, so the real and imaginary parts are two independent linear
/// least-squares problems. Branch-3 samples are ignored.
pub fn fit_jt_slice(data: &[ResonanceSample], opts: &FitOptions) -> Result<FitResult> {
    check_slice(data, &[1, 2])?;
    let used: Vec<&ResonanceSample> = data.iter().filter(|s| s.branch != 3).collect();
    let design = DMatrix::from_fn(used.len(), 4, |i, j| {
        let x = used[i].q.qx();
        let sign = if used[i].branch == 1 { 1.0 } else { -1.0 };
        match j {
            0 => 1.0,
            1 => 0.5 * x * x,
            2 => sign * x,
            _ => sign * x * x,
        }
    });
    let values: Vec<C64> = used.iter().map(|s| s.potential()).collect::<Result<_>>()?;
    let rank = || Error::IllPosed("the two-state design matrix is rank deficient".into());
    let re = lstsq(&design, &DVector::from_iterator(values.len(), values.iter().map(|v| v.re))).ok_or_else(rank)?;
    let im = lstsq(&design, &DVector::from_iterator(values.len(), values.iter().map(|v| v.im))).ok_or_else(rank)?;
    let z: Vec<C64> = (0..4).map(|i| C64::new(re[i], im[i])).collect();
    let p = JtParams::from_slice(&z)?;
    let w = opts.weights;
    let mut j = DMatrix::zeros(2 * used.len(), 8);
    for i in 0..used.len() {
        for c in 0..4 {
            j[(2 * i, 2 * c)] = w.re * design[(i, c)];
            j[(2 * i + 1, 2 * c + 1)] = w.im * design[(i, c)];
        }
    }
    let params = FittedParams::Jt(p);
    let residual = slice_sse(&params, data, &w)?;
    let (condition_number, diags) = diagnostics(&complex_names(JtParams::names()), &to_real(&z), &j, residual);
    Ok(FitResult {
        params,
        residual,
        iterations: 1,
        converged: true,
        condition_number,
        diagnostics: diags,
        history: vec![residual],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coords::NuclearCoords;
    use crate::fitting::{synth_data, SynthSpec};
    use crate::params::{c, published, Model};

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| -0.5 + i as f64 / (n - 1) as f64).collect()
    }

    fn noiseless(model: Model) -> Vec<ResonanceSample> {
        synth_data(&model, &SynthSpec {
            qx: grid(41),
            sigma: 0.0,
            seed: 0,
            v_ion: 0.0,
        })
        .unwrap()
    }

    fn max_rel(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm() / y.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn second_order_round_trip() {
        let truth = published::pjt_second_order();
        let fit = fit_pjt_slice(&noiseless(Model::Pjt(truth)), 2, None, &FitOptions::default()).unwrap();
        let FittedParams::Pjt(p) = fit.params else { panic!() };
        assert!(max_rel(&p.to_vec(), &truth.to_vec()) < 1e-6);
        assert!(fit.residual < 1e-18 && fit.converged);
        assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn third_order_round_trip_and_misfit() {
        let truth = published::pjt_third_order();
        let data = noiseless(Model::Pjt(truth));
        let fit = fit_pjt_slice(&data, 3, None, &FitOptions::default()).unwrap();
        let FittedParams::Pjt(p) = fit.params else { panic!() };
        assert!(max_rel(&p.to_vec(), &truth.to_vec()) < 1e-6, "{p:?}");
        assert!(fit.residual < 1e-18);
        let low = fit_pjt_slice(&data, 2, None, &FitOptions::default()).unwrap();
        assert!(low.residual > 1e6 * fit.residual.max(1e-30));
        assert!(low.residual > 1e-12);
    }

    #[test]
    fn reported_residual_is_reproducible() {
        let truth = published::pjt_second_order();
        let data = synth_data(&Model::Pjt(truth), &SynthSpec {
            qx: grid(41),
            sigma: 1e-4,
            seed: 7,
            v_ion: 0.0,
        })
        .unwrap();
        let fit = fit_pjt_slice(&data, 2, None, &FitOptions::default()).unwrap();
        let again = slice_sse(&fit.params, &data, &Weights::default()).unwrap();
        assert!((again - fit.residual).abs() <= 1e-14 * fit.residual);
    }

    #[test]
    fn energy_shift_moves_only_the_offsets() {
        let truth = published::pjt_second_order();
        let mut data = noiseless(Model::Pjt(truth));
        let base = fit_pjt_slice(&data, 2, None, &FitOptions::default()).unwrap();
        for s in &mut data {
            s.v_ion += 0.25;
        }
        let shifted = fit_pjt_slice(&data, 2, None, &FitOptions::default()).unwrap();
        let (FittedParams::Pjt(a), FittedParams::Pjt(b)) = (base.params, shifted.params) else { panic!() };
        assert!((b.eps_e - a.eps_e - 0.25).norm() < 1e-10);
        assert!((b.eps_a - a.eps_a - 0.25).norm() < 1e-10);
        for (x, y) in [(a.omega, b.omega), (a.k, b.k), (a.g, b.g), (a.alpha, b.alpha)] {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn crossing_of_real_parts_near_minus_point_one() {
        let p = FittedParams::Pjt(published::pjt_second_order());
        let f = |x: f64| {
            let v1 = slice_model_value(&p, x, 1).unwrap();
            let v2 = slice_model_value(&p, x, 2).unwrap();
            v1.re - v2.re
        };
        let (mut lo, mut hi) = (-0.15, -0.05);
        assert!(f(lo) * f(hi) < 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((-0.15..=-0.05).contains(&lo));
    }

    #[test]
    fn coverage_is_checked() {
        let data = noiseless(Model::Pjt(published::pjt_second_order()));
        let one_side: Vec<_> = data.iter().copied().filter(|s| s.q.qx() > 0.0).collect();
        assert!(matches!(fit_pjt_slice(&one_side, 2, None, &FitOptions::default()), Err(Error::IllPosed(_))));
        let no_b2: Vec<_> = data.iter().copied().filter(|s| s.branch != 2).collect();
        assert!(matches!(fit_pjt_slice(&no_b2, 2, None, &FitOptions::default()), Err(Error::IllPosed(_))));
        let mut off = data.clone();
        off[0].q = NuclearCoords::cartesian(0.1, 0.1).unwrap();
        assert!(matches!(fit_pjt_slice(&off, 2, None, &FitOptions::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn jt_linear_solve_is_exact() {
        let truth = published::jt_second_order();
        let fit = fit_jt_slice(&noiseless(Model::Jt(truth)), &FitOptions::default()).unwrap();
        let FittedParams::Jt(p) = fit.params else { panic!() };
        assert!(max_rel(&p.to_vec(), &truth.to_vec()) < 1e-12);
    }

    #[test]
    fn jt_matches_normal_equations() {
        let data = synth_data(&Model::Jt(published::jt_second_order()), &SynthSpec {
            qx: grid(21),
            sigma: 1e-3,
            seed: 3,
            v_ion: 0.0,
        })
        .unwrap();
        let fit = fit_jt_slice(&data, &FitOptions::default()).unwrap();
        let FittedParams::Jt(p) = fit.params else { panic!() };
        // (AᵀA) θ = Aᵀ b, solved with complex right-hand sides
        let mut ata = nalgebra::Matrix4::<f64>::zeros();
        let mut atb = nalgebra::Vector4::<C64>::zeros();
        for s in &data {
            let x = s.q.qx();
            let sg = if s.branch == 1 { 1.0 } else { -1.0 };
            let row = nalgebra::Vector4::new(1.0, 0.5 * x * x, sg * x, sg * x * x);
            ata += row * row.transpose();
            atb += row.map(|r| C64::new(r, 0.0)) * s.potential().unwrap();
        }
        let inv = ata.try_inverse().unwrap().map(|r| C64::new(r, 0.0));
        let oracle = inv * atb;
        for (a, b) in p.to_vec().iter().zip(oracle.iter()) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-3));
        }
    }

    #[test]
    fn jt_needs_both_branches() {
        let data = noiseless(Model::Jt(published::jt_second_order()));
        let only_b2: Vec<_> = data.iter().copied().filter(|s| s.branch == 2).collect();
        assert!(matches!(fit_jt_slice(&only_b2, &FitOptions::default()), Err(Error::IllPosed(_))));
    }

    #[test]
    fn jt_fit_nests_in_pjt_without_coupling() {
        let jt = JtParams::new(c(0.3339, 0.0), c(-0.0741, 0.0), c(-0.0034, 0.0), c(0.0268, 0.0)).unwrap();
        let pjt = jt.as_pjt(c(0.376, 0.0));
        let data = noiseless(Model::Pjt(pjt));
        let fit = fit_jt_slice(&data, &FitOptions::default()).unwrap();
        let FittedParams::Jt(p) = fit.params else { panic!() };
        assert!(max_rel(&p.to_vec(), &jt.to_vec()) < 1e-10, "{p:?}");
    }

    #[test]
    fn alpha_sign_is_canonical() {
        let mut truth = published::pjt_second_order();
        truth.alpha = -truth.alpha;
        let fit = fit_pjt_slice(&noiseless(Model::Pjt(truth)), 2, None, &FitOptions::default()).unwrap();
        let FittedParams::Pjt(p) = fit.params else { panic!() };
        assert!(p.alpha.re > 0.0);
        assert!((p.alpha + truth.alpha).norm() < 1e-8);
    }
}
