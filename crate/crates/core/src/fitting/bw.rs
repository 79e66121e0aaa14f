//! Breit–Wigner analysis of the time delay `dδ/dE`.

use nalgebra::{DMatrix, DVector};

use super::lm::{minimize, LmOptions};
use super::{diagnostics, FitResult, FittedParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resonance {
    pub position: f64,
    pub width: f64,
}

/// Time delay sampled on an increasing energy grid at fixed geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeDelayCurve {
    energies: Vec<f64>,
    values: Vec<f64>,
}

impl TimeDelayCurve {
    pub fn new(energies: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if energies.len() != values.len() {
            return Err(Error::Domain("energy and time-delay columns differ in length".into()));
        }
        if energies.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Domain("time-delay curve contains non-finite values".into()));
        }
        if let Some(k) = energies.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Domain(format!("energy grid is not increasing at row {}", k + 1)));
        }
        Ok(Self { energies, values })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

fn lorentzian(e: f64, r: &Resonance) -> f64 {
    let h = 0.5 * r.width;
    h / ((e - r.position).powi(2) + h * h)
}

/// `Σ (γ/2) / ((E − ε)² + (γ/2)²) + bg`.
pub fn bw_time_delay(e: f64, resonances: &[Resonance], bg: f64) -> Result<f64> {
    if let Some(r) = resonances.iter().find(|r| !(r.width > 0.0)) {
        return Err(Error::Domain(format!("resonance width must be positive, got {}", r.width)));
    }
    Ok(resonances.iter().map(|r| lorentzian(e, r)).sum::<f64>() + bg)
}

/// Packed as `[ε₁, γ₁, ε₂, γ₂, …, bg]`.
fn unpack(x: &[f64]) -> (Vec<Resonance>, f64) {
    let n = (x.len() - 1) / 2;
    let res = (0..n)
        .map(|i| Resonance {
            position: x[2 * i],
            width: x[2 * i + 1],
        })
        .collect();
    (res, x[2 * n])
}

fn residuals(curve: &TimeDelayCurve, x: &[f64]) -> Option<DVector<f64>> {
    let (res, bg) = unpack(x);
    if res.iter().any(|r| !(r.width > 0.0)) {
        return None;
    }
    Some(DVector::from_iterator(
        curve.len(),
        curve
            .energies
            .iter()
            .zip(&curve.values)
            .map(|(&e, &y)| res.iter().map(|r| lorentzian(e, r)).sum::<f64>() + bg - y),
    ))
}

fn jacobian(curve: &TimeDelayCurve, x: &[f64]) -> DMatrix<f64> {
    let (res, _) = unpack(x);
    let mut j = DMatrix::zeros(curve.len(), x.len());
    for (row, &e) in curve.energies.iter().enumerate() {
        for (i, r) in res.iter().enumerate() {
            let h = 0.5 * r.width;
            let d = e - r.position;
            let den = d * d + h * h;
            j[(row, 2 * i)] = 2.0 * h * d / (den * den);
            j[(row, 2 * i + 1)] = 0.5 * (d * d - h * h) / (den * den);
        }
        j[(row, x.len() - 1)] = 1.0;
    }
    j
}

/// Sum of squared residuals of a Breit–Wigner model on `curve`.
pub fn time_delay_sse(curve: &TimeDelayCurve, resonances: &[Resonance], bg: f64) -> Result<f64> {
    let mut x: Vec<f64> = resonances.iter().flat_map(|r| [r.position, r.width]).collect();
    x.push(bg);
    residuals(curve, &x)
        .map(|r| r.norm_squared())
        .ok_or_else(|| Error::Domain("resonance widths must be positive".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BwFit {
    /// Sorted by position.
    pub resonances: Vec<Resonance>,
    pub background: f64,
    pub fit: FitResult,
}

/// Starting points: the highest local maxima above the baseline, with widths
/// from the peak heights; missing resonances split the tallest peak.
fn starts(curve: &TimeDelayCurve, n_res: usize) -> Vec<Vec<f64>> {
    let e = &curve.energies;
    let v = &curve.values;
    let n = v.len();
    let bg = v[0].min(v[n - 1]);
    let span = e[n - 1] - e[0];
    let mut peaks: Vec<usize> = (1..n - 1).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1]).collect();
    peaks.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    if peaks.is_empty() {
        peaks.push(n / 2);
    }
    let width_of = |i: usize| {
        let h = v[i] - bg;
        if h > 0.0 {
            (2.0 / h).min(span)
        } else {
            span / 4.0
        }
    };
    let mut out = Vec::new();
    for spread in [0.25, 0.5, 1.0] {
        for scale in [0.5, 1.0, 2.0] {
            let mut x = Vec::with_capacity(2 * n_res + 1);
            for k in 0..n_res {
                let (pos, w) = if k < peaks.len() {
                    (e[peaks[k]], width_of(peaks[k]))
                } else {
                    let i = peaks[0];
                    let w = width_of(i);
                    let side = if k % 2 == 1 { 1.0 } else { -1.0 };
                    (e[i] + side * spread * w * (1 + k / 2) as f64, w)
                };
                x.push(pos);
                x.push(w * scale);
            }
            x.push(bg);
            out.push(x);
        }
    }
    out
}

/// Least-squares Breit–Wigner fit of `n_res` resonances plus a constant
/// background. Several starting points are tried and the best is kept.
///
/// A width beyond ten times the energy window means the data cannot resolve
/// the resonance; that is reported as non-convergence.
pub fn fit_time_delay(curve: &TimeDelayCurve, n_res: usize, init: Option<(&[Resonance], f64)>, opts: &LmOptions) -> Result<BwFit> {
    if n_res == 0 {
        return Err(Error::IllPosed("need at least one resonance".into()));
    }
    if curve.len() < 3 * n_res + 1 {
        return Err(Error::IllPosed(format!(
            "{} points cannot determine {} resonances (need {})",
            curve.len(),
            n_res,
            3 * n_res + 1
        )));
    }
    let candidates = match init {
        Some((res, bg)) => {
            if res.len() != n_res {
                return Err(Error::IllPosed(format!("initial guess has {} resonances, expected {n_res}", res.len())));
            }
            let mut x: Vec<f64> = res.iter().flat_map(|r| [r.position, r.width]).collect();
            x.push(bg);
            vec![x]
        }
        None => starts(curve, n_res),
    };
    let mut best: Option<super::lm::LmOutcome> = None;
    for x0 in candidates {
        let Ok(out) = minimize(|x| residuals(curve, x), |x| Some(jacobian(curve, x)), &x0, opts) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| out.sse < b.sse) {
            best = Some(out);
        }
    }
    let best = best.ok_or_else(|| Error::Domain("no admissible starting point".into()))?;
    let span = curve.energies[curve.len() - 1] - curve.energies[0];
    let (mut res, bg) = unpack(&best.x);
    if !best.converged || res.iter().any(|r| r.width > 10.0 * span) {
        return Err(Error::NonConvergence {
            iterations: best.iterations,
            sse: best.sse,
            best: best.x.clone(),
        });
    }
    res.sort_by(|a, b| a.position.total_cmp(&b.position));
    let mut x: Vec<f64> = res.iter().flat_map(|r| [r.position, r.width]).collect();
    x.push(bg);
    let names: Vec<String> = (1..=n_res)
        .flat_map(|i| [format!("eps{i}"), format!("gamma{i}")])
        .chain(std::iter::once("bg".to_string()))
        .collect();
    let j = jacobian(curve, &x);
    let residual = time_delay_sse(curve, &res, bg)?;
    let (condition_number, diags) = diagnostics(&names, &x, &j, residual);
    Ok(BwFit {
        resonances: res.clone(),
        background: bg,
        fit: FitResult {
            params: FittedParams::BreitWigner {
                resonances: res,
                background: bg,
            },
            residual,
            iterations: best.iterations,
            converged: best.converged,
            condition_number,
            diagnostics: diags,
            history: best.history.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(res: &[Resonance], bg: f64, lo: f64, hi: f64, n: usize) -> TimeDelayCurve {
        let e: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let v = e.iter().map(|&e| bw_time_delay(e, res, bg).unwrap()).collect();
        TimeDelayCurve::new(e, v).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn peak_and_tails() {
        let r = [Resonance {
            position: 0.3,
            width: 0.01,
        }];
        assert!((bw_time_delay(0.3, &r, 2.0).unwrap() - (2.0 / 0.01 + 2.0)).abs() < 1e-12);
        assert!((bw_time_delay(1e9, &r, 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((bw_time_delay(-1e9, &r, 2.0).unwrap() - 2.0).abs() < 1e-12);
        let bad = [Resonance {
            position: 0.3,
            width: 0.0,
        }];
        assert!(bw_time_delay(0.3, &bad, 0.0).is_err());
    }

    #[test]
    fn two_resonances_add() {
        let a = Resonance {
            position: 0.3,
            width: 0.01,
        };
        let b = Resonance {
            position: 0.305,
            width: 0.02,
        };
        for e in [0.29, 0.3, 0.31] {
            let both = bw_time_delay(e, &[a, b], 0.5).unwrap();
            let sum = bw_time_delay(e, &[a], 0.25).unwrap() + bw_time_delay(e, &[b], 0.25).unwrap();
            assert!((both - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn lorentzian_area_is_pi() {
        let r = Resonance {
            position: 0.3,
            width: 0.01,
        };
        let (lo, hi) = (0.3 - 50.0 * 0.01, 0.3 + 50.0 * 0.01);
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let area: f64 = (0..n).map(|i| lorentzian(lo + (i as f64 + 0.5) * h, &r) * h).sum();
        assert!((area - std::f64::consts::PI).abs() < 0.01 * std::f64::consts::PI);
    }

    #[test]
    fn recovers_one_resonance() {
        let truth = Resonance {
            position: 0.30,
            width: 0.01,
        };
        let curve = synthetic(&[truth], 2.0, 0.2, 0.4, 200);
        let fit = fit_time_delay(&curve, 1, None, &LmOptions::default()).unwrap();
        assert!(rel(fit.resonances[0].position, 0.30) < 1e-6);
        assert!(rel(fit.resonances[0].width, 0.01) < 1e-6);
        assert!(rel(fit.background, 2.0) < 1e-6);
        assert!(fit.fit.converged);
    }

    #[test]
    fn recovers_overlapping_pair() {
        let truth = [
            Resonance {
                position: 0.300,
                width: 0.01,
            },
            Resonance {
                position: 0.305,
                width: 0.02,
            },
        ];
        let curve = synthetic(&truth, 2.0, 0.2, 0.4, 200);
        let fit = fit_time_delay(&curve, 2, None, &LmOptions::default()).unwrap();
        for (f, t) in fit.resonances.iter().zip(&truth) {
            assert!(rel(f.position, t.position) < 1e-6, "{f:?}");
            assert!(rel(f.width, t.width) < 1e-6, "{f:?}");
        }
        assert!(rel(fit.background, 2.0) < 1e-6);
    }

    #[test]
    fn flat_curve_is_flagged() {
        let e: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let curve = TimeDelayCurve::new(e, vec![1.0; 50]).unwrap();
        assert!(matches!(fit_time_delay(&curve, 1, None, &LmOptions::default()), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn too_few_points() {
        let curve = TimeDelayCurve::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 1.0]).unwrap();
        assert!(matches!(fit_time_delay(&curve, 1, None, &LmOptions::default()), Err(Error::IllPosed(_))));
        assert!(TimeDelayCurve::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }
}
