//! Model parameters from resonance data.
//!
//! Breit–Wigner analysis of time delays gives positions and widths; these
//! assemble complex potentials `V = V_ion + ε − iγ/2` that are fitted along the
//! `qy = 0` slice by the two- or three-state model.

mod bw;
mod lm;
mod slice;
mod synth;

use nalgebra::DMatrix;

pub use bw::{bw_time_delay, fit_time_delay, time_delay_sse, BwFit, Resonance, TimeDelayCurve};
pub use lm::LmOptions;
pub use slice::{fit_jt_slice, fit_pjt_slice, slice_model_value, slice_sse};
pub use synth::{synth_data, synth_time_delay, SynthSpec};

use crate::coords::NuclearCoords;
use crate::error::{Error, Result};
use crate::params::{JtParams, PjtParams, C64};

/// One resonance position and width at one geometry, for one branch.
///
/// Branches carry the closed-form slice labels of [`slice_model_value`]: 2 is
/// the `Ey` state, which does not mix on the slice; 1 and 3 are the lower and
/// upper members of the mixed `A`/`Ex` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResonanceSample {
    pub q: NuclearCoords,
    pub branch: u8,
    /// Position above the ion (Hartree).
    pub eps: f64,
    /// Width (Hartree), non-negative.
    pub gamma: f64,
    pub v_ion: f64,
}

impl ResonanceSample {
    pub fn new(q: NuclearCoords, branch: u8, eps: f64, gamma: f64, v_ion: f64) -> Result<Self> {
        let s = Self {
            q,
            branch,
            eps,
            gamma,
            v_ion,
        };
        s.potential()?;
        if !(1..=3).contains(&branch) {
            return Err(Error::Domain(format!("branch label must be 1, 2 or 3, got {branch}")));
        }
        Ok(s)
    }

    pub fn potential(&self) -> Result<C64> {
        assemble_potential(self.v_ion, self.eps, self.gamma)
    }
}

/// `V_ion + ε − iγ/2`.
pub fn assemble_potential(v_ion: f64, eps: f64, gamma: f64) -> Result<C64> {
    if !(v_ion.is_finite() && eps.is_finite() && gamma.is_finite()) {
        return Err(Error::Domain("resonance parameters must be finite".into()));
    }
    if gamma < 0.0 {
        return Err(Error::Domain(format!("width must be non-negative, got {gamma}")));
    }
    Ok(C64::new(v_ion + eps, -0.5 * gamma))
}

/// Residual weights of the real and imaginary parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weights {
    pub re: f64,
    pub im: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { re: 1.0, im: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FitOptions {
    pub weights: Weights,
    pub lm: LmOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FittedParams {
    Pjt(PjtParams),
    Jt(JtParams),
    BreitWigner { resonances: Vec<Resonance>, background: f64 },
}

/// Per real parameter: value, linearized standard error and the norm of its
/// Jacobian column.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDiagnostic {
    pub name: String,
    pub value: f64,
    /// Indicative only: linearized around the optimum with unit weights.
    pub std_error: f64,
    pub sensitivity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: FittedParams,
    /// Weighted sum of squared residuals (Hartree² for potential fits).
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Ratio of extreme singular values of the final Jacobian.
    pub condition_number: f64,
    pub diagnostics: Vec<ParamDiagnostic>,
    /// SSE after each accepted step (a model change between fit stages
    /// restarts the sequence).
    pub history: Vec<f64>,
}

fn diagnostics(names: &[String], x: &[f64], j: &DMatrix<f64>, sse: f64) -> (f64, Vec<ParamDiagnostic>) {
    let s = lm::singular_values(j);
    let cond = match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    };
    let cov = lm::covariance(j, sse);
    let diag = names
        .iter()
        .enumerate()
        .map(|(i, name)| ParamDiagnostic {
            name: name.clone(),
            value: x[i],
            std_error: cov[(i, i)].max(0.0).sqrt(),
            sensitivity: j.column(i).norm(),
        })
        .collect();
    (cond, diag)
}

/// `re`/`im` names of complex parameters.
fn complex_names(names: &[&str]) -> Vec<String> {
    names
        .iter()
        .flat_map(|n| [format!("{n}.re"), format!("{n}.im")])
        .collect()
}

fn to_real(v: &[C64]) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn to_complex(x: &[f64]) -> Vec<C64> {
    x.chunks(2).map(|p| C64::new(p[0], p[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assembled_potential() {
        let v = assemble_potential(0.0, 0.3339, 0.0242).unwrap();
        assert!((v - C64::new(0.3339, -0.0121)).norm() < 1e-16);
        assert_eq!(assemble_potential(0.1, 0.2, 0.0).unwrap().im, 0.0);
        assert_eq!(assemble_potential(0.7, 0.0, 0.0).unwrap(), C64::new(0.7, 0.0));
        assert!(matches!(assemble_potential(0.0, 0.3, -0.01), Err(Error::Domain(_))));
    }

    #[test]
    fn sample_validation() {
        let q = NuclearCoords::cartesian(0.1, 0.0).unwrap();
        assert!(ResonanceSample::new(q, 4, 0.3, 0.01, 0.0).is_err());
        assert!(ResonanceSample::new(q, 1, 0.3, -0.01, 0.0).is_err());
        assert!(ResonanceSample::new(q, 1, 0.3, 0.01, 0.0).unwrap().potential().unwrap().im < 0.0);
    }
}
