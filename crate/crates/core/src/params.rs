//! Complex expansion coefficients of the JT and PJT models (Hartree).

use num_complex::Complex64;

use crate::coords::NuclearCoords;
use crate::diabatic::{build_jt_diabatic, build_pjt_diabatic, DiabaticMatrix};
use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Higher-order coefficients used by the third-order PJT fit.
///
/// They are only defined on the `qy = 0` slice: `nu` multiplies `qx³` on the
/// whole diagonal, `mu` adds `±qx³` to the E-block splitting and `beta`
/// adds `qx²` to the A–Ex coupling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThirdOrder {
    pub beta: C64,
    pub nu: C64,
    pub mu: C64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PjtParams {
    pub eps_e: C64,
    pub eps_a: C64,
    pub omega: C64,
    pub k: C64,
    pub g: C64,
    pub alpha: C64,
    pub third: Option<ThirdOrder>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JtParams {
    pub eps_e: C64,
    pub omega: C64,
    pub k: C64,
    pub g: C64,
}

fn all_finite(values: &[C64]) -> Result<()> {
    if values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain("model parameters must be finite".into()))
    }
}

impl PjtParams {
    pub fn second_order(eps_e: C64, eps_a: C64, omega: C64, k: C64, g: C64, alpha: C64) -> Result<Self> {
        let p = Self {
            eps_e,
            eps_a,
            omega,
            k,
            g,
            alpha,
            third: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_third_order(mut self, third: ThirdOrder) -> Result<Self> {
        self.third = Some(third);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = vec![self.eps_e, self.eps_a, self.omega, self.k, self.g, self.alpha];
        if let Some(t) = self.third {
            v.extend([t.beta, t.nu, t.mu]);
        }
        all_finite(&v)
    }

    pub fn order(&self) -> u8 {
        if self.third.is_some() {
            3
        } else {
            2
        }
    }

    /// Parameters with every imaginary part dropped (bound-state limit).
    pub fn real_part(&self) -> Self {
        let re = |z: C64| c(z.re, 0.0);
        Self {
            eps_e: re(self.eps_e),
            eps_a: re(self.eps_a),
            omega: re(self.omega),
            k: re(self.k),
            g: re(self.g),
            alpha: re(self.alpha),
            third: self.third.map(|t| ThirdOrder {
                beta: re(t.beta),
                nu: re(t.nu),
                mu: re(t.mu),
            }),
        }
    }

    /// Parameters in canonical order, `[eps_E, eps_A, omega, k, g, alpha, (beta, nu, mu)]`.
    pub fn to_vec(&self) -> Vec<C64> {
        let mut v = vec![self.eps_e, self.eps_a, self.omega, self.k, self.g, self.alpha];
        if let Some(t) = self.third {
            v.extend([t.beta, t.nu, t.mu]);
        }
        v
    }

    pub fn from_slice(v: &[C64]) -> Result<Self> {
        let third = match v.len() {
            6 => None,
            9 => Some(ThirdOrder {
                beta: v[6],
                nu: v[7],
                mu: v[8],
            }),
            n => return Err(Error::Schema(format!("expected 6 or 9 PJT parameters, got {n}"))),
        };
        let p = Self {
            eps_e: v[0],
            eps_a: v[1],
            omega: v[2],
            k: v[3],
            g: v[4],
            alpha: v[5],
            third,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn names(order: u8) -> &'static [&'static str] {
        if order == 3 {
            &["eps_E", "eps_A", "omega", "k", "g", "alpha", "beta", "nu", "mu"]
        } else {
            &["eps_E", "eps_A", "omega", "k", "g", "alpha"]
        }
    }
}

impl JtParams {
    pub fn new(eps_e: C64, omega: C64, k: C64, g: C64) -> Result<Self> {
        let p = Self { eps_e, omega, k, g };
        all_finite(&p.to_vec())?;
        Ok(p)
    }

    pub fn to_vec(&self) -> Vec<C64> {
        vec![self.eps_e, self.omega, self.k, self.g]
    }

    pub fn from_slice(v: &[C64]) -> Result<Self> {
        if v.len() != 4 {
            return Err(Error::Schema(format!("expected 4 JT parameters, got {}", v.len())));
        }
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn names() -> &'static [&'static str] {
        &["eps_E", "omega", "k", "g"]
    }

    /// The PJT model with the A state decoupled (`alpha = 0`).
    pub fn as_pjt(&self, eps_a: C64) -> PjtParams {
        PjtParams {
            eps_e: self.eps_e,
            eps_a,
            omega: self.omega,
            k: self.k,
            g: self.g,
            alpha: C64::new(0.0, 0.0),
            third: None,
        }
    }
}

/// Either vibronic model; the common entry point for surfaces, topology and couplings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Model {
    Pjt(PjtParams),
    Jt(JtParams),
}

impl Model {
    /// Number of electronic states (3 for PJT, 2 for JT).
    pub fn dim(&self) -> usize {
        match self {
            Model::Pjt(_) => 3,
            Model::Jt(_) => 2,
        }
    }

    pub fn order(&self) -> u8 {
        match self {
            Model::Pjt(p) => p.order(),
            Model::Jt(_) => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Pjt(_) => "pjt",
            Model::Jt(_) => "jt",
        }
    }

    pub fn diabatic(&self, q: &NuclearCoords) -> Result<DiabaticMatrix> {
        match self {
            Model::Pjt(p) => build_pjt_diabatic(p, q),
            Model::Jt(p) => Ok(build_jt_diabatic(p, q)),
        }
    }

    /// Cartesian derivatives `(∂/∂qx, ∂/∂qy)` of the diabatic matrix.
    ///
    /// Only second-order models are supported; the third-order terms are
    /// not defined off the `qy = 0` slice.
    pub fn diabatic_gradient(&self, q: &NuclearCoords) -> Result<[DiabaticMatrix; 2]> {
        crate::diabatic::diabatic_gradient(self, q)
    }
}

/// Published parameter sets (Hartree, dimensionless coordinates).
pub mod published {
    use super::*;

    /// Second-order complex PJT model.
    pub fn pjt_second_order() -> PjtParams {
        PjtParams {
            eps_e: c(0.3339, -0.0121),
            eps_a: c(0.3760, -0.0027),
            omega: c(-0.0031, 0.0019),
            k: c(-0.0037, -0.0012),
            g: c(0.0085, -0.0021),
            alpha: c(0.0627, 0.0018),
            third: None,
        }
    }

    /// Third-order complex PJT model (slice form).
    pub fn pjt_third_order() -> PjtParams {
        PjtParams {
            eps_e: c(0.3339, -0.0121),
            eps_a: c(0.3760, -0.0027),
            omega: c(-0.0033, 0.0020),
            k: c(-0.0036, -0.0011),
            g: c(0.0086, -0.0021),
            alpha: c(0.0627, 0.0018),
            third: Some(ThirdOrder {
                beta: c(0.0011, 0.0),
                nu: c(-0.0005, -0.0003),
                mu: c(-0.0006, -0.0004),
            }),
        }
    }

    /// Second-order complex JT model.
    pub fn jt_second_order() -> JtParams {
        JtParams {
            eps_e: c(0.3339, -0.0121),
            omega: c(-0.0741, 0.0089),
            k: c(-0.0034, -0.0011),
            g: c(0.0268, 0.0014),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_flags() {
        assert_eq!(published::pjt_second_order().order(), 2);
        assert_eq!(published::pjt_third_order().order(), 3);
        assert_eq!(Model::Jt(published::jt_second_order()).dim(), 2);
    }

    #[test]
    fn rejects_non_finite() {
        let z = c(0.0, 0.0);
        assert!(PjtParams::second_order(z, z, z, c(f64::NAN, 0.0), z, z).is_err());
        assert!(JtParams::new(z, z, z, c(0.0, f64::INFINITY)).is_err());
    }

    #[test]
    fn vector_round_trip() {
        let p = published::pjt_third_order();
        assert_eq!(PjtParams::from_slice(&p.to_vec()).unwrap(), p);
        assert!(PjtParams::from_slice(&p.to_vec()[..5]).is_err());
        let j = published::jt_second_order();
        assert_eq!(JtParams::from_slice(&j.to_vec()).unwrap(), j);
    }
}
