//! Seeded synthetic slice data for round-trip checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{bw_time_delay, FittedParams, Resonance, ResonanceSample, TimeDelayCurve};
use crate::coords::NuclearCoords;
use crate::error::{Error, Result};
use crate::params::Model;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub qx: Vec<f64>,
    /// Standard deviation of the noise on `Re V` and on `Im V` (Hartree).
    pub sigma: f64,
    pub seed: u64,
    pub v_ion: f64,
}

/// Branch-labelled samples of the slice potentials, every branch at every
/// `qx`. Noise is Gaussian and independent on the real and imaginary parts;
/// a width pushed below zero by noise is clipped to zero.
pub fn synth_data(model: &Model, spec: &SynthSpec) -> Result<Vec<ResonanceSample>> {
    if !(spec.sigma >= 0.0 && spec.sigma.is_finite()) {
        return Err(Error::Domain(format!("noise level must be non-negative, got {}", spec.sigma)));
    }
    let params = match model {
        Model::Pjt(p) => FittedParams::Pjt(*p),
        Model::Jt(p) => FittedParams::Jt(*p),
    };
    let normal = Normal::new(0.0, spec.sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.qx.len() * model.dim());
    for &x in &spec.qx {
        let q = NuclearCoords::cartesian(x, 0.0)?;
        for b in 1..=model.dim() as u8 {
            let v = super::slice_model_value(&params, x, b)?;
            let (n_re, n_im) = if spec.sigma > 0.0 {
                (normal.sample(&mut rng), normal.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            let eps = v.re + n_re - spec.v_ion;
            let gamma = (-2.0 * (v.im + n_im)).max(0.0);
            out.push(ResonanceSample::new(q, b, eps, gamma, spec.v_ion)?);
        }
    }
    Ok(out)
}

/// Breit–Wigner time delay on `energies` with seeded Gaussian noise of width `sigma`.
pub fn synth_time_delay(resonances: &[Resonance], background: f64, energies: &[f64], sigma: f64, seed: u64) -> Result<TimeDelayCurve> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise level must be non-negative, got {sigma}")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = energies
        .iter()
        .map(|&e| {
            let noise = if sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            Ok(bw_time_delay(e, resonances, background)? + noise)
        })
        .collect::<Result<Vec<_>>>()?;
    TimeDelayCurve::new(energies.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::published;

    fn spec(sigma: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            qx: (0..401).map(|i| -0.5 + i as f64 / 400.0).collect(),
            sigma,
            seed,
            v_ion: 0.0,
        }
    }

    #[test]
    fn noiseless_reproduces_the_model() {
        let p = published::pjt_second_order();
        let data = synth_data(&Model::Pjt(p), &spec(0.0, 1)).unwrap();
        assert_eq!(data.len(), 401 * 3);
        for s in &data {
            let m = super::super::slice_model_value(&FittedParams::Pjt(p), s.q.qx(), s.branch).unwrap();
            assert!((s.potential().unwrap() - m).norm() < 1e-16);
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let m = Model::Jt(published::jt_second_order());
        assert_eq!(synth_data(&m, &spec(1e-4, 9)).unwrap(), synth_data(&m, &spec(1e-4, 9)).unwrap());
        assert_ne!(synth_data(&m, &spec(1e-4, 9)).unwrap(), synth_data(&m, &spec(1e-4, 10)).unwrap());
    }

    #[test]
    fn noise_has_requested_spread() {
        let p = published::pjt_second_order();
        let clean = synth_data(&Model::Pjt(p), &spec(0.0, 0)).unwrap();
        let noisy = synth_data(&Model::Pjt(p), &spec(1e-4, 5)).unwrap();
        let d: Vec<f64> = clean
            .iter()
            .zip(&noisy)
            .flat_map(|(a, b)| {
                let d = b.potential().unwrap() - a.potential().unwrap();
                [d.re, d.im]
            })
            .collect();
        let sd = (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt();
        assert!((sd / 1e-4 - 1.0).abs() < 0.05, "{sd}");
        assert!(synth_data(&Model::Pjt(p), &spec(-1.0, 0)).is_err());
    }

    #[test]
    fn time_delay_noise_is_seeded() {
        let res = [Resonance { position: 0.1, width: 0.02 }];
        let e: Vec<f64> = (0..50).map(|i| i as f64 * 0.004).collect();
        let clean = synth_time_delay(&res, 1.0, &e, 0.0, 0).unwrap();
        for (k, &x) in e.iter().enumerate() {
            assert_eq!(clean.values()[k], bw_time_delay(x, &res, 1.0).unwrap());
        }
        let a = synth_time_delay(&res, 1.0, &e, 0.1, 4).unwrap();
        assert_eq!(a, synth_time_delay(&res, 1.0, &e, 0.1, 4).unwrap());
        assert_ne!(a, synth_time_delay(&res, 1.0, &e, 0.1, 5).unwrap());
    }
}
