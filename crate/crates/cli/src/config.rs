//! Run configuration: a JSON file of defaults that command-line flags override.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use vibronic::coords::NuclearCoords;
use vibronic::params::Model;
use vibronic::topology::{Axis, GridSpec, Region, SearchOptions};
use vibronic::{Error, Result};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub rho_min: Option<f64>,
    pub rho_max: Option<f64>,
    pub phi_min_deg: Option<f64>,
    pub phi_max_deg: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub d_rho: Option<f64>,
    pub d_phi_deg: Option<f64>,
    pub validity_radius: Option<f64>,
    pub fd_step: Option<f64>,
    pub lm_max_iter: Option<usize>,
    pub lm_rel_tol: Option<f64>,
    pub lm_initial_damping: Option<f64>,
    pub weight_re: Option<f64>,
    pub weight_im: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<String>,
    pub order: Option<u8>,
    pub params: Option<PathBuf>,
    pub grid: Option<String>,
    pub qx: Option<String>,
    pub center: Option<String>,
    pub radius: Option<f64>,
    pub points: Option<usize>,
    pub start_deg: Option<f64>,
    pub method: Option<String>,
    pub gauge: Option<String>,
    pub region: Option<RegionConfig>,
    pub data: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub n_res: Option<usize>,
    pub sigma: Option<f64>,
    pub v_ion: Option<f64>,
    pub resonances: Option<String>,
    pub background: Option<f64>,
    pub energies: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub seed: Option<u64>,
    pub tolerances: Option<Tolerances>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    pub fn tol(&self) -> Tolerances {
        self.tolerances.clone().unwrap_or_default()
    }
}

pub fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::Schema(format!("missing required setting '{name}' (flag --{} or config key)", name.replace('_', "-"))))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Schema(format!("{what}: '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Schema(format!("{what}: '{s}' is not finite")));
    }
    Ok(v)
}

/// `min:max:n`.
pub fn parse_axis(s: &str, what: &str) -> Result<Axis> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Schema(format!("{what}: expected min:max:n, got '{s}'")));
    }
    let n: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| Error::Schema(format!("{what}: '{}' is not a point count", parts[2])))?;
    let (lo, hi) = (parse_f64(parts[0], what)?, parse_f64(parts[1], what)?);
    Axis::new(lo, hi, n).map_err(|e| Error::Schema(format!("{what}: {e}")))
}

/// `qx=a:b:n,qy=a:b:n` or `rho=a:b:n,phi=a:b:n` (φ in degrees).
pub fn parse_grid(s: &str) -> Result<GridSpec> {
    let mut qx = None;
    let mut qy = None;
    let mut rho = None;
    let mut phi = None;
    for part in s.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Schema(format!("grid: expected key=min:max:n, got '{part}'")))?;
        let axis = parse_axis(value, key.trim())?;
        match key.trim() {
            "qx" => qx = Some(axis),
            "qy" => qy = Some(axis),
            "rho" => rho = Some(axis),
            "phi" => {
                phi = Some(Axis {
                    min: axis.min.to_radians(),
                    max: axis.max.to_radians(),
                    n: axis.n,
                })
            }
            k => return Err(Error::Schema(format!("grid: unknown axis '{k}'"))),
        }
    }
    match (qx, qy, rho, phi) {
        (Some(qx), Some(qy), None, None) => Ok(GridSpec::Cartesian { qx, qy }),
        (None, None, Some(rho), Some(phi)) => {
            if rho.min < 0.0 {
                return Err(Error::Schema("grid: rho must be non-negative".into()));
            }
            Ok(GridSpec::Polar { rho, phi })
        }
        _ => Err(Error::Schema("grid: give either qx and qy or rho and phi".into())),
    }
}

/// `qx,qy`.
pub fn parse_point(s: &str) -> Result<NuclearCoords> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Schema(format!("point: expected qx,qy, got '{s}'")));
    }
    NuclearCoords::cartesian(parse_f64(parts[0], "point")?, parse_f64(parts[1], "point")?)
}

/// `position:width,position:width,…`.
pub fn parse_resonances(s: &str) -> Result<Vec<vibronic::fitting::Resonance>> {
    s.split(',')
        .map(|p| {
            let (e, g) = p
                .split_once(':')
                .ok_or_else(|| Error::Schema(format!("resonances: expected position:width, got '{p}'")))?;
            Ok(vibronic::fitting::Resonance {
                position: parse_f64(e, "resonance position")?,
                width: parse_f64(g, "resonance width")?,
            })
        })
        .collect()
}

pub fn region(cfg: &RegionConfig) -> Result<Region> {
    let lo = cfg.phi_min_deg.unwrap_or(0.0).to_radians();
    let hi = cfg.phi_max_deg.map(f64::to_radians).unwrap_or(lo + TAU);
    Region::sector(cfg.rho_min.unwrap_or(0.0), cfg.rho_max.unwrap_or(0.6), lo, hi).map_err(|e| Error::Schema(e.to_string()))
}

pub fn search_options(t: &Tolerances) -> SearchOptions {
    let d = SearchOptions::default();
    SearchOptions {
        d_rho: t.d_rho.unwrap_or(d.d_rho),
        d_phi: t.d_phi_deg.map(f64::to_radians).unwrap_or(d.d_phi),
        validity_radius: t.validity_radius.unwrap_or(d.validity_radius),
    }
}

pub fn load_model(path: &Path) -> Result<Model> {
    vibronic::io::read_params(path)
}
