//! Geometric phase of the two lowest states around closed loops.
//!
//! Two independent evaluations are provided. The line integral sums the pair
//! connection, obtained pointwise from the perturbative couplings, with the
//! periodic trapezoid rule. The holonomy multiplies the discrete rotations
//! between consecutive real pair frames as unit quaternions, which keeps
//! track of full turns modulo 4π. Signs follow the orientation of the pair
//! plane relative to the reference axis, so loops around a conical
//! intersection and around an exceptional point have opposite sense.

use std::f64::consts::{PI, TAU};

use crate::coords::NuclearCoords;
use crate::eigen::frame_derivative;
use crate::error::{Error, Result};
use crate::frame::{lifted_holonomy, real_polar, reference_axis, PairFrame};
use crate::nac::GAUGE_PAIR;
use crate::params::{Model, C64};
use crate::tracking::{circle_points, track_along_path, PathTrace};

/// Loops closer than this to a known degeneracy are rejected.
pub const EXCLUSION_RADIUS: f64 = 1e-4;

/// Largest discretisation tried before giving up.
pub const MAX_POINTS: usize = 1 << 16;

/// Line-integral refinement stops once doubling changes τ by less than this.
pub const REFINE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BerryMethod {
    LineIntegral,
    Holonomy,
}

impl BerryMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BerryMethod::LineIntegral => "line_integral",
            BerryMethod::Holonomy => "holonomy",
        }
    }
}

/// Counter-clockwise circle in the `(qx, qy)` plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopSpec {
    pub center: NuclearCoords,
    pub radius: f64,
    /// Starting number of points; refined as needed.
    pub n_points: usize,
    /// Angle of the first point on the circle.
    pub start: f64,
}

impl LoopSpec {
    pub fn new(center: NuclearCoords, radius: f64, n_points: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidLoop(format!("radius must be positive, got {radius}")));
        }
        if n_points < 16 {
            return Err(Error::InvalidLoop(format!("need at least 16 points, got {n_points}")));
        }
        Ok(Self {
            center,
            radius,
            n_points,
            start: 0.0,
        })
    }

    pub fn starting_at(mut self, angle: f64) -> Self {
        self.start = angle;
        self
    }

    /// Rejects the loop if it passes within [`EXCLUSION_RADIUS`] of any point.
    pub fn check_clear(&self, points: &[NuclearCoords]) -> Result<()> {
        for p in points {
            let d = (self.center.distance(p) - self.radius).abs();
            if d < EXCLUSION_RADIUS {
                return Err(Error::InvalidLoop(format!(
                    "loop passes {d:.2e} from the degeneracy at ({}, {})",
                    p.qx(),
                    p.qy()
                )));
            }
        }
        Ok(())
    }

    pub fn points(&self, n: usize) -> Result<Vec<NuclearCoords>> {
        circle_points(&self.center, self.radius, n, self.start)
    }

    /// Whether the loop encloses `p`.
    pub fn encloses(&self, p: &NuclearCoords) -> bool {
        self.center.distance(p) < self.radius
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BerryPhase {
    pub tau: f64,
    pub method: BerryMethod,
    /// Discretisation the result was obtained with.
    pub n_points: usize,
    /// Branch permutation after one loop (see [`PathTrace::permutation`]).
    pub permutation: Vec<usize>,
    pub pair: (usize, usize),
}

impl BerryPhase {
    pub fn swaps_pair(&self) -> bool {
        self.permutation[self.pair.0] == self.pair.1 && self.permutation[self.pair.1] == self.pair.0
    }
}

/// Tracks the loop, doubling the resolution while branch assignment is ambiguous.
fn tracked_loop(model: &Model, lp: &LoopSpec, mut n: usize) -> Result<(usize, PathTrace)> {
    loop {
        match track_along_path(model, &lp.points(n)?) {
            Ok(trace) => return Ok((n, trace)),
            Err(Error::Refinement { reason, .. }) => {
                if reason.contains("coalesce") {
                    return Err(Error::InvalidLoop(format!("loop passes through a degeneracy: {reason}")));
                }
                if 2 * n > MAX_POINTS {
                    return Err(Error::InvalidLoop(format!(
                        "branch tracking still ambiguous with {n} points: {reason}"
                    )));
                }
                n *= 2;
            }
            Err(e) => return Err(e),
        }
    }
}

fn line_sum(model: &Model, lp: &LoopSpec, trace: &PathTrace) -> Result<f64> {
    let n = trace.points.len() - 1;
    let dim = trace.dim();
    let axis = reference_axis(dim);
    let sigma = PairFrame::new(&real_polar(&trace.frames[0]).r, GAUGE_PAIR, &axis, None).sigma;
    let mut total = 0.0;
    for k in 0..n {
        let q = &trace.points[k];
        let t = lp.start + TAU * k as f64 / n as f64;
        let [dx, dy] = model.diabatic_gradient(q)?;
        let dm = dx.storage() * C64::new(-lp.radius * t.sin(), 0.0) + dy.storage() * C64::new(lp.radius * t.cos(), 0.0);
        let values = &trace.values[k];
        let f = frame_derivative(&trace.frames[k], values, &dm);
        let polar = real_polar(&trace.frames[k]);
        let frame = PairFrame::new(&polar.r, GAUGE_PAIR, &axis, Some(sigma));
        total += frame.connection(&polar.r, &polar.derivative(&f), GAUGE_PAIR, &axis);
    }
    Ok(total * TAU / n as f64)
}

fn holonomy(trace: &PathTrace) -> Result<f64> {
    let axis = reference_axis(trace.dim());
    let sigma = PairFrame::new(&real_polar(&trace.frames[0]).r, GAUGE_PAIR, &axis, None).sigma;
    let frames: Vec<PairFrame> = trace
        .frames
        .iter()
        .map(|t| PairFrame::new(&real_polar(t).r, GAUGE_PAIR, &axis, Some(sigma)))
        .collect();
    let (tau, tilt) = lifted_holonomy(&frames);
    if tilt > 1e-8 {
        return Err(Error::InvalidLoop(format!(
            "the pair plane does not close on itself (tilt {tilt:.2e}); a third state is involved"
        )));
    }
    Ok(tau)
}

fn check_model(model: &Model, lp: &LoopSpec) -> Result<()> {
    if model.order() == 3 {
        return Err(Error::Unsupported(
            "geometric phases need the full (qx, qy) model; third-order terms are slice-only".into(),
        ));
    }
    lp.check_clear(&[NuclearCoords::origin()])
}

/// Geometric phase `τ` of the two lowest states around `lp`.
pub fn berry_phase(model: &Model, lp: &LoopSpec, method: BerryMethod) -> Result<BerryPhase> {
    check_model(model, lp)?;
    let (n, trace) = tracked_loop(model, lp, lp.n_points)?;
    let (n, tau, trace) = match method {
        BerryMethod::Holonomy => {
            let tau = holonomy(&trace)?;
            (n, tau, trace)
        }
        BerryMethod::LineIntegral => {
            let mut n = n;
            let mut trace = trace;
            let mut tau = line_sum(model, lp, &trace)?;
            // two agreeing doublings in a row: a single one can be a coincidence
            // when a sharp feature is still under-resolved
            let mut agreed = 0;
            loop {
                if 2 * n > MAX_POINTS {
                    return Err(Error::InvalidLoop(format!(
                        "line integral not converged with {n} points (last value {tau})"
                    )));
                }
                let (m, finer) = tracked_loop(model, lp, 2 * n)?;
                let next = line_sum(model, lp, &finer)?;
                agreed = if (next - tau).abs() < REFINE_TOLERANCE { agreed + 1 } else { 0 };
                (n, tau, trace) = (m, next, finer);
                if agreed == 2 {
                    break;
                }
            }
            (n, tau, trace)
        }
    };
    Ok(BerryPhase {
        tau,
        method,
        n_points: n,
        permutation: trace.permutation.clone(),
        pair: GAUGE_PAIR,
    })
}

/// Distance between two phases modulo 4π (the period of the spin lift).
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(4.0 * PI);
    d.min(4.0 * PI - d)
}

/// Distance of `tau` from the nearest multiple of π/2.
pub fn quantization_error(tau: f64) -> f64 {
    let q = PI / 2.0;
    let r = tau.rem_euclid(q);
    r.min(q - r)
}
