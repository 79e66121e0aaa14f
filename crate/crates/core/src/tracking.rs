//! Continuation of eigenbranches along a path of geometries.

use nalgebra::Matrix3;

use crate::coords::NuclearCoords;
use crate::eigen::{eig_complex_symmetric, Eigensystem};
use crate::error::{Error, Result};
use crate::params::{Model, C64};

/// Overlaps below this (or competing overlaps above it) make an assignment ambiguous.
pub const OVERLAP_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct PathTrace {
    pub points: Vec<NuclearCoords>,
    /// `values[p][b]`: branch `b` at point `p`.
    pub values: Vec<Vec<C64>>,
    /// Overlap-tracked right-eigenvector matrices with continuous signs.
    pub frames: Vec<Matrix3<C64>>,
    /// `frames` after the single-valued gauge of the two lowest branches.
    pub smoothed: Vec<Matrix3<C64>>,
    /// `permutation[b]` is the label (ascending real part) that tracked branch
    /// `b` carries at the final point.
    pub permutation: Vec<usize>,
}

impl PathTrace {
    pub fn dim(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// Branches exchanged between start and end, as `(from, to)` pairs.
    pub fn swaps(&self) -> Vec<(usize, usize)> {
        self.permutation
            .iter()
            .enumerate()
            .filter(|(i, p)| *i != **p)
            .map(|(i, &p)| (i, p))
            .collect()
    }
}

fn permutations(dim: usize) -> Vec<Vec<usize>> {
    if dim == 2 {
        vec![vec![0, 1], vec![1, 0]]
    } else {
        vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ]
    }
}

/// Reorders and re-signs `next` so its columns continue those of `prev`.
///
/// Returns the permutation used (`perm[b]` = column of `next` assigned to
/// branch `b`) or a description of why the assignment is ambiguous.
pub(crate) fn align(prev: &Matrix3<C64>, next: &mut Eigensystem) -> std::result::Result<Vec<usize>, String> {
    let dim = next.dim();
    let overlap = prev.transpose() * next.vectors;
    let mags = overlap.map(|z| z.norm());
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(dim) {
        let score: f64 = (0..dim).map(|i| mags[(i, perm[i])].max(1e-300).ln()).sum();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, perm));
        }
    }
    let (_, perm) = best.expect("non-empty permutation set");
    for i in 0..dim {
        let chosen = mags[(i, perm[i])];
        if chosen < OVERLAP_THRESHOLD {
            return Err(format!("branch {i} has maximal overlap {chosen:.3e}"));
        }
        for j in 0..dim {
            if j != perm[i] && mags[(i, j)] >= OVERLAP_THRESHOLD {
                return Err(format!("branch {i} overlaps columns {} and {j}", perm[i]));
            }
        }
    }
    let old_vectors = next.vectors;
    let old_values = next.values.clone();
    let old_rig = next.phase_rigidity.clone();
    let old_norm = next.normalized.clone();
    for i in 0..dim {
        let mut col = old_vectors.column(perm[i]).into_owned();
        if overlap[(i, perm[i])].re < 0.0 {
            col = -col;
        }
        next.vectors.set_column(i, &col);
        next.values[i] = old_values[perm[i]];
        next.phase_rigidity[i] = old_rig[perm[i]];
        next.normalized[i] = old_norm[perm[i]];
    }
    for p in next.pairs.iter_mut() {
        let a = perm.iter().position(|&x| x == p.i).expect("perm");
        let b = perm.iter().position(|&x| x == p.j).expect("perm");
        (p.i, p.j) = if a < b { (a, b) } else { (b, a) };
    }
    Ok(perm)
}

/// Eigensystem at `q` aligned to a reference frame; used by finite-difference stencils.
pub(crate) fn aligned_eigensystem(model: &Model, q: &NuclearCoords, reference: &Matrix3<C64>) -> std::result::Result<Eigensystem, String> {
    let mut es = eig_complex_symmetric(&model.diabatic(q).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    align(reference, &mut es)?;
    Ok(es)
}

/// Follows every branch from `points[0]` to the last point by maximal overlap.
pub fn track_along_path(model: &Model, points: &[NuclearCoords]) -> Result<PathTrace> {
    if points.len() < 2 {
        return Err(Error::Domain("a path needs at least two points".into()));
    }
    let first = eig_complex_symmetric(&model.diabatic(&points[0])?)?;
    let dim = first.dim();
    if first.any_coalesced() {
        return Err(Error::Refinement {
            segment: (0, 0),
            reason: "path starts at a coalescence".into(),
        });
    }
    let mut values = vec![first.values.clone()];
    let mut frames = vec![first.vectors];
    for k in 1..points.len() {
        let mut es = eig_complex_symmetric(&model.diabatic(&points[k])?)?;
        if es.any_coalesced() {
            return Err(Error::Refinement {
                segment: (k - 1, k),
                reason: "eigenvectors coalesce at this point".into(),
            });
        }
        align(&frames[k - 1], &mut es).map_err(|reason| Error::Refinement {
            segment: (k - 1, k),
            reason,
        })?;
        values.push(es.values.clone());
        frames.push(es.vectors);
    }

    // Label of each tracked branch in the standalone ordering at the end.
    let last = points.len() - 1;
    let mut end = eig_complex_symmetric(&model.diabatic(&points[last])?)?;
    let inv = align(&frames[last], &mut end).map_err(|reason| Error::Refinement {
        segment: (last, last),
        reason,
    })?;
    let permutation = inv;

    let smoothed = crate::nac::gauge_smooth(&frames, dim, (0, 1))?;
    Ok(PathTrace {
        points: points.to_vec(),
        values,
        frames,
        smoothed,
        permutation,
    })
}

/// Points on a counter-clockwise circle, first point at angle `start`,
/// closing back on it (`n + 1` points).
pub fn circle_points(center: &NuclearCoords, radius: f64, n: usize, start: f64) -> Result<Vec<NuclearCoords>> {
    (0..=n)
        .map(|i| {
            let t = start + std::f64::consts::TAU * (i % n) as f64 / n as f64;
            NuclearCoords::cartesian(center.qx() + radius * t.cos(), center.qy() + radius * t.sin())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::published;

    #[test]
    fn constant_path_is_identity() {
        let model = Model::Pjt(published::pjt_second_order());
        let q = NuclearCoords::polar(0.2, 0.3).unwrap();
        let trace = track_along_path(&model, &[q, q, q]).unwrap();
        assert!(trace.is_identity());
        assert_eq!(trace.frames[0], trace.frames[2]);
        assert_eq!(trace.smoothed[0], trace.frames[0]);
    }

    #[test]
    fn small_arc_is_identity() {
        let model = Model::Pjt(published::pjt_second_order());
        let pts: Vec<_> = (0..50)
            .map(|i| NuclearCoords::polar(0.107, 0.2 + 0.004 * i as f64).unwrap())
            .collect();
        let trace = track_along_path(&model, &pts).unwrap();
        assert!(trace.is_identity());
    }

    #[test]
    fn single_point_is_rejected() {
        let model = Model::Jt(published::jt_second_order());
        assert!(track_along_path(&model, &[NuclearCoords::origin()]).is_err());
    }

    #[test]
    fn coarse_steps_request_refinement() {
        let model = Model::Jt(published::jt_second_order());
        let pts = circle_points(&NuclearCoords::origin(), 0.05, 3, 0.0).unwrap();
        match track_along_path(&model, &pts) {
            Err(Error::Refinement { .. }) => {}
            other => panic!("expected refinement request, got {other:?}"),
        }
    }

    #[test]
    fn origin_loop_keeps_labels_but_flips_signs() {
        let model = Model::Jt(published::jt_second_order());
        let pts = circle_points(&NuclearCoords::origin(), 0.05, 256, 0.0).unwrap();
        let trace = track_along_path(&model, &pts).unwrap();
        assert!(trace.is_identity());
        let n = trace.frames.len() - 1;
        let d = trace.frames[n] + trace.frames[0];
        assert!(d.fixed_view::<2, 2>(0, 0).norm() < 1e-10);
    }
}
