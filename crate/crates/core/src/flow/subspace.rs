use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{asymptotic_limits, check_dimensions, ode, FlowError, LinearFamily};
use crate::linalg::{align_frame, align_unchecked, gap_distance, Frame, LinalgError};

/// Largest gap allowed between consecutive samples of a [`SubspacePath`].
pub const MAX_STEP_GAP: f64 = 0.2;
const MAX_REFINE_ROUNDS: usize = 12;
const HORIZON_DRIFT_TOL: f64 = 1e-8;
const HORIZON_DOUBLINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Stable,
    Unstable,
}

/// Samples of a continuous path of subspaces with aligned frames.
#[derive(Debug, Clone)]
pub struct SubspacePath {
    grid: Vec<f64>,
    frames: Vec<Frame>,
}

impl SubspacePath {
    /// Builds a path from frames sampled on `grid`, aligning each frame to its
    /// predecessor.
    pub fn from_frames(grid: Vec<f64>, frames: Vec<Frame>) -> Result<Self, LinalgError> {
        if grid.len() != frames.len() || grid.is_empty() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} grid points for {} frames",
                grid.len(),
                frames.len()
            )));
        }
        let mut aligned: Vec<Frame> = Vec::with_capacity(frames.len());
        for f in frames {
            match aligned.last() {
                None => aligned.push(f),
                Some(prev) => {
                    let a = align_frame(prev, &f)?;
                    aligned.push(a);
                }
            }
        }
        Ok(SubspacePath {
            grid,
            frames: aligned,
        })
    }

    pub(crate) fn from_aligned(grid: Vec<f64>, frames: Vec<Frame>) -> Self {
        debug_assert_eq!(grid.len(), frames.len());
        SubspacePath { grid, frames }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.frames[0].ambient_dim()
    }

    pub fn first(&self) -> &Frame {
        &self.frames[0]
    }

    pub fn last(&self) -> &Frame {
        self.frames.last().expect("non-empty path")
    }

    /// Largest gap between consecutive samples.
    pub fn max_step_gap(&self) -> f64 {
        self.frames
            .windows(2)
            .map(|w| gap_distance(&w[0], &w[1]).unwrap_or(1.0))
            .fold(0.0, f64::max)
    }

    /// The path at an arbitrary parameter in its range: linear interpolation
    /// between the neighbouring aligned frames, re-orthonormalized. Adjacent
    /// samples are less than [`MAX_STEP_GAP`]-ish apart, so the interpolant has
    /// full rank and is a continuous path through every sample.
    pub fn at(&self, t: f64) -> Result<Frame, LinalgError> {
        let g = &self.grid;
        let (lo, hi) = (g[0].min(g[g.len() - 1]), g[0].max(g[g.len() - 1]));
        let slack = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(LinalgError::DimensionMismatch(format!(
                "parameter {t} outside the sampled range [{lo}, {hi}]"
            )));
        }
        if g.len() == 1 {
            return Ok(self.frames[0].clone());
        }
        let increasing = g[1] > g[0];
        // Index of the first sample not before t in traversal order.
        let idx = if increasing {
            g.partition_point(|&x| x < t)
        } else {
            g.partition_point(|&x| x > t)
        };
        if idx == 0 {
            return Ok(self.frames[0].clone());
        }
        if idx >= g.len() {
            return Ok(self.last().clone());
        }
        if g[idx] == t {
            return Ok(self.frames[idx].clone());
        }
        let (t0, t1) = (g[idx - 1], g[idx]);
        let s = (t - t0) / (t1 - t0);
        let m = self.frames[idx - 1].matrix() * (1.0 - s) + self.frames[idx].matrix() * s;
        Frame::orthonormalize(&m)
    }

    /// Same samples traversed backwards, on the parameter `-t`.
    pub fn reversed(&self) -> SubspacePath {
        SubspacePath {
            grid: self.grid.iter().rev().map(|t| -t).collect(),
            frames: self.frames.iter().rev().cloned().collect(),
        }
    }

    /// Relabels the parameter by a monotone map.
    pub fn reparametrized(&self, phi: impl Fn(f64) -> f64) -> SubspacePath {
        SubspacePath {
            grid: self.grid.iter().map(|&t| phi(t)).collect(),
            frames: self.frames.clone(),
        }
    }
}

/// `E^s_lambda` (`Which::Stable`) or `E^u_lambda` sampled on `grid`.
///
/// The stable path is started from `V^-(S^+)` at `max(t_max, grid end)` and
/// integrated backward; the unstable path from `V^+(S^-)` at
/// `min(-t_max, grid start)` forward. Frames are re-orthonormalized and
/// aligned after every step. Intervals whose end frames are more than
/// [`MAX_STEP_GAP`] apart are bisected.
pub fn invariant_subspace_path(
    fam: &LinearFamily,
    lambda: f64,
    which: Which,
    grid: &[f64],
) -> Result<SubspacePath, FlowError> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(FlowError::Invalid(
            "grid must be non-empty and strictly increasing".into(),
        ));
    }
    let lim = asymptotic_limits(fam, lambda)?;
    check_dimensions(fam, &lim)?;
    let mut grid = grid.to_vec();
    for _ in 0..MAX_REFINE_ROUNDS {
        let frames = propagate(fam, lambda, which, &lim, &grid)?;
        let mut refined = Vec::with_capacity(grid.len());
        let mut split = false;
        for i in 0..grid.len() {
            refined.push(grid[i]);
            if i + 1 < grid.len() && gap_distance(&frames[i], &frames[i + 1])? >= MAX_STEP_GAP {
                refined.push(0.5 * (grid[i] + grid[i + 1]));
                split = true;
            }
        }
        if !split {
            return Ok(SubspacePath::from_aligned(grid, frames));
        }
        grid = refined;
    }
    Err(FlowError::Invalid(
        "subspace path still too coarse after refinement".into(),
    ))
}

fn propagate(
    fam: &LinearFamily,
    lambda: f64,
    which: Which,
    lim: &super::AsymptoticLimits,
    grid: &[f64],
) -> Result<Vec<Frame>, FlowError> {
    let post = |prev: &DMatrix<f64>, next: &mut DMatrix<f64>| -> Result<(), FlowError> {
        let canon = Frame::orthonormalize(next)?;
        let aligned = align_unchecked(&Frame::from_orthonormal(prev.clone()), &canon);
        *next = aligned.into_matrix();
        Ok(())
    };
    let s = |t: f64| fam.matrix(lambda, t);
    match which {
        Which::Stable => {
            let start = fam.t_max.max(*grid.last().unwrap());
            let init = lim.split_plus.v_minus.matrix().clone();
            let targets: Vec<f64> = grid.iter().rev().copied().collect();
            let out = ode::integrate(s, init, start, &targets, &fam.integrator, post)?;
            Ok(out
                .into_iter()
                .rev()
                .map(Frame::from_orthonormal)
                .collect())
        }
        Which::Unstable => {
            let start = (-fam.t_max).min(grid[0]);
            let init = lim.split_minus.v_plus.matrix().clone();
            let out = ode::integrate(s, init, start, grid, &fam.integrator, post)?;
            Ok(out.into_iter().map(Frame::from_orthonormal).collect())
        }
    }
}

/// `E^s_lambda(t)`.
pub fn stable_subspace(fam: &LinearFamily, lambda: f64, t: f64) -> Result<Frame, FlowError> {
    let p = invariant_subspace_path(fam, lambda, Which::Stable, &[t])?;
    Ok(p.frames[0].clone())
}

/// `E^u_lambda(t)`.
pub fn unstable_subspace(fam: &LinearFamily, lambda: f64, t: f64) -> Result<Frame, FlowError> {
    let p = invariant_subspace_path(fam, lambda, Which::Unstable, &[t])?;
    Ok(p.frames[0].clone())
}

/// Doubles `t_max` (at most three times) until the limits stabilize and
/// `E^s(0)`, `E^u(0)` computed from `T` and `2T` agree to `1e-8`. Returns the
/// family with the resolved horizon.
pub fn resolve_horizon(fam: &LinearFamily, lambda: f64) -> Result<LinearFamily, FlowError> {
    let mut t = fam.t_max;
    let mut last_err = None;
    for _ in 0..=HORIZON_DOUBLINGS {
        let here = fam.clone().with_t_max(t);
        let there = fam.clone().with_t_max(2.0 * t);
        let attempt = (|| -> Result<f64, FlowError> {
            asymptotic_limits(&here, lambda)?;
            let ds = gap_distance(
                &stable_subspace(&here, lambda, 0.0)?,
                &stable_subspace(&there, lambda, 0.0)?,
            )?;
            let du = gap_distance(
                &unstable_subspace(&here, lambda, 0.0)?,
                &unstable_subspace(&there, lambda, 0.0)?,
            )?;
            Ok(ds.max(du))
        })();
        match attempt {
            Ok(drift) if drift < HORIZON_DRIFT_TOL => return Ok(here),
            Ok(drift) => {
                last_err = Some(FlowError::HorizonNotResolved { t_max: t, drift });
            }
            Err(e @ FlowError::NotStabilized { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
        t *= 2.0;
    }
    Err(last_err.expect("at least one attempt"))
}
