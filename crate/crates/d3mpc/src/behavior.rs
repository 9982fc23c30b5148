//! Model-free trajectory machinery: the distributed fundamental-lemma
//! predictor and data-driven simulation.
//!
//! Both operations treat a subsystem as a map from its own inputs and its
//! neighbours' outputs to its own outputs. There is no feed-through from
//! neighbour outputs, so a window of length `W` pairs an own-signal range
//! `[0, W-1]` with a neighbour range `[0, W-2]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::plant::DataSet;
use crate::signals::{build_hankel, Trajectory};

/// Relative singular-value cutoff used by the least-squares solves.
const LSTSQ_RANK_TOL: f64 = 1e-11;

/// Signal dimensions of one subsystem's predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictorDims {
    pub input_dim: usize,
    pub output_dim: usize,
    pub neighbor_dim: usize,
    pub lag: usize,
    pub horizon: usize,
}

/// Hankel-matrix parametrisation of one subsystem's trajectories, built once
/// from recorded data. The stored blocks are at the depths used by the local
/// MPC problem (`horizon + lag` for own signals, one less for neighbour
/// outputs); other depths are built on demand from the retained data.
#[derive(Debug, Clone)]
pub struct BehavioralPredictor {
    data: DataSet,
    dims: PredictorDims,
    h_u: DMatrix<f64>,
    h_yn: DMatrix<f64>,
    h_y: DMatrix<f64>,
}

/// Outcome of a trajectory membership check.
#[derive(Debug, Clone)]
pub struct TrajectoryCheck {
    pub consistent: bool,
    pub residual: f64,
    /// Minimum-norm combination witness when consistent.
    pub witness: Option<DVector<f64>>,
}

impl BehavioralPredictor {
    pub fn new(data: DataSet, lag: usize, horizon: usize) -> Result<Self> {
        if lag == 0 {
            return Err(Error::Parameter("lag must be positive".into()));
        }
        if horizon <= lag {
            return Err(Error::Parameter(format!(
                "prediction horizon {horizon} must exceed lag {lag}"
            )));
        }
        let n_data = data.len();
        let depth = horizon + lag;
        if n_data < depth + 1 {
            return Err(Error::Dimension(format!(
                "data length {n_data} too short for Hankel depth {depth}"
            )));
        }
        let dims = PredictorDims {
            input_dim: data.u.dim(),
            output_dim: data.y.dim(),
            neighbor_dim: data.y_neighbors.dim(),
            lag,
            horizon,
        };
        let h_u = build_hankel(&data.u, depth)?.entries().clone();
        let yn_trunc = data.y_neighbors.window(0, n_data as i64 - 2)?;
        let h_yn = build_hankel(&yn_trunc, depth - 1)?.entries().clone();
        let h_y = build_hankel(&data.y, depth)?.entries().clone();
        debug_assert_eq!(h_u.ncols(), h_yn.ncols());
        debug_assert_eq!(h_u.ncols(), h_y.ncols());
        Ok(Self { data, dims, h_u, h_yn, h_y })
    }

    pub fn dims(&self) -> PredictorDims {
        self.dims
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }

    /// Number of combination coefficients in the MPC-depth parametrisation.
    pub fn coeff_len(&self) -> usize {
        self.h_u.ncols()
    }

    /// MPC-depth Hankel block of the recorded inputs.
    pub fn hankel_u(&self) -> &DMatrix<f64> {
        &self.h_u
    }

    /// MPC-depth Hankel block of the recorded neighbour outputs.
    pub fn hankel_yn(&self) -> &DMatrix<f64> {
        &self.h_yn
    }

    /// MPC-depth Hankel block of the recorded own outputs.
    pub fn hankel_y(&self) -> &DMatrix<f64> {
        &self.h_y
    }

    /// Decide whether `(u, y_n, y)` is a trajectory of the subsystem: solve
    /// the window-depth Hankel system in least squares and compare the
    /// residual with `tol`. The three signals share a start index; `y_n`
    /// is one sample shorter than `u` and `y`.
    pub fn check_trajectory(
        &self,
        u: &Trajectory,
        y_n: &Trajectory,
        y: &Trajectory,
        tol: f64,
    ) -> Result<TrajectoryCheck> {
        let w = u.len();
        if w < 2 {
            return Err(Error::Dimension("trajectory check window too short".into()));
        }
        if y.len() != w || y.start() != u.start() {
            return Err(Error::Dimension("output window misaligned with input window".into()));
        }
        if y_n.len() != w - 1 || y_n.start() != u.start() {
            return Err(Error::Dimension(
                "neighbour window must cover one sample less than the input window".into(),
            ));
        }
        if u.dim() != self.dims.input_dim
            || y.dim() != self.dims.output_dim
            || y_n.dim() != self.dims.neighbor_dim
        {
            return Err(Error::Dimension("trajectory check dims mismatch".into()));
        }
        let n_data = self.data.len();
        if n_data < w {
            return Err(Error::Dimension("window exceeds data length".into()));
        }
        let hu = build_hankel(&self.data.u, w)?;
        let hyn = build_hankel(&self.data.y_neighbors.window(0, n_data as i64 - 2)?, w - 1)?;
        let hy = build_hankel(&self.data.y, w)?;
        let a = vstack(&[hu.entries(), hyn.entries(), hy.entries()]);
        let b = concat_vecs(&[
            u.stacked(u.start(), u.end())?,
            y_n.stacked(y_n.start(), y_n.end())?,
            y.stacked(y.start(), y.end())?,
        ]);
        let (alpha, residual) = linalg::lstsq_min_norm(&a, &b, LSTSQ_RANK_TOL);
        let consistent = residual <= tol;
        Ok(TrajectoryCheck {
            consistent,
            residual,
            witness: consistent.then_some(alpha),
        })
    }

    /// Data-driven simulation over the horizon given by `new_u`. See
    /// [`simulate`].
    pub fn simulate(
        &self,
        u_init: &Trajectory,
        y_init: &Trajectory,
        yn_window: &Trajectory,
        new_u: &Trajectory,
        tol: f64,
    ) -> Result<Trajectory> {
        simulate(&self.data, self.dims.lag, u_init, y_init, yn_window, new_u, tol)
    }
}

/// Data-driven simulation.
///
/// Given an initial window of measured inputs and outputs over
/// `[s-lag, s-1]`, a neighbour-output window over `[s-lag, s+H-2]` and new
/// inputs over `[s, s+H-1]` (absolute indices, `s = new_u.start()`,
/// `H = new_u.len()`), computes the subsystem's output response over
/// `[s, s+H-1]` from recorded data alone:
///
/// 1. solve the stacked Hankel system pinning inputs, neighbour outputs and
///    the initial output window for a minimum-norm coefficient vector;
/// 2. read the outputs off the shifted output Hankel block.
///
/// The initial window must be an exact subsystem trajectory; a least-squares
/// residual above `tol` raises an inconsistent-initialization error.
pub fn simulate(
    data: &DataSet,
    lag: usize,
    u_init: &Trajectory,
    y_init: &Trajectory,
    yn_window: &Trajectory,
    new_u: &Trajectory,
    tol: f64,
) -> Result<Trajectory> {
    let horizon = new_u.len();
    let s = new_u.start();
    let n = lag as i64;
    let n_data = data.len() as i64;
    if (data.len() as i64) < (horizon + lag) as i64 {
        return Err(Error::Dimension("data too short for requested horizon".into()));
    }
    let u_all = concat_vecs(&[u_init.stacked(s - n, s - 1)?, new_u.stacked(s, s + horizon as i64 - 1)?]);
    let yn_all = yn_window.stacked(s - n, s + horizon as i64 - 2)?;
    let y_past = y_init.stacked(s - n, s - 1)?;

    let h_u = build_hankel(&data.u, horizon + lag)?;
    let h_yn = build_hankel(&data.y_neighbors.window(0, n_data - 2)?, horizon + lag - 1)?;
    let h_y_past = build_hankel(&data.y.window(0, n_data - 1 - horizon as i64)?, lag)?;
    let a = vstack(&[h_u.entries(), h_yn.entries(), h_y_past.entries()]);
    let b = concat_vecs(&[u_all, yn_all, y_past]);
    let (alpha, residual) = linalg::lstsq_min_norm(&a, &b, LSTSQ_RANK_TOL);
    if residual > tol {
        return Err(Error::InconsistentInitialization { residual, tol });
    }

    let h_y_out = build_hankel(&data.y.window(n, n_data - 1)?, horizon)?;
    let y_flat = h_y_out.entries() * alpha;
    let p = data.y.dim();
    let mut out = DMatrix::zeros(p, horizon);
    for k in 0..horizon {
        out.set_column(k, &y_flat.rows(k * p, p));
    }
    Trajectory::from_matrix(s, out)
}

fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

fn concat_vecs(parts: &[DVector<f64>]) -> DVector<f64> {
    let len: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.len()).copy_from(p);
        r += p.len();
    }
    out
}
