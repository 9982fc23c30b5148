//! Conic-solver backend contract and the bundled Clarabel-based backend.
//!
//! Two capabilities are kept separate: the online MPC path needs only
//! convex-quadratic machinery (zero / nonnegative / second-order cones,
//! [`ConeSolver`]), while the offline terminal-ingredient synthesis also
//! needs semidefinite cones ([`SdpSolver`]). Problems are stated in the
//! standard conic form
//!
//! ```text
//! minimize    x' H x + c' x
//! subject to  A x + s = b,   s in K
//! ```
//!
//! with `K` a product of the cones listed in order.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One cone factor, dimensions in vectorised length (a PSD cone of matrix
/// order `n` occupies `n (n + 1) / 2` rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeSpec {
    Zero(usize),
    Nonnegative(usize),
    SecondOrder(usize),
    /// Symmetric `n x n` matrix constrained positive semidefinite, svec
    /// packed (upper triangle, column-major, off-diagonals scaled by √2).
    PsdTriangle(usize),
}

impl ConeSpec {
    pub fn rows(&self) -> usize {
        match self {
            ConeSpec::Zero(n) | ConeSpec::Nonnegative(n) | ConeSpec::SecondOrder(n) => *n,
            ConeSpec::PsdTriangle(n) => n * (n + 1) / 2,
        }
    }
}

/// A conic program under construction. Constraint rows are appended cone by
/// cone; the quadratic cost is given as `x' H x` (factor of 1/2 handled
/// internally).
#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub num_vars: usize,
    /// Upper-triangle triplets (row <= col) of the cost matrix H.
    pub cost_quad: Vec<(usize, usize, f64)>,
    pub cost_lin: Vec<f64>,
    pub a_triplets: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<ConeSpec>,
}

impl ConeProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            cost_quad: Vec::new(),
            cost_lin: vec![0.0; num_vars],
            a_triplets: Vec::new(),
            b: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Add `coeff * x_i x_j` (`i <= j`) to the cost.
    pub fn add_quad_cost(&mut self, i: usize, j: usize, coeff: f64) {
        debug_assert!(i <= j);
        if coeff != 0.0 {
            self.cost_quad.push((i, j, coeff));
        }
    }

    /// Add the quadratic form `v' W v` of an affine expression
    /// `v = M x_sel + off` where `x_sel` are the variables listed in `vars`
    /// (columns of `M`). Also accumulates the induced linear cost.
    pub fn add_quad_form(&mut self, vars: &[usize], m: &DMatrix<f64>, off: &DVector<f64>, w: &DMatrix<f64>) {
        let h = m.transpose() * w * m;
        for (ci, &vi) in vars.iter().enumerate() {
            for (cj, &vj) in vars.iter().enumerate() {
                if vi < vj {
                    self.add_quad_cost(vi, vj, h[(ci, cj)]);
                } else if vi == vj && ci == cj {
                    self.add_quad_cost(vi, vj, h[(ci, cj)]);
                } else if vi == vj && ci < cj {
                    // distinct columns mapping to one variable fold together
                    self.add_quad_cost(vi, vj, 2.0 * h[(ci, cj)]);
                }
            }
        }
        let lin = m.transpose() * w * off * 2.0;
        for (ci, &vi) in vars.iter().enumerate() {
            self.cost_lin[vi] += lin[ci];
        }
    }

    /// Append one constraint row `sum coeffs * x + s_row = rhs`; the cone
    /// membership of `s_row` is declared separately via [`push_cone`].
    pub fn push_row(&mut self, coeffs: &[(usize, f64)], rhs: f64) {
        let r = self.b.len();
        for &(c, v) in coeffs {
            if v != 0.0 {
                self.a_triplets.push((r, c, v));
            }
        }
        self.b.push(rhs);
    }

    /// Declare the cone of the most recently appended rows.
    pub fn push_cone(&mut self, cone: ConeSpec) {
        self.cones.push(cone);
    }

    fn validate(&self) -> Result<()> {
        let declared: usize = self.cones.iter().map(|c| c.rows()).sum();
        if declared != self.b.len() {
            return Err(Error::Solver(format!(
                "cone rows {declared} do not match constraint rows {}",
                self.b.len()
            )));
        }
        Ok(())
    }
}

/// Termination status of a conic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    AlmostOptimal,
    /// The solver stopped early but restored its best iterate; the returned
    /// point may still satisfy the constraints to working accuracy and is
    /// only accepted where an independent re-check gates it.
    Stalled,
    PrimalInfeasible,
    DualInfeasible,
    Failed,
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: u32,
}

impl ConeSolution {
    pub fn is_optimal(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }
}

/// Convex-quadratic conic capability: zero, nonnegative and second-order
/// cones. This is all the online MPC path ever links against.
pub trait ConeSolver: Sync {
    fn solve(&self, prog: &ConeProgram) -> Result<ConeSolution>;
}

/// Semidefinite capability on top of the quadratic one, for the offline
/// synthesis path.
pub trait SdpSolver: Sync {
    fn solve_sdp(&self, prog: &ConeProgram) -> Result<ConeSolution>;
}

/// Clarabel interior-point backend. Deterministic for fixed inputs and
/// settings.
#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub settings: BackendSettings,
}

#[derive(Debug, Clone)]
pub struct BackendSettings {
    pub max_iter: u32,
    pub tol_feas: f64,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub equilibrate: bool,
    pub verbose: bool,
    pub max_step_fraction: f64,
    pub static_regularization: f64,
    /// Retry failed or infeasible-flagged solves with alternative scaling
    /// settings; interior-point failure modes on small or oddly scaled
    /// instances are often cured by toggling equilibration or raising the
    /// static regularization, and a false infeasibility certificate is
    /// indistinguishable from a true one at this level.
    pub retry_ladder: bool,
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_feas: 1e-9,
            tol_gap_abs: 1e-10,
            tol_gap_rel: 1e-10,
            equilibrate: true,
            verbose: false,
            max_step_fraction: 0.99,
            static_regularization: 1e-8,
            retry_ladder: true,
        }
    }
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self { settings: BackendSettings::default() }
    }
}

impl ClarabelBackend {
    pub fn new(settings: BackendSettings) -> Self {
        Self { settings }
    }

    fn run(&self, prog: &ConeProgram, allow_psd: bool) -> Result<ConeSolution> {
        let first = self.run_once(prog, allow_psd, &self.settings)?;
        if first.is_optimal() || !self.settings.retry_ladder {
            return Ok(first);
        }
        let variants = [
            BackendSettings { equilibrate: !self.settings.equilibrate, ..self.settings.clone() },
            BackendSettings { static_regularization: 1e-7, ..self.settings.clone() },
            BackendSettings {
                equilibrate: !self.settings.equilibrate,
                static_regularization: 1e-7,
                ..self.settings.clone()
            },
        ];
        for settings in variants {
            let retry = self.run_once(prog, allow_psd, &settings)?;
            if retry.is_optimal() {
                return Ok(retry);
            }
        }
        Ok(first)
    }

    fn run_once(
        &self,
        prog: &ConeProgram,
        allow_psd: bool,
        settings: &BackendSettings,
    ) -> Result<ConeSolution> {
        prog.validate()?;
        if !allow_psd && prog.cones.iter().any(|c| matches!(c, ConeSpec::PsdTriangle(_))) {
            return Err(Error::Solver(
                "semidefinite cone passed to a quadratic-only solve".into(),
            ));
        }
        // Clarabel minimises 1/2 x'Px + q'x, so P carries 2H.
        let p = triplets_to_csc(
            prog.num_vars,
            prog.num_vars,
            prog.cost_quad.iter().map(|&(i, j, v)| (i, j, 2.0 * v)),
        );
        let a = triplets_to_csc(prog.num_rows(), prog.num_vars, prog.a_triplets.iter().cloned());
        let cones: Vec<SupportedConeT<f64>> = prog
            .cones
            .iter()
            .map(|c| match *c {
                ConeSpec::Zero(n) => SupportedConeT::ZeroConeT(n),
                ConeSpec::Nonnegative(n) => SupportedConeT::NonnegativeConeT(n),
                ConeSpec::SecondOrder(n) => SupportedConeT::SecondOrderConeT(n),
                ConeSpec::PsdTriangle(n) => SupportedConeT::PSDTriangleConeT(n),
            })
            .collect();
        let clarabel_settings = DefaultSettings {
            verbose: settings.verbose,
            max_iter: settings.max_iter,
            tol_feas: settings.tol_feas,
            tol_gap_abs: settings.tol_gap_abs,
            tol_gap_rel: settings.tol_gap_rel,
            equilibrate_enable: settings.equilibrate,
            max_step_fraction: settings.max_step_fraction,
            static_regularization_constant: settings.static_regularization,
            ..Default::default()
        };
        if settings.verbose {
            let amax = prog.a_triplets.iter().map(|t| t.2.abs()).fold(0.0f64, f64::max);
            let bmax = prog.b.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
            let pmax = prog.cost_quad.iter().map(|t| t.2.abs()).fold(0.0f64, f64::max);
            let qmax = prog.cost_lin.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
            let bad = prog
                .a_triplets
                .iter()
                .map(|t| t.2)
                .chain(prog.b.iter().cloned())
                .chain(prog.cost_quad.iter().map(|t| t.2))
                .any(|v| !v.is_finite());
            eprintln!(
                "cone program: vars {} rows {} |A|max {amax:.3e} |b|max {bmax:.3e}                  |P|max {pmax:.3e} |q|max {qmax:.3e} nonfinite {bad}",
                prog.num_vars,
                prog.num_rows()
            );
        }
        let mut solver =
            DefaultSolver::new(&p, &prog.cost_lin, &a, &prog.b, &cones, clarabel_settings)
                .map_err(|e| Error::Solver(format!("problem rejected: {e:?}")))?;
        solver.solve();
        let status = match solver.solution.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::PrimalInfeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::DualInfeasible
            }
            SolverStatus::InsufficientProgress | SolverStatus::MaxIterations => {
                SolveStatus::Stalled
            }
            _ => SolveStatus::Failed,
        };
        Ok(ConeSolution {
            x: DVector::from_vec(solver.solution.x.clone()),
            objective: solver.solution.obj_val,
            status,
            iterations: solver.solution.iterations,
        })
    }
}

impl ConeSolver for ClarabelBackend {
    fn solve(&self, prog: &ConeProgram) -> Result<ConeSolution> {
        self.run(prog, false)
    }
}

impl SdpSolver for ClarabelBackend {
    fn solve_sdp(&self, prog: &ConeProgram) -> Result<ConeSolution> {
        self.run(prog, true)
    }
}

fn triplets_to_csc(
    nrows: usize,
    ncols: usize,
    triplets: impl Iterator<Item = (usize, usize, f64)>,
) -> CscMatrix<f64> {
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
    for (r, c, v) in triplets {
        debug_assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
        cols[c].push((r, v));
    }
    let mut colptr = Vec::with_capacity(ncols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in &mut cols {
        col.sort_unstable_by_key(|(r, _)| *r);
        let mut last: Option<usize> = None;
        for &(r, v) in col.iter() {
            if last == Some(r) {
                let n = nzval.len();
                nzval[n - 1] += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                last = Some(r);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(nrows, ncols, colptr, rowval, nzval)
}

/// svec packing of the upper triangle of a symmetric matrix entry:
/// off-diagonal entries carry the √2 scaling.
pub fn svec_scale(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        std::f64::consts::SQRT_2
    }
}

/// Row of the (i, j) upper-triangle entry (i <= j) in svec packing.
pub fn svec_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// min (x-1)^2 + (y-2)^2 s.t. x + y = 2, x >= 0, y >= 0
    #[test]
    fn tiny_equality_qp() {
        let mut prog = ConeProgram::new(2);
        prog.add_quad_cost(0, 0, 1.0);
        prog.add_quad_cost(1, 1, 1.0);
        prog.cost_lin = vec![-2.0, -4.0];
        prog.push_row(&[(0, 1.0), (1, 1.0)], 2.0);
        prog.push_cone(ConeSpec::Zero(1));
        prog.push_row(&[(0, -1.0)], 0.0);
        prog.push_row(&[(1, -1.0)], 0.0);
        prog.push_cone(ConeSpec::Nonnegative(2));
        let sol = ClarabelBackend::default().solve(&prog).unwrap();
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.x[1], 1.5, epsilon = 1e-7);
    }

    /// min x s.t. ||(x, 1)|| <= 2  ->  x = -sqrt(3)
    #[test]
    fn tiny_socp() {
        let mut prog = ConeProgram::new(1);
        prog.cost_lin = vec![1.0];
        prog.push_row(&[], 2.0);
        prog.push_row(&[(0, -1.0)], 0.0);
        prog.push_row(&[], 1.0);
        prog.push_cone(ConeSpec::SecondOrder(3));
        let sol = ClarabelBackend::default().solve(&prog).unwrap();
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.x[0], -(3f64.sqrt()), epsilon = 1e-7);
    }

    /// min x s.t. [[x, 1], [1, x]] psd  ->  x = 1
    #[test]
    fn tiny_sdp() {
        let mut prog = ConeProgram::new(1);
        prog.cost_lin = vec![1.0];
        prog.push_row(&[(0, -svec_scale(0, 0))], 0.0);
        prog.push_row(&[], svec_scale(0, 1));
        prog.push_row(&[(0, -svec_scale(1, 1))], 0.0);
        prog.push_cone(ConeSpec::PsdTriangle(2));
        let sol = SdpSolver::solve_sdp(&ClarabelBackend::default(), &prog).unwrap();
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn quadratic_solver_rejects_psd_cones() {
        let mut prog = ConeProgram::new(1);
        prog.push_row(&[(0, -1.0)], 0.0);
        prog.push_cone(ConeSpec::PsdTriangle(1));
        assert!(ClarabelBackend::default().solve(&prog).is_err());
    }

    #[test]
    fn infeasible_program_is_reported() {
        let mut prog = ConeProgram::new(1);
        prog.push_row(&[(0, 1.0)], 0.0);
        prog.push_row(&[(0, 1.0)], 1.0);
        prog.push_cone(ConeSpec::Zero(2));
        let sol = ClarabelBackend::default().solve(&prog).unwrap();
        assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn svec_indexing_is_column_major_upper() {
        assert_eq!(svec_index(0, 0), 0);
        assert_eq!(svec_index(0, 1), 1);
        assert_eq!(svec_index(1, 1), 2);
        assert_eq!(svec_index(0, 2), 3);
        assert_eq!(svec_index(1, 2), 4);
        assert_eq!(svec_index(2, 2), 5);
    }

    #[test]
    fn duplicate_triplets_accumulate() {
        let m = triplets_to_csc(2, 1, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0)].into_iter());
        assert_eq!(m.nzval, vec![3.0, 1.0]);
    }
}
