//! One subsystem's controller: the local MPC problem, the one-step
//! trajectory extension and the shifted-candidate construction.
//!
//! All trajectories carry absolute time indices. A solve at time `t` spans
//! predicted indices `[t-lag, t+horizon-1]`; the received neighbour window
//! spans the same range (the sender's solution shifted by one step), and
//! the one-step extension lives at `t+horizon`.

use nalgebra::{DMatrix, DVector};

use crate::behavior::{self, BehavioralPredictor};
use crate::error::{ConstraintViolation, Error, Result};
use crate::linalg;
use crate::plant::InputBox;
use crate::signals::Trajectory;
use crate::solver::{ConeProgram, ConeSolution, ConeSolver, ConeSpec};
use crate::terminal::TerminalIngredients;

/// Numerical tolerances of the online path.
#[derive(Debug, Clone)]
pub struct AgentTolerances {
    /// Residual bound of the data-driven simulations.
    pub sim_tol: f64,
    /// Tolerance of the independent constraint re-checker.
    pub recheck_tol: f64,
}

impl Default for AgentTolerances {
    fn default() -> Self {
        Self { sim_tol: 1e-7, recheck_tol: 1e-6 }
    }
}

/// Immutable per-subsystem controller configuration.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub id: usize,
    pub lag: usize,
    pub horizon: usize,
    pub q_weight: DMatrix<f64>,
    pub r_weight: DMatrix<f64>,
    /// Consistency slack.
    pub omega: f64,
    pub input_box: InputBox,
    pub terminal: TerminalIngredients,
    pub predictor: BehavioralPredictor,
    pub tolerances: AgentTolerances,
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = self.predictor.dims();
        if self.lag != dims.lag || self.horizon != dims.horizon {
            return Err(Error::Dimension("predictor window mismatch".into()));
        }
        if self.horizon <= self.lag {
            return Err(Error::Parameter("prediction horizon must exceed the lag".into()));
        }
        if self.omega < 0.0 {
            return Err(Error::Parameter("consistency slack must be nonnegative".into()));
        }
        if self.q_weight.nrows() != dims.output_dim || self.r_weight.nrows() != dims.input_dim {
            return Err(Error::Dimension("weight dims mismatch".into()));
        }
        if self.input_box.dim() != dims.input_dim {
            return Err(Error::Dimension("input box dim mismatch".into()));
        }
        self.terminal.validate()?;
        let t_dims = self.terminal.dims;
        if t_dims.lag != self.lag
            || t_dims.input_dim != dims.input_dim
            || t_dims.output_dim != dims.output_dim
            || t_dims.neighbor_dim != dims.neighbor_dim
        {
            return Err(Error::Dimension("terminal ingredient dims mismatch".into()));
        }
        Ok(())
    }

    fn dims(&self) -> crate::behavior::PredictorDims {
        self.predictor.dims()
    }
}

/// Stacked neighbour predictions covering `[t-lag, t+horizon-1]` for a solve
/// at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTrajectory {
    pub values: Trajectory,
}

impl NeighborTrajectory {
    pub fn validate_for(&self, cfg: &AgentConfig, t: i64) -> Result<()> {
        let dims = cfg.dims();
        if self.values.dim() != dims.neighbor_dim {
            return Err(Error::Dimension(format!(
                "neighbour window dim {} != {}",
                self.values.dim(),
                dims.neighbor_dim
            )));
        }
        let (a, b) = (t - cfg.lag as i64, t + cfg.horizon as i64 - 1);
        if self.values.start() > a || self.values.end() < b {
            return Err(Error::Window(format!(
                "neighbour window [{}, {}] does not cover [{a}, {b}]",
                self.values.start(),
                self.values.end()
            )));
        }
        Ok(())
    }
}

/// The consistency reference of one solve: the feasible candidate and the
/// previous solution shifted by one step (including its extension), both
/// over `[t, t+horizon-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReference {
    pub u_hat: Trajectory,
    pub y_hat: Trajectory,
    pub u_prev: Trajectory,
    pub y_prev: Trajectory,
}

impl ConsistencyReference {
    fn validate_for(&self, cfg: &AgentConfig, t: i64) -> Result<()> {
        let b = t + cfg.horizon as i64 - 1;
        for (name, tr) in [
            ("u_hat", &self.u_hat),
            ("y_hat", &self.y_hat),
            ("u_prev", &self.u_prev),
            ("y_prev", &self.y_prev),
        ] {
            if tr.start() > t || tr.end() < b {
                return Err(Error::Window(format!(
                    "reference {name} [{}, {}] does not cover [{t}, {b}]",
                    tr.start(),
                    tr.end()
                )));
            }
        }
        Ok(())
    }
}

/// A shifted feasible candidate: full input/output trajectories over
/// `[t-lag, t+horizon-1]` plus the pre-terminal extended state that fed the
/// terminal controller.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub solve_time: i64,
    pub u: Trajectory,
    pub y: Trajectory,
    pub xi_pre_terminal: DVector<f64>,
}

/// Margins of one plan against every constraint of the local problem,
/// produced by direct arithmetic rather than solver status codes.
#[derive(Debug, Clone)]
pub struct ConstraintReport {
    /// Infinity-norm residual of the stacked Hankel equality.
    pub hankel_residual: f64,
    /// Worst deviation of the pinned initial window.
    pub pinning_error: f64,
    /// Smallest distance of any planned input to the box boundary
    /// (negative = violation).
    pub input_box_margin: f64,
    /// `theta * epsilon - ||xi||_P^2` (negative = violation).
    pub terminal_margin: f64,
    /// Per-constraint `rhs - lhs` of the consistency constraints, inputs
    /// then outputs.
    pub consistency_margins: Vec<f64>,
    pub ok: bool,
}

impl ConstraintReport {
    pub fn min_consistency_margin(&self) -> f64 {
        self.consistency_margins.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn violations(&self, tol: f64) -> Vec<ConstraintViolation> {
        let mut out = Vec::new();
        if self.hankel_residual > tol {
            out.push(ConstraintViolation {
                constraint: "trajectory parametrisation equality".into(),
                violation: self.hankel_residual,
            });
        }
        if self.pinning_error > tol {
            out.push(ConstraintViolation {
                constraint: "initial-condition pinning".into(),
                violation: self.pinning_error,
            });
        }
        if self.input_box_margin < -tol {
            out.push(ConstraintViolation {
                constraint: "input box".into(),
                violation: -self.input_box_margin,
            });
        }
        if self.terminal_margin < -tol {
            out.push(ConstraintViolation {
                constraint: "terminal set".into(),
                violation: -self.terminal_margin,
            });
        }
        let half = self.consistency_margins.len() / 2;
        for (k, margin) in self.consistency_margins.iter().enumerate() {
            if *margin < -tol {
                let (kind, idx) = if k < half { ("input", k) } else { ("output", k - half) };
                out.push(ConstraintViolation {
                    constraint: format!("{kind} consistency at step {idx}"),
                    violation: -margin,
                });
            }
        }
        out
    }
}

/// One solved local MPC problem.
#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub solve_time: i64,
    pub alpha: DVector<f64>,
    /// Inputs over `[t-lag, t+horizon-1]` (history plus plan).
    pub u_star: Trajectory,
    /// Outputs over `[t-lag, t+horizon-1]` (history plus prediction).
    pub y_star: Trajectory,
    /// Terminal extended state assembled from the plan and the neighbour
    /// window.
    pub xi_terminal: DVector<f64>,
    /// Exact objective value recomputed from the trajectories.
    pub cost: f64,
    pub report: ConstraintReport,
    /// One-step extension: terminal-controller input at `t+horizon`.
    pub u_ext: Option<DVector<f64>>,
    /// One-step extension: simulated output at `t+horizon`.
    pub y_ext: Option<DVector<f64>>,
}

/// Exact stage-plus-terminal cost of a planned trajectory pair.
pub fn plan_cost(
    cfg: &AgentConfig,
    t: i64,
    u: &Trajectory,
    y: &Trajectory,
    xi_terminal: &DVector<f64>,
) -> Result<f64> {
    let horizon = cfg.horizon as i64;
    let mut cost = linalg::weighted_norm(xi_terminal, &cfg.terminal.p).powi(2);
    for k in t..t + horizon {
        let uk = u.sample(k)?.into_owned();
        let yk = y.sample(k)?.into_owned();
        cost += uk.dot(&(&cfg.r_weight * &uk)) + yk.dot(&(&cfg.q_weight * &yk));
    }
    Ok(cost)
}

/// Assemble the terminal extended state of a plan: own inputs and outputs
/// over `[t+horizon-lag, t+horizon-1]`, neighbour predictions over the same
/// absolute window.
pub fn terminal_state(
    cfg: &AgentConfig,
    t: i64,
    u: &Trajectory,
    y: &Trajectory,
    neighbor: &NeighborTrajectory,
) -> Result<DVector<f64>> {
    let dims = cfg.dims();
    let (n, horizon) = (cfg.lag as i64, cfg.horizon as i64);
    let (a, b) = (t + horizon - n, t + horizon - 1);
    let mut xi = DVector::zeros(cfg.terminal.dims.dim());
    let nu = cfg.lag * dims.input_dim;
    let nyn = cfg.lag * dims.neighbor_dim;
    xi.rows_mut(0, nu).copy_from(&u.stacked(a, b)?);
    xi.rows_mut(nu, nyn).copy_from(&neighbor.values.stacked(a, b)?);
    xi.rows_mut(nu + nyn, cfg.lag * dims.output_dim).copy_from(&y.stacked(a, b)?);
    Ok(xi)
}

/// Independent constraint re-checker: evaluates every constraint of the
/// local problem on explicit trajectories.
#[allow(clippy::too_many_arguments)]
pub fn check_plan(
    cfg: &AgentConfig,
    t: i64,
    u_hist: &Trajectory,
    y_hist: &Trajectory,
    neighbor: &NeighborTrajectory,
    reference: &ConsistencyReference,
    u_plan: &Trajectory,
    y_plan: &Trajectory,
    alpha: &DVector<f64>,
) -> Result<ConstraintReport> {
    let dims = cfg.dims();
    let (n, horizon) = (cfg.lag as i64, cfg.horizon as i64);
    let tol = cfg.tolerances.recheck_tol;

    let rhs_u = u_plan.stacked(t - n, t + horizon - 1)?;
    let rhs_yn = neighbor.values.stacked(t - n, t + horizon - 2)?;
    let rhs_y = y_plan.stacked(t - n, t + horizon - 1)?;
    let res_u = (cfg.predictor.hankel_u() * alpha - rhs_u).amax();
    let res_yn = if rhs_yn.is_empty() {
        0.0
    } else {
        (cfg.predictor.hankel_yn() * alpha - rhs_yn).amax()
    };
    let res_y = (cfg.predictor.hankel_y() * alpha - rhs_y).amax();
    let hankel_residual = res_u.max(res_yn).max(res_y);

    let mut pinning_error = 0.0f64;
    for k in t - n..t {
        pinning_error = pinning_error
            .max((u_plan.sample(k)? - u_hist.sample(k)?).amax())
            .max((y_plan.sample(k)? - y_hist.sample(k)?).amax());
    }

    let mut input_box_margin = f64::INFINITY;
    for k in t..t + horizon {
        let uk = u_plan.sample(k)?;
        for j in 0..dims.input_dim {
            input_box_margin = input_box_margin
                .min(uk[j] - cfg.input_box.lo()[j])
                .min(cfg.input_box.hi()[j] - uk[j]);
        }
    }

    let xi = terminal_state(cfg, t, u_plan, y_plan, neighbor)?;
    let terminal_margin = cfg.terminal.theta * cfg.terminal.epsilon
        - linalg::weighted_norm(&xi, &cfg.terminal.p).powi(2);

    let mut consistency_margins = Vec::with_capacity(2 * cfg.horizon);
    for k in t..t + horizon {
        let lhs = (u_plan.sample(k)? - reference.u_prev.sample(k)?).norm_squared();
        let rhs =
            (reference.u_hat.sample(k)? - reference.u_prev.sample(k)?).norm_squared() + cfg.omega;
        consistency_margins.push(rhs - lhs);
    }
    for k in t..t + horizon {
        let lhs = (y_plan.sample(k)? - reference.y_prev.sample(k)?).norm_squared();
        let rhs =
            (reference.y_hat.sample(k)? - reference.y_prev.sample(k)?).norm_squared() + cfg.omega;
        consistency_margins.push(rhs - lhs);
    }

    let ok = hankel_residual <= tol
        && pinning_error <= tol
        && input_box_margin >= -tol
        && terminal_margin >= -tol
        && consistency_margins.iter().all(|m| *m >= -tol);
    Ok(ConstraintReport {
        hankel_residual,
        pinning_error,
        input_box_margin,
        terminal_margin,
        consistency_margins,
        ok,
    })
}

/// Solve the local MPC problem at time `t`.
///
/// Decision variables are the Hankel combination coefficients together with
/// the explicit planned inputs and outputs; the trajectory parametrisation
/// enters as equality constraints, the input box as linear inequalities,
/// and the terminal set plus the consistency constraints as second-order
/// cones. The returned solution has passed the independent re-checker.
#[allow(clippy::too_many_arguments)]
pub fn solve_local_mpc(
    cfg: &AgentConfig,
    t: i64,
    u_hist: &Trajectory,
    y_hist: &Trajectory,
    neighbor: &NeighborTrajectory,
    reference: &ConsistencyReference,
    backend: &dyn ConeSolver,
) -> Result<MpcSolution> {
    let dims = cfg.dims();
    let (n, horizon) = (cfg.lag as i64, cfg.horizon as i64);
    let (m, p, lag, hor) = (dims.input_dim, dims.output_dim, cfg.lag, cfg.horizon);
    neighbor.validate_for(cfg, t)?;
    reference.validate_for(cfg, t)?;

    let na = cfg.predictor.coeff_len();
    let idx_u = |k: usize, j: usize| na + k * m + j;
    let idx_y = |k: usize, j: usize| na + hor * m + k * p + j;
    let num_vars = na + hor * (m + p);
    let mut prog = ConeProgram::new(num_vars);

    // stage costs
    for k in 0..hor {
        for a in 0..m {
            for b in a..m {
                let c = if a == b { cfg.r_weight[(a, b)] } else { 2.0 * cfg.r_weight[(a, b)] };
                prog.add_quad_cost(idx_u(k, a), idx_u(k, b), c);
            }
        }
        for a in 0..p {
            for b in a..p {
                let c = if a == b { cfg.q_weight[(a, b)] } else { 2.0 * cfg.q_weight[(a, b)] };
                prog.add_quad_cost(idx_y(k, a), idx_y(k, b), c);
            }
        }
    }

    // terminal cost on the affine terminal state
    let xi_dim = cfg.terminal.dims.dim();
    let mut xi_vars = Vec::with_capacity(lag * (m + p));
    let mut xi_map = DMatrix::zeros(xi_dim, lag * (m + p));
    let mut xi_off = DVector::zeros(xi_dim);
    {
        let tdims = cfg.terminal.dims;
        for w in 0..lag {
            let k = hor - lag + w;
            for j in 0..m {
                let col = xi_vars.len();
                xi_vars.push(idx_u(k, j));
                xi_map[(tdims.u_rows(w).start + j, col)] = 1.0;
            }
        }
        for w in 0..lag {
            let k = hor - lag + w;
            for j in 0..p {
                let col = xi_vars.len();
                xi_vars.push(idx_y(k, j));
                xi_map[(tdims.y_rows(w).start + j, col)] = 1.0;
            }
        }
        let yn_part = neighbor.values.stacked(t + horizon - n, t + horizon - 1)?;
        xi_off.rows_mut(lag * m, lag * dims.neighbor_dim).copy_from(&yn_part);
    }
    prog.add_quad_form(&xi_vars, &xi_map, &xi_off, &cfg.terminal.p);

    // trajectory parametrisation equalities: past rows pinned to the
    // measurements and the neighbour window, future rows tied to the plan
    let h_u = cfg.predictor.hankel_u();
    let h_yn = cfg.predictor.hankel_yn();
    let h_y = cfg.predictor.hankel_y();
    let u_hist_vec = u_hist.stacked(t - n, t - 1)?;
    let y_hist_vec = y_hist.stacked(t - n, t - 1)?;
    let yn_vec = neighbor.values.stacked(t - n, t + horizon - 2)?;
    let mut eq_rows = 0usize;
    let mut push_hankel_row = |prog: &mut ConeProgram,
                               h: &DMatrix<f64>,
                               row: usize,
                               plan_var: Option<usize>,
                               rhs: f64| {
        let mut coeffs: Vec<(usize, f64)> =
            (0..na).map(|c| (c, h[(row, c)])).filter(|(_, v)| *v != 0.0).collect();
        if let Some(v) = plan_var {
            coeffs.push((v, -1.0));
        }
        prog.push_row(&coeffs, rhs);
        eq_rows += 1;
    };
    for w in 0..lag {
        for j in 0..m {
            push_hankel_row(&mut prog, h_u, w * m + j, None, u_hist_vec[w * m + j]);
        }
    }
    for k in 0..hor {
        for j in 0..m {
            push_hankel_row(&mut prog, h_u, (lag + k) * m + j, Some(idx_u(k, j)), 0.0);
        }
    }
    for r in 0..(hor + lag - 1) * dims.neighbor_dim {
        push_hankel_row(&mut prog, h_yn, r, None, yn_vec[r]);
    }
    for w in 0..lag {
        for j in 0..p {
            push_hankel_row(&mut prog, h_y, w * p + j, None, y_hist_vec[w * p + j]);
        }
    }
    for k in 0..hor {
        for j in 0..p {
            push_hankel_row(&mut prog, h_y, (lag + k) * p + j, Some(idx_y(k, j)), 0.0);
        }
    }
    prog.push_cone(ConeSpec::Zero(eq_rows));

    // input box
    for k in 0..hor {
        for j in 0..m {
            prog.push_row(&[(idx_u(k, j), -1.0)], -cfg.input_box.lo()[j]);
            prog.push_row(&[(idx_u(k, j), 1.0)], cfg.input_box.hi()[j]);
        }
    }
    prog.push_cone(ConeSpec::Nonnegative(2 * hor * m));

    // terminal ellipsoid as ||U_P xi|| <= sqrt(theta epsilon)
    let u_p = linalg::chol_upper(&cfg.terminal.p, "terminal cost")?;
    let radius = (cfg.terminal.theta * cfg.terminal.epsilon).sqrt();
    prog.push_row(&[], radius);
    {
        let a_soc = &u_p * &xi_map;
        let b_soc = &u_p * &xi_off;
        for r in 0..xi_dim {
            let coeffs: Vec<(usize, f64)> = xi_vars
                .iter()
                .enumerate()
                .map(|(c, &v)| (v, -a_soc[(r, c)]))
                .filter(|(_, v)| *v != 0.0)
                .collect();
            prog.push_row(&coeffs, b_soc[r]);
        }
    }
    prog.push_cone(ConeSpec::SecondOrder(1 + xi_dim));

    // consistency balls around the shifted previous plan
    for k in 0..hor {
        let ka = t + k as i64;
        let center = reference.u_prev.sample(ka)?.into_owned();
        let r2 = (reference.u_hat.sample(ka)? - &center).norm_squared() + cfg.omega;
        prog.push_row(&[], r2.max(0.0).sqrt());
        for j in 0..m {
            prog.push_row(&[(idx_u(k, j), -1.0)], -center[j]);
        }
        prog.push_cone(ConeSpec::SecondOrder(1 + m));
    }
    for k in 0..hor {
        let ka = t + k as i64;
        let center = reference.y_prev.sample(ka)?.into_owned();
        let r2 = (reference.y_hat.sample(ka)? - &center).norm_squared() + cfg.omega;
        prog.push_row(&[], r2.max(0.0).sqrt());
        for j in 0..p {
            prog.push_row(&[(idx_y(k, j), -1.0)], -center[j]);
        }
        prog.push_cone(ConeSpec::SecondOrder(1 + p));
    }

    let sol = backend.solve(&prog)?;
    finish_solution(cfg, t, u_hist, y_hist, neighbor, reference, sol)
}

fn finish_solution(
    cfg: &AgentConfig,
    t: i64,
    u_hist: &Trajectory,
    y_hist: &Trajectory,
    neighbor: &NeighborTrajectory,
    reference: &ConsistencyReference,
    sol: ConeSolution,
) -> Result<MpcSolution> {
    let dims = cfg.dims();
    let (m, p, lag, hor) = (dims.input_dim, dims.output_dim, cfg.lag, cfg.horizon);
    let n = lag as i64;
    let na = cfg.predictor.coeff_len();

    if matches!(
        sol.status,
        crate::solver::SolveStatus::PrimalInfeasible | crate::solver::SolveStatus::DualInfeasible
    ) {
        return Err(diagnose_infeasibility(cfg, t, u_hist, y_hist, neighbor, reference));
    }

    let alpha = DVector::from_iterator(na, sol.x.iter().take(na).cloned());
    let mut u_samples: Vec<DVector<f64>> = Vec::with_capacity(lag + hor);
    let mut y_samples: Vec<DVector<f64>> = Vec::with_capacity(lag + hor);
    for k in t - n..t {
        u_samples.push(u_hist.sample(k)?.into_owned());
        y_samples.push(y_hist.sample(k)?.into_owned());
    }
    for k in 0..hor {
        u_samples.push(DVector::from_fn(m, |j, _| sol.x[na + k * m + j]));
    }
    for k in 0..hor {
        y_samples.push(DVector::from_fn(p, |j, _| sol.x[na + hor * m + k * p + j]));
    }
    let u_star = Trajectory::from_samples(t - n, &u_samples)?;
    let y_star = Trajectory::from_samples(t - n, &y_samples)?;
    let xi_terminal = terminal_state(cfg, t, &u_star, &y_star, neighbor)?;
    let report =
        check_plan(cfg, t, u_hist, y_hist, neighbor, reference, &u_star, &y_star, &alpha)?;
    if !report.ok {
        // the re-checker is the gate; a clean status does not override it
        if !sol.is_optimal() {
            return Err(diagnose_infeasibility(cfg, t, u_hist, y_hist, neighbor, reference));
        }
        let violations = report.violations(cfg.tolerances.recheck_tol);
        return Err(Error::Solver(format!(
            "agent {} at step {t}: solution failed the re-checker: {}",
            cfg.id,
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
        )));
    }
    let cost = plan_cost(cfg, t, &u_star, &y_star, &xi_terminal)?;
    Ok(MpcSolution {
        solve_time: t,
        alpha,
        u_star,
        y_star,
        xi_terminal,
        cost,
        report,
        u_ext: None,
        y_ext: None,
    })
}

/// Evaluate the reference candidate against every constraint and package
/// the violations as the fatal infeasibility error.
fn diagnose_infeasibility(
    cfg: &AgentConfig,
    t: i64,
    u_hist: &Trajectory,
    y_hist: &Trajectory,
    neighbor: &NeighborTrajectory,
    reference: &ConsistencyReference,
) -> Error {
    let candidate = Candidate {
        solve_time: t,
        u: splice(u_hist, &reference.u_hat, t, cfg.lag, cfg.horizon),
        y: splice(y_hist, &reference.y_hat, t, cfg.lag, cfg.horizon),
        xi_pre_terminal: DVector::zeros(0),
    };
    match check_candidate(cfg, t, u_hist, y_hist, neighbor, reference, &candidate) {
        Ok(check) => Error::InfeasibleMpc {
            agent: cfg.id,
            step: t,
            violations: check.report.violations(cfg.tolerances.recheck_tol),
        },
        Err(e) => e,
    }
}

fn splice(hist: &Trajectory, plan: &Trajectory, t: i64, lag: usize, horizon: usize) -> Trajectory {
    let n = lag as i64;
    let mut samples = Vec::with_capacity(lag + horizon);
    for k in t - n..t {
        samples.push(hist.sample(k).expect("history covers the lag window").into_owned());
    }
    for k in t..t + horizon as i64 {
        samples.push(plan.sample(k).expect("plan covers the horizon").into_owned());
    }
    Trajectory::from_samples(t - n, &samples).expect("nonempty")
}

/// Result of plugging a candidate into the constraint set.
#[derive(Debug, Clone)]
pub struct CandidateCheck {
    pub report: ConstraintReport,
    pub alpha: DVector<f64>,
    pub cost: f64,
    /// Worst deviation of the consistency-constraint slack from omega when
    /// the candidate itself is plugged in.
    pub slack_deviation: f64,
}

/// Plug a candidate into the constraints of the solve at `t`: computes a
/// least-squares combination witness for the parametrisation equality and
/// re-checks every constraint.
pub fn check_candidate(
    cfg: &AgentConfig,
    t: i64,
    u_hist: &Trajectory,
    y_hist: &Trajectory,
    neighbor: &NeighborTrajectory,
    reference: &ConsistencyReference,
    candidate: &Candidate,
) -> Result<CandidateCheck> {
    let (n, horizon) = (cfg.lag as i64, cfg.horizon as i64);
    let h_u = cfg.predictor.hankel_u();
    let h_yn = cfg.predictor.hankel_yn();
    let h_y = cfg.predictor.hankel_y();
    let rows = h_u.nrows() + h_yn.nrows() + h_y.nrows();
    let mut a = DMatrix::zeros(rows, h_u.ncols());
    a.view_mut((0, 0), (h_u.nrows(), h_u.ncols())).copy_from(h_u);
    a.view_mut((h_u.nrows(), 0), (h_yn.nrows(), h_yn.ncols())).copy_from(h_yn);
    a.view_mut((h_u.nrows() + h_yn.nrows(), 0), (h_y.nrows(), h_y.ncols())).copy_from(h_y);
    let mut b = DVector::zeros(rows);
    b.rows_mut(0, h_u.nrows()).copy_from(&candidate.u.stacked(t - n, t + horizon - 1)?);
    b.rows_mut(h_u.nrows(), h_yn.nrows())
        .copy_from(&neighbor.values.stacked(t - n, t + horizon - 2)?);
    b.rows_mut(h_u.nrows() + h_yn.nrows(), h_y.nrows())
        .copy_from(&candidate.y.stacked(t - n, t + horizon - 1)?);
    let (alpha, _) = linalg::lstsq_min_norm(&a, &b, 1e-11);

    let report = check_plan(
        cfg,
        t,
        u_hist,
        y_hist,
        neighbor,
        reference,
        &candidate.u,
        &candidate.y,
        &alpha,
    )?;
    let xi = terminal_state(cfg, t, &candidate.u, &candidate.y, neighbor)?;
    let cost = plan_cost(cfg, t, &candidate.u, &candidate.y, &xi)?;

    let mut slack_deviation = 0.0f64;
    for k in t..t + horizon {
        let lhs_u = (candidate.u.sample(k)? - reference.u_prev.sample(k)?).norm_squared();
        let rhs_u =
            (reference.u_hat.sample(k)? - reference.u_prev.sample(k)?).norm_squared() + cfg.omega;
        slack_deviation = slack_deviation.max((rhs_u - lhs_u - cfg.omega).abs());
        let lhs_y = (candidate.y.sample(k)? - reference.y_prev.sample(k)?).norm_squared();
        let rhs_y =
            (reference.y_hat.sample(k)? - reference.y_prev.sample(k)?).norm_squared() + cfg.omega;
        slack_deviation = slack_deviation.max((rhs_y - lhs_y - cfg.omega).abs());
    }
    Ok(CandidateCheck { report, alpha, cost, slack_deviation })
}

/// One-step extension of a solved problem: the terminal-controller input at
/// `t+horizon` (which must land inside the input box by terminal design)
/// and the matching data-driven simulated output.
pub fn extend(
    cfg: &AgentConfig,
    sol: &mut MpcSolution,
    neighbor: &NeighborTrajectory,
) -> Result<()> {
    let t = sol.solve_time;
    let (n, horizon) = (cfg.lag as i64, cfg.horizon as i64);
    let u_ext = &cfg.terminal.k * &sol.xi_terminal;
    if !cfg.input_box.contains(&u_ext, 1e-9) {
        return Err(Error::TerminalDesign(format!(
            "agent {}: terminal-controller input {:?} leaves the input box",
            cfg.id,
            u_ext.as_slice()
        )));
    }

    let mut new_u_samples: Vec<DVector<f64>> = Vec::with_capacity(cfg.horizon + 1);
    for k in t..t + horizon {
        new_u_samples.push(sol.u_star.sample(k)?.into_owned());
    }
    new_u_samples.push(u_ext.clone());
    let new_u = Trajectory::from_samples(t, &new_u_samples)?;
    let sim = behavior::simulate(
        cfg.predictor.data(),
        cfg.lag,
        &sol.u_star.window(t - n, t - 1)?,
        &sol.y_star.window(t - n, t - 1)?,
        &neighbor.values.window(t - n, t + horizon - 1)?,
        &new_u,
        cfg.tolerances.sim_tol,
    )?;
    sol.u_ext = Some(u_ext);
    sol.y_ext = Some(sim.sample(t + horizon)?.into_owned());
    Ok(())
}

/// Previous solution shifted one step forward including its extension: the
/// consistency-constraint centres for the next solve, over
/// `[t+1, t+horizon]`.
pub fn shifted_previous(cfg: &AgentConfig, prev: &MpcSolution) -> Result<(Trajectory, Trajectory)> {
    let (u_ext, y_ext) = match (&prev.u_ext, &prev.y_ext) {
        (Some(u), Some(y)) => (u, y),
        _ => {
            return Err(Error::Parameter("previous solution lacks its one-step extension".into()))
        }
    };
    let t = prev.solve_time;
    let horizon = cfg.horizon as i64;
    let mut u_samples = Vec::with_capacity(cfg.horizon);
    let mut y_samples = Vec::with_capacity(cfg.horizon);
    for k in t + 1..t + horizon {
        u_samples.push(prev.u_star.sample(k)?.into_owned());
        y_samples.push(prev.y_star.sample(k)?.into_owned());
    }
    u_samples.push(u_ext.clone());
    y_samples.push(y_ext.clone());
    Ok((
        Trajectory::from_samples(t + 1, &u_samples)?,
        Trajectory::from_samples(t + 1, &y_samples)?,
    ))
}

/// Construct the shifted feasible candidate for the solve at `t+1` from the
/// previous solution, the updated neighbour window and the measured
/// outputs.
///
/// Stage one keeps the previous plan's inputs and simulates the outputs
/// under the updated neighbour trajectory; stage two assembles the
/// pre-terminal extended state, applies the terminal controller for the
/// final input, and completes the final output by one more simulation step.
pub fn build_candidate(
    cfg: &AgentConfig,
    prev: &MpcSolution,
    neighbor_new: &NeighborTrajectory,
    u_hist: &Trajectory,
    y_hist: &Trajectory,
) -> Result<Candidate> {
    let t = prev.solve_time + 1;
    let (n, horizon) = (cfg.lag as i64, cfg.horizon as i64);
    neighbor_new.validate_for(cfg, t)?;
    let data = cfg.predictor.data();
    let sim_tol = cfg.tolerances.sim_tol;

    // stage one: shifted inputs, outputs simulated under the new window
    let u_shift = prev.u_star.window(t - n, t + horizon - 2)?;
    let u_init = u_hist.window(t - n, t - 1)?;
    let y_init = y_hist.window(t - n, t - 1)?;
    let y_sim = behavior::simulate(
        data,
        cfg.lag,
        &u_init,
        &y_init,
        &neighbor_new.values.window(t - n, t + horizon - 3)?,
        &u_shift.window(t, t + horizon - 2)?,
        sim_tol,
    )?;

    // pre-terminal extended state at relative index horizon-1
    let (a, b) = (t + horizon - 1 - n, t + horizon - 2);
    let dims = cfg.dims();
    let mut y_full: Vec<DVector<f64>> = Vec::with_capacity(cfg.lag + cfg.horizon);
    for k in t - n..t {
        y_full.push(y_hist.sample(k)?.into_owned());
    }
    for k in t..t + horizon - 1 {
        y_full.push(y_sim.sample(k)?.into_owned());
    }
    let y_cand_partial = Trajectory::from_samples(t - n, &y_full)?;
    let mut xi = DVector::zeros(cfg.terminal.dims.dim());
    let nu = cfg.lag * dims.input_dim;
    let nyn = cfg.lag * dims.neighbor_dim;
    xi.rows_mut(0, nu).copy_from(&u_shift.stacked(a, b)?);
    xi.rows_mut(nu, nyn).copy_from(&neighbor_new.values.stacked(a, b)?);
    xi.rows_mut(nu + nyn, cfg.lag * dims.output_dim).copy_from(&y_cand_partial.stacked(a, b)?);

    // stage two: terminal-controller input, then the completed final output
    let u_last = &cfg.terminal.k * &xi;
    let mut u_samples: Vec<DVector<f64>> = Vec::with_capacity(cfg.lag + cfg.horizon);
    for k in t - n..t + horizon - 1 {
        u_samples.push(u_shift.sample(k)?.into_owned());
    }
    u_samples.push(u_last);
    let u_cand = Trajectory::from_samples(t - n, &u_samples)?;
    let y_sim_full = behavior::simulate(
        data,
        cfg.lag,
        &u_init,
        &y_init,
        &neighbor_new.values.window(t - n, t + horizon - 2)?,
        &u_cand.window(t, t + horizon - 1)?,
        sim_tol,
    )?;
    let mut y_samples = y_full;
    y_samples.push(y_sim_full.sample(t + horizon - 1)?.into_owned());
    let y_cand = Trajectory::from_samples(t - n, &y_samples)?;

    Ok(Candidate { solve_time: t, u: u_cand, y: y_cand, xi_pre_terminal: xi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{simulate_subsystem, XiDims};
    use crate::solver::{BackendSettings, ClarabelBackend};
    use crate::terminal::{build_synthesis_data, calibrate, synthesize};
    use crate::test_util::chain_data;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LAG: usize = 2;
    const HORIZON: usize = 5;

    fn make_agent(node: usize, seed: u64) -> (AgentConfig, crate::plant::NetworkModel) {
        let (net, data) = chain_data(3, seed, LAG, HORIZON);
        let q = DMatrix::identity(1, 1);
        let r = DMatrix::identity(1, 1);
        let s = build_synthesis_data(&data[node], LAG).unwrap();
        let cert =
            synthesize(&s, &q, &r, &ClarabelBackend::default(), &Default::default()).unwrap();
        let input_box = InputBox::symmetric(1, 2.0);
        let (ing, _) = calibrate(&cert, &q, &r, &input_box, &Default::default()).unwrap();
        let predictor = BehavioralPredictor::new(data[node].clone(), LAG, HORIZON).unwrap();
        let cfg = AgentConfig {
            id: node,
            lag: LAG,
            horizon: HORIZON,
            q_weight: q,
            r_weight: r,
            omega: 0.01,
            input_box,
            terminal: ing,
            predictor,
            tolerances: Default::default(),
        };
        cfg.validate().unwrap();
        (cfg, net)
    }

    fn zero_reference(cfg: &AgentConfig, t: i64) -> ConsistencyReference {
        let z_u = Trajectory::zeros(cfg.dims().input_dim, t, cfg.horizon);
        let z_y = Trajectory::zeros(cfg.dims().output_dim, t, cfg.horizon);
        ConsistencyReference { u_hat: z_u.clone(), y_hat: z_y.clone(), u_prev: z_u, y_prev: z_y }
    }

    #[test]
    fn origin_is_optimal_with_zero_cost() {
        let (cfg, _) = make_agent(1, 41);
        let t = 0i64;
        let n = LAG as i64;
        let u_hist = Trajectory::zeros(1, t - n, LAG);
        let y_hist = Trajectory::zeros(1, t - n, LAG);
        let neighbor =
            NeighborTrajectory { values: Trajectory::zeros(2, t - n, LAG + HORIZON) };
        let reference = zero_reference(&cfg, t);
        let sol = solve_local_mpc(
            &cfg,
            t,
            &u_hist,
            &y_hist,
            &neighbor,
            &reference,
            &ClarabelBackend::default(),
        )
        .unwrap();
        assert!(sol.cost < 1e-10, "cost {}", sol.cost);
        assert!(sol.u_star.stacked(0, HORIZON as i64 - 1).unwrap().amax() < 1e-6);
        assert!(sol.report.ok);
    }

    #[test]
    fn candidate_plugin_is_feasible_with_exact_slack() {
        // a small-state plant rollout is a feasible candidate; plugging it
        // into its own consistency constraints leaves slack exactly omega
        let (cfg, net) = make_agent(1, 42);
        let t = 0i64;
        let n = LAG as i64;
        let span = LAG + HORIZON;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = DVector::from_fn(2, |_, _| rng.gen_range(-1e-5..1e-5));
        let u = Trajectory::zeros(1, t - n, span);
        let yn = Trajectory::from_samples(
            t - n,
            &(0..span)
                .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1e-6..1e-6)))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let y = simulate_subsystem(net.subsystem(1), &x0, &u, &yn).unwrap();
        let candidate = Candidate {
            solve_time: t,
            u: u.clone(),
            y: y.clone(),
            xi_pre_terminal: DVector::zeros(cfg.terminal.dims.dim()),
        };
        let reference = ConsistencyReference {
            u_hat: u.window(t, t + HORIZON as i64 - 1).unwrap(),
            y_hat: y.window(t, t + HORIZON as i64 - 1).unwrap(),
            u_prev: u.window(t, t + HORIZON as i64 - 1).unwrap(),
            y_prev: y.window(t, t + HORIZON as i64 - 1).unwrap(),
        };
        let neighbor = NeighborTrajectory { values: yn.clone() };
        let check = check_candidate(
            &cfg,
            t,
            &u.window(t - n, t - 1).unwrap(),
            &y.window(t - n, t - 1).unwrap(),
            &neighbor,
            &reference,
            &candidate,
        )
        .unwrap();
        assert!(check.report.ok, "violations: {:?}", check.report.violations(1e-6));
        assert!(check.slack_deviation < 1e-9);
        assert!(check.report.hankel_residual < 1e-8);

        // solving from the same data cannot cost more than the candidate
        let sol = solve_local_mpc(
            &cfg,
            t,
            &u.window(t - n, t - 1).unwrap(),
            &y.window(t - n, t - 1).unwrap(),
            &neighbor,
            &reference,
            &ClarabelBackend::default(),
        )
        .unwrap();
        assert!(sol.cost <= check.cost + 1e-8, "{} > {}", sol.cost, check.cost);
    }

    #[test]
    fn extension_at_origin_is_zero() {
        let (cfg, _) = make_agent(1, 43);
        let t = 0i64;
        let n = LAG as i64;
        let u_hist = Trajectory::zeros(1, t - n, LAG);
        let y_hist = Trajectory::zeros(1, t - n, LAG);
        let neighbor =
            NeighborTrajectory { values: Trajectory::zeros(2, t - n, LAG + HORIZON) };
        let reference = zero_reference(&cfg, t);
        let mut sol = solve_local_mpc(
            &cfg,
            t,
            &u_hist,
            &y_hist,
            &neighbor,
            &reference,
            &ClarabelBackend::default(),
        )
        .unwrap();
        extend(&cfg, &mut sol, &neighbor).unwrap();
        assert!(sol.u_ext.as_ref().unwrap().amax() < 1e-7);
        assert!(sol.y_ext.as_ref().unwrap().amax() < 1e-6);
    }

    #[test]
    fn extension_output_matches_plant() {
        // the one-step extension's simulated output agrees with stepping the
        // true subsystem along the same inputs and neighbour outputs
        let (cfg, net) = make_agent(1, 44);
        let t = 0i64;
        let n = LAG as i64;
        let span = LAG + HORIZON;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = DVector::from_fn(2, |_, _| rng.gen_range(-1e-5..1e-5));
        let u = Trajectory::zeros(1, t - n, span);
        let yn = Trajectory::from_samples(
            t - n,
            &(0..span)
                .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1e-6..1e-6)))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let y = simulate_subsystem(net.subsystem(1), &x0, &u, &yn).unwrap();
        let neighbor = NeighborTrajectory { values: yn.clone() };
        let reference = ConsistencyReference {
            u_hat: u.window(t, t + HORIZON as i64 - 1).unwrap(),
            y_hat: y.window(t, t + HORIZON as i64 - 1).unwrap(),
            u_prev: u.window(t, t + HORIZON as i64 - 1).unwrap(),
            y_prev: y.window(t, t + HORIZON as i64 - 1).unwrap(),
        };
        let mut sol = solve_local_mpc(
            &cfg,
            t,
            &u.window(t - n, t - 1).unwrap(),
            &y.window(t - n, t - 1).unwrap(),
            &neighbor,
            &reference,
            &ClarabelBackend::default(),
        )
        .unwrap();
        extend(&cfg, &mut sol, &neighbor).unwrap();

        // oracle: roll the true subsystem with the solved inputs
        let mut u_ext_samples: Vec<DVector<f64>> = Vec::new();
        for k in t - n..t + HORIZON as i64 {
            u_ext_samples.push(sol.u_star.sample(k).unwrap().into_owned());
        }
        u_ext_samples.push(sol.u_ext.clone().unwrap());
        let u_all = Trajectory::from_samples(t - n, &u_ext_samples).unwrap();
        let y_truth = simulate_subsystem(net.subsystem(1), &x0, &u_all, &yn).unwrap();
        let err = (y_truth.sample(t + HORIZON as i64).unwrap() - sol.y_ext.as_ref().unwrap())
            .norm();
        let scale = sol.y_ext.as_ref().unwrap().norm().max(1.0);
        assert!(err / scale < 1e-6, "relative error {err}");
    }

    #[test]
    fn solutions_agree_across_backend_settings() {
        let (cfg, net) = make_agent(1, 45);
        let t = 0i64;
        let n = LAG as i64;
        let span = LAG + HORIZON;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x0 = DVector::from_fn(2, |_, _| rng.gen_range(-1e-5..1e-5));
        let u = Trajectory::zeros(1, t - n, span);
        let yn = Trajectory::zeros(2, t - n, span);
        let y = simulate_subsystem(net.subsystem(1), &x0, &u, &yn).unwrap();
        let neighbor = NeighborTrajectory { values: yn };
        let reference = ConsistencyReference {
            u_hat: u.window(t, t + HORIZON as i64 - 1).unwrap(),
            y_hat: y.window(t, t + HORIZON as i64 - 1).unwrap(),
            u_prev: u.window(t, t + HORIZON as i64 - 1).unwrap(),
            y_prev: y.window(t, t + HORIZON as i64 - 1).unwrap(),
        };
        let solve_with = |settings: BackendSettings| {
            solve_local_mpc(
                &cfg,
                t,
                &u.window(t - n, t - 1).unwrap(),
                &y.window(t - n, t - 1).unwrap(),
                &neighbor,
                &reference,
                &ClarabelBackend::new(settings),
            )
            .unwrap()
        };
        let a = solve_with(BackendSettings::default());
        let b = solve_with(BackendSettings { equilibrate: false, ..Default::default() });
        let du = (a.u_star.matrix() - b.u_star.matrix()).amax();
        let dy = (a.y_star.matrix() - b.y_star.matrix()).amax();
        assert!(du < 1e-6 && dy < 1e-6, "du {du} dy {dy}");
    }

    #[test]
    fn infeasible_problem_reports_reference_violations() {
        let (mut cfg, _) = make_agent(1, 46);
        // force infeasibility: history far outside anything the terminal
        // set can absorb, zero slack around a zero reference
        cfg.omega = 0.0;
        let t = 0i64;
        let n = LAG as i64;
        let u_hist = Trajectory::from_samples(
            t - n,
            &[DVector::from_row_slice(&[1.5]), DVector::from_row_slice(&[-1.5])],
        )
        .unwrap();
        let y_hist = Trajectory::from_samples(
            t - n,
            &[DVector::from_row_slice(&[3.0]), DVector::from_row_slice(&[4.0])],
        )
        .unwrap();
        let neighbor =
            NeighborTrajectory { values: Trajectory::zeros(2, t - n, LAG + HORIZON) };
        let reference = zero_reference(&cfg, t);
        match solve_local_mpc(
            &cfg,
            t,
            &u_hist,
            &y_hist,
            &neighbor,
            &reference,
            &ClarabelBackend::default(),
        ) {
            Err(Error::InfeasibleMpc { agent, step, violations }) => {
                assert_eq!(agent, 1);
                assert_eq!(step, 0);
                assert!(!violations.is_empty());
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn terminal_state_layout_matches_extended_state() {
        let (cfg, _) = make_agent(1, 47);
        let dims = XiDims { lag: LAG, input_dim: 1, neighbor_dim: 2, output_dim: 1 };
        assert_eq!(cfg.terminal.dims, dims);
        let t = 0i64;
        let span = LAG + HORIZON;
        let u = Trajectory::scalar(&[0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).with_start(t - 2);
        let y = Trajectory::scalar(&[0.0, 0.0, 10.0, 20.0, 30.0, 40.0, 50.0]).with_start(t - 2);
        let yn_vals: Vec<DVector<f64>> = (0..span as i64)
            .map(|k| DVector::from_row_slice(&[100.0 + k as f64, 200.0 + k as f64]))
            .collect();
        let neighbor =
            NeighborTrajectory { values: Trajectory::from_samples(t - 2, &yn_vals).unwrap() };
        let xi = terminal_state(&cfg, t, &u, &y, &neighbor).unwrap();
        // windows [t+3, t+4]: u = (4, 5), yn = (105, 205, 106, 206), y = (40, 50)
        assert_abs_diff_eq!(xi[0], 4.0);
        assert_abs_diff_eq!(xi[1], 5.0);
        assert_abs_diff_eq!(xi[2], 105.0);
        assert_abs_diff_eq!(xi[3], 205.0);
        assert_abs_diff_eq!(xi[4], 106.0);
        assert_abs_diff_eq!(xi[5], 206.0);
        assert_abs_diff_eq!(xi[6], 40.0);
        assert_abs_diff_eq!(xi[7], 50.0);
    }

    #[test]
    fn candidate_shift_keeps_previous_inputs() {
        // shift identity: the candidate input trajectory reuses the previous
        // plan's values at every shared absolute index
        let (cfg, net) = make_agent(1, 48);
        let t = 0i64;
        let n = LAG as i64;
        let span = LAG + HORIZON + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = DVector::from_fn(2, |_, _| rng.gen_range(-1e-5..1e-5));
        let u = Trajectory::zeros(1, t - n, span);
        let yn = Trajectory::zeros(2, t - n, span);
        let y = simulate_subsystem(net.subsystem(1), &x0, &u, &yn).unwrap();
        let neighbor =
            NeighborTrajectory { values: yn.window(t - n, t + HORIZON as i64 - 1).unwrap() };
        let reference = ConsistencyReference {
            u_hat: u.window(t, t + HORIZON as i64 - 1).unwrap(),
            y_hat: y.window(t, t + HORIZON as i64 - 1).unwrap(),
            u_prev: u.window(t, t + HORIZON as i64 - 1).unwrap(),
            y_prev: y.window(t, t + HORIZON as i64 - 1).unwrap(),
        };
        let mut sol = solve_local_mpc(
            &cfg,
            t,
            &u.window(t - n, t - 1).unwrap(),
            &y.window(t - n, t - 1).unwrap(),
            &neighbor,
            &reference,
            &ClarabelBackend::default(),
        )
        .unwrap();
        extend(&cfg, &mut sol, &neighbor).unwrap();

        // next-step history: inputs as planned, outputs as predicted (exact
        // here since the neighbour window was followed exactly)
        let neighbor_next =
            NeighborTrajectory { values: yn.window(t - n + 1, t + HORIZON as i64).unwrap() };
        let u_hist_next = sol.u_star.window(t - n + 1, t).unwrap();
        let y_hist_next = sol.y_star.window(t - n + 1, t).unwrap();
        let candidate =
            build_candidate(&cfg, &sol, &neighbor_next, &u_hist_next, &y_hist_next).unwrap();
        for k in t - n + 1..t + HORIZON as i64 - 1 {
            let expect = sol.u_star.sample(k).unwrap();
            let got = candidate.u.sample(k).unwrap();
            assert!((expect - got).amax() < 1e-12, "input changed at {k}");
        }
        assert_eq!(candidate.u.end(), t + HORIZON as i64);
        assert_eq!(candidate.solve_time, t + 1);
    }
}
