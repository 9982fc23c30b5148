//! Offline data-driven synthesis of the terminal ingredients: terminal cost
//! matrix `P`, terminal feedback `K`, decrease rate, terminal level
//! `epsilon` and tightening factor `theta`.
//!
//! The extended-state transition of one subsystem splits into a known shift
//! part and one unknown block row (the lagged input/output coefficients plus
//! feedthrough). The unknown row is treated as a structured uncertainty
//! channel whose data-consistency set enters a linear matrix inequality as a
//! quadratic multiplier; solving the LMI yields `P` and `K` certified to
//! decrease the terminal cost for the decoupled subsystem. Calibration then
//! converts the certificate into the quantities the online controller needs
//! and validates them under sampled coupling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::plant::{DataSet, InputBox, XiDims};
use crate::solver::{svec_scale, ConeProgram, ConeSpec, SdpSolver};

/// Known part of the extended-state transition: pure shift blocks plus the
/// injection selectors for the current input, the current neighbour output
/// and the uncertainty channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftStructure {
    pub a_bar: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub b_yn: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    pub dims: XiDims,
}

/// Build the shift structure for the given window dimensions.
pub fn shift_structure(dims: XiDims) -> ShiftStructure {
    let d = dims.dim();
    let (n, m, q, p) = (dims.lag, dims.input_dim, dims.neighbor_dim, dims.output_dim);
    let mut a_bar = DMatrix::zeros(d, d);
    for w in 0..n.saturating_sub(1) {
        for (rows, next) in [
            (dims.u_rows(w), dims.u_rows(w + 1)),
            (dims.yn_rows(w), dims.yn_rows(w + 1)),
            (dims.y_rows(w), dims.y_rows(w + 1)),
        ] {
            for (r, c) in rows.zip(next) {
                a_bar[(r, c)] = 1.0;
            }
        }
    }
    let mut b_u = DMatrix::zeros(d, m);
    for (i, r) in dims.u_rows(n - 1).enumerate() {
        b_u[(r, i)] = 1.0;
    }
    let mut b_yn = DMatrix::zeros(d, q);
    for (i, r) in dims.yn_rows(n - 1).enumerate() {
        b_yn[(r, i)] = 1.0;
    }
    let mut b_w = DMatrix::zeros(d, p);
    for (i, r) in dims.y_rows(n - 1).enumerate() {
        b_w[(r, i)] = 1.0;
    }
    ShiftStructure { a_bar, b_u, b_yn, b_w, dims }
}

/// Output selector `T_y` with `y_t = T_y xi_{t+1}` (newest own-output slot).
pub fn output_selector(dims: XiDims) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(dims.output_dim, dims.dim());
    for (i, c) in dims.y_rows(dims.lag - 1).enumerate() {
        t[(i, c)] = 1.0;
    }
    t
}

/// Data matrices of the synthesis problem: extended-state snapshots, their
/// shifts, the input and neighbour-output rows, and the residual left after
/// subtracting the known shift dynamics.
#[derive(Debug, Clone)]
pub struct SynthesisData {
    pub xi: DMatrix<f64>,
    pub xi_plus: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub y_n: DMatrix<f64>,
    /// Stacked `[xi; u]`.
    pub z: DMatrix<f64>,
    /// `xi_plus - a_bar xi - b_u u - b_yn y_n`; nonzero only in the
    /// uncertainty-channel rows for exact data.
    pub m_res: DMatrix<f64>,
    pub shift: ShiftStructure,
}

/// Assemble the synthesis data from a recorded data set.
pub fn build_synthesis_data(data: &DataSet, lag: usize) -> Result<SynthesisData> {
    let n_data = data.len();
    if n_data < lag + 2 {
        return Err(Error::Dimension(format!(
            "data length {n_data} too short for synthesis with lag {lag}"
        )));
    }
    let dims = XiDims {
        lag,
        input_dim: data.u.dim(),
        neighbor_dim: data.y_neighbors.dim(),
        output_dim: data.y.dim(),
    };
    let shift = shift_structure(dims);
    let cols = n_data - lag;
    let d = dims.dim();
    let mut xi = DMatrix::zeros(d, cols);
    let mut xi_plus = DMatrix::zeros(d, cols);
    let n = lag as i64;
    let snap = |at: i64| -> Result<DVector<f64>> {
        let mut v = DVector::zeros(d);
        v.rows_mut(0, lag * dims.input_dim)
            .copy_from(&data.u.stacked(at - n, at - 1)?);
        v.rows_mut(lag * dims.input_dim, lag * dims.neighbor_dim)
            .copy_from(&data.y_neighbors.stacked(at - n, at - 1)?);
        v.rows_mut(lag * (dims.input_dim + dims.neighbor_dim), lag * dims.output_dim)
            .copy_from(&data.y.stacked(at - n, at - 1)?);
        Ok(v)
    };
    for (c, t) in (lag..n_data).enumerate() {
        xi.set_column(c, &snap(t as i64)?);
        xi_plus.set_column(c, &snap(t as i64 + 1)?);
    }
    let mut u = DMatrix::zeros(dims.input_dim, cols);
    let mut y_n = DMatrix::zeros(dims.neighbor_dim, cols);
    for (c, t) in (lag..n_data).enumerate() {
        u.set_column(c, &data.u.sample(t as i64)?);
        y_n.set_column(c, &data.y_neighbors.sample(t as i64)?);
    }
    let mut z = DMatrix::zeros(d + dims.input_dim, cols);
    z.view_mut((0, 0), (d, cols)).copy_from(&xi);
    z.view_mut((d, 0), (dims.input_dim, cols)).copy_from(&u);
    let m_res = &xi_plus - &shift.a_bar * &xi - &shift.b_u * &u - &shift.b_yn * &y_n;
    Ok(SynthesisData { xi, xi_plus, u, y_n, z, m_res, shift })
}

/// Quadratic-form multiplier of the uncertainty channel, normalised by the
/// number of data columns (the scale is absorbed by the multiplier weight).
///
/// Acting on `[v1; v2]` with `v1` the successor channel and `v2 = [xi; u]`:
///
/// ```text
/// [ -W W'    W Z' ]            W = residual projected onto the channel
/// [  Z W'   -Z Z' ] / cols         rows and lifted back
/// ```
pub fn build_uncertainty_multiplier(s: &SynthesisData) -> DMatrix<f64> {
    let d = s.shift.dims.dim();
    let m = s.shift.dims.input_dim;
    let cols = s.z.ncols() as f64;
    let w_lift = &s.shift.b_w * (s.shift.b_w.transpose() * &s.m_res);
    let mut p_bar = DMatrix::zeros(2 * d + m, 2 * d + m);
    p_bar
        .view_mut((0, 0), (d, d))
        .copy_from(&(-(&w_lift * w_lift.transpose())));
    let cross = &w_lift * s.z.transpose();
    p_bar.view_mut((0, d), (d, d + m)).copy_from(&cross);
    p_bar.view_mut((d, 0), (d + m, d)).copy_from(&cross.transpose());
    p_bar
        .view_mut((d, d), (d + m, d + m))
        .copy_from(&(-(&s.z * s.z.transpose())));
    p_bar / cols
}

/// Options of the LMI solve.
#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    /// Strictness margin enforced on the big LMI block.
    pub lmi_margin: f64,
    /// Positive-definiteness margin on the variable blocks.
    pub pd_margin: f64,
    /// Candidate multiplier weights, tried in order. The weighted
    /// multiplier enters the solve through an exact Schur lifting that is
    /// linear only for fixed tau, and any weight beyond a data-dependent
    /// threshold yields the same certificate, so a short grid suffices.
    pub tau_grid: Vec<f64>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { lmi_margin: 1e-6, pd_margin: 1e-6, tau_grid: vec![1e4, 1e3, 1e5, 1e2] }
    }
}

/// Result of a successful synthesis: the terminal cost and gain plus the
/// quantities needed for calibration, all reconstructed from data alone.
#[derive(Debug, Clone)]
pub struct SynthesisCertificate {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub x_mat: DMatrix<f64>,
    pub tau: f64,
    /// `sqrt(trace)` of the optimised inverse bound, for diagnostics.
    pub gamma: f64,
    /// Largest eigenvalue of the re-assembled LMI block at the returned
    /// point (diagnostic; at or below solver accuracy).
    pub lmi_residual: f64,
    /// Certified decrease rate of the weighted terminal cost.
    pub eta_bar: f64,
    /// Data-reconstructed extended-state transition (unique for exact data).
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
    /// Decoupled closed loop `a_tilde + b_tilde k`.
    pub a_cl: DMatrix<f64>,
    pub dims: XiDims,
}

/// Accumulator for one affine-symmetric LMI block.
struct SymAffine {
    dim: usize,
    cst: Vec<f64>,
    terms: Vec<Vec<(usize, f64)>>,
}

impl SymAffine {
    fn new(dim: usize) -> Self {
        let slots = dim * (dim + 1) / 2;
        Self { dim, cst: vec![0.0; slots], terms: vec![Vec::new(); slots] }
    }

    fn slot(i: usize, j: usize) -> usize {
        debug_assert!(i <= j);
        j * (j + 1) / 2 + i
    }

    fn add_const(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.cst[Self::slot(i, j)] += v;
    }

    fn add_term(&mut self, i: usize, j: usize, var: usize, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.terms[Self::slot(i, j)].push((var, coeff));
    }

    /// Append this block to the program as a PSD-triangle cone.
    fn emit(self, prog: &mut ConeProgram) {
        for j in 0..self.dim {
            for i in 0..=j {
                let slot = Self::slot(i, j);
                let scale = svec_scale(i, j);
                let coeffs: Vec<(usize, f64)> =
                    self.terms[slot].iter().map(|&(v, c)| (v, -scale * c)).collect();
                prog.push_row(&coeffs, scale * self.cst[slot]);
            }
        }
        prog.push_cone(ConeSpec::PsdTriangle(self.dim));
    }
}

/// Solve the terminal-ingredient LMI for one subsystem and post-process the
/// certificate. Decision variables are the inverse-cost block `X`, the gain
/// parameter `M`, an inverse bound `Gamma` (its trace is minimised) and the
/// multiplier weight `tau >= 0`; the constraints are `X > 0`, `Gamma > 0`,
/// `[Gamma I; I X] > 0` and the big synthesis LMI.
pub fn synthesize(
    s: &SynthesisData,
    q_weight: &DMatrix<f64>,
    r_weight: &DMatrix<f64>,
    backend: &dyn SdpSolver,
    opts: &SynthesisOptions,
) -> Result<SynthesisCertificate> {
    let dims = s.shift.dims;
    let d = dims.dim();
    let (m, p) = (dims.input_dim, dims.output_dim);
    if q_weight.nrows() != p || r_weight.nrows() != m {
        return Err(Error::Dimension("weight dims do not match subsystem dims".into()));
    }
    let t_y = output_selector(dims);
    let q_r = linalg::sym_sqrt(q_weight) * &t_y; // p x d factor of T' Q T
    let r_r = linalg::chol_upper(r_weight, "input weight")?;
    let p_bar = build_uncertainty_multiplier(s);
    // variable layout: vech(X) | vec(M) row-major | vech(Gamma)
    let tri = d * (d + 1) / 2;
    let idx_x = |i: usize, j: usize| -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        SymAffine::slot(i, j)
    };
    let idx_m = |r: usize, c: usize| tri + r * d + c;
    let idx_g = |i: usize, j: usize| -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        tri + m * d + SymAffine::slot(i, j)
    };
    // one extra variable: the strictness margin of the big LMI, which is
    // maximised. Pushing the margin keeps the solution in the fat interior;
    // any objective that rides a constraint boundary (such as minimising
    // the terminal-cost bound) leaves the certificate at the mercy of
    // solver inexactness.
    let idx_delta = tri + m * d + tri;
    let num_vars = idx_delta + 1;

    let build_program = |tau: f64| -> ConeProgram {
        let mut prog = ConeProgram::new(num_vars);
        prog.cost_lin[idx_delta] = -1.0; // maximise the margin
        for i in 0..d {
            prog.cost_lin[idx_g(i, i)] = 1e-12; // tie-break the inert bound block
        }

        // the inequalities are scale-free in X up to the stage-cost block,
        // and the objective alone would push X toward an ill-conditioned
        // corner; pinning trace(X) makes the problem compact and well
        // scaled, and minimising trace(Gamma) >= trace(X^-1) then
        // conditions X
        let diag_x: Vec<(usize, f64)> = (0..d).map(|i| (idx_x(i, i), 1.0)).collect();
        prog.push_row(&diag_x, d as f64);
        prog.push_cone(ConeSpec::Zero(1));

        // X - pd_margin I  psd
        let mut blk = SymAffine::new(d);
        for j in 0..d {
            for i in 0..=j {
                blk.add_term(i, j, idx_x(i, j), 1.0);
            }
            blk.add_const(j, j, -opts.pd_margin);
        }
        blk.emit(&mut prog);

        // Gamma - pd_margin I  psd
        let mut blk = SymAffine::new(d);
        for j in 0..d {
            for i in 0..=j {
                blk.add_term(i, j, idx_g(i, j), 1.0);
            }
            blk.add_const(j, j, -opts.pd_margin);
        }
        blk.emit(&mut prog);

        // [Gamma I; I X] - pd_margin I  psd
        let mut blk = SymAffine::new(2 * d);
        for j in 0..d {
            for i in 0..=j {
                blk.add_term(i, j, idx_g(i, j), 1.0);
                blk.add_term(d + i, d + j, idx_x(i, j), 1.0);
            }
            blk.add_const(j, d + j, 1.0);
            blk.add_const(j, j, -opts.pd_margin);
            blk.add_const(d + j, d + j, -opts.pd_margin);
        }
        blk.emit(&mut prog);

        // -(big LMI) - lmi_margin I  psd, where the big LMI stacks:
        //   [ tau p_bar - diag(X, 0) | [A_bar X + B_u M; X; M] | 0           ]
        //   [           *            |          -X             | [QrX; RrM]' ]
        //   [           *            |           *             | -I          ]
        let d1 = 2 * d + m;
        let dim_big = d1 + d + p + m;
        let mut big = SymAffine::new(dim_big);
        // (1,1), negated: the weighted multiplier is constant for fixed tau
        for j in 0..d1 {
            for i in 0..=j {
                big.add_const(i, j, -tau * p_bar[(i, j)]);
                if j < d {
                    big.add_term(i, j, idx_x(i, j), 1.0);
                }
            }
        }
        // (1,2): the stacked [A_bar X + B_u M; X; M], negated
        for b in 0..d {
            let col = d1 + b;
            for a in 0..d {
                for k in 0..d {
                    big.add_term(a, col, idx_x(k, b), -s.shift.a_bar[(a, k)]);
                }
                for k in 0..m {
                    big.add_term(a, col, idx_m(k, b), -s.shift.b_u[(a, k)]);
                }
                big.add_term(d + a, col, idx_x(a, b), -1.0);
            }
            for r in 0..m {
                big.add_term(2 * d + r, col, idx_m(r, b), -1.0);
            }
        }
        // (2,2): X
        for j in 0..d {
            for i in 0..=j {
                big.add_term(d1 + i, d1 + j, idx_x(i, j), 1.0);
            }
        }
        // (2,3): -[Qr X; Rr M]'
        for a in 0..d {
            for bb in 0..p + m {
                let col = d1 + d + bb;
                if bb < p {
                    for k in 0..d {
                        big.add_term(d1 + a, col, idx_x(k, a), -q_r[(bb, k)]);
                    }
                } else {
                    for k in 0..m {
                        big.add_term(d1 + a, col, idx_m(k, a), -r_r[(bb - p, k)]);
                    }
                }
            }
        }
        // (3,3): identity, then the (maximised) strictness margin
        for j in 0..p + m {
            big.add_const(d1 + d + j, d1 + d + j, 1.0);
        }
        for j in 0..dim_big {
            big.add_term(j, j, idx_delta, -1.0);
        }
        big.emit(&mut prog);

        // margin bounds keep the program compact
        prog.push_row(&[(idx_delta, -1.0)], 0.0);
        prog.push_row(&[(idx_delta, 1.0)], 1e3);
        prog.push_cone(ConeSpec::Nonnegative(2));
        prog
    };

    let mut failures: Vec<String> = Vec::new();
    let mut last_err: Option<Error> = None;
    #[allow(clippy::type_complexity)]
    let mut accepted: Option<(
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        f64,
        f64,
        f64,
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
    )> = None;
    'taus: for &tau in &opts.tau_grid {
        let prog = build_program(tau);
        let sol = match backend.solve_sdp(&prog) {
            Ok(sol) => sol,
            Err(e) => {
                failures.push(format!("tau {tau:.1e}: {e}"));
                last_err = Some(e);
                continue;
            }
        };
        if matches!(sol.status, crate::solver::SolveStatus::PrimalInfeasible) {
            failures.push(format!("tau {tau:.1e}: LMI infeasible"));
            last_err = Some(Error::SynthesisInfeasible {
                node: usize::MAX,
                detail: failures.join("; "),
            });
            continue;
        }
        // a stalled-but-restored iterate is still a candidate point; the
        // certificate re-checks below are the actual gate
        if !sol.is_optimal() && sol.status != crate::solver::SolveStatus::Stalled {
            failures.push(format!("tau {tau:.1e}: solver status {:?}", sol.status));
            last_err = Some(Error::Solver(format!(
                "LMI solve failed on the whole multiplier grid: {}",
                failures.join("; ")
            )));
            continue;
        }

        let mut x_mat = DMatrix::zeros(d, d);
        let mut gamma_mat = DMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..=j {
                x_mat[(i, j)] = sol.x[idx_x(i, j)];
                x_mat[(j, i)] = sol.x[idx_x(i, j)];
                gamma_mat[(i, j)] = sol.x[idx_g(i, j)];
                gamma_mat[(j, i)] = sol.x[idx_g(i, j)];
            }
        }
        let mut m_gain = DMatrix::zeros(m, d);
        for r in 0..m {
            for c in 0..d {
                m_gain[(r, c)] = sol.x[idx_m(r, c)];
            }
        }

        // re-check the returned point on the original (unlifted) inequality,
        // independently of solver status codes
        let ev_x = linalg::sym_eigenvalues(&x_mat);
        if ev_x[0] <= 0.0 {
            failures.push(format!("tau {tau:.1e}: X not positive definite ({:.2e})", ev_x[0]));
            last_err =
                Some(Error::Solver(format!("X fails positive definiteness: {}", ev_x[0])));
            continue 'taus;
        }
        let big_val = assemble_big(s, &p_bar, &q_r, &r_r, &x_mat, &m_gain, tau);
        let ev_big = linalg::sym_eigenvalues(&big_val);
        let lmi_residual = ev_big[ev_big.len() - 1];
        let big_scale = big_val.norm().max(1.0);
        if lmi_residual > -opts.lmi_margin && lmi_residual > 1e-7 * big_scale {
            failures.push(format!(
                "tau {tau:.1e}: LMI residual {:.2e} on scale {:.2e}",
                lmi_residual, big_scale
            ));
            last_err = Some(Error::Solver(format!(
                "LMI certificate re-check failed: {}",
                failures.join("; ")
            )));
            continue 'taus;
        }
        // extract the certificate and verify its substance: the terminal
        // cost must be positive definite and the implied decoupled decrease
        // strictly negative for the data-reconstructed dynamics
        let x_inv = match symmetric_inverse(&x_mat) {
            Ok(v) => v,
            Err(e) => {
                last_err = Some(e);
                continue 'taus;
            }
        };
        let p_mat = linalg::symmetrize(&(&x_inv - t_y.transpose() * q_weight * &t_y));
        let ev_p = linalg::sym_eigenvalues(&p_mat);
        if ev_p[0] <= 0.0 {
            failures.push(format!("tau {tau:.1e}: P not positive definite ({:.2e})", ev_p[0]));
            last_err = Some(Error::SynthesisInfeasible {
                node: usize::MAX,
                detail: failures.join("; "),
            });
            continue 'taus;
        }
        let k_gain = &m_gain * &x_inv;
        let (a_tilde, b_tilde) = reconstruct_transition(s)?;
        let a_cl = &a_tilde + &b_tilde * &k_gain;
        let d_res = linalg::symmetrize(
            &(a_cl.transpose() * &x_inv * &a_cl - &x_inv
                + t_y.transpose() * q_weight * &t_y
                + k_gain.transpose() * r_weight * &k_gain),
        );
        let eta_bar = match linalg::gen_eig_max(&d_res, &p_mat) {
            Ok(v) => -v,
            Err(e) => {
                last_err = Some(e);
                continue 'taus;
            }
        };
        if eta_bar <= 0.0 {
            failures.push(format!("tau {tau:.1e}: decrease rate {eta_bar:.2e}"));
            last_err = Some(Error::SynthesisInfeasible {
                node: usize::MAX,
                detail: failures.join("; "),
            });
            continue 'taus;
        }
        accepted =
            Some((p_mat, k_gain, x_mat, gamma_mat, tau, lmi_residual, eta_bar, a_tilde, b_tilde, a_cl));
        break;
    }
    #[allow(clippy::type_complexity)]
    let (p_mat, k_gain, x_mat, gamma_mat, tau, lmi_residual, eta_bar, a_tilde, b_tilde, a_cl): (
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
        f64,
        f64,
        f64,
        DMatrix<f64>,
        DMatrix<f64>,
        DMatrix<f64>,
    ) = match accepted {
        Some(t) => t,
        None => {
            return Err(last_err.unwrap_or_else(|| {
                Error::Solver("terminal synthesis produced no candidate".into())
            }))
        }
    };

    Ok(SynthesisCertificate {
        p: p_mat,
        k: k_gain,
        x_mat,
        tau,
        gamma: gamma_mat.trace().max(0.0).sqrt(),
        lmi_residual,
        eta_bar,
        a_tilde,
        b_tilde,
        a_cl,
        dims,
    })
}

/// Numeric value of the big LMI block at a candidate point.
fn assemble_big(
    s: &SynthesisData,
    p_bar: &DMatrix<f64>,
    q_r: &DMatrix<f64>,
    r_r: &DMatrix<f64>,
    x: &DMatrix<f64>,
    m_gain: &DMatrix<f64>,
    tau: f64,
) -> DMatrix<f64> {
    let dims = s.shift.dims;
    let d = dims.dim();
    let (m, p) = (dims.input_dim, dims.output_dim);
    let d1 = 2 * d + m;
    let dim_big = d1 + d + p + m;
    let mut big = DMatrix::zeros(dim_big, dim_big);
    big.view_mut((0, 0), (d1, d1)).copy_from(&(p_bar * tau));
    for i in 0..d {
        for j in 0..d {
            big[(i, j)] -= x[(i, j)];
        }
    }
    let top = &s.shift.a_bar * x + &s.shift.b_u * m_gain;
    big.view_mut((0, d1), (d, d)).copy_from(&top);
    big.view_mut((d, d1), (d, d)).copy_from(x);
    big.view_mut((2 * d, d1), (m, d)).copy_from(m_gain);
    big.view_mut((d1, d1), (d, d)).copy_from(&(-x));
    let mut right = DMatrix::zeros(p + m, d);
    right.view_mut((0, 0), (p, d)).copy_from(&(q_r * x));
    right.view_mut((p, 0), (m, d)).copy_from(&(r_r * m_gain));
    big.view_mut((d1, d1 + d), (d, p + m)).copy_from(&right.transpose());
    for j in 0..p + m {
        big[(d1 + d + j, d1 + d + j)] = -1.0;
    }
    for i in 0..dim_big {
        for j in 0..i {
            big[(i, j)] = big[(j, i)];
        }
    }
    big
}

/// Reconstruct the extended-state transition from data: for exact data the
/// uncertainty row is uniquely determined by the residual and the snapshot
/// matrix (which must have full row rank).
pub fn reconstruct_transition(s: &SynthesisData) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dims = s.shift.dims;
    let d = dims.dim();
    let m = dims.input_dim;
    let p = dims.output_dim;
    if linalg::rank(&s.z, 1e-9) < d + m {
        return Err(Error::SynthesisInfeasible {
            node: usize::MAX,
            detail: "snapshot matrix [xi; u] is row-rank deficient; data not rich enough".into(),
        });
    }
    let w = s.shift.b_w.transpose() * &s.m_res; // p x cols
    let z_t = s.z.transpose();
    let mut delta = DMatrix::zeros(p, d + m);
    for r in 0..p {
        let rhs = w.row(r).transpose();
        let (dr, res) = linalg::lstsq_min_norm(&z_t, &rhs, 1e-12);
        if res > 1e-6 * (1.0 + rhs.norm()) {
            return Err(Error::SynthesisInfeasible {
                node: usize::MAX,
                detail: format!("residual row not in the snapshot row space ({res:.3e})"),
            });
        }
        delta.row_mut(r).copy_from(&dr.transpose());
    }
    let a_tilde = &s.shift.a_bar + &s.shift.b_w * delta.columns(0, d);
    let b_tilde = &s.shift.b_u + &s.shift.b_w * delta.columns(d, m);
    Ok((a_tilde, b_tilde))
}

fn symmetric_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(linalg::symmetrize(a))
        .ok_or_else(|| Error::Parameter("matrix not positive definite".into()))?;
    Ok(chol.inverse())
}

/// Terminal cost, controller and set levels used by the online controller.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalIngredients {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub epsilon: f64,
    /// Decrease rate of the unweighted extended-state norm.
    pub eta: f64,
    /// Terminal-set tightening factor in (0, 1).
    pub theta: f64,
    pub dims: XiDims,
}

impl TerminalIngredients {
    pub fn validate(&self) -> Result<()> {
        let d = self.dims.dim();
        if self.p.nrows() != d || self.p.ncols() != d || self.k.ncols() != d {
            return Err(Error::Dimension("terminal ingredient dims inconsistent".into()));
        }
        if (self.p.clone() - self.p.transpose()).amax() > 1e-9 {
            return Err(Error::Parameter("terminal cost matrix not symmetric".into()));
        }
        let ev = linalg::sym_eigenvalues(&self.p);
        if ev[0] <= 0.0 {
            return Err(Error::Parameter("terminal cost matrix not positive definite".into()));
        }
        if self.epsilon <= 0.0 || self.eta <= 0.0 {
            return Err(Error::Parameter(
                "terminal level and decrease rate must be positive".into(),
            ));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Parameter(format!("theta {} outside (0, 1)", self.theta)));
        }
        let lambda_max = ev[ev.len() - 1];
        if self.theta < 1.0 - self.eta / lambda_max - 1e-12 {
            return Err(Error::Parameter(format!(
                "theta {} below the recursive-feasibility bound {}",
                self.theta,
                1.0 - self.eta / lambda_max
            )));
        }
        Ok(())
    }

    /// Largest input magnitude the terminal controller commands over the
    /// epsilon-ellipsoid, per input row (ellipsoid support function).
    pub fn input_support(&self) -> Result<DVector<f64>> {
        let p_inv = symmetric_inverse(&self.p)?;
        let g = &self.k * p_inv * self.k.transpose();
        Ok(DVector::from_fn(self.k.nrows(), |j, _| {
            (self.epsilon * g[(j, j)]).max(0.0).sqrt()
        }))
    }
}

/// Options for [`calibrate`].
#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    pub epsilon: f64,
    pub theta_floor: f64,
    /// Optional explicit tightening factor; must satisfy the
    /// recursive-feasibility bound.
    pub theta_override: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Violation tolerance of the sampled decrease checks.
    pub decrease_tol: f64,
    /// Optional neighbour-output magnitude the coupled decrease must
    /// survive; when unset the largest passing magnitude is only reported.
    /// The coupled inequality cannot hold for outputs that stay large as
    /// the own state vanishes, so by default no absolute magnitude is
    /// demanded.
    pub required_coupling: Option<f64>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            theta_floor: 0.5,
            theta_override: None,
            samples: 1000,
            seed: 0,
            decrease_tol: 1e-8,
            required_coupling: None,
        }
    }
}

/// Diagnostics of a calibration run.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub eta_bar: f64,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    /// Neighbour-output magnitude representative of terminal-phase operation.
    pub typical_coupling: f64,
    /// Largest sampled absolute neighbour-output magnitude preserving the
    /// coupled decrease.
    pub max_passing_coupling: f64,
    /// Largest sampled ratio of neighbour-output norm to the weighted own
    /// state norm preserving the coupled decrease; quantifies how much
    /// relative coupling the terminal pair tolerates.
    pub max_passing_coupling_ratio: f64,
    pub epsilon_shrunk: bool,
    /// Worst input-constraint margin of the terminal controller over the
    /// epsilon-ellipsoid (positive means feasible).
    pub input_margin: f64,
}

/// Convert a synthesis certificate into the online terminal ingredients:
/// fix the terminal level (shrinking it if the terminal controller would
/// leave the input box), convert the weighted decrease into the unweighted
/// form, pick the tightening factor, and validate the coupled decrease by
/// sampling.
pub fn calibrate(
    cert: &SynthesisCertificate,
    q_weight: &DMatrix<f64>,
    r_weight: &DMatrix<f64>,
    input_box: &InputBox,
    opts: &CalibrationOptions,
) -> Result<(TerminalIngredients, CalibrationReport)> {
    let dims = cert.dims;
    if input_box.dim() != dims.input_dim {
        return Err(Error::Dimension("input box dim mismatch".into()));
    }
    if !(opts.theta_floor > 0.0 && opts.theta_floor < 1.0) {
        return Err(Error::Parameter("theta floor must lie in (0, 1)".into()));
    }
    let ev = linalg::sym_eigenvalues(&cert.p);
    let (lambda_min_p, lambda_max_p) = (ev[0], ev[ev.len() - 1]);

    let bound = DVector::from_fn(input_box.dim(), |j, _| {
        input_box.hi()[j].min(-input_box.lo()[j])
    });
    if bound.iter().any(|b| *b <= 0.0) {
        return Err(Error::Parameter(
            "input box must contain the origin in its interior".into(),
        ));
    }
    let p_inv = symmetric_inverse(&cert.p)?;
    let g = &cert.k * &p_inv * cert.k.transpose();
    let mut epsilon = opts.epsilon;
    let mut epsilon_shrunk = false;
    for j in 0..input_box.dim() {
        if g[(j, j)] <= 0.0 {
            continue;
        }
        let cap = (0.99 * bound[j]).powi(2) / g[(j, j)];
        if cap < epsilon {
            epsilon = cap;
            epsilon_shrunk = true;
        }
    }
    let input_margin = (0..input_box.dim())
        .map(|j| bound[j] - (epsilon * g[(j, j)]).max(0.0).sqrt())
        .fold(f64::INFINITY, f64::min);

    let eta = cert.eta_bar * lambda_min_p;
    let theta_bound = 1.0 - eta / lambda_max_p;
    let theta = match opts.theta_override {
        Some(t) => {
            if t < theta_bound || t <= 0.0 || t >= 1.0 {
                return Err(Error::Parameter(format!(
                    "theta override {t} violates the recursive-feasibility bound {theta_bound}"
                )));
            }
            t
        }
        None => theta_bound.max(opts.theta_floor),
    };

    let ingredients =
        TerminalIngredients { p: cert.p.clone(), k: cert.k.clone(), epsilon, eta, theta, dims };
    ingredients.validate()?;

    // sampled validation of the coupled decrease over the epsilon-ellipsoid
    let t_y = output_selector(dims);
    let b_yn = shift_structure(dims).b_yn;
    let u_p = linalg::chol_upper(&cert.p, "terminal cost")?;
    let u_p_inv = u_p
        .try_inverse()
        .ok_or_else(|| Error::Parameter("singular terminal Cholesky factor".into()))?;
    // output support of the epsilon-ellipsoid: what neighbours sitting in
    // their own terminal sets can emit (using this agent's cost as proxy)
    let p_inv_out = &t_y * &p_inv * t_y.transpose();
    let typical_coupling = (epsilon
        * linalg::sym_eigenvalues(&p_inv_out)[p_inv_out.nrows() - 1].max(0.0))
    .sqrt();
    let q = dims.neighbor_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // radius: absolute neighbour-output norm, or a fraction of the weighted
    // own-state norm when `relative` is set
    let mut decrease_holds = |radius: f64, relative: bool, rng: &mut ChaCha8Rng| -> bool {
        for _ in 0..opts.samples {
            let dir = DVector::from_fn(dims.dim(), |_, _| rng.gen_range(-1.0f64..1.0));
            let dir = if dir.norm() == 0.0 { dir } else { dir.normalize() };
            let rho: f64 = rng.gen_range(0.0f64..1.0f64);
            let xi = &u_p_inv * dir * rho.powf(1.0 / dims.dim() as f64) * epsilon.sqrt();
            let y_n = if q == 0 {
                DVector::zeros(0)
            } else {
                let scale = if relative {
                    radius * linalg::weighted_norm(&xi, &cert.p)
                } else {
                    radius
                };
                let nd = DVector::from_fn(q, |_, _| rng.gen_range(-1.0f64..1.0));
                if nd.norm() == 0.0 { nd } else { nd.normalize() * scale }
            };
            let u = &cert.k * &xi;
            let xi_plus = &cert.a_cl * &xi + &b_yn * &y_n;
            let y_out = &t_y * &xi_plus;
            let lhs = linalg::weighted_norm(&xi_plus, &cert.p).powi(2)
                - linalg::weighted_norm(&xi, &cert.p).powi(2)
                + eta * xi.norm_squared()
                + y_out.dot(&(q_weight * &y_out))
                + u.dot(&(r_weight * &u));
            if lhs > opts.decrease_tol {
                return false;
            }
        }
        true
    };

    if !decrease_holds(0.0, false, &mut rng) {
        return Err(Error::WeakCoupling(
            "decoupled terminal decrease fails on samples; certificate invalid".into(),
        ));
    }
    let mut max_passing_coupling = if q == 0 { f64::INFINITY } else { 0.0 };
    let mut max_passing_coupling_ratio = if q == 0 { f64::INFINITY } else { 0.0 };
    if q > 0 {
        for exp in (-8..=0).rev() {
            let r = typical_coupling * 10f64.powi(exp);
            if decrease_holds(r, false, &mut rng) {
                max_passing_coupling = r;
                break;
            }
        }
        for ratio in [2.0, 1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.001] {
            if decrease_holds(ratio, true, &mut rng) {
                max_passing_coupling_ratio = ratio;
                break;
            }
        }
        if let Some(required) = opts.required_coupling {
            if required > max_passing_coupling && !decrease_holds(required, false, &mut rng) {
                return Err(Error::WeakCoupling(format!(
                    "terminal decrease fails under neighbour outputs of magnitude {required:.3e} \
                     (largest passing {max_passing_coupling:.3e})"
                )));
            }
        }
    }

    let report = CalibrationReport {
        eta_bar: cert.eta_bar,
        lambda_min_p,
        lambda_max_p,
        typical_coupling,
        max_passing_coupling,
        max_passing_coupling_ratio,
        epsilon_shrunk,
        input_margin,
    };
    Ok((ingredients, report))
}

#[derive(Serialize, Deserialize)]
struct DimsFile {
    lag: usize,
    input_dim: usize,
    output_dim: usize,
    neighbor_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct IngredientsFile {
    dims: DimsFile,
    epsilon: f64,
    eta: f64,
    theta: f64,
    /// Row-major terminal cost matrix.
    p: Vec<f64>,
    /// Row-major terminal gain.
    k: Vec<f64>,
}

impl TerminalIngredients {
    pub fn to_toml(&self) -> String {
        let file = IngredientsFile {
            dims: DimsFile {
                lag: self.dims.lag,
                input_dim: self.dims.input_dim,
                output_dim: self.dims.output_dim,
                neighbor_dim: self.dims.neighbor_dim,
            },
            epsilon: self.epsilon,
            eta: self.eta,
            theta: self.theta,
            p: self.p.transpose().as_slice().to_vec(),
            k: self.k.transpose().as_slice().to_vec(),
        };
        toml::to_string(&file).expect("terminal ingredients serialise")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: IngredientsFile =
            toml::from_str(text).map_err(|e| Error::Format(format!("ingredient file: {e}")))?;
        let dims = XiDims {
            lag: file.dims.lag,
            input_dim: file.dims.input_dim,
            neighbor_dim: file.dims.neighbor_dim,
            output_dim: file.dims.output_dim,
        };
        let d = dims.dim();
        if file.p.len() != d * d {
            return Err(Error::Format(format!(
                "terminal cost has {} entries, expected {}",
                file.p.len(),
                d * d
            )));
        }
        if file.k.len() != dims.input_dim * d {
            return Err(Error::Format("terminal gain has wrong entry count".into()));
        }
        let out = Self {
            p: DMatrix::from_row_slice(d, d, &file.p),
            k: DMatrix::from_row_slice(dims.input_dim, d, &file.k),
            epsilon: file.epsilon,
            eta: file.eta,
            theta: file.theta,
            dims,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
