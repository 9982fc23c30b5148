//! Shared oracles and fixtures for the crate's unit tests.

use nalgebra::{DMatrix, DVector};

use crate::plant::{
    benchmark, collect_data, required_pe_order, CollectOptions, DataSet, InputBox, NetworkModel,
    SubsystemModel, XiDims,
};
use crate::signals::DEFAULT_RANK_TOL;

/// Cart chain plus recorded data, excitation over the full input box.
pub fn chain_data(
    nodes: usize,
    seed: u64,
    lag: usize,
    horizon: usize,
) -> (NetworkModel, Vec<DataSet>) {
    let net = benchmark::cart_chain(nodes, Default::default()).unwrap();
    let opts = CollectOptions {
        length: 100,
        pe_order: required_pe_order(horizon, lag),
        excitation: vec![InputBox::symmetric(1, 2.0); nodes],
        seed,
        retries: 5,
        rank_tol: DEFAULT_RANK_TOL,
    };
    let data = collect_data(&net, &opts).unwrap();
    (net, data)
}

/// The true unknown last-block-row of the extended-state transition,
/// `delta = [G_n .. G_1, S_n .. S_1, F_n .. F_1, D]`, derived from the model
/// through the observability map. Requires an invertible `lag`-step
/// observability matrix (square case).
pub fn true_delta(sub: &SubsystemModel, neighbor_dim: usize, lag: usize) -> DMatrix<f64> {
    let n_state = sub.state_dim();
    let (m, p, q) = (sub.input_dim(), sub.output_dim(), neighbor_dim);
    assert_eq!(lag * p, n_state, "observability map must be square");
    // stacked coupling matrix: x+ = A x + B u + B_c yn
    let mut b_c = DMatrix::zeros(n_state, q);
    let mut col = 0;
    for bij in sub.coupling.values() {
        b_c.view_mut((0, col), (n_state, bij.ncols())).copy_from(bij);
        col += bij.ncols();
    }

    // y_window = Obs x_{t-n} + T_u u_window + T_yn yn_window
    let mut obs = DMatrix::zeros(lag * p, n_state);
    let mut a_pow = DMatrix::identity(n_state, n_state);
    for k in 0..lag {
        obs.view_mut((k * p, 0), (p, n_state)).copy_from(&(&sub.c * &a_pow));
        a_pow = &sub.a * a_pow;
    }
    let mut t_u = DMatrix::zeros(lag * p, lag * m);
    let mut t_yn = DMatrix::zeros(lag * p, lag * q);
    for k in 0..lag {
        for j in 0..k {
            let mut a_kj = DMatrix::identity(n_state, n_state);
            for _ in 0..k - 1 - j {
                a_kj = &sub.a * a_kj;
            }
            let cu = &sub.c * &a_kj * &sub.b;
            let cyn = &sub.c * &a_kj * &b_c;
            t_u.view_mut((k * p, j * m), (p, m)).copy_from(&cu);
            t_yn.view_mut((k * p, j * q), (p, q)).copy_from(&cyn);
        }
        t_u.view_mut((k * p, k * m), (p, m)).copy_from(&sub.d);
    }
    let obs_inv = obs.try_inverse().expect("observability matrix singular");

    // x_t = A^lag x_{t-n} + sum_k A^{lag-1-k} (B u_k + B_c yn_k)
    let mut a_n = DMatrix::identity(n_state, n_state);
    for _ in 0..lag {
        a_n = &sub.a * a_n;
    }
    let mut r_u = DMatrix::zeros(n_state, lag * m);
    let mut r_yn = DMatrix::zeros(n_state, lag * q);
    for k in 0..lag {
        let mut a_k = DMatrix::identity(n_state, n_state);
        for _ in 0..lag - 1 - k {
            a_k = &sub.a * a_k;
        }
        r_u.view_mut((0, k * m), (n_state, m)).copy_from(&(&a_k * &sub.b));
        r_yn.view_mut((0, k * q), (n_state, q)).copy_from(&(&a_k * &b_c));
    }

    // y_t = C x_t + D u_t in window coordinates
    let ca = &sub.c * &a_n * &obs_inv;
    let g_blocks = &sub.c * &r_u - &ca * &t_u; // on u window
    let s_blocks = &sub.c * &r_yn - &ca * &t_yn; // on yn window
    let f_blocks = ca; // on y window

    let dims = XiDims { lag, input_dim: m, neighbor_dim: q, output_dim: p };
    let mut delta = DMatrix::zeros(p, dims.dim() + m);
    delta.view_mut((0, 0), (p, lag * m)).copy_from(&g_blocks);
    delta.view_mut((0, lag * m), (p, lag * q)).copy_from(&s_blocks);
    delta.view_mut((0, lag * (m + q)), (p, lag * p)).copy_from(&f_blocks);
    delta.view_mut((0, dims.dim()), (p, m)).copy_from(&sub.d);
    delta
}

/// Discrete Lyapunov sum `P = sum_k (A^T)^k W A^k` by doubling; requires
/// `rho(A) < 1`.
pub fn dlyap(a: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let rho = a.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max);
    assert!(rho < 1.0, "dlyap needs a Schur-stable matrix, got spectral radius {rho}");
    let mut p = w.clone();
    let mut m = a.clone();
    for _ in 0..60 {
        p = &p + m.transpose() * &p * &m;
        m = &m * &m;
        if m.norm() < 1e-16 {
            break;
        }
    }
    p
}

/// Uniform sample inside the ellipsoid `{v : v' W v <= level}`.
pub fn sample_ellipsoid<R: rand::Rng>(
    rng: &mut R,
    chol_upper_w: &DMatrix<f64>,
    level: f64,
) -> DVector<f64> {
    let dim = chol_upper_w.nrows();
    let dir = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0f64..1.0)).normalize();
    let radius: f64 = rng.gen_range(0.0f64..1.0f64).powf(1.0 / dim as f64);
    let ball = dir * radius * level.sqrt();
    chol_upper_w
        .clone()
        .try_inverse()
        .expect("cholesky factor invertible")
        * ball
}
