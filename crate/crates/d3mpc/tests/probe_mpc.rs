use d3mpc::agent::*;
use d3mpc::behavior::BehavioralPredictor;
use d3mpc::plant::{benchmark, collect_data, required_pe_order, simulate_subsystem, CollectOptions, InputBox};
use d3mpc::signals::{Trajectory, DEFAULT_RANK_TOL};
use d3mpc::solver::{BackendSettings, ClarabelBackend};
use d3mpc::terminal::{build_synthesis_data, calibrate, synthesize};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn probe() {
    let lag = 2usize; let hor = 5usize;
    let net = benchmark::cart_chain(3, Default::default()).unwrap();
    let copts = CollectOptions {
        length: 100, pe_order: required_pe_order(hor, lag),
        excitation: vec![InputBox::symmetric(1, 2.0); 3],
        seed: 44, retries: 5, rank_tol: DEFAULT_RANK_TOL,
    };
    let data = collect_data(&net, &copts).unwrap();
    let q = DMatrix::identity(1, 1);
    let r = DMatrix::identity(1, 1);
    let s = build_synthesis_data(&data[1], lag).unwrap();
    let cert = synthesize(&s, &q, &r, &ClarabelBackend::default(), &Default::default()).unwrap();
    let input_box = InputBox::symmetric(1, 2.0);
    let (ing, _) = calibrate(&cert, &q, &r, &input_box, &Default::default()).unwrap();
    let predictor = BehavioralPredictor::new(data[1].clone(), lag, hor).unwrap();
    let cfg = AgentConfig {
        id: 1, lag, horizon: hor, q_weight: q, r_weight: r, omega: 0.01,
        input_box, terminal: ing, predictor, tolerances: Default::default(),
    };
    let t = 0i64; let n = lag as i64; let span = lag + hor;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x0 = DVector::from_fn(2, |_, _| rng.gen_range(-1e-5..1e-5));
    let u = Trajectory::zeros(1, t - n, span);
    let yn = Trajectory::from_samples(
        t - n,
        &(0..span).map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1e-6..1e-6))).collect::<Vec<_>>(),
    ).unwrap();
    let y = simulate_subsystem(net.subsystem(1), &x0, &u, &yn).unwrap();
    let neighbor = NeighborTrajectory { values: yn.clone() };
    let reference = ConsistencyReference {
        u_hat: u.window(t, t + hor as i64 - 1).unwrap(),
        y_hat: y.window(t, t + hor as i64 - 1).unwrap(),
        u_prev: u.window(t, t + hor as i64 - 1).unwrap(),
        y_prev: y.window(t, t + hor as i64 - 1).unwrap(),
    };
    for (name, settings) in [
        ("default", BackendSettings::default()),
        ("noeq", BackendSettings { equilibrate: false, ..Default::default() }),
        ("looser", BackendSettings { tol_feas: 1e-8, tol_gap_abs: 1e-9, tol_gap_rel: 1e-9, ..Default::default() }),
        ("streg", BackendSettings { static_regularization: 1e-7, ..Default::default() }),
    ] {
        let backend = ClarabelBackend::new(settings);
        let res = solve_local_mpc(
            &cfg, t,
            &u.window(t - n, t - 1).unwrap(),
            &y.window(t - n, t - 1).unwrap(),
            &neighbor, &reference, &backend,
        );
        println!("{name}: {:?}", res.map(|s| s.cost));
    }

}
