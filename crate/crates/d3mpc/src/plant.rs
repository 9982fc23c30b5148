//! Ground-truth coupled LTI network.
//!
//! Used for data generation, closed-loop actuation and test oracles only;
//! the controller side of the crate never reads the model matrices.
//!
//! Subsystem dynamics (synchronous update):
//!
//! ```text
//! y_t^i     = C_ii x_t^i + D_ii u_t^i                       (all outputs first)
//! x_{t+1}^i = A_ii x_t^i + B_ii u_t^i + sum_j B_ij y_t^j    (then all states)
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::signals::{check_persistent_excitation, stack_signals, Trajectory, DEFAULT_RANK_TOL};

/// Compact box input-constraint set, one interval per input component.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl InputBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension("input box bound dims differ".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::Parameter("input box is empty".into()));
        }
        Ok(Self { lo, hi })
    }

    /// Symmetric box `[-bound, bound]^dim`.
    pub fn symmetric(dim: usize, bound: f64) -> Self {
        Self {
            lo: DVector::from_element(dim, -bound),
            hi: DVector::from_element(dim, bound),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        u.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            if self.lo[i] == self.hi[i] {
                self.lo[i]
            } else {
                rng.gen_range(self.lo[i]..self.hi[i])
            }
        })
    }
}

/// Dimensions of an extended state window: the past `lag` inputs, stacked
/// neighbour outputs and own outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XiDims {
    pub lag: usize,
    pub input_dim: usize,
    pub neighbor_dim: usize,
    pub output_dim: usize,
}

impl XiDims {
    pub fn dim(&self) -> usize {
        self.lag * (self.input_dim + self.neighbor_dim + self.output_dim)
    }

    /// Row range of the `w`-th input sample in the stacked vector
    /// (`w = 0` is the oldest).
    pub fn u_rows(&self, w: usize) -> std::ops::Range<usize> {
        let r0 = w * self.input_dim;
        r0..r0 + self.input_dim
    }

    pub fn yn_rows(&self, w: usize) -> std::ops::Range<usize> {
        let r0 = self.lag * self.input_dim + w * self.neighbor_dim;
        r0..r0 + self.neighbor_dim
    }

    pub fn y_rows(&self, w: usize) -> std::ops::Range<usize> {
        let r0 = self.lag * (self.input_dim + self.neighbor_dim) + w * self.output_dim;
        r0..r0 + self.output_dim
    }
}

/// Extended state `xi_t`: inputs, neighbour outputs and own outputs over
/// `[t-lag, t-1]`, each window oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub value: DVector<f64>,
    pub dims: XiDims,
}

/// Assemble the extended state at time `t` from signal histories covering
/// `[t-lag, t-1]`.
pub fn extended_state_from_history(
    u: &Trajectory,
    y_neighbors: &Trajectory,
    y: &Trajectory,
    t: i64,
    lag: usize,
) -> Result<ExtendedState> {
    let dims = XiDims {
        lag,
        input_dim: u.dim(),
        neighbor_dim: y_neighbors.dim(),
        output_dim: y.dim(),
    };
    let a = t - lag as i64;
    let b = t - 1;
    let mut value = DVector::zeros(dims.dim());
    let nu = dims.lag * dims.input_dim;
    let nyn = dims.lag * dims.neighbor_dim;
    value.rows_mut(0, nu).copy_from(&u.stacked(a, b)?);
    value.rows_mut(nu, nyn).copy_from(&y_neighbors.stacked(a, b)?);
    value
        .rows_mut(nu + nyn, dims.lag * dims.output_dim)
        .copy_from(&y.stacked(a, b)?);
    Ok(ExtendedState { value, dims })
}

/// One subsystem of the network: its own state-space matrices plus the
/// coupling matrices B_ij indexed by neighbour id.
#[derive(Debug, Clone)]
pub struct SubsystemModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub coupling: BTreeMap<usize, DMatrix<f64>>,
}

impl SubsystemModel {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    fn validate(&self) -> Result<()> {
        let (n, m, p) = (self.state_dim(), self.input_dim(), self.output_dim());
        if self.a.ncols() != n || self.b.nrows() != n || self.c.ncols() != n {
            return Err(Error::Dimension("subsystem state dims inconsistent".into()));
        }
        if self.d.nrows() != p || self.d.ncols() != m {
            return Err(Error::Dimension("subsystem feedthrough dims inconsistent".into()));
        }
        for (j, bij) in &self.coupling {
            if bij.nrows() != n {
                return Err(Error::Dimension(format!("coupling matrix to neighbour {j} has wrong row count")));
            }
        }
        Ok(())
    }
}

/// Directed coupling graph: `neighbors[i]` lists the nodes whose outputs
/// drive node `i` (sorted, no self-loops). Node ids are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingGraph {
    node_count: usize,
    neighbors: Vec<Vec<usize>>,
}

impl CouplingGraph {
    /// Build from directed edges `(j, i)` meaning "output of j enters i".
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::Parameter("network needs at least two subsystems".into()));
        }
        let mut neighbors = vec![Vec::new(); node_count];
        for &(j, i) in edges {
            if i >= node_count || j >= node_count {
                return Err(Error::Parameter(format!("edge ({j}, {i}) outside node range")));
            }
            if i == j {
                return Err(Error::Parameter(format!("self-loop at node {i} not allowed")));
            }
            if !neighbors[i].contains(&j) {
                neighbors[i].push(j);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { node_count, neighbors })
    }

    /// Bidirectional chain `0 - 1 - ... - m-1`.
    pub fn chain(node_count: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..node_count.saturating_sub(1) {
            edges.push((i, i + 1));
            edges.push((i + 1, i));
        }
        Self::new(node_count, &edges)
    }

    /// Graph with the same node count and no edges at all.
    pub fn edgeless(node_count: usize) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::Parameter("network needs at least two subsystems".into()));
        }
        Ok(Self { node_count, neighbors: vec![Vec::new(); node_count] })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                out.push((j, i));
            }
        }
        out
    }
}

/// The assembled network with its current true state. Stepping is globally
/// synchronous: all outputs at time t are computed before any state advances.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    graph: CouplingGraph,
    subsystems: Vec<SubsystemModel>,
    states: Vec<DVector<f64>>,
}

impl NetworkModel {
    pub fn new(
        graph: CouplingGraph,
        subsystems: Vec<SubsystemModel>,
        states: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if subsystems.len() != graph.node_count() || states.len() != graph.node_count() {
            return Err(Error::Dimension("subsystem/state count differs from node count".into()));
        }
        for (i, sub) in subsystems.iter().enumerate() {
            sub.validate()?;
            let keys: Vec<usize> = sub.coupling.keys().cloned().collect();
            if keys != graph.neighbors(i) {
                return Err(Error::Dimension(format!(
                    "coupling keys of node {i} do not match its neighbour set"
                )));
            }
            for (&j, bij) in &sub.coupling {
                if bij.ncols() != subsystems[j].output_dim() {
                    return Err(Error::Dimension(format!(
                        "coupling matrix {j}->{i} has wrong column count"
                    )));
                }
            }
            if states[i].len() != sub.state_dim() {
                return Err(Error::Dimension(format!("state dim mismatch at node {i}")));
            }
        }
        Ok(Self { graph, subsystems, states })
    }

    pub fn graph(&self) -> &CouplingGraph {
        &self.graph
    }

    pub fn subsystem(&self, i: usize) -> &SubsystemModel {
        &self.subsystems[i]
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn set_states(&mut self, states: Vec<DVector<f64>>) -> Result<()> {
        if states.len() != self.node_count() {
            return Err(Error::Dimension("state count mismatch".into()));
        }
        for (i, x) in states.iter().enumerate() {
            if x.len() != self.subsystems[i].state_dim() {
                return Err(Error::Dimension(format!("state dim mismatch at node {i}")));
            }
        }
        self.states = states;
        Ok(())
    }

    /// Stacked neighbour output dimension of node `i`.
    pub fn neighbor_dim(&self, i: usize) -> usize {
        self.graph
            .neighbors(i)
            .iter()
            .map(|&j| self.subsystems[j].output_dim())
            .sum()
    }

    /// Apply one synchronous step: returns the outputs at the current time
    /// and advances every state.
    pub fn step(&mut self, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        if inputs.len() != self.node_count() {
            return Err(Error::Dimension("input count mismatch".into()));
        }
        let mut outputs = Vec::with_capacity(self.node_count());
        for (i, sub) in self.subsystems.iter().enumerate() {
            if inputs[i].len() != sub.input_dim() {
                return Err(Error::Dimension(format!("input dim mismatch at node {i}")));
            }
            outputs.push(&sub.c * &self.states[i] + &sub.d * &inputs[i]);
        }
        for (i, sub) in self.subsystems.iter().enumerate() {
            let mut next = &sub.a * &self.states[i] + &sub.b * &inputs[i];
            for (&j, bij) in &sub.coupling {
                next += bij * &outputs[j];
            }
            self.states[i] = next;
        }
        Ok(outputs)
    }

    /// Global state-update matrices of the coupled network,
    /// `x_{t+1} = A x_t + B u_t` with `A_ij = B_ij C_jj`, `B_ij = B_ij D_jj`.
    pub fn global_state_maps(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n_total: usize = self.subsystems.iter().map(|s| s.state_dim()).sum();
        let m_total: usize = self.subsystems.iter().map(|s| s.input_dim()).sum();
        let mut a = DMatrix::zeros(n_total, n_total);
        let mut b = DMatrix::zeros(n_total, m_total);
        let row_off: Vec<usize> = self
            .subsystems
            .iter()
            .scan(0, |acc, s| {
                let r = *acc;
                *acc += s.state_dim();
                Some(r)
            })
            .collect();
        let col_off: Vec<usize> = self
            .subsystems
            .iter()
            .scan(0, |acc, s| {
                let r = *acc;
                *acc += s.input_dim();
                Some(r)
            })
            .collect();
        for (i, sub) in self.subsystems.iter().enumerate() {
            let (r, n_i) = (row_off[i], sub.state_dim());
            a.view_mut((r, row_off[i]), (n_i, n_i)).copy_from(&sub.a);
            b.view_mut((r, col_off[i]), (n_i, sub.input_dim())).copy_from(&sub.b);
            for (&j, bij) in &sub.coupling {
                let other = &self.subsystems[j];
                let aij = bij * &other.c;
                a.view_mut((r, row_off[j]), (n_i, other.state_dim())).copy_from(&aij);
                if other.d.amax() != 0.0 {
                    let bij_d = bij * &other.d;
                    let mut block = b.view_mut((r, col_off[j]), (n_i, other.input_dim()));
                    block += bij_d;
                }
            }
        }
        (a, b)
    }
}

/// Recorded input/output data of one subsystem: its inputs, own outputs and
/// the stacked outputs of its neighbours, all of equal length and starting
/// at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub u: Trajectory,
    pub y: Trajectory,
    pub y_neighbors: Trajectory,
}

impl DataSet {
    pub fn new(u: Trajectory, y: Trajectory, y_neighbors: Trajectory) -> Result<Self> {
        if u.len() != y.len() || u.len() != y_neighbors.len() {
            return Err(Error::Dimension("data set trajectories differ in length".into()));
        }
        if u.start() != y.start() || u.start() != y_neighbors.start() {
            return Err(Error::Dimension("data set trajectories differ in start index".into()));
        }
        Ok(Self { u, y, y_neighbors })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Write as CSV: header names each signal component, one row per time
    /// index, columns ordered u, y, y_neighbors.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = Vec::new();
        for i in 0..self.u.dim() {
            header.push(format!("u[{i}]"));
        }
        for i in 0..self.y.dim() {
            header.push(format!("y[{i}]"));
        }
        for i in 0..self.y_neighbors.dim() {
            header.push(format!("y_neighbors[{i}]"));
        }
        w.write_record(&header)?;
        for k in 0..self.len() as i64 {
            let mut row = Vec::new();
            for v in self.u.sample(k).unwrap().iter() {
                row.push(format!("{v:.17e}"));
            }
            for v in self.y.sample(k).unwrap().iter() {
                row.push(format!("{v:.17e}"));
            }
            for v in self.y_neighbors.sample(k).unwrap().iter() {
                row.push(format!("{v:.17e}"));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read back a CSV produced by [`DataSet::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let mut dims = (0usize, 0usize, 0usize);
        for field in header.iter() {
            if field.starts_with("u[") {
                dims.0 += 1;
            } else if field.starts_with("y[") {
                dims.1 += 1;
            } else if field.starts_with("y_neighbors[") {
                dims.2 += 1;
            } else {
                return Err(Error::Format(format!("unexpected data column {field}")));
            }
        }
        let (m, p, q) = dims;
        let mut u_cols = Vec::new();
        let mut y_cols = Vec::new();
        let mut yn_cols = Vec::new();
        for record in r.records() {
            let record = record?;
            if record.len() != m + p + q {
                return Err(Error::Format("data row has wrong column count".into()));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|e| Error::Format(format!("bad number {s}: {e}")))
            };
            let vals: Vec<f64> = record.iter().map(parse).collect::<Result<_>>()?;
            u_cols.push(DVector::from_row_slice(&vals[0..m]));
            y_cols.push(DVector::from_row_slice(&vals[m..m + p]));
            yn_cols.push(DVector::from_row_slice(&vals[m + p..]));
        }
        if u_cols.is_empty() {
            return Err(Error::Format("data file contains no rows".into()));
        }
        let dim_fix = |cols: Vec<DVector<f64>>, dim: usize| -> Trajectory {
            let mut data = DMatrix::zeros(dim, cols.len());
            for (c, v) in cols.iter().enumerate() {
                data.set_column(c, v);
            }
            Trajectory::from_matrix(0, data).unwrap()
        };
        DataSet::new(dim_fix(u_cols, m), dim_fix(y_cols, p), dim_fix(yn_cols, q))
    }
}

/// Stacked neighbour outputs of node `i` at one time instant, ordered by
/// ascending neighbour id.
fn stack_neighbor_outputs(graph: &CouplingGraph, outputs: &[DVector<f64>], i: usize) -> DVector<f64> {
    let total: usize = graph.neighbors(i).iter().map(|&j| outputs[j].len()).sum();
    let mut v = DVector::zeros(total);
    let mut row = 0;
    for &j in graph.neighbors(i) {
        v.rows_mut(row, outputs[j].len()).copy_from(&outputs[j]);
        row += outputs[j].len();
    }
    v
}

/// Required excitation order for a closed loop of the given prediction
/// horizon and lag: the one-step trajectory extension simulates over an
/// `horizon + 1` window, so every Hankel block in the pipeline is full-depth
/// at order `horizon + 1 + 2 * lag`.
pub fn required_pe_order(horizon: usize, lag: usize) -> usize {
    horizon + 1 + 2 * lag
}

/// Options for [`collect_data`].
#[derive(Debug, Clone)]
pub struct CollectOptions {
    /// Requested data length N.
    pub length: usize,
    /// Persistency-of-excitation order checked on the stacked
    /// input/neighbour-output signal of every node.
    pub pe_order: usize,
    /// Per-node excitation boxes the i.i.d. inputs are drawn from.
    pub excitation: Vec<InputBox>,
    pub seed: u64,
    /// How many incremented seeds to try before giving up.
    pub retries: usize,
    pub rank_tol: f64,
}

/// Drive a copy of the network with i.i.d. uniform inputs from a random
/// bounded initial state and record per-node data sets. The stacked
/// `[u; y_neighbors]` signal of every node must be persistently exciting of
/// `pe_order`; failing seeds are retried with incremented seeds.
pub fn collect_data(model: &NetworkModel, opts: &CollectOptions) -> Result<Vec<DataSet>> {
    if opts.excitation.len() != model.node_count() {
        return Err(Error::Dimension("one excitation box per node required".into()));
    }
    let mut failing = (0, 0);
    for attempt in 0..=opts.retries {
        let seed = opts.seed + attempt as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sim = model.clone();
        let init: Vec<DVector<f64>> = (0..sim.node_count())
            .map(|i| {
                DVector::from_fn(sim.subsystem(i).state_dim(), |_, _| rng.gen_range(-1.0..1.0))
            })
            .collect();
        sim.set_states(init)?;

        let mut us: Vec<Vec<DVector<f64>>> = vec![Vec::new(); sim.node_count()];
        let mut ys: Vec<Vec<DVector<f64>>> = vec![Vec::new(); sim.node_count()];
        let mut yns: Vec<Vec<DVector<f64>>> = vec![Vec::new(); sim.node_count()];
        for _ in 0..opts.length {
            let inputs: Vec<DVector<f64>> = (0..sim.node_count())
                .map(|i| opts.excitation[i].sample(&mut rng))
                .collect();
            let outputs = sim.step(&inputs)?;
            for i in 0..sim.node_count() {
                us[i].push(inputs[i].clone());
                ys[i].push(outputs[i].clone());
                yns[i].push(stack_neighbor_outputs(sim.graph(), &outputs, i));
            }
        }

        let mut sets = Vec::with_capacity(sim.node_count());
        let mut ok = true;
        for i in 0..sim.node_count() {
            let set = DataSet::new(
                Trajectory::from_samples(0, &us[i])?,
                Trajectory::from_samples(0, &ys[i])?,
                Trajectory::from_samples(0, &yns[i])?,
            )?;
            let stacked = stack_signals(&[&set.u, &set.y_neighbors])?;
            if !check_persistent_excitation(&stacked, opts.pe_order, opts.rank_tol) {
                failing = (i, opts.pe_order);
                ok = false;
                break;
            }
            sets.push(set);
        }
        if ok {
            return Ok(sets);
        }
    }
    Err(Error::Excitation { node: failing.0, order: failing.1, attempts: opts.retries + 1 })
}

/// Simulate a single subsystem driven by its own input and an arbitrary
/// stacked neighbour-output signal (both must share their index range).
/// Returns the output trajectory. Oracle utility for tests and diagnostics.
pub fn simulate_subsystem(
    sub: &SubsystemModel,
    x0: &DVector<f64>,
    u: &Trajectory,
    y_neighbors: &Trajectory,
) -> Result<Trajectory> {
    if u.len() != y_neighbors.len() || u.start() != y_neighbors.start() {
        return Err(Error::Dimension("subsystem simulation signals misaligned".into()));
    }
    let q_total: usize = sub.coupling.values().map(|b| b.ncols()).sum();
    if y_neighbors.dim() != q_total {
        return Err(Error::Dimension("neighbour output dim mismatch".into()));
    }
    let mut x = x0.clone();
    let mut samples = Vec::with_capacity(u.len());
    for k in u.start()..=u.end() {
        let uk = u.sample(k)?.into_owned();
        let ynk = y_neighbors.sample(k)?;
        samples.push(&sub.c * &x + &sub.d * &uk);
        let mut next = &sub.a * &x + &sub.b * &uk;
        let mut row = 0;
        for bij in sub.coupling.values() {
            next += bij * ynk.rows(row, bij.ncols());
            row += bij.ncols();
        }
        x = next;
    }
    Trajectory::from_samples(u.start(), &samples)
}

/// Pass/fail report of the structural assumptions the scheme relies on:
/// per-node controllability of `(A_ii, [B_ii B_ij ...])` and global
/// observability of the assembled `(A, C)`.
#[derive(Debug, Clone)]
pub struct StructuralReport {
    pub controllable: Vec<bool>,
    pub observable: bool,
}

impl StructuralReport {
    pub fn all_pass(&self) -> bool {
        self.observable && self.controllable.iter().all(|c| *c)
    }
}

/// Kalman rank tests for the structural assumptions. Tooling/test use only.
pub fn verify_structural_assumptions(model: &NetworkModel) -> StructuralReport {
    let mut controllable = Vec::with_capacity(model.node_count());
    for i in 0..model.node_count() {
        let sub = model.subsystem(i);
        let n = sub.state_dim();
        let cols: usize =
            sub.input_dim() + sub.coupling.values().map(|b| b.ncols()).sum::<usize>();
        let mut b_full = DMatrix::zeros(n, cols);
        b_full.view_mut((0, 0), (n, sub.input_dim())).copy_from(&sub.b);
        let mut c0 = sub.input_dim();
        for bij in sub.coupling.values() {
            b_full.view_mut((0, c0), (n, bij.ncols())).copy_from(bij);
            c0 += bij.ncols();
        }
        let mut ctrb = DMatrix::zeros(n, cols * n);
        let mut power = b_full.clone();
        for k in 0..n {
            ctrb.view_mut((0, k * cols), (n, cols)).copy_from(&power);
            power = &sub.a * power;
        }
        controllable.push(linalg::rank(&ctrb, DEFAULT_RANK_TOL) == n);
    }

    let (a_global, _) = model.global_state_maps();
    let n_total = a_global.nrows();
    let p_total: usize = (0..model.node_count()).map(|i| model.subsystem(i).output_dim()).sum();
    let mut c_global = DMatrix::zeros(p_total, n_total);
    let mut r0 = 0;
    let mut c0 = 0;
    for i in 0..model.node_count() {
        let sub = model.subsystem(i);
        c_global
            .view_mut((r0, c0), (sub.output_dim(), sub.state_dim()))
            .copy_from(&sub.c);
        r0 += sub.output_dim();
        c0 += sub.state_dim();
    }
    let mut obsv = DMatrix::zeros(p_total * n_total, n_total);
    let mut power = c_global.clone();
    for k in 0..n_total {
        obsv.view_mut((k * p_total, 0), (p_total, n_total)).copy_from(&power);
        power = power * &a_global;
    }
    let observable = linalg::rank(&obsv, DEFAULT_RANK_TOL) == n_total;

    StructuralReport { controllable, observable }
}

/// Write a per-node persistency-of-excitation report.
pub fn write_pe_report(
    path: &Path,
    orders: &[(usize, usize, bool)], // (node, order, pass)
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "node,pe_order,pass")?;
    for (node, order, pass) in orders {
        writeln!(f, "{},{},{}", node + 1, order, pass)?;
    }
    Ok(())
}

/// Benchmark plant family: chains of mass-spring-damper carts coupled
/// through position outputs.
pub mod benchmark {
    use super::*;

    /// Per-node physical parameters.
    #[derive(Debug, Clone, Copy)]
    pub struct CartParams {
        pub mass: f64,
        pub damping: f64,
        /// Gain on each incoming neighbour output; the local spring constant
        /// is the sum of the incoming gains.
        pub coupling_gain: f64,
    }

    impl Default for CartParams {
        fn default() -> Self {
            Self { mass: 1.0, damping: 0.75, coupling_gain: 1.25 }
        }
    }

    /// One cart, discretised with step 0.2:
    ///
    /// ```text
    /// x+ = [1, 0.2; -0.2 k/m, 1 - 0.2 d/m] x + [0; 1] u + sum_j [0; k_ij] y_j
    /// y  = [0.2/m, 0] x
    /// ```
    pub fn cart(params: CartParams, neighbors: &[usize]) -> SubsystemModel {
        let k_total = params.coupling_gain * neighbors.len() as f64;
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0,
                0.2,
                -0.2 * k_total / params.mass,
                1.0 - 0.2 * params.damping / params.mass,
            ],
        );
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[0.2 / params.mass, 0.0]);
        let d = DMatrix::zeros(1, 1);
        let coupling = neighbors
            .iter()
            .map(|&j| (j, DMatrix::from_row_slice(2, 1, &[0.0, params.coupling_gain])))
            .collect();
        SubsystemModel { a, b, c, d, coupling }
    }

    /// A chain of identical carts at the origin.
    pub fn cart_chain(node_count: usize, params: CartParams) -> Result<NetworkModel> {
        let graph = if params.coupling_gain == 0.0 {
            CouplingGraph::edgeless(node_count)?
        } else {
            CouplingGraph::chain(node_count)?
        };
        let subsystems: Vec<SubsystemModel> =
            (0..node_count).map(|i| cart(params, graph.neighbors(i))).collect();
        let states = vec![DVector::zeros(2); node_count];
        NetworkModel::new(graph, subsystems, states)
    }
}
