//! Trajectory containers, block-Hankel construction and persistency-of-
//! excitation checks.
//!
//! A [`Trajectory`] carries an explicit integer `start` index so that windows
//! such as `[-n, L-1]` around a solve instant are addressable without
//! off-by-one gymnastics; every consumer in this crate works with absolute
//! time indices.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative singular-value threshold for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// A finite vector-valued discrete-time signal with an explicit start index.
///
/// Sample `k` (with `start <= k <= end`) is a real vector of dimension `dim`.
/// Samples are stored as columns of a `dim x len` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    start: i64,
    data: DMatrix<f64>,
}

impl Trajectory {
    /// Build from a `dim x len` matrix whose column `c` is the sample at
    /// `start + c`. Requires at least one sample.
    pub fn from_matrix(start: i64, data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::Dimension("trajectory must contain at least one sample".into()));
        }
        Ok(Self { dim: data.nrows(), start, data })
    }

    /// Build from a list of equally sized samples.
    pub fn from_samples(start: i64, samples: &[DVector<f64>]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dimension("trajectory must contain at least one sample".into()));
        }
        let dim = samples[0].len();
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::Dimension("trajectory samples differ in dimension".into()));
        }
        let mut data = DMatrix::zeros(dim, samples.len());
        for (c, s) in samples.iter().enumerate() {
            data.set_column(c, s);
        }
        Ok(Self { dim, start, data })
    }

    /// Scalar-valued trajectory from a slice, starting at index 0.
    pub fn scalar(values: &[f64]) -> Self {
        Self {
            dim: 1,
            start: 0,
            data: DMatrix::from_row_slice(1, values.len(), values),
        }
    }

    /// All-zero trajectory.
    pub fn zeros(dim: usize, start: i64, len: usize) -> Self {
        assert!(len >= 1, "trajectory must contain at least one sample");
        Self { dim, start, data: DMatrix::zeros(dim, len) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the first sample.
    pub fn start(&self) -> i64 {
        self.start
    }

    /// Index of the last sample (inclusive).
    pub fn end(&self) -> i64 {
        self.start + self.data.ncols() as i64 - 1
    }

    /// Re-index in place so the first sample sits at `start`.
    pub fn with_start(mut self, start: i64) -> Self {
        self.start = start;
        self
    }

    pub fn contains(&self, k: i64) -> bool {
        k >= self.start && k <= self.end()
    }

    fn offset(&self, k: i64) -> Result<usize> {
        if !self.contains(k) {
            return Err(Error::Window(format!(
                "index {k} outside trajectory range [{}, {}]",
                self.start,
                self.end()
            )));
        }
        Ok((k - self.start) as usize)
    }

    /// Sample at absolute index `k`.
    pub fn sample(&self, k: i64) -> Result<DVectorView<'_, f64>> {
        Ok(self.data.column(self.offset(k)?))
    }

    /// Copy of the contiguous window `[a, b]` (inclusive).
    pub fn window(&self, a: i64, b: i64) -> Result<Trajectory> {
        if b < a {
            return Err(Error::Window(format!("empty window [{a}, {b}]")));
        }
        let ca = self.offset(a)?;
        let cb = self.offset(b)?;
        Ok(Trajectory {
            dim: self.dim,
            start: a,
            data: self.data.columns(ca, cb - ca + 1).into_owned(),
        })
    }

    /// Samples of `[a, b]` stacked into one column vector, oldest first.
    pub fn stacked(&self, a: i64, b: i64) -> Result<DVector<f64>> {
        let w = self.window(a, b)?;
        let mut out = DVector::zeros(w.dim * w.len());
        for c in 0..w.len() {
            out.rows_mut(c * w.dim, w.dim).copy_from(&w.data.column(c));
        }
        Ok(out)
    }

    /// Append one sample, extending the index range by one.
    pub fn push(&mut self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Dimension(format!(
                "pushed sample has dim {}, trajectory has dim {}",
                v.len(),
                self.dim
            )));
        }
        let len = self.data.ncols();
        self.data.resize_horizontally_mut(len + 1, 0.0);
        self.data.set_column(len, v);
        Ok(())
    }

    /// Split a stacked trajectory back into parts of the given dimensions.
    pub fn split(&self, dims: &[usize]) -> Result<Vec<Trajectory>> {
        if dims.iter().sum::<usize>() != self.dim {
            return Err(Error::Dimension(format!(
                "split dims sum to {}, trajectory has dim {}",
                dims.iter().sum::<usize>(),
                self.dim
            )));
        }
        let mut out = Vec::with_capacity(dims.len());
        let mut row = 0;
        for &d in dims {
            out.push(Trajectory {
                dim: d,
                start: self.start,
                data: self.data.rows(row, d).into_owned(),
            });
            row += d;
        }
        Ok(out)
    }

    /// Underlying `dim x len` storage.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Per-sample vertical concatenation of several trajectories sharing length
/// and start index.
pub fn stack_signals(parts: &[&Trajectory]) -> Result<Trajectory> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Dimension("stack_signals needs at least one part".into()))?;
    let (len, start) = (first.len(), first.start());
    for p in parts {
        if p.len() != len || p.start() != start {
            return Err(Error::Dimension(format!(
                "stack_signals: part range [{}, {}] differs from [{}, {}]",
                p.start(),
                p.end(),
                start,
                first.end()
            )));
        }
    }
    let dim: usize = parts.iter().map(|p| p.dim()).sum();
    let mut data = DMatrix::zeros(dim, len);
    let mut row = 0;
    for p in parts {
        data.rows_mut(row, p.dim()).copy_from(&p.data);
        row += p.dim();
    }
    Ok(Trajectory { dim, start, data })
}

/// Block-Hankel matrix of a trajectory: block row `r`, column `c` holds the
/// source sample at offset `r + c` from the start.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    entries: DMatrix<f64>,
    depth: usize,
    source_dim: usize,
}

impl HankelMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

/// Build the depth-`depth` block-Hankel matrix of `x`, with `depth * dim`
/// rows and `len - depth + 1` columns.
pub fn build_hankel(x: &Trajectory, depth: usize) -> Result<HankelMatrix> {
    if depth == 0 {
        return Err(Error::Dimension("hankel depth must be positive".into()));
    }
    if depth > x.len() {
        return Err(Error::Dimension(format!(
            "hankel depth {depth} exceeds trajectory length {}",
            x.len()
        )));
    }
    let dim = x.dim();
    let ncols = x.len() - depth + 1;
    let mut entries = DMatrix::zeros(depth * dim, ncols);
    for c in 0..ncols {
        for r in 0..depth {
            let sample = x.data.column(c + r);
            entries.view_mut((r * dim, c), (dim, 1)).copy_from(&sample);
        }
    }
    Ok(HankelMatrix { entries, depth, source_dim: dim })
}

/// Persistency of excitation of the given order: the depth-`order` Hankel
/// matrix must have full row rank `dim * order`. Rank counts singular values
/// above `rank_tol` times the largest one. Returns `false` whenever full rank
/// is impossible (too few samples or columns).
pub fn check_persistent_excitation(x: &Trajectory, order: usize, rank_tol: f64) -> bool {
    if order == 0 {
        return true;
    }
    if x.dim() == 0 {
        // A zero-dimensional signal spans the zero space trivially.
        return true;
    }
    if x.len() < order || x.len() - order + 1 < x.dim() * order {
        return false;
    }
    let h = build_hankel(x, order).expect("depth checked above");
    linalg::rank(h.entries(), rank_tol) == x.dim() * order
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn hankel_of_scalar_ramp() {
        let x = Trajectory::scalar(&[1.0, 2.0, 3.0, 4.0]);
        let h = build_hankel(&x, 2).unwrap();
        let expect = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0]);
        assert_eq!(h.entries(), &expect);
    }

    #[test]
    fn hankel_of_zeros() {
        let x = Trajectory::scalar(&[0.0, 0.0, 0.0]);
        let h = build_hankel(&x, 2).unwrap();
        assert_eq!(h.entries(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn hankel_depth_too_deep_errors() {
        let x = Trajectory::scalar(&[1.0, 2.0]);
        assert!(build_hankel(&x, 3).is_err());
    }

    #[test]
    fn hankel_of_random_noise_has_full_rank() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let vals: Vec<f64> = (0..20).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let x = Trajectory::scalar(&vals);
        let h = build_hankel(&x, 3).unwrap();
        assert_eq!(crate::linalg::rank(h.entries(), DEFAULT_RANK_TOL), 3);
    }

    #[test]
    fn pe_rejects_constant_sequence() {
        let x = Trajectory::scalar(&[1.5; 10]);
        assert!(!check_persistent_excitation(&x, 2, DEFAULT_RANK_TOL));
    }

    #[test]
    fn pe_rejects_unit_impulse() {
        let mut v = vec![0.0; 10];
        v[0] = 1.0;
        let x = Trajectory::scalar(&v);
        assert!(!check_persistent_excitation(&x, 2, DEFAULT_RANK_TOL));
    }

    #[test]
    fn pe_accepts_uniform_noise_order_7() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Trajectory::scalar(&vals);
        assert!(check_persistent_excitation(&x, 7, DEFAULT_RANK_TOL));
    }

    #[test]
    fn pe_false_when_columns_too_few() {
        // N - order + 1 < dim * order can never have full row rank
        let x = Trajectory::scalar(&[1.0, 2.0, 3.0, 4.0]);
        assert!(!check_persistent_excitation(&x, 3, DEFAULT_RANK_TOL));
    }

    #[test]
    fn stack_and_split_roundtrip() {
        let u = Trajectory::scalar(&[1.0, 2.0]);
        let y = Trajectory::from_matrix(0, DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 5.0, 6.0]))
            .unwrap();
        let s = stack_signals(&[&u, &y]).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.sample(0).unwrap().as_slice(), &[1.0, 3.0, 5.0]);
        let parts = s.split(&[1, 2]).unwrap();
        assert_eq!(parts[0], u);
        assert_eq!(parts[1], y);
    }

    #[test]
    fn stack_single_part_is_identity() {
        let u = Trajectory::scalar(&[1.0, 2.0, 3.0]);
        assert_eq!(stack_signals(&[&u]).unwrap(), u);
    }

    #[test]
    fn stack_length_mismatch_errors() {
        let u = Trajectory::scalar(&[1.0, 2.0]);
        let y = Trajectory::scalar(&[1.0, 2.0, 3.0]);
        assert!(stack_signals(&[&u, &y]).is_err());
    }

    #[test]
    fn stacked_window_is_oldest_first() {
        let x = Trajectory::scalar(&[10.0, 20.0, 30.0]).with_start(-2);
        let v = x.stacked(-2, -1).unwrap();
        assert_abs_diff_eq!(v[0], 10.0);
        assert_abs_diff_eq!(v[1], 20.0);
    }

    proptest! {
        /// Reading block-column 0 of the Hankel matrix recovers the first
        /// `depth` samples.
        #[test]
        fn hankel_first_column_roundtrip(vals in proptest::collection::vec(-10.0..10.0f64, 4..30),
                                         depth in 1usize..4) {
            prop_assume!(depth <= vals.len());
            let x = Trajectory::scalar(&vals);
            let h = build_hankel(&x, depth).unwrap();
            for r in 0..depth {
                prop_assert!((h.entries()[(r, 0)] - vals[r]).abs() < 1e-15);
            }
        }

        /// Column c+1 of H_L(x) equals column c of the Hankel built on x
        /// shifted by one sample.
        #[test]
        fn hankel_shift_structure(vals in proptest::collection::vec(-10.0..10.0f64, 5..30),
                                  depth in 1usize..4) {
            prop_assume!(depth + 1 <= vals.len());
            let x = Trajectory::scalar(&vals);
            let shifted = Trajectory::scalar(&vals[1..]);
            let h = build_hankel(&x, depth).unwrap();
            let hs = build_hankel(&shifted, depth).unwrap();
            for c in 0..hs.ncols() {
                for r in 0..depth {
                    prop_assert!((h.entries()[(r, c + 1)] - hs.entries()[(r, c)]).abs() < 1e-15);
                }
            }
        }

        /// Rank deficiency propagates upward: not PE of order L implies not
        /// PE of any higher order.
        #[test]
        fn pe_monotone_in_order(seed in 0u64..50, order in 2usize..5) {
            // rank-deficient by construction: a two-periodic sequence
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            let vals: Vec<f64> = (0..40).map(|k| if k % 2 == 0 { a } else { b }).collect();
            let x = Trajectory::scalar(&vals);
            prop_assume!(!check_persistent_excitation(&x, order, DEFAULT_RANK_TOL));
            for higher in order + 1..order + 4 {
                prop_assert!(!check_persistent_excitation(&x, higher, DEFAULT_RANK_TOL));
            }
        }
    }
}
