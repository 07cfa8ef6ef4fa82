//! Matrix-free finite-difference operators and the Fourier low-pass projector.
//!
//! `D` is the `N x N` forward difference with ones on the diagonal and minus
//! ones on the sub-diagonal, so `(Dx)_0 = x_0` and `(Dx)_i = x_i - x_{i-1}`.
//! `D_1` is its circulant sibling with the extra wrap entry,
//! `(D_1 x)_0 = x_0 - x_{N-1}`. Powers are k-fold compositions and `D^{-k}` is
//! k repeated prefix sums. Nothing here ever builds a dense matrix.

use std::sync::Arc;

use ndarray::{Array2, ArrayViewMut1, Axis};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SdqError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffVariant {
    Forward,
    Circulant,
}

/// `D^k`, `D_1^k` or one of their transposes, acting on length-`n` vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffOperator {
    pub n: usize,
    pub order: usize,
    pub variant: DiffVariant,
    pub transposed: bool,
}

impl DiffOperator {
    pub fn forward(n: usize, order: usize) -> Self {
        Self {
            n,
            order,
            variant: DiffVariant::Forward,
            transposed: false,
        }
    }

    pub fn circulant(n: usize, order: usize) -> Self {
        Self {
            n,
            order,
            variant: DiffVariant::Circulant,
            transposed: false,
        }
    }

    pub fn transpose(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(SdqError::SizeMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    /// Returns `op x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut out = x.to_vec();
        self.apply_in_place(ArrayViewMut1::from(&mut out[..]));
        Ok(out)
    }

    /// Returns `op^{-1} x` through repeated (reverse) prefix sums.
    pub fn apply_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.variant == DiffVariant::Circulant {
            return Err(SdqError::SingularOperator);
        }
        self.check_len(x.len())?;
        let mut out = x.to_vec();
        self.apply_inverse_in_place(ArrayViewMut1::from(&mut out[..]));
        Ok(out)
    }

    /// In-place application; the caller guarantees the length.
    pub fn apply_in_place(&self, mut x: ArrayViewMut1<f64>) {
        assert_eq!(x.len(), self.n);
        for _ in 0..self.order {
            match (self.variant, self.transposed) {
                (DiffVariant::Forward, false) => diff(x.view_mut()),
                (DiffVariant::Forward, true) => diff_t(x.view_mut()),
                (DiffVariant::Circulant, false) => circ_diff(x.view_mut()),
                (DiffVariant::Circulant, true) => circ_diff_t(x.view_mut()),
            }
        }
    }

    /// In-place inverse for the forward variant. Panics on the circulant variant.
    pub fn apply_inverse_in_place(&self, mut x: ArrayViewMut1<f64>) {
        assert_eq!(self.variant, DiffVariant::Forward, "D_1 is singular");
        for _ in 0..self.order {
            if self.transposed {
                reverse_cumsum(x.view_mut());
            } else {
                cumsum(x.view_mut());
            }
        }
    }

    /// Applies the operator to every column of `m` (left multiplication).
    pub fn apply_left(&self, m: &mut Array2<f64>) -> Result<()> {
        self.check_len(m.nrows())?;
        for col in m.axis_iter_mut(Axis(1)) {
            self.apply_in_place(col);
        }
        Ok(())
    }

    /// Computes `m * op^T` by applying the operator to every row.
    pub fn apply_right_transposed(&self, m: &mut Array2<f64>) -> Result<()> {
        self.check_len(m.ncols())?;
        for row in m.axis_iter_mut(Axis(0)) {
            self.apply_in_place(row);
        }
        Ok(())
    }

    /// Left-multiplies every column of `m` by the inverse.
    pub fn apply_inverse_left(&self, m: &mut Array2<f64>) -> Result<()> {
        if self.variant == DiffVariant::Circulant {
            return Err(SdqError::SingularOperator);
        }
        self.check_len(m.nrows())?;
        for col in m.axis_iter_mut(Axis(1)) {
            self.apply_inverse_in_place(col);
        }
        Ok(())
    }

    /// Computes `m * (op^{-1})^T` row by row.
    pub fn apply_inverse_right_transposed(&self, m: &mut Array2<f64>) -> Result<()> {
        if self.variant == DiffVariant::Circulant {
            return Err(SdqError::SingularOperator);
        }
        self.check_len(m.ncols())?;
        for row in m.axis_iter_mut(Axis(0)) {
            self.apply_inverse_in_place(row);
        }
        Ok(())
    }
}

/// `x <- D x`
pub fn diff(mut x: ArrayViewMut1<f64>) {
    for i in (1..x.len()).rev() {
        x[i] -= x[i - 1];
    }
}

/// `x <- D^T x`, i.e. `x_i - x_{i+1}` with the last entry kept.
pub fn diff_t(mut x: ArrayViewMut1<f64>) {
    let n = x.len();
    for i in 0..n.saturating_sub(1) {
        x[i] -= x[i + 1];
    }
}

/// `x <- D_1 x`
pub fn circ_diff(mut x: ArrayViewMut1<f64>) {
    let n = x.len();
    if n == 0 {
        return;
    }
    let last = x[n - 1];
    for i in (1..n).rev() {
        x[i] -= x[i - 1];
    }
    x[0] -= last;
}

/// `x <- D_1^T x`
pub fn circ_diff_t(mut x: ArrayViewMut1<f64>) {
    let n = x.len();
    if n == 0 {
        return;
    }
    let first = x[0];
    for i in 0..n - 1 {
        x[i] -= x[i + 1];
    }
    x[n - 1] -= first;
}

/// `x <- D^{-1} x`
pub fn cumsum(mut x: ArrayViewMut1<f64>) {
    for i in 1..x.len() {
        x[i] += x[i - 1];
    }
}

/// `x <- D^{-T} x`
pub fn reverse_cumsum(mut x: ArrayViewMut1<f64>) {
    for i in (0..x.len().saturating_sub(1)).rev() {
        x[i] += x[i + 1];
    }
}

/// Orthogonal projection onto the Fourier modes `{-L, ..., L}` of a length-N
/// signal, computed with an unpadded length-N FFT.
#[derive(Clone)]
pub struct LowPassProjector {
    n: usize,
    cutoff: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LowPassProjector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LowPassProjector")
            .field("n", &self.n)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl LowPassProjector {
    pub fn new(n: usize, cutoff: usize) -> Result<Self> {
        if n == 0 {
            return Err(SdqError::InvalidArgument("projector size must be positive".into()));
        }
        if cutoff > n / 2 {
            return Err(SdqError::InvalidArgument(format!(
                "cutoff L = {cutoff} exceeds N/2 = {}",
                n / 2
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            cutoff,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(SdqError::SizeMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            if k.min(self.n - k) > self.cutoff {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        Ok(buf.iter().map(|c| c.re * scale).collect())
    }
}

/// Convenience wrapper around [`LowPassProjector`].
pub fn lowpass_project(x: &[f64], cutoff: usize) -> Result<Vec<f64>> {
    LowPassProjector::new(x.len(), cutoff)?.project(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dense_forward(n: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = 1.0;
            if i > 0 {
                m[i][i - 1] = -1.0;
            }
        }
        m
    }

    fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        m.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn forward_first_order_on_constant() {
        let op = DiffOperator::forward(3, 1);
        assert_eq!(op.apply(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn circulant_matches_dense_matrix() {
        let mut m = dense_forward(3);
        m[0][2] = -1.0;
        let x = [1.0, 2.0, 3.0];
        let op = DiffOperator::circulant(3, 1);
        assert_eq!(op.apply(&x).unwrap(), matvec(&m, &x));
        assert_eq!(op.apply(&x).unwrap(), vec![-2.0, 1.0, 1.0]);
    }

    #[test]
    fn second_order_is_composition() {
        let op = DiffOperator::forward(4, 2);
        assert_eq!(op.apply(&[0.0, 1.0, 2.0, 3.0]).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn inverse_examples() {
        let op = DiffOperator::forward(3, 1);
        assert_eq!(op.apply_inverse(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(op.apply_inverse(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let op2 = DiffOperator::forward(4, 2);
        assert_eq!(
            op2.apply_inverse(&[1.0, 0.0, 0.0, 0.0]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn circulant_inverse_rejected() {
        let op = DiffOperator::circulant(4, 1);
        assert!(matches!(
            op.apply_inverse(&[0.0; 4]),
            Err(SdqError::SingularOperator)
        ));
    }

    #[test]
    fn size_mismatch_rejected() {
        let op = DiffOperator::forward(4, 1);
        assert!(matches!(
            op.apply(&[0.0; 3]),
            Err(SdqError::SizeMismatch { expected: 4, got: 3 })
        ));
        assert!(op.apply_inverse(&[0.0; 5]).is_err());
    }

    #[test]
    fn circulant_annihilates_constants() {
        for order in 1..4 {
            let out = DiffOperator::circulant(17, order).apply(&[0.37; 17]).unwrap();
            assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn matrix_actions_match_vector_actions() {
        let m0 = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.5 - 1.0);
        let op = DiffOperator::forward(4, 2);
        let mut left = m0.clone();
        op.apply_left(&mut left).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = m0.column(j).to_vec();
            assert_eq!(left.column(j).to_vec(), op.apply(&col).unwrap());
        }
        let opr = DiffOperator::forward(3, 1);
        let mut right = m0.clone();
        opr.apply_right_transposed(&mut right).unwrap();
        for i in 0..4 {
            let row: Vec<f64> = m0.row(i).to_vec();
            assert_eq!(right.row(i).to_vec(), opr.apply(&row).unwrap());
        }
        op.apply_inverse_left(&mut left).unwrap();
        opr.apply_inverse_right_transposed(&mut right).unwrap();
        for (a, b) in left.iter().zip(m0.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in right.iter().zip(m0.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn lowpass_examples() {
        let x = [0.25; 6];
        for l in 0..=3 {
            let p = lowpass_project(&x, l).unwrap();
            for v in p {
                assert_abs_diff_eq!(v, 0.25, epsilon = 1e-14);
            }
        }
        let y = [0.3, -1.2, 4.0, 0.1, 2.2];
        let p = lowpass_project(&y, 2).unwrap();
        for (a, b) in p.iter().zip(y.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let nyq = lowpass_project(&[1.0, -1.0, 1.0, -1.0], 1).unwrap();
        for v in nyq {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
        }
        assert!(LowPassProjector::new(8, 5).is_err());
    }

    #[test]
    fn lowpass_zero_cutoff_is_mean() {
        let x = [1.0, 2.0, 6.0, -1.0];
        for v in lowpass_project(&x, 0).unwrap() {
            assert_abs_diff_eq!(v, 2.0, epsilon = 1e-14);
        }
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
        num / den
    }

    fn vec_strategy(max: usize) -> impl Strategy<Value = Vec<f64>> {
        (1..max).prop_flat_map(|n| proptest::collection::vec(-1.0f64..1.0, n))
    }

    proptest! {
        #[test]
        fn prop_inverse_round_trip(n in 1usize..=2048, seed in any::<u64>(), order in 1usize..=3) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Third-order prefix sums reach ~N^3/6 in magnitude, so storing them in
            // f64 alone costs ~N^3 eps after re-differencing.
            let tol = if order < 3 || n <= 1024 {
                1e-9
            } else {
                1e-9f64.max(4.0 * (n as f64).powi(3) * f64::EPSILON)
            };
            let op = DiffOperator::forward(x.len(), order);
            let back = op.apply(&op.apply_inverse(&x).unwrap()).unwrap();
            prop_assert!(rel_err(&back, &x) <= tol, "{}", rel_err(&back, &x));
            let opt = op.transpose();
            let back_t = opt.apply(&opt.apply_inverse(&x).unwrap()).unwrap();
            prop_assert!(rel_err(&back_t, &x) <= tol, "{}", rel_err(&back_t, &x));
        }

        #[test]
        fn prop_transpose_adjoint(
            (x, y) in (2usize..256).prop_flat_map(|n| (
                proptest::collection::vec(-1.0f64..1.0, n),
                proptest::collection::vec(-1.0f64..1.0, n))),
            order in 1usize..=3,
            circ in any::<bool>(),
        ) {
            let n = x.len();
            let op = if circ { DiffOperator::circulant(n, order) } else { DiffOperator::forward(n, order) };
            let dx = op.apply(&x).unwrap();
            let dty = op.transpose().apply(&y).unwrap();
            let lhs: f64 = dx.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&dty).map(|(a, b)| a * b).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * scale);
        }

        #[test]
        fn prop_lowpass_idempotent_and_contractive(x in vec_strategy(300), frac in 0.0f64..1.0) {
            let n = x.len();
            let l = ((n / 2) as f64 * frac) as usize;
            let p = LowPassProjector::new(n, l).unwrap();
            let once = p.project(&x).unwrap();
            let twice = p.project(&once).unwrap();
            let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!(norm(&once) <= norm(&x) * (1.0 + 1e-12) + 1e-14);
            let diff: Vec<f64> = once.iter().zip(&twice).map(|(a, b)| a - b).collect();
            prop_assert!(norm(&diff) <= 1e-9 * norm(&once).max(1e-12));
        }
    }
}
