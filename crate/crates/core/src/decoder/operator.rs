//! The linear map `x -> A x` hidden inside each decoder after substituting
//! `x = D^{-r}(z - q)`, so that the TV term reads `||A x + c||_1`.

use ndarray::{ArrayViewMut1, ArrayViewMut2, Axis};

use crate::grid_ops::{circ_diff, circ_diff_t, diff, diff_t};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvOperator {
    /// `A = (D^beta)^T D^r` on a column of length `n`.
    Column { n: usize, r: usize, beta: usize },
    /// `A = D_1^beta D^r` on a column of length `n`.
    Cyclic { n: usize, r: usize, beta: usize },
    /// `A X = [(D^beta)^T Y ; Y D^beta]` with `Y = D^r X (D^r)^T`, `X` row-major.
    Image {
        rows: usize,
        cols: usize,
        r: usize,
        beta: usize,
    },
}

fn repeat(k: usize, mut v: ArrayViewMut1<f64>, f: fn(ArrayViewMut1<f64>)) {
    for _ in 0..k {
        f(v.view_mut());
    }
}

fn on_columns(m: &mut ArrayViewMut2<f64>, k: usize, f: fn(ArrayViewMut1<f64>)) {
    for col in m.axis_iter_mut(Axis(1)) {
        repeat(k, col, f);
    }
}

fn on_rows(m: &mut ArrayViewMut2<f64>, k: usize, f: fn(ArrayViewMut1<f64>)) {
    for row in m.axis_iter_mut(Axis(0)) {
        repeat(k, row, f);
    }
}

impl TvOperator {
    /// Number of unknowns.
    pub fn dim(&self) -> usize {
        match *self {
            TvOperator::Column { n, .. } | TvOperator::Cyclic { n, .. } => n,
            TvOperator::Image { rows, cols, .. } => rows * cols,
        }
    }

    /// Length of `A x`.
    pub fn range_dim(&self) -> usize {
        match *self {
            TvOperator::Image { .. } => 2 * self.dim(),
            _ => self.dim(),
        }
    }

    /// Half-bandwidth of `A^T A` in the natural ordering. For the cyclic
    /// operator this is a cyclic bandwidth.
    pub fn gram_half_bandwidth(&self) -> usize {
        match *self {
            TvOperator::Column { n, r, beta } | TvOperator::Cyclic { n, r, beta } => {
                (r + beta).min(n.saturating_sub(1))
            }
            TvOperator::Image { rows, cols, r, beta } => {
                ((r + beta) * (cols + 1)).min((rows * cols).saturating_sub(1))
            }
        }
    }

    /// `out <- A x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(out.len(), self.range_dim());
        match *self {
            TvOperator::Column { r, beta, .. } => {
                out.copy_from_slice(x);
                let mut v = ArrayViewMut1::from(out);
                repeat(r, v.view_mut(), diff);
                repeat(beta, v, diff_t);
            }
            TvOperator::Cyclic { r, beta, .. } => {
                out.copy_from_slice(x);
                let mut v = ArrayViewMut1::from(out);
                repeat(r, v.view_mut(), diff);
                repeat(beta, v, circ_diff);
            }
            TvOperator::Image { rows, cols, r, beta } => {
                let n = rows * cols;
                let (top, bottom) = out.split_at_mut(n);
                top.copy_from_slice(x);
                {
                    let mut y = ArrayViewMut2::from_shape((rows, cols), &mut *top).unwrap();
                    on_columns(&mut y, r, diff);
                    on_rows(&mut y, r, diff);
                }
                bottom.copy_from_slice(top);
                let mut y1 = ArrayViewMut2::from_shape((rows, cols), top).unwrap();
                on_columns(&mut y1, beta, diff_t);
                let mut y2 = ArrayViewMut2::from_shape((rows, cols), bottom).unwrap();
                on_rows(&mut y2, beta, diff_t);
            }
        }
    }

    /// `out <- A^T w`. `scratch` must have length `range_dim()`.
    pub fn apply_t(&self, w: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        assert_eq!(w.len(), self.range_dim());
        assert_eq!(out.len(), self.dim());
        match *self {
            TvOperator::Column { r, beta, .. } => {
                out.copy_from_slice(w);
                let mut v = ArrayViewMut1::from(out);
                repeat(beta, v.view_mut(), diff);
                repeat(r, v, diff_t);
            }
            TvOperator::Cyclic { r, beta, .. } => {
                out.copy_from_slice(w);
                let mut v = ArrayViewMut1::from(out);
                repeat(beta, v.view_mut(), circ_diff_t);
                repeat(r, v, diff_t);
            }
            TvOperator::Image { rows, cols, r, beta } => {
                let n = rows * cols;
                scratch.copy_from_slice(w);
                let (w1, w2) = scratch.split_at_mut(n);
                {
                    let mut a = ArrayViewMut2::from_shape((rows, cols), &mut *w1).unwrap();
                    on_columns(&mut a, beta, diff);
                    let mut b = ArrayViewMut2::from_shape((rows, cols), &mut *w2).unwrap();
                    on_rows(&mut b, beta, diff);
                }
                for ((o, a), b) in out.iter_mut().zip(w1.iter()).zip(w2.iter()) {
                    *o = a + b;
                }
                let mut s = ArrayViewMut2::from_shape((rows, cols), out).unwrap();
                on_columns(&mut s, r, diff_t);
                on_rows(&mut s, r, diff_t);
            }
        }
    }

    /// `out <- z` mapped to the TV vector `B z` of the original objective
    /// `||B z||_1` (so that `A = B D^r` and `c = B q`).
    pub fn tv_map(&self, z: &[f64], out: &mut [f64]) {
        assert_eq!(z.len(), self.dim());
        match *self {
            TvOperator::Column { beta, .. } => {
                out.copy_from_slice(z);
                repeat(beta, ArrayViewMut1::from(out), diff_t);
            }
            TvOperator::Cyclic { beta, .. } => {
                out.copy_from_slice(z);
                repeat(beta, ArrayViewMut1::from(out), circ_diff);
            }
            TvOperator::Image { rows, cols, beta, .. } => {
                let n = rows * cols;
                let (top, bottom) = out.split_at_mut(n);
                top.copy_from_slice(z);
                bottom.copy_from_slice(z);
                let mut y1 = ArrayViewMut2::from_shape((rows, cols), top).unwrap();
                on_columns(&mut y1, beta, diff_t);
                let mut y2 = ArrayViewMut2::from_shape((rows, cols), bottom).unwrap();
                on_rows(&mut y2, beta, diff_t);
            }
        }
    }

    /// `||B z||_1`
    pub fn tv_objective(&self, z: &[f64]) -> f64 {
        let mut out = vec![0.0; self.range_dim()];
        self.tv_map(z, &mut out);
        out.iter().map(|v| v.abs()).sum()
    }

    /// `z <- D^r x` (or `D^r X (D^r)^T`), in place.
    pub fn constraint_forward(&self, v: &mut [f64]) {
        match *self {
            TvOperator::Column { r, .. } | TvOperator::Cyclic { r, .. } => {
                repeat(r, ArrayViewMut1::from(v), diff);
            }
            TvOperator::Image { rows, cols, r, .. } => {
                let mut m = ArrayViewMut2::from_shape((rows, cols), v).unwrap();
                on_columns(&mut m, r, diff);
                on_rows(&mut m, r, diff);
            }
        }
    }

    /// `x <- D^{-r} v` (or `D^{-r} V (D^{-r})^T`), in place.
    pub fn constraint_inverse(&self, v: &mut [f64]) {
        use crate::grid_ops::cumsum;
        match *self {
            TvOperator::Column { r, .. } | TvOperator::Cyclic { r, .. } => {
                repeat(r, ArrayViewMut1::from(v), cumsum);
            }
            TvOperator::Image { rows, cols, r, .. } => {
                let mut m = ArrayViewMut2::from_shape((rows, cols), v).unwrap();
                on_columns(&mut m, r, cumsum);
                on_rows(&mut m, r, cumsum);
            }
        }
    }
}
