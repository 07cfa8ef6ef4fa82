//! Scaled-form ADMM for `min_x tau ||A x + c||_1 + 1/2 ||x - v||^2`, splitting
//! `w = A x + c`. The ridge matrix `I + rho A^T A` is factored once and the
//! splitting state is kept between calls so repeated proxes warm-start.

use crate::decoder::banded::{interleaved_permutation, BandedCholesky};
use crate::decoder::operator::TvOperator;
use crate::error::Result;

#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct AdmmProx {
    op: TvOperator,
    c: Vec<f64>,
    rho: f64,
    chol: BandedCholesky,
    w: Vec<f64>,
    mu: Vec<f64>,
    split: f64,
    ax: Vec<f64>,
    tmp_range: Vec<f64>,
    scratch_range: Vec<f64>,
    scratch_dim: Vec<f64>,
}

/// Factors `I + rho A^T A`. The cyclic operator is reordered so its band is narrow.
fn factor_ridge(op: &TvOperator, rho: f64) -> Result<BandedCholesky> {
    let n = op.dim();
    let m = op.range_dim();
    let (w, perm) = match op {
        TvOperator::Cyclic { .. } if n > 2 => (
            (2 * op.gram_half_bandwidth() + 2).min(n - 1),
            Some(interleaved_permutation(n)),
        ),
        TvOperator::Cyclic { .. } => (n.saturating_sub(1), None),
        _ => (op.gram_half_bandwidth(), None),
    };
    let mut ax = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    BandedCholesky::factor_operator(n, w, perm, |x, out| {
        op.apply(x, &mut ax);
        op.apply_t(&ax, out, &mut scratch);
        for (o, v) in out.iter_mut().zip(x) {
            *o = v + rho * *o;
        }
    })
}

impl AdmmProx {
    pub fn new(op: TvOperator, c: Vec<f64>, rho: f64) -> Result<Self> {
        let n = op.dim();
        let m = op.range_dim();
        assert_eq!(c.len(), m);
        Ok(Self {
            chol: factor_ridge(&op, rho)?,
            op,
            w: c.clone(),
            c,
            rho,
            mu: vec![0.0; m],
            split: 0.0,
            ax: vec![0.0; m],
            tmp_range: vec![0.0; m],
            scratch_range: vec![0.0; m],
            scratch_dim: vec![0.0; n],
        })
    }

    pub fn operator(&self) -> &TvOperator {
        &self.op
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Runs `iters` ADMM sweeps and writes the prox of `tau ||A . + c||_1` at `v` into `x`.
    pub fn prox(&mut self, v: &[f64], tau: f64, iters: usize, x: &mut [f64]) {
        if tau == 0.0 {
            x.copy_from_slice(v);
            return;
        }
        let thr = tau / self.rho;
        for _ in 0..iters.max(1) {
            for (((t, w), c), mu) in self.tmp_range.iter_mut().zip(&self.w).zip(&self.c).zip(&self.mu) {
                *t = w - c - mu;
            }
            self.op.apply_t(&self.tmp_range, x, &mut self.scratch_range);
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi = vi + self.rho * *xi;
            }
            self.chol.solve_in_place(x, &mut self.scratch_dim);
            self.op.apply(x, &mut self.ax);
            let mut split_sq = 0.0;
            for (((w, mu), ax), c) in self.w.iter_mut().zip(self.mu.iter_mut()).zip(&self.ax).zip(&self.c) {
                let s = ax + c;
                *w = soft_threshold(s + *mu, thr);
                *mu += s - *w;
                split_sq += (s - *w) * (s - *w);
            }
            self.split = split_sq.sqrt();
        }
    }

    /// The splitting variable and scaled multiplier.
    pub fn state(&self) -> (&[f64], &[f64]) {
        (&self.w, &self.mu)
    }

    pub fn set_state(&mut self, w: &[f64], mu: &[f64]) {
        self.w.copy_from_slice(w);
        self.mu.copy_from_slice(mu);
    }

    /// Euclidean norm of `A x + c - w` after the last sweep.
    pub fn split_residual(&self) -> f64 {
        self.split
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrinkage_examples() {
        assert!((soft_threshold(0.7, 0.25) - 0.45).abs() < 1e-15);
        assert!((soft_threshold(-0.7, 0.25) + 0.45).abs() < 1e-15);
        assert_eq!(soft_threshold(0.2, 0.25), 0.0);
    }

    #[test]
    fn zero_tau_is_identity() {
        let op = TvOperator::Column { n: 6, r: 1, beta: 1 };
        let mut prox = AdmmProx::new(op, vec![0.3; 6], 1.0).unwrap();
        let v = [0.1, -0.2, 0.3, 0.0, 5.0, -1.0];
        let mut x = [0.0; 6];
        prox.prox(&v, 0.0, 10, &mut x);
        assert_eq!(x, v);
    }
}
