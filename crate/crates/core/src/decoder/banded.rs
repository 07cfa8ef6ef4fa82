//! Banded symmetric positive definite factorization, assembled by probing a
//! matrix-free operator.

use crate::error::{Result, SdqError};

/// Lower Cholesky factor `L` of a symmetric band matrix with half-bandwidth `w`,
/// optionally in a permuted ordering.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    w: usize,
    /// Row `i` stores `L[i][i-w..=i]`; entries left of column 0 stay zero.
    data: Vec<f64>,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Option<Vec<usize>>,
}

/// Interleaves the two ends of `0..n` so that a cyclically banded matrix
/// becomes banded: `[0, n-1, 1, n-2, ...]`.
pub fn interleaved_permutation(n: usize) -> Vec<usize> {
    (0..n)
        .map(|k| if k % 2 == 0 { k / 2 } else { n - 1 - k / 2 })
        .collect()
}

/// Recovers the lower band of a symmetric matrix with half-bandwidth `w`
/// from `2w + 1` products with colored probe vectors.
pub fn probe_band<F>(n: usize, w: usize, mut matvec: F) -> Vec<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let width = w + 1;
    let mut band = vec![0.0; n * width];
    let period = (2 * w + 1).min(n.max(1));
    let mut probe = vec![0.0; n];
    let mut out = vec![0.0; n];
    for g in 0..period {
        probe.iter_mut().enumerate().for_each(|(j, p)| *p = if j % period == g { 1.0 } else { 0.0 });
        matvec(&probe, &mut out);
        for j in (g..n).step_by(period) {
            for i in j..(j + w + 1).min(n) {
                band[i * width + w - (i - j)] = out[i];
            }
        }
    }
    band
}

impl BandedCholesky {
    /// Factors the band returned by [`probe_band`].
    pub fn factor(n: usize, w: usize, mut band: Vec<f64>) -> Result<Self> {
        let width = w + 1;
        assert_eq!(band.len(), n * width);
        for i in 0..n {
            let j0 = i.saturating_sub(w);
            for j in j0..=i {
                let p0 = j0.max(j.saturating_sub(w));
                let mut s = band[i * width + w + j - i];
                let ri = i * width + w - i;
                let rj = j * width + w - j;
                for p in p0..j {
                    s -= band[ri + p] * band[rj + p];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(SdqError::LinearSolve { row: i, pivot: s });
                    }
                    band[ri + i] = s.sqrt();
                } else {
                    band[ri + j] = s / band[rj + j];
                }
            }
        }
        Ok(Self {
            n,
            w,
            data: band,
            perm: None,
        })
    }

    /// Probes `matvec` in the permuted ordering given by `perm` and factors it.
    pub fn factor_operator<F>(n: usize, w: usize, perm: Option<Vec<usize>>, mut matvec: F) -> Result<Self>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let band = match &perm {
            None => probe_band(n, w, matvec),
            Some(p) => {
                let mut xin = vec![0.0; n];
                let mut xout = vec![0.0; n];
                probe_band(n, w, |v, out| {
                    for (k, &idx) in p.iter().enumerate() {
                        xin[idx] = v[k];
                    }
                    matvec(&xin, &mut xout);
                    for (k, &idx) in p.iter().enumerate() {
                        out[k] = xout[idx];
                    }
                })
            }
        };
        let mut chol = Self::factor(n, w, band)?;
        chol.perm = perm;
        Ok(chol)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn half_bandwidth(&self) -> usize {
        self.w
    }

    /// Solves `M x = b` in place; `scratch` must have length `n` when permuted.
    pub fn solve_in_place(&self, b: &mut [f64], scratch: &mut [f64]) {
        match &self.perm {
            None => self.solve_natural(b),
            Some(p) => {
                for (k, &idx) in p.iter().enumerate() {
                    scratch[k] = b[idx];
                }
                self.solve_natural(scratch);
                for (k, &idx) in p.iter().enumerate() {
                    b[idx] = scratch[k];
                }
            }
        }
    }

    fn solve_natural(&self, b: &mut [f64]) {
        let (n, w) = (self.n, self.w);
        let width = w + 1;
        for i in 0..n {
            let ri = i * width + w - i;
            let mut s = b[i];
            for p in i.saturating_sub(w)..i {
                s -= self.data[ri + p] * b[p];
            }
            b[i] = s / self.data[ri + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + w + 1).min(n) {
                s -= self.data[k * width + w - k + i] * b[k];
            }
            b[i] = s / self.data[i * width + w];
        }
    }
}
