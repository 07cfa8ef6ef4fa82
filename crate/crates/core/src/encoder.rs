//! Memoryless, dithered, column-wise sigma-delta and 2D sigma-delta quantizers.
//!
//! All sigma-delta state starts at zero. The 1D r-th order rule feeds back
//! `g_r = sum_{j=1}^r (-1)^{j-1} C(r, j) u_{i-j}` and keeps `D^r u = y - q`.
//! The 2D rule uses the tensor-product stencil of the same binomial weights so
//! that `D^r u (D^r)^T = y - q`; with `r = 1` it is
//! `q_ij = Q(u_{i,j-1} + u_{i-1,j} - u_{i-1,j-1} + y_ij)`, and the zero
//! boundary turns the first row and column into plain 1D recursions.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, FineBoundaryAlphabet};
use crate::error::{Result, SdqError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodeMode {
    Msq = 0,
    MsqDither = 1,
    Sd1dCol = 2,
    Sd2d = 3,
}

impl EncodeMode {
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Self::Msq),
            1 => Some(Self::MsqDither),
            2 => Some(Self::Sd1dCol),
            3 => Some(Self::Sd2d),
            _ => None,
        }
    }
}

/// Fine-alphabet indices for the last `r` entries of every column.
#[derive(Debug, Clone, PartialEq)]
pub struct FineTail {
    pub alphabet: FineBoundaryAlphabet,
    /// Shape `(r, cols)`; row `k` holds entry `N - r + k` of each column.
    pub indices: Array2<u64>,
}

/// Quantizer output: level indices plus everything needed to dequantize.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaDeltaCode {
    /// Indices into `alphabet`, same shape as the input. Entries covered by
    /// `fine_tail` hold zero.
    pub indices: Array2<u32>,
    pub mode: EncodeMode,
    pub order: usize,
    pub alphabet: Alphabet,
    pub fine_tail: Option<FineTail>,
}

impl SigmaDeltaCode {
    pub fn shape(&self) -> (usize, usize) {
        self.indices.dim()
    }

    /// Quantized values `q`.
    pub fn dequantize(&self) -> Array2<f64> {
        let mut q = self.indices.mapv(|k| self.alphabet.level(k as usize));
        if let Some(tail) = &self.fine_tail {
            let rows = q.nrows();
            let r = tail.indices.nrows();
            for k in 0..r {
                for j in 0..q.ncols() {
                    q[[rows - r + k, j]] = tail.alphabet.level(tail.indices[[k, j]]);
                }
            }
        }
        q
    }

    /// Dequantized column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.dequantize().column(j).to_vec()
    }
}

/// Sigma-delta state retained for stability audits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    pub u: Array2<f64>,
    pub max_abs: f64,
    /// Number of quantizer inputs that fell more than half a step outside the
    /// alphabet and were clamped.
    pub clamped: usize,
}

impl StateGrid {
    fn new(u: Array2<f64>, clamped: usize) -> Self {
        let max_abs = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            u,
            max_abs,
            clamped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    /// Abort when `|u|` exceeds this multiple of the alphabet step.
    pub instability_factor: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            instability_factor: 10.0,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Weights `(-1)^a C(r, a)` for `a = 0..=r`.
fn difference_weights(order: usize) -> Vec<f64> {
    (0..=order)
        .map(|a| if a % 2 == 0 { 1.0 } else { -1.0 } * binomial(order, a))
        .collect()
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 {
        return Err(SdqError::InvalidArgument("order r must be at least 1".into()));
    }
    Ok(())
}

/// Memoryless scalar quantization of every entry.
pub fn encode_msq(x: &Array2<f64>, alphabet: &Alphabet) -> SigmaDeltaCode {
    SigmaDeltaCode {
        indices: x.mapv(|v| alphabet.quantize(v).index as u32),
        mode: EncodeMode::Msq,
        order: 0,
        alphabet: alphabet.clone(),
        fine_tail: None,
    }
}

/// MSQ after adding i.i.d. uniform `[-step/2, step/2]` noise drawn from `seed`
/// in row-major order.
pub fn encode_msq_dithered(x: &Array2<f64>, alphabet: &Alphabet, seed: u64) -> SigmaDeltaCode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = alphabet.step() / 2.0;
    let mut indices = Array2::zeros(x.dim());
    for (out, &v) in indices.iter_mut().zip(x.iter()) {
        let eta = rng.gen_range(-half..=half);
        *out = alphabet.quantize(v + eta).index as u32;
    }
    SigmaDeltaCode {
        indices,
        mode: EncodeMode::MsqDither,
        order: 0,
        alphabet: alphabet.clone(),
        fine_tail: None,
    }
}

struct ColumnCode {
    indices: Vec<u32>,
    fine: Vec<u64>,
    u: Vec<f64>,
    clamped: usize,
}

fn sd1d_column(
    y: &[f64],
    alphabet: &Alphabet,
    order: usize,
    fine: Option<&FineBoundaryAlphabet>,
    threshold: f64,
) -> Result<ColumnCode> {
    let n = y.len();
    let w = difference_weights(order);
    let tail_start = match fine {
        Some(_) => n.saturating_sub(order),
        None => n,
    };
    let mut u = vec![0.0; n];
    let mut indices = vec![0u32; n];
    let mut fine_idx = Vec::with_capacity(n - tail_start);
    let mut clamped = 0;
    for i in 0..n {
        // g_r = -sum_{j>=1} w_j u_{i-j}
        let mut g = 0.0;
        for j in 1..=order.min(i) {
            g -= w[j] * u[i - j];
        }
        let z = g + y[i];
        let value = match fine {
            Some(f) if i >= tail_start => {
                let (v, k) = f.quantize(z);
                fine_idx.push(k);
                v
            }
            _ => {
                let q = alphabet.quantize(z);
                indices[i] = q.index as u32;
                clamped += q.clamped as usize;
                q.value
            }
        };
        u[i] = z - value;
        if !(u[i].abs() <= threshold) {
            return Err(SdqError::EncoderInstability {
                location: format!("index {i}"),
                magnitude: u[i].abs(),
                threshold,
            });
        }
    }
    Ok(ColumnCode {
        indices,
        fine: fine_idx,
        u,
        clamped,
    })
}

fn check_fine(fine: Option<&FineBoundaryAlphabet>, n: usize, order: usize) -> Result<()> {
    if let Some(f) = fine {
        if f.signal_len() != n || f.order() != order {
            return Err(SdqError::InvalidArgument(format!(
                "fine alphabet built for (N={}, r={}) but encoding (N={n}, r={order})",
                f.signal_len(),
                f.order()
            )));
        }
        if n < order {
            return Err(SdqError::InvalidArgument(
                "signal shorter than the fine tail".into(),
            ));
        }
    }
    Ok(())
}

/// r-th order 1D sigma-delta of a single signal. The result has shape `(N, 1)`.
pub fn encode_sd1d(
    y: &[f64],
    alphabet: &Alphabet,
    order: usize,
    fine: Option<&FineBoundaryAlphabet>,
    cfg: &EncoderConfig,
) -> Result<(SigmaDeltaCode, StateGrid)> {
    let x = Array2::from_shape_vec((y.len(), 1), y.to_vec()).expect("shape");
    encode_sd1d_columns(&x, alphabet, order, fine, cfg)
}

/// Applies [`encode_sd1d`] to every column independently (in parallel).
pub fn encode_sd1d_columns(
    x: &Array2<f64>,
    alphabet: &Alphabet,
    order: usize,
    fine: Option<&FineBoundaryAlphabet>,
    cfg: &EncoderConfig,
) -> Result<(SigmaDeltaCode, StateGrid)> {
    check_order(order)?;
    let (rows, cols) = x.dim();
    check_fine(fine, rows, order)?;
    let threshold = cfg.instability_factor * alphabet.step();
    let columns: Vec<Result<ColumnCode>> = (0..cols)
        .into_par_iter()
        .map(|j| {
            let col = x.column(j).to_vec();
            sd1d_column(&col, alphabet, order, fine, threshold)
                .map_err(|e| e.at(&format!("column {j}")))
        })
        .collect();
    let mut indices = Array2::zeros((rows, cols));
    let mut u = Array2::zeros((rows, cols));
    let tail_rows = if fine.is_some() { order } else { 0 };
    let mut fine_idx = Array2::zeros((tail_rows, cols));
    let mut clamped = 0;
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        for i in 0..rows {
            indices[[i, j]] = col.indices[i];
            u[[i, j]] = col.u[i];
        }
        for (k, &f) in col.fine.iter().enumerate() {
            fine_idx[[k, j]] = f;
        }
        clamped += col.clamped;
    }
    let code = SigmaDeltaCode {
        indices,
        mode: EncodeMode::Sd1dCol,
        order,
        alphabet: alphabet.clone(),
        fine_tail: fine.map(|f| FineTail {
            alphabet: f.clone(),
            indices: fine_idx,
        }),
    };
    Ok((code, StateGrid::new(u, clamped)))
}

/// Wavefronts at least this long are evaluated in parallel.
const PARALLEL_WAVEFRONT: usize = 512;

/// r-th order 2D sigma-delta. For `r = 1` with the optimal alphabet the state
/// must stay within the alphabet's stability constant (plus 1e-9); otherwise
/// the configured multiple of the step applies.
pub fn encode_sd2d(
    y: &Array2<f64>,
    alphabet: &Alphabet,
    order: usize,
    cfg: &EncoderConfig,
) -> Result<(SigmaDeltaCode, StateGrid)> {
    check_order(order)?;
    let (rows, cols) = y.dim();
    let threshold = match (order, alphabet.stability_constant_2d()) {
        (1, Some(c)) => c + 1e-9,
        _ => cfg.instability_factor * alphabet.step(),
    };
    let w = difference_weights(order);
    let mut u = Array2::<f64>::zeros((rows, cols));
    let mut indices = Array2::<u32>::zeros((rows, cols));
    let mut clamped = 0usize;

    let cell = |u: &Array2<f64>, i: usize, j: usize| -> (f64, Quant) {
        let mut g = 0.0;
        for a in 0..=order.min(i) {
            for b in 0..=order.min(j) {
                if a == 0 && b == 0 {
                    continue;
                }
                g -= w[a] * w[b] * u[[i - a, j - b]];
            }
        }
        let z = g + y[[i, j]];
        let q = alphabet.quantize(z);
        (
            z - q.value,
            Quant {
                index: q.index as u32,
                clamped: q.clamped,
            },
        )
    };

    if rows > 0 && cols > 0 {
        for t in 0..rows + cols - 1 {
            let i_lo = t.saturating_sub(cols - 1);
            let i_hi = t.min(rows - 1);
            let len = i_hi + 1 - i_lo;
            let results: Vec<(f64, Quant)> = if len >= PARALLEL_WAVEFRONT {
                (i_lo..=i_hi)
                    .into_par_iter()
                    .map(|i| cell(&u, i, t - i))
                    .collect()
            } else {
                (i_lo..=i_hi).map(|i| cell(&u, i, t - i)).collect()
            };
            for (off, (state, q)) in results.into_iter().enumerate() {
                let i = i_lo + off;
                let j = t - i;
                if !(state.abs() <= threshold) {
                    return Err(SdqError::EncoderInstability {
                        location: format!("pixel ({i}, {j})"),
                        magnitude: state.abs(),
                        threshold,
                    });
                }
                u[[i, j]] = state;
                indices[[i, j]] = q.index;
                clamped += q.clamped as usize;
            }
        }
    }

    let code = SigmaDeltaCode {
        indices,
        mode: EncodeMode::Sd2d,
        order,
        alphabet: alphabet.clone(),
        fine_tail: None,
    };
    Ok((code, StateGrid::new(u, clamped)))
}

#[derive(Debug, Clone, Copy)]
struct Quant {
    index: u32,
    clamped: bool,
}

/// `D^r u (D^r)^T` for a state grid; `(D^r u)` alone when `two_sided` is false.
pub fn shaped_error(u: &Array2<f64>, order: usize, two_sided: bool) -> Array2<f64> {
    use crate::grid_ops::DiffOperator;
    let mut out = u.clone();
    DiffOperator::forward(u.nrows(), order)
        .apply_left(&mut out)
        .expect("shape");
    if two_sided {
        DiffOperator::forward(u.ncols(), order)
            .apply_right_transposed(&mut out)
            .expect("shape");
    }
    out
}

/// Splits an image into its columns as owned vectors.
pub fn columns_of(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.axis_iter(Axis(1)).map(|c| c.to_vec()).collect()
}
