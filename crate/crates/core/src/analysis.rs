//! Quality metrics, sparsity measures, the minimum-separation check and
//! spectral diagnostics.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, ArrayViewMut1};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdqError};
use crate::grid_ops::{diff, LowPassProjector};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(SdqError::SizeMismatch { expected: a, got: b });
    }
    Ok(())
}

fn norm2(x: impl Iterator<Item = f64>) -> f64 {
    x.map(|v| v * v).sum::<f64>().sqrt()
}

/// `20 log10(||x|| / ||x - y||)`. Perfect reconstructions give `+inf`, a zero
/// reference with nonzero error gives `-inf`.
pub fn snr_db(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x.len(), y.len())?;
    let err = norm2(x.iter().zip(y).map(|(a, b)| a - b));
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let sig = norm2(x.iter().copied());
    if sig == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(20.0 * (sig / err).log10())
}

pub fn mse(x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(SdqError::InvalidArgument(format!(
            "shape mismatch: {:?} vs {:?}",
            x.dim(),
            y.dim()
        )));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

/// `20 log10(max_i / sqrt(MSE))`, `+inf` for identical inputs.
pub fn psnr_db(x: &Array2<f64>, y: &Array2<f64>, max_i: f64) -> Result<f64> {
    let m = mse(x, y)?;
    Ok(psnr_from_mse(m, max_i))
}

pub fn psnr_from_mse(mse: f64, max_i: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (max_i / mse.sqrt()).log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub snr_db: f64,
    pub psnr_db: f64,
    pub mse: f64,
    pub l2_error: f64,
    pub linf_error: f64,
    /// Worst column-wise `||P_L (x_hat - x)||_inf` per requested cutoff.
    pub lowpass_linf: BTreeMap<usize, f64>,
}

impl QualityReport {
    /// Compare a reconstruction against the truth. Cutoffs larger than half the
    /// column length are skipped.
    pub fn compute(
        truth: &Array2<f64>,
        recon: &Array2<f64>,
        max_i: f64,
        cutoffs: &[usize],
    ) -> Result<Self> {
        let mse = mse(truth, recon)?;
        let flat_t: Vec<f64> = truth.iter().copied().collect();
        let flat_r: Vec<f64> = recon.iter().copied().collect();
        let snr = snr_db(&flat_t, &flat_r)?;
        let l2 = norm2(flat_t.iter().zip(&flat_r).map(|(a, b)| a - b));
        let linf = flat_t
            .iter()
            .zip(&flat_r)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let rows = truth.nrows();
        let mut lowpass = BTreeMap::new();
        for &cut in cutoffs {
            if rows == 0 || cut > rows / 2 {
                continue;
            }
            let proj = LowPassProjector::new(rows, cut)?;
            let mut worst = 0.0f64;
            for j in 0..truth.ncols() {
                let e: Vec<f64> = truth
                    .column(j)
                    .iter()
                    .zip(recon.column(j).iter())
                    .map(|(a, b)| b - a)
                    .collect();
                let p = proj.project(&e)?;
                worst = worst.max(p.iter().map(|v| v.abs()).fold(0.0, f64::max));
            }
            lowpass.insert(cut, worst);
        }
        Ok(Self {
            snr_db: snr,
            psnr_db: psnr_from_mse(mse, max_i),
            mse,
            l2_error: l2,
            linf_error: linf,
            lowpass_linf: lowpass,
        })
    }
}

/// Sum of magnitudes of all but the `s` largest-magnitude entries.
pub fn l1_tail(z: &[f64], s: usize) -> f64 {
    let mut mags: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.iter().skip(s).sum()
}

/// Wrap-around distance between two indices on a cycle of length `n`.
pub fn wrap_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b) % n.max(1);
    d.min(n - d)
}

/// True iff every pair of distinct support points is at wrap distance at
/// least `2N/M`. Checked in integers as `d * M >= 2 N`.
pub fn check_min_separation(support: &[usize], n: usize, m: usize) -> bool {
    let mut pts: Vec<usize> = support.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 2 {
        return true;
    }
    // sorted points on a cycle: the closest pair is adjacent (including the wrap pair)
    let k = pts.len();
    (0..k).all(|i| {
        let d = wrap_distance(pts[i], pts[(i + 1) % k], n);
        (d as u128) * (m as u128) >= 2 * n as u128
    })
}

/// Samples of `sin(w t)` on `n` uniform points spanning `[0, 2 pi]`.
pub fn sine_probe(w: f64, n: usize) -> Vec<f64> {
    let h = if n > 1 {
        2.0 * std::f64::consts::PI / (n - 1) as f64
    } else {
        0.0
    };
    (0..n).map(|i| (w * h * i as f64).sin()).collect()
}

/// `||D^r s_w|| / ||s_w||` for a sampled sinusoid of frequency `w`.
pub fn noise_shaping_ratio(r: usize, w: f64, n: usize) -> f64 {
    shaping_ratio(r, w, n, 0)
}

/// Same ratio with the first `r` rows of `D^r` dropped. Those rows see the
/// implicit zeros before the signal and contribute an `O(1/N)` start-up
/// transient for `r >= 2`, which hides the high-order gain at the lowest
/// frequencies.
pub fn noise_shaping_ratio_interior(r: usize, w: f64, n: usize) -> f64 {
    shaping_ratio(r, w, n, r.min(n))
}

fn shaping_ratio(r: usize, w: f64, n: usize, skip: usize) -> f64 {
    let s = sine_probe(w, n);
    let mut d = s.clone();
    for _ in 0..r {
        diff(ArrayViewMut1::from(d.as_mut_slice()));
    }
    norm2(d.into_iter().skip(skip)) / norm2(s.into_iter())
}

/// `|DFT(x - q)|` in natural FFT order (DC first).
pub fn error_spectrum(x: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    check_len(x.len(), q.len())?;
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let mut buf: Vec<Complex64> = x
        .iter()
        .zip(q)
        .map(|(a, b)| Complex64::new(a - b, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
    Ok(buf.iter().map(|c| c.norm()).collect())
}

/// Share of spectral energy in bins with `min(k, N-k) <= kmax`. Zero spectra
/// give 0.
pub fn low_band_energy_fraction(spectrum: &[f64], kmax: usize) -> f64 {
    let n = spectrum.len();
    let total: f64 = spectrum.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    let low: f64 = spectrum
        .iter()
        .enumerate()
        .filter(|(k, _)| (*k).min(n - k) <= kmax)
        .map(|(_, v)| v * v)
        .sum();
    low / total
}

/// `||P_L (x_hat - x)||_inf`.
pub fn lowpass_error(x: &[f64], x_hat: &[f64], cutoff: usize) -> Result<f64> {
    check_len(x.len(), x_hat.len())?;
    let e: Vec<f64> = x_hat.iter().zip(x).map(|(a, b)| a - b).collect();
    let p = LowPassProjector::new(x.len(), cutoff)?.project(&e)?;
    Ok(p.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

/// Write a CSV table with a header row and 17-significant-digit floats.
pub fn write_csv<W: Write>(mut out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(SdqError::SizeMismatch {
                expected: header.len(),
                got: row.len(),
            });
        }
        let cells: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
