//! Seeded generators for sparse-jump test signals and images.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::check_min_separation;
use crate::error::{Result, SdqError};

const MAX_ATTEMPTS: usize = 10_000;
/// Piecewise-linear values live on this dyadic grid so that second
/// differences of each linear piece are exactly zero.
const GRID_BITS: i32 = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub n: usize,
    /// 1 = piecewise constant, 2 = piecewise linear.
    pub beta: usize,
    /// Number of jumps (beta = 1) or kinks (beta = 2).
    pub s: usize,
    pub range: (f64, f64),
    /// Enforce a circular minimum separation `2N/M` between jumps; the
    /// signal is then periodic so its circular difference has the same support.
    pub separation: Option<usize>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SignalSpec {
    pub fn new(n: usize, beta: usize, s: usize, seed: u64) -> Self {
        Self {
            n,
            beta,
            s,
            range: (0.0, 1.0),
            separation: None,
            noise_sigma: 0.0,
            seed,
        }
    }
}

/// Default noise level for noisy experiments: one eighth of the alphabet step.
pub fn default_noise_sigma(delta: f64) -> f64 {
    delta / 8.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSignal {
    /// Signal before noise.
    pub clean: Vec<f64>,
    /// Signal after noise (equal to `clean` when sigma is zero).
    pub signal: Vec<f64>,
    /// Indices `k` where the signal (beta = 1) or its slope (beta = 2) changes
    /// between `k - 1` and `k`; circular in separated mode.
    pub support: Vec<usize>,
}

pub fn gen_piecewise(spec: &SignalSpec) -> Result<Vec<f64>> {
    Ok(gen_piecewise_detailed(spec)?.signal)
}

pub fn gen_piecewise_detailed(spec: &SignalSpec) -> Result<GeneratedSignal> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut clean, support) = match (spec.beta, spec.separation) {
        (1, None) => piecewise_constant(spec, &mut rng),
        (1, Some(m)) => periodic_constant(spec, m, &mut rng)?,
        (2, _) => piecewise_linear(spec, &mut rng),
        _ => unreachable!(),
    };
    for v in &mut clean {
        *v = v.clamp(0.0, 1.0);
    }
    let mut signal = clean.clone();
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| SdqError::InvalidArgument(e.to_string()))?;
        for v in &mut signal {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(GeneratedSignal {
        clean,
        signal,
        support,
    })
}

fn validate(spec: &SignalSpec) -> Result<()> {
    let bad = |m: String| Err(SdqError::InvalidArgument(m));
    if spec.n < 2 {
        return bad(format!("signal length {} is too short", spec.n));
    }
    if !(spec.beta == 1 || spec.beta == 2) {
        return bad(format!("beta must be 1 or 2, got {}", spec.beta));
    }
    let (lo, hi) = spec.range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return bad(format!("invalid amplitude range ({lo}, {hi})"));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return bad(format!("invalid noise sigma {}", spec.noise_sigma));
    }
    let slots = spec.n - spec.beta;
    if spec.s > slots {
        return Err(SdqError::Infeasible(format!(
            "{} jumps do not fit in a length-{} signal",
            spec.s, spec.n
        )));
    }
    if spec.s > 0 && lo == hi {
        return Err(SdqError::Infeasible(
            "jumps need a nondegenerate amplitude range".into(),
        ));
    }
    if let Some(m) = spec.separation {
        if spec.beta != 1 {
            return bad("separated signals are only generated for beta = 1".into());
        }
        if m == 0 {
            return bad("separation parameter M must be positive".into());
        }
        if spec.s == 1 {
            return Err(SdqError::Infeasible(
                "a periodic piecewise-constant signal cannot have exactly one jump".into(),
            ));
        }
        // s points on a cycle of length N need s * ceil(2N/M) <= N
        let gap = (2 * spec.n).div_ceil(m);
        if spec.s * gap > spec.n {
            return Err(SdqError::Infeasible(format!(
                "{} jumps cannot be spaced {} apart on length {}",
                spec.s, gap, spec.n
            )));
        }
    }
    Ok(())
}

fn sorted_sample(rng: &mut ChaCha8Rng, lo: usize, hi: usize, k: usize) -> Vec<usize> {
    let mut v: Vec<usize> = sample(rng, hi - lo, k).into_iter().map(|i| i + lo).collect();
    v.sort_unstable();
    v
}

fn draw_level(rng: &mut ChaCha8Rng, range: (f64, f64), avoid: &[f64]) -> f64 {
    loop {
        let v = rng.gen_range(range.0..=range.1);
        if !avoid.contains(&v) {
            return v;
        }
    }
}

fn fill_levels(n: usize, breaks: &[usize], levels: &[f64], wrap: bool) -> Vec<f64> {
    let mut x = vec![0.0; n];
    let mut piece = if wrap { levels.len() - 1 } else { 0 };
    let mut next = 0;
    for (i, xi) in x.iter_mut().enumerate() {
        if next < breaks.len() && breaks[next] == i {
            piece = if wrap { next } else { next + 1 };
            next += 1;
        }
        *xi = levels[piece];
    }
    x
}

fn piecewise_constant(spec: &SignalSpec, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>) {
    let jumps = sorted_sample(rng, 1, spec.n, spec.s);
    let mut levels = vec![draw_level(rng, spec.range, &[])];
    for _ in 0..spec.s {
        let prev = *levels.last().unwrap();
        levels.push(draw_level(rng, spec.range, &[prev]));
    }
    (fill_levels(spec.n, &jumps, &levels, false), jumps)
}

fn periodic_constant(
    spec: &SignalSpec,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if spec.s == 0 {
        let c = draw_level(rng, spec.range, &[]);
        return Ok((vec![c; spec.n], Vec::new()));
    }
    let mut jumps = None;
    for _ in 0..MAX_ATTEMPTS {
        let cand = sorted_sample(rng, 0, spec.n, spec.s);
        if check_min_separation(&cand, spec.n, m) {
            jumps = Some(cand);
            break;
        }
    }
    let jumps = jumps.ok_or_else(|| {
        SdqError::Infeasible(format!(
            "no separated support found in {MAX_ATTEMPTS} attempts (s = {}, N = {}, M = {m})",
            spec.s, spec.n
        ))
    })?;
    // levels[j] holds on [jumps[j], jumps[j+1]) circularly
    let mut levels = vec![draw_level(rng, spec.range, &[])];
    for j in 1..spec.s {
        let prev = levels[j - 1];
        let avoid = if j == spec.s - 1 {
            vec![prev, levels[0]]
        } else {
            vec![prev]
        };
        levels.push(draw_level(rng, spec.range, &avoid));
    }
    Ok((fill_levels(spec.n, &jumps, &levels, true), jumps))
}

fn to_grid(v: f64) -> f64 {
    let scale = 2f64.powi(GRID_BITS);
    (v * scale).round() / scale
}

fn piecewise_linear(spec: &SignalSpec, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>) {
    let n = spec.n;
    let (lo, hi) = spec.range;
    // slope changes between increments k-1 and k, for k in 2..n
    let kinks = sorted_sample(rng, 2, n, spec.s);
    let gmax = (hi - lo) / (n - 1) as f64;
    let mut slopes = vec![to_grid(rng.gen_range(-gmax..=gmax))];
    for _ in 0..spec.s {
        let prev = *slopes.last().unwrap();
        let g = loop {
            let g = to_grid(rng.gen_range(-gmax..=gmax));
            if g != prev && g.abs() <= gmax {
                break g;
            }
        };
        slopes.push(g);
    }
    let mut x = vec![0.0; n];
    let mut piece = 0;
    for i in 1..n {
        if piece < kinks.len() && kinks[piece] == i {
            piece += 1;
        }
        x[i] = x[i - 1] + slopes[piece];
    }
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = 2f64.powi(GRID_BITS);
    let base = ((lo - min) * scale).ceil() / scale;
    let room = ((hi - max - base) * scale).floor().max(0.0);
    let offset = base + (rng.gen_range(0.0..=room)).floor() / scale;
    for v in &mut x {
        *v += offset;
    }
    (x, kinks)
}

/// Interior nonzero count of `(D^beta)^T x`, leaving out the last `beta`
/// boundary entries.
pub fn interior_jump_count(x: &[f64], beta: usize) -> usize {
    let mut d = x.to_vec();
    for _ in 0..beta {
        let n = d.len();
        for i in 0..n.saturating_sub(1) {
            d[i] -= d[i + 1];
        }
    }
    d.iter()
        .take(x.len().saturating_sub(beta))
        .filter(|v| **v != 0.0)
        .count()
}

/// `||D^T X||_0 + ||X D||_0`, counting the boundary rows and columns.
pub fn image_jump_count(x: &Array2<f64>) -> usize {
    let (rows, cols) = x.dim();
    let mut count = 0;
    for j in 0..cols {
        for i in 0..rows {
            let below = if i + 1 < rows { x[[i + 1, j]] } else { 0.0 };
            if x[[i, j]] - below != 0.0 {
                count += 1;
            }
        }
    }
    for i in 0..rows {
        for j in 0..cols {
            let right = if j + 1 < cols { x[[i, j + 1]] } else { 0.0 };
            if x[[i, j]] - right != 0.0 {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSpec {
    /// Budget for `||D^T X||_0 + ||X D||_0`.
    pub s: usize,
    /// Block values are drawn from this range, excluding zero.
    pub range: (f64, f64),
    pub seed: u64,
    /// Lay the blocks out for the transposed shape and transpose the result.
    pub transposed_layout: bool,
}

impl ImageSpec {
    pub fn new(s: usize, seed: u64) -> Self {
        Self {
            s,
            range: (0.1, 1.0),
            seed,
            transposed_layout: false,
        }
    }
}

/// Constant blocks on a zero background. Each `h x w` block sits strictly
/// inside the image and away from other blocks, so it costs exactly
/// `2 (h + w)` nonzeros; the total equals the largest even number `<= s`
/// that can be split into blocks (every value except 2).
pub fn gen_piecewise_image(rows: usize, cols: usize, spec: &ImageSpec) -> Result<Array2<f64>> {
    if spec.transposed_layout {
        let inner = ImageSpec {
            transposed_layout: false,
            ..spec.clone()
        };
        return Ok(gen_piecewise_image(cols, rows, &inner)?.reversed_axes());
    }
    let (lo, hi) = spec.range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) || (lo == 0.0 && hi == 0.0) {
        return Err(SdqError::InvalidArgument(format!(
            "invalid block value range ({lo}, {hi})"
        )));
    }
    let mut img = Array2::zeros((rows, cols));
    let mut budget = spec.s - spec.s % 2;
    if budget < 4 {
        return Ok(img);
    }
    if rows < 3 || cols < 3 {
        return Err(SdqError::Infeasible(format!(
            "a {rows}x{cols} image has no interior for blocks"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let hmax = ((rows - 2) / 2).max(1);
    let wmax = ((cols - 2) / 2).max(1);
    let pmax = 2 * (hmax + wmax);
    // occupied cells including a one-pixel halo
    let mut used = Array2::from_elem((rows, cols), false);
    while budget >= 4 {
        let mut p = 2 * rng.gen_range(2..=budget.min(pmax) / 2);
        if budget - p == 2 {
            p = if p + 2 <= pmax { p + 2 } else { p - 2 };
        }
        let half = p / 2;
        let placed = (0..MAX_ATTEMPTS).find_map(|_| {
            let h_lo = half.saturating_sub(wmax).max(1);
            let h_hi = (half - 1).min(hmax);
            if h_lo > h_hi {
                return None;
            }
            let h = rng.gen_range(h_lo..=h_hi);
            let w = half - h;
            let r0 = rng.gen_range(1..=rows - 1 - h);
            let c0 = rng.gen_range(1..=cols - 1 - w);
            let free = (r0 - 1..=r0 + h)
                .all(|i| (c0 - 1..=c0 + w).all(|j| !used[[i, j]]));
            free.then_some((r0, c0, h, w))
        });
        let (r0, c0, h, w) = placed.ok_or_else(|| {
            SdqError::Infeasible(format!(
                "could not place blocks for budget {} in a {rows}x{cols} image",
                spec.s
            ))
        })?;
        let value = loop {
            let v = rng.gen_range(lo..=hi);
            if v != 0.0 {
                break v;
            }
        };
        for i in r0..r0 + h {
            for j in c0..c0 + w {
                img[[i, j]] = value;
            }
        }
        for i in r0 - 1..=r0 + h {
            for j in c0 - 1..=c0 + w {
                used[[i, j]] = true;
            }
        }
        budget -= p;
    }
    Ok(img)
}

/// Synthetic cartoon: a few flat rectangles and ellipses over a flat
/// background, all levels in `[0.1, 0.9]`.
pub fn gen_cartoon_image(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Array2::from_elem((rows, cols), rng.gen_range(0.1..=0.9));
    let shapes = 8;
    for _ in 0..shapes {
        let level = rng.gen_range(0.1..=0.9);
        let ci = rng.gen_range(0.0..rows as f64);
        let cj = rng.gen_range(0.0..cols as f64);
        let ri = rng.gen_range(0.08..0.3) * rows as f64;
        let rj = rng.gen_range(0.08..0.3) * cols as f64;
        let ellipse = rng.gen_bool(0.5);
        for ((i, j), v) in img.indexed_iter_mut() {
            let di = (i as f64 - ci) / ri;
            let dj = (j as f64 - cj) / rj;
            let inside = if ellipse {
                di * di + dj * dj <= 1.0
            } else {
                di.abs() <= 1.0 && dj.abs() <= 1.0
            };
            if inside {
                *v = level;
            }
        }
    }
    img
}
