//! Quantization alphabets and the nearest-level scalar quantizer.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdqError};

/// Largest bit depth accepted by the alphabet constructors.
pub const MAX_BIT_DEPTH: u32 = 24;

/// Default cap on the number of levels of a fine boundary alphabet. Indices
/// past 2^52 stop being exactly representable as `f64` offsets.
pub const FINE_LEVEL_CAP: u64 = 1 << 52;

/// How an alphabet was built; stored in the container so it can be rebuilt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphabetKind {
    /// Evenly spaced grid through `a` and `b`, optionally with margin levels.
    Uniform = 0,
    /// `{a - 2C, a, a + 2C, ..., b, b + 2C}` with `C = (b - a) / (2 (2^d - 3))`.
    Optimal2d = 1,
    /// Cell midpoints of `[a, b]` split into `2^d` equal cells.
    Midrise = 2,
    /// Arbitrary sorted levels.
    Custom = 3,
}

impl AlphabetKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Self::Uniform),
            1 => Some(Self::Optimal2d),
            2 => Some(Self::Midrise),
            3 => Some(Self::Custom),
            _ => None,
        }
    }
}

/// Sorted set of quantization levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    levels: Vec<f64>,
    step: f64,
    bit_depth: u32,
    range: (f64, f64),
    margin: u32,
    kind: AlphabetKind,
}

/// Output of [`Alphabet::quantize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    pub value: f64,
    pub index: usize,
    /// The input lay more than half a step outside the level range.
    pub clamped: bool,
}

fn check_bits(d: u32) -> Result<u64> {
    if d == 0 || d > MAX_BIT_DEPTH {
        return Err(SdqError::InvalidArgument(format!(
            "bit depth must be in 1..={MAX_BIT_DEPTH}, got {d}"
        )));
    }
    Ok(1u64 << d)
}

fn check_range(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(SdqError::InvalidArgument(format!(
            "alphabet range needs finite a < b, got ({a}, {b})"
        )));
    }
    Ok(())
}

/// Evenly spaced grid covering `[a, b]` plus `margin_levels` extra levels past
/// each end, using all `2^d` levels.
pub fn make_uniform_alphabet(a: f64, b: f64, d: u32, margin_levels: u32) -> Result<Alphabet> {
    check_range(a, b)?;
    let budget = check_bits(d)?;
    let requested = 2 + 2 * margin_levels as u64;
    if requested > budget {
        return Err(SdqError::LevelBudgetExceeded { requested, budget });
    }
    let interior = budget - 2 * margin_levels as u64;
    let gaps = (interior - 1) as f64;
    let step = (b - a) / gaps;
    let m = margin_levels as i64;
    let levels = (0..budget as i64)
        .map(|k| a + (b - a) * ((k - m) as f64 / gaps))
        .collect();
    Ok(Alphabet {
        levels,
        step,
        bit_depth: d,
        range: (a, b),
        margin: margin_levels,
        kind: AlphabetKind::Uniform,
    })
}

/// The uniform 2D alphabet with stability constant `C = (b - a) / (2 (2^d - 3))`.
pub fn make_optimal_2d_alphabet(a: f64, b: f64, d: u32) -> Result<Alphabet> {
    if d < 2 {
        return Err(SdqError::UnsupportedBitDepth(d));
    }
    let mut alpha = make_uniform_alphabet(a, b, d, 1)?;
    alpha.kind = AlphabetKind::Optimal2d;
    Ok(alpha)
}

/// Alphabet for the r-th order 2D scheme. Order one is the optimal alphabet;
/// higher orders widen the margin to `2^{r-1}` levels per side.
pub fn make_sd2d_alphabet(a: f64, b: f64, d: u32, order: usize) -> Result<Alphabet> {
    if order <= 1 {
        return make_optimal_2d_alphabet(a, b, d);
    }
    if d < 2 {
        return Err(SdqError::UnsupportedBitDepth(d));
    }
    make_uniform_alphabet(a, b, d, 1 << (order - 1))
}

/// `2^d` cell midpoints of `[a, b]`: the MSQ-optimal grid for uniform data.
pub fn make_midrise_alphabet(a: f64, b: f64, d: u32) -> Result<Alphabet> {
    check_range(a, b)?;
    let budget = check_bits(d)?;
    let step = (b - a) / budget as f64;
    let levels = (0..budget)
        .map(|k| a + (b - a) * ((k as f64 + 0.5) / budget as f64))
        .collect();
    Ok(Alphabet {
        levels,
        step,
        bit_depth: d,
        range: (a, b),
        margin: 0,
        kind: AlphabetKind::Midrise,
    })
}

/// Default margin for the greedy r-th order 1D scheme: `2^{r-1} - 1` levels
/// per side, the smallest margin that keeps `|u| <= step/2` for inputs in range.
pub fn default_margin_1d(order: usize) -> u32 {
    if order == 0 {
        0
    } else {
        (1u32 << (order - 1)) - 1
    }
}

impl Alphabet {
    /// User-supplied levels; must be strictly increasing with at most `2^d` entries.
    pub fn custom(levels: Vec<f64>, bit_depth: u32) -> Result<Self> {
        let budget = check_bits(bit_depth)?;
        if levels.is_empty() || levels.len() as u64 > budget {
            return Err(SdqError::LevelBudgetExceeded {
                requested: levels.len() as u64,
                budget,
            });
        }
        if levels.iter().any(|v| !v.is_finite()) || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SdqError::InvalidArgument(
                "custom levels must be finite and strictly increasing".into(),
            ));
        }
        let step = levels
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let step = if step.is_finite() { step } else { 1.0 };
        let range = (levels[0], levels[levels.len() - 1]);
        Ok(Self {
            levels,
            step,
            bit_depth,
            range,
            margin: 0,
            kind: AlphabetKind::Custom,
        })
    }

    /// Rebuilds an alphabet from its serialized parameters.
    pub fn from_params(kind: AlphabetKind, a: f64, b: f64, d: u32, margin: u32) -> Result<Self> {
        match kind {
            AlphabetKind::Uniform => make_uniform_alphabet(a, b, d, margin),
            AlphabetKind::Optimal2d => make_optimal_2d_alphabet(a, b, d),
            AlphabetKind::Midrise => make_midrise_alphabet(a, b, d),
            AlphabetKind::Custom => Err(SdqError::InvalidArgument(
                "custom alphabets carry explicit levels".into(),
            )),
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, index: usize) -> f64 {
        self.levels[index]
    }

    /// Level spacing (smallest gap for custom alphabets).
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn margin(&self) -> u32 {
        self.margin
    }

    pub fn kind(&self) -> AlphabetKind {
        self.kind
    }

    pub fn min_level(&self) -> f64 {
        self.levels[0]
    }

    pub fn max_level(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// Guaranteed state bound of the first-order 2D recursion, when known.
    pub fn stability_constant_2d(&self) -> Option<f64> {
        match self.kind {
            AlphabetKind::Optimal2d => Some(self.step / 2.0),
            _ => None,
        }
    }

    /// Nearest level with ties going to the lower level; out-of-range inputs clamp.
    pub fn quantize(&self, z: f64) -> Quantized {
        let lv = &self.levels;
        let n = lv.len();
        // first index with level > z
        let upper = lv.partition_point(|&l| l <= z);
        let index = if upper == 0 {
            0
        } else if upper == n {
            n - 1
        } else {
            let lo = upper - 1;
            if z - lv[lo] <= lv[upper] - z {
                lo
            } else {
                upper
            }
        };
        let half = self.step / 2.0;
        let clamped = z < lv[0] - half || z > lv[n - 1] + half;
        Quantized {
            value: lv[index],
            index,
            clamped,
        }
    }
}

/// `(level, index)` of the nearest level to `z`.
pub fn scalar_quantize(alphabet: &Alphabet, z: f64) -> (f64, usize) {
    let q = alphabet.quantize(z);
    (q.value, q.index)
}

/// Finer uniform alphabet used for the last `r` samples of a column so the
/// decoder can impose the tightened boundary constraint. Levels are implicit:
/// `{a~, a~ + step, ..., a~ + K step, b~}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FineBoundaryAlphabet {
    base_step: f64,
    fine_step: f64,
    low: f64,
    high: f64,
    /// Largest `j` with `low + j * fine_step < high`.
    top: u64,
    signal_len: usize,
    order: usize,
}

pub fn make_fine_boundary_alphabet(
    base: &Alphabet,
    signal_len: usize,
    order: usize,
) -> Result<FineBoundaryAlphabet> {
    make_fine_boundary_alphabet_capped(base, signal_len, order, FINE_LEVEL_CAP)
}

pub fn make_fine_boundary_alphabet_capped(
    base: &Alphabet,
    signal_len: usize,
    order: usize,
    cap: u64,
) -> Result<FineBoundaryAlphabet> {
    if order == 0 {
        return Err(SdqError::InvalidArgument("order r must be at least 1".into()));
    }
    if signal_len < 2 {
        return Err(SdqError::InvalidArgument(
            "fine boundary alphabet needs N >= 2".into(),
        ));
    }
    if base.kind() == AlphabetKind::Custom {
        return Err(SdqError::InvalidArgument(
            "fine boundary alphabet needs a uniform base alphabet".into(),
        ));
    }
    let delta = base.step();
    let (a, b) = base.range();
    let fine_step = 2.0 * delta / (2.0 * signal_len as f64).powi(order as i32);
    let ext = (2f64.powi(order as i32 - 1) - 0.5) * delta;
    let low = a - ext;
    let high = b + ext;
    let span = (high - low) / fine_step;
    if !(span.is_finite()) || span + 2.0 > cap as f64 {
        return Err(SdqError::FineAlphabetTooLarge {
            levels: span + 2.0,
            cap,
        });
    }
    let mut top = span.floor() as u64;
    while top > 0 && low + top as f64 * fine_step >= high {
        top -= 1;
    }
    while low + (top + 1) as f64 * fine_step < high {
        top += 1;
    }
    Ok(FineBoundaryAlphabet {
        base_step: delta,
        fine_step,
        low,
        high,
        top,
        signal_len,
        order,
    })
}

impl FineBoundaryAlphabet {
    pub fn base_step(&self) -> f64 {
        self.base_step
    }

    pub fn fine_step(&self) -> f64 {
        self.fine_step
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of levels, `K + 2`.
    pub fn len(&self) -> u64 {
        self.top + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bits needed to index one level.
    pub fn index_bits(&self) -> u32 {
        64 - (self.len() - 1).leading_zeros()
    }

    pub fn level(&self, index: u64) -> f64 {
        if index > self.top {
            self.high
        } else {
            self.low + index as f64 * self.fine_step
        }
    }

    /// Bound the decoder imposes on the last `r` entries of `D^{-r}(z - q)`.
    pub fn boundary_bound(&self) -> f64 {
        (1.0 / (2.0 * self.signal_len as f64)).powi(self.order as i32) * self.base_step
    }

    pub fn quantize(&self, z: f64) -> (f64, u64) {
        if z <= self.low {
            return (self.low, 0);
        }
        if z >= self.high {
            return (self.high, self.top + 1);
        }
        let j = (((z - self.low) / self.fine_step).floor() as u64).min(self.top);
        let lo = self.level(j);
        let hi = self.level(j + 1);
        if z - lo <= hi - z {
            (lo, j)
        } else {
            (hi, j + 1)
        }
    }
}
