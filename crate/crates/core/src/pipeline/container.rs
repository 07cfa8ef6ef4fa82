//! The `.sdq` container: a little-endian header, an MSB-first bit-packed
//! index payload and a CRC32 footer.
//!
//! Layout:
//! ```text
//! "SDQ1" | mode u8 | order u8 | beta u8 | channels u8 | rows u32 | cols u32
//! | patch_rows u32 | patch_cols u32 | remainder u8
//! | alphabet: kind u8, bits u8, margin u32, a f64, b f64 [, count u32, levels f64...]
//! | fine_tail u8
//! | payload: for each channel, each patch (row-major), the main indices
//!   row-major (tail rows excluded), then the tail indices row-major
//! | crc32 u32 over everything before it
//! ```

use std::path::Path;

use ndarray::Array2;

use crate::alphabet::{make_fine_boundary_alphabet, Alphabet, AlphabetKind};
use crate::encoder::{EncodeMode, FineTail, SigmaDeltaCode};
use crate::error::{Result, SdqError};
use crate::pipeline::layout::{PatchLayout, Remainder};

pub const MAGIC: &[u8; 4] = b"SDQ1";

#[derive(Debug, Clone, PartialEq)]
pub struct SdqContainer {
    pub mode: EncodeMode,
    pub order: usize,
    /// Suggested decoder smoothness order; informational.
    pub beta_hint: usize,
    pub rows: usize,
    pub cols: usize,
    pub layout: PatchLayout,
    pub alphabet: Alphabet,
    /// Columns end with fine-alphabet entries for the boundary-aware decoder.
    pub fine_tail: bool,
    /// `codes[channel][patch]`, patches in row-major tile order.
    pub codes: Vec<Vec<SigmaDeltaCode>>,
}

/// Bits per index for `levels` distinct values.
pub fn index_bits(levels: u64) -> u32 {
    if levels <= 1 {
        0
    } else {
        64 - (levels - 1).leading_zeros()
    }
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl BitWriter {
    fn push(&mut self, value: u64, bits: u32) {
        for k in (0..bits).rev() {
            self.acc = (self.acc << 1) | ((value >> k) & 1);
            self.nbits += 1;
            if self.nbits == 8 {
                self.bytes.push(self.acc as u8);
                self.acc = 0;
                self.nbits = 0;
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.bytes.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.bytes
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    bit: usize,
}

impl BitReader<'_> {
    fn pull(&mut self, bits: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..bits {
            let byte = *self
                .data
                .get(self.bit / 8)
                .ok_or_else(|| SdqError::Format("payload truncated".into()))?;
            v = (v << 1) | ((byte >> (7 - self.bit % 8)) & 1) as u64;
            self.bit += 1;
        }
        Ok(v)
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .data
            .get(self.pos..self.pos + n)
            .ok_or_else(|| SdqError::Format("header truncated".into()))?;
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| SdqError::InvalidArgument(format!("{what} {v} does not fit in 32 bits")))
}

fn to_u8(v: usize, what: &str) -> Result<u8> {
    u8::try_from(v).map_err(|_| SdqError::InvalidArgument(format!("{what} {v} does not fit in 8 bits")))
}

impl SdqContainer {
    fn tail_rows(&self) -> usize {
        if self.fine_tail {
            self.order
        } else {
            0
        }
    }

    /// Checks that every code agrees with the header.
    pub fn validate(&self) -> Result<()> {
        let tiles = self.layout.tiles(self.rows, self.cols);
        if self.codes.is_empty() || self.codes.len() > 255 {
            return Err(SdqError::InvalidArgument("container needs 1 to 255 channels".into()));
        }
        for ch in &self.codes {
            if ch.len() != tiles.len() {
                return Err(SdqError::SizeMismatch {
                    expected: tiles.len(),
                    got: ch.len(),
                });
            }
            for (code, &(_, _, h, w)) in ch.iter().zip(&tiles) {
                let ok = code.indices.dim() == (h, w)
                    && code.mode == self.mode
                    && code.order == self.order
                    && code.alphabet == self.alphabet
                    && code.fine_tail.is_some() == self.fine_tail;
                if !ok {
                    return Err(SdqError::InvalidArgument(
                        "patch code disagrees with the container header".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = MAGIC.to_vec();
        out.push(self.mode as u8);
        out.push(to_u8(self.order, "order")?);
        out.push(to_u8(self.beta_hint, "beta")?);
        out.push(self.codes.len() as u8);
        for v in [self.rows, self.cols, self.layout.patch_rows, self.layout.patch_cols] {
            out.extend(to_u32(v, "dimension")?.to_le_bytes());
        }
        out.push(self.layout.remainder as u8);
        let alpha = &self.alphabet;
        out.push(alpha.kind() as u8);
        out.push(alpha.bit_depth() as u8);
        out.extend(alpha.margin().to_le_bytes());
        let (a, b) = alpha.range();
        out.extend(a.to_le_bytes());
        out.extend(b.to_le_bytes());
        if alpha.kind() == AlphabetKind::Custom {
            out.extend(to_u32(alpha.len(), "level count")?.to_le_bytes());
            for v in alpha.levels() {
                out.extend(v.to_le_bytes());
            }
        }
        out.push(self.fine_tail as u8);

        let main_bits = index_bits(alpha.len() as u64);
        let tail = self.tail_rows();
        let mut bits = BitWriter::default();
        for ch in &self.codes {
            for code in ch {
                let (h, w) = code.indices.dim();
                for i in 0..h.saturating_sub(tail) {
                    for j in 0..w {
                        bits.push(code.indices[[i, j]] as u64, main_bits);
                    }
                }
                if let Some(ft) = &code.fine_tail {
                    let fb = ft.alphabet.index_bits();
                    for v in ft.indices.iter() {
                        bits.push(*v, fb);
                    }
                }
            }
        }
        out.extend(bits.finish());
        let crc = crc32fast::hash(&out);
        out.extend(crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < MAGIC.len() + 4 || &data[..4] != MAGIC {
            return Err(SdqError::Format("not an SDQ1 container".into()));
        }
        let (body, footer) = data.split_at(data.len() - 4);
        let stored = u32::from_le_bytes(footer.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(SdqError::Format("CRC32 mismatch: container is corrupted".into()));
        }
        let mut c = Cursor { data: body, pos: 4 };
        let mode = EncodeMode::from_tag(c.u8()?)
            .ok_or_else(|| SdqError::Format("unknown mode byte".into()))?;
        let order = c.u8()? as usize;
        let beta_hint = c.u8()? as usize;
        let channels = c.u8()? as usize;
        let rows = c.u32()? as usize;
        let cols = c.u32()? as usize;
        let patch_rows = c.u32()? as usize;
        let patch_cols = c.u32()? as usize;
        let remainder = Remainder::from_tag(c.u8()?)
            .ok_or_else(|| SdqError::Format("unknown remainder policy".into()))?;
        let layout = PatchLayout {
            patch_rows,
            patch_cols,
            remainder,
        };
        layout.validate().map_err(|e| SdqError::Format(e.to_string()))?;
        let kind = AlphabetKind::from_tag(c.u8()?)
            .ok_or_else(|| SdqError::Format("unknown alphabet kind".into()))?;
        let bit_depth = c.u8()? as u32;
        let margin = c.u32()?;
        let a = c.f64()?;
        let b = c.f64()?;
        let alphabet = if kind == AlphabetKind::Custom {
            let n = c.u32()? as usize;
            let levels = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
            Alphabet::custom(levels, bit_depth)
        } else {
            Alphabet::from_params(kind, a, b, bit_depth, margin)
        }
        .map_err(|e| SdqError::Format(format!("bad alphabet record: {e}")))?;
        let fine_tail = match c.u8()? {
            0 => false,
            1 => true,
            _ => return Err(SdqError::Format("bad fine-tail flag".into())),
        };
        if channels == 0 || rows == 0 || cols == 0 {
            return Err(SdqError::Format("container has no pixels".into()));
        }

        let tiles = layout.tiles(rows, cols);
        let main_bits = index_bits(alphabet.len() as u64);
        let tail = if fine_tail { order } else { 0 };
        let mut reader = BitReader {
            data: &body[c.pos..],
            bit: 0,
        };
        let mut codes = Vec::with_capacity(channels);
        for _ in 0..channels {
            let mut patches = Vec::with_capacity(tiles.len());
            for &(_, _, h, w) in &tiles {
                if h < tail {
                    return Err(SdqError::Format("patch shorter than the fine tail".into()));
                }
                let mut indices = Array2::<u32>::zeros((h, w));
                for i in 0..h - tail {
                    for j in 0..w {
                        let k = reader.pull(main_bits)?;
                        if k as usize >= alphabet.len() {
                            return Err(SdqError::Format(format!("index {k} outside the alphabet")));
                        }
                        indices[[i, j]] = k as u32;
                    }
                }
                let fine = if fine_tail {
                    let fa = make_fine_boundary_alphabet(&alphabet, h, order)
                        .map_err(|e| SdqError::Format(format!("bad fine alphabet: {e}")))?;
                    let fb = fa.index_bits();
                    let mut fi = Array2::<u64>::zeros((tail, w));
                    for v in fi.iter_mut() {
                        *v = reader.pull(fb)?;
                        if *v >= fa.len() {
                            return Err(SdqError::Format("fine index outside the alphabet".into()));
                        }
                    }
                    Some(FineTail {
                        alphabet: fa,
                        indices: fi,
                    })
                } else {
                    None
                };
                patches.push(SigmaDeltaCode {
                    indices,
                    mode,
                    order,
                    alphabet: alphabet.clone(),
                    fine_tail: fine,
                });
            }
            codes.push(patches);
        }
        if reader.data.len() != reader.bit.div_ceil(8) {
            return Err(SdqError::Format("trailing bytes after the payload".into()));
        }
        Ok(Self {
            mode,
            order,
            beta_hint,
            rows,
            cols,
            layout,
            alphabet,
            fine_tail,
            codes,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
