//! Patch tiling of images.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdqError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Remainder {
    /// Edge patches are smaller when the image size is not a multiple.
    Ragged = 0,
    /// The image is reflect-padded up to a multiple of the patch size.
    PadReflect = 1,
}

impl Remainder {
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Self::Ragged),
            1 => Some(Self::PadReflect),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub patch_rows: usize,
    pub patch_cols: usize,
    pub remainder: Remainder,
}

/// One tile and its top-left corner in the (possibly padded) image.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub row0: usize,
    pub col0: usize,
    pub data: Array2<f64>,
}

impl PatchLayout {
    pub fn new(patch_rows: usize, patch_cols: usize) -> Self {
        Self {
            patch_rows,
            patch_cols,
            remainder: Remainder::Ragged,
        }
    }

    /// A single patch covering the whole image.
    pub fn full(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols)
    }

    /// Parses `RxC`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || SdqError::InvalidArgument(format!("patch size must look like 32x32, got {text:?}"));
        let (r, c) = text.split_once(['x', 'X']).ok_or_else(bad)?;
        let r: usize = r.trim().parse().map_err(|_| bad())?;
        let c: usize = c.trim().parse().map_err(|_| bad())?;
        let layout = Self::new(r, c);
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_rows == 0 || self.patch_cols == 0 {
            return Err(SdqError::InvalidArgument("patch dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Size of the grid that gets tiled: the image itself, or the padded image.
    pub fn tiled_shape(&self, rows: usize, cols: usize) -> (usize, usize) {
        match self.remainder {
            Remainder::Ragged => (rows, cols),
            Remainder::PadReflect => (
                rows.div_ceil(self.patch_rows) * self.patch_rows,
                cols.div_ceil(self.patch_cols) * self.patch_cols,
            ),
        }
    }

    /// Patch rectangles `(row0, col0, height, width)` in row-major order.
    pub fn tiles(&self, rows: usize, cols: usize) -> Vec<(usize, usize, usize, usize)> {
        let (tr, tc) = self.tiled_shape(rows, cols);
        let mut out = Vec::new();
        for r0 in (0..tr).step_by(self.patch_rows) {
            for c0 in (0..tc).step_by(self.patch_cols) {
                out.push((r0, c0, self.patch_rows.min(tr - r0), self.patch_cols.min(tc - c0)));
            }
        }
        out
    }
}

fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let k = i % period;
    if k < n {
        k
    } else {
        period - k
    }
}

pub fn segment(x: &Array2<f64>, layout: &PatchLayout) -> Result<Vec<Patch>> {
    layout.validate()?;
    let (rows, cols) = x.dim();
    if rows == 0 || cols == 0 {
        return Err(SdqError::InvalidArgument("cannot segment an empty image".into()));
    }
    let (tr, tc) = layout.tiled_shape(rows, cols);
    let padded;
    let src = if (tr, tc) == (rows, cols) {
        x
    } else {
        padded = Array2::from_shape_fn((tr, tc), |(i, j)| x[[reflect(i, rows), reflect(j, cols)]]);
        &padded
    };
    Ok(layout
        .tiles(rows, cols)
        .into_iter()
        .map(|(r0, c0, h, w)| Patch {
            row0: r0,
            col0: c0,
            data: src.slice(s![r0..r0 + h, c0..c0 + w]).to_owned(),
        })
        .collect())
}

/// Inverse of [`segment`]: places patches and crops any padding.
pub fn stack(patches: &[Patch], rows: usize, cols: usize, layout: &PatchLayout) -> Result<Array2<f64>> {
    let (tr, tc) = layout.tiled_shape(rows, cols);
    let tiles = layout.tiles(rows, cols);
    if tiles.len() != patches.len() {
        return Err(SdqError::SizeMismatch {
            expected: tiles.len(),
            got: patches.len(),
        });
    }
    let mut out = Array2::zeros((tr, tc));
    for (p, (r0, c0, h, w)) in patches.iter().zip(tiles) {
        if (p.row0, p.col0) != (r0, c0) || p.data.dim() != (h, w) {
            return Err(SdqError::InvalidArgument(format!(
                "patch at ({}, {}) with shape {:?} does not match the layout",
                p.row0,
                p.col0,
                p.data.dim()
            )));
        }
        out.slice_mut(s![r0..r0 + h, c0..c0 + w]).assign(&p.data);
    }
    Ok(out.slice(s![0..rows, 0..cols]).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_layout_is_one_patch() {
        let x = Array2::from_shape_fn((5, 7), |(i, j)| (i * 7 + j) as f64);
        let p = segment(&x, &PatchLayout::full(5, 7)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].data, x);
    }

    #[test]
    fn sixteen_by_sixteen_tiles() {
        let x = Array2::zeros((512, 512));
        assert_eq!(segment(&x, &PatchLayout::new(16, 16)).unwrap().len(), 1024);
    }

    #[test]
    fn parse_and_reject() {
        assert_eq!(PatchLayout::parse("32x16").unwrap(), PatchLayout::new(32, 16));
        assert!(PatchLayout::parse("0x4").is_err());
        assert!(PatchLayout::parse("abc").is_err());
        assert!(segment(&Array2::zeros((4, 4)), &PatchLayout::new(0, 2)).is_err());
    }

    #[test]
    fn reflect_padding() {
        let x = Array2::from_shape_fn((3, 1), |(i, _)| i as f64);
        let mut layout = PatchLayout::new(4, 1);
        layout.remainder = Remainder::PadReflect;
        let p = segment(&x, &layout).unwrap();
        assert_eq!(p[0].data.column(0).to_vec(), vec![0.0, 1.0, 2.0, 1.0]);
    }

    proptest! {
        #[test]
        fn prop_stack_inverts_segment(
            rows in 1usize..40, cols in 1usize..40,
            pr in 1usize..12, pc in 1usize..12,
            pad in any::<bool>(), seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>());
            let mut layout = PatchLayout::new(pr, pc);
            if pad { layout.remainder = Remainder::PadReflect; }
            let patches = segment(&x, &layout).unwrap();
            let back = stack(&patches, rows, cols, &layout).unwrap();
            prop_assert_eq!(back, x);
        }
    }
}
