//! 8-bit binary PGM (P5) and PPM (P6) reading and writing.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Result, SdqError};

/// Grayscale images have one channel, RGB images three. Values are in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: Vec<Array2<f64>>,
}

impl Image {
    pub fn gray(x: Array2<f64>) -> Self {
        Self { channels: vec![x] }
    }

    pub fn is_rgb(&self) -> bool {
        self.channels.len() == 3
    }

    pub fn dim(&self) -> (usize, usize) {
        self.channels.first().map_or((0, 0), |c| c.dim())
    }
}

fn format_err(msg: impl Into<String>) -> SdqError {
    SdqError::Format(msg.into())
}

struct Header<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(format!("malformed header: bad {what}")))
    }
}

pub fn decode_pnm(data: &[u8]) -> Result<Image> {
    if data.len() < 2 {
        return Err(format_err("file too short for a PNM header"));
    }
    let channels = match &data[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(format_err("expected a binary PGM (P5) or PPM (P6) file")),
    };
    let mut h = Header { data, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(format_err(format!("unsupported maxval {maxval}; only 8-bit (255) is supported")));
    }
    if width == 0 || height == 0 {
        return Err(format_err("image has zero size"));
    }
    // exactly one whitespace byte separates the header from the raster
    if h.pos >= data.len() || !data[h.pos].is_ascii_whitespace() {
        return Err(format_err("malformed header: missing separator before pixel data"));
    }
    let start = h.pos + 1;
    let need = width * height * channels;
    let raster = data
        .get(start..start + need)
        .ok_or_else(|| format_err(format!("truncated raster: need {need} bytes")))?;
    let planes = (0..channels)
        .map(|c| {
            Array2::from_shape_fn((height, width), |(i, j)| {
                raster[(i * width + j) * channels + c] as f64 / 255.0
            })
        })
        .collect();
    Ok(Image { channels: planes })
}

fn to_byte(v: f64) -> u8 {
    // f64::round rounds half away from zero
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn encode_pnm(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels.len() {
        1 => "P5",
        3 => "P6",
        n => return Err(SdqError::InvalidArgument(format!("cannot write an image with {n} channels"))),
    };
    let (rows, cols) = img.dim();
    if img.channels.iter().any(|c| c.dim() != (rows, cols)) {
        return Err(SdqError::InvalidArgument("channel shapes differ".into()));
    }
    let mut out = format!("{magic}\n{cols} {rows}\n255\n").into_bytes();
    out.reserve(rows * cols * img.channels.len());
    for i in 0..rows {
        for j in 0..cols {
            for c in &img.channels {
                out.push(to_byte(c[[i, j]]));
            }
        }
    }
    Ok(out)
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_pnm(&std::fs::read(path)?)
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    std::fs::write(path, encode_pnm(img)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_p5() {
        let mut data = b"P5\n2 2\n255\n".to_vec();
        data.extend([0, 255, 51, 102]);
        let img = decode_pnm(&data).unwrap();
        assert_eq!(img.dim(), (2, 2));
        assert_eq!(img.channels[0][[0, 1]], 1.0);
        assert_eq!(img.channels[0][[1, 0]], 0.2);
    }

    #[test]
    fn header_comments() {
        let mut data = b"P5 # made by hand\n3 # width\n1\n255\n".to_vec();
        data.extend([1, 2, 3]);
        assert_eq!(decode_pnm(&data).unwrap().dim(), (1, 3));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(decode_pnm(b"P5\n2 2\n65535\n"), Err(SdqError::Format(_))));
        assert!(matches!(decode_pnm(b"P2\n2 2\n255\n"), Err(SdqError::Format(_))));
        assert!(matches!(decode_pnm(b"P5\n2 2\n255\n\x01"), Err(SdqError::Format(_))));
        assert!(matches!(decode_pnm(b"P5\nx 2\n255\n"), Err(SdqError::Format(_))));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(to_byte(0.5 / 255.0), 1);
        assert_eq!(to_byte(-0.1), 0);
        assert_eq!(to_byte(1.7), 255);
    }

    proptest! {
        #[test]
        fn prop_round_trip(rows in 1usize..9, cols in 1usize..9, rgb in any::<bool>(), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = if rgb { 3 } else { 1 };
            let img = Image {
                channels: (0..n)
                    .map(|_| Array2::from_shape_fn((rows, cols), |_| rng.gen_range(0..=255u8) as f64 / 255.0))
                    .collect(),
            };
            let bytes = encode_pnm(&img).unwrap();
            let back = decode_pnm(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode_pnm(&back).unwrap(), bytes);
        }
    }
}
