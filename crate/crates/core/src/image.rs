//! 8-bit grayscale rasters and the portable anymap (PGM/PPM) codec.

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Degenerate(format!(
                "image has zero area ({width}x{height})"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with a single intensity.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    /// Pixel value with zero fill outside the raster.
    #[inline]
    fn get_or_zero(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.get(x as usize, y as usize) as f64
        }
    }

    /// Bilinear sample at a real-valued position. Pixel `(i, j)` sits at
    /// coordinate `(i, j)`; neighbours outside the raster contribute 0.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let mut acc = 0.0;
        // Skipping zero weights keeps integer positions exact at the border.
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            if wx == 0.0 {
                continue;
            }
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                if wy == 0.0 {
                    continue;
                }
                acc += wx * wy * self.get_or_zero(xi + dx, yi + dy);
            }
        }
        acc
    }
}

/// Clamp and round a real intensity to 8 bits (half away from zero).
#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// ITU-R 601 luma with round-half-up, computed in integers so that it is bit-exact.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let c = self.data[self.pos];
            if c == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(pnm_err("expected an unsigned integer"));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| pnm_err("integer out of range"))
    }
}

fn pnm_err(msg: impl Into<String>) -> Error {
    Error::Format {
        what: "PNM",
        msg: msg.into(),
    }
}

fn read_header(cur: &mut Cursor<'_>) -> Result<Header> {
    if cur.data.len() < 2 || cur.data[0] != b'P' {
        return Err(pnm_err("missing P magic"));
    }
    let magic = [cur.data[0], cur.data[1]];
    if !matches!(magic[1], b'2' | b'3' | b'5' | b'6') {
        return Err(pnm_err(format!(
            "unsupported variant P{}",
            magic[1] as char
        )));
    }
    cur.pos = 2;
    let width = cur.next_uint()? as usize;
    let height = cur.next_uint()? as usize;
    let maxval = cur.next_uint()?;
    if width == 0 || height == 0 {
        return Err(pnm_err("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(pnm_err(format!("maxval {maxval} out of range")));
    }
    Ok(Header {
        magic,
        width,
        height,
        maxval,
    })
}

/// Decode a PGM (P2/P5) or PPM (P3/P6) image to 8-bit grayscale.
///
/// Samples with `maxval != 255` are rescaled to 0..=255 first; color pixels
/// are reduced with [`luma`].
pub fn decode_pnm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { data: bytes, pos: 0 };
    let header = read_header(&mut cur)?;
    let channels = if matches!(header.magic[1], b'3' | b'6') { 3 } else { 1 };
    let count = header.width * header.height * channels;
    let mut samples = Vec::with_capacity(count);
    match header.magic[1] {
        b'2' | b'3' => {
            for _ in 0..count {
                let v = cur.next_uint()?;
                if v > header.maxval {
                    return Err(pnm_err(format!("sample {v} exceeds maxval")));
                }
                samples.push(v);
            }
        }
        _ => {
            // Exactly one whitespace byte separates the header from raster data.
            cur.pos += 1;
            let wide = header.maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            let raster = bytes
                .get(cur.pos..cur.pos + need)
                .ok_or_else(|| pnm_err("truncated raster"))?;
            if wide {
                samples.extend(raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as u32));
            } else {
                samples.extend(raster.iter().map(|&b| b as u32));
            }
            if samples.iter().any(|&v| v > header.maxval) {
                return Err(pnm_err("sample exceeds maxval"));
            }
        }
    }
    let scale = |v: u32| -> u8 {
        if header.maxval == 255 {
            v as u8
        } else {
            ((v * 255 * 2 + header.maxval) / (2 * header.maxval)) as u8
        }
    };
    let pixels = if channels == 1 {
        samples.into_iter().map(scale).collect()
    } else {
        samples
            .chunks_exact(3)
            .map(|c| luma(scale(c[0]), scale(c[1]), scale(c[2])))
            .collect()
    };
    GrayImage::new(header.width, header.height, pixels)
}

/// Encode as binary PGM (P5, maxval 255).
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_pgm_with_comments() {
        let src = b"P2\n# a comment\n3 2\n255\n0 1 2\n3 4 255\n";
        let img = decode_pnm(src).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.pixels(), &[0, 1, 2, 3, 4, 255]);
    }

    #[test]
    fn binary_pgm_roundtrip() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x * 40 + y * 7) as u8).unwrap();
        assert_eq!(decode_pnm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn ppm_luma_is_rounded_half_up() {
        // 0.299*255 = 76.245 -> 76, 0.587*255 = 149.685 -> 150, 0.114*255 = 29.07 -> 29
        let src = b"P6 3 1 255\n\xff\x00\x00\x00\xff\x00\x00\x00\xff";
        let img = decode_pnm(src).unwrap();
        assert_eq!(img.pixels(), &[76, 150, 29]);
        // 0.299*1 + 0.587*1 + 0.114*0 = 0.886 -> 1; (10,10,10) stays 10.
        assert_eq!(luma(1, 1, 0), 1);
        assert_eq!(luma(10, 10, 10), 10);
        // 0.114*250 = 28.5 exactly
        assert_eq!(luma(0, 0, 250), 29);
        assert_eq!(luma(255, 255, 255), 255);
    }

    #[test]
    fn sixteen_bit_pgm_is_rescaled() {
        let src = b"P5 2 1 65535\n\xff\xff\x00\x00";
        assert_eq!(decode_pnm(src).unwrap().pixels(), &[255, 0]);
    }

    #[test]
    fn truncated_raster_is_rejected() {
        assert!(decode_pnm(b"P5 4 4 255\n\x00\x01").is_err());
        assert!(decode_pnm(b"P4 1 1\n\x00").is_err());
        assert!(decode_pnm(b"P2 0 1 255\n").is_err());
    }

    #[test]
    fn bilinear_sample_exact_on_grid() {
        let img = GrayImage::from_fn(3, 3, |x, y| (x + 3 * y) as u8 * 10).unwrap();
        assert_eq!(img.sample_bilinear(2.0, 2.0), 80.0);
        assert_eq!(img.sample_bilinear(0.5, 0.0), 5.0);
        assert_eq!(img.sample_bilinear(-1.0, 0.0), 0.0);
        assert_eq!(img.sample_bilinear(-0.5, 0.0), 0.0);
    }
}
