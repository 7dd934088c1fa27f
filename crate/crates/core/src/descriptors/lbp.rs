use super::CodeImage;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Neighbour offsets `(dx, dy)` in bit order: start at the right neighbour and
/// go counter-clockwise as the image is displayed (y grows downward).
///
/// ```text
/// 3  2  1
/// 4  c  0
/// 5  6  7
/// ```
pub const LBP_NEIGHBORS: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Thresholding function: 1 for `x >= 0`, else 0.
#[inline]
pub fn lbp_threshold(x: f64) -> bool {
    x >= 0.0
}

/// 8-neighbour, radius-1 LBP over the interior of `img`.
///
/// The output is `(W-2) x (H-2)`; code at `(x, y)` belongs to source pixel
/// `(x+1, y+1)`.
pub fn lbp_code_image(img: &GrayImage) -> Result<CodeImage> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!("LBP needs at least 3x3 pixels, got {w}x{h}")));
    }
    let px = img.pixels();
    let offsets: Vec<isize> = LBP_NEIGHBORS
        .iter()
        .map(|&(dx, dy)| dy * w as isize + dx)
        .collect();
    let mut codes = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = y * w + x;
            let center = px[c];
            let mut code = 0u16;
            for (bit, &off) in offsets.iter().enumerate() {
                let g = px[(c as isize + off) as usize];
                code |= ((g >= center) as u16) << bit;
            }
            codes.push(code);
        }
    }
    Ok(CodeImage::new(w - 2, h - 2, 8, codes))
}
