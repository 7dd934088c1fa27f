//! Whole-image plus block-grid histograms of LBP and BSIF codes.

use std::fmt;

use crate::descriptors::{bsif_code_image, lbp_code_image, CodeImage, FilterBank};
use crate::error::{Error, Result};
use crate::geometry::{AlignedFace, CanonicalSize};
use crate::image::GrayImage;

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }
}

/// Grid shape for block histograms. Defaults to 4 rows by 3 columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub rows: usize,
    pub cols: usize,
}

impl Default for BlockGrid {
    fn default() -> Self {
        BlockGrid { rows: 4, cols: 3 }
    }
}

impl BlockGrid {
    pub fn blocks(&self) -> usize {
        self.rows * self.cols
    }
}

/// Tile a `w x h` image with a `rows x cols` grid, row-major. Boundaries are
/// `floor(i·h/rows)` and `floor(j·w/cols)`.
pub fn block_partition(w: usize, h: usize, rows: usize, cols: usize) -> Result<Vec<Rect>> {
    if rows == 0 || cols == 0 || rows > h || cols > w {
        return Err(Error::invalid(format!(
            "{rows}x{cols} grid does not fit a {w}x{h} image"
        )));
    }
    let xb: Vec<usize> = (0..=cols).map(|j| j * w / cols).collect();
    let yb: Vec<usize> = (0..=rows).map(|i| i * h / rows).collect();
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(Rect {
                x0: xb[j],
                y0: yb[i],
                x1: xb[j + 1],
                y1: yb[i + 1],
            });
        }
    }
    Ok(out)
}

/// Code-value histogram with raw counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u64>,
}

impl Histogram {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        Histogram { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// L1-normalized bins; all zeros for an empty histogram.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        let t = total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

/// Count the codes inside `rect`.
pub fn region_histogram(codes: &CodeImage, rect: &Rect) -> Result<Histogram> {
    if rect.is_empty() {
        return Err(Error::invalid(format!("empty rectangle {rect:?}")));
    }
    if rect.x1 > codes.width() || rect.y1 > codes.height() {
        return Err(Error::invalid(format!(
            "rectangle {rect:?} exceeds {}x{} code image",
            codes.width(),
            codes.height()
        )));
    }
    let mut counts = vec![0u64; codes.n_codes()];
    let w = codes.width();
    for y in rect.y0..rect.y1 {
        for &c in &codes.codes()[y * w + rect.x0..y * w + rect.x1] {
            counts[c as usize] += 1;
        }
    }
    Ok(Histogram { counts })
}

/// Whole-image histogram followed by one per grid block (row-major).
pub fn block_histograms(codes: &CodeImage, grid: BlockGrid) -> Result<Vec<Histogram>> {
    let whole = Rect {
        x0: 0,
        y0: 0,
        x1: codes.width(),
        y1: codes.height(),
    };
    std::iter::once(whole)
        .chain(block_partition(codes.width(), codes.height(), grid.rows, grid.cols)?)
        .map(|r| region_histogram(codes, &r))
        .collect()
}

/// Which descriptors feed the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DescriptorSet {
    Lbp,
    Bsif,
    #[default]
    Both,
}

impl DescriptorSet {
    pub fn uses_lbp(self) -> bool {
        matches!(self, DescriptorSet::Lbp | DescriptorSet::Both)
    }

    pub fn uses_bsif(self) -> bool {
        matches!(self, DescriptorSet::Bsif | DescriptorSet::Both)
    }
}

impl std::str::FromStr for DescriptorSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lbp" => Ok(DescriptorSet::Lbp),
            "bsif" => Ok(DescriptorSet::Bsif),
            "both" => Ok(DescriptorSet::Both),
            other => Err(Error::invalid(format!("unknown descriptor set `{other}`"))),
        }
    }
}

impl fmt::Display for DescriptorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptorSet::Lbp => "lbp",
            DescriptorSet::Bsif => "bsif",
            DescriptorSet::Both => "both",
        })
    }
}

/// Describes how a feature vector was assembled.
///
/// Order is `[LBP whole, LBP blocks.., BSIF whole, BSIF blocks..]`, each slice
/// an L1-normalized histogram. Its `Display` form is stored in feature and
/// model files and compared verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    pub size: CanonicalSize,
    pub grid: BlockGrid,
    pub lbp: bool,
    /// `(n, l, bank hash)` when BSIF is enabled.
    pub bsif: Option<(usize, usize, String)>,
}

impl FeatureLayout {
    pub fn histograms_per_descriptor(&self) -> usize {
        1 + self.grid.blocks()
    }

    pub fn dims(&self) -> usize {
        let per = self.histograms_per_descriptor();
        let lbp = if self.lbp { per * 256 } else { 0 };
        let bsif = self.bsif.as_ref().map_or(0, |(n, _, _)| per << n);
        lbp + bsif
    }
}

impl fmt::Display for FeatureLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "size={};grid={}x{}", self.size, self.grid.rows, self.grid.cols)?;
        if self.lbp {
            write!(f, ";lbp=8")?;
        }
        if let Some((n, l, hash)) = &self.bsif {
            write!(f, ";bsif={n}x{l}x{l}@{hash}")?;
        }
        Ok(())
    }
}

/// A concatenation of normalized histograms with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

/// Turns aligned faces into feature vectors.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    size: CanonicalSize,
    grid: BlockGrid,
    lbp: bool,
    bank: Option<FilterBank>,
}

impl FeatureExtractor {
    pub fn new(size: CanonicalSize, grid: BlockGrid, descriptors: DescriptorSet, bank: Option<FilterBank>) -> Result<Self> {
        size.validate()?;
        if descriptors.uses_bsif() && bank.is_none() {
            return Err(Error::invalid("BSIF enabled but no filter bank given"));
        }
        let bank = if descriptors.uses_bsif() { bank } else { None };
        // LBP's code image is 2 px smaller, so check the grid against that.
        block_partition(size.width - 2, size.height - 2, grid.rows, grid.cols)?;
        Ok(FeatureExtractor {
            size,
            grid,
            lbp: descriptors.uses_lbp(),
            bank,
        })
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            size: self.size,
            grid: self.grid,
            lbp: self.lbp,
            bsif: self.bank.as_ref().map(|b| (b.n(), b.l(), b.content_hash())),
        }
    }

    /// Histograms of a canonical-size face image, in layout order.
    pub fn histograms(&self, image: &GrayImage) -> Result<Vec<Histogram>> {
        if image.width() != self.size.width || image.height() != self.size.height {
            return Err(Error::invalid(format!(
                "face is {}x{}, expected canonical {}",
                image.width(),
                image.height(),
                self.size
            )));
        }
        let mut out = Vec::with_capacity(2 * (1 + self.grid.blocks()));
        if self.lbp {
            out.extend(block_histograms(&lbp_code_image(image)?, self.grid)?);
        }
        if let Some(bank) = &self.bank {
            out.extend(block_histograms(&bsif_code_image(image, bank), self.grid)?);
        }
        Ok(out)
    }

    pub fn extract_image(&self, image: &GrayImage) -> Result<FeatureVector> {
        let values = self
            .histograms(image)?
            .iter()
            .flat_map(Histogram::normalized)
            .collect();
        Ok(FeatureVector {
            values,
            layout: self.layout(),
        })
    }

    pub fn extract(&self, face: &AlignedFace) -> Result<FeatureVector> {
        self.extract_image(&face.image)
    }
}

/// Features with the default canonical size and grid, using both descriptors.
pub fn extract_features(face: &AlignedFace, bank: &FilterBank) -> Result<FeatureVector> {
    FeatureExtractor::new(CanonicalSize::default(), BlockGrid::default(), DescriptorSet::Both, Some(bank.clone()))?
        .extract(face)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn canonical_partition_bounds() {
        let rects = block_partition(120, 126, 4, 3).unwrap();
        let xs: Vec<usize> = rects[..3].iter().map(|r| r.x0).chain([rects[2].x1]).collect();
        assert_eq!(xs, vec![0, 40, 80, 120]);
        let ys: Vec<usize> = rects.iter().step_by(3).map(|r| r.y0).chain([rects[11].y1]).collect();
        assert_eq!(ys, vec![0, 31, 63, 94, 126]);
    }

    #[test]
    fn single_block() {
        assert_eq!(
            block_partition(10, 10, 1, 1).unwrap(),
            vec![Rect { x0: 0, y0: 0, x1: 10, y1: 10 }]
        );
        assert!(block_partition(2, 10, 1, 3).is_err());
        assert!(block_partition(10, 10, 0, 1).is_err());
    }

    proptest! {
        #[test]
        fn partition_tiles_exactly(w in 1usize..200, h in 1usize..200, rows in 1usize..8, cols in 1usize..8) {
            prop_assume!(rows <= h && cols <= w);
            let rects = block_partition(w, h, rows, cols).unwrap();
            prop_assert_eq!(rects.iter().map(Rect::area).sum::<usize>(), w * h);
            let mut cover = vec![0u8; w * h];
            for r in &rects {
                for y in r.y0..r.y1 {
                    for x in r.x0..r.x1 {
                        cover[y * w + x] += 1;
                    }
                }
            }
            prop_assert!(cover.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn constant_region_is_one_hot() {
        let codes = CodeImage::from_codes(10, 5, 8, vec![42; 50]).unwrap();
        let rect = Rect { x0: 0, y0: 0, x1: 10, y1: 5 };
        let hist = region_histogram(&codes, &rect).unwrap();
        let bins = hist.normalized();
        assert_eq!(bins[42], 1.0);
        assert_eq!(bins.iter().sum::<f64>(), 1.0);
        assert!(region_histogram(&codes, &Rect { x0: 3, y0: 1, x1: 3, y1: 4 }).is_err());
        assert!(region_histogram(&codes, &Rect { x0: 0, y0: 0, x1: 11, y1: 4 }).is_err());
    }

    #[test]
    fn region_matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let codes: Vec<u16> = (0..30 * 20).map(|_| rng.random_range(0..16)).collect();
        let img = CodeImage::from_codes(30, 20, 4, codes.clone()).unwrap();
        let rect = Rect { x0: 3, y0: 5, x1: 21, y1: 17 };
        let hist = region_histogram(&img, &rect).unwrap();
        for bin in 0..16u16 {
            let mut want = 0;
            for y in 5..17 {
                for x in 3..21 {
                    if codes[y * 30 + x] == bin {
                        want += 1;
                    }
                }
            }
            assert_eq!(hist.counts()[bin as usize], want);
        }
        assert_eq!(hist.total(), rect.area() as u64);
    }

    #[test]
    fn empty_histogram_normalizes_to_zero() {
        assert_eq!(Histogram::from_counts(vec![0; 4]).normalized(), vec![0.0; 4]);
    }

    #[test]
    fn whole_counts_equal_block_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let codes: Vec<u16> = (0..120 * 126).map(|_| rng.random_range(0..256)).collect();
        let img = CodeImage::from_codes(120, 126, 8, codes).unwrap();
        let hists = block_histograms(&img, BlockGrid::default()).unwrap();
        assert_eq!(hists.len(), 13);
        for bin in 0..256 {
            let blocks: u64 = hists[1..].iter().map(|h| h.counts()[bin]).sum();
            assert_eq!(hists[0].counts()[bin], blocks);
        }
    }

    #[test]
    fn swapping_blocks_swaps_histograms() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (w, h) = (12, 8);
        let codes: Vec<u16> = (0..w * h).map(|_| rng.random_range(0..256)).collect();
        let grid = BlockGrid { rows: 2, cols: 3 };
        let rects = block_partition(w, h, 2, 3).unwrap();
        // Blocks 0 and 4 are both 4x4.
        let (a, b) = (rects[0], rects[4]);
        let mut swapped = codes.clone();
        for dy in 0..4 {
            for dx in 0..4 {
                swapped.swap((a.y0 + dy) * w + a.x0 + dx, (b.y0 + dy) * w + b.x0 + dx);
            }
        }
        let h1 = block_histograms(&CodeImage::from_codes(w, h, 8, codes).unwrap(), grid).unwrap();
        let h2 = block_histograms(&CodeImage::from_codes(w, h, 8, swapped).unwrap(), grid).unwrap();
        assert_eq!(h1[0], h2[0]);
        assert_eq!(h1[1], h2[5]);
        assert_eq!(h1[5], h2[1]);
        for k in [2, 3, 4, 6] {
            assert_eq!(h1[k], h2[k]);
        }
    }

    fn bank() -> FilterBank {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        FilterBank::new(7, (0..8).map(|_| (0..49).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(), "t").unwrap()
    }

    fn face(image: GrayImage) -> AlignedFace {
        AlignedFace {
            image,
            angle: 0.0,
            eye_distance: 40.0,
            source_id: "f".into(),
        }
    }

    #[test]
    fn default_layout_is_6656() {
        let img = GrayImage::from_fn(120, 126, |x, y| ((x * 7 + y * 13) % 256) as u8).unwrap();
        let fv = extract_features(&face(img), &bank()).unwrap();
        assert_eq!(fv.values.len(), 6656);
        assert_eq!(fv.layout.dims(), 6656);
        for slice in fv.values.chunks(256) {
            assert!((slice.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(slice.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn constant_face_slices_are_one_hot() {
        let fv = extract_features(&face(GrayImage::filled(120, 126, 100).unwrap()), &bank()).unwrap();
        for slice in fv.values.chunks(256) {
            assert_eq!(slice.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(slice.iter().filter(|&&v| v == 0.0).count(), 255);
        }
    }

    #[test]
    fn lbp_only_layout() {
        let ex = FeatureExtractor::new(CanonicalSize::default(), BlockGrid::default(), DescriptorSet::Lbp, None).unwrap();
        assert_eq!(ex.layout().dims(), 3328);
        assert_eq!(ex.layout().to_string(), "size=120x126;grid=4x3;lbp=8");
        assert!(FeatureExtractor::new(CanonicalSize::default(), BlockGrid::default(), DescriptorSet::Both, None).is_err());
    }

    #[test]
    fn wrong_face_size_rejected() {
        let ex = FeatureExtractor::new(CanonicalSize::default(), BlockGrid::default(), DescriptorSet::Lbp, None).unwrap();
        assert!(ex.extract_image(&GrayImage::filled(60, 60, 0).unwrap()).is_err());
    }
}
