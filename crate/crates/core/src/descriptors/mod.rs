//! Per-pixel binary texture codes: LBP, BSIF, and ICA-learned BSIF filter banks.

mod bsif;
mod ica;
mod lbp;

pub use bsif::{bsif_code_image, bsif_response, FilterBank};
pub use ica::{learn_filterbank, learn_filterbank_with, max_offdiag_correlation, sample_patches, IcaOptions, PatchSet};
pub use lbp::{lbp_code_image, lbp_threshold, LBP_NEIGHBORS};

/// Row-major image of integer codes, each below `2^n_bits`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeImage {
    width: usize,
    height: usize,
    n_bits: u32,
    codes: Vec<u16>,
}

impl CodeImage {
    pub(crate) fn new(width: usize, height: usize, n_bits: u32, codes: Vec<u16>) -> Self {
        debug_assert_eq!(codes.len(), width * height);
        debug_assert!(n_bits <= 16);
        CodeImage {
            width,
            height,
            n_bits,
            codes,
        }
    }

    /// Build from raw codes, validating dimensions and code range.
    pub fn from_codes(width: usize, height: usize, n_bits: u32, codes: Vec<u16>) -> crate::Result<Self> {
        if n_bits == 0 || n_bits > 16 {
            return Err(crate::Error::invalid(format!("n_bits {n_bits} not in 1..=16")));
        }
        if codes.len() != width * height {
            return Err(crate::Error::DimensionMismatch {
                expected: width * height,
                found: codes.len(),
            });
        }
        if let Some(c) = codes.iter().find(|&&c| (c as u32) >> n_bits != 0) {
            return Err(crate::Error::invalid(format!("code {c} needs more than {n_bits} bits")));
        }
        Ok(Self::new(width, height, n_bits, codes))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    /// Number of distinct code values, `2^n_bits`.
    pub fn n_codes(&self) -> usize {
        1 << self.n_bits
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.codes[y * self.width + x]
    }
}
