use sha2::{Digest, Sha256};

use super::CodeImage;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// `n` linear filters of size `l x l`, stored row-major, one bit each.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    l: usize,
    filters: Vec<Vec<f64>>,
    provenance: String,
}

impl FilterBank {
    pub fn new(l: usize, filters: Vec<Vec<f64>>, provenance: impl Into<String>) -> Result<Self> {
        if l == 0 || l % 2 == 0 {
            return Err(Error::invalid(format!("filter side {l} must be odd")));
        }
        if filters.is_empty() || filters.len() > 16 {
            return Err(Error::invalid(format!(
                "filter count {} not in 1..=16",
                filters.len()
            )));
        }
        for (i, f) in filters.iter().enumerate() {
            if f.len() != l * l {
                return Err(Error::DimensionMismatch {
                    expected: l * l,
                    found: f.len(),
                });
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("filter {i} has non-finite coefficients")));
            }
        }
        if !linearly_independent(&filters) {
            return Err(Error::invalid("filters are linearly dependent"));
        }
        let provenance = provenance.into().replace(['\n', '\r'], " ");
        Ok(FilterBank {
            l,
            filters,
            provenance,
        })
    }

    /// Number of filters, which is also the code width in bits.
    pub fn n(&self) -> usize {
        self.filters.len()
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Text serialization: a `bsif-bank v1` header followed by `n` blocks of
    /// `l` rows, coefficients at 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "bsif-bank v1\nn: {}\nl: {}\nprovenance: {}\n",
            self.n(),
            self.l,
            self.provenance
        );
        for f in &self.filters {
            for row in f.chunks(self.l) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            what: "filter bank",
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().map(|(i, s)| (i + 1, s.trim()));
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (no, line) = lines
                .by_ref()
                .find(|(_, s)| !s.is_empty())
                .ok_or_else(|| err(0, format!("missing `{key}` header")))?;
            if key == "bsif-bank" {
                return if line == "bsif-bank v1" {
                    Ok((no, String::new()))
                } else {
                    Err(err(no, format!("expected `bsif-bank v1`, got `{line}`")))
                };
            }
            let value = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(':'))
                .ok_or_else(|| err(no, format!("expected `{key}:` header")))?;
            Ok((no, value.trim().to_string()))
        };
        header("bsif-bank")?;
        let (no, n) = header("n")?;
        let n: usize = n.parse().map_err(|_| err(no, format!("bad filter count `{n}`")))?;
        let (no, l) = header("l")?;
        let l: usize = l.parse().map_err(|_| err(no, format!("bad filter side `{l}`")))?;
        let (_, provenance) = header("provenance")?;
        if n == 0 || n > 16 || l == 0 {
            return Err(Error::invalid(format!("bad bank shape n={n}, l={l}")));
        }

        let mut values = Vec::with_capacity(n * l * l);
        for (no, line) in lines {
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| err(no, format!("bad coefficient `{tok}`")))?;
                values.push(v);
            }
        }
        if values.len() != n * l * l {
            return Err(Error::invalid(format!(
                "expected {} coefficients, found {}",
                n * l * l,
                values.len()
            )));
        }
        let filters = values.chunks(l * l).map(<[f64]>::to_vec).collect();
        FilterBank::new(l, filters, provenance)
    }

    /// Hex prefix of the SHA-256 of [`FilterBank::to_text`]; identifies the bank
    /// in feature layouts and reports.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn linearly_independent(filters: &[Vec<f64>]) -> bool {
    // Modified Gram-Schmidt; a residual below 1e-10 of the original norm means dependence.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(filters.len());
    for f in filters {
        let norm0 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            return false;
        }
        let mut r = f.clone();
        for b in &basis {
            let dot: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * norm0 {
            return false;
        }
        r.iter_mut().for_each(|v| *v /= norm);
        basis.push(r);
    }
    true
}

/// Filter response: sum of elementwise products of patch and filter.
pub fn bsif_response(patch: &[f64], filter: &[f64]) -> Result<f64> {
    if patch.len() != filter.len() {
        return Err(Error::DimensionMismatch {
            expected: filter.len(),
            found: patch.len(),
        });
    }
    Ok(dot(patch, filter))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BSIF codes for every pixel. The `l x l` window centred on each pixel wraps
/// around the image borders; bit `i` is set when filter `i` responds strictly
/// positively. Output has the input's dimensions.
pub fn bsif_code_image(img: &GrayImage, bank: &FilterBank) -> CodeImage {
    let (w, h) = (img.width(), img.height());
    let l = bank.l();
    let r = l / 2;
    let px = img.pixels();
    // Wrapped column/row indices for each window offset, per pixel coordinate.
    let col = |x: usize, u: usize| (x + w * (r / w + 1) + u - r) % w;
    let row = |y: usize, v: usize| (y + h * (r / h + 1) + v - r) % h;
    let mut patch = vec![0.0; l * l];
    let mut codes = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            for v in 0..l {
                let base = row(y, v) * w;
                for u in 0..l {
                    patch[v * l + u] = px[base + col(x, u)] as f64;
                }
            }
            let mut code = 0u16;
            for (i, f) in bank.filters().iter().enumerate() {
                code |= ((dot(&patch, f) > 0.0) as u16) << i;
            }
            codes.push(code);
        }
    }
    CodeImage::new(w, h, bank.n() as u32, codes)
}
