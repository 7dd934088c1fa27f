//! Binary feature-matrix (`AGFV1`) and model (`AGMD1`) files, plus atomic writes.
//!
//! All integers are little-endian `u32`, reals little-endian IEEE-754 `f64`,
//! strings a `u32` byte length followed by UTF-8.
//!
//! `AGFV1`: magic, rows, dims, `rows·dims` reals, `rows` id strings, then the
//! feature layout string.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::regress::{Kernel, KrrModel, Model, SvrModel};

pub const FEATURES_MAGIC: &[u8; 5] = b"AGFV1";
pub const MODEL_MAGIC: &[u8; 5] = b"AGMD1";

/// Feature rows with their record ids and layout descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub matrix: Matrix,
    pub ids: Vec<String>,
    pub layout: String,
}

impl FeatureTable {
    pub fn new(matrix: Matrix, ids: Vec<String>, layout: impl Into<String>) -> Result<Self> {
        if ids.len() != matrix.rows() {
            return Err(Error::DimensionMismatch {
                expected: matrix.rows(),
                found: ids.len(),
            });
        }
        Ok(FeatureTable {
            matrix,
            ids,
            layout: layout.into(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(FEATURES_MAGIC);
        w.matrix(&self.matrix);
        for id in &self.ids {
            w.string(id);
        }
        w.string(&self.layout);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "feature matrix");
        r.magic(FEATURES_MAGIC)?;
        let matrix = r.matrix()?;
        let ids = (0..matrix.rows()).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let layout = r.string()?;
        r.finish()?;
        FeatureTable::new(matrix, ids, layout)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}

/// Trained model plus the context prediction needs to check compatibility.
///
/// `AGMD1`: magic, algorithm tag (`u8`: 1 = KRR, 2 = SVR), kernel tag
/// (`u8`: 1 = RBF) and gamma, then for KRR `lambda, y_mean` and for SVR
/// `C, epsilon, b`, the coefficient vector (`u32` length + reals), the stored
/// vectors as a rows/dims/reals block, the cross-validation MAE of the chosen
/// cell, and the feature layout string.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub layout: String,
    /// Mean validation MAE of the selected grid cell (NaN when not cross-validated).
    pub cv_mae: f64,
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MODEL_MAGIC);
        let kernel = |w: &mut Writer, k: &Kernel| match k {
            Kernel::Rbf { gamma } => {
                w.u8(1);
                w.f64(*gamma);
            }
        };
        match &self.model {
            Model::Krr(m) => {
                w.u8(1);
                kernel(&mut w, &m.kernel);
                w.f64(m.lambda);
                w.f64(m.y_mean);
                w.vector(&m.alpha);
                w.matrix(&m.train_x);
            }
            Model::Svr(m) => {
                w.u8(2);
                kernel(&mut w, &m.kernel);
                w.f64(m.c);
                w.f64(m.epsilon);
                w.f64(m.b);
                w.vector(&m.beta);
                w.matrix(&m.support_vectors);
            }
        }
        w.f64(self.cv_mae);
        w.string(&self.layout);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "model");
        r.magic(MODEL_MAGIC)?;
        let algo = r.u8()?;
        let kernel = match r.u8()? {
            1 => Kernel::rbf(r.f64()?)?,
            t => return Err(r.err(format!("unknown kernel tag {t}"))),
        };
        let model = match algo {
            1 => {
                let lambda = r.f64()?;
                let y_mean = r.f64()?;
                let alpha = r.vector()?;
                let train_x = r.matrix()?;
                Model::Krr(KrrModel::from_parts(kernel, lambda, train_x, alpha, y_mean)?)
            }
            2 => {
                let c = r.f64()?;
                let epsilon = r.f64()?;
                let b = r.f64()?;
                let beta = r.vector()?;
                let svs = r.matrix()?;
                Model::Svr(SvrModel::from_parts(kernel, c, epsilon, svs, beta, b)?)
            }
            t => return Err(r.err(format!("unknown algorithm tag {t}"))),
        };
        let cv_mae = r.f64()?;
        let layout = r.string()?;
        r.finish()?;
        Ok(ModelFile {
            model,
            layout,
            cv_mae,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    /// Refuse features assembled differently from the training features.
    pub fn check_layout(&self, layout: &str) -> Result<()> {
        if self.layout != layout {
            return Err(Error::LayoutMismatch {
                expected: self.layout.clone(),
                found: layout.to_string(),
            });
        }
        Ok(())
    }
}

/// Write `bytes` to a sibling temporary file, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("length exceeds u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn string(&mut self, s: &str) {
        self.u32(s.len());
        self.bytes(s.as_bytes());
    }

    fn vector(&mut self, v: &[f64]) {
        self.u32(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    fn matrix(&mut self, m: &Matrix) {
        self.u32(m.rows());
        self.u32(m.cols());
        m.data().iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8], what: &'static str) -> Self {
        Reader { data, pos: 0, what }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            what: self.what,
            msg: format!("{} (at byte {})", msg.into(), self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        match end {
            Some(end) => {
                let s = &self.data[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn magic(&mut self, magic: &[u8]) -> Result<()> {
        if self.take(magic.len())? != magic {
            return Err(self.err(format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.err("string is not UTF-8"))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let need = n.checked_mul(8).ok_or_else(|| self.err("size overflow"))?;
        let b = self.take(need)?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn vector(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()?;
        self.reals(n)
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let n = rows.checked_mul(cols).ok_or_else(|| self.err("size overflow"))?;
        let data = self.reals(n)?;
        Matrix::new(rows, cols, data)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(self.err("trailing bytes"));
        }
        Ok(())
    }
}
