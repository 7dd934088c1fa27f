//! Dataset manifests: CSV with header `image_path,landmarks_path,age,person_id`.
//! Paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    /// The `image_path` field as written; used as the record id.
    pub id: String,
    pub image_path: PathBuf,
    pub landmarks_path: PathBuf,
    pub age: f64,
    pub person_id: String,
}

#[derive(Deserialize)]
struct Row {
    image_path: String,
    landmarks_path: String,
    age: f64,
    person_id: String,
}

const HEADER: [&str; 4] = ["image_path", "landmarks_path", "age", "person_id"];

pub fn parse_manifest(text: &str, base: &Path) -> CliResult<Vec<ManifestRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::Data(format!("manifest: {e}")))?;
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(CliError::Data(format!(
            "manifest header must be `{}`, found `{}`",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (k, row) in reader.deserialize::<Row>().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| CliError::Data(format!("manifest line {line}: {e}")))?;
        if !(row.age.is_finite() && row.age >= 0.0) {
            return Err(CliError::Data(format!("manifest line {line}: invalid age {}", row.age)));
        }
        if !seen.insert(row.image_path.clone()) {
            return Err(CliError::Data(format!("manifest line {line}: duplicate image `{}`", row.image_path)));
        }
        out.push(ManifestRecord {
            image_path: base.join(&row.image_path),
            landmarks_path: base.join(&row.landmarks_path),
            id: row.image_path,
            age: row.age,
            person_id: row.person_id,
        });
    }
    if out.is_empty() {
        return Err(CliError::Data("manifest has no records".into()));
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> CliResult<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read manifest `{}`: {e}", path.display())))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_relative_to_base() {
        let text = "image_path,landmarks_path,age,person_id\na.pgm,a.pts,23.5,p1\nb.pgm, b.pts ,7,p2\n";
        let r = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].id, "a.pgm");
        assert_eq!(r[0].image_path, PathBuf::from("/data/a.pgm"));
        assert_eq!(r[1].landmarks_path, PathBuf::from("/data/b.pts"));
        assert_eq!(r[0].age, 23.5);
        assert_eq!(r[1].person_id, "p2");
    }

    #[test]
    fn rejects_bad_manifests() {
        let base = Path::new(".");
        for text in [
            "image,landmarks,age,person\na,b,1,p\n",
            "image_path,landmarks_path,age,person_id\n",
            "image_path,landmarks_path,age,person_id\na,b,x,p\n",
            "image_path,landmarks_path,age,person_id\na,b,-1,p\n",
            "image_path,landmarks_path,age,person_id\na,b,1,p\na,c,2,q\n",
            "image_path,landmarks_path,age,person_id\na,b,1\n",
        ] {
            assert!(matches!(parse_manifest(text, base), Err(CliError::Data(_))), "{text}");
        }
    }
}
