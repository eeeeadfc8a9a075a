use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MOS_RANGE: [f64; 2] = [1.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionKind {
    /// Distortions from the wild; no reference images.
    Authentic,
    /// Synthetic distortions of reference images; every record has a `ref_id`.
    Artificial,
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistortionKind::Authentic => "authentic",
            DistortionKind::Artificial => "artificial",
        })
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "authentic" => Ok(DistortionKind::Authentic),
            "artificial" => Ok(DistortionKind::Artificial),
            other => Err(Error::Config(format!(
                "unknown schema `{other}` (expected authentic or artificial)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    /// Resolved against the manifest's directory when relative.
    pub path: PathBuf,
    pub mos: f64,
    pub ref_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub kind: DistortionKind,
    pub records: Vec<ImageRecord>,
    /// Ids of records whose image file was not found at load time. They stay
    /// in `records`.
    pub missing: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct Row {
    image_id: String,
    path: String,
    mos: String,
    #[serde(default)]
    ref_id: Option<String>,
}

impl DatasetManifest {
    /// Builds and validates a manifest from in-memory records.
    pub fn new(name: impl Into<String>, kind: DistortionKind, records: Vec<ImageRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            // numbered as if written out as CSV with a header line
            validate_record(r, kind, i + 2)?;
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::DuplicateId(r.image_id.clone()));
            }
        }
        Ok(DatasetManifest {
            name: name.into(),
            kind,
            records,
            missing: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.image_id.as_str())
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    /// Distinct `ref_id`s in order of first appearance.
    pub fn ref_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter_map(|r| r.ref_id.as_deref())
            .filter(|id| seen.insert(*id))
            .collect()
    }
}

fn validate_record(r: &ImageRecord, kind: DistortionKind, line: usize) -> Result<()> {
    let err = |message: String| Error::Manifest { line, message };
    if r.image_id.is_empty() {
        return Err(err("empty image_id".into()));
    }
    if !(r.mos >= MOS_RANGE[0] && r.mos <= MOS_RANGE[1]) {
        return Err(err(format!(
            "mos {} of `{}` outside [{}, {}]",
            r.mos, r.image_id, MOS_RANGE[0], MOS_RANGE[1]
        )));
    }
    match (kind, &r.ref_id) {
        (DistortionKind::Artificial, None) => Err(err(format!(
            "`{}` has no ref_id, required for an artificial manifest",
            r.image_id
        ))),
        (DistortionKind::Authentic, Some(ref_id)) => Err(err(format!(
            "`{}` has ref_id `{ref_id}` but the manifest is authentic",
            r.image_id
        ))),
        _ => Ok(()),
    }
}

/// Reads a CSV with header `image_id,path,mos,ref_id` (`ref_id` may be empty
/// or the column absent for authentic data).
///
/// Records whose image file does not exist are listed in
/// [`DatasetManifest::missing`] and logged.
pub fn load_manifest(path: impl AsRef<Path>, kind: DistortionKind) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "manifest".into());
    let mut manifest = parse_manifest(&text, &name, kind, base)?;
    manifest.missing = manifest
        .records
        .iter()
        .filter(|r| !r.path.is_file())
        .map(|r| r.image_id.clone())
        .collect();
    if !manifest.missing.is_empty() {
        log::warn!(
            "{} of {} images listed in {} were not found (first: {})",
            manifest.missing.len(),
            manifest.len(),
            path.display(),
            manifest.missing[0]
        );
    }
    Ok(manifest)
}

/// Loads a manifest, choosing the schema from the `ref_id` column: artificial
/// when every row has one, authentic when none has.
pub fn load_manifest_detect(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_manifest(path, detect_kind(&text)?)
}

pub fn detect_kind(text: &str) -> Result<DistortionKind> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Manifest { line: 1, message: e.to_string() })?
        .clone();
    let Some(col) = headers.iter().position(|h| h == "ref_id") else {
        return Ok(DistortionKind::Authentic);
    };
    let (mut with, mut without) = (0usize, 0usize);
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Manifest { line: 0, message: e.to_string() })?;
        if rec.get(col).is_some_and(|v| !v.is_empty()) {
            with += 1;
        } else {
            without += 1;
        }
    }
    match (with, without) {
        (0, _) => Ok(DistortionKind::Authentic),
        (_, 0) => Ok(DistortionKind::Artificial),
        _ => Err(Error::Manifest {
            line: 0,
            message: format!("{with} rows have a ref_id and {without} do not; pass the schema explicitly"),
        }),
    }
}

/// Parses manifest CSV text; relative paths are joined onto `base`.
pub fn parse_manifest(text: &str, name: &str, kind: DistortionKind, base: &Path) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Manifest { line: 1, message: e.to_string() })?
        .clone();
    for required in ["image_id", "path", "mos"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Manifest {
                line: 1,
                message: format!("missing column `{required}`"),
            });
        }
    }
    // the reader's own line count skips blank lines; count from the byte offset
    let bytes = text.as_bytes();
    let line_at = |pos: Option<&csv::Position>| {
        pos.map(|p| {
            let mut at = p.byte() as usize;
            while at < bytes.len() && (bytes[at] == b'\n' || bytes[at] == b'\r') {
                at += 1;
            }
            bytes[..at].iter().filter(|&&b| b == b'\n').count() + 1
        })
        .unwrap_or(0)
    };
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Manifest {
            line: line_at(e.position()),
            message: e.to_string(),
        })?;
        let line = line_at(rec.position());
        let row: Row = rec.deserialize(Some(&headers)).map_err(|e| Error::Manifest {
            line,
            message: e.to_string(),
        })?;
        let mos: f64 = row.mos.parse().map_err(|_| Error::Manifest {
            line,
            message: format!("mos `{}` is not a number", row.mos),
        })?;
        let p = PathBuf::from(&row.path);
        let record = ImageRecord {
            image_id: row.image_id,
            path: if p.is_absolute() { p } else { base.join(p) },
            mos,
            ref_id: row.ref_id.filter(|s| !s.is_empty()),
        };
        validate_record(&record, kind, line)?;
        if !seen.insert(record.image_id.clone()) {
            return Err(Error::DuplicateId(record.image_id));
        }
        records.push(record);
    }
    Ok(DatasetManifest {
        name: name.to_string(),
        kind,
        records,
        missing: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_schemas() {
        let a = parse_manifest("image_id,path,mos,ref_id\na,a.png,3.5,\nb,/abs/b.png,1,\n", "k", DistortionKind::Authentic, Path::new("/data")).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.records[0].path, PathBuf::from("/data/a.png"));
        assert_eq!(a.records[1].path, PathBuf::from("/abs/b.png"));
        assert_eq!(a.records[0].ref_id, None);

        let no_ref_col = parse_manifest("image_id,path,mos\na,a.png,3.5\n", "k", DistortionKind::Authentic, Path::new("")).unwrap();
        assert_eq!(no_ref_col.len(), 1);

        let art = parse_manifest("image_id,path,mos,ref_id\nx1,x1.png,2,r1\nx2,x2.png,4,r1\ny1,y1.png,5,r2\n", "kd", DistortionKind::Artificial, Path::new("")).unwrap();
        assert_eq!(art.ref_ids(), vec!["r1", "r2"]);
    }

    #[test]
    fn validation_errors() {
        let bad_mos = parse_manifest("image_id,path,mos,ref_id\na,a.png,3,\n\nb,b.png,7.2,\n", "k", DistortionKind::Authentic, Path::new(""));
        assert!(matches!(bad_mos, Err(Error::Manifest { line: 4, .. })), "{bad_mos:?}");
        let dup = parse_manifest("image_id,path,mos,ref_id\na,a.png,3,\na,b.png,2,\n", "k", DistortionKind::Authentic, Path::new(""));
        assert!(matches!(dup, Err(Error::DuplicateId(_))));
        let no_ref = parse_manifest("image_id,path,mos,ref_id\na,a.png,3,\n", "k", DistortionKind::Artificial, Path::new(""));
        assert!(matches!(no_ref, Err(Error::Manifest { .. })));
        let stray_ref = parse_manifest("image_id,path,mos,ref_id\na,a.png,3,r\n", "k", DistortionKind::Authentic, Path::new(""));
        assert!(stray_ref.is_err());
        assert!(parse_manifest("image_id,mos\na,3\n", "k", DistortionKind::Authentic, Path::new("")).is_err());
        assert!(parse_manifest("image_id,path,mos\na,a.png,high\n", "k", DistortionKind::Authentic, Path::new("")).is_err());
    }

    #[test]
    fn schema_detection() {
        assert_eq!(detect_kind("image_id,path,mos\na,a,3\n").unwrap(), DistortionKind::Authentic);
        assert_eq!(detect_kind("image_id,path,mos,ref_id\na,a,3,\n").unwrap(), DistortionKind::Authentic);
        assert_eq!(detect_kind("image_id,path,mos,ref_id\na,a,3,r\n").unwrap(), DistortionKind::Artificial);
        assert!(detect_kind("image_id,path,mos,ref_id\na,a,3,r\nb,b,3,\n").is_err());
    }

    #[test]
    fn missing_files_reported_not_dropped() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.png"), b"x").unwrap();
        let csv = dir.path().join("set.csv");
        std::fs::write(&csv, "image_id,path,mos,ref_id\na,a.png,3,\nb,b.png,2,\n").unwrap();
        let m = load_manifest(&csv, DistortionKind::Authentic).unwrap();
        assert_eq!(m.name, "set");
        assert_eq!(m.len(), 2);
        assert_eq!(m.missing, vec!["b".to_string()]);
    }
}
