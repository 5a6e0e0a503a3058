//! Versioned JSON dataset manifest. Paths are relative to the directory that
//! holds the manifest file. The format is described in `docs/manifest.md`.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::InputSize;

use super::codes::DefectCode;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub path: PathBuf,
    /// Anomaly types present; empty for a normal image.
    #[serde(default)]
    pub labels: Vec<DefectCode>,
    /// Ground-truth mask per labelled type.
    #[serde(default)]
    pub masks: BTreeMap<DefectCode, PathBuf>,
    pub split: Split,
    #[serde(default)]
    pub category: String,
}

impl SampleRecord {
    pub fn is_normal(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    /// Anomaly types in channel order.
    pub classes: Vec<DefectCode>,
    pub image_size: InputSize,
    /// Fraction of anomalous images in the training split.
    pub alpha: f64,
    pub records: Vec<SampleRecord>,
    /// Directory the relative paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    pub fn num_types(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.code().to_string()).collect()
    }

    pub fn class_index(&self, code: DefectCode) -> Option<usize> {
        self.classes.iter().position(|&c| c == code)
    }

    /// Multi-hot label row over `classes`.
    pub fn label_row(&self, record: &SampleRecord) -> Vec<u8> {
        let mut row = vec![0u8; self.classes.len()];
        for &l in &record.labels {
            if let Some(k) = self.class_index(l) {
                row[k] = 1;
            }
        }
        row
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].split == split)
            .collect()
    }

    /// Training indices grouped as `[normal, type 0, type 1, ...]`.
    pub fn train_partition(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.classes.len() + 1];
        for i in self.indices(Split::Train) {
            let r = &self.records[i];
            match r.labels.first() {
                None => groups[0].push(i),
                Some(&c) => groups[1 + self.class_index(c).expect("validated label")].push(i),
            }
        }
        groups
    }

    /// Achieved fraction of anomalous images among training records.
    pub fn train_alpha(&self) -> f64 {
        let train = self.indices(Split::Train);
        if train.is_empty() {
            return 0.0;
        }
        let anomalous = train.iter().filter(|&&i| !self.records[i].is_normal()).count();
        anomalous as f64 / train.len() as f64
    }

    /// Checks the structural invariants. With `check_files`, every referenced
    /// file must also exist.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "unsupported manifest schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.records.is_empty() {
            return Err(Error::Data("manifest has no records".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Data("manifest lists no anomaly types".into()));
        }
        let mut seen = HashSet::new();
        for &c in &self.classes {
            if c == DefectCode::Normal {
                return Err(Error::Data("NORMAL cannot be an anomaly type".into()));
            }
            if !seen.insert(c) {
                return Err(Error::Data(format!("anomaly type {c} listed twice")));
            }
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Data(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        for (i, r) in self.records.iter().enumerate() {
            let at = || format!("record {i} ({})", r.path.display());
            let mut labels = HashSet::new();
            for &l in &r.labels {
                if l == DefectCode::Normal || self.class_index(l).is_none() {
                    return Err(Error::Data(format!("{}: label {l} is not a listed anomaly type", at())));
                }
                if !labels.insert(l) {
                    return Err(Error::Data(format!("{}: label {l} repeated", at())));
                }
            }
            if r.split == Split::Train && r.labels.len() > 1 {
                return Err(Error::Data(format!(
                    "{}: training images must carry at most one anomaly type, found {}",
                    at(),
                    r.labels.len()
                )));
            }
            for code in r.masks.keys() {
                if !labels.contains(code) {
                    return Err(Error::Data(format!(
                        "{}: mask given for {code} but the image is not labelled {code}",
                        at()
                    )));
                }
            }
            if check_files {
                let files = std::iter::once(&r.path).chain(r.masks.values());
                for f in files {
                    let full = self.resolve(f);
                    if !full.is_file() {
                        return Err(Error::Data(format!("{}: missing file {}", at(), full.display())));
                    }
                }
            }
        }
        for &c in &self.classes {
            let present = self
                .records
                .iter()
                .any(|r| r.split == Split::Test && r.labels.contains(&c));
            if !present {
                return Err(Error::Data(format!("anomaly type {c} has no test record")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a manifest, including the existence of every file it
/// references.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    m.validate(true)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(labels: &[DefectCode], split: Split) -> SampleRecord {
        SampleRecord {
            path: "img.png".into(),
            labels: labels.to_vec(),
            masks: BTreeMap::new(),
            split,
            category: String::new(),
        }
    }

    fn manifest(records: Vec<SampleRecord>) -> DatasetManifest {
        DatasetManifest {
            schema_version: SCHEMA_VERSION,
            classes: vec![DefectCode::Pit, DefectCode::Scratch],
            image_size: InputSize { height: 8, width: 8, channels: 1 },
            alpha: 0.1,
            records,
            root: PathBuf::new(),
        }
    }

    #[test]
    fn multi_label_train_record_rejected() {
        let m = manifest(vec![
            record(&[DefectCode::Pit, DefectCode::Scratch], Split::Train),
            record(&[DefectCode::Pit], Split::Test),
            record(&[DefectCode::Scratch], Split::Test),
        ]);
        let err = m.validate(false).unwrap_err().to_string();
        assert!(err.contains("at most one"), "{err}");
    }

    #[test]
    fn multi_label_test_record_allowed() {
        let m = manifest(vec![record(&[DefectCode::Pit, DefectCode::Scratch], Split::Test)]);
        m.validate(false).unwrap();
    }

    #[test]
    fn class_without_test_record_rejected() {
        let m = manifest(vec![record(&[DefectCode::Pit], Split::Test)]);
        assert!(m.validate(false).is_err());
    }

    #[test]
    fn unknown_code_fails_to_parse() {
        let json = r#"{"schema_version":1,"classes":["AK","XX"],"image_size":{"height":8,"width":8,"channels":1},"alpha":0,"records":[]}"#;
        assert!(serde_json::from_str::<DatasetManifest>(json).is_err());
    }

    #[test]
    fn partition_and_label_rows() {
        let m = manifest(vec![
            record(&[], Split::Train),
            record(&[DefectCode::Scratch], Split::Train),
            record(&[DefectCode::Pit, DefectCode::Scratch], Split::Test),
        ]);
        assert_eq!(m.train_partition(), vec![vec![0], vec![], vec![1]]);
        assert_eq!(m.label_row(&m.records[2]), vec![1, 1]);
        assert_eq!(m.train_alpha(), 0.5);
    }
}
