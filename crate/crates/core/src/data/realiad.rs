//! Converter from a Real-IAD style directory tree to a manifest.
//!
//! Expected layout, per object category:
//!
//! ```text
//! <root>/<category>/OK/<sample>/<view>.jpg|png
//! <root>/<category>/NG/<CODE>/<sample>/<view>.png      image
//! <root>/<category>/NG/<CODE>/<sample>/<view>_mask.png ground truth
//! ```
//!
//! Each view becomes an independent record. Splitting follows a simple
//! deterministic rule (every `test_every`-th sample per class goes to test);
//! reproducing the benchmark's official split files is not attempted.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::InputSize;

use super::codes::DefectCode;
use super::manifest::{DatasetManifest, SampleRecord, Split, SCHEMA_VERSION};

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

fn is_image(p: &Path) -> bool {
    let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    (ext == "png" || ext == "jpg") && !p.to_string_lossy().ends_with("_mask.png")
}

fn relative(p: &Path, root: &Path) -> PathBuf {
    p.strip_prefix(root).unwrap_or(p).to_path_buf()
}

/// Builds (but does not validate file formats of) a manifest for the tree
/// under `root`. Test-split anomalous records get masks where present.
pub fn convert_realiad(root: &Path, image_size: InputSize, test_every: usize) -> Result<DatasetManifest> {
    if test_every < 2 {
        return Err(Error::Config("test_every must be at least 2".into()));
    }
    let mut records = Vec::new();
    let mut classes = Vec::new();
    for cat_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let category = cat_dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let mut groups: BTreeMap<Option<DefectCode>, Vec<PathBuf>> = BTreeMap::new();
        let ok = cat_dir.join("OK");
        if ok.is_dir() {
            groups.insert(None, sorted_entries(&ok)?);
        }
        let ng = cat_dir.join("NG");
        if ng.is_dir() {
            for code_dir in sorted_entries(&ng)?.into_iter().filter(|p| p.is_dir()) {
                let name = code_dir.file_name().unwrap_or_default().to_string_lossy().to_string();
                let code: DefectCode = name.parse()?;
                if !classes.contains(&code) {
                    classes.push(code);
                }
                groups.insert(Some(code), sorted_entries(&code_dir)?);
            }
        }
        for (code, samples) in groups {
            for (n, sample) in samples.into_iter().filter(|p| p.is_dir()).enumerate() {
                let split = if n % test_every == test_every - 1 { Split::Test } else { Split::Train };
                for view in sorted_entries(&sample)?.into_iter().filter(|p| is_image(p)) {
                    let mut masks = BTreeMap::new();
                    if let (Some(c), Split::Test) = (code, split) {
                        let mask = view.with_file_name(format!(
                            "{}_mask.png",
                            view.file_stem().unwrap_or_default().to_string_lossy()
                        ));
                        if mask.is_file() {
                            masks.insert(c, relative(&mask, root));
                        }
                    }
                    records.push(SampleRecord {
                        path: relative(&view, root),
                        labels: code.into_iter().collect(),
                        masks,
                        split,
                        category: category.clone(),
                    });
                }
            }
        }
    }
    classes.sort();
    let mut m = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        classes,
        image_size,
        alpha: 0.0,
        records,
        root: root.to_path_buf(),
    };
    m.alpha = m.train_alpha();
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_small_tree() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let touch = |p: &str| {
            let f = root.join(p);
            std::fs::create_dir_all(f.parent().unwrap()).unwrap();
            std::fs::write(f, b"").unwrap();
        };
        touch("bottle/OK/s0/C1.png");
        touch("bottle/OK/s1/C1.png");
        touch("bottle/NG/HS/s0/C1.png");
        touch("bottle/NG/HS/s1/C1.png");
        touch("bottle/NG/HS/s1/C1_mask.png");
        let size = InputSize { height: 8, width: 8, channels: 1 };
        let m = convert_realiad(root, size, 2).unwrap();
        assert_eq!(m.classes, vec![DefectCode::Scratch]);
        assert_eq!(m.records.len(), 4);
        let test_ng: Vec<_> = m.records.iter().filter(|r| r.split == Split::Test && !r.is_normal()).collect();
        assert_eq!(test_ng.len(), 1);
        assert_eq!(test_ng[0].masks.len(), 1);
        m.validate(true).unwrap();
    }
}
