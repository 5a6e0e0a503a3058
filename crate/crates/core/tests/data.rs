use std::path::Path;

use multitype_fcdd::data::{
    generate_synthetic, load_manifest, load_mask, load_split, DefectCode, Split, SyntheticConfig,
};
use multitype_fcdd::metrics::{connected_components, BinaryMask};

fn small_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        image_size: 32,
        num_types: 3,
        normal_count: 24,
        per_type_count: 6,
        test_normal: 8,
        alpha: 0.2,
        composites: 3,
        seed,
    }
}

#[test]
fn generated_dataset_round_trips_and_masks_are_single_regions() {
    let dir = tempfile::tempdir().unwrap();
    let summary = generate_synthetic(&small_config(1), dir.path()).unwrap();
    assert_eq!(summary.total_images(), 24 + 3 * 6);
    let m = load_manifest(&summary.manifest_path).unwrap();
    assert_eq!(m.records.len(), summary.total_images());
    assert_eq!(m.classes, vec![DefectCode::Pit, DefectCode::Scratch, DefectCode::MissingParts]);
    // round(0.2 / 0.8 * 16) = 4 anomalous training images.
    assert_eq!(summary.plan.train_anomalous(), 4);
    let achieved = m.train_alpha();
    assert!((achieved - 0.2).abs() * 20.0 <= 1.0, "alpha {achieved}");

    for r in &m.records {
        if r.is_normal() {
            assert!(r.masks.is_empty());
            continue;
        }
        assert_eq!(r.masks.len(), r.labels.len());
        for p in r.masks.values() {
            let (h, w, data) = load_mask(&m.resolve(p)).unwrap();
            let mask = BinaryMask::new(h, w, data).unwrap();
            assert!(mask.count() > 0);
            assert_eq!(connected_components(&mask, 0, 0).len(), 1);
        }
    }
    let comp = load_manifest(&summary.composites_path.unwrap());
    let comp = comp.unwrap();
    assert!(comp.records.iter().all(|r| r.labels.len() == 2 && r.masks.len() == 2));
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["images", "masks"] {
        let mut entries: Vec<_> = std::fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            out.push((p.file_name().unwrap().to_string_lossy().to_string(), std::fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn same_seed_gives_byte_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_synthetic(&small_config(9), a.path()).unwrap();
    generate_synthetic(&small_config(9), b.path()).unwrap();
    assert_eq!(read_all(a.path()), read_all(b.path()));
    let c = tempfile::tempdir().unwrap();
    generate_synthetic(&small_config(10), c.path()).unwrap();
    assert_ne!(read_all(a.path()), read_all(c.path()));
}

fn write_png(path: &Path) {
    multitype_fcdd::data::save_gray(path, 4, 4, &[0.5; 16]).unwrap();
}

fn minimal_manifest(dir: &Path, mask: &str, train_labels: &str) -> std::path::PathBuf {
    write_png(&dir.join("n.png"));
    write_png(&dir.join("d.png"));
    write_png(&dir.join("t.png"));
    multitype_fcdd::data::save_mask(&dir.join("m.png"), 4, 4, &[true; 16]).unwrap();
    let json = format!(
        r#"{{"schema_version":1,"classes":["AK","HS"],"image_size":{{"height":4,"width":4,"channels":1}},"alpha":0.5,
        "records":[
          {{"path":"n.png","split":"train"}},
          {{"path":"d.png","labels":{train_labels},"split":"train"}},
          {{"path":"t.png","labels":["AK","HS"],"masks":{{"AK":"{mask}"}},"split":"test"}}
        ]}}"#
    );
    let p = dir.join("manifest.json");
    std::fs::write(&p, json).unwrap();
    p
}

#[test]
fn minimal_manifest_loads() {
    let dir = tempfile::tempdir().unwrap();
    let p = minimal_manifest(dir.path(), "m.png", r#"["AK"]"#);
    let m = load_manifest(&p).unwrap();
    assert_eq!(m.records.len(), 3);
    let train = load_split(&m, Split::Train, m.image_size).unwrap();
    assert_eq!(train.labels, vec![vec![0, 0], vec![1, 0]]);
}

#[test]
fn absent_mask_is_rejected_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = minimal_manifest(dir.path(), "nope.png", r#"["AK"]"#);
    let err = load_manifest(&p).unwrap_err();
    assert!(err.to_string().contains("nope.png"), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn two_label_training_record_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = minimal_manifest(dir.path(), "m.png", r#"["AK","HS"]"#);
    assert!(load_manifest(&p).is_err());
}

#[test]
fn unknown_code_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = minimal_manifest(dir.path(), "m.png", r#"["QQ"]"#);
    let err = load_manifest(&p).unwrap_err();
    assert!(err.to_string().contains("QQ"), "{err}");
}

#[test]
fn size_mismatch_names_the_image() {
    let dir = tempfile::tempdir().unwrap();
    let p = minimal_manifest(dir.path(), "m.png", r#"["AK"]"#);
    let m = load_manifest(&p).unwrap();
    let wrong = multitype_fcdd::model::InputSize {
        height: 8,
        width: 8,
        channels: 1,
    };
    let err = load_split(&m, Split::Train, wrong).unwrap_err();
    assert!(err.to_string().contains(".png"), "{err}");
}
