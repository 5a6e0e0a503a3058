//! Binary checkpoint files; the layout is described in `docs/checkpoint.md`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::train::{EpochRecord, Trainer};

pub const MAGIC: &[u8; 8] = b"MTFCDDCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: RunConfig,
    epochs_done: u32,
    history: Vec<EpochRecord>,
    /// Adam step counter per parameter, in model order.
    adam_steps: Vec<u64>,
    entries: Vec<Entry>,
}

/// Named f32 arrays of the model in a fixed order: for each parameter its
/// value and Adam moments, then each block's running mean and variance.
fn arrays(model: &Model<f32>) -> Vec<(String, Vec<f32>)> {
    let mut out = Vec::new();
    for p in model.params() {
        out.push((p.name.clone(), p.value.data().to_vec()));
        out.push((format!("{}.adam_m", p.name), p.adam.m.clone()));
        out.push((format!("{}.adam_v", p.name), p.adam.v.clone()));
    }
    for (name, s) in model.norm_stats() {
        out.push((format!("{name}.bn.running_mean"), s.mean.clone()));
        out.push((format!("{name}.bn.running_var"), s.var.clone()));
    }
    out
}

pub fn save(trainer: &Trainer, path: &Path) -> Result<()> {
    let arrays = arrays(&trainer.model);
    let header = Header {
        config: trainer.config.clone(),
        epochs_done: trainer.epochs_done,
        history: trainer.history.clone(),
        adam_steps: trainer.model.params().iter().map(|p| p.adam.step).collect(),
        entries: arrays
            .iter()
            .map(|(name, v)| Entry {
                name: name.clone(),
                len: v.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, v) in &arrays {
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Write to a sibling file first so an interrupted save keeps the old one.
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, path: &Path) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Data(format!("{}: checkpoint is truncated", path.display())));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn load(path: &Path) -> Result<Trainer> {
    let mut raw = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Data(format!("{}: {msg}", path.display()));
    let mut bytes = raw.as_slice();
    if take(&mut bytes, 8, path)? != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, path)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8, path)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(take(&mut bytes, len, path)?)
        .map_err(|e| bad(format!("corrupt header: {e}")))?;

    let mut trainer = Trainer::new(header.config)?;
    let mut values = std::collections::HashMap::new();
    for e in &header.entries {
        let data: Vec<f32> = take(&mut bytes, e.len * 4, path)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        values.insert(e.name.clone(), data);
    }
    if !bytes.is_empty() {
        return Err(bad("trailing bytes after tensor data".into()));
    }
    let mut get = |name: String, len: usize| -> Result<Vec<f32>> {
        let v = values
            .remove(&name)
            .ok_or_else(|| bad(format!("missing array {name}")))?;
        if v.len() != len {
            return Err(bad(format!("array {name} has {} values, expected {len}", v.len())));
        }
        Ok(v)
    };
    let model = &mut trainer.model;
    if header.adam_steps.len() != model.params().len() {
        return Err(bad("parameter count does not match the configuration".into()));
    }
    for (p, &step) in model.params_mut().into_iter().zip(&header.adam_steps) {
        let n = p.numel();
        p.value.data_mut().copy_from_slice(&get(p.name.clone(), n)?);
        p.adam.m = get(format!("{}.adam_m", p.name), n)?;
        p.adam.v = get(format!("{}.adam_v", p.name), n)?;
        p.adam.step = step;
    }
    for (name, s) in model.norm_stats_mut() {
        let c = s.mean.len();
        s.mean = get(format!("{name}.bn.running_mean"), c)?;
        s.var = get(format!("{name}.bn.running_var"), c)?;
    }
    trainer.epochs_done = header.epochs_done;
    trainer.history = header.history;
    Ok(trainer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InputSize, ModelConfig};
    use fcdd_autodiff::Tensor;

    fn small_config() -> RunConfig {
        RunConfig {
            model: ModelConfig {
                num_types: 2,
                input_size: InputSize {
                    height: 8,
                    width: 8,
                    channels: 1,
                },
                backbone_stages: 2,
                backbone_width: 4,
                head_blocks: 1,
                head_filters: 8,
                seed: 5,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_reproduces_forward_bit_for_bit() {
        let mut trainer = Trainer::new(small_config()).unwrap();
        for (name, s) in trainer.model.norm_stats_mut() {
            s.mean.iter_mut().enumerate().for_each(|(i, m)| *m = 0.01 * i as f32 + name.len() as f32 * 1e-3);
        }
        trainer.model.params_mut()[0].adam.step = 7;
        trainer.epochs_done = 3;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        save(&trainer, &path).unwrap();
        let back = load(&path).unwrap();
        let x = Tensor::from_fn(vec![2, 1, 8, 8], |i| (i as f32 * 0.37).sin());
        let a = trainer.model.infer(&x).unwrap();
        let b = back.model.infer(&x).unwrap();
        assert_eq!(a.phi.data(), b.phi.data());
        assert_eq!(back.epochs_done, 3);
        assert_eq!(back.model.params()[0].adam.step, 7);
        assert_eq!(back.config, trainer.config);
    }

    #[test]
    fn garbage_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        std::fs::write(&path, b"hello").unwrap();
        assert!(matches!(load(&path), Err(Error::Data(_))));
        std::fs::write(&path, b"MTFCDDCK\x09\0\0\0").unwrap();
        assert!(load(&path).unwrap_err().to_string().contains("version"));
    }
}
