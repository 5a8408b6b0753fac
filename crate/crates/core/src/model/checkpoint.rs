//! Checkpoints: a TOML manifest (config and parameter registry) next to a
//! flat little-endian f32 payload in registry order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const FORMAT: &str = "sctnet-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// Payload file name, relative to the manifest.
    pub payload: String,
    pub config: ModelConfig,
    pub params: Vec<ParamRecord>,
}

/// Payload path belonging to a manifest path.
pub fn payload_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn manifest_of<T: Scalar>(model: &Model<T>, payload: &str) -> Manifest {
    Manifest {
        format: FORMAT.into(),
        version: VERSION,
        payload: payload.into(),
        config: model.config().clone(),
        params: model
            .store()
            .entries()
            .iter()
            .map(|e| ParamRecord { name: e.name.clone(), shape: e.tensor.shape().to_vec(), trainable: e.trainable })
            .collect(),
    }
}

pub fn encode_payload<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut bytes = Vec::new();
    for e in model.store().entries() {
        for &v in e.tensor.data() {
            bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    bytes
}

/// Writes the manifest to `path` and the payload beside it.
pub fn save<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let payload = payload_path(path);
    let name = payload
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Format(format!("bad checkpoint path {}", path.display())))?;
    let manifest = manifest_of(model, name);
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text)?;
    fs::write(&payload, encode_payload(model))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    let m: Manifest = toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::Format(format!("{}: unsupported checkpoint {} v{}", path.display(), m.format, m.version)));
    }
    Ok(m)
}

/// Lists every registry difference between a checkpoint and a model.
pub fn registry_diff<T: Scalar>(model: &Model<T>, records: &[ParamRecord]) -> Vec<String> {
    let mut diffs = Vec::new();
    let entries = model.store().entries();
    for r in records {
        match model.store().id(&r.name) {
            None => diffs.push(format!("{}: in checkpoint {:?}, absent from model", r.name, r.shape)),
            Some(id) => {
                let have = entries[id.index()].tensor.shape();
                if have != r.shape.as_slice() {
                    diffs.push(format!("{}: checkpoint {:?} vs model {:?}", r.name, r.shape, have));
                }
            }
        }
    }
    for e in entries {
        if !records.iter().any(|r| r.name == e.name) {
            diffs.push(format!("{}: in model {:?}, absent from checkpoint", e.name, e.tensor.shape()));
        }
    }
    diffs
}

fn fill<T: Scalar>(model: &mut Model<T>, records: &[ParamRecord], bytes: &[u8]) -> Result<()> {
    let diffs = registry_diff(model, records);
    if !diffs.is_empty() {
        return Err(Error::Dimension(format!("checkpoint does not match the architecture:\n  {}", diffs.join("\n  "))));
    }
    let expected: usize = records.iter().map(|r| r.shape.iter().product::<usize>() * 4).sum();
    if bytes.len() != expected {
        return Err(Error::Load {
            offset: bytes.len().min(expected) as u64,
            msg: format!("payload should be {expected} bytes, found {}", bytes.len()),
        });
    }
    let mut offset = 0;
    for r in records {
        let n: usize = r.shape.iter().product();
        let data: Vec<T> = bytes[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Load {
                offset: (offset + 4 * bad) as u64,
                msg: format!("non-finite value in {}", r.name),
            });
        }
        offset += 4 * n;
        let id = model.store().id(&r.name).expect("checked by registry_diff");
        model.store_mut().set(id, Tensor::new(r.shape.clone(), data)?)?;
    }
    Ok(())
}

/// Loads a checkpoint with the architecture recorded in its manifest.
pub fn load<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let m = read_manifest(path)?;
    let mut model = Model::new(m.config.clone(), 0)?;
    let bytes = fs::read(path.with_file_name(&m.payload))?;
    fill(&mut model, &m.params, &bytes)?;
    Ok(model)
}

/// Loads a checkpoint into the architecture described by `config`,
/// failing with a per-parameter shape diff when they disagree.
pub fn load_for<T: Scalar>(config: &ModelConfig, path: &Path) -> Result<Model<T>> {
    let m = read_manifest(path)?;
    let mut model = Model::new(config.clone(), 0)?;
    let bytes = fs::read(path.with_file_name(&m.payload))?;
    fill(&mut model, &m.params, &bytes)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ModelConfig {
        ModelConfig {
            bands: 3,
            patch: 3,
            spectral_width: 2,
            dim: 4,
            groups: 2,
            heads: 2,
            encoders: 2,
            mlp_dim: 8,
            ..ModelConfig::new(2)
        }
    }

    #[test]
    fn round_trip_preserves_every_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.toml");
        let model = Model::<f32>::new(config(), 9).unwrap();
        save(&model, &path).unwrap();
        let back: Model<f32> = load(&path).unwrap();
        assert_eq!(back.config(), model.config());
        for (a, b) in model.store().entries().iter().zip(back.store().entries()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.tensor, b.tensor);
        }
        let bytes = fs::read(payload_path(&path)).unwrap();
        assert_eq!(bytes.len(), 4 * model.store().entries().iter().map(|e| e.tensor.numel()).sum::<usize>());
    }

    #[test]
    fn architecture_mismatch_lists_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        save(&Model::<f32>::new(config(), 0).unwrap(), &path).unwrap();
        let wider = ModelConfig { dim: 8, ..config() };
        let err = load_for::<f32>(&wider, &path).unwrap_err().to_string();
        assert!(err.contains("tbfe.conv1.weight"), "{err}");
        assert!(err.contains("[4, 4, 3, 3]") && err.contains("[8, 4, 3, 3]"), "{err}");
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        save(&Model::<f32>::new(config(), 0).unwrap(), &path).unwrap();
        let p = payload_path(&path);
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load::<f32>(&path), Err(Error::Load { .. })));
    }
}
