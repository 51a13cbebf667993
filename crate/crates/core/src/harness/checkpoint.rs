//! Checkpoints: a JSON manifest (config, config hash, tensor table) next to a
//! flat little-endian f64 blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::config::RunConfig;
use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: ParamGroup,
    pub frozen: bool,
    /// Offset and length in f64 elements within the blob.
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub config_hash: String,
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

/// In-memory checkpoint: configuration plus every parameter by name.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub config_hash: String,
    pub tensors: Vec<(String, ParamGroup, Tensor)>,
}

impl Checkpoint {
    pub fn capture(config: &RunConfig, store: &ParamStore) -> Self {
        Self {
            config: config.clone(),
            config_hash: config.hash(),
            tensors: store.iter().map(|(_, p)| (p.name().to_string(), p.group(), p.value().clone())).collect(),
        }
    }

    /// Same tensors under another configuration (e.g. an ablation boundary
    /// that shares this parameter layout).
    pub fn with_config(&self, config: RunConfig) -> Self {
        Self { config_hash: config.hash(), config, tensors: self.tensors.clone() }
    }

    /// Copies tensors into `store`, refusing config-hash, name or shape mismatches.
    pub fn restore(&self, store: &mut ParamStore) -> Result<()> {
        if self.config.hash() != self.config_hash {
            return Err(Error::BadConfig("checkpoint config does not match its recorded hash".into()));
        }
        if self.tensors.len() != store.len() {
            return Err(Error::BadConfig(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (name, _, t) in &self.tensors {
            let id = store.id(name).ok_or_else(|| Error::BadConfig(format!("unknown tensor `{name}`")))?;
            store.set(id, t.clone()).map_err(|e| Error::BadConfig(e.to_string()))?;
        }
        Ok(())
    }

    /// Writes `<path>` (manifest JSON) and `<path>.bin`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let blob_path = blob_path(path);
        let mut blob = Vec::new();
        let mut tensors = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, group, t) in &self.tensors {
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                group: *group,
                frozen: group.frozen(),
                offset,
                len: t.len(),
            });
            offset += t.len();
            blob.extend(t.data().iter().flat_map(|v| v.to_le_bytes()));
        }
        let manifest = Manifest {
            config: self.config.clone(),
            config_hash: self.config_hash.clone(),
            blob: blob_path.file_name().unwrap().to_string_lossy().into_owned(),
            tensors,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
        fs::write(path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_slice(&text)?;
        let blob_path = path.with_file_name(&manifest.blob);
        let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let values = decode_f64(&bytes)?;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let end = e.offset + e.len;
            if end > values.len() || e.shape.iter().product::<usize>() != e.len {
                return Err(Error::BadConfig(format!("tensor `{}` is inconsistent with the blob", e.name)));
            }
            tensors.push((e.name, e.group, Tensor::new(e.shape, values[e.offset..end].to_vec())?));
        }
        Ok(Self { config: manifest.config, config_hash: manifest.config_hash, tensors })
    }
}

fn blob_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".bin");
    path.with_file_name(name)
}

fn decode_f64(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::BadConfig("checkpoint blob length is not a multiple of 8".into()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Hook for externally produced weights (e.g. converted pretrained encoders):
/// overwrites every parameter whose name appears in the manifest at `path`,
/// leaving the rest untouched. Returns the number of tensors loaded.
pub fn load_external_weights(store: &mut ParamStore, path: &Path) -> Result<usize> {
    let ckpt = Checkpoint::load(path)?;
    let mut n = 0;
    for (name, _, t) in ckpt.tensors {
        if let Some(id) = store.id(&name) {
            store.set(id, t)?;
            n += 1;
        }
    }
    Ok(n)
}
