//! Checkpoint serialization.
//!
//! Layout: 8-byte magic, u64 LE manifest length, JSON manifest, then the
//! concatenated little-endian f64 payloads in manifest order. Round trips
//! are bit-exact, so a saved-and-reloaded store has the same digest.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MMXCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    meta: serde_json::Value,
    params: Vec<ManifestEntry>,
}

fn shape_dims(shape: Shape) -> Vec<usize> {
    match shape {
        Shape::Scalar => vec![],
        Shape::Vector(n) => vec![n],
        Shape::Matrix(r, c) => vec![r, c],
    }
}

fn dims_shape(dims: &[usize]) -> Result<Shape> {
    match dims {
        [] => Ok(Shape::Scalar),
        [n] => Ok(Shape::Vector(*n)),
        [r, c] => Ok(Shape::Matrix(*r, *c)),
        other => Err(Error::Checkpoint(format!("unsupported rank {}", other.len()))),
    }
}

/// Write `store` plus arbitrary JSON metadata to `path`.
pub fn save(path: &Path, store: &ParameterStore, meta: &serde_json::Value) -> Result<()> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        meta: meta.clone(),
        params: store
            .iter()
            .map(|(name, p)| ManifestEntry {
                name: name.clone(),
                shape: shape_dims(p.value.shape()),
                trainable: p.trainable,
            })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    f.write_all(&manifest_bytes)?;
    let mut payload = Vec::with_capacity(store.num_values() * 8);
    for (_, p) in store.iter() {
        for v in p.value.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    f.write_all(&payload)?;
    Ok(())
}

/// Read a checkpoint written by [`save`].
pub fn load(path: &Path) -> Result<(ParameterStore, serde_json::Value)> {
    let mut f = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint(format!("{}: truncated header", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic (not a checkpoint)",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 8];
    f.read_exact(&mut len_bytes)
        .map_err(|_| Error::Checkpoint(format!("{}: truncated manifest length", path.display())))?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    f.read_exact(&mut manifest_bytes)
        .map_err(|_| Error::Checkpoint(format!("{}: truncated manifest", path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let mut rest = Vec::new();
    f.read_to_end(&mut rest)?;
    let expected: usize = manifest
        .params
        .iter()
        .map(|e| e.shape.iter().product::<usize>().max(if e.shape.is_empty() { 1 } else { 0 }))
        .sum::<usize>()
        * 8;
    if rest.len() != expected {
        return Err(Error::Checkpoint(format!(
            "{}: payload is {} bytes, manifest implies {expected}",
            path.display(),
            rest.len()
        )));
    }
    let mut store = ParameterStore::new();
    let mut off = 0usize;
    for entry in &manifest.params {
        let shape = dims_shape(&entry.shape)?;
        let n = shape.len();
        let mut data = Vec::with_capacity(n);
        for k in 0..n {
            let at = off + k * 8;
            data.push(f64::from_le_bytes(rest[at..at + 8].try_into().unwrap()));
        }
        off += n * 8;
        store.insert(entry.name.clone(), Tensor::new(shape, data));
        if !entry.trainable {
            store.get_mut(&entry.name).unwrap().trainable = false;
        }
    }
    Ok((store, manifest.meta))
}
