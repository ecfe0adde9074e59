//! Named parameter storage and the Adam optimizer.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Param {
    pub value: Tensor,
    pub trainable: bool,
}

/// Parameters keyed by dotted names (`vqa.attn.w`). Iteration order is the
/// name order, which keeps every fold over parameters deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    entries: BTreeMap<String, Param>,
}

impl ParameterStore {
    pub fn new() -> ParameterStore {
        ParameterStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), Param { value, trainable: true });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn freeze_all(&mut self) {
        for p in self.entries.values_mut() {
            p.trainable = false;
        }
    }

    /// Union of two stores; duplicate names are rejected.
    pub fn merge(&mut self, other: &ParameterStore) -> Result<()> {
        for (name, param) in &other.entries {
            if self.entries.contains_key(name) {
                return Err(Error::Invalid(format!("duplicate parameter {name} in merge")));
            }
            self.entries.insert(name.clone(), param.clone());
        }
        Ok(())
    }

    /// Split off every entry whose name starts with `prefix`.
    pub fn split_prefix(&self, prefix: &str) -> (ParameterStore, ParameterStore) {
        let mut with = ParameterStore::new();
        let mut without = ParameterStore::new();
        for (name, param) in &self.entries {
            if name.starts_with(prefix) {
                with.entries.insert(name.clone(), param.clone());
            } else {
                without.entries.insert(name.clone(), param.clone());
            }
        }
        (with, without)
    }

    /// SHA-256 over names, shapes, flags and little-endian payloads.
    /// Equal digests mean bit-identical parameters.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, param) in &self.entries {
            h.update(name.as_bytes());
            h.update([0u8]);
            match param.value.shape() {
                Shape::Scalar => h.update([0u8]),
                Shape::Vector(n) => {
                    h.update([1u8]);
                    h.update((n as u64).to_le_bytes());
                }
                Shape::Matrix(r, c) => {
                    h.update([2u8]);
                    h.update((r as u64).to_le_bytes());
                    h.update((c as u64).to_le_bytes());
                }
            }
            h.update([param.trainable as u8]);
            for v in param.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Adam state for the trainable subset of a store.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new() -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update over every trainable parameter present in `grads`.
    pub fn step(&mut self, store: &mut ParameterStore, grads: &BTreeMap<String, Tensor>, lr: f64) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, grad) in grads {
            let Some(param) = store.entries.get_mut(name) else {
                continue;
            };
            if !param.trainable {
                continue;
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let value = param.value.data_mut();
            for ((w, g), (m, v)) in value
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()))
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }

    pub fn state(&self) -> (&BTreeMap<String, Tensor>, &BTreeMap<String, Tensor>) {
        (&self.m, &self.v)
    }

    pub fn restore(t: u64, m: BTreeMap<String, Tensor>, v: BTreeMap<String, Tensor>) -> Adam {
        Adam { t, m, v, ..Adam::new() }
    }
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new()
    }
}
