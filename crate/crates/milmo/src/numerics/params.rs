//! Named parameter collections and their on-disk payload format.
//!
//! A checkpoint is a JSON manifest (names and shapes, in order) followed by
//! each parameter's raw little-endian `f64` payload. Writing and re-reading
//! preserves every bit, so a reloaded model reproduces forward passes
//! exactly.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NumericsError;
use crate::rng::Rng;

/// An ordered collection of named tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ParamManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Register a tensor under `name`; names must be unique.
    pub fn add(&mut self, name: &str, tensor: Tensor) -> usize {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let idx = self.tensors.len();
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), idx);
        idx
    }

    /// Uniform init in `[-scale, scale]`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], scale: f64, rng: &mut Rng) -> usize {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| (rng.gen_f64() * 2.0 - 1.0) * scale).collect();
        self.add(name, Tensor::from_vec(shape, data).expect("consistent shape"))
    }

    /// Gaussian init with the given standard deviation.
    pub fn add_normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut Rng) -> usize {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_normal() * std).collect();
        self.add(name, Tensor::from_vec(shape, data).expect("consistent shape"))
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> usize {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_full(&mut self, name: &str, shape: &[usize], value: f64) -> usize {
        self.add(name, Tensor::full(shape, value))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn tensor(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| self.tensor(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.tensors.iter())
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn manifest(&self) -> Vec<ParamManifestEntry> {
        self.iter()
            .map(|(name, t)| ParamManifestEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect()
    }

    /// Write every tensor's raw little-endian f64 payload, in order.
    pub fn write_payload<W: Write>(&self, w: &mut W) -> Result<(), NumericsError> {
        for t in &self.tensors {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Rebuild a set from a manifest plus the payload stream it describes.
    pub fn read_payload<R: Read>(
        manifest: &[ParamManifestEntry],
        r: &mut R,
    ) -> Result<Self, NumericsError> {
        let mut set = ParamSet::new();
        for entry in manifest {
            let n: usize = entry.shape.iter().product();
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)
                .map_err(|e| NumericsError::Corrupt(format!("payload for {}: {e}", entry.name)))?;
            let data: Vec<f64> = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            set.add(&entry.name, Tensor::from_vec(&entry.shape, data)?);
        }
        Ok(set)
    }
}
