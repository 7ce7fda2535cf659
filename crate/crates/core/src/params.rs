//! Named parameter sets and the flat binary checkpoint container.
//!
//! Checkpoint layout: the ASCII magic `SMCK1`, then one record per parameter
//! in set order: `u32` name length, name bytes, the four shape integers as
//! `u32` little-endian, then the raw little-endian element bytes. Element
//! width is the build's scalar width (4 bytes for training builds); the
//! decoder requires the payload to end exactly at the final record.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tape::{Gradients, Tape, TensorId};
use crate::tensor::{Shape, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"SMCK1";

/// A named, optionally trainable tensor.
#[derive(Debug, Clone)]
pub struct Parameter<S> {
    pub name: String,
    pub tensor: Tensor<S>,
    pub trainable: bool,
}

/// Ordered collection of parameters with unique names. Order is the
/// gradient-reduction and checkpoint order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<S> {
    params: Vec<Parameter<S>>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> Result<usize, TensorError> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(TensorError::invalid(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        self.params.push(Parameter {
            name,
            tensor,
            trainable: true,
        });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<S>> {
        self.params.iter()
    }

    pub fn get(&self, idx: usize) -> &Parameter<S> {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Parameter<S> {
        &mut self.params[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<S>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Total element count across all parameters.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }

    /// Serializes to the flat checkpoint container.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for p in &self.params {
            let name = p.name.as_bytes();
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name);
            let sh = p.tensor.shape();
            for dim in [sh.n, sh.c, sh.h, sh.w] {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            let mut buf = [0u8; 8];
            for &v in p.tensor.data() {
                v.write_le(&mut buf);
                out.extend_from_slice(&buf[..S::BYTES]);
            }
        }
        out
    }

    /// Parses a checkpoint container; every loaded parameter is trainable.
    pub fn decode(bytes: &[u8]) -> Result<Self, TensorError> {
        if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..5] != CHECKPOINT_MAGIC {
            return Err(TensorError::invalid("checkpoint: bad magic"));
        }
        let mut pos = CHECKPOINT_MAGIC.len();
        let mut set = ParamSet::new();
        while pos < bytes.len() {
            let name_len = read_u32(bytes, &mut pos)? as usize;
            if pos + name_len > bytes.len() {
                return Err(TensorError::invalid("checkpoint: truncated name"));
            }
            let name = core::str::from_utf8(&bytes[pos..pos + name_len])
                .map_err(|_| TensorError::invalid("checkpoint: name is not UTF-8"))?
                .to_string();
            pos += name_len;
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = read_u32(bytes, &mut pos)? as usize;
            }
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
            let count = shape.len();
            let nbytes = count * S::BYTES;
            if pos + nbytes > bytes.len() {
                return Err(TensorError::invalid(format!(
                    "checkpoint: truncated values for {name:?}"
                )));
            }
            let mut data = Vec::with_capacity(count);
            for i in 0..count {
                data.push(S::read_le(&bytes[pos + i * S::BYTES..]));
            }
            pos += nbytes;
            set.push(name, Tensor::new(shape, data)?)?;
        }
        Ok(set)
    }
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32, TensorError> {
    if *pos + 4 > bytes.len() {
        return Err(TensorError::invalid("checkpoint: truncated header field"));
    }
    let v = u32::from_le_bytes([bytes[*pos], bytes[*pos + 1], bytes[*pos + 2], bytes[*pos + 3]]);
    *pos += 4;
    Ok(v)
}

/// Parameters inserted as leaves on a tape, in set order.
pub struct BoundParams {
    ids: Vec<TensorId>,
}

impl BoundParams {
    pub fn ids(&self) -> &[TensorId] {
        &self.ids
    }

    pub fn id(&self, idx: usize) -> TensorId {
        self.ids[idx]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Collects per-parameter gradients in set order. Errors when a trainable
    /// parameter received no gradient.
    pub fn collect_grads<S: Scalar>(
        &self,
        set: &ParamSet<S>,
        grads: &mut Gradients<S>,
    ) -> Result<Vec<Tensor<S>>, TensorError> {
        let mut out = Vec::with_capacity(self.ids.len());
        for (i, &id) in self.ids.iter().enumerate() {
            match grads.take(id) {
                Some(g) => out.push(g),
                None => {
                    return Err(TensorError::invalid(format!(
                        "missing gradient for trainable parameter {:?}",
                        set.get(i).name
                    )))
                }
            }
        }
        Ok(out)
    }
}

/// Copies every parameter onto the tape as a leaf. Both Siamese branches use
/// these same node ids, so backward naturally sums their contributions.
pub fn bind_params<S: Scalar>(tape: &mut Tape<S>, set: &ParamSet<S>) -> Result<BoundParams, TensorError> {
    let mut ids = Vec::with_capacity(set.len());
    for p in set.iter() {
        ids.push(tape.leaf(p.tensor.clone())?);
    }
    Ok(BoundParams { ids })
}
