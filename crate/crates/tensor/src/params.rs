use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::{Graph, Gradients, Result, Tensor, TensorError, Var};

const MAGIC: &[u8; 8] = b"STCNNPAR";
const VERSION: u32 = 1;

/// Named, shaped weight tensors of one model.
///
/// Entries keep insertion order; that order is also the serialization order
/// and the order of gradient vectors handed to the optimizer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    tensors: Vec<Arc<Tensor<f32>>>,
    index: HashMap<String, usize>,
    seed: u64,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Seed the entries were initialised from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<f32>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateParameter(name));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(Arc::new(value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.position(name).map(|i| self.tensors[i].as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.tensors.iter().map(|t| t.as_ref()))
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Mutable access by position. The shape is fixed; only values change.
    pub fn values_mut(&mut self, i: usize) -> &mut [f32] {
        Arc::make_mut(&mut self.tensors[i]).data_mut()
    }

    /// Places every entry on `graph` as a gradient-requiring leaf.
    pub fn bind(&self, graph: &mut Graph<f32>) -> Bindings {
        let vars = self
            .tensors
            .iter()
            .map(|t| graph.leaf_shared(Arc::clone(t), true))
            .collect();
        Bindings {
            vars,
            index: self.index.clone(),
        }
    }

    /// Places every entry on `graph` as a constant.
    pub fn bind_frozen(&self, graph: &mut Graph<f32>) -> Bindings {
        let vars = self
            .tensors
            .iter()
            .map(|t| graph.leaf_shared(Arc::clone(t), false))
            .collect();
        Bindings {
            vars,
            index: self.index.clone(),
        }
    }

    /// Zero-valued tensors matching every entry's shape.
    pub fn zeros_like(&self) -> Vec<Tensor<f32>> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    /// Binary container: magic, format version, entry count, then per entry
    /// the name length and bytes, rank, extents and raw little-endian `f32`
    /// values. All integers are little-endian `u32`.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for (name, t) in self.iter() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TensorError::Format("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(TensorError::Format(format!("unsupported version {version}")));
        }
        let count = read_u32(r)?;
        let mut store = Self::new(0);
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| TensorError::Format("parameter name is not UTF-8".into()))?;
            let rank = read_u32(r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u32(r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            store.insert(name, Tensor::new(shape, data)?)?;
        }
        Ok(store)
    }

    /// True when both stores hold the same names, shapes and bit patterns.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Graph handles of a bound [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct Bindings {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bindings {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    /// Gradients in store order; entries the loss does not reach are zero.
    pub fn collect(&self, store: &ParameterStore, grads: &mut Gradients<f32>) -> Vec<Tensor<f32>> {
        self.vars
            .iter()
            .zip(store.tensors.iter())
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }
}
