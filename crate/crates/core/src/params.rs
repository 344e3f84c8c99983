//! Named-parameter registry: the bridge between graph leaves and the
//! checkpoint container.

use rand::Rng;
use thiserror::Error;

use crate::tensor::{glorot_init, Dtype, Graph, NamedTensor, Tensor, TensorRef};

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("checkpoint is missing parameter {0}")]
    Missing(String),
    #[error("checkpoint parameter {name} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint holds unknown parameter {0}")]
    Unknown(String),
}

struct Entry {
    name: String,
    tensor: TensorRef,
    trainable: bool,
}

/// Ordered mapping from parameter names to graph leaves. Insertion order is
/// the canonical order for SGD, clipping, and checkpoints, keeping every
/// numeric reduction deterministic.
#[derive(Default)]
pub struct ParamRegistry {
    entries: Vec<Entry>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        ParamRegistry::default()
    }

    /// Creates a glorot-initialized trainable parameter.
    pub fn glorot<R: Rng>(
        &mut self,
        graph: &mut Graph,
        rng: &mut R,
        name: impl Into<String>,
        shape: &[usize],
    ) -> TensorRef {
        let t = glorot_init(shape, rng);
        self.add(graph, name, t, true)
    }

    /// Creates a zero-initialized trainable parameter (biases).
    pub fn zeros(&mut self, graph: &mut Graph, name: impl Into<String>, shape: &[usize]) -> TensorRef {
        self.add(graph, name, Tensor::zeros(shape.to_vec()), true)
    }

    pub fn add(
        &mut self,
        graph: &mut Graph,
        name: impl Into<String>,
        tensor: Tensor,
        trainable: bool,
    ) -> TensorRef {
        let name = name.into();
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        let r = if trainable { graph.param(tensor) } else { graph.frozen_param(tensor) };
        self.entries.push(Entry { name, tensor: r, trainable });
        r
    }

    /// All parameters updated by SGD, in insertion order.
    pub fn trainable(&self) -> Vec<TensorRef> {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.tensor).collect()
    }

    /// Trainable parameters whose names start with `prefix`.
    pub fn trainable_prefixed(&self, prefix: &str) -> Vec<TensorRef> {
        self.entries
            .iter()
            .filter(|e| e.trainable && e.name.starts_with(prefix))
            .map(|e| e.tensor)
            .collect()
    }

    /// Snapshot of the parameters under `prefix` only.
    pub fn export_prefixed(&self, graph: &Graph, dtype: Dtype, prefix: &str) -> Vec<NamedTensor> {
        self.entries
            .iter()
            .filter(|e| e.name.starts_with(prefix))
            .map(|e| NamedTensor { name: e.name.clone(), dtype, tensor: graph.to_tensor(e.tensor) })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<TensorRef> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.tensor)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Snapshots every parameter (trainable and frozen) as named tensors.
    pub fn export(&self, graph: &Graph, dtype: Dtype) -> Vec<NamedTensor> {
        self.entries
            .iter()
            .map(|e| NamedTensor { name: e.name.clone(), dtype, tensor: graph.to_tensor(e.tensor) })
            .collect()
    }

    /// Loads values back into the registered leaves. Every registered name
    /// must be present with a matching shape, and the snapshot must not name
    /// parameters this registry does not know.
    pub fn import(&self, graph: &mut Graph, tensors: &[NamedTensor]) -> Result<(), ParamError> {
        for nt in tensors {
            if !self.entries.iter().any(|e| e.name == nt.name) {
                return Err(ParamError::Unknown(nt.name.clone()));
            }
        }
        for e in &self.entries {
            let nt = tensors
                .iter()
                .find(|t| t.name == e.name)
                .ok_or_else(|| ParamError::Missing(e.name.clone()))?;
            let (r, c) = graph.shape(e.tensor);
            if nt.tensor.shape != [r, c] {
                return Err(ParamError::ShapeMismatch {
                    name: e.name.clone(),
                    expected: vec![r, c],
                    found: nt.tensor.shape.clone(),
                });
            }
            graph.set_values(e.tensor, &nt.tensor.values);
        }
        Ok(())
    }

    /// Imports only entries under `prefix`, from a snapshot that was
    /// exported with the same prefix (sentence-encoder transfer).
    pub fn import_prefixed(
        &self,
        graph: &mut Graph,
        tensors: &[NamedTensor],
        prefix: &str,
    ) -> Result<usize, ParamError> {
        let mut loaded = 0;
        for e in self.entries.iter().filter(|e| e.name.starts_with(prefix)) {
            let nt = tensors
                .iter()
                .find(|t| t.name == e.name)
                .ok_or_else(|| ParamError::Missing(e.name.clone()))?;
            let (r, c) = graph.shape(e.tensor);
            if nt.tensor.shape != [r, c] {
                return Err(ParamError::ShapeMismatch {
                    name: e.name.clone(),
                    expected: vec![r, c],
                    found: nt.tensor.shape.clone(),
                });
            }
            graph.set_values(e.tensor, &nt.tensor.values);
            loaded += 1;
        }
        Ok(loaded)
    }
}
