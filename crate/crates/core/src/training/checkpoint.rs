//! Checkpoint container: JSON metadata plus the named-tensor store.
//!
//! Layout: magic `QGCKPT\0\0`, u32 container version, u64 metadata length,
//! metadata JSON, then the tensor store. Reloading and re-evaluating a
//! checkpoint reproduces its stored dev perplexity bit-exactly at the
//! stored precision (JSON f64 serialization round-trips exactly).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::tensor::{read_tensors, write_tensors, NamedTensor};

use super::{TrainConfig, TrainError};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"QGCKPT\0\0";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    /// `full_model` or `sentence_encoder`.
    pub component: String,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub epoch: usize,
    pub dev_ppl: f64,
    pub rng_state: ChaCha8Rng,
    pub vocab_hash: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write(&mut w)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<(), TrainError> {
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u64::<LittleEndian>(meta.len() as u64)?;
        w.write_all(&meta)?;
        write_tensors(w, &self.tensors)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, TrainError> {
        let file = File::open(path)?;
        let mut r = BufReader::new(file);
        Checkpoint::read(&mut r)
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Checkpoint, TrainError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TrainError::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let meta_len = r.read_u64::<LittleEndian>()? as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        r.read_exact(&mut meta_bytes)?;
        let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes)
            .map_err(|e| TrainError::Checkpoint(format!("bad checkpoint metadata: {e}")))?;
        let tensors = read_tensors(r)?;
        Ok(Checkpoint { meta, tensors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn checkpoint_round_trip_preserves_meta_and_values() {
        use crate::tensor::{Dtype, Tensor};
        let ckpt = Checkpoint {
            meta: CheckpointMeta {
                version: CHECKPOINT_VERSION,
                component: "full_model".into(),
                model_config: ModelConfig::desk(10, 8),
                train_config: TrainConfig::desk(7),
                epoch: 3,
                dev_ppl: 1.234567890123456789,
                rng_state: ChaCha8Rng::seed_from_u64(99),
                vocab_hash: "abc123".into(),
            },
            tensors: vec![NamedTensor {
                name: "w".into(),
                dtype: Dtype::F64,
                tensor: Tensor::row(vec![0.1 + 0.2, -1e-300]),
            }],
        };
        let mut buf = Vec::new();
        ckpt.write(&mut buf).unwrap();
        let back = Checkpoint::read(&mut buf.as_slice()).unwrap();
        assert_eq!(back.meta.epoch, 3);
        assert_eq!(back.meta.dev_ppl.to_bits(), ckpt.meta.dev_ppl.to_bits());
        assert_eq!(back.meta.vocab_hash, "abc123");
        assert_eq!(back.meta.rng_state, ckpt.meta.rng_state);
        assert_eq!(
            back.tensors[0].tensor.values[0].to_bits(),
            ckpt.tensors[0].tensor.values[0].to_bits()
        );
    }
}
