//! On-disk checkpoints: a directory holding `meta.json`, `vocab.json` and one
//! raw little-endian `f64` file per tensor (row-major, shape in the meta).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{TemporalKg, Timestamp, Vocabulary};
use crate::models::{init_parameters, ModelDims, ModelError, ModelKind, ModelParameters, RotationNorm};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("tensor size mismatch: {tensor} expects {expected} bytes, file has {found}")]
    SizeMismatch { tensor: String, expected: usize, found: usize },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("vocabulary mismatch: checkpoint has {checkpoint} {what}, dataset has {dataset}")]
    VocabMismatch { what: &'static str, checkpoint: usize, dataset: usize },
    #[error("vocabulary mismatch: {what} #{index} is {checkpoint:?} in the checkpoint but {dataset:?} in the dataset")]
    NameMismatch { what: &'static str, index: usize, checkpoint: String, dataset: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: [usize; 2],
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    model: ModelKind,
    dim: usize,
    gamma: f64,
    temporal_dim: usize,
    n_entities: usize,
    n_relations: usize,
    norm: RotationNorm,
    time_origin: Timestamp,
    time_table: Vec<Timestamp>,
    epoch: usize,
    seed: u64,
    tensors: Vec<TensorMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VocabFile {
    entities: Vocabulary,
    relations: Vocabulary,
}

/// Trained parameters together with the vocabularies they index.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParameters,
    pub entities: Vocabulary,
    pub relations: Vocabulary,
    /// Epoch the parameters were taken from.
    pub epoch: usize,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(params: ModelParameters, kg: &TemporalKg, epoch: usize, seed: u64) -> Self {
        Self { params, entities: kg.entities().clone(), relations: kg.relations().clone(), epoch, seed }
    }

    /// Errors unless the dataset's vocabularies are exactly the ones the
    /// parameters were trained against.
    pub fn check_compatible(&self, kg: &TemporalKg) -> Result<(), CheckpointError> {
        for (what, ours, theirs) in [
            ("entities", &self.entities, kg.entities()),
            ("relations", &self.relations, kg.relations()),
        ] {
            if ours.len() != theirs.len() {
                return Err(CheckpointError::VocabMismatch { what, checkpoint: ours.len(), dataset: theirs.len() });
            }
            if let Some((index, (a, b))) = ours.names().iter().zip(theirs.names()).enumerate().find(|(_, (a, b))| a != b) {
                return Err(CheckpointError::NameMismatch { what, index, checkpoint: a.clone(), dataset: b.clone() });
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let dir = dir.as_ref();
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CheckpointError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let p = &self.params;
        let mut tensors = Vec::with_capacity(p.tensors.len());
        for t in &p.tensors {
            let file = format!("{}.bin", t.name);
            let bytes: Vec<u8> = t.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            let path = dir.join(&file);
            fs::write(&path, bytes).map_err(io_err(&path))?;
            tensors.push(TensorMeta { name: t.name.clone(), shape: [t.rows, t.cols], file });
        }
        let meta = Meta {
            format_version: FORMAT_VERSION,
            model: p.kind,
            dim: p.dim,
            gamma: p.gamma,
            temporal_dim: p.temporal_dim,
            n_entities: p.n_entities,
            n_relations: p.n_relations,
            norm: p.norm,
            time_origin: p.time_origin,
            time_table: p.time_table.clone(),
            epoch: self.epoch,
            seed: self.seed,
            tensors,
        };
        write_json(&dir.join("meta.json"), &meta)?;
        write_json(&dir.join("vocab.json"), &VocabFile { entities: self.entities.clone(), relations: self.relations.clone() })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let dir = dir.as_ref();
        let meta: Meta = read_json(&dir.join("meta.json"))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(CheckpointError::Format(format!("unsupported format version {}", meta.format_version)));
        }
        let vocab: VocabFile = read_json(&dir.join("vocab.json"))?;
        if vocab.entities.len() != meta.n_entities || vocab.relations.len() != meta.n_relations {
            return Err(CheckpointError::Format("vocab.json disagrees with meta.json sizes".into()));
        }

        // Lay out the expected tensors, then fill them from disk.
        let dims = ModelDims {
            n_entities: meta.n_entities,
            n_relations: meta.n_relations,
            dim: meta.dim,
            gamma: meta.gamma,
            norm: meta.norm,
            time_origin: meta.time_origin,
            time_table: meta.time_table.clone(),
        };
        let mut params = init_parameters(meta.model, &dims, 0)?;
        if params.temporal_dim != meta.temporal_dim {
            return Err(CheckpointError::Format(format!(
                "temporal_dim {} does not match gamma {} at dim {}",
                meta.temporal_dim, meta.gamma, meta.dim
            )));
        }
        if params.tensors.len() != meta.tensors.len() {
            return Err(CheckpointError::Format(format!(
                "{} expects {} tensors, meta lists {}",
                meta.model,
                params.tensors.len(),
                meta.tensors.len()
            )));
        }
        for (tensor, tm) in params.tensors.iter_mut().zip(&meta.tensors) {
            if tensor.name != tm.name || [tensor.rows, tensor.cols] != tm.shape {
                return Err(CheckpointError::Format(format!(
                    "tensor {} has shape {:?}, expected {} with shape [{}, {}]",
                    tm.name, tm.shape, tensor.name, tensor.rows, tensor.cols
                )));
            }
            let path = dir.join(&tm.file);
            let bytes = fs::read(&path).map_err(|source| CheckpointError::Io { path: path.clone(), source })?;
            let expected = tensor.data.len() * 8;
            if bytes.len() != expected {
                return Err(CheckpointError::SizeMismatch { tensor: tm.name.clone(), expected, found: bytes.len() });
            }
            for (v, chunk) in tensor.data.iter_mut().zip(bytes.chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
        }
        Ok(Self { params, entities: vocab.entities, relations: vocab.relations, epoch: meta.epoch, seed: meta.seed })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CheckpointError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CheckpointError::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text + "\n").map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| CheckpointError::Json { path: path.to_path_buf(), source })
}
