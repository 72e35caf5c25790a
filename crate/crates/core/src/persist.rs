//! JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IdcError, Result};
use crate::membank::{MemoryBank, MemoryBankSet, MemorySlot};
use crate::model::IdcModel;
use crate::nn::{DiscriminatorNet, EncoderNet, FcHead};
use crate::trainer::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotFile {
    provenance: String,
    age: u64,
    value: f64,
    written_at: u64,
    key: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankFile {
    class_id: usize,
    capacity: usize,
    dim: usize,
    write_clock: u64,
    slots: Vec<SlotFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemoryFile {
    read_k: usize,
    banks: Vec<BankFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    config: TrainConfig,
    input_dim: usize,
    encoder: EncoderNet,
    fc: FcHead,
    discriminator: DiscriminatorNet,
    memory: MemoryFile,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn to_file(model: &IdcModel, config_hash: Option<&str>) -> ModelFile {
    ModelFile {
        format_version: FORMAT_VERSION,
        config_hash: config_hash.map(str::to_string),
        config: model.config.clone(),
        input_dim: model.input_dim,
        encoder: model.encoder.clone(),
        fc: model.fc.clone(),
        discriminator: model.discriminator.clone(),
        memory: MemoryFile {
            read_k: model.memory.read_k(),
            banks: model
                .memory
                .banks()
                .iter()
                .map(|b| BankFile {
                    class_id: b.class_id(),
                    capacity: b.capacity(),
                    dim: b.dim(),
                    write_clock: b.write_clock(),
                    slots: b
                        .slots()
                        .iter()
                        .map(|s| SlotFile {
                            provenance: s.provenance().to_string(),
                            age: s.age(),
                            value: s.value(),
                            written_at: s.written_at(),
                            key: s.key().to_vec(),
                        })
                        .collect(),
                })
                .collect(),
        },
    }
}

fn from_file(file: ModelFile) -> Result<IdcModel> {
    let banks = file
        .memory
        .banks
        .into_iter()
        .map(|b| {
            let slots = b
                .slots
                .into_iter()
                .map(|s| MemorySlot::restore(s.key, s.value, s.age, s.provenance, s.written_at))
                .collect::<Result<Vec<_>>>()?;
            MemoryBank::restore(b.class_id, b.capacity, b.dim, slots, b.write_clock)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| IdcError::CorruptFile(e.to_string()))?;
    let memory = MemoryBankSet::from_banks(banks, file.memory.read_k)?;
    let model = IdcModel {
        config: file.config,
        input_dim: file.input_dim,
        encoder: file.encoder,
        fc: file.fc,
        discriminator: file.discriminator,
        memory,
    };
    check_shapes(&model)?;
    Ok(model)
}

fn check_shapes(m: &IdcModel) -> Result<()> {
    let d = m.feature_dim();
    let corrupt = |msg: &str| Err(IdcError::CorruptFile(msg.to_string()));
    if m.encoder.0.input_dim() != m.input_dim {
        return corrupt("encoder input width disagrees with input_dim");
    }
    if m.fc.0.input_dim() != d || m.discriminator.0.input_dim() != d {
        return corrupt("head input width disagrees with encoder output");
    }
    if m.discriminator.0.output_dim() != 1 {
        return corrupt("discriminator must have a single output");
    }
    if m.fc.num_classes() != m.memory.num_classes() {
        return corrupt("FC head and memory disagree on the number of classes");
    }
    if m.memory.banks().iter().any(|b| b.dim() != d) {
        return corrupt("memory key width disagrees with encoder output");
    }
    Ok(())
}

pub fn model_to_json(model: &IdcModel, config_hash: Option<&str>) -> Result<String> {
    serde_json::to_string_pretty(&to_file(model, config_hash)).map_err(|e| IdcError::CorruptFile(e.to_string()))
}

pub fn model_from_json(text: &str) -> Result<IdcModel> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| IdcError::CorruptFile(e.to_string()))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(IdcError::VersionMismatch {
            found: probe.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| IdcError::CorruptFile(e.to_string()))?;
    from_file(file)
}

pub fn save_model(model: &IdcModel, path: impl AsRef<Path>, config_hash: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model, config_hash)?).map_err(|e| IdcError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<IdcModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IdcError::io(path, e))?;
    model_from_json(&text)
}
