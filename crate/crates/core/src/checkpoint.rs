//! Model checkpoints: one JSON file holding the encoder configuration, the
//! vocabulary, every parameter tensor, the prompt rule base, and the fitted
//! mixture if there is one. The layout is plain arrays so a checkpoint
//! written anywhere reloads bit-identically.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BiLinkError, Result};
use crate::model::{ModelConfig, ParamStore};
use crate::nn::Tensor;
use crate::prompt::{GmmState, PromptRuleBase};
use crate::text::Vocab;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    vocab: Vec<String>,
    tensors: BTreeMap<String, Tensor>,
    rules: PromptRuleBase,
    gmm: Option<GmmState>,
}

/// Everything needed to resume or evaluate a trained model.
#[derive(Debug)]
pub struct Checkpoint {
    pub store: ParamStore,
    pub rules: PromptRuleBase,
    pub gmm: Option<GmmState>,
}

pub fn save_checkpoint(
    path: &Path,
    store: &ParamStore,
    rules: &PromptRuleBase,
    gmm: Option<&GmmState>,
) -> Result<()> {
    for (name, t) in &store.tensors {
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(BiLinkError::Checkpoint(format!(
                "tensor {name} contains non-finite values"
            )));
        }
    }
    let file = CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: store.config.clone(),
        vocab: store.vocab.tokens().to_vec(),
        tensors: store.tensors.clone(),
        rules: rules.clone(),
        gmm: gmm.cloned(),
    };
    fs::write(path, serde_json::to_vec(&file)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let file: CheckpointFile = serde_json::from_slice(&bytes)?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(BiLinkError::Checkpoint(format!(
            "unsupported format version {} (expected {})",
            file.format_version, CHECKPOINT_FORMAT_VERSION
        )));
    }
    file.config.validate()?;
    let vocab = Vocab::from_token_list(file.vocab);
    let rules = PromptRuleBase::new(file.rules.templates)?;
    if let Some(g) = &file.gmm {
        g.validate()?;
    }

    // A fresh init pins down the exact tensor names and shapes this
    // configuration must carry.
    let mut store = ParamStore::init(file.config, vocab, 0)?;
    if file.tensors.len() != store.tensors.len() {
        return Err(BiLinkError::Checkpoint(format!(
            "checkpoint has {} tensors, configuration requires {}",
            file.tensors.len(),
            store.tensors.len()
        )));
    }
    for (name, expected) in &store.tensors {
        let got = file.tensors.get(name).ok_or_else(|| {
            BiLinkError::Checkpoint(format!("checkpoint is missing tensor {name}"))
        })?;
        if got.rows != expected.rows || got.cols != expected.cols {
            return Err(BiLinkError::Checkpoint(format!(
                "tensor {name} has shape {}x{}, configuration requires {}x{}",
                got.rows, got.cols, expected.rows, expected.cols
            )));
        }
        if got.data.len() != got.rows * got.cols {
            return Err(BiLinkError::Checkpoint(format!(
                "tensor {name} declares {}x{} but carries {} values",
                got.rows,
                got.cols,
                got.data.len()
            )));
        }
        if got.data.iter().any(|v| !v.is_finite()) {
            return Err(BiLinkError::Checkpoint(format!(
                "tensor {name} contains non-finite values"
            )));
        }
    }
    store.tensors = file.tensors;
    Ok(Checkpoint { store, rules, gmm: file.gmm })
}
