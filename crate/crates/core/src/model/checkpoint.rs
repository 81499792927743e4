//! JSON checkpoints: a config header and named tensors.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use super::params::Tensors;
use super::{Model, ModelConfig, ModelError};

pub const CHECKPOINT_FORMAT: &str = "docnli-checkpoint";
const VERSION: u64 = 1;

pub fn checkpoint_to_string(model: &Model) -> String {
    let mut tensors = Map::new();
    for t in model.params.tensors() {
        tensors.insert(t.name, json!({ "shape": t.shape, "data": t.data }));
    }
    let doc = json!({
        "format": CHECKPOINT_FORMAT,
        "version": VERSION,
        "config": model.config,
        "tensors": tensors,
    });
    let mut out = serde_json::to_string(&doc).expect("checkpoint serializes");
    out.push('\n');
    out
}

pub fn checkpoint_from_str(text: &str) -> Result<Model, ModelError> {
    let bad = |m: String| ModelError::Checkpoint(m);
    let doc: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if doc["format"] != CHECKPOINT_FORMAT {
        return Err(bad("not a checkpoint file".into()));
    }
    if doc["version"] != VERSION {
        return Err(bad(format!("unsupported version {}", doc["version"])));
    }
    let config: ModelConfig = serde_json::from_value(doc["config"].clone()).map_err(|e| bad(e.to_string()))?;
    let mut model = Model::new(config, 0)?;
    let stored = doc["tensors"].as_object().ok_or_else(|| bad("missing tensors".into()))?;
    let layout: Vec<(String, Vec<usize>)> = model.params.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    if stored.len() != layout.len() {
        return Err(bad(format!("{} tensors stored, {} expected", stored.len(), layout.len())));
    }
    for ((name, shape), target) in layout.iter().zip(model.params.tensors_mut()) {
        let entry = stored.get(name).ok_or_else(|| bad(format!("missing tensor {name}")))?;
        let got: Vec<usize> = serde_json::from_value(entry["shape"].clone()).map_err(|e| bad(format!("{name}: {e}")))?;
        if &got != shape {
            return Err(bad(format!("{name}: shape {got:?}, expected {shape:?}")));
        }
        let data: Vec<f64> = serde_json::from_value(entry["data"].clone()).map_err(|e| bad(format!("{name}: {e}")))?;
        if data.len() != target.len() {
            return Err(bad(format!("{name}: {} values, expected {}", data.len(), target.len())));
        }
        target.copy_from_slice(&data);
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), ModelError> {
    fs::write(path, checkpoint_to_string(model)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Model, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    checkpoint_from_str(&text)
}
