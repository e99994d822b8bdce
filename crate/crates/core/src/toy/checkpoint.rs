//! JSON checkpoints.
//!
//! ```text
//! {"format": "homosmooth-toy", "version": 1,
//!  "dims": {"vocab": K, "input": d, "hidden": H, "embed": E, "attention": A},
//!  "tensors": [{"name": "embed", "shape": [K, E], "data": [row-major...]}, ...]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::autodiff::Tensor;
use super::model::{ModelDims, ToyModelParams, PARAM_NAMES};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "homosmooth-toy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    dims: ModelDims,
    tensors: Vec<TensorRecord>,
}

pub fn checkpoint_to_string(params: &ToyModelParams) -> String {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        dims: params.dims,
        tensors: params
            .tensors
            .iter()
            .zip(PARAM_NAMES)
            .map(|(t, name)| TensorRecord {
                name: name.into(),
                shape: [t.rows, t.cols],
                data: t.data.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&ck).expect("checkpoint serializes")
}

pub fn checkpoint_from_str(text: &str, origin: &Path) -> Result<ToyModelParams> {
    let bad = |m: String| Error::parse(origin, 1, m);
    let ck: Checkpoint = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unknown format {:?}", ck.format)));
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", ck.version)));
    }
    let mut tensors = Vec::with_capacity(ck.tensors.len());
    for (rec, name) in ck.tensors.into_iter().zip(PARAM_NAMES) {
        if rec.name != name {
            return Err(bad(format!("expected tensor {name}, found {}", rec.name)));
        }
        if rec.data.len() != rec.shape[0] * rec.shape[1] {
            return Err(bad(format!("tensor {name} has wrong data length")));
        }
        tensors.push(Tensor::from_vec(rec.shape[0], rec.shape[1], rec.data));
    }
    let params = ToyModelParams { dims: ck.dims, tensors };
    params.validate()?;
    Ok(params)
}

pub fn save_checkpoint(params: &ToyModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ToyModelParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text, path)
}
