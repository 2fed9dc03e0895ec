//! JSON model files.
//!
//! ```text
//! {"format_version":1,
//!  "config":{"C":8,"F":16,"H":16,"L":2,"branches":"both",...},
//!  "window":32,
//!  "parameters":{"extractor.weight":{"shape":[16,128],"values":[...]},...},
//!  "checksum":"1c291ca3"}
//! ```
//!
//! Floats are written in shortest round-trip decimal form (at most 17
//! significant digits), so loading reproduces every parameter bit for bit.
//! The checksum is a CRC-32 over the exact bytes of `config`, `window` and
//! `parameters`; any altered byte either breaks parsing or fails the check.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{Mlad, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile<'a> {
    #[allow(dead_code)]
    format_version: u32,
    #[serde(borrow)]
    config: &'a RawValue,
    #[serde(borrow)]
    window: &'a RawValue,
    #[serde(borrow)]
    parameters: &'a RawValue,
    checksum: String,
}

fn checksum(config: &str, window: &str, parameters: &str) -> String {
    let mut hasher = crc32fast::Hasher::new();
    for part in [config, "\n", window, "\n", parameters] {
        hasher.update(part.as_bytes());
    }
    format!("{:08x}", hasher.finalize())
}

pub fn serialize_model(model: &Mlad) -> Result<Vec<u8>> {
    let config = serde_json::to_string(model.config())?;
    let window = serde_json::to_string(&model.inference_window)?;
    let mut parameters = String::from("{");
    for (i, (name, tensor)) in model.params().named().into_iter().enumerate() {
        if !tensor.all_finite() {
            return Err(Error::ModelFormat(format!(
                "parameter {name} is not finite"
            )));
        }
        if i > 0 {
            parameters.push(',');
        }
        parameters.push_str(&serde_json::to_string(&name)?);
        parameters.push(':');
        parameters.push_str(&serde_json::to_string(&ParamEntry {
            shape: tensor.shape().to_vec(),
            values: tensor.data().to_vec(),
        })?);
    }
    parameters.push('}');
    let sum = checksum(&config, &window, &parameters);
    Ok(format!(
        "{{\"format_version\":{MODEL_FORMAT_VERSION},\"config\":{config},\"window\":{window},\"parameters\":{parameters},\"checksum\":\"{sum}\"}}\n"
    )
    .into_bytes())
}

pub fn deserialize_model(bytes: &[u8]) -> Result<Mlad> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| Error::ModelFormat(format!("not UTF-8: {e}")))?;
    let probe: VersionProbe = serde_json::from_str(text)
        .map_err(|e| Error::ModelFormat(format!("unreadable header: {e}")))?;
    if probe.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            probe.format_version
        )));
    }
    let file: ModelFile = serde_json::from_str(text)
        .map_err(|e| Error::ModelFormat(format!("malformed model file: {e}")))?;
    let expected = checksum(file.config.get(), file.window.get(), file.parameters.get());
    if file.checksum != expected {
        return Err(Error::ModelFormat(format!(
            "checksum mismatch (stored {}, computed {expected})",
            file.checksum
        )));
    }

    let config: ModelConfig = serde_json::from_str(file.config.get())
        .map_err(|e| Error::ModelFormat(format!("config: {e}")))?;
    config.validate()?;
    let window: Option<usize> = serde_json::from_str(file.window.get())
        .map_err(|e| Error::ModelFormat(format!("window: {e}")))?;
    let entries: BTreeMap<String, ParamEntry> = serde_json::from_str(file.parameters.get())
        .map_err(|e| Error::ModelFormat(format!("parameters: {e}")))?;
    let mut lookup = BTreeMap::new();
    for (name, entry) in entries {
        let t = Tensor::new(entry.shape, entry.values)
            .map_err(|e| Error::ModelFormat(format!("parameter {name}: {e}")))?;
        lookup.insert(name, t);
    }
    let mut params = ModelParams::init(&config);
    params.load_named(lookup)?;
    let mut model = Mlad::from_parts(config, params)?;
    model.inference_window = window;
    Ok(model)
}
