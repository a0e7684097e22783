//! Versioned JSON model files.
//!
//! Matrices are stored with explicit `rows`/`cols` and row-major `data`.
//! Serialization is deterministic: the same ensemble always produces the
//! same bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::network::StackedModel;
use crate::params::Parameterized;
use crate::training::{EnsembleMember, EnsembleModel};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "stlf-ensemble";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub format_version: u32,
    /// Report label, e.g. `adRNNCell`.
    pub label: String,
    pub config: RunConfig,
    pub members: Vec<EnsembleMember>,
}

impl ModelFile {
    pub fn new(config: RunConfig, ensemble: EnsembleModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            format_version: MODEL_FORMAT_VERSION,
            label: config.model.cell.label().into(),
            config,
            members: ensemble.members,
        }
    }

    pub fn ensemble(&self) -> Result<EnsembleModel> {
        EnsembleModel::new(self.members.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            format_version: u32,
        }
        let header: Header = serde_json::from_slice(bytes)?;
        if header.format != MODEL_FORMAT {
            return Err(Error::Data(format!("not a model file (format '{}')", header.format)));
        }
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion(header.format_version));
        }
        let file: Self = serde_json::from_slice(bytes)?;
        file.check_shapes()?;
        Ok(file)
    }

    /// Every member must have the structure its config implies: the same
    /// blocks, matrix shapes and cell tags as a freshly built model.
    fn check_shapes(&self) -> Result<()> {
        self.config.validate()?;
        if self.members.is_empty() {
            return Err(Error::Data("model file has no members".into()));
        }
        let expected = shape_signature(serde_json::to_value(StackedModel::build(self.config.model, 0)?)?);
        for m in &self.members {
            if shape_signature(serde_json::to_value(&m.model)?) != expected {
                return Err(Error::Shape(format!("member {} does not have the shapes its config implies", m.seed)));
            }
            if m.model.blocks().iter().any(|(_, b)| b.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite("model parameters"));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// The JSON tree with every float replaced by null.
fn shape_signature(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => Value::Null,
        Value::Array(a) => Value::Array(a.into_iter().map(shape_signature).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, shape_signature(v))).collect()),
        other => other,
    }
}
