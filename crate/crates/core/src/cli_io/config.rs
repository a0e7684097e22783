//! Run configuration: presets plus TOML overrides.
//!
//! A config file may name a `preset` (`paper` or `desk`, default `paper`)
//! and a `cell`; the `[model]`, `[loss]`, `[training]` and `[split]` tables
//! then override individual keys of that preset. Unknown keys are errors.
//!
//! ```toml
//! preset = "desk"
//! cell = "adrnn"
//!
//! [training]
//! epochs = 12
//! seeds = [1, 2, 3]
//!
//! [split]
//! test_from = 2018-01-01
//! ```

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::loss::LossConfig;
use crate::network::{CellVariant, ModelConfig};
use crate::preprocess::DateRange;
use crate::training::TrainRecipe;
use crate::{Error, Result};

/// Test period. Both ends default from the data: the final calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_from: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_to: Option<NaiveDate>,
}

impl SplitConfig {
    /// Resolve against the data span `first..=last`.
    pub fn test_range(&self, first: NaiveDate, last: NaiveDate) -> Result<DateRange> {
        let from = self.test_from.unwrap_or_else(|| NaiveDate::from_ymd_opt(chrono::Datelike::year(&last), 1, 1).expect("valid date"));
        let to = self.test_to.unwrap_or(last);
        if from > to || to < first || from > last {
            return Err(Error::Config(format!("test range {from}..{to} does not overlap the data {first}..{last}")));
        }
        Ok(DateRange::new(from, to))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub training: TrainRecipe,
    #[serde(default)]
    pub split: SplitConfig,
}

impl RunConfig {
    /// Full-scale settings.
    pub fn paper(cell: CellVariant) -> Self {
        Self { model: ModelConfig::paper(cell), loss: LossConfig::default(), training: TrainRecipe::default(), split: SplitConfig::default() }
    }

    /// Laptop-scale settings: small states, three ensemble members and a
    /// longer schedule to make up for the few updates a small corpus gives.
    pub fn desk(cell: CellVariant) -> Self {
        let training = TrainRecipe {
            epochs: 30,
            lr_schedule: vec![(1, 3e-3), (16, 1e-3), (23, 3e-4), (27, 1e-4)],
            batch_schedule: vec![(1, 2), (10, 4)],
            seeds: vec![1, 2, 3],
            ..TrainRecipe::default()
        };
        Self { model: ModelConfig::desk(cell), loss: LossConfig::default(), training, split: SplitConfig::default() }
    }

    pub fn preset(name: &str, cell: CellVariant) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper(cell)),
            "desk" => Ok(Self::desk(cell)),
            other => Err(Error::Config(format!("unknown preset '{other}' (paper|desk)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.training.validate()?;
        if self.training.seeds.is_empty() {
            return Err(Error::Config("training.seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        let preset = match table.remove("preset") {
            None => "paper".to_string(),
            Some(toml::Value::String(s)) => s,
            Some(v) => return Err(Error::Config(format!("preset must be a string, got {v}"))),
        };
        let cell: CellVariant = match table.remove("cell") {
            None => CellVariant::AdRnn,
            Some(toml::Value::String(s)) => s.parse()?,
            Some(v) => return Err(Error::Config(format!("cell must be a string, got {v}"))),
        };
        let base = Self::preset(&preset, cell)?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, table);
        let cfg: Self = merged.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Overlay `over` onto `base`, recursing into tables.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
