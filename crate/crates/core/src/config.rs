//! Run configuration files.
//!
//! A run is described by one TOML document:
//!
//! ```toml
//! schema_version = 1
//! sram_budget = 200000
//!
//! [[layers]]
//! preset = "alexnet-conv3"
//! batch = 3
//!
//! [tile]
//! tb = 1
//! tc = 2
//! tm = 64
//! te = 6
//! tf = 13
//!
//! [dram.timing]
//! t_rcd = 10
//! ```
//!
//! Every system table is optional and falls back to the defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dse::{DesignSpace, TilingMode};
use crate::error::{ConfigError, Result};
use crate::sim::{SystemConfig, TraceKind};
use crate::workload::{LayerShape, TileConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// A layer given either by preset name or by its full shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerSpec {
    Preset {
        preset: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch: Option<u32>,
    },
    Shape(LayerShape),
}

/// Batch used by presets when none is given.
pub const DEFAULT_BATCH: u32 = 3;

pub fn layer_preset(name: &str, batch: u32) -> std::result::Result<LayerShape, ConfigError> {
    match name {
        "alexnet-conv1" => Ok(LayerShape::alexnet_conv1(batch)),
        "alexnet-conv3" => Ok(LayerShape::alexnet_conv3(batch)),
        other => Err(ConfigError::Invalid(format!(
            "unknown layer preset `{other}` (expected alexnet-conv1 or alexnet-conv3)"
        ))),
    }
}

impl LayerSpec {
    pub fn resolve(&self) -> std::result::Result<LayerShape, ConfigError> {
        match self {
            LayerSpec::Preset { preset, batch } => {
                let b = batch.unwrap_or(DEFAULT_BATCH);
                if b == 0 {
                    return Err(ConfigError::Invalid("batch must be at least 1".into()));
                }
                layer_preset(preset, b)
            }
            LayerSpec::Shape(s) => {
                s.validate()?;
                Ok(*s)
            }
        }
    }
}

/// Tile sizes; unroll factors default to the channel tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSpec {
    pub tb: u32,
    pub tc: u32,
    pub tm: u32,
    pub te: u32,
    pub tf: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub um: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uc: Option<u32>,
}

impl TileSpec {
    pub fn resolve(&self) -> TileConfig {
        TileConfig {
            tb: self.tb,
            tc: self.tc,
            tm: self.tm,
            te: self.te,
            tf: self.tf,
            um: self.um.unwrap_or(self.tm),
            uc: self.uc.unwrap_or(self.tc),
        }
    }
}

impl From<TileConfig> for TileSpec {
    fn from(t: TileConfig) -> Self {
        let constrained = t.is_constrained();
        TileSpec {
            tb: t.tb,
            tc: t.tc,
            tm: t.tm,
            te: t.te,
            tf: t.tf,
            um: (!constrained).then_some(t.um),
            uc: (!constrained).then_some(t.uc),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSettings {
    /// Directory for reports and traces; `TILESIM_OUT_DIR` overrides it.
    pub dir: Option<PathBuf>,
    pub traces: Vec<TraceKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DseSettings {
    pub evaluator: String,
    pub top_fraction: Option<f64>,
    /// Shared `(UM, UC)` candidates for multi-layer search.
    pub unrolls: Vec<(u32, u32)>,
    pub mode: TilingMode,
    /// Budgets for the frontier; empty means a logarithmic grid.
    pub budgets: Vec<u64>,
}

impl Default for DseSettings {
    fn default() -> Self {
        Self {
            evaluator: "estimate".into(),
            top_fraction: None,
            unrolls: vec![(16, 8), (32, 4), (64, 2), (42, 3), (21, 6), (128, 1)],
            mode: TilingMode::Constrained,
            budgets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sram_budget: Option<u64>,
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<TileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<DesignSpace>,
    #[serde(default)]
    pub bus: crate::bus::BusConfig,
    #[serde(default)]
    pub dram: crate::dram::DramConfig,
    #[serde(default)]
    pub accelerator: crate::accelerator::AcceleratorConfig,
    #[serde(default)]
    pub output: OutputSettings,
    #[serde(default)]
    pub dse: DseSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl RunConfig {
    /// AlexNet conv3 at batch 3 with the 18-point reference space and a
    /// 6-row tile.
    pub fn reference() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            sram_budget: None,
            layers: vec![LayerSpec::Preset { preset: "alexnet-conv3".into(), batch: Some(DEFAULT_BATCH) }],
            tile: Some(TileConfig::constrained(1, 2, 64, 6, 13).into()),
            space: Some(DesignSpace::reference()),
            bus: Default::default(),
            dram: Default::default(),
            accelerator: Default::default(),
            output: Default::default(),
            dse: Default::default(),
        }
    }

    /// Named built-in configurations.
    pub fn preset(name: &str) -> std::result::Result<Self, ConfigError> {
        let mut c = Self::reference();
        match name {
            "reference" => {}
            "extended" => {
                c.layers = vec![LayerSpec::Preset { preset: "alexnet-conv3".into(), batch: Some(1) }];
                c.space = Some(DesignSpace::extended());
            }
            "two-layer" => {
                c.layers = vec![
                    LayerSpec::Preset { preset: "alexnet-conv1".into(), batch: Some(1) },
                    LayerSpec::Preset { preset: "alexnet-conv3".into(), batch: Some(1) },
                ];
                c.tile = None;
                c.space = Some(DesignSpace {
                    tb: vec![1],
                    tc: vec![1, 2, 3, 4, 8, 16],
                    tm: vec![8, 16, 32, 64, 96],
                    te: vec![5, 7, 11, 13],
                    tf: vec![13, 55],
                    pairs: Vec::new(),
                    mac_budget: None,
                    divisibility: false,
                });
                c.sram_budget = Some(200_000);
            }
            other => return Err(ConfigError::Invalid(format!("unknown preset `{other}`"))),
        }
        Ok(c)
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, ConfigError> {
        let c: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_toml(&text)?)
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.layers.is_empty() {
            return Err(ConfigError::Invalid("at least one layer is required".into()));
        }
        for l in &self.layers {
            l.resolve()?;
        }
        if self.sram_budget == Some(0) {
            return Err(ConfigError::Invalid("sram_budget must be positive".into()));
        }
        self.system().validate()
    }

    pub fn layer_shapes(&self) -> std::result::Result<Vec<LayerShape>, ConfigError> {
        self.layers.iter().map(LayerSpec::resolve).collect()
    }

    /// The first layer, which single-layer commands operate on.
    pub fn layer(&self) -> std::result::Result<LayerShape, ConfigError> {
        self.layers.first().ok_or_else(|| ConfigError::Invalid("no layer".into()))?.resolve()
    }

    pub fn require_tile(&self) -> std::result::Result<TileConfig, ConfigError> {
        self.tile.map(|t| t.resolve()).ok_or_else(|| ConfigError::Invalid("this command needs a [tile] table".into()))
    }

    pub fn require_space(&self) -> std::result::Result<&DesignSpace, ConfigError> {
        self.space.as_ref().ok_or_else(|| ConfigError::Invalid("this command needs a [space] table".into()))
    }

    /// System parameters; the run's SRAM budget is not applied here because
    /// design-space searches filter on it themselves.
    pub fn system(&self) -> SystemConfig {
        SystemConfig { bus: self.bus, dram: self.dram, accelerator: self.accelerator }
    }

    /// System parameters for a single-design run, with the budget enforced.
    pub fn system_with_budget(&self) -> SystemConfig {
        let mut s = self.system();
        s.accelerator.sram_budget = self.sram_budget.or(s.accelerator.sram_budget);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips() {
        let c = RunConfig::reference();
        let text = c.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn minimal_file() {
        let c = RunConfig::from_toml(
            "schema_version = 1\n[[layers]]\npreset = \"alexnet-conv3\"\n[tile]\ntb=1\ntc=2\ntm=64\nte=6\ntf=13\n",
        )
        .unwrap();
        assert_eq!(c.layer().unwrap(), LayerShape::alexnet_conv3(DEFAULT_BATCH));
        assert_eq!(c.require_tile().unwrap(), TileConfig::constrained(1, 2, 64, 6, 13));
        assert_eq!(c.system(), SystemConfig::default());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml("schema_version = 2\n[[layers]]\npreset = \"alexnet-conv3\"\n").is_err());
        assert!(RunConfig::from_toml("schema_version = 1\n[[layers]]\npreset = \"vgg\"\n").is_err());
        assert!(RunConfig::from_toml("schema_version = 1\nlayers = []\n").is_err());
        assert!(
            RunConfig::from_toml("schema_version = 1\nbogus = 3\n[[layers]]\npreset = \"alexnet-conv1\"\n").is_err()
        );
    }

    #[test]
    fn presets_resolve() {
        for name in ["reference", "extended", "two-layer"] {
            let c = RunConfig::preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
    }
}
