use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blocks::{BlockSpec, BlockVariant, HeadKind, HeadSpec};
use crate::error::{config_err, Error, Result};

/// Environment variable naming an extra directory searched for configs.
pub const CONFIG_DIR_ENV: &str = "BHRNET_CONFIG_DIR";

/// Names of the built-in configurations.
pub const PRESETS: [&str; 3] = ["hrnet-32", "bhrnet-32", "bhrnet-25"];

/// Block variant shared by every block of a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockTemplate {
    pub variant: BlockVariant,
    #[serde(default = "default_expansion")]
    pub expansion: usize,
    pub num_dw: usize,
}

fn default_expansion() -> usize {
    6
}

impl BlockTemplate {
    pub fn dir() -> Self {
        Self { variant: BlockVariant::Dir, expansion: 6, num_dw: 2 }
    }

    pub fn ir() -> Self {
        Self { variant: BlockVariant::Ir, expansion: 6, num_dw: 1 }
    }

    pub fn spec(&self, channels: usize) -> BlockSpec {
        BlockSpec {
            variant: self.variant,
            in_channels: channels,
            out_channels: channels,
            stride: 1,
            expansion: self.expansion,
            num_dw: self.num_dw,
        }
    }
}

/// One stage: per-branch channel and block counts, highest resolution first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub channels: Vec<usize>,
    pub blocks: Vec<usize>,
    pub block: BlockTemplate,
}

/// Two stride-2 3×3 convolutions taking the RGB input to 1/4 resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemSpec {
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    pub channels: usize,
}

fn default_in_channels() -> usize {
    3
}

/// Declarative description of a full multi-branch network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// Channel count of the highest-resolution branch.
    pub width: usize,
    pub num_stages: usize,
    pub stem: StemSpec,
    pub stages: Vec<StageConfig>,
    pub head: HeadSpec,
}

impl NetworkSpec {
    /// Equal block counts everywhere, channels doubling per branch.
    pub fn hrnet(width: usize) -> Self {
        Self::multi_branch(format!("hrnet-{width}"), width, |_| 2)
    }

    /// Block counts growing by one per lower-resolution branch.
    pub fn bhrnet(width: usize) -> Self {
        Self::multi_branch(format!("bhrnet-{width}"), width, |branch| branch + 1)
    }

    fn multi_branch(name: String, width: usize, blocks: impl Fn(usize) -> usize) -> Self {
        let stages = (0..4)
            .map(|s| StageConfig {
                channels: (0..=s).map(|b| width << b).collect(),
                blocks: (0..=s).map(&blocks).collect(),
                block: BlockTemplate::dir(),
            })
            .collect();
        Self {
            name,
            width,
            num_stages: 4,
            stem: StemSpec { in_channels: 3, channels: width },
            stages,
            head: HeadSpec { kind: HeadKind::Higher, num_keypoints: 17 },
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "hrnet-32" => Some(Self::hrnet(32)),
            "bhrnet-32" => Some(Self::bhrnet(32)),
            "bhrnet-25" => Some(Self::bhrnet(25)),
            _ => None,
        }
    }

    pub fn with_head(mut self, kind: HeadKind, num_keypoints: usize) -> Self {
        self.head = HeadSpec { kind, num_keypoints };
        self
    }

    /// Same network with every block replaced by `template`.
    pub fn with_block(mut self, template: BlockTemplate) -> Self {
        for s in &mut self.stages {
            s.block = template;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_stages == 0 || self.stages.len() != self.num_stages {
            return config_err(format!("{} stage configs for num_stages {}", self.stages.len(), self.num_stages));
        }
        if self.stem.in_channels == 0 || self.stem.channels == 0 {
            return config_err("stem channels must be positive");
        }
        for (s, stage) in self.stages.iter().enumerate() {
            if stage.channels.len() != s + 1 || stage.blocks.len() != s + 1 {
                return config_err(format!(
                    "stage {} must have {} branches, got {} channel and {} block entries",
                    s + 1,
                    s + 1,
                    stage.channels.len(),
                    stage.blocks.len()
                ));
            }
            if stage.channels.iter().chain(&stage.blocks).any(|&v| v == 0) {
                return config_err(format!("stage {} has a zero channel or block count", s + 1));
            }
            for &c in &stage.channels {
                stage.block.spec(c).validate()?;
            }
        }
        if self.stages[0].channels[0] != self.width {
            return config_err(format!(
                "width {} differs from the first branch's {} channels",
                self.width, self.stages[0].channels[0]
            ));
        }
        if self.head.num_keypoints == 0 {
            return config_err("head needs at least one keypoint type");
        }
        Ok(())
    }

    /// Input extents must be divisible by this.
    pub fn input_multiple(&self) -> usize {
        1 << (self.num_stages + 1)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Resolves a config argument: an existing file path, then
    /// `$BHRNET_CONFIG_DIR/<name>[.json]`, then a built-in preset.
    pub fn resolve(name: &str) -> Result<Self> {
        let direct = PathBuf::from(name);
        if direct.is_file() {
            return Self::load(direct);
        }
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            let dir = PathBuf::from(dir);
            for candidate in [dir.join(name), dir.join(format!("{name}.json"))] {
                if candidate.is_file() {
                    return Self::load(candidate);
                }
            }
        }
        Self::preset(name).ok_or_else(|| {
            Error::Config(format!("no config file or preset named {name:?} (presets: {})", PRESETS.join(", ")))
        })
    }
}

/// Block counts that equalise per-branch cost: `n_i = ceil(max_j c_j / c_i)`.
///
/// Each branch total `n_i * c_i` then lies in `[B, B + c_i)` where `B` is the
/// largest per-block cost.
pub fn balance_block_counts(per_block_cost: &[u64]) -> Result<Vec<usize>> {
    if per_block_cost.is_empty() || per_block_cost.contains(&0) {
        return config_err("block costs must be a non-empty list of positive values");
    }
    let budget = *per_block_cost.iter().max().expect("non-empty");
    Ok(per_block_cost.iter().map(|&c| budget.div_ceil(c) as usize).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balancing_examples() {
        assert_eq!(balance_block_counts(&[4, 4, 4]).unwrap(), vec![1, 1, 1]);
        assert_eq!(balance_block_counts(&[4, 2, 1]).unwrap(), vec![1, 2, 4]);
        assert_eq!(balance_block_counts(&[10, 3]).unwrap(), vec![1, 4]);
        assert!(balance_block_counts(&[]).is_err());
        assert!(balance_block_counts(&[3, 0]).is_err());
    }

    #[test]
    fn hrnet_preset_matches_table() {
        let spec = NetworkSpec::preset("hrnet-32").unwrap();
        spec.validate().unwrap();
        let last = &spec.stages[3];
        assert_eq!(last.channels, vec![32, 64, 128, 256]);
        assert!(spec.stages.iter().all(|s| s.blocks.iter().all(|&b| b == 2)));
    }

    #[test]
    fn bhrnet_preset_block_counts() {
        let spec = NetworkSpec::preset("bhrnet-32").unwrap();
        spec.validate().unwrap();
        let counts: Vec<_> = spec.stages.iter().map(|s| s.blocks.clone()).collect();
        assert_eq!(counts, vec![vec![1], vec![1, 2], vec![1, 2, 3], vec![1, 2, 3, 4]]);
        assert_eq!(spec.stages[2].channels, vec![32, 64, 128]);
        assert_eq!(NetworkSpec::preset("bhrnet-25").unwrap().stages[3].channels, vec![25, 50, 100, 200]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = NetworkSpec::hrnet(8);
        s.stages[1].blocks.pop();
        assert!(s.validate().is_err());
        let mut s = NetworkSpec::hrnet(8);
        s.width = 9;
        assert!(s.validate().is_err());
        let mut s = NetworkSpec::hrnet(8);
        s.stages[2].channels[1] = 0;
        assert!(s.validate().is_err());
        let mut s = NetworkSpec::hrnet(8);
        s.num_stages = 3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let spec = NetworkSpec::bhrnet(25);
        assert_eq!(NetworkSpec::from_json(&spec.to_json().unwrap()).unwrap(), spec);
        let text = r#"{"name":"toy","width":4,"num_stages":1,"stem":{"channels":4},
            "stages":[{"channels":[4],"blocks":[1],"block":{"variant":"dir","num_dw":2}}],
            "head":{"kind":"single-conv","num_keypoints":2}}"#;
        let toy = NetworkSpec::from_json(text).unwrap();
        assert_eq!(toy.stem.in_channels, 3);
        assert_eq!(toy.stages[0].block.expansion, 6);
    }
}
