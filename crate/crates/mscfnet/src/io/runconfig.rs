//! Plain-text key=value run configuration. `#` starts a comment, blank
//! lines are skipped, unknown keys are rejected. An optional `preset` key
//! picks the base configuration; later keys override individual fields.

use crate::error::{Error, Result};
use crate::layers::AttentionKind;
use crate::network::{canonical_config, preset, BranchLevels, FusionMode, NetworkConfig};
use crate::train::{OptimConfig, OptimizerKind};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub optimizer: OptimizerKind,
    pub lr_base: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: canonical_config(),
            optimizer: OptimizerKind::Adam,
            lr_base: 1e-3,
            momentum: 0.9,
            weight_decay: 2e-4,
            epochs: 30,
            batch_size: 8,
        }
    }
}

impl RunConfig {
    pub fn optim_config(&self) -> OptimConfig {
        let mut cfg = match self.optimizer {
            OptimizerKind::SgdMomentum => OptimConfig::sgd(self.lr_base, self.weight_decay),
            OptimizerKind::Adam => OptimConfig::adam(self.lr_base, self.weight_decay),
        };
        cfg.momentum = self.momentum;
        cfg
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let bad = |message: String| Error::BadRunConfig {
                line: line_no,
                message,
            };
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(bad(format!("expected key=value, got `{line}`")));
            };
            let key = key.trim();
            let value = value.trim();
            match key {
                "preset" => {
                    cfg.network = preset(value)
                        .map_err(|e| bad(e.to_string()))?;
                }
                "num_classes" => cfg.network.num_classes = parse_num(value, line_no)?,
                "stage_widths" => {
                    let v = parse_list(value, line_no)?;
                    if v.len() != 3 {
                        return Err(bad("stage_widths needs three values".into()));
                    }
                    cfg.network.stage_widths = (v[0], v[1], v[2]);
                }
                "ear_counts" => {
                    let v = parse_list(value, line_no)?;
                    if v.len() != 2 {
                        return Err(bad("ear_counts needs two values".into()));
                    }
                    cfg.network.ear_counts = (v[0], v[1]);
                }
                "dilation_schedule_1" => {
                    cfg.network.dilation_schedule_1 = parse_list(value, line_no)?
                }
                "dilation_schedule_2" => {
                    cfg.network.dilation_schedule_2 = parse_list(value, line_no)?
                }
                "attention" => {
                    cfg.network.attention = match value {
                        "eca" => AttentionKind::Eca,
                        "se" => AttentionKind::Se,
                        "none" => AttentionKind::None,
                        other => return Err(bad(format!("unknown attention `{other}`"))),
                    }
                }
                "spatial_attention" => {
                    cfg.network.spatial_attention = parse_switch(value, line_no)?
                }
                "fusion" => {
                    cfg.network.fusion = match value {
                        "add" => FusionMode::Add,
                        "concat" => FusionMode::Concat,
                        "none" => FusionMode::None,
                        other => return Err(bad(format!("unknown fusion `{other}`"))),
                    }
                }
                "branch_levels" => {
                    let mut levels = BranchLevels {
                        low: false,
                        mid: false,
                        high: false,
                    };
                    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        match part {
                            "low" => levels.low = true,
                            "mid" => levels.mid = true,
                            "high" => levels.high = true,
                            other => return Err(bad(format!("unknown branch level `{other}`"))),
                        }
                    }
                    cfg.network.branch_levels = levels;
                }
                "branch_width" => cfg.network.branch_width = parse_num(value, line_no)?,
                "optimizer" => {
                    cfg.optimizer = match value {
                        "sgd" => OptimizerKind::SgdMomentum,
                        "adam" => OptimizerKind::Adam,
                        other => return Err(bad(format!("unknown optimizer `{other}`"))),
                    }
                }
                "lr_base" => cfg.lr_base = parse_float(value, line_no)?,
                "momentum" => cfg.momentum = parse_float(value, line_no)?,
                "weight_decay" => cfg.weight_decay = parse_float(value, line_no)?,
                "epochs" => cfg.epochs = parse_num(value, line_no)?,
                "batch_size" => cfg.batch_size = parse_num(value, line_no)?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        cfg.network.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }
}

fn parse_num(value: &str, line: usize) -> Result<usize> {
    value.parse().map_err(|_| Error::BadRunConfig {
        line,
        message: format!("expected an integer, got `{value}`"),
    })
}

fn parse_float(value: &str, line: usize) -> Result<f64> {
    value.parse().map_err(|_| Error::BadRunConfig {
        line,
        message: format!("expected a number, got `{value}`"),
    })
}

fn parse_switch(value: &str, line: usize) -> Result<bool> {
    match value {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(Error::BadRunConfig {
            line,
            message: format!("expected on/off, got `{other}`"),
        }),
    }
}

fn parse_list(value: &str, line: usize) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(s, line))
        .collect()
}
