use serde::{Deserialize, Serialize};

use super::CorrError;
use crate::tensornet::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    P2p,
    C2c,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::P2p => "p2p",
            Task::C2c => "c2c",
        }
    }

    /// Scalars emitted per query by the head.
    pub fn output_dim(self) -> usize {
        match self {
            Task::P2p => 2,
            Task::C2c => 8,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = CorrError;
    fn from_str(s: &str) -> Result<Self, CorrError> {
        match s {
            "p2p" => Ok(Task::P2p),
            "c2c" => Ok(Task::C2c),
            other => Err(CorrError::InvalidConfig(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Square input image size in pixels.
    pub input_size: usize,
    /// Per-image feature map (rows, columns); the canvas is twice as wide.
    pub feature_hw: (usize, usize),
    pub channels: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub head_mlp_layers: usize,
    /// Hidden width of the transformer feed-forward blocks.
    pub ffn_dim: usize,
    pub task: Task,
    /// Points per waypoint; used by the curve task only.
    pub waypoint_n: usize,
}

impl ModelConfig {
    pub fn toy(task: Task) -> Self {
        Self {
            input_size: 128,
            feature_hw: (16, 16),
            channels: 64,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            head_mlp_layers: 3,
            ffn_dim: 128,
            task,
            waypoint_n: if task == Task::C2c { 10 } else { 0 },
        }
    }

    pub fn paper(task: Task) -> Self {
        Self {
            input_size: 320,
            channels: 256,
            encoder_layers: 6,
            decoder_layers: 6,
            heads: 8,
            ffn_dim: 2048,
            ..Self::toy(task)
        }
    }

    pub fn with_waypoint_n(mut self, n: usize) -> Self {
        self.waypoint_n = n;
        self
    }

    /// Channel widths of the five convolutional encoder blocks.
    pub fn backbone_widths(&self) -> [usize; 5] {
        let c = self.channels;
        [16.min(c), 32.min(c), c, c, c]
    }

    /// Side length after the three stride-2 blocks.
    pub fn backbone_output(&self) -> usize {
        let mut s = self.input_size;
        for _ in 0..3 {
            s = (s + 2 - 3) / 2 + 1;
        }
        s
    }

    pub fn tokens(&self) -> usize {
        self.feature_hw.0 * self.feature_hw.1 * 2
    }

    pub fn validate(&self) -> Result<(), CorrError> {
        let err = |m: String| Err(CorrError::InvalidConfig(m));
        if self.channels == 0 || self.channels % 4 != 0 {
            return err(format!("channels {} must be a positive multiple of 4", self.channels));
        }
        if self.heads == 0 || self.channels % self.heads != 0 {
            return err(format!("channels {} not divisible by {} heads", self.channels, self.heads));
        }
        if self.head_mlp_layers == 0 || self.ffn_dim == 0 {
            return err("head and feed-forward sizes must be positive".into());
        }
        let s = self.backbone_output();
        if self.feature_hw.0 == 0 || self.feature_hw.1 == 0 || self.feature_hw.0 > s || self.feature_hw.1 > s {
            return err(format!(
                "input {} gives a {s}x{s} feature map, smaller than {:?}",
                self.input_size, self.feature_hw
            ));
        }
        match self.task {
            Task::C2c if self.waypoint_n < 4 => err(format!("waypoint size {} below 4", self.waypoint_n)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the cycle term.
    pub lambda_cycle: f64,
    /// Weight of the control-point term in the curve objective.
    pub lambda_sup: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda_cycle: 1.0, lambda_sup: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    /// Point queries or waypoints per step.
    pub queries: usize,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { seed: 0, steps: 1000, queries: 100, adam: AdamConfig::default(), loss: LossConfig::default(), log_every: 50 }
    }
}
