use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSize {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of anomaly types `M`; also the output channel count. `M = 1`
    /// gives the single-heatmap (anomaly-as-one-class) mode.
    pub num_types: usize,
    pub input_size: InputSize,
    /// Downsampling stages in the backbone (2, 3 or 4).
    pub backbone_stages: usize,
    /// Filters in the first backbone stage; doubled at every further stage.
    pub backbone_width: usize,
    /// 3×3 conv + BN + ReLU blocks in the head (1, 2 or 3).
    pub head_blocks: usize,
    pub head_filters: usize,
    /// Bias on the final 1×1 layer. Off by default so that a zero feature
    /// map yields a zero heatmap.
    pub head_bias: bool,
    /// Exclude backbone weights from optimisation.
    pub freeze_backbone: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_types: 3,
            input_size: InputSize {
                height: 64,
                width: 64,
                channels: 1,
            },
            backbone_stages: 3,
            backbone_width: 32,
            head_blocks: 2,
            head_filters: 128,
            head_bias: false,
            freeze_backbone: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_types == 0 {
            return bad("num_types must be at least 1".into());
        }
        if !(2..=4).contains(&self.backbone_stages) {
            return bad(format!(
                "backbone_stages must be 2, 3 or 4, got {}",
                self.backbone_stages
            ));
        }
        if !(1..=3).contains(&self.head_blocks) {
            return bad(format!(
                "head_blocks must be 1, 2 or 3, got {}",
                self.head_blocks
            ));
        }
        if self.head_filters == 0 || self.backbone_width == 0 || self.input_size.channels == 0 {
            return bad("filter and channel counts must be positive".into());
        }
        let f = self.downsample_factor();
        let InputSize { height, width, .. } = self.input_size;
        if height == 0 || width == 0 || height % f != 0 || width % f != 0 {
            return bad(format!(
                "input size {height}x{width} is not divisible by 2^{} = {f}",
                self.backbone_stages
            ));
        }
        Ok(())
    }

    pub fn downsample_factor(&self) -> usize {
        1 << self.backbone_stages
    }

    /// Heatmap extents `(u, v)`.
    pub fn output_size(&self) -> (usize, usize) {
        let f = self.downsample_factor();
        (self.input_size.height / f, self.input_size.width / f)
    }
}
