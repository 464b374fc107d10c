use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::spp_width;

/// Which streams and multi-scale blocks the network contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Both streams, SPP on each, feature pyramid on the distorted stream.
    Full,
    /// Distorted-image stream only.
    DistortedOnly,
    /// Residual-map stream only.
    ResidualOnly,
    /// Both streams with concatenated SPP features, no feature pyramid.
    DirectConcat,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::DistortedOnly,
        Variant::ResidualOnly,
        Variant::DirectConcat,
    ];

    pub fn has_distorted(self) -> bool {
        !matches!(self, Variant::ResidualOnly)
    }

    pub fn has_residual(self) -> bool {
        !matches!(self, Variant::DistortedOnly)
    }

    pub fn has_fpn(self) -> bool {
        matches!(self, Variant::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::DistortedOnly => "distorted_only",
            Variant::ResidualOnly => "residual_only",
            Variant::DirectConcat => "direct_concat",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture description. Defaults are the full-size network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Kernel counts of the five 3x3 convolutions per stream.
    pub conv_channels: Vec<usize>,
    /// Output sizes of the fully connected head; the last must be 1.
    pub fc_sizes: Vec<usize>,
    /// Optional assertion on the head input width; rejected if it disagrees with the architecture.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fc_input: Option<usize>,
    pub elu_alpha: f64,
    pub seed: u64,
    /// Square patch side fed to each stream.
    pub patch_size: usize,
    pub spp_bins: Vec<usize>,
    pub fpn_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            conv_channels: vec![8, 8, 16, 16, 32],
            fc_sizes: vec![2048, 1024, 1],
            fc_input: None,
            elu_alpha: 1.0,
            seed: 0,
            patch_size: 128,
            spp_bins: vec![1, 2, 4, 8],
            fpn_channels: 32,
        }
    }
}

/// Number of 2x2 max-pools per stream (after conv1..conv4).
pub const POOLED_BLOCKS: usize = 4;

impl ModelConfig {
    /// Small network for fast gradient checks and overfitting runs.
    pub fn slim() -> Self {
        Self {
            conv_channels: vec![2, 2, 2, 2, 4],
            fc_sizes: vec![16, 8, 1],
            patch_size: 64,
            spp_bins: vec![1, 2, 4],
            fpn_channels: 4,
            ..Self::default()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Side of the conv5 map that feeds spatial pyramid pooling.
    pub fn top_map_size(&self) -> usize {
        self.patch_size >> POOLED_BLOCKS
    }

    pub fn stream_count(&self) -> usize {
        self.variant.has_distorted() as usize + self.variant.has_residual() as usize
    }

    /// Width of the first fully connected layer's input.
    pub fn head_input_width(&self) -> usize {
        let spp = spp_width(&self.spp_bins, self.conv_channels[4]) * self.stream_count();
        let fpn = if self.variant.has_fpn() {
            3 * self.fpn_channels
        } else {
            0
        };
        spp + fpn
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.conv_channels.len() != 5 || self.conv_channels.contains(&0) {
            return bad(format!(
                "conv_channels must list 5 positive counts, got {:?}",
                self.conv_channels
            ));
        }
        if self.fc_sizes.last() != Some(&1) || self.fc_sizes.contains(&0) {
            return bad(format!(
                "fc_sizes must be positive and end in 1, got {:?}",
                self.fc_sizes
            ));
        }
        if !(self.elu_alpha > 0.0 && self.elu_alpha.is_finite()) {
            return bad(format!("elu_alpha must be positive, got {}", self.elu_alpha));
        }
        let pool_factor = 1 << POOLED_BLOCKS;
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(pool_factor) {
            return bad(format!(
                "patch_size {} must be a positive multiple of {pool_factor}",
                self.patch_size
            ));
        }
        let top = self.top_map_size();
        if self.spp_bins.is_empty() || self.spp_bins.iter().any(|&b| b == 0 || !top.is_multiple_of(b)) {
            return bad(format!(
                "spp_bins {:?} must all divide the {top}x{top} conv5 map",
                self.spp_bins
            ));
        }
        if self.variant.has_fpn() && self.fpn_channels == 0 {
            return bad("fpn_channels must be positive".into());
        }
        if let Some(width) = self.fc_input {
            let computed = self.head_input_width();
            if width != computed {
                return bad(format!(
                    "fc_input {width} disagrees with the architecture's head input width {computed}"
                ));
            }
        }
        Ok(())
    }
}
