use crate::autodiff::ConvGeometry;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One convolution layer, optionally followed by max pooling.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub stride: usize,
    pub pool_after: bool,
}

impl ConvLayer {
    fn same(out_channels: usize, pool_after: bool) -> Self {
        Self {
            out_channels,
            kernel: 3,
            padding: 1,
            stride: 1,
            pool_after,
        }
    }

    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            stride: self.stride,
            padding: self.padding,
        }
    }
}

/// Layer layout of the convolutional embedding network.
///
/// The input is treated as a single-channel sequence. Every convolution is
/// followed by a ReLU, selected layers by non-overlapping max pooling, and the
/// flattened result is mapped to the embedding by a bias-free linear layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub conv: Vec<ConvLayer>,
    pub pool_window: usize,
    pub embedding_dim: usize,
}

/// Shapes the schedule produces for a given input length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchedulePlan {
    /// `(channels, length)` after each convolution (and its pool, if any).
    pub layer_outputs: Vec<(usize, usize)>,
    pub flat_dim: usize,
}

impl Default for LayerSchedule {
    fn default() -> Self {
        Self::with_widths([32, 32, 64, 64, 128, 128])
    }
}

impl LayerSchedule {
    /// Six `k=3, pad=1` convolutions with pooling after the 2nd, 4th and 6th.
    pub fn with_widths(widths: [usize; 6]) -> Self {
        let conv = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| ConvLayer::same(w, i % 2 == 1))
            .collect();
        Self {
            conv,
            pool_window: 2,
            embedding_dim: 128,
        }
    }

    /// Standard topology with channel widths `base, base, 2·base, 2·base, 4·base, 4·base`.
    pub fn scaled(base: usize) -> Self {
        Self::with_widths([base, base, 2 * base, 2 * base, 4 * base, 4 * base])
    }

    pub fn pool_count(&self) -> usize {
        self.conv.iter().filter(|c| c.pool_after).count()
    }

    /// Adapts the schedule to short inputs: a pool that would see fewer
    /// samples than its window is replaced by striding the preceding
    /// convolution, and dropped entirely once the sequence is a single sample.
    pub fn adapted_to(&self, input_len: usize) -> Self {
        let mut out = self.clone();
        let mut len = input_len;
        for layer in &mut out.conv {
            if let Some(l) = layer.geometry().output_len(len, layer.kernel) {
                len = l;
            }
            if layer.pool_after && len < self.pool_window {
                layer.pool_after = false;
                if len > 1 {
                    layer.stride = self.pool_window;
                    len = layer.geometry().output_len(len, layer.kernel).unwrap_or(len);
                }
            } else if layer.pool_after {
                len /= self.pool_window;
            }
        }
        out
    }

    /// Validates the schedule against an input length and reports shapes.
    pub fn plan(&self, input_len: usize) -> Result<SchedulePlan> {
        if input_len == 0 {
            return Err(Error::Config("network input length must be positive".into()));
        }
        if self.conv.is_empty() || self.embedding_dim == 0 || self.pool_window == 0 {
            return Err(Error::Config(
                "schedule needs at least one convolution, a positive pool window and embedding size".into(),
            ));
        }
        let mut channels = 1;
        let mut len = input_len;
        let mut layer_outputs = Vec::with_capacity(self.conv.len());
        for (i, layer) in self.conv.iter().enumerate() {
            if layer.out_channels == 0 || layer.kernel == 0 || layer.stride == 0 {
                return Err(Error::Config(format!("conv layer {i} has a zero dimension")));
            }
            len = layer.geometry().output_len(len, layer.kernel).ok_or_else(|| {
                Error::Config(format!(
                    "conv layer {i} (kernel {}) does not fit sequence length {len}",
                    layer.kernel
                ))
            })?;
            channels = layer.out_channels;
            if layer.pool_after {
                if len < self.pool_window {
                    return Err(Error::Config(format!(
                        "pool after conv layer {i} needs length {} but sequence has {len}",
                        self.pool_window
                    )));
                }
                len /= self.pool_window;
            }
            layer_outputs.push((channels, len));
        }
        Ok(SchedulePlan {
            layer_outputs,
            flat_dim: channels * len,
        })
    }
}
