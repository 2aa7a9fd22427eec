use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffusion::{Prediction, STATE_DIM, TRANSITION_DIM};
use crate::error::{Error, Result};
use crate::rng;

/// Shape-determining description of the temporal residual network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub width: usize,
    pub blocks: usize,
    pub kernel_size: usize,
    pub groups: usize,
    pub embed_dim: usize,
    /// Conv `j` of the network (counting from 0 over all blocks) uses
    /// dilation `growth^(j mod cycle)`.
    pub dilation_growth: usize,
    pub dilation_cycle: usize,
    /// Feed the first and last rows' states to every position as extra
    /// constant input channels, so the conditioning reaches the whole
    /// horizon from the first layer on.
    pub endpoint_channels: bool,
    /// Feed each row's relative position along the horizon, mapped to
    /// [-1, 1], as one more input channel.
    pub time_channel: bool,
    /// Whether the output estimates the noise or the clean grid.
    pub prediction: Prediction,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            width: 32,
            blocks: 3,
            kernel_size: 5,
            groups: 8,
            embed_dim: 32,
            dilation_growth: 2,
            dilation_cycle: 6,
            endpoint_channels: true,
            time_channel: false,
            prediction: Prediction::Epsilon,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(format!("architecture: {m}")));
        if self.width == 0 || self.blocks == 0 {
            return fail("width and blocks must be >= 1");
        }
        if self.kernel_size.is_multiple_of(2) {
            return fail("kernel_size must be odd");
        }
        if self.embed_dim < 2 || !self.embed_dim.is_multiple_of(2) {
            return fail("embed_dim must be even and >= 2");
        }
        if self.group_count() == 0 || !self.width.is_multiple_of(self.group_count()) {
            return fail("width must be divisible by the group count");
        }
        if self.dilation_growth == 0 || self.dilation_cycle == 0 {
            return fail("dilation growth and cycle must be >= 1");
        }
        Ok(())
    }

    /// Channels seen by the input convolution.
    pub fn input_channels(&self) -> usize {
        let endpoints = if self.endpoint_channels { 2 * STATE_DIM } else { 0 };
        TRANSITION_DIM + endpoints + self.time_channel as usize
    }

    /// Group-norm groups, never more than the channel count.
    pub fn group_count(&self) -> usize {
        self.groups.min(self.width)
    }

    pub fn dilation(&self, block: usize, conv: usize) -> usize {
        let j = (2 * block + conv) % self.dilation_cycle;
        self.dilation_growth.pow(j as u32)
    }

    /// Receptive field, in rows, of one output row.
    pub fn receptive_field(&self) -> usize {
        let half = self.kernel_size / 2;
        let mut rf = 1 + 2 * half;
        for b in 0..self.blocks {
            for c in 0..2 {
                rf += 2 * half * self.dilation(b, c);
            }
        }
        rf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn,
    Ones,
    Zeros,
}

/// One named weight grid inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: InitKind,
    pub fan_in: usize,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of each block's grids, resolved once from the layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockOffsets {
    pub conv1_w: usize,
    pub conv1_b: usize,
    pub norm1_scale: usize,
    pub norm1_shift: usize,
    pub time_w: usize,
    pub time_b: usize,
    pub conv2_w: usize,
    pub conv2_b: usize,
    pub norm2_scale: usize,
    pub norm2_shift: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Offsets {
    pub in_w: usize,
    pub in_b: usize,
    pub blocks: Vec<BlockOffsets>,
    pub out_w: usize,
    pub out_b: usize,
}

/// Ordered grid table for an architecture.
pub fn layout(arch: &Architecture) -> Vec<GridSpec> {
    let (w, k, e) = (arch.width, arch.kernel_size, arch.embed_dim);
    let mut specs = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, shape: Vec<usize>, init: InitKind, fan_in: usize| {
        let spec = GridSpec {
            name,
            shape,
            offset,
            init,
            fan_in,
        };
        offset += spec.len();
        specs.push(spec);
    };
    let cin = arch.input_channels();
    push("input.conv.weight".into(), vec![w, cin, k], InitKind::FanIn, cin * k);
    push("input.conv.bias".into(), vec![w], InitKind::FanIn, cin * k);
    for b in 0..arch.blocks {
        push(format!("block{b}.conv1.weight"), vec![w, w, k], InitKind::FanIn, w * k);
        push(format!("block{b}.conv1.bias"), vec![w], InitKind::FanIn, w * k);
        push(format!("block{b}.norm1.scale"), vec![w], InitKind::Ones, 1);
        push(format!("block{b}.norm1.shift"), vec![w], InitKind::Zeros, 1);
        push(format!("block{b}.time.weight"), vec![w, e], InitKind::FanIn, e);
        push(format!("block{b}.time.bias"), vec![w], InitKind::FanIn, e);
        push(format!("block{b}.conv2.weight"), vec![w, w, k], InitKind::FanIn, w * k);
        push(format!("block{b}.conv2.bias"), vec![w], InitKind::FanIn, w * k);
        push(format!("block{b}.norm2.scale"), vec![w], InitKind::Ones, 1);
        push(format!("block{b}.norm2.shift"), vec![w], InitKind::Zeros, 1);
    }
    push("output.conv.weight".into(), vec![TRANSITION_DIM, w, 1], InitKind::Zeros, w);
    push("output.conv.bias".into(), vec![TRANSITION_DIM], InitKind::Zeros, w);
    specs
}

pub(crate) fn offsets(specs: &[GridSpec], blocks: usize) -> Offsets {
    let at = |i: usize| specs[i].offset;
    let per = 10;
    Offsets {
        in_w: at(0),
        in_b: at(1),
        blocks: (0..blocks)
            .map(|b| {
                let base = 2 + b * per;
                BlockOffsets {
                    conv1_w: at(base),
                    conv1_b: at(base + 1),
                    norm1_scale: at(base + 2),
                    norm1_shift: at(base + 3),
                    time_w: at(base + 4),
                    time_b: at(base + 5),
                    conv2_w: at(base + 6),
                    conv2_b: at(base + 7),
                    norm2_scale: at(base + 8),
                    norm2_shift: at(base + 9),
                }
            })
            .collect(),
        out_w: at(2 + blocks * per),
        out_b: at(3 + blocks * per),
    }
}

/// All learnable weights, stored flat in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub arch: Architecture,
    pub phase_tag: u32,
    pub data: Vec<f64>,
    specs: Vec<GridSpec>,
    pub(crate) offsets: Offsets,
}

impl DenoiserParams {
    /// Deterministic fan-in-scaled initialization; the output layer is zero.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let specs = layout(&arch);
        let total = specs.last().map(|s| s.offset + s.len()).unwrap_or(0);
        let mut data = vec![0.0; total];
        for (gi, spec) in specs.iter().enumerate() {
            let mut r = rng::stream(seed, "init", gi as u64);
            let bound = 1.0 / (spec.fan_in as f64).sqrt();
            for v in &mut data[spec.range()] {
                *v = match spec.init {
                    InitKind::FanIn => r.random_range(-bound..bound),
                    InitKind::Ones => 1.0,
                    InitKind::Zeros => 0.0,
                };
            }
        }
        Self::from_parts(arch, 0, data)
    }

    pub fn from_parts(arch: Architecture, phase_tag: u32, data: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let specs = layout(&arch);
        let total = specs.last().map(|s| s.offset + s.len()).unwrap_or(0);
        if data.len() != total {
            return Err(Error::shape(format!("{total} parameters"), data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite parameter".into()));
        }
        let offsets = offsets(&specs, arch.blocks);
        Ok(Self {
            arch,
            phase_tag,
            data,
            specs,
            offsets,
        })
    }

    pub fn specs(&self) -> &[GridSpec] {
        &self.specs
    }

    pub fn grid(&self, name: &str) -> Option<&[f64]> {
        self.specs
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.data[s.range()])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let a = DenoiserParams::init(Architecture::default(), 5).unwrap();
        let b = DenoiserParams::init(Architecture::default(), 5).unwrap();
        let c = DenoiserParams::init(Architecture::default(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let arch = Architecture::default();
        let p = DenoiserParams::init(arch, 1).unwrap();
        // Recomputed independently of the layout table's fan_in field.
        let conv_bound = 1.0 / ((arch.width * arch.kernel_size) as f64).sqrt();
        let input_bound = 1.0 / ((6 * arch.kernel_size) as f64).sqrt();
        let time_bound = 1.0 / (arch.embed_dim as f64).sqrt();
        let w = p.grid("block1.conv2.weight").unwrap();
        assert_eq!(w.len(), arch.width * arch.width * arch.kernel_size);
        assert!(w.iter().all(|v| v.abs() <= conv_bound));
        assert!(w.iter().any(|v| v.abs() > 0.9 * conv_bound));
        assert!(p.grid("input.conv.weight").unwrap().iter().all(|v| v.abs() <= input_bound));
        assert!(p.grid("block0.time.weight").unwrap().iter().all(|v| v.abs() <= time_bound));
        assert!(p.grid("block2.norm1.scale").unwrap().iter().all(|&v| v == 1.0));
        assert!(p.grid("output.conv.weight").unwrap().iter().all(|&v| v == 0.0));
        assert!(p.grid("output.conv.bias").unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn architecture_validation() {
        let bad = Architecture { kernel_size: 4, ..Architecture::default() };
        assert!(DenoiserParams::init(bad, 0).is_err());
        let bad = Architecture { width: 12, groups: 8, ..Architecture::default() };
        assert!(bad.validate().is_err());
        let small = Architecture { width: 4, groups: 8, ..Architecture::default() };
        assert_eq!(small.group_count(), 4);
        assert!(small.validate().is_ok());
    }

    #[test]
    fn receptive_field_of_default() {
        // kernel 5, dilations 1..32 over six convs, plus the input conv.
        assert_eq!(Architecture::default().receptive_field(), 5 + 4 * 63);
    }
}
