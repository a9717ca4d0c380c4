use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Binary (sigmoid over one logit) or multiclass (softmax over `classes`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Binary,
    Multiclass { classes: usize },
}

impl Mode {
    /// Width of each sub-network head.
    pub fn head_width(self) -> usize {
        match self {
            Mode::Binary => 1,
            Mode::Multiclass { classes } => classes,
        }
    }

    pub fn class_count(self) -> usize {
        match self {
            Mode::Binary => 2,
            Mode::Multiclass { classes } => classes,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Binary => f.write_str("binary"),
            Mode::Multiclass { classes } => write!(f, "multiclass:{classes}"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Mode::Binary),
            _ => {
                let n = s
                    .strip_prefix("multiclass:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown mode `{s}`")))?;
                if n < 2 {
                    return Err(Error::config("multiclass mode needs at least 2 classes"));
                }
                Ok(Mode::Multiclass { classes: n })
            }
        }
    }
}

/// Sub-network topology shared by every ensemble member.
///
/// Each block is `conv_count` convolutions (ReLU) of `depth` channels,
/// followed by 2×2 max pooling and batch normalization. The extractor ends
/// with a ReLU dense layer of `fc_width` units.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub preset: String,
    /// `(conv_count, depth)` per block.
    pub blocks: Vec<(usize, usize)>,
    pub kernel_size: usize,
    pub fc_width: usize,
    pub input_side: usize,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl ArchConfig {
    /// Laptop-scale variant: same topology as `base_i`, depths divided by 8.
    pub fn desk() -> Self {
        Self {
            preset: "desk".into(),
            blocks: vec![(2, 8), (2, 16), (3, 32)],
            kernel_size: 3,
            fc_width: 32,
            input_side: 64,
            bn_momentum: 0.9,
            bn_epsilon: 1e-5,
        }
    }

    /// Three blocks of depth 64, 128 and 256 with 3×3 kernels.
    pub fn base_i() -> Self {
        Self {
            preset: "base_i".into(),
            blocks: vec![(2, 64), (2, 128), (3, 256)],
            kernel_size: 3,
            fc_width: 128,
            input_side: 128,
            bn_momentum: 0.9,
            bn_epsilon: 1e-5,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "base_i" => Ok(Self::base_i()),
            other => Err(Error::config(format!("unknown architecture preset `{other}`"))),
        }
    }

    pub fn conv_layers(&self) -> usize {
        self.blocks.iter().map(|b| b.0).sum()
    }

    /// Spatial side after all pooling stages.
    pub fn final_side(&self) -> usize {
        self.blocks
            .iter()
            .fold(self.input_side, |s, _| s.div_ceil(2))
    }

    pub fn flat_features(&self) -> usize {
        let depth = self.blocks.last().map_or(0, |b| b.1);
        depth * self.final_side() * self.final_side()
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::config("architecture needs at least one block"));
        }
        if self.blocks.iter().any(|&(n, d)| n == 0 || d == 0) {
            return Err(Error::config("every block needs a positive conv count and depth"));
        }
        if self.kernel_size < 3 || self.kernel_size % 2 == 0 {
            return Err(Error::config(format!(
                "kernel size must be odd and at least 3, got {}",
                self.kernel_size
            )));
        }
        if self.fc_width == 0 {
            return Err(Error::config("fc_width must be positive"));
        }
        if self.input_side < 8 {
            return Err(Error::config("input side must be at least 8"));
        }
        if !(self.bn_epsilon > 0.0) || !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::config("batchnorm epsilon must be > 0 and momentum in [0, 1)"));
        }
        Ok(())
    }

    /// Compact `2x8,2x16,3x32` rendering of the block list.
    pub fn blocks_string(&self) -> String {
        self.blocks
            .iter()
            .map(|(n, d)| format!("{n}x{d}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_blocks(s: &str) -> Result<Vec<(usize, usize)>> {
        s.split(',')
            .map(|part| {
                let (n, d) = part
                    .trim()
                    .split_once('x')
                    .ok_or_else(|| Error::Parse(format!("block `{part}` is not COUNTxDEPTH")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad number in block `{part}`")))
                };
                Ok((parse(n)?, parse(d)?))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ArchConfig::desk().validate().unwrap();
        ArchConfig::base_i().validate().unwrap();
        assert_eq!(ArchConfig::base_i().conv_layers(), 7);
        assert_eq!(ArchConfig::desk().flat_features(), 32 * 8 * 8);
    }

    #[test]
    fn rejects_even_kernel_and_empty_blocks() {
        let mut a = ArchConfig::desk();
        a.kernel_size = 4;
        assert!(a.validate().is_err());
        a.kernel_size = 3;
        a.blocks.clear();
        assert!(a.validate().is_err());
    }

    #[test]
    fn blocks_round_trip() {
        let a = ArchConfig::desk();
        assert_eq!(ArchConfig::parse_blocks(&a.blocks_string()).unwrap(), a.blocks);
        assert!(ArchConfig::parse_blocks("2-8").is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("binary".parse::<Mode>().unwrap(), Mode::Binary);
        assert_eq!("multiclass:10".parse::<Mode>().unwrap(), Mode::Multiclass { classes: 10 });
        assert!("multiclass:1".parse::<Mode>().is_err());
        assert_eq!(Mode::Multiclass { classes: 3 }.to_string(), "multiclass:3");
    }
}
