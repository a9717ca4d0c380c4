use std::fmt;
use std::str::FromStr;

use super::{approximation_level3, detail_level1, srgb_to_lab, upsample, LabImage, Plane, RgbImage};
use crate::data::resize_bilinear;
use crate::error::{Error, Result};

/// The four opponent perceptual features, in stack order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PfmKind {
    LightDark,
    CoarseFine,
    BlueYellow,
    GreenRed,
}

impl PfmKind {
    pub const ALL: [PfmKind; 4] = [
        PfmKind::LightDark,
        PfmKind::CoarseFine,
        PfmKind::BlueYellow,
        PfmKind::GreenRed,
    ];

    /// File-name friendly identifier.
    pub fn slug(self) -> &'static str {
        match self {
            PfmKind::LightDark => "lightdark",
            PfmKind::CoarseFine => "coarsefine",
            PfmKind::BlueYellow => "blueyellow",
            PfmKind::GreenRed => "greenred",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            PfmKind::LightDark => "light-dark",
            PfmKind::CoarseFine => "coarse-fine",
            PfmKind::BlueYellow => "blue-yellow",
            PfmKind::GreenRed => "green-red",
        }
    }
}

impl fmt::Display for PfmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for PfmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PfmKind::ALL
            .into_iter()
            .find(|k| k.slug() == s)
            .ok_or_else(|| Error::Parse(format!("unknown feature map `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PfmConfig {
    /// Square side every map is resampled to.
    pub side: usize,
}

impl Default for PfmConfig {
    fn default() -> Self {
        Self { side: 64 }
    }
}

/// `N` same-sized feature planes, each scaled to `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmStack {
    pub maps: Vec<Plane>,
    pub kinds: Vec<PfmKind>,
    pub height: usize,
    pub width: usize,
}

impl PfmStack {
    pub fn new(maps: Vec<Plane>, kinds: Vec<PfmKind>) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::dim("empty feature-map stack"))?;
        let (height, width) = (first.height, first.width);
        if maps.iter().any(|m| m.height != height || m.width != width) {
            return Err(Error::dim("feature maps must share dimensions"));
        }
        if kinds.len() != maps.len() {
            return Err(Error::dim("one kind label per feature map"));
        }
        Ok(Self {
            maps,
            kinds,
            height,
            width,
        })
    }

    pub fn count(&self) -> usize {
        self.maps.len()
    }

    /// The first `n` maps, for ensembles that use fewer than four.
    pub fn first(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.count() {
            return Err(Error::dim(format!("cannot take {n} of {} feature maps", self.count())));
        }
        Self::new(self.maps[..n].to_vec(), self.kinds[..n].to_vec())
    }

    pub fn map(&self, kind: PfmKind) -> Option<&Plane> {
        self.kinds.iter().position(|&k| k == kind).map(|i| &self.maps[i])
    }
}

/// Fixed affine scaling of a chroma channel: `[−128, 127]` onto `[−1, 1]`.
pub(crate) fn normalize_chroma(v: f64) -> f64 {
    let c = v.clamp(-128.0, 127.0);
    2.0 * (c + 128.0) / 255.0 - 1.0
}

/// Builds the four maps from an already-resized Lab image.
pub fn pfm_from_lab(lab: &LabImage) -> Result<PfmStack> {
    let (h, w) = (lab.height, lab.width);
    let light_dark = upsample(&approximation_level3(&lab.l)?, h, w)?.rescaled(-1.0, 1.0).0;
    let coarse_fine = upsample(&detail_level1(&lab.l)?, h, w)?.rescaled(-1.0, 1.0).0;
    let chroma = |p: &Plane| Plane {
        height: h,
        width: w,
        data: p.data.iter().map(|&v| normalize_chroma(v)).collect(),
    };
    PfmStack::new(
        vec![light_dark, coarse_fine, chroma(&lab.b), chroma(&lab.a)],
        PfmKind::ALL.to_vec(),
    )
}

/// Resizes `image` to `side × side` and extracts the four opponent maps.
pub fn build_pfm_stack(image: &RgbImage, config: &PfmConfig) -> Result<PfmStack> {
    if config.side < 8 {
        return Err(Error::config(format!(
            "feature-map side must be at least 8, got {}",
            config.side
        )));
    }
    let resized = resize_bilinear(image, config.side)?;
    pfm_from_lab(&srgb_to_lab(&resized))
}
