//! Opponent perceptual feature maps.
//!
//! An RGB image becomes four planes: light–dark (third-level Haar
//! approximation of CIE L), coarse–fine (first-level diagonal detail of L),
//! blue–yellow (CIE b) and green–red (CIE a). Every plane is scaled to
//! `[−1, 1]` and resampled to the model's input side.

mod color;
mod dwt;
mod image;
pub(crate) mod plane;
mod stack;

pub use color::{srgb_to_lab, srgb_to_lab_pixel, LabImage};
pub use dwt::{approximation_level3, detail_level1, dwt2_level, idwt2_level, Subbands};
pub use image::RgbImage;
pub use plane::{upsample, Plane};
pub use stack::{build_pfm_stack, pfm_from_lab, PfmConfig, PfmKind, PfmStack};
