//! Synthetic two-class stand-in for a bananas-vs-apples benchmark.
//!
//! Class 0 (`crescent`) holds yellow, bow-shaped objects with a fine
//! checker texture. Class 1 (`disk`) holds smooth red (sometimes green)
//! circles with a soft highlight. Both classes share the background
//! distribution, so every opponent feature carries class evidence: lightness
//! (bright yellow vs darker red), texture (fine vs smooth), blue–yellow and
//! green–red chroma, plus the silhouette itself.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{write_manifest, write_ppm, DatasetManifest, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::pfm::RgbImage;

/// Directory names, in class-index order.
pub const SYNTH_CLASSES: [&str; 2] = ["crescent", "disk"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub count_per_class: usize,
    pub side: usize,
    pub seed: u64,
    /// Object radius range as a fraction of the side.
    pub radius: (f64, f64),
    /// Maximum centre offset from the middle as a fraction of the side.
    pub position_jitter: f64,
    /// Probability that a disk is green rather than red.
    pub green_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count_per_class: 200,
            side: 64,
            seed: 7,
            radius: (0.26, 0.38),
            position_jitter: 0.12,
            green_fraction: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count_per_class < 1 {
            return Err(Error::config("count must be at least 1"));
        }
        if self.side < 16 {
            return Err(Error::config(format!("side must be at least 16, got {}", self.side)));
        }
        if !(self.radius.0 > 0.0 && self.radius.0 <= self.radius.1 && self.radius.1 < 0.5) {
            return Err(Error::config("radius range must satisfy 0 < lo <= hi < 0.5"));
        }
        Ok(())
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn background<R: Rng>(side: usize, rng: &mut R) -> RgbImage {
    let gray = rng.gen_range(80.0..170.0);
    let tint: [f64; 3] = [rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0)];
    let slope = rng.gen_range(-30.0..30.0);
    let mut img = RgbImage::filled(side, side, [0, 0, 0]);
    for y in 0..side {
        let shade = gray + slope * (y as f64 / side as f64 - 0.5);
        for x in 0..side {
            let noise = rng.gen_range(-4.0..4.0);
            img.set(x, y, tint.map(|t| clamp_u8(shade + t + noise)));
        }
    }
    img
}

fn crescent<R: Rng>(img: &mut RgbImage, cfg: &SynthConfig, rng: &mut R) {
    let s = cfg.side as f64;
    let cx = s / 2.0 + rng.gen_range(-cfg.position_jitter..=cfg.position_jitter) * s;
    let cy = s / 2.0 + rng.gen_range(-cfg.position_jitter..=cfg.position_jitter) * s;
    let r = rng.gen_range(cfg.radius.0..=cfg.radius.1) * s;
    let theta = rng.gen_range(0.0..2.0 * PI);
    let bite = r * rng.gen_range(0.80..0.92);
    let shift = r * rng.gen_range(0.40..0.55);
    let (bx, by) = (cx + shift * theta.cos(), cy + shift * theta.sin());
    let base = [
        rng.gen_range(225.0..255.0),
        rng.gen_range(190.0..235.0),
        rng.gen_range(10.0..70.0),
    ];
    let texture = rng.gen_range(22.0..34.0);
    for y in 0..cfg.side {
        for x in 0..cfg.side {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let inside = (px - cx).hypot(py - cy) <= r;
            let bitten = (px - bx).hypot(py - by) <= bite;
            if inside && !bitten {
                let sign = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
                img.set(x, y, base.map(|c| clamp_u8(c + sign * texture)));
            }
        }
    }
}

fn disk<R: Rng>(img: &mut RgbImage, cfg: &SynthConfig, rng: &mut R) {
    let s = cfg.side as f64;
    let cx = s / 2.0 + rng.gen_range(-cfg.position_jitter..=cfg.position_jitter) * s;
    let cy = s / 2.0 + rng.gen_range(-cfg.position_jitter..=cfg.position_jitter) * s;
    let r = rng.gen_range(cfg.radius.0..=cfg.radius.1) * s * 0.92;
    let base = if rng.gen_bool(cfg.green_fraction) {
        [
            rng.gen_range(40.0..90.0),
            rng.gen_range(120.0..170.0),
            rng.gen_range(30.0..60.0),
        ]
    } else {
        [
            rng.gen_range(150.0..215.0),
            rng.gen_range(10.0..45.0),
            rng.gen_range(25.0..60.0),
        ]
    };
    let (hx, hy) = (cx - 0.35 * r, cy - 0.35 * r);
    for y in 0..cfg.side {
        for x in 0..cfg.side {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            if (px - cx).hypot(py - cy) > r {
                continue;
            }
            let glow = 1.0 - ((px - hx).hypot(py - hy) / (1.6 * r)).min(1.0);
            img.set(x, y, base.map(|c| clamp_u8(c * (0.85 + 0.3 * glow))));
        }
    }
}

/// Renders one synthetic image of `class` (0 = crescent, 1 = disk).
pub fn render_sample<R: Rng>(class: usize, cfg: &SynthConfig, rng: &mut R) -> RgbImage {
    let mut img = background(cfg.side, rng);
    if class == 0 {
        crescent(&mut img, cfg, rng);
    } else {
        disk(&mut img, cfg, rng);
    }
    img
}

/// Writes `out/<class>/<class>_NNNN.ppm` for both classes plus a manifest.
/// Output is a pure function of the config.
pub fn synth_generate(cfg: &SynthConfig, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entries = Vec::new();
    for (class, name) in SYNTH_CLASSES.iter().enumerate() {
        let dir = out.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..cfg.count_per_class {
            let img = render_sample(class, cfg, &mut rng);
            let path = dir.join(format!("{name}_{i:04}.ppm"));
            write_ppm(&path, &img)?;
            entries.push((path, class));
        }
    }
    let manifest = DatasetManifest {
        root: out.to_path_buf(),
        class_names: SYNTH_CLASSES.iter().map(|s| s.to_string()).collect(),
        entries,
    };
    write_manifest(&manifest, &out.join(MANIFEST_FILE))?;
    Ok(manifest)
}
