//! Image codecs, dataset layout and the synthetic two-class generator.

mod dataset;
mod ppm;
mod resize;
mod synth;

pub use dataset::{load_dataset, read_manifest, write_manifest, DatasetManifest, MANIFEST_FILE};
pub use ppm::{decode_ppm, encode_pgm, encode_ppm, read_ppm, write_ppm};
pub use resize::resize_bilinear;
pub use synth::{render_sample, synth_generate, SynthConfig, SYNTH_CLASSES};
