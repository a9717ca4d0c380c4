//! sRGB → CIE-Lab under the D65 white point.

use super::{Plane, RgbImage};

/// Linear-RGB → XYZ for sRGB primaries (D65).
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

/// Reference white: the image of linear RGB (1, 1, 1), so achromatic inputs
/// land exactly on a = b = 0.
fn white() -> [f64; 3] {
    RGB_TO_XYZ.map(|row| row.iter().sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub width: usize,
    pub height: usize,
    /// Lightness in `[0, 100]`.
    pub l: Plane,
    pub a: Plane,
    pub b: Plane,
}

#[inline]
fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one 8-bit sRGB pixel to `(L, a, b)`.
pub fn srgb_to_lab_pixel(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let wp = white();
    let mut f = [0.0; 3];
    for (k, row) in RGB_TO_XYZ.iter().enumerate() {
        let v: f64 = row.iter().zip(&lin).map(|(m, c)| m * c).sum();
        f[k] = lab_f(v / wp[k]);
    }
    [
        116.0 * f[1] - 16.0,
        500.0 * (f[0] - f[1]),
        200.0 * (f[1] - f[2]),
    ]
}

pub fn srgb_to_lab(image: &RgbImage) -> LabImage {
    let n = image.width * image.height;
    let (mut l, mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in image.pixels.chunks_exact(3) {
        let [lv, av, bv] = srgb_to_lab_pixel([px[0], px[1], px[2]]);
        l.push(lv);
        a.push(av);
        b.push(bv);
    }
    let plane = |data| Plane {
        height: image.height,
        width: image.width,
        data,
    };
    LabImage {
        width: image.width,
        height: image.height,
        l: plane(l),
        a: plane(a),
        b: plane(b),
    }
}
