use crate::error::{Error, Result};

/// Row-major real-valued 2-D plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::dim(format!(
                "plane {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Affine min–max rescale into `[lo, hi]`. A constant plane maps to the
    /// midpoint; the flag reports whether that happened.
    pub fn rescaled(&self, lo: f64, hi: f64) -> (Plane, bool) {
        let (mn, mx) = self.min_max();
        let span = mx - mn;
        if !(span > 0.0) || !span.is_finite() {
            return (Plane::filled(self.height, self.width, 0.5 * (lo + hi)), true);
        }
        let data = self
            .data
            .iter()
            .map(|&v| lo + (hi - lo) * (v - mn) / span)
            .collect();
        (
            Plane {
                height: self.height,
                width: self.width,
                data,
            },
            false,
        )
    }
}

/// Source coordinate for corner-aligned resampling.
#[inline]
pub(crate) fn corner_aligned(i: usize, dst: usize, src: usize) -> f64 {
    if dst <= 1 || src <= 1 {
        0.0
    } else {
        i as f64 * (src - 1) as f64 / (dst - 1) as f64
    }
}

/// Linear interpolation weights `(i0, i1, frac)` for a source coordinate.
#[inline]
pub(crate) fn lerp_index(pos: f64, src: usize) -> (usize, usize, f64) {
    let i0 = (pos.floor() as usize).min(src - 1);
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, pos - i0 as f64)
}

/// Bilinear resampling with corner alignment: the four corner samples of the
/// source land exactly on the four corners of the target.
pub fn upsample(plane: &Plane, target_h: usize, target_w: usize) -> Result<Plane> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::dim("upsample target dimensions must be positive"));
    }
    if plane.height == 0 || plane.width == 0 {
        return Err(Error::dim("upsample source plane is empty"));
    }
    if plane.height == target_h && plane.width == target_w {
        return Ok(plane.clone());
    }
    let cols: Vec<_> = (0..target_w)
        .map(|x| lerp_index(corner_aligned(x, target_w, plane.width), plane.width))
        .collect();
    let mut data = Vec::with_capacity(target_h * target_w);
    for y in 0..target_h {
        let (y0, y1, fy) = lerp_index(corner_aligned(y, target_h, plane.height), plane.height);
        for &(x0, x1, fx) in &cols {
            let top = plane.at(y0, x0) * (1.0 - fx) + plane.at(y0, x1) * fx;
            let bottom = plane.at(y1, x0) * (1.0 - fx) + plane.at(y1, x1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Plane::new(target_h, target_w, data)
}
