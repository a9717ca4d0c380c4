use crate::error::{Error, Result};
use crate::pfm::plane::{corner_aligned, lerp_index};
use crate::pfm::RgbImage;

/// Corner-aligned bilinear resampling to a `side × side` square.
pub fn resize_bilinear(image: &RgbImage, side: usize) -> Result<RgbImage> {
    if side == 0 {
        return Err(Error::dim("resize side must be positive"));
    }
    if image.width == 0 || image.height == 0 {
        return Err(Error::dim("cannot resize an empty image"));
    }
    if image.width == side && image.height == side {
        return Ok(image.clone());
    }
    let cols: Vec<_> = (0..side)
        .map(|x| lerp_index(corner_aligned(x, side, image.width), image.width))
        .collect();
    let mut out = RgbImage::filled(side, side, [0, 0, 0]);
    for y in 0..side {
        let (y0, y1, fy) = lerp_index(corner_aligned(y, side, image.height), image.height);
        for (x, &(x0, x1, fx)) in cols.iter().enumerate() {
            let (a, b, c, d) = (image.get(x0, y0), image.get(x1, y0), image.get(x0, y1), image.get(x1, y1));
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
                let bottom = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
                px[ch] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
            out.set(x, y, px);
        }
    }
    Ok(out)
}
