//! One- and multi-level 2-D Haar wavelet transform (decimated QMF bank).
//!
//! Filtering runs along rows first, then along columns. Subband names give
//! the horizontal filter first: `lh` is low-pass along rows and high-pass
//! along columns (horizontal edges), `hl` the reverse (vertical edges) and
//! `hh` the diagonal detail. Odd lengths are extended by repeating the last
//! sample (symmetric padding) so every band is `ceil(n / 2)` long.

use std::f64::consts::FRAC_1_SQRT_2;

use super::Plane;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Subbands {
    pub ll: Plane,
    pub lh: Plane,
    pub hl: Plane,
    pub hh: Plane,
}

/// Splits one line into (low, high) halves with the orthonormal Haar pair.
fn analyze_line(src: &[f64], low: &mut [f64], high: &mut [f64]) {
    let n = src.len();
    for i in 0..low.len() {
        let a = src[2 * i];
        let b = if 2 * i + 1 < n { src[2 * i + 1] } else { a };
        low[i] = (a + b) * FRAC_1_SQRT_2;
        high[i] = (a - b) * FRAC_1_SQRT_2;
    }
}

fn synthesize_line(low: &[f64], high: &[f64], dst: &mut [f64]) {
    let n = dst.len();
    for i in 0..low.len() {
        let a = (low[i] + high[i]) * FRAC_1_SQRT_2;
        let b = (low[i] - high[i]) * FRAC_1_SQRT_2;
        if 2 * i < n {
            dst[2 * i] = a;
        }
        if 2 * i + 1 < n {
            dst[2 * i + 1] = b;
        }
    }
}

/// Runs the 1-D analysis along every column of a `h × w` buffer.
fn analyze_columns(src: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let oh = h.div_ceil(2);
    let mut low = vec![0.0; oh * w];
    let mut high = vec![0.0; oh * w];
    let mut col = vec![0.0; h];
    let (mut lo, mut hi) = (vec![0.0; oh], vec![0.0; oh]);
    for x in 0..w {
        for y in 0..h {
            col[y] = src[y * w + x];
        }
        analyze_line(&col, &mut lo, &mut hi);
        for y in 0..oh {
            low[y * w + x] = lo[y];
            high[y * w + x] = hi[y];
        }
    }
    (low, high)
}

/// One level of the separable 2-D Haar transform.
pub fn dwt2_level(plane: &Plane) -> Result<Subbands> {
    let (h, w) = (plane.height, plane.width);
    if h < 2 || w < 2 {
        return Err(Error::dim(format!("DWT needs at least a 2x2 plane, got {h}x{w}")));
    }
    let ow = w.div_ceil(2);
    let oh = h.div_ceil(2);
    let mut row_low = vec![0.0; h * ow];
    let mut row_high = vec![0.0; h * ow];
    for y in 0..h {
        analyze_line(
            &plane.data[y * w..(y + 1) * w],
            &mut row_low[y * ow..(y + 1) * ow],
            &mut row_high[y * ow..(y + 1) * ow],
        );
    }
    let (ll, lh) = analyze_columns(&row_low, h, ow);
    let (hl, hh) = analyze_columns(&row_high, h, ow);
    let band = |data| Plane {
        height: oh,
        width: ow,
        data,
    };
    Ok(Subbands {
        ll: band(ll),
        lh: band(lh),
        hl: band(hl),
        hh: band(hh),
    })
}

/// Inverse of [`dwt2_level`] for an output of `height × width`.
pub fn idwt2_level(bands: &Subbands, height: usize, width: usize) -> Result<Plane> {
    let (oh, ow) = (bands.ll.height, bands.ll.width);
    if oh != height.div_ceil(2) || ow != width.div_ceil(2) {
        return Err(Error::dim(format!(
            "subbands {oh}x{ow} cannot reconstruct {height}x{width}"
        )));
    }
    for b in [&bands.lh, &bands.hl, &bands.hh] {
        if b.height != oh || b.width != ow {
            return Err(Error::dim("subbands must share dimensions"));
        }
    }
    // columns back to row-filtered buffers
    let mut row_low = vec![0.0; height * ow];
    let mut row_high = vec![0.0; height * ow];
    let mut col = vec![0.0; height];
    let (mut lo, mut hi) = (vec![0.0; oh], vec![0.0; oh]);
    for (low_band, high_band, dst) in [
        (&bands.ll, &bands.lh, &mut row_low),
        (&bands.hl, &bands.hh, &mut row_high),
    ] {
        for x in 0..ow {
            for y in 0..oh {
                lo[y] = low_band.data[y * ow + x];
                hi[y] = high_band.data[y * ow + x];
            }
            synthesize_line(&lo, &hi, &mut col);
            for y in 0..height {
                dst[y * ow + x] = col[y];
            }
        }
    }
    let mut data = vec![0.0; height * width];
    for y in 0..height {
        synthesize_line(
            &row_low[y * ow..(y + 1) * ow],
            &row_high[y * ow..(y + 1) * ow],
            &mut data[y * width..(y + 1) * width],
        );
    }
    Plane::new(height, width, data)
}

/// Approximation (LL) band after three successive levels.
pub fn approximation_level3(plane: &Plane) -> Result<Plane> {
    if plane.height < 8 || plane.width < 8 {
        return Err(Error::dim(format!(
            "third-level approximation needs at least 8x8, got {}x{}",
            plane.height, plane.width
        )));
    }
    let mut ll = plane.clone();
    for _ in 0..3 {
        ll = dwt2_level(&ll)?.ll;
    }
    Ok(ll)
}

/// Diagonal (HH) detail band of the first level.
pub fn detail_level1(plane: &Plane) -> Result<Plane> {
    Ok(dwt2_level(plane)?.hh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_plane_bands() {
        let p = Plane::filled(6, 4, 1.5);
        let s = dwt2_level(&p).unwrap();
        assert!(s.ll.data.iter().all(|&v| (v - 3.0).abs() < 1e-12));
        for band in [&s.lh, &s.hl, &s.hh] {
            assert!(band.data.iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn checkerboard_lands_in_hh() {
        let p = Plane::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let s = dwt2_level(&p).unwrap();
        // hand computation: rows give low (1/√2, 1/√2), high (1/√2, -1/√2);
        // columns then give LL = 1, LH = 0, HL = 0, HH = 1
        assert!((s.ll.data[0] - 1.0).abs() < 1e-12);
        assert!(s.lh.data[0].abs() < 1e-12);
        assert!(s.hl.data[0].abs() < 1e-12);
        assert!((s.hh.data[0] - 1.0).abs() < 1e-12);
        let r = idwt2_level(&s, 2, 2).unwrap();
        for (a, b) in r.data.iter().zip(&p.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn odd_sizes_use_symmetric_padding() {
        let p = Plane::from_fn(5, 3, |y, x| (y * 3 + x) as f64);
        let s = dwt2_level(&p).unwrap();
        assert_eq!((s.ll.height, s.ll.width), (3, 2));
        let r = idwt2_level(&s, 5, 3).unwrap();
        for (a, b) in r.data.iter().zip(&p.data) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn vertical_edge_has_no_diagonal_energy() {
        for edge in 1..8 {
            let p = Plane::from_fn(8, 8, |_, x| if x < edge { 0.0 } else { 1.0 });
            let hh = detail_level1(&p).unwrap();
            assert!(hh.data.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn diagonal_checkerboard_maximises_hh() {
        let p = Plane::from_fn(8, 8, |y, x| ((x + y) % 2) as f64);
        let hh = detail_level1(&p).unwrap();
        // the HH coefficient of a 2x2 block is (a - b - c + d) / 2, at most 1 for values in [0, 1]
        assert!(hh.data.iter().all(|v| (v.abs() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn level3_of_constant_and_dims() {
        let p = Plane::filled(16, 24, 0.25);
        let a = approximation_level3(&p).unwrap();
        assert_eq!((a.height, a.width), (2, 3));
        assert!(a.data.iter().all(|&v| (v - 2.0).abs() < 1e-12));
        let odd = approximation_level3(&Plane::filled(17, 9, 1.0)).unwrap();
        assert_eq!((odd.height, odd.width), (3, 2));
        assert!(approximation_level3(&Plane::filled(7, 16, 1.0)).is_err());
    }

    #[test]
    fn too_small_plane_is_rejected() {
        assert!(matches!(dwt2_level(&Plane::filled(1, 4, 0.0)), Err(Error::Dimension(_))));
    }
}
