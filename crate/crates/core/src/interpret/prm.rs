use crate::error::{Error, Result};
use crate::pfm::{upsample, Plane, RgbImage};
use crate::tensor::Tensor;

pub const HISTOGRAM_BINS: usize = 256;
/// 1-based index over convolution layers only.
pub const DEFAULT_PRM_LAYER: usize = 5;

const OVERLAY_ALPHA: f64 = 0.55;

/// A relevance map at input resolution with its display mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Prm {
    /// Values in `[0, 1]`.
    pub plane: Plane,
    pub threshold: f64,
    /// `plane >= threshold`; empty when `degenerate`.
    pub mask: Vec<bool>,
    /// The aggregated map was constant, so no threshold could be fitted.
    pub degenerate: bool,
}

impl Prm {
    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

fn histogram(values: impl Iterator<Item = f64>, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for v in values {
        h[bin_of(v, bins)] += 1.0;
    }
    h
}

/// Entropy in bits of the `bins`-bin histogram of the min–max normalised map.
pub fn shannon_entropy(map: &Plane, bins: usize) -> f64 {
    assert!(bins >= 2, "entropy needs at least two bins");
    let (normalized, constant) = map.rescaled(0.0, 1.0);
    if constant {
        return 0.0;
    }
    let h = histogram(normalized.data.iter().copied(), bins);
    let total: f64 = h.iter().sum();
    -h.iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Indices of the `⌈n/2⌉` highest-entropy maps, in descending entropy order.
/// Equal entropies keep the lower index first.
pub fn select_informative(maps: &[Plane], bins: usize) -> Result<Vec<usize>> {
    if maps.len() < 2 {
        return Err(Error::contract(format!(
            "selection needs at least two maps, got {}",
            maps.len()
        )));
    }
    let entropy: Vec<f64> = maps.iter().map(|m| shannon_entropy(m, bins)).collect();
    let mut order: Vec<usize> = (0..maps.len()).collect();
    order.sort_by(|&a, &b| entropy[b].total_cmp(&entropy[a]).then(a.cmp(&b)));
    order.truncate(maps.len().div_ceil(2));
    Ok(order)
}

/// Element-wise mean of the maps, min–max normalised to `[0, 1]`. The flag
/// reports a constant mean (returned as all zeros).
pub fn aggregate(maps: &[&Plane]) -> Result<(Plane, bool)> {
    let first = maps.first().ok_or_else(|| Error::contract("nothing to aggregate"))?;
    if maps.iter().any(|m| m.height != first.height || m.width != first.width) {
        return Err(Error::dim("aggregated maps must share dimensions"));
    }
    let n = maps.len() as f64;
    let mean = Plane::from_fn(first.height, first.width, |y, x| {
        maps.iter().map(|m| m.at(y, x)).sum::<f64>() / n
    });
    let (out, constant) = mean.rescaled(0.0, 1.0);
    if constant {
        return Ok((Plane::filled(first.height, first.width, 0.0), true));
    }
    Ok((out, false))
}

/// Yen's threshold on a histogram: the cut index `t` (bins `0..=t` below)
/// maximising the entropic correlation. Both sides must be non-empty; ties go
/// to the smallest `t`. `None` when no valid cut exists.
pub fn yen_from_histogram(hist: &[f64]) -> Option<usize> {
    let total: f64 = hist.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let p: Vec<f64> = hist.iter().map(|h| h / total).collect();
    let (mut cum, mut cum_sq) = (Vec::with_capacity(p.len()), Vec::with_capacity(p.len()));
    let (mut c, mut s) = (0.0, 0.0);
    for &v in &p {
        c += v;
        s += v * v;
        cum.push(c);
        cum_sq.push(s);
    }
    let (total_p, total_sq) = (c, s);
    let mut best: Option<(usize, f64)> = None;
    for t in 0..p.len().saturating_sub(1) {
        let (lo, hi) = (cum[t], total_p - cum[t]);
        if !(lo > 0.0 && hi > 0.0) {
            continue;
        }
        let (lo_sq, hi_sq) = (cum_sq[t], total_sq - cum_sq[t]);
        if !(lo_sq > 0.0 && hi_sq > 0.0) {
            continue;
        }
        let tc = -(lo_sq / (lo * lo)).ln() - (hi_sq / (hi * hi)).ln();
        if best.map_or(true, |(_, b)| tc > b) {
            best = Some((t, tc));
        }
    }
    best.map(|(t, _)| t)
}

/// Threshold for a `[0, 1]` plane: the upper edge `(t + 1) / bins` of the
/// chosen cut bin.
pub fn yen_threshold(plane: &Plane, bins: usize) -> Result<f64> {
    let (lo, hi) = plane.min_max();
    if !(hi > lo) {
        return Err(Error::Degenerate("constant map has no threshold".into()));
    }
    let hist = histogram(plane.data.iter().copied(), bins);
    yen_from_histogram(&hist)
        .map(|t| (t + 1) as f64 / bins as f64)
        .ok_or_else(|| Error::Degenerate("all values fall into one histogram bin".into()))
}

fn channel_planes(t: &Tensor<f32>) -> Result<Vec<Plane>> {
    let s = t.shape();
    if s.len() != 3 {
        return Err(Error::dim(format!("activation must be [C, h, w], got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    Ok(t.data()
        .chunks(h * w)
        .map(|c| Plane {
            height: h,
            width: w,
            data: c.iter().map(|&v| f64::from(v)).collect(),
        })
        .collect())
}

/// Relevance map of one sub-network from its cached activations at the
/// 1-based conv `layer`: top-half entropy selection, mean, upsampling to
/// `height × width`, then Yen thresholding.
pub fn build_prm(activations: &[Tensor<f32>], layer: usize, height: usize, width: usize) -> Result<Prm> {
    if layer == 0 || layer > activations.len() {
        return Err(Error::config(format!(
            "relevance layer {layer} does not exist, the sub-network has {} conv layers",
            activations.len()
        )));
    }
    let maps = channel_planes(&activations[layer - 1])?;
    let chosen = select_informative(&maps, HISTOGRAM_BINS)?;
    let refs: Vec<&Plane> = chosen.iter().map(|&i| &maps[i]).collect();
    let (mean, constant) = aggregate(&refs)?;
    let plane = upsample(&mean, height, width)?;
    let threshold = if constant {
        None
    } else {
        match yen_threshold(&plane, HISTOGRAM_BINS) {
            Ok(t) => Some(t),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        }
    };
    Ok(match threshold {
        Some(t) => Prm {
            mask: plane.data.iter().map(|&v| v >= t).collect(),
            plane,
            threshold: t,
            degenerate: false,
        },
        None => Prm {
            mask: vec![false; height * width],
            plane,
            threshold: 1.0,
            degenerate: true,
        },
    })
}

/// Tints masked pixels along an orange→yellow ramp by relevance.
pub fn overlay_prm(image: &RgbImage, prm: &Prm) -> Result<RgbImage> {
    if image.width != prm.plane.width || image.height != prm.plane.height {
        return Err(Error::dim(format!(
            "image is {}x{}, relevance map is {}x{}",
            image.width, image.height, prm.plane.width, prm.plane.height
        )));
    }
    let mut out = image.clone();
    for y in 0..image.height {
        for x in 0..image.width {
            let i = y * image.width + x;
            if !prm.mask[i] {
                continue;
            }
            let v = prm.plane.data[i].clamp(0.0, 1.0);
            let tint = [255.0, 165.0 + 90.0 * v, 0.0];
            let px = image.get(x, y);
            let mut blended = [0u8; 3];
            for c in 0..3 {
                let mixed = (1.0 - OVERLAY_ALPHA) * f64::from(px[c]) + OVERLAY_ALPHA * tint[c];
                blended[c] = mixed.round().clamp(0.0, 255.0) as u8;
            }
            out.set(x, y, blended);
        }
    }
    Ok(out)
}
