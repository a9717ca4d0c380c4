use rand::Rng;

use crate::pfm::RgbImage;

/// The six orientation changes used for augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Identity,
    FlipHorizontal,
    FlipVertical,
    Rotate90,
    Rotate180,
    Rotate270,
}

impl Orientation {
    pub const ALL: [Orientation; 6] = [
        Orientation::Identity,
        Orientation::FlipHorizontal,
        Orientation::FlipVertical,
        Orientation::Rotate90,
        Orientation::Rotate180,
        Orientation::Rotate270,
    ];

    /// Applies the transform. Rotations are clockwise.
    pub fn apply(self, image: &RgbImage) -> RgbImage {
        let (w, h) = (image.width, image.height);
        let (ow, oh) = match self {
            Orientation::Rotate90 | Orientation::Rotate270 => (h, w),
            _ => (w, h),
        };
        let mut out = RgbImage::filled(ow, oh, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = match self {
                    Orientation::Identity => (x, y),
                    Orientation::FlipHorizontal => (w - 1 - x, y),
                    Orientation::FlipVertical => (x, h - 1 - y),
                    Orientation::Rotate90 => (h - 1 - y, x),
                    Orientation::Rotate180 => (w - 1 - x, h - 1 - y),
                    Orientation::Rotate270 => (y, w - 1 - x),
                };
                out.set(dx, dy, image.get(x, y));
            }
        }
        out
    }
}

/// Picks one orientation uniformly at random and applies it.
pub fn augment_orientation<R: Rng>(image: &RgbImage, rng: &mut R) -> RgbImage {
    Orientation::ALL[rng.gen_range(0..Orientation::ALL.len())].apply(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RgbImage {
        RgbImage::new(3, 2, (0..18).collect()).unwrap()
    }

    #[test]
    fn flip_is_an_involution() {
        let img = sample();
        let f = Orientation::FlipHorizontal;
        assert_eq!(f.apply(&f.apply(&img)), img);
        let v = Orientation::FlipVertical;
        assert_eq!(v.apply(&v.apply(&img)), img);
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = sample();
        let mut r = img.clone();
        for _ in 0..4 {
            r = Orientation::Rotate90.apply(&r);
        }
        assert_eq!(r, img);
        assert_eq!(
            Orientation::Rotate270.apply(&Orientation::Rotate90.apply(&img)),
            img
        );
    }

    #[test]
    fn horizontal_flip_by_hand() {
        let (a, b, c, d) = ([1, 1, 1], [2, 2, 2], [3, 3, 3], [4, 4, 4]);
        let img = RgbImage::new(2, 2, [a, b, c, d].concat()).unwrap();
        let f = Orientation::FlipHorizontal.apply(&img);
        assert_eq!(f.pixels, [b, a, d, c].concat());
    }
}
