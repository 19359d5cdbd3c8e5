use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Sets every pixel `>= threshold` to 1 and the rest to 0.
pub fn binarize(pixels: &mut [f32], threshold: f32) {
    for p in pixels {
        *p = if *p >= threshold { 1.0 } else { 0.0 };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interp {
    #[default]
    Bilinear,
    Nearest,
}

impl FromStr for Interp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilinear" => Ok(Interp::Bilinear),
            "nearest" => Ok(Interp::Nearest),
            _ => Err(Error::Config(format!("unknown interpolation `{s}`"))),
        }
    }
}

impl fmt::Display for Interp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interp::Bilinear => "bilinear",
            Interp::Nearest => "nearest",
        })
    }
}

/// `Horizontal` mirrors left/right, `Vertical` mirrors top/bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlipAxis {
    #[default]
    Horizontal,
    Vertical,
}

impl FromStr for FlipAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" => Ok(FlipAxis::Horizontal),
            "vertical" => Ok(FlipAxis::Vertical),
            _ => Err(Error::Config(format!("unknown flip axis `{s}`"))),
        }
    }
}

impl fmt::Display for FlipAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlipAxis::Horizontal => "horizontal",
            FlipAxis::Vertical => "vertical",
        })
    }
}

/// Where a view came from inside its source image.
///
/// Centre coordinates are fractions of the source width/height; `scale` is
/// the crop's area fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleParams {
    pub center_x: f64,
    pub center_y: f64,
    pub scale: f64,
    pub flipped: bool,
}

impl StyleParams {
    pub const NAMES: [&'static str; 4] = ["crop_center_x", "crop_center_y", "crop_scale", "flip"];

    pub fn identity() -> Self {
        Self {
            center_x: 0.5,
            center_y: 0.5,
            scale: 1.0,
            flipped: false,
        }
    }

    pub fn to_vec(self) -> [f64; 4] {
        [
            self.center_x,
            self.center_y,
            self.scale,
            if self.flipped { 1.0 } else { 0.0 },
        ]
    }
}

/// Crop rectangle in source pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Samples a crop box with area fraction in `[scale_lo, 1]` and aspect ratio
/// (width/height) log-uniform in `ratio`. After 10 rejected draws the whole
/// image is used.
pub fn sample_crop(h: usize, w: usize, scale_lo: f64, ratio: (f64, f64), rng: &mut Rng) -> CropBox {
    let area = (h * w) as f64;
    let (lr0, lr1) = (ratio.0.ln(), ratio.1.ln());
    for _ in 0..10 {
        let target = area * rng.uniform_range(scale_lo, 1.0);
        let aspect = if lr0 == lr1 { ratio.0 } else { rng.uniform_range(lr0, lr1).exp() };
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if cw > 0 && ch > 0 && cw <= w && ch <= h {
            let top = rng.below(h - ch + 1);
            let left = rng.below(w - cw + 1);
            return CropBox {
                top,
                left,
                height: ch,
                width: cw,
            };
        }
    }
    CropBox {
        top: 0,
        left: 0,
        height: h,
        width: w,
    }
}

/// Resamples `crop` of a `h×w` image to `out_h×out_w` with half-pixel
/// centres, clamping at the crop border.
pub fn resize_crop(
    img: &[f32],
    h: usize,
    w: usize,
    crop: CropBox,
    out_h: usize,
    out_w: usize,
    interp: Interp,
) -> Vec<f32> {
    debug_assert_eq!(img.len(), h * w);
    let sy = crop.height as f64 / out_h as f64;
    let sx = crop.width as f64 / out_w as f64;
    let mut out = vec![0.0f32; out_h * out_w];
    for i in 0..out_h {
        for j in 0..out_w {
            out[i * out_w + j] = match interp {
                Interp::Nearest => {
                    let y = crop.top + (((i as f64 + 0.5) * sy) as usize).min(crop.height - 1);
                    let x = crop.left + (((j as f64 + 0.5) * sx) as usize).min(crop.width - 1);
                    img[y * w + x]
                }
                Interp::Bilinear => {
                    let fy = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (crop.height - 1) as f64);
                    let fx = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (crop.width - 1) as f64);
                    let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(crop.height - 1), (x0 + 1).min(crop.width - 1));
                    let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
                    let px = |y: usize, x: usize| img[(crop.top + y) * w + crop.left + x] as f64;
                    let top = px(y0, x0) * (1.0 - tx) + px(y0, x1) * tx;
                    let bot = px(y1, x0) * (1.0 - tx) + px(y1, x1) * tx;
                    (top * (1.0 - ty) + bot * ty) as f32
                }
            };
        }
    }
    out
}

/// Random crop followed by a resize to `out_hw`; returns the view and its
/// style parameters (flip bit unset).
pub fn random_resized_crop(
    img: &[f32],
    hw: (usize, usize),
    scale_lo: f64,
    ratio: (f64, f64),
    out_hw: (usize, usize),
    interp: Interp,
    rng: &mut Rng,
) -> Result<(Vec<f32>, StyleParams)> {
    let (h, w) = hw;
    if img.len() != h * w {
        return Err(Error::Dimension(format!(
            "image has {} pixels, expected {h}×{w}",
            img.len()
        )));
    }
    if !(scale_lo > 0.0 && scale_lo <= 1.0) {
        return Err(Error::Config(format!("crop scale must be in (0, 1], got {scale_lo}")));
    }
    if !(ratio.0 > 0.0 && ratio.0 <= ratio.1) {
        return Err(Error::Config(format!("crop ratio range {ratio:?} is invalid")));
    }
    let crop = sample_crop(h, w, scale_lo, ratio, rng);
    let out = resize_crop(img, h, w, crop, out_hw.0, out_hw.1, interp);
    let style = StyleParams {
        center_x: (crop.left as f64 + crop.width as f64 / 2.0) / w as f64,
        center_y: (crop.top as f64 + crop.height as f64 / 2.0) / h as f64,
        scale: (crop.width * crop.height) as f64 / (h * w) as f64,
        flipped: false,
    };
    Ok((out, style))
}

/// Mirrors the image in place.
pub fn flip(img: &mut [f32], h: usize, w: usize, axis: FlipAxis) {
    match axis {
        FlipAxis::Horizontal => {
            for row in img.chunks_mut(w) {
                row.reverse();
            }
        }
        FlipAxis::Vertical => {
            for i in 0..h / 2 {
                for j in 0..w {
                    img.swap(i * w + j, (h - 1 - i) * w + j);
                }
            }
        }
    }
}

/// Flips with probability `p`; returns whether it did.
pub fn random_flip(img: &mut [f32], h: usize, w: usize, axis: FlipAxis, p: f64, rng: &mut Rng) -> bool {
    let hit = rng.bernoulli(p);
    if hit {
        flip(img, h, w, axis);
    }
    hit
}

/// Per-view augmentation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// `None` disables cropping.
    pub crop_scale: Option<f64>,
    pub crop_ratio: (f64, f64),
    pub flip_p: f64,
    pub flip_axis: FlipAxis,
    pub interp: Interp,
    /// Re-binarise after resampling at this threshold.
    pub binarize: Option<f32>,
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self {
            crop_scale: None,
            crop_ratio: (1.0, 1.0),
            flip_p: 0.0,
            flip_axis: FlipAxis::Horizontal,
            interp: Interp::Bilinear,
            binarize: None,
        }
    }

    /// Crop scale 0.4, ratio [0.75, 1.3], flip probability 0.5, binarised.
    pub fn mnist() -> Self {
        Self {
            crop_scale: Some(0.4),
            crop_ratio: (0.75, 1.3),
            flip_p: 0.5,
            flip_axis: FlipAxis::Horizontal,
            interp: Interp::Bilinear,
            binarize: Some(0.5),
        }
    }

    /// Applies the pipeline to one image.
    pub fn apply(&self, img: &[f32], h: usize, w: usize, rng: &mut Rng) -> Result<(Vec<f32>, StyleParams)> {
        let (mut out, mut style) = match self.crop_scale {
            Some(s) => random_resized_crop(img, (h, w), s, self.crop_ratio, (h, w), self.interp, rng)?,
            None => (img.to_vec(), StyleParams::identity()),
        };
        if self.flip_p > 0.0 {
            style.flipped = random_flip(&mut out, h, w, self.flip_axis, self.flip_p, rng);
        }
        if let Some(t) = self.binarize {
            binarize(&mut out, t);
        }
        Ok((out, style))
    }
}

/// `J` views of one source with their recorded style parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub source: usize,
    pub views: Vec<Vec<f32>>,
    pub style: Vec<StyleParams>,
}

impl ViewSet {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Draws `views` independent augmentations of `img`.
///
/// View `j` uses its own stream derived from `(seed, epoch, source, j)`, so
/// results do not depend on the order sources are processed in.
pub fn make_views(
    img: &[f32],
    hw: (usize, usize),
    views: usize,
    cfg: &AugmentConfig,
    seed: u64,
    epoch: u64,
    source: usize,
) -> Result<ViewSet> {
    if views == 0 {
        return Err(Error::Precondition("make_views needs at least one view".into()));
    }
    let mut out = Vec::with_capacity(views);
    let mut style = Vec::with_capacity(views);
    for j in 0..views {
        let mut rng = Rng::derive(
            seed,
            crate::numerics::Stream::Augment,
            &[epoch, source as u64, j as u64],
        );
        let (v, s) = cfg.apply(img, hw.0, hw.1, &mut rng)?;
        out.push(v);
        style.push(s);
    }
    Ok(ViewSet {
        source,
        views: out,
        style,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn ramp(h: usize, w: usize) -> Vec<f32> {
        (0..h * w).map(|i| i as f32 / (h * w) as f32).collect()
    }

    #[test]
    fn binarize_rules() {
        let mut a = vec![0.6f32; 9];
        binarize(&mut a, 0.5);
        assert!(a.iter().all(|&v| v == 1.0));
        let mut b = vec![0.5f32, 0.49999, 0.0, 1.0];
        binarize(&mut b, 0.5);
        assert_eq!(b, vec![1.0, 0.0, 0.0, 1.0]);
        let once = b.clone();
        binarize(&mut b, 0.5);
        assert_eq!(b, once);
    }

    #[test]
    fn full_crop_is_identity() {
        let img = ramp(28, 28);
        let mut rng = Rng::new(1);
        let (out, style) =
            random_resized_crop(&img, (28, 28), 1.0, (1.0, 1.0), (28, 28), Interp::Bilinear, &mut rng).unwrap();
        assert_eq!(out, img);
        assert_eq!(style.scale, 1.0);
        assert_eq!((style.center_x, style.center_y), (0.5, 0.5));
    }

    #[test]
    fn full_crop_resize_matches_direct_resize() {
        let img = ramp(8, 8);
        let mut rng = Rng::new(1);
        let (out, _) =
            random_resized_crop(&img, (8, 8), 1.0, (1.0, 1.0), (4, 4), Interp::Bilinear, &mut rng).unwrap();
        let full = CropBox {
            top: 0,
            left: 0,
            height: 8,
            width: 8,
        };
        assert_eq!(out, resize_crop(&img, 8, 8, full, 4, 4, Interp::Bilinear));
        // Downsampling by 2 averages 2×2 blocks of a linear ramp.
        let expect = (img[0] + img[1] + img[8] + img[9]) / 4.0;
        assert!((out[0] - expect).abs() < 1e-6);
    }

    #[test]
    fn crop_is_deterministic_and_sized() {
        let img = ramp(28, 28);
        let run = |seed| {
            random_resized_crop(&img, (28, 28), 0.4, (0.75, 1.3), (28, 28), Interp::Bilinear, &mut Rng::new(seed))
                .unwrap()
        };
        assert_eq!(run(5), run(5));
        assert_eq!(run(5).0.len(), 784);
        let mut rng = Rng::new(6);
        for _ in 0..1000 {
            let c = sample_crop(28, 28, 0.4, (0.75, 1.3), &mut rng);
            let frac = (c.width * c.height) as f64 / 784.0;
            assert!(c.top + c.height <= 28 && c.left + c.width <= 28);
            assert!(frac > 0.35 && frac <= 1.0, "{c:?}");
        }
    }

    #[test]
    fn impossible_crop_falls_back_to_full_image() {
        // A 1×50 strip cannot host a near-square crop of most areas.
        let mut rng = Rng::new(2);
        let c = sample_crop(1, 50, 0.9, (1.0, 1.0), &mut rng);
        assert_eq!(c, CropBox { top: 0, left: 0, height: 1, width: 50 });
    }

    #[test]
    fn flip_rules() {
        let img = ramp(3, 4);
        let mut a = img.clone();
        assert!(!random_flip(&mut a, 3, 4, FlipAxis::Horizontal, 0.0, &mut Rng::new(1)));
        assert_eq!(a, img);
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            let mut b = img.clone();
            flip(&mut b, 3, 4, axis);
            assert_ne!(b, img);
            flip(&mut b, 3, 4, axis);
            assert_eq!(b, img);
        }
        let mut h = img.clone();
        flip(&mut h, 3, 4, FlipAxis::Horizontal);
        assert_eq!(h[0], img[3]);
        let mut v = img.clone();
        flip(&mut v, 3, 4, FlipAxis::Vertical);
        assert_eq!(v[0], img[8]);
    }

    #[test]
    fn flip_rate_matches_probability() {
        let mut rng = Rng::new(3);
        let mut px = [0.0f32; 2];
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| random_flip(&mut px, 1, 2, FlipAxis::Horizontal, 0.3, &mut rng))
            .count();
        assert!((hits as f64 / n as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn views_identity_and_determinism() {
        let img = ramp(6, 6);
        let id = make_views(&img, (6, 6), 4, &AugmentConfig::identity(), 1, 0, 3).unwrap();
        assert!(id.views.iter().all(|v| *v == img));
        assert_eq!(id.style.len(), 4);
        let cfg = AugmentConfig::mnist();
        let a = make_views(&img, (6, 6), 10, &cfg, 9, 2, 3).unwrap();
        let b = make_views(&img, (6, 6), 10, &cfg, 9, 2, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.views.iter().flatten().all(|&p| p == 0.0 || p == 1.0));
        let c = make_views(&img, (6, 6), 10, &cfg, 9, 3, 3).unwrap();
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn crops_stay_in_bounds(seed in 0u64..500, h in 2usize..40, w in 2usize..40, lo in 0.05f64..1.0) {
            let c = sample_crop(h, w, lo, (0.75, 1.3), &mut Rng::new(seed));
            prop_assert!(c.height >= 1 && c.width >= 1);
            prop_assert!(c.top + c.height <= h && c.left + c.width <= w);
        }
    }
}
