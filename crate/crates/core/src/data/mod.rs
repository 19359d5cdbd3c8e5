//! IDX ingestion, view augmentation and the synthetic generator.

mod augment;
mod idx;
mod synth;

pub use augment::{
    binarize, flip, make_views, random_flip, random_resized_crop, resize_crop, sample_crop,
    AugmentConfig, CropBox, FlipAxis, Interp, StyleParams, ViewSet,
};
pub use idx::{
    data_root, idx_images, idx_labels, load_idx, load_mnist_split, locate_idx_dir, parse_idx, IdxArray,
    Split, IMAGE_MAGIC, LABEL_MAGIC,
};
pub use synth::{exact_posterior_linear_gaussian, synth_generate, LinearGaussianPosterior, SynthConfig, SynthDataset};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Grayscale images `[N, H, W]` in `[0, 1]` with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub name: String,
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
}

impl ImageDataset {
    pub fn new(name: impl Into<String>, images: Tensor<f32>, labels: Vec<usize>) -> Result<Self> {
        if images.ndim() != 3 {
            return Err(Error::Dimension(format!(
                "images must be [N, H, W], got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if let Some(p) = images.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Data(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            name: name.into(),
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn hw(&self) -> (usize, usize) {
        (self.images.shape()[1], self.images.shape()[2])
    }

    pub fn pixels(&self) -> usize {
        let (h, w) = self.hw();
        h * w
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let p = self.pixels();
        &self.images.data()[i * p..(i + 1) * p]
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let (h, w) = self.hw();
        let mut data = Vec::with_capacity(idx.len() * h * w);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.len() {
                return Err(Error::Data(format!("index {i} out of range for {} images", self.len())));
            }
            data.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Self::new(self.name.clone(), Tensor::new(vec![idx.len(), h, w], data)?, labels)
    }

    /// The first `n` images (all of them when `n` exceeds the size).
    pub fn head(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn binarized(&self, threshold: f32) -> Self {
        let mut out = self.clone();
        binarize(out.images.data_mut(), threshold);
        out
    }
}

/// Training/evaluation data as the training loop and evaluators see it.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Dataset {
    /// Views come from the augmentation pipeline.
    Images {
        data: ImageDataset,
        augment: AugmentConfig,
    },
    /// Views are the stored synthetic samples of each source.
    Synth(SynthDataset),
}

impl Dataset {
    pub fn name(&self) -> &str {
        match self {
            Dataset::Images { data, .. } => &data.name,
            Dataset::Synth(_) => "synth",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Images { data, .. } => data.len(),
            Dataset::Synth(s) => s.n_sources(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Dataset::Images { data, .. } => data.pixels(),
            Dataset::Synth(s) => s.config.d_x,
        }
    }

    pub fn labels(&self) -> &[usize] {
        match self {
            Dataset::Images { data, .. } => &data.labels,
            Dataset::Synth(s) => &s.y,
        }
    }

    /// Largest number of views a source can provide, if bounded.
    pub fn max_views(&self) -> Option<usize> {
        match self {
            Dataset::Images { .. } => None,
            Dataset::Synth(s) => Some(s.config.j),
        }
    }

    /// `views` rows for source `i`, flattened view-major.
    pub fn views(&self, i: usize, views: usize, seed: u64, epoch: u64) -> Result<Vec<f32>> {
        match self {
            Dataset::Images { data, augment } => {
                let vs = make_views(data.image(i), data.hw(), views, augment, seed, epoch, i)?;
                Ok(vs.views.concat())
            }
            Dataset::Synth(s) => {
                if views > s.config.j {
                    return Err(Error::Config(format!(
                        "synthetic data has {} views per source, {views} requested",
                        s.config.j
                    )));
                }
                Ok((0..views).flat_map(|j| s.view(i, j).iter().map(|&v| v as f32)).collect())
            }
        }
    }

    /// The un-augmented input of datum `i` used for evaluation.
    pub fn eval_input(&self, i: usize) -> Vec<f32> {
        match self {
            Dataset::Images { data, .. } => data.image(i).to_vec(),
            Dataset::Synth(s) => s.view(i, 0).iter().map(|&v| v as f32).collect(),
        }
    }

    /// Style variables aligned with [`Dataset::eval_input`], where known.
    pub fn style(&self) -> Option<(Vec<String>, Tensor<f64>)> {
        match self {
            Dataset::Images { .. } => None,
            Dataset::Synth(s) => {
                let d = s.config.d_z;
                let names = (0..d).map(|k| format!("delta_{k}")).collect();
                let mut rows = Vec::with_capacity(s.n_sources() * d);
                for i in 0..s.n_sources() {
                    rows.extend_from_slice(s.delta_of(i, 0));
                }
                Some((names, Tensor::new(vec![s.n_sources(), d], rows).ok()?))
            }
        }
    }

    /// Training and test source indices.
    ///
    /// Image datasets come with their own splits so all rows train; synthetic
    /// data holds out every fifth source.
    pub fn split(&self) -> (Vec<usize>, Vec<usize>) {
        match self {
            Dataset::Images { data, .. } => ((0..data.len()).collect(), Vec::new()),
            Dataset::Synth(s) => s.split(),
        }
    }

    /// Sources used for training.
    pub fn train_sources(&self) -> Vec<usize> {
        self.split().0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ImageDataset {
        let t = Tensor::new(vec![3, 2, 2], (0..12).map(|i| i as f32 / 11.0).collect()).unwrap();
        ImageDataset::new("tiny", t, vec![0, 1, 2]).unwrap()
    }

    #[test]
    fn validation() {
        let t = Tensor::new(vec![2, 1, 1], vec![0.0f32, 1.5]).unwrap();
        assert!(matches!(ImageDataset::new("x", t, vec![0, 1]), Err(Error::Data(_))));
        let t = Tensor::new(vec![2, 1, 1], vec![0.0f32, 0.5]).unwrap();
        assert!(matches!(ImageDataset::new("x", t, vec![0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn subset_and_head() {
        let d = tiny();
        let s = d.subset(&[2, 0]).unwrap();
        assert_eq!(s.labels, vec![2, 0]);
        assert_eq!(s.image(0), d.image(2));
        assert_eq!(d.head(10).unwrap().len(), 3);
        assert!(d.subset(&[3]).is_err());
        assert_eq!(d.n_classes(), 3);
    }

    #[test]
    fn image_views_are_deterministic() {
        let ds = Dataset::Images {
            data: tiny().binarized(0.5),
            augment: AugmentConfig::mnist(),
        };
        let a = ds.views(1, 3, 7, 0).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a, ds.views(1, 3, 7, 0).unwrap());
        assert_eq!(ds.eval_input(1), tiny().binarized(0.5).image(1));
        assert!(ds.style().is_none());
    }
}
