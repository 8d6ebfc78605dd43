//! Dataset handling: an image raster type, netpbm I/O, synthetic scene
//! generation, geometric augmentation, and manifest files tying images to
//! their annotations.

pub mod augment;
pub mod manifest;
pub mod netpbm;
pub mod synth;

pub use augment::{augment, transform_sample, AugmentOutcome, AugmentSpec};
pub use manifest::{load_dataset, load_manifest, save_manifest, ManifestEntry};
pub use netpbm::{
    load_annotation, load_edge_map, load_image, save_annotation, save_edge_map, save_image,
};
pub use synth::{boundary_from_labels, synth_generate, SynthSpec};

use crate::error::{Error, Result};
use crate::loss::GroundTruth;
use crate::tensor::Tensor4;

/// Planar raster with 1 (gray) or 3 (rgb) channels and values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Usage(format!(
                "images have 1 or 3 channels, got {}",
                channels
            )));
        }
        if data.len() != channels * h * w {
            return Err(Error::shape(
                "Image::new",
                format!("{} values", channels * h * w),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Usage(format!(
                "image value at index {} is not finite",
                i
            )));
        }
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Image {
            channels,
            h,
            w,
            data,
        })
    }

    pub fn gray(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        Image::new(1, h, w, data)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.h + r) * self.w + col]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// (1, channels, h, w) tensor for the network.
    pub fn to_tensor(&self) -> Tensor4 {
        Tensor4::from_vec(1, self.channels, self.h, self.w, self.data.clone())
            .expect("image dims are consistent")
    }

    /// Channel-averaged grayscale copy.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let hw = self.h * self.w;
        let mut out = vec![0.0; hw];
        for c in 0..self.channels {
            for (o, v) in out.iter_mut().zip(self.plane(c)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= self.channels as f64;
        }
        Image {
            channels: 1,
            h: self.h,
            w: self.w,
            data: out,
        }
    }
}

/// One dataset element: an image with its binary boundary annotation.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub truth: GroundTruth,
}

/// Expands one image with several annotations into one sample per
/// annotation, all sharing the image. Datasets with multiple annotators are
/// trained this way instead of merging the annotations.
pub fn expand_annotations(
    id_base: &str,
    image: &Image,
    annotations: &[GroundTruth],
) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(annotations.len());
    for (k, truth) in annotations.iter().enumerate() {
        if (truth.h(), truth.w()) != (image.h(), image.w()) {
            return Err(Error::Usage(format!(
                "annotation {} dims {}x{} do not match image {}x{}",
                k,
                truth.h(),
                truth.w(),
                image.h(),
                image.w()
            )));
        }
        out.push(Sample {
            id: format!("{}_a{}", id_base, k),
            image: image.clone(),
            truth: truth.clone(),
        });
    }
    Ok(out)
}

/// Deterministic per-item stream seed: FNV-1a over (base, tag, k). Used so
/// each sample or variant gets its own reproducible random stream regardless
/// of generation order.
pub fn stream_seed(base: u64, tag: &str, k: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for b in base.to_le_bytes() {
        eat(b);
    }
    for b in tag.bytes() {
        eat(b);
    }
    for b in k.to_le_bytes() {
        eat(b);
    }
    h
}
