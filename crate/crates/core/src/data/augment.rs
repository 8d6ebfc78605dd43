//! Geometric augmentation: per-sample random scales, rotation through a
//! fixed fan of angles with an inscribed-rectangle crop, and horizontal
//! flips. Right-angle rotations take a lossless integer path; everything
//! else is resampled (bilinear for images, nearest for annotations).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{stream_seed, Image, Sample};
use crate::error::{Error, Result};
use crate::grid::{bilinear_sample, resize_bilinear, resize_nearest};
use crate::loss::GroundTruth;

/// Variants whose final canvas is smaller than this on either side are
/// dropped and counted instead of emitted.
pub const MIN_CROP: usize = 16;

#[derive(Debug, Clone)]
pub struct AugmentSpec {
    pub scale_min: f64,
    pub scale_max: f64,
    pub scales_per_sample: usize,
    pub rotations: usize,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            scale_min: 0.7,
            scale_max: 1.3,
            scales_per_sample: 2,
            rotations: 16,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_min.is_finite() && self.scale_max.is_finite())
            || self.scale_min <= 0.0
            || self.scale_min > self.scale_max
        {
            return Err(Error::Config(format!(
                "scale range [{}, {}] must be positive and ordered",
                self.scale_min, self.scale_max
            )));
        }
        if self.scales_per_sample == 0 {
            return Err(Error::Config("scales-per-sample must be at least 1".into()));
        }
        if self.rotations == 0 {
            return Err(Error::Config("rotation count must be at least 1".into()));
        }
        Ok(())
    }

    /// Variants attempted per sample (before drops): scales x rotations x 2
    /// flips.
    pub fn variants_per_sample(&self) -> usize {
        self.scales_per_sample * self.rotations * 2
    }
}

#[derive(Debug)]
pub struct AugmentOutcome {
    pub samples: Vec<Sample>,
    pub dropped: usize,
}

/// Quarter-turn: output dims (w, h), out[oy][ox] = src[h-1-ox][oy].
fn rot90<T: Copy>(src: &[T], h: usize, w: usize) -> Vec<T> {
    debug_assert_eq!(src.len(), h * w);
    let mut out = Vec::with_capacity(h * w);
    for oy in 0..w {
        for ox in 0..h {
            out.push(src[(h - 1 - ox) * w + oy]);
        }
    }
    out
}

fn flip_h<T: Copy>(src: &[T], h: usize, w: usize) -> Vec<T> {
    debug_assert_eq!(src.len(), h * w);
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            out.push(src[r * w + w - 1 - c]);
        }
    }
    out
}

/// Largest axis-aligned rectangle (width, height) fully inside an
/// axis-aligned ws x hs rectangle rotated by theta. Closed form: either two
/// opposite crop corners touch the longer sides (near-square or steep
/// angles), or each crop side touches one rotated side.
fn inscribed_rect(ws: f64, hs: f64, theta: f64) -> (f64, f64) {
    let sin_a = theta.sin().abs();
    let cos_a = theta.cos().abs();
    if sin_a < 1e-12 {
        return (ws, hs);
    }
    if cos_a < 1e-12 {
        return (hs, ws);
    }
    let (long, short) = if ws >= hs { (ws, hs) } else { (hs, ws) };
    if short <= 2.0 * sin_a * cos_a * long || (sin_a - cos_a).abs() < 1e-10 {
        let x = 0.5 * short;
        if ws >= hs {
            (x / sin_a, x / cos_a)
        } else {
            (x / cos_a, x / sin_a)
        }
    } else {
        let cos_2a = cos_a * cos_a - sin_a * sin_a;
        (
            (ws * cos_a - hs * sin_a) / cos_2a,
            (hs * cos_a - ws * sin_a) / cos_2a,
        )
    }
}

struct Planes {
    channels: usize,
    h: usize,
    w: usize,
    image: Vec<Vec<f64>>,
    truth: Vec<u8>,
}

impl Planes {
    fn from_sample(sample: &Sample) -> Self {
        Planes {
            channels: sample.image.channels(),
            h: sample.image.h(),
            w: sample.image.w(),
            image: (0..sample.image.channels())
                .map(|c| sample.image.plane(c).to_vec())
                .collect(),
            truth: sample.truth.values().to_vec(),
        }
    }

    fn scale_to(&mut self, nh: usize, nw: usize) {
        for plane in &mut self.image {
            *plane = resize_bilinear(plane, self.h, self.w, nh, nw);
        }
        self.truth = resize_nearest(&self.truth, self.h, self.w, nh, nw);
        self.h = nh;
        self.w = nw;
    }

    fn rot90_exact(&mut self, quarter_turns: usize) {
        for _ in 0..quarter_turns % 4 {
            for plane in &mut self.image {
                *plane = rot90(plane, self.h, self.w);
            }
            self.truth = rot90(&self.truth, self.h, self.w);
            std::mem::swap(&mut self.h, &mut self.w);
        }
    }

    fn rotate_crop(&mut self, theta: f64) -> bool {
        let (hs, ws) = (self.h as f64, self.w as f64);
        let (sin_t, cos_t) = theta.sin_cos();
        let canvas_h = (ws * sin_t.abs() + hs * cos_t.abs()).ceil();
        let canvas_w = (ws * cos_t.abs() + hs * sin_t.abs()).ceil();
        let (crop_wf, crop_hf) = inscribed_rect(ws, hs, theta);
        let crop_w = crop_wf.floor() as usize;
        let crop_h = crop_hf.floor() as usize;
        if crop_w == 0 || crop_h == 0 {
            return false;
        }
        let y0 = (canvas_h - crop_h as f64) / 2.0;
        let x0 = (canvas_w - crop_w as f64) / 2.0;
        let (cyc, cxc) = ((canvas_h - 1.0) / 2.0, (canvas_w - 1.0) / 2.0);
        let (cys, cxs) = ((hs - 1.0) / 2.0, (ws - 1.0) / 2.0);
        let src_of = |oy: f64, ox: f64| {
            let yo = oy - cyc;
            let xo = ox - cxc;
            (
                -xo * sin_t + yo * cos_t + cys,
                xo * cos_t + yo * sin_t + cxs,
            )
        };
        let mut planes_out: Vec<Vec<f64>> = Vec::with_capacity(self.channels);
        for plane in &self.image {
            let mut out = Vec::with_capacity(crop_h * crop_w);
            for r in 0..crop_h {
                for c in 0..crop_w {
                    let (ys, xs) = src_of(y0 + r as f64, x0 + c as f64);
                    out.push(bilinear_sample(plane, self.h, self.w, ys, xs));
                }
            }
            planes_out.push(out);
        }
        let mut truth_out = Vec::with_capacity(crop_h * crop_w);
        for r in 0..crop_h {
            for c in 0..crop_w {
                let (ys, xs) = src_of(y0 + r as f64, x0 + c as f64);
                let (ri, ci) = (ys.round(), xs.round());
                let v = if ri >= 0.0 && ci >= 0.0 && (ri as usize) < self.h && (ci as usize) < self.w
                {
                    self.truth[ri as usize * self.w + ci as usize]
                } else {
                    0
                };
                truth_out.push(v);
            }
        }
        self.image = planes_out;
        self.truth = truth_out;
        self.h = crop_h;
        self.w = crop_w;
        true
    }

    fn flip(&mut self) {
        for plane in &mut self.image {
            *plane = flip_h(plane, self.h, self.w);
        }
        self.truth = flip_h(&self.truth, self.h, self.w);
    }

    fn into_sample(self, id: String) -> Sample {
        let data = self.image.concat();
        Sample {
            id,
            image: Image::new(self.channels, self.h, self.w, data).expect("planes consistent"),
            truth: GroundTruth::new(self.h, self.w, self.truth).expect("binary preserved"),
        }
    }
}

/// Applies one (scale, rotation step, flip) variant. Rotations whose angle
/// is a multiple of 90 degrees go through the exact integer path; the rest
/// rotate into an enlarged canvas and crop the largest inscribed rectangle.
/// Returns None when the result falls under MIN_CROP on either side.
pub fn transform_sample(
    sample: &Sample,
    scale: f64,
    rot_k: usize,
    rotations: usize,
    flip: bool,
) -> Result<Option<Sample>> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::Usage(format!("scale {} must be positive", scale)));
    }
    if rotations == 0 || rot_k >= rotations {
        return Err(Error::Usage(format!(
            "rotation step {} outside 0..{}",
            rot_k, rotations
        )));
    }
    let mut planes = Planes::from_sample(sample);
    let nh = ((planes.h as f64 * scale).round() as usize).max(1);
    let nw = ((planes.w as f64 * scale).round() as usize).max(1);
    if (nh, nw) != (planes.h, planes.w) {
        planes.scale_to(nh, nw);
    }
    if (4 * rot_k) % rotations == 0 {
        planes.rot90_exact((4 * rot_k / rotations) % 4);
    } else {
        let theta = rot_k as f64 * std::f64::consts::TAU / rotations as f64;
        if !planes.rotate_crop(theta) {
            return Ok(None);
        }
    }
    if flip {
        planes.flip();
    }
    if planes.h < MIN_CROP || planes.w < MIN_CROP {
        return Ok(None);
    }
    Ok(Some(planes.into_sample(sample.id.clone())))
}

/// Expands one sample into its scale x rotation x flip variants. Scales are
/// stratified draws: stratum k of scales-per-sample covers an equal slice of
/// [scale_min, scale_max], drawn from a stream seeded by (seed, sample id,
/// k) so results do not depend on processing order.
pub fn augment(sample: &Sample, spec: &AugmentSpec) -> Result<AugmentOutcome> {
    spec.validate()?;
    let mut samples = Vec::new();
    let mut dropped = 0usize;
    let seg = (spec.scale_max - spec.scale_min) / spec.scales_per_sample as f64;
    for k in 0..spec.scales_per_sample {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, &sample.id, k as u64));
        let lo = spec.scale_min + seg * k as f64;
        let scale = if seg > 0.0 {
            rng.random_range(lo..lo + seg)
        } else {
            spec.scale_min
        };
        for rot_k in 0..spec.rotations {
            for flip in [false, true] {
                match transform_sample(sample, scale, rot_k, spec.rotations, flip)? {
                    Some(mut s) => {
                        s.id = format!(
                            "{}_s{:.3}_r{}_f{}",
                            sample.id,
                            scale,
                            rot_k,
                            u8::from(flip)
                        );
                        samples.push(s);
                    }
                    None => dropped += 1,
                }
            }
        }
    }
    Ok(AugmentOutcome { samples, dropped })
}
