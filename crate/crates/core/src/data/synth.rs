//! Synthetic scene generator. Scenes are built as integer label maps
//! (background -1, shapes numbered in draw order, later shapes occlude
//! earlier ones) so the boundary annotation can be derived exactly from
//! label transitions instead of re-detecting edges in the rendered image.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{stream_seed, Image, Sample};
use crate::error::{Error, Result};
use crate::loss::GroundTruth;

const SHAPE_MARGIN: usize = 3;
const MIN_FILL_CONTRAST: f64 = 0.2;
const FILL_RETRIES: usize = 40;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub shapes_min: usize,
    pub shapes_max: usize,
    pub ellipses: bool,
    pub polygons: bool,
    pub fill_min: f64,
    pub fill_max: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            width: 64,
            height: 64,
            shapes_min: 2,
            shapes_max: 5,
            ellipses: true,
            polygons: true,
            fill_min: 0.1,
            fill_max: 0.9,
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::Config(format!(
                "scene dimensions must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if self.shapes_min == 0 || self.shapes_min > self.shapes_max {
            return Err(Error::Config(format!(
                "shape count range {}..={} is invalid",
                self.shapes_min, self.shapes_max
            )));
        }
        if !self.ellipses && !self.polygons {
            return Err(Error::Config(
                "at least one shape family must be enabled".into(),
            ));
        }
        if !(self.fill_min.is_finite() && self.fill_max.is_finite())
            || self.fill_min < 0.0
            || self.fill_max > 1.0
            || self.fill_min > self.fill_max
        {
            return Err(Error::Config(format!(
                "fill range [{}, {}] must sit inside [0, 1]",
                self.fill_min, self.fill_max
            )));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Config(format!(
                "noise sigma {} must be finite and non-negative",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// A pixel is boundary when some 4-neighbor holds a different label with a
/// lower rank (background is rank -1), so each contour is one pixel thick and
/// sits on the occluding side. The outermost pixel ring is always clear.
pub fn boundary_from_labels(labels: &[i32], h: usize, w: usize) -> GroundTruth {
    assert_eq!(labels.len(), h * w, "label map size mismatch");
    let mut out = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            if r == 0 || r + 1 == h || c == 0 || c + 1 == w {
                continue;
            }
            let me = labels[r * w + c];
            let neighbors = [
                labels[(r - 1) * w + c],
                labels[(r + 1) * w + c],
                labels[r * w + c - 1],
                labels[r * w + c + 1],
            ];
            if neighbors.iter().any(|&n| n != me && n < me) {
                out[r * w + c] = 1;
            }
        }
    }
    GroundTruth::new(h, w, out).expect("binary map is valid")
}

fn paint_ellipse(labels: &mut [i32], h: usize, w: usize, rng: &mut ChaCha8Rng, rank: i32) {
    let dim = h.min(w) as f64;
    let rx = rng.random_range(dim / 10.0..=dim / 4.0);
    let ry = rng.random_range(dim / 10.0..=dim / 4.0);
    let cx = center_in(w, rx, rng);
    let cy = center_in(h, ry, rng);
    for r in 0..h {
        for c in 0..w {
            let dx = (c as f64 - cx) / rx;
            let dy = (r as f64 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                labels[r * w + c] = rank;
            }
        }
    }
}

fn center_in(extent: usize, radius: f64, rng: &mut ChaCha8Rng) -> f64 {
    let lo = SHAPE_MARGIN as f64 + radius;
    let hi = (extent - 1 - SHAPE_MARGIN) as f64 - radius;
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        (extent as f64 - 1.0) / 2.0
    }
}

/// Convex hull via monotone chain; points are (x, y).
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len() * 2);
    for &p in pts.iter().chain(pts.iter().rev().skip(1)) {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn point_in_convex(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    if poly.len() < 3 {
        return false;
    }
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        if (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0.0 {
            return false;
        }
    }
    true
}

fn paint_polygon(labels: &mut [i32], h: usize, w: usize, rng: &mut ChaCha8Rng, rank: i32) {
    let dim = h.min(w) as f64;
    let nv = rng.random_range(3..=6usize);
    let max_r = dim / 4.0;
    let cx = center_in(w, max_r, rng);
    let cy = center_in(h, max_r, rng);
    let mut angles: Vec<f64> = (0..nv)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    let pts: Vec<(f64, f64)> = angles
        .iter()
        .map(|&a| {
            let r = rng.random_range(dim / 8.0..=max_r);
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    let hull = convex_hull(pts);
    if hull.len() < 3 {
        return;
    }
    for r in 0..h {
        for c in 0..w {
            if point_in_convex(&hull, c as f64, r as f64) {
                labels[r * w + c] = rank;
            }
        }
    }
}

fn pick_fill(rng: &mut ChaCha8Rng, spec: &SynthSpec, taken: &[f64]) -> f64 {
    let mut fill = rng.random_range(spec.fill_min..=spec.fill_max);
    for _ in 0..FILL_RETRIES {
        if taken.iter().all(|t| (t - fill).abs() >= MIN_FILL_CONTRAST) {
            break;
        }
        fill = rng.random_range(spec.fill_min..=spec.fill_max);
    }
    fill
}

fn generate_one(spec: &SynthSpec, index: usize) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, "synth", index as u64));
    let (h, w) = (spec.height, spec.width);
    let mut labels = vec![-1i32; h * w];
    let n_shapes = rng.random_range(spec.shapes_min..=spec.shapes_max);
    for rank in 0..n_shapes {
        let use_ellipse = match (spec.ellipses, spec.polygons) {
            (true, true) => rng.random_range(0..2u32) == 0,
            (true, false) => true,
            _ => false,
        };
        if use_ellipse {
            paint_ellipse(&mut labels, h, w, &mut rng, rank as i32);
        } else {
            paint_polygon(&mut labels, h, w, &mut rng, rank as i32);
        }
    }
    let mut fills = vec![pick_fill(&mut rng, spec, &[])];
    for _ in 0..n_shapes {
        let fill = pick_fill(&mut rng, spec, &fills);
        fills.push(fill);
    }
    let mut pixels = vec![0.0f64; h * w];
    for (px, &lab) in pixels.iter_mut().zip(&labels) {
        *px = fills[(lab + 1) as usize];
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        for px in &mut pixels {
            *px = (*px + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    let truth = boundary_from_labels(&labels, h, w);
    Sample {
        id: format!("synth_{:04}", index),
        image: Image::gray(h, w, pixels).expect("pixels are clamped"),
        truth,
    }
}

/// Generates `count` scenes. Each sample owns an independent random stream
/// derived from (seed, index), so sample i is identical no matter how many
/// others are requested.
pub fn synth_generate(spec: &SynthSpec, count: usize) -> Result<Vec<Sample>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::Usage("sample count must be positive".into()));
    }
    Ok((0..count).map(|i| generate_one(spec, i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_boundary_matches_perimeter_formula() {
        // An a-by-b axis-aligned block over background has exactly
        // 2a + 2b - 4 boundary pixels (the ring, corners counted once).
        for (a, b) in [(2usize, 2usize), (3, 5), (7, 4), (10, 10)] {
            let (h, w) = (a + 8, b + 8);
            let mut labels = vec![-1i32; h * w];
            for r in 4..4 + a {
                for c in 4..4 + b {
                    labels[r * w + c] = 0;
                }
            }
            let gt = boundary_from_labels(&labels, h, w);
            assert_eq!(
                gt.count_positive(),
                2 * a + 2 * b - 4,
                "block {}x{}",
                a,
                b
            );
        }
    }

    #[test]
    fn boundary_sits_on_the_occluding_shape() {
        // Shape 1 overlaps shape 0; inside the overlap the contour pixels
        // must carry shape 1's side, and shape 0 contributes no boundary
        // there.
        let (h, w) = (16, 16);
        let mut labels = vec![-1i32; h * w];
        for r in 3..9 {
            for c in 3..9 {
                labels[r * w + c] = 0;
            }
        }
        for r in 6..12 {
            for c in 6..12 {
                labels[r * w + c] = 1;
            }
        }
        let gt = boundary_from_labels(&labels, h, w);
        // Left edge of shape 1 inside shape 0: pixels (7..9, 6) neighbor
        // shape 0 on the left, so they are boundary.
        assert!(gt.get(7, 6));
        assert!(gt.get(8, 6));
        // Shape 0 pixels adjacent to shape 1 are not boundary (their
        // neighbor outranks them).
        assert!(!gt.get(7, 5));
    }

    #[test]
    fn border_ring_is_always_clear() {
        let (h, w) = (12, 12);
        let labels = vec![3i32; h * w];
        let gt = boundary_from_labels(&labels, h, w);
        assert_eq!(gt.count_positive(), 0);
    }

    #[test]
    fn generation_is_deterministic_and_per_sample_stable() {
        let spec = SynthSpec::default();
        let a = synth_generate(&spec, 3).unwrap();
        let b = synth_generate(&spec, 5).unwrap();
        for i in 0..3 {
            assert_eq!(a[i].image.data(), b[i].image.data(), "sample {}", i);
            assert_eq!(a[i].truth.values(), b[i].truth.values());
        }
        let other = SynthSpec {
            seed: 1,
            ..SynthSpec::default()
        };
        let c = synth_generate(&other, 1).unwrap();
        assert_ne!(a[0].image.data(), c[0].image.data());
    }

    #[test]
    fn scenes_have_boundaries_and_contrast() {
        let spec = SynthSpec {
            noise_sigma: 0.0,
            ..SynthSpec::default()
        };
        let samples = synth_generate(&spec, 8).unwrap();
        for s in &samples {
            assert!(s.truth.count_positive() > 0, "{} has no boundary", s.id);
            let (min, max) = s
                .image
                .data()
                .iter()
                .fold((1.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            assert!(max - min >= MIN_FILL_CONTRAST * 0.5, "{} too flat", s.id);
        }
    }

    #[test]
    fn spec_validation_rejects_bad_ranges() {
        let mut spec = SynthSpec {
            shapes_min: 0,
            ..SynthSpec::default()
        };
        assert!(spec.validate().is_err());
        spec.shapes_min = 3;
        spec.shapes_max = 2;
        assert!(spec.validate().is_err());
        spec.shapes_max = 4;
        spec.ellipses = false;
        spec.polygons = false;
        assert!(spec.validate().is_err());
        spec.polygons = true;
        spec.fill_min = 0.8;
        spec.fill_max = 0.4;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn noise_stays_in_range() {
        let spec = SynthSpec {
            noise_sigma: 0.5,
            ..SynthSpec::default()
        };
        let samples = synth_generate(&spec, 2).unwrap();
        for s in &samples {
            assert!(s.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
