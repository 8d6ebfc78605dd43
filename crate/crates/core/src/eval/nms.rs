//! Edge non-maximal suppression. The response map is Gaussian-smoothed, the
//! per-pixel suppression direction comes from the structure tensor of the
//! smoothed map (dominant gradient orientation in the neighborhood, which
//! stays perpendicular to a curve even at its endpoints, where the raw
//! gradient turns parallel and would erode the curve tip), and a pixel
//! survives when its smoothed value is no more than 1% below both smoothed
//! neighbors interpolated at +/-1 px along that direction. Pixels whose raw
//! value dominates both raw interpolated neighbors by 10% or more are kept
//! outright: that preserves thin well-separated curves (whose smoothed bumps
//! can merge) without keeping any interior pixel of a constant plateau.

use crate::grid::bilinear_sample;
use crate::loss::{EdgeMap, P_MIN};

pub const NMS_SIGMA: f64 = 1.5;
pub const NMS_RADIUS: usize = 4;
const SLACK: f64 = 0.99;
const RAW_DOMINANCE: f64 = 0.9;
const FLAT_EPS: f64 = 1e-24;

fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let mut k: Vec<f64> = (0..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_smooth(values: &[f64], h: usize, w: usize, sigma: f64, radius: usize) -> Vec<f64> {
    debug_assert_eq!(values.len(), h * w);
    let k = gaussian_kernel(sigma, radius);
    let r = radius as isize;
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                let xs = (x as isize + d).clamp(0, w as isize - 1) as usize;
                acc += k[d.unsigned_abs()] * values[y * w + xs];
            }
            rows[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                let ys = (y as isize + d).clamp(0, h as isize - 1) as usize;
                acc += k[d.unsigned_abs()] * rows[ys * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn central_gradients(s: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            gx[y * w + x] = (s[y * w + xp] - s[y * w + xm]) / 2.0;
            gy[y * w + x] = (s[yp * w + x] - s[ym * w + x]) / 2.0;
        }
    }
    (gx, gy)
}

/// Unit eigenvector for the larger eigenvalue of [[jxx, jxy], [jxy, jyy]].
fn principal_direction(jxx: f64, jxy: f64, jyy: f64) -> (f64, f64) {
    let half_diff = (jxx - jyy) / 2.0;
    let disc = (half_diff * half_diff + jxy * jxy).sqrt();
    let lead = (jxx + jyy) / 2.0 + disc;
    // Two algebraic forms of the eigenvector; take the better-conditioned.
    let (ax, ay) = (jxy, lead - jxx);
    let (bx, by) = (lead - jyy, jxy);
    let (vx, vy) = if ax * ax + ay * ay >= bx * bx + by * by {
        (ax, ay)
    } else {
        (bx, by)
    };
    let norm = (vx * vx + vy * vy).sqrt();
    if norm < 1e-18 {
        (1.0, 0.0)
    } else {
        (vx / norm, vy / norm)
    }
}

/// One suppression sweep. Kept pixels copy their input value exactly;
/// suppressed pixels drop to the EdgeMap floor. Returns whether anything
/// changed.
fn suppress_pass(raw: &[f64], h: usize, w: usize) -> (Vec<f64>, bool) {
    let smoothed = gaussian_smooth(raw, h, w, NMS_SIGMA, NMS_RADIUS);
    let (gx, gy) = central_gradients(&smoothed, h, w);
    let mut jxx: Vec<f64> = gx.iter().map(|g| g * g).collect();
    let mut jxy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let mut jyy: Vec<f64> = gy.iter().map(|g| g * g).collect();
    jxx = gaussian_smooth(&jxx, h, w, NMS_SIGMA, NMS_RADIUS);
    jxy = gaussian_smooth(&jxy, h, w, NMS_SIGMA, NMS_RADIUS);
    jyy = gaussian_smooth(&jyy, h, w, NMS_SIGMA, NMS_RADIUS);

    let mut out = vec![P_MIN; h * w];
    let mut changed = false;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let keep = if jxx[i] + jyy[i] < FLAT_EPS {
                true
            } else {
                let (ux, uy) = principal_direction(jxx[i], jxy[i], jyy[i]);
                let (yf, xf) = (y as f64, x as f64);
                let s_fwd = bilinear_sample(&smoothed, h, w, yf + uy, xf + ux);
                let s_bwd = bilinear_sample(&smoothed, h, w, yf - uy, xf - ux);
                if smoothed[i] >= SLACK * s_fwd && smoothed[i] >= SLACK * s_bwd {
                    true
                } else {
                    let r_fwd = bilinear_sample(raw, h, w, yf + uy, xf + ux);
                    let r_bwd = bilinear_sample(raw, h, w, yf - uy, xf - ux);
                    r_fwd <= RAW_DOMINANCE * raw[i] && r_bwd <= RAW_DOMINANCE * raw[i]
                }
            };
            if keep {
                out[i] = raw[i];
            } else if raw[i] > P_MIN {
                changed = true;
            }
        }
    }
    (out, changed)
}

/// Thins an edge probability map. The suppression sweep is iterated until it
/// stops removing pixels; each sweep only zeroes pixels and never alters a
/// survivor, so the kept set shrinks monotonically, the loop terminates, and
/// the result is a true fixpoint: running nms_thin on its own output returns
/// it unchanged.
pub fn nms_thin(p: &EdgeMap) -> EdgeMap {
    let (h, w) = (p.h(), p.w());
    let mut cur = p.clone();
    loop {
        let (next, changed) = suppress_pass(cur.values(), h, w);
        if !changed {
            return cur;
        }
        cur = EdgeMap::new(h, w, next).expect("suppression keeps values in range");
    }
}
