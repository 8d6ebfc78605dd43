//! Plane-level interpolation helpers shared by the model (multi-scale
//! prediction), augmentation (scaling/rotation) and non-maximum suppression
//! (sub-pixel neighbour lookup). A plane is a row-major h*w slice.

/// Bilinear sample at real coordinates (y, x); coordinates are clamped to the
/// valid range, which replicates the border.
pub fn bilinear_sample(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    debug_assert_eq!(plane.len(), h * w);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let v00 = plane[y0 * w + x0];
    let v01 = plane[y0 * w + x1];
    let v10 = plane[y1 * w + x0];
    let v11 = plane[y1 * w + x1];
    v00 * (1.0 - fy) * (1.0 - fx)
        + v01 * (1.0 - fy) * fx
        + v10 * fy * (1.0 - fx)
        + v11 * fy * fx
}

/// Bilinear resize with pixel-center alignment:
/// src = (dst + 0.5) * size_ratio - 0.5. Resizing to the same size is the
/// identity.
pub fn resize_bilinear(plane: &[f64], h: usize, w: usize, nh: usize, nw: usize) -> Vec<f64> {
    debug_assert_eq!(plane.len(), h * w);
    assert!(nh > 0 && nw > 0, "resize target must be positive");
    if nh == h && nw == w {
        return plane.to_vec();
    }
    let sy = h as f64 / nh as f64;
    let sx = w as f64 / nw as f64;
    let mut out = vec![0.0; nh * nw];
    for oy in 0..nh {
        let y = (oy as f64 + 0.5) * sy - 0.5;
        for ox in 0..nw {
            let x = (ox as f64 + 0.5) * sx - 0.5;
            out[oy * nw + ox] = bilinear_sample(plane, h, w, y, x);
        }
    }
    out
}

/// Nearest-neighbour resize with the same pixel-center alignment; used for
/// annotations, which must stay binary.
pub fn resize_nearest(plane: &[u8], h: usize, w: usize, nh: usize, nw: usize) -> Vec<u8> {
    debug_assert_eq!(plane.len(), h * w);
    assert!(nh > 0 && nw > 0, "resize target must be positive");
    if nh == h && nw == w {
        return plane.to_vec();
    }
    let sy = h as f64 / nh as f64;
    let sx = w as f64 / nw as f64;
    let mut out = vec![0u8; nh * nw];
    for oy in 0..nh {
        let y = (((oy as f64 + 0.5) * sy - 0.5).round().max(0.0) as usize).min(h - 1);
        for ox in 0..nw {
            let x = (((ox as f64 + 0.5) * sx - 0.5).round().max(0.0) as usize).min(w - 1);
            out[oy * nw + ox] = plane[y * w + x];
        }
    }
    out
}
