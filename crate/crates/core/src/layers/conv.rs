use crate::error::{Error, Result};
use crate::tensor::Tensor4;

use super::{LayerKind, LayerSpec, ParamTensor};

/// Grouped 2-D convolution. Weight layout is
/// (out_channels, in_channels/groups, kh, kw); bias is (out_channels, 1, 1, 1).
pub fn conv_forward(
    input: &Tensor4,
    weight: &Tensor4,
    bias: Option<&Tensor4>,
    spec: &LayerSpec,
) -> Result<Tensor4> {
    spec.validate()?;
    let (n, ic, h, w) = input.dims();
    if ic != spec.in_channels {
        return Err(Error::layer(
            &spec.name,
            format!("expected {} input channels, got {}", spec.in_channels, ic),
        ));
    }
    check_weight_dims(weight, spec)?;
    let (oh, ow) = spec.conv_out_dims(h, w)?;
    let oc = spec.out_channels;
    let (kh, kw) = spec.kernel;
    let stride = spec.stride;
    let pad = spec.padding as isize;
    let oc_per_g = oc / spec.groups;
    let ic_per_g = ic / spec.groups;

    let mut out = Tensor4::zeros(n, oc, oh, ow);
    for b in 0..n {
        for g in 0..spec.groups {
            for ocl in 0..oc_per_g {
                let o = g * oc_per_g + ocl;
                if let Some(bias) = bias {
                    let bv = bias.at(o, 0, 0, 0);
                    out.plane_mut(b, o).fill(bv);
                }
                for icl in 0..ic_per_g {
                    let i = g * ic_per_g + icl;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = weight.at(o, icl, ky, kx);
                            if wv == 0.0 {
                                continue;
                            }
                            accumulate_tap(
                                out.plane_mut(b, o),
                                (oh, ow),
                                input.plane(b, i),
                                (h, w),
                                wv,
                                ky as isize - pad,
                                kx as isize - pad,
                                stride,
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// out[oy][ox] += wv * in[oy*stride + dy][ox*stride + dx] over the in-bounds
/// range of (oy, ox).
#[allow(clippy::too_many_arguments)]
#[inline]
fn accumulate_tap(
    out: &mut [f64],
    (oh, ow): (usize, usize),
    inp: &[f64],
    (h, w): (usize, usize),
    wv: f64,
    dy: isize,
    dx: isize,
    stride: usize,
) {
    let s = stride as isize;
    let lo = |d: isize| -> usize {
        if d >= 0 {
            0
        } else {
            ((-d + s - 1) / s) as usize
        }
    };
    let hi = |d: isize, limit: usize, omax: usize| -> usize {
        // largest o with o*s + d <= limit-1
        let top = limit as isize - 1 - d;
        if top < 0 {
            return 0; // produces an empty range below
        }
        ((top / s) as usize + 1).min(omax)
    };
    let oy_lo = lo(dy);
    let oy_hi = hi(dy, h, oh);
    let ox_lo = lo(dx);
    let ox_hi = hi(dx, w, ow);
    if oy_lo >= oy_hi || ox_lo >= ox_hi {
        return;
    }
    for oy in oy_lo..oy_hi {
        let iy = (oy as isize * s + dy) as usize;
        let out_row = &mut out[oy * ow + ox_lo..oy * ow + ox_hi];
        let in_row = &inp[iy * w..(iy + 1) * w];
        if stride == 1 {
            let ix0 = (ox_lo as isize + dx) as usize;
            for (ov, iv) in out_row.iter_mut().zip(&in_row[ix0..]) {
                *ov += wv * iv;
            }
        } else {
            for (k, ov) in out_row.iter_mut().enumerate() {
                let ix = ((ox_lo + k) as isize * s + dx) as usize;
                *ov += wv * in_row[ix];
            }
        }
    }
}

/// Gradients of the convolution: returns (d_input, d_weight, d_bias).
pub fn conv_backward(
    input: &Tensor4,
    upstream: &Tensor4,
    weight: &Tensor4,
    spec: &LayerSpec,
) -> Result<(Tensor4, Tensor4, Tensor4)> {
    spec.validate()?;
    let (n, ic, h, w) = input.dims();
    let (oh, ow) = spec.conv_out_dims(h, w)?;
    let oc = spec.out_channels;
    if upstream.dims() != (n, oc, oh, ow) {
        return Err(Error::shape(
            format!("{} backward upstream", spec.name),
            format!("{}x{}x{}x{}", n, oc, oh, ow),
            format!("{:?}", upstream.dims()),
        ));
    }
    check_weight_dims(weight, spec)?;
    let (kh, kw) = spec.kernel;
    let stride = spec.stride;
    let pad = spec.padding as isize;
    let oc_per_g = oc / spec.groups;
    let ic_per_g = ic / spec.groups;

    let mut d_input = Tensor4::zeros(n, ic, h, w);
    let mut d_weight = Tensor4::zeros(oc, ic_per_g, kh, kw);
    let mut d_bias = Tensor4::zeros(oc, 1, 1, 1);

    for b in 0..n {
        for g in 0..spec.groups {
            for ocl in 0..oc_per_g {
                let o = g * oc_per_g + ocl;
                let up = upstream.plane(b, o);
                *d_bias.at_mut(o, 0, 0, 0) += up.iter().sum::<f64>();
                for icl in 0..ic_per_g {
                    let i = g * ic_per_g + icl;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let dy = ky as isize - pad;
                            let dx = kx as isize - pad;
                            let wv = weight.at(o, icl, ky, kx);
                            let dw = scatter_tap(
                                d_input.plane_mut(b, i),
                                input.plane(b, i),
                                (h, w),
                                up,
                                (oh, ow),
                                wv,
                                dy,
                                dx,
                                stride,
                            );
                            *d_weight.at_mut(o, icl, ky, kx) += dw;
                        }
                    }
                }
            }
        }
    }
    Ok((d_input, d_weight, d_bias))
}

/// For one kernel tap: d_in[iy][ix] += wv * up[oy][ox] and returns
/// sum(up[oy][ox] * in[iy][ix]) over the valid range, where
/// iy = oy*stride + dy, ix = ox*stride + dx.
#[allow(clippy::too_many_arguments)]
#[inline]
fn scatter_tap(
    d_in: &mut [f64],
    inp: &[f64],
    (h, w): (usize, usize),
    up: &[f64],
    (oh, ow): (usize, usize),
    wv: f64,
    dy: isize,
    dx: isize,
    stride: usize,
) -> f64 {
    let s = stride as isize;
    let lo = |d: isize| -> usize {
        if d >= 0 {
            0
        } else {
            ((-d + s - 1) / s) as usize
        }
    };
    let hi = |d: isize, limit: usize, omax: usize| -> usize {
        let top = limit as isize - 1 - d;
        if top < 0 {
            return 0;
        }
        ((top / s) as usize + 1).min(omax)
    };
    let oy_lo = lo(dy);
    let oy_hi = hi(dy, h, oh);
    let ox_lo = lo(dx);
    let ox_hi = hi(dx, w, ow);
    let mut dw = 0.0;
    if oy_lo >= oy_hi || ox_lo >= ox_hi {
        return dw;
    }
    for oy in oy_lo..oy_hi {
        let iy = (oy as isize * s + dy) as usize;
        let up_row = &up[oy * ow + ox_lo..oy * ow + ox_hi];
        for (k, &uv) in up_row.iter().enumerate() {
            let ix = ((ox_lo + k) as isize * s + dx) as usize;
            dw += uv * inp[iy * w + ix];
            d_in[iy * w + ix] += wv * uv;
        }
    }
    dw
}

fn check_weight_dims(weight: &Tensor4, spec: &LayerSpec) -> Result<()> {
    let want = (
        spec.out_channels,
        spec.in_channels / spec.groups,
        spec.kernel.0,
        spec.kernel.1,
    );
    if weight.dims() != want {
        return Err(Error::shape(
            format!("{} weight", spec.name),
            format!("{:?}", want),
            format!("{:?}", weight.dims()),
        ));
    }
    Ok(())
}

/// A convolution layer owning its parameters. Backward accumulates into the
/// parameter gradients; call zero_grad on the params between optimizer steps.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub spec: LayerSpec,
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

impl ConvLayer {
    pub fn new(spec: LayerSpec, weight: Tensor4, bias: Tensor4) -> Result<Self> {
        if spec.kind != LayerKind::Conv {
            return Err(Error::layer(&spec.name, "ConvLayer requires kind conv"));
        }
        spec.validate()?;
        check_weight_dims(&weight, &spec)?;
        if bias.dims() != (spec.out_channels, 1, 1, 1) {
            return Err(Error::shape(
                format!("{} bias", spec.name),
                format!("({}, 1, 1, 1)", spec.out_channels),
                format!("{:?}", bias.dims()),
            ));
        }
        let weight = ParamTensor::new(format!("{}.weight", spec.name), weight);
        let bias = ParamTensor::new(format!("{}.bias", spec.name), bias);
        Ok(ConvLayer { spec, weight, bias })
    }

    pub fn forward(&self, input: &Tensor4) -> Result<Tensor4> {
        conv_forward(input, &self.weight.values, Some(&self.bias.values), &self.spec)
    }

    pub fn backward(&mut self, input: &Tensor4, upstream: &Tensor4) -> Result<Tensor4> {
        let (d_input, d_weight, d_bias) =
            conv_backward(input, upstream, &self.weight.values, &self.spec)?;
        self.weight.grad.add_assign(&d_weight);
        self.bias.grad.add_assign(&d_bias);
        Ok(d_input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent reference: direct six-loop convolution with explicit
    /// bounds checks, no slicing or range precomputation.
    fn naive_conv(
        input: &Tensor4,
        weight: &Tensor4,
        bias: Option<&Tensor4>,
        spec: &LayerSpec,
    ) -> Tensor4 {
        let (n, _ic, h, w) = input.dims();
        let (oh, ow) = spec.conv_out_dims(h, w).unwrap();
        let oc = spec.out_channels;
        let ic_per_g = spec.in_channels / spec.groups;
        let oc_per_g = oc / spec.groups;
        let mut out = Tensor4::zeros(n, oc, oh, ow);
        for b in 0..n {
            for o in 0..oc {
                let g = o / oc_per_g;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias.map_or(0.0, |bt| bt.at(o, 0, 0, 0));
                        for icl in 0..ic_per_g {
                            let i = g * ic_per_g + icl;
                            for ky in 0..spec.kernel.0 {
                                for kx in 0..spec.kernel.1 {
                                    let iy = (oy * spec.stride + ky) as isize
                                        - spec.padding as isize;
                                    let ix = (ox * spec.stride + kx) as isize
                                        - spec.padding as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w
                                    {
                                        acc += weight.at(o, icl, ky, kx)
                                            * input.at(b, i, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        *out.at_mut(b, o, oy, ox) = acc;
                    }
                }
            }
        }
        out
    }

    fn random_tensor(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor4 {
        let data: Vec<f64> = (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor4::from_vec(n, c, h, w, data).unwrap()
    }

    #[test]
    fn matches_naive_reference_across_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cases = [
            // (in, out, kernel, stride, pad, groups, h, w)
            (1, 1, (3, 3), 1, 1, 1, 7, 7),
            (3, 5, (3, 3), 1, 1, 1, 6, 9),
            (4, 4, (1, 1), 1, 0, 1, 5, 5),
            (8, 8, (3, 3), 1, 1, 4, 6, 6),
            (2, 6, (2, 3), 2, 0, 1, 8, 9),
            (4, 2, (3, 3), 2, 1, 2, 7, 7),
            (6, 6, (4, 4), 2, 1, 6, 6, 8),
        ];
        for (ic, oc, kernel, stride, pad, groups, h, w) in cases {
            let spec = LayerSpec::conv("t", ic, oc, kernel, stride, pad, groups);
            let input = random_tensor(&mut rng, 2, ic, h, w);
            let weight = random_tensor(&mut rng, oc, ic / groups, kernel.0, kernel.1);
            let bias = random_tensor(&mut rng, oc, 1, 1, 1);
            let got = conv_forward(&input, &weight, Some(&bias), &spec).unwrap();
            let want = naive_conv(&input, &weight, Some(&bias), &spec);
            assert_eq!(got.dims(), want.dims());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "case {:?}: {} vs {}", (ic, oc, kernel), a, b);
            }
        }
    }

    #[test]
    fn identity_one_by_one_kernel_passes_input_through() {
        let spec = LayerSpec::conv("id", 1, 1, (1, 1), 1, 0, 1);
        let input = Tensor4::from_vec(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let weight = Tensor4::filled(1, 1, 1, 1, 1.0);
        let out = conv_forward(&input, &weight, None, &spec).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn hand_checked_3x3_with_padding() {
        // 3x3 all-ones kernel over a 3x3 image of ones, padding 1: each
        // output counts the in-bounds neighbours, so corners 4, edges 6,
        // center 9.
        let spec = LayerSpec::conv("box", 1, 1, (3, 3), 1, 1, 1);
        let input = Tensor4::filled(1, 1, 3, 3, 1.0);
        let weight = Tensor4::filled(1, 1, 3, 3, 1.0);
        let out = conv_forward(&input, &weight, None, &spec).unwrap();
        assert_eq!(
            out.data(),
            &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]
        );
    }

    #[test]
    fn groups_isolate_input_channels() {
        // groups=2 over 4 input channels: zeroing the second half of the
        // input must not change the first half of the output channels.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = LayerSpec::conv("g", 4, 4, (3, 3), 1, 1, 2);
        let weight = random_tensor(&mut rng, 4, 2, 3, 3);
        let input = random_tensor(&mut rng, 1, 4, 5, 5);
        let mut masked = input.clone();
        masked.plane_mut(0, 2).fill(0.0);
        masked.plane_mut(0, 3).fill(0.0);
        let full = conv_forward(&input, &weight, None, &spec).unwrap();
        let part = conv_forward(&masked, &weight, None, &spec).unwrap();
        assert_eq!(full.plane(0, 0), part.plane(0, 0));
        assert_eq!(full.plane(0, 1), part.plane(0, 1));
        assert_ne!(full.plane(0, 2), part.plane(0, 2));
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = LayerSpec::conv("acc", 2, 3, (3, 3), 1, 1, 1);
        let weight = random_tensor(&mut rng, 3, 2, 3, 3);
        let bias = Tensor4::zeros(3, 1, 1, 1);
        let mut layer = ConvLayer::new(spec, weight, bias).unwrap();
        let input = random_tensor(&mut rng, 1, 2, 4, 4);
        let up = random_tensor(&mut rng, 1, 3, 4, 4);
        layer.backward(&input, &up).unwrap();
        let once = layer.weight.grad.clone();
        layer.backward(&input, &up).unwrap();
        for (a, b) in layer.weight.grad.data().iter().zip(once.data()) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let spec = LayerSpec::conv("m", 3, 4, (3, 3), 1, 1, 1);
        let input = Tensor4::zeros(1, 2, 5, 5);
        let weight = Tensor4::zeros(4, 3, 3, 3);
        assert!(conv_forward(&input, &weight, None, &spec).is_err());
    }
}
