use crate::error::{Error, Result};
use crate::tensor::Tensor4;

use super::{LayerKind, LayerSpec, ParamTensor};

/// Grouped transposed convolution, fixed at kernel 4x4, stride 2, padding 1,
/// in_channels == out_channels, so spatial dims exactly double. Weight layout
/// is (in_channels, out_channels/groups, kh, kw). No bias: with
/// groups == channels this keeps each output channel a pure upsampling of its
/// own input channel.
pub fn grouped_deconv_forward(
    input: &Tensor4,
    weight: &Tensor4,
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
    let (oh, ow) = spec.deconv_out_dims(h, w)?;
    let oc = spec.out_channels;
    let (kh, kw) = spec.kernel;
    let s = spec.stride as isize;
    let p = spec.padding as isize;
    let ic_per_g = ic / spec.groups;
    let oc_per_g = oc / spec.groups;

    let mut out = Tensor4::zeros(n, oc, oh, ow);
    for b in 0..n {
        for g in 0..spec.groups {
            for icl in 0..ic_per_g {
                let i = g * ic_per_g + icl;
                let inp = input.plane(b, i);
                for ocl in 0..oc_per_g {
                    let o = g * oc_per_g + ocl;
                    let out_plane = out.plane_mut(b, o);
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = weight.at(i, ocl, ky, kx);
                            if wv == 0.0 {
                                continue;
                            }
                            let dy = ky as isize - p;
                            let dx = kx as isize - p;
                            for iy in 0..h {
                                let oy = iy as isize * s + dy;
                                if oy < 0 || oy >= oh as isize {
                                    continue;
                                }
                                let orow = oy as usize * ow;
                                let irow = iy * w;
                                for ix in 0..w {
                                    let ox = ix as isize * s + dx;
                                    if ox < 0 || ox >= ow as isize {
                                        continue;
                                    }
                                    out_plane[orow + ox as usize] += wv * inp[irow + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of the transposed convolution: returns (d_input, d_weight).
pub fn grouped_deconv_backward(
    input: &Tensor4,
    upstream: &Tensor4,
    weight: &Tensor4,
    spec: &LayerSpec,
) -> Result<(Tensor4, Tensor4)> {
    spec.validate()?;
    let (n, ic, h, w) = input.dims();
    let (oh, ow) = spec.deconv_out_dims(h, w)?;
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
    let s = spec.stride as isize;
    let p = spec.padding as isize;
    let ic_per_g = ic / spec.groups;
    let oc_per_g = oc / spec.groups;

    let mut d_input = Tensor4::zeros(n, ic, h, w);
    let mut d_weight = Tensor4::zeros(ic, oc_per_g, kh, kw);
    for b in 0..n {
        for g in 0..spec.groups {
            for icl in 0..ic_per_g {
                let i = g * ic_per_g + icl;
                let inp = input.plane(b, i);
                for ocl in 0..oc_per_g {
                    let o = g * oc_per_g + ocl;
                    let up = upstream.plane(b, o);
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = weight.at(i, ocl, ky, kx);
                            let dy = ky as isize - p;
                            let dx = kx as isize - p;
                            let mut dw = 0.0;
                            for iy in 0..h {
                                let oy = iy as isize * s + dy;
                                if oy < 0 || oy >= oh as isize {
                                    continue;
                                }
                                let orow = oy as usize * ow;
                                let irow = iy * w;
                                for ix in 0..w {
                                    let ox = ix as isize * s + dx;
                                    if ox < 0 || ox >= ow as isize {
                                        continue;
                                    }
                                    let uv = up[orow + ox as usize];
                                    dw += uv * inp[irow + ix];
                                    d_input.plane_mut(b, i)[irow + ix] += wv * uv;
                                }
                            }
                            *d_weight.at_mut(i, ocl, ky, kx) += dw;
                        }
                    }
                }
            }
        }
    }
    Ok((d_input, d_weight))
}

fn check_weight_dims(weight: &Tensor4, spec: &LayerSpec) -> Result<()> {
    let want = (
        spec.in_channels,
        spec.out_channels / spec.groups,
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

#[derive(Debug, Clone)]
pub struct DeconvLayer {
    pub spec: LayerSpec,
    pub weight: ParamTensor,
}

impl DeconvLayer {
    pub fn new(spec: LayerSpec, weight: Tensor4) -> Result<Self> {
        if spec.kind != LayerKind::GroupedDeconv {
            return Err(Error::layer(
                &spec.name,
                "DeconvLayer requires kind grouped-deconv",
            ));
        }
        spec.validate()?;
        check_weight_dims(&weight, &spec)?;
        let weight = ParamTensor::new(format!("{}.weight", spec.name), weight);
        Ok(DeconvLayer { spec, weight })
    }

    pub fn forward(&self, input: &Tensor4) -> Result<Tensor4> {
        grouped_deconv_forward(input, &self.weight.values, &self.spec)
    }

    pub fn backward(&mut self, input: &Tensor4, upstream: &Tensor4) -> Result<Tensor4> {
        let (d_input, d_weight) =
            grouped_deconv_backward(input, upstream, &self.weight.values, &self.spec)?;
        self.weight.grad.add_assign(&d_weight);
        Ok(d_input)
    }
}
