use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Sigmoid outputs are clamped into [SIGMOID_CLAMP, 1 - SIGMOID_CLAMP] so the
/// loss terms never see an exact 0 or 1.
pub const SIGMOID_CLAMP: f64 = 1e-6;

pub fn relu_forward(input: &Tensor4) -> Tensor4 {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// d/dx relu(x) with upstream applied; the subgradient at exactly 0 is 0.
pub fn relu_backward(input: &Tensor4, upstream: &Tensor4) -> Result<Tensor4> {
    if !input.same_dims(upstream) {
        return Err(Error::shape(
            "relu backward",
            format!("{:?}", input.dims()),
            format!("{:?}", upstream.dims()),
        ));
    }
    let mut out = upstream.clone();
    for (d, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *d = 0.0;
        }
    }
    Ok(out)
}

pub fn sigmoid_forward(input: &Tensor4) -> Tensor4 {
    input.map(|v| {
        let s = 1.0 / (1.0 + (-v).exp());
        s.clamp(SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
    })
}

/// Derivative with respect to the pre-activation. The forward clamp is a
/// numerical guard for the loss, not part of the function being
/// differentiated, so the gradient is s(1-s) of the exact sigmoid everywhere;
/// it decays smoothly to ~0 in saturation instead of cutting off.
pub fn sigmoid_backward(input: &Tensor4, upstream: &Tensor4) -> Result<Tensor4> {
    if !input.same_dims(upstream) {
        return Err(Error::shape(
            "sigmoid backward",
            format!("{:?}", input.dims()),
            format!("{:?}", upstream.dims()),
        ));
    }
    let mut out = upstream.clone();
    for (d, &x) in out.data_mut().iter_mut().zip(input.data()) {
        let s = 1.0 / (1.0 + (-x).exp());
        *d *= s * (1.0 - s);
    }
    Ok(out)
}

/// Elementwise sum of two equally shaped tensors.
pub fn sum_forward(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    if !a.same_dims(b) {
        return Err(Error::shape(
            "elementwise sum",
            format!("{:?}", a.dims()),
            format!("{:?}", b.dims()),
        ));
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// The sum node passes the upstream gradient unchanged to both inputs.
pub fn sum_backward(upstream: &Tensor4) -> (Tensor4, Tensor4) {
    (upstream.clone(), upstream.clone())
}
