pub mod activation;
pub mod conv;
pub mod deconv;
pub mod gradcheck;
pub mod pool;

pub use activation::{
    relu_backward, relu_forward, sigmoid_backward, sigmoid_forward, sum_backward, sum_forward,
    SIGMOID_CLAMP,
};
pub use conv::ConvLayer;
pub use deconv::DeconvLayer;
pub use gradcheck::{grad_check, GradCheckReport};
pub use pool::{maxpool2_backward, maxpool2_forward};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Adam defaults shared by every parameter update in the crate.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    GroupedDeconv,
    MaxPool2,
    Relu,
    Sigmoid,
    ElementwiseSum,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::GroupedDeconv => "grouped-deconv",
            LayerKind::MaxPool2 => "maxpool2",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::ElementwiseSum => "elementwise-sum",
        }
    }
}

/// Static description of one layer: what it is and how it is shaped.
/// Parameter-free kinds (pooling, activations, sum) ignore the kernel and
/// channel fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl LayerSpec {
    pub fn conv(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Conv,
            kernel,
            stride,
            padding,
            groups,
            in_channels,
            out_channels,
        }
    }

    /// 4x4 stride-2 pad-1 transposed convolution; with `groups == channels`
    /// it upsamples each channel independently and exactly doubles h and w.
    pub fn grouped_deconv(name: impl Into<String>, channels: usize, groups: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::GroupedDeconv,
            kernel: (4, 4),
            stride: 2,
            padding: 1,
            groups,
            in_channels: channels,
            out_channels: channels,
        }
    }

    pub fn pointwise(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            kernel: (0, 0),
            stride: 1,
            padding: 0,
            groups: 1,
            in_channels: 0,
            out_channels: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::layer(&self.name, reason));
        match self.kind {
            LayerKind::Conv | LayerKind::GroupedDeconv => {
                if self.kernel.0 == 0 || self.kernel.1 == 0 {
                    return fail(format!("kernel {:?} must be nonzero", self.kernel));
                }
                if self.stride == 0 {
                    return fail("stride must be positive".into());
                }
                if self.groups == 0 {
                    return fail("groups must be positive".into());
                }
                if self.in_channels == 0 || self.out_channels == 0 {
                    return fail("channel counts must be positive".into());
                }
                if self.in_channels % self.groups != 0 {
                    return fail(format!(
                        "in_channels {} not divisible by groups {}",
                        self.in_channels, self.groups
                    ));
                }
                if self.out_channels % self.groups != 0 {
                    return fail(format!(
                        "out_channels {} not divisible by groups {}",
                        self.out_channels, self.groups
                    ));
                }
                if self.kind == LayerKind::GroupedDeconv {
                    if self.kernel != (4, 4) || self.stride != 2 || self.padding != 1 {
                        return fail(
                            "grouped deconv is fixed at kernel 4x4, stride 2, padding 1".into(),
                        );
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Output spatial dims for the standard convolution arithmetic.
    pub fn conv_out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let hp = h + 2 * self.padding;
        let wp = w + 2 * self.padding;
        if hp < kh || wp < kw {
            return Err(Error::layer(
                &self.name,
                format!("input {}x{} too small for kernel {}x{}", h, w, kh, kw),
            ));
        }
        Ok(((hp - kh) / self.stride + 1, (wp - kw) / self.stride + 1))
    }

    /// Output spatial dims for the transposed convolution: the standard
    /// formula stride*(in-1) + kernel - 2*padding, which for 4x4/2/1 is 2*in.
    pub fn deconv_out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h == 0 || w == 0 {
            return Err(Error::layer(&self.name, "empty input"));
        }
        let oh = self.stride * (h - 1) + self.kernel.0 - 2 * self.padding;
        let ow = self.stride * (w - 1) + self.kernel.1 - 2 * self.padding;
        Ok((oh, ow))
    }
}

/// One learnable tensor together with its gradient accumulator and Adam
/// moment estimates. Backward passes accumulate into `grad`; callers zero it
/// explicitly between steps.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub values: Tensor4,
    pub grad: Tensor4,
    pub adam_m: Tensor4,
    pub adam_v: Tensor4,
    pub step: u64,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, values: Tensor4) -> Self {
        let (n, c, h, w) = values.dims();
        ParamTensor {
            name: name.into(),
            values,
            grad: Tensor4::zeros(n, c, h, w),
            adam_m: Tensor4::zeros(n, c, h, w),
            adam_v: Tensor4::zeros(n, c, h, w),
            step: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// One Adam update. L2 weight decay is added to the accumulated gradient
    /// before the moment updates (classic L2, not decoupled decay).
    pub fn adam_step(&mut self, lr: f64, weight_decay: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);
        let values = self.values.data_mut();
        let grad = self.grad.data();
        let m = self.adam_m.data_mut();
        let v = self.adam_v.data_mut();
        for i in 0..values.len() {
            let g = grad[i] + weight_decay * values[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            values[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation_catches_group_mismatch() {
        let spec = LayerSpec::conv("bad", 6, 8, (3, 3), 1, 1, 4);
        assert!(spec.validate().is_err());
        let spec = LayerSpec::conv("ok", 8, 8, (3, 3), 1, 1, 4);
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn deconv_dims_double() {
        let spec = LayerSpec::grouped_deconv("up", 8, 8);
        assert_eq!(spec.deconv_out_dims(5, 7).unwrap(), (10, 14));
        assert_eq!(spec.deconv_out_dims(16, 16).unwrap(), (32, 32));
    }

    #[test]
    fn conv_dims_follow_standard_arithmetic() {
        let spec = LayerSpec::conv("c", 1, 1, (3, 3), 1, 1, 1);
        assert_eq!(spec.conv_out_dims(8, 8).unwrap(), (8, 8));
        let spec = LayerSpec::conv("c", 1, 1, (3, 3), 2, 0, 1);
        assert_eq!(spec.conv_out_dims(7, 9).unwrap(), (3, 4));
        let spec = LayerSpec::conv("c", 1, 1, (5, 5), 1, 0, 1);
        assert!(spec.conv_out_dims(3, 3).is_err());
    }

    #[test]
    fn adam_zero_grad_zero_decay_leaves_values() {
        let mut p = ParamTensor::new("p", Tensor4::filled(1, 1, 1, 3, 0.5));
        p.adam_step(1e-3, 0.0);
        assert_eq!(p.values.data(), &[0.5, 0.5, 0.5]);
        assert_eq!(p.step, 1);
    }

    #[test]
    fn adam_zero_lr_leaves_values() {
        let mut p = ParamTensor::new("p", Tensor4::filled(1, 1, 1, 3, 0.5));
        p.grad.fill(1.0);
        p.adam_step(0.0, 1e-4);
        assert_eq!(p.values.data(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn adam_first_step_moves_by_about_lr() {
        // With bias correction the first step is lr * g/|g| up to eps.
        let mut p = ParamTensor::new("p", Tensor4::filled(1, 1, 1, 1, 1.0));
        p.grad.fill(0.25);
        p.adam_step(1e-3, 0.0);
        let moved = 1.0 - p.values.data()[0];
        assert!((moved - 1e-3).abs() < 1e-6, "moved {}", moved);
    }

    #[test]
    fn grad_accumulates_until_zeroed() {
        let mut p = ParamTensor::new("p", Tensor4::zeros(1, 1, 1, 2));
        p.grad.data_mut()[0] = 1.0;
        p.grad.add_scaled(&Tensor4::filled(1, 1, 1, 2, 1.0), 1.0);
        assert_eq!(p.grad.data(), &[2.0, 1.0]);
        p.zero_grad();
        assert_eq!(p.grad.data(), &[0.0, 0.0]);
    }
}
