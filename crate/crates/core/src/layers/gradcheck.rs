use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor4;

use super::{
    conv::{conv_backward, conv_forward},
    deconv::{grouped_deconv_backward, grouped_deconv_forward},
    maxpool2_backward, maxpool2_forward, relu_backward, relu_forward, sigmoid_backward,
    sigmoid_forward, sum_forward, LayerKind, LayerSpec,
};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub layer: String,
    pub max_rel_err: f64,
    /// Number of coordinates probed (inputs plus parameters).
    pub checked: usize,
}

/// Central-difference gradient check for one layer. Probes every input and
/// parameter coordinate of a small randomly filled instance of the layer and
/// compares the analytic gradient of a random linear functional
/// L = sum(c .* output) against (L(x+step) - L(x-step)) / (2 step).
/// The relative error uses a unit floor: |a - n| / max(1, |a| + |n|).
///
/// Inputs are drawn to keep nondifferentiable layers away from their kinks:
/// relu inputs have magnitude at least 0.05, and maxpool windows have their
/// entries separated by at least 0.1 so the argmax cannot flip under the
/// probe step.
pub fn grad_check(spec: &LayerSpec, seed: u64, step: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.kind {
        LayerKind::Conv => {
            let (kh, kw) = spec.kernel;
            let h = (kh + 3).max(5);
            let w = (kw + 4).max(5);
            let input = uniform(&mut rng, 2, spec.in_channels, h, w, -1.0, 1.0);
            let weight = uniform(
                &mut rng,
                spec.out_channels,
                spec.in_channels / spec.groups,
                kh,
                kw,
                -0.8,
                0.8,
            );
            let bias = uniform(&mut rng, spec.out_channels, 1, 1, 1, -0.5, 0.5);
            run_check(
                spec,
                &mut rng,
                vec![input, weight, bias],
                |t| conv_forward(&t[0], &t[1], Some(&t[2]), spec),
                |t, up| {
                    let (di, dw, db) = conv_backward(&t[0], up, &t[1], spec)?;
                    Ok(vec![di, dw, db])
                },
                step,
            )
        }
        LayerKind::GroupedDeconv => {
            let input = uniform(&mut rng, 2, spec.in_channels, 4, 5, -1.0, 1.0);
            let weight = uniform(
                &mut rng,
                spec.in_channels,
                spec.out_channels / spec.groups,
                4,
                4,
                -0.8,
                0.8,
            );
            run_check(
                spec,
                &mut rng,
                vec![input, weight],
                |t| grouped_deconv_forward(&t[0], &t[1], spec),
                |t, up| {
                    let (di, dw) = grouped_deconv_backward(&t[0], up, &t[1], spec)?;
                    Ok(vec![di, dw])
                },
                step,
            )
        }
        LayerKind::MaxPool2 => {
            let input = separated_pool_input(&mut rng, 2, 3, 6, 6);
            run_check(
                spec,
                &mut rng,
                vec![input],
                |t| maxpool2_forward(&t[0]),
                |t, up| Ok(vec![maxpool2_backward(&t[0], up)?]),
                step,
            )
        }
        LayerKind::Relu => {
            let input = away_from_zero(&mut rng, 2, 3, 5, 5, 0.05);
            run_check(
                spec,
                &mut rng,
                vec![input],
                |t| Ok(relu_forward(&t[0])),
                |t, up| Ok(vec![relu_backward(&t[0], up)?]),
                step,
            )
        }
        LayerKind::Sigmoid => {
            let input = uniform(&mut rng, 2, 3, 5, 5, -2.0, 2.0);
            run_check(
                spec,
                &mut rng,
                vec![input],
                |t| Ok(sigmoid_forward(&t[0])),
                |t, up| Ok(vec![sigmoid_backward(&t[0], up)?]),
                step,
            )
        }
        LayerKind::ElementwiseSum => {
            let a = uniform(&mut rng, 2, 3, 5, 5, -1.0, 1.0);
            let b = uniform(&mut rng, 2, 3, 5, 5, -1.0, 1.0);
            run_check(
                spec,
                &mut rng,
                vec![a, b],
                |t| sum_forward(&t[0], &t[1]),
                |_, up| Ok(vec![up.clone(), up.clone()]),
                step,
            )
        }
    }
}

fn run_check(
    spec: &LayerSpec,
    rng: &mut ChaCha8Rng,
    tensors: Vec<Tensor4>,
    eval: impl Fn(&[Tensor4]) -> Result<Tensor4>,
    backward: impl Fn(&[Tensor4], &Tensor4) -> Result<Vec<Tensor4>>,
    step: f64,
) -> Result<GradCheckReport> {
    let out = eval(&tensors)?;
    let (n, c, h, w) = out.dims();
    // Random O(1) coefficients with mixed signs.
    let coeffs = Tensor4::from_vec(
        n,
        c,
        h,
        w,
        (0..out.len())
            .map(|_| {
                let mag = rng.random_range(0.5..1.5);
                if rng.random_range(0.0..1.0) < 0.5 {
                    -mag
                } else {
                    mag
                }
            })
            .collect(),
    )
    .expect("coeff dims");

    let analytic = backward(&tensors, &coeffs)?;
    assert_eq!(analytic.len(), tensors.len(), "one gradient per tensor");

    let weighted = |t: &Tensor4| -> f64 {
        t.data().iter().zip(coeffs.data()).map(|(a, b)| a * b).sum()
    };

    let mut work = tensors.clone();
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for ti in 0..work.len() {
        for k in 0..work[ti].len() {
            let orig = work[ti].data()[k];
            work[ti].data_mut()[k] = orig + step;
            let lp = weighted(&eval(&work)?);
            work[ti].data_mut()[k] = orig - step;
            let lm = weighted(&eval(&work)?);
            work[ti].data_mut()[k] = orig;
            let numeric = (lp - lm) / (2.0 * step);
            let a = analytic[ti].data()[k];
            let rel = (a - numeric).abs() / f64::max(1.0, a.abs() + numeric.abs());
            if rel > max_rel {
                max_rel = rel;
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        layer: spec.name.clone(),
        max_rel_err: max_rel,
        checked,
    })
}

fn uniform(
    rng: &mut ChaCha8Rng,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    lo: f64,
    hi: f64,
) -> Tensor4 {
    Tensor4::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| rng.random_range(lo..hi)).collect())
        .expect("uniform dims")
}

/// Uniform values whose magnitude never drops below `margin`.
fn away_from_zero(
    rng: &mut ChaCha8Rng,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    margin: f64,
) -> Tensor4 {
    let data = (0..n * c * h * w)
        .map(|_| {
            let u: f64 = rng.random_range(-1.0..1.0);
            u.signum() * (margin + u.abs())
        })
        .collect();
    Tensor4::from_vec(n, c, h, w, data).expect("dims")
}

/// Input for pooling checks: every 2x2 window holds a random base plus the
/// offsets {0, 0.1, 0.2, 0.3} in shuffled order, so window entries stay at
/// least 0.1 apart and the max never changes under small probes.
fn separated_pool_input(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor4 {
    let mut t = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..h / 2 {
                for ox in 0..w / 2 {
                    let base: f64 = rng.random_range(-1.0..1.0);
                    let mut offsets = [0.0, 0.1, 0.2, 0.3];
                    for i in (1..4).rev() {
                        let j = rng.random_range(0..=i);
                        offsets.swap(i, j);
                    }
                    *t.at_mut(b, ch, 2 * oy, 2 * ox) = base + offsets[0];
                    *t.at_mut(b, ch, 2 * oy, 2 * ox + 1) = base + offsets[1];
                    *t.at_mut(b, ch, 2 * oy + 1, 2 * ox) = base + offsets[2];
                    *t.at_mut(b, ch, 2 * oy + 1, 2 * ox + 1) = base + offsets[3];
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_gradcheck_is_tight() {
        let spec = LayerSpec::conv("conv3", 3, 4, (3, 3), 1, 1, 1);
        let report = grad_check(&spec, 7, 1e-3).unwrap();
        // Linear in every coordinate, so central differences are exact up to
        // floating point noise.
        assert!(report.max_rel_err < 1e-8, "rel err {}", report.max_rel_err);
        assert!(report.checked > 0);
    }

    #[test]
    fn sigmoid_gradcheck_passes_at_1e4() {
        let spec = LayerSpec::pointwise("sig", LayerKind::Sigmoid);
        let report = grad_check(&spec, 3, 1e-3).unwrap();
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn maxpool_gradcheck_passes() {
        let spec = LayerSpec::pointwise("pool", LayerKind::MaxPool2);
        let report = grad_check(&spec, 5, 1e-3).unwrap();
        assert!(report.max_rel_err < 1e-8, "rel err {}", report.max_rel_err);
    }
}
