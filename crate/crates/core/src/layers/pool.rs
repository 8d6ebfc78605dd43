use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// 2x2 max pooling with stride 2. Spatial dims must be even.
pub fn maxpool2_forward(input: &Tensor4) -> Result<Tensor4> {
    let (n, c, h, w) = input.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::layer(
            "maxpool2",
            format!("spatial dims {}x{} must be even", h, w),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros(n, c, oh, ow);
    for b in 0..n {
        for ch in 0..c {
            let inp = input.plane(b, ch);
            let op = out.plane_mut(b, ch);
            for oy in 0..oh {
                let r0 = 2 * oy * w;
                let r1 = r0 + w;
                for ox in 0..ow {
                    let x = 2 * ox;
                    let m = inp[r0 + x]
                        .max(inp[r0 + x + 1])
                        .max(inp[r1 + x])
                        .max(inp[r1 + x + 1]);
                    op[oy * ow + ox] = m;
                }
            }
        }
    }
    Ok(out)
}

/// Backward of 2x2 max pooling: upstream routes to the max location of each
/// window; ties route to the earliest position in row-major order.
pub fn maxpool2_backward(input: &Tensor4, upstream: &Tensor4) -> Result<Tensor4> {
    let (n, c, h, w) = input.dims();
    if upstream.dims() != (n, c, h / 2, w / 2) {
        return Err(Error::shape(
            "maxpool2 backward upstream",
            format!("{}x{}x{}x{}", n, c, h / 2, w / 2),
            format!("{:?}", upstream.dims()),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut d_input = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            let inp = input.plane(b, ch);
            let up = upstream.plane(b, ch);
            let dp = d_input.plane_mut(b, ch);
            for oy in 0..oh {
                let r0 = 2 * oy * w;
                let r1 = r0 + w;
                for ox in 0..ow {
                    let x = 2 * ox;
                    let idx = [r0 + x, r0 + x + 1, r1 + x, r1 + x + 1];
                    let mut best = idx[0];
                    for &i in &idx[1..] {
                        if inp[i] > inp[best] {
                            best = i;
                        }
                    }
                    dp[best] += up[oy * ow + ox];
                }
            }
        }
    }
    Ok(d_input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_maxima() {
        let input = Tensor4::from_vec(
            1,
            1,
            4,
            4,
            vec![
                1.0, 2.0, 5.0, 0.0, //
                3.0, 4.0, 1.0, 1.0, //
                0.0, 0.0, 9.0, 8.0, //
                0.0, -1.0, 7.0, 6.0,
            ],
        )
        .unwrap();
        let out = maxpool2_forward(&input).unwrap();
        assert_eq!(out.dims(), (1, 1, 2, 2));
        assert_eq!(out.data(), &[4.0, 5.0, 0.0, 9.0]);
    }

    #[test]
    fn rejects_odd_dims() {
        assert!(maxpool2_forward(&Tensor4::zeros(1, 1, 3, 4)).is_err());
        assert!(maxpool2_forward(&Tensor4::zeros(1, 1, 4, 5)).is_err());
    }

    #[test]
    fn backward_routes_to_argmax_first_on_ties() {
        let input = Tensor4::from_vec(
            1,
            1,
            2,
            4,
            vec![
                2.0, 1.0, 3.0, 3.0, //
                2.0, 0.0, 0.0, 3.0,
            ],
        )
        .unwrap();
        let up = Tensor4::from_vec(1, 1, 1, 2, vec![10.0, 20.0]).unwrap();
        let d = maxpool2_backward(&input, &up).unwrap();
        // Left window ties between (0,0) and (1,0): earliest wins.
        // Right window ties between (0,2), (0,3), (1,3): earliest wins.
        assert_eq!(
            d.data(),
            &[10.0, 0.0, 20.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }
}
