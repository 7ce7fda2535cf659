//! 2-D convolution kernels: im2col + gemm forward, and the matching
//! input/weight/bias gradients.

use alloc::vec;

use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub struct ConvDims {
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

pub fn output_dims(in_h: usize, in_w: usize, kh: usize, kw: usize, stride: usize, padding: usize) -> Option<(usize, usize)> {
    let eh = in_h + 2 * padding;
    let ew = in_w + 2 * padding;
    if eh < kh || ew < kw {
        return None;
    }
    Some(((eh - kh) / stride + 1, (ew - kw) / stride + 1))
}

/// Lowers one batch item to a `(C·kh·kw) × (OH·OW)` patch matrix with zero
/// padding outside the image.
fn im2col<S: Scalar>(
    input: &Tensor<S>,
    n: usize,
    kh: usize,
    kw: usize,
    dims: &ConvDims,
    col: &mut [S],
) {
    let Shape { c: cin, h, w, .. } = input.shape();
    let (oh, ow) = (dims.out_h, dims.out_w);
    let m = oh * ow;
    debug_assert_eq!(col.len(), cin * kh * kw * m);

    for c in 0..cin {
        let plane = input.plane(n, c);
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((c * kh + ky) * kw + kx) * m;
                for oy in 0..oh {
                    let iy = (oy * dims.stride + ky) as isize - dims.padding as isize;
                    let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                    if iy < 0 || iy as usize >= h {
                        dst.fill(S::ZERO);
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * dims.stride + kx) as isize - dims.padding as isize;
                        *d = if ix < 0 || ix as usize >= w {
                            S::ZERO
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch-matrix gradient back onto the input layout.
fn col2im_add<S: Scalar>(
    col: &[S],
    n: usize,
    kh: usize,
    kw: usize,
    dims: &ConvDims,
    grad_input: &mut Tensor<S>,
) {
    let Shape { c: cin, h, w, .. } = grad_input.shape();
    let (oh, ow) = (dims.out_h, dims.out_w);
    let m = oh * ow;

    for c in 0..cin {
        let plane = grad_input.plane_mut(n, c);
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((c * kh + ky) * kw + kx) * m;
                for oy in 0..oh {
                    let iy = (oy * dims.stride + ky) as isize - dims.padding as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let src = &col[row + oy * ow..row + (oy + 1) * ow];
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &g) in src.iter().enumerate() {
                        let ix = (ox * dims.stride + kx) as isize - dims.padding as isize;
                        if ix >= 0 && (ix as usize) < w {
                            dst_row[ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

/// `out[n] = weight(Cout × C·kh·kw) · col[n] + bias`.
pub fn forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    dims: &ConvDims,
) -> Tensor<S> {
    let in_shape = input.shape();
    let wt = weight.shape();
    let (cout, cin, kh, kw) = (wt.n, wt.c, wt.h, wt.w);
    let m = dims.out_h * dims.out_w;
    let k = cin * kh * kw;

    let out_shape = Shape::new(in_shape.n, cout, dims.out_h, dims.out_w);
    let mut out = Tensor::zeros(out_shape);
    let mut col = vec![S::ZERO; k * m];
    for n in 0..in_shape.n {
        im2col(input, n, kh, kw, dims, &mut col);
        let dst = &mut out.data_mut()[n * cout * m..(n + 1) * cout * m];
        S::gemm(cout, k, m, weight.data(), &col, dst, false);
        for o in 0..cout {
            let b = bias.data()[o];
            for v in &mut dst[o * m..(o + 1) * m] {
                *v += b;
            }
        }
    }
    out
}

pub struct ConvGrads<S> {
    pub input: Tensor<S>,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

/// Gradients w.r.t. input, weight, and bias given the upstream gradient.
/// The patch matrix is recomputed rather than kept from the forward pass.
pub fn backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    grad_out: &Tensor<S>,
    dims: &ConvDims,
) -> ConvGrads<S> {
    let in_shape = input.shape();
    let wt = weight.shape();
    let (cout, cin, kh, kw) = (wt.n, wt.c, wt.h, wt.w);
    let m = dims.out_h * dims.out_w;
    let k = cin * kh * kw;

    let mut grad_input = Tensor::zeros(in_shape);
    let mut grad_weight = Tensor::zeros(wt);
    let mut grad_bias = Tensor::zeros(Shape::new(cout, 1, 1, 1));

    let mut col = vec![S::ZERO; k * m];
    let mut col_grad = vec![S::ZERO; k * m];
    // weight transposed to (k × cout), done once
    let mut wt_t = vec![S::ZERO; k * cout];
    for o in 0..cout {
        for j in 0..k {
            wt_t[j * cout + o] = weight.data()[o * k + j];
        }
    }

    for n in 0..in_shape.n {
        let go = &grad_out.data()[n * cout * m..(n + 1) * cout * m];

        for o in 0..cout {
            let mut acc = S::ZERO;
            for &g in &go[o * m..(o + 1) * m] {
                acc += g;
            }
            grad_bias.data_mut()[o] += acc;
        }

        im2col(input, n, kh, kw, dims, &mut col);

        // dW += dOut(cout×m) · col^T(m×k), via dW^T-free trick: gemm with b transposed.
        // matrixmultiply takes strides, so express col^T by swapping strides.
        gemm_b_transposed(cout, m, k, go, &col, grad_weight.data_mut());

        // dCol = W^T(k×cout) · dOut(cout×m)
        S::gemm(k, cout, m, &wt_t, go, &mut col_grad, false);
        col2im_add(&col_grad, n, kh, kw, dims, &mut grad_input);
    }

    ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    }
}

/// `c(m×n) += a(m×k) · b^T` where `b` is stored as `(n×k)` row-major.
fn gemm_b_transposed<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], c: &mut [S]) {
    // b is (n rows × k cols) row-major; as the right operand we need (k × n),
    // i.e. row stride 1, column stride k.
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    S::gemm_strided(m, k, n, a, k as isize, 1, b, 1, k as isize, c, true);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_ref(
        input: &Tensor<f64>,
        weight: &Tensor<f64>,
        bias: &Tensor<f64>,
        stride: usize,
        padding: usize,
    ) -> Tensor<f64> {
        let ish = input.shape();
        let wsh = weight.shape();
        let (oh, ow) = output_dims(ish.h, ish.w, wsh.h, wsh.w, stride, padding).unwrap();
        Tensor::from_fn(Shape::new(ish.n, wsh.n, oh, ow), |n, o, oy, ox| {
            let mut acc = bias.data()[o];
            for c in 0..ish.c {
                for ky in 0..wsh.h {
                    for kx in 0..wsh.w {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < ish.h && (ix as usize) < ish.w {
                            acc += input.at(n, c, iy as usize, ix as usize)
                                * weight.at(o, c, ky, kx);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn matches_reference_loops() {
        let mut rng = crate::rng::SeedRng::new(11);
        for &(stride, padding) in &[(1usize, 0usize), (1, 1), (2, 1), (2, 2)] {
            let input = Tensor::from_fn(Shape::new(2, 3, 5, 6), |_, _, _, _| rng.uniform(-1.0, 1.0));
            let weight = Tensor::from_fn(Shape::new(4, 3, 3, 3), |_, _, _, _| rng.uniform(-1.0, 1.0));
            let bias = Tensor::from_fn(Shape::new(4, 1, 1, 1), |_, _, _, _| rng.uniform(-1.0, 1.0));
            let (oh, ow) = output_dims(5, 6, 3, 3, stride, padding).unwrap();
            let dims = ConvDims { stride, padding, out_h: oh, out_w: ow };
            let got = forward(&input, &weight, &bias, &dims);
            let want = conv_ref(&input, &weight, &bias, stride, padding);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }
}
