//! Differentiable image-domain primitives: horizontal mirroring, scanline
//! bilinear warping, renormalized separable Gaussian filtering, and 2x
//! pyramid resampling.
//!
//! These are pure kernels; the recording wrappers live on
//! [`crate::tape::Tape`]. Bilinear samples are computed as `a + w*(b - a)`
//! so that constant fields are reproduced exactly, which several loss
//! identities rely on.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Which view is being reconstructed by [`crate::tape::Tape::warp_horizontal`].
///
/// `RightToLeft` rebuilds the left view by sampling the source at `j - d*W`;
/// `LeftToRight` rebuilds the right view by sampling at `j + d*W`. Disparity
/// is non-negative and in width-fraction units in both cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpDirection {
    RightToLeft,
    LeftToRight,
}

pub(crate) fn mirror_values<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let sh = t.shape();
    let mut out = Tensor::zeros(sh);
    for n in 0..sh.n {
        for c in 0..sh.c {
            let src = t.plane(n, c);
            let dst = out.plane_mut(n, c);
            for i in 0..sh.h {
                let row = &src[i * sh.w..(i + 1) * sh.w];
                let drow = &mut dst[i * sh.w..(i + 1) * sh.w];
                for j in 0..sh.w {
                    drow[j] = row[sh.w - 1 - j];
                }
            }
        }
    }
    out
}

/// Sample position for one output pixel: column plus/minus disparity in pixels.
#[inline]
fn sample_pos<S: Scalar>(j: usize, d: S, width: S, direction: WarpDirection) -> S {
    let jj = S::from_f64(j as f64);
    match direction {
        WarpDirection::RightToLeft => jj - d * width,
        WarpDirection::LeftToRight => jj + d * width,
    }
}

pub(crate) fn warp_forward<S: Scalar>(
    source: &Tensor<S>,
    disparity: &Tensor<S>,
    direction: WarpDirection,
) -> Tensor<S> {
    let sh = source.shape();
    let mut out = Tensor::zeros(sh);
    let width = S::from_f64(sh.w as f64);
    let max_x = S::from_f64((sh.w - 1) as f64);
    for n in 0..sh.n {
        let dplane = disparity.plane(n, 0);
        for c in 0..sh.c {
            let src = source.plane(n, c);
            let dst = out.plane_mut(n, c);
            for i in 0..sh.h {
                let srow = &src[i * sh.w..(i + 1) * sh.w];
                let drow = &mut dst[i * sh.w..(i + 1) * sh.w];
                let disp_row = &dplane[i * sh.w..(i + 1) * sh.w];
                for j in 0..sh.w {
                    let x = sample_pos(j, disp_row[j], width, direction);
                    drow[j] = if x <= S::ZERO {
                        srow[0]
                    } else if x >= max_x {
                        srow[sh.w - 1]
                    } else {
                        let x0 = x.floor();
                        let idx = x0.to_f64() as usize;
                        let w = x - x0;
                        let a = srow[idx];
                        let b = srow[idx + 1];
                        a + w * (b - a)
                    };
                }
            }
        }
    }
    out
}

/// Gradients of the warp w.r.t. source and disparity. Samples clamped to the
/// image border take the subgradient 0 w.r.t. disparity.
pub(crate) fn warp_backward<S: Scalar>(
    source: &Tensor<S>,
    disparity: &Tensor<S>,
    grad_out: &Tensor<S>,
    direction: WarpDirection,
) -> (Tensor<S>, Tensor<S>) {
    let sh = source.shape();
    let mut gsrc = Tensor::zeros(sh);
    let mut gdisp = Tensor::zeros(disparity.shape());
    let width = S::from_f64(sh.w as f64);
    let max_x = S::from_f64((sh.w - 1) as f64);
    let dx_dd = match direction {
        WarpDirection::RightToLeft => -width,
        WarpDirection::LeftToRight => width,
    };
    for n in 0..sh.n {
        let dplane = disparity.plane(n, 0);
        for c in 0..sh.c {
            let src = source.plane(n, c);
            let go = grad_out.plane(n, c);
            let gs = gsrc.plane_mut(n, c);
            for i in 0..sh.h {
                let srow = &src[i * sh.w..(i + 1) * sh.w];
                let grow = &go[i * sh.w..(i + 1) * sh.w];
                let disp_row = &dplane[i * sh.w..(i + 1) * sh.w];
                for j in 0..sh.w {
                    let g = grow[j];
                    let x = sample_pos(j, disp_row[j], width, direction);
                    if x <= S::ZERO {
                        gs[i * sh.w] += g;
                    } else if x >= max_x {
                        gs[i * sh.w + sh.w - 1] += g;
                    } else {
                        let x0 = x.floor();
                        let idx = x0.to_f64() as usize;
                        let w = x - x0;
                        gs[i * sh.w + idx] += g * (S::ONE - w);
                        gs[i * sh.w + idx + 1] += g * w;
                        let slope = srow[idx + 1] - srow[idx];
                        *gdisp.at_mut(n, 0, i, j) += g * slope * dx_dd;
                    }
                }
            }
        }
    }
    (gsrc, gdisp)
}

/// Unnormalized Gaussian taps `exp(-k^2 / 2 sigma^2)` for `k = -r..=r`,
/// plus per-position sums over the taps that fall inside a length-`len` axis.
fn gaussian_taps<S: Scalar>(sigma: f64, radius: usize, len: usize) -> (Vec<S>, Vec<S>) {
    let mut taps = Vec::with_capacity(2 * radius + 1);
    for k in -(radius as isize)..=(radius as isize) {
        let kk = k as f64;
        taps.push(S::from_f64(libm::exp(-(kk * kk) / (2.0 * sigma * sigma))));
    }
    let mut norms = Vec::with_capacity(len);
    for i in 0..len {
        let mut acc = S::ZERO;
        for (t, &w) in taps.iter().enumerate() {
            let p = i as isize + t as isize - radius as isize;
            if p >= 0 && (p as usize) < len {
                acc += w;
            }
        }
        norms.push(acc);
    }
    (taps, norms)
}

/// 1-D renormalized blur of every length-`len` segment laid out with stride 1.
fn blur_axis<S: Scalar>(src: &[S], dst: &mut [S], len: usize, taps: &[S], norms: &[S]) {
    let radius = taps.len() / 2;
    debug_assert_eq!(src.len(), len);
    for i in 0..len {
        let mut acc = S::ZERO;
        for (t, &w) in taps.iter().enumerate() {
            let p = i as isize + t as isize - radius as isize;
            if p >= 0 && (p as usize) < len {
                acc += w * src[p as usize];
            }
        }
        dst[i] = acc / norms[i];
    }
}

/// Transpose of [`blur_axis`]: divide by the per-position norm first, then
/// apply the plain zero-padded symmetric convolution.
fn blur_axis_transpose<S: Scalar>(src: &[S], dst: &mut [S], len: usize, taps: &[S], norms: &[S], scratch: &mut [S]) {
    let radius = taps.len() / 2;
    for i in 0..len {
        scratch[i] = src[i] / norms[i];
    }
    for j in 0..len {
        let mut acc = S::ZERO;
        for (t, &w) in taps.iter().enumerate() {
            let p = j as isize + t as isize - radius as isize;
            if p >= 0 && (p as usize) < len {
                acc += w * scratch[p as usize];
            }
        }
        dst[j] = acc;
    }
}

fn blur_planes<S: Scalar>(t: &Tensor<S>, sigma: f64, radius: usize, transpose: bool) -> Tensor<S> {
    let sh = t.shape();
    let (taps_w, norms_w) = gaussian_taps::<S>(sigma, radius, sh.w);
    let (taps_h, norms_h) = gaussian_taps::<S>(sigma, radius, sh.h);
    let mut out = Tensor::zeros(sh);
    let mut row_in = vec![S::ZERO; sh.w.max(sh.h)];
    let mut row_out = vec![S::ZERO; sh.w.max(sh.h)];
    let mut scratch = vec![S::ZERO; sh.w.max(sh.h)];

    for n in 0..sh.n {
        for c in 0..sh.c {
            let src = t.plane(n, c);
            let dst = out.plane_mut(n, c);
            if !transpose {
                // width pass then height pass
                for i in 0..sh.h {
                    blur_axis(
                        &src[i * sh.w..(i + 1) * sh.w],
                        &mut row_out[..sh.w],
                        sh.w,
                        &taps_w,
                        &norms_w,
                    );
                    dst[i * sh.w..(i + 1) * sh.w].copy_from_slice(&row_out[..sh.w]);
                }
                for j in 0..sh.w {
                    for i in 0..sh.h {
                        row_in[i] = dst[i * sh.w + j];
                    }
                    blur_axis(&row_in[..sh.h], &mut row_out[..sh.h], sh.h, &taps_h, &norms_h);
                    for i in 0..sh.h {
                        dst[i * sh.w + j] = row_out[i];
                    }
                }
            } else {
                // transpose runs the passes in reverse order: height^T then width^T
                for j in 0..sh.w {
                    for i in 0..sh.h {
                        row_in[i] = src[i * sh.w + j];
                    }
                    blur_axis_transpose(
                        &row_in[..sh.h],
                        &mut row_out[..sh.h],
                        sh.h,
                        &taps_h,
                        &norms_h,
                        &mut scratch[..sh.h],
                    );
                    for i in 0..sh.h {
                        dst[i * sh.w + j] = row_out[i];
                    }
                }
                for i in 0..sh.h {
                    row_in[..sh.w].copy_from_slice(&dst[i * sh.w..(i + 1) * sh.w]);
                    blur_axis_transpose(
                        &row_in[..sh.w],
                        &mut row_out[..sh.w],
                        sh.w,
                        &taps_w,
                        &norms_w,
                        &mut scratch[..sh.w],
                    );
                    dst[i * sh.w..(i + 1) * sh.w].copy_from_slice(&row_out[..sh.w]);
                }
            }
        }
    }
    out
}

pub(crate) fn blur_forward<S: Scalar>(t: &Tensor<S>, sigma: f64, radius: usize) -> Tensor<S> {
    blur_planes(t, sigma, radius, false)
}

pub(crate) fn blur_transpose<S: Scalar>(g: &Tensor<S>, sigma: f64, radius: usize) -> Tensor<S> {
    blur_planes(g, sigma, radius, true)
}

pub(crate) fn down_forward<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let sh = t.shape();
    let out_shape = Shape::new(sh.n, sh.c, sh.h / 2, sh.w / 2);
    let quarter = S::from_f64(0.25);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..sh.n {
        for c in 0..sh.c {
            let src = t.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oy in 0..out_shape.h {
                let r0 = &src[(2 * oy) * sh.w..(2 * oy + 1) * sh.w];
                let r1 = &src[(2 * oy + 1) * sh.w..(2 * oy + 2) * sh.w];
                let drow = &mut dst[oy * out_shape.w..(oy + 1) * out_shape.w];
                for (ox, d) in drow.iter_mut().enumerate() {
                    *d = (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * quarter;
                }
            }
        }
    }
    out
}

pub(crate) fn down_backward<S: Scalar>(g: &Tensor<S>, gx: &mut Tensor<S>) {
    let gsh = g.shape();
    let xsh = gx.shape();
    let quarter = S::from_f64(0.25);
    for n in 0..gsh.n {
        for c in 0..gsh.c {
            let go = g.plane(n, c);
            let dst = gx.plane_mut(n, c);
            for oy in 0..gsh.h {
                for ox in 0..gsh.w {
                    let v = go[oy * gsh.w + ox] * quarter;
                    dst[(2 * oy) * xsh.w + 2 * ox] += v;
                    dst[(2 * oy) * xsh.w + 2 * ox + 1] += v;
                    dst[(2 * oy + 1) * xsh.w + 2 * ox] += v;
                    dst[(2 * oy + 1) * xsh.w + 2 * ox + 1] += v;
                }
            }
        }
    }
}

pub(crate) fn up_forward<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let sh = t.shape();
    let out_shape = Shape::new(sh.n, sh.c, sh.h * 2, sh.w * 2);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..sh.n {
        for c in 0..sh.c {
            let src = t.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..sh.h {
                for x in 0..sh.w {
                    let v = src[y * sh.w + x];
                    let base = (2 * y) * out_shape.w + 2 * x;
                    dst[base] = v;
                    dst[base + 1] = v;
                    dst[base + out_shape.w] = v;
                    dst[base + out_shape.w + 1] = v;
                }
            }
        }
    }
    out
}

pub(crate) fn up_backward<S: Scalar>(g: &Tensor<S>, gx: &mut Tensor<S>) {
    let gsh = g.shape();
    let xsh = gx.shape();
    for n in 0..xsh.n {
        for c in 0..xsh.c {
            let go = g.plane(n, c);
            let dst = gx.plane_mut(n, c);
            for y in 0..xsh.h {
                for x in 0..xsh.w {
                    let base = (2 * y) * gsh.w + 2 * x;
                    dst[y * xsh.w + x] +=
                        go[base] + go[base + 1] + go[base + gsh.w] + go[base + gsh.w + 1];
                }
            }
        }
    }
}

pub(crate) fn tv_sum_forward<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let sh = t.shape();
    let mut acc = 0.0f64;
    for n in 0..sh.n {
        for c in 0..sh.c {
            let p = t.plane(n, c);
            for i in 0..sh.h {
                let row = &p[i * sh.w..(i + 1) * sh.w];
                if i + 1 < sh.h {
                    let below = &p[(i + 1) * sh.w..(i + 2) * sh.w];
                    for j in 0..sh.w {
                        acc += (below[j] - row[j]).abs().to_f64();
                    }
                }
                for j in 0..sh.w - 1 {
                    acc += (row[j + 1] - row[j]).abs().to_f64();
                }
            }
        }
    }
    Tensor::scalar(S::from_f64(acc))
}

pub(crate) fn tv_sum_backward<S: Scalar>(t: &Tensor<S>, g: S, gx: &mut Tensor<S>) {
    let sh = t.shape();
    for n in 0..sh.n {
        for c in 0..sh.c {
            let p = t.plane(n, c);
            let dst = gx.plane_mut(n, c);
            for i in 0..sh.h {
                for j in 0..sh.w {
                    let here = p[i * sh.w + j];
                    if i + 1 < sh.h {
                        let s = sign(p[(i + 1) * sh.w + j] - here);
                        dst[(i + 1) * sh.w + j] += g * s;
                        dst[i * sh.w + j] -= g * s;
                    }
                    if j + 1 < sh.w {
                        let s = sign(p[i * sh.w + j + 1] - here);
                        dst[i * sh.w + j + 1] += g * s;
                        dst[i * sh.w + j] -= g * s;
                    }
                }
            }
        }
    }
}

#[inline]
fn sign<S: Scalar>(v: S) -> S {
    if v > S::ZERO {
        S::ONE
    } else if v < S::ZERO {
        -S::ONE
    } else {
        S::ZERO
    }
}
