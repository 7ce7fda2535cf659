//! Procedural rectified stereo pairs with exact ground-truth disparity — the
//! verification oracle for the whole stack.
//!
//! Scenes are smoothed random RGB textures, either a single fronto-parallel
//! plane at one sampled disparity or a foreground rectangle floating over a
//! background plane. The right view is composed far-to-near with the
//! non-differentiable [`exact_shift`], so ground truth is exact by
//! construction and the occluded band left of the foreground is known.

use alloc::format;

use crate::error::TensorError;
use crate::image;
use crate::metrics::CameraCalib;
use crate::rng::{mix_seed, SeedRng};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Rectified stereo pair with optional exact ground truth.
///
/// `gt_disparity` is in width-fraction units, left-image coordinates;
/// `occlusion_mask` is 1 where the left pixel has no counterpart in the
/// right view (image-edge band plus the strip hidden behind the foreground).
#[derive(Debug, Clone)]
pub struct StereoSample<S> {
    pub left: Tensor<S>,
    pub right: Tensor<S>,
    pub gt_disparity: Option<Tensor<S>>,
    pub occlusion_mask: Option<Tensor<S>>,
    pub calib: CameraCalib,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneMode {
    ConstantPlane,
    TwoLayer,
}

/// Generator settings: image size, the pixel-disparity range to sample, the
/// texture smoothing sigma, and the scene kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub disparity_px: (f64, f64),
    pub texture_sigma: f64,
    pub mode: SceneMode,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            height: 64,
            width: 128,
            disparity_px: (2.0, 8.0),
            texture_sigma: 1.0,
            mode: SceneMode::ConstantPlane,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        if self.height < 8 || self.width < 8 {
            return Err(TensorError::invalid(format!(
                "scene size {}x{} too small",
                self.height, self.width
            )));
        }
        let (lo, hi) = self.disparity_px;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(TensorError::invalid(format!(
                "disparity range [{lo}, {hi}] is not ordered and non-negative"
            )));
        }
        if hi >= self.width as f64 / 4.0 {
            return Err(TensorError::invalid(format!(
                "max disparity {hi} px must stay below a quarter of the width ({})",
                self.width
            )));
        }
        if !(self.texture_sigma > 0.0) {
            return Err(TensorError::invalid("texture_sigma must be > 0"));
        }
        Ok(())
    }
}

/// Default rig for synthetic scenes: depth = 50 / d_px meters, so the
/// sampled 2..8 px range spans roughly 6..25 m.
pub fn default_calib() -> CameraCalib {
    CameraCalib {
        focal_px: 100.0,
        baseline_m: 0.5,
    }
}

/// Shifts a texture left by `d_px` pixels with clamped bilinear sampling:
/// `out(i, j) = texture(i, j + d_px)`. Left pixel `j` then corresponds to
/// right pixel `j - d_px`. Not recorded; ground truth only.
pub fn exact_shift<S: Scalar>(texture: &Tensor<S>, d_px: f64) -> Tensor<S> {
    let sh = texture.shape();
    let mut out = Tensor::zeros(sh);
    for n in 0..sh.n {
        for c in 0..sh.c {
            let src = texture.plane(n, c);
            let dst = out.plane_mut(n, c);
            for i in 0..sh.h {
                let row = &src[i * sh.w..(i + 1) * sh.w];
                let drow = &mut dst[i * sh.w..(i + 1) * sh.w];
                for j in 0..sh.w {
                    drow[j] = sample_row(row, j as f64 + d_px);
                }
            }
        }
    }
    out
}

/// Clamped bilinear lookup along one row, in the same `a + w*(b-a)` form the
/// differentiable sampler uses.
fn sample_row<S: Scalar>(row: &[S], x: f64) -> S {
    let max_x = (row.len() - 1) as f64;
    if x <= 0.0 {
        row[0]
    } else if x >= max_x {
        row[row.len() - 1]
    } else {
        let x0 = libm::floor(x);
        let idx = x0 as usize;
        let w = S::from_f64(x - x0);
        let a = row[idx];
        let b = row[idx + 1];
        a + w * (b - a)
    }
}

/// Smoothed uniform noise in [0, 1], per channel, generated in f64.
fn texture(rng: &mut SeedRng, h: usize, w: usize, sigma: f64) -> Tensor<f64> {
    let shape = Shape::new(1, 3, h, w);
    let noise = Tensor::from_fn(shape, |_, _, _, _| rng.next_f64());
    let radius = libm::ceil(2.0 * sigma).max(1.0) as usize;
    let mut smoothed = image::blur_forward(&noise, sigma, radius);
    // per-channel min-max renormalization back to the full [0, 1] range
    for c in 0..3 {
        let plane = smoothed.plane_mut(0, c);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in plane.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo < 1e-12 {
            plane.fill(0.5);
        } else {
            let inv = 1.0 / (hi - lo);
            for v in plane.iter_mut() {
                *v = (*v - lo) * inv;
            }
        }
    }
    smoothed
}

/// Deterministically generates one stereo sample with exact ground truth.
pub fn generate_scene<S: Scalar>(seed: u64, cfg: &SceneConfig) -> Result<StereoSample<S>, TensorError> {
    cfg.validate()?;
    let mut rng = SeedRng::new(mix_seed(seed, 0x5C3E));
    let (h, w) = (cfg.height, cfg.width);
    let wf = w as f64;
    let (lo, hi) = cfg.disparity_px;

    match cfg.mode {
        SceneMode::ConstantPlane => {
            let d_px = rng.uniform(lo, hi);
            let tex = texture(&mut rng, h, w, cfg.texture_sigma);
            let right = exact_shift(&tex, d_px);
            let gt = Tensor::full(Shape::new(1, 1, h, w), S::from_f64(d_px / wf));
            let occ = Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, _, j| {
                if (j as f64) < d_px {
                    S::ONE
                } else {
                    S::ZERO
                }
            });
            Ok(StereoSample {
                left: tex.cast(),
                right: right.cast(),
                gt_disparity: Some(gt),
                occlusion_mask: Some(occ),
                calib: default_calib(),
            })
        }
        SceneMode::TwoLayer => {
            let span = hi - lo;
            let d_bg = rng.uniform(lo, lo + 0.25 * span);
            let d_fg = rng.uniform(lo + 0.6 * span, hi);
            let bg = texture(&mut rng, h, w, cfg.texture_sigma);
            let fg = texture(&mut rng, h, w, cfg.texture_sigma);

            // integer-aligned foreground rectangle, fully visible in both views
            let rect_w = w / 4 + rng.index(w / 4);
            let rect_h = h / 4 + rng.index(h / 4);
            let min_x0 = libm::ceil(d_fg) as usize + 1;
            let x0 = min_x0 + rng.index(w - rect_w - min_x0);
            let y0 = rng.index(h - rect_h);
            let (x1, y1) = (x0 + rect_w, y0 + rect_h);

            let in_rect = |i: usize, j: usize| (y0..y1).contains(&i) && (x0..x1).contains(&j);

            let mut left = bg.clone();
            for c in 0..3 {
                for i in y0..y1 {
                    for j in x0..x1 {
                        *left.at_mut(0, c, i, j) = fg.at(0, c, i, j);
                    }
                }
            }

            // right view: background layer first, foreground pasted over it
            let mut right = exact_shift(&left, d_bg);
            for c in 0..3 {
                for i in y0..y1 {
                    let row = left.plane(0, c)[i * w..(i + 1) * w].to_vec();
                    for jr in 0..w {
                        let xf = jr as f64 + d_fg;
                        if xf >= x0 as f64 && xf <= (x1 - 1) as f64 {
                            *right.at_mut(0, c, i, jr) = sample_row(&row, xf);
                        }
                    }
                }
            }

            let gt = Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, i, j| {
                S::from_f64(if in_rect(i, j) { d_fg / wf } else { d_bg / wf })
            });
            // occluded: the image-edge band, plus background hidden behind
            // the foreground (the strip of width d_fg - d_bg left of it)
            let occ = Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, i, j| {
                let jf = j as f64;
                let edge = jf < if in_rect(i, j) { d_fg } else { d_bg };
                let behind = (y0..y1).contains(&i)
                    && !in_rect(i, j)
                    && jf >= x0 as f64 - (d_fg - d_bg)
                    && jf < x0 as f64;
                if edge || behind {
                    S::ONE
                } else {
                    S::ZERO
                }
            });

            Ok(StereoSample {
                left: left.cast(),
                right: right.cast(),
                gt_disparity: Some(gt),
                occlusion_mask: Some(occ),
                calib: default_calib(),
            })
        }
    }
}
