//! The training objective: Gaussian-window SSIM, the mixed SSIM/L1 image
//! loss, left-right disparity consistency, total-variation smoothness, their
//! per-scale combination, and the 4-scale total.
//!
//! Conventions pinned here: disparities are width fractions and non-negative;
//! the left map looks its counterpart up at `j - d*W` (the consistency loss
//! of a consistent pair is exactly zero under this sign); the TV sum is
//! normalized by pixel count so one smoothness weight works at every scale;
//! pixel means average over channels as well.

use alloc::format;

use crate::error::TensorError;
use crate::image::WarpDirection;
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};

/// Loss coefficients and SSIM window parameters.
///
/// `alpha_im`, `alpha_tv`, `alpha_lr` weight the per-scale combination;
/// `alpha_ssim_mix` is the SSIM share of the image loss; `c1`, `c2` are the
/// SSIM stabilizers for images in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_im: f64,
    pub alpha_tv: f64,
    pub alpha_lr: f64,
    pub alpha_ssim_mix: f64,
    pub c1: f64,
    pub c2: f64,
    pub ssim_sigma: f64,
    pub ssim_radius: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha_im: 1.0,
            alpha_tv: 0.001,
            alpha_lr: 1.0,
            alpha_ssim_mix: 0.85,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
            ssim_sigma: 1.5,
            ssim_radius: 3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TensorError> {
        if self.alpha_im < 0.0 || self.alpha_tv < 0.0 || self.alpha_lr < 0.0 {
            return Err(TensorError::invalid("loss weights must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.alpha_ssim_mix) {
            return Err(TensorError::invalid(format!(
                "alpha_ssim_mix must be in [0,1], got {}",
                self.alpha_ssim_mix
            )));
        }
        if self.c1 <= 0.0 || self.c2 <= 0.0 {
            return Err(TensorError::invalid("SSIM constants c1, c2 must be > 0"));
        }
        if self.ssim_sigma <= 0.0 || self.ssim_radius < 1 {
            return Err(TensorError::invalid("SSIM window parameters out of range"));
        }
        Ok(())
    }
}

/// Which view's disparity map is being checked for consistency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Per-pixel SSIM from Gaussian-weighted local moments; values in `[-1, 1]`.
pub fn ssim_map<S: Scalar>(
    tape: &mut Tape<S>,
    x: TensorId,
    y: TensorId,
    w: &LossWeights,
) -> Result<TensorId, TensorError> {
    if tape.shape(x) != tape.shape(y) {
        return Err(TensorError::shape(format!(
            "ssim_map: {} vs {}",
            tape.shape(x),
            tape.shape(y)
        )));
    }
    let c1 = S::from_f64(w.c1);
    let c2 = S::from_f64(w.c2);
    let two = S::from_f64(2.0);
    let (sigma, radius) = (w.ssim_sigma, w.ssim_radius);

    let mx = tape.gaussian_blur(x, sigma, radius)?;
    let my = tape.gaussian_blur(y, sigma, radius)?;
    let mxx = tape.mul(mx, mx)?;
    let myy = tape.mul(my, my)?;
    let mxy = tape.mul(mx, my)?;

    let xx = tape.mul(x, x)?;
    let yy = tape.mul(y, y)?;
    let xy = tape.mul(x, y)?;
    let bxx = tape.gaussian_blur(xx, sigma, radius)?;
    let byy = tape.gaussian_blur(yy, sigma, radius)?;
    let bxy = tape.gaussian_blur(xy, sigma, radius)?;
    let var_x = tape.sub(bxx, mxx)?;
    let var_y = tape.sub(byy, myy)?;
    let cov = tape.sub(bxy, mxy)?;

    let mxy2 = tape.scale(mxy, two)?;
    let num_l = tape.add_const(mxy2, c1)?;
    let cov2 = tape.scale(cov, two)?;
    let num_r = tape.add_const(cov2, c2)?;
    let num = tape.mul(num_l, num_r)?;

    let msum = tape.add(mxx, myy)?;
    let den_l = tape.add_const(msum, c1)?;
    let vsum = tape.add(var_x, var_y)?;
    let den_r = tape.add_const(vsum, c2)?;
    let den = tape.mul(den_l, den_r)?;

    tape.div(num, den)
}

/// Mixed SSIM/L1 photometric loss, averaged over pixels and channels.
pub fn image_loss<S: Scalar>(
    tape: &mut Tape<S>,
    target: TensorId,
    reconstruction: TensorId,
    w: &LossWeights,
) -> Result<TensorId, TensorError> {
    let half_mix = S::from_f64(w.alpha_ssim_mix / 2.0);
    let l1_mix = S::from_f64(1.0 - w.alpha_ssim_mix);

    let ssim = ssim_map(tape, target, reconstruction, w)?;
    // alpha * (1 - ssim) / 2 as (-alpha/2) * ssim + alpha/2
    let neg = tape.scale(ssim, -half_mix)?;
    let ssim_term = tape.add_const(neg, half_mix)?;

    let diff = tape.sub(target, reconstruction)?;
    let adiff = tape.abs(diff)?;
    let l1_term = tape.scale(adiff, l1_mix)?;

    let combined = tape.add(ssim_term, l1_term)?;
    tape.mean(combined)
}

/// Mean absolute mismatch between one disparity map and its counterpart
/// sampled through it. Consistent constant fields score exactly zero.
pub fn lr_consistency_loss<S: Scalar>(
    tape: &mut Tape<S>,
    d_own: TensorId,
    d_other: TensorId,
    side: Side,
) -> Result<TensorId, TensorError> {
    if tape.shape(d_own) != tape.shape(d_other) {
        return Err(TensorError::shape(format!(
            "lr_consistency_loss: {} vs {}",
            tape.shape(d_own),
            tape.shape(d_other)
        )));
    }
    let direction = match side {
        Side::Left => WarpDirection::RightToLeft,
        Side::Right => WarpDirection::LeftToRight,
    };
    let sampled = tape.warp_horizontal(d_other, d_own, direction)?;
    let diff = tape.sub(d_own, sampled)?;
    let adiff = tape.abs(diff)?;
    tape.mean(adiff)
}

/// Total variation of a disparity map, normalized by pixel count.
pub fn tv_loss<S: Scalar>(tape: &mut Tape<S>, d: TensorId) -> Result<TensorId, TensorError> {
    let sh = tape.shape(d);
    let sum = tape.tv_sum(d)?;
    tape.scale(sum, S::from_f64(1.0 / sh.len() as f64))
}

/// Node ids of the six per-scale terms and their weighted combination.
#[derive(Debug, Clone, Copy)]
pub struct ScaleLossTerms {
    pub im_l: TensorId,
    pub im_r: TensorId,
    pub tv_l: TensorId,
    pub tv_r: TensorId,
    pub lr_l: TensorId,
    pub lr_r: TensorId,
    pub combined: TensorId,
}

/// Snapshot of the six per-scale terms and the combined value.
///
/// `combined` always equals [`ScaleLossBreakdown::recombine`] bitwise: the
/// tape combines the terms with the same sequence of scalar operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleLossBreakdown<S> {
    pub im_l: S,
    pub im_r: S,
    pub tv_l: S,
    pub tv_r: S,
    pub lr_l: S,
    pub lr_r: S,
    pub combined: S,
}

impl<S: Scalar> ScaleLossBreakdown<S> {
    /// Weighted sum of the six reported terms, in the tape's accumulation
    /// order.
    pub fn recombine(&self, w: &LossWeights) -> S {
        S::from_f64(w.alpha_im) * (self.im_l + self.im_r)
            + S::from_f64(w.alpha_tv) * (self.tv_l + self.tv_r)
            + S::from_f64(w.alpha_lr) * (self.lr_l + self.lr_r)
    }
}

impl ScaleLossTerms {
    pub fn snapshot<S: Scalar>(&self, tape: &Tape<S>) -> ScaleLossBreakdown<S> {
        let v = |id| tape.value(id).data()[0];
        ScaleLossBreakdown {
            im_l: v(self.im_l),
            im_r: v(self.im_r),
            tv_l: v(self.tv_l),
            tv_r: v(self.tv_r),
            lr_l: v(self.lr_l),
            lr_r: v(self.lr_r),
            combined: v(self.combined),
        }
    }
}

/// Single-scale loss: reconstruct each view from the other, then weight the
/// photometric, smoothness, and consistency terms of both sides.
pub fn scale_loss<S: Scalar>(
    tape: &mut Tape<S>,
    i_l: TensorId,
    i_r: TensorId,
    d_l: TensorId,
    d_r: TensorId,
    w: &LossWeights,
) -> Result<ScaleLossTerms, TensorError> {
    if tape.shape(i_l) != tape.shape(i_r) {
        return Err(TensorError::shape(format!(
            "scale_loss: left image {} vs right image {}",
            tape.shape(i_l),
            tape.shape(i_r)
        )));
    }

    let recon_l = tape.warp_horizontal(i_r, d_l, WarpDirection::RightToLeft)?;
    let recon_r = tape.warp_horizontal(i_l, d_r, WarpDirection::LeftToRight)?;

    let im_l = image_loss(tape, i_l, recon_l, w)?;
    let im_r = image_loss(tape, i_r, recon_r, w)?;
    let tv_l = tv_loss(tape, d_l)?;
    let tv_r = tv_loss(tape, d_r)?;
    let lr_l = lr_consistency_loss(tape, d_l, d_r, Side::Left)?;
    let lr_r = lr_consistency_loss(tape, d_r, d_l, Side::Right)?;

    let im_sum = tape.add(im_l, im_r)?;
    let im_term = tape.scale(im_sum, S::from_f64(w.alpha_im))?;
    let tv_sum = tape.add(tv_l, tv_r)?;
    let tv_term = tape.scale(tv_sum, S::from_f64(w.alpha_tv))?;
    let lr_sum = tape.add(lr_l, lr_r)?;
    let lr_term = tape.scale(lr_sum, S::from_f64(w.alpha_lr))?;
    let partial = tape.add(im_term, tv_term)?;
    let combined = tape.add(partial, lr_term)?;

    Ok(ScaleLossTerms {
        im_l,
        im_r,
        tv_l,
        tv_r,
        lr_l,
        lr_r,
        combined,
    })
}

/// Plain sum of the four per-scale losses.
pub fn total_loss<S: Scalar>(
    tape: &mut Tape<S>,
    scale_losses: &[TensorId],
) -> Result<TensorId, TensorError> {
    if scale_losses.len() != 4 {
        return Err(TensorError::invalid(format!(
            "total_loss: expected 4 scale losses, got {}",
            scale_losses.len()
        )));
    }
    let mut acc = scale_losses[0];
    for &s in &scale_losses[1..] {
        acc = tape.add(acc, s)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;
    use crate::tensor::{Shape, Tensor};

    fn noise(shape: Shape, seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
        let mut rng = SeedRng::new(seed);
        Tensor::from_fn(shape, |_, _, _, _| rng.uniform(lo, hi))
    }

    #[test]
    fn ssim_of_identical_inputs_is_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(noise(Shape::new(1, 2, 6, 8), 1, 0.0, 1.0)).unwrap();
        let s = ssim_map(&mut tape, x, x, &LossWeights::default()).unwrap();
        for &v in tape.value(s).data() {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn ssim_of_distinct_constants_matches_closed_form() {
        // x = 1, y = 0: all variances vanish, so SSIM = c1 / (1 + c1).
        let w = LossWeights {
            c1: 1e-4,
            ..LossWeights::default()
        };
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(Shape::new(1, 1, 6, 8), 1.0)).unwrap();
        let y = tape.leaf(Tensor::zeros(Shape::new(1, 1, 6, 8))).unwrap();
        let s = ssim_map(&mut tape, x, y, &w).unwrap();
        let expect = 1e-4 / (1.0 + 1e-4);
        for &v in tape.value(s).data() {
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        }
        assert!((expect - 9.999e-5).abs() < 1e-8);
    }

    #[test]
    fn ssim_commutes_with_mirror() {
        let w = LossWeights::default();
        let mut tape = Tape::new();
        let x = tape.leaf(noise(Shape::new(1, 1, 5, 9), 2, 0.0, 1.0)).unwrap();
        let y = tape.leaf(noise(Shape::new(1, 1, 5, 9), 3, 0.0, 1.0)).unwrap();
        let mx = tape.mirror(x).unwrap();
        let my = tape.mirror(y).unwrap();
        let s_m = ssim_map(&mut tape, mx, my, &w).unwrap();
        let s = ssim_map(&mut tape, x, y, &w).unwrap();
        let ms = tape.mirror(s).unwrap();
        for (a, b) in tape.value(s_m).data().iter().zip(tape.value(ms).data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn image_loss_of_identical_inputs_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(noise(Shape::new(1, 3, 6, 8), 4, 0.0, 1.0)).unwrap();
        let l = image_loss(&mut tape, x, x, &LossWeights::default()).unwrap();
        assert_eq!(tape.scalar_value(l).unwrap(), 0.0);
    }

    #[test]
    fn image_loss_reduces_to_l1_when_mix_is_zero() {
        let w = LossWeights {
            alpha_ssim_mix: 0.0,
            ..LossWeights::default()
        };
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(Shape::new(1, 1, 4, 4), 1.0)).unwrap();
        let y = tape.leaf(Tensor::full(Shape::new(1, 1, 4, 4), 0.5)).unwrap();
        let l = image_loss(&mut tape, x, y, &w).unwrap();
        assert!((tape.scalar_value(l).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn image_loss_pure_ssim_on_constants() {
        let w = LossWeights {
            alpha_ssim_mix: 1.0,
            c1: 1e-4,
            ..LossWeights::default()
        };
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(Shape::new(1, 1, 6, 8), 1.0)).unwrap();
        let y = tape.leaf(Tensor::zeros(Shape::new(1, 1, 6, 8))).unwrap();
        let l = image_loss(&mut tape, x, y, &w).unwrap();
        let expect = (1.0 - 1e-4 / (1.0 + 1e-4)) / 2.0;
        assert!((tape.scalar_value(l).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.49995).abs() < 1e-7);
    }

    #[test]
    fn consistent_constant_fields_score_exactly_zero() {
        let mut tape = Tape::new();
        let d = tape
            .leaf(Tensor::full(Shape::new(1, 1, 4, 8), 0.173))
            .unwrap();
        let d2 = tape
            .leaf(Tensor::full(Shape::new(1, 1, 4, 8), 0.173))
            .unwrap();
        for side in [Side::Left, Side::Right] {
            let l = lr_consistency_loss(&mut tape, d, d2, side).unwrap();
            assert_eq!(tape.scalar_value(l).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_field_mismatch_is_their_difference() {
        // Constant maps make the lookup a no-op, so the loss is |2/W - 3/W|.
        let w = 8usize;
        let mut tape = Tape::new();
        let d_own = tape
            .leaf(Tensor::full(Shape::new(1, 1, 4, w), 2.0 / w as f64))
            .unwrap();
        let d_other = tape
            .leaf(Tensor::full(Shape::new(1, 1, 4, w), 3.0 / w as f64))
            .unwrap();
        let l = lr_consistency_loss(&mut tape, d_own, d_other, Side::Left).unwrap();
        assert!((tape.scalar_value(l).unwrap() - 1.0 / w as f64).abs() < 1e-15);
    }

    #[test]
    fn zero_own_disparity_reads_other_at_identity() {
        let mut tape = Tape::new();
        let d_own = tape.leaf(Tensor::zeros(Shape::new(1, 1, 3, 6))).unwrap();
        let other = noise(Shape::new(1, 1, 3, 6), 5, 0.0, 0.2);
        let expect =
            other.data().iter().map(|v| v.abs()).sum::<f64>() / other.len() as f64;
        let d_other = tape.leaf(other).unwrap();
        let l = lr_consistency_loss(&mut tape, d_own, d_other, Side::Left).unwrap();
        assert!((tape.scalar_value(l).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn tv_of_constant_is_exactly_zero() {
        let mut tape = Tape::new();
        let d = tape
            .leaf(Tensor::full(Shape::new(2, 1, 5, 7), 0.3))
            .unwrap();
        let l = tv_loss(&mut tape, d).unwrap();
        assert_eq!(tape.scalar_value(l).unwrap(), 0.0);
    }

    #[test]
    fn tv_of_column_ramp() {
        // d(i, j) = j on a 2x3 map: four unit horizontal steps, no vertical
        // ones, normalized by the six pixels.
        let mut tape = Tape::new();
        let d = tape
            .leaf(Tensor::from_fn(Shape::new(1, 1, 2, 3), |_, _, _, j| j as f64))
            .unwrap();
        let l = tv_loss(&mut tape, d).unwrap();
        assert!((tape.scalar_value(l).unwrap() - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn tv_is_mirror_invariant() {
        let mut tape = Tape::new();
        let d = tape.leaf(noise(Shape::new(1, 1, 5, 7), 6, 0.0, 0.3)).unwrap();
        let md = tape.mirror(d).unwrap();
        let a = tv_loss(&mut tape, d).unwrap();
        let b = tv_loss(&mut tape, md).unwrap();
        let (av, bv) = (tape.scalar_value(a).unwrap(), tape.scalar_value(b).unwrap());
        assert!((av - bv).abs() < 1e-13 * av.abs().max(1.0));
    }

    #[test]
    fn zero_weights_zero_scale_loss() {
        let w = LossWeights {
            alpha_im: 0.0,
            alpha_tv: 0.0,
            alpha_lr: 0.0,
            ..LossWeights::default()
        };
        let mut tape = Tape::new();
        let i_l = tape.leaf(noise(Shape::new(1, 3, 8, 8), 7, 0.0, 1.0)).unwrap();
        let i_r = tape.leaf(noise(Shape::new(1, 3, 8, 8), 8, 0.0, 1.0)).unwrap();
        let d_l = tape.leaf(Tensor::full(Shape::new(1, 1, 8, 8), 0.05)).unwrap();
        let d_r = tape.leaf(Tensor::full(Shape::new(1, 1, 8, 8), 0.05)).unwrap();
        let terms = scale_loss(&mut tape, i_l, i_r, d_l, d_r, &w).unwrap();
        assert_eq!(tape.scalar_value(terms.combined).unwrap(), 0.0);
    }

    #[test]
    fn breakdown_recombines_bitwise() {
        let w = LossWeights::default();
        let mut tape = Tape::new();
        let i_l = tape.leaf(noise(Shape::new(1, 3, 8, 8), 9, 0.0, 1.0)).unwrap();
        let i_r = tape.leaf(noise(Shape::new(1, 3, 8, 8), 10, 0.0, 1.0)).unwrap();
        let d_l = tape.leaf(noise(Shape::new(1, 1, 8, 8), 11, 0.0, 0.1)).unwrap();
        let d_r = tape.leaf(noise(Shape::new(1, 1, 8, 8), 12, 0.0, 0.1)).unwrap();
        let terms = scale_loss(&mut tape, i_l, i_r, d_l, d_r, &w).unwrap();
        let b = terms.snapshot(&tape);
        assert_eq!(b.combined.to_bits(), b.recombine(&w).to_bits());
        for v in [b.im_l, b.im_r, b.tv_l, b.tv_r, b.lr_l, b.lr_r] {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn total_is_plain_sum() {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&v| tape.leaf(Tensor::scalar(v)).unwrap())
            .collect();
        let t = total_loss(&mut tape, &ids).unwrap();
        assert_eq!(tape.scalar_value(t).unwrap(), 10.0);

        let zeros: Vec<TensorId> = (0..4)
            .map(|_| tape.leaf(Tensor::scalar(0.0)).unwrap())
            .collect();
        let z = total_loss(&mut tape, &zeros).unwrap();
        assert_eq!(tape.scalar_value(z).unwrap(), 0.0);

        assert!(total_loss(&mut tape, &ids[..3]).is_err());
    }

    #[test]
    fn mirror_swapping_the_pair_preserves_scale_loss() {
        let w = LossWeights::default();
        let mut tape = Tape::new();
        let i_l = tape.leaf(noise(Shape::new(1, 3, 8, 16), 13, 0.0, 1.0)).unwrap();
        let i_r = tape.leaf(noise(Shape::new(1, 3, 8, 16), 14, 0.0, 1.0)).unwrap();
        let d_l = tape.leaf(noise(Shape::new(1, 1, 8, 16), 15, 0.0, 0.1)).unwrap();
        let d_r = tape.leaf(noise(Shape::new(1, 1, 8, 16), 16, 0.0, 0.1)).unwrap();
        let direct = scale_loss(&mut tape, i_l, i_r, d_l, d_r, &w).unwrap();

        let mi_r = tape.mirror(i_r).unwrap();
        let mi_l = tape.mirror(i_l).unwrap();
        let md_r = tape.mirror(d_r).unwrap();
        let md_l = tape.mirror(d_l).unwrap();
        let swapped = scale_loss(&mut tape, mi_r, mi_l, md_r, md_l, &w).unwrap();

        let a = tape.scalar_value(direct.combined).unwrap();
        let b = tape.scalar_value(swapped.combined).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }
}
