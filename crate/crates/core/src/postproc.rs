//! Test-time mirror-blend post-processing.
//!
//! Edge occlusions make the left band of a disparity map unreliable; the
//! mirrored inference sees that band un-occluded. Each edge takes the
//! estimate whose view covers it, the center averages the two.

use alloc::format;
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::image::mirror_values;
use crate::network::{infer_mono, NetworkSpec};
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Width of the edge ramps as a fraction of image width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendConfig {
    pub ramp_fraction: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig { ramp_fraction: 0.05 }
    }
}

impl BlendConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        if !(self.ramp_fraction > 0.0 && self.ramp_fraction < 0.5) {
            return Err(TensorError::invalid(format!(
                "ramp_fraction must be in (0, 0.5), got {}",
                self.ramp_fraction
            )));
        }
        Ok(())
    }
}

/// Blends a disparity map with the un-mirrored disparity of the mirrored
/// image. `d_from_mirror` must already be back in the original image's
/// coordinates. At column 0 the output is exactly `d_from_mirror`, in the
/// center the plain average; the weights always sum to one.
pub fn mirror_blend<S: Scalar>(
    d: &Tensor<S>,
    d_from_mirror: &Tensor<S>,
    cfg: &BlendConfig,
) -> Result<Tensor<S>, TensorError> {
    cfg.validate()?;
    if d.shape() != d_from_mirror.shape() {
        return Err(TensorError::shape(format!(
            "mirror_blend: {} vs {}",
            d.shape(),
            d_from_mirror.shape()
        )));
    }
    let sh = d.shape();
    let ramp = cfg.ramp_fraction * sh.w as f64;
    if 2.0 * ramp > (sh.w - 1) as f64 {
        return Err(TensorError::invalid(format!(
            "ramp of {ramp:.2} columns overlaps itself on a {}-wide map",
            sh.w
        )));
    }

    let ramp_weight = |j: usize| -> f64 {
        let jf = j as f64;
        if jf < ramp {
            1.0 - jf / ramp
        } else {
            0.0
        }
    };
    let mut w_left: Vec<S> = Vec::with_capacity(sh.w);
    let mut w_right: Vec<S> = Vec::with_capacity(sh.w);
    let mut w_center: Vec<S> = Vec::with_capacity(sh.w);
    for j in 0..sh.w {
        let wl = ramp_weight(j);
        let wr = ramp_weight(sh.w - 1 - j);
        w_left.push(S::from_f64(wl));
        w_right.push(S::from_f64(wr));
        w_center.push(S::ONE - S::from_f64(wl) - S::from_f64(wr));
    }

    let half = S::from_f64(0.5);
    let mut out = Tensor::zeros(sh);
    for n in 0..sh.n {
        for c in 0..sh.c {
            let a = d.plane(n, c);
            let b = d_from_mirror.plane(n, c);
            let dst = out.plane_mut(n, c);
            for i in 0..sh.h {
                for j in 0..sh.w {
                    let k = i * sh.w + j;
                    let avg = (a[k] + b[k]) * half;
                    dst[k] = w_left[j] * b[k] + w_right[j] * a[k] + w_center[j] * avg;
                }
            }
        }
    }
    Ok(out)
}

/// Inference with post-processing: run the network on the image and on its
/// mirror, un-mirror the second estimate, and blend. Finest scale only.
pub fn infer_with_pp<S: Scalar>(
    params: &ParamSet<S>,
    spec: &NetworkSpec,
    image: &Tensor<S>,
    cfg: &BlendConfig,
) -> Result<Tensor<S>, TensorError> {
    let direct = infer_mono(params, spec, image)?;
    let mirrored = infer_mono(params, spec, &mirror_values(image))?;
    let from_mirror = mirror_values(&mirrored[0]);
    mirror_blend(&direct[0], &from_mirror, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;
    use crate::rng::SeedRng;
    use crate::tensor::Shape;
    use alloc::vec;

    fn noise(shape: Shape, seed: u64) -> Tensor<f64> {
        let mut rng = SeedRng::new(seed);
        Tensor::from_fn(shape, |_, _, _, _| rng.uniform(0.0, 0.3))
    }

    #[test]
    fn blend_of_equal_maps_is_the_map() {
        let d = noise(Shape::new(1, 1, 4, 40), 1);
        let out = mirror_blend(&d, &d, &BlendConfig::default()).unwrap();
        for (a, b) in out.data().iter().zip(d.data()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn center_is_the_exact_average_and_edges_pick_one_side() {
        let w = 40;
        let d = noise(Shape::new(1, 1, 2, w), 2);
        let dm = noise(Shape::new(1, 1, 2, w), 3);
        let cfg = BlendConfig { ramp_fraction: 0.05 };
        let out = mirror_blend(&d, &dm, &cfg).unwrap();
        let ramp = (0.05 * w as f64) as usize; // 2 columns
        for i in 0..2 {
            for j in ramp..w - ramp {
                let avg = (d.at(0, 0, i, j) + dm.at(0, 0, i, j)) * 0.5;
                assert_eq!(out.at(0, 0, i, j), avg);
            }
            // ramp endpoints: column 0 is d_from_mirror, column W-1 is d
            assert_eq!(out.at(0, 0, i, 0), dm.at(0, 0, i, 0));
            assert_eq!(out.at(0, 0, i, w - 1), d.at(0, 0, i, w - 1));
        }
    }

    #[test]
    fn vanishing_ramp_tends_to_the_plain_average() {
        let w = 16;
        let d = noise(Shape::new(1, 1, 1, w), 4);
        let dm = noise(Shape::new(1, 1, 1, w), 5);
        let cfg = BlendConfig { ramp_fraction: 1e-9 };
        let out = mirror_blend(&d, &dm, &cfg).unwrap();
        for j in 1..w - 1 {
            let avg = (d.at(0, 0, 0, j) + dm.at(0, 0, 0, j)) * 0.5;
            assert_eq!(out.at(0, 0, 0, j), avg);
        }
    }

    #[test]
    fn output_is_a_convex_combination() {
        let d = noise(Shape::new(1, 1, 3, 30), 6);
        let dm = noise(Shape::new(1, 1, 3, 30), 7);
        let out = mirror_blend(&d, &dm, &BlendConfig::default()).unwrap();
        for ((&o, &a), &b) in out.data().iter().zip(d.data()).zip(dm.data()) {
            let (lo, hi) = (a.min(b), a.max(b));
            assert!(o >= lo - 1e-12 && o <= hi + 1e-12);
        }
    }

    #[test]
    fn blend_weights_sum_to_one_via_constant_inputs() {
        let d = Tensor::full(Shape::new(1, 1, 2, 25), 0.125f64);
        let out = mirror_blend(&d, &d, &BlendConfig::default()).unwrap();
        for &v in out.data() {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_input_gives_symmetric_output() {
        let spec = crate::network::NetworkSpec {
            in_channels: 3,
            encoder_channels: vec![4, 6, 8, 10, 12],
            kernel_sizes: vec![3, 3, 3, 3, 3],
            d_max: 0.3,
            scales: 4,
        };
        let params = init_params::<f64>(&spec, 8).unwrap();
        let raw = noise(Shape::new(1, 3, 32, 64), 9);
        let sym_data = {
            let m = mirror_values(&raw);
            let mut t = raw.clone();
            for (a, b) in t.data_mut().iter_mut().zip(m.data()) {
                *a = (*a + b) * 0.5;
            }
            t
        };
        let out = infer_with_pp(&params, &spec, &sym_data, &BlendConfig::default()).unwrap();
        let mirrored = mirror_values(&out);
        for (a, b) in out.data().iter().zip(mirrored.data()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert_eq!(out.shape().h, 32);
        assert_eq!(out.shape().w, 64);
    }
}
