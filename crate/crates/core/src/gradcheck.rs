//! Central finite-difference gradient oracle for test suites.
//!
//! This deliberately stays independent of the tape's backward pass: it only
//! re-evaluates the recorded function at perturbed inputs, so agreement with
//! the analytic gradients is meaningful evidence.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

/// Tolerances for [`check_gradients`]; defaults match the verification
/// contract (64-bit, h = 1e-5, relative error 1e-4, absolute 1e-7 near zero).
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_tol: 1e-7,
        }
    }
}

/// Compares analytic gradients of `f` against central differences at every
/// element of every input. `f` receives a fresh tape plus leaf ids for the
/// inputs and must return the scalar loss node.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], f: F, cfg: &GradCheckConfig) -> Result<(), String>
where
    F: Fn(&mut Tape<f64>, &[TensorId]) -> Result<TensorId, TensorError>,
{
    let eval = |tensors: &[Tensor<f64>]| -> Result<f64, String> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = tensors
            .iter()
            .map(|t| tape.leaf(t.clone()))
            .collect::<Result<_, _>>()
            .map_err(|e| format!("leaf: {e}"))?;
        let loss = f(&mut tape, &ids).map_err(|e| format!("forward: {e}"))?;
        tape.scalar_value(loss)
            .map_err(|e| format!("loss: {e}"))
    };

    // analytic pass
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone()))
        .collect::<Result<_, _>>()
        .map_err(|e| format!("leaf: {e}"))?;
    let loss = f(&mut tape, &ids).map_err(|e| format!("forward: {e}"))?;
    let grads = tape.backward(loss).map_err(|e| format!("backward: {e}"))?;

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(ids[which]);
        for elem in 0..input.len() {
            let a = analytic.map_or(0.0, |g| g.data()[elem]);
            let orig = input.data()[elem];

            work[which].data_mut()[elem] = orig + cfg.step;
            let plus = eval(&work)?;
            work[which].data_mut()[elem] = orig - cfg.step;
            let minus = eval(&work)?;
            work[which].data_mut()[elem] = orig;

            let fd = (plus - minus) / (2.0 * cfg.step);
            let diff = (a - fd).abs();
            let scale = a.abs().max(fd.abs());
            if diff > cfg.abs_tol && diff > cfg.rel_tol * scale {
                return Err(format!(
                    "input {which} element {elem}: analytic {a:.9e} vs finite-difference {fd:.9e} (diff {diff:.3e})"
                ));
            }
        }
    }
    Ok(())
}

/// Runs the full finite-difference suite over every differentiable
/// operation: convolution, all pointwise kinds, reductions, concatenation,
/// mirror, warping w.r.t. image and disparity, Gaussian blur, pyramid
/// resampling, the SSIM map, and every loss term. `instances` random cases
/// per operation.
pub fn run_gradient_suite(instances: usize) -> Result<(), String> {
    use crate::image::WarpDirection;
    use crate::losses::{self, LossWeights, Side};
    use crate::rng::SeedRng;
    use crate::tape::{BinaryKind, UnaryKind};
    use crate::tensor::{Shape, Tensor};

    let cfg = GradCheckConfig::default();
    let img = Shape::new(1, 2, 6, 8);
    let disp = Shape::new(1, 1, 6, 8);

    let noise = |seed: u64, shape: Shape, lo: f64, hi: f64| -> Tensor<f64> {
        let mut rng = SeedRng::new(seed);
        Tensor::from_fn(shape, |_, _, _, _| rng.uniform(lo, hi))
    };
    // disparity fields whose pixel offsets stay fractional and interior, so
    // the sampler is differentiable at every probed point
    let frac_disp = |seed: u64, base_px: f64| -> Tensor<f64> {
        let mut rng = SeedRng::new(seed);
        Tensor::from_fn(disp, |_, _, _, _| {
            (base_px + rng.uniform(0.15, 0.45)) / disp.w as f64
        })
    };
    // fields whose neighbor differences stay far from the |.| kink
    let kinked_safe = |seed: u64| -> Tensor<f64> {
        let mut rng = SeedRng::new(seed);
        Tensor::from_fn(disp, |_, _, h, w| {
            let sign = if (h + w) % 2 == 0 { 1.0 } else { -1.0 };
            0.15 + sign * rng.uniform(0.01, 0.05)
        })
    };
    let run = |name: &str,
               inputs: &[Tensor<f64>],
               f: &dyn Fn(
        &mut Tape<f64>,
        &[TensorId],
    ) -> Result<TensorId, TensorError>|
     -> Result<(), String> {
        check_gradients(inputs, f, &cfg).map_err(|e| format!("{name}: {e}"))
    };

    for i in 0..instances as u64 {
        let s = i * 1000;

        // conv2d w.r.t. input, weight, and bias at both strides
        for (j, &(stride, padding)) in [(1usize, 1usize), (2, 1), (1, 0)].iter().enumerate() {
            let inputs = [
                noise(s + j as u64, Shape::new(1, 2, 5, 6), -1.0, 1.0),
                noise(s + 10 + j as u64, Shape::new(3, 2, 3, 3), -0.7, 0.7),
                noise(s + 20 + j as u64, Shape::new(3, 1, 1, 1), -0.3, 0.3),
            ];
            run("conv2d", &inputs, &|tape, ids| {
                let y = tape.conv2d(ids[0], ids[1], ids[2], stride, padding)?;
                tape.mean(y)
            })?;
        }

        // binary pointwise; divisor bounded away from zero
        for kind in [BinaryKind::Add, BinaryKind::Sub, BinaryKind::Mul, BinaryKind::Div] {
            let b_range = if kind == BinaryKind::Div { (0.5, 1.5) } else { (-1.0, 1.0) };
            let inputs = [
                noise(s + 30, img, -1.0, 1.0),
                noise(s + 31, img, b_range.0, b_range.1),
            ];
            run("binary", &inputs, &|tape, ids| {
                let y = tape.binary(kind, ids[0], ids[1])?;
                tape.mean(y)
            })?;
        }

        // unary pointwise; |.| probed away from the kink
        for (name, kind, lo, hi) in [
            ("abs", UnaryKind::Abs, 0.2, 1.0),
            ("sigmoid", UnaryKind::Sigmoid, -2.0, 2.0),
            ("elu", UnaryKind::Elu, -2.0, 2.0),
            ("scale", UnaryKind::Scale(-1.7), -1.0, 1.0),
            ("add_const", UnaryKind::AddConst(0.3), -1.0, 1.0),
        ] {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let x = noise(s + 40, img, lo, hi).map(|v| sign * v);
            run(name, &[x], &|tape, ids| {
                let y = tape.unary(kind, ids[0])?;
                tape.mean(y)
            })?;
        }

        // reductions
        let x = noise(s + 50, img, -1.0, 1.0);
        run("sum", core::slice::from_ref(&x), &|tape, ids| tape.sum(ids[0]))?;
        run("mean", &[x], &|tape, ids| tape.mean(ids[0]))?;

        // concat: both inputs weighted by a probe so gradients differ per slot
        let inputs = [
            noise(s + 60, Shape::new(1, 2, 4, 5), -1.0, 1.0),
            noise(s + 61, Shape::new(1, 3, 4, 5), -1.0, 1.0),
            noise(s + 62, Shape::new(1, 5, 4, 5), -1.0, 1.0),
        ];
        run("concat_channels", &inputs, &|tape, ids| {
            let y = tape.concat_channels(&[ids[0], ids[1]])?;
            let p = tape.mul(y, ids[2])?;
            tape.mean(p)
        })?;

        // mirror
        let inputs = [noise(s + 70, img, -1.0, 1.0), noise(s + 71, img, -1.0, 1.0)];
        run("mirror", &inputs, &|tape, ids| {
            let m = tape.mirror(ids[0])?;
            let p = tape.mul(m, ids[1])?;
            tape.mean(p)
        })?;

        // warp w.r.t. BOTH source and disparity, both directions
        for direction in [WarpDirection::RightToLeft, WarpDirection::LeftToRight] {
            let inputs = [
                noise(s + 80, img, 0.0, 1.0),
                frac_disp(s + 81, 1.0),
                noise(s + 82, img, -1.0, 1.0),
            ];
            run("warp_horizontal", &inputs, &|tape, ids| {
                let w = tape.warp_horizontal(ids[0], ids[1], direction)?;
                let p = tape.mul(w, ids[2])?;
                tape.mean(p)
            })?;
        }

        // gaussian blur
        let inputs = [noise(s + 90, img, 0.0, 1.0), noise(s + 91, img, -1.0, 1.0)];
        run("gaussian_blur", &inputs, &|tape, ids| {
            let b = tape.gaussian_blur(ids[0], 1.5, 3)?;
            let p = tape.mul(b, ids[1])?;
            tape.mean(p)
        })?;

        // pyramid resampling
        let inputs = [
            noise(s + 100, img, -1.0, 1.0),
            noise(s + 101, Shape::new(1, 2, 3, 4), -1.0, 1.0),
        ];
        run("downsample2x", &inputs, &|tape, ids| {
            let d = tape.downsample2x(ids[0])?;
            let p = tape.mul(d, ids[1])?;
            tape.mean(p)
        })?;
        let inputs = [
            noise(s + 102, Shape::new(1, 2, 3, 4), -1.0, 1.0),
            noise(s + 103, img, -1.0, 1.0),
        ];
        run("upsample2x_nearest", &inputs, &|tape, ids| {
            let u = tape.upsample2x_nearest(ids[0])?;
            let p = tape.mul(u, ids[1])?;
            tape.mean(p)
        })?;

        // SSIM map and the loss terms
        let w = LossWeights::default();
        let inputs = [noise(s + 110, img, 0.1, 0.9), noise(s + 111, img, 0.1, 0.9)];
        run("ssim_map", &inputs, &|tape, ids| {
            let m = losses::ssim_map(tape, ids[0], ids[1], &w)?;
            tape.mean(m)
        })?;

        let inputs = [noise(s + 120, img, 0.0, 0.45), noise(s + 121, img, 0.55, 1.0)];
        run("image_loss", &inputs, &|tape, ids| {
            losses::image_loss(tape, ids[0], ids[1], &w)
        })?;

        for side in [Side::Left, Side::Right] {
            let inputs = [frac_disp(s + 130, 1.0), frac_disp(s + 131, 2.0)];
            run("lr_consistency_loss", &inputs, &|tape, ids| {
                losses::lr_consistency_loss(tape, ids[0], ids[1], side)
            })?;
        }

        let inputs = [kinked_safe(s + 140)];
        run("tv_loss", &inputs, &|tape, ids| losses::tv_loss(tape, ids[0]))?;

        let inputs = [
            noise(s + 150, img, 0.0, 0.45),
            noise(s + 151, img, 0.55, 1.0),
            frac_disp(s + 152, 1.0),
            frac_disp(s + 153, 2.0),
        ];
        run("scale_loss", &inputs, &|tape, ids| {
            let terms = losses::scale_loss(tape, ids[0], ids[1], ids[2], ids[3], &w)?;
            Ok(terms.combined)
        })?;
    }
    Ok(())
}
