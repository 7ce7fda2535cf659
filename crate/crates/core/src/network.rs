//! Compact encoder-decoder disparity network with skip connections and four
//! output scales, plus the mirrored Siamese forward pass.
//!
//! One function `f` maps an image to a left-disparity pyramid. The right
//! branch never gets its own weights: the right image is mirrored, pushed
//! through the same `f`, and the outputs mirrored back. Both branches
//! reference identical parameter leaves on the tape, so backward sums their
//! gradient contributions automatically.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::params::{bind_params, BoundParams, ParamSet};
use crate::rng::SeedRng;
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};
use crate::tensor::{Shape, Tensor};

/// Architecture description: encoder widths (one stride-2 convolution per
/// level), per-level kernel sizes, the disparity ceiling as a width
/// fraction, and the number of output scales.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub encoder_channels: Vec<usize>,
    pub kernel_sizes: Vec<usize>,
    pub d_max: f64,
    pub scales: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            in_channels: 3,
            encoder_channels: vec![16, 32, 64, 96, 128],
            kernel_sizes: vec![7, 5, 3, 3, 3],
            d_max: 0.3,
            scales: 4,
        }
    }
}

impl NetworkSpec {
    pub fn levels(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Input spatial dimensions must be divisible by this.
    pub fn size_divisor(&self) -> usize {
        1 << self.levels()
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if self.encoder_channels.is_empty() {
            return Err(TensorError::invalid("encoder_channels must be non-empty"));
        }
        if self.encoder_channels.len() != self.kernel_sizes.len() {
            return Err(TensorError::invalid(format!(
                "encoder_channels ({}) and kernel_sizes ({}) must have equal length",
                self.encoder_channels.len(),
                self.kernel_sizes.len()
            )));
        }
        if self.scales < 1 || self.encoder_channels.len() < self.scales + 1 {
            return Err(TensorError::invalid(format!(
                "need at least scales + 1 = {} encoder levels, got {}",
                self.scales + 1,
                self.encoder_channels.len()
            )));
        }
        if !(self.d_max > 0.0 && self.d_max < 1.0) {
            return Err(TensorError::invalid(format!(
                "d_max must be in (0, 1), got {}",
                self.d_max
            )));
        }
        if self.in_channels == 0 || self.encoder_channels.iter().any(|&c| c == 0) {
            return Err(TensorError::invalid("channel counts must be positive"));
        }
        if self.kernel_sizes.iter().any(|&k| k % 2 == 0) {
            return Err(TensorError::invalid("kernel sizes must be odd"));
        }
        Ok(())
    }

    fn check_input(&self, shape: Shape) -> Result<(), TensorError> {
        let div = self.size_divisor();
        if shape.c != self.in_channels {
            return Err(TensorError::shape(format!(
                "network expects {} input channels, image has {}",
                self.in_channels, shape.c
            )));
        }
        if shape.h % div != 0 || shape.w % div != 0 {
            return Err(TensorError::shape(format!(
                "image size {}x{} not divisible by {div}",
                shape.h, shape.w
            )));
        }
        Ok(())
    }
}

/// One convolution in the fixed layer walk shared by parameter creation and
/// the forward pass.
enum LayerRole {
    /// Stride-2 encoder convolution.
    Encoder,
    /// Stride-1 decoder convolution producing features at `1/2^level` resolution.
    Decoder { level: usize },
    /// Disparity head.
    Head,
}

struct LayerDesc {
    name: String,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    role: LayerRole,
}

/// Fixed walk over all convolutions, in creation-and-use order.
fn layer_plan(spec: &NetworkSpec) -> Vec<LayerDesc> {
    let levels = spec.levels();
    let ch = &spec.encoder_channels;
    let mut plan = Vec::new();

    for l in 1..=levels {
        plan.push(LayerDesc {
            name: format!("enc{l}"),
            in_ch: if l == 1 { spec.in_channels } else { ch[l - 2] },
            out_ch: ch[l - 1],
            kernel: spec.kernel_sizes[l - 1],
            role: LayerRole::Encoder,
        });
    }

    // decoder feature width at level l mirrors the encoder's, with the
    // finest level reusing the first encoder width
    let dec_ch = |l: usize| ch[l.max(1) - 1];
    for l in (0..levels).rev() {
        let prev_ch = if l == levels - 1 { ch[levels - 1] } else { dec_ch(l + 1) };
        let mut in_ch = prev_ch;
        if l >= 1 {
            in_ch += ch[l - 1];
        }
        if l + 1 < spec.scales {
            in_ch += 1; // upsampled coarser disparity
        }
        plan.push(LayerDesc {
            name: format!("dec{l}"),
            in_ch,
            out_ch: dec_ch(l),
            kernel: 3,
            role: LayerRole::Decoder { level: l },
        });
        if l < spec.scales {
            plan.push(LayerDesc {
                name: format!("disp{}", l + 1),
                in_ch: dec_ch(l),
                out_ch: 1,
                kernel: 3,
                role: LayerRole::Head,
            });
        }
    }
    plan
}

/// Fan-in-scaled normal weights (std = sqrt(2 / fan_in)) and zero biases,
/// deterministic in the seed.
pub fn init_params<S: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<ParamSet<S>, TensorError> {
    spec.validate()?;
    let mut rng = SeedRng::new(seed);
    let mut set = ParamSet::new();
    for desc in layer_plan(spec) {
        let fan_in = (desc.in_ch * desc.kernel * desc.kernel) as f64;
        let std = libm::sqrt(2.0 / fan_in);
        let shape = Shape::new(desc.out_ch, desc.in_ch, desc.kernel, desc.kernel);
        let mut data = Vec::with_capacity(shape.len());
        for _ in 0..shape.len() {
            data.push(S::from_f64(rng.normal() * std));
        }
        set.push(format!("{}.w", desc.name), Tensor::new(shape, data)?)?;
        set.push(
            format!("{}.b", desc.name),
            Tensor::zeros(Shape::new(desc.out_ch, 1, 1, 1)),
        )?;
    }
    Ok(set)
}

/// Disparity pyramid node ids, finest scale first; values in `[0, d_max]`.
#[derive(Debug, Clone)]
pub struct MultiScaleDisparity {
    pub maps: Vec<TensorId>,
}

/// Left and right disparity pyramids from one shared parameter set. The
/// right maps are already mirrored back into right-image coordinates.
#[derive(Debug, Clone)]
pub struct SiameseOutput {
    pub left: MultiScaleDisparity,
    pub right: MultiScaleDisparity,
}

/// Single-image forward pass; returns `scales` disparity maps, finest first.
pub fn forward_single<S: Scalar>(
    tape: &mut Tape<S>,
    spec: &NetworkSpec,
    params: &BoundParams,
    image: TensorId,
) -> Result<MultiScaleDisparity, TensorError> {
    spec.check_input(tape.shape(image))?;
    let plan = layer_plan(spec);
    if params.len() != plan.len() * 2 {
        return Err(TensorError::invalid(format!(
            "parameter set has {} tensors but the architecture needs {}",
            params.len(),
            plan.len() * 2
        )));
    }
    let d_max = S::from_f64(spec.d_max);

    let mut cursor = 0usize;
    let mut next = || {
        let pair = (params.id(cursor), params.id(cursor + 1));
        cursor += 2;
        pair
    };

    let mut enc_feats: Vec<TensorId> = Vec::with_capacity(spec.levels());
    let mut x = image;
    // coarse-to-fine state
    let mut features = image; // replaced by the bottleneck below
    let mut disps_coarse_first: Vec<TensorId> = Vec::with_capacity(spec.scales);

    for desc in &plan {
        let (w, b) = next();
        match desc.role {
            LayerRole::Encoder => {
                let pad = (desc.kernel - 1) / 2;
                let conv = tape.conv2d(x, w, b, 2, pad)?;
                x = tape.elu(conv)?;
                enc_feats.push(x);
                features = x;
            }
            LayerRole::Decoder { level } => {
                let up = tape.upsample2x_nearest(features)?;
                let mut inputs = vec![up];
                if level >= 1 {
                    inputs.push(enc_feats[level - 1]);
                }
                if level + 1 < spec.scales {
                    let coarser = *disps_coarse_first.last().expect("head precedes use");
                    inputs.push(tape.upsample2x_nearest(coarser)?);
                }
                let cat = tape.concat_channels(&inputs)?;
                let conv = tape.conv2d(cat, w, b, 1, 1)?;
                features = tape.elu(conv)?;
            }
            LayerRole::Head => {
                let conv = tape.conv2d(features, w, b, 1, 1)?;
                let sig = tape.sigmoid(conv)?;
                disps_coarse_first.push(tape.scale(sig, d_max)?);
            }
        }
    }

    disps_coarse_first.reverse();
    Ok(MultiScaleDisparity {
        maps: disps_coarse_first,
    })
}

/// Siamese pass: the left image through `f`, the mirrored right image
/// through the same `f`, outputs mirrored back to right-image coordinates.
pub fn forward_siamese<S: Scalar>(
    tape: &mut Tape<S>,
    spec: &NetworkSpec,
    params: &BoundParams,
    left_image: TensorId,
    right_image: TensorId,
) -> Result<SiameseOutput, TensorError> {
    if tape.shape(left_image) != tape.shape(right_image) {
        return Err(TensorError::shape(format!(
            "forward_siamese: left {} vs right {}",
            tape.shape(left_image),
            tape.shape(right_image)
        )));
    }
    let left = forward_single(tape, spec, params, left_image)?;
    let mirrored_right = tape.mirror(right_image)?;
    let right_as_left = forward_single(tape, spec, params, mirrored_right)?;
    let mut right_maps = Vec::with_capacity(right_as_left.maps.len());
    for &m in &right_as_left.maps {
        right_maps.push(tape.mirror(m)?);
    }
    Ok(SiameseOutput {
        left,
        right: MultiScaleDisparity { maps: right_maps },
    })
}

/// Test-time entry point: one image, no stereo counterpart. Runs
/// [`forward_single`] on a private tape and returns the disparity pyramid as
/// plain tensors, finest scale first.
pub fn infer_mono<S: Scalar>(
    params: &ParamSet<S>,
    spec: &NetworkSpec,
    image: &Tensor<S>,
) -> Result<Vec<Tensor<S>>, TensorError> {
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, params)?;
    let img = tape.leaf(image.clone())?;
    let out = forward_single(&mut tape, spec, &bound, img)?;
    Ok(out.maps.iter().map(|&id| tape.value(id).clone()).collect())
}
