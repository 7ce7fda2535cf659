//! Adam optimization, photometric augmentation, and the stereo training
//! loop: Siamese forward, 4-scale loss pyramid, backward, update.
//!
//! Everything is deterministic in the run seed. Augmentation draws come
//! from a generator re-seeded per step, so a run resumed from a checkpoint
//! (parameters + optimizer state + step index) continues bit-identically.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::losses::{scale_loss, total_loss, LossWeights, ScaleLossBreakdown};
use crate::network::{forward_siamese, init_params, NetworkSpec};
use crate::params::{bind_params, ParamSet};
use crate::rng::{mix_seed, SeedRng};
use crate::scalar::Scalar;
use crate::synth::StereoSample;
use crate::tape::Tape;
use crate::tensor::{Shape, Tensor};

/// Adam hyperparameters; the defaults are the conventional
/// beta1 0.9 / beta2 0.999 / epsilon 1e-8 with a constant 1e-4 rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate: 1e-4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TensorError::invalid("adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) || !(self.learning_rate > 0.0) {
            return Err(TensorError::invalid(
                "adam epsilon and learning rate must be > 0",
            ));
        }
        Ok(())
    }
}

/// First/second moment estimates and the step counter, aligned with a
/// parameter set.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
    t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ParamSet<S>) -> Self {
        let zeros: Vec<Tensor<S>> = params
            .iter()
            .map(|p| Tensor::zeros(p.tensor.shape()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Rebuilds a state from checkpointed moments.
    pub fn from_parts(
        params: &ParamSet<S>,
        m: Vec<Tensor<S>>,
        v: Vec<Tensor<S>>,
        t: u64,
    ) -> Result<Self, TensorError> {
        if m.len() != params.len() || v.len() != params.len() {
            return Err(TensorError::invalid(format!(
                "adam state covers {} / {} tensors but the set has {}",
                m.len(),
                v.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if m[i].shape() != p.tensor.shape() || v[i].shape() != p.tensor.shape() {
                return Err(TensorError::shape(format!(
                    "adam state shape mismatch for {:?}",
                    p.name
                )));
            }
        }
        Ok(AdamState { m, v, t })
    }

    pub fn first_moments(&self) -> &[Tensor<S>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<S>] {
        &self.v
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update over all trainable parameters.
pub fn adam_step<S: Scalar>(
    params: &mut ParamSet<S>,
    grads: &[Tensor<S>],
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
) -> Result<(), TensorError> {
    cfg.validate()?;
    if grads.len() != params.len() {
        return Err(TensorError::invalid(format!(
            "adam_step: {} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    state.t += 1;
    let t = state.t;
    let b1 = S::from_f64(cfg.beta1);
    let b2 = S::from_f64(cfg.beta2);
    let one_m_b1 = S::from_f64(1.0 - cfg.beta1);
    let one_m_b2 = S::from_f64(1.0 - cfg.beta2);
    let bc1 = S::from_f64(1.0 / (1.0 - libm::pow(cfg.beta1, t as f64)));
    let bc2 = S::from_f64(1.0 / (1.0 - libm::pow(cfg.beta2, t as f64)));
    let lr = S::from_f64(cfg.learning_rate);
    let eps = S::from_f64(cfg.epsilon);

    for i in 0..params.len() {
        let p = params.get_mut(i);
        if !p.trainable {
            continue;
        }
        if grads[i].shape() != p.tensor.shape() {
            return Err(TensorError::shape(format!(
                "adam_step: gradient {} vs parameter {} for {:?}",
                grads[i].shape(),
                p.tensor.shape(),
                p.name
            )));
        }
        let theta = p.tensor.data_mut();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let g = grads[i].data();
        for k in 0..theta.len() {
            m[k] = b1 * m[k] + one_m_b1 * g[k];
            v[k] = b2 * v[k] + one_m_b2 * g[k] * g[k];
            let m_hat = m[k] * bc1;
            let v_hat = v[k] * bc2;
            theta[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Photometric augmentation ranges. One gamma, one brightness, and one
/// per-channel color triple are drawn per stereo pair and applied to both
/// views identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub gamma_range: (f64, f64),
    pub brightness_range: (f64, f64),
    pub color_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            gamma_range: (0.8, 1.2),
            brightness_range: (0.5, 2.0),
            color_range: (0.8, 1.2),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        for (name, (lo, hi)) in [
            ("gamma", self.gamma_range),
            ("brightness", self.brightness_range),
            ("color", self.color_range),
        ] {
            if !(lo > 0.0 && hi >= lo) {
                return Err(TensorError::invalid(format!(
                    "{name} range [{lo}, {hi}] must be positive and ordered"
                )));
            }
        }
        Ok(())
    }
}

/// Applies one sampled gamma/brightness/color transform to both views of a
/// pair; ground truth is untouched.
pub fn augment<S: Scalar>(
    sample: &StereoSample<S>,
    rng: &mut SeedRng,
    cfg: &AugmentConfig,
) -> StereoSample<S> {
    if !cfg.enabled {
        return sample.clone();
    }
    let gamma = rng.uniform(cfg.gamma_range.0, cfg.gamma_range.1);
    let brightness = rng.uniform(cfg.brightness_range.0, cfg.brightness_range.1);
    let channels = sample.left.shape().c;
    let color: Vec<f64> = (0..channels)
        .map(|_| rng.uniform(cfg.color_range.0, cfg.color_range.1))
        .collect();

    let apply = |img: &Tensor<S>| -> Tensor<S> {
        let sh = img.shape();
        let mut out = img.clone();
        for n in 0..sh.n {
            for c in 0..sh.c {
                let k = S::from_f64(brightness * color[c]);
                let g = S::from_f64(gamma);
                for v in out.plane_mut(n, c) {
                    *v = (v.powf(g) * k).max(S::ZERO).min(S::ONE);
                }
            }
        }
        out
    };

    StereoSample {
        left: apply(&sample.left),
        right: apply(&sample.right),
        gt_disparity: sample.gt_disparity.clone(),
        occlusion_mask: sample.occlusion_mask.clone(),
        calib: sample.calib,
    }
}

/// Full training-run description.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub shuffle: bool,
    pub weights: LossWeights,
    pub spec: NetworkSpec,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            steps: 1000,
            seed: 0,
            shuffle: false,
            weights: LossWeights::default(),
            spec: NetworkSpec::default(),
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        if self.batch_size < 1 {
            return Err(TensorError::invalid("batch_size must be >= 1"));
        }
        if self.steps < 1 {
            return Err(TensorError::invalid("steps must be >= 1"));
        }
        self.weights.validate()?;
        self.spec.validate()?;
        self.adam.validate()?;
        self.augment.validate()?;
        Ok(())
    }
}

/// Per-step loss trace: the total and the six-term breakdown of each scale,
/// finest scale first. Steps are 1-based in the emitted trace.
#[derive(Debug, Clone)]
pub struct StepTrace<S> {
    pub step: u64,
    pub total: S,
    pub scales: Vec<ScaleLossBreakdown<S>>,
}

#[derive(Debug)]
pub enum TrainError {
    Tensor(TensorError),
    /// The loss or a parameter gradient went NaN/Inf; carries the 1-based
    /// step and the per-term breakdown at failure.
    NonFinite { step: u64, detail: String },
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Tensor(e)
    }
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Tensor(e) => write!(f, "{e}"),
            TrainError::NonFinite { step, detail } => {
                write!(f, "non-finite loss at step {step}: {detail}")
            }
        }
    }
}

impl core::error::Error for TrainError {}

const TAG_AUGMENT: u64 = 0xA46;
const TAG_SHUFFLE: u64 = 0x5F1E;

/// Training loop state: parameters, optimizer state, and the index of the
/// next step to run (0-based internally).
pub struct Trainer<S> {
    cfg: TrainConfig,
    params: ParamSet<S>,
    adam: AdamState<S>,
    next_step: u64,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(cfg: TrainConfig) -> Result<Self, TensorError> {
        cfg.validate()?;
        let params = init_params(&cfg.spec, cfg.seed)?;
        let adam = AdamState::new(&params);
        Ok(Trainer {
            cfg,
            params,
            adam,
            next_step: 0,
        })
    }

    /// Continues a run from checkpointed parameters and optimizer state.
    pub fn resume(
        cfg: TrainConfig,
        params: ParamSet<S>,
        adam: AdamState<S>,
        next_step: u64,
    ) -> Result<Self, TensorError> {
        cfg.validate()?;
        if adam.m.len() != params.len() {
            return Err(TensorError::invalid(
                "resume: optimizer state does not match parameter set",
            ));
        }
        Ok(Trainer {
            cfg,
            params,
            adam,
            next_step,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet<S> {
        &self.params
    }

    pub fn adam_state(&self) -> &AdamState<S> {
        &self.adam
    }

    /// Index of the next step to execute (0-based; equals steps done so far).
    pub fn next_step(&self) -> u64 {
        self.next_step
    }

    pub fn is_finished(&self) -> bool {
        self.next_step >= self.cfg.steps
    }

    fn sample_index(&self, position: u64, len: usize) -> usize {
        let len64 = len as u64;
        if !self.cfg.shuffle {
            return (position % len64) as usize;
        }
        let epoch = position / len64;
        let offset = (position % len64) as usize;
        let mut order: Vec<usize> = (0..len).collect();
        let mut rng = SeedRng::new(mix_seed(self.cfg.seed, TAG_SHUFFLE ^ epoch));
        for i in (1..len).rev() {
            order.swap(i, rng.index(i + 1));
        }
        order[offset]
    }

    /// Runs one optimization step over the next wrap-around batch.
    pub fn step(&mut self, dataset: &[StereoSample<S>]) -> Result<StepTrace<S>, TrainError> {
        if dataset.is_empty() {
            return Err(TrainError::Tensor(TensorError::Empty {
                context: "training dataset is empty".into(),
            }));
        }
        let step = self.next_step;
        let batch = self.cfg.batch_size;

        // assemble & augment the batch
        let mut lefts: Vec<Tensor<S>> = Vec::with_capacity(batch);
        let mut rights: Vec<Tensor<S>> = Vec::with_capacity(batch);
        for i in 0..batch {
            let idx = self.sample_index(step * batch as u64 + i as u64, dataset.len());
            let mut rng = SeedRng::new(mix_seed(
                self.cfg.seed,
                TAG_AUGMENT ^ (step * batch as u64 + i as u64),
            ));
            let sample = augment(&dataset[idx], &mut rng, &self.cfg.augment);
            lefts.push(sample.left);
            rights.push(sample.right);
        }
        let left_batch = stack_batch(&lefts)?;
        let right_batch = stack_batch(&rights)?;

        // forward: Siamese pass plus the 4-scale loss pyramid
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, &self.params)?;
        let i_l = tape.leaf(left_batch)?;
        let i_r = tape.leaf(right_batch)?;
        let out = forward_siamese(&mut tape, &self.cfg.spec, &bound, i_l, i_r)?;

        let mut breakdowns = Vec::with_capacity(self.cfg.spec.scales);
        let mut combined = Vec::with_capacity(self.cfg.spec.scales);
        let (mut il_s, mut ir_s) = (i_l, i_r);
        for s in 0..self.cfg.spec.scales {
            if s > 0 {
                il_s = tape.downsample2x(il_s)?;
                ir_s = tape.downsample2x(ir_s)?;
            }
            let terms = scale_loss(
                &mut tape,
                il_s,
                ir_s,
                out.left.maps[s],
                out.right.maps[s],
                &self.cfg.weights,
            )?;
            breakdowns.push(terms.snapshot(&tape));
            combined.push(terms.combined);
        }
        let loss = total_loss(&mut tape, &combined)?;
        let total = tape.scalar_value(loss)?;
        if !total.is_finite() {
            return Err(self.non_finite(step, &breakdowns));
        }

        // backward + update
        let mut grads = tape.backward(loss)?;
        let grad_list = bound.collect_grads(&self.params, &mut grads)?;
        for (i, g) in grad_list.iter().enumerate() {
            if g.check_finite("gradient").is_err() {
                return Err(TrainError::NonFinite {
                    step: step + 1,
                    detail: format!("gradient of {:?}", self.params.get(i).name),
                });
            }
        }
        adam_step(&mut self.params, &grad_list, &mut self.adam, &self.cfg.adam)?;
        self.next_step += 1;

        Ok(StepTrace {
            step: step + 1,
            total,
            scales: breakdowns,
        })
    }

    /// Runs steps until the configured count, invoking `on_step` after each.
    pub fn run(
        &mut self,
        dataset: &[StereoSample<S>],
        mut on_step: impl FnMut(&StepTrace<S>),
    ) -> Result<Vec<StepTrace<S>>, TrainError> {
        let mut traces = Vec::with_capacity((self.cfg.steps - self.next_step) as usize);
        while !self.is_finished() {
            let trace = self.step(dataset)?;
            on_step(&trace);
            traces.push(trace);
        }
        Ok(traces)
    }

    fn non_finite(&self, step: u64, breakdowns: &[ScaleLossBreakdown<S>]) -> TrainError {
        let mut detail = String::new();
        for (s, b) in breakdowns.iter().enumerate() {
            detail += &format!(
                "s{}: im {}/{} tv {}/{} lr {}/{}; ",
                s + 1,
                b.im_l,
                b.im_r,
                b.tv_l,
                b.tv_r,
                b.lr_l,
                b.lr_r
            );
        }
        TrainError::NonFinite {
            step: step + 1,
            detail,
        }
    }
}

/// Stacks `[1,C,H,W]` tensors into one `[B,C,H,W]` batch.
fn stack_batch<S: Scalar>(items: &[Tensor<S>]) -> Result<Tensor<S>, TensorError> {
    let first = items[0].shape();
    let mut data = Vec::with_capacity(first.len() * items.len());
    for t in items {
        if t.shape() != first {
            return Err(TensorError::shape(format!(
                "batch items disagree: {} vs {}",
                t.shape(),
                first
            )));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::new(
        Shape::new(first.n * items.len(), first.c, first.h, first.w),
        data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneConfig};
    use alloc::vec;

    #[test]
    fn adam_zero_gradient_changes_nothing() {
        let mut params = ParamSet::<f64>::new();
        params
            .push("w", Tensor::new(Shape::new(1, 1, 1, 2), vec![0.5, -0.25]).unwrap())
            .unwrap();
        let mut state = AdamState::new(&params);
        let grads = vec![Tensor::zeros(Shape::new(1, 1, 1, 2))];
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(params.get(0).tensor.data(), &[0.5, -0.25]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_matches_hand_evaluation() {
        // t = 1, g = 0.1: bias correction cancels the moment decay, so the
        // update is -lr * g / (|g| + eps) = -1e-4 * (1 - 1e-7) + O(eps^2).
        let mut params = ParamSet::<f64>::new();
        params.push("w", Tensor::scalar(1.0)).unwrap();
        let mut state = AdamState::new(&params);
        let grads = vec![Tensor::scalar(0.1)];
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        let delta = params.get(0).tensor.data()[0] - 1.0;
        let expect = -1e-4 * (0.1 / (0.1 + 1e-8));
        assert!((delta - expect).abs() < 1e-12, "{delta} vs {expect}");
        assert!((delta + 1e-4 * (1.0 - 1e-7)).abs() < 1e-11);
    }

    #[test]
    fn adam_moves_against_the_gradient() {
        for &g in &[0.5, -0.7, 1e-3, -1e-6] {
            let mut params = ParamSet::<f64>::new();
            params.push("w", Tensor::scalar(0.0)).unwrap();
            let mut state = AdamState::new(&params);
            adam_step(
                &mut params,
                &[Tensor::scalar(g)],
                &mut state,
                &AdamConfig::default(),
            )
            .unwrap();
            let delta = params.get(0).tensor.data()[0];
            assert!(delta * g < 0.0, "g {g} delta {delta}");
        }
    }

    #[test]
    fn adam_rejects_mismatched_gradients() {
        let mut params = ParamSet::<f64>::new();
        params.push("w", Tensor::scalar(0.0)).unwrap();
        let mut state = AdamState::new(&params);
        assert!(adam_step(&mut params, &[], &mut state, &AdamConfig::default()).is_err());
    }

    #[test]
    fn augment_disabled_is_identity() {
        let sample = generate_scene::<f64>(1, &SceneConfig::default()).unwrap();
        let cfg = AugmentConfig {
            enabled: false,
            ..AugmentConfig::default()
        };
        let mut rng = SeedRng::new(2);
        let out = augment(&sample, &mut rng, &cfg);
        assert_eq!(out.left.data(), sample.left.data());
        assert_eq!(out.right.data(), sample.right.data());
    }

    #[test]
    fn augment_with_unit_ranges_is_identity() {
        let sample = generate_scene::<f64>(3, &SceneConfig::default()).unwrap();
        let cfg = AugmentConfig {
            enabled: true,
            gamma_range: (1.0, 1.0),
            brightness_range: (1.0, 1.0),
            color_range: (1.0, 1.0),
        };
        let mut rng = SeedRng::new(4);
        let out = augment(&sample, &mut rng, &cfg);
        for (a, b) in out.left.data().iter().zip(sample.left.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn augment_applies_the_same_transform_to_both_views() {
        // feed the left image in as the right one: outputs must match bitwise
        let base = generate_scene::<f64>(5, &SceneConfig::default()).unwrap();
        let twin = StereoSample {
            right: base.left.clone(),
            ..base.clone()
        };
        let mut rng = SeedRng::new(6);
        let out = augment(&twin, &mut rng, &AugmentConfig::default());
        assert_eq!(out.left.data(), out.right.data());
        // ground truth untouched
        assert_eq!(
            out.gt_disparity.unwrap().data(),
            base.gt_disparity.unwrap().data()
        );
    }

    fn tiny_train_config(steps: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            steps,
            seed: 11,
            shuffle: false,
            weights: LossWeights::default(),
            spec: NetworkSpec {
                in_channels: 3,
                encoder_channels: vec![4, 6, 8, 10, 12],
                kernel_sizes: vec![3, 3, 3, 3, 3],
                d_max: 0.3,
                scales: 4,
            },
            adam: AdamConfig {
                learning_rate: 1e-3,
                ..AdamConfig::default()
            },
            augment: AugmentConfig {
                enabled: false,
                ..AugmentConfig::default()
            },
        }
    }

    fn tiny_dataset(n: u64) -> Vec<StereoSample<f64>> {
        let cfg = SceneConfig {
            height: 32,
            width: 64,
            ..SceneConfig::default()
        };
        (0..n).map(|s| generate_scene(100 + s, &cfg).unwrap()).collect()
    }

    #[test]
    fn training_is_deterministic_and_loss_stays_finite() {
        let dataset = tiny_dataset(4);
        let run = || {
            let mut trainer = Trainer::<f64>::new(tiny_train_config(6)).unwrap();
            let traces = trainer.run(&dataset, |_| {}).unwrap();
            (traces, trainer)
        };
        let (tr_a, trainer_a) = run();
        let (tr_b, trainer_b) = run();
        for (a, b) in tr_a.iter().zip(&tr_b) {
            assert!(a.total.is_finite());
            assert_eq!(a.total.to_bits(), b.total.to_bits());
        }
        for (pa, pb) in trainer_a.params().iter().zip(trainer_b.params().iter()) {
            for (x, y) in pa.tensor.data().iter().zip(pb.tensor.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let dataset = tiny_dataset(4);
        let mut full = Trainer::<f64>::new(tiny_train_config(6)).unwrap();
        full.run(&dataset, |_| {}).unwrap();

        let mut first = Trainer::<f64>::new(tiny_train_config(3)).unwrap();
        first.run(&dataset, |_| {}).unwrap();
        let mut resumed = Trainer::<f64>::resume(
            tiny_train_config(6),
            first.params().clone(),
            first.adam_state().clone(),
            first.next_step(),
        )
        .unwrap();
        resumed.run(&dataset, |_| {}).unwrap();

        for (a, b) in full.params().iter().zip(resumed.params().iter()) {
            for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "parameter {:?}", a.name);
            }
        }
    }

    #[test]
    fn one_step_on_the_mirror_swapped_batch_matches() {
        // Swapping the pair to (m(I_r), m(I_l)) leaves the loss and thus the
        // update unchanged up to summation-order noise.
        let dataset = tiny_dataset(2);
        let swapped: Vec<StereoSample<f64>> = dataset
            .iter()
            .map(|s| StereoSample {
                left: crate::image::mirror_values(&s.right),
                right: crate::image::mirror_values(&s.left),
                gt_disparity: None,
                occlusion_mask: None,
                calib: s.calib,
            })
            .collect();

        let mut a = Trainer::<f64>::new(tiny_train_config(1)).unwrap();
        let ta = a.step(&dataset).unwrap();
        let mut b = Trainer::<f64>::new(tiny_train_config(1)).unwrap();
        let tb = b.step(&swapped).unwrap();

        let rel = (ta.total - tb.total).abs() / ta.total.abs().max(1e-30);
        assert!(rel < 1e-10, "loss relative difference {rel}");
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            let mut max_abs = 0.0f64;
            let mut max_diff = 0.0f64;
            for (x, y) in pa.tensor.data().iter().zip(pb.tensor.data()) {
                max_abs = max_abs.max(x.abs());
                max_diff = max_diff.max((x - y).abs());
            }
            assert!(
                max_diff <= 1e-10 * max_abs.max(1e-12),
                "{}: diff {max_diff} vs scale {max_abs}",
                pa.name
            );
        }
    }

    #[test]
    fn shuffle_changes_batch_order_but_stays_deterministic() {
        let dataset = tiny_dataset(5);
        let mut cfg = tiny_train_config(2);
        cfg.shuffle = true;
        let run = |cfg: TrainConfig| {
            let mut t = Trainer::<f64>::new(cfg).unwrap();
            t.run(&dataset, |_| {}).unwrap()
                .iter()
                .map(|s| s.total)
                .collect::<Vec<_>>()
        };
        let a = run(cfg.clone());
        let b = run(cfg.clone());
        assert_eq!(a, b);
    }

    #[test]
    fn adam_state_shapes_track_parameters() {
        let dataset = tiny_dataset(2);
        let mut t = Trainer::<f64>::new(tiny_train_config(2)).unwrap();
        t.run(&dataset, |_| {}).unwrap();
        for (p, m) in t.params().iter().zip(t.adam_state().first_moments()) {
            assert_eq!(p.tensor.shape(), m.shape());
        }
        assert_eq!(t.adam_state().step_count(), 2);
    }
}
