//! The run configuration: one flat JSON document covering training,
//! network, scene generation, post-processing, and paths. Unknown keys are
//! rejected; missing keys take the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smdepth_core::losses::LossWeights;
use smdepth_core::network::NetworkSpec;
use smdepth_core::postproc::BlendConfig;
use smdepth_core::synth::{SceneConfig, SceneMode};
use smdepth_core::train::{AdamConfig, AugmentConfig, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // training loop
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    pub shuffle: bool,
    pub checkpoint_every: u64,

    // optimizer
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,

    // loss weights and SSIM window
    pub alpha_im: f64,
    pub alpha_tv: f64,
    pub alpha_lr: f64,
    pub alpha_ssim_mix: f64,
    pub c1: f64,
    pub c2: f64,
    pub ssim_sigma: f64,
    pub ssim_radius: usize,

    // augmentation
    pub augment_enabled: bool,
    pub gamma_range: (f64, f64),
    pub brightness_range: (f64, f64),
    pub color_range: (f64, f64),

    // network
    pub in_channels: usize,
    pub encoder_channels: Vec<usize>,
    pub kernel_sizes: Vec<usize>,
    pub d_max: f64,
    pub scales: usize,

    // synthetic scenes
    pub scene_height: usize,
    pub scene_width: usize,
    pub disparity_px_range: (f64, f64),
    pub texture_sigma: f64,
    pub scene_mode: String,

    // post-processing
    pub ramp_fraction: f64,

    // paths
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let scene = SceneConfig::default();
        let blend = BlendConfig::default();
        RunConfig {
            batch_size: train.batch_size,
            steps: train.steps,
            seed: train.seed,
            shuffle: train.shuffle,
            checkpoint_every: 0,
            learning_rate: train.adam.learning_rate,
            beta1: train.adam.beta1,
            beta2: train.adam.beta2,
            epsilon: train.adam.epsilon,
            alpha_im: train.weights.alpha_im,
            alpha_tv: train.weights.alpha_tv,
            alpha_lr: train.weights.alpha_lr,
            alpha_ssim_mix: train.weights.alpha_ssim_mix,
            c1: train.weights.c1,
            c2: train.weights.c2,
            ssim_sigma: train.weights.ssim_sigma,
            ssim_radius: train.weights.ssim_radius,
            augment_enabled: train.augment.enabled,
            gamma_range: train.augment.gamma_range,
            brightness_range: train.augment.brightness_range,
            color_range: train.augment.color_range,
            in_channels: train.spec.in_channels,
            encoder_channels: train.spec.encoder_channels.clone(),
            kernel_sizes: train.spec.kernel_sizes.clone(),
            d_max: train.spec.d_max,
            scales: train.spec.scales,
            scene_height: scene.height,
            scene_width: scene.width,
            disparity_px_range: scene.disparity_px,
            texture_sigma: scene.texture_sigma,
            scene_mode: "constant-plane".into(),
            ramp_fraction: blend.ramp_fraction,
            data_dir: PathBuf::from("data"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses and validates a config file; any unknown key is an error.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::config(format!("serialize config: {e}")))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::io("write", path, e))
    }

    /// Cross-checks every section by building the typed configs.
    pub fn validate(&self) -> CliResult<()> {
        self.train_config().map(|_| ())?;
        self.scene_config().map(|_| ())?;
        self.blend_config().map(|_| ())?;
        Ok(())
    }

    pub fn network_spec(&self) -> CliResult<NetworkSpec> {
        let spec = NetworkSpec {
            in_channels: self.in_channels,
            encoder_channels: self.encoder_channels.clone(),
            kernel_sizes: self.kernel_sizes.clone(),
            d_max: self.d_max,
            scales: self.scales,
        };
        spec.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(spec)
    }

    pub fn loss_weights(&self) -> CliResult<LossWeights> {
        let w = LossWeights {
            alpha_im: self.alpha_im,
            alpha_tv: self.alpha_tv,
            alpha_lr: self.alpha_lr,
            alpha_ssim_mix: self.alpha_ssim_mix,
            c1: self.c1,
            c2: self.c2,
            ssim_sigma: self.ssim_sigma,
            ssim_radius: self.ssim_radius,
        };
        w.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(w)
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let cfg = TrainConfig {
            batch_size: self.batch_size,
            steps: self.steps,
            seed: self.seed,
            shuffle: self.shuffle,
            weights: self.loss_weights()?,
            spec: self.network_spec()?,
            adam: AdamConfig {
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
                learning_rate: self.learning_rate,
            },
            augment: AugmentConfig {
                enabled: self.augment_enabled,
                gamma_range: self.gamma_range,
                brightness_range: self.brightness_range,
                color_range: self.color_range,
            },
        };
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn scene_config(&self) -> CliResult<SceneConfig> {
        let mode = match self.scene_mode.as_str() {
            "constant-plane" => SceneMode::ConstantPlane,
            "two-layer" => SceneMode::TwoLayer,
            other => {
                return Err(CliError::config(format!(
                    "scene_mode must be \"constant-plane\" or \"two-layer\", got {other:?}"
                )))
            }
        };
        let cfg = SceneConfig {
            height: self.scene_height,
            width: self.scene_width,
            disparity_px: self.disparity_px_range,
            texture_sigma: self.texture_sigma,
            mode,
        };
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn blend_config(&self) -> CliResult<BlendConfig> {
        let cfg = BlendConfig {
            ramp_fraction: self.ramp_fraction,
        };
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }
}
