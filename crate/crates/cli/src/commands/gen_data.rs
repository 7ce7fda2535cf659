//! `gen-data`: writes `count` synthetic stereo samples as
//! left/right PPM + ground-truth PFM + JSON sidecar quadruples, an ordered
//! `manifest.json`, and the shared `calib.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use smdepth_core::rng::mix_seed;
use smdepth_core::synth::{generate_scene, SceneMode};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pfm::{self, CalibFile, DisparitySidecar};
use crate::ppm;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub left: String,
    pub right: String,
    pub gt: String,
    pub meta: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> CliResult<Manifest> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io("read", &path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }
}

pub fn run(config: &RunConfig, count: usize, seed: u64) -> CliResult<()> {
    let scene_cfg = config.scene_config()?;
    if count == 0 {
        return Err(CliError::config("gen-data: count must be >= 1"));
    }
    let dir = &config.data_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io("create", dir, e))?;

    let mode_name = match scene_cfg.mode {
        SceneMode::ConstantPlane => "constant-plane",
        SceneMode::TwoLayer => "two-layer",
    };

    let mut entries = Vec::with_capacity(count);
    for k in 0..count {
        let sample_seed = mix_seed(seed, k as u64);
        let sample = generate_scene::<f32>(sample_seed, &scene_cfg)
            .map_err(|e| CliError::data(e.to_string()))?;
        let stem = format!("sample_{k:04}");
        let left = format!("{stem}_left.ppm");
        let right = format!("{stem}_right.ppm");
        let gt = format!("{stem}_gt.pfm");
        let meta = format!("{stem}_gt.json");

        ppm::write_ppm(&dir.join(&left), &sample.left)?;
        ppm::write_ppm(&dir.join(&right), &sample.right)?;
        let gt_map = sample
            .gt_disparity
            .as_ref()
            .expect("generated scenes always carry ground truth");
        pfm::write_pfm(&dir.join(&gt), gt_map)?;

        let d_px = gt_map
            .data()
            .iter()
            .fold(0.0f32, |acc, &v| acc.max(v)) as f64
            * scene_cfg.width as f64;
        let sidecar = DisparitySidecar {
            units: pfm::WIDTH_FRACTION_UNITS.into(),
            d_max: gt_map.data().iter().fold(0.0f32, |a, &v| a.max(v)) as f64,
            seed: Some(sample_seed),
            disparity_px: Some(d_px),
            scene_mode: Some(mode_name.into()),
            calib: Some(CalibFile {
                focal_px: sample.calib.focal_px,
                baseline_m: sample.calib.baseline_m,
            }),
        };
        pfm::write_sidecar(&dir.join(&gt), &sidecar)?;

        entries.push(ManifestEntry { left, right, gt, meta });
    }

    let calib = CalibFile {
        focal_px: smdepth_core::synth::default_calib().focal_px,
        baseline_m: smdepth_core::synth::default_calib().baseline_m,
    };
    let calib_path = dir.join("calib.json");
    let text = serde_json::to_string_pretty(&calib)
        .map_err(|e| CliError::data(format!("serialize calib: {e}")))?;
    std::fs::write(&calib_path, text + "\n").map_err(|e| CliError::io("write", &calib_path, e))?;

    let manifest = Manifest { samples: entries };
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::data(format!("serialize manifest: {e}")))?;
    std::fs::write(&manifest_path, text + "\n")
        .map_err(|e| CliError::io("write", &manifest_path, e))?;

    println!(
        "wrote {count} {mode_name} samples to {} ({}x{})",
        dir.display(),
        scene_cfg.width,
        scene_cfg.height
    );
    Ok(())
}
