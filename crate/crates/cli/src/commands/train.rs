//! `train`: loads the dataset named by the manifest, runs the training
//! loop, and writes the loss trace, periodic checkpoints, the final model,
//! and a config echo for provenance.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use smdepth_core::metrics::CameraCalib;
use smdepth_core::synth::StereoSample;
use smdepth_core::train::{TrainError, Trainer};

use crate::commands::gen_data::Manifest;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::ppm;
use crate::store;
use crate::trace::{trace_header, trace_row};

/// Loads the stereo pairs listed in a dataset manifest (ground truth is not
/// needed for self-supervised training).
pub fn load_dataset(dir: &Path) -> CliResult<Vec<StereoSample<f32>>> {
    let manifest = Manifest::load(dir)?;
    if manifest.samples.is_empty() {
        return Err(CliError::data(format!(
            "{}: manifest lists no samples",
            dir.display()
        )));
    }
    let mut out = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let left = ppm::read_ppm(&dir.join(&entry.left))?;
        let right = ppm::read_ppm(&dir.join(&entry.right))?;
        if left.shape() != right.shape() {
            return Err(CliError::data(format!(
                "{}: left and right image sizes disagree",
                entry.left
            )));
        }
        out.push(StereoSample {
            left,
            right,
            gt_disparity: None,
            occlusion_mask: None,
            calib: CameraCalib {
                focal_px: 1.0,
                baseline_m: 1.0,
            },
        });
    }
    Ok(out)
}

pub fn run(config: &RunConfig, resume_step: Option<u64>) -> CliResult<()> {
    let train_cfg = config.train_config()?;
    let dataset = load_dataset(&config.data_dir)?;

    let divisor = train_cfg.spec.size_divisor();
    let sh = dataset[0].left.shape();
    if sh.h % divisor != 0 || sh.w % divisor != 0 {
        return Err(CliError::data(format!(
            "dataset images are {}x{}, but the {}-level network needs sizes divisible by {divisor}",
            sh.h,
            sh.w,
            train_cfg.spec.levels()
        )));
    }

    let ckpt_dir = &config.checkpoint_dir;
    std::fs::create_dir_all(ckpt_dir).map_err(|e| CliError::io("create", ckpt_dir, e))?;

    let mut trainer = match resume_step {
        None => Trainer::new(train_cfg.clone()).map_err(|e| CliError::config(e.to_string()))?,
        Some(step) => {
            let model = ckpt_dir.join(format!("model_step{step:06}.smck"));
            let state = ckpt_dir.join(format!("state_step{step:06}.smck"));
            let params = store::load_params(&model)?;
            let (adam, next_step) = store::load_trainer_state(&state, &params)?;
            if next_step != step {
                return Err(CliError::data(format!(
                    "state file {} belongs to step {next_step}, not {step}",
                    state.display()
                )));
            }
            Trainer::resume(train_cfg.clone(), params, adam, next_step)
                .map_err(|e| CliError::config(e.to_string()))?
        }
    };

    // config echo for provenance
    config.save(&ckpt_dir.join("run.json"))?;

    let trace_path = ckpt_dir.join("loss.csv");
    let mut trace_file = if resume_step.is_some() {
        OpenOptions::new()
            .append(true)
            .create(true)
            .open(&trace_path)
            .map_err(|e| CliError::io("open", &trace_path, e))?
    } else {
        let mut f = std::fs::File::create(&trace_path)
            .map_err(|e| CliError::io("create", &trace_path, e))?;
        f.write_all(trace_header(train_cfg.spec.scales).as_bytes())
            .map_err(|e| CliError::io("write", &trace_path, e))?;
        f
    };

    while !trainer.is_finished() {
        let trace = trainer.step(&dataset).map_err(|e| match e {
            TrainError::NonFinite { step, detail } => {
                CliError::numeric(format!("aborting at step {step}: {detail}"))
            }
            TrainError::Tensor(t) => CliError::numeric(t.to_string()),
        })?;
        trace_file
            .write_all(trace_row(&trace).as_bytes())
            .map_err(|e| CliError::io("write", &trace_path, e))?;

        let done = trace.step;
        if config.checkpoint_every > 0
            && done % config.checkpoint_every == 0
            && done < train_cfg.steps
        {
            let model = ckpt_dir.join(format!("model_step{done:06}.smck"));
            let state = ckpt_dir.join(format!("state_step{done:06}.smck"));
            store::save_params(&model, trainer.params())?;
            store::save_trainer_state(&state, trainer.params(), trainer.adam_state(), done)?;
        }
    }
    trace_file
        .flush()
        .map_err(|e| CliError::io("flush", &trace_path, e))?;

    store::save_params(&ckpt_dir.join("model_final.smck"), trainer.params())?;
    store::save_trainer_state(
        &ckpt_dir.join("state_final.smck"),
        trainer.params(),
        trainer.adam_state(),
        trainer.next_step(),
    )?;

    println!(
        "trained {} steps on {} pairs; checkpoint {}",
        trainer.next_step(),
        dataset.len(),
        ckpt_dir.join("model_final.smck").display()
    );
    Ok(())
}
