//! Checkpoint files: model parameters and trainer state (Adam moments plus
//! counters), both in the flat `SMCK1` container.
//!
//! The trainer-state file reuses the container with `m.`/`v.`-prefixed
//! tensor names and a `__meta` record carrying the Adam step count and the
//! next training step. Counters are stored as f32 and therefore exact up to
//! 2^24 steps, far beyond desk scale.

use std::path::Path;

use smdepth_core::params::ParamSet;
use smdepth_core::tensor::Tensor;
use smdepth_core::train::AdamState;

use crate::error::{CliError, CliResult};

pub fn save_params(path: &Path, params: &ParamSet<f32>) -> CliResult<()> {
    std::fs::write(path, params.encode()).map_err(|e| CliError::io("write", path, e))
}

pub fn load_params(path: &Path) -> CliResult<ParamSet<f32>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io("read", path, e))?;
    ParamSet::decode(&bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn save_trainer_state(
    path: &Path,
    params: &ParamSet<f32>,
    adam: &AdamState<f32>,
    next_step: u64,
) -> CliResult<()> {
    let mut container = ParamSet::<f32>::new();
    let push = |c: &mut ParamSet<f32>, name: String, t: Tensor<f32>| -> CliResult<()> {
        c.push(name, t)
            .map(|_| ())
            .map_err(|e| CliError::data(e.to_string()))
    };
    for (p, m) in params.iter().zip(adam.first_moments()) {
        push(&mut container, format!("m.{}", p.name), m.clone())?;
    }
    for (p, v) in params.iter().zip(adam.second_moments()) {
        push(&mut container, format!("v.{}", p.name), v.clone())?;
    }
    let meta = Tensor::new(
        smdepth_core::tensor::Shape::new(1, 1, 1, 2),
        vec![adam.step_count() as f32, next_step as f32],
    )
    .map_err(|e| CliError::data(e.to_string()))?;
    push(&mut container, "__meta".into(), meta)?;
    std::fs::write(path, container.encode()).map_err(|e| CliError::io("write", path, e))
}

pub fn load_trainer_state(
    path: &Path,
    params: &ParamSet<f32>,
) -> CliResult<(AdamState<f32>, u64)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io("read", path, e))?;
    let container = ParamSet::<f32>::decode(&bytes)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let missing = |what: &str| {
        CliError::data(format!(
            "{}: trainer state is missing {what}",
            path.display()
        ))
    };
    let mut m = Vec::with_capacity(params.len());
    let mut v = Vec::with_capacity(params.len());
    for p in params.iter() {
        m.push(
            container
                .by_name(&format!("m.{}", p.name))
                .ok_or_else(|| missing(&format!("m.{}", p.name)))?
                .tensor
                .clone(),
        );
        v.push(
            container
                .by_name(&format!("v.{}", p.name))
                .ok_or_else(|| missing(&format!("v.{}", p.name)))?
                .tensor
                .clone(),
        );
    }
    let meta = container.by_name("__meta").ok_or_else(|| missing("__meta"))?;
    if meta.tensor.len() != 2 {
        return Err(missing("a 2-element __meta record"));
    }
    let t = meta.tensor.data()[0] as u64;
    let next_step = meta.tensor.data()[1] as u64;
    let adam = AdamState::from_parts(params, m, v, t)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok((adam, next_step))
}
