//! `infer`: monocular disparity for one or more images from a checkpoint,
//! optionally with mirror-blend post-processing. One PFM plus units sidecar
//! per input, finest scale, width-fraction values.

use std::path::{Path, PathBuf};

use smdepth_core::network::infer_mono;
use smdepth_core::postproc::infer_with_pp;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pfm::{self, DisparitySidecar};
use crate::ppm;
use crate::store;

pub fn run(
    checkpoint: &Path,
    config_path: Option<&Path>,
    images: &[PathBuf],
    out_dir: &Path,
    pp: bool,
) -> CliResult<()> {
    if images.is_empty() {
        return Err(CliError::config("infer: no input images given"));
    }
    // the network shape comes from the run config echoed next to the checkpoint
    let config = match config_path {
        Some(p) => RunConfig::load(p)?,
        None => {
            let sibling = checkpoint
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join("run.json");
            RunConfig::load(&sibling).map_err(|e| {
                CliError::config(format!(
                    "no --config given and the checkpoint has no run.json next to it ({e})"
                ))
            })?
        }
    };
    let spec = config.network_spec()?;
    let blend = config.blend_config()?;
    let params = store::load_params(checkpoint)?;
    if params.num_values() == 0 {
        return Err(CliError::data(format!(
            "{}: checkpoint holds no parameters",
            checkpoint.display()
        )));
    }

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io("create", out_dir, e))?;

    for image_path in images {
        let image = ppm::read_ppm(image_path)?;
        let sh = image.shape();
        let div = spec.size_divisor();
        if sh.h % div != 0 || sh.w % div != 0 {
            return Err(CliError::data(format!(
                "{}: size {}x{} not divisible by {div}",
                image_path.display(),
                sh.h,
                sh.w
            )));
        }
        let disparity = if pp {
            infer_with_pp(&params, &spec, &image, &blend)
                .map_err(|e| CliError::numeric(e.to_string()))?
        } else {
            let maps = infer_mono(&params, &spec, &image)
                .map_err(|e| CliError::numeric(e.to_string()))?;
            maps.into_iter().next().expect("at least one scale")
        };

        let stem = image_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image");
        let out_path = out_dir.join(format!("{stem}_disp.pfm"));
        pfm::write_pfm(&out_path, &disparity)?;
        pfm::write_sidecar(&out_path, &DisparitySidecar::width_fraction(spec.d_max))?;
        println!("{} -> {}", image_path.display(), out_path.display());
    }
    Ok(())
}
