//! `eval`: compares predicted disparity PFMs against ground truth,
//! converting both to depth through the camera calibration, and writes a
//! per-image metrics CSV plus a JSON summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use smdepth_core::metrics::{
    eigen_crop_window, eigen_metrics, make3d_c1, silog_suite, CameraCalib,
};
use smdepth_core::tensor::{Shape, Tensor};

use crate::error::{CliError, CliResult};
use crate::pfm::{self, CalibFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Eigen,
    Silog,
    Make3d,
}

impl Suite {
    pub fn parse(name: &str) -> CliResult<Suite> {
        match name {
            "eigen" => Ok(Suite::Eigen),
            "silog" => Ok(Suite::Silog),
            "make3d" => Ok(Suite::Make3d),
            other => Err(CliError::config(format!(
                "unknown suite {other:?}; expected eigen, silog, or make3d"
            ))),
        }
    }

    fn columns(&self) -> &'static [&'static str] {
        match self {
            Suite::Eigen => &[
                "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3",
            ],
            Suite::Silog => &["silog", "sq_rel_pct", "abs_rel_pct", "irmse"],
            Suite::Make3d => &["sq_rel", "abs_rel", "rmse", "log10"],
        }
    }
}

fn sorted_pfms(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io("list", dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pfm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::data(format!(
            "{}: no .pfm files found",
            dir.display()
        )));
    }
    Ok(files)
}

/// Bilinear spatial resize; evaluation rescales predictions to the ground
/// truth's grid when they differ.
fn resize_bilinear(map: &Tensor<f32>, h: usize, w: usize) -> Tensor<f32> {
    let sh = map.shape();
    if sh.h == h && sh.w == w {
        return map.clone();
    }
    let sy = sh.h as f64 / h as f64;
    let sx = sh.w as f64 / w as f64;
    Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, i, j| {
        let fy = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh.h - 1) as f64);
        let fx = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (sh.w - 1) as f64);
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(sh.h - 1), (x0 + 1).min(sh.w - 1));
        let (wy, wx) = ((fy - y0 as f64) as f32, (fx - x0 as f64) as f32);
        let top = map.at(0, 0, y0, x0) + wx * (map.at(0, 0, y0, x1) - map.at(0, 0, y0, x0));
        let bot = map.at(0, 0, y1, x0) + wx * (map.at(0, 0, y1, x1) - map.at(0, 0, y1, x0));
        top + wy * (bot - top)
    })
}

#[derive(Serialize)]
struct Summary {
    suite: String,
    cap_m: f64,
    count: usize,
    aggregate: BTreeMap<String, f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    pred_dir: &Path,
    gt_dir: &Path,
    calib_path: &Path,
    suite: Suite,
    cap_m: f64,
    eigen_crop: bool,
    out_dir: &Path,
) -> CliResult<()> {
    let calib_text = std::fs::read_to_string(calib_path)
        .map_err(|e| CliError::io("read", calib_path, e))?;
    let calib_file: CalibFile = serde_json::from_str(&calib_text)
        .map_err(|e| CliError::config(format!("{}: {e}", calib_path.display())))?;
    let calib: CameraCalib = calib_file.into();
    calib.validate().map_err(|e| CliError::config(e.to_string()))?;
    if !(cap_m > 0.0) {
        return Err(CliError::config(format!("cap must be positive, got {cap_m}")));
    }

    let preds = sorted_pfms(pred_dir)?;
    let gts = sorted_pfms(gt_dir)?;
    if preds.len() != gts.len() {
        return Err(CliError::data(format!(
            "count mismatch: {} predictions vs {} ground-truth maps",
            preds.len(),
            gts.len()
        )));
    }

    let columns = suite.columns();
    let mut rows: Vec<(String, Vec<f64>)> = Vec::with_capacity(preds.len());
    let mut sums = vec![0.0f64; columns.len()];

    for (pred_path, gt_path) in preds.iter().zip(&gts) {
        let pred_side = pfm::read_sidecar(pred_path)?;
        let gt_side = pfm::read_sidecar(gt_path)?;
        if pred_side.units != gt_side.units {
            return Err(CliError::data(format!(
                "unit mismatch: {} is in {:?} but {} is in {:?}",
                pred_path.display(),
                pred_side.units,
                gt_path.display(),
                gt_side.units
            )));
        }
        if pred_side.units != pfm::WIDTH_FRACTION_UNITS {
            return Err(CliError::data(format!(
                "unsupported disparity units {:?}",
                pred_side.units
            )));
        }

        let gt_map = pfm::read_pfm(gt_path)?;
        let sh = gt_map.shape();
        let pred_map = resize_bilinear(&pfm::read_pfm(pred_path)?, sh.h, sh.w);

        // depths through the shared calibration; zero-disparity gt is masked out
        let width = sh.w;
        let fb = calib.focal_px * calib.baseline_m;
        let mut pred_depth = Vec::with_capacity(sh.len());
        let mut gt_depth = Vec::with_capacity(sh.len());
        let mut mask = Vec::with_capacity(sh.len());
        for (p, g) in pred_map.data().iter().zip(gt_map.data()) {
            let pd = (*p as f64).max(1e-12);
            pred_depth.push(fb / (pd * width as f64));
            let valid = *g > 0.0;
            gt_depth.push(if valid { fb / (*g as f64 * width as f64) } else { 0.0 });
            mask.push(valid);
        }
        if eigen_crop && suite == Suite::Eigen {
            let win = eigen_crop_window(sh.h, sh.w);
            for i in 0..sh.h {
                for j in 0..sh.w {
                    if !win.contains(i, j) {
                        mask[i * sh.w + j] = false;
                    }
                }
            }
        }

        let values: Vec<f64> = match suite {
            Suite::Eigen => {
                let m = eigen_metrics(&pred_depth, &gt_depth, &mask, cap_m)
                    .map_err(|e| CliError::data(e.to_string()))?;
                vec![m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3]
            }
            Suite::Silog => {
                let m = silog_suite(&pred_depth, &gt_depth, &mask)
                    .map_err(|e| CliError::data(e.to_string()))?;
                vec![m.silog, m.sq_rel_pct, m.abs_rel_pct, m.irmse]
            }
            Suite::Make3d => {
                // the C1 mask is "gt <= 70 m"; invalid gt is pushed out of range
                let gt_for_c1: Vec<f64> = gt_depth
                    .iter()
                    .zip(&mask)
                    .map(|(&g, &m)| if m { g } else { f64::INFINITY })
                    .collect();
                let m = make3d_c1(&pred_depth, &gt_for_c1)
                    .map_err(|e| CliError::data(e.to_string()))?;
                vec![m.sq_rel, m.abs_rel, m.rmse, m.log10]
            }
        };

        for (s, v) in sums.iter_mut().zip(&values) {
            *s += v;
        }
        let name = pred_path
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("?")
            .to_string();
        rows.push((name, values));
    }

    let count = rows.len();
    let means: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io("create", out_dir, e))?;
    let csv_path = out_dir.join("metrics.csv");
    let mut csv = String::from("image");
    for c in columns {
        csv += &format!(",{c}");
    }
    csv.push('\n');
    for (name, values) in &rows {
        csv += name;
        for v in values {
            csv += &format!(",{v}");
        }
        csv.push('\n');
    }
    csv += "mean";
    for v in &means {
        csv += &format!(",{v}");
    }
    csv.push('\n');
    std::fs::write(&csv_path, csv).map_err(|e| CliError::io("write", &csv_path, e))?;

    let summary = Summary {
        suite: match suite {
            Suite::Eigen => "eigen",
            Suite::Silog => "silog",
            Suite::Make3d => "make3d",
        }
        .into(),
        cap_m,
        count,
        aggregate: columns
            .iter()
            .map(|&c| c.to_string())
            .zip(means.iter().copied())
            .collect(),
    };
    let json_path = out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::data(format!("serialize summary: {e}")))?;
    std::fs::write(&json_path, text + "\n").map_err(|e| CliError::io("write", &json_path, e))?;

    println!(
        "evaluated {count} images; aggregate written to {}",
        json_path.display()
    );
    Ok(())
}
