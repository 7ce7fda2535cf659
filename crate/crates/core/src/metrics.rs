//! Depth conversion and the three evaluation metric suites, with cap/crop
//! masking.
//!
//! All metric arithmetic runs in `f64` regardless of the model's element
//! type. The Eigen-suite cap clamps both prediction and ground truth into
//! `[1e-3, cap]` rather than masking; the scale-invariant log suite reports
//! percentages and inverse kilometers.

use alloc::format;
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Stereo rig geometry used to convert disparities to metric depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraCalib {
    pub focal_px: f64,
    pub baseline_m: f64,
}

impl CameraCalib {
    pub fn validate(&self) -> Result<(), TensorError> {
        if !(self.focal_px > 0.0) || !(self.baseline_m > 0.0) {
            return Err(TensorError::invalid(format!(
                "calibration must be positive: focal_px {}, baseline_m {}",
                self.focal_px, self.baseline_m
            )));
        }
        Ok(())
    }
}

/// Depth clamp floor applied by the capped Eigen evaluation.
pub const MIN_DEPTH_M: f64 = 1e-3;
/// Make3D C1 protocol ignores ground truth beyond this range.
pub const MAKE3D_DEPTH_CAP_M: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilogSuite {
    pub silog: f64,
    pub sq_rel_pct: f64,
    pub abs_rel_pct: f64,
    pub irmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Make3dC1 {
    pub sq_rel: f64,
    pub abs_rel: f64,
    pub rmse: f64,
    pub log10: f64,
}

/// All three suites for one prediction/ground-truth pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub eigen: EigenMetrics,
    pub silog: SilogSuite,
    pub make3d: Make3dC1,
}

impl DepthMetrics {
    pub fn compute(pred: &[f64], gt: &[f64], mask: &[bool], cap_m: f64) -> Result<Self, TensorError> {
        Ok(DepthMetrics {
            eigen: eigen_metrics(pred, gt, mask, cap_m)?,
            silog: silog_suite(pred, gt, mask)?,
            make3d: make3d_c1(pred, gt)?,
        })
    }
}

/// `depth = focal_px * baseline_m / (d * width_px)`; every disparity must be
/// strictly positive (mask zeros out beforehand).
pub fn disparity_to_depth<S: Scalar>(
    d: &Tensor<S>,
    calib: &CameraCalib,
    width_px: usize,
) -> Result<Tensor<f64>, TensorError> {
    calib.validate()?;
    let fb = calib.focal_px * calib.baseline_m;
    let w = width_px as f64;
    let mut out = Vec::with_capacity(d.len());
    for (i, v) in d.data().iter().enumerate() {
        let dv = v.to_f64();
        if dv <= 0.0 {
            return Err(TensorError::invalid(format!(
                "disparity_to_depth: non-positive disparity {dv} at element {i}"
            )));
        }
        out.push(fb / (dv * w));
    }
    Tensor::new(d.shape(), out)
}

fn masked_count(mask: &[bool]) -> Result<usize, TensorError> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(TensorError::Empty {
            context: "metric evaluation mask selects no pixels".into(),
        });
    }
    Ok(count)
}

fn check_lengths(pred: &[f64], gt: &[f64], mask: &[bool]) -> Result<(), TensorError> {
    if pred.len() != gt.len() || pred.len() != mask.len() {
        return Err(TensorError::shape(format!(
            "metric inputs disagree: pred {}, gt {}, mask {}",
            pred.len(),
            gt.len(),
            mask.len()
        )));
    }
    Ok(())
}

/// The seven Eigen-split metrics at a depth cap.
pub fn eigen_metrics(
    pred: &[f64],
    gt: &[f64],
    mask: &[bool],
    cap_m: f64,
) -> Result<EigenMetrics, TensorError> {
    check_lengths(pred, gt, mask)?;
    if !(cap_m > MIN_DEPTH_M) {
        return Err(TensorError::invalid(format!("cap {cap_m} m out of range")));
    }
    let count = masked_count(mask)? as f64;

    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut sq = 0.0;
    let mut sq_log = 0.0;
    let (mut d1, mut d2, mut d3) = (0.0, 0.0, 0.0);
    let (t1, t2, t3) = (1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25);

    for i in 0..pred.len() {
        if !mask[i] {
            continue;
        }
        let p = pred[i].clamp(MIN_DEPTH_M, cap_m);
        let g = gt[i].clamp(MIN_DEPTH_M, cap_m);
        let diff = g - p;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let dlog = libm::log(g) - libm::log(p);
        sq_log += dlog * dlog;
        let ratio = (p / g).max(g / p);
        if ratio < t1 {
            d1 += 1.0;
        }
        if ratio < t2 {
            d2 += 1.0;
        }
        if ratio < t3 {
            d3 += 1.0;
        }
    }
    Ok(EigenMetrics {
        abs_rel: abs_rel / count,
        sq_rel: sq_rel / count,
        rmse: libm::sqrt(sq / count),
        rmse_log: libm::sqrt(sq_log / count),
        delta1: d1 / count,
        delta2: d2 / count,
        delta3: d3 / count,
    })
}

/// Scale-invariant log error suite: `silog` is the variance of the log
/// ratio (x100); relative errors are percentages; `irmse` is the RMS of the
/// inverse-depth error in 1/km.
pub fn silog_suite(pred: &[f64], gt: &[f64], mask: &[bool]) -> Result<SilogSuite, TensorError> {
    check_lengths(pred, gt, mask)?;
    let count = masked_count(mask)? as f64;

    let mut e_sum = 0.0;
    let mut e2_sum = 0.0;
    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut inv_sq = 0.0;
    for i in 0..pred.len() {
        if !mask[i] {
            continue;
        }
        let (p, g) = (pred[i], gt[i]);
        if p <= 0.0 || g <= 0.0 {
            return Err(TensorError::invalid(format!(
                "silog_suite: non-positive depth at element {i} (pred {p}, gt {g})"
            )));
        }
        let e = libm::log(p) - libm::log(g);
        e_sum += e;
        e2_sum += e * e;
        let diff = g - p;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        let inv = 1.0 / g - 1.0 / p;
        inv_sq += inv * inv;
    }
    let mean_e = e_sum / count;
    Ok(SilogSuite {
        silog: (e2_sum / count - mean_e * mean_e) * 100.0,
        sq_rel_pct: sq_rel / count * 100.0,
        abs_rel_pct: abs_rel / count * 100.0,
        irmse: libm::sqrt(inv_sq / count) * 1000.0,
    })
}

/// Make3D C1 measures over pixels with ground truth within 70 m.
pub fn make3d_c1(pred: &[f64], gt: &[f64]) -> Result<Make3dC1, TensorError> {
    if pred.len() != gt.len() {
        return Err(TensorError::shape(format!(
            "make3d_c1: pred {} vs gt {}",
            pred.len(),
            gt.len()
        )));
    }
    let mask: Vec<bool> = gt.iter().map(|&g| g <= MAKE3D_DEPTH_CAP_M).collect();
    let count = masked_count(&mask)? as f64;

    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut sq = 0.0;
    let mut log10 = 0.0;
    for i in 0..pred.len() {
        if !mask[i] {
            continue;
        }
        let (p, g) = (pred[i], gt[i]);
        if p <= 0.0 || g <= 0.0 {
            return Err(TensorError::invalid(format!(
                "make3d_c1: non-positive depth at element {i} (pred {p}, gt {g})"
            )));
        }
        let diff = g - p;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        log10 += (libm::log10(g) - libm::log10(p)).abs();
    }
    Ok(Make3dC1 {
        sq_rel: sq_rel / count,
        abs_rel: abs_rel / count,
        rmse: libm::sqrt(sq / count),
        log10: log10 / count,
    })
}

/// Row/column window of the standard center crop used for the Eigen split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

impl CropWindow {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row1).contains(&row) && (self.col0..self.col1).contains(&col)
    }
}

const CROP_ROW_FRACTIONS: (f64, f64) = (0.408_108_11, 0.991_891_89);
const CROP_COL_FRACTIONS: (f64, f64) = (0.035_947_71, 0.964_052_29);

pub fn eigen_crop_window(h: usize, w: usize) -> CropWindow {
    let f = |frac: f64, len: usize| libm::floor(frac * len as f64) as usize;
    CropWindow {
        row0: f(CROP_ROW_FRACTIONS.0, h),
        row1: f(CROP_ROW_FRACTIONS.1, h),
        col0: f(CROP_COL_FRACTIONS.0, w),
        col1: f(CROP_COL_FRACTIONS.1, w),
    }
}

/// Row-major boolean mask form of [`eigen_crop_window`].
pub fn eigen_crop_mask(h: usize, w: usize) -> Vec<bool> {
    let win = eigen_crop_window(h, w);
    let mut mask = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            mask.push(win.contains(i, j));
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;
    use alloc::vec;

    #[test]
    fn depth_conversion_examples() {
        let calib = CameraCalib { focal_px: 1.0, baseline_m: 1.0 };
        // d * W = 0.5 px on a 10-px-wide map
        let d = Tensor::<f64>::full(crate::tensor::Shape::new(1, 1, 1, 10), 0.05);
        let depth = disparity_to_depth(&d, &calib, 10).unwrap();
        assert!((depth.data()[0] - 2.0).abs() < 1e-12);

        let kitti = CameraCalib { focal_px: 721.0, baseline_m: 0.54 };
        let d = Tensor::<f64>::full(crate::tensor::Shape::new(1, 1, 1, 100), 36.0 / 100.0);
        let depth = disparity_to_depth(&d, &kitti, 100).unwrap();
        assert!((depth.data()[0] - 10.815).abs() < 1e-12);

        // doubling disparity halves depth
        let d2 = Tensor::<f64>::full(crate::tensor::Shape::new(1, 1, 1, 100), 72.0 / 100.0);
        let depth2 = disparity_to_depth(&d2, &kitti, 100).unwrap();
        assert!((depth2.data()[0] * 2.0 - depth.data()[0]).abs() < 1e-12);

        let dz = Tensor::<f64>::zeros(crate::tensor::Shape::new(1, 1, 1, 4));
        assert!(disparity_to_depth(&dz, &kitti, 100).is_err());
    }

    #[test]
    fn perfect_prediction_scores_perfectly() {
        let gt = vec![2.0, 5.0, 11.0, 40.0, 70.0];
        let mask = vec![true; 5];
        let e = eigen_metrics(&gt, &gt, &mask, 80.0).unwrap();
        assert_eq!(
            (e.abs_rel, e.sq_rel, e.rmse, e.rmse_log),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!((e.delta1, e.delta2, e.delta3), (1.0, 1.0, 1.0));
        let s = silog_suite(&gt, &gt, &mask).unwrap();
        assert_eq!((s.silog, s.sq_rel_pct, s.abs_rel_pct, s.irmse), (0.0, 0.0, 0.0, 0.0));
        let m = make3d_c1(&gt, &gt).unwrap();
        assert_eq!((m.sq_rel, m.abs_rel, m.rmse, m.log10), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn doubled_prediction_on_constant_ratio() {
        // pred = 2*gt: abs_rel = 1 and even delta3 misses (2 > 1.25^3).
        let gt = vec![1.0, 2.0, 3.0, 4.0];
        let pred: Vec<f64> = gt.iter().map(|g| 2.0 * g).collect();
        let mask = vec![true; 4];
        let e = eigen_metrics(&pred, &gt, &mask, 1000.0).unwrap();
        assert!((e.abs_rel - 1.0).abs() < 1e-12);
        assert_eq!(e.delta1, 0.0);
        assert_eq!(e.delta3, 0.0);
        assert!(1.25f64 * 1.25 * 1.25 < 2.0);

        // pure scale leaves silog at zero
        let s = silog_suite(&pred, &gt, &mask).unwrap();
        assert!(s.silog.abs() < 1e-10);
    }

    #[test]
    fn rmse_log_of_e_ratio_is_one() {
        let gt = vec![1.0, 2.0, 5.0];
        let e = core::f64::consts::E;
        let pred: Vec<f64> = gt.iter().map(|g| e * g).collect();
        let mask = vec![true; 3];
        let m = eigen_metrics(&pred, &gt, &mask, 1000.0).unwrap();
        assert!((m.rmse_log - 1.0).abs() < 1e-12);
    }

    #[test]
    fn silog_of_two_pixel_example() {
        // log errors {0, 1}: variance 0.25, reported as 25.
        let gt = vec![1.0, 1.0];
        let pred = vec![1.0, core::f64::consts::E];
        let s = silog_suite(&pred, &gt, &[true, true]).unwrap();
        assert!((s.silog - 25.0).abs() < 1e-10);
    }

    #[test]
    fn make3d_log10_of_tenth_ratio_is_one() {
        let gt = vec![10.0, 20.0, 50.0];
        let pred: Vec<f64> = gt.iter().map(|g| g / 10.0).collect();
        let m = make3d_c1(&pred, &gt).unwrap();
        assert!((m.log10 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn make3d_rejects_all_far_ground_truth() {
        let gt = vec![71.0, 90.0];
        let pred = vec![50.0, 50.0];
        assert!(matches!(
            make3d_c1(&pred, &gt).unwrap_err(),
            TensorError::Empty { .. }
        ));
    }

    #[test]
    fn delta_monotonicity_and_symmetry() {
        let mut rng = SeedRng::new(21);
        for _ in 0..50 {
            let gt: Vec<f64> = (0..5).map(|_| rng.uniform(1.0, 60.0)).collect();
            let pred: Vec<f64> = (0..5).map(|_| rng.uniform(1.0, 60.0)).collect();
            let mask = vec![true; 5];
            let a = eigen_metrics(&pred, &gt, &mask, 80.0).unwrap();
            assert!(a.delta1 <= a.delta2 && a.delta2 <= a.delta3);
            assert!((0.0..=1.0).contains(&a.delta1) && (0.0..=1.0).contains(&a.delta3));
            let b = eigen_metrics(&gt, &pred, &mask, 80.0).unwrap();
            assert_eq!((a.delta1, a.delta2, a.delta3), (b.delta1, b.delta2, b.delta3));
        }
    }

    #[test]
    fn crop_window_matches_reference_size() {
        let win = eigen_crop_window(375, 1242);
        assert_eq!((win.row0, win.row1), (153, 371));
        assert_eq!((win.col0, win.col1), (44, 1197));

        let mask = eigen_crop_mask(375, 1242);
        let area = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
        assert!((area - 0.584 * 0.928).abs() < 0.01, "area {area}");

        // idempotent as a mask: AND with itself changes nothing
        let double: Vec<bool> = mask.iter().map(|&m| m && m).collect();
        assert_eq!(mask, double);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let gt = vec![1.0, 2.0];
        assert!(eigen_metrics(&gt, &gt, &[false, false], 80.0).is_err());
        assert!(silog_suite(&gt, &gt, &[false, false]).is_err());
    }

    #[test]
    fn cap_changes_results_when_depths_exceed_it() {
        let gt = vec![40.0, 60.0];
        let pred = vec![35.0, 80.0];
        let mask = vec![true, true];
        let cap50 = eigen_metrics(&pred, &gt, &mask, 50.0).unwrap();
        let cap80 = eigen_metrics(&pred, &gt, &mask, 80.0).unwrap();
        assert!((cap50.abs_rel - cap80.abs_rel).abs() > 1e-6);
    }
}
