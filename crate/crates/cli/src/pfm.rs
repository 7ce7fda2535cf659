//! Portable float maps for real-valued images (disparity interchange).
//!
//! Written form is pinned: header `Pf\n{W} {H}\n-1.0\n` (negative scale =
//! little-endian), rows stored bottom to top, 32-bit floats. The reader also
//! accepts positive-scale (big-endian) files and byte-swaps them. Every
//! disparity map travels with a JSON sidecar naming its units, so consumers
//! can refuse to mix pixel and width-fraction data.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smdepth_core::tensor::{Shape, Tensor};

use crate::error::{CliError, CliResult};
use crate::ppm::HeaderCursor;

/// Writes a single-channel `[1, 1, H, W]` map in the pinned format.
pub fn write_pfm(path: &Path, map: &Tensor<f32>) -> CliResult<()> {
    let sh = map.shape();
    if sh.n != 1 || sh.c != 1 {
        return Err(CliError::data(format!(
            "PFM writer needs a [1,1,H,W] tensor, got {sh}"
        )));
    }
    let mut bytes = format!("Pf\n{} {}\n-1.0\n", sh.w, sh.h).into_bytes();
    bytes.reserve(sh.h * sh.w * 4);
    for i in (0..sh.h).rev() {
        for j in 0..sh.w {
            bytes.extend_from_slice(&map.at(0, 0, i, j).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io("write", path, e))
}

/// Reads a grayscale PFM; handles both endiannesses via the scale sign.
pub fn read_pfm(path: &Path) -> CliResult<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io("read", path, e))?;
    let mut cursor = HeaderCursor::new(&bytes, path);
    let magic = cursor.token()?;
    if magic != b"Pf" {
        return Err(CliError::data(format!(
            "{}: not a grayscale PFM (magic {:?})",
            path.display(),
            String::from_utf8_lossy(magic)
        )));
    }
    let w: usize = cursor.number()?;
    let h: usize = cursor.number()?;
    let scale: f64 = cursor.number()?;
    if scale == 0.0 {
        return Err(CliError::data(format!(
            "{}: PFM scale must be non-zero",
            path.display()
        )));
    }
    let little_endian = scale < 0.0;
    let payload = cursor.rest_after_single_whitespace()?;
    if payload.len() != h * w * 4 {
        return Err(CliError::data(format!(
            "{}: expected {} payload bytes, found {}",
            path.display(),
            h * w * 4,
            payload.len()
        )));
    }
    let mut out = Tensor::zeros(Shape::new(1, 1, h, w));
    for row in 0..h {
        let i = h - 1 - row; // bottom-to-top storage
        for j in 0..w {
            let o = (row * w + j) * 4;
            let raw = [payload[o], payload[o + 1], payload[o + 2], payload[o + 3]];
            let bits = if little_endian {
                u32::from_le_bytes(raw)
            } else {
                u32::from_be_bytes(raw)
            };
            *out.at_mut(0, 0, i, j) = f32::from_bits(bits);
        }
    }
    Ok(out)
}

/// Units tag every disparity map carries in its sidecar.
pub const WIDTH_FRACTION_UNITS: &str = "width-fraction";

/// JSON sidecar of a disparity PFM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisparitySidecar {
    pub units: String,
    pub d_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disparity_px: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calib: Option<CalibFile>,
}

impl DisparitySidecar {
    pub fn width_fraction(d_max: f64) -> Self {
        DisparitySidecar {
            units: WIDTH_FRACTION_UNITS.into(),
            d_max,
            seed: None,
            disparity_px: None,
            scene_mode: None,
            calib: None,
        }
    }
}

/// Camera geometry as stored on disk.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CalibFile {
    pub focal_px: f64,
    pub baseline_m: f64,
}

impl From<CalibFile> for smdepth_core::metrics::CameraCalib {
    fn from(c: CalibFile) -> Self {
        smdepth_core::metrics::CameraCalib {
            focal_px: c.focal_px,
            baseline_m: c.baseline_m,
        }
    }
}

/// Path of the sidecar belonging to a PFM.
pub fn sidecar_path(pfm: &Path) -> PathBuf {
    pfm.with_extension("json")
}

pub fn write_sidecar(pfm: &Path, sidecar: &DisparitySidecar) -> CliResult<()> {
    let path = sidecar_path(pfm);
    let text = serde_json::to_string_pretty(sidecar)
        .map_err(|e| CliError::data(format!("serialize sidecar: {e}")))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io("write", &path, e))
}

pub fn read_sidecar(pfm: &Path) -> CliResult<DisparitySidecar> {
    let path = sidecar_path(pfm);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::data(format!(
            "missing disparity sidecar {}: {e}",
            path.display()
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let map = Tensor::from_fn(Shape::new(1, 1, 3, 4), |_, _, h, w| {
            (h as f32 * 0.17 - w as f32 * 0.03) * 1.5e-3
        });
        write_pfm(&path, &map).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(back.shape(), map.shape());
        for (a, b) in back.data().iter().zip(map.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_and_payload_sizes_are_pinned() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        write_pfm(&path, &Tensor::zeros(Shape::new(1, 1, 2, 3))).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        assert_eq!(bytes.len() - b"Pf\n3 2\n-1.0\n".len(), 24);
    }

    #[test]
    fn big_endian_files_are_byte_swapped() {
        // hand-build a "+1.0"-scale file and compare against the LE reader
        let dir = tempfile::tempdir().unwrap();
        let le = dir.path().join("le.pfm");
        let be = dir.path().join("be.pfm");
        let map = Tensor::from_fn(Shape::new(1, 1, 2, 2), |_, _, h, w| {
            0.25 + h as f32 * 0.5 + w as f32 * 0.125
        });
        write_pfm(&le, &map).unwrap();

        let mut bytes = b"Pf\n2 2\n1.0\n".to_vec();
        for i in (0..2usize).rev() {
            for j in 0..2usize {
                bytes.extend_from_slice(&map.at(0, 0, i, j).to_be_bytes());
            }
        }
        std::fs::write(&be, bytes).unwrap();

        let a = read_pfm(&le).unwrap();
        let b = read_pfm(&be).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        std::fs::write(&path, b"PF\n2 2\n-1.0\n").unwrap();
        assert!(read_pfm(&path).is_err()); // color PFM unsupported
        std::fs::write(&path, b"Pf\n2 2\n-1.0\nshort").unwrap();
        assert!(read_pfm(&path).is_err());
        std::fs::write(&path, b"Pf\n2 2\n0.0\n0123456789abcdef").unwrap();
        assert!(read_pfm(&path).is_err());
    }

    #[test]
    fn sidecars_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pfm = dir.path().join("d.pfm");
        let side = DisparitySidecar::width_fraction(0.3);
        write_sidecar(&pfm, &side).unwrap();
        let back = read_sidecar(&pfm).unwrap();
        assert_eq!(back.units, WIDTH_FRACTION_UNITS);
        assert_eq!(back.d_max, 0.3);
    }
}
