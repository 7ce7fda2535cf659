//! Binary PPM (P6, maxval 255) for RGB images in `[0, 1]`.

use std::path::Path;

use smdepth_core::tensor::{Shape, Tensor};

use crate::error::{CliError, CliResult};

/// Writes a `[1, 3, H, W]` tensor as P6. Values are clamped to `[0, 1]` and
/// rounded to 8 bits.
pub fn write_ppm(path: &Path, image: &Tensor<f32>) -> CliResult<()> {
    let sh = image.shape();
    if sh.n != 1 || sh.c != 3 {
        return Err(CliError::data(format!(
            "PPM writer needs a [1,3,H,W] tensor, got {sh}"
        )));
    }
    let mut bytes = format!("P6\n{} {}\n255\n", sh.w, sh.h).into_bytes();
    bytes.reserve(sh.h * sh.w * 3);
    for i in 0..sh.h {
        for j in 0..sh.w {
            for c in 0..3 {
                let v = image.at(0, c, i, j).clamp(0.0, 1.0);
                bytes.push((v * 255.0).round() as u8);
            }
        }
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io("write", path, e))
}

/// Reads a P6 file into a `[1, 3, H, W]` tensor with values in `[0, 1]`.
pub fn read_ppm(path: &Path) -> CliResult<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io("read", path, e))?;
    let mut cursor = HeaderCursor::new(&bytes, path);
    let magic = cursor.token()?;
    if magic != b"P6" {
        return Err(CliError::data(format!(
            "{}: not a binary PPM (magic {:?})",
            path.display(),
            String::from_utf8_lossy(magic)
        )));
    }
    let w: usize = cursor.number()?;
    let h: usize = cursor.number()?;
    let maxval: usize = cursor.number()?;
    if maxval != 255 {
        return Err(CliError::data(format!(
            "{}: only maxval 255 is supported, got {maxval}",
            path.display()
        )));
    }
    let payload = cursor.rest_after_single_whitespace()?;
    if payload.len() != h * w * 3 {
        return Err(CliError::data(format!(
            "{}: expected {} payload bytes, found {}",
            path.display(),
            h * w * 3,
            payload.len()
        )));
    }
    let mut out = Tensor::zeros(Shape::new(1, 3, h, w));
    for i in 0..h {
        for j in 0..w {
            for c in 0..3 {
                *out.at_mut(0, c, i, j) = payload[(i * w + j) * 3 + c] as f32 / 255.0;
            }
        }
    }
    Ok(out)
}

/// Whitespace/comment-aware header scanning shared with the PFM reader.
pub(crate) struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> HeaderCursor<'a> {
    pub fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        HeaderCursor { bytes, pos: 0, path }
    }

    fn error(&self, msg: &str) -> CliError {
        CliError::data(format!("{}: {msg}", self.path.display()))
    }

    fn skip_whitespace_and_comments(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    pub fn token(&mut self) -> CliResult<&'a [u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("truncated header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    pub fn number<T: core::str::FromStr>(&mut self) -> CliResult<T> {
        let tok = self.token()?;
        core::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.error("malformed header number"))
    }

    /// Consumes exactly one whitespace byte after the header and returns the
    /// binary payload.
    pub fn rest_after_single_whitespace(&mut self) -> CliResult<&'a [u8]> {
        if self.pos >= self.bytes.len() || !self.bytes[self.pos].is_ascii_whitespace() {
            return Err(self.error("missing separator before payload"));
        }
        self.pos += 1;
        Ok(&self.bytes[self.pos..])
    }
}
