//! PFM / PGM images, pose lists and intrinsics files.
//!
//! Depth PFMs store invalid pixels as `0.0`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};
use crate::geometry::{CameraIntrinsics, Pose};

/// Single-channel PFM, little-endian, rows bottom-up. Values are stored as
/// `f32`.
pub fn encode_pfm(field: &ScalarField) -> Vec<u8> {
    let grid = field.grid;
    let mut out = format!("Pf\n{} {}\n-1.0\n", grid.width, grid.height).into_bytes();
    out.reserve(4 * grid.len());
    for r in (0..grid.height).rev() {
        for c in 0..grid.width {
            out.extend_from_slice(&(field.get(r, c) as f32).to_le_bytes());
        }
    }
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}, found end of file")));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, format!("{what} is not ASCII")))?;
        Ok((start, s))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<(usize, T)> {
        let (at, s) = self.token(what)?;
        s.parse().map(|v| (at, v)).map_err(|_| Error::parse(at, format!("invalid {what} {s:?}")))
    }

    /// Consumes the single whitespace byte that ends a header.
    fn end(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(Error::parse(self.pos, "expected a whitespace byte after the header")),
        }
    }
}

fn dimensions(h: &mut Header<'_>) -> Result<Grid> {
    let (at_w, w) = h.number::<usize>("width")?;
    let (at_h, ht) = h.number::<usize>("height")?;
    if w == 0 {
        return Err(Error::parse(at_w, "width must be positive"));
    }
    if ht == 0 {
        return Err(Error::parse(at_h, "height must be positive"));
    }
    Ok(Grid::new(w, ht))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ScalarField> {
    let mut h = Header { bytes, pos: 0 };
    let (at, magic) = h.token("magic number")?;
    match magic {
        "Pf" => {}
        "PF" => return Err(Error::parse(at, "three-channel PFM is not supported")),
        other => return Err(Error::parse(at, format!("expected \"Pf\", found {other:?}"))),
    }
    let grid = dimensions(&mut h)?;
    let (at, scale) = h.number::<f64>("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(at, "scale must be a nonzero finite number"));
    }
    let start = h.end()?;
    let need = 4 * grid.len();
    let payload = &bytes[start..];
    if payload.len() < need {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated payload: expected {need} bytes, found {}", payload.len()),
        ));
    }
    let little = scale < 0.0;
    let mut field = ScalarField::zeros(grid);
    for (k, chunk) in payload[..need].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row_from_bottom, c) = (k / grid.width, k % grid.width);
        field.set(grid.height - 1 - row_from_bottom, c, v as f64);
    }
    Ok(field)
}

pub fn write_pfm(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    std::fs::write(path, encode_pfm(field))?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<ScalarField> {
    decode_pfm(&std::fs::read(path)?)
}

/// Depth PFM with its validity mask (finite and positive).
pub fn read_depth_pfm(path: impl AsRef<Path>) -> Result<(ScalarField, Vec<bool>)> {
    let f = read_pfm(path)?;
    let valid = f.data.iter().map(|&d| d.is_finite() && d > 0.0).collect();
    Ok((f, valid))
}

/// Writes `0.0` at invalid pixels.
pub fn write_depth_pfm(path: impl AsRef<Path>, field: &ScalarField, valid: &[bool]) -> Result<()> {
    let masked = ScalarField {
        grid: field.grid,
        data: field.data.iter().zip(valid).map(|(&d, &ok)| if ok { d } else { 0.0 }).collect(),
    };
    write_pfm(path, &masked)
}

/// Linear map of `[lo, hi]` onto gray levels `1..=65535`, clamped; invalid
/// pixels are 0.
pub fn depth_to_gray(field: &ScalarField, valid: &[bool], lo: f64, hi: f64) -> Vec<u16> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    field
        .data
        .iter()
        .zip(valid)
        .map(|(&d, &ok)| if ok { (1.0 + ((d - lo) / span).clamp(0.0, 1.0) * 65534.0).round() as u16 } else { 0 })
        .collect()
}

/// Binary PGM (P5), maxval 65535, big-endian, rows top-down.
pub fn encode_pgm(grid: Grid, gray: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", grid.width, grid.height).into_bytes();
    for g in gray {
        out.extend_from_slice(&g.to_be_bytes());
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(Grid, Vec<u16>)> {
    let mut h = Header { bytes, pos: 0 };
    let (at, magic) = h.token("magic number")?;
    if magic != "P5" {
        return Err(Error::parse(at, format!("expected \"P5\", found {magic:?}")));
    }
    let grid = dimensions(&mut h)?;
    let (at, maxval) = h.number::<u32>("maxval")?;
    if maxval != 65535 {
        return Err(Error::parse(at, format!("only maxval 65535 is supported, found {maxval}")));
    }
    let start = h.end()?;
    let need = 2 * grid.len();
    if bytes.len() - start < need {
        return Err(Error::parse(bytes.len(), format!("truncated payload: expected {need} bytes")));
    }
    let gray = bytes[start..start + need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((grid, gray))
}

pub fn write_pgm(path: impl AsRef<Path>, field: &ScalarField, valid: &[bool], lo: f64, hi: f64) -> Result<()> {
    std::fs::write(path, encode_pgm(field.grid, &depth_to_gray(field, valid, lo, hi)))?;
    Ok(())
}

/// Parses whitespace-separated numbers from one non-comment line.
fn parse_numbers(text: &str, line_offset: usize, expected: usize, what: &str) -> Result<Vec<f64>> {
    let values = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::parse(line_offset, format!("invalid number {t:?} in {what}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::parse(line_offset, format!("{what} needs {expected} numbers, found {}", values.len())));
    }
    Ok(values)
}

/// Content lines with their byte offsets; blank lines and `#` comments skipped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').filter_map(move |line| {
        let at = offset;
        offset += line.len();
        let t = line.trim();
        (!t.is_empty() && !t.starts_with('#')).then_some((at, t))
    })
}

/// One camera-to-world pose per line: the 3×4 matrix `[R | t]` row-major.
pub fn format_poses(poses: &[Pose]) -> String {
    let mut s = String::from("# camera-to-world [R | t], row-major\n");
    for p in poses {
        let row: Vec<String> = p.to_row_major().iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_poses(text: &str) -> Result<Vec<Pose>> {
    content_lines(text)
        .map(|(at, line)| {
            let v = parse_numbers(line, at, 12, "pose")?;
            let m: [f64; 12] = v.try_into().expect("length checked");
            Pose::from_row_major(&m).map_err(|e| Error::parse(at, e.to_string()))
        })
        .collect()
}

pub fn write_poses(path: impl AsRef<Path>, poses: &[Pose]) -> Result<()> {
    std::fs::write(path, format_poses(poses))?;
    Ok(())
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    parse_poses(&std::fs::read_to_string(path)?)
}

/// Single line `f cu cv`.
pub fn format_intrinsics(c: &CameraIntrinsics) -> String {
    format!("# f cu cv\n{:e} {:e} {:e}\n", c.f, c.cu, c.cv)
}

pub fn parse_intrinsics(text: &str) -> Result<CameraIntrinsics> {
    let (at, line) = content_lines(text).next().ok_or_else(|| Error::parse(text.len(), "missing intrinsics line"))?;
    let v = parse_numbers(line, at, 3, "intrinsics")?;
    CameraIntrinsics::new(v[0], v[1], v[2]).map_err(|e| Error::parse(at, e.to_string()))
}

pub fn write_intrinsics(path: impl AsRef<Path>, c: &CameraIntrinsics) -> Result<()> {
    std::fs::write(path, format_intrinsics(c))?;
    Ok(())
}

pub fn read_intrinsics(path: impl AsRef<Path>) -> Result<CameraIntrinsics> {
    parse_intrinsics(&std::fs::read_to_string(path)?)
}
