//! Row-major real-valued maps (range, depth, angle matrices) and their
//! on-disk formats.
//!
//! Row 0 is the top of the scene (largest elevation), column 0 the left edge.
//! Ground-truth maps use `+inf` for pixels whose ray hits nothing.

use std::io::{self, Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map shape {rows}x{cols} does not match {len} values")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("map dimensions differ: {0:?} vs {1:?}")]
    Mismatch((usize, usize), (usize, usize)),
    #[error("malformed map file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub type RangeMap = GridMap;
pub type DepthMap = GridMap;

/// Millimeters per PGM count.
pub const PGM_METERS_PER_COUNT: f64 = 1e-3;

impl GridMap {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MapError> {
        if rows * cols != data.len() {
            return Err(MapError::Shape { rows, cols, len: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Writes a binary 16-bit PGM (P5, big-endian samples).
    ///
    /// One count is one millimeter, so the largest representable value is
    /// 65.535 m; larger values saturate. Non-finite pixels (ground-truth
    /// misses) are written as 0.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<(), MapError> {
        write!(
            w,
            "P5\n# depth map, 1 count = 1 mm, saturates at 65.535 m, 0 = no return\n{} {}\n65535\n",
            self.cols, self.rows
        )?;
        let mut buf = Vec::with_capacity(self.data.len() * 2);
        for &v in &self.data {
            buf.extend_from_slice(&meters_to_count(v).to_be_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a map written by [`GridMap::write_pgm`], back in meters.
    pub fn read_pgm<R: Read>(mut r: R) -> Result<Self, MapError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut pos = 0;
        let mut tokens = Vec::new();
        while tokens.len() < 4 {
            skip_ws_and_comments(&bytes, &mut pos);
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(MapError::Format("truncated header".into()));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if tokens[0] != "P5" || tokens[3] != "65535" {
            return Err(MapError::Format(format!("unsupported header {tokens:?}")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| MapError::Format(format!("bad dimension {s}")))
        };
        let (cols, rows) = (parse(&tokens[1])?, parse(&tokens[2])?);
        let body = &bytes[pos.min(bytes.len())..];
        if body.len() != rows * cols * 2 {
            return Err(MapError::Format(format!(
                "expected {} sample bytes, found {}",
                rows * cols * 2,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 * PGM_METERS_PER_COUNT)
            .collect();
        GridMap::new(rows, cols, data)
    }

    /// Writes the raw meters as CSV, one map row per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), MapError> {
        let mut line = String::new();
        for r in 0..self.rows {
            line.clear();
            for (c, v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<Self, MapError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut data = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let before = data.len();
            for field in line.split(',') {
                let v = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| MapError::Format(format!("bad value {field:?}")))?;
                data.push(v);
            }
            let n = data.len() - before;
            match cols {
                None => cols = Some(n),
                Some(c) if c != n => {
                    return Err(MapError::Format(format!("ragged row {rows}: {n} vs {c}")))
                }
                _ => {}
            }
            rows += 1;
        }
        GridMap::new(rows, cols.unwrap_or(0), data)
    }
}

fn meters_to_count(v: f64) -> u16 {
    if !v.is_finite() || v <= 0.0 {
        return 0;
    }
    (v / PGM_METERS_PER_COUNT).round().min(u16::MAX as f64) as u16
}

fn skip_ws_and_comments(bytes: &[u8], pos: &mut usize) {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_is_checked() {
        assert!(GridMap::new(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn pgm_quantizes_to_millimeters() {
        let m = GridMap::new(2, 2, vec![1.0, 7.0004, f64::INFINITY, 70.0]).unwrap();
        let mut buf = Vec::new();
        m.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n#"));
        let back = GridMap::read_pgm(&buf[..]).unwrap();
        assert_eq!(back.dims(), (2, 2));
        assert_eq!(back.as_slice(), &[1.0, 7.0, 0.0, 65.535]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = GridMap::from_fn(3, 4, |r, c| (r as f64 + 0.1) * (c as f64 + 1.0 / 3.0));
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(GridMap::read_csv(&buf[..]).unwrap(), m);
    }
}
