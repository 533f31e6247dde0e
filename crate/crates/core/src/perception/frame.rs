use std::io::{self, BufRead, Read, Write};

use super::error::{PerceptionError, PerceptionResult};
use crate::scalar::Scalar;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<S = f64> {
    height: usize,
    width: usize,
    data: Vec<S>,
}

impl<S: Scalar> Frame<S> {
    pub fn zeros(height: usize, width: usize) -> PerceptionResult<Self> {
        if height == 0 || width == 0 {
            return Err(PerceptionError::EmptyFrame);
        }
        Ok(Frame { height, width, data: vec![S::zero(); height * width] })
    }

    /// Takes ownership of `data`; values are clipped to `[0, 1]` and
    /// non-finite values rejected.
    pub fn from_vec(height: usize, width: usize, mut data: Vec<S>) -> PerceptionResult<Self> {
        if height == 0 || width == 0 {
            return Err(PerceptionError::EmptyFrame);
        }
        if data.len() != height * width {
            return Err(PerceptionError::Shape(format!("{} values for a {height}x{width} frame", data.len())));
        }
        for v in &mut data {
            if !v.is_finite() {
                return Err(PerceptionError::Shape("non-finite intensity".into()));
            }
            *v = v.max(S::zero()).min(S::one());
        }
        Ok(Frame { height, width, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> PerceptionResult<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(PerceptionError::Shape("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| S::lit(v))).collect();
        Frame::from_vec(rows.len(), width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        self.data[row * self.width + col]
    }

    /// Sets one pixel, clipping to `[0, 1]`.
    pub fn set(&mut self, row: usize, col: usize, v: S) {
        self.data[row * self.width + col] = v.max(S::zero()).min(S::one());
    }

    /// Copies `patch` with its top-left corner at `(row, col)`, cropping
    /// whatever falls outside.
    pub fn blit(&mut self, patch: &Frame<S>, row: usize, col: usize) {
        for r in 0..patch.height {
            for c in 0..patch.width {
                if row + r < self.height && col + c < self.width {
                    self.set(row + r, col + c, patch.get(r, c));
                }
            }
        }
    }

    /// Translated copy with zero fill.
    pub fn shifted(&self, dr: isize, dc: isize) -> Frame<S> {
        let mut out = Frame { height: self.height, width: self.width, data: vec![S::zero(); self.data.len()] };
        for r in 0..self.height {
            for c in 0..self.width {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr >= 0 && nc >= 0 && (nr as usize) < self.height && (nc as usize) < self.width {
                    out.data[nr as usize * self.width + nc as usize] = self.get(r, c);
                }
            }
        }
        out
    }

    pub fn map_scalar<T: Scalar>(&self) -> Frame<T> {
        Frame { height: self.height, width: self.width, data: self.data.iter().map(|v| T::lit(v.as_f64())).collect() }
    }

    /// Binary PGM (P5), 8 bits per pixel.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.data.iter().map(|v| (v.as_f64() * 255.0).round() as u8).collect();
        out.write_all(&bytes)
    }

    /// Reads binary (P5) or ASCII (P2) PGM with any maxval up to 65535.
    pub fn read_pgm<R: Read>(input: R) -> PerceptionResult<Self> {
        let mut rd = io::BufReader::new(input);
        let mut header = Vec::new();
        while header.len() < 4 {
            let mut line = String::new();
            if rd.read_line(&mut line).map_err(|e| PerceptionError::Pgm(e.to_string()))? == 0 {
                return Err(PerceptionError::Pgm("truncated header".into()));
            }
            let line = line.split('#').next().unwrap_or("");
            header.extend(line.split_whitespace().map(str::to_string));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| PerceptionError::Pgm(format!("`{s}`: {e}")));
        let (w, h, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
        if maxval == 0 || maxval > 65535 {
            return Err(PerceptionError::Pgm(format!("maxval {maxval}")));
        }
        let scale = maxval as f64;
        let data: Vec<S> = match header[0].as_str() {
            "P5" => {
                let wide = maxval > 255;
                let mut bytes = vec![0u8; w * h * if wide { 2 } else { 1 }];
                rd.read_exact(&mut bytes).map_err(|e| PerceptionError::Pgm(e.to_string()))?;
                if wide {
                    bytes.chunks(2).map(|b| S::lit(u16::from_be_bytes([b[0], b[1]]) as f64 / scale)).collect()
                } else {
                    bytes.iter().map(|&b| S::lit(b as f64 / scale)).collect()
                }
            }
            "P2" => {
                let mut rest = String::new();
                rd.read_to_string(&mut rest).map_err(|e| PerceptionError::Pgm(e.to_string()))?;
                let mut vals: Vec<String> = header[4..].to_vec();
                vals.extend(rest.split_whitespace().map(str::to_string));
                vals.iter().take(w * h).map(|s| num(s).map(|v| S::lit(v as f64 / scale))).collect::<Result<_, _>>()?
            }
            other => return Err(PerceptionError::Pgm(format!("unsupported magic `{other}`"))),
        };
        Frame::from_vec(h, w, data)
    }
}
