//! Portable float maps: little-endian `f32`, rows stored bottom to top.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use polardeflect_core::Raster;

use crate::error::{Error, Result};

/// Greyscale (`Pf`) or three-channel (`PF`) float image, rows top to bottom
/// in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Pfm {
    pub fn grey(r: &Raster<f64>) -> Self {
        Self {
            width: r.width(),
            height: r.height(),
            channels: 1,
            data: r.as_slice().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn rgb(r: &Raster<[f64; 3]>) -> Self {
        Self {
            width: r.width(),
            height: r.height(),
            channels: 3,
            data: r.as_slice().iter().flat_map(|v| v.map(|c| c as f32)).collect(),
        }
    }

    pub fn to_grey(&self) -> Option<Raster<f64>> {
        if self.channels != 1 {
            return None;
        }
        Raster::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn to_rgb(&self) -> Option<Raster<[f64; 3]>> {
        if self.channels != 3 {
            return None;
        }
        let px = self
            .data
            .chunks_exact(3)
            .map(|c| [f64::from(c[0]), f64::from(c[1]), f64::from(c[2])])
            .collect();
        Raster::from_vec(self.width, self.height, px)
    }

    pub fn encode(&self) -> Vec<u8> {
        let tag = if self.channels == 3 { "PF" } else { "Pf" };
        let mut out = format!("{tag}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        let row = self.width * self.channels;
        out.reserve(self.data.len() * 4);
        for y in (0..self.height).rev() {
            for v in &self.data[y * row..(y + 1) * row] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut rd = BufReader::new(bytes);
        let mut token = || -> std::result::Result<String, String> {
            let mut line = String::new();
            loop {
                line.clear();
                if rd.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
                    return Err("truncated header".into());
                }
                if !line.trim().is_empty() {
                    return Ok(line.trim().to_string());
                }
            }
        };
        let tag = token()?;
        let channels = match tag.as_str() {
            "Pf" => 1,
            "PF" => 3,
            other => return Err(format!("bad magic {other:?}")),
        };
        let dims = token()?;
        let mut it = dims.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(width)), Some(Ok(height)), None) = (it.next(), it.next(), it.next()) else {
            return Err(format!("bad dimensions {dims:?}"));
        };
        let scale: f32 = token()?.parse().map_err(|_| "bad scale".to_string())?;
        let little = scale < 0.0;
        let mut raw = Vec::new();
        rd.read_to_end(&mut raw).map_err(|e| e.to_string())?;
        let row = width * channels;
        if raw.len() != row * height * 4 {
            return Err(format!("expected {} data bytes, found {}", row * height * 4, raw.len()));
        }
        let mut data = vec![0f32; row * height];
        for (k, chunk) in raw.chunks_exact(4).enumerate() {
            let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            let (file_row, col) = (k / row, k % row);
            data[(height - 1 - file_row) * row + col] = v;
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }
}

pub fn write(path: &Path, pfm: &Pfm) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&pfm.encode()).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Pfm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Pfm::decode(&bytes).map_err(|msg| Error::Data(format!("{}: {msg}", path.display())))
}

pub fn write_grey(path: &Path, r: &Raster<f64>) -> Result<()> {
    write(path, &Pfm::grey(r))
}

pub fn write_rgb(path: &Path, r: &Raster<[f64; 3]>) -> Result<()> {
    write(path, &Pfm::rgb(r))
}

pub fn read_grey(path: &Path) -> Result<Raster<f64>> {
    read(path)?
        .to_grey()
        .ok_or_else(|| Error::Data(format!("{}: expected a greyscale PFM", path.display())))
}

pub fn read_rgb(path: &Path) -> Result<Raster<[f64; 3]>> {
    read(path)?
        .to_rgb()
        .ok_or_else(|| Error::Data(format!("{}: expected a three-channel PFM", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_row_order() {
        let r = Raster::from_fn(3, 2, |x, y| (x + 10 * y) as f64);
        let bytes = Pfm::grey(&r).encode();
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        // first stored row is the bottom one
        let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(first, 10.0);
        let back = Pfm::decode(&bytes).unwrap().to_grey().unwrap();
        assert_eq!(back, r);

        let c = Raster::from_fn(2, 2, |x, y| [x as f64, y as f64, f64::NAN]);
        let back = Pfm::decode(&Pfm::rgb(&c).encode()).unwrap().to_rgb().unwrap();
        assert_eq!(back.get(1, 0)[0], 1.0);
        assert!(back.get(1, 1)[2].is_nan());
    }

    #[test]
    fn big_endian_and_errors() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        assert_eq!(Pfm::decode(&bytes).unwrap().data, vec![2.5]);
        assert!(Pfm::decode(b"P6\n1 1\n-1\n").is_err());
        assert!(Pfm::decode(b"Pf\n2 2\n-1\n\0\0\0\0").is_err());
    }
}
