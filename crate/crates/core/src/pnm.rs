//! PGM (P5) and PFM (Pf) readers and writers.
//!
//! Intensity images round-trip through binary PGM with maxval 2^d − 1;
//! samples are one byte up to 8-bit depth and two bytes big-endian above,
//! per the PGM convention. Flux maps round-trip through grayscale PFM
//! ("Pf") with the little-endian scale convention (negative scale) and
//! the usual bottom-to-top scanline order; samples are 32-bit floats.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::metrics::{IntensityImage, MetricsError};
use crate::simulator::{FluxMap, SimulatorError};

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("expected {expected} magic, found {found:?}")]
    BadMagic { expected: &'static str, found: String },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unexpected end of file")]
    Truncated,
    #[error("sample {0} exceeds maxval {1}")]
    SampleOutOfRange(u16, u16),
    #[error("maxval {0} is not of the form 2^d - 1 with d in 1..=16")]
    UnsupportedMaxval(u32),
    #[error("non-finite or negative flux sample {0}")]
    InvalidFluxSample(f32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] MetricsError),
    #[error(transparent)]
    Flux(#[from] SimulatorError),
}

/// Write an intensity image as binary PGM (P5).
pub fn write_pgm_to(img: &IntensityImage, writer: &mut impl Write) -> Result<(), PnmError> {
    let maxval = img.max_sample();
    write!(writer, "P5\n{} {}\n{}\n", img.width(), img.height(), maxval)?;
    if maxval < 256 {
        let bytes: Vec<u8> = img.samples().iter().map(|&s| s as u8).collect();
        writer.write_all(&bytes)?;
    } else {
        let mut bytes = Vec::with_capacity(img.samples().len() * 2);
        for &s in img.samples() {
            bytes.extend_from_slice(&s.to_be_bytes());
        }
        writer.write_all(&bytes)?;
    }
    Ok(())
}

pub fn write_pgm(img: &IntensityImage, path: impl AsRef<Path>) -> Result<(), PnmError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_pgm_to(img, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// One header token, skipping whitespace and `#` comments.
fn read_token(reader: &mut impl BufRead) -> Result<String, PnmError> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            if token.is_empty() {
                return Err(PnmError::Truncated);
            }
            return Ok(token);
        }
        let c = byte[0];
        if c == b'#' {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            return Ok(token);
        }
        token.push(c as char);
    }
}

fn parse_dim(token: &str, what: &str) -> Result<u32, PnmError> {
    let value: u32 = token
        .parse()
        .map_err(|_| PnmError::MalformedHeader(format!("bad {what}: {token:?}")))?;
    if value == 0 {
        return Err(PnmError::MalformedHeader(format!("{what} must be nonzero")));
    }
    Ok(value)
}

/// Read a binary PGM (P5) with maxval 2^d − 1.
pub fn read_pgm_from(reader: &mut impl BufRead) -> Result<IntensityImage, PnmError> {
    let magic = read_token(reader)?;
    if magic != "P5" {
        return Err(PnmError::BadMagic {
            expected: "P5",
            found: magic,
        });
    }
    let width = parse_dim(&read_token(reader)?, "width")?;
    let height = parse_dim(&read_token(reader)?, "height")?;
    let maxval_token = read_token(reader)?;
    let maxval: u32 = maxval_token
        .parse()
        .map_err(|_| PnmError::MalformedHeader(format!("bad maxval: {maxval_token:?}")))?;
    let bit_depth = (1..=16u8)
        .find(|&d| (1u32 << d) - 1 == maxval)
        .ok_or(PnmError::UnsupportedMaxval(maxval))?;

    let n = width as usize * height as usize;
    let samples = if maxval < 256 {
        let mut bytes = vec![0u8; n];
        reader
            .read_exact(&mut bytes)
            .map_err(|_| PnmError::Truncated)?;
        bytes.into_iter().map(u16::from).collect::<Vec<u16>>()
    } else {
        let mut bytes = vec![0u8; n * 2];
        reader
            .read_exact(&mut bytes)
            .map_err(|_| PnmError::Truncated)?;
        bytes
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(&bad) = samples.iter().find(|&&s| u32::from(s) > maxval) {
        return Err(PnmError::SampleOutOfRange(bad, maxval as u16));
    }
    Ok(IntensityImage::new(width, height, bit_depth, samples)?)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<IntensityImage, PnmError> {
    read_pgm_from(&mut BufReader::new(File::open(path)?))
}

/// Write a flux map as grayscale PFM ("Pf", scale −1.0, little-endian,
/// bottom-to-top scanlines). Values are stored as f32.
pub fn write_pfm_to(map: &FluxMap, writer: &mut impl Write) -> Result<(), PnmError> {
    write!(writer, "Pf\n{} {}\n-1.0\n", map.width(), map.height())?;
    let width = map.width() as usize;
    let mut bytes = Vec::with_capacity(map.as_slice().len() * 4);
    for row in (0..map.height() as usize).rev() {
        for &v in &map.as_slice()[row * width..(row + 1) * width] {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    writer.write_all(&bytes)?;
    Ok(())
}

pub fn write_pfm(map: &FluxMap, path: impl AsRef<Path>) -> Result<(), PnmError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_pfm_to(map, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// Read a grayscale PFM into a flux map. Big-endian files (positive
/// scale) are accepted; the scale magnitude is ignored, as is customary.
pub fn read_pfm_from(reader: &mut impl BufRead) -> Result<FluxMap, PnmError> {
    let magic = read_token(reader)?;
    if magic != "Pf" {
        return Err(PnmError::BadMagic {
            expected: "Pf",
            found: magic,
        });
    }
    let width = parse_dim(&read_token(reader)?, "width")?;
    let height = parse_dim(&read_token(reader)?, "height")?;
    let scale_token = read_token(reader)?;
    let scale: f32 = scale_token
        .parse()
        .map_err(|_| PnmError::MalformedHeader(format!("bad scale: {scale_token:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(PnmError::MalformedHeader(format!(
            "scale must be finite and nonzero, got {scale}"
        )));
    }
    let little_endian = scale < 0.0;

    let n = width as usize * height as usize;
    let mut bytes = vec![0u8; n * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| PnmError::Truncated)?;
    let mut flux = vec![0.0f64; n];
    let w = width as usize;
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !(v.is_finite() && v >= 0.0) {
            return Err(PnmError::InvalidFluxSample(v));
        }
        // scanlines are stored bottom-to-top
        let row = height as usize - 1 - i / w;
        flux[row * w + i % w] = f64::from(v);
    }
    Ok(FluxMap::new(width, height, flux)?)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<FluxMap, PnmError> {
    read_pfm_from(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn pgm_8bit_round_trip() {
        let samples: Vec<u16> = (0..40u32).map(|i| (i * 6 % 256) as u16).collect();
        let img = IntensityImage::new(8, 5, 8, samples).unwrap();
        let mut bytes = Vec::new();
        write_pgm_to(&img, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"P5\n8 5\n255\n"));
        let back = read_pgm_from(&mut Cursor::new(&bytes)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_16bit_is_big_endian() {
        let img = IntensityImage::new(2, 1, 12, vec![0x0102, 0x0a0b]).unwrap();
        let mut bytes = Vec::new();
        write_pgm_to(&img, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n4095\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0x01, 0x02, 0x0a, 0x0b]);
        assert_eq!(read_pgm_from(&mut Cursor::new(&bytes)).unwrap(), img);
    }

    #[test]
    fn pgm_rejects_truncation_and_bad_magic() {
        let img = IntensityImage::constant(4, 4, 8, 9).unwrap();
        let mut bytes = Vec::new();
        write_pgm_to(&img, &mut bytes).unwrap();
        let short = &bytes[..bytes.len() - 1];
        assert!(matches!(
            read_pgm_from(&mut Cursor::new(short)),
            Err(PnmError::Truncated)
        ));
        bytes[1] = b'6';
        assert!(matches!(
            read_pgm_from(&mut Cursor::new(&bytes)),
            Err(PnmError::BadMagic { .. })
        ));
    }

    #[test]
    fn pgm_reader_skips_comments() {
        let mut bytes = b"P5 # magic\n# a comment line\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 8]);
        let img = read_pgm_from(&mut Cursor::new(&bytes)).unwrap();
        assert_eq!(img.samples(), &[7, 8]);
    }

    #[test]
    fn pgm_1bit_round_trip() {
        let img = IntensityImage::new(4, 2, 1, vec![0, 1, 1, 0, 1, 0, 0, 1]).unwrap();
        let mut bytes = Vec::new();
        write_pgm_to(&img, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"P5\n4 2\n1\n"));
        assert_eq!(read_pgm_from(&mut Cursor::new(&bytes)).unwrap(), img);
    }

    #[test]
    fn pgm_rejects_odd_maxval() {
        let bytes = b"P5\n1 1\n200\n\x07".to_vec();
        assert!(matches!(
            read_pgm_from(&mut Cursor::new(&bytes)),
            Err(PnmError::UnsupportedMaxval(200))
        ));
    }

    #[test]
    fn pfm_round_trip_preserves_f32_values() {
        let flux: Vec<f64> = (0..12).map(|i| (i as f64) * 1.5e4).collect();
        let map = FluxMap::new(4, 3, flux).unwrap();
        let mut bytes = Vec::new();
        write_pfm_to(&map, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"Pf\n4 3\n-1.0\n"));
        let back = read_pfm_from(&mut Cursor::new(&bytes)).unwrap();
        assert_eq!(back, map);

        // byte-exact rewrite
        let mut again = Vec::new();
        write_pfm_to(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn pfm_scanlines_are_bottom_to_top() {
        let map = FluxMap::new(1, 2, vec![10.0, 20.0]).unwrap();
        let mut bytes = Vec::new();
        write_pfm_to(&map, &mut bytes).unwrap();
        let data = &bytes[bytes.len() - 8..];
        // bottom row (20.0) first
        assert_eq!(f32::from_le_bytes(data[0..4].try_into().unwrap()), 20.0);
        assert_eq!(f32::from_le_bytes(data[4..8].try_into().unwrap()), 10.0);
    }

    #[test]
    fn pfm_rejects_negative_samples() {
        let mut bytes = b"Pf\n1 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&(-3.0f32).to_le_bytes());
        assert!(matches!(
            read_pfm_from(&mut Cursor::new(&bytes)),
            Err(PnmError::InvalidFluxSample(_))
        ));
    }
}
