//! The `.sbs` binary frame stream container.
//!
//! Layout (all fields little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SBS1"
//!      4     4  width        u32
//!      8     4  height       u32
//!     12     4  frame_count  u32  (>= 1)
//!     16     8  tau_bin      f64  seconds
//!     24     8  eta          f64  in (0, 1]
//!     32     8  dark_rate    f64  counts/s/pixel
//!     40     8  rng_seed     u64
//!     48     -  payload: frame_count frames, each height × ceil(width/8)
//!               bytes, rows padded to byte boundaries, MSB-first
//! ```
//!
//! The payload length must match the header exactly; padding bits are
//! required to be zero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{validate_padding, BitplaneStream, StreamHeader};

pub const SBS_MAGIC: [u8; 4] = *b"SBS1";
pub const SBS_HEADER_LEN: usize = 48;

#[derive(Debug, Error)]
pub enum SbsError {
    #[error("bad magic {0:?}, expected \"SBS1\"")]
    BadMagic([u8; 4]),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("inconsistent stream length: expected {expected} payload bytes, found {found}")]
    InconsistentLength { expected: u64, found: u64 },
    #[error("nonzero padding bits in frame {frame}")]
    NonzeroPadding { frame: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn validate_header(header: &StreamHeader) -> Result<(), SbsError> {
    if header.width == 0 || header.height == 0 {
        return Err(SbsError::InvalidHeader(format!(
            "dimensions must be at least 1x1, got {}x{}",
            header.width, header.height
        )));
    }
    if header.frame_count == 0 {
        return Err(SbsError::InvalidHeader(
            "frame count must be at least 1".into(),
        ));
    }
    if !(header.tau_bin > 0.0 && header.tau_bin.is_finite()) {
        return Err(SbsError::InvalidHeader(format!(
            "tau_bin must be finite and positive, got {}",
            header.tau_bin
        )));
    }
    if !(header.eta > 0.0 && header.eta <= 1.0) {
        return Err(SbsError::InvalidHeader(format!(
            "eta must be in (0, 1], got {}",
            header.eta
        )));
    }
    if !(header.dark_rate >= 0.0 && header.dark_rate.is_finite()) {
        return Err(SbsError::InvalidHeader(format!(
            "dark_rate must be finite and nonnegative, got {}",
            header.dark_rate
        )));
    }
    Ok(())
}

fn encode_header(header: &StreamHeader) -> [u8; SBS_HEADER_LEN] {
    let mut buf = [0u8; SBS_HEADER_LEN];
    buf[0..4].copy_from_slice(&SBS_MAGIC);
    buf[4..8].copy_from_slice(&header.width.to_le_bytes());
    buf[8..12].copy_from_slice(&header.height.to_le_bytes());
    buf[12..16].copy_from_slice(&header.frame_count.to_le_bytes());
    buf[16..24].copy_from_slice(&header.tau_bin.to_le_bytes());
    buf[24..32].copy_from_slice(&header.eta.to_le_bytes());
    buf[32..40].copy_from_slice(&header.dark_rate.to_le_bytes());
    buf[40..48].copy_from_slice(&header.rng_seed.to_le_bytes());
    buf
}

fn read_header(reader: &mut impl Read) -> Result<StreamHeader, SbsError> {
    let mut buf = [0u8; SBS_HEADER_LEN];
    reader.read_exact(&mut buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            SbsError::InvalidHeader("file shorter than the 48-byte header".into())
        } else {
            SbsError::Io(e)
        }
    })?;
    let magic: [u8; 4] = buf[0..4].try_into().unwrap();
    if magic != SBS_MAGIC {
        return Err(SbsError::BadMagic(magic));
    }
    let le_u32 = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let le_f64 = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
    let header = StreamHeader {
        width: le_u32(&buf[4..8]),
        height: le_u32(&buf[8..12]),
        frame_count: le_u32(&buf[12..16]),
        tau_bin: le_f64(&buf[16..24]),
        eta: le_f64(&buf[24..32]),
        dark_rate: le_f64(&buf[32..40]),
        rng_seed: u64::from_le_bytes(buf[40..48].try_into().unwrap()),
    };
    validate_header(&header)?;
    Ok(header)
}

/// Write a stream to any sink.
pub fn write_stream_to(stream: &BitplaneStream, writer: &mut impl Write) -> Result<(), SbsError> {
    writer.write_all(&encode_header(stream.header()))?;
    writer.write_all(stream.payload())?;
    Ok(())
}

/// Write a stream to a file. Byte-exact round trip with [`read_stream`].
pub fn write_stream(stream: &BitplaneStream, path: impl AsRef<Path>) -> Result<(), SbsError> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_stream_to(stream, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// Read a whole stream from any source, validating length and padding.
pub fn read_stream_from(reader: &mut impl Read) -> Result<BitplaneStream, SbsError> {
    let header = read_header(reader)?;
    let expected = header.payload_len();
    let mut payload = vec![0u8; expected];
    let mut filled = 0usize;
    while filled < expected {
        match reader.read(&mut payload[filled..])? {
            0 => {
                return Err(SbsError::TruncatedPayload {
                    expected: expected as u64,
                    found: filled as u64,
                })
            }
            n => filled += n,
        }
    }
    let mut probe = [0u8; 1];
    if reader.read(&mut probe)? != 0 {
        return Err(SbsError::InconsistentLength {
            expected: expected as u64,
            found: expected as u64 + 1,
        });
    }
    let frame_size = header.frame_size();
    for (index, frame) in payload.chunks(frame_size).enumerate() {
        validate_padding(frame, header.width, header.height)
            .map_err(|_| SbsError::NonzeroPadding { frame: index as u32 })?;
    }
    BitplaneStream::new(header, payload)
}

/// Read a whole stream from a file.
pub fn read_stream(path: impl AsRef<Path>) -> Result<BitplaneStream, SbsError> {
    read_stream_from(&mut BufReader::new(File::open(path)?))
}

/// Incremental reader: frames are consumed one at a time without loading
/// the whole payload.
pub struct SbsReader<R: Read> {
    header: StreamHeader,
    reader: R,
    frames_read: u32,
}

impl SbsReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SbsError> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> SbsReader<R> {
    pub fn new(mut reader: R) -> Result<Self, SbsError> {
        let header = read_header(&mut reader)?;
        Ok(Self {
            header,
            reader,
            frames_read: 0,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn frames_remaining(&self) -> u32 {
        self.header.frame_count - self.frames_read
    }

    /// Read the next frame's packed bits into `buf` (must be exactly
    /// `header().frame_size()` bytes). Returns false when the stream is
    /// exhausted.
    pub fn read_frame(&mut self, buf: &mut [u8]) -> Result<bool, SbsError> {
        assert_eq!(buf.len(), self.header.frame_size(), "frame buffer size");
        if self.frames_read == self.header.frame_count {
            return Ok(false);
        }
        self.reader.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                SbsError::TruncatedPayload {
                    expected: self.header.payload_len() as u64,
                    found: u64::from(self.frames_read) * self.header.frame_size() as u64,
                }
            } else {
                SbsError::Io(e)
            }
        })?;
        validate_padding(buf, self.header.width, self.header.height).map_err(|_| {
            SbsError::NonzeroPadding {
                frame: self.frames_read,
            }
        })?;
        self.frames_read += 1;
        Ok(true)
    }

    /// After the last frame, check that no trailing bytes follow.
    pub fn finish(mut self) -> Result<(), SbsError> {
        let mut probe = [0u8; 1];
        if self.reader.read(&mut probe)? != 0 {
            let expected = self.header.payload_len() as u64;
            return Err(SbsError::InconsistentLength {
                expected,
                found: expected + 1,
            });
        }
        Ok(())
    }
}
