//! Bit-packed binary frames and high-throughput accumulation.
//!
//! A binary frame stores one bit per pixel, row-major, each row padded to
//! a whole number of bytes, most-significant-bit first within each byte
//! (the common 1-bpp raster convention). A [`BitplaneStream`] is a header
//! plus `frame_count` such frames back to back; integrating 2^n of them
//! produces an n-bit image.

mod sbs;

pub use sbs::{read_stream, read_stream_from, write_stream, write_stream_to, SbsError, SbsReader};

use thiserror::Error;

use crate::metrics::IntensityImage;
use crate::photon::SensorConfig;

#[derive(Debug, Error)]
pub enum BitstreamError {
    #[error("pixel buffer has {got} entries, expected {expected} for {width}x{height}")]
    PixelCountMismatch {
        got: usize,
        expected: usize,
        width: u32,
        height: u32,
    },
    #[error("pixel value {0} is not 0 or 1")]
    NotBinary(u8),
    #[error("packed buffer has {got} bytes, expected {expected}")]
    PackedSizeMismatch { got: usize, expected: usize },
    #[error("nonzero padding bits in row {0}")]
    NonzeroPadding(u32),
    #[error("frame range {first}+{count} exceeds stream length {n_frames}")]
    FrameRangeOutOfBounds { first: u32, count: u32, n_frames: u32 },
    #[error("cannot accumulate zero frames")]
    EmptyRange,
    #[error("count {count} exceeds accumulated frame count {n_frames}")]
    CountExceedsFrames { count: u32, n_frames: u32 },
    #[error("bit depth must be in 1..=16, got {0}")]
    InvalidBitDepth(u8),
    #[error("count image has zero accumulated frames")]
    NoFrames,
    #[error("frame dimensions {0}x{1} do not match accumulator {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
}

/// Bytes per packed row for a given width.
#[inline]
pub fn row_stride(width: u32) -> usize {
    (width as usize).div_ceil(8)
}

/// A single 1-bit-per-pixel exposure, bit-packed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryFrame {
    width: u32,
    height: u32,
    bits: Vec<u8>,
}

impl BinaryFrame {
    /// Pack a row-major 0/1 pixel buffer into a frame.
    pub fn pack(pixels: &[u8], width: u32, height: u32) -> Result<Self, BitstreamError> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(BitstreamError::PixelCountMismatch {
                got: pixels.len(),
                expected,
                width,
                height,
            });
        }
        let stride = row_stride(width);
        let mut bits = vec![0u8; stride * height as usize];
        for y in 0..height as usize {
            let row = &pixels[y * width as usize..(y + 1) * width as usize];
            let out = &mut bits[y * stride..(y + 1) * stride];
            for (x, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => out[x / 8] |= 0x80 >> (x % 8),
                    other => return Err(BitstreamError::NotBinary(other)),
                }
            }
        }
        Ok(Self { width, height, bits })
    }

    /// Wrap an already-packed buffer, validating size and zero padding.
    pub fn from_packed(width: u32, height: u32, bits: Vec<u8>) -> Result<Self, BitstreamError> {
        let expected = row_stride(width) * height as usize;
        if bits.len() != expected {
            return Err(BitstreamError::PackedSizeMismatch {
                got: bits.len(),
                expected,
            });
        }
        validate_padding(&bits, width, height)?;
        Ok(Self { width, height, bits })
    }

    /// Unpack to a row-major 0/1 pixel buffer.
    pub fn unpack(&self) -> Vec<u8> {
        let stride = row_stride(self.width);
        let mut pixels = Vec::with_capacity(self.width as usize * self.height as usize);
        for y in 0..self.height as usize {
            let row = &self.bits[y * stride..(y + 1) * stride];
            for x in 0..self.width as usize {
                pixels.push((row[x / 8] >> (7 - x % 8)) & 1);
            }
        }
        pixels
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        let stride = row_stride(self.width);
        let byte = self.bits[y as usize * stride + (x / 8) as usize];
        (byte >> (7 - x % 8)) & 1 == 1
    }

    /// Number of set bits (detections) in the frame.
    pub fn ones_count(&self) -> u64 {
        self.bits.iter().map(|b| u64::from(b.count_ones())).sum()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn packed_bits(&self) -> &[u8] {
        &self.bits
    }
}

/// Mask of padding bits in the last byte of a row (1 = padding position).
#[inline]
fn padding_mask(width: u32) -> u8 {
    match width % 8 {
        0 => 0,
        rem => 0xFF >> rem,
    }
}

pub(crate) fn validate_padding(bits: &[u8], width: u32, height: u32) -> Result<(), BitstreamError> {
    let mask = padding_mask(width);
    if mask == 0 {
        return Ok(());
    }
    let stride = row_stride(width);
    for y in 0..height as usize {
        if bits[y * stride + stride - 1] & mask != 0 {
            return Err(BitstreamError::NonzeroPadding(y as u32));
        }
    }
    Ok(())
}

/// Stream header: sensor description plus frame count and the seed the
/// stream was generated from (0 when captured rather than simulated).
#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub tau_bin: f64,
    pub eta: f64,
    pub dark_rate: f64,
    pub rng_seed: u64,
}

impl StreamHeader {
    pub fn frame_size(&self) -> usize {
        row_stride(self.width) * self.height as usize
    }

    pub fn payload_len(&self) -> usize {
        self.frame_size() * self.frame_count as usize
    }

    pub fn sensor_config(&self) -> SensorConfig {
        SensorConfig {
            eta: self.eta,
            dark_rate: self.dark_rate,
            tau_bin: self.tau_bin,
            width: self.width,
            height: self.height,
        }
    }
}

/// An in-memory binary frame stream: header plus packed frame payload.
#[derive(Debug, Clone, PartialEq)]
pub struct BitplaneStream {
    header: StreamHeader,
    payload: Vec<u8>,
}

impl BitplaneStream {
    pub fn new(header: StreamHeader, payload: Vec<u8>) -> Result<Self, SbsError> {
        sbs::validate_header(&header)?;
        if payload.len() != header.payload_len() {
            return Err(SbsError::InconsistentLength {
                expected: header.payload_len() as u64,
                found: payload.len() as u64,
            });
        }
        Ok(Self { header, payload })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Packed bits of frame `index`.
    pub fn frame_bits(&self, index: u32) -> &[u8] {
        let size = self.header.frame_size();
        let start = index as usize * size;
        &self.payload[start..start + size]
    }

    pub fn frame(&self, index: u32) -> BinaryFrame {
        BinaryFrame {
            width: self.header.width,
            height: self.header.height,
            bits: self.frame_bits(index).to_vec(),
        }
    }
}

/// Per-pixel detection counts over N accumulated frames: the sufficient
/// statistic for all flux reconstruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountImage {
    width: u32,
    height: u32,
    n_frames: u32,
    counts: Vec<u32>,
}

impl CountImage {
    pub fn new(
        width: u32,
        height: u32,
        n_frames: u32,
        counts: Vec<u32>,
    ) -> Result<Self, BitstreamError> {
        let expected = width as usize * height as usize;
        if counts.len() != expected {
            return Err(BitstreamError::PixelCountMismatch {
                got: counts.len(),
                expected,
                width,
                height,
            });
        }
        if let Some(&over) = counts.iter().find(|&&c| c > n_frames) {
            return Err(BitstreamError::CountExceedsFrames {
                count: over,
                n_frames,
            });
        }
        Ok(Self {
            width,
            height,
            n_frames,
            counts,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn n_frames(&self) -> u32 {
        self.n_frames
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total_detections(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

// Spreads the 8 bits of a byte into the 8 bytes of a u64, MSB-first bit
// order mapping to ascending byte lanes, so eight pixel counters can be
// bumped with a single 64-bit add.
const fn spread_byte(b: u8) -> u64 {
    let mut v = 0u64;
    let mut j = 0;
    while j < 8 {
        v |= (((b >> (7 - j)) & 1) as u64) << (8 * j);
        j += 1;
    }
    v
}

static SPREAD_LUT: [u64; 256] = {
    let mut table = [0u64; 256];
    let mut i = 0;
    while i < 256 {
        table[i] = spread_byte(i as u8);
        i += 1;
    }
    table
};

/// Streaming frame accumulator.
///
/// Counts are staged in 8-bit lanes packed in u64 words (one add per input
/// byte) and flushed to 32-bit counters every 255 frames, before a lane
/// could overflow. The result is an exact integer sum, independent of
/// chunking.
pub struct FrameAccumulator {
    width: u32,
    height: u32,
    lanes: Vec<u64>,
    pending: u32,
    counts: Vec<u32>,
    frames_added: u32,
}

impl FrameAccumulator {
    pub fn new(width: u32, height: u32) -> Self {
        let stride = row_stride(width);
        Self {
            width,
            height,
            lanes: vec![0; stride * height as usize],
            pending: 0,
            counts: vec![0; width as usize * height as usize],
            frames_added: 0,
        }
    }

    /// Add one packed frame (byte layout must match the accumulator).
    pub fn add_packed(&mut self, bits: &[u8]) -> Result<(), BitstreamError> {
        if bits.len() != self.lanes.len() {
            return Err(BitstreamError::PackedSizeMismatch {
                got: bits.len(),
                expected: self.lanes.len(),
            });
        }
        for (lane, &b) in self.lanes.iter_mut().zip(bits) {
            if b != 0 {
                *lane += SPREAD_LUT[b as usize];
            }
        }
        self.pending += 1;
        self.frames_added += 1;
        if self.pending == 255 {
            self.flush();
        }
        Ok(())
    }

    pub fn add_frame(&mut self, frame: &BinaryFrame) -> Result<(), BitstreamError> {
        if frame.width != self.width || frame.height != self.height {
            return Err(BitstreamError::DimensionMismatch(
                frame.width,
                frame.height,
                self.width,
                self.height,
            ));
        }
        self.add_packed(&frame.bits)
    }

    fn flush(&mut self) {
        let stride = row_stride(self.width);
        let width = self.width as usize;
        for row in 0..self.height as usize {
            for bi in 0..stride {
                let lane = self.lanes[row * stride + bi];
                if lane == 0 {
                    continue;
                }
                let base = bi * 8;
                let cols = (width - base).min(8);
                let out = &mut self.counts[row * width + base..row * width + base + cols];
                for (j, c) in out.iter_mut().enumerate() {
                    *c += ((lane >> (8 * j)) & 0xFF) as u32;
                }
            }
        }
        self.lanes.fill(0);
        self.pending = 0;
    }

    pub fn finish(mut self) -> CountImage {
        self.flush();
        CountImage {
            width: self.width,
            height: self.height,
            n_frames: self.frames_added,
            counts: self.counts,
        }
    }
}

/// Integrate frames `[first, first + count)` of a stream into per-pixel
/// detection counts. The sum is exact, so the result is independent of
/// any internal chunking.
pub fn accumulate(
    stream: &BitplaneStream,
    first: u32,
    count: u32,
) -> Result<CountImage, BitstreamError> {
    let n_frames = stream.header().frame_count;
    let end = first.checked_add(count).filter(|&e| e <= n_frames);
    if end.is_none() {
        return Err(BitstreamError::FrameRangeOutOfBounds {
            first,
            count,
            n_frames,
        });
    }
    if count == 0 {
        return Err(BitstreamError::EmptyRange);
    }
    let mut acc = FrameAccumulator::new(stream.header().width, stream.header().height);
    for index in first..first + count {
        acc.add_packed(stream.frame_bits(index))?;
    }
    Ok(acc.finish())
}

/// Quantize detection counts into a `bit_depth`-bit intensity image:
/// `min(round(count × (2^d − 1) / N), 2^d − 1)`. With N = 2^d frames the
/// top count 2^d is clamped into the 2^d − 1 code rather than rescaling
/// the whole range, so values below mid-range stay exact counts.
pub fn to_intensity(ci: &CountImage, bit_depth: u8) -> Result<IntensityImage, BitstreamError> {
    if !(1..=16).contains(&bit_depth) {
        return Err(BitstreamError::InvalidBitDepth(bit_depth));
    }
    if ci.n_frames == 0 {
        return Err(BitstreamError::NoFrames);
    }
    let max_code = (1u32 << bit_depth) - 1;
    let scale = f64::from(max_code) / f64::from(ci.n_frames);
    let samples = ci
        .counts
        .iter()
        .map(|&c| ((f64::from(c) * scale).round() as u32).min(max_code) as u16)
        .collect();
    Ok(IntensityImage::new(ci.width, ci.height, bit_depth, samples)
        .expect("quantized samples are in range"))
}

/// Total exposure equivalent to integrating 2^bit_depth binary frames.
pub fn equivalent_exposure(bit_depth: u8, tau_bin: f64) -> f64 {
    debug_assert!((1..=32).contains(&bit_depth));
    (1u64 << bit_depth) as f64 * tau_bin
}

/// Binary frame exposure that yields `total_exposure` at a bit depth.
pub fn binary_exposure_for(bit_depth: u8, total_exposure: f64) -> f64 {
    debug_assert!((1..=32).contains(&bit_depth));
    total_exposure / (1u64 << bit_depth) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_header(width: u32, height: u32, frame_count: u32) -> StreamHeader {
        StreamHeader {
            width,
            height,
            frame_count,
            tau_bin: 1e-5,
            eta: 0.5,
            dark_rate: 100.0,
            rng_seed: 7,
        }
    }

    fn all_ones_stream(width: u32, height: u32, frame_count: u32) -> BitplaneStream {
        let frame = BinaryFrame::pack(
            &vec![1u8; (width * height) as usize],
            width,
            height,
        )
        .unwrap();
        let mut payload = Vec::new();
        for _ in 0..frame_count {
            payload.extend_from_slice(&frame.bits);
        }
        BitplaneStream::new(test_header(width, height, frame_count), payload).unwrap()
    }

    #[test]
    fn pack_all_zeros_is_zero_bytes() {
        let frame = BinaryFrame::pack(&[0; 8], 8, 1).unwrap();
        assert_eq!(frame.packed_bits(), &[0x00]);
    }

    #[test]
    fn pack_is_msb_first_with_zero_padding() {
        // width 10, all ones: 0b11111111 0b11000000
        let frame = BinaryFrame::pack(&[1; 10], 10, 1).unwrap();
        assert_eq!(frame.packed_bits(), &[0xFF, 0xC0]);
    }

    #[test]
    fn pack_rejects_non_binary_values() {
        assert!(matches!(
            BinaryFrame::pack(&[0, 2], 2, 1),
            Err(BitstreamError::NotBinary(2))
        ));
    }

    #[test]
    fn pack_rejects_wrong_pixel_count() {
        assert!(BinaryFrame::pack(&[0; 7], 8, 1).is_err());
    }

    #[test]
    fn from_packed_rejects_dirty_padding() {
        assert!(matches!(
            BinaryFrame::from_packed(10, 1, vec![0xFF, 0xC1]),
            Err(BitstreamError::NonzeroPadding(0))
        ));
    }

    #[test]
    fn accumulate_all_ones_counts_every_frame() {
        let stream = all_ones_stream(12, 5, 256);
        let ci = accumulate(&stream, 0, 256).unwrap();
        assert_eq!(ci.n_frames(), 256);
        assert!(ci.counts().iter().all(|&c| c == 256));
    }

    #[test]
    fn accumulate_single_frame_equals_its_bits() {
        let pixels: Vec<u8> = (0..20u8).map(|i| i % 2).collect();
        let frame = BinaryFrame::pack(&pixels, 5, 4).unwrap();
        let stream =
            BitplaneStream::new(test_header(5, 4, 1), frame.packed_bits().to_vec()).unwrap();
        let ci = accumulate(&stream, 0, 1).unwrap();
        let counts: Vec<u32> = pixels.iter().map(|&p| u32::from(p)).collect();
        assert_eq!(ci.counts(), &counts[..]);
    }

    #[test]
    fn accumulate_rejects_out_of_range() {
        let stream = all_ones_stream(8, 8, 4);
        assert!(matches!(
            accumulate(&stream, 2, 3),
            Err(BitstreamError::FrameRangeOutOfBounds { .. })
        ));
        assert!(matches!(
            accumulate(&stream, 0, 0),
            Err(BitstreamError::EmptyRange)
        ));
    }

    #[test]
    fn accumulator_survives_lane_flush_boundary() {
        // more than 255 frames forces at least one mid-stream flush
        let stream = all_ones_stream(9, 3, 600);
        let ci = accumulate(&stream, 0, 600).unwrap();
        assert!(ci.counts().iter().all(|&c| c == 600));
    }

    #[test]
    fn to_intensity_examples() {
        let ci = CountImage::new(3, 1, 256, vec![0, 100, 256]).unwrap();
        let img = to_intensity(&ci, 8).unwrap();
        assert_eq!(img.samples()[0], 0);
        // round(100 × 255/256) = round(99.6) = 100
        assert_eq!(img.samples()[1], 100);
        // count 256 over 256 frames clamps into the top code
        assert_eq!(img.samples()[2], 255);

        let ci = CountImage::new(1, 1, 16, vec![8]).unwrap();
        let img = to_intensity(&ci, 4).unwrap();
        // round(8 × 15/16) = round(7.5) = 8
        assert_eq!(img.samples()[0], 8);
    }

    #[test]
    fn to_intensity_is_monotone_and_surjective_at_matched_depth() {
        let counts: Vec<u32> = (0..=16).collect();
        let ci = CountImage::new(17, 1, 16, counts).unwrap();
        let img = to_intensity(&ci, 4).unwrap();
        let samples = img.samples();
        for pair in samples.windows(2) {
            assert!(pair[0] <= pair[1]);
        }
        let mut seen = [false; 16];
        for &s in samples {
            seen[s as usize] = true;
        }
        assert!(seen.iter().all(|&s| s), "not surjective: {samples:?}");
    }

    #[test]
    fn to_intensity_rejects_bad_depth() {
        let ci = CountImage::new(1, 1, 4, vec![1]).unwrap();
        assert!(matches!(
            to_intensity(&ci, 0),
            Err(BitstreamError::InvalidBitDepth(0))
        ));
        assert!(matches!(
            to_intensity(&ci, 17),
            Err(BitstreamError::InvalidBitDepth(17))
        ));
    }

    #[test]
    fn equivalent_exposure_matches_fig3_arithmetic() {
        assert_eq!(equivalent_exposure(8, 5e-6), 1.28e-3);
        assert_eq!(equivalent_exposure(4, 5e-6), 80e-6);
        assert_eq!(equivalent_exposure(1, 3.0), 6.0);
        assert_eq!(binary_exposure_for(8, 1.28e-3), 5e-6);
    }

    #[test]
    fn count_image_rejects_counts_over_frames() {
        assert!(CountImage::new(1, 1, 4, vec![5]).is_err());
    }
}
