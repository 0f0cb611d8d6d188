//! Properties of packing and accumulation: exact round trips, chunk
//! independence, and agreement with an independent popcount pass.

use proptest::prelude::*;
use spadsim_core::bitstream::{accumulate, BinaryFrame, BitplaneStream, StreamHeader};

fn header(width: u32, height: u32, frame_count: u32) -> StreamHeader {
    StreamHeader {
        width,
        height,
        frame_count,
        tau_bin: 1e-5,
        eta: 0.5,
        dark_rate: 0.0,
        rng_seed: 1,
    }
}

fn stream_from_pixel_frames(frames: &[Vec<u8>], width: u32, height: u32) -> BitplaneStream {
    let mut payload = Vec::new();
    for pixels in frames {
        let frame = BinaryFrame::pack(pixels, width, height).unwrap();
        payload.extend_from_slice(frame.packed_bits());
    }
    BitplaneStream::new(header(width, height, frames.len() as u32), payload).unwrap()
}

#[test]
fn pack_round_trips_a_33x17_matrix() {
    let pixels: Vec<u8> = (0..33u32 * 17)
        .map(|i| u8::from(i.wrapping_mul(0x9E37_79B9) >> 31 == 1))
        .collect();
    let frame = BinaryFrame::pack(&pixels, 33, 17).unwrap();
    assert_eq!(frame.unpack(), pixels);
}

#[test]
fn sbs_round_trip_of_a_64x64x100_stream_is_bit_identical() {
    use spadsim_core::photon::SensorConfig;
    use spadsim_core::simulator::{simulate_spad, FluxMap};

    let cfg = SensorConfig::new(0.5, 50.0, 1e-5, 64, 64).unwrap();
    let map = FluxMap::constant(64, 64, 1e5).unwrap();
    let stream = simulate_spad(&map, &cfg, 100, 1).unwrap();

    let mut bytes = Vec::new();
    spadsim_core::bitstream::write_stream_to(&stream, &mut bytes).unwrap();
    let back = spadsim_core::bitstream::read_stream_from(&mut std::io::Cursor::new(&bytes)).unwrap();
    assert_eq!(back, stream);
    let mut again = Vec::new();
    spadsim_core::bitstream::write_stream_to(&back, &mut again).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn accumulation_totals_match_independent_popcount() {
    // deterministic pseudo-pattern, no RNG involved
    let (width, height) = (37, 11);
    let frames: Vec<Vec<u8>> = (0..300u32)
        .map(|f| {
            (0..width * height)
                .map(|i: u32| {
                    u8::from(i.wrapping_mul(2654435761).wrapping_add(f.wrapping_mul(40503)) % 7 < 3)
                })
                .collect()
        })
        .collect();
    let stream = stream_from_pixel_frames(&frames, width, height);

    let popcount_total: u64 = (0..stream.header().frame_count)
        .map(|i| stream.frame(i).ones_count())
        .sum();
    let ci = accumulate(&stream, 0, stream.header().frame_count).unwrap();
    assert_eq!(ci.total_detections(), popcount_total);
    assert!(popcount_total > 0);
}

proptest! {
    #[test]
    fn pack_unpack_round_trip(
        width in 1u32..70,
        height in 1u32..20,
        seed_bits in any::<u64>(),
    ) {
        let mut state = seed_bits | 1;
        let pixels: Vec<u8> = (0..width * height)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                u8::from(state >> 63 == 1)
            })
            .collect();
        let frame = BinaryFrame::pack(&pixels, width, height).unwrap();
        prop_assert_eq!(frame.unpack(), pixels);
        // re-wrapping the packed bytes is identity
        let again = BinaryFrame::from_packed(width, height, frame.packed_bits().to_vec()).unwrap();
        prop_assert_eq!(&again, &frame);
    }

    #[test]
    fn accumulation_is_split_independent(
        width in 1u32..20,
        height in 1u32..10,
        n_frames in 2u32..40,
        split in 1u32..39,
        seed_bits in any::<u64>(),
    ) {
        prop_assume!(split < n_frames);
        let mut state = seed_bits | 1;
        let frames: Vec<Vec<u8>> = (0..n_frames)
            .map(|_| {
                (0..width * height)
                    .map(|_| {
                        state = state
                            .wrapping_mul(6364136223846793005)
                            .wrapping_add(1442695040888963407);
                        u8::from(state >> 63 == 1)
                    })
                    .collect()
            })
            .collect();
        let stream = stream_from_pixel_frames(&frames, width, height);

        let whole = accumulate(&stream, 0, n_frames).unwrap();
        let head = accumulate(&stream, 0, split).unwrap();
        let tail = accumulate(&stream, split, n_frames - split).unwrap();
        for ((&w, &h), &t) in whole.counts().iter().zip(head.counts()).zip(tail.counts()) {
            prop_assert_eq!(w, h + t);
        }
        prop_assert_eq!(whole.n_frames(), head.n_frames() + tail.n_frames());
    }
}
