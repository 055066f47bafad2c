//! Seeded operand streams shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spade_core::{Mode, PositFormat, PositWord, SimdWord};

/// `count` random (a, b) SIMD word pairs with NaR lanes removed.
pub fn operand_stream(mode: Mode, count: usize, seed: u64) -> Vec<(SimdWord, SimdWord)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut word = || {
        let lanes: Vec<u32> = (0..mode.lanes())
            .map(|_| {
                let w = PositWord::from_bits_truncate(rng.gen(), mode.format());
                if w.is_nar() {
                    0
                } else {
                    w.bits()
                }
            })
            .collect();
        SimdWord::from_lanes(mode, &lanes).expect("lane values fit")
    };
    (0..count).map(|_| (word(), word())).collect()
}

/// Scalar pairs for the oracle.
pub fn scalar_pairs(format: PositFormat, count: usize, seed: u64) -> Vec<(PositWord, PositWord)> {
    operand_stream(Mode::for_format(format), count, seed)
        .into_iter()
        .map(|(a, b)| {
            let mode = Mode::for_format(format);
            (a.words(mode)[0], b.words(mode)[0])
        })
        .collect()
}
