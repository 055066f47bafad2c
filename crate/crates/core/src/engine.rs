//! The five-stage multi-precision MAC datapath.
//!
//! One [`Engine::issue`] retires one MAC per lane: unpack both operands with
//! the SIMD complementor, leading-one detector and shifter, multiply the
//! fraction registers on the partitioned multiplier, and accumulate into the
//! lane's quire. [`Engine::readout`] normalizes and rounds every lane quire
//! without clearing it.
//!
//! The lane quires live in one 512-bit register file: 4 x 32 bits in P8
//! mode, 2 x 128 in P16 and a single 512-bit quire in P32.

use crate::error::Result;
use crate::posit::{DecodedPosit, Packed, PositClass, PositWord};
use crate::quire::{Normalized, Quire, QUIRE_LIMBS};
use crate::simd::{
    simd_complement, simd_lod, simd_multiply, simd_shift, LaneMask, Mode, PerLane, ShiftDir, SimdWord, MAX_LANES,
};
use crate::trace::{LaneTrace, MacTrace};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Engine {
    mode: Mode,
    bank: [u64; QUIRE_LIMBS],
    nar: LaneMask,
    wrapped: LaneMask,
    issue_count: u64,
}

impl Engine {
    pub fn new(mode: Mode) -> Self {
        Engine {
            mode,
            bank: [0; QUIRE_LIMBS],
            nar: LaneMask::NONE,
            wrapped: LaneMask::NONE,
            issue_count: 0,
        }
    }

    /// Builds an engine from a raw 2-bit MODE code; `11` is rejected.
    pub fn from_code(code: u8) -> Result<Self> {
        Mode::from_code(code).map(Engine::new)
    }

    pub const fn mode(&self) -> Mode {
        self.mode
    }

    pub const fn issue_count(&self) -> u64 {
        self.issue_count
    }

    pub const fn lanes(&self) -> usize {
        self.mode.lanes()
    }

    /// Switches precision. All quires are cleared; the issue counter is kept.
    pub fn set_mode(&mut self, mode: Mode) {
        let issues = self.issue_count;
        *self = Engine::new(mode);
        self.issue_count = issues;
    }

    /// Clears every lane quire.
    pub fn reset(&mut self) {
        self.set_mode(self.mode);
    }

    /// Lanes that have wrapped their quire since the last reset.
    pub const fn wrapped_lanes(&self) -> LaneMask {
        self.wrapped
    }

    /// Snapshot of one lane's quire.
    pub fn quire(&self, lane: usize) -> Quire {
        assert!(lane < self.lanes(), "lane {lane} out of range for {}", self.mode);
        let format = self.mode.format();
        let mut raw = [0u64; QUIRE_LIMBS];
        match self.mode {
            Mode::P8 => raw[0] = (self.bank[lane / 2] >> (32 * (lane % 2))) & 0xffff_ffff,
            Mode::P16 => raw[..2].copy_from_slice(&self.bank[2 * lane..2 * lane + 2]),
            Mode::P32 => raw = self.bank,
        }
        Quire::from_raw(format, raw, self.nar.contains(lane))
    }

    pub fn quires(&self) -> Vec<Quire> {
        (0..self.lanes()).map(|l| self.quire(l)).collect()
    }

    fn store(&mut self, lane: usize, quire: &Quire) {
        let raw = quire.raw();
        match self.mode {
            Mode::P8 => {
                let shift = 32 * (lane % 2);
                let limb = &mut self.bank[lane / 2];
                *limb = (*limb & !(0xffff_ffff << shift)) | (raw[0] << shift);
            }
            Mode::P16 => self.bank[2 * lane..2 * lane + 2].copy_from_slice(&raw[..2]),
            Mode::P32 => self.bank = raw,
        }
        self.nar = self.nar.with(lane, quire.is_nar());
        if quire.wrapped() {
            self.wrapped = self.wrapped.with(lane, true);
        }
    }

    /// Stages 1-3 for every lane, without recording a trace.
    pub fn accumulate(&mut self, a: SimdWord, b: SimdWord, enables: LaneMask) -> Result<()> {
        enables.check(self.mode)?;
        let ops_a = unpack(a, self.mode);
        let ops_b = unpack(b, self.mode);
        let products = multiply(&ops_a, &ops_b, self.mode);
        for lane in 0..self.lanes() {
            if !enables.contains(lane) {
                continue;
            }
            let q = accumulate_lane(self.quire(lane), &ops_a[lane], &ops_b[lane], products[lane]);
            self.store(lane, &q);
        }
        self.issue_count += 1;
        Ok(())
    }

    /// Stages 1-3, returning a per-stage record. Stages 4 and 5 in the record
    /// show what a readout right after this issue produces.
    pub fn issue(&mut self, a: SimdWord, b: SimdWord, enables: LaneMask) -> Result<MacTrace> {
        enables.check(self.mode)?;
        let ops_a = unpack(a, self.mode);
        let ops_b = unpack(b, self.mode);
        let products = multiply(&ops_a, &ops_b, self.mode);
        let mut lanes = PerLane::new();
        for lane in 0..self.lanes() {
            let mut q = self.quire(lane);
            if enables.contains(lane) {
                q = accumulate_lane(q, &ops_a[lane], &ops_b[lane], products[lane]);
                self.store(lane, &q);
            }
            let (normalized, packed) = q.to_posit_detailed();
            lanes.push(LaneTrace {
                operands: (ops_a[lane], ops_b[lane]),
                product: products[lane],
                quire: q,
                normalized,
                packed,
            });
        }
        let trace = MacTrace {
            issue: self.issue_count,
            mode: self.mode,
            a,
            b,
            enables,
            lanes,
        };
        self.issue_count += 1;
        Ok(trace)
    }

    /// Stages 4-5: every lane quire normalized, rounded and packed. The
    /// quires are left as they are.
    pub fn readout(&self) -> SimdWord {
        self.readout_detailed()
            .iter()
            .enumerate()
            .fold(SimdWord::ZERO, |w, (lane, (_, packed))| {
                w.with_lane(self.mode, lane, packed.word.bits())
            })
    }

    pub fn readout_detailed(&self) -> PerLane<(Normalized, Packed)> {
        (0..self.lanes())
            .map(|lane| self.quire(lane).to_posit_detailed())
            .collect()
    }

    /// Loads `c` into the quires as the exact products `c * 1.0`.
    pub fn seed(&mut self, c: SimdWord) -> Result<()> {
        let ones = splat(PositWord::one(self.mode.format()), self.mode);
        self.accumulate(c, ones, LaneMask::all(self.mode))
    }
}

/// `a * b + c` per lane on a fresh engine.
pub fn mac_once(mode: Mode, a: SimdWord, b: SimdWord, c: SimdWord) -> Result<SimdWord> {
    let mut engine = Engine::new(mode);
    engine.seed(c)?;
    engine.accumulate(a, b, LaneMask::all(mode))?;
    Ok(engine.readout())
}

/// The same word in every lane.
pub fn splat(word: PositWord, mode: Mode) -> SimdWord {
    (0..mode.lanes()).fold(SimdWord::ZERO, |w, lane| w.with_lane(mode, lane, word.bits()))
}

/// Stage 1: unpack every lane of `x` into sign, regime, exponent and
/// fraction using the SIMD complementor, leading-one detector and shifter.
pub fn unpack(x: SimdWord, mode: Mode) -> PerLane<DecodedPosit> {
    const ONES: [u32; MAX_LANES] = [1; MAX_LANES];
    let format = mode.format();
    let lanes = mode.lanes();
    let n = mode.lane_width();
    let es = format.es();

    let negative = (0..lanes).fold(LaneMask::NONE, |m, lane| {
        m.with(lane, x.lane(mode, lane) & format.sign_bit() != 0)
    });
    let magnitude = simd_complement(x, negative, mode).expect("mask built for this mode");
    let ones = &ONES[..lanes];
    let body = simd_shift(magnitude, ones, ShiftDir::Left, mode).expect("amount below lane width");

    // Invert lanes whose regime is a run of ones so the detector finds the
    // terminating zero; the zero shifted in at the bottom acts as a sentinel.
    let mut probe = body;
    for lane in 0..lanes {
        let v = body.lane(mode, lane);
        if v >> (n - 1) == 1 {
            probe = probe.with_lane(mode, lane, !v);
        }
    }
    let mut runs = [0u32; MAX_LANES];
    for (run, lod) in runs.iter_mut().zip(simd_lod(probe, mode)) {
        *run = if lod.valid { lod.position } else { 0 };
    }
    let rest = simd_shift(body, &runs[..lanes], ShiftDir::Left, mode).expect("run below lane width");
    let rest = simd_shift(rest, ones, ShiftDir::Left, mode).expect("amount below lane width");

    let lane_mask = format.mask();
    let nar = format.sign_bit();
    let mut out = PerLane::new();
    for lane in 0..lanes {
        let word = x.lane(mode, lane);
        out.push(if word == 0 {
            DecodedPosit::zero(format)
        } else if word == nar {
            DecodedPosit::nar(format)
        } else {
            let run = runs[lane] as i32;
            let k = if body.lane(mode, lane) >> (n - 1) == 1 {
                run - 1
            } else {
                -run
            };
            let fields = rest.lane(mode, lane);
            let e = if es == 0 { 0 } else { fields >> (n - es) };
            let frac_field = (fields << es) & lane_mask;
            DecodedPosit {
                format,
                class: PositClass::Normal,
                sign: negative.contains(lane),
                k,
                e,
                frac: (1 << (n - 2)) | (frac_field >> 2),
                sf: (k << es) + e as i32,
            }
        });
    }
    out
}

/// Stage 2: fraction registers through the partitioned multiplier.
pub fn multiply(a: &[DecodedPosit], b: &[DecodedPosit], mode: Mode) -> PerLane<u64> {
    let pack = |ops: &[DecodedPosit]| {
        ops.iter()
            .enumerate()
            .fold(SimdWord::ZERO, |w, (lane, d)| w.with_lane(mode, lane, d.frac))
    };
    simd_multiply(pack(a), pack(b), mode)
}

/// Stage 3 for one lane: NaR poisons the quire, zero adds nothing, anything
/// else adds the aligned, sign-applied product.
pub fn accumulate_lane(mut quire: Quire, a: &DecodedPosit, b: &DecodedPosit, product: u64) -> Quire {
    match (a.class, b.class) {
        (PositClass::NaR, _) | (_, PositClass::NaR) => {
            quire = Quire::from_raw(quire.format(), quire.raw(), true);
        }
        (PositClass::Zero, _) | (_, PositClass::Zero) => {}
        _ => quire.accumulate_product(a.sign != b.sign, a.sf + b.sf, product),
    }
    quire
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn lanes8(values: [u32; 4]) -> SimdWord {
        SimdWord::from_lanes(Mode::P8, &values).unwrap()
    }

    #[test]
    fn fresh_engines() {
        let e = Engine::new(Mode::P8);
        assert_eq!(e.quires().len(), 4);
        assert!(e.quires().iter().all(Quire::is_zero));
        let e = Engine::new(Mode::P32);
        assert_eq!(e.quires().len(), 1);
        assert_eq!(e.quire(0).width(), 512);
        assert!(Engine::from_code(0b11).is_err());
        assert_eq!(Engine::new(Mode::P16).readout(), SimdWord::ZERO);
    }

    #[test]
    fn unpack_matches_scalar_decode_exhaustively_for_p8() {
        for bits in 0..256u32 {
            let x = lanes8([bits, bits ^ 0x5a, bits.wrapping_mul(37) & 0xff, 0x80]);
            let decoded = unpack(x, Mode::P8);
            for (lane, w) in x.words(Mode::P8).iter().enumerate() {
                assert_eq!(decoded[lane], w.decode(), "{w:?}");
            }
        }
    }

    #[test]
    fn unpack_matches_scalar_decode_for_all_p16() {
        for bits in 0..=0xffffu32 {
            let x = SimdWord(bits | ((bits ^ 0xffff) << 16));
            let decoded = unpack(x, Mode::P16);
            for (lane, w) in x.words(Mode::P16).iter().enumerate() {
                assert_eq!(decoded[lane], w.decode(), "{w:?}");
            }
        }
    }

    #[test]
    fn bypass_counts_the_issue_only() {
        let mut e = Engine::new(Mode::P8);
        e.accumulate(lanes8([0x60; 4]), lanes8([0x68; 4]), LaneMask::NONE).unwrap();
        assert_eq!(e.issue_count(), 1);
        assert!(e.quires().iter().all(Quire::is_zero));
    }

    #[test]
    fn lane_zero_product() {
        let mut e = Engine::new(Mode::P8);
        e.accumulate(lanes8([0x60, 0, 0, 0]), lanes8([0x68, 0, 0, 0]), LaneMask::all(Mode::P8))
            .unwrap();
        assert_eq!(e.quire(0).to_rational(), BigRational::from_integer(BigInt::from(6)));
        assert!(e.quire(1).is_zero() && e.quire(2).is_zero() && e.quire(3).is_zero());
        assert_eq!(e.readout().0, 0x0000_0074);
        // readout does not consume the quire
        assert_eq!(e.readout().0, 0x0000_0074);
    }

    #[test]
    fn p32_identity() {
        let mut e = Engine::new(Mode::P32);
        e.accumulate(SimdWord(0x4000_0000), SimdWord(0x4000_0000), LaneMask::all(Mode::P32))
            .unwrap();
        assert_eq!(e.quire(0).to_rational(), BigRational::from_integer(BigInt::from(1)));
    }

    #[test]
    fn nar_stays_in_its_lane() {
        let mut e = Engine::new(Mode::P8);
        e.accumulate(lanes8([0x40, 0x80, 0x40, 0x40]), lanes8([0x40; 4]), LaneMask::all(Mode::P8))
            .unwrap();
        assert_eq!(e.readout().0, 0x4040_8040);
    }

    #[test]
    fn mac_once_examples() {
        let c = lanes8([0x40, 0x81, 0x01, 0x74]);
        assert_eq!(mac_once(Mode::P8, SimdWord::ZERO, lanes8([0x7f; 4]), c).unwrap(), c);
        let r = mac_once(Mode::P8, lanes8([0x64, 0, 0, 0]), lanes8([0x64, 0, 0, 0]), SimdWord::ZERO)
            .unwrap();
        assert_eq!(r.lane(Mode::P8, 0), 0x74);
        let r = mac_once(Mode::P16, SimdWord(0x4000_4000), SimdWord(0x4000_4000), SimdWord::ZERO)
            .unwrap();
        assert_eq!(r.0, 0x4000_4000);
    }

    #[test]
    fn mode_switch_clears_quires() {
        let mut e = Engine::new(Mode::P16);
        e.accumulate(SimdWord(0x4000_4000), SimdWord(0x4000_4000), LaneMask::all(Mode::P16))
            .unwrap();
        e.set_mode(Mode::P8);
        assert_eq!(e.issue_count(), 1);
        assert_eq!(e.lanes(), 4);
        assert!(e.quires().iter().all(Quire::is_zero));
    }

    #[test]
    fn register_file_partitions_do_not_overlap() {
        let mut e = Engine::new(Mode::P8);
        let maxpos = lanes8([0x7f, 0x01, 0x81, 0xff]);
        e.accumulate(maxpos, maxpos, LaneMask::all(Mode::P8)).unwrap();
        let readout = e.readout();
        // maxpos^2 saturates, minpos^2 rounds to zero at the boundary below minpos
        assert_eq!(readout.0, 0x007f_007f);
        assert_eq!(e.quire(2).to_bigint(), BigInt::from(1) << 24);
        assert_eq!(e.quire(3).to_bigint(), BigInt::from(1));
        assert!(LaneMask::new(0x10, Mode::P8).is_err());
    }
}
