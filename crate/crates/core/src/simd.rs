//! Precision-configurable datapath blocks: complementor, leading-one
//! detector, logarithmic barrel shifter and partitioned multiplier.
//!
//! All four operate on a 32-bit [`SimdWord`] split into 4, 2 or 1 lanes by
//! [`Mode`]. Lane 0 sits in the least significant bits. Carries, shifted-out
//! bits and partial products never cross a lane boundary.

use std::fmt;
use std::str::FromStr;

use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::posit::{PositFormat, PositWord};

pub const MAX_LANES: usize = 4;

pub type PerLane<T> = ArrayVec<T, MAX_LANES>;

/// The 2-bit precision selector: `00` = 4 x P8, `01` = 2 x P16, `10` = 1 x P32.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    P8,
    P16,
    P32,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::P8, Mode::P16, Mode::P32];

    /// Decodes the MODE field; `11` is reserved.
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0b00 => Ok(Mode::P8),
            0b01 => Ok(Mode::P16),
            0b10 => Ok(Mode::P32),
            other => Err(Error::InvalidMode(other)),
        }
    }

    pub const fn code(self) -> u8 {
        match self {
            Mode::P8 => 0b00,
            Mode::P16 => 0b01,
            Mode::P32 => 0b10,
        }
    }

    pub const fn lanes(self) -> usize {
        match self {
            Mode::P8 => 4,
            Mode::P16 => 2,
            Mode::P32 => 1,
        }
    }

    pub const fn lane_width(self) -> u32 {
        32 / self.lanes() as u32
    }

    pub const fn format(self) -> PositFormat {
        match self {
            Mode::P8 => PositFormat::P8,
            Mode::P16 => PositFormat::P16,
            Mode::P32 => PositFormat::P32,
        }
    }

    pub const fn for_format(format: PositFormat) -> Self {
        match format {
            PositFormat::P8 => Mode::P8,
            PositFormat::P16 => Mode::P16,
            PositFormat::P32 => Mode::P32,
        }
    }

    /// Mask covering lane `lane`.
    const fn lane_bits(self, lane: usize) -> u32 {
        let width = self.lane_width();
        let low = if width == 32 { u32::MAX } else { (1 << width) - 1 };
        low << (lane as u32 * width)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.format().short_name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "00" => Ok(Mode::P8),
            "01" => Ok(Mode::P16),
            "10" => Ok(Mode::P32),
            "11" => Err(Error::InvalidMode(0b11)),
            other => other.parse::<PositFormat>().map(Mode::for_format),
        }
    }
}

/// A 32-bit lane container.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SimdWord(pub u32);

impl SimdWord {
    pub const ZERO: SimdWord = SimdWord(0);

    pub const fn lane(self, mode: Mode, lane: usize) -> u32 {
        (self.0 & mode.lane_bits(lane)) >> (lane as u32 * mode.lane_width())
    }

    /// Replaces one lane; `value` is truncated to the lane width.
    pub const fn with_lane(self, mode: Mode, lane: usize, value: u32) -> Self {
        let mask = mode.lane_bits(lane);
        SimdWord((self.0 & !mask) | ((value << (lane as u32 * mode.lane_width())) & mask))
    }

    pub fn lanes(self, mode: Mode) -> PerLane<u32> {
        (0..mode.lanes()).map(|l| self.lane(mode, l)).collect()
    }

    pub fn from_lanes(mode: Mode, values: &[u32]) -> Result<Self> {
        check_lane_count(mode, values.len())?;
        Ok(values
            .iter()
            .enumerate()
            .fold(SimdWord::ZERO, |w, (l, &v)| w.with_lane(mode, l, v)))
    }

    pub fn from_words(mode: Mode, words: &[PositWord]) -> Result<Self> {
        check_lane_count(mode, words.len())?;
        let mut packed = SimdWord::ZERO;
        for (lane, word) in words.iter().enumerate() {
            if word.format() != mode.format() {
                return Err(Error::FormatMismatch {
                    expected: mode.format(),
                    found: word.format(),
                });
            }
            packed = packed.with_lane(mode, lane, word.bits());
        }
        Ok(packed)
    }

    pub fn words(self, mode: Mode) -> PerLane<PositWord> {
        (0..mode.lanes())
            .map(|l| PositWord::from_bits_truncate(self.lane(mode, l), mode.format()))
            .collect()
    }

    pub fn from_hex(text: &str) -> Result<Self> {
        let text = text.trim();
        let digits = text.strip_prefix("0x").unwrap_or(text);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::MalformedHex(text.to_string()));
        }
        if digits.len() != 8 {
            return Err(Error::parse(
                "simd word",
                format!("expected 8 hex digits, got {}", digits.len()),
            ));
        }
        u32::from_str_radix(digits, 16)
            .map(SimdWord)
            .map_err(|_| Error::MalformedHex(text.to_string()))
    }
}

impl fmt::Display for SimdWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}", self.0)
    }
}

impl fmt::Debug for SimdWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SimdWord({:08x})", self.0)
    }
}

fn check_lane_count(mode: Mode, found: usize) -> Result<()> {
    if found != mode.lanes() {
        return Err(Error::LaneCount {
            expected: mode.lanes(),
            found,
        });
    }
    Ok(())
}

/// One flag per lane, bit `i` for lane `i`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LaneMask(u8);

impl LaneMask {
    pub const NONE: LaneMask = LaneMask(0);

    pub const fn all(mode: Mode) -> Self {
        LaneMask((1 << mode.lanes()) - 1)
    }

    pub fn new(bits: u8, mode: Mode) -> Result<Self> {
        let mask = LaneMask(bits);
        mask.check(mode)?;
        Ok(mask)
    }

    pub fn from_flags(flags: &[bool]) -> Self {
        LaneMask(
            flags
                .iter()
                .enumerate()
                .fold(0, |m, (i, &f)| m | ((f as u8) << i)),
        )
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, lane: usize) -> bool {
        self.0 & (1 << lane) != 0
    }

    pub const fn with(self, lane: usize, on: bool) -> Self {
        if on {
            LaneMask(self.0 | (1 << lane))
        } else {
            LaneMask(self.0 & !(1 << lane))
        }
    }

    pub fn check(self, mode: Mode) -> Result<()> {
        if self.0 & !LaneMask::all(mode).0 != 0 {
            return Err(Error::LaneMask { mask: self.0, mode });
        }
        Ok(())
    }
}

impl fmt::Debug for LaneMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LaneMask({:04b})", self.0)
    }
}

/// Two's-complements the lanes selected by `negate`.
///
/// Modeled as a byte-sliced increment chain: each byte inverts when its lane
/// is negated and adds the carry from the byte below, except at a lane
/// boundary where the carry-in is forced to the lane's own `+1`.
pub fn simd_complement(x: SimdWord, negate: LaneMask, mode: Mode) -> Result<SimdWord> {
    negate.check(mode)?;
    let width = mode.lane_width();
    let mut out = 0u32;
    let mut carry = 0u32;
    for byte in 0..4u32 {
        let lane = (byte * 8 / width) as usize;
        let neg = negate.contains(lane);
        if (byte * 8) % width == 0 {
            carry = neg as u32;
        }
        let mut slice = (x.0 >> (8 * byte)) & 0xff;
        if neg {
            slice = !slice & 0xff;
        }
        let sum = slice + carry;
        out |= (sum & 0xff) << (8 * byte);
        carry = sum >> 8;
    }
    Ok(SimdWord(out))
}

/// Leading-one position within a lane, counted from the lane MSB.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Lod {
    pub position: u32,
    pub valid: bool,
}

fn byte_lod(byte: u32) -> Lod {
    Lod {
        position: (byte as u8).leading_zeros(),
        valid: byte != 0,
    }
}

/// Leading-one detection per lane. Four 8-bit detectors are combined
/// hierarchically: a wider lane takes the result of its most significant
/// non-empty byte, offset by the bytes above it.
pub fn simd_lod(x: SimdWord, mode: Mode) -> PerLane<Lod> {
    let bytes: [Lod; 4] = std::array::from_fn(|b| byte_lod((x.0 >> (8 * b)) & 0xff));
    let per_lane = mode.lane_width() as usize / 8;
    (0..mode.lanes())
        .map(|lane| {
            let lo = lane * per_lane;
            (lo..lo + per_lane)
                .rev()
                .enumerate()
                .find(|(_, b)| bytes[*b].valid)
                .map(|(above, b)| Lod {
                    position: bytes[b].position + 8 * above as u32,
                    valid: true,
                })
                .unwrap_or_default()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShiftDir {
    Left,
    RightArithmetic,
}

/// Per-lane barrel shift built from `log2(lane_width)` power-of-two stages.
/// Stage `s` shifts the lanes whose amount has bit `s` set by `2^s`.
pub fn simd_shift(x: SimdWord, amounts: &[u32], dir: ShiftDir, mode: Mode) -> Result<SimdWord> {
    check_lane_count(mode, amounts.len())?;
    let width = mode.lane_width();
    if let Some(&amount) = amounts.iter().find(|&&a| a >= width) {
        return Err(Error::ShiftOutOfRange { amount, width });
    }
    let mut word = x.0;
    for stage in 0..width.trailing_zeros() {
        let step = 1u32 << stage;
        let selected = amounts
            .iter()
            .enumerate()
            .filter(|(_, &a)| a & step != 0)
            .fold(0, |m, (lane, _)| m | mode.lane_bits(lane));
        if selected != 0 {
            word = shift_stage(word, step, selected, dir, mode);
        }
    }
    Ok(SimdWord(word))
}

/// One stage: the whole word moves by `step`, the bits that crossed a lane
/// boundary are cut off, and only the `selected` lane bits take the result.
fn shift_stage(word: u32, step: u32, selected: u32, dir: ShiftDir, mode: Mode) -> u32 {
    let width = mode.lane_width();
    let fill = (1u32 << step) - 1;
    let mut edge = 0u32;
    let mut sign_fill = 0u32;
    for lane in 0..mode.lanes() as u32 {
        let base = lane * width;
        match dir {
            ShiftDir::Left => edge |= fill << base,
            ShiftDir::RightArithmetic => {
                let top = fill << (base + width - step);
                edge |= top;
                if word & (1 << (base + width - 1)) != 0 {
                    sign_fill |= top;
                }
            }
        }
    }
    let moved = match dir {
        ShiftDir::Left => (word << step) & !edge,
        ShiftDir::RightArithmetic => ((word >> step) & !edge) | sign_fill,
    };
    (word & !selected) | (moved & selected)
}

/// 8 x 8 partial product of byte `i` of `a` and byte `j` of `b`.
fn partial_product(a: u32, b: u32, i: u32, j: u32) -> u64 {
    (((a >> (8 * i)) & 0xff) * ((b >> (8 * j)) & 0xff)) as u64
}

/// Unsigned per-lane widening multiply from a bank of 8 x 8 multipliers.
///
/// P8 uses the four diagonal partial products as independent lanes. P16
/// aggregates four partial products per lane; P32 aggregates all sixteen.
/// Each product is `2 * lane_width` bits wide.
pub fn simd_multiply(a: SimdWord, b: SimdWord, mode: Mode) -> PerLane<u64> {
    let per_lane = mode.lane_width() / 8;
    (0..mode.lanes() as u32)
        .map(|lane| {
            let lo = lane * per_lane;
            let mut acc = 0u64;
            for i in lo..lo + per_lane {
                for j in lo..lo + per_lane {
                    acc += partial_product(a.0, b.0, i, j) << (8 * ((i - lo) + (j - lo)));
                }
            }
            acc
        })
        .collect()
}
