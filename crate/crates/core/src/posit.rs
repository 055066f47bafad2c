//! Scalar Posit(n, es) words for the three supported formats.
//!
//! A word is an `n`-bit two's-complement pattern. Negative values are stored
//! as the two's complement of the positive encoding, so the sign bit selects
//! whether the pattern must be complemented before the regime, exponent and
//! fraction fields are read.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// One of the three supported `(n, es)` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PositFormat {
    /// Posit(8,0)
    P8,
    /// Posit(16,1)
    P16,
    /// Posit(32,2)
    P32,
}

impl PositFormat {
    pub const ALL: [PositFormat; 3] = [PositFormat::P8, PositFormat::P16, PositFormat::P32];

    /// Word width `n` in bits.
    pub const fn n(self) -> u32 {
        match self {
            PositFormat::P8 => 8,
            PositFormat::P16 => 16,
            PositFormat::P32 => 32,
        }
    }

    /// Exponent field width `es`.
    pub const fn es(self) -> u32 {
        match self {
            PositFormat::P8 => 0,
            PositFormat::P16 => 1,
            PositFormat::P32 => 2,
        }
    }

    /// Largest scale factor, `(n - 2) * 2^es`. The smallest is its negation.
    pub const fn sf_max(self) -> i32 {
        ((self.n() - 2) << self.es()) as i32
    }

    pub const fn sf_min(self) -> i32 {
        -self.sf_max()
    }

    /// Width `F = n - 1` of the fraction register, hidden bit included.
    pub const fn frac_width(self) -> u32 {
        self.n() - 1
    }

    pub const fn mask(self) -> u32 {
        if self.n() == 32 {
            u32::MAX
        } else {
            (1 << self.n()) - 1
        }
    }

    pub const fn sign_bit(self) -> u32 {
        1 << (self.n() - 1)
    }

    pub const fn maxpos_bits(self) -> u32 {
        self.sign_bit() - 1
    }

    pub const fn hex_digits(self) -> usize {
        (self.n() / 4) as usize
    }

    /// Quire width `2^(es+2) * (n-2) + 1 + (n-1)`: 32, 128 and 512 bits.
    pub const fn quire_width(self) -> u32 {
        (1 << (self.es() + 2)) * (self.n() - 2) + 1 + (self.n() - 1)
    }

    /// Short lowercase name used on the command line and in text files.
    pub const fn short_name(self) -> &'static str {
        match self {
            PositFormat::P8 => "p8",
            PositFormat::P16 => "p16",
            PositFormat::P32 => "p32",
        }
    }
}

impl fmt::Display for PositFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Posit({},{})", self.n(), self.es())
    }
}

impl FromStr for PositFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p8" | "posit8" | "8" => Ok(PositFormat::P8),
            "p16" | "posit16" | "16" => Ok(PositFormat::P16),
            "p32" | "posit32" | "32" => Ok(PositFormat::P32),
            other => Err(Error::parse(
                "format",
                format!("unknown format `{other}` (expected p8, p16 or p32)"),
            )),
        }
    }
}

/// An `n`-bit posit pattern tagged with its format. Upper bits are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PositWord {
    bits: u32,
    format: PositFormat,
}

impl PositWord {
    pub fn new(bits: u32, format: PositFormat) -> Result<Self> {
        if bits & !format.mask() != 0 {
            return Err(Error::PatternTooWide {
                bits: bits as u64,
                format,
            });
        }
        Ok(Self { bits, format })
    }

    /// Keeps only the low `n` bits of `bits`.
    pub const fn from_bits_truncate(bits: u32, format: PositFormat) -> Self {
        Self {
            bits: bits & format.mask(),
            format,
        }
    }

    pub const fn zero(format: PositFormat) -> Self {
        Self { bits: 0, format }
    }

    pub const fn nar(format: PositFormat) -> Self {
        Self {
            bits: format.sign_bit(),
            format,
        }
    }

    pub const fn one(format: PositFormat) -> Self {
        Self {
            bits: format.sign_bit() >> 1,
            format,
        }
    }

    pub const fn maxpos(format: PositFormat) -> Self {
        Self {
            bits: format.maxpos_bits(),
            format,
        }
    }

    pub const fn minpos(format: PositFormat) -> Self {
        Self { bits: 1, format }
    }

    pub const fn bits(self) -> u32 {
        self.bits
    }

    pub const fn format(self) -> PositFormat {
        self.format
    }

    pub const fn is_zero(self) -> bool {
        self.bits == 0
    }

    pub const fn is_nar(self) -> bool {
        self.bits == self.format.sign_bit()
    }

    /// True for every pattern with the sign bit set except NaR.
    pub const fn is_negative(self) -> bool {
        self.bits & self.format.sign_bit() != 0 && !self.is_nar()
    }

    /// Two's-complement negation. Zero and NaR map to themselves.
    pub const fn neg(self) -> Self {
        Self::from_bits_truncate(self.bits.wrapping_neg(), self.format)
    }

    /// The pattern read as a sign-extended `n`-bit integer. Posit order on
    /// non-NaR values coincides with integer order on these.
    pub const fn as_signed(self) -> i32 {
        let shift = 32 - self.format.n();
        ((self.bits << shift) as i32) >> shift
    }

    pub fn from_hex(format: PositFormat, text: &str) -> Result<Self> {
        let text = text.trim();
        let digits = text
            .strip_prefix("0x")
            .or_else(|| text.strip_prefix("0X"))
            .unwrap_or(text);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::MalformedHex(text.to_string()));
        }
        if digits.len() != format.hex_digits() {
            return Err(Error::WrongWidth {
                format,
                expected: format.hex_digits(),
                found: digits.len(),
            });
        }
        let bits =
            u32::from_str_radix(digits, 16).map_err(|_| Error::MalformedHex(text.to_string()))?;
        Self::new(bits, format)
    }

    /// Unpacks sign, regime, exponent and fraction.
    pub fn decode(self) -> DecodedPosit {
        let format = self.format;
        if self.is_zero() {
            return DecodedPosit::zero(format);
        }
        if self.is_nar() {
            return DecodedPosit::nar(format);
        }
        let n = format.n();
        let es = format.es();
        let sign = self.bits & format.sign_bit() != 0;
        let magnitude = if sign {
            self.bits.wrapping_neg() & format.mask()
        } else {
            self.bits
        };

        // Left-align the n-1 bits after the sign at the top of a u64.
        let body = (magnitude as u64) << (64 - n + 1);
        let leading_ones = body >> 63 == 1;
        let run = if leading_ones {
            (!body).leading_zeros()
        } else {
            body.leading_zeros()
        };
        let k = if leading_ones {
            run as i32 - 1
        } else {
            -(run as i32)
        };
        // Drop the run and its terminator; both shifts stay below 64.
        let rest = (body << run) << 1;
        let e = if es == 0 { 0 } else { (rest >> (64 - es)) as u32 };
        let frac_field = rest << es;
        let f = format.frac_width();
        let frac = (1u32 << (f - 1)) | (frac_field >> (64 - (f - 1))) as u32;
        DecodedPosit {
            format,
            class: PositClass::Normal,
            sign,
            k,
            e,
            frac,
            sf: (k << es) + e as i32,
        }
    }

    /// Exact value `(-1)^s * 2^sf * 1.f`. NaR has none.
    pub fn to_real(self) -> Result<BigRational> {
        self.decode().to_real()
    }

    /// Exact for all three formats: at most 28 significant bits and a scale
    /// within +-120 fit a double.
    pub fn to_f64(self) -> f64 {
        let d = self.decode();
        match d.class {
            PositClass::Zero => 0.0,
            PositClass::NaR => f64::NAN,
            PositClass::Normal => {
                let shift = d.sf - (self.format.frac_width() as i32 - 1);
                let magnitude = d.frac as f64 * 2f64.powi(shift);
                if d.sign {
                    -magnitude
                } else {
                    magnitude
                }
            }
        }
    }
}

impl fmt::Display for PositWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$x}", self.bits, width = self.format.hex_digits())
    }
}

impl fmt::Debug for PositWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.format.short_name(), self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PositClass {
    Zero,
    NaR,
    Normal,
}

/// Unpacked posit fields.
///
/// `frac` is `F = n - 1` bits wide with the hidden bit explicit at position
/// `F - 1`; fraction bits the regime pushed out of the word read as zero.
/// For `Zero` and `NaR` every numeric field is zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DecodedPosit {
    pub format: PositFormat,
    pub class: PositClass,
    pub sign: bool,
    pub k: i32,
    pub e: u32,
    pub frac: u32,
    pub sf: i32,
}

impl DecodedPosit {
    pub const fn zero(format: PositFormat) -> Self {
        Self {
            format,
            class: PositClass::Zero,
            sign: false,
            k: 0,
            e: 0,
            frac: 0,
            sf: 0,
        }
    }

    pub const fn nar(format: PositFormat) -> Self {
        Self {
            class: PositClass::NaR,
            ..Self::zero(format)
        }
    }

    pub const fn is_normal(&self) -> bool {
        matches!(self.class, PositClass::Normal)
    }

    /// Packs the fields back into a word. Exact for anything produced by
    /// [`PositWord::decode`]; fields that do not fit are rounded to nearest
    /// even.
    pub fn encode(&self) -> PositWord {
        match self.class {
            PositClass::Zero => PositWord::zero(self.format),
            PositClass::NaR => PositWord::nar(self.format),
            PositClass::Normal => round_pack(
                self.sign,
                self.sf,
                (self.frac as u64) << 2,
                false,
                self.format,
            ),
        }
    }

    pub fn to_real(&self) -> Result<BigRational> {
        match self.class {
            PositClass::Zero => Ok(BigRational::zero()),
            PositClass::NaR => Err(Error::NotAReal),
            PositClass::Normal => {
                let shift = self.sf - (self.format.frac_width() as i32 - 1);
                let mut numer = BigInt::from(self.frac);
                let mut denom = BigInt::one();
                if shift >= 0 {
                    numer <<= shift as u32;
                } else {
                    denom <<= (-shift) as u32;
                }
                if self.sign {
                    numer = -numer;
                }
                Ok(BigRational::new(numer, denom))
            }
        }
    }
}

/// Result of [`round_pack_detailed`]: the word plus the rounding bits seen at
/// the word's last kept position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Packed {
    pub word: PositWord,
    pub guard: bool,
    pub round: bool,
    pub sticky: bool,
}

/// Rounds `(-1)^sign * 2^sf * frac_ext / 2^(F+1)` to a posit.
///
/// `frac_ext` holds `F + 2` bits with the hidden bit at position `F + 1`
/// (the fraction register plus guard and round); `sticky` is the OR of every
/// bit below it. See [`round_pack_detailed`].
pub fn round_pack(sign: bool, sf: i32, frac_ext: u64, sticky: bool, format: PositFormat) -> PositWord {
    round_pack_detailed(sign, sf, frac_ext, sticky, format).word
}

/// Builds the regime/exponent/fraction bit string for the positive magnitude,
/// keeps the `n - 1` bits after the sign, and rounds to nearest, ties to the
/// even pattern, using the guard, round and sticky bits below the cut. The
/// sign is applied afterwards by two's complement.
///
/// Scale factors above `sf_max` saturate to maxpos. Magnitudes below minpos
/// round against the zero/minpos boundary like any other pair of neighbours,
/// so tiny values may become zero.
pub fn round_pack_detailed(
    sign: bool,
    sf: i32,
    frac_ext: u64,
    sticky: bool,
    format: PositFormat,
) -> Packed {
    let n = format.n();
    let es = format.es();
    let frac_bits = format.frac_width() + 1;
    let packed = |magnitude: u32, guard, round, sticky| {
        let word = if sign && magnitude != 0 {
            PositWord::from_bits_truncate(magnitude.wrapping_neg(), format)
        } else {
            PositWord::from_bits_truncate(magnitude, format)
        };
        Packed {
            word,
            guard,
            round,
            sticky,
        }
    };

    if frac_ext == 0 {
        debug_assert!(!sticky, "sticky bits without a leading one");
        return packed(0, false, false, false);
    }
    debug_assert_eq!(frac_ext >> frac_bits, 1, "fraction not normalized");
    if sf > format.sf_max() {
        return packed(format.maxpos_bits(), false, false, true);
    }
    let k = sf >> es;
    if k < -(n as i32) {
        // The zero run covers the kept, guard and round positions.
        return packed(0, false, false, true);
    }

    let (regime, regime_len): (u128, u32) = if k >= 0 {
        let ones = k as u32 + 1;
        (((1u128 << ones) - 1) << 1, ones + 1)
    } else {
        (1, (-k) as u32 + 1)
    };
    let exponent = (sf & ((1 << es) - 1)) as u128;
    let fraction = (frac_ext & ((1 << frac_bits) - 1)) as u128;
    let body = (((regime << es) | exponent) << frac_bits) | fraction;
    let len = regime_len + es + frac_bits;

    let dropped = len - (n - 1);
    let kept = (body >> dropped) as u32;
    let guard = (body >> (dropped - 1)) & 1 == 1;
    let round = (body >> (dropped - 2)) & 1 == 1;
    let sticky = sticky || body & ((1u128 << (dropped - 2)) - 1) != 0;
    let round_up = guard && (round || sticky || kept & 1 == 1);
    let magnitude = kept + round_up as u32;
    debug_assert!(magnitude <= format.maxpos_bits());
    packed(magnitude, guard, round, sticky)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w8(bits: u32) -> PositWord {
        PositWord::new(bits, PositFormat::P8).unwrap()
    }

    /// Value of a P(8,0) pattern read bit by bit, independent of `decode`.
    fn p8_value_by_scan(bits: u32) -> Option<f64> {
        if bits == 0x80 {
            return None;
        }
        if bits == 0 {
            return Some(0.0);
        }
        let negative = bits & 0x80 != 0;
        let mag = if negative { (256 - bits) & 0xff } else { bits };
        let body: Vec<u32> = (0..7).rev().map(|i| (mag >> i) & 1).collect();
        let first = body[0];
        let run = body.iter().take_while(|&&b| b == first).count();
        let k = if first == 1 { run as i32 - 1 } else { -(run as i32) };
        let mut value = 2f64.powi(k);
        let mut weight = 0.5;
        for &b in body.iter().skip(run + 1) {
            value += b as f64 * weight * 2f64.powi(k);
            weight /= 2.0;
        }
        Some(if negative { -value } else { value })
    }

    #[test]
    fn format_constants() {
        assert_eq!(PositFormat::P8.sf_max(), 6);
        assert_eq!(PositFormat::P16.sf_max(), 28);
        assert_eq!(PositFormat::P32.sf_max(), 120);
        assert_eq!(PositFormat::P8.quire_width(), 32);
        assert_eq!(PositFormat::P16.quire_width(), 128);
        assert_eq!(PositFormat::P32.quire_width(), 512);
        assert_eq!("P16".parse::<PositFormat>().unwrap(), PositFormat::P16);
        assert!("p64".parse::<PositFormat>().is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(w8(0x00).decode().class, PositClass::Zero);

        let one = w8(0x40).decode();
        assert_eq!((one.sign, one.k, one.e, one.sf), (false, 0, 0, 0));
        assert_eq!(one.frac, 0b100_0000);

        let d = w8(0x6c).decode();
        assert_eq!((d.sign, d.k, d.sf), (false, 1, 1));
        assert_eq!(d.frac, 0b111_0000);
        assert_eq!(w8(0x6c).to_f64(), 3.5);

        let nar = PositWord::new(0x8000, PositFormat::P16).unwrap().decode();
        assert_eq!(nar.class, PositClass::NaR);
    }

    #[test]
    fn decode_matches_bit_scan_for_all_p8() {
        for bits in 0..256 {
            let w = w8(bits);
            match p8_value_by_scan(bits) {
                None => assert!(w.is_nar()),
                Some(v) => assert_eq!(w.to_f64(), v, "pattern {bits:#04x}"),
            }
        }
    }

    #[test]
    fn encode_examples() {
        let d = DecodedPosit {
            format: PositFormat::P8,
            class: PositClass::Normal,
            sign: false,
            k: 1,
            e: 0,
            frac: 0b110_0000,
            sf: 1,
        };
        assert_eq!(d.encode().bits(), 0x68);
        assert_eq!(w8(0x68).to_f64(), 3.0);
        assert_eq!(DecodedPosit::nar(PositFormat::P8).encode().bits(), 0x80);
        assert_eq!(DecodedPosit::nar(PositFormat::P32).encode().bits(), 0x8000_0000);
    }

    #[test]
    fn round_trip_all_p8_and_p16() {
        for format in [PositFormat::P8, PositFormat::P16] {
            for bits in 0..=format.mask() {
                let w = PositWord::new(bits, format).unwrap();
                assert_eq!(w.decode().encode(), w, "{w:?}");
            }
        }
    }

    #[test]
    fn decoded_fields_in_range() {
        for bits in 0..=0xffff {
            let d = PositWord::new(bits, PositFormat::P16).unwrap().decode();
            if d.is_normal() {
                assert!(d.sf.abs() <= 28);
                assert_eq!(d.frac >> 14, 1);
            }
        }
    }

    #[test]
    fn round_pack_examples() {
        let f = PositFormat::P8;
        // 1.0
        assert_eq!(round_pack(false, 0, 1 << 8, false, f).bits(), 0x40);
        // 6.25 = 2^2 * 1.1001b sits halfway between 6.0 (0x74) and 6.5 (0x75)
        assert_eq!(round_pack(false, 2, 0b1_1001_0000, false, f).bits(), 0x74);
        // same magnitude plus a sticky bit breaks the tie upward
        assert_eq!(round_pack(false, 2, 0b1_1001_0000, true, f).bits(), 0x75);
        assert_eq!(round_pack(false, 200, 1 << 8, false, f).bits(), 0x7f);
        assert_eq!(round_pack(true, 200, 1 << 8, false, f).bits(), 0x81);
        assert_eq!(round_pack(true, 0, 1 << 8, false, f).bits(), 0xc0);
    }

    #[test]
    fn round_pack_below_minpos() {
        let f = PositFormat::P8;
        // 2^-7 is the midpoint between 0 and minpos: tie goes to the even zero
        assert_eq!(round_pack(false, -7, 1 << 8, false, f).bits(), 0x00);
        assert_eq!(round_pack(false, -7, 1 << 8, true, f).bits(), 0x01);
        assert_eq!(round_pack(false, -7, 0b1_1000_0000, false, f).bits(), 0x01);
        assert_eq!(round_pack(true, -7, 0b1_1000_0000, false, f).bits(), 0xff);
        assert_eq!(round_pack(false, -8, 0b1_1111_1111, true, f).bits(), 0x00);
        assert_eq!(round_pack(false, -500, 1 << 8, true, f).bits(), 0x00);
    }

    #[test]
    fn truncated_exponent_rounds_on_the_pattern() {
        // P16: 0x7ffe = 2^26 has no room for its exponent bit, the next
        // pattern is maxpos = 2^28. The boundary is the 17-bit extension 2^27.
        let f = PositFormat::P16;
        let hidden = 1u64 << 16;
        assert_eq!(round_pack(false, 27, hidden, false, f).bits(), 0x7ffe);
        assert_eq!(round_pack(false, 27, hidden, true, f).bits(), 0x7fff);
        assert_eq!(round_pack(false, 26, hidden | (hidden - 1), true, f).bits(), 0x7ffe);
    }

    #[test]
    fn to_real_examples() {
        use num_bigint::BigInt;
        let r = |bits| w8(bits).to_real().unwrap();
        assert_eq!(r(0x40), BigRational::one());
        assert_eq!(r(0x01), BigRational::new(BigInt::one(), BigInt::from(64)));
        assert_eq!(r(0x7f), BigRational::from_integer(BigInt::from(64)));
        assert_eq!(r(0x6c), BigRational::new(BigInt::from(7), BigInt::from(2)));
        assert!(matches!(w8(0x80).to_real(), Err(Error::NotAReal)));
    }

    #[test]
    fn hex_io() {
        let w = PositWord::from_hex(PositFormat::P16, "4000").unwrap();
        assert_eq!(w.bits(), 0x4000);
        assert_eq!(w.to_string(), "4000");
        assert_eq!(PositWord::one(PositFormat::P32).to_string(), "40000000");
        assert_eq!(w8(0x6c).to_string(), "6c");
        assert!(matches!(
            PositWord::from_hex(PositFormat::P8, "400"),
            Err(Error::WrongWidth { expected: 2, found: 3, .. })
        ));
        assert!(matches!(
            PositWord::from_hex(PositFormat::P8, "zz"),
            Err(Error::MalformedHex(_))
        ));
        assert!(PositWord::new(0x100, PositFormat::P8).is_err());
    }

    #[test]
    fn negation_symmetry_p8() {
        for bits in 1..256u32 {
            let w = w8(bits);
            if w.is_nar() {
                continue;
            }
            let d = w.decode();
            let m = w.neg().decode();
            assert_eq!(m.sign, !d.sign);
            assert_eq!((m.k, m.e, m.frac, m.sf), (d.k, d.e, d.frac, d.sf));
        }
    }
}
