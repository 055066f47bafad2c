//! Wide fixed-point accumulator for exact sums of posit products.
//!
//! The stored two's-complement integer equals `value * 2^(2 * sf_max)`, so
//! the least significant bit weighs `minpos^2`. Widths are 32, 128 and 512
//! bits for P8, P16 and P32; the top `n - 1` bits are carry guard.

use std::fmt;

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::One;

use crate::error::{Error, Result};
use crate::posit::{round_pack_detailed, DecodedPosit, Packed, PositClass, PositFormat, PositWord};
use crate::simd::{simd_lod, Mode, SimdWord};

pub(crate) const QUIRE_LIMBS: usize = 8;

/// Fixed-width two's-complement integer over up to 512 bits, little-endian
/// limbs. Bits at and above the width are kept zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
struct Wide([u64; QUIRE_LIMBS]);

const fn limb_count(width: u32) -> usize {
    width.div_ceil(64) as usize
}

const fn top_limb_mask(width: u32) -> u64 {
    if width % 64 == 0 {
        u64::MAX
    } else {
        (1 << (width % 64)) - 1
    }
}

impl Wide {
    fn from_u64(value: u64) -> Self {
        let mut limbs = [0; QUIRE_LIMBS];
        limbs[0] = value;
        Wide(limbs)
    }

    fn masked(mut self, width: u32) -> Self {
        let n = limb_count(width);
        self.0[n - 1] &= top_limb_mask(width);
        for limb in &mut self.0[n..] {
            *limb = 0;
        }
        self
    }

    fn bit(&self, index: u32) -> bool {
        (self.0[(index / 64) as usize] >> (index % 64)) & 1 == 1
    }

    fn is_negative(&self, width: u32) -> bool {
        self.bit(width - 1)
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|&l| l == 0)
    }

    fn wrapping_add(&self, other: &Wide, width: u32) -> Wide {
        let mut out = [0; QUIRE_LIMBS];
        let mut carry = false;
        for i in 0..limb_count(width) {
            let (s1, c1) = self.0[i].overflowing_add(other.0[i]);
            let (s2, c2) = s1.overflowing_add(carry as u64);
            out[i] = s2;
            carry = c1 || c2;
        }
        Wide(out).masked(width)
    }

    fn wrapping_neg(&self, width: u32) -> Wide {
        let mut out = [0; QUIRE_LIMBS];
        let mut carry = true;
        for i in 0..limb_count(width) {
            let (v, c) = (!self.0[i]).overflowing_add(carry as u64);
            out[i] = v;
            carry = c;
        }
        Wide(out).masked(width)
    }

    fn shl(&self, amount: u32, width: u32) -> Wide {
        let mut out = [0; QUIRE_LIMBS];
        let (limbs, bits) = ((amount / 64) as usize, amount % 64);
        for i in limbs..limb_count(width) {
            let src = i - limbs;
            let mut v = self.0[src] << bits;
            if bits != 0 && src > 0 {
                v |= self.0[src - 1] >> (64 - bits);
            }
            out[i] = v;
        }
        Wide(out).masked(width)
    }

    /// Arithmetic right shift within `width` bits: the value is sign-extended
    /// to the full limb array, shifted, then masked back.
    fn sar(&self, amount: u32, width: u32) -> Wide {
        let fill = if self.is_negative(width) { u64::MAX } else { 0 };
        let mut src = self.0;
        let n = limb_count(width);
        src[n - 1] |= fill & !top_limb_mask(width);
        for limb in &mut src[n..] {
            *limb = fill;
        }
        let limb_at = |i: usize| src.get(i).copied().unwrap_or(fill);
        let (limbs, bits) = ((amount / 64) as usize, amount % 64);
        let mut out = [0; QUIRE_LIMBS];
        for (i, slot) in out.iter_mut().enumerate().take(n) {
            let v = limb_at(i + limbs);
            *slot = if bits == 0 {
                v
            } else {
                (v >> bits) | (limb_at(i + limbs + 1) << (64 - bits))
            };
        }
        Wide(out).masked(width)
    }

    /// `count <= 64` bits starting at bit `lo`; positions below zero read as 0.
    fn extract(&self, lo: i32, count: u32) -> u64 {
        let mut out = 0u64;
        for i in 0..count {
            let index = lo + i as i32;
            if index >= 0 && self.bit(index as u32) {
                out |= 1 << i;
            }
        }
        out
    }

    fn any_below(&self, index: i32) -> bool {
        if index <= 0 {
            return false;
        }
        let index = index as u32;
        let full = (index / 64) as usize;
        if self.0[..full].iter().any(|&l| l != 0) {
            return true;
        }
        let rem = index % 64;
        rem != 0 && self.0[full] & ((1 << rem) - 1) != 0
    }

    /// Highest set bit, located with the 32-bit SIMD leading-one detector
    /// applied word by word from the top.
    fn leading_one(&self, width: u32) -> Option<u32> {
        (0..width / 32).rev().find_map(|word| {
            let bits = (self.0[(word / 2) as usize] >> (32 * (word % 2))) as u32;
            let lod = simd_lod(SimdWord(bits), Mode::P32)[0];
            lod.valid.then(|| word * 32 + 31 - lod.position)
        })
    }
}

/// Exact product accumulator for one posit format.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Quire {
    acc: Wide,
    format: PositFormat,
    nar: bool,
    wrapped: bool,
}

/// Output of the normalization stage: the leading one located, the scale
/// factor derived and `F + 2` bits taken below it (hidden bit on top), with
/// every remaining lower bit folded into `sticky`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Normalized {
    pub class: PositClass,
    pub sign: bool,
    pub sf: i32,
    pub frac_ext: u64,
    pub sticky: bool,
}

impl Normalized {
    pub fn pack(&self, format: PositFormat) -> Packed {
        match self.class {
            PositClass::NaR => Packed {
                word: PositWord::nar(format),
                guard: false,
                round: false,
                sticky: false,
            },
            _ => round_pack_detailed(self.sign, self.sf, self.frac_ext, self.sticky, format),
        }
    }
}

impl Quire {
    pub fn zero(format: PositFormat) -> Self {
        Quire {
            acc: Wide::default(),
            format,
            nar: false,
            wrapped: false,
        }
    }

    pub const fn format(&self) -> PositFormat {
        self.format
    }

    pub const fn width(&self) -> u32 {
        self.format.quire_width()
    }

    pub const fn is_nar(&self) -> bool {
        self.nar
    }

    /// Set once any accumulation wrapped past the register width.
    pub const fn wrapped(&self) -> bool {
        self.wrapped
    }

    pub fn is_zero(&self) -> bool {
        !self.nar && self.acc.is_zero()
    }

    /// Returns the quire after adding `a * b`, or `self` unchanged when
    /// `enable` is false.
    pub fn add_product(&self, a: &DecodedPosit, b: &DecodedPosit, enable: bool) -> Quire {
        let mut q = *self;
        if enable {
            q.accumulate(a, b);
        }
        q
    }

    /// Like [`Quire::add_product`] with wrap detection turned into an error.
    pub fn try_add_product(&self, a: &DecodedPosit, b: &DecodedPosit) -> Result<Quire> {
        let q = self.add_product(a, b, true);
        if q.wrapped && !self.wrapped {
            return Err(Error::QuireOverflow { width: self.width() });
        }
        Ok(q)
    }

    /// In-place `q += a * b`. Panics if an operand is in another format.
    pub fn accumulate(&mut self, a: &DecodedPosit, b: &DecodedPosit) {
        assert!(
            a.format == self.format && b.format == self.format,
            "operands must be in {}",
            self.format
        );
        match (a.class, b.class) {
            (PositClass::NaR, _) | (_, PositClass::NaR) => self.nar = true,
            (PositClass::Zero, _) | (_, PositClass::Zero) => {}
            _ => self.accumulate_product(
                a.sign != b.sign,
                a.sf + b.sf,
                a.frac as u64 * b.frac as u64,
            ),
        }
    }

    /// Adds `(-1)^negative * 2^scale * product / 2^(2F - 2)`: a product of two
    /// `F`-bit fraction registers at combined scale factor `scale`.
    ///
    /// The product is sign-applied first, then moved into position with a
    /// left shift or an arithmetic right shift.
    pub fn accumulate_product(&mut self, negative: bool, scale: i32, product: u64) {
        if product == 0 {
            return;
        }
        let width = self.width();
        let f = self.format.frac_width() as i32;
        let position = scale + 2 * self.format.sf_max() - 2 * (f - 1);
        let mut addend = Wide::from_u64(product);
        if negative {
            addend = addend.wrapping_neg(width);
        }
        addend = if position >= 0 {
            addend.shl(position as u32, width)
        } else {
            debug_assert_eq!(
                product & ((1u64 << -position) - 1),
                0,
                "product below the quire LSB"
            );
            addend.sar((-position) as u32, width)
        };
        let sum = self.acc.wrapping_add(&addend, width);
        let same_sign = self.acc.is_negative(width) == addend.is_negative(width);
        if same_sign && sum.is_negative(width) != addend.is_negative(width) {
            self.wrapped = true;
        }
        self.acc = sum;
    }

    /// Stage 4: locate the leading one of the magnitude and split it into
    /// scale factor, fraction-with-guard-and-round, and sticky.
    pub fn normalize(&self) -> Normalized {
        let zero = Normalized {
            class: PositClass::Zero,
            sign: false,
            sf: 0,
            frac_ext: 0,
            sticky: false,
        };
        if self.nar {
            return Normalized {
                class: PositClass::NaR,
                ..zero
            };
        }
        let width = self.width();
        let sign = self.acc.is_negative(width);
        let magnitude = if sign {
            self.acc.wrapping_neg(width)
        } else {
            self.acc
        };
        let Some(lead) = magnitude.leading_one(width) else {
            return zero;
        };
        let keep = self.format.frac_width() + 2;
        let lo = lead as i32 - (keep as i32 - 1);
        Normalized {
            class: PositClass::Normal,
            sign,
            sf: lead as i32 - 2 * self.format.sf_max(),
            frac_ext: magnitude.extract(lo, keep),
            sticky: magnitude.any_below(lo),
        }
    }

    /// Stages 4 and 5: normalize, then round to nearest even and pack.
    pub fn to_posit(&self) -> PositWord {
        self.to_posit_detailed().1.word
    }

    pub fn to_posit_detailed(&self) -> (Normalized, Packed) {
        let normalized = self.normalize();
        let packed = normalized.pack(self.format);
        (normalized, packed)
    }

    /// Accumulator as a signed integer (value times `2^(2 sf_max)`).
    pub fn to_bigint(&self) -> BigInt {
        let width = self.width();
        let bytes: Vec<u8> = self.acc.0[..limb_count(width)]
            .iter()
            .flat_map(|l| l.to_le_bytes())
            .collect();
        let unsigned = BigInt::from_bytes_le(Sign::Plus, &bytes);
        if self.acc.is_negative(width) {
            unsigned - (BigInt::one() << width)
        } else {
            unsigned
        }
    }

    /// Exact value held, ignoring the NaR flag.
    pub fn to_rational(&self) -> BigRational {
        BigRational::new(
            self.to_bigint(),
            BigInt::one() << (2 * self.format.sf_max()) as u32,
        )
    }

    /// Full-width two's-complement dump, `width / 4` lowercase hex digits.
    pub fn to_hex(&self) -> String {
        let width = self.width();
        (0..width / 4)
            .rev()
            .map(|nibble| {
                let v = (self.acc.0[(nibble / 16) as usize] >> (4 * (nibble % 16))) & 0xf;
                char::from_digit(v as u32, 16).unwrap()
            })
            .collect()
    }

    /// Parses a [`Quire::to_hex`] dump.
    pub fn from_hex(format: PositFormat, text: &str, nar: bool) -> Result<Quire> {
        let width = format.quire_width();
        let text = text.trim();
        if text.len() != (width / 4) as usize {
            return Err(Error::parse(
                "quire",
                format!("expected {} hex digits, got {}", width / 4, text.len()),
            ));
        }
        let mut q = Quire::zero(format);
        q.nar = nar;
        for (i, c) in text.chars().rev().enumerate() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::MalformedHex(text.to_string()))? as u64;
            q.acc.0[i / 16] |= v << (4 * (i % 16));
        }
        Ok(q)
    }

    /// Raw accumulator bits for register-file storage.
    pub(crate) fn raw(&self) -> [u64; QUIRE_LIMBS] {
        self.acc.0
    }

    pub(crate) fn from_raw(format: PositFormat, raw: [u64; QUIRE_LIMBS], nar: bool) -> Quire {
        Quire {
            acc: Wide(raw).masked(format.quire_width()),
            format,
            nar,
            wrapped: false,
        }
    }
}

impl fmt::Debug for Quire {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Quire({}, {}{})",
            self.format.short_name(),
            self.to_hex(),
            if self.nar { ", NaR" } else { "" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn p8(bits: u32) -> DecodedPosit {
        PositWord::new(bits, PositFormat::P8).unwrap().decode()
    }

    fn int(v: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(v))
    }

    #[test]
    fn zero_quire() {
        let q = Quire::zero(PositFormat::P8);
        assert!(q.to_bigint().is_zero());
        assert_eq!(q.to_posit().bits(), 0x00);
        assert_eq!(Quire::zero(PositFormat::P32).width(), 512);
        assert_eq!(Quire::zero(PositFormat::P32).to_hex().len(), 128);
    }

    #[test]
    fn bypass_leaves_quire_unchanged() {
        let q = Quire::zero(PositFormat::P8).add_product(&p8(0x60), &p8(0x68), true);
        let same = q.add_product(&p8(0x7f), &p8(0x7f), false);
        assert_eq!(same, q);
    }

    #[test]
    fn exact_small_products() {
        let q = Quire::zero(PositFormat::P8).add_product(&p8(0x60), &p8(0x68), true);
        assert_eq!(q.to_rational(), int(6));
        assert_eq!(q.to_posit().bits(), 0x74);

        let mut q = Quire::zero(PositFormat::P8);
        for _ in 0..16 {
            q.accumulate(&p8(0x20), &p8(0x40));
        }
        assert_eq!(q.to_rational(), int(8));
    }

    #[test]
    fn nar_is_sticky() {
        let q = Quire::zero(PositFormat::P8).add_product(&p8(0x80), &p8(0x40), true);
        assert!(q.is_nar());
        let q = q.add_product(&p8(0x40), &p8(0x40), true);
        assert_eq!(q.to_posit().bits(), 0x80);
    }

    #[test]
    fn readout_rounds_ties_to_even() {
        let q = Quire::zero(PositFormat::P8).add_product(&p8(0x64), &p8(0x64), true);
        assert_eq!(q.to_rational(), BigRational::new(BigInt::from(25), BigInt::from(4)));
        assert_eq!(q.to_posit().bits(), 0x74);
        assert_eq!(
            Quire::zero(PositFormat::P8)
                .add_product(&p8(0x40), &p8(0x40), true)
                .to_posit()
                .bits(),
            0x40
        );
    }

    #[test]
    fn negative_products_cancel() {
        for fmt in PositFormat::ALL {
            let a = PositWord::new(fmt.maxpos_bits() - 3, fmt).unwrap();
            let b = PositWord::new(5, fmt).unwrap();
            let q = Quire::zero(fmt)
                .add_product(&a.decode(), &b.decode(), true)
                .add_product(&a.neg().decode(), &b.decode(), true);
            assert!(q.is_zero(), "{fmt}");
        }
    }

    #[test]
    fn smallest_and_largest_products_are_exact() {
        for fmt in PositFormat::ALL {
            let minpos = PositWord::minpos(fmt).decode();
            let q = Quire::zero(fmt).add_product(&minpos, &minpos, true);
            assert_eq!(q.to_bigint(), BigInt::one());
            let neg = PositWord::minpos(fmt).neg().decode();
            let q = Quire::zero(fmt).add_product(&neg, &minpos, true);
            assert_eq!(q.to_bigint(), -BigInt::one());
            let maxpos = PositWord::maxpos(fmt).decode();
            let q = Quire::zero(fmt).add_product(&maxpos, &maxpos, true);
            assert_eq!(q.to_bigint(), BigInt::one() << (4 * fmt.sf_max()) as u32);
            assert_eq!(q.to_posit(), PositWord::maxpos(fmt));
        }
    }

    #[test]
    fn wrap_is_detected() {
        let maxpos = p8(0x7f);
        let mut q = Quire::zero(PositFormat::P8);
        for _ in 0..127 {
            q = q.try_add_product(&maxpos, &maxpos).unwrap();
        }
        assert!(!q.wrapped());
        assert!(matches!(
            q.try_add_product(&maxpos, &maxpos),
            Err(Error::QuireOverflow { width: 32 })
        ));
    }

    /// Positive capacity is 2^(n-1) - 1 maxpos^2 products; the negative side
    /// holds exactly 2^(n-1).
    #[test]
    fn capacity_bounds() {
        for format in [PositFormat::P8, PositFormat::P16] {
            let count = 1u32 << (format.n() - 1);
            let maxpos = PositWord::maxpos(format).decode();
            let neg_maxpos = PositWord::maxpos(format).neg().decode();
            let (mut pos, mut neg) = (Quire::zero(format), Quire::zero(format));
            for _ in 0..count - 1 {
                pos.accumulate(&maxpos, &maxpos);
            }
            assert!(!pos.wrapped());
            pos.accumulate(&maxpos, &maxpos);
            assert!(pos.wrapped(), "{format}");
            for _ in 0..count {
                neg.accumulate(&maxpos, &neg_maxpos);
            }
            assert!(!neg.wrapped(), "{format}");
            assert_eq!(neg.to_posit(), PositWord::maxpos(format).neg());
        }
    }

    #[test]
    fn hex_dump_round_trip() {
        let q = Quire::zero(PositFormat::P16)
            .add_product(
                &PositWord::new(0xc123, PositFormat::P16).unwrap().decode(),
                &PositWord::new(0x3456, PositFormat::P16).unwrap().decode(),
                true,
            );
        let text = q.to_hex();
        assert_eq!(text.len(), 32);
        assert!(text.starts_with('f'));
        assert_eq!(Quire::from_hex(PositFormat::P16, &text, false).unwrap(), q);
    }

    #[test]
    fn wide_shifts() {
        let w = Wide::from_u64(0b1011).shl(200, 512);
        assert!(w.bit(200) && w.bit(201) && !w.bit(202) && w.bit(203));
        assert_eq!(w.sar(200, 512).0[0], 0b1011);
        let neg = Wide::from_u64(8).wrapping_neg(128);
        let shifted = neg.sar(3, 128);
        assert_eq!(shifted, Wide::from_u64(1).wrapping_neg(128));
        assert_eq!(neg.leading_one(128), Some(127));
        assert_eq!(Wide::from_u64(1 << 40).leading_one(128), Some(40));
    }
}
