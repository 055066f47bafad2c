//! Golden-model scalar MAC on exact arbitrary-precision arithmetic.
//!
//! Nothing here touches the quire, the SIMD blocks or the guard/round/sticky
//! packer. Sums are exact dyadic rationals, and the single final rounding is
//! a search over the ordered set of representable values.
//!
//! The rounding boundary between neighbouring patterns `p` and `p + 1` is the
//! value of the one-bit-longer pattern `2p + 1` in Posit(n+1, es). Whenever
//! the exponent field is complete this is the arithmetic midpoint; where the
//! regime has pushed exponent bits out of the word it is not, and posit
//! rounding follows the bit pattern. Values exactly on a boundary go to the
//! even pattern. Anything at or above maxpos saturates.

use std::cmp::Ordering;

use log::warn;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::posit::{PositFormat, PositWord};

/// Exact value `mant * 2^exp`.
#[derive(Clone, Debug)]
struct Dyadic {
    mant: BigInt,
    exp: i32,
}

impl Dyadic {
    fn zero() -> Self {
        Dyadic {
            mant: BigInt::zero(),
            exp: 0,
        }
    }

    fn from_rational(r: &BigRational) -> Self {
        let denom = r.denom();
        let shift = denom.trailing_zeros().unwrap_or(0);
        debug_assert_eq!(denom >> shift, BigInt::from(1), "posit values are dyadic");
        Dyadic {
            mant: r.numer().clone(),
            exp: -(shift as i32),
        }
    }

    fn mul(&self, other: &Dyadic) -> Dyadic {
        Dyadic {
            mant: &self.mant * &other.mant,
            exp: self.exp + other.exp,
        }
    }

    fn add(&self, other: &Dyadic) -> Dyadic {
        if self.mant.is_zero() {
            return other.clone();
        }
        if other.mant.is_zero() {
            return self.clone();
        }
        let exp = self.exp.min(other.exp);
        Dyadic {
            mant: (&self.mant << (self.exp - exp) as u32) + (&other.mant << (other.exp - exp) as u32),
            exp,
        }
    }

    fn abs_cmp(&self, mant: u64, exp: i32) -> Ordering {
        let lo = self.exp.min(exp);
        let lhs = self.mant.abs() << (self.exp - lo) as u32;
        let rhs = BigInt::from(mant) << (exp - lo) as u32;
        lhs.cmp(&rhs)
    }
}

/// Value of an arbitrary-width Posit(nbits, es) pattern as `(negative,
/// mantissa, exponent)`, read bit by bit. `None` for NaR; zero has mantissa 0.
fn pattern_value(bits: u64, nbits: u32, es: u32) -> Option<(bool, u64, i32)> {
    let top = 1u64 << (nbits - 1);
    if bits == 0 {
        return Some((false, 0, 0));
    }
    if bits == top {
        return None;
    }
    let negative = bits & top != 0;
    let magnitude = if negative {
        (1u64 << nbits).wrapping_sub(bits) & ((1u64 << nbits) - 1)
    } else {
        bits
    };
    let bit = |i: i32| (magnitude >> i) & 1;

    let mut i = nbits as i32 - 2;
    let first = bit(i);
    let mut run = 0;
    while i >= 0 && bit(i) == first {
        run += 1;
        i -= 1;
    }
    i -= 1; // terminator, if present
    let k = if first == 1 { run - 1 } else { -run };

    let mut exponent = 0i32;
    for _ in 0..es {
        exponent <<= 1;
        if i >= 0 {
            exponent |= bit(i) as i32;
            i -= 1;
        }
    }
    let frac_len = (i + 1).max(0);
    let frac = if frac_len == 0 {
        0
    } else {
        magnitude & ((1u64 << frac_len) - 1)
    };
    let scale = k * (1 << es) + exponent;
    Some((negative, (1u64 << frac_len) | frac, scale - frac_len))
}

/// Finds the positive pattern nearest to a magnitude. `compare(mant, exp)`
/// orders the magnitude against the exact value `mant * 2^exp`.
fn nearest_magnitude(format: PositFormat, compare: impl Fn(u64, i32) -> Ordering) -> u32 {
    let n = format.n();
    let es = format.es();
    let value = |p: u32| {
        let (_, m, e) = pattern_value(p as u64, n, es).expect("positive pattern");
        (m, e)
    };
    let maxpos = format.maxpos_bits();
    let (m, e) = value(maxpos);
    if compare(m, e) != Ordering::Less {
        return maxpos;
    }
    // value(lo) <= x < value(hi)
    let (mut lo, mut hi) = (0u32, maxpos);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let (m, e) = value(mid);
        if compare(m, e) == Ordering::Less {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (m, e) = value(lo);
    if lo != 0 && compare(m, e) == Ordering::Equal {
        return lo;
    }
    let (_, bm, be) = pattern_value(2 * lo as u64 + 1, n + 1, es).expect("positive pattern");
    match compare(bm, be) {
        Ordering::Less => lo,
        Ordering::Greater => hi,
        Ordering::Equal => {
            if lo % 2 == 0 {
                lo
            } else {
                hi
            }
        }
    }
}

fn with_sign(magnitude: u32, negative: bool, format: PositFormat) -> PositWord {
    let bits = if negative {
        magnitude.wrapping_neg()
    } else {
        magnitude
    };
    PositWord::from_bits_truncate(bits, format)
}

fn round_dyadic(value: &Dyadic, format: PositFormat) -> PositWord {
    if value.mant.is_zero() {
        return PositWord::zero(format);
    }
    let magnitude = nearest_magnitude(format, |m, e| value.abs_cmp(m, e));
    with_sign(magnitude, value.mant.is_negative(), format)
}

/// Rounds an exact value to the nearest posit, ties to the even pattern.
pub fn nearest_posit(value: &BigRational, format: PositFormat) -> PositWord {
    let denom = value.denom();
    if denom >> denom.trailing_zeros().unwrap_or(0) == BigInt::from(1) {
        return round_dyadic(&Dyadic::from_rational(value), format);
    }
    // General rationals: compare by cross-multiplication.
    if value.is_zero() {
        return PositWord::zero(format);
    }
    let abs = value.abs();
    let magnitude = nearest_magnitude(format, |m, e| {
        let candidate = if e >= 0 {
            BigRational::from_integer(BigInt::from(m) << e as u32)
        } else {
            BigRational::new(BigInt::from(m), BigInt::from(1) << (-e) as u32)
        };
        abs.cmp(&candidate)
    });
    with_sign(magnitude, value.is_negative(), format)
}

/// Quantizes a double. Non-finite inputs map to NaR with a warning.
pub fn quantize_f64(x: f64, format: PositFormat) -> PositWord {
    if !x.is_finite() {
        warn!("non-finite value {x} quantized to NaR");
        return PositWord::nar(format);
    }
    if x == 0.0 {
        return PositWord::zero(format);
    }
    let abs = x.abs();
    // Candidate values have at most 32 significant bits and |exp| < 200,
    // so the f64 products below are exact.
    let magnitude = nearest_magnitude(format, |m, e| {
        let candidate = m as f64 * 2f64.powi(e);
        abs.partial_cmp(&candidate).expect("finite")
    });
    with_sign(magnitude, x < 0.0, format)
}

/// Exact `sum(a_i * b_i)` rounded once to `format`. NaR anywhere gives NaR;
/// the empty sum is zero.
pub fn ref_mac(pairs: &[(PositWord, PositWord)], format: PositFormat) -> PositWord {
    match exact_sum(pairs) {
        Some(sum) => round_dyadic(&sum, format),
        None => PositWord::nar(format),
    }
}

fn exact_sum(pairs: &[(PositWord, PositWord)]) -> Option<Dyadic> {
    let mut sum = Dyadic::zero();
    for (a, b) in pairs {
        let a = Dyadic::from_rational(&a.to_real().ok()?);
        let b = Dyadic::from_rational(&b.to_real().ok()?);
        sum = sum.add(&a.mul(&b));
    }
    Some(sum)
}

/// True when the exact sum lies on a rounding boundary, so the result is
/// decided by the ties-to-even rule. False for NaR and zero sums.
pub fn is_tie(pairs: &[(PositWord, PositWord)], format: PositFormat) -> bool {
    let Some(sum) = exact_sum(pairs) else {
        return false;
    };
    if sum.mant.is_zero() {
        return false;
    }
    let nearest = nearest_magnitude(format, |m, e| sum.abs_cmp(m, e));
    let on_boundary = |p: u32| {
        let (_, m, e) = pattern_value(2 * p as u64 + 1, format.n() + 1, format.es()).expect("positive");
        sum.abs_cmp(m, e) == Ordering::Equal
    };
    (nearest < format.maxpos_bits() && on_boundary(nearest)) || (nearest > 0 && on_boundary(nearest - 1))
}

/// The exact dot product as a rational, `None` if any operand is NaR.
pub fn exact_dot(pairs: &[(PositWord, PositWord)]) -> Option<BigRational> {
    let sum = exact_sum(pairs)?;
    Some(if sum.exp >= 0 {
        BigRational::from_integer(sum.mant << sum.exp as u32)
    } else {
        BigRational::new(sum.mant, BigInt::from(1) << (-sum.exp) as u32)
    })
}

/// Value of the boundary between positive pattern `p` and `p + 1`, as an
/// exact rational. Used to construct halfway cases.
pub fn rounding_boundary(p: u32, format: PositFormat) -> BigRational {
    let (_, m, e) = pattern_value(2 * p as u64 + 1, format.n() + 1, format.es()).expect("positive");
    if e >= 0 {
        BigRational::from_integer(BigInt::from(m) << e as u32)
    } else {
        BigRational::new(BigInt::from(m), BigInt::from(1) << (-e) as u32)
    }
}

/// Exact value of a pattern via the oracle's own bit-scanning decoder.
pub fn oracle_value(word: PositWord) -> Option<BigRational> {
    let (negative, m, e) = pattern_value(word.bits() as u64, word.format().n(), word.format().es())?;
    let magnitude = if e >= 0 {
        BigRational::from_integer(BigInt::from(m) << e as u32)
    } else {
        BigRational::new(BigInt::from(m), BigInt::from(1) << (-e) as u32)
    };
    let value = if m == 0 { BigRational::zero() } else { magnitude };
    Some(if negative { -value } else { value })
}

/// Nearest-value rounding without posit boundaries: returns the candidate
/// closer in absolute distance (ties to the even pattern). Agrees with
/// [`nearest_posit`] whenever the exponent field is not truncated; kept for
/// diagnosing the regions where it is.
pub fn nearest_by_distance(value: &BigRational, format: PositFormat) -> PositWord {
    if value.is_zero() {
        return PositWord::zero(format);
    }
    let abs = value.abs();
    let maxpos = PositWord::maxpos(format);
    let maxval = oracle_value(maxpos).unwrap();
    if abs >= maxval {
        return with_sign(maxpos.bits(), value.is_negative(), format);
    }
    let (mut lo, mut hi) = (0u32, format.maxpos_bits());
    let val = |p: u32| oracle_value(PositWord::from_bits_truncate(p, format)).unwrap();
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if abs < val(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let below = &abs - val(lo);
    let above = val(hi) - &abs;
    let magnitude = match below.cmp(&above) {
        Ordering::Less => lo,
        Ordering::Greater => hi,
        Ordering::Equal if lo % 2 == 0 => lo,
        Ordering::Equal => hi,
    };
    with_sign(magnitude, value.is_negative(), format)
}

/// Best-effort `f64` view of an exact value, for reporting.
pub fn approx_f64(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}
