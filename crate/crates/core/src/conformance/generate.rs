//! Seeded stratified stimulus.
//!
//! Vector `i` of a campaign is drawn from `ChaCha8Rng::seed_from_u64(seed)`
//! switched to stream `i`, so any single vector can be regenerated on its
//! own and a campaign can be sharded without changing its contents.
//! Vectors cycle through six kinds by index: fixed sign combination, fixed
//! regime length, zero/NaR operand, constructed rounding tie, multi-issue
//! sequence (2 to 64 accumulations) and raw random bits.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::conformance::vector::{Issue, Vector};
use crate::posit::{PositClass, PositFormat, PositWord};
use crate::reference::{is_tie, nearest_posit, rounding_boundary};
use crate::simd::{LaneMask, Mode, SimdWord};

pub const MAX_SEQUENCE: usize = 64;
const KINDS: u64 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bin {
    /// Signs of `a` and `b`, true for negative.
    Signs(bool, bool),
    /// Regime run length of an operand.
    Regime(u32),
    Zero,
    NaR,
    /// The exact lane sum sits on a rounding boundary.
    Tie,
    /// A lane accumulated more than one product.
    MultiIssue,
}

impl Bin {
    /// Every bin a full campaign in `format` should reach.
    pub fn all(format: PositFormat) -> Vec<Bin> {
        let mut bins = vec![
            Bin::Signs(false, false),
            Bin::Signs(false, true),
            Bin::Signs(true, false),
            Bin::Signs(true, true),
        ];
        bins.extend((1..format.n()).map(Bin::Regime));
        bins.extend([Bin::Zero, Bin::NaR, Bin::Tie, Bin::MultiIssue]);
        bins
    }
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = |neg: bool| if neg { '-' } else { '+' };
        match *self {
            Bin::Signs(a, b) => write!(f, "signs{}{}", sign(a), sign(b)),
            Bin::Regime(len) => write!(f, "regime{len}"),
            Bin::Zero => f.write_str("zero"),
            Bin::NaR => f.write_str("nar"),
            Bin::Tie => f.write_str("tie"),
            Bin::MultiIssue => f.write_str("multi-issue"),
        }
    }
}

/// Number of vectors that touched each bin.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Coverage {
    counts: BTreeMap<Bin, u64>,
}

impl Coverage {
    pub fn of(vector: &Vector) -> Self {
        let format = vector.mode.format();
        let mut bins = Vec::new();
        for pairs in vector.lane_pairs() {
            for (a, b) in &pairs {
                let (da, db) = (a.decode(), b.decode());
                match (da.class, db.class) {
                    (PositClass::NaR, _) | (_, PositClass::NaR) => bins.push(Bin::NaR),
                    (PositClass::Zero, _) | (_, PositClass::Zero) => bins.push(Bin::Zero),
                    _ => {
                        bins.push(Bin::Signs(da.sign, db.sign));
                        bins.push(Bin::Regime(regime_length(da.k)));
                        bins.push(Bin::Regime(regime_length(db.k)));
                    }
                }
            }
            if pairs.len() > 1 {
                bins.push(Bin::MultiIssue);
            }
            if is_tie(&pairs, format) {
                bins.push(Bin::Tie);
            }
        }
        bins.sort();
        bins.dedup();
        Coverage {
            counts: bins.into_iter().map(|b| (b, 1)).collect(),
        }
    }

    pub fn merge(&mut self, other: &Coverage) {
        for (bin, n) in &other.counts {
            *self.counts.entry(*bin).or_default() += n;
        }
    }

    pub fn count(&self, bin: Bin) -> u64 {
        self.counts.get(&bin).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Bin, u64)> + '_ {
        self.counts.iter().map(|(b, n)| (*b, *n))
    }

    /// Bins of `format` that no vector reached.
    pub fn missing(&self, format: PositFormat) -> Vec<Bin> {
        Bin::all(format).into_iter().filter(|b| self.count(*b) == 0).collect()
    }
}

fn regime_length(k: i32) -> u32 {
    if k >= 0 {
        k as u32 + 1
    } else {
        (-k) as u32
    }
}

/// Stimulus generator for one mode and seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Generator {
    pub mode: Mode,
    pub seed: u64,
}

impl Generator {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Generator { mode, seed }
    }

    /// Vector `index` of the campaign, expected result included.
    pub fn vector(&self, index: u64) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let mode = self.mode;
        let format = mode.format();
        let lanes = mode.lanes();
        let all = LaneMask::all(mode);
        let round = index / KINDS;
        let single = |rng: &mut ChaCha8Rng, pick: &mut dyn FnMut(&mut ChaCha8Rng) -> (PositWord, PositWord)| {
            let pairs: Vec<_> = (0..lanes).map(|_| pick(rng)).collect();
            vec![issue(mode, &pairs, all)]
        };
        let issues = match index % KINDS {
            0 => {
                let (sa, sb) = ((round & 1) != 0, (round & 2) != 0);
                single(&mut rng, &mut |r| {
                    let (ra, rb) = (random_run(r, format), random_run(r, format));
                    (word_with(r, format, sa, ra), word_with(r, format, sb, rb))
                })
            }
            1 => {
                let run = (round % (format.n() as u64 - 1)) as u32 + 1;
                single(&mut rng, &mut |r| {
                    let (sa, sb) = (r.gen(), r.gen());
                    (word_with(r, format, sa, run), word_with(r, format, sb, run))
                })
            }
            2 => {
                let special = if round % 2 == 0 {
                    PositWord::zero(format)
                } else {
                    PositWord::nar(format)
                };
                single(&mut rng, &mut |r| {
                    let other = random_bits(r, format);
                    if r.gen() {
                        (special, other)
                    } else {
                        (other, special)
                    }
                })
            }
            3 => tie_issues(&mut rng, mode),
            4 => {
                let len = rng.gen_range(2..=MAX_SEQUENCE);
                (0..len)
                    .map(|_| {
                        let pairs: Vec<_> = (0..lanes)
                            .map(|_| (random_operand(&mut rng, format), random_operand(&mut rng, format)))
                            .collect();
                        let enables = LaneMask::new(rng.gen_range(0..1u8 << lanes), mode).expect("lane bits");
                        issue(mode, &pairs, enables)
                    })
                    .collect()
            }
            _ => single(&mut rng, &mut |r| (random_bits(r, format), random_bits(r, format))),
        };
        Vector::new(mode, issues)
    }

    /// Vectors `0..count`, generated in parallel and returned in order.
    pub fn vectors(&self, count: u64) -> Vec<Vector> {
        (0..count).into_par_iter().map(|i| self.vector(i)).collect()
    }
}

/// All 256 x 256 single-pair P8 products, four per issue across the lanes:
/// lane `l` of vector `v` multiplies `a = k >> 8` by `b = k & 0xff` with
/// `k = 4v + l`.
pub fn exhaustive_p8() -> Vec<Vector> {
    let mode = Mode::P8;
    (0..1 << 14)
        .into_par_iter()
        .map(|v: u32| {
            let pairs: Vec<_> = (0..4)
                .map(|l| {
                    let k = 4 * v + l;
                    (
                        PositWord::from_bits_truncate(k >> 8, PositFormat::P8),
                        PositWord::from_bits_truncate(k & 0xff, PositFormat::P8),
                    )
                })
                .collect();
            Vector::new(mode, vec![issue(mode, &pairs, LaneMask::all(mode))])
        })
        .collect()
}

fn issue(mode: Mode, pairs: &[(PositWord, PositWord)], enables: LaneMask) -> Issue {
    let a: Vec<_> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<_> = pairs.iter().map(|p| p.1).collect();
    Issue {
        a: SimdWord::from_words(mode, &a).expect("one word per lane"),
        b: SimdWord::from_words(mode, &b).expect("one word per lane"),
        enables,
    }
}

fn random_run(rng: &mut ChaCha8Rng, format: PositFormat) -> u32 {
    rng.gen_range(1..format.n())
}

fn random_bits(rng: &mut ChaCha8Rng, format: PositFormat) -> PositWord {
    PositWord::from_bits_truncate(rng.gen(), format)
}

/// Mostly normal words with uniformly chosen sign and regime length, with
/// occasional zero and NaR.
fn random_operand(rng: &mut ChaCha8Rng, format: PositFormat) -> PositWord {
    match rng.gen_range(0..64) {
        0..=3 => PositWord::zero(format),
        4 => PositWord::nar(format),
        _ => {
            let run = random_run(rng, format);
            let negative = rng.gen();
            word_with(rng, format, negative, run)
        }
    }
}

/// A nonzero word whose regime is a run of exactly `run` identical bits.
/// A run of `n - 1` bits exists only as ones (maxpos).
fn word_with(rng: &mut ChaCha8Rng, format: PositFormat, negative: bool, run: u32) -> PositWord {
    let body_bits = format.n() - 1;
    let body = if run >= body_bits {
        (1u32 << body_bits) - 1
    } else {
        let rest_bits = body_bits - run - 1;
        let rest = rng.gen::<u32>() & ((1u32 << rest_bits) - 1);
        let regime = if rng.gen() {
            ((1u32 << run) - 1) << 1
        } else {
            1
        };
        (regime << rest_bits) | rest
    };
    let bits = if negative { body.wrapping_neg() } else { body };
    PositWord::from_bits_truncate(bits, format)
}

/// Lane sums built to land exactly on a rounding boundary: `p * 1 + d * 1`
/// with `p + d` equal to the boundary above `p`. Some vectors add
/// `minpos * (+-minpos)` as a third issue to sit just beside the tie, and
/// half of them negate every `a` operand.
fn tie_issues(rng: &mut ChaCha8Rng, mode: Mode) -> Vec<Issue> {
    let format = mode.format();
    let lanes = mode.lanes();
    let one = PositWord::one(format);
    let negate = rng.gen::<bool>();
    let perturb = rng.gen_range(0..3u8);
    let mut columns: Vec<Vec<(PositWord, PositWord)>> = vec![Vec::new(); lanes];
    for column in &mut columns {
        let (p, d) = tie_pair(rng, format);
        let sign = |w: PositWord| if negate { w.neg() } else { w };
        column.push((sign(p), one));
        column.push((sign(d), one));
        if perturb > 0 {
            let m = PositWord::minpos(format);
            column.push((m, if perturb == 1 { m } else { m.neg() }));
        }
    }
    let all = LaneMask::all(mode);
    (0..columns[0].len())
        .map(|i| {
            let pairs: Vec<_> = columns.iter().map(|c| c[i]).collect();
            issue(mode, &pairs, all)
        })
        .collect()
}

fn tie_pair(rng: &mut ChaCha8Rng, format: PositFormat) -> (PositWord, PositWord) {
    loop {
        let p = rng.gen_range(1..format.maxpos_bits());
        let word = PositWord::from_bits_truncate(p, format);
        let gap: BigRational = rounding_boundary(p, format) - word.to_real().expect("positive");
        let d = nearest_posit(&gap, format);
        if d.to_real().ok().as_ref() == Some(&gap) {
            return (word, d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_are_reproducible() {
        let g = Generator::new(Mode::P16, 7);
        assert_eq!(g.vector(123), g.vector(123));
        assert_ne!(g.vector(123), Generator::new(Mode::P16, 8).vector(123));
        assert_eq!(g.vectors(10)[4], g.vector(4));
    }

    #[test]
    fn requested_regime_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for format in PositFormat::ALL {
            for run in 1..format.n() {
                for negative in [false, true] {
                    let d = word_with(&mut rng, format, negative, run).decode();
                    assert_eq!(d.class, PositClass::Normal);
                    assert_eq!(d.sign, negative);
                    assert_eq!(regime_length(d.k), run);
                }
            }
        }
    }

    #[test]
    fn tie_vectors_are_ties() {
        for mode in Mode::ALL {
            let g = Generator::new(mode, 3);
            let mut ties = 0;
            for i in 0..20 {
                let v = g.vector(3 + KINDS * i);
                if v.issues.len() == 2 {
                    for pairs in v.lane_pairs() {
                        assert!(is_tie(&pairs, mode.format()), "{v}");
                        ties += 1;
                    }
                }
            }
            assert!(ties > 0);
        }
    }

    #[test]
    fn small_campaign_covers_every_bin() {
        for mode in Mode::ALL {
            let mut coverage = Coverage::default();
            for v in Generator::new(mode, 11).vectors(6 * 40) {
                coverage.merge(&Coverage::of(&v));
            }
            assert_eq!(coverage.missing(mode.format()), vec![], "{mode}");
        }
    }

    #[test]
    fn exhaustive_set_shape() {
        let all = exhaustive_p8();
        assert_eq!(all.len() * 4, 65536);
        assert_eq!(all[0x3c3f].issues[0].a.lane(Mode::P8, 0), 0xf0);
        assert_eq!(all[0x3c3f].issues[0].b.lane(Mode::P8, 3), 0xff);
    }
}
