//! Replayable test vectors, one per line:
//!
//! ```text
//! # mode  a words   b words   enables  expected
//! p8      3c406068  40404068  f        7440405a
//! p16     40005000,3800c000  48004000,40004000  3,2  54005400
//! ```
//!
//! A vector is a sequence of issues into a freshly reset engine followed by
//! one readout. Issue fields are comma-separated lists of the same length:
//! 8-digit SIMD words for `a` and `b` and one lane-enable hex digit per issue.
//! `expected` is the readout word. `#` starts a comment.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::posit::PositWord;
use crate::reference::ref_mac;
use crate::simd::{LaneMask, Mode, PerLane, SimdWord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Issue {
    pub a: SimdWord,
    pub b: SimdWord,
    pub enables: LaneMask,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Vector {
    pub mode: Mode,
    pub issues: Vec<Issue>,
    pub expected: SimdWord,
}

impl Vector {
    /// Builds a vector with its expected readout taken from the oracle.
    pub fn new(mode: Mode, issues: Vec<Issue>) -> Self {
        let expected = oracle_readout(mode, &issues);
        Vector {
            mode,
            issues,
            expected,
        }
    }

    /// The operand pairs each lane accumulates, in issue order.
    pub fn lane_pairs(&self) -> PerLane<Vec<(PositWord, PositWord)>> {
        lane_pairs(self.mode, &self.issues)
    }
}

pub(crate) fn lane_pairs(mode: Mode, issues: &[Issue]) -> PerLane<Vec<(PositWord, PositWord)>> {
    let mut lanes: PerLane<Vec<_>> = (0..mode.lanes()).map(|_| Vec::new()).collect();
    for issue in issues {
        let (a, b) = (issue.a.words(mode), issue.b.words(mode));
        for (lane, pairs) in lanes.iter_mut().enumerate() {
            if issue.enables.contains(lane) {
                pairs.push((a[lane], b[lane]));
            }
        }
    }
    lanes
}

/// Per-lane `ref_mac` over everything the lane accumulated.
pub fn oracle_readout(mode: Mode, issues: &[Issue]) -> SimdWord {
    let format = mode.format();
    lane_pairs(mode, issues)
        .iter()
        .enumerate()
        .fold(SimdWord::ZERO, |w, (lane, pairs)| {
            w.with_lane(mode, lane, ref_mac(pairs, format).bits())
        })
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |field: fn(&Issue) -> String| {
            self.issues.iter().map(field).collect::<Vec<_>>().join(",")
        };
        write!(
            f,
            "{} {} {} {} {}",
            self.mode,
            join(|i| i.a.to_string()),
            join(|i| i.b.to_string()),
            join(|i| format!("{:x}", i.enables.bits())),
            self.expected
        )
    }
}

impl FromStr for Vector {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let &[mode, a, b, en, expected] = fields.as_slice() else {
            return Err(Error::parse(
                "vector",
                format!("expected 5 fields (mode a b enables expected), found {}", fields.len()),
            ));
        };
        let mode: Mode = mode.parse()?;
        let words = |text: &str| text.split(',').map(SimdWord::from_hex).collect::<Result<Vec<_>>>();
        let (a, b) = (words(a)?, words(b)?);
        let en = en
            .split(',')
            .map(|t| {
                u8::from_str_radix(t, 16)
                    .map_err(|_| Error::MalformedHex(t.to_string()))
                    .and_then(|bits| LaneMask::new(bits, mode))
            })
            .collect::<Result<Vec<_>>>()?;
        if a.len() != b.len() || a.len() != en.len() {
            return Err(Error::parse(
                "vector",
                format!("{} a words, {} b words, {} enables", a.len(), b.len(), en.len()),
            ));
        }
        let issues = a
            .into_iter()
            .zip(b)
            .zip(en)
            .map(|((a, b), enables)| Issue { a, b, enables })
            .collect();
        Ok(Vector {
            mode,
            issues,
            expected: SimdWord::from_hex(expected)?,
        })
    }
}

/// Parses a vector file, skipping blank lines and `#` comments. Errors carry
/// the 1-based line number.
pub fn parse_vectors(text: &str) -> Result<Vec<Vector>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line = line.split('#').next().unwrap_or("").trim();
            (!line.is_empty()).then(|| {
                line.parse().map_err(|e: Error| Error::parse(format!("line {}", i + 1), e.to_string()))
            })
        })
        .collect()
}

pub fn dump_vectors<'a>(vectors: impl IntoIterator<Item = &'a Vector>) -> String {
    vectors.into_iter().map(|v| format!("{v}\n")).collect()
}
