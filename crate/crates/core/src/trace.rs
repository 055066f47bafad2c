//! Per-issue stage records and their line-oriented text form.
//!
//! One record per line, space-separated `key=value` fields in a fixed order:
//!
//! ```text
//! issue=0 mode=p8 a=00000060 b=00000068 en=f
//!   stage1.lane0=n0.0001.40,n0.0001.60 ... stage2.lane0=1800 ...
//!   stage3.lane0=00006000 ... stage4.lane0=n0.0002.180.0 ...
//!   stage4.lane0.grs=000 ... stage5.lane0=74 ...
//! ```
//!
//! (wrapped here; a record is a single line). Operands in stage 1 are
//! `z` (zero), `r` (NaR) or `n<sign>.<sf>.<frac>`, with the scale factor as a
//! 16-bit two's-complement hex number and the fraction register in `n/4`
//! digits. Stage 2 is the `2n`-bit mantissa product. Stage 3 is the full
//! quire, suffixed `:nar` when poisoned. Stage 4 is the normalizer output
//! `<class><sign>.<sf>.<frac_ext>.<sticky>`, and `grs` the guard, round and
//! sticky bits seen by the packer. Stage 5 is the rounded word.

use std::fmt::{self, Write as _};

use crate::engine::{accumulate_lane, multiply, unpack};
use crate::posit::{DecodedPosit, Packed, PositClass};
use crate::quire::{Normalized, Quire};
use crate::simd::{LaneMask, Mode, PerLane, SimdWord};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaneTrace {
    /// Stage 1
    pub operands: (DecodedPosit, DecodedPosit),
    /// Stage 2
    pub product: u64,
    /// Stage 3, after this issue
    pub quire: Quire,
    /// Stage 4
    pub normalized: Normalized,
    /// Stage 5
    pub packed: Packed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MacTrace {
    pub issue: u64,
    pub mode: Mode,
    pub a: SimdWord,
    pub b: SimdWord,
    pub enables: LaneMask,
    pub lanes: PerLane<LaneTrace>,
}

/// A stage whose recorded output does not follow from its recorded input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayMismatch {
    pub issue: u64,
    pub lane: usize,
    pub stage: u8,
}

impl fmt::Display for ReplayMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "issue {} lane {}: stage {} does not replay", self.issue, self.lane, self.stage)
    }
}

impl MacTrace {
    /// Re-runs every stage from its recorded inputs. `previous` holds the
    /// lane quires before this issue.
    pub fn replay(&self, previous: &[Quire]) -> Result<(), ReplayMismatch> {
        let mode = self.mode;
        let fail = |lane, stage| ReplayMismatch {
            issue: self.issue,
            lane,
            stage,
        };
        let ops_a = unpack(self.a, mode);
        let ops_b = unpack(self.b, mode);
        let products = multiply(&ops_a, &ops_b, mode);
        for (lane, record) in self.lanes.iter().enumerate() {
            let (a, b) = record.operands;
            let words_a = self.a.words(mode);
            let words_b = self.b.words(mode);
            if a != words_a[lane].decode() || b != words_b[lane].decode() || a != ops_a[lane] || b != ops_b[lane] {
                return Err(fail(lane, 1));
            }
            if record.product != products[lane] || record.product != a.frac as u64 * b.frac as u64 {
                return Err(fail(lane, 2));
            }
            let expected = if self.enables.contains(lane) {
                accumulate_lane(previous[lane], &a, &b, record.product)
            } else {
                previous[lane]
            };
            if expected.to_hex() != record.quire.to_hex() || expected.is_nar() != record.quire.is_nar() {
                return Err(fail(lane, 3));
            }
            if record.quire.normalize() != record.normalized {
                return Err(fail(lane, 4));
            }
            if record.normalized.pack(mode.format()) != record.packed {
                return Err(fail(lane, 5));
            }
        }
        Ok(())
    }

    /// Lane quires after this issue.
    pub fn quires(&self) -> Vec<Quire> {
        self.lanes.iter().map(|l| l.quire).collect()
    }

    /// The stage 5 words packed back into a SIMD word.
    pub fn result(&self) -> SimdWord {
        self.lanes
            .iter()
            .enumerate()
            .fold(SimdWord::ZERO, |w, (lane, l)| w.with_lane(self.mode, lane, l.packed.word.bits()))
    }
}

/// Replays a sequence of traces recorded from a freshly built engine.
pub fn replay_all(traces: &[MacTrace]) -> Result<(), ReplayMismatch> {
    let Some(first) = traces.first() else {
        return Ok(());
    };
    let mut quires = vec![Quire::zero(first.mode.format()); first.mode.lanes()];
    for trace in traces {
        trace.replay(&quires)?;
        quires = trace.quires();
    }
    Ok(())
}

fn class_char(class: PositClass) -> char {
    match class {
        PositClass::Zero => 'z',
        PositClass::NaR => 'r',
        PositClass::Normal => 'n',
    }
}

fn write_operand(out: &mut String, d: &DecodedPosit) {
    match d.class {
        PositClass::Normal => {
            let digits = d.format.hex_digits();
            let _ = write!(out, "n{}.{:04x}.{:0digits$x}", d.sign as u8, d.sf as i16 as u16, d.frac);
        }
        class => out.push(class_char(class)),
    }
}

impl fmt::Display for MacTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let format = self.mode.format();
        let mut out = String::new();
        let _ = write!(
            out,
            "issue={} mode={} a={} b={} en={:x}",
            self.issue,
            self.mode,
            self.a,
            self.b,
            self.enables.bits()
        );
        for (lane, l) in self.lanes.iter().enumerate() {
            let _ = write!(out, " stage1.lane{lane}=");
            write_operand(&mut out, &l.operands.0);
            out.push(',');
            write_operand(&mut out, &l.operands.1);
        }
        for (lane, l) in self.lanes.iter().enumerate() {
            let digits = 2 * format.hex_digits();
            let _ = write!(out, " stage2.lane{lane}={:0digits$x}", l.product);
        }
        for (lane, l) in self.lanes.iter().enumerate() {
            let nar = if l.quire.is_nar() { ":nar" } else { "" };
            let _ = write!(out, " stage3.lane{lane}={}{nar}", l.quire.to_hex());
        }
        for (lane, l) in self.lanes.iter().enumerate() {
            let n = &l.normalized;
            let digits = (format.frac_width() as usize + 2).div_ceil(4);
            let _ = write!(
                out,
                " stage4.lane{lane}={}{}.{:04x}.{:0digits$x}.{}",
                class_char(n.class),
                n.sign as u8,
                n.sf as i16 as u16,
                n.frac_ext,
                n.sticky as u8
            );
        }
        for (lane, l) in self.lanes.iter().enumerate() {
            let p = &l.packed;
            let _ = write!(
                out,
                " stage4.lane{lane}.grs={}{}{}",
                p.guard as u8, p.round as u8, p.sticky as u8
            );
        }
        for (lane, l) in self.lanes.iter().enumerate() {
            let _ = write!(out, " stage5.lane{lane}={}", l.packed.word);
        }
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Engine;

    #[test]
    fn single_issue_record() {
        let mut e = Engine::new(Mode::P8);
        let t = e
            .issue(SimdWord(0x60), SimdWord(0x68), LaneMask::all(Mode::P8))
            .unwrap();
        let line = t.to_string();
        assert!(line.starts_with("issue=0 mode=p8 a=00000060 b=00000068 en=f"));
        assert!(line.contains(" stage1.lane0=n0.0001.40,n0.0001.60"), "{line}");
        // 6 = 6 * 2^12 / 2^12 in the P8 quire
        assert!(line.contains(" stage2.lane0=1800"), "{line}");
        assert!(line.contains(" stage3.lane0=00006000"), "{line}");
        assert!(line.contains(" stage3.lane1=00000000"));
        assert!(line.contains(" stage5.lane0=74"));
        assert!(!line.contains('\n'));
        replay_all(&[t]).unwrap();
    }

    #[test]
    fn tampered_record_fails_replay() {
        let mut e = Engine::new(Mode::P16);
        let mut t = e
            .issue(SimdWord(0x4000_5000), SimdWord(0x4800_c000), LaneMask::all(Mode::P16))
            .unwrap();
        replay_all(std::slice::from_ref(&t)).unwrap();
        t.lanes[1].packed.sticky = !t.lanes[1].packed.sticky;
        assert_eq!(
            replay_all(&[t]).unwrap_err(),
            ReplayMismatch { issue: 0, lane: 1, stage: 5 }
        );
    }
}
