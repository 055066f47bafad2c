use std::fmt;

use rayon::prelude::*;

use crate::conformance::generate::Coverage;
use crate::conformance::vector::{Issue, Vector};
use crate::engine::Engine;
use crate::error::Result;
use crate::posit::PositClass;
use crate::simd::{Mode, SimdWord};

/// Anything that can play a vector's issues and return the readout.
pub trait Device: Sync {
    fn execute(&self, mode: Mode, issues: &[Issue]) -> Result<SimdWord>;
}

/// The SIMD MAC engine, reset before every vector.
#[derive(Clone, Copy, Debug, Default)]
pub struct EngineDevice;

impl Device for EngineDevice {
    fn execute(&self, mode: Mode, issues: &[Issue]) -> Result<SimdWord> {
        let mut engine = Engine::new(mode);
        for i in issues {
            engine.accumulate(i.a, i.b, i.enables)?;
        }
        Ok(engine.readout())
    }
}

/// Test fixture: the engine with the sticky bit fed to the packer inverted
/// in one lane. Only rounding decisions that hinge on sticky change.
#[derive(Clone, Copy, Debug)]
pub struct StickyFault {
    pub lane: usize,
}

impl Device for StickyFault {
    fn execute(&self, mode: Mode, issues: &[Issue]) -> Result<SimdWord> {
        let mut engine = Engine::new(mode);
        for i in issues {
            engine.accumulate(i.a, i.b, i.enables)?;
        }
        let mut word = engine.readout();
        if self.lane < mode.lanes() {
            let mut normalized = engine.quire(self.lane).normalize();
            if normalized.class != PositClass::Normal {
                return Ok(word);
            }
            normalized.sticky = !normalized.sticky;
            word = word.with_lane(mode, self.lane, normalized.pack(mode.format()).word.bits());
        }
        Ok(word)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    /// Position in the campaign.
    pub index: usize,
    pub vector: Vector,
    pub actual: SimdWord,
}

/// Outcome of a campaign. Failures are listed in vector order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    pub vectors: usize,
    /// Lane results compared, one per lane per vector.
    pub lane_cases: usize,
    pub lane_passes: usize,
    pub failures: Vec<Failure>,
    pub coverage: Coverage,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Failing vectors with the device output appended as a comment, ready
    /// to be replayed as a vector file.
    pub fn failure_lines(&self) -> String {
        self.failures
            .iter()
            .map(|f| format!("{}  # vector {} got {}\n", f.vector, f.index, f.actual))
            .collect()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} vectors, {}/{} lane results match",
            self.vectors, self.lane_passes, self.lane_cases
        )?;
        if self.coverage.is_empty() {
            writeln!(f, "coverage: (none)")?;
        } else {
            let bins: Vec<String> = self.coverage.iter().map(|(b, n)| format!("{b}={n}")).collect();
            writeln!(f, "coverage: {}", bins.join(" "))?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Runs every vector on `device`, comparing lane by lane with the expected
/// word. Work is spread over threads and merged back in vector order.
pub fn run_campaign(device: &impl Device, vectors: &[Vector]) -> Result<Report> {
    let outcomes = vectors
        .par_iter()
        .map(|v| Ok((device.execute(v.mode, &v.issues)?, Coverage::of(v))))
        .collect::<Result<Vec<_>>>()?;
    let mut report = Report {
        vectors: vectors.len(),
        ..Report::default()
    };
    for (index, (v, (actual, coverage))) in vectors.iter().zip(outcomes).enumerate() {
        let lanes = v.mode.lanes();
        let matching = (0..lanes)
            .filter(|&l| actual.lane(v.mode, l) == v.expected.lane(v.mode, l))
            .count();
        report.lane_cases += lanes;
        report.lane_passes += matching;
        report.coverage.merge(&coverage);
        if matching != lanes {
            report.failures.push(Failure {
                index,
                vector: v.clone(),
                actual,
            });
        }
    }
    Ok(report)
}
