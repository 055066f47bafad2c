//! Engine-versus-oracle conformance campaigns.

mod generate;
mod run;
mod vector;

pub use generate::{exhaustive_p8, Bin, Coverage, Generator, MAX_SEQUENCE};
pub use run::{run_campaign, Device, EngineDevice, Failure, Report, StickyFault};
pub use vector::{dump_vectors, oracle_readout, parse_vectors, Issue, Vector};
