use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

/// Bit-exact model of a multi-precision SIMD posit MAC engine.
#[derive(Debug, Parser)]
#[command(name = "spade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the fields and exact value of a posit word.
    Decode {
        /// p8, p16 or p32
        format: String,
        /// Fixed-width hex word, e.g. 6c for p8
        word: String,
    },

    /// Differential test of the engine against the exact oracle.
    ///
    /// Exit status is 0 when every lane matches, 1 on any mismatch and 2 on
    /// usage or I/O errors.
    Conformance {
        /// p8, p16 or p32 (or the mode code 00, 01, 10)
        mode: String,
        /// Number of generated vectors
        #[arg(long, default_value_t = 1000)]
        count: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Every 256 x 256 single-pair product (p8 only)
        #[arg(long, conflicts_with = "vectors")]
        exhaustive: bool,
        /// Run the vectors in this file instead of generating them
        #[arg(long, value_name = "FILE")]
        vectors: Option<PathBuf>,
        /// Write the vectors that were run to this file
        #[arg(long, value_name = "FILE")]
        dump: Option<PathBuf>,
        /// Write failing vectors here instead of standard output
        #[arg(long, value_name = "FILE")]
        failures: Option<PathBuf>,
        /// Invert the sticky bit of this lane before packing (harness check)
        #[arg(long, value_name = "LANE", hide = true)]
        inject_sticky_fault: Option<usize>,
    },

    /// Record the per-stage trace of a sequence of issues.
    ///
    /// The operand file has one issue per line: `a_hex b_hex [enables_hex]`,
    /// with 8-digit SIMD words and all lanes enabled by default.
    Trace {
        mode: String,
        operands: PathBuf,
        output: PathBuf,
    },

    /// Classify test images with the shipped model format.
    Infer {
        /// Weights container (.spdw)
        #[arg(long)]
        weights: PathBuf,
        /// Directory holding t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte
        #[arg(long, env = "SPADE_DATASET_DIR")]
        data: PathBuf,
        /// Run precisions: p8, p16, p32 (repeatable; default all three). The
        /// float64 baseline always runs; `float` alone runs only that
        #[arg(long = "precision", value_name = "FORMAT")]
        precisions: Vec<String>,
        /// Per compute layer precision, e.g. `p8,p16,p16,p32`; `-` keeps the
        /// run precision for that layer
        #[arg(long, value_name = "LIST")]
        layers: Option<String>,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Route dot products through the oracle instead of the engine
        #[arg(long)]
        reference: bool,
        /// Emit CSV instead of a table
        #[arg(long)]
        csv: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
