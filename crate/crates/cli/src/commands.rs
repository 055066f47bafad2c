use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use log::info;
use spade_core::conformance::{
    dump_vectors, exhaustive_p8, parse_vectors, run_campaign, EngineDevice, Generator, Issue, Report,
    StickyFault,
};
use spade_core::nn::{evaluate, Arithmetic, Backend, Dataset, Evaluation, Model};
use spade_core::{Engine, LaneMask, Mode, PositClass, PositFormat, PositWord, SimdWord};

use crate::Command;

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Decode { format, word } => decode(&format, &word),
        Command::Conformance {
            mode,
            count,
            seed,
            exhaustive,
            vectors,
            dump,
            failures,
            inject_sticky_fault,
        } => {
            let mode: Mode = mode.parse()?;
            let vectors = if let Some(path) = vectors {
                let text = read(&path)?;
                parse_vectors(&text).with_context(|| path.display().to_string())?
            } else if exhaustive {
                if mode != Mode::P8 {
                    bail!("--exhaustive is only available for p8");
                }
                exhaustive_p8()
            } else {
                Generator::new(mode, seed).vectors(count)
            };
            if let Some(path) = dump {
                write(&path, &dump_vectors(&vectors))?;
            }
            let report = match inject_sticky_fault {
                Some(lane) => run_campaign(&StickyFault { lane }, &vectors)?,
                None => run_campaign(&EngineDevice, &vectors)?,
            };
            conformance_report(&report, failures.as_deref())
        }
        Command::Trace {
            mode,
            operands,
            output,
        } => trace(mode.parse()?, &operands, &output),
        Command::Infer {
            weights,
            data,
            precisions,
            layers,
            count,
            reference,
            csv,
        } => infer(&weights, &data, &precisions, layers.as_deref(), count, reference, csv),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn decode(format: &str, word: &str) -> Result<ExitCode> {
    let format: PositFormat = format.parse()?;
    let word = PositWord::from_hex(format, word)?;
    let d = word.decode();
    println!("format   {format}");
    println!("word     {word}");
    match d.class {
        PositClass::NaR => println!("value    NaR"),
        PositClass::Zero => println!("value    0"),
        PositClass::Normal => {
            let n = format.n();
            let run = if d.k >= 0 { d.k as u32 + 1 } else { (-d.k) as u32 };
            let terminator = u32::from(run < n - 1);
            let field = (n - 1).saturating_sub(run + terminator + format.es());
            let register = format.frac_width() - 1;
            let frac = (d.frac & ((1 << register) - 1)) >> (register - field);
            let frac = if field == 0 {
                "(none)".to_string()
            } else {
                format!("{frac:0width$b}", width = field as usize)
            };
            println!("sign     {}", d.sign as u8);
            println!("k        {}", d.k);
            println!("e        {}", d.e);
            println!("fraction {frac}");
            println!("sf       {}", d.sf);
            println!("value    {}", word.to_real()?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn conformance_report(report: &Report, failures: Option<&Path>) -> Result<ExitCode> {
    println!("{report}");
    if report.passed() {
        return Ok(ExitCode::SUCCESS);
    }
    match failures {
        Some(path) => {
            write(path, &report.failure_lines())?;
            println!("{} failing vectors written to {}", report.failures.len(), path.display());
        }
        None => {
            println!("# failing vectors");
            print!("{}", report.failure_lines());
        }
    }
    Ok(ExitCode::from(1))
}

/// One issue per line: `a b [enables]`.
fn parse_operands(text: &str, mode: Mode) -> Result<Vec<Issue>> {
    let mut issues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse = || -> Result<Issue> {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let (a, b, en) = match fields.as_slice() {
                [a, b] => (a, b, None),
                [a, b, en] => (a, b, Some(en)),
                _ => bail!("expected `a b [enables]`, found {} fields", fields.len()),
            };
            let enables = match en {
                Some(en) => LaneMask::new(u8::from_str_radix(en, 16).context("bad enables")?, mode)?,
                None => LaneMask::all(mode),
            };
            Ok(Issue {
                a: SimdWord::from_hex(a)?,
                b: SimdWord::from_hex(b)?,
                enables,
            })
        };
        issues.push(parse().with_context(|| format!("line {}", i + 1))?);
    }
    Ok(issues)
}

fn trace(mode: Mode, operands: &Path, output: &Path) -> Result<ExitCode> {
    let issues = parse_operands(&read(operands)?, mode).with_context(|| operands.display().to_string())?;
    let mut engine = Engine::new(mode);
    let mut log = String::new();
    for issue in &issues {
        let record = engine.issue(issue.a, issue.b, issue.enables)?;
        log.push_str(&record.to_string());
        log.push('\n');
    }
    write(output, &log)?;
    info!("{} issues traced to {}", issues.len(), output.display());
    Ok(ExitCode::SUCCESS)
}

fn infer(
    weights: &Path,
    data: &Path,
    precisions: &[String],
    layers: Option<&str>,
    count: usize,
    reference: bool,
    csv: bool,
) -> Result<ExitCode> {
    let mut model = Model::read(weights)?;
    if let Some(list) = layers {
        let per_layer = list
            .split(',')
            .map(|t| match t.trim() {
                "-" => Ok(None),
                t => t.parse().map(Some),
            })
            .collect::<spade_core::Result<Vec<_>>>()?;
        model.set_compute_precisions(&per_layer)?;
    }
    let dataset = Dataset::load_dir(data)?;
    let formats = if precisions.is_empty() {
        PositFormat::ALL.to_vec()
    } else {
        precisions
            .iter()
            .filter(|p| !matches!(p.as_str(), "float" | "float64"))
            .map(|p| p.parse())
            .collect::<spade_core::Result<Vec<_>>>()?
    };
    let backend = if reference { Backend::Reference } else { Backend::Engine };

    let baseline = evaluate(&model, &dataset, count, Arithmetic::Float64)?;
    let mut rows = vec![("float64".to_string(), baseline.clone())];
    for format in formats {
        let arithmetic = Arithmetic::Posit {
            default: format,
            backend,
        };
        rows.push((format.short_name().to_string(), evaluate(&model, &dataset, count, arithmetic)?));
    }
    print_accuracy(&rows, &baseline, csv);
    Ok(ExitCode::SUCCESS)
}

fn print_accuracy(rows: &[(String, Evaluation)], baseline: &Evaluation, csv: bool) {
    let delta = |e: &Evaluation| 100.0 * (e.accuracy() - baseline.accuracy());
    if csv {
        println!("precision,samples,correct,accuracy,delta_pt");
        for (name, e) in rows {
            println!("{name},{},{},{:.4},{:.2}", e.samples, e.correct, e.accuracy(), delta(e));
        }
        return;
    }
    println!("{:<10} {:>9} {:>10} {:>9}", "precision", "correct", "accuracy", "delta");
    for (name, e) in rows {
        println!(
            "{name:<10} {:>9} {:>9.2}% {:>+8.2}pt",
            format!("{}/{}", e.correct, e.samples),
            100.0 * e.accuracy(),
            delta(e)
        );
    }
}
