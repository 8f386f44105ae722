//! Command-line front end for `orbitq-core`.

pub mod input;
pub mod sweep;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use orbitq_core::measures::{compute, MeasureOptions, PerformanceMeasures};
use orbitq_core::oracle::{compare, oracle_measures, solve_stationary, CompareReport, StationarySolution};
use orbitq_core::{check_stability, Error, StabilityReport, SystemParams, Verdict};
use serde::Serialize;

use crate::input::{ParamArgs, TruncationArgs};
use crate::sweep::{Param, SweepSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_BOUNDARY: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "orbitq", version, about = "Stationary measures of a queue with two constant-rate retrial orbits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Loads of both orbits and the stability verdict.
    Stability(ParamArgs),
    /// Performance measures from the analytic solution.
    Measures(MeasuresArgs),
    /// Measures along a one-parameter grid, as CSV.
    Sweep(SweepArgs),
    /// Compare the analytic measures with the truncated chain.
    Verify(VerifyArgs),
    /// Stationary distribution of the truncated chain as CSV.
    DumpDistribution(DumpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct MeasuresArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Quadrature nodes on the contour.
    #[arg(long, env = "ORBITQ_NODES", default_value_t = orbitq_core::bvp::DEFAULT_NODES)]
    pub nodes: usize,
    /// Also run the truncated chain and report deviations.
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub rel_tol: f64,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Named preset sweep.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(sweep::PRESETS))]
    pub preset: Option<String>,
    #[arg(long, value_enum, required_unless_present = "preset")]
    pub vary: Option<Param>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long, default_value_t = 21)]
    pub steps: usize,
    /// Comma separated measure names.
    #[arg(long, value_delimiter = ',', default_value = "eq1,eq2")]
    pub outputs: Vec<String>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, env = "ORBITQ_NODES", default_value_t = orbitq_core::bvp::DEFAULT_NODES)]
    pub nodes: usize,
    /// Write to a file instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub rel_tol: f64,
    #[arg(long, env = "ORBITQ_NODES", default_value_t = orbitq_core::bvp::DEFAULT_NODES)]
    pub nodes: usize,
    #[command(flatten)]
    pub truncation: TruncationArgs,
}

#[derive(Debug, clap::Args)]
pub struct DumpArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Stable => EXIT_OK,
        Verdict::Boundary => EXIT_BOUNDARY,
        Verdict::Unstable => EXIT_UNSTABLE,
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn sink<'a>(path: &Option<PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(stdout),
    })
}

/// Refuse non-stable input: the report goes to stdout, a message to stderr.
fn gate(report: &StabilityReport, out: &mut dyn Write, err: &mut dyn Write) -> Result<Option<i32>> {
    if report.is_stable() {
        return Ok(None);
    }
    print_json(out, report)?;
    writeln!(err, "refusing to solve: verdict {}", report.verdict)?;
    Ok(Some(verdict_code(report.verdict)))
}

#[derive(Serialize)]
struct MeasuresOutput<'a> {
    params: SystemParams,
    stability: StabilityReport,
    measures: &'a PerformanceMeasures,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification: Option<CompareReport>,
}

/// Oracle solution, keeping an insufficient truncation with a warning.
fn oracle_solution(p: &SystemParams, t: &TruncationArgs, err: &mut dyn Write) -> Result<StationarySolution> {
    match solve_stationary(p, &t.spec()) {
        Ok(s) => Ok(s),
        Err(Error::TruncationInsufficient { solution, boundary_mass, .. }) => {
            writeln!(err, "warning: truncation mass {boundary_mass:e} above tolerance")?;
            Ok(*solution)
        }
        Err(e) => Err(e.into()),
    }
}

fn verification(m: &PerformanceMeasures, p: &SystemParams, t: &TruncationArgs, rel_tol: f64, err: &mut dyn Write) -> Result<CompareReport> {
    let ss = oracle_solution(p, t, err)?;
    let mut report = compare(m, &oracle_measures(&ss), rel_tol);
    if ss.boundary_mass >= t.tol {
        report.elevated_uncertainty = true;
    }
    Ok(report)
}

fn cmd_measures(a: &MeasuresArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let p = a.params.resolve()?;
    let report = check_stability(&p);
    if let Some(code) = gate(&report, out, err)? {
        return Ok(code);
    }
    let opts = MeasureOptions {
        nodes: a.nodes,
        estimate_error: true,
    };
    let mut m = compute(&p, &opts)?;
    let verification = if a.verify {
        let v = verification(&m, &p, &a.truncation, a.rel_tol, err)?;
        let worst = v.fields.iter().map(|f| f.abs_deviation).fold(0.0, f64::max);
        m.error_estimate = m.error_estimate.max(worst);
        Some(v)
    } else {
        None
    };
    match a.format {
        Format::Json => print_json(
            out,
            &MeasuresOutput {
                params: p,
                stability: report,
                measures: &m,
                verification,
            },
        )?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["field", "value"])?;
            for (name, v) in m.fields() {
                w.write_record([name.to_string(), v.to_string()])?;
            }
            w.write_record(["error_estimate".to_string(), m.error_estimate.to_string()])?;
            w.flush()?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let specs = match &a.preset {
        Some(name) => sweep::preset(name)?,
        None => {
            let varying = a.vary.context("--vary is required without --preset")?;
            let (Some(from), Some(to)) = (a.from, a.to) else {
                bail!("--from and --to are required without --preset");
            };
            let given = a.params.partial()?;
            let mut fixed = [0.0; 5];
            for (i, (slot, v)) in fixed.iter_mut().zip(given).enumerate() {
                match v {
                    Some(v) => *slot = v,
                    None if i == varying as usize => {}
                    None => bail!("missing fixed parameter {}", ["lambda1", "lambda2", "mu", "mu1", "mu2"][i]),
                }
            }
            vec![SweepSpec {
                varying,
                from,
                to,
                steps: a.steps,
                fixed,
                outputs: a.outputs.clone(),
            }]
        }
    };
    let opts = MeasureOptions {
        nodes: a.nodes,
        estimate_error: true,
    };
    let mut w = sink(&a.output, out)?;
    sweep::run(&specs, &opts, &mut w)?;
    w.flush()?;
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let p = a.params.resolve()?;
    let report = check_stability(&p);
    if let Some(code) = gate(&report, out, err)? {
        return Ok(code);
    }
    let m = compute(
        &p,
        &MeasureOptions {
            nodes: a.nodes,
            estimate_error: false,
        },
    )?;
    let v = verification(&m, &p, &a.truncation, a.rel_tol, err)?;
    print_json(out, &v)?;
    if v.pass {
        Ok(EXIT_OK)
    } else {
        writeln!(
            err,
            "verification failed: worst field {} (relative deviation {:e} > {:e})",
            v.worst_field, v.worst_rel_deviation, v.rel_tol
        )?;
        Ok(EXIT_MISMATCH)
    }
}

fn cmd_dump(a: &DumpArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let p = a.params.resolve()?;
    let report = check_stability(&p);
    if let Some(code) = gate(&report, out, err)? {
        return Ok(code);
    }
    let ss = oracle_solution(&p, &a.truncation, err)?;
    let mut w = sink(&a.output, out)?;
    ss.write_csv(&mut w)?;
    w.flush()?;
    Ok(EXIT_OK)
}

/// Runs one command and returns the process exit code. Errors are for
/// malformed input and solver failures; the caller maps them to exit 1.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Stability(args) => {
            let report = check_stability(&args.resolve()?);
            print_json(out, &report)?;
            Ok(verdict_code(report.verdict))
        }
        Command::Measures(a) => cmd_measures(a, out, err),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Verify(a) => cmd_verify(a, out, err),
        Command::DumpDistribution(a) => cmd_dump(a, out, err),
    }
}

/// Parses `args` and runs; usage errors print clap's message and give 1.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match run(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_USAGE
        }
    }
}

pub fn stdio_main() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    main_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
