//! Command-line driver: build sketches from traces, merge them, recover
//! super hosts, and evaluate detections against exact ground truth.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 recovery aborted on
//! the tuple cap.

mod config_file;
mod report;

use anyhow::{bail, Context, Result};
use cbaa::distributed::{cube_to_bytes, global_merge, global_merge_bytes, read_cube, write_cube};
use cbaa::metrics::{score_detection, GroundTruth, MetricsError};
use cbaa::recover::{recover_all, DetectionReport, RecoverOptions};
use cbaa::trace::{normalize_records, read_trace, split_windows, write_binary, write_text, CidrPrefix};
use cbaa::update::{record_slice_parallel, UpdateOptions};
use cbaa::{
    Cube, HostClass, IpPair, PartitionPolicy, SynthSpec, ThresholdFormula, TraceFormat,
    TraceRecord,
};
use clap::{Args, Parser, Subcommand};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// A command-line misuse that clap's parser cannot catch itself.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "cbaa", version, about = "Super-host detection on a mergeable bit-array cube")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SketchArgs {
    /// Sketch parameter file (key=value lines); defaults apply to any key
    /// not present.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    /// Super-host cardinality threshold.
    #[arg(long, default_value_t = 1024)]
    theta: u32,
    /// Abort a sketch whose candidate tuple count exceeds this cap.
    #[arg(long, default_value_t = 1 << 24)]
    tuple_cap: u64,
    /// Hot-column threshold expression.
    #[arg(long, default_value = "paper", value_name = "paper|inverted")]
    threshold_formula: ThresholdFormula,
}

#[derive(Subcommand)]
enum Command {
    /// Record a trace into a new sketch file.
    Update {
        /// Input trace.
        trace: PathBuf,
        /// Trace encoding.
        #[arg(long, default_value = "text", value_name = "text|binary|binary-ts")]
        format: TraceFormat,
        /// Treat addresses inside these prefixes as the inner network and
        /// normalize raw pairs; records with zero or two inner sides are
        /// dropped and counted. Without this flag pairs are trusted as
        /// already normalized.
        #[arg(long, value_name = "CIDR", value_delimiter = ',')]
        inner_cidr: Vec<CidrPrefix>,
        /// Output sketch file.
        #[arg(long, short, value_name = "FILE")]
        output: PathBuf,
        #[command(flatten)]
        sketch: SketchArgs,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Merge sketch files into one.
    Merge {
        /// Input sketch files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output sketch file.
        #[arg(long, short, value_name = "FILE")]
        output: PathBuf,
    },
    /// Recover super hosts from a sketch file.
    Recover {
        /// Input sketch file.
        sketch: PathBuf,
        #[command(flatten)]
        recover: RecoverArgs,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Emit the report as CSV instead of text.
        #[arg(long)]
        csv: bool,
        /// Report destination (stdout if omitted).
        #[arg(long, short, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// List exact super hosts of a trace.
    Oracle {
        trace: PathBuf,
        #[arg(long, default_value = "text", value_name = "text|binary|binary-ts")]
        format: TraceFormat,
        /// Treat addresses inside these prefixes as the inner network and
        /// normalize raw pairs; records with zero or two inner sides are
        /// dropped and counted. Without this flag pairs are trusted as
        /// already normalized.
        #[arg(long, value_name = "CIDR", value_delimiter = ',')]
        inner_cidr: Vec<CidrPrefix>,
        #[arg(long, default_value_t = 1024)]
        theta: u32,
        /// Split the trace into windows of this many seconds first.
        #[arg(long, value_name = "SECONDS")]
        window_seconds: Option<u64>,
        #[arg(long)]
        csv: bool,
        #[arg(long, short, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Score a detection report against the exact truth of a trace.
    Evaluate {
        trace: PathBuf,
        /// Detection report (CSV, as written by `recover --csv`).
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        #[arg(long, default_value = "text", value_name = "text|binary|binary-ts")]
        format: TraceFormat,
        /// Treat addresses inside these prefixes as the inner network and
        /// normalize raw pairs; records with zero or two inner sides are
        /// dropped and counted. Without this flag pairs are trusted as
        /// already normalized.
        #[arg(long, value_name = "CIDR", value_delimiter = ',')]
        inner_cidr: Vec<CidrPrefix>,
        #[arg(long, default_value_t = 1024)]
        theta: u32,
    },
    /// Generate a synthetic trace with exact ground truth.
    Synth {
        /// Background hosts as COUNT:MIN_CARD:MAX_CARD.
        #[arg(long, value_name = "N:LO:HI")]
        background: String,
        /// Planted host class as COUNT:MIN_CARD:MAX_CARD (repeatable).
        #[arg(long, value_name = "N:LO:HI")]
        planted: Vec<String>,
        /// Mean packets per flow.
        #[arg(long, default_value_t = 1.0)]
        duplication: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trace destination.
        #[arg(long, short, value_name = "FILE")]
        output: PathBuf,
        /// Also write the exact truth as CSV (ip,cardinality).
        #[arg(long, value_name = "FILE")]
        truth: Option<PathBuf>,
        #[arg(long, default_value = "text", value_name = "text|binary")]
        format: TraceFormat,
    },
    /// End to end: partition a trace across simulated routers, build and
    /// merge their sketches, recover, and score against exact truth.
    Pipeline {
        trace: PathBuf,
        #[arg(long, default_value = "text", value_name = "text|binary|binary-ts")]
        format: TraceFormat,
        /// Treat addresses inside these prefixes as the inner network and
        /// normalize raw pairs; records with zero or two inner sides are
        /// dropped and counted. Without this flag pairs are trusted as
        /// already normalized.
        #[arg(long, value_name = "CIDR", value_delimiter = ',')]
        inner_cidr: Vec<CidrPrefix>,
        /// Number of simulated routers.
        #[arg(long, default_value_t = 1)]
        routers: usize,
        /// How pairs are spread across routers.
        #[arg(
            long,
            default_value = "hash-by-pair",
            value_name = "hash-by-pair|hash-by-inner|round-robin"
        )]
        policy: PartitionPolicy,
        #[command(flatten)]
        recover: RecoverArgs,
        #[command(flatten)]
        sketch: SketchArgs,
        /// Split the trace into windows of this many seconds first.
        #[arg(long, value_name = "SECONDS")]
        window_seconds: Option<u64>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        csv: bool,
        #[arg(long, short, value_name = "FILE")]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Update {
            trace,
            format,
            inner_cidr,
            output,
            sketch,
            workers,
        } => {
            let config = config_file::load(sketch.config.as_deref())?;
            let records = load_normalized(&trace, format, &inner_cidr)?;
            let pairs: Vec<IpPair> = records.iter().map(TraceRecord::pair).collect();
            let cube = Cube::new(config).context("invalid sketch configuration")?;
            let opts = UpdateOptions {
                workers,
                ..UpdateOptions::default()
            };
            let count = record_slice_parallel(&cube, &pairs, &opts);
            write_sketch(&cube, &output)?;
            eprintln!(
                "recorded {count} pairs into {} ({} bytes)",
                output.display(),
                cube.payload_bytes()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Merge { inputs, output } => {
            let mut cubes = Vec::with_capacity(inputs.len());
            for path in &inputs {
                cubes.push(read_sketch(path)?);
            }
            let merged = global_merge(cubes).map_err(|err| match err {
                cbaa::GlobalMergeError::ConfigMismatch { index, field } => anyhow::anyhow!(
                    "{} differs from {} on field `{field}`",
                    inputs[index].display(),
                    inputs[0].display()
                ),
                other => anyhow::anyhow!(other),
            })?;
            write_sketch(&merged, &output)?;
            eprintln!("merged {} sketches into {}", inputs.len(), output.display());
            Ok(ExitCode::SUCCESS)
        }

        Command::Recover {
            sketch,
            recover,
            workers,
            csv,
            output,
        } => {
            let cube = read_sketch(&sketch)?;
            let opts = recover_options(&recover, workers);
            let detection = recover_all(&cube, &opts);
            let mut out = open_output(output.as_deref())?;
            if csv {
                report::write_records_csv(&detection.records, &mut out)?;
            } else {
                report::write_records_text(&detection.records, opts.theta, &mut out)?;
            }
            finish_detection(&detection)
        }

        Command::Oracle {
            trace,
            format,
            inner_cidr,
            theta,
            window_seconds,
            csv,
            output,
        } => {
            let records = load_normalized(&trace, format, &inner_cidr)?;
            let windows = windowed(records, window_seconds)?;
            let mut out = open_output(output.as_deref())?;
            if csv {
                writeln!(out, "window,ip,cardinality")?;
            }
            for (index, window) in windows.iter().enumerate() {
                let truth = GroundTruth::from_pairs(window.iter().map(TraceRecord::pair));
                let hosts = truth.super_hosts(theta);
                if csv {
                    for (ip, card) in &hosts {
                        writeln!(out, "{index},{},{card}", std::net::Ipv4Addr::from(*ip))?;
                    }
                } else {
                    writeln!(
                        out,
                        "window {index}: {} super hosts (theta = {theta})",
                        hosts.len()
                    )?;
                    for (ip, card) in &hosts {
                        writeln!(out, "  {:<15} {card}", std::net::Ipv4Addr::from(*ip).to_string())?;
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Evaluate {
            trace,
            report: report_path,
            format,
            inner_cidr,
            theta,
        } => {
            let detected = report::read_records_csv(&report_path)?;
            let records = load_normalized(&trace, format, &inner_cidr)?;
            let truth = GroundTruth::from_pairs(records.iter().map(TraceRecord::pair));
            let mut out = std::io::stdout().lock();
            print_metrics(&detected, &truth, theta, &mut out)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Synth {
            background,
            planted,
            duplication,
            seed,
            output,
            truth,
            format,
        } => {
            if duplication < 1.0 {
                bail!(UsageError("--duplication must be at least 1".into()));
            }
            let spec = SynthSpec {
                background: parse_host_class(&background)?,
                planted: planted
                    .iter()
                    .map(|s| parse_host_class(s))
                    .collect::<Result<_>>()?,
                duplication,
                seed,
            };
            let (records, ground_truth) = cbaa::synth::synth_trace(&spec);
            let mut out = BufWriter::new(
                File::create(&output)
                    .with_context(|| format!("creating {}", output.display()))?,
            );
            match format {
                TraceFormat::Text => write_text(&records, &mut out)?,
                TraceFormat::Binary => write_binary(&records, &mut out, false)?,
                TraceFormat::BinaryTimed => {
                    bail!(UsageError(
                        "synthetic traces carry no timestamps; use text or binary".into()
                    ))
                }
            }
            out.flush()?;
            if let Some(truth_path) = truth {
                let mut out = BufWriter::new(
                    File::create(&truth_path)
                        .with_context(|| format!("creating {}", truth_path.display()))?,
                );
                report::write_truth_csv(&ground_truth, &mut out)?;
                out.flush()?;
            }
            eprintln!(
                "wrote {} records for {} hosts ({} flows) to {}",
                records.len(),
                ground_truth.host_count(),
                ground_truth.flow_count(),
                output.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Pipeline {
            trace,
            format,
            inner_cidr,
            routers,
            policy,
            recover,
            sketch,
            window_seconds,
            workers,
            csv,
            output,
        } => {
            if routers == 0 {
                bail!(UsageError("--routers must be at least 1".into()));
            }
            let config = config_file::load(sketch.config.as_deref())?;
            config.validate().context("invalid sketch configuration")?;
            let records = load_normalized(&trace, format, &inner_cidr)?;
            let windows = windowed(records, window_seconds)?;
            let opts = recover_options(&recover, workers);
            let update_opts = UpdateOptions {
                workers,
                ..UpdateOptions::default()
            };
            let mut out = open_output(output.as_deref())?;
            let mut overflowed = false;

            for (index, window) in windows.iter().enumerate() {
                let pairs: Vec<IpPair> = window.iter().map(TraceRecord::pair).collect();
                let files: Vec<Vec<u8>> = cbaa::distributed::partition_trace(&pairs, policy, routers)
                    .iter()
                    .map(|part| {
                        let local = Cube::new(config.clone()).expect("config validated above");
                        record_slice_parallel(&local, part, &update_opts);
                        cube_to_bytes(&local)
                    })
                    .collect();
                let merged = global_merge_bytes(files.iter().map(Vec::as_slice))
                    .context("merging per-router sketches")?;
                let detection = recover_all(&merged, &opts);
                let truth = GroundTruth::from_pairs(pairs.iter().copied());

                if csv {
                    if index == 0 {
                        writeln!(out, "window,ip,estimate,cs")?;
                    }
                    for record in &detection.records {
                        writeln!(
                            out,
                            "{index},{},{},{}",
                            std::net::Ipv4Addr::from(record.ip),
                            record.estimate,
                            record.cs
                        )?;
                    }
                    let mut err = std::io::stderr().lock();
                    writeln!(err, "window {index}:")?;
                    print_metrics(&detection.records, &truth, opts.theta, &mut err)?;
                } else {
                    writeln!(
                        out,
                        "== window {index}: {} pairs over {routers} router(s), policy {policy} ==",
                        pairs.len()
                    )?;
                    report::write_records_text(&detection.records, opts.theta, &mut out)?;
                    print_metrics(&detection.records, &truth, opts.theta, &mut out)?;
                }
                for overflow in &detection.overflows {
                    eprintln!("window {index}: {overflow}");
                }
                overflowed |= !detection.overflows.is_empty();
            }
            Ok(if overflowed {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}

fn recover_options(args: &RecoverArgs, workers: usize) -> RecoverOptions {
    RecoverOptions {
        theta: args.theta,
        tuple_cap: args.tuple_cap,
        formula: args.threshold_formula,
        workers,
    }
}

fn load_trace(path: &Path, format: TraceFormat) -> Result<Vec<TraceRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_trace(BufReader::new(file), format)
        .with_context(|| format!("parsing {}", path.display()))
}

fn load_normalized(
    path: &Path,
    format: TraceFormat,
    inner_cidr: &[CidrPrefix],
) -> Result<Vec<TraceRecord>> {
    let records = load_trace(path, format)?;
    if inner_cidr.is_empty() {
        return Ok(records);
    }
    let (kept, skipped) = normalize_records(records, inner_cidr);
    if skipped > 0 {
        eprintln!("skipped {skipped} record(s) with zero or two inner-side addresses");
    }
    Ok(kept)
}

fn windowed(
    records: Vec<TraceRecord>,
    window_seconds: Option<u64>,
) -> Result<Vec<Vec<TraceRecord>>> {
    match window_seconds {
        None => Ok(vec![records]),
        Some(0) => bail!(UsageError("--window-seconds must be positive".into())),
        Some(seconds) => Ok(split_windows(&records, seconds)?),
    }
}

fn read_sketch(path: &Path) -> Result<Cube> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_cube(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn write_sketch(cube: &Cube, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write_cube(cube, &mut out)?;
    out.flush()?;
    Ok(())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn finish_detection(detection: &DetectionReport) -> Result<ExitCode> {
    for overflow in &detection.overflows {
        eprintln!("{overflow}");
    }
    Ok(if detection.overflows.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn print_metrics(
    detected: &[cbaa::SuperHostRecord],
    truth: &GroundTruth,
    theta: u32,
    out: &mut dyn Write,
) -> Result<()> {
    match score_detection(detected, truth, theta) {
        Ok(metrics) => report::write_metrics_text(&metrics, out)?,
        Err(MetricsError::NoTrueSuperHosts(theta)) => {
            writeln!(
                out,
                "metrics undefined: no host reaches cardinality {theta}"
            )?;
        }
    }
    Ok(())
}

fn parse_host_class(s: &str) -> Result<HostClass> {
    let parts: Vec<&str> = s.split(':').collect();
    let usage = || UsageError(format!("expected COUNT:MIN_CARD:MAX_CARD, got `{s}`"));
    if parts.len() != 3 {
        bail!(usage());
    }
    let hosts: u32 = parts[0].parse().map_err(|_| usage())?;
    let lo: u32 = parts[1].parse().map_err(|_| usage())?;
    let hi: u32 = parts[2].parse().map_err(|_| usage())?;
    if lo < 1 || lo > hi {
        bail!(UsageError(format!(
            "cardinality range {lo}:{hi} must satisfy 1 <= min <= max"
        )));
    }
    Ok(HostClass::new(hosts, lo, hi))
}
