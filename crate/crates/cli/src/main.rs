//! `parskit`: analyze probabilistic abstract reduction systems from the
//! command line.
//!
//! Exit codes: 0 success, 1 I/O or usage error, 2 validation failure,
//! 3 analysis refused.

mod commands;
mod input;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use parskit::par::Execution;
use parskit::transform::Mode;

use report::Outcome;

#[derive(Parser)]
#[command(name = "parskit", version, about = "Confluence and almost-sure termination analysis for probabilistic reduction systems")]
struct Cli {
    /// Print the full JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Include wall-clock timing in the report (breaks byte reproducibility).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "C")]
    C,
    #[value(name = "Cprime")]
    Cprime,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::C => Mode::C,
            ModeArg::Cprime => Mode::Cprime,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a system document against the schema and distribution rules.
    Validate {
        path: String,
        /// Exploration depth for generated corpus systems.
        #[arg(long, default_value_t = 10)]
        depth: usize,
    },
    /// Decide structural and almost-sure properties.
    Analyze {
        path: String,
        /// Comma-separated property names (default: the six overview properties).
        #[arg(long)]
        properties: Option<String>,
        /// Window depth for generated systems.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Reaching and divergence probabilities.
    Prob {
        path: String,
        #[arg(long)]
        from: String,
        /// A single normal-form target.
        #[arg(long)]
        to: Option<String>,
        /// Emit the step-indexed trace up to this many steps.
        #[arg(long)]
        iterate: Option<usize>,
        /// Window depth for generated systems.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Monte Carlo estimate of reaching probabilities.
    Simulate {
        path: String,
        #[arg(long)]
        from: String,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 1_000)]
        steps: u64,
        #[arg(long, env = "PARSKIT_SEED", default_value_t = 0)]
        seed: u64,
        /// Window depth for generated systems (default: steps + 1).
        #[arg(long)]
        depth: Option<usize>,
        /// Run sample chunks on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Check a Lyapunov ranking certificate.
    Certify {
        path: String,
        /// Certificate document, or corpus:<name> for a shipped certificate.
        #[arg(long)]
        certificate: String,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Check transformation conditions between a source and a target system.
    Transform {
        source: Option<String>,
        target: Option<String>,
        /// Mapping document, or corpus:<name> for a shipped mapping.
        #[arg(long)]
        map: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Certificate used as almost-sure termination evidence for the source.
        #[arg(long)]
        as_term_cert: Option<String>,
    },
    /// Render a system as a DOT graph.
    ExportDot {
        path: String,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Built-in systems.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    List,
    /// Write the system document and annotations sidecar of an entry.
    Export {
        name: String,
        /// Output directory; prints to standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Window depth for generated entries.
        #[arg(long, default_value_t = 10)]
        depth: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Analyze { .. } => "analyze",
            Command::Prob { .. } => "prob",
            Command::Simulate { .. } => "simulate",
            Command::Certify { .. } => "certify",
            Command::Transform { .. } => "transform",
            Command::ExportDot { .. } => "export-dot",
            Command::Corpus {
                action: CorpusAction::List,
            } => "corpus list",
            Command::Corpus { .. } => "corpus export",
        }
    }
}

fn run(command: &Command) -> Result<Outcome> {
    match command {
        Command::Validate { path, depth } => commands::validate_cmd(path, *depth),
        Command::Analyze { path, properties, depth } => commands::analyze(path, properties.as_deref(), *depth),
        Command::Prob {
            path,
            from,
            to,
            iterate,
            depth,
        } => commands::prob_cmd(commands::ProbArgs {
            path,
            from,
            to: to.as_deref(),
            iterate: *iterate,
            depth: *depth,
        }),
        Command::Simulate {
            path,
            from,
            samples,
            steps,
            seed,
            depth,
            sequential,
        } => commands::simulate(commands::SimulateArgs {
            path,
            from,
            samples: *samples,
            steps: *steps,
            seed: *seed,
            depth: *depth,
            exec: if *sequential { Execution::Sequential } else { Execution::Parallel },
        }),
        Command::Certify {
            path,
            certificate,
            depth,
        } => commands::certify(path, certificate, *depth),
        Command::Transform {
            source,
            target,
            map,
            mode,
            as_term_cert,
        } => commands::transform_cmd(commands::TransformArgs {
            source: source.as_deref(),
            target: target.as_deref(),
            map,
            mode: mode.map(Mode::from),
            as_term_cert: as_term_cert.as_deref(),
        }),
        Command::ExportDot { path, depth } => commands::export_dot(path, *depth),
        Command::Corpus { action } => match action {
            CorpusAction::List => commands::corpus_list(),
            CorpusAction::Export { name, out, depth } => commands::corpus_export(name, out.as_deref(), *depth),
        },
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<parskit::Error>() {
        return match e {
            parskit::Error::Parse(_) | parskit::Error::BadProbability(_) | parskit::Error::Validation(_) => 2,
            parskit::Error::UnknownEntry(_) => 1,
            _ => 3,
        };
    }
    if err.downcast_ref::<serde_json::Error>().is_some() {
        return 2;
    }
    1
}

/// Writes a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let arguments: Vec<String> = std::env::args().skip(1).filter(|a| a != "--timing").collect();
    let started = Instant::now();
    match run(&cli.command) {
        Ok(outcome) => {
            let timing = cli.timing.then(|| started.elapsed().as_secs_f64() * 1e3);
            if cli.json {
                let v = report::envelope(cli.command.name(), &arguments, &outcome, timing);
                emit(&serde_json::to_string_pretty(&v).expect("report serializes"));
            } else {
                emit(&outcome.text);
                if let Some(ms) = timing {
                    emit(&format!("time: {ms:.1} ms"));
                }
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(err) => {
            let code = exit_code(&err);
            if cli.json {
                let v = serde_json::json!({
                    "schema_version": report::SCHEMA_VERSION,
                    "tool_version": env!("CARGO_PKG_VERSION"),
                    "command": cli.command.name(),
                    "arguments": arguments,
                    "error": format!("{err:#}"),
                    "exit_code": code,
                });
                emit(&serde_json::to_string_pretty(&v).expect("report serializes"));
            }
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
