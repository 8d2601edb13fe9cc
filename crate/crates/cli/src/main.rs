use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tensorbridge::{literal, value_and_grad, BackendId, DType, OpKind, TensorHandle};
use tensorbridge_conformance::{run_check, BackendExecutor, CheckConfig, Executor};

#[derive(Parser)]
#[command(name = "tb", version, about = "Cross-backend conformance checks and demos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the differential and gradient conformance suites.
    Check(CheckArgs),
    /// Run a small example computation on each backend.
    #[command(subcommand)]
    Demo(Demo),
    /// Print the op table.
    ListOps,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, env = "TB_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "f64", value_parser = parse_dtype)]
    dtype: DType,
    /// Comma-separated backend names (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_backend)]
    backends: Vec<BackendId>,
    /// Comma-separated op names (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_op)]
    ops: Vec<OpKind>,
    /// Report destination; `-` for stdout.
    #[arg(long, default_value = "-")]
    report: String,
}

#[derive(Subcommand)]
enum Demo {
    /// L2 norm of a tensor literal such as "[1,2,3]".
    Norm(DemoArgs),
    /// Value and gradient of sum(x^2).
    Grad(DemoArgs),
}

#[derive(Args)]
struct DemoArgs {
    literal: String,
    #[arg(long, value_delimiter = ',', value_parser = parse_backend)]
    backends: Vec<BackendId>,
    #[arg(long, default_value = "f64", value_parser = parse_dtype)]
    dtype: DType,
}

fn parse_dtype(s: &str) -> Result<DType, String> {
    s.parse()
}

fn parse_backend(s: &str) -> Result<BackendId, String> {
    s.parse().map_err(|e: tensorbridge::Error| e.to_string())
}

fn parse_op(s: &str) -> Result<OpKind, String> {
    s.parse()
}

const USAGE: u8 = 2;

fn or_all(backends: Vec<BackendId>, all: &[BackendId]) -> Vec<BackendId> {
    if backends.is_empty() {
        all.to_vec()
    } else {
        backends
    }
}

fn check(args: CheckArgs) -> ExitCode {
    let backends = or_all(args.backends, &BackendId::ALL);
    let executors: Vec<Box<dyn Executor>> = backends
        .iter()
        .map(|&b| Box::new(BackendExecutor::new(b)) as Box<dyn Executor>)
        .collect();
    let mut config = CheckConfig::new(args.seed, args.dtype, executors);
    if !args.ops.is_empty() {
        config.ops = Some(args.ops);
    }
    let report = match run_check(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    };

    let written = if args.report == "-" {
        report.write_jsonl(io::stdout().lock())
    } else {
        File::create(PathBuf::from(&args.report)).and_then(|f| report.write_jsonl(BufWriter::new(f)))
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report to {}: {e}", args.report);
        return ExitCode::FAILURE;
    }

    let s = report.summary();
    eprintln!(
        "{} cases, {} passed, {} failed, {} errored (seed {})",
        report.cases, s.passed, s.failed, s.errored, s.seed
    );
    if s.is_green() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn demo(demo: Demo) -> ExitCode {
    let (args, grad) = match demo {
        Demo::Norm(a) => (a, false),
        Demo::Grad(a) => (a, true),
    };
    let value = match literal::parse_dense(&args.literal, args.dtype) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    };
    let default = if grad { &BackendId::AUTODIFF[..] } else { &BackendId::ALL[..] };
    let mut out = io::stdout().lock();
    let mut status = ExitCode::SUCCESS;
    for backend in or_all(args.backends, default) {
        let x = TensorHandle::from_dense(backend, value.clone());
        let line = if grad {
            value_and_grad(|t| t.square()?.sum(), &x).map(|(v, g)| {
                format!("value={} grad={}", literal::format(v.value()), literal::format(g.value()))
            })
        } else {
            x.norm().map(|n| literal::format(n.value()))
        };
        match line {
            Ok(l) => {
                let _ = writeln!(out, "{backend}: {l}");
            }
            Err(e) => {
                eprintln!("{backend}: error: {}: {e}", e.kind());
                status = ExitCode::FAILURE;
            }
        }
    }
    status
}

fn list_ops() -> ExitCode {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{:<12} {:>5}  {:<14} params", "op", "arity", "differentiable");
    for kind in OpKind::ALL {
        let _ = writeln!(
            out,
            "{:<12} {:>5}  {:<14} {}",
            kind.name(),
            kind.arity(),
            kind.is_differentiable(),
            match kind.param_names() {
                [] => "-".to_string(),
                names => names.join(","),
            }
        );
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Check(args) => check(args),
        Command::Demo(d) => demo(d),
        Command::ListOps => list_ops(),
    }
}
