//! `verify`: run, classify, and check the delegated-computation protocol.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qcverify::adversary::parse_attack;
use qcverify::circuit::{classify_instance, compile_to_gadgets, parse_circuit};
use qcverify::harness::{emit_report, run_experiment, ReportFormat};
use qcverify::protocol::ProverPolicy;
use qcverify::suite;
use qcverify::{ExperimentConfig, ProtocolChoice, ProverSpec, RunPolicy};

#[derive(Parser)]
#[command(
    name = "verify",
    version,
    about = "Simulator and verification harness for a delegated quantum computation protocol",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of protocol executions on a circuit and report the rates.
    Run(RunArgs),
    /// Print the ideal output probability and decision label of a circuit.
    Oracle(OracleArgs),
    /// Run the built-in acceptance criteria (all, or a subset via --only).
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    /// Verifier prepares and sends each qubit.
    Direct,
    /// Verifier shares entangled pairs and defers its measurements.
    Epr,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProverArg {
    /// Follows the protocol exactly.
    Honest,
    /// Reports zeros without touching the register.
    EchoZero,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunArg {
    /// Fresh uniform draw over the three run types each trial.
    Random,
    Comp,
    Xtest,
    Ztest,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    /// Circuit file (lines: `qubits N`, then `X|Z|H|T w` or `CNOT i j`).
    circuit: PathBuf,
    /// Protocol form.
    #[arg(long, value_enum, default_value_t = ProtocolArg::Epr)]
    protocol: ProtocolArg,
    /// Built-in prover policy (ignored if --attack is given).
    #[arg(long, value_enum, default_value_t = ProverArg::Honest)]
    prover: ProverArg,
    /// Attack file: the prover follows the protocol, then applies this
    /// operation to its register before reporting.
    #[arg(long)]
    attack: Option<PathBuf>,
    /// Verifier run-type policy.
    #[arg(long = "run", value_enum, default_value_t = RunArg::Random)]
    run_policy: RunArg,
    /// Number of protocol executions.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Base seed; every trial derives its own stream from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Report encoding.
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Write the report to this file instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Circuit file.
    circuit: PathBuf,
    /// Emit a JSON object instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Criterion ids to run (1..=9); all of them by default.
    #[arg(long, num_args = 1.., value_delimiter = ' ')]
    only: Option<Vec<usize>>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run(args) => exit_on_error(cmd_run(args)),
        Command::Oracle(args) => exit_on_error(cmd_oracle(args)),
        Command::Check(args) => match cmd_check(args) {
            Ok(all_passed) => {
                if all_passed {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(2)
                }
            }
            Err(err) => {
                eprintln!("error: {err:#}");
                ExitCode::from(1)
            }
        },
    }
}

fn exit_on_error(result: Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let circuit_text = fs::read_to_string(&args.circuit)
        .with_context(|| format!("reading circuit file {}", args.circuit.display()))?;
    let prover = match &args.attack {
        Some(path) => {
            let attack_text = fs::read_to_string(path)
                .with_context(|| format!("reading attack file {}", path.display()))?;
            let program = compile_to_gadgets(&parse_circuit(&circuit_text)?)?;
            ProverSpec::Attacked(parse_attack(&attack_text, program.dims())?)
        }
        None => ProverSpec::Policy(match args.prover {
            ProverArg::Honest => ProverPolicy::Honest,
            ProverArg::EchoZero => ProverPolicy::EchoZero,
        }),
    };
    let config = ExperimentConfig {
        circuit: circuit_text,
        protocol: match args.protocol {
            ProtocolArg::Direct => ProtocolChoice::Direct,
            ProtocolArg::Epr => ProtocolChoice::Epr,
        },
        prover,
        run_policy: match args.run_policy {
            RunArg::Random => RunPolicy::Random,
            RunArg::Comp => RunPolicy::Comp,
            RunArg::Xtest => RunPolicy::XTest,
            RunArg::Ztest => RunPolicy::ZTest,
        },
        trials: args.trials,
        seed: args.seed,
    };
    let report = run_experiment(&config)?;
    let rendered = emit_report(
        &report,
        match args.format {
            FormatArg::Text => ReportFormat::Text,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        },
    )?;
    match &args.report {
        Some(path) => {
            fs::write(path, &rendered)
                .with_context(|| format!("writing report to {}", path.display()))?;
            println!("report written to {}", path.display());
        }
        None => print!("{rendered}"),
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let circuit_text = fs::read_to_string(&args.circuit)
        .with_context(|| format!("reading circuit file {}", args.circuit.display()))?;
    let circuit = parse_circuit(&circuit_text)?;
    let label = classify_instance(&circuit)?;
    let program = compile_to_gadgets(&circuit)?;
    let dims = program.dims();
    if args.json {
        let value = serde_json::json!({
            "p": label.p,
            "kind": label.kind.name(),
            "n": dims.n,
            "t": dims.t,
            "m": dims.m(),
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!("ideal output-0 probability: {}", label.p);
        println!("instance: {}", label.kind.name());
        println!(
            "compiled register: n={} data wires, t={} gadgets, m={} slots",
            dims.n,
            dims.t,
            dims.m()
        );
    }
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<bool> {
    if let Some(ids) = &args.only {
        if ids.is_empty() {
            anyhow::bail!("--only needs at least one criterion id");
        }
        for id in ids {
            if !(1..=9).contains(id) {
                anyhow::bail!("criterion id {id} out of range (1..=9)");
            }
        }
    }
    let results = suite::run_all(args.only.as_deref());
    let mut passed = 0usize;
    for result in &results {
        println!(
            "criterion {} ({}): {} in {:.2}s — {}",
            result.id,
            result.name,
            if result.passed { "PASS" } else { "FAIL" },
            result.elapsed_s,
            result.details
        );
        passed += usize::from(result.passed);
    }
    println!("{passed}/{} criteria passed", results.len());
    Ok(passed == results.len())
}
