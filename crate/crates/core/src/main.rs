use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use foliashadow::error::FsError;
use foliashadow::scenario::{list_scenarios, run_scenario, ScenarioConfig, Step};

#[derive(Parser)]
#[command(
    name = "foliashadow",
    version,
    about = "Foliated shadowing experiments on flat tori"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chain-recurrent cells and periodic-leaf certificates.
    CrSet(RunArgs),
    /// Layered shadows of random pseudo-orbits.
    Shadow(RunArgs),
    /// Set-valued semiconjugation, stability contract and continuity rows.
    Semiconj(RunArgs),
    /// Expansivity violation search and (e, N) scan.
    ExpansivityScan(RunArgs),
    /// Leaf-space system and shadowing transfer.
    Quotient(RunArgs),
    /// Every step configured in the scenario.
    All(RunArgs),
    /// Built-in scenarios.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON scenario file, or `builtin:<name>`.
    #[arg(long)]
    config: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn run(step: Step, args: RunArgs) -> ExitCode {
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let mut cfg = match ScenarioConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    match run_scenario(&cfg, step, &args.out) {
        Ok(m) => {
            for s in &m.steps {
                let status = if s.pass { "PASS" } else { "FAIL" };
                match &s.error {
                    Some(e) => println!("{status} {} ({e})", s.step),
                    None => println!("{status} {}", s.step),
                }
            }
            ExitCode::from(m.exit_code() as u8)
        }
        Err(FsError::Config(e)) => {
            eprintln!("error: configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::CrSet(a) => run(Step::CrSet, a),
        Command::Shadow(a) => run(Step::Shadow, a),
        Command::Semiconj(a) => run(Step::Semiconj, a),
        Command::ExpansivityScan(a) => run(Step::ExpansivityScan, a),
        Command::Quotient(a) => run(Step::Quotient, a),
        Command::All(a) => run(Step::All, a),
        Command::List => {
            for (name, desc) in list_scenarios() {
                println!("{name}\t{desc}");
            }
            ExitCode::SUCCESS
        }
    }
}
