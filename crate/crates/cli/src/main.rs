//! `alh`: run the experiments of a configuration and write their reports.
//!
//! Exit codes: 0 all checks pass, 1 configuration or validation error,
//! 2 numerical failure, 3 an inequality check failed, 4 inconclusive only.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alh_core::experiments::report::plot_script;
use alh_core::experiments::{overall, Experiment, ExperimentConfig, Report, Verdict};
use alh_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alh", version, about = "Asymptotic log-Harnack laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (key=value lines).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write a gnuplot script per experiment.
    #[arg(long)]
    plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the coefficient hypotheses and the test function.
    Validate(RunArgs),
    /// Solve for the Zvonkin map and check the transformed simulation.
    Zvonkin(RunArgs),
    /// Exponential decay of the coupled difference.
    Decay(RunArgs),
    /// Relative entropy of the coupling.
    Entropy(RunArgs),
    /// Asymptotic log-Harnack inequality for segments and laws.
    Alh(RunArgs),
    /// Growth of W2 between interacting particle systems.
    Growth(RunArgs),
    /// Gradient estimate of the semigroup.
    Gradient(RunArgs),
    /// Every experiment in turn.
    All(RunArgs),
    /// Print the summaries found in an output directory.
    Report {
        /// Directory holding `*_summary.txt` files.
        #[arg(long, short)]
        dir: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_FAILED: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;

fn error_code(e: &Error) -> u8 {
    match e {
        Error::SolverFailure { .. }
        | Error::LambdaExhausted { .. }
        | Error::OutOfDomain { .. }
        | Error::BlowUp { .. }
        | Error::SingularDiffusion { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Pass => 0,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        Verdict::Fail => EXIT_FAILED,
    }
}

fn write_report(r: &Report, dir: &Path, plots: bool) -> Result<(), Error> {
    r.write(dir)?;
    if plots {
        std::fs::write(dir.join(format!("{}.gp", r.experiment)), plot_script(r))?;
    }
    print!("{}", r.summary());
    Ok(())
}

fn run(experiments: &[Experiment], args: &RunArgs) -> Result<u8, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    let mut reports = Vec::new();
    for e in experiments {
        let r = e.run(&cfg)?;
        write_report(&r, &cfg.output_dir, args.plots)?;
        // a failed hypothesis certificate is a validation error
        if *e == Experiment::Validate && r.verdict() == Verdict::Fail {
            return Ok(EXIT_CONFIG);
        }
        reports.push(r);
    }
    Ok(verdict_code(overall(&reports)))
}

fn report(dir: &Path) -> Result<u8, Error> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read output directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("_summary.txt"))
        .collect();
    if files.is_empty() {
        return Err(Error::Config(format!("no summaries in {}", dir.display())));
    }
    files.sort();
    let mut worst = Verdict::Pass;
    for f in files {
        let text = std::fs::read_to_string(&f)?;
        print!("{text}");
        for line in text.lines() {
            let v = match line.split_whitespace().next() {
                Some("FAIL") => Verdict::Fail,
                Some("INCONCLUSIVE") => Verdict::Inconclusive,
                _ => Verdict::Pass,
            };
            worst = worst.max(v);
        }
    }
    println!("overall: {}", worst.label());
    Ok(verdict_code(worst))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let single = |e: Experiment, a: &RunArgs| run(&[e], a);
    let result = match &cli.command {
        Command::Validate(a) => single(Experiment::Validate, a),
        Command::Zvonkin(a) => single(Experiment::Zvonkin, a),
        Command::Decay(a) => single(Experiment::Decay, a),
        Command::Entropy(a) => single(Experiment::Entropy, a),
        Command::Alh(a) => single(Experiment::Alh, a),
        Command::Growth(a) => single(Experiment::Growth, a),
        Command::Gradient(a) => single(Experiment::Gradient, a),
        Command::All(a) => run(&Experiment::ALL, a),
        Command::Report { dir } => report(dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
