use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use switokd::train::Strategy;
use switokd_cli::compare::write_rows;
use switokd_cli::run::final_accuracies;
use switokd_cli::{cmd_compare, cmd_grad_check, cmd_timeline, cmd_train, CliError, CliResult, GradCheckArgs};

#[derive(Parser)]
#[command(name = "switokd", version, about = "Switchable online knowledge distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write a run directory.
    Train {
        /// Config file (`key = value` lines).
        config: PathBuf,
        /// Run directory to create; must be empty or absent.
        #[arg(long)]
        out: PathBuf,
        /// Override a config key, e.g. `--set strategy=dml`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare runs: each input is a config file (trained in memory) or a run directory.
    Compare {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Applied to every config input.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Allow inputs with different datasets or seeds.
        #[arg(long)]
        allow_mismatch: bool,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic loss gradients against finite differences.
    GradCheck {
        #[arg(long, default_value = "switokd")]
        strategy: String,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Scale the analytic KL gradient by 2; the check must then fail.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Print the mode timeline of a run as CSV with a summary block.
    Timeline {
        run_dir: PathBuf,
        /// Pair to show, e.g. `teacher-student1`; needed when the run has several.
        #[arg(long)]
        pair: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn create(path: &PathBuf) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, out, overrides } => {
            let report = cmd_train(&config, &overrides, &out)?;
            for (name, acc) in final_accuracies(&report.output.log) {
                println!("{name}: final test accuracy {acc:.4}");
            }
            for p in &report.output.pairs {
                let s = p.timeline.summary();
                println!(
                    "{}: {} iterations, expert fraction {:.3}, {} switches",
                    p.name, s.iterations, s.expert_fraction, s.switch_count
                );
            }
            println!("run written to {}", report.run_dir.display());
        }
        Command::Compare { inputs, overrides, allow_mismatch, out } => {
            let rows = cmd_compare(&inputs, &overrides, allow_mismatch)?;
            match out {
                Some(p) => write_rows(&rows, create(&p)?)?,
                None => write_rows(&rows, io::stdout().lock())?,
            }
        }
        Command::GradCheck { strategy, tau, alpha, beta, seed, instances, inject_fault } => {
            let strategy: Strategy = strategy.parse()?;
            let outcome = cmd_grad_check(GradCheckArgs { strategy, tau, alpha, beta, seed, instances, inject_fault })?;
            for r in &outcome.reports {
                let verdict = if r.max_rel_error <= outcome.tolerance { "ok" } else { "FAIL" };
                println!(
                    "{:<16} tau={:<5} instances={:<5} max_rel_error={:.3e} {verdict}",
                    r.form.as_str(),
                    r.tau,
                    r.instances,
                    r.max_rel_error
                );
            }
            if !outcome.passed() {
                return Err(CliError::Runtime(format!("gradient check failed (tolerance {:e})", outcome.tolerance)));
            }
            println!("gradient check passed (tolerance {:e})", outcome.tolerance);
        }
        Command::Timeline { run_dir, pair, out } => {
            let t = cmd_timeline(&run_dir, pair.as_deref())?;
            match out {
                Some(p) => t.write(create(&p)?)?,
                None => t.write(io::stdout().lock())?,
            }
        }
    }
    Ok(())
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
