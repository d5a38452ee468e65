use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use daod_cli::config::read_json_file;
use daod_cli::{cmd_run, cmd_sweep, cmd_synth, CliError, Mode, Overrides, RunConfig, SweepGrid};
use daod_core::data::SyntheticConfig;
use daod_core::UnknownPush;

#[derive(Parser)]
#[command(name = "daod", version, about = "Open set domain adaptation with DAOD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run DAOD or the OSNN baseline once.
    Run(RunArgs),
    /// Run over a hyperparameter grid and write summary.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Grid JSON file.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Write a synthetic dataset as feature files.
    Synth {
        /// Generator config JSON; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config JSON; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed of the synthetic generator.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Labeled source feature file.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target feature file.
    #[arg(long)]
    target: Option<PathBuf>,
    /// The target file has a ground-truth label column.
    #[arg(long)]
    target_labeled: bool,
    /// Use the synthetic benchmark as input.
    #[arg(long)]
    synthetic: bool,
    /// Write report.json without indentation.
    #[arg(long)]
    compact: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Neighbors per node of the affinity graph.
    #[arg(long)]
    neighbors: Option<usize>,
    /// OSNN distance-ratio threshold.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    jitter: Option<f64>,
    /// pseudo_unknown_only or all_targets.
    #[arg(long, value_parser = parse_push)]
    unknown_push: Option<UnknownPush>,
    /// Fixed kernel bandwidth instead of the median heuristic.
    #[arg(long)]
    bandwidth: Option<f64>,
}

fn parse_push(s: &str) -> Result<UnknownPush, String> {
    match s {
        "pseudo_unknown_only" => Ok(UnknownPush::PseudoUnknownOnly),
        "all_targets" => Ok(UnknownPush::AllTargets),
        _ => Err("expected pseudo_unknown_only or all_targets".into()),
    }
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let ov = Overrides {
            mode: self.mode,
            source: self.source,
            target: self.target,
            target_labeled: self.target_labeled,
            synthetic: self.synthetic,
            seed: self.seed,
            out: self.out,
            compact: self.compact,
            lambda: self.lambda,
            rho: self.rho,
            sigma: self.sigma,
            alpha: self.alpha,
            gamma: self.gamma,
            neighbors: self.neighbors,
            threshold: self.threshold,
            iterations: self.iterations,
            jitter: self.jitter,
            unknown_push: self.unknown_push,
            bandwidth: self.bandwidth,
        };
        RunConfig::load(self.config.as_deref(), &ov)
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let report = cmd_run(&cfg)?;
            if let Some(m) = &report.metrics {
                match m.acc_os_star {
                    Some(star) => println!("acc_os {:.4}  acc_os_star {star:.4}", m.acc_os),
                    None => println!("acc_os {:.4}", m.acc_os),
                }
            }
            println!("wrote {}", cfg.out.display());
        }
        Command::Sweep { run, grid } => {
            let cfg = run.into_config()?;
            let grid = SweepGrid::load(&grid)?;
            let rows = cmd_sweep(&cfg, &grid)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!(
                "{} points, {failed} failed; wrote {}",
                rows.len(),
                cfg.out.join("summary.csv").display()
            );
        }
        Command::Synth { config, seed, out } => {
            let mut cfg: SyntheticConfig = match config {
                Some(p) => read_json_file(&p)?,
                None => SyntheticConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cmd_synth(&cfg, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
