use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wavemap::cli;
use wavemap::config::{parse_config, Method, RunConfig};
use wavemap::{Domain, Error, Result};

#[derive(Parser)]
#[command(name = "wavemap", version, about = "Equivariant wave map evolution (RK4 and Rattle)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one configuration.
    Run(RunArgs),
    /// Evolve with RK4 and Rattle and write a merged series.
    Compare(RunArgs),
    /// Bisect for the amplitude separating dispersal from flips.
    CriticalSearch {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        a_lo: f64,
        #[arg(long)]
        a_hi: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol_a: f64,
    },
    /// Fit the blow-up scaling law to the `s` column of a series file.
    FitScaling {
        series: PathBuf,
        #[arg(long)]
        t_min: f64,
        #[arg(long)]
        t_max: f64,
    },
    /// Evolve the static solution and measure its drift near the origin.
    StaticCheck {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0.4)]
        radius: f64,
    },
}

/// Values from `--config` are overridden by explicit flags.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short = 'A')]
    amplitude: Option<f64>,
    #[arg(long, short = 'N')]
    grid_n: Option<usize>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    domain: Option<Domain>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    /// Exponent of the initial bump.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    sample_stride: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
    #[arg(long)]
    no_energy_correction: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_config(&text)?
            }
            None => RunConfig::new(
                self.amplitude
                    .ok_or_else(|| Error::config("amplitude", "required without --config"))?,
                self.grid_n
                    .ok_or_else(|| Error::config("grid_n", "required without --config"))?,
            ),
        };
        macro_rules! apply {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { cfg.$field = v; })* };
        }
        apply!(amplitude, grid_n, method, domain, cfl, t_end, tol, max_iter, r1, r2, n, sample_stride, snapshot_times);
        if self.out.is_some() {
            cfg.out = self.out;
        }
        if self.no_energy_correction {
            cfg.energy_correction = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run(args) => {
            let (summary, _) = cli::run(&args.resolve()?)?;
            println!("{summary}");
            Ok(exit_for(summary.is_success()))
        }
        Command::Compare(args) => {
            let summaries = cli::compare(&args.resolve()?)?;
            for s in &summaries {
                println!("{s}");
            }
            Ok(exit_for(summaries.iter().all(|s| s.is_success())))
        }
        Command::CriticalSearch { run, a_lo, a_hi, tol_a } => {
            let r = cli::critical_search(&run.resolve()?, a_lo, a_hi, tol_a)?;
            println!(
                "a_star={:.10} bracket=[{:.10}, {:.10}] runs={} used_failed_runs={}",
                r.a_star, r.bracket.0, r.bracket.1, r.runs, r.used_failed_runs
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::FitScaling { series, t_min, t_max } => {
            let fit = cli::fit_scaling(&series, (t_min, t_max))?;
            println!(
                "T={:.10} b={:.10} residual={:e} iterations={} converged={}",
                fit.blowup_time, fit.b, fit.residual, fit.iterations, fit.converged
            );
            Ok(exit_for(fit.converged))
        }
        Command::StaticCheck { run, radius } => {
            let c = cli::static_check(&run.resolve()?, radius)?;
            println!(
                "t={} radius={} max_deviation={:e} status={:?}",
                c.t, c.radius, c.max_deviation, c.status
            );
            Ok(exit_for(c.status == wavemap::integrate::RunStatus::Completed))
        }
    }
}

fn exit_for(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
