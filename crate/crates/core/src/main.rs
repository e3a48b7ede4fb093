use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use clusterlimit::config::{load_config, RunConfig};
use clusterlimit::estimates::{check_derivative_norms, check_trajectory};
use clusterlimit::experiments::{
    delta_sweep, gronwall_stability, mms_order_study, MmsOptions, StabilityOptions, SweepOptions,
    SweepReference,
};
use clusterlimit::grid::Grid;
use clusterlimit::io;
use clusterlimit::model::build_initial;
use clusterlimit::stepper::{run_from, RunOptions, Trajectory};
use clusterlimit::Error;

/// Vanishing-diffusion limit of a nonlocal clustering model on (-1, 1).
#[derive(Debug, Parser)]
#[command(name = "clusterlimit", version, arg_required_else_help = true)]
struct Cli {
    /// Suppress the summary printed to stdout.
    #[arg(long, global = true)]
    quiet: bool,
    /// Output directory; overrides output.dir and CLUSTERLIMIT_OUT_DIR.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Seed for the random_fourier initial condition.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation; write the trajectory, snapshots and estimate report.
    Simulate { config: PathBuf },
    /// Compare runs over sweep.deltas with the delta = 0 transport solution.
    Sweep { config: PathBuf },
    /// Re-run the simulation and the delta sweep and evaluate every estimate.
    Verify { config: PathBuf },
    /// Convergence orders against a manufactured solution.
    Mms { config: PathBuf },
    /// L1 stability of the transport system under small perturbations.
    Stability { config: PathBuf },
}

impl Command {
    fn config(&self) -> &Path {
        match self {
            Command::Simulate { config }
            | Command::Sweep { config }
            | Command::Verify { config }
            | Command::Mms { config }
            | Command::Stability { config } => config,
        }
    }
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    quiet: bool,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
        }
    }

    fn simulate(&self) -> Result<Trajectory, Error> {
        let g = Grid::new(self.cfg.n)?;
        let u0 = build_initial(&self.cfg.ic, &g)?;
        let opts = RunOptions {
            snapshot_stride: self.cfg.output.snapshot_stride,
            scheme: self.cfg.scheme,
            ..RunOptions::default()
        };
        run_from(u0, &self.cfg.params, &self.cfg.step, &g, &opts, None).map_err(|e| {
            if let Some(partial) = &e.partial {
                let _ = io::write_trajectory_csv(&self.path("trajectory_partial.csv"), partial);
            }
            e.error
        })
    }

    fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            reference: if self.cfg.sweep.self_reference {
                SweepReference::SmallestDelta
            } else {
                SweepReference::Transport
            },
            richardson: self.cfg.sweep.richardson,
            scheme: self.cfg.scheme,
            ..SweepOptions::default()
        }
    }
}

/// `Ok(true)` when every enabled check passed.
fn execute(cmd: &Command, ctx: &Context) -> Result<bool, Error> {
    let cfg = &ctx.cfg;
    match cmd {
        Command::Simulate { .. } => {
            let tr = ctx.simulate()?;
            io::write_trajectory_csv(&ctx.path("trajectory.csv"), &tr)?;
            io::write_snapshots_csv(&ctx.path("snapshots.csv"), &tr)?;
            let report = check_trajectory(&tr, &cfg.params)?;
            io::write_estimate_report(&ctx.path("estimates.csv"), &report)?;
            let text = format!(
                "{} steps to t = {}\n{}",
                tr.steps(),
                tr.final_time(),
                io::render_checks(&report.checks)
            );
            io::write_text(&ctx.path("report.txt"), &text)?;
            ctx.say(&text);
            Ok(report.all_passed())
        }
        Command::Sweep { .. } => {
            let g = Grid::new(cfg.n)?;
            let out = delta_sweep(
                &cfg.ic,
                &cfg.params,
                &cfg.sweep.deltas,
                &cfg.sweep.times,
                &cfg.step,
                &g,
                &ctx.sweep_options(),
            )?;
            io::write_sweep_report(&ctx.path("sweep.csv"), &out.report)?;
            let text = io::render_sweep(&out.report);
            io::write_text(&ctx.path("sweep.txt"), &text)?;
            ctx.say(&text);
            Ok(out.report.passed())
        }
        Command::Verify { .. } => {
            let tr = ctx.simulate()?;
            let mut checks = check_trajectory(&tr, &cfg.params)?.checks;
            let g = Grid::new(cfg.n)?;
            let sweep = delta_sweep(
                &cfg.ic,
                &cfg.params,
                &cfg.sweep.deltas,
                &cfg.sweep.times,
                &cfg.step,
                &g,
                &ctx.sweep_options(),
            )?;
            checks.extend(check_derivative_norms(
                &sweep.completed_runs(),
                &cfg.params,
                cfg.kappa,
            ));
            io::write_checks_csv(&ctx.path("verify.csv"), &checks)?;
            let text = io::render_checks(&checks);
            io::write_text(&ctx.path("verify.txt"), &text)?;
            ctx.say(&text);
            Ok(checks.iter().all(|c| c.passed) && sweep.report.diverged.is_empty())
        }
        Command::Mms { .. } => {
            let opts = MmsOptions {
                t_end: cfg.mms.t_end,
                dt_per_h: cfg.mms.dt_per_h,
                scheme: cfg.scheme,
            };
            let report = mms_order_study(&cfg.params, &cfg.mms.resolutions, &opts)?;
            io::write_order_report(&ctx.path("mms.csv"), &report)?;
            let text = io::render_order(&report);
            io::write_text(&ctx.path("mms.txt"), &text)?;
            ctx.say(&text);
            Ok(report.passed())
        }
        Command::Stability { .. } => {
            let g = Grid::new(cfg.n)?;
            let opts = StabilityOptions {
                refine: cfg.stability.refine,
                ..StabilityOptions::default()
            };
            let report = gronwall_stability(
                &cfg.ic,
                &cfg.params.with_delta(0.0),
                &cfg.stability.etas,
                &cfg.step,
                &g,
                &opts,
            )?;
            io::write_stability_report(
                &ctx.path("stability.csv"),
                &ctx.path("stability_series.csv"),
                &report,
            )?;
            let text = io::render_stability(&report);
            io::write_text(&ctx.path("stability.txt"), &text)?;
            ctx.say(&text);
            Ok(report.passed(cfg.stability.envelope_tolerance))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };

    let result = load_config(cli.command.config()).and_then(|mut cfg| {
        if let Some(seed) = cli.seed {
            cfg.set_seed(seed);
        }
        let out = cli
            .out_dir
            .clone()
            .unwrap_or_else(|| cfg.output.dir.clone());
        fs::create_dir_all(&out).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
        let ctx = Context {
            cfg,
            out,
            quiet: cli.quiet,
        };
        execute(&cli.command, &ctx)
    });

    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            if !cli.quiet {
                eprintln!("one or more checks failed");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
