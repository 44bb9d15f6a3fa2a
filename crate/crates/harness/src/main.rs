use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use unisched_harness::experiment::{evaluate, frame_table, run_experiment, running_objective, sweep_v, ExperimentReport, Status};
use unisched_harness::output::{self, emit_outputs, read_report, read_trace, write_frames, write_sweep};
use unisched_harness::scenario::{load_with, Mode, Overrides, Scenario, System};

#[derive(Parser)]
#[command(name = "unisched", version, about = "Run drift-plus-penalty scenarios and check their bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, check every applicable bound and write trace, report and series.
    Run(Common),
    /// Solve the frame lookahead problems and write the per-frame optima.
    Oracle(Common),
    /// Recompute the verdicts from a previously written trace.
    Verify(Common),
    /// Repeat the run for several values of V.
    Sweep(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Capprox,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Penalty weight; `sweep` takes a comma-separated list.
    #[arg(long = "V", value_delimiter = ',')]
    v: Vec<f64>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long = "R")]
    r: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Seed of the event generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on action sequences enumerated per frame.
    #[arg(long)]
    budget: Option<u128>,
}

impl Common {
    fn overrides(&self, v: Option<f64>) -> Overrides {
        Overrides {
            v,
            t: self.t,
            r: self.r,
            mode: self.mode.map(|m| match m {
                ModeArg::Exact => Mode::Exact,
                ModeArg::Capprox => Mode::Capprox,
            }),
            seed: self.seed,
            budget: self.budget,
        }
    }

    fn single_v(&self) -> Result<Option<f64>> {
        match self.v.as_slice() {
            [] => Ok(None),
            [v] => Ok(Some(*v)),
            _ => bail!("give one value of V, or use `sweep`"),
        }
    }

    fn load(&self) -> Result<Scenario> {
        let v = self.single_v()?;
        load_with(&self.scenario, &self.overrides(v)).with_context(|| format!("loading {}", self.scenario.display()))
    }
}

fn print_verdicts(report: &ExperimentReport) {
    for v in &report.verdicts {
        let status = match v.status {
            Status::Holds => "HOLDS",
            Status::Fails => "FAILS",
            Status::Skipped => "SKIPPED",
        };
        println!("{status:<8} {}: {}", v.name, v.detail);
    }
}

fn exit_for(holds: bool) -> ExitCode {
    if holds {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(c: &Common) -> Result<ExitCode> {
    let s = c.load()?;
    let (report, trace) = run_experiment(&s)?;
    let running = running_objective(&s, &trace);
    emit_outputs(&c.out, &report, &trace, &running)?;
    print_verdicts(&report);
    Ok(exit_for(report.all_hold()))
}

fn oracle(c: &Common) -> Result<ExitCode> {
    let s = c.load()?;
    let frames = frame_table(&s)?;
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    write_frames(&c.out.join(output::FRAMES_FILE), &frames)?;
    let mean = frames.iter().map(|f| f.f_star).sum::<f64>() / frames.len() as f64;
    println!("{} frames, mean optimum {}", frames.len(), output::float(mean));
    Ok(ExitCode::SUCCESS)
}

fn verify(c: &Common) -> Result<ExitCode> {
    let s = c.load()?;
    let initial = match &s.system {
        System::General { initial, .. } => initial.clone(),
        System::Internet { model, .. } => unisched::QueueState::zeros(0, model.num_links(), model.sessions.len()),
        System::Multihop { model, .. } => unisched::QueueState::zeros(model.n * model.n, 0, model.sessions.len()),
    };
    let trace = read_trace(&c.out.join(output::TRACE_FILE), &initial)?;
    let report = evaluate(&s, &trace)?;
    print_verdicts(&report);
    let stored = c.out.join(output::REPORT_FILE);
    if Path::new(&stored).exists() && read_report(&stored)? != report {
        println!("MISMATCH stored {} differs from the recomputed report", stored.display());
        return Ok(ExitCode::from(1));
    }
    Ok(exit_for(report.all_hold()))
}

fn sweep(c: &Common) -> Result<ExitCode> {
    if c.v.is_empty() {
        bail!("sweep needs --V with one or more values");
    }
    let s = load_with(&c.scenario, &c.overrides(None)).with_context(|| format!("loading {}", c.scenario.display()))?;
    let rows = sweep_v(&s, &c.v);
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    write_sweep(&c.out.join(output::SWEEP_FILE), &rows)?;
    for r in &rows {
        println!(
            "V = {}: {}, max queue {}, ceiling {}",
            r.v,
            r.status,
            r.max_queue.map(output::float).unwrap_or_else(|| "-".into()),
            r.queue_ceiling.map(output::float).unwrap_or_else(|| "-".into())
        );
    }
    Ok(exit_for(rows.iter().all(|r| r.all_hold == Some(true))))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => run(c),
        Command::Oracle(c) => oracle(c),
        Command::Verify(c) => verify(c),
        Command::Sweep(c) => sweep(c),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
