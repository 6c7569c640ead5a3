use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stf_cli::{run_demo, run_overhead, BenchConfig, DemoOptions, Mode};

#[derive(Parser)]
#[command(
    name = "bench",
    about = "Overhead protocol and demos for the task runtime"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    /// Worker count T.
    #[arg(long, global = true, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    /// Tasks per chain N.
    #[arg(long = "tasks-per-chain", global = true, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    tasks_per_chain: u64,
    /// Task duration D in seconds.
    #[arg(long, global = true, default_value_t = 1e-3, value_parser = non_negative)]
    duration: f64,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Write)]
    mode: ModeArg,
    /// Dependencies per task.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=20))]
    deps: u64,
    #[arg(long, global = true, value_enum, default_value_t = SchedArg::Fifo)]
    sched: SchedArg,
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    /// Simulated devices for device demos.
    #[arg(long, global = true, default_value_t = 1)]
    devices: usize,
    /// Arena capacity per device, in bytes.
    #[arg(long = "device-mem", global = true, default_value_t = stf_core::DEFAULT_DEVICE_MEMORY)]
    device_mem: usize,
    /// Instances in the in-process communicator.
    #[arg(long, global = true, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..))]
    ranks: u64,
    /// Seed for randomized demo choices.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Output directory for reports and artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Measure insertion cost and per-task overhead.
    Overhead,
    /// Run a named scenario and write graph.dot and trace.svg.
    Demo {
        #[arg(value_enum)]
        name: DemoName,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Write,
    Commute,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedArg {
    Fifo,
    Prio,
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoName {
    Daggraph,
    DeviceRoundtrip,
    CommPingpong,
    SpeculationCoin,
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err("must be a finite number >= 0".into())
    }
}

fn overhead(f: &Flags) -> anyhow::Result<()> {
    let config = BenchConfig {
        workers: f.workers as usize,
        tasks_per_chain: f.tasks_per_chain as usize,
        duration: f.duration,
        mode: match f.mode {
            ModeArg::Write => Mode::Write,
            ModeArg::Commute => Mode::Commute,
        },
        deps: f.deps as usize,
        sched: match f.sched {
            SchedArg::Fifo => "fifo",
            SchedArg::Prio => "prio",
        }
        .into(),
        reps: f.reps as usize,
    };
    let report = run_overhead(&config)?;
    let mut stdout = io::stdout().lock();
    report.write_csv(&mut stdout)?;
    writeln!(stdout)?;
    writeln!(stdout, "{}", report.summary_json()?)?;
    eprintln!("{}", report.human_summary());
    if let Some(dir) = &f.out {
        report.save(dir)?;
    }
    Ok(())
}

fn demo(name: DemoName, f: &Flags) -> anyhow::Result<()> {
    let name = match name {
        DemoName::Daggraph => "daggraph",
        DemoName::DeviceRoundtrip => "device-roundtrip",
        DemoName::CommPingpong => "comm-pingpong",
        DemoName::SpeculationCoin => "speculation-coin",
    };
    let opts = DemoOptions {
        workers: f.workers as usize,
        devices: f.devices,
        device_mem: f.device_mem,
        ranks: f.ranks as usize,
        seed: f.seed,
    };
    let out = f
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(name));
    for line in run_demo(name, &out, &opts)? {
        println!("{line}");
    }
    println!(
        "wrote {} and {}",
        out.join("graph.dot").display(),
        out.join("trace.svg").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors exit with 2 from inside clap.
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Overhead => overhead(&cli.flags),
        Command::Demo { name } => demo(name, &cli.flags),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
