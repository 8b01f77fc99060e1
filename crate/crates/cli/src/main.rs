use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dkfhtw::{
    fit_stage, init_thread_pool, load_batch, load_fit, observables_stage, reproduce, run, simulate_stage, sweep,
    ExperimentConfig, HarnessError, HarnessResult,
};

#[derive(Parser)]
#[command(name = "dkfhtw", version, about = "Dean-Kawasaki simulation and FHT-W density estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Experiment file (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset, used instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the simulation and sketch seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, fit and evaluate observables.
    Run(Common),
    /// Simulate the batch (or find it in the cache).
    Simulate(Common),
    /// Fit the box and the density on the stored batch.
    Fit(Common),
    /// Evaluate observables of the stored density.
    Observables(Common),
    /// Rank and degree sensitivity table on one batch.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Run the sweep cells concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// All presets plus the sweep, with a summary table.
    Reproduce {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a preset as TOML.
    Preset { name: String },
}

fn resolve(c: &Common) -> HarnessResult<ExperimentConfig> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (Some(_), Some(_)) => return Err(HarnessError::Config("give either --config or --preset, not both".into())),
        (None, None) => return Err(HarnessError::Config("one of --config or --preset is required".into())),
    };
    if let Some(s) = c.seed {
        cfg.set_seed(s);
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn dispatch(cli: Cli) -> HarnessResult<bool> {
    match cli.command {
        Command::Run(c) => {
            let m = run(&resolve(&c)?)?;
            print_json(&m.metrics);
            print_json(&m.scalars);
        }
        Command::Simulate(c) => print_json(&simulate_stage(&resolve(&c)?)?),
        Command::Fit(c) => {
            let cfg = resolve(&c)?;
            let fit = fit_stage(&cfg, &load_batch(&cfg)?)?;
            print_json(&fit.report.edges.iter().map(|e| e.rank).collect::<Vec<_>>());
        }
        Command::Observables(c) => {
            let cfg = resolve(&c)?;
            let batch = load_batch(&cfg)?;
            let (map, density) = load_fit(&cfg)?;
            let obs = observables_stage(&cfg, &batch, &map, &density)?;
            print_json(&obs.metrics);
            print_json(&obs.scalars);
        }
        Command::Sweep { common, parallel } => {
            let m = sweep(&resolve(&common)?, parallel)?;
            let mut out = Vec::new();
            dkfhtw::pipeline::write_sweep_csv(&m.rows(), &mut out)?;
            print!("{}", String::from_utf8_lossy(&out));
        }
        Command::Reproduce { out, seed } => {
            let rows = reproduce(&out, seed)?;
            for r in &rows {
                println!("{:<16} {:<7} mean {:.4} max {:.4}", r.preset, r.status, r.mean_err, r.max_err);
            }
            return Ok(rows.iter().all(|r| r.status == "ok"));
        }
        Command::Preset { name } => print!("{}", ExperimentConfig::preset(&name)?.to_toml()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = init_thread_pool().and_then(|()| dispatch(cli));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(dkfhtw::EXIT_NUMERICAL as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
