use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use ftn_isac::config::{parse_override, ExperimentConfig};
use ftn_isac::experiments::{run, seed_table, solve_setup, Experiment, RunOutput};
use ftn_isac::sca::sca_solve;
use ftn_isac::{Error, Result};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "ftn-isac", version, about = "Symbol-level precoding for FTN ISAC downlinks")]
struct Cli {
    /// JSON configuration file; built-in defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a leaf key, e.g. `--set fig4.gamma_db=[10,15]`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed (overrides `base_seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo trials for every experiment.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one SCA solve at the `solve` point.
    Solve,
    /// Run one experiment: fig2, fig3, fig4 or fig5.
    Experiment { name: String },
    /// Check the configuration and print the resolved units.
    Validate,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    artifact: &'static str,
    version: &'static str,
    timestamp_unix: u64,
    command: String,
    config: &'a ExperimentConfig,
    seeds: BTreeMap<String, Vec<u64>>,
    outputs: Vec<String>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut overrides = cli.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
    if let Some(out) = &cli.out {
        overrides.push(("output_dir".into(), json!(out.to_string_lossy())));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("base_seed".into(), json!(seed)));
    }
    if let Some(n) = cli.trials {
        for e in Experiment::ALL {
            overrides.push((format!("{e}.trials"), json!(n)));
        }
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, seeds: BTreeMap<String, Vec<u64>>, outputs: Vec<String>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        command: command.into(),
        config: cfg,
        seeds,
        outputs,
    };
    let f = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(())
}

fn cmd_solve(cfg: &ExperimentConfig) -> Result<()> {
    let dir = Path::new(&cfg.output_dir);
    let setup = solve_setup(cfg)?;
    let files = vec!["trace.csv".to_string(), "summary.json".to_string()];
    write_manifest(dir, "solve", cfg, BTreeMap::from([("solve".into(), vec![setup.seed])]), files)?;
    let sol = sca_solve(&setup.scenario, &setup.frame, &setup.waveform, &setup.sca)?;
    sol.write_trace_csv(std::fs::File::create(dir.join("trace.csv"))?)?;
    let l = cfg.system.frame_len as f64;
    let summary = json!({
        "seed": setup.seed,
        "tau": cfg.pulse.tau,
        "mmse": sol.final_mmse(),
        "mmse_per_symbol": sol.final_mmse() / l,
        "f": sol.final_f(),
        "lower_bound_mmse": setup.lower_bound,
        "iterations": sol.iterations,
        "termination": format!("{:?}", sol.termination),
        "max_ci_residual": sol.feasibility.max_ci_residual,
        "energy_slack": sol.feasibility.energy_slack,
    });
    serde_json::to_writer_pretty(std::fs::File::create(dir.join("summary.json"))?, &summary)?;
    println!("final MMSE        {:.6e}", sol.final_mmse());
    println!("lower bound       {:.6e}", setup.lower_bound);
    println!("iterations        {} ({:?})", sol.iterations, sol.termination);
    println!("max CI residual   {:.3e}", sol.feasibility.max_ci_residual);
    println!("energy slack      {:.3e}", sol.feasibility.energy_slack);
    println!("trace written to  {}", dir.join("trace.csv").display());
    Ok(())
}

fn cmd_experiment(cfg: &ExperimentConfig, name: &str) -> Result<()> {
    let exp: Experiment = name.parse()?;
    let dir = Path::new(&cfg.output_dir);
    let seeds = BTreeMap::from([(exp.to_string(), seed_table(exp, cfg))]);
    write_manifest(dir, &format!("experiment {exp}"), cfg, seeds, RunOutput::file_names(exp))?;
    let out = run(exp, cfg)?;
    let names = out.write(dir)?;
    println!("{exp}: {} rows", out.rows.len());
    for n in names {
        println!("wrote {}", dir.join(n).display());
    }
    Ok(())
}

fn cmd_validate(cfg: &ExperimentConfig) {
    println!("{:<26} {:>10} {:<4} {:>14}", "key", "value", "unit", "linear");
    for row in cfg.unit_table() {
        println!("{:<26} {:>10} {:<4} {:>14}", row.key, row.value, row.unit, format_linear(row.linear));
    }
    let v = cfg.variances();
    println!("{:<26} {:>10} {:<4} {:>14}", "rho = sigma2_r/sigma2_h", "", "", format_linear(v.sigma2_r / v.sigma2_h));
    println!("configuration is valid");
}

fn format_linear(v: f64) -> String {
    if (1e-3..1e7).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.6e}")
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = load(&cli).and_then(|cfg| match &cli.command {
        Command::Solve => cmd_solve(&cfg),
        Command::Experiment { name } => cmd_experiment(&cfg, name),
        Command::Validate => {
            cmd_validate(&cfg);
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
