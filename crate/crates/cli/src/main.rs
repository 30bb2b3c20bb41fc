use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use colltraj_cli::{run, CliError, RunConfigFile, RunOptions};

/// Collision-model quantum trajectory simulator.
#[derive(Debug, Parser)]
#[command(name = "colltraj", version)]
struct Args {
    /// TOML run configuration.
    config: PathBuf,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensembles; outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Number of trajectories (overrides `trajectories`).
    #[arg(long)]
    trajectories: Option<usize>,
    /// trajectory, ensemble, oracle, compare or spectrum (overrides `mode`).
    #[arg(long)]
    mode: Option<String>,
    /// Override any configuration key, e.g. `--set coupling.rate=2` or `--set record.stride=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Further overrides as `--key value` pairs, e.g. `--dt 0.02 --coupling.rate 2`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    rest: Vec<String>,
}

fn overrides(args: &Args) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    if let Some(s) = args.seed {
        out.push(("seed".to_string(), s.to_string()));
    }
    if let Some(n) = args.trajectories {
        out.push(("trajectories".to_string(), n.to_string()));
    }
    if let Some(m) = &args.mode {
        out.push(("mode".to_string(), format!("\"{m}\"")));
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("`--set {kv}`: expected KEY=VALUE")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut rest = args.rest.iter();
    while let Some(flag) = rest.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| CliError::Config(format!("unexpected argument `{flag}`; overrides take the form --key value")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = rest
                    .next()
                    .ok_or_else(|| CliError::Config(format!("`--{key}`: missing value")))?;
                (key.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = overrides(&args)
        .and_then(|o| RunConfigFile::load(&args.config, &o))
        .and_then(|cfg| {
            let options = RunOptions {
                threads: args.threads,
                out_dir: args.out_dir.clone(),
            };
            run(&cfg, &options)
        });
    match result {
        Ok(m) => {
            println!(
                "{} outputs written in {:.2} s",
                m.outputs.len(),
                m.wall_clock_seconds.unwrap_or(0.0)
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("colltraj: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
