use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hpshield_cli::{
    cmd_adapt, cmd_check, cmd_penalty_sweep, cmd_simulate, cmd_train, layered_config, CliError, Settings, EXIT_OK,
};

#[derive(Parser)]
#[command(name = "hpshield", version, about = "Hybrid-program shields for learning agents")]
struct Cli {
    /// Config file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Comma-separated seeds (overrides `run.seeds`).
    #[arg(long, global = true, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Extra `section.key=value` override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Env {
    Car,
    Crossing,
}

#[derive(Subcommand)]
enum Command {
    /// Bounded falsification of a `.hp` model over the `[check]` grid.
    Check { model: PathBuf },
    /// Run episodes of the configured environment, or a model with random
    /// resolutions when MODEL is given.
    Simulate {
        model: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        /// `random` or an action id.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        shield: Option<Switch>,
        #[arg(long)]
        env: Option<Env>,
        /// Write PGM frames (crossing only).
        #[arg(long)]
        frames: bool,
    },
    /// Q-learning, one run per seed.
    Train {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        shield: Option<Switch>,
        #[arg(long)]
        env: Option<Env>,
        #[arg(long, allow_hyphen_values = true)]
        penalty: Option<f64>,
    },
    /// Training under each unsafe-proposal penalty.
    PenaltySweep {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        penalties: Option<Vec<f64>>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        env: Option<Env>,
    },
    /// Detect model mismatch, re-estimate parameters and rebuild the guards.
    Adapt {
        #[arg(long)]
        b_actual: Option<f64>,
    },
}

fn switch(s: Switch) -> String {
    match s {
        Switch::On => "on".into(),
        Switch::Off => "off".into(),
    }
}

fn env_name(e: Env) -> String {
    match e {
        Env::Car => "car".into(),
        Env::Crossing => "crossing".into(),
    }
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            out.push((k.to_string(), v));
        }
    };
    match &cli.command {
        Command::Check { .. } => {}
        Command::Simulate { episodes, policy, shield, env, frames, .. } => {
            put("simulate.episodes", episodes.map(|e| e.to_string()));
            put("simulate.policy", policy.clone());
            put("train.shield", shield.map(switch));
            put("env.kind", env.map(env_name));
            put("simulate.frames", frames.then(|| "on".to_string()));
        }
        Command::Train { episodes, shield, env, penalty } => {
            put("train.episodes", episodes.map(|e| e.to_string()));
            put("train.shield", shield.map(switch));
            put("env.kind", env.map(env_name));
            put("train.penalty", penalty.map(|p| p.to_string()));
        }
        Command::PenaltySweep { episodes, env, .. } => {
            put("train.episodes", episodes.map(|e| e.to_string()));
            put("env.kind", env.map(env_name));
        }
        Command::Adapt { b_actual } => put("car.b_actual", b_actual.map(|b| b.to_string())),
    }
    Ok(out)
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let config = layered_config(cli.config.as_deref(), &overrides(cli)?, |k| std::env::var(k).ok())?;
    let settings = Settings::new(config, cli.out.clone(), cli.seed.clone())?;
    match &cli.command {
        Command::Check { model } => cmd_check(&settings, model),
        Command::Simulate { model, .. } => cmd_simulate(&settings, model.as_deref()),
        Command::Train { .. } => cmd_train(&settings),
        Command::PenaltySweep { penalties, .. } => cmd_penalty_sweep(&settings, penalties.clone()),
        Command::Adapt { .. } => cmd_adapt(&settings).map(|(code, _)| code),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { EXIT_OK as u8 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
