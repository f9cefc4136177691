mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{keys_help, parse_flags, RunConfig, SNAPSHOT_FILE};

#[derive(Parser)]
#[command(name = "physimage", version, about = "Physiological signal imaging and per-user awareness classification")]
struct Cli {
    /// Config file of key=value lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (config key `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (config key `out`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores (config key `jobs`)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Settings {
    /// Further config keys as `--key VALUE` or `--key=VALUE`
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    settings: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic sessions (the preset cohort or the distance-structured session)
    Synth(Settings),
    /// Window, scale and encode sessions into image datasets
    Encode(Settings),
    /// Embed dataset images with the builtin extractor into .pemb files
    Features(Settings),
    /// Personalized model for one user; saves a checkpoint per run
    Train(Settings),
    /// Cross-user accuracy matrix (table2)
    Xmatrix(Settings),
    /// Combined-user leave-one-out matrix (table3)
    Combined(Settings),
    /// Both matrices, the personalized vs combined comparison and the t-tests (table2-4)
    Compare(Settings),
    /// Six-encoder validation ranking on one session (table1)
    Encoders(Settings),
    /// Rebuild tables from runs.jsonl
    Report(Settings),
}

impl Cmd {
    fn settings(&self) -> &[String] {
        match self {
            Cmd::Synth(s)
            | Cmd::Encode(s)
            | Cmd::Features(s)
            | Cmd::Train(s)
            | Cmd::Xmatrix(s)
            | Cmd::Combined(s)
            | Cmd::Compare(s)
            | Cmd::Encoders(s)
            | Cmd::Report(s) => &s.settings,
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, config::ConfigError> {
    let mut flags = Vec::new();
    if let Some(c) = &cli.config {
        flags.push(("config".to_string(), c.display().to_string()));
    }
    if let Some(s) = cli.seed {
        flags.push(("seed".into(), s.to_string()));
    }
    if let Some(o) = &cli.out {
        flags.push(("out".into(), o.display().to_string()));
    }
    if let Some(j) = cli.jobs {
        flags.push(("jobs".into(), j.to_string()));
    }
    flags.extend(parse_flags(cli.cmd.settings())?);
    RunConfig::resolve(&flags)
}

fn run(cli: &Cli, cfg: &RunConfig) -> anyhow::Result<()> {
    let jobs: usize = cfg.get("jobs")?;
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let out = cfg.out();
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join(SNAPSHOT_FILE), cfg.snapshot())?;
    match &cli.cmd {
        Cmd::Synth(_) => commands::synth(cfg),
        Cmd::Encode(_) => commands::encode(cfg),
        Cmd::Features(_) => commands::features(cfg),
        Cmd::Train(_) => commands::train(cfg),
        Cmd::Xmatrix(_) => commands::xmatrix(cfg),
        Cmd::Combined(_) => commands::combined(cfg),
        Cmd::Compare(_) => commands::compare_cmd(cfg),
        Cmd::Encoders(_) => commands::encoders(cfg),
        Cmd::Report(_) => commands::report_cmd(cfg),
    }
}

fn main() -> ExitCode {
    let help = keys_help();
    let mut cmd = Cli::command().after_long_help(help.clone());
    for name in ["synth", "encode", "features", "train", "xmatrix", "combined", "compare", "encoders", "report"] {
        cmd = cmd.mut_subcommand(name, |s| s.after_long_help(help.clone()));
    }
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if commands::is_config_error(&e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
