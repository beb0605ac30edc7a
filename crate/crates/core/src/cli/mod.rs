//! Command-line front end: `gen-data`, `train`, `eval`, `infer`, `gradcheck`.
//!
//! Settings resolve in order: preset defaults, `--config` file, `OSLR_*`
//! environment variables, `--set key=value`, then dedicated flags.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::kv;
use crate::pipeline::RunConfig;

pub use commands::{cmd_eval, cmd_gen_data, cmd_gradcheck, cmd_infer, cmd_train, GenDataSummary};

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "OSLR_";

#[derive(Debug, Parser)]
#[command(name = "oslr", version, about = "One-shot query-conditioned logo detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fusion variant: multi_scale | bottleneck_only | cosine_tanh.
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/val (and one-shot test) datasets.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        train_classes: Option<usize>,
        /// traditional | one_shot
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report counts without rendering or writing anything.
        #[arg(long)]
        dry_run: bool,
    },
    /// Train a model; checkpoints and a loss log go to `--out`.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Continue from the latest checkpoint in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint; writes `report.txt` and `report.csv`.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of query samples combined per target.
        #[arg(long)]
        k: Option<usize>,
        /// One box over all foreground pixels instead of one per component.
        #[arg(long)]
        global_box: bool,
    },
    /// Predict one query/target pair and export images and boxes.
    Infer {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Query image (PPM).
        #[arg(long)]
        query: PathBuf,
        /// Target image (PPM).
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        global_box: bool,
    },
    /// Finite-difference check of every op and a tiny end-to-end network.
    Gradcheck {
        /// Seeds per check.
        #[arg(long, default_value_t = crate::gradsuite::SEEDS)]
        seeds: u64,
    },
}

/// Builds the run config from file, environment, `--set` and `extra` flags.
pub fn resolve_config(
    args: &ConfigArgs,
    env: &[(String, String)],
    extra: &[(&str, Option<String>)],
) -> Result<RunConfig> {
    let mut cfg = RunConfig::desk();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        let pairs = kv::parse(&text)?;
        // A preset line resets everything, so it is applied first.
        for (k, v) in pairs.iter().filter(|(k, _)| k == "preset") {
            cfg.apply(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.apply(k, v)?;
        }
    }
    for (k, v) in env {
        if let Some(key) = k.strip_prefix(ENV_PREFIX) {
            cfg.apply(&key.to_ascii_lowercase(), v)?;
        }
    }
    for s in &args.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        cfg.apply(k.trim(), v.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(v) = &args.variant {
        cfg.apply("fusion_mode", v)?;
    }
    for (k, v) in extra {
        if let Some(v) = v {
            cfg.apply(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn env_pairs() -> Vec<(String, String)> {
    std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect()
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        Error::NonFinite { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Runs one parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let env = env_pairs();
    let s = |v: Option<String>| v;
    match cli.command {
        Command::GenData {
            cfg,
            classes,
            per_class,
            train_classes,
            regime,
            out: dir,
            dry_run,
        } => {
            let run = resolve_config(
                &cfg,
                &env,
                &[
                    ("classes", classes.map(|v| v.to_string())),
                    ("per_class", per_class.map(|v| v.to_string())),
                    ("train_classes", train_classes.map(|v| v.to_string())),
                    ("regime", s(regime)),
                ],
            )?;
            if !dry_run && dir.is_none() {
                return Err(Error::Config("gen-data needs --out unless --dry-run is given".into()));
            }
            let summary = cmd_gen_data(&run, dir.as_deref(), dry_run)?;
            write!(out, "{}", summary.to_text())?;
            Ok(EXIT_OK)
        }
        Command::Train {
            cfg,
            data,
            out: dir,
            iterations,
            lr,
            batch_size,
            resume,
        } => {
            let run = resolve_config(
                &cfg,
                &env,
                &[
                    ("iterations", iterations.map(|v| v.to_string())),
                    ("learning_rate", lr.map(|v| v.to_string())),
                    ("batch_size", batch_size.map(|v| v.to_string())),
                ],
            )?;
            cmd_train(&run, &data, &dir, resume, out)?;
            Ok(EXIT_OK)
        }
        Command::Eval {
            cfg,
            checkpoint,
            data,
            out: dir,
            k,
            global_box,
        } => {
            let run = resolve_config(
                &cfg,
                &env,
                &[
                    ("k", k.map(|v| v.to_string())),
                    ("global_box", global_box.then(|| "true".to_string())),
                ],
            )?;
            let report = cmd_eval(&run, &checkpoint, &data, &dir)?;
            write!(out, "{}", report.to_text())?;
            Ok(EXIT_OK)
        }
        Command::Infer {
            cfg,
            checkpoint,
            query,
            target,
            out: dir,
            global_box,
        } => {
            let run = resolve_config(
                &cfg,
                &env,
                &[("global_box", global_box.then(|| "true".to_string()))],
            )?;
            let boxes = cmd_infer(&run, &checkpoint, &query, &target, &dir)?;
            write!(out, "{boxes}")?;
            Ok(EXIT_OK)
        }
        Command::Gradcheck { seeds } => {
            let ok = cmd_gradcheck(seeds, out)?;
            Ok(if ok { EXIT_OK } else { EXIT_NUMERIC })
        }
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_file_env_set_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# test\nseed = 5\nbatch_size = 4\nlearning_rate = 0.1\nk = 2\n").unwrap();
        let args = ConfigArgs {
            config: Some(path),
            set: vec!["learning_rate=0.2".into(), "k=3".into()],
            seed: None,
            variant: Some("cosine_tanh".into()),
        };
        let env = vec![
            ("OSLR_BATCH_SIZE".to_string(), "6".to_string()),
            ("OSLR_LEARNING_RATE".to_string(), "0.3".to_string()),
        ];
        let cfg = resolve_config(&args, &env, &[("k", Some("4".into()))]).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.batch_size, 6);
        assert_eq!(cfg.learning_rate, 0.2);
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.model.fusion_mode.to_string(), "cosine_tanh");
    }

    #[test]
    fn preset_file_is_paper() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper.conf");
        let args = ConfigArgs {
            config: Some(path.into()),
            ..Default::default()
        };
        let cfg = resolve_config(&args, &[], &[]).unwrap();
        assert_eq!(cfg, RunConfig::paper());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::NonFinite { op: "bce_loss" }), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::Format("x".into())), EXIT_DATA);
        assert_eq!(main_with_args(["oslr", "bogus"]), EXIT_USAGE);
        assert_eq!(main_with_args(["oslr", "--help"]), EXIT_OK);
    }
}
