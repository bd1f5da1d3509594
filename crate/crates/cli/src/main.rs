//! `hydroda`: synthesize data, train, evaluate and forecast from the command line.
//!
//! Exit codes: 0 success, 2 usage/config/data error, 3 numeric failure.

mod commands;
mod config;
mod error;
mod lock;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use hydroda::training::Mode;

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "hydroda", version, about = "Adversarial domain adaptation for daily streamflow forecasting")]
struct Cli {
    /// Log verbosity (error, warn, info, debug)
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic source and target domains as CSV files
    Synth(SynthArgs),
    /// Train a model and write checkpoints plus a JSON-lines log
    Train(TrainArgs),
    /// Score a checkpoint and write per-basin, summary and time-series reports
    Evaluate(EvaluateArgs),
    /// Forecast the next τ days for one basin from a checkpoint
    Predict(PredictArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Experiment config file (TOML); only `seed` and `[synth]` are used
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: data]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Number of source basins [default: 20]
    #[arg(long)]
    n_source: Option<usize>,
    /// Number of target basins [default: 8]
    #[arg(long)]
    n_target: Option<usize>,
    /// Strength of the source/target shift, 0 = identical domains [default: 0.5]
    #[arg(long)]
    shift_strength: Option<f64>,
    /// Fraction of target streamflow cells left empty [default: 0.1]
    #[arg(long)]
    missing_rate: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Experiment config file (TOML); flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training mode: adversarial, seq2seq_tl or lstm_tl [default: adversarial]
    #[arg(long)]
    mode: Option<Mode>,
    /// Epochs (fine-tuning epochs for the transfer baselines) [default: 100]
    #[arg(long)]
    epochs: Option<usize>,
    /// Source pretraining epochs of the transfer baselines [default: same as --epochs]
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// Weight of the domain loss in the generator objective [default: 0.1]
    #[arg(long)]
    lambda: Option<f64>,
    /// Learning rate of the first epoch [default: 0.001]
    #[arg(long)]
    lr_first_epoch: Option<f64>,
    /// Learning rate of every later epoch [default: 0.0005]
    #[arg(long)]
    lr_rest: Option<f64>,
    /// LSTM hidden units [default: 128]
    #[arg(long)]
    hidden_size: Option<usize>,
    /// Width of the shared latent space [default: 64]
    #[arg(long)]
    latent_size: Option<usize>,
    /// Dropout rate [default: 0.4]
    #[arg(long)]
    dropout: Option<f64>,
    /// Windows per domain per step [default: 64]
    #[arg(long)]
    batch_size: Option<usize>,
    /// History length N in days [default: 90]
    #[arg(long)]
    lookback: Option<usize>,
    /// Forecast horizon τ in days [default: 1]
    #[arg(long)]
    horizon: Option<usize>,
    /// Days between consecutive windows [default: 1]
    #[arg(long)]
    stride: Option<usize>,
    /// Random seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for checkpoints and logs [default: runs/experiment]
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Continue from `last.ckpt` in the output directory
    #[arg(long)]
    resume: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DomainName {
    Source,
    Target,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Experiment config file (TOML); must describe the checkpoint's architecture
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report directory [default: <out_dir>/evaluation]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split to score
    #[arg(long, value_enum, default_value = "test")]
    split: SplitName,
    /// Domain to score
    #[arg(long, value_enum, default_value = "target")]
    domain: DomainName,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Basin CSV; static attributes are read from `static.csv` in the same directory
    #[arg(long)]
    basin: PathBuf,
    /// Issue date (YYYY-MM-DD): the first forecast day
    #[arg(long)]
    date: NaiveDate,
    /// Also write the forecast to this CSV file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Domain whose network and normalization to use
    #[arg(long, value_enum, default_value = "target")]
    domain: DomainName,
}

impl TrainArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref())?;
        let (m, t) = (&mut cfg.model, &mut cfg.training);
        macro_rules! set {
            ($($flag:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { $target = v; })*
            };
        }
        set!(
            mode => t.mode,
            epochs => t.epochs,
            lambda => t.lambda,
            lr_first_epoch => t.lr_first_epoch,
            lr_rest => t.lr_rest,
            batch_size => t.batch_size,
            stride => t.stride,
            hidden_size => m.hidden_size,
            latent_size => m.latent_size,
            dropout => m.dropout,
            lookback => m.lookback,
            horizon => m.horizon,
            seed => cfg.seed,
            out_dir => cfg.out_dir,
        );
        if self.pretrain_epochs.is_some() {
            cfg.training.pretrain_epochs = self.pretrain_epochs;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SynthArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref())?;
        let s = &mut cfg.synth;
        if let Some(v) = self.n_source {
            s.n_source_basins = v;
        }
        if let Some(v) = self.n_target {
            s.n_target_basins = v;
        }
        if let Some(v) = self.shift_strength {
            s.shift_strength = v;
        }
        if let Some(v) = self.missing_rate {
            s.missing_rate = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.synth_config().validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => {
            let cfg = a.resolve()?;
            let out = a.out.clone().unwrap_or_else(|| PathBuf::from("data"));
            commands::synth(&cfg, &out)
        }
        Command::Train(a) => commands::train(&a.resolve()?, a.resume),
        Command::Evaluate(a) => {
            let cfg = ExperimentConfig::load(a.config.as_deref())?;
            cfg.validate()?;
            let out = a.out.clone().unwrap_or_else(|| cfg.out_dir.join("evaluation"));
            commands::evaluate(&cfg, &a.checkpoint, &out, a.split, a.domain)
        }
        Command::Predict(a) => commands::predict(&a.checkpoint, &a.basin, a.date, a.out.as_deref(), a.domain),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use hydroda::training::TrainConfig;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
        assert_eq!(crate::error::EXIT_USAGE, 2);
    }

    #[test]
    fn train_help_lists_the_default_values() {
        let mut cmd = Cli::command();
        let help = cmd.find_subcommand_mut("train").unwrap().render_long_help().to_string();
        let d = TrainConfig::default();
        for (flag, value) in [
            ("--epochs", d.epochs.to_string()),
            ("--lambda", d.lambda.to_string()),
            ("--lr-first-epoch", d.lr_first_epoch.to_string()),
            ("--lr-rest", d.lr_rest.to_string()),
            ("--hidden-size", d.hidden_size.to_string()),
            ("--latent-size", d.latent_size.to_string()),
            ("--dropout", d.dropout.to_string()),
            ("--batch-size", d.batch_size.to_string()),
            ("--lookback", d.lookback.to_string()),
            ("--horizon", d.horizon.to_string()),
            ("--stride", d.stride.to_string()),
            ("--seed", d.seed.to_string()),
            ("--mode", d.mode.to_string()),
        ] {
            let pos = help.find(&format!("{flag} ")).unwrap_or_else(|| panic!("{flag} missing"));
            let section = &help[pos..];
            let end = section[2..].find("\n  -").map_or(section.len(), |i| i + 2);
            assert!(section[..end].contains(&format!("[default: {value}]")), "{flag}: {}", &section[..end]);
        }
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "seed = 3\n[training]\nepochs = 40\nlambda = 0.2\n").unwrap();
        let cli = Cli::try_parse_from([
            "hydroda",
            "train",
            "--config",
            path.to_str().unwrap(),
            "--epochs",
            "1",
            "--mode",
            "lstm_tl",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else { panic!() };
        let cfg = args.resolve().unwrap();
        let t = cfg.train_config();
        assert_eq!((t.epochs, t.lambda, t.seed, t.mode), (1, 0.2, 3, Mode::LstmTl));
    }

    #[test]
    fn bad_mode_names_the_flag() {
        let err = Cli::try_parse_from(["hydroda", "train", "--mode", "gan"]).unwrap_err();
        assert!(err.to_string().contains("--mode"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}
