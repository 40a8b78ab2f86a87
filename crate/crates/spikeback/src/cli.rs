//! Command-line front end: argument parsing, config assembly, and the four
//! subcommands (`train`, `eval`, `gradcheck`, `encode-preview`).
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (missing or malformed files), 3 numeric failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::config::{Dataset, TrainConfig};
use crate::error::{Error, Result};
use crate::oracle;
use crate::trainer;

#[derive(Parser, Debug)]
#[command(
    name = "spikeback",
    version,
    about = "Event-driven simulator and trainer for deep spiking networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a network, writing metrics and checkpoints to the output directory.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint on the test split.
    Eval(EvalArgs),
    /// Check the analytic derivatives against finite differences.
    Gradcheck(GradcheckArgs),
    /// Encode one sample and print its event stream as text.
    EncodePreview(PreviewArgs),
}

fn parse_dataset(s: &str) -> std::result::Result<Dataset, String> {
    match s {
        "mnist" => Ok(Dataset::Mnist),
        "nmnist" => Ok(Dataset::Nmnist),
        _ => Err(format!("unknown dataset {s:?}, expected mnist or nmnist")),
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Flat key-value config file; the flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: Option<Dataset>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Trailing-epoch window for the averaged accuracy report.
    #[arg(long)]
    pub avg_window: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint to evaluate (required).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Config file supplying presentation settings; defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: Option<Dataset>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Encoding seed; defaults to the seed stored in the checkpoint.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate only the first N test samples (0 = all).
    #[arg(long, default_value_t = 0)]
    pub subset: usize,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Number of random layer instances to check.
    #[arg(long, default_value_t = 100)]
    pub cases: usize,
}

#[derive(Args, Debug)]
pub struct PreviewArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: Option<Dataset>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample index within the chosen split.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Which split to draw from: train or test.
    #[arg(long, default_value = "train")]
    pub split: String,
}

/// Parse `args` and run the selected subcommand, returning the process exit
/// code. Help and version requests exit 0; parse errors exit 1.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::EncodePreview(args) => cmd_preview(args),
    }
}

fn build_config(config: &Option<PathBuf>, dataset: Option<Dataset>) -> Result<TrainConfig> {
    let mut cfg = match config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::defaults_for(dataset.unwrap_or(Dataset::Mnist)),
    };
    if let Some(ds) = dataset {
        cfg.dataset = ds;
    }
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = build_config(&args.config, args.dataset)?;
    if let Some(dir) = args.data_dir {
        cfg.data_dir = dir;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(dir) = args.out_dir {
        cfg.out_dir = dir;
    }
    if let Some(w) = args.avg_window {
        cfg.avg_window = w;
    }
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }

    let report = trainer::train_with(&cfg, |row| {
        println!(
            "epoch {:>3}  loss {:.4}  accuracy {:.4}  dead {:>4}  skipped {:>5}  ({:.1}s)",
            row.epoch, row.train_loss, row.test_accuracy, row.dead_neurons,
            row.skipped_samples, row.wall_clock_s,
        );
    })?;

    if let Some(eval) = &report.final_eval {
        println!(
            "final accuracy {:.4} over {} samples ({} degenerate)",
            eval.accuracy, eval.n, eval.degenerate
        );
    }
    if cfg.avg_window > 1 {
        println!(
            "accuracy averaged over last {} epochs: {:.4}",
            cfg.avg_window.min(report.rows.len()),
            report.avg_accuracy
        );
    }
    println!("checkpoint {}", report.checkpoint_path.display());
    println!("metrics {}", report.metrics_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let Some(ckpt_path) = args.checkpoint else {
        return Err(Error::Config("eval requires --checkpoint <path>".into()));
    };
    let (net, stored_seed) = checkpoint::load(&ckpt_path)?;

    let mut cfg = build_config(&args.config, args.dataset)?;
    if let Some(dir) = args.data_dir {
        cfg.data_dir = dir;
    }
    cfg.seed = args.seed.unwrap_or(stored_seed);
    cfg.topology = net.topology();
    cfg.test_subset = if args.subset > 0 { args.subset } else { cfg.test_subset };

    let data = trainer::load_data(&cfg)?;
    if net.input_dim() != data.input_dim() {
        return Err(Error::Config(format!(
            "checkpoint expects {} input lines but {} provides {}",
            net.input_dim(),
            cfg.dataset.name(),
            data.input_dim()
        )));
    }

    let report = trainer::evaluate_accuracy(&net, &data, &cfg, 0)?;
    println!("checkpoint {}", ckpt_path.display());
    println!("samples {}", report.n);
    println!("accuracy {:.4}", report.accuracy);
    println!("degenerate {}", report.degenerate);
    println!("confusion (rows = true label, cols = prediction)");
    for (label, row) in report.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
        println!("  {label}: {}", cells.join(" "));
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    if args.cases == 0 {
        return Err(Error::Config("gradcheck needs at least one case".into()));
    }
    let rep = oracle::gradcheck_suite(args.seed, args.cases)?;
    println!("cases {}", rep.cases);
    println!(
        "max relative error {:.3e} (local {:.3e}, input {:.3e})",
        rep.max_rel(),
        rep.max_rel_local,
        rep.max_rel_input
    );
    println!("route gap {:.3e}", rep.max_route_gap);
    if !rep.pass() {
        return Err(Error::Numeric(format!(
            "derivative check failed: max relative error {:.3e} (tolerance {:.0e}), route gap {:.3e} (tolerance {:.0e})",
            rep.max_rel(),
            oracle::FD_TOL,
            rep.max_route_gap,
            oracle::ROUTE_TOL
        )));
    }
    println!("pass (tolerances: {:.0e} vs differences, {:.0e} between routes)",
        oracle::FD_TOL, oracle::ROUTE_TOL);
    Ok(())
}

fn cmd_preview(args: PreviewArgs) -> Result<()> {
    let mut cfg = build_config(&args.config, args.dataset)?;
    if let Some(dir) = args.data_dir {
        cfg.data_dir = dir;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let train_split = match args.split.as_str() {
        "train" => true,
        "test" => false,
        other => {
            return Err(Error::Config(format!(
                "unknown split {other:?}, expected train or test"
            )))
        }
    };

    let data = trainer::load_data(&cfg)?;
    let len = if train_split { data.train_len() } else { data.test_len() };
    if args.index >= len {
        return Err(Error::Config(format!(
            "index {} out of range, {} split has {} samples",
            args.index,
            args.split,
            len
        )));
    }

    let (events, duration) = if train_split {
        trainer::encode_train(
            &cfg,
            &data,
            args.index,
            0,
            cfg.train_duration_us,
            trainer::train_encode_base(cfg.seed),
        )
    } else {
        trainer::encode_eval(&cfg, &data, args.index, trainer::eval_encode_base(cfg.seed))
    };
    let label = if train_split {
        data.train_label(args.index)
    } else {
        data.test_label(args.index)
    };

    println!("dataset {}", cfg.dataset.name());
    println!("split {}", args.split);
    println!("index {}", args.index);
    println!("label {label}");
    println!("duration_us {duration}");
    println!("events {}", events.len());
    println!("t_us line");
    for ev in &events {
        println!("{} {}", ev.t_us, ev.source);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run(["spikeback", "--help"]), 0);
        assert_eq!(run(["spikeback", "--version"]), 0);
        assert_eq!(run(["spikeback", "train", "--help"]), 0);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["spikeback"]), 1);
        assert_eq!(run(["spikeback", "--bogus-flag"]), 1);
        assert_eq!(run(["spikeback", "train", "--dataset", "imagenet"]), 1);
        assert_eq!(run(["spikeback", "no-such-command"]), 1);
    }

    #[test]
    fn eval_without_checkpoint_is_a_usage_error() {
        assert_eq!(run(["spikeback", "eval"]), 1);
    }

    #[test]
    fn gradcheck_passes_on_a_fresh_seed() {
        assert_eq!(run(["spikeback", "gradcheck", "--seed", "7", "--cases", "5"]), 0);
        assert_eq!(run(["spikeback", "gradcheck", "--cases", "0"]), 1);
    }

    #[test]
    fn dataset_names_parse() {
        assert_eq!(parse_dataset("mnist").unwrap(), Dataset::Mnist);
        assert_eq!(parse_dataset("nmnist").unwrap(), Dataset::Nmnist);
        assert!(parse_dataset("cifar").is_err());
    }
}
