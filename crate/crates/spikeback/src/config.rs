//! Training configuration: a flat `key = value` text format.
//!
//! Every field has a default tuned for the desk-scale MNIST run, so an empty
//! config is valid. Unknown keys are errors; values outside the recommended
//! ranges parse fine but produce warnings (see [`TrainConfig::warnings`]).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::network::NetworkConfig;
use crate::optim::OptimKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Mnist,
    Nmnist,
}

impl Dataset {
    pub fn name(self) -> &'static str {
        match self {
            Dataset::Mnist => "mnist",
            Dataset::Nmnist => "nmnist",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Layer widths, input first, e.g. `784-100-10`.
    pub topology: Vec<usize>,
    pub dataset: Dataset,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub optimizer: OptimKind,
    pub epochs: usize,
    /// Threshold scale relative to the weight init bound.
    pub alpha: f64,
    /// Lateral inhibition per non-input layer; empty means the default
    /// pattern (first hidden layer -0.4, output -1.0, anything between 0).
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub gamma: f64,
    pub tau_mp_us: f64,
    pub t_ref_us: u64,
    pub w_d0: f64,
    /// Threshold floor as a multiple of the weight init bound.
    pub v_th_floor_alpha: f64,
    /// Base weight learning rate; decays each epoch. The threshold rate
    /// follows the optimizer rule (a tenth of it under SGD, equal under ADAM).
    pub eta_w: f64,
    /// Weight penalty strength and sharpness; `lambda = 0` disables it.
    pub lambda: f64,
    pub beta: f64,
    /// Threshold regularization step; decays each epoch.
    pub rho: f64,
    pub threshold_reg: bool,
    pub train_duration_us: u64,
    pub eval_duration_us: u64,
    /// Presentation length for the first epoch of nets with two or more
    /// hidden layers.
    pub warmup_duration_us: u64,
    /// Total Poisson rate per image, events per second.
    pub total_rate_eps: f64,
    /// Training window length, in events, for event-camera streams.
    pub nmnist_window: usize,
    /// Apply a seeded fixed permutation to image pixels.
    pub permute_inputs: bool,
    pub seed: u64,
    /// 0 means the full split.
    pub train_subset: usize,
    pub test_subset: usize,
    /// Test samples evaluated after each epoch (the final epoch always uses
    /// the full test subset). 0 means full.
    pub epoch_eval_subset: usize,
    /// Extra checkpoint every k epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Report accuracy averaged over the trailing k metric rows.
    pub avg_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            topology: vec![784, 100, 10],
            dataset: Dataset::Mnist,
            data_dir: PathBuf::from("data/mnist"),
            out_dir: PathBuf::from("runs/out"),
            optimizer: OptimKind::Sgd,
            epochs: 20,
            alpha: 5.0,
            mu: Vec::new(),
            sigma: 0.5,
            gamma: 1.0,
            tau_mp_us: 20_000.0,
            t_ref_us: 1_000,
            w_d0: 0.2,
            v_th_floor_alpha: 1.0,
            eta_w: 0.003,
            lambda: 0.02,
            beta: 10.0,
            rho: 1e-4,
            threshold_reg: true,
            train_duration_us: 50_000,
            eval_duration_us: 1_000_000,
            warmup_duration_us: 200_000,
            total_rate_eps: 5_000.0,
            nmnist_window: 300,
            permute_inputs: false,
            seed: 42,
            train_subset: 0,
            test_subset: 0,
            epoch_eval_subset: 0,
            checkpoint_every: 0,
            avg_window: 1,
        }
    }
}

impl TrainConfig {
    /// Baseline settings for a dataset: the desk-scale image pipeline, or the
    /// event-camera pipeline with its wider input, slower membrane and longer
    /// presentations.
    pub fn defaults_for(dataset: Dataset) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        if dataset == Dataset::Nmnist {
            cfg.dataset = Dataset::Nmnist;
            cfg.topology = vec![crate::data::nmnist::INPUT_DIM, 100, 10];
            cfg.data_dir = PathBuf::from("data/nmnist");
            cfg.tau_mp_us = 200_000.0;
        }
        cfg
    }
}

fn parse_topology(v: &str) -> Result<Vec<usize>> {
    let widths: Vec<usize> = v
        .split(['-', ','])
        .map(|tok| tok.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad topology {v:?}, expected widths like 784-100-10")))?;
    if widths.len() < 2 {
        return Err(Error::Config("topology needs at least input and output widths".into()));
    }
    Ok(widths)
}

fn parse_mu_list(v: &str) -> Result<Vec<f64>> {
    if v == "auto" {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|tok| tok.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad mu list {v:?}, expected comma-separated numbers or `auto`")))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad value for {key}: {v:?}, expected true or false"))),
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "topology" => self.topology = parse_topology(value)?,
            "dataset" => {
                self.dataset = match value {
                    "mnist" => Dataset::Mnist,
                    "nmnist" => Dataset::Nmnist,
                    _ => return Err(Error::Config(format!("unknown dataset {value:?}, expected mnist or nmnist"))),
                }
            }
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "optimizer" => {
                self.optimizer = match value {
                    "sgd" => OptimKind::Sgd,
                    "adam" => OptimKind::Adam,
                    _ => return Err(Error::Config(format!("unknown optimizer {value:?}, expected sgd or adam"))),
                }
            }
            "epochs" => self.epochs = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "mu" => self.mu = parse_mu_list(value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "tau_mp_us" => self.tau_mp_us = parse_num(key, value)?,
            "t_ref_us" => self.t_ref_us = parse_num(key, value)?,
            "w_d0" => self.w_d0 = parse_num(key, value)?,
            "v_th_floor_alpha" => self.v_th_floor_alpha = parse_num(key, value)?,
            "eta_w" => self.eta_w = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "rho" => self.rho = parse_num(key, value)?,
            "threshold_reg" => self.threshold_reg = parse_bool(key, value)?,
            "train_duration_us" => self.train_duration_us = parse_num(key, value)?,
            "eval_duration_us" => self.eval_duration_us = parse_num(key, value)?,
            "warmup_duration_us" => self.warmup_duration_us = parse_num(key, value)?,
            "total_rate_eps" => self.total_rate_eps = parse_num(key, value)?,
            "nmnist_window" => self.nmnist_window = parse_num(key, value)?,
            "permute_inputs" => self.permute_inputs = parse_bool(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "train_subset" => self.train_subset = parse_num(key, value)?,
            "test_subset" => self.test_subset = parse_num(key, value)?,
            "epoch_eval_subset" => self.epoch_eval_subset = parse_num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, value)?,
            "avg_window" => self.avg_window = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", no + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<TrainConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::parse(&text)
    }

    /// The effective per-layer lateral inhibition: the explicit list if one
    /// was given, otherwise -0.4 on the first hidden layer, -1.0 on the
    /// output, 0 on layers between.
    pub fn mu_vec(&self) -> Vec<f64> {
        if !self.mu.is_empty() {
            return self.mu.clone();
        }
        let n = self.topology.len() - 1;
        let mut mu = vec![0.0; n];
        mu[n - 1] = -1.0;
        if n > 1 {
            mu[0] = -0.4;
        }
        mu
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            topology: self.topology.clone(),
            alpha: self.alpha,
            mu: self.mu_vec(),
            sigma: self.sigma,
            gamma: self.gamma,
            tau_mp_us: self.tau_mp_us,
            t_ref_us: self.t_ref_us,
            w_d0: self.w_d0,
            v_th_floor_alpha: self.v_th_floor_alpha,
        }
    }

    /// The first epoch runs longer presentations as an initial training
    /// phase whenever a warm-up duration beyond the regular one is set.
    pub fn uses_warmup(&self) -> bool {
        self.warmup_duration_us > self.train_duration_us
    }

    pub fn validate(&self) -> Result<()> {
        if self.topology.len() < 2 || self.topology.iter().any(|&w| w == 0) {
            return Err(Error::Config("topology must list positive widths, input first".into()));
        }
        if !self.mu.is_empty() && self.mu.len() != self.topology.len() - 1 {
            return Err(Error::Config(format!(
                "mu lists {} values for {} non-input layers",
                self.mu.len(),
                self.topology.len() - 1
            )));
        }
        if self.train_duration_us == 0 || self.eval_duration_us == 0 {
            return Err(Error::Config("presentation durations must be positive".into()));
        }
        if self.nmnist_window == 0 {
            return Err(Error::Config("nmnist_window must be positive".into()));
        }
        if self.avg_window == 0 {
            return Err(Error::Config("avg_window must be positive".into()));
        }
        if !(self.total_rate_eps > 0.0) {
            return Err(Error::Config("total_rate_eps must be positive".into()));
        }
        Ok(())
    }

    /// Out-of-range settings are legal but worth flagging: these ranges are
    /// the ones the training recipe is known to behave well in.
    pub fn warnings(&self) -> Vec<String> {
        let warn = |v: bool, msg: String, out: &mut Vec<String>| {
            if v {
                out.push(msg);
            }
        };
        let mut out = Vec::new();
        warn(
            !(3.0..=10.0).contains(&self.alpha),
            format!("alpha = {} is outside the recommended 3..10", self.alpha),
            &mut out,
        );
        warn(
            !(0.002..=0.004).contains(&self.eta_w),
            format!("eta_w = {} is outside the recommended 0.002..0.004", self.eta_w),
            &mut out,
        );
        warn(
            self.lambda != 0.0 && !(0.002..=0.04).contains(&self.lambda),
            format!("lambda = {} is outside the recommended 0.002..0.04", self.lambda),
            &mut out,
        );
        warn(
            self.rho != 0.0 && !(4e-5..=2e-4).contains(&self.rho),
            format!("rho = {} is outside the recommended 4e-5..2e-4", self.rho),
            &mut out,
        );
        warn(self.beta != 10.0, format!("beta = {} differs from the recommended 10", self.beta), &mut out);
        warn(self.sigma != 0.5, format!("sigma = {} differs from the recommended 0.5", self.sigma), &mut out);
        warn(self.gamma != 1.0, format!("gamma = {} differs from the recommended 1", self.gamma), &mut out);
        let tau_expected = match self.dataset {
            Dataset::Mnist => 20_000.0,
            Dataset::Nmnist => 200_000.0,
        };
        warn(
            self.tau_mp_us != tau_expected,
            format!(
                "tau_mp_us = {} differs from the recommended {} for {}",
                self.tau_mp_us,
                tau_expected,
                self.dataset.name()
            ),
            &mut out,
        );
        warn(
            self.t_ref_us != 1_000,
            format!("t_ref_us = {} differs from the recommended 1000", self.t_ref_us),
            &mut out,
        );
        for (l, mu) in self.mu_vec().iter().enumerate() {
            warn(
                !(-1.0..=0.0).contains(mu),
                format!("mu[{l}] = {mu} is outside [-1, 0]"),
                &mut out,
            );
        }
        out
    }

    /// Serialize every field, in a fixed order, parseable by [`parse`].
    ///
    /// [`parse`]: TrainConfig::parse
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let topo: Vec<String> = self.topology.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(s, "topology = {}", topo.join("-"));
        let _ = writeln!(s, "dataset = {}", self.dataset.name());
        let _ = writeln!(s, "data_dir = {}", self.data_dir.display());
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(
            s,
            "optimizer = {}",
            match self.optimizer {
                OptimKind::Sgd => "sgd",
                OptimKind::Adam => "adam",
            }
        );
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let mu: Vec<String> = self.mu_vec().iter().map(|m| m.to_string()).collect();
        let _ = writeln!(s, "mu = {}", mu.join(","));
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "tau_mp_us = {}", self.tau_mp_us);
        let _ = writeln!(s, "t_ref_us = {}", self.t_ref_us);
        let _ = writeln!(s, "w_d0 = {}", self.w_d0);
        let _ = writeln!(s, "v_th_floor_alpha = {}", self.v_th_floor_alpha);
        let _ = writeln!(s, "eta_w = {}", self.eta_w);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "rho = {}", self.rho);
        let _ = writeln!(s, "threshold_reg = {}", self.threshold_reg);
        let _ = writeln!(s, "train_duration_us = {}", self.train_duration_us);
        let _ = writeln!(s, "eval_duration_us = {}", self.eval_duration_us);
        let _ = writeln!(s, "warmup_duration_us = {}", self.warmup_duration_us);
        let _ = writeln!(s, "total_rate_eps = {}", self.total_rate_eps);
        let _ = writeln!(s, "nmnist_window = {}", self.nmnist_window);
        let _ = writeln!(s, "permute_inputs = {}", self.permute_inputs);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "train_subset = {}", self.train_subset);
        let _ = writeln!(s, "test_subset = {}", self.test_subset);
        let _ = writeln!(s, "epoch_eval_subset = {}", self.epoch_eval_subset);
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(s, "avg_window = {}", self.avg_window);
        s
    }
}
