//! The full training loop: data loading, epoch schedules, warm-up, metrics,
//! checkpointing, and parallel evaluation.
//!
//! Everything is deterministic in the config seed. Sample order, spike
//! encodings, and weight initialization each draw from their own stream
//! (derived with [`mix_seed`]), so changing one never perturbs the others.
//! Evaluation encodings are fixed per test sample across epochs.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint;
use crate::config::{Dataset, TrainConfig};
use crate::data::mix_seed;
use crate::data::mnist;
use crate::data::nmnist;
use crate::data::poisson;
use crate::dynamics::SpikeEvent;
use crate::error::{Error, Result};
use crate::learning::{backward, data_loss, output_activity};
use crate::network::{evaluate, forward_sample, ForwardOpts, Network};
use crate::optim::{epoch_decay, Optimizer, WeightReg};
use crate::regularizer;

/// A dataset in memory, already permuted and truncated per config.
pub enum LoadedData {
    Images { train: mnist::ImageSet, test: mnist::ImageSet },
    Events { train: nmnist::EventSet, test: nmnist::EventSet },
}

impl LoadedData {
    pub fn train_len(&self) -> usize {
        match self {
            LoadedData::Images { train, .. } => train.count,
            LoadedData::Events { train, .. } => train.len(),
        }
    }

    pub fn test_len(&self) -> usize {
        match self {
            LoadedData::Images { test, .. } => test.count,
            LoadedData::Events { test, .. } => test.len(),
        }
    }

    pub fn train_label(&self, idx: usize) -> usize {
        match self {
            LoadedData::Images { train, .. } => train.label(idx) as usize,
            LoadedData::Events { train, .. } => train.labels[idx] as usize,
        }
    }

    pub fn test_label(&self, idx: usize) -> usize {
        match self {
            LoadedData::Images { test, .. } => test.label(idx) as usize,
            LoadedData::Events { test, .. } => test.labels[idx] as usize,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            LoadedData::Images { .. } => mnist::PIXELS,
            LoadedData::Events { .. } => nmnist::INPUT_DIM,
        }
    }
}

/// Load the dataset named by the config, applying the pixel permutation and
/// subset limits. Event datasets are interleaved by class so subsets stay
/// balanced (stream files are stored grouped by digit).
pub fn load_data(cfg: &TrainConfig) -> Result<LoadedData> {
    match cfg.dataset {
        Dataset::Mnist => {
            let mut m = mnist::load(&cfg.data_dir)?;
            if cfg.permute_inputs {
                let perm = mnist::make_permutation(mix_seed(cfg.seed, 3, 0));
                mnist::apply_permutation(&mut m.train, &perm);
                mnist::apply_permutation(&mut m.test, &perm);
            }
            m.train.truncate(cfg.train_subset);
            m.test.truncate(cfg.test_subset);
            Ok(LoadedData::Images { train: m.train, test: m.test })
        }
        Dataset::Nmnist => {
            let per_class = |subset: usize| if subset == 0 { 0 } else { subset.div_ceil(10) };
            let mut train = nmnist::load_split_dir(&cfg.data_dir.join("Train"), per_class(cfg.train_subset))?;
            let mut test = nmnist::load_split_dir(&cfg.data_dir.join("Test"), per_class(cfg.test_subset))?;
            train.interleave_classes();
            test.interleave_classes();
            train.truncate(cfg.train_subset);
            test.truncate(cfg.test_subset);
            Ok(LoadedData::Events { train, test })
        }
    }
}

/// Training-mode encoding of one sample: a fresh Poisson draw (or event
/// window) per (sample, epoch) pair, deterministic in the run seed.
/// Seed base for training-time encodings of a run.
pub fn train_encode_base(seed: u64) -> u64 {
    mix_seed(seed, 4, 0)
}

/// Seed base for evaluation encodings of a run.
pub fn eval_encode_base(seed: u64) -> u64 {
    mix_seed(seed, 5, 0)
}

pub fn encode_train(
    cfg: &TrainConfig,
    data: &LoadedData,
    idx: usize,
    epoch: usize,
    duration_us: u64,
    enc_base: u64,
) -> (Vec<SpikeEvent>, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(enc_base, idx as u64, epoch as u64));
    match data {
        LoadedData::Images { train, .. } => {
            (poisson::encode(train.image(idx), cfg.total_rate_eps, duration_us, &mut rng), duration_us)
        }
        LoadedData::Events { train, .. } => nmnist::pick_window(&train.streams[idx], cfg.nmnist_window, &mut rng),
    }
}

/// Evaluation encodings ignore the epoch: each test sample always gets the
/// same spikes. Event streams are presented whole.
pub fn encode_eval(cfg: &TrainConfig, data: &LoadedData, idx: usize, eval_base: u64) -> (Vec<SpikeEvent>, u64) {
    match data {
        LoadedData::Images { test, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(eval_base, idx as u64, 0));
            let d = cfg.eval_duration_us;
            (poisson::encode(test.image(idx), cfg.total_rate_eps, d, &mut rng), d)
        }
        LoadedData::Events { test, .. } => {
            let events = nmnist::to_input_events(&test.streams[idx]);
            let duration = events.last().map_or(0, |e| e.t_us);
            (events, duration)
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[truth][prediction]`.
    pub confusion: Vec<Vec<u32>>,
    /// Presentations where no output neuron fired.
    pub degenerate: usize,
}

/// Classify `limit` test samples (0 for all) against read-only parameters,
/// in parallel. Per-sample encodings are independently seeded, so the result
/// does not depend on thread count.
pub fn evaluate_accuracy(net: &Network, data: &LoadedData, cfg: &TrainConfig, limit: usize) -> Result<EvalReport> {
    let total = data.test_len();
    let n = if limit == 0 { total } else { limit.min(total) };
    if n == 0 {
        return Err(Error::Config("empty test set".into()));
    }
    let eval_base = eval_encode_base(cfg.seed);
    let out_dim = net.output_dim();
    let outcomes: Vec<(usize, usize, bool)> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let (events, duration) = encode_eval(cfg, data, idx, eval_base);
            let pred = evaluate(net, &events, duration)?;
            Ok((data.test_label(idx), pred.label, pred.degenerate))
        })
        .collect::<Result<_>>()?;

    let mut confusion = vec![vec![0u32; out_dim]; out_dim];
    let mut correct = 0;
    let mut degenerate = 0;
    for &(truth, pred, degen) in &outcomes {
        if truth >= out_dim {
            return Err(Error::Config(format!("label {truth} exceeds the {out_dim}-way output layer")));
        }
        confusion[truth][pred] += 1;
        correct += usize::from(truth == pred);
        degenerate += usize::from(degen);
    }
    Ok(EvalReport { n, correct, accuracy: correct as f64 / n as f64, confusion, degenerate })
}

/// One metrics row per epoch; layer indices count from the first non-input
/// layer.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    /// Mean spikes per neuron per presentation, one entry per layer.
    pub spike_rates: Vec<f64>,
    pub mean_vth: Vec<f64>,
    /// Neurons that never fired during this epoch's training passes.
    pub dead_neurons: usize,
    /// Samples with a silent output layer, skipped for the error term.
    pub skipped_samples: usize,
    pub wall_clock_s: f64,
}

impl MetricsRow {
    pub fn header(depth: usize) -> String {
        let mut h = String::from("epoch,train_loss,test_accuracy");
        for l in 1..=depth {
            let _ = write!(h, ",spike_rate_l{l}");
        }
        for l in 1..=depth {
            let _ = write!(h, ",mean_vth_l{l}");
        }
        h.push_str(",dead_neurons,skipped_samples,wall_clock_s");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{},{}", self.epoch, self.train_loss, self.test_accuracy);
        for r in &self.spike_rates {
            let _ = write!(s, ",{r}");
        }
        for v in &self.mean_vth {
            let _ = write!(s, ",{v}");
        }
        let _ = write!(s, ",{},{},{}", self.dead_neurons, self.skipped_samples, self.wall_clock_s);
        s
    }
}

#[derive(Debug)]
pub struct TrainReport {
    pub rows: Vec<MetricsRow>,
    /// Accuracy of the final full evaluation.
    pub final_accuracy: f64,
    /// Accuracy averaged over the trailing `avg_window` epochs.
    pub avg_accuracy: f64,
    pub final_eval: Option<EvalReport>,
    pub skipped_total: usize,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// The presentation length schedule: long presentations in the first epoch
/// as an initial training phase, the configured length afterwards.
fn epoch_duration(cfg: &TrainConfig, epoch: usize) -> u64 {
    if epoch == 0 && cfg.uses_warmup() {
        cfg.warmup_duration_us
    } else {
        cfg.train_duration_us
    }
}

fn save_abort(cfg: &TrainConfig, net: &Network) {
    let _ = checkpoint::save(&cfg.out_dir.join("abort.ckpt"), net, cfg.seed);
}

/// Run the configured training job end to end, writing `metrics.csv`,
/// `run_meta.txt`, `final.ckpt`, and any periodic checkpoints into the
/// output directory. On a numeric failure the last consistent parameters are
/// saved to `abort.ckpt` before the error is returned.
pub fn train(cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(cfg, |_| {})
}

/// [`train`] with a per-epoch callback, invoked right after each metrics row
/// is finalized. The CLI uses it for progress lines.
pub fn train_with<F: FnMut(&MetricsRow)>(cfg: &TrainConfig, mut progress: F) -> Result<TrainReport> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    if data.train_len() == 0 {
        return Err(Error::Config("empty training set".into()));
    }
    if cfg.topology[0] != data.input_dim() {
        return Err(Error::Config(format!(
            "topology expects {} input lines but {} provides {}",
            cfg.topology[0],
            cfg.dataset.name(),
            data.input_dim()
        )));
    }

    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let mut net = Network::init(&cfg.network_config(), mix_seed(cfg.seed, 1, 0))?;
    let mut opt = Optimizer::new(cfg.optimizer, &net);
    let reg = if cfg.lambda > 0.0 { WeightReg { lambda: cfg.lambda, beta: cfg.beta } } else { WeightReg::off() };
    let depth = net.layers.len();

    // Run metadata: the effective config plus the full epoch schedule, so a
    // finished run documents exactly what it did.
    let mut meta = String::from("# effective configuration\n");
    meta.push_str(&cfg.to_text());
    meta.push_str("# schedule\n");
    for epoch in 0..cfg.epochs {
        let decay = epoch_decay(epoch);
        let _ = writeln!(
            meta,
            "epoch {epoch} train_duration_us {} eta_w {} rho {}",
            epoch_duration(cfg, epoch),
            cfg.eta_w * decay,
            if cfg.threshold_reg { cfg.rho * decay } else { 0.0 },
        );
    }
    let meta_path = cfg.out_dir.join("run_meta.txt");
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;

    let metrics_path = cfg.out_dir.join("metrics.csv");
    let mut metrics = format!("{}\n", MetricsRow::header(depth));

    let checkpoint_path = cfg.out_dir.join("final.ckpt");
    let enc_base = train_encode_base(cfg.seed);
    let mut rows: Vec<MetricsRow> = Vec::with_capacity(cfg.epochs);
    let mut skipped_total = 0;
    let mut final_eval = None;

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let decay = epoch_decay(epoch);
        opt.set_epoch_rates(cfg.eta_w * decay);
        let rho = if cfg.threshold_reg && cfg.rho > 0.0 { Some(cfg.rho * decay) } else { None };
        let duration = epoch_duration(cfg, epoch);

        let mut order: Vec<usize> = (0..data.train_len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2, epoch as u64)));

        let mut loss_sum = 0.0;
        let mut skipped = 0;
        let mut spike_sums = vec![0u64; depth];
        let mut fired: Vec<Vec<bool>> = net.layers.iter().map(|p| vec![false; p.n]).collect();

        for &idx in &order {
            let (events, dur) = encode_train(cfg, &data, idx, epoch, duration, enc_base);
            let rec = forward_sample(&mut net, &events, &ForwardOpts::train(dur, rho))?;
            for (l, layer_rec) in rec.layers.iter().enumerate() {
                for (i, &c) in layer_rec.counts.iter().enumerate() {
                    spike_sums[l] += c as u64;
                    fired[l][i] |= c > 0;
                }
            }

            let label = data.train_label(idx);
            let grads = backward(&net, &rec, label)?;
            let mut loss = 0.0;
            if reg.lambda > 0.0 {
                for layer in &net.layers[..depth - 1] {
                    loss += regularizer::weight_cost(layer, reg.lambda, reg.beta);
                }
            }
            match &grads {
                Some(_) => {
                    let (a_out, _) = output_activity(&rec.layers[depth - 1].counts)
                        .expect("gradients imply an active output layer");
                    loss += data_loss(&a_out, label);
                }
                None => skipped += 1,
            }
            if !loss.is_finite() {
                save_abort(cfg, &net);
                return Err(Error::Numeric(format!("non-finite training loss at epoch {epoch}, sample {idx}")));
            }
            loss_sum += loss;
            if let Err(e) = opt.apply(&mut net, grads.as_ref(), &reg) {
                save_abort(cfg, &net);
                return Err(e);
            }
        }
        skipped_total += skipped;

        let eval_limit = if epoch + 1 == cfg.epochs { 0 } else { cfg.epoch_eval_subset };
        let eval = evaluate_accuracy(&net, &data, cfg, eval_limit)?;

        let row = MetricsRow {
            epoch,
            train_loss: loss_sum / data.train_len() as f64,
            test_accuracy: eval.accuracy,
            spike_rates: spike_sums
                .iter()
                .zip(&net.layers)
                .map(|(&s, p)| s as f64 / (p.n as f64 * data.train_len() as f64))
                .collect(),
            mean_vth: net.layers.iter().map(|p| mean(&p.v_th)).collect(),
            dead_neurons: fired.iter().map(|f| f.iter().filter(|&&b| !b).count()).sum(),
            skipped_samples: skipped,
            wall_clock_s: t0.elapsed().as_secs_f64(),
        };
        metrics.push_str(&row.to_csv());
        metrics.push('\n');
        progress(&row);
        rows.push(row);
        if epoch + 1 == cfg.epochs {
            final_eval = Some(eval);
        }

        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            checkpoint::save(&cfg.out_dir.join(format!("epoch_{epoch}.ckpt")), &net, cfg.seed)?;
        }
    }

    fs::write(&metrics_path, metrics).map_err(|e| Error::io(&metrics_path, e))?;
    checkpoint::save(&checkpoint_path, &net, cfg.seed)?;

    let final_accuracy = rows.last().map_or(0.0, |r| r.test_accuracy);
    let tail = rows.len().saturating_sub(cfg.avg_window);
    let avg_accuracy = if rows.is_empty() {
        0.0
    } else {
        mean(&rows[tail..].iter().map(|r| r.test_accuracy).collect::<Vec<_>>())
    };
    Ok(TrainReport {
        rows,
        final_accuracy,
        avg_accuracy,
        final_eval,
        skipped_total,
        checkpoint_path,
        metrics_path,
    })
}
