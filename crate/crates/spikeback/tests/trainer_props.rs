//! Trainer-level properties on reduced MNIST subsets: loss trend, the
//! dead-neuron effect of threshold regularization, chance-level accuracy of
//! an untrained net, and checkpoint round-trip fidelity.

use std::path::Path;

use spikeback::config::TrainConfig;
use spikeback::data::mix_seed;
use spikeback::network::Network;
use spikeback::{checkpoint, trainer};

fn mnist_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn subset_config(out_dir: &Path) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.data_dir = mnist_dir();
    cfg.out_dir = out_dir.to_path_buf();
    cfg.alpha = 3.0;
    cfg.eta_w = 0.002;
    cfg.lambda = 0.002;
    cfg.rho = 4e-5;
    cfg.v_th_floor_alpha = 0.1;
    cfg.train_subset = 10_000;
    cfg.test_subset = 500;
    cfg.epoch_eval_subset = 50;
    cfg.checkpoint_every = 0;
    cfg
}

#[test]
fn train_loss_decreases_across_epochs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = subset_config(tmp.path());
    cfg.epochs = 6;
    let report = trainer::train(&cfg).unwrap();
    let losses: Vec<f64> = report.rows.iter().map(|r| r.train_loss).collect();
    let decreasing = losses.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(
        decreasing >= 4,
        "train loss decreased in only {decreasing} of {} transitions: {losses:?}",
        losses.len() - 1
    );
}

#[test]
fn threshold_regularization_prevents_dead_neurons() {
    let tmp = tempfile::tempdir().unwrap();

    let mut with_reg = subset_config(&tmp.path().join("on"));
    with_reg.epochs = 3;
    let on = trainer::train(&with_reg).unwrap();
    let dead_on: Vec<usize> = on.rows.iter().map(|r| r.dead_neurons).collect();
    assert!(
        dead_on.windows(2).all(|w| w[1] <= w[0]),
        "dead-neuron count increased under threshold regularization: {dead_on:?}"
    );

    let mut no_reg = subset_config(&tmp.path().join("off"));
    no_reg.epochs = 3;
    no_reg.threshold_reg = false;
    let off = trainer::train(&no_reg).unwrap();
    let dead_off = off.rows.last().unwrap().dead_neurons;
    assert!(
        dead_off > *dead_on.last().unwrap(),
        "disabling threshold regularization left {dead_off} dead neurons vs {} with it",
        dead_on.last().unwrap()
    );
}

#[test]
fn untrained_network_scores_at_chance() {
    let mut cfg = subset_config(Path::new("."));
    cfg.test_subset = 2_000;
    let data = trainer::load_data(&cfg).unwrap();
    let net = Network::init(&cfg.network_config(), mix_seed(cfg.seed, 1, 0)).unwrap();
    let report = trainer::evaluate_accuracy(&net, &data, &cfg, 0).unwrap();
    assert!(
        (report.accuracy - 0.10).abs() <= 0.02,
        "untrained accuracy {:.4} outside 0.10 +/- 0.02",
        report.accuracy
    );
}

#[test]
fn checkpoint_roundtrip_preserves_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = subset_config(tmp.path());
    cfg.topology = vec![784, 16, 10];
    cfg.train_subset = 300;
    cfg.test_subset = 200;
    cfg.epochs = 1;
    let report = trainer::train(&cfg).unwrap();

    let data = trainer::load_data(&cfg).unwrap();
    let (net, seed) = checkpoint::load(&report.checkpoint_path).unwrap();
    assert_eq!(seed, cfg.seed);
    let direct = trainer::evaluate_accuracy(&net, &data, &cfg, 0).unwrap();
    let (net2, _) = checkpoint::load(&report.checkpoint_path).unwrap();
    let again = trainer::evaluate_accuracy(&net2, &data, &cfg, 0).unwrap();
    assert_eq!(direct.accuracy, again.accuracy);
    assert_eq!(direct.confusion, again.confusion);
    assert_eq!(direct.accuracy, report.final_accuracy);
}
