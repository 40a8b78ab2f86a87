//! Feed-forward spiking network: parameters, initialization, and the
//! event-driven forward pass.
//!
//! Layers are fully connected. A presentation is driven entirely by a queue
//! of timestamped spikes: input spikes seed the queue, output spikes of layer
//! `l` are re-enqueued as input spikes of layer `l + 1`. Between events no
//! state changes, so the engine touches a layer only when a spike reaches it.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    self, LifConfig, NeuronState, SpikeEvent, Trace,
};
use crate::error::{Error, Result};
use crate::regularizer;

/// Parameters of one fully connected spiking layer (`m` inputs, `n` neurons).
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub m: usize,
    pub n: usize,
    /// Row-major `n x m`: `weights[i * m + j]` is synapse `j` of neuron `i`.
    pub weights: Vec<f64>,
    /// Per-neuron firing thresholds, always positive.
    pub v_th: Vec<f64>,
    /// Uniform lateral inhibition strength, in `[-1, 0]`; 0 disables WTA.
    pub mu: f64,
    /// Average efficacy of lateral inhibition in the rate model.
    pub sigma: f64,
    /// Reset fraction of the threshold.
    pub gamma: f64,
    pub tau_mp_us: f64,
    pub t_ref_us: u64,
    pub w_d0: f64,
    /// Lower bound on thresholds maintained by regularization and updates.
    pub v_th_floor: f64,
}

impl LayerParams {
    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.m..(i + 1) * self.m]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.weights[i * self.m..(i + 1) * self.m]
    }

    pub fn lif(&self) -> LifConfig {
        LifConfig {
            tau_mp_us: self.tau_mp_us,
            t_ref_us: self.t_ref_us,
            w_d0: self.w_d0,
            gamma: self.gamma,
        }
    }
}

/// Everything needed to build a fresh network.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    /// Layer widths, input first: `[784, 100, 10]` is one hidden layer.
    pub topology: Vec<usize>,
    /// Threshold scale: `v_th = alpha * sqrt(3 / m)` per layer.
    pub alpha: f64,
    /// Lateral inhibition per non-input layer; length `topology.len() - 1`.
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub gamma: f64,
    pub tau_mp_us: f64,
    pub t_ref_us: u64,
    pub w_d0: f64,
    /// Threshold floor as a multiple of `sqrt(3 / m)`.
    pub v_th_floor_alpha: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<LayerParams>,
}

impl Network {
    /// Initialize weights uniformly on `[-sqrt(3/m), sqrt(3/m))` so the
    /// expected squared weight sum per neuron is 1, and thresholds at
    /// `alpha` times the weight bound. Fully deterministic in `seed`.
    pub fn init(cfg: &NetworkConfig, seed: u64) -> Result<Network> {
        if cfg.topology.len() < 2 {
            return Err(Error::Config("topology needs at least input and output widths".into()));
        }
        if cfg.topology.iter().any(|&w| w == 0) {
            return Err(Error::Config("topology widths must be positive".into()));
        }
        if cfg.mu.len() != cfg.topology.len() - 1 {
            return Err(Error::Config(format!(
                "expected {} lateral inhibition values, got {}",
                cfg.topology.len() - 1,
                cfg.mu.len()
            )));
        }
        if cfg.mu.iter().any(|&mu| !(-1.0..=0.0).contains(&mu)) {
            return Err(Error::Config("lateral inhibition must lie in [-1, 0]".into()));
        }
        if cfg.alpha <= 0.0 || cfg.sigma <= 0.0 || cfg.gamma <= 0.0 {
            return Err(Error::Config("alpha, sigma and gamma must be positive".into()));
        }
        if cfg.gamma + cfg.mu.iter().fold(f64::INFINITY, |a, &b| a.min(b)) * cfg.sigma <= 0.0 {
            return Err(Error::Config("gamma must exceed |mu| * sigma".into()));
        }
        if cfg.tau_mp_us <= 0.0 {
            return Err(Error::Config("tau_mp_us must be positive".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(cfg.topology.len() - 1);
        for (l, pair) in cfg.topology.windows(2).enumerate() {
            let (m, n) = (pair[0], pair[1]);
            let bound = (3.0 / m as f64).sqrt();
            let weights = (0..n * m).map(|_| rng.random_range(-bound..bound)).collect();
            layers.push(LayerParams {
                m,
                n,
                weights,
                v_th: vec![cfg.alpha * bound; n],
                mu: cfg.mu[l],
                sigma: cfg.sigma,
                gamma: cfg.gamma,
                tau_mp_us: cfg.tau_mp_us,
                t_ref_us: cfg.t_ref_us,
                w_d0: cfg.w_d0,
                v_th_floor: cfg.v_th_floor_alpha * bound,
            });
        }
        Ok(Network { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].m
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().n
    }

    pub fn topology(&self) -> Vec<usize> {
        let mut t = vec![self.layers[0].m];
        t.extend(self.layers.iter().map(|l| l.n));
        t
    }
}

/// Forward-pass options.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOpts {
    pub duration_us: u64,
    pub train: bool,
    /// Threshold regularization strength; applied only when `train` is set.
    pub rho: Option<f64>,
    /// Keep per-layer spike times in the result (costs an allocation per
    /// spike, so off by default).
    pub record: bool,
}

impl ForwardOpts {
    pub fn eval(duration_us: u64) -> Self {
        ForwardOpts { duration_us, train: false, rho: None, record: false }
    }

    pub fn train(duration_us: u64, rho: Option<f64>) -> Self {
        ForwardOpts { duration_us, train: true, rho, record: false }
    }

    pub fn recorded(mut self) -> Self {
        self.record = true;
        self
    }
}

/// Per-layer observables of one presentation, everything the learning rule
/// needs: input traces `x`, output traces `a`, and spike counts (from which
/// the active synapse and neuron sets follow).
#[derive(Debug, Clone)]
pub struct LayerRecord {
    /// Input-side traces at the end of the presentation, length `m`.
    pub x: Vec<f64>,
    /// Output traces at the end of the presentation, length `n`.
    pub a: Vec<f64>,
    /// Spikes received per input line, length `m`.
    pub x_counts: Vec<u32>,
    /// Spikes emitted per neuron, length `n`.
    pub counts: Vec<u32>,
    /// Number of input lines that received at least one spike.
    pub m_active: usize,
    /// Number of neurons that fired at least once.
    pub n_active: usize,
    /// Membrane potentials decayed to the end of the presentation.
    pub v_end: Vec<f64>,
}

impl LayerRecord {
    pub fn synapse_active(&self, j: usize) -> bool {
        self.x_counts[j] > 0
    }

    pub fn neuron_active(&self, i: usize) -> bool {
        self.counts[i] > 0
    }
}

#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub layers: Vec<LayerRecord>,
    pub duration_us: u64,
    /// Output spikes as (time, neuron), in emission order.
    pub output_spikes: Vec<(u64, u32)>,
    /// Every layer's spikes as (time, neuron), in emission order; present
    /// when the forward pass ran with recording on.
    pub spike_log: Option<Vec<Vec<(u64, u32)>>>,
}

/// Classification outcome of one presentation.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub label: usize,
    pub counts: Vec<u32>,
    /// True when no output neuron fired at all (label falls back to 0).
    pub degenerate: bool,
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct QueuedSpike {
    t_us: u64,
    layer: u16,
    source: u32,
    seq: u64,
}

struct LayerSim {
    neurons: Vec<NeuronState>,
    x: Vec<Trace>,
    x_counts: Vec<u32>,
    counts: Vec<u32>,
}

impl LayerSim {
    fn new(m: usize, n: usize) -> Self {
        LayerSim {
            neurons: vec![NeuronState::new(); n],
            x: vec![Trace::new(); m],
            x_counts: vec![0; m],
            counts: vec![0; n],
        }
    }
}

enum NetRef<'a> {
    Ro(&'a Network),
    Rw(&'a mut Network),
}

impl NetRef<'_> {
    fn get(&self) -> &Network {
        match self {
            NetRef::Ro(n) => n,
            NetRef::Rw(n) => n,
        }
    }

    fn layer_mut(&mut self, l: usize) -> &mut LayerParams {
        match self {
            NetRef::Ro(_) => unreachable!("mutation requested on a shared network"),
            NetRef::Rw(n) => &mut n.layers[l],
        }
    }
}

fn validate_events(events: &[SpikeEvent], input_dim: usize, duration_us: u64) -> Result<()> {
    let mut prev = 0u64;
    for (k, ev) in events.iter().enumerate() {
        if ev.t_us < prev {
            return Err(Error::format(
                "input events",
                format!("event {k} at {} us precedes event {} at {} us", ev.t_us, k - 1, prev),
            ));
        }
        if ev.t_us > duration_us {
            return Err(Error::format(
                "input events",
                format!("event {k} at {} us exceeds the presentation of {} us", ev.t_us, duration_us),
            ));
        }
        if ev.source as usize >= input_dim {
            return Err(Error::format(
                "input events",
                format!("event {k} addresses line {} of {}", ev.source, input_dim),
            ));
        }
        prev = ev.t_us;
    }
    Ok(())
}

fn run(mut net: NetRef, events: &[SpikeEvent], opts: &ForwardOpts) -> Result<SampleRecord> {
    let depth = net.get().layers.len();
    validate_events(events, net.get().input_dim(), opts.duration_us)?;

    let mut sims: Vec<LayerSim> =
        net.get().layers.iter().map(|p| LayerSim::new(p.m, p.n)).collect();
    let mut output_spikes = Vec::new();
    let mut spike_log: Option<Vec<Vec<(u64, u32)>>> =
        opts.record.then(|| vec![Vec::new(); depth]);

    let mut heap: BinaryHeap<Reverse<QueuedSpike>> = BinaryHeap::with_capacity(events.len() + 64);
    let mut seq = 0u64;
    for ev in events {
        heap.push(Reverse(QueuedSpike { t_us: ev.t_us, layer: 0, source: ev.source, seq }));
        seq += 1;
    }

    let mut fired: Vec<usize> = Vec::new();
    while let Some(Reverse(ev)) = heap.pop() {
        let l = ev.layer as usize;
        let t = ev.t_us;
        let sim = &mut sims[l];
        let p = &net.get().layers[l];
        let src = ev.source as usize;
        let lif = p.lif();

        sim.x[src].add_spike(t, p.tau_mp_us);
        sim.x_counts[src] += 1;

        for (i, st) in sim.neurons.iter_mut().enumerate() {
            dynamics::on_input_spike(st, p.weights[i * p.m + src], p.v_th[i], t, &lif);
        }

        // Firing resolution in ascending neuron order. Inhibition fires
        // immediately, so an earlier winner can silence later candidates;
        // a single pass suffices because inhibition only lowers potentials.
        fired.clear();
        for i in 0..p.n {
            if sim.neurons[i].v_mp >= p.v_th[i] {
                dynamics::fire_and_reset(&mut sim.neurons[i], p.v_th[i], t, &lif);
                sim.counts[i] += 1;
                fired.push(i);
                if let Some(log) = spike_log.as_mut() {
                    log[l].push((t, i as u32));
                }
                if p.mu != 0.0 {
                    for j in 0..p.n {
                        if j != i {
                            dynamics::apply_lateral_inhibition(
                                &mut sim.neurons[j],
                                p.mu,
                                p.v_th[j],
                                t,
                                &lif,
                            );
                        }
                    }
                }
                if l + 1 < depth {
                    heap.push(Reverse(QueuedSpike {
                        t_us: t,
                        layer: (l + 1) as u16,
                        source: i as u32,
                        seq,
                    }));
                    seq += 1;
                } else {
                    output_spikes.push((t, i as u32));
                }
            }
        }

        if opts.train && !fired.is_empty() {
            if let Some(rho) = opts.rho {
                regularizer::threshold_step(net.layer_mut(l), &fired, rho);
            }
        }
    }

    let net = net.get();
    let layers = sims
        .into_iter()
        .enumerate()
        .map(|(l, sim)| {
            let tau = net.layers[l].tau_mp_us;
            let x: Vec<f64> =
                sim.x.iter().map(|tr| tr.value_at(opts.duration_us, tau)).collect();
            let a: Vec<f64> =
                sim.neurons.iter().map(|st| st.a.value_at(opts.duration_us, tau)).collect();
            let v_end: Vec<f64> = sim
                .neurons
                .iter()
                .map(|st| dynamics::decay(st.v_mp, st.t_last_us, opts.duration_us, tau))
                .collect();
            let m_active = sim.x_counts.iter().filter(|&&c| c > 0).count();
            let n_active = sim.counts.iter().filter(|&&c| c > 0).count();
            LayerRecord { x, a, x_counts: sim.x_counts, counts: sim.counts, m_active, n_active, v_end }
        })
        .collect();

    Ok(SampleRecord { layers, duration_us: opts.duration_us, output_spikes, spike_log })
}

/// Run one presentation. Training mode may mutate thresholds (and, through
/// floor compensation, weights), which is why the network is borrowed
/// mutably; evaluation never writes and can use [`evaluate`] instead.
pub fn forward_sample(net: &mut Network, events: &[SpikeEvent], opts: &ForwardOpts) -> Result<SampleRecord> {
    run(NetRef::Rw(net), events, opts)
}

/// Evaluation-mode presentation on a shared network reference.
pub fn forward_eval(net: &Network, events: &[SpikeEvent], duration_us: u64) -> Result<SampleRecord> {
    run(NetRef::Ro(net), events, &ForwardOpts::eval(duration_us))
}

/// Evaluation-mode presentation that keeps the full per-layer spike log.
pub fn forward_recorded(net: &Network, events: &[SpikeEvent], duration_us: u64) -> Result<SampleRecord> {
    run(NetRef::Ro(net), events, &ForwardOpts::eval(duration_us).recorded())
}

/// Classify one presentation by output spike count; ties go to the lowest
/// index, and a fully silent output layer is flagged as degenerate.
pub fn evaluate(net: &Network, events: &[SpikeEvent], duration_us: u64) -> Result<Prediction> {
    let rec = forward_eval(net, events, duration_us)?;
    let counts = rec.layers.last().unwrap().counts.clone();
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    let degenerate = counts.iter().all(|&c| c == 0);
    Ok(Prediction { label: best, counts, degenerate })
}
