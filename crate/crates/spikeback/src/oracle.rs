//! Independent reference implementations used to cross-check the fast paths:
//! a clock-driven dense simulator for the event engine, central-difference
//! gradients for the analytic derivatives, and a randomized checking suite
//! that exercises both derivative routes on synthetic layer instances.
//!
//! The dense simulator advances every neuron every step by the fixed factor
//! `exp(-dt / tau)` and re-derives delivery, clamping, reset and lateral
//! inhibition from the layer parameters alone. It shares no state machinery
//! with the event engine, so agreement between the two is evidence that the
//! lazy decay and queue ordering are right.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::SpikeEvent;
use crate::error::{Error, Result};
use crate::learning;
use crate::network::Network;

/// Relative tolerance for finite-difference vs analytic derivatives.
pub const FD_TOL: f64 = 1e-5;
/// Relative tolerance between the closed-form and matrix-inverse routes.
pub const ROUTE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct DenseSimConfig {
    /// Step size; every event time must sit on this grid.
    pub dt_us: u64,
    pub duration_us: u64,
    /// Keep one row of membrane potentials per step (costly on long runs).
    pub record_trajectory: bool,
}

impl DenseSimConfig {
    pub fn new(duration_us: u64) -> Self {
        DenseSimConfig { dt_us: 1, duration_us, record_trajectory: false }
    }

    pub fn with_dt(mut self, dt_us: u64) -> Self {
        self.dt_us = dt_us;
        self
    }

    pub fn recorded(mut self) -> Self {
        self.record_trajectory = true;
        self
    }
}

/// Dense per-layer outcome, mirroring what the event engine reports.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// Spikes as (time, neuron) in emission order.
    pub spikes: Vec<(u64, u32)>,
    /// Membrane potentials at the end of the presentation.
    pub v_end: Vec<f64>,
    /// Input-side traces at the end of the presentation.
    pub x: Vec<f64>,
    /// Output traces at the end of the presentation.
    pub a: Vec<f64>,
    pub x_counts: Vec<u32>,
    pub counts: Vec<u32>,
    /// One row of potentials per step (step 0 included) when recording.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct DenseResult {
    pub layers: Vec<DenseLayer>,
    pub duration_us: u64,
}

struct DenseLayerState {
    v: Vec<f64>,
    last_fire: Vec<Option<u64>>,
    x_times: Vec<Vec<u64>>,
    spikes: Vec<(u64, u32)>,
    x_counts: Vec<u32>,
    counts: Vec<u32>,
    /// time -> (source, seq), replayed in (source, seq) order within a step.
    pending: BTreeMap<u64, Vec<(u32, u64)>>,
    trajectory: Option<Vec<Vec<f64>>>,
}

fn refractory_gain(last_fire: Option<u64>, t_us: u64, t_ref_us: u64, w_d0: f64) -> f64 {
    match last_fire {
        None => 1.0,
        Some(t0) => {
            let elapsed = t_us - t0;
            if elapsed >= t_ref_us {
                1.0
            } else {
                let frac = elapsed as f64 / t_ref_us as f64;
                (w_d0 + frac * frac).min(1.0)
            }
        }
    }
}

fn validate_dense_events(
    events: &[SpikeEvent],
    input_dim: usize,
    cfg: &DenseSimConfig,
) -> Result<()> {
    let mut prev = 0u64;
    for (k, ev) in events.iter().enumerate() {
        if ev.t_us < prev {
            return Err(Error::format(
                "input events",
                format!("event {k} at {} us precedes event {} at {} us", ev.t_us, k - 1, prev),
            ));
        }
        if ev.t_us > cfg.duration_us {
            return Err(Error::format(
                "input events",
                format!(
                    "event {k} at {} us exceeds the presentation of {} us",
                    ev.t_us, cfg.duration_us
                ),
            ));
        }
        if ev.t_us % cfg.dt_us != 0 {
            return Err(Error::format(
                "input events",
                format!("event {k} at {} us is off the {} us step grid", ev.t_us, cfg.dt_us),
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

/// Fixed-step forward pass over the whole network. Spike times are exact
/// (events land on the step grid), potentials accumulate one rounding error
/// per step relative to the lazy exponentials of the event engine.
pub fn clock_driven_forward(
    net: &Network,
    events: &[SpikeEvent],
    cfg: &DenseSimConfig,
) -> Result<DenseResult> {
    if cfg.dt_us == 0 {
        return Err(Error::Config("dt_us must be positive".into()));
    }
    if cfg.duration_us % cfg.dt_us != 0 {
        return Err(Error::Config(format!(
            "step of {} us must divide the presentation of {} us",
            cfg.dt_us, cfg.duration_us
        )));
    }
    validate_dense_events(events, net.input_dim(), cfg)?;

    let depth = net.layers.len();
    let step_decay: Vec<f64> =
        net.layers.iter().map(|p| (-(cfg.dt_us as f64) / p.tau_mp_us).exp()).collect();

    let mut st: Vec<DenseLayerState> = net
        .layers
        .iter()
        .map(|p| DenseLayerState {
            v: vec![0.0; p.n],
            last_fire: vec![None; p.n],
            x_times: vec![Vec::new(); p.m],
            spikes: Vec::new(),
            x_counts: vec![0; p.m],
            counts: vec![0; p.n],
            pending: BTreeMap::new(),
            trajectory: cfg.record_trajectory.then(Vec::new),
        })
        .collect();

    let mut seq = 0u64;
    for ev in events {
        st[0].pending.entry(ev.t_us).or_default().push((ev.source, seq));
        seq += 1;
    }

    let steps = cfg.duration_us / cfg.dt_us;
    for step in 0..=steps {
        let t = step * cfg.dt_us;
        if step > 0 {
            for (l, s) in st.iter_mut().enumerate() {
                let f = step_decay[l];
                for v in &mut s.v {
                    *v *= f;
                }
            }
        }
        // Ascending layer order within a step reproduces the event queue:
        // every delivery of layer l at time t lands before layer l + 1 sees
        // its same-time fan-in, and each delivery resolves firing (with
        // immediate inhibition) before the next source is applied.
        for l in 0..depth {
            let Some(mut bucket) = st[l].pending.remove(&t) else { continue };
            bucket.sort_unstable();
            let p = &net.layers[l];
            for (source, _) in bucket {
                let src = source as usize;
                st[l].x_times[src].push(t);
                st[l].x_counts[src] += 1;
                for i in 0..p.n {
                    let gain = refractory_gain(st[l].last_fire[i], t, p.t_ref_us, p.w_d0);
                    let v = st[l].v[i] + p.weights[i * p.m + src] * gain;
                    st[l].v[i] = v.clamp(-p.v_th[i], p.v_th[i]);
                }
                for i in 0..p.n {
                    if st[l].v[i] >= p.v_th[i] {
                        st[l].v[i] -= p.gamma * p.v_th[i];
                        st[l].last_fire[i] = Some(t);
                        st[l].counts[i] += 1;
                        st[l].spikes.push((t, i as u32));
                        if p.mu != 0.0 {
                            for j in 0..p.n {
                                if j != i {
                                    let v = st[l].v[j] + p.mu * p.v_th[j];
                                    st[l].v[j] = if v < -p.v_th[j] { -p.v_th[j] } else { v };
                                }
                            }
                        }
                        if l + 1 < depth {
                            st[l + 1].pending.entry(t).or_default().push((i as u32, seq));
                            seq += 1;
                        }
                    }
                }
            }
        }
        if cfg.record_trajectory {
            for s in &mut st {
                let row = s.v.clone();
                s.trajectory.as_mut().unwrap().push(row);
            }
        }
    }

    let layers = st
        .into_iter()
        .enumerate()
        .map(|(l, s)| {
            let tau = net.layers[l].tau_mp_us;
            let horizon = cfg.duration_us;
            let trace_sum = |times: &[u64]| -> f64 {
                times.iter().map(|&tp| (-((horizon - tp) as f64) / tau).exp()).sum()
            };
            let x: Vec<f64> = s.x_times.iter().map(|ts| trace_sum(ts)).collect();
            let mut a = vec![0.0; net.layers[l].n];
            for &(t, i) in &s.spikes {
                a[i as usize] += (-((horizon - t) as f64) / tau).exp();
            }
            DenseLayer {
                spikes: s.spikes,
                v_end: s.v,
                x,
                a,
                x_counts: s.x_counts,
                counts: s.counts,
                trajectory: s.trajectory,
            }
        })
        .collect();

    Ok(DenseResult { layers, duration_us: cfg.duration_us })
}

/// Central-difference gradient of `f` at `p`, one step size per coordinate.
/// Fails on non-finite function values or invalid steps.
pub fn numeric_gradient<F>(mut f: F, p: &[f64], h: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if p.len() != h.len() {
        return Err(Error::Config("one step size per parameter".into()));
    }
    let mut work = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        let hk = h[k];
        if !hk.is_finite() || hk <= 0.0 {
            return Err(Error::Config(format!("step {k} must be positive and finite")));
        }
        work[k] = p[k] + hk;
        let up = f(&work)?;
        work[k] = p[k] - hk;
        let down = f(&work)?;
        work[k] = p[k];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite value while differencing parameter {k}"
            )));
        }
        grad.push((up - down) / (2.0 * hk));
    }
    Ok(grad)
}

/// Default central-difference steps: `1e-6 * max(1, |p|)` per coordinate.
pub fn fd_steps(p: &[f64]) -> Vec<f64> {
    p.iter().map(|v| 1e-6 * v.abs().max(1.0)).collect()
}

/// Relative error with an absolute floor of 1, so near-zero pairs compare
/// absolutely and large pairs compare relatively.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Outcome of a randomized derivative check.
#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub cases: usize,
    /// Worst relative error of the per-parameter derivatives (drive, weight,
    /// threshold, lateral coupling) against finite differences of the rate
    /// model with sibling activities held fixed.
    pub max_rel_local: f64,
    /// Worst relative error of the input-trace derivative against finite
    /// differences through a full re-solve of the coupled rate model.
    pub max_rel_input: f64,
    /// Worst gap between the closed-form and matrix-inverse routes, for both
    /// the rates and the input-trace derivatives.
    pub max_route_gap: f64,
}

impl GradcheckReport {
    pub fn max_rel(&self) -> f64 {
        self.max_rel_local.max(self.max_rel_input)
    }

    pub fn pass(&self) -> bool {
        self.max_rel() < FD_TOL && self.max_route_gap < ROUTE_TOL
    }
}

/// Randomized derivative check over synthetic layer instances.
///
/// Each case draws widths, thresholds, traces and target activities, then
/// back-solves the weighted drives (and a rank-1 weight correction realizing
/// them) so every neuron sits at an interior activity in `[0.1, 1.2]`. That
/// keeps finite differences away from the rectification kink without any
/// rejection sampling. Deterministic in `seed`.
pub fn gradcheck_suite(seed: u64, cases: usize) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = GradcheckReport {
        cases,
        max_rel_local: 0.0,
        max_rel_input: 0.0,
        max_route_gap: 0.0,
    };
    let sigma = 0.5;
    let gamma = 1.0;

    for _ in 0..cases {
        let n = rng.random_range(2..=6usize);
        let m = rng.random_range(2..=6usize);
        let mu = [0.0, -0.4, -1.0][rng.random_range(0..3usize)];
        let v_th: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..2.0)).collect();
        let target: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.2)).collect();

        let total: f64 = target.iter().sum();
        let s: Vec<f64> = (0..n)
            .map(|i| v_th[i] * (gamma * target[i] - sigma * mu * (total - target[i])))
            .collect();

        let mut w: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xx: f64 = x.iter().map(|v| v * v).sum();
        for i in 0..n {
            let s0: f64 = (0..m).map(|k| w[i * m + k] * x[k]).sum();
            let corr = (s[i] - s0) / xx;
            for k in 0..m {
                w[i * m + k] += corr * x[k];
            }
        }

        let a = learning::transfer_rate(&s, &v_th, mu, sigma, gamma)?;
        let kappa = DMatrix::from_element(n, n, mu);
        let a_matrix = learning::transfer_rate_matrix(&s, &v_th, &kappa, sigma, gamma)?;
        for i in 0..n {
            rep.max_route_gap = rep.max_route_gap.max(rel_err(a[i], a_matrix[i]));
        }

        let total_a: f64 = a.iter().sum();
        for i in 0..n {
            let sib = total_a - a[i];

            let g = numeric_gradient(
                |p| Ok((p[0] / v_th[i] + sigma * mu * sib) / gamma),
                &[s[i]],
                &fd_steps(&[s[i]]),
            )?;
            rep.max_rel_local =
                rep.max_rel_local.max(rel_err(learning::d_a_d_s(v_th[i], gamma), g[0]));

            let k = rng.random_range(0..m);
            let rest = s[i] - w[i * m + k] * x[k];
            let g = numeric_gradient(
                |p| Ok(((rest + p[0] * x[k]) / v_th[i] + sigma * mu * sib) / gamma),
                &[w[i * m + k]],
                &fd_steps(&[w[i * m + k]]),
            )?;
            rep.max_rel_local =
                rep.max_rel_local.max(rel_err(learning::d_a_d_w(x[k], v_th[i], gamma), g[0]));

            let g = numeric_gradient(
                |p| Ok((s[i] / p[0] + sigma * mu * sib) / gamma),
                &[v_th[i]],
                &fd_steps(&[v_th[i]]),
            )?;
            rep.max_rel_local = rep.max_rel_local.max(rel_err(
                learning::d_a_d_vth(&a, i, v_th[i], mu, sigma, gamma),
                g[0],
            ));

            let h = (i + 1) % n;
            let g = numeric_gradient(
                |p| Ok((s[i] / v_th[i] + sigma * (p[0] * a[h] + mu * (sib - a[h]))) / gamma),
                &[mu],
                &fd_steps(&[mu]),
            )?;
            rep.max_rel_local =
                rep.max_rel_local.max(rel_err(learning::d_a_d_kappa(a[h], sigma, gamma), g[0]));
        }

        for k in 0..m {
            let w_col: Vec<f64> = (0..n).map(|i| w[i * m + k]).collect();
            let analytic = learning::d_a_d_x(&w_col, &v_th, mu, sigma, gamma);
            let matrix = learning::d_a_d_x_matrix(&w_col, &v_th, mu, sigma, gamma)?;
            for i in 0..n {
                rep.max_route_gap = rep.max_route_gap.max(rel_err(analytic[i], matrix[i]));
            }
            for i in 0..n {
                let g = numeric_gradient(
                    |p| {
                        let mut xv = x.clone();
                        xv[k] = p[0];
                        let sv: Vec<f64> = (0..n)
                            .map(|r| (0..m).map(|c| w[r * m + c] * xv[c]).sum())
                            .collect();
                        Ok(learning::transfer_rate(&sv, &v_th, mu, sigma, gamma)?[i])
                    },
                    &[x[k]],
                    &fd_steps(&[x[k]]),
                )?;
                rep.max_rel_input = rep.max_rel_input.max(rel_err(analytic[i], g[0]));
            }
        }
    }

    Ok(rep)
}
