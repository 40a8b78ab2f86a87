//! Leaky integrate-and-fire primitives.
//!
//! Everything here works in integer microseconds and 64-bit floats. Membrane
//! potentials decay by the closed-form exponential between touches, so state
//! only has to be updated when an event actually arrives (lazy evaluation).
//! The same `Trace` type tracks presynaptic and postsynaptic activity: each
//! spike adds 1 and the whole trace decays with the membrane time constant.

/// A spike addressed to one input line of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpikeEvent {
    pub t_us: u64,
    pub source: u32,
}

/// Per-layer scalar dynamics parameters (thresholds are per neuron and live
/// in the layer itself).
#[derive(Debug, Clone, Copy)]
pub struct LifConfig {
    /// Membrane time constant in microseconds.
    pub tau_mp_us: f64,
    /// Refractory window in microseconds.
    pub t_ref_us: u64,
    /// Dynamic weight floor immediately after an output spike.
    pub w_d0: f64,
    /// Reset fraction: firing subtracts `gamma * v_th`.
    pub gamma: f64,
}

/// Closed-form membrane decay from `t_prev_us` to `t_now_us`.
pub fn decay(v: f64, t_prev_us: u64, t_now_us: u64, tau_mp_us: f64) -> f64 {
    debug_assert!(t_now_us >= t_prev_us, "time must be non-decreasing");
    if t_now_us == t_prev_us {
        return v;
    }
    v * (-((t_now_us - t_prev_us) as f64) / tau_mp_us).exp()
}

/// Refractory attenuation of the effective synaptic weight.
///
/// A neuron that has never fired (or fired at least `t_ref_us` ago) passes
/// inputs at full strength. Within the refractory window the gain recovers
/// quadratically from `w_d0` and is capped at 1.
pub fn dynamic_weight(t_now_us: u64, t_out_us: Option<u64>, t_ref_us: u64, w_d0: f64) -> f64 {
    let Some(t_out) = t_out_us else { return 1.0 };
    debug_assert!(t_now_us >= t_out, "input precedes recorded output spike");
    let elapsed = t_now_us - t_out;
    if elapsed >= t_ref_us {
        return 1.0;
    }
    let frac = elapsed as f64 / t_ref_us as f64;
    (w_d0 + frac * frac).min(1.0)
}

/// Exponentially decaying spike trace, evaluated lazily.
#[derive(Debug, Clone, Copy, Default)]
pub struct Trace {
    pub value: f64,
    pub t_us: u64,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    /// Decay the stored value forward to `t_us`.
    pub fn advance(&mut self, t_us: u64, tau_us: f64) {
        self.value = decay(self.value, self.t_us, t_us, tau_us);
        self.t_us = t_us;
    }

    /// Register one spike at `t_us`.
    pub fn add_spike(&mut self, t_us: u64, tau_us: f64) {
        self.advance(t_us, tau_us);
        self.value += 1.0;
    }

    /// Value the trace would have at `t_us` without mutating it.
    pub fn value_at(&self, t_us: u64, tau_us: f64) -> f64 {
        decay(self.value, self.t_us, t_us, tau_us)
    }
}

/// Mutable state of a single neuron during a presentation.
#[derive(Debug, Clone)]
pub struct NeuronState {
    pub v_mp: f64,
    pub t_last_us: u64,
    pub t_out_us: Option<u64>,
    /// Trace of this neuron's own output spikes.
    pub a: Trace,
}

impl NeuronState {
    pub fn new() -> Self {
        NeuronState { v_mp: 0.0, t_last_us: 0, t_out_us: None, a: Trace::new() }
    }
}

impl Default for NeuronState {
    fn default() -> Self {
        NeuronState::new()
    }
}

/// Integrate one presynaptic spike: decay to `t_us`, add the refractory-scaled
/// weight, clamp the potential to `[-v_th, v_th]`. Returns whether the neuron
/// is now at threshold (the caller decides firing order across the layer).
pub fn on_input_spike(st: &mut NeuronState, w: f64, v_th: f64, t_us: u64, lif: &LifConfig) -> bool {
    st.v_mp = decay(st.v_mp, st.t_last_us, t_us, lif.tau_mp_us);
    st.t_last_us = t_us;
    let w_dyn = dynamic_weight(t_us, st.t_out_us, lif.t_ref_us, lif.w_d0);
    st.v_mp = (st.v_mp + w * w_dyn).clamp(-v_th, v_th);
    st.v_mp >= v_th
}

/// Emit an output spike at `t_us`: subtract `gamma * v_th`, remember the spike
/// time for the refractory gain, and bump the activity trace.
pub fn fire_and_reset(st: &mut NeuronState, v_th: f64, t_us: u64, lif: &LifConfig) {
    st.v_mp = decay(st.v_mp, st.t_last_us, t_us, lif.tau_mp_us);
    st.t_last_us = t_us;
    st.v_mp -= lif.gamma * v_th;
    st.t_out_us = Some(t_us);
    st.a.add_spike(t_us, lif.tau_mp_us);
}

/// Winner-take-all inhibition from a sibling spike: add `kappa * v_th` (with
/// `kappa < 0` and `v_th` the *inhibited* neuron's threshold), clamped below
/// at `-v_th`. Inhibition is not attenuated by the refractory gain.
pub fn apply_lateral_inhibition(st: &mut NeuronState, kappa: f64, v_th: f64, t_us: u64, lif: &LifConfig) {
    st.v_mp = decay(st.v_mp, st.t_last_us, t_us, lif.tau_mp_us);
    st.t_last_us = t_us;
    st.v_mp += kappa * v_th;
    if st.v_mp < -v_th {
        st.v_mp = -v_th;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = 20_000.0;

    fn lif() -> LifConfig {
        LifConfig { tau_mp_us: TAU, t_ref_us: 1_000, w_d0: 0.0, gamma: 1.0 }
    }

    #[test]
    fn decay_over_one_tau() {
        let v = decay(1.0, 0, 20_000, TAU);
        assert_eq!(v, 0.36787944117144233);
    }

    #[test]
    fn decay_zero_interval_is_identity() {
        assert_eq!(decay(0.7312, 5_000, 5_000, TAU), 0.7312);
    }

    #[test]
    fn decay_composes_exactly_when_closed_form() {
        // One 25 ms jump equals the closed form, not a product of steps.
        let v = decay(1.0, 0, 25_000, TAU);
        assert_eq!(v, 0.2865047968601901);
    }

    #[test]
    fn dynamic_weight_no_prior_spike_is_full() {
        assert_eq!(dynamic_weight(123, None, 1_000, 0.2), 1.0);
    }

    #[test]
    fn dynamic_weight_recovers_quadratically() {
        // elapsed 300 us of a 1 ms window: w_d0 + 0.3^2
        let w = dynamic_weight(1_300, Some(1_000), 1_000, 0.2);
        assert_eq!(w, 0.29000000000000004);
    }

    #[test]
    fn dynamic_weight_at_spike_instant_is_floor() {
        assert_eq!(dynamic_weight(1_000, Some(1_000), 1_000, 0.25), 0.25);
    }

    #[test]
    fn dynamic_weight_after_window_is_full() {
        assert_eq!(dynamic_weight(2_000, Some(1_000), 1_000, 0.2), 1.0);
        assert_eq!(dynamic_weight(9_999, Some(1_000), 1_000, 0.2), 1.0);
    }

    #[test]
    fn dynamic_weight_caps_at_one() {
        // Large floor would exceed 1 before the window closes.
        let w = dynamic_weight(1_999, Some(1_000), 1_000, 0.5);
        assert!(w <= 1.0);
        assert_eq!(dynamic_weight(1_999, Some(1_000), 1_000, 0.98), 1.0);
    }

    #[test]
    fn dynamic_weight_zero_window_is_full() {
        assert_eq!(dynamic_weight(1_000, Some(1_000), 0, 0.2), 1.0);
    }

    #[test]
    fn trace_two_spikes_then_decay() {
        let mut tr = Trace::new();
        tr.add_spike(0, TAU);
        tr.add_spike(20_000, TAU);
        // exp(-1) + 1 at the second spike
        assert_eq!(tr.value, 1.3678794411714423);
        // evaluated 20 ms later
        assert_eq!(tr.value_at(40_000, TAU), 1.3678794411714423 * 0.36787944117144233);
    }

    #[test]
    fn trace_matches_brute_force_sum() {
        let spikes = [1_000u64, 2_000, 7_919, 15_000, 15_000, 44_701];
        let t_end = 50_000u64;
        let mut tr = Trace::new();
        for &s in &spikes {
            tr.add_spike(s, TAU);
        }
        let lazy = tr.value_at(t_end, TAU);
        let brute: f64 = spikes
            .iter()
            .map(|&s| (-((t_end - s) as f64) / TAU).exp())
            .sum();
        assert!((lazy - brute).abs() <= 1e-12 * brute.abs());
    }

    #[test]
    fn trace_value_of_two_close_spikes() {
        // Spikes at 1 ms and 2 ms, read at 3 ms: exp(-0.1) + exp(-0.05).
        let mut tr = Trace::new();
        tr.add_spike(1_000, TAU);
        tr.add_spike(2_000, TAU);
        let got = tr.value_at(3_000, TAU);
        assert!((got - 1.8560668425366735).abs() < 1e-15);
    }

    #[test]
    fn input_spike_integrates_and_clamps() {
        let cfg = lif();
        let mut st = NeuronState::new();
        // Big weight clamps at +v_th and reports threshold.
        let fired = on_input_spike(&mut st, 2.5, 1.0, 100, &cfg);
        assert!(fired);
        assert_eq!(st.v_mp, 1.0);
        // Strong negative drive clamps at -v_th.
        let mut st = NeuronState::new();
        let fired = on_input_spike(&mut st, -7.0, 1.0, 100, &cfg);
        assert!(!fired);
        assert_eq!(st.v_mp, -1.0);
    }

    #[test]
    fn input_spike_applies_decay_first() {
        let cfg = lif();
        let mut st = NeuronState::new();
        on_input_spike(&mut st, 0.5, 1.0, 0, &cfg);
        on_input_spike(&mut st, 0.25, 1.0, 20_000, &cfg);
        assert_eq!(st.v_mp, 0.5 * 0.36787944117144233 + 0.25);
        assert_eq!(st.t_last_us, 20_000);
    }

    #[test]
    fn input_spike_uses_refractory_gain() {
        let cfg = LifConfig { w_d0: 0.2, ..lif() };
        let mut st = NeuronState::new();
        st.t_out_us = Some(1_000);
        st.t_last_us = 1_000;
        on_input_spike(&mut st, 1.0, 10.0, 1_300, &cfg);
        // Potential: 0 decayed + 1.0 * (0.2 + 0.3^2)
        assert_eq!(st.v_mp, 0.29000000000000004);
    }

    #[test]
    fn fire_and_reset_subtracts_gamma_vth() {
        let cfg = lif();
        let mut st = NeuronState::new();
        st.v_mp = 0.7;
        fire_and_reset(&mut st, 0.6, 0, &cfg);
        assert!((st.v_mp - 0.1).abs() < 1e-15);
        assert_eq!(st.t_out_us, Some(0));
        assert_eq!(st.a.value, 1.0);
    }

    #[test]
    fn fire_and_reset_decays_to_spike_time_first() {
        let cfg = lif();
        let mut st = NeuronState::new();
        st.v_mp = 0.7;
        fire_and_reset(&mut st, 0.6, 2_000, &cfg);
        assert!((st.v_mp - (0.7 * (-0.1f64).exp() - 0.6)).abs() < 1e-15);
    }

    #[test]
    fn clamped_fire_resets_to_zero() {
        // Composed path: clamp to v_th on input, then reset leaves exactly 0.
        let cfg = lif();
        let mut st = NeuronState::new();
        let fired = on_input_spike(&mut st, 3.0, 0.8, 500, &cfg);
        assert!(fired);
        fire_and_reset(&mut st, 0.8, 500, &cfg);
        assert_eq!(st.v_mp, 0.0);
    }

    #[test]
    fn lateral_inhibition_subtracts_scaled_threshold() {
        let cfg = lif();
        let mut st = NeuronState::new();
        st.v_mp = 0.9;
        apply_lateral_inhibition(&mut st, -0.4, 1.0, 0, &cfg);
        assert!((st.v_mp - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lateral_inhibition_clamps_below() {
        let cfg = lif();
        let mut st = NeuronState::new();
        st.v_mp = -0.9;
        apply_lateral_inhibition(&mut st, -1.0, 1.0, 0, &cfg);
        assert_eq!(st.v_mp, -1.0);
    }

    #[test]
    fn potential_stays_bounded_under_random_input() {
        use rand::{Rng, SeedableRng};
        let cfg = lif();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let v_th = 0.75;
        let mut st = NeuronState::new();
        let mut t = 0u64;
        for _ in 0..5_000 {
            t += rng.random_range(0..500);
            let w = rng.random_range(-2.0..2.0);
            let fired = on_input_spike(&mut st, w, v_th, t, &cfg);
            assert!(st.v_mp <= v_th && st.v_mp >= -v_th);
            if fired {
                fire_and_reset(&mut st, v_th, t, &cfg);
                assert!(st.v_mp <= v_th && st.v_mp >= -v_th);
            }
        }
    }
}
