//! The differentiable rate model of a WTA spiking layer and the error
//! backpropagation built on it.
//!
//! A neuron's normalized activity obeys
//!
//! ```text
//! a_i = s_i / (gamma * v_th_i) + (sigma / gamma) * sum_{j != i} kappa_ij a_j
//! ```
//!
//! with `s_i = sum_k w_ik x_k` the weighted input trace and `kappa_ij = mu`
//! uniform lateral inhibition. With uniform coupling the fixed point has a
//! closed form, and so does the total derivative `da_i / dx_k` through the
//! sibling coupling; the general matrix route is kept alongside it as an
//! independent cross-check.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::network::{LayerParams, Network, SampleRecord};

/// Closed-form fixed point of the uniform-WTA rate model. Negative solutions
/// are floored at 0 afterwards (silent neurons).
pub fn transfer_rate(s: &[f64], v_th: &[f64], mu: f64, sigma: f64, gamma: f64) -> Result<Vec<f64>> {
    let n = s.len();
    assert_eq!(n, v_th.len());
    let c = sigma * mu / gamma;
    if 1.0 + c <= 0.0 {
        return Err(Error::Numeric("rate model is unstable: gamma <= |mu| * sigma".into()));
    }
    // a_i = b_i + c * (A - a_i) with b_i = s_i / (gamma v_th_i), A = sum a_j:
    // summing gives A = B / (1 + c (1 - n)), then a_i = (b_i + c A) / (1 + c).
    let b: Vec<f64> = s.iter().zip(v_th).map(|(si, vi)| si / (gamma * vi)).collect();
    let denom = 1.0 + c * (1.0 - n as f64);
    debug_assert!(denom > 0.0);
    let total: f64 = b.iter().sum::<f64>() / denom;
    Ok(b.iter().map(|bi| ((bi + c * total) / (1.0 + c)).max(0.0)).collect())
}

/// General-coupling rate model via the explicit matrix inverse:
/// `a = (1/sigma) K^-1 s_hat` with `K_ii = gamma / sigma`, `K_ij = -kappa_ij`,
/// `s_hat_i = s_i / v_th_i`. Exists for cross-checking the closed form.
pub fn transfer_rate_matrix(
    s: &[f64],
    v_th: &[f64],
    kappa: &DMatrix<f64>,
    sigma: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    let n = s.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| if i == j { gamma / sigma } else { -kappa[(i, j)] });
    k = k
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular rate coupling matrix".into()))?;
    let s_hat = nalgebra::DVector::from_fn(n, |i, _| s[i] / v_th[i]);
    let a = (k * s_hat) / sigma;
    Ok(a.iter().map(|v| v.max(0.0)).collect())
}

/// Local sensitivity of activity to the weighted input sum: `1 / (gamma v_th)`.
pub fn d_a_d_s(v_th_i: f64, gamma: f64) -> f64 {
    1.0 / (gamma * v_th_i)
}

/// Local sensitivity of activity to one weight: `x_k / (gamma v_th)`.
pub fn d_a_d_w(x_k: f64, v_th_i: f64, gamma: f64) -> f64 {
    x_k / (gamma * v_th_i)
}

/// Inhibition-corrected activity `a_hat_i = gamma a_i - sigma sum_{j != i} kappa_ij a_j`.
/// At the fixed point this equals `s_i / v_th_i`, the normalized drive.
pub fn a_hat(a: &[f64], i: usize, mu: f64, sigma: f64, gamma: f64) -> f64 {
    let siblings: f64 = a.iter().sum::<f64>() - a[i];
    gamma * a[i] - sigma * mu * siblings
}

/// Local sensitivity of activity to the neuron's own threshold:
/// `-a_hat_i / (gamma v_th_i)`.
pub fn d_a_d_vth(a: &[f64], i: usize, v_th_i: f64, mu: f64, sigma: f64, gamma: f64) -> f64 {
    -a_hat(a, i, mu, sigma, gamma) / (gamma * v_th_i)
}

/// Local sensitivity to a lateral coupling weight: `sigma * a_h / gamma`.
pub fn d_a_d_kappa(a_h: f64, sigma: f64, gamma: f64) -> f64 {
    sigma * a_h / gamma
}

/// Total derivative `da_i / dx_k` through the uniform-WTA coupling, for all
/// active neurons at once. `w_col[i]` is `w_ik` for the active neurons.
///
/// ```text
/// da_i/dx_k = 1/(gamma v_th_i) * gamma/(gamma + mu sigma)
///           * (w_ik + mu sigma / (gamma - mu sigma (n-1)) * v_th_i * T_k)
/// T_k = sum_j w_jk / v_th_j
/// ```
pub fn d_a_d_x(w_col: &[f64], v_th: &[f64], mu: f64, sigma: f64, gamma: f64) -> Vec<f64> {
    let n = w_col.len();
    let big_gamma = gamma / (gamma + mu * sigma);
    let c = mu * sigma / (gamma - mu * sigma * (n as f64 - 1.0));
    let t: f64 = w_col.iter().zip(v_th).map(|(w, v)| w / v).sum();
    (0..n)
        .map(|i| (w_col[i] + c * v_th[i] * t) * big_gamma / (gamma * v_th[i]))
        .collect()
}

/// Same quantity through the explicit matrix inverse (cross-check route).
pub fn d_a_d_x_matrix(w_col: &[f64], v_th: &[f64], mu: f64, sigma: f64, gamma: f64) -> Result<Vec<f64>> {
    let n = w_col.len();
    let k = DMatrix::from_fn(n, n, |i, j| if i == j { gamma / sigma } else { -mu });
    let kinv = k
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular rate coupling matrix".into()))?;
    let rhs = nalgebra::DVector::from_fn(n, |i, _| w_col[i] / v_th[i]);
    let d = (kinv * rhs) / sigma;
    Ok(d.iter().copied().collect())
}

/// Normalized output activity: spike counts scaled by the maximum count.
/// Returns `None` when the output layer stayed silent.
pub fn output_activity(counts: &[u32]) -> Option<(Vec<f64>, u32)> {
    let max = *counts.iter().max()?;
    if max == 0 {
        return None;
    }
    Some((counts.iter().map(|&c| c as f64 / max as f64).collect(), max))
}

/// Squared-error data loss against a one-hot target.
pub fn data_loss(a_out: &[f64], label: usize) -> f64 {
    a_out
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let y = if i == label { 1.0 } else { 0.0 };
            0.5 * (a - y) * (a - y)
        })
        .sum()
}

/// Backpropagate one layer of error through downstream layer `down`.
///
/// `delta_down` and `active_down` describe the downstream neurons (length
/// `down.n`), `m_active_down` is the downstream count of active synapses,
/// and `v_th_up`/`active_up` describe this layer's neurons (length `down.m`).
/// Inactive upstream neurons receive zero; the downstream sum runs over
/// active downstream neurons only. When the downstream layer carries WTA
/// coupling, the backprojected weight is corrected for it:
///
/// ```text
/// w~_ji = gamma/(gamma + mu sigma) * (w_ji + mu sigma/(gamma - mu sigma (n-1)) * v_th_j * T_i)
/// T_i   = sum_j' w_j'i / v_th_j'
/// ```
///
/// The result is scaled per neuron by `g_i / g_rms` (with `g_i = 1 / v_th_i`
/// over active upstream neurons) and by `sqrt(M_down / m_down)`, which keeps
/// the layer-wise error energy constant under random initialization.
pub fn propagate_delta(
    down: &LayerParams,
    delta_down: &[f64],
    active_down: &[bool],
    m_active_down: usize,
    v_th_up: &[f64],
    active_up: &[bool],
) -> Vec<f64> {
    let n_up = down.m;
    assert_eq!(delta_down.len(), down.n);
    assert_eq!(active_down.len(), down.n);
    assert_eq!(v_th_up.len(), n_up);
    assert_eq!(active_up.len(), n_up);

    let mut delta = vec![0.0; n_up];
    let n_active_up = active_up.iter().filter(|&&a| a).count();
    if n_active_up == 0 || m_active_down == 0 {
        return delta;
    }

    let n_act_down = active_down.iter().filter(|&&a| a).count() as f64;
    let big_gamma = down.gamma / (down.gamma + down.mu * down.sigma);
    let c = down.mu * down.sigma / (down.gamma - down.mu * down.sigma * (n_act_down - 1.0));

    // S_i = sum_j w_ji delta_j, T_i = sum_j w_ji / v_th_j, D = sum_j v_th_j delta_j
    // over active downstream j; rows of `down` are contiguous in i.
    let mut s = vec![0.0; n_up];
    let mut t = vec![0.0; n_up];
    let mut d = 0.0;
    for j in 0..down.n {
        if !active_down[j] {
            continue;
        }
        let dj = delta_down[j];
        let inv_vth = 1.0 / down.v_th[j];
        d += down.v_th[j] * dj;
        let row = down.row(j);
        for i in 0..n_up {
            s[i] += row[i] * dj;
            t[i] += row[i] * inv_vth;
        }
    }

    let g_sq_sum: f64 = (0..n_up)
        .filter(|&i| active_up[i])
        .map(|i| 1.0 / (v_th_up[i] * v_th_up[i]))
        .sum();
    let g_rms = (g_sq_sum / n_active_up as f64).sqrt();
    let fan_scale = (down.m as f64 / m_active_down as f64).sqrt();

    for i in 0..n_up {
        if !active_up[i] {
            continue;
        }
        let backsum = big_gamma * (s[i] + c * t[i] * d);
        let g_i = 1.0 / v_th_up[i];
        delta[i] = (g_i / g_rms) * fan_scale * backsum;
    }
    delta
}

/// Per-layer raw gradients of one sample. Oriented for descent: applying
/// `param -= lr * grad` moves against the sample loss.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub delta: Vec<f64>,
    /// `n x m`, rows of inactive neurons and columns of silent synapses are zero.
    pub d_w: Vec<f64>,
    pub d_vth: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GradBundle {
    pub layers: Vec<LayerGrads>,
}

/// Full backward pass for one presentation.
///
/// Returns `Ok(None)` when the output layer never fired (the sample carries
/// no usable error signal and is skipped). The output error is
/// `count_i / max - y_i` over all output neurons, with the maximum count
/// treated as a constant of the presentation; a silent unit has zero
/// activity, so a silent target class still draws error and gets pulled
/// toward firing. Hidden errors follow [`propagate_delta`], which sums over
/// active downstream neurons only. Weight gradients are
/// `sqrt(N/m) delta_i x_j` and threshold gradients
/// `-sqrt(N/(m M)) delta_i a_hat_i`.
pub fn backward(net: &Network, rec: &SampleRecord, label: usize) -> Result<Option<GradBundle>> {
    let depth = net.layers.len();
    assert_eq!(rec.layers.len(), depth);
    let out = depth - 1;
    if label >= net.layers[out].n {
        return Err(Error::Config(format!(
            "label {label} out of range for {} output units",
            net.layers[out].n
        )));
    }

    let Some((a_out, _)) = output_activity(&rec.layers[out].counts) else {
        return Ok(None);
    };

    let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); depth];
    deltas[out] = a_out
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let y = if i == label { 1.0 } else { 0.0 };
            a - y
        })
        .collect();

    for l in (0..out).rev() {
        let down = &net.layers[l + 1];
        let active_down: Vec<bool> = rec.layers[l + 1].counts.iter().map(|&c| c > 0).collect();
        let active_up: Vec<bool> = rec.layers[l].counts.iter().map(|&c| c > 0).collect();
        deltas[l] = propagate_delta(
            down,
            &deltas[l + 1],
            &active_down,
            rec.layers[l + 1].m_active,
            &net.layers[l].v_th,
            &active_up,
        );
    }

    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let p = &net.layers[l];
        let lr = &rec.layers[l];
        let delta = &deltas[l];
        let mut d_w = vec![0.0; p.n * p.m];
        let mut d_vth = vec![0.0; p.n];
        if lr.m_active > 0 {
            let w_scale = (p.n as f64 / lr.m_active as f64).sqrt();
            let th_scale = (p.n as f64 / (lr.m_active as f64 * p.m as f64)).sqrt();
            for i in 0..p.n {
                let di = delta[i];
                if di == 0.0 {
                    continue;
                }
                if !di.is_finite() {
                    return Err(Error::Numeric(format!("non-finite error at layer {l} neuron {i}")));
                }
                let coef = w_scale * di;
                let row = &mut d_w[i * p.m..(i + 1) * p.m];
                for j in 0..p.m {
                    // x is zero exactly where no spike arrived, so silent
                    // synapses stay at zero gradient.
                    row[j] = coef * lr.x[j];
                }
                // The output layer's activity is its normalized rate vector
                // (the same one the error term reads); hidden layers use the
                // synaptic traces that the derivative chain is built on.
                let act = if l == out { &a_out } else { &lr.a };
                let ah = a_hat(act, i, p.mu, p.sigma, p.gamma);
                d_vth[i] = -th_scale * di * ah;
                if !d_vth[i].is_finite() {
                    return Err(Error::Numeric(format!("non-finite threshold gradient at layer {l} neuron {i}")));
                }
            }
        }
        layers.push(LayerGrads { delta: delta.clone(), d_w, d_vth });
    }

    Ok(Some(GradBundle { layers }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LayerRecord;

    fn plain_layer(weights: Vec<f64>, v_th: Vec<f64>, mu: f64, m: usize, n: usize) -> LayerParams {
        LayerParams {
            m,
            n,
            weights,
            v_th,
            mu,
            sigma: 0.5,
            gamma: 1.0,
            tau_mp_us: 20_000.0,
            t_ref_us: 1_000,
            w_d0: 0.0,
            v_th_floor: 0.0,
        }
    }

    #[test]
    fn transfer_without_coupling_is_normalized_drive() {
        let a = transfer_rate(&[2.0, 0.5], &[1.0, 0.5], 0.0, 0.5, 1.0).unwrap();
        assert_eq!(a, vec![2.0, 1.0]);
    }

    #[test]
    fn transfer_two_symmetric_wta_neurons() {
        // b = 1 each, mu = -0.4, sigma = 0.5: a = 1 / 1.2.
        let a = transfer_rate(&[1.0, 1.0], &[1.0, 1.0], -0.4, 0.5, 1.0).unwrap();
        assert!((a[0] - 0.8333333333333334).abs() < 1e-15);
        assert_eq!(a[0], a[1]);
    }

    #[test]
    fn transfer_clamps_suppressed_neuron() {
        let a = transfer_rate(&[5.0, 0.01], &[1.0, 1.0], -1.0, 0.5, 1.0).unwrap();
        assert!(a[0] > 0.0);
        assert_eq!(a[1], 0.0);
    }

    #[test]
    fn transfer_matches_matrix_route() {
        let s = [1.3, 0.7, 2.2];
        let v_th = [0.9, 1.1, 1.4];
        let (mu, sigma, gamma) = (-0.4, 0.5, 1.0);
        let a = transfer_rate(&s, &v_th, mu, sigma, gamma).unwrap();
        let kappa = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { mu });
        let b = transfer_rate_matrix(&s, &v_th, &kappa, sigma, gamma).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn transfer_rejects_unstable_coupling() {
        assert!(transfer_rate(&[1.0], &[1.0], -1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn a_hat_equals_normalized_drive_at_fixed_point() {
        let s = [1.5, 0.8];
        let v_th = [1.0, 1.25];
        let (mu, sigma, gamma) = (-0.4, 0.5, 1.0);
        let a = transfer_rate(&s, &v_th, mu, sigma, gamma).unwrap();
        for i in 0..2 {
            let ah = a_hat(&a, i, mu, sigma, gamma);
            assert!((ah - s[i] / v_th[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn d_a_d_x_collapses_to_weight_over_threshold_for_one_neuron() {
        // With n = 1 the sibling correction cancels exactly and the
        // derivative is w / (gamma v_th) regardless of mu.
        let d = d_a_d_x(&[0.42], &[0.7], -0.4, 0.5, 1.0);
        let plain = 0.42 / (1.0 * 0.7);
        assert!((d[0] - plain).abs() < 1e-12, "{} vs {plain}", d[0]);
    }

    #[test]
    fn d_a_d_x_agrees_with_matrix_route() {
        let w_col = [0.3, -0.2];
        let v_th = [1.0, 2.0];
        let closed = d_a_d_x(&w_col, &v_th, -0.4, 0.5, 1.0);
        assert!((closed[0] - 0.3333333333333333).abs() < 1e-12);
        assert!((closed[1] - -0.16666666666666666).abs() < 1e-12);
        let mat = d_a_d_x_matrix(&w_col, &v_th, -0.4, 0.5, 1.0).unwrap();
        for (c, m) in closed.iter().zip(&mat) {
            assert!((c - m).abs() <= 1e-14 * c.abs().max(1.0));
        }
    }

    #[test]
    fn output_activity_normalizes_by_max() {
        let (a, max) = output_activity(&[3, 5, 0]).unwrap();
        assert_eq!(max, 5);
        assert_eq!(a, vec![0.6, 1.0, 0.0]);
        assert!(output_activity(&[0, 0]).is_none());
    }

    #[test]
    fn data_loss_example() {
        let l = data_loss(&[0.6, 1.0, 0.0], 0);
        assert!((l - (0.5 * 0.16 + 0.5 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn delta_propagation_without_normalization_is_plain_backprojection() {
        // Single active downstream neuron, v_th = 1 everywhere, mu = 0:
        // delta_i = sqrt(M/m) * w_ji * delta_j with M = m = 2.
        let down = plain_layer(vec![0.5, -0.25], vec![1.0], 0.0, 2, 1);
        let delta = propagate_delta(&down, &[0.2], &[true], 2, &[1.0, 1.0], &[true, true]);
        assert!((delta[0] - 0.1).abs() < 1e-15);
        assert!((delta[1] - -0.05).abs() < 1e-15);
    }

    #[test]
    fn delta_propagation_zeroes_inactive_neurons() {
        let down = plain_layer(vec![0.5, -0.25], vec![1.0], 0.0, 2, 1);
        let delta = propagate_delta(&down, &[0.2], &[true], 2, &[1.0, 1.0], &[false, true]);
        assert_eq!(delta[0], 0.0);
        assert!(delta[1] != 0.0);
    }

    #[test]
    fn backward_skips_silent_output() {
        let net = Network { layers: vec![plain_layer(vec![0.1], vec![1.0], 0.0, 1, 1)] };
        let rec = SampleRecord {
            layers: vec![LayerRecord {
                x: vec![0.5],
                a: vec![0.0],
                x_counts: vec![1],
                counts: vec![0],
                m_active: 1,
                n_active: 0,
                v_end: vec![0.0],
            }],
            duration_us: 50_000,
            output_spikes: vec![],
            spike_log: None,
        };
        assert!(backward(&net, &rec, 0).unwrap().is_none());
    }

    #[test]
    fn backward_zero_error_gives_zero_gradients() {
        // Perfect response: target fired, off-target silent. The target's
        // activity is max / max = 1 so its delta is zero.
        let net = Network { layers: vec![plain_layer(vec![1.0, 1.0], vec![1.0, 1.0], 0.0, 1, 2)] };
        let rec = SampleRecord {
            layers: vec![LayerRecord {
                x: vec![0.9],
                a: vec![0.8, 0.0],
                x_counts: vec![3],
                counts: vec![3, 0],
                m_active: 1,
                n_active: 1,
                v_end: vec![0.0, 0.0],
            }],
            duration_us: 50_000,
            output_spikes: vec![],
            spike_log: None,
        };
        let g = backward(&net, &rec, 0).unwrap().unwrap();
        assert!(g.layers[0].d_w.iter().all(|&v| v == 0.0));
        assert!(g.layers[0].d_vth.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_pushes_target_up_and_distractor_down() {
        let net = Network { layers: vec![plain_layer(vec![1.0, 1.0], vec![1.0, 1.0], 0.0, 1, 2)] };
        let rec = SampleRecord {
            layers: vec![LayerRecord {
                x: vec![0.9],
                a: vec![0.4, 0.8],
                x_counts: vec![5],
                counts: vec![2, 4],
                m_active: 1,
                n_active: 2,
                v_end: vec![0.0, 0.0],
            }],
            duration_us: 50_000,
            output_spikes: vec![],
            spike_log: None,
        };
        let g = backward(&net, &rec, 0).unwrap().unwrap();
        // Target (neuron 0): a = 0.5, y = 1: delta < 0, so raw weight grad
        // is negative and descent raises the weight.
        assert!(g.layers[0].delta[0] < 0.0);
        assert!(g.layers[0].d_w[0] < 0.0);
        // Distractor (neuron 1): a = 1, y = 0: delta > 0.
        assert!(g.layers[0].delta[1] > 0.0);
        assert!(g.layers[0].d_w[1] > 0.0);
        // Threshold gradients point the other way: the target's threshold
        // should fall, the distractor's rise.
        assert!(g.layers[0].d_vth[0] > 0.0);
        assert!(g.layers[0].d_vth[1] < 0.0);
    }
}
