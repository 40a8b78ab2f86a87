//! Weight and threshold regularization.
//!
//! Weights: an exponential penalty per neuron on the squared weight sum,
//! `0.5 * lambda * exp(beta * (sum_j w_ij^2 - 1))`, applied to hidden layers.
//! It is negligible while the sum stays near its initialization scale of 1
//! and grows steeply past it, bounding weight growth without pulling small
//! weights to zero.
//!
//! Thresholds: a local balancing rule applied during training forward passes.
//! After each input spike event in which `n_w` of the `n` neurons of a layer
//! fired, every neuron that fired has its threshold raised by `rho * n` and
//! every neuron in the layer has it lowered by `rho * n_w`. The layer-wide
//! threshold sum is conserved; frequent firers are handicapped and silent
//! neurons are gradually sensitized, which keeps neurons from dying.

use crate::network::LayerParams;

/// Per-neuron exponential weight cost: `0.5 * lambda * exp(beta * (sq_sum - 1))`.
pub fn weight_cost_row(sq_sum: f64, lambda: f64, beta: f64) -> f64 {
    0.5 * lambda * (beta * (sq_sum - 1.0)).exp()
}

/// Total weight cost of a layer.
pub fn weight_cost(layer: &LayerParams, lambda: f64, beta: f64) -> f64 {
    (0..layer.n)
        .map(|i| {
            let sq: f64 = layer.row(i).iter().map(|w| w * w).sum();
            weight_cost_row(sq, lambda, beta)
        })
        .sum()
}

/// Gradient coefficient of the row cost: `d cost / d w_ij = coeff * w_ij`.
pub fn weight_grad_coeff(sq_sum: f64, lambda: f64, beta: f64) -> f64 {
    lambda * beta * (beta * (sq_sum - 1.0)).exp()
}

/// One threshold-balancing step after an input spike event on a layer.
///
/// `fired` lists the neurons that emitted a spike on this event, in
/// ascending order. Raises first, lowers second, then clamps at the layer's
/// threshold floor; a clamped deficit `d` is converted into a sensitivity
/// boost instead, raising every weight of the neuron by `d`.
pub fn threshold_step(layer: &mut LayerParams, fired: &[usize], rho: f64) {
    let n = layer.n;
    let n_w = fired.len();
    if n_w == 0 || rho == 0.0 {
        return;
    }
    let raise = rho * n as f64;
    for &i in fired {
        layer.v_th[i] += raise;
    }
    let lower = rho * n_w as f64;
    for i in 0..n {
        layer.v_th[i] -= lower;
        if layer.v_th[i] < layer.v_th_floor {
            let deficit = layer.v_th_floor - layer.v_th[i];
            layer.v_th[i] = layer.v_th_floor;
            for w in layer.row_mut(i) {
                *w += deficit;
            }
        }
    }
}
