//! Parameter updates: plain SGD and ADAM over the raw per-sample gradients,
//! plus the exponential weight penalty for hidden layers and the threshold
//! floor with weight compensation.

use crate::error::{Error, Result};
use crate::learning::GradBundle;
use crate::network::Network;
use crate::regularizer;

/// Learning-rate (and threshold-regularization) decay per epoch transition.
pub fn epoch_decay(epoch: usize) -> f64 {
    (-(epoch as f64) / 35.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Adam,
}

/// Exponential weight penalty configuration (hidden layers only).
#[derive(Debug, Clone, Copy)]
pub struct WeightReg {
    pub lambda: f64,
    pub beta: f64,
}

impl WeightReg {
    pub fn off() -> Self {
        WeightReg { lambda: 0.0, beta: 0.0 }
    }
}

struct AdamLayer {
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_th: Vec<f64>,
    v_th: Vec<f64>,
}

pub struct Optimizer {
    kind: OptimKind,
    eta_w: f64,
    eta_th: f64,
    adam: Vec<AdamLayer>,
    steps: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimKind, net: &Network) -> Self {
        let adam = match kind {
            OptimKind::Sgd => Vec::new(),
            OptimKind::Adam => net
                .layers
                .iter()
                .map(|p| AdamLayer {
                    m_w: vec![0.0; p.n * p.m],
                    v_w: vec![0.0; p.n * p.m],
                    m_th: vec![0.0; p.n],
                    v_th: vec![0.0; p.n],
                })
                .collect(),
        };
        Optimizer { kind, eta_w: 0.0, eta_th: 0.0, adam, steps: 0 }
    }

    pub fn kind(&self) -> OptimKind {
        self.kind
    }

    /// Set the rates for the current epoch. The threshold rate follows the
    /// weight rate: a tenth of it under SGD, equal to it under ADAM.
    pub fn set_epoch_rates(&mut self, eta_w: f64) {
        self.eta_w = eta_w;
        self.eta_th = match self.kind {
            OptimKind::Sgd => 0.1 * eta_w,
            OptimKind::Adam => eta_w,
        };
    }

    pub fn rates(&self) -> (f64, f64) {
        (self.eta_w, self.eta_th)
    }

    /// Apply one sample's updates. `grads` of `None` still applies the weight
    /// penalty (a silent sample keeps its regularization pull). Gradients are
    /// validated before anything is written, so a numeric failure leaves the
    /// network untouched.
    pub fn apply(&mut self, net: &mut Network, grads: Option<&GradBundle>, reg: &WeightReg) -> Result<()> {
        let depth = net.layers.len();
        if let Some(g) = grads {
            assert_eq!(g.layers.len(), depth);
        }

        // Regularization coefficients per hidden row, validated up front.
        let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(depth);
        for (l, p) in net.layers.iter().enumerate() {
            let hidden = l + 1 < depth;
            if hidden && reg.lambda != 0.0 {
                let cs: Vec<f64> = (0..p.n)
                    .map(|i| {
                        let sq: f64 = p.row(i).iter().map(|w| w * w).sum();
                        regularizer::weight_grad_coeff(sq, reg.lambda, reg.beta)
                    })
                    .collect();
                if cs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Numeric(format!("weight penalty overflow in layer {l}")));
                }
                coeffs.push(cs);
            } else {
                coeffs.push(Vec::new());
            }
        }

        if grads.is_some() {
            self.steps += 1;
        }
        let (bc1, bc2) = match self.kind {
            OptimKind::Sgd => (1.0, 1.0),
            OptimKind::Adam => {
                let t = self.steps as i32;
                (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t))
            }
        };

        for l in 0..depth {
            let p = &mut net.layers[l];

            match self.kind {
                OptimKind::Sgd => {
                    if let Some(g) = grads {
                        let d_w = &g.layers[l].d_w;
                        let d_vth = &g.layers[l].d_vth;
                        for i in 0..p.n {
                            let c = coeffs[l].get(i).copied().unwrap_or(0.0);
                            let base = i * p.m;
                            for j in 0..p.m {
                                let g = d_w[base + j] + c * p.weights[base + j];
                                p.weights[base + j] -= self.eta_w * g;
                            }
                            p.v_th[i] -= self.eta_th * d_vth[i];
                        }
                    } else {
                        for i in 0..p.n {
                            let c = coeffs[l].get(i).copied().unwrap_or(0.0);
                            if c == 0.0 {
                                continue;
                            }
                            let base = i * p.m;
                            for j in 0..p.m {
                                p.weights[base + j] -= self.eta_w * c * p.weights[base + j];
                            }
                        }
                    }
                }
                OptimKind::Adam => {
                    let st = &mut self.adam[l];
                    if let Some(g) = grads {
                        let d_w = &g.layers[l].d_w;
                        let d_vth = &g.layers[l].d_vth;
                        for i in 0..p.n {
                            let base = i * p.m;
                            for j in 0..p.m {
                                let idx = base + j;
                                let g = d_w[idx];
                                st.m_w[idx] = BETA1 * st.m_w[idx] + (1.0 - BETA1) * g;
                                st.v_w[idx] = BETA2 * st.v_w[idx] + (1.0 - BETA2) * g * g;
                                let m_hat = st.m_w[idx] / bc1;
                                let v_hat = st.v_w[idx] / bc2;
                                p.weights[idx] -= self.eta_w * m_hat / (v_hat.sqrt() + EPS);
                            }
                            let g = d_vth[i];
                            st.m_th[i] = BETA1 * st.m_th[i] + (1.0 - BETA1) * g;
                            st.v_th[i] = BETA2 * st.v_th[i] + (1.0 - BETA2) * g * g;
                            let m_hat = st.m_th[i] / bc1;
                            let v_hat = st.v_th[i] / bc2;
                            p.v_th[i] -= self.eta_th * m_hat / (v_hat.sqrt() + EPS);
                        }
                    }
                    // The weight penalty stays outside the moment estimates:
                    // fed through them it gets renormalized to full-rate
                    // steps on quiet stretches and erases the weights.
                    for i in 0..p.n {
                        let c = coeffs[l].get(i).copied().unwrap_or(0.0);
                        if c == 0.0 {
                            continue;
                        }
                        let base = i * p.m;
                        for j in 0..p.m {
                            p.weights[base + j] -= self.eta_w * c * p.weights[base + j];
                        }
                    }
                }
            }

            // Threshold floor: a blocked decrease becomes a sensitivity
            // boost, raising every weight of the neuron by the deficit.
            for i in 0..p.n {
                if p.v_th[i] < p.v_th_floor {
                    let deficit = p.v_th_floor - p.v_th[i];
                    p.v_th[i] = p.v_th_floor;
                    for w in p.row_mut(i) {
                        *w += deficit;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::LayerGrads;
    use crate::network::LayerParams;

    fn tiny_net() -> Network {
        Network {
            layers: vec![LayerParams {
                m: 2,
                n: 1,
                weights: vec![0.5, -0.5],
                v_th: vec![1.0],
                mu: 0.0,
                sigma: 0.5,
                gamma: 1.0,
                tau_mp_us: 20_000.0,
                t_ref_us: 1_000,
                w_d0: 0.0,
                v_th_floor: 0.0,
            }],
        }
    }

    fn bundle(d_w: Vec<f64>, d_vth: Vec<f64>) -> GradBundle {
        GradBundle { layers: vec![LayerGrads { delta: vec![0.0], d_w, d_vth }] }
    }

    #[test]
    fn epoch_decay_factor() {
        assert_eq!(epoch_decay(0), 1.0);
        assert!((epoch_decay(1) - 0.9718328750329811).abs() < 1e-15);
        assert!((epoch_decay(35) - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_moves_against_gradient() {
        let mut net = tiny_net();
        let mut opt = Optimizer::new(OptimKind::Sgd, &net);
        opt.set_epoch_rates(0.1);
        assert_eq!(opt.rates(), (0.1, 0.1 * 0.1));
        let g = bundle(vec![1.0, -2.0], vec![0.5]);
        opt.apply(&mut net, Some(&g), &WeightReg::off()).unwrap();
        assert!((net.layers[0].weights[0] - 0.4).abs() < 1e-15);
        assert!((net.layers[0].weights[1] - -0.3).abs() < 1e-15);
        assert!((net.layers[0].v_th[0] - 0.995).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_has_learning_rate_magnitude() {
        let mut net = tiny_net();
        let mut opt = Optimizer::new(OptimKind::Adam, &net);
        opt.set_epoch_rates(0.002);
        assert_eq!(opt.rates(), (0.002, 0.002));
        let g = bundle(vec![0.3, -0.004], vec![0.0]);
        let before = net.layers[0].weights.clone();
        opt.apply(&mut net, Some(&g), &WeightReg::off()).unwrap();
        // First ADAM step is close to -lr * sign(g) for any nonzero g.
        let d0 = net.layers[0].weights[0] - before[0];
        let d1 = net.layers[0].weights[1] - before[1];
        assert!((d0 + 0.002).abs() < 1e-5, "step {d0}");
        assert!((d1 - 0.002).abs() < 1e-5, "step {d1}");
    }

    #[test]
    fn reg_only_update_shrinks_oversized_rows() {
        let mut net = tiny_net();
        net.layers.push(LayerParams {
            m: 1,
            n: 1,
            weights: vec![0.1],
            v_th: vec![1.0],
            mu: 0.0,
            sigma: 0.5,
            gamma: 1.0,
            tau_mp_us: 20_000.0,
            t_ref_us: 1_000,
            w_d0: 0.0,
            v_th_floor: 0.0,
        });
        // Hidden row grown to squared sum 1.62: the exponential penalty bites
        // but the step stays well-behaved.
        net.layers[0].weights = vec![0.9, 0.9];
        let mut opt = Optimizer::new(OptimKind::Sgd, &net);
        opt.set_epoch_rates(0.002);
        let before: f64 = net.layers[0].weights.iter().map(|w| w * w).sum();
        opt.apply(&mut net, None, &WeightReg { lambda: 0.02, beta: 10.0 }).unwrap();
        let after: f64 = net.layers[0].weights.iter().map(|w| w * w).sum();
        assert!(after < before);
        // Output layer is exempt from the weight penalty.
        assert_eq!(net.layers[1].weights[0], 0.1);
    }

    #[test]
    fn weight_penalty_overflow_leaves_network_untouched() {
        let mut net = tiny_net();
        net.layers.push(net.layers[0].clone());
        net.layers[0].weights = vec![1e200, 0.0];
        let snapshot = net.layers[0].weights.clone();
        let mut opt = Optimizer::new(OptimKind::Sgd, &net);
        opt.set_epoch_rates(0.002);
        let err = opt.apply(&mut net, None, &WeightReg { lambda: 0.02, beta: 10.0 }).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(net.layers[0].weights, snapshot);
    }

    #[test]
    fn threshold_floor_compensates_weights() {
        let mut net = tiny_net();
        net.layers[0].v_th_floor = 0.9;
        let mut opt = Optimizer::new(OptimKind::Sgd, &net);
        opt.set_epoch_rates(1.0);
        // Threshold gradient pushes v_th to 1.0 - 0.2 = 0.8, clamped to 0.9
        // and the 0.1 deficit added to both weights.
        let g = bundle(vec![0.0, 0.0], vec![2.0]);
        opt.apply(&mut net, Some(&g), &WeightReg::off()).unwrap();
        assert_eq!(net.layers[0].v_th[0], 0.9);
        assert!((net.layers[0].weights[0] - 0.6).abs() < 1e-15);
        assert!((net.layers[0].weights[1] - -0.4).abs() < 1e-15);
    }
}
