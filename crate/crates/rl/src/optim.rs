use crate::mlp::{Gradients, Mlp};

/// Adam with bias-corrected moment estimates. Steps descend the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, num_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn for_network(lr: f64, net: &Mlp) -> Self {
        Self::new(lr, net.num_params())
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{Activation, Dense};

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = Mlp::new(vec![Dense::zeros(2, 2, Activation::Identity)]).unwrap();
        net.params_mut().enumerate().for_each(|(i, p)| *p = i as f64);
        let before = net.clone();
        let mut opt = Adam::for_network(1e-3, &net);
        opt.step(&mut net, &Gradients::zeros_like(&before));
        assert_eq!(net, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = Mlp::new(vec![Dense::zeros(1, 1, Activation::Identity)]).unwrap();
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0][0] = 3.0;
        grads.bias[0][0] = -0.5;
        let mut opt = Adam::for_network(1e-3, &net);
        opt.step(&mut net, &grads);
        let w = net.layers()[0].weights[0];
        let b = net.layers()[0].bias[0];
        assert!((w + 1e-3).abs() < 1e-9);
        assert!((b - 1e-3).abs() < 1e-9);
    }
}
