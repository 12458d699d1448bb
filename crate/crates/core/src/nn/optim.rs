use super::{Grads, Network};
use crate::{Error, Result};

/// Learning rate and L2 coefficient applied to one layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerRate {
    pub lr: f64,
    pub l2: f64,
}

/// Plain mini-batch SGD: `p <- p - lr * (g / batch_size + l2 * p)`, where
/// `grads` hold the gradient sum over the batch. Biases are not decayed.
pub fn sgd_step(params: &mut Network, grads: &Grads, lr: f64, l2_lambda: f64, batch_size: usize) -> Result<()> {
    let rate = LayerRate { lr, l2: l2_lambda };
    sgd_step_layered(params, grads, batch_size, |_| rate)
}

/// [`sgd_step`] with a per-layer rate, e.g. a separately regularized head.
pub fn sgd_step_layered(
    params: &mut Network,
    grads: &Grads,
    batch_size: usize,
    rate_of: impl Fn(usize) -> LayerRate,
) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    if grads.layers.len() != params.layers.len() {
        return Err(Error::invalid("gradient buffer does not match the network"));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            context: "sgd step gradient".into(),
        });
    }
    let inv = 1.0 / batch_size as f64;
    for (i, (layer, g)) in params.layers.iter_mut().zip(&grads.layers).enumerate() {
        let LayerRate { lr, l2 } = rate_of(i);
        if lr < 0.0 || l2 < 0.0 {
            return Err(Error::invalid("learning rate and L2 must be non-negative"));
        }
        if let Some((w, b)) = layer.params_mut() {
            for (p, gv) in w.iter_mut().zip(&g.weight) {
                *p -= lr * (gv * inv + l2 * *p);
            }
            for (p, gv) in b.iter_mut().zip(&g.bias) {
                *p -= lr * gv * inv;
            }
        }
    }
    Ok(())
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Network, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
        }
    }

    /// Applies one update from the gradient sum over `batch_size` samples.
    pub fn step(&mut self, net: &mut Network, grads: &Grads, batch_size: usize) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite {
                context: "adam step gradient".into(),
            });
        }
        self.step += 1;
        let inv = 1.0 / batch_size.max(1) as f64;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let Some((w, b)) = layer.params_mut() else { continue };
            let g = &grads.layers[i];
            let m = &mut self.m.layers[i];
            let v = &mut self.v.layers[i];
            for (p, (gv, (mv, vv))) in w
                .iter_mut()
                .chain(b.iter_mut())
                .zip(g.weight.iter().chain(&g.bias).zip(m.weight.iter_mut().chain(m.bias.iter_mut()).zip(v.weight.iter_mut().chain(v.bias.iter_mut()))))
            {
                let gv = gv * inv;
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                *p -= self.lr * (*mv / c1) / ((*vv / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
