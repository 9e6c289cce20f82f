//! SGD with momentum and L2 weight decay, plus the cosine learning-rate
//! schedule. Update rule matches the common convention:
//! v <- momentum * v + (g + wd * p); p <- p - lr * v.

use crate::backbone::{Backbone, ParamVector};
use crate::config::OptimConfig;
use crate::error::{Error, Result};
use crate::num::Real;

pub struct Sgd<F> {
    momentum: F,
    weight_decay: F,
    velocity: Option<ParamVector<F>>,
}

impl<F: Real> Sgd<F> {
    pub fn new(cfg: &OptimConfig) -> Self {
        Sgd {
            momentum: F::from_f64(cfg.momentum),
            weight_decay: F::from_f64(cfg.weight_decay),
            velocity: None,
        }
    }

    pub fn step(&mut self, net: &mut Backbone<F>, grads: &ParamVector<F>, lr: F) -> Result<()> {
        let mut params = net.params();
        if !params.same_layout(grads) {
            return Err(Error::shape("gradient layout does not match parameters"));
        }
        let velocity = self
            .velocity
            .get_or_insert_with(|| params.zeros_like());
        if !velocity.same_layout(&params) {
            return Err(Error::shape("optimizer state does not match parameters"));
        }
        for ((pb, gb), vb) in params
            .blocks_mut()
            .iter_mut()
            .zip(grads.blocks().iter())
            .zip(velocity.blocks_mut().iter_mut())
        {
            for ((p, &g), v) in pb
                .values
                .iter_mut()
                .zip(gb.values.iter())
                .zip(vb.values.iter_mut())
            {
                *v = self.momentum * *v + g + self.weight_decay * *p;
                *p = *p - lr * *v;
            }
        }
        net.set_params(&params)
    }
}

/// Cosine decay from `base` to zero over `total_steps`; constant when the
/// schedule is disabled or the horizon is empty.
pub fn schedule_lr(cfg: &OptimConfig, step: usize, total_steps: usize) -> f64 {
    if !cfg.cosine_decay || total_steps == 0 {
        return cfg.learning_rate;
    }
    let t = (step.min(total_steps) as f64) / (total_steps as f64);
    0.5 * cfg.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ArchSpec;

    #[test]
    fn sgd_moves_parameters_downhill() {
        let spec = ArchSpec::uniform_dropout(2, vec![4, 8], 0.0);
        let mut net = Backbone::<f64>::new(spec, 0).unwrap();
        let p0 = net.params();
        let mut grads = p0.zeros_like();
        for g in grads.iter_mut() {
            *g = 1.0;
        }
        let mut opt = Sgd::new(&OptimConfig {
            momentum: 0.0,
            weight_decay: 0.0,
            ..OptimConfig::default()
        });
        opt.step(&mut net, &grads, 0.1).unwrap();
        for (after, before) in net.params().iter().zip(p0.iter()) {
            assert!((after - (before - 0.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_accumulates() {
        let spec = ArchSpec::uniform_dropout(2, vec![4, 8], 0.0);
        let mut net = Backbone::<f64>::new(spec, 0).unwrap();
        let p0 = net.params();
        let mut grads = p0.zeros_like();
        for g in grads.iter_mut() {
            *g = 1.0;
        }
        let mut opt = Sgd::new(&OptimConfig {
            momentum: 0.9,
            weight_decay: 0.0,
            ..OptimConfig::default()
        });
        opt.step(&mut net, &grads, 0.1).unwrap();
        opt.step(&mut net, &grads, 0.1).unwrap();
        // After two steps: p = p0 - 0.1*(1) - 0.1*(0.9 + 1) = p0 - 0.29.
        for (after, before) in net.params().iter().zip(p0.iter()) {
            assert!((after - (before - 0.29)).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = OptimConfig::default();
        assert_eq!(schedule_lr(&cfg, 0, 100), cfg.learning_rate);
        assert!(schedule_lr(&cfg, 100, 100) < 1e-12);
        assert!(schedule_lr(&cfg, 50, 100) > 0.0);
        let flat = OptimConfig {
            cosine_decay: false,
            ..OptimConfig::default()
        };
        assert_eq!(schedule_lr(&flat, 77, 100), flat.learning_rate);
    }
}
