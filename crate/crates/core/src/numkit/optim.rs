use super::{Gradients, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, _, m)| Matrix::zeros(m.rows(), m.cols()))
                .collect::<Vec<_>>()
        };
        Adam {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, id: ParamId) -> &Matrix {
        &self.first[id.0]
    }

    pub fn second_moment(&self, id: ParamId) -> &Matrix {
        &self.second[id.0]
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        self.step_except(store, grads, &[])
    }

    /// One update of every parameter not listed in `frozen`.
    pub fn step_except(
        &mut self,
        store: &mut ParamStore,
        grads: &Gradients,
        frozen: &[ParamId],
    ) -> Result<()> {
        check_alignment(store, grads)?;
        if self.first.len() != store.len() {
            return Err(Error::shape("optimizer state was built for a different store"));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (id, g) in grads.iter() {
            if frozen.contains(&id) {
                continue;
            }
            let m = self.first[id.0].as_mut_slice();
            let v = self.second[id.0].as_mut_slice();
            let p = store.get_mut(id).as_mut_slice();
            for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(g.as_slice()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Plain stochastic gradient descent with optional momentum.
#[derive(Clone, Debug)]
pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: Vec<Matrix>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, store: &ParamStore) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: store
                .iter()
                .map(|(_, _, m)| Matrix::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_except(
        &mut self,
        store: &mut ParamStore,
        grads: &Gradients,
        frozen: &[ParamId],
    ) -> Result<()> {
        check_alignment(store, grads)?;
        for (id, g) in grads.iter() {
            if frozen.contains(&id) {
                continue;
            }
            let vel = self.velocity[id.0].as_mut_slice();
            let p = store.get_mut(id).as_mut_slice();
            for ((p, v), &g) in p.iter_mut().zip(vel).zip(g.as_slice()) {
                *v = self.momentum * *v + g;
                *p -= self.lr * *v;
            }
        }
        Ok(())
    }
}

/// Optimiser choice shared by the trainers.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Adam(Adam),
    Sgd(Sgd),
}

impl Optimizer {
    pub fn set_lr(&mut self, lr: f64) {
        match self {
            Optimizer::Adam(a) => a.set_lr(lr),
            Optimizer::Sgd(s) => s.set_lr(lr),
        }
    }

    pub fn step_except(
        &mut self,
        store: &mut ParamStore,
        grads: &Gradients,
        frozen: &[ParamId],
    ) -> Result<()> {
        match self {
            Optimizer::Adam(a) => a.step_except(store, grads, frozen),
            Optimizer::Sgd(s) => s.step_except(store, grads, frozen),
        }
    }
}

fn check_alignment(store: &ParamStore, grads: &Gradients) -> Result<()> {
    if store.len() != grads.len() {
        return Err(Error::shape(format!(
            "{} gradients for {} parameters",
            grads.len(),
            store.len()
        )));
    }
    for (id, g) in grads.iter() {
        if !store.get(id).same_shape(g) {
            return Err(Error::shape(format!(
                "gradient {:?} for parameter {} of shape {:?}",
                g.shape(),
                store.name(id),
                store.get(id).shape()
            )));
        }
    }
    Ok(())
}
