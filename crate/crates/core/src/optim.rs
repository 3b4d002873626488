//! Adam with bias correction.

use crate::error::{Result, SkanError};
use crate::network::SkanNetwork;
use crate::tensor::{Matrix, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a list of parameter groups (one per layer). Moments
/// are kept in f64 whatever the parameter precision.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(group_sizes: &[usize], config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_network<T: Real>(net: &SkanNetwork<T>, config: AdamConfig) -> Self {
        let sizes: Vec<usize> = net.layers().iter().map(|l| l.param_count()).collect();
        Self::new(&sizes, config)
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, group: usize) -> &[f64] {
        &self.m[group]
    }

    pub fn second_moment(&self, group: usize) -> &[f64] {
        &self.v[group]
    }

    /// One update over all groups. Nothing is modified if any shape differs
    /// or any gradient is non-finite.
    pub fn step<T: Real>(&mut self, params: &mut [&mut [T]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(SkanError::shape(
                "AdamState::step",
                format!("{} parameter groups", self.m.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for (g, ((p, gr), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.len() != m.len() || gr.len() != m.len() {
                return Err(SkanError::shape(
                    "AdamState::step",
                    format!("group {g} of {} values", m.len()),
                    format!("{} params / {} grads", p.len(), gr.len()),
                ));
            }
        }
        if let Some(bad) = grads.iter().flat_map(|g| g.iter()).find(|v| !v.is_finite()) {
            return Err(SkanError::Domain {
                op: "AdamState::step",
                name: "gradient",
                value: *bad,
            });
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.t as i32);
        let bias2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, gr), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((p, &g), m), v) in p.iter_mut().zip(gr.iter()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p = T::from_f64(p.as_f64() - lr * m_hat / (v_hat.sqrt() + eps));
            }
        }
        Ok(())
    }

    /// Applies one step to every layer of `net`.
    pub fn step_network<T: Real>(
        &mut self,
        net: &mut SkanNetwork<T>,
        grads: &[Matrix<f64>],
    ) -> Result<()> {
        let mut params: Vec<&mut [T]> = net
            .layers_mut()
            .iter_mut()
            .map(|l| l.params_mut().as_mut_slice())
            .collect();
        let grads: Vec<&[f64]> = grads.iter().map(Matrix::as_slice).collect();
        self.step(&mut params, &grads)
    }
}
