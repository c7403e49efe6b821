use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::WeightStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
pub const BASE_LR: f64 = 0.01;

/// `0.5 * base * (1 + cos(pi * epoch / total))`, never negative.
pub fn cosine_lr(epoch: usize, base_lr: f64, total: usize) -> f64 {
    if total == 0 {
        return base_lr;
    }
    let e = epoch.min(total) as f64;
    (0.5 * base_lr * (1.0 + (PI * e / total as f64).cos())).max(0.0)
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction. Moments are kept in f64 per named tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            step: 0,
            moments: BTreeMap::new(),
        }
    }
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Starts a new step; call once before the per-tensor updates.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Updates one tensor in place using the current step count.
    pub fn update(&mut self, name: &str, params: &mut [f32], grads: &[f32], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "'{name}': {} params vs {} grads",
                params.len(),
                grads.len()
            )));
        }
        if self.step == 0 {
            return Err(Error::Usage("Adam::update before begin_step".into()));
        }
        let st = self.moments.entry(name.to_string()).or_insert_with(|| Moments {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
        });
        if st.m.len() != params.len() {
            return Err(Error::Shape(format!("'{name}' changed size between steps")));
        }
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i] as f64;
            st.m[i] = self.beta1 * st.m[i] + (1.0 - self.beta1) * g;
            st.v[i] = self.beta2 * st.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = st.m[i] / c1;
            let vhat = st.v[i] / c2;
            params[i] = (params[i] as f64 - lr * mhat / (vhat.sqrt() + self.eps)) as f32;
        }
        Ok(())
    }

    /// One step over every tensor that has a gradient.
    pub fn step(&mut self, weights: &mut WeightStore<f32>, grads: &WeightStore<f32>, lr: f64) -> Result<()> {
        self.begin_step();
        for (name, g) in grads.iter() {
            let p = weights.get_mut(name)?;
            self.update(name, p.data_mut(), g.data(), lr)?;
        }
        Ok(())
    }
}
