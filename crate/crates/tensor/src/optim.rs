use crate::{ParameterStore, Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_step_size(step_size: f64) -> Self {
        Self {
            step_size,
            ..Self::default()
        }
    }
}

/// Adaptive-moment gradient descent. Moment buffers are kept in `f32` next to
/// the weights; the update itself is computed in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    steps: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParameterStore) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            steps: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Descends on `grads`, given in store order.
    pub fn step(&mut self, params: &mut ParameterStore, grads: &[Tensor<f32>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(TensorError::InvalidArgument {
                op: "adam",
                msg: format!(
                    "{} gradients for {} parameters ({} moment buffers)",
                    grads.len(),
                    params.len(),
                    self.m.len()
                ),
            });
        }
        self.steps += 1;
        let AdamConfig {
            step_size,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.steps as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let p = params.values_mut(i);
            if p.len() != g.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam",
                    dim: "gradient",
                    expected: p.len(),
                    actual: g.len(),
                });
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                let gj = g.data()[j] as f64;
                let mj = beta1 * m[j] as f64 + (1.0 - beta1) * gj;
                let vj = beta2 * v[j] as f64 + (1.0 - beta2) * gj * gj;
                m[j] = mj as f32;
                v[j] = vj as f32;
                let update = step_size * (mj / c1) / ((vj / c2).sqrt() + eps);
                p[j] = (p[j] as f64 - update) as f32;
            }
        }
        Ok(())
    }

    /// Moment buffers as a store (`m.<name>`, `v.<name>`) for checkpointing.
    pub fn state(&self, params: &ParameterStore) -> Result<ParameterStore> {
        let mut s = ParameterStore::new(params.seed());
        for (i, (name, t)) in params.iter().enumerate() {
            s.insert(format!("m.{name}"), Tensor::new(t.shape().to_vec(), self.m[i].clone())?)?;
        }
        for (i, (name, t)) in params.iter().enumerate() {
            s.insert(format!("v.{name}"), Tensor::new(t.shape().to_vec(), self.v[i].clone())?)?;
        }
        Ok(s)
    }

    pub fn from_state(
        config: AdamConfig,
        steps: u64,
        params: &ParameterStore,
        state: &ParameterStore,
    ) -> Result<Self> {
        let fetch = |key: String, len: usize| -> Result<Vec<f32>> {
            let t = state
                .get(&key)
                .ok_or_else(|| TensorError::UnknownParameter(key.clone()))?;
            if t.len() != len {
                return Err(TensorError::Format(format!("{key}: wrong length")));
            }
            Ok(t.data().to_vec())
        };
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, t) in params.iter() {
            m.push(fetch(format!("m.{name}"), t.len())?);
            v.push(fetch(format!("v.{name}"), t.len())?);
        }
        Ok(Self {
            config,
            steps,
            m,
            v,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_step_size() {
        let mut p = ParameterStore::new(0);
        p.insert("w", Tensor::new(vec![2], vec![1.0, -1.0]).unwrap()).unwrap();
        let mut opt = Adam::new(AdamConfig::with_step_size(0.1), &p);
        let g = vec![Tensor::new(vec![2], vec![3.0, -0.5]).unwrap()];
        opt.step(&mut p, &g).unwrap();
        // Bias-corrected first step is step_size * sign(g).
        let w = p.get("w").unwrap().data();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn state_round_trip_resumes_identically() {
        let mut p = ParameterStore::new(0);
        p.insert("w", Tensor::new(vec![3], vec![0.3, 0.1, -0.2]).unwrap()).unwrap();
        let cfg = AdamConfig::default();
        let mut a = Adam::new(cfg, &p);
        let g = |k: f32| vec![Tensor::new(vec![3], vec![k, -k * 0.5, 0.25]).unwrap()];
        a.step(&mut p, &g(1.0)).unwrap();
        let mut pb = p.clone();
        let mut b = Adam::from_state(cfg, a.steps(), &p, &a.state(&p).unwrap()).unwrap();
        a.step(&mut p, &g(2.0)).unwrap();
        b.step(&mut pb, &g(2.0)).unwrap();
        assert!(p.bit_eq(&pb));
    }
}
