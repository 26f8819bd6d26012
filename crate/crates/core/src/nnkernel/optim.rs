use std::collections::BTreeMap;

use super::{KernelError, ParameterStore, Tensor};

/// Adam with bias correction. Moment estimates are kept per parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters absent from `grads` are treated as
    /// having a zero gradient; a gradient for an unknown name or a non-finite
    /// gradient is an error and leaves the store untouched.
    pub fn step(&mut self, store: &mut ParameterStore, grads: &BTreeMap<String, Tensor>) -> Result<(), KernelError> {
        for (name, g) in grads {
            let Some(p) = store.get(name) else {
                return Err(KernelError::MissingParameters(vec![name.clone()]));
            };
            if p.data.len() != g.data.len() {
                return Err(KernelError::Shape(format!("gradient for {name} has {} entries, parameter has {}", g.data.len(), p.data.len())));
            }
            if !g.is_finite() {
                return Err(KernelError::NanGradient(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for name in names {
            let p = store.get_mut(&name).expect("name from store");
            let n = p.data.len();
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let g = grads.get(&name);
            for i in 0..n {
                let gi = g.map_or(0.0, |g| g.data[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(name: &str, values: &[f64]) -> ParameterStore {
        let mut s = ParameterStore::new(0);
        s.insert(name, Tensor::row(values.to_vec()));
        s
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut s = scalar_store("w", &[0.3, -0.7]);
        let before = s.clone();
        let mut adam = Adam::new(1e-3);
        let grads = BTreeMap::from([("w".to_string(), Tensor::row(vec![0.0, 0.0]))]);
        adam.step(&mut s, &grads).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn one_step_on_square_moves_toward_zero() {
        let mut s = scalar_store("w", &[1.0]);
        let mut adam = Adam::new(1e-3);
        let grads = BTreeMap::from([("w".to_string(), Tensor::row(vec![2.0]))]);
        adam.step(&mut s, &grads).unwrap();
        assert!(s.get("w").unwrap().data[0].abs() < 1.0);
    }

    #[test]
    fn quadratic_converges() {
        // f = a² + 3b², gradient (2a, 6b)
        let mut s = scalar_store("w", &[1.0, -0.5]);
        let mut adam = Adam::new(0.05);
        for _ in 0..200 {
            let w = &s.get("w").unwrap().data;
            let grads = BTreeMap::from([("w".to_string(), Tensor::row(vec![2.0 * w[0], 6.0 * w[1]]))]);
            adam.step(&mut s, &grads).unwrap();
        }
        assert!(s.get("w").unwrap().norm() < 1e-2);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = scalar_store("layer.w", &[1.0]);
        let before = s.clone();
        let grads = BTreeMap::from([("layer.w".to_string(), Tensor::row(vec![f64::NAN]))]);
        let err = Adam::new(1e-3).step(&mut s, &grads).unwrap_err();
        assert!(err.to_string().contains("layer.w"));
        assert_eq!(s, before);
    }
}
