use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// How a parameter is initialized when first declared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// uniform(−1/√fan_in, +1/√fan_in)
    Uniform { fan_in: usize },
    Zeros,
}

/// Named learnable parameters. Iteration order is the name order, which keeps
/// every reduction over parameters deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    pub seed: u64,
    params: BTreeMap<String, Tensor>,
}

/// FNV-1a, used to derive a per-parameter stream from the store seed so a
/// parameter's initial value does not depend on declaration order.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        ParameterStore { seed, params: BTreeMap::new() }
    }

    /// Declares a `rows × cols` parameter. Re-declaring an existing name is a no-op.
    pub fn declare(&mut self, name: &str, rows: usize, cols: usize, init: Init) {
        if self.params.contains_key(name) {
            return;
        }
        let data = match init {
            Init::Zeros => vec![0.0; rows * cols],
            Init::Uniform { fan_in } => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ name_hash(name));
                (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect()
            }
        };
        let mut t = Tensor::matrix(rows, cols, data);
        t.requires_grad = true;
        self.params.insert(name.to_string(), t);
    }

    pub fn insert(&mut self, name: &str, mut tensor: Tensor) {
        tensor.requires_grad = true;
        self.params.insert(name.to_string(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|t| t.data.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_independent_of_declaration_order() {
        let mut a = ParameterStore::new(3);
        a.declare("x", 2, 3, Init::Uniform { fan_in: 2 });
        a.declare("y", 4, 1, Init::Uniform { fan_in: 4 });
        let mut b = ParameterStore::new(3);
        b.declare("y", 4, 1, Init::Uniform { fan_in: 4 });
        b.declare("x", 2, 3, Init::Uniform { fan_in: 2 });
        assert_eq!(a, b);
        let bound = 1.0 / 2f64.sqrt();
        assert!(a.get("x").unwrap().data.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn seeds_differ() {
        let mut a = ParameterStore::new(1);
        let mut b = ParameterStore::new(2);
        a.declare("w", 3, 3, Init::Uniform { fan_in: 3 });
        b.declare("w", 3, 3, Init::Uniform { fan_in: 3 });
        assert_ne!(a.get("w"), b.get("w"));
    }
}
