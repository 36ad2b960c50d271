//! Named parameter tensors, initialization and the Adam optimizer.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub names: Vec<String>,
    pub tensors: Vec<Array2<f64>>,
}

/// Shape-tagged flat form used in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl Params {
    pub fn new() -> Self {
        Params { names: Vec::new(), tensors: Vec::new() }
    }

    /// Glorot-uniform weights; tensors whose name marks them as a bias
    /// (one row, `b` suffix) start at zero.
    pub fn add_init<R: Rng>(&mut self, rng: &mut R, name: &str, rows: usize, cols: usize) {
        let is_bias = rows == 1 && name.rsplit('.').next().is_some_and(|s| s.starts_with('b'));
        let t = if is_bias {
            Array2::zeros((rows, cols))
        } else {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit))
        };
        self.names.push(name.to_string());
        self.tensors.push(t);
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        &self.tensors[self.index(name).unwrap_or_else(|| panic!("no parameter `{name}`"))]
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(|t| t.dim()).collect()
    }

    pub fn n_entries(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn zeroed(&self) -> Params {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
        }
    }

    /// Places every tensor on the tape as a parameter leaf.
    pub fn on_tape(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(i, t.clone()))
            .collect()
    }

    pub fn to_named(&self) -> Vec<NamedTensor> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(name, t)| NamedTensor {
                name: name.clone(),
                shape: [t.nrows(), t.ncols()],
                data: t.iter().copied().collect(),
            })
            .collect()
    }

    pub fn from_named(named: Vec<NamedTensor>) -> Result<Params, String> {
        let mut p = Params::new();
        for t in named {
            let [r, c] = t.shape;
            let a = Array2::from_shape_vec((r, c), t.data)
                .map_err(|e| format!("tensor `{}`: {e}", t.name))?;
            p.names.push(t.name);
            p.tensors.push(a);
        }
        Ok(p)
    }
}

impl Default for Params {
    fn default() -> Self {
        Params::new()
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &Params, lr: f64) -> Self {
        let zeros = params.zeroed().tensors;
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, params: &mut Params, grads: &[Array2<f64>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, g), (m, v)) in params
            .tensors
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn init_bounds_and_biases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut p = Params::new();
        p.add_init(&mut rng, "w", 10, 30);
        p.add_init(&mut rng, "gru.bz", 1, 30);
        let limit = (6.0f64 / 40.0).sqrt();
        assert!(p.get("w").iter().all(|x| x.abs() <= limit));
        assert!(p.get("w").iter().any(|x| x.abs() > limit / 2.0));
        assert!(p.get("gru.bz").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Params { names: vec!["w".into()], tensors: vec![Array2::zeros((1, 2))] };
        let mut opt = Adam::new(&p, 0.001);
        opt.step(&mut p, &[ndarray::array![[3.0, -0.5]]]);
        assert!((p.tensors[0][[0, 0]] + 0.001).abs() < 1e-9);
        assert!((p.tensors[0][[0, 1]] - 0.001).abs() < 1e-9);
    }

    #[test]
    fn named_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut p = Params::new();
        p.add_init(&mut rng, "a", 3, 4);
        p.add_init(&mut rng, "b", 1, 4);
        assert_eq!(Params::from_named(p.to_named()).unwrap(), p);
    }
}
