//! Trainable building blocks: linear layers, GRU cells, parameter
//! initialization and the Adam optimizer.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainingError {
    #[error("training diverged at step {step}: {what} is not finite")]
    Diverged { step: u64, what: String },
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("pair `{id}` is missing a required label or field")]
    MissingData { id: String },
}

/// Glorot-uniform matrix: U(-l, l) with l = sqrt(6 / (fan_in + fan_out)).
pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let limit = libm::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::from_vec(rows, cols, data)
}

pub fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::from_vec(rows, cols, data)
}

/// y = W x + b with W shaped (out, in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: glorot(out_dim, in_dim, rng),
            b: Tensor::zeros(out_dim, 1),
        }
    }

    /// Identity map; requires a square shape.
    pub fn identity(dim: usize) -> Self {
        let mut w = Tensor::zeros(dim, dim);
        for i in 0..dim {
            w.set(i, i, 1.0);
        }
        Linear {
            w,
            b: Tensor::zeros(dim, 1),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols
    }

    pub fn bind(&self, g: &mut Graph) -> LinearVars {
        LinearVars {
            w: g.input(self.w.clone()),
            b: g.input(self.b.clone()),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        alloc::vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        alloc::vec![&mut self.w, &mut self.b]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

impl LinearVars {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let wx = g.matmul(self.w, x);
        g.add(wx, self.b)
    }

    pub fn vars(&self) -> Vec<Var> {
        alloc::vec![self.w, self.b]
    }
}

/// One GRU layer. Update gate z, reset gate r, candidate state n:
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   n = tanh(Wn x + Un (r . h) + bn)
///   h' = (1 - z) . h + z . n
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruLayer {
    pub wz: Tensor,
    pub uz: Tensor,
    pub bz: Tensor,
    pub wr: Tensor,
    pub ur: Tensor,
    pub br: Tensor,
    pub wn: Tensor,
    pub un: Tensor,
    pub bn: Tensor,
}

impl GruLayer {
    pub fn new(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        GruLayer {
            wz: glorot(hidden, input, rng),
            uz: glorot(hidden, hidden, rng),
            bz: Tensor::zeros(hidden, 1),
            wr: glorot(hidden, input, rng),
            ur: glorot(hidden, hidden, rng),
            br: Tensor::zeros(hidden, 1),
            wn: glorot(hidden, input, rng),
            un: glorot(hidden, hidden, rng),
            bn: Tensor::zeros(hidden, 1),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.wz.rows
    }

    /// Inference-mode step without a tape (used by autoregressive decoding).
    pub fn step_infer(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let x = Tensor::vector(x.to_vec());
        let h_t = Tensor::vector(h.to_vec());
        let gate = |w: &Tensor, u: &Tensor, b: &Tensor| {
            let mut s = w.matmul_nn(&x);
            s.add_assign(&u.matmul_nn(&h_t));
            s.add_assign(b);
            s
        };
        let z = gate(&self.wz, &self.uz, &self.bz).map(|v| 1.0 / (1.0 + libm::exp(-v)));
        let r = gate(&self.wr, &self.ur, &self.br).map(|v| 1.0 / (1.0 + libm::exp(-v)));
        let rh = Tensor::vector(r.data.iter().zip(h).map(|(&r, &h)| r * h).collect());
        let mut n = self.wn.matmul_nn(&x);
        n.add_assign(&self.un.matmul_nn(&rh));
        n.add_assign(&self.bn);
        let n = n.map(libm::tanh);
        z.data
            .iter()
            .zip(h)
            .zip(&n.data)
            .map(|((&z, &h), &n)| (1.0 - z) * h + z * n)
            .collect()
    }

    pub fn bind(&self, g: &mut Graph) -> GruVars {
        GruVars {
            wz: g.input(self.wz.clone()),
            uz: g.input(self.uz.clone()),
            bz: g.input(self.bz.clone()),
            wr: g.input(self.wr.clone()),
            ur: g.input(self.ur.clone()),
            br: g.input(self.br.clone()),
            wn: g.input(self.wn.clone()),
            un: g.input(self.un.clone()),
            bn: g.input(self.bn.clone()),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        alloc::vec![
            &self.wz, &self.uz, &self.bz, &self.wr, &self.ur, &self.br, &self.wn, &self.un,
            &self.bn
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        alloc::vec![
            &mut self.wz,
            &mut self.uz,
            &mut self.bz,
            &mut self.wr,
            &mut self.ur,
            &mut self.br,
            &mut self.wn,
            &mut self.un,
            &mut self.bn
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub wz: Var,
    pub uz: Var,
    pub bz: Var,
    pub wr: Var,
    pub ur: Var,
    pub br: Var,
    pub wn: Var,
    pub un: Var,
    pub bn: Var,
}

impl GruVars {
    pub fn step(&self, g: &mut Graph, x: Var, h: Var) -> Var {
        let z = {
            let a = g.matmul(self.wz, x);
            let b = g.matmul(self.uz, h);
            let s = g.add(a, b);
            let s = g.add(s, self.bz);
            g.sigmoid(s)
        };
        let r = {
            let a = g.matmul(self.wr, x);
            let b = g.matmul(self.ur, h);
            let s = g.add(a, b);
            let s = g.add(s, self.br);
            g.sigmoid(s)
        };
        let n = {
            let rh = g.mul(r, h);
            let a = g.matmul(self.wn, x);
            let b = g.matmul(self.un, rh);
            let s = g.add(a, b);
            let s = g.add(s, self.bn);
            g.tanh(s)
        };
        let keep = g.one_minus(z);
        let kept = g.mul(keep, h);
        let new = g.mul(z, n);
        g.add(kept, new)
    }

    /// Run the cell over `inputs` in the given order, starting from zeros.
    /// Returns one state per input, in scan order.
    pub fn scan(&self, g: &mut Graph, inputs: &[Var], hidden: usize) -> Vec<Var> {
        let mut h = g.zeros_input(hidden, 1);
        let mut states = Vec::with_capacity(inputs.len());
        for &x in inputs {
            h = self.step(g, x, h);
            states.push(h);
        }
        states
    }

    pub fn vars(&self) -> Vec<Var> {
        alloc::vec![
            self.wz, self.uz, self.bz, self.wr, self.ur, self.br, self.wn, self.un, self.bn
        ]
    }
}

/// Adam with bias correction. State is kept per parameter in call order,
/// which must be stable across steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    state: Vec<(Tensor, Tensor)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            state: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Apply one update. `pairs` maps each parameter to its gradient; the
    /// parameter order must match previous calls. Errors if any updated
    /// parameter stops being finite.
    pub fn step(&mut self, pairs: &mut [(&mut Tensor, &Tensor)]) -> Result<(), TrainingError> {
        if self.state.is_empty() {
            self.state = pairs
                .iter()
                .map(|(p, _)| (p.zeros_like(), p.zeros_like()))
                .collect();
        }
        assert_eq!(self.state.len(), pairs.len(), "optimizer/parameter mismatch");
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for ((param, grad), (m, v)) in pairs.iter_mut().zip(self.state.iter_mut()) {
            for i in 0..param.data.len() {
                let g = grad.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * g;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                param.data[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
            }
            if !param.is_finite() {
                return Err(TrainingError::Diverged {
                    step: self.t,
                    what: String::from("parameter"),
                });
            }
        }
        Ok(())
    }
}

/// Shared training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop early once the validation metric reaches this value (metric is
    /// maximized by the classifier trainers). The reaching epoch is still
    /// recorded.
    #[serde(default)]
    pub stop_at_val_metric: Option<f64>,
}

impl Default for TrainHparams {
    fn default() -> Self {
        TrainHparams {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            stop_at_val_metric: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

/// Per-epoch record of a training run plus the index of the epoch whose
/// parameters were kept.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn best_val_metric(&self) -> Option<f64> {
        self.best_epoch
            .and_then(|e| self.epochs.iter().find(|s| s.epoch == e))
            .map(|s| s.val_metric)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::rng::rng_from_seed;
    use alloc::vec;

    #[test]
    fn adam_minimizes_a_quadratic() {
        // minimize (x - 3)^2
        let mut x = Tensor::vector(vec![0.0]);
        let mut adam = Adam::new(0.1);
        for _ in 0..200 {
            let grad = Tensor::vector(vec![2.0 * (x.data[0] - 3.0)]);
            adam.step(&mut [(&mut x, &grad)]).unwrap();
        }
        assert!((x.data[0] - 3.0).abs() < 1e-3, "x = {}", x.data[0]);
    }

    #[test]
    fn adam_reports_divergence() {
        let mut x = Tensor::vector(vec![1.0]);
        let grad = Tensor::vector(vec![f64::NAN]);
        let err = Adam::new(0.1).step(&mut [(&mut x, &grad)]).unwrap_err();
        assert!(matches!(err, TrainingError::Diverged { step: 1, .. }));
    }

    #[test]
    fn gru_step_changes_state() {
        let mut rng = rng_from_seed(3);
        let cell = GruLayer::new(4, 3, &mut rng);
        let mut g = Graph::new();
        let vars = cell.bind(&mut g);
        let x = g.input(Tensor::vector(vec![0.5, -0.2, 0.9]));
        let states = vars.scan(&mut g, &[x, x], 4);
        assert_eq!(states.len(), 2);
        assert_ne!(g.value(states[0]).data, g.value(states[1]).data);
    }

    #[test]
    fn identity_linear_is_identity() {
        let lin = Linear::identity(3);
        let mut g = Graph::new();
        let vars = lin.bind(&mut g);
        let x = g.input(Tensor::vector(vec![0.3, -1.0, 2.5]));
        let y = vars.forward(&mut g, x);
        assert_eq!(g.value(y).data, vec![0.3, -1.0, 2.5]);
    }
}
