//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Forward calls append nodes; `backward` walks the tape in reverse and
//! accumulates gradients. Node inputs always precede the node on the tape,
//! so the reverse walk is a valid topological order. Ops cover exactly what
//! the recurrent encoders, fusion, classifier heads and decoder need.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackFn = Box<dyn FnOnce(&[Tensor], &mut [Tensor])>;

#[derive(Default)]
pub struct Graph {
    vals: Vec<Tensor>,
    backs: Vec<Option<BackFn>>,
    grads: Vec<Tensor>,
}

/// Split the gradient slice at `id` so the node's own gradient can be read
/// while input gradients (always at lower indices) are written.
fn split_grads(grads: &mut [Tensor], id: usize) -> (&mut [Tensor], &Tensor) {
    let (lower, upper) = grads.split_at_mut(id);
    (lower, &upper[0])
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, val: Tensor, back: Option<BackFn>) -> Var {
        self.vals.push(val);
        self.backs.push(back);
        Var(self.vals.len() - 1)
    }

    /// Leaf node. Gradients accumulate here and can be read after
    /// `backward`.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, None)
    }

    pub fn zeros_input(&mut self, rows: usize, cols: usize) -> Var {
        self.input(Tensor::zeros(rows, cols))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.vals[v.0]
    }

    /// Gradient of the last `backward` root with respect to `v`.
    pub fn grad(&self, v: Var) -> &Tensor {
        &self.grads[v.0]
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// C = A * B
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.vals[a.0].matmul_nn(&self.vals[b.0]);
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |vals, grads| {
                let (lower, g) = split_grads(grads, id);
                let da = g.matmul_nt(&vals[b.0]);
                let db = vals[a.0].matmul_tn(g);
                lower[a.0].add_assign(&da);
                lower[b.0].add_assign(&db);
            })),
        )
    }

    /// C = A * B^T
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = self.vals[a.0].matmul_nt(&self.vals[b.0]);
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |vals, grads| {
                let (lower, g) = split_grads(grads, id);
                let da = g.matmul_nn(&vals[b.0]);
                let db = g.matmul_tn(&vals[a.0]);
                lower[a.0].add_assign(&da);
                lower[b.0].add_assign(&db);
            })),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.vals[a.0].clone();
        out.add_assign(&self.vals[b.0]);
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |_, grads| {
                let (lower, g) = split_grads(grads, id);
                let g = g.clone();
                lower[a.0].add_assign(&g);
                lower[b.0].add_assign(&g);
            })),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.vals[a.0].clone();
        out.add_assign_scaled(&self.vals[b.0], -1.0);
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |_, grads| {
                let (lower, g) = split_grads(grads, id);
                let g = g.clone();
                lower[a.0].add_assign(&g);
                lower[b.0].add_assign_scaled(&g, -1.0);
            })),
        )
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.vals[a.0].hadamard(&self.vals[b.0]);
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |vals, grads| {
                let (lower, g) = split_grads(grads, id);
                let da = g.hadamard(&vals[b.0]);
                let db = g.hadamard(&vals[a.0]);
                lower[a.0].add_assign(&da);
                lower[b.0].add_assign(&db);
            })),
        )
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.vals[a.0].map(|v| v * factor);
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |_, grads| {
                let (lower, g) = split_grads(grads, id);
                let g = g.clone();
                lower[a.0].add_assign_scaled(&g, factor);
            })),
        )
    }

    /// y = 1 - a
    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.vals[a.0].map(|v| 1.0 - v);
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |_, grads| {
                let (lower, g) = split_grads(grads, id);
                let g = g.clone();
                lower[a.0].add_assign_scaled(&g, -1.0);
            })),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.vals[a.0].map(|v| 1.0 / (1.0 + libm::exp(-v)));
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |vals, grads| {
                let (lower, g) = split_grads(grads, id);
                let y = &vals[id];
                let da = Tensor::from_vec(
                    y.rows,
                    y.cols,
                    y.data
                        .iter()
                        .zip(&g.data)
                        .map(|(&y, &g)| g * y * (1.0 - y))
                        .collect(),
                );
                lower[a.0].add_assign(&da);
            })),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.vals[a.0].map(libm::tanh);
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |vals, grads| {
                let (lower, g) = split_grads(grads, id);
                let y = &vals[id];
                let da = Tensor::from_vec(
                    y.rows,
                    y.cols,
                    y.data
                        .iter()
                        .zip(&g.data)
                        .map(|(&y, &g)| g * (1.0 - y * y))
                        .collect(),
                );
                lower[a.0].add_assign(&da);
            })),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.vals[a.0].map(|v| if v > 0.0 { v } else { 0.0 });
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |vals, grads| {
                let (lower, g) = split_grads(grads, id);
                let x = &vals[a.0];
                let da = Tensor::from_vec(
                    x.rows,
                    x.cols,
                    x.data
                        .iter()
                        .zip(&g.data)
                        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                        .collect(),
                );
                lower[a.0].add_assign(&da);
            })),
        )
    }

    /// Softmax over a column vector.
    pub fn softmax_vec(&mut self, a: Var) -> Var {
        let v = &self.vals[a.0];
        assert_eq!(v.cols, 1, "softmax_vec expects a column vector");
        let out = Tensor::vector(crate::tensor::softmax(&v.data));
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |vals, grads| {
                let (lower, g) = split_grads(grads, id);
                let y = &vals[id];
                let dot: f64 = y.data.iter().zip(&g.data).map(|(&y, &g)| y * g).sum();
                let da = Tensor::from_vec(
                    y.rows,
                    1,
                    y.data
                        .iter()
                        .zip(&g.data)
                        .map(|(&y, &g)| y * (g - dot))
                        .collect(),
                );
                lower[a.0].add_assign(&da);
            })),
        )
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = &self.vals[a.0];
        let mut out = Tensor::zeros(v.rows, v.cols);
        for r in 0..v.rows {
            let s = crate::tensor::softmax(v.row(r));
            out.data[r * v.cols..(r + 1) * v.cols].copy_from_slice(&s);
        }
        let id = self.vals.len();
        self.push(
            out,
            Some(Box::new(move |vals, grads| {
                let (lower, g) = split_grads(grads, id);
                let y = &vals[id];
                let mut da = Tensor::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(&y, &g)| y * g).sum();
                    for c in 0..y.cols {
                        da.data[r * y.cols + c] = yr[c] * (gr[c] - dot);
                    }
                }
                lower[a.0].add_assign(&da);
            })),
        )
    }

    /// Stack column vectors vertically into one column vector.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        let mut sizes = Vec::with_capacity(parts.len());
        for p in parts {
            let v = &self.vals[p.0];
            assert_eq!(v.cols, 1, "concat_rows expects column vectors");
            sizes.push(v.rows);
            data.extend_from_slice(&v.data);
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let id = self.vals.len();
        self.push(
            Tensor::vector(data),
            Some(Box::new(move |_, grads| {
                let (lower, g) = split_grads(grads, id);
                let mut offset = 0;
                for (&pid, &size) in ids.iter().zip(&sizes) {
                    let slice = Tensor::vector(g.data[offset..offset + size].to_vec());
                    lower[pid].add_assign(&slice);
                    offset += size;
                }
            })),
        )
    }

    /// Stack k column vectors of length n into a (k, n) matrix, one row per
    /// vector.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack_rows of nothing");
        let n = self.vals[rows[0].0].rows;
        let mut data = Vec::with_capacity(rows.len() * n);
        for r in rows {
            let v = &self.vals[r.0];
            assert_eq!((v.rows, v.cols), (n, 1), "stack_rows expects (n,1) vectors");
            data.extend_from_slice(&v.data);
        }
        let ids: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let id = self.vals.len();
        self.push(
            Tensor::from_vec(rows.len(), n, data),
            Some(Box::new(move |_, grads| {
                let (lower, g) = split_grads(grads, id);
                for (i, &rid) in ids.iter().enumerate() {
                    let slice = Tensor::vector(g.data[i * n..(i + 1) * n].to_vec());
                    lower[rid].add_assign(&slice);
                }
            })),
        )
    }

    /// Mean over rows: (m, n) -> (n, 1).
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = &self.vals[a.0];
        let m = v.rows;
        let mut out = vec![0.0; v.cols];
        for r in 0..m {
            for (o, &x) in out.iter_mut().zip(v.row(r)) {
                *o += x;
            }
        }
        for o in out.iter_mut() {
            *o /= m as f64;
        }
        let id = self.vals.len();
        self.push(
            Tensor::vector(out),
            Some(Box::new(move |vals, grads| {
                let (lower, g) = split_grads(grads, id);
                let (rows, cols) = vals[a.0].shape();
                let mut da = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        da.data[r * cols + c] = g.data[c] / rows as f64;
                    }
                }
                lower[a.0].add_assign(&da);
            })),
        )
    }

    /// Cross-entropy of a softmax over `logits` against `target`, fused for
    /// numerical stability. Scalar output.
    pub fn ce_loss(&mut self, logits: Var, target: usize) -> Var {
        let x = &self.vals[logits.0];
        assert_eq!(x.cols, 1, "ce_loss expects a column vector of logits");
        assert!(target < x.rows, "ce_loss target out of range");
        let max = x.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = x.data.iter().map(|&v| libm::exp(v - max)).sum();
        let lse = max + libm::log(sum);
        let loss = lse - x.data[target];
        let id = self.vals.len();
        self.push(
            Tensor::from_vec(1, 1, vec![loss]),
            Some(Box::new(move |vals, grads| {
                let (lower, g) = split_grads(grads, id);
                let g0 = g.data[0];
                let probs = crate::tensor::softmax(&vals[logits.0].data);
                let mut da = Tensor::vector(probs);
                da.data.iter_mut().for_each(|p| *p *= g0);
                da.data[target] -= g0;
                lower[logits.0].add_assign(&da);
            })),
        )
    }

    /// Accumulate gradients of `root` (seeded with ones) into every node.
    pub fn backward(&mut self, root: Var) {
        self.grads = self.vals.iter().map(Tensor::zeros_like).collect();
        self.grads[root.0] = self.vals[root.0].map(|_| 1.0);
        for i in (0..=root.0).rev() {
            if let Some(back) = self.backs[i].take() {
                back(&self.vals, &mut self.grads);
            }
        }
    }
}
