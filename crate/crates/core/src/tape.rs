//! Reverse-mode automatic differentiation over matrix-valued operations.
//!
//! A [`Tape`] records the forward computation of the processing chain
//! (RSRP -> capacity/rate -> features -> normalization -> GNN -> softmax) as
//! a sequence of matrix ops and replays it backwards once, producing exact
//! gradients with respect to any recorded leaf. Vectors are column matrices
//! (n x 1) and scalars are 1 x 1; a tape is single-use.

use ndarray::{Array2, Axis};

use crate::sim::{capacity_bps, capacity_grad_per_db};

/// Handle to one recorded value. Only meaningful on the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// a (n x k) * b (k x m)
    MatMul(ValueId, ValueId),
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    /// a (n x m) + row (1 x m), broadcast over rows
    AddRow(ValueId, ValueId),
    Scale(ValueId, f64),
    Relu(ValueId),
    /// n x m -> n x 1
    RowSum(ValueId),
    /// n x m -> m x 1
    ColSum(ValueId),
    /// [a || b] along columns
    ConcatCols(ValueId, ValueId),
    /// Shannon capacity per entry of a dBm matrix; -inf entries map to 0
    /// with exactly zero gradient.
    CapacityFromDb { src: ValueId, noise_floor: f64, bandwidth: f64 },
    /// Divide row i by div[i] (constants).
    RowDiv { src: ValueId, div: Vec<f64> },
    /// (x - shift[col]) * scale[col] per entry; only the scale matters on the
    /// way back.
    ColAffine { src: ValueId, scale: Vec<f64> },
    /// K scalars -> K x 1 vector.
    StackScalars(Vec<ValueId>),
    /// v (K x 1) -> log softmax(v)[index], a 1 x 1 scalar.
    LogSoftmaxPick { src: ValueId, index: usize },
    /// v (K x 1) -> softmax(v), K x 1.
    Softmax(ValueId),
    /// v (K x 1) -> v[index], 1 x 1.
    Pick { src: ValueId, index: usize },
}

struct Node {
    value: Array2<f64>,
    /// Allocated by the backward sweep; empty until then.
    grad: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn stable_softmax(v: &Array2<f64>) -> Array2<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e = v.mapv(|x| (x - max).exp());
    let sum: f64 = e.iter().sum();
    e.mapv_inplace(|x| x / sum);
    e
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Value of a 1 x 1 node.
    pub fn scalar(&self, id: ValueId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.dim(), (1, 1), "scalar() on a non-scalar node");
        v[(0, 0)]
    }

    /// Gradient accumulated by the last backward sweep.
    pub fn grad(&self, id: ValueId) -> &Array2<f64> {
        let node = &self.nodes[id.0];
        assert_eq!(
            node.grad.dim(),
            node.value.dim(),
            "grad() before any backward sweep"
        );
        &node.grad
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> ValueId {
        self.nodes.push(Node { value, grad: Array2::zeros((0, 0)), op });
        ValueId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> ValueId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> ValueId {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.value(a).dim(), self.value(b).dim());
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.value(a).dim(), self.value(b).dim());
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn add_row(&mut self, a: ValueId, row: ValueId) -> ValueId {
        assert_eq!(self.value(row).nrows(), 1);
        assert_eq!(self.value(a).ncols(), self.value(row).ncols());
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: ValueId, factor: f64) -> ValueId {
        let v = self.value(a).mapv(|x| x * factor);
        self.push(v, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn row_sum(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::RowSum(a))
    }

    pub fn col_sum(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(1));
        self.push(v, Op::ColSum(a))
    }

    pub fn concat_cols(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.value(a).nrows(), self.value(b).nrows());
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts checked");
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn capacity_from_db(&mut self, src: ValueId, noise_floor: f64, bandwidth: f64) -> ValueId {
        let v = self
            .value(src)
            .mapv(|p| capacity_bps(p, noise_floor, bandwidth));
        self.push(v, Op::CapacityFromDb { src, noise_floor, bandwidth })
    }

    pub fn row_div(&mut self, src: ValueId, div: Vec<f64>) -> ValueId {
        assert_eq!(self.value(src).nrows(), div.len());
        let mut v = self.value(src).clone();
        for (i, mut row) in v.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|x| x / div[i]);
        }
        self.push(v, Op::RowDiv { src, div })
    }

    pub fn col_affine(&mut self, src: ValueId, shift: &[f64], scale: Vec<f64>) -> ValueId {
        assert_eq!(self.value(src).ncols(), shift.len());
        assert_eq!(shift.len(), scale.len());
        let mut v = self.value(src).clone();
        for mut row in v.rows_mut() {
            for c in 0..row.len() {
                row[c] = (row[c] - shift[c]) * scale[c];
            }
        }
        self.push(v, Op::ColAffine { src, scale })
    }

    pub fn stack_scalars(&mut self, ids: Vec<ValueId>) -> ValueId {
        assert!(!ids.is_empty());
        let v = Array2::from_shape_fn((ids.len(), 1), |(k, _)| self.scalar(ids[k]));
        self.push(v, Op::StackScalars(ids))
    }

    pub fn log_softmax_pick(&mut self, src: ValueId, index: usize) -> ValueId {
        let v = self.value(src);
        assert_eq!(v.ncols(), 1);
        assert!(index < v.nrows());
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + v.mapv(|x| (x - max).exp()).sum().ln();
        let out = Array2::from_elem((1, 1), v[(index, 0)] - lse);
        self.push(out, Op::LogSoftmaxPick { src, index })
    }

    pub fn softmax(&mut self, src: ValueId) -> ValueId {
        let v = self.value(src);
        assert_eq!(v.ncols(), 1);
        let out = stable_softmax(v);
        self.push(out, Op::Softmax(src))
    }

    pub fn pick(&mut self, src: ValueId, index: usize) -> ValueId {
        let v = self.value(src);
        assert_eq!(v.ncols(), 1);
        let out = Array2::from_elem((1, 1), v[(index, 0)]);
        self.push(out, Op::Pick { src, index })
    }

    /// Reverse sweep from a scalar node, seeding its gradient with 1.
    pub fn backward(&mut self, from: ValueId) {
        self.backward_seeded(from, 1.0);
    }

    /// Reverse sweep from a scalar node with an arbitrary seed; gradients of
    /// all earlier nodes accumulate, later nodes receive zero.
    pub fn backward_seeded(&mut self, from: ValueId, seed: f64) {
        assert_eq!(self.nodes[from.0].value.dim(), (1, 1), "backward from a non-scalar");
        for n in &mut self.nodes {
            if n.grad.dim() == n.value.dim() {
                n.grad.fill(0.0);
            } else {
                n.grad = Array2::zeros(n.value.dim());
            }
        }
        self.nodes[from.0].grad[(0, 0)] = seed;

        for idx in (0..=from.0).rev() {
            let g = self.nodes[idx].grad.clone();
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.nodes[b.0].value.t());
                    let db = self.nodes[a.0].value.t().dot(&g);
                    self.nodes[a.0].grad += &da;
                    self.nodes[b.0].grad += &db;
                }
                Op::Add(a, b) => {
                    self.nodes[a.0].grad += &g;
                    self.nodes[b.0].grad += &g;
                }
                Op::Sub(a, b) => {
                    self.nodes[a.0].grad += &g;
                    self.nodes[b.0].grad -= &g;
                }
                Op::AddRow(a, row) => {
                    self.nodes[a.0].grad += &g;
                    let summed = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.nodes[row.0].grad += &summed;
                }
                Op::Scale(a, factor) => {
                    self.nodes[a.0].grad.scaled_add(factor, &g);
                }
                Op::Relu(a) => {
                    // Subgradient at 0 is 0.
                    let da = Array2::from_shape_fn(g.dim(), |ix| {
                        if self.nodes[a.0].value[ix] > 0.0 { g[ix] } else { 0.0 }
                    });
                    self.nodes[a.0].grad += &da;
                }
                Op::RowSum(a) => {
                    let (n, m) = self.nodes[a.0].value.dim();
                    let da = Array2::from_shape_fn((n, m), |(i, _)| g[(i, 0)]);
                    self.nodes[a.0].grad += &da;
                }
                Op::ColSum(a) => {
                    let (n, m) = self.nodes[a.0].value.dim();
                    let da = Array2::from_shape_fn((n, m), |(_, j)| g[(j, 0)]);
                    self.nodes[a.0].grad += &da;
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a.0].value.ncols();
                    let (ga, gb) = g.view().split_at(Axis(1), ca);
                    self.nodes[a.0].grad += &ga;
                    self.nodes[b.0].grad += &gb;
                }
                Op::CapacityFromDb { src, noise_floor, bandwidth } => {
                    let da = Array2::from_shape_fn(g.dim(), |ix| {
                        g[ix] * capacity_grad_per_db(
                            self.nodes[src.0].value[ix],
                            noise_floor,
                            bandwidth,
                        )
                    });
                    self.nodes[src.0].grad += &da;
                }
                Op::RowDiv { src, div } => {
                    let da = Array2::from_shape_fn(g.dim(), |(i, j)| g[(i, j)] / div[i]);
                    self.nodes[src.0].grad += &da;
                }
                Op::ColAffine { src, scale, .. } => {
                    let da = Array2::from_shape_fn(g.dim(), |(i, j)| g[(i, j)] * scale[j]);
                    self.nodes[src.0].grad += &da;
                }
                Op::StackScalars(ids) => {
                    for (k, id) in ids.iter().enumerate() {
                        self.nodes[id.0].grad[(0, 0)] += g[(k, 0)];
                    }
                }
                Op::LogSoftmaxPick { src, index } => {
                    let go = g[(0, 0)];
                    let probs = stable_softmax(&self.nodes[src.0].value);
                    let k = probs.nrows();
                    let da = Array2::from_shape_fn((k, 1), |(i, _)| {
                        let indicator = if i == index { 1.0 } else { 0.0 };
                        go * (indicator - probs[(i, 0)])
                    });
                    self.nodes[src.0].grad += &da;
                }
                Op::Softmax(src) => {
                    let probs = &self.nodes[idx].value;
                    let dot: f64 = probs.iter().zip(g.iter()).map(|(p, gi)| p * gi).sum();
                    let da = Array2::from_shape_fn(probs.dim(), |ix| {
                        probs[ix] * (g[ix] - dot)
                    });
                    self.nodes[src.0].grad += &da;
                }
                Op::Pick { src, index } => {
                    self.nodes[src.0].grad[(index, 0)] += g[(0, 0)];
                }
            }
        }
    }
}
