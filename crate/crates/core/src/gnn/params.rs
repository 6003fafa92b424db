//! Learnable weights of the graph scorer.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Architecture sizes. `cell_in`/`ue_in` are the raw feature widths, `dim`
/// the latent width, `layers` the number of message-passing rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GnnDims {
    pub layers: usize,
    pub dim: usize,
    pub cell_in: usize,
    pub ue_in: usize,
}

impl Default for GnnDims {
    fn default() -> Self {
        Self { layers: 2, dim: 8, cell_in: 4, ue_in: 2 }
    }
}

/// One message-passing round: self/neighbor/served maps for cells, self and
/// serving-cell maps for UEs, plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w_self_c: Array2<f64>,
    pub w_cc: Array2<f64>,
    pub w_cu: Array2<f64>,
    pub b_c: Array2<f64>,
    pub w_self_u: Array2<f64>,
    pub w_uc: Array2<f64>,
    pub b_u: Array2<f64>,
}

/// All learnable weights: input maps, message-passing layers, and the
/// readout head producing the scalar graph score.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub dims: GnnDims,
    pub cell_in_w: Array2<f64>,
    pub cell_in_b: Array2<f64>,
    pub ue_in_w: Array2<f64>,
    pub ue_in_b: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub readout_w: Array2<f64>,
    pub readout_b: Array2<f64>,
    pub readout_v: Array2<f64>,
}

impl GnnParams {
    /// Seeded uniform init in [-1/sqrt(dim), 1/sqrt(dim)].
    pub fn init(dims: GnnDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (dims.dim as f64).sqrt();
        let mut mat = |r: usize, c: usize| {
            Array2::from_shape_fn((r, c), |_| rng.random_range(-bound..bound))
        };
        let d = dims.dim;
        let cell_in_w = mat(dims.cell_in, d);
        let cell_in_b = mat(1, d);
        let ue_in_w = mat(dims.ue_in, d);
        let ue_in_b = mat(1, d);
        let layers = (0..dims.layers)
            .map(|_| LayerParams {
                w_self_c: mat(d, d),
                w_cc: mat(d, d),
                w_cu: mat(d, d),
                b_c: mat(1, d),
                w_self_u: mat(d, d),
                w_uc: mat(d, d),
                b_u: mat(1, d),
            })
            .collect();
        let readout_w = mat(2 * d, d);
        let readout_b = mat(1, d);
        let readout_v = mat(d, 1);
        Self {
            dims,
            cell_in_w,
            cell_in_b,
            ue_in_w,
            ue_in_b,
            layers,
            readout_w,
            readout_b,
            readout_v,
        }
    }

    pub fn zeros(dims: GnnDims) -> Self {
        let d = dims.dim;
        let z = |r: usize, c: usize| Array2::zeros((r, c));
        Self {
            dims,
            cell_in_w: z(dims.cell_in, d),
            cell_in_b: z(1, d),
            ue_in_w: z(dims.ue_in, d),
            ue_in_b: z(1, d),
            layers: (0..dims.layers)
                .map(|_| LayerParams {
                    w_self_c: z(d, d),
                    w_cc: z(d, d),
                    w_cu: z(d, d),
                    b_c: z(1, d),
                    w_self_u: z(d, d),
                    w_uc: z(d, d),
                    b_u: z(1, d),
                })
                .collect(),
            readout_w: z(2 * d, d),
            readout_b: z(1, d),
            readout_v: z(d, 1),
        }
    }

    /// Visits every weight array with a stable name, in a fixed order.
    pub fn for_each(&self, mut f: impl FnMut(String, &Array2<f64>)) {
        f("cell_in_w".into(), &self.cell_in_w);
        f("cell_in_b".into(), &self.cell_in_b);
        f("ue_in_w".into(), &self.ue_in_w);
        f("ue_in_b".into(), &self.ue_in_b);
        for (i, l) in self.layers.iter().enumerate() {
            f(format!("layer{i}_w_self_c"), &l.w_self_c);
            f(format!("layer{i}_w_cc"), &l.w_cc);
            f(format!("layer{i}_w_cu"), &l.w_cu);
            f(format!("layer{i}_b_c"), &l.b_c);
            f(format!("layer{i}_w_self_u"), &l.w_self_u);
            f(format!("layer{i}_w_uc"), &l.w_uc);
            f(format!("layer{i}_b_u"), &l.b_u);
        }
        f("readout_w".into(), &self.readout_w);
        f("readout_b".into(), &self.readout_b);
        f("readout_v".into(), &self.readout_v);
    }

    /// Mutable visitor with the same names and order as [`Self::for_each`].
    pub fn for_each_mut(&mut self, mut f: impl FnMut(String, &mut Array2<f64>)) {
        f("cell_in_w".into(), &mut self.cell_in_w);
        f("cell_in_b".into(), &mut self.cell_in_b);
        f("ue_in_w".into(), &mut self.ue_in_w);
        f("ue_in_b".into(), &mut self.ue_in_b);
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(format!("layer{i}_w_self_c"), &mut l.w_self_c);
            f(format!("layer{i}_w_cc"), &mut l.w_cc);
            f(format!("layer{i}_w_cu"), &mut l.w_cu);
            f(format!("layer{i}_b_c"), &mut l.b_c);
            f(format!("layer{i}_w_self_u"), &mut l.w_self_u);
            f(format!("layer{i}_w_uc"), &mut l.w_uc);
            f(format!("layer{i}_b_u"), &mut l.b_u);
        }
        f("readout_w".into(), &mut self.readout_w);
        f("readout_b".into(), &mut self.readout_b);
        f("readout_v".into(), &mut self.readout_v);
    }

    fn arrays_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = vec![
            &mut self.cell_in_w,
            &mut self.cell_in_b,
            &mut self.ue_in_w,
            &mut self.ue_in_b,
        ];
        for l in &mut self.layers {
            out.push(&mut l.w_self_c);
            out.push(&mut l.w_cc);
            out.push(&mut l.w_cu);
            out.push(&mut l.b_c);
            out.push(&mut l.w_self_u);
            out.push(&mut l.w_uc);
            out.push(&mut l.b_u);
        }
        out.push(&mut self.readout_w);
        out.push(&mut self.readout_b);
        out.push(&mut self.readout_v);
        out
    }

    fn arrays(&self) -> Vec<&Array2<f64>> {
        let mut out: Vec<&Array2<f64>> = vec![
            &self.cell_in_w,
            &self.cell_in_b,
            &self.ue_in_w,
            &self.ue_in_b,
        ];
        for l in &self.layers {
            out.push(&l.w_self_c);
            out.push(&l.w_cc);
            out.push(&l.w_cu);
            out.push(&l.b_c);
            out.push(&l.w_self_u);
            out.push(&l.w_uc);
            out.push(&l.b_u);
        }
        out.push(&self.readout_w);
        out.push(&self.readout_b);
        out.push(&self.readout_v);
        out
    }

    /// In-place `self[i] = f(self[i], other[i])` over aligned weight entries.
    pub fn zip_apply(&mut self, other: &GnnParams, mut f: impl FnMut(f64, f64) -> f64) {
        assert_eq!(self.dims, other.dims);
        let theirs = other.arrays();
        for (mine, their) in self.arrays_mut().into_iter().zip(theirs) {
            for (a, b) in mine.iter_mut().zip(their.iter()) {
                *a = f(*a, *b);
            }
        }
    }

    /// Accumulates `other * factor` into `self`.
    pub fn accumulate(&mut self, other: &GnnParams, factor: f64) {
        self.zip_apply(other, |a, b| a + factor * b);
    }

    /// Plain SGD step. A zero rate leaves every bit untouched.
    pub fn sgd_step(&mut self, grads: &GnnParams, learning_rate: f64) {
        if learning_rate == 0.0 {
            return;
        }
        self.zip_apply(grads, |p, g| p - learning_rate * g);
    }

    pub fn check_compatible(&self, other: &GnnParams) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ArchitectureMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}
