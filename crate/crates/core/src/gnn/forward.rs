//! Tape forward pass of the graph scorer.

use ndarray::Array2;

use super::params::GnnParams;
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::tape::{Tape, ValueId};

/// Tape handles for every weight array, mirroring [`GnnParams`].
pub struct ParamIds {
    pub cell_in_w: ValueId,
    pub cell_in_b: ValueId,
    pub ue_in_w: ValueId,
    pub ue_in_b: ValueId,
    pub layers: Vec<LayerIds>,
    pub readout_w: ValueId,
    pub readout_b: ValueId,
    pub readout_v: ValueId,
}

pub struct LayerIds {
    pub w_self_c: ValueId,
    pub w_cc: ValueId,
    pub w_cu: ValueId,
    pub b_c: ValueId,
    pub w_self_u: ValueId,
    pub w_uc: ValueId,
    pub b_u: ValueId,
}

/// Records every weight array as a tape leaf.
pub fn inject_params(tape: &mut Tape, params: &GnnParams) -> ParamIds {
    ParamIds {
        cell_in_w: tape.leaf(params.cell_in_w.clone()),
        cell_in_b: tape.leaf(params.cell_in_b.clone()),
        ue_in_w: tape.leaf(params.ue_in_w.clone()),
        ue_in_b: tape.leaf(params.ue_in_b.clone()),
        layers: params
            .layers
            .iter()
            .map(|l| LayerIds {
                w_self_c: tape.leaf(l.w_self_c.clone()),
                w_cc: tape.leaf(l.w_cc.clone()),
                w_cu: tape.leaf(l.w_cu.clone()),
                b_c: tape.leaf(l.b_c.clone()),
                w_self_u: tape.leaf(l.w_self_u.clone()),
                w_uc: tape.leaf(l.w_uc.clone()),
                b_u: tape.leaf(l.b_u.clone()),
            })
            .collect(),
        readout_w: tape.leaf(params.readout_w.clone()),
        readout_b: tape.leaf(params.readout_b.clone()),
        readout_v: tape.leaf(params.readout_v.clone()),
    }
}

/// Reads the gradients of every weight leaf back into a [`GnnParams`]-shaped
/// accumulator.
pub fn collect_param_grads(tape: &Tape, ids: &ParamIds, into: &mut GnnParams) {
    let add = |dst: &mut Array2<f64>, src: &Array2<f64>| *dst += src;
    add(&mut into.cell_in_w, tape.grad(ids.cell_in_w));
    add(&mut into.cell_in_b, tape.grad(ids.cell_in_b));
    add(&mut into.ue_in_w, tape.grad(ids.ue_in_w));
    add(&mut into.ue_in_b, tape.grad(ids.ue_in_b));
    for (l, lid) in into.layers.iter_mut().zip(&ids.layers) {
        add(&mut l.w_self_c, tape.grad(lid.w_self_c));
        add(&mut l.w_cc, tape.grad(lid.w_cc));
        add(&mut l.w_cu, tape.grad(lid.w_cu));
        add(&mut l.b_c, tape.grad(lid.b_c));
        add(&mut l.w_self_u, tape.grad(lid.w_self_u));
        add(&mut l.w_uc, tape.grad(lid.w_uc));
        add(&mut l.b_u, tape.grad(lid.b_u));
    }
    add(&mut into.readout_w, tape.grad(ids.readout_w));
    add(&mut into.readout_b, tape.grad(ids.readout_b));
    add(&mut into.readout_v, tape.grad(ids.readout_v));
}

/// Constant aggregation operators for one concrete graph.
///
/// Mean aggregation is a matmul with a row-normalized adjacency; rows without
/// neighbors stay all-zero so empty neighborhoods aggregate the zero vector.
#[derive(Debug, Clone)]
pub struct GraphWiring {
    /// N x N row-normalized cell adjacency.
    pub cell_neighbors: Array2<f64>,
    /// N x M row-normalized assignment (mean over served UEs).
    pub served_ues: Array2<f64>,
    /// M x N transposed assignment (each UE's serving cell, or zero).
    pub serving_cell: Array2<f64>,
}

impl GraphWiring {
    pub fn new(a_c: &Array2<f64>, a_u: &Array2<f64>) -> Self {
        let row_normalize = |m: &Array2<f64>| {
            let mut out = m.clone();
            for mut row in out.rows_mut() {
                let s: f64 = row.sum();
                if s > 0.0 {
                    row.mapv_inplace(|v| v / s);
                }
            }
            out
        };
        Self {
            cell_neighbors: row_normalize(a_c),
            served_ues: row_normalize(a_u),
            serving_cell: a_u.t().to_owned(),
        }
    }
}

/// Records the forward pass for one graph and returns the scalar score node.
///
/// `x_c1`/`x_c2`/`x_u` are (normalized) feature nodes already on the tape.
pub fn gnn_score(
    tape: &mut Tape,
    pids: &ParamIds,
    x_c1: ValueId,
    x_c2: ValueId,
    x_u: ValueId,
    wiring: &GraphWiring,
) -> ValueId {
    let cell_neighbors = tape.leaf(wiring.cell_neighbors.clone());
    let served_ues = tape.leaf(wiring.served_ues.clone());
    let serving_cell = tape.leaf(wiring.serving_cell.clone());

    let cell_inputs = tape.concat_cols(x_c1, x_c2);
    let cell_pre = tape.matmul(cell_inputs, pids.cell_in_w);
    let cell_pre = tape.add_row(cell_pre, pids.cell_in_b);
    let mut h_c = tape.relu(cell_pre);

    let ue_pre = tape.matmul(x_u, pids.ue_in_w);
    let ue_pre = tape.add_row(ue_pre, pids.ue_in_b);
    let mut h_u = tape.relu(ue_pre);

    for l in &pids.layers {
        // Synchronous update: both node kinds read the previous round.
        let from_cells = tape.matmul(cell_neighbors, h_c);
        let from_ues = tape.matmul(served_ues, h_u);
        let c_self = tape.matmul(h_c, l.w_self_c);
        let c_nbr = tape.matmul(from_cells, l.w_cc);
        let c_srv = tape.matmul(from_ues, l.w_cu);
        let c_sum = tape.add(c_self, c_nbr);
        let c_sum = tape.add(c_sum, c_srv);
        let c_sum = tape.add_row(c_sum, l.b_c);
        let next_c = tape.relu(c_sum);

        let from_serving = tape.matmul(serving_cell, h_c);
        let u_self = tape.matmul(h_u, l.w_self_u);
        let u_srv = tape.matmul(from_serving, l.w_uc);
        let u_sum = tape.add(u_self, u_srv);
        let u_sum = tape.add_row(u_sum, l.b_u);
        let next_u = tape.relu(u_sum);

        h_c = next_c;
        h_u = next_u;
    }

    let n = wiring.cell_neighbors.nrows();
    let m = wiring.serving_cell.nrows();
    let ones_c = tape.leaf(Array2::ones((1, n)));
    let ones_u = tape.leaf(Array2::ones((1, m)));
    let pool_c = tape.matmul(ones_c, h_c);
    let pool_u = tape.matmul(ones_u, h_u);
    let pooled = tape.concat_cols(pool_c, pool_u);
    let read = tape.matmul(pooled, pids.readout_w);
    let read = tape.add_row(read, pids.readout_b);
    let read = tape.relu(read);
    tape.matmul(read, pids.readout_v)
}

fn check_dims(params: &GnnParams, fs: &FeatureSet, a_c: &Array2<f64>, a_u: &Array2<f64>) -> Result<()> {
    let n = a_u.nrows();
    let m = a_u.ncols();
    if a_c.dim() != (n, n)
        || fs.x_c1.dim() != (n, 2)
        || fs.x_c2.dim() != (n, 2)
        || fs.x_u.dim() != (m, 2)
    {
        return Err(Error::ShapeMismatch(format!(
            "features {:?}/{:?}/{:?} against A_c {:?}, A_u {:?}",
            fs.x_c1.dim(),
            fs.x_c2.dim(),
            fs.x_u.dim(),
            a_c.dim(),
            a_u.dim()
        )));
    }
    if params.dims.cell_in != 4 || params.dims.ue_in != 2 {
        return Err(Error::ShapeMismatch(format!(
            "parameter input widths {}x{} do not fit the 4/2 feature layout",
            params.dims.cell_in, params.dims.ue_in
        )));
    }
    Ok(())
}

/// Scores one graph from its (normalized) features. Deterministic.
pub fn forward_score(
    params: &GnnParams,
    fs: &FeatureSet,
    a_c: &Array2<f64>,
    a_u: &Array2<f64>,
) -> Result<f64> {
    check_dims(params, fs, a_c, a_u)?;
    let mut tape = Tape::new();
    let pids = inject_params(&mut tape, params);
    let x_c1 = tape.leaf(fs.x_c1.clone());
    let x_c2 = tape.leaf(fs.x_c2.clone());
    let x_u = tape.leaf(fs.x_u.clone());
    let wiring = GraphWiring::new(a_c, a_u);
    let q = gnn_score(&mut tape, &pids, x_c1, x_c2, x_u, &wiring);
    Ok(tape.scalar(q))
}

/// Numerically stable softmax over raw scores.
pub fn softmax_probs(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest value, ties to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}
