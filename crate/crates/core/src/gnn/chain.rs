//! The end-to-end differentiable chain: RSRP -> capacity/rate -> features ->
//! normalization -> scorer -> softmax, recorded per candidate action so that
//! one reverse sweep yields gradients with respect to the weights, the
//! features, or the RSRP matrix itself.

use ndarray::Array2;

use super::forward::{gnn_score, inject_params, GraphWiring, ParamIds};
use super::params::GnnParams;
use crate::error::Result;
use crate::features::NormStats;
use crate::sim::{valid_actions, Action, ChannelParams, GraphState, RewardConfig, RsrpMatrix};
use crate::tape::{Tape, ValueId};

/// A trained (or initial) policy artifact: weights plus the frozen
/// normalization and reward settings it was fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: GnnParams,
    pub norm: NormStats,
    pub reward: RewardConfig,
    pub defense: Option<crate::defense::DefenseConfig>,
}

impl Model {
    pub fn new(params: GnnParams, norm: NormStats, reward: RewardConfig) -> Self {
        Self { params, norm, reward, defense: None }
    }
}

/// The K candidate graphs reachable from one non-terminal state: the head of
/// the unconnected queue attached to each of its reported cells. Candidate k
/// differs from the base state only in that one edge.
#[derive(Debug, Clone)]
pub struct CandidateBatch {
    pub ue: usize,
    pub actions: Vec<Action>,
    pub a_c: Array2<f64>,
    pub base_a_u: Array2<f64>,
    pub base_loads: Vec<usize>,
}

impl CandidateBatch {
    pub fn from_state(state: &GraphState, rsrp: &RsrpMatrix) -> Result<Self> {
        let actions = valid_actions(state, rsrp)?;
        Ok(Self {
            ue: actions[0].ue_id,
            actions,
            a_c: state.a_c.clone(),
            base_a_u: state.a_u.clone(),
            base_loads: state.cell_loads(),
        })
    }

    pub fn k(&self) -> usize {
        self.actions.len()
    }

    /// Assignment matrix with candidate k's edge included.
    pub fn candidate_a_u(&self, k: usize) -> Array2<f64> {
        let mut a_u = self.base_a_u.clone();
        a_u[(self.actions[k].cell_id, self.ue)] = 1.0;
        a_u
    }

    /// Per-cell rate divisors with candidate k's edge included.
    pub fn candidate_divisors(&self, k: usize) -> Vec<f64> {
        let cell = self.actions[k].cell_id;
        self.base_loads
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let load = l + usize::from(i == cell);
                load.max(1) as f64
            })
            .collect()
    }
}

/// Tape handles of the shared additive feature perturbation (digital surface).
pub struct FeatureDeltaIds {
    pub x_c1: ValueId,
    pub x_c2: ValueId,
    pub x_u: ValueId,
}

/// A recorded chain, ready for value reads and one reverse sweep.
pub struct Chain {
    pub tape: Tape,
    pub rsrp_leaf: ValueId,
    pub feature_deltas: Option<FeatureDeltaIds>,
    pub params: ParamIds,
    /// Scalar score node per requested candidate.
    pub scores: Vec<ValueId>,
    /// The scores stacked into a K x 1 vector.
    pub score_vec: ValueId,
}

impl Chain {
    pub fn score_values(&self) -> Vec<f64> {
        self.scores.iter().map(|&s| self.tape.scalar(s)).collect()
    }

    pub fn probs(&self) -> Vec<f64> {
        super::forward::softmax_probs(&self.score_values())
    }
}

/// Records the chain for the given candidates (all of them when
/// `candidates` is `None`).
///
/// `rsrp_dbm` may be a perturbed copy; the graph structure (reported links,
/// classification, adjacency) always comes from the batch and is held fixed.
/// When `feature_deltas` is given, those three matrices are recorded as
/// leaves and added onto every candidate's normalized features.
pub fn build_chain(
    params: &GnnParams,
    norm: &NormStats,
    channel: &ChannelParams,
    batch: &CandidateBatch,
    rsrp_dbm: &Array2<f64>,
    candidates: Option<&[usize]>,
    feature_deltas: Option<[&Array2<f64>; 3]>,
) -> Chain {
    let all: Vec<usize> = (0..batch.k()).collect();
    let picked: &[usize] = candidates.unwrap_or(&all);

    let mut tape = Tape::new();
    let pids = inject_params(&mut tape, params);
    let rsrp_leaf = tape.leaf(rsrp_dbm.clone());
    let delta_ids = feature_deltas.map(|[d1, d2, du]| FeatureDeltaIds {
        x_c1: tape.leaf(d1.clone()),
        x_c2: tape.leaf(d2.clone()),
        x_u: tape.leaf(du.clone()),
    });

    let capacity = tape.capacity_from_db(rsrp_leaf, channel.noise_floor, channel.bandwidth);
    let cap_row_sum = tape.row_sum(capacity);
    let cap_col_sum = tape.col_sum(capacity);
    let a_c_leaf = tape.leaf(batch.a_c.clone());

    let mut scores = Vec::with_capacity(picked.len());
    for &k in picked {
        let rate = tape.row_div(capacity, batch.candidate_divisors(k));
        let rate_row_sum = tape.row_sum(rate);
        let rate_col_sum = tape.col_sum(rate);

        let a_u_k = batch.candidate_a_u(k);
        let a_u_leaf = tape.leaf(a_u_k.clone());
        let neighbor_rates = tape.matmul(a_c_leaf, rate_row_sum);
        let x_c1 = tape.concat_cols(neighbor_rates, rate_row_sum);
        let served_rates = tape.matmul(a_u_leaf, rate_col_sum);
        let x_c2 = tape.concat_cols(served_rates, cap_row_sum);
        let x_u = tape.concat_cols(cap_col_sum, rate_col_sum);

        let mut x_c1 = tape.col_affine(x_c1, &norm.x_c1.min, norm.x_c1.scale().to_vec());
        let mut x_c2 = tape.col_affine(x_c2, &norm.x_c2.min, norm.x_c2.scale().to_vec());
        let mut x_u = tape.col_affine(x_u, &norm.x_u.min, norm.x_u.scale().to_vec());
        if let Some(d) = &delta_ids {
            x_c1 = tape.add(x_c1, d.x_c1);
            x_c2 = tape.add(x_c2, d.x_c2);
            x_u = tape.add(x_u, d.x_u);
        }

        let wiring = GraphWiring::new(&batch.a_c, &a_u_k);
        scores.push(gnn_score(&mut tape, &pids, x_c1, x_c2, x_u, &wiring));
    }
    let score_vec = tape.stack_scalars(scores.clone());

    Chain {
        tape,
        rsrp_leaf,
        feature_deltas: delta_ids,
        params: pids,
        scores,
        score_vec,
    }
}

/// Raw candidate scores under the clean chain.
pub fn action_scores(model: &Model, channel: &ChannelParams, batch: &CandidateBatch, rsrp: &RsrpMatrix) -> Vec<f64> {
    build_chain(&model.params, &model.norm, channel, batch, &rsrp.dbm, None, None).score_values()
}

/// Softmax action probabilities over the K candidates.
pub fn action_probs(model: &Model, channel: &ChannelParams, batch: &CandidateBatch, rsrp: &RsrpMatrix) -> Vec<f64> {
    super::forward::softmax_probs(&action_scores(model, channel, batch, rsrp))
}
