//! GNN input features from the capacity/rate matrices and adjacency, plus the
//! min-max normalization shared by victim and attacker.

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three input matrices: two per-cell blocks (N x 2) and one per-UE block
/// (M x 2), all in bits/s aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub x_c1: Array2<f64>,
    pub x_c2: Array2<f64>,
    pub x_u: Array2<f64>,
}

fn two_cols(a: Array1<f64>, b: Array1<f64>) -> Array2<f64> {
    concatenate(
        Axis(1),
        &[
            a.insert_axis(Axis(1)).view(),
            b.insert_axis(Axis(1)).view(),
        ],
    )
    .expect("columns have equal length")
}

/// Builds the feature matrices:
/// `x_c1 = [A_c R 1 || R 1]`, `x_c2 = [A_u R' 1 || C 1]`, `x_u = [C' 1 || R' 1]`.
pub fn build_features(
    capacity: &Array2<f64>,
    rate: &Array2<f64>,
    a_c: &Array2<f64>,
    a_u: &Array2<f64>,
) -> Result<FeatureSet> {
    let (n, m) = capacity.dim();
    if rate.dim() != (n, m) || a_u.dim() != (n, m) || a_c.dim() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "C {:?}, R {:?}, A_c {:?}, A_u {:?}",
            capacity.dim(),
            rate.dim(),
            a_c.dim(),
            a_u.dim()
        )));
    }
    let rate_row_sum = rate.sum_axis(Axis(1)); // N
    let rate_col_sum = rate.sum_axis(Axis(0)); // M
    let cap_row_sum = capacity.sum_axis(Axis(1)); // N
    let cap_col_sum = capacity.sum_axis(Axis(0)); // M
    Ok(FeatureSet {
        x_c1: two_cols(a_c.dot(&rate_row_sum), rate_row_sum),
        x_c2: two_cols(a_u.dot(&rate_col_sum), cap_row_sum),
        x_u: two_cols(cap_col_sum, rate_col_sum),
    })
}

/// Per-column min/max of one feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColRange {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl ColRange {
    fn fit(mats: impl Iterator<Item = impl std::ops::Deref<Target = Array2<f64>>>) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for m in mats {
            for row in m.rows() {
                for c in 0..2 {
                    min[c] = min[c].min(row[c]);
                    max[c] = max[c].max(row[c]);
                }
            }
        }
        Self { min, max }
    }

    /// (value - min) / (max - min) per column; degenerate columns map to 0.
    pub fn scale(&self) -> [f64; 2] {
        [0, 1].map(|c| {
            let span = self.max[c] - self.min[c];
            if span > 0.0 {
                1.0 / span
            } else {
                0.0
            }
        })
    }
}

/// Min-max ranges fitted once over the benign suite and frozen into the
/// checkpoint, so attacker and victim share the same scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub x_c1: ColRange,
    pub x_c2: ColRange,
    pub x_u: ColRange,
}

pub fn fit_norm(suite: &[FeatureSet]) -> Result<NormStats> {
    if suite.is_empty() {
        return Err(Error::EmptySuite);
    }
    Ok(NormStats {
        x_c1: ColRange::fit(suite.iter().map(|f| &f.x_c1)),
        x_c2: ColRange::fit(suite.iter().map(|f| &f.x_c2)),
        x_u: ColRange::fit(suite.iter().map(|f| &f.x_u)),
    })
}

fn apply(m: &Array2<f64>, r: &ColRange) -> Array2<f64> {
    let scale = r.scale();
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        for c in 0..2 {
            row[c] = (row[c] - r.min[c]) * scale[c];
        }
    }
    out
}

fn unapply(m: &Array2<f64>, r: &ColRange) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        for c in 0..2 {
            let span = r.max[c] - r.min[c];
            row[c] = if span > 0.0 { row[c] * span + r.min[c] } else { r.min[c] };
        }
    }
    out
}

/// Maps a benign feature set into [0, 1] per column.
pub fn normalize(fs: &FeatureSet, stats: &NormStats) -> FeatureSet {
    FeatureSet {
        x_c1: apply(&fs.x_c1, &stats.x_c1),
        x_c2: apply(&fs.x_c2, &stats.x_c2),
        x_u: apply(&fs.x_u, &stats.x_u),
    }
}

/// Inverse of [`normalize`]; degenerate columns recover the fitted constant.
pub fn denormalize(fs: &FeatureSet, stats: &NormStats) -> FeatureSet {
    FeatureSet {
        x_c1: unapply(&fs.x_c1, &stats.x_c1),
        x_c2: unapply(&fs.x_c2, &stats.x_c2),
        x_u: unapply(&fs.x_u, &stats.x_u),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    /// The 2x2 worked example: identity UE assignment, mutual cell edge.
    fn fixture() -> FeatureSet {
        let a_c = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let a_u = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let c = arr2(&[[2.0, 1.0], [1.0, 4.0]]);
        let r = arr2(&[[2.0, 0.0], [0.0, 4.0]]);
        build_features(&c, &r, &a_c, &a_u).unwrap()
    }

    #[test]
    fn hand_derived_fixture_matches_exactly() {
        let fs = fixture();
        assert_eq!(fs.x_c1, arr2(&[[4.0, 2.0], [2.0, 4.0]]));
        assert_eq!(fs.x_c2, arr2(&[[2.0, 3.0], [4.0, 5.0]]));
        assert_eq!(fs.x_u, arr2(&[[3.0, 2.0], [5.0, 4.0]]));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a_c = arr2(&[[0.0]]);
        let a_u = arr2(&[[1.0, 0.0]]);
        let c = arr2(&[[2.0, 1.0], [1.0, 4.0]]);
        assert!(build_features(&c, &c, &a_c, &a_u).is_err());
    }

    #[test]
    fn normalization_examples() {
        // Column values {0, 2, 4} land on {0, 0.5, 1}; a constant column on 0.
        let mats: Vec<FeatureSet> = [0.0, 2.0, 4.0]
            .iter()
            .map(|&v| FeatureSet {
                x_c1: arr2(&[[v, 7.0]]),
                x_c2: arr2(&[[v, 7.0]]),
                x_u: arr2(&[[v, 7.0]]),
            })
            .collect();
        let stats = fit_norm(&mats).unwrap();
        let normed: Vec<f64> = mats
            .iter()
            .map(|f| normalize(f, &stats).x_c1[(0, 0)])
            .collect();
        assert_eq!(normed, vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize(&mats[1], &stats).x_c1[(0, 1)], 0.0);
    }

    #[test]
    fn empty_suite_is_rejected() {
        assert!(matches!(fit_norm(&[]), Err(Error::EmptySuite)));
    }

    #[test]
    fn feature_map_is_positively_homogeneous() {
        let a_c = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let a_u = arr2(&[[1.0, 1.0], [0.0, 0.0]]);
        let c = arr2(&[[2.0, 1.5], [1.0, 4.0]]);
        let r = arr2(&[[1.0, 0.75], [1.0, 4.0]]);
        let base = build_features(&c, &r, &a_c, &a_u).unwrap();
        let alpha = 2.5;
        let scaled = build_features(&(&c * alpha), &(&r * alpha), &a_c, &a_u).unwrap();
        assert_eq!(scaled.x_c1, &base.x_c1 * alpha);
        assert_eq!(scaled.x_c2, &base.x_c2 * alpha);
        assert_eq!(scaled.x_u, &base.x_u * alpha);
    }
}
