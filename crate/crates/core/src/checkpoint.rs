//! Versioned checkpoint files: named parameter arrays in decimal, a dims
//! header, the frozen normalization stats and reward config, and an optional
//! defense-metadata block. Reloading reproduces scores bit-for-bit.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::defense::DefenseConfig;
use crate::error::{Error, Result};
use crate::features::NormStats;
use crate::gnn::{GnnDims, GnnParams, Model};
use crate::sim::RewardConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DimsHeader {
    layers: usize,
    dim: usize,
    cell_in: usize,
    ue_in: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    dims: DimsHeader,
    reward: RewardConfig,
    norm: NormStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    defense: Option<DefenseConfig>,
    params: BTreeMap<String, Vec<Vec<f64>>>,
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut params = BTreeMap::new();
    model.params.for_each(|name, arr| {
        params.insert(name, to_rows(arr));
    });
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        dims: DimsHeader {
            layers: model.params.dims.layers,
            dim: model.params.dims.dim,
            cell_in: model.params.dims.cell_in,
            ue_in: model.params.dims.ue_in,
        },
        reward: model.reward.clone(),
        norm: model.norm.clone(),
        defense: model.defense.clone(),
        params,
    };
    let text = toml::to_string(&file).map_err(|e| Error::malformed(path, e))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = toml::from_str(&text).map_err(|e| Error::malformed(path, e))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let dims = GnnDims {
        layers: file.dims.layers,
        dim: file.dims.dim,
        cell_in: file.dims.cell_in,
        ue_in: file.dims.ue_in,
    };
    let mut params = GnnParams::zeros(dims);
    let mut seen = 0usize;
    let mut fill_err: Option<Error> = None;
    params.for_each_mut(|name, arr| {
        if fill_err.is_some() {
            return;
        }
        let Some(rows) = file.params.get(&name) else {
            fill_err = Some(Error::malformed(path, format!("missing parameter array {name}")));
            return;
        };
        seen += 1;
        let (r, c) = arr.dim();
        if rows.len() != r || rows.iter().any(|row| row.len() != c) {
            fill_err = Some(Error::malformed(
                path,
                format!("parameter array {name} does not match the {r}x{c} dims header"),
            ));
            return;
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                arr[(i, j)] = v;
            }
        }
    });
    if let Some(e) = fill_err {
        return Err(e);
    }
    if seen != file.params.len() {
        return Err(Error::malformed(path, "checkpoint carries unknown parameter arrays"));
    }
    Ok(Model {
        params,
        norm: file.norm,
        reward: file.reward,
        defense: file.defense,
    })
}
