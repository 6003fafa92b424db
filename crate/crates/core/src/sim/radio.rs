//! Link-level formulas shared by the environment and the differentiable
//! processing chain.

use ndarray::Array2;

use super::types::{ChannelParams, RsrpMatrix};

const LN_10: f64 = std::f64::consts::LN_10;
const LN_2: f64 = std::f64::consts::LN_2;

/// Received power over a log-distance path-loss link, in dBm.
///
/// Distances below the 1 m reference are clamped to it.
pub fn rsrp_dbm(tx_power_dbm: f64, dist_m: f64, channel: &ChannelParams, shadow_db: f64) -> f64 {
    let d = dist_m.max(1.0);
    tx_power_dbm - (channel.pl0 + 10.0 * channel.n * d.log10()) + shadow_db
}

/// Shannon capacity of one link in bits/s; zero for unreported links.
pub fn capacity_bps(rsrp_dbm: f64, noise_floor_dbm: f64, bandwidth_hz: f64) -> f64 {
    if rsrp_dbm == f64::NEG_INFINITY {
        return 0.0;
    }
    let snr = 10f64.powf((rsrp_dbm - noise_floor_dbm) / 10.0);
    bandwidth_hz * (1.0 + snr).log2()
}

/// d(capacity)/d(RSRP dB); zero for unreported links.
pub fn capacity_grad_per_db(rsrp_dbm: f64, noise_floor_dbm: f64, bandwidth_hz: f64) -> f64 {
    if rsrp_dbm == f64::NEG_INFINITY {
        return 0.0;
    }
    let snr = 10f64.powf((rsrp_dbm - noise_floor_dbm) / 10.0);
    bandwidth_hz * (LN_10 / (10.0 * LN_2)) * snr / (1.0 + snr)
}

/// Per-cell connected-UE counts under an N x M assignment matrix.
pub fn cell_loads(a_u: &Array2<f64>) -> Vec<usize> {
    (0..a_u.nrows())
        .map(|i| a_u.row(i).iter().filter(|&&v| v != 0.0).count())
        .collect()
}

/// Capacity matrix C and served-rate matrix R for a given assignment.
///
/// R divides each row of C by that cell's connected-UE count; cells serving
/// nobody keep a divisor of one, so a hypothetical connection there would
/// receive the full link capacity.
pub fn capacity_and_rate(
    rsrp: &RsrpMatrix,
    a_u: &Array2<f64>,
    channel: &ChannelParams,
) -> (Array2<f64>, Array2<f64>) {
    let capacity = rsrp
        .dbm
        .mapv(|p| capacity_bps(p, channel.noise_floor, channel.bandwidth));
    let loads = cell_loads(a_u);
    let mut rate = capacity.clone();
    for (i, mut row) in rate.rows_mut().into_iter().enumerate() {
        let div = loads[i].max(1) as f64;
        row.mapv_inplace(|c| c / div);
    }
    (capacity, rate)
}
