//! Scratch: coverage of hand policies on a suite, to calibrate the reward.
use cm_core::eval::coverage_rate;
use cm_core::sim::*;
use std::path::Path;

fn pooled_coverage(suite: &[Scenario], mut pick: impl FnMut(&Scenario, &GraphState, &[Action]) -> Action) -> (f64, f64) {
    let mut rates = Vec::new();
    let mut cap = 0.0;
    for s in suite {
        let mut g = initial_graph(s);
        while !g.is_terminal() {
            let actions = valid_actions(&g, &s.rsrp).unwrap();
            let a = pick(s, &g, &actions);
            g = apply_action(&g, &s.rsrp, a).unwrap();
        }
        rates.extend(per_ue_rates(&g, &s.rsrp, &s.channel));
        cap += network_throughput(&g, &s.rsrp, &s.channel);
    }
    (coverage_rate(&rates).unwrap(), cap)
}

fn main() {
    let dir = Path::new("/tmp/suite");
    let mut suite = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") && p.file_name().is_some_and(|n| n != "manifest.toml") {
            suite.push(load_scenario(&p).unwrap());
        }
    }
    println!("suite: {} scenarios", suite.len());

    let (cov, cap) = pooled_coverage(&suite, |s, _, acts| {
        *acts.iter().max_by(|a, b| s.rsrp.dbm[(a.cell_id, a.ue_id)].partial_cmp(&s.rsrp.dbm[(b.cell_id, b.ue_id)]).unwrap()).unwrap()
    });
    println!("maxRSRP:          cov {cov:.4e} cap {cap:.4e}");

    for lambda in [0.0, 0.2, 1.0, 5.0, 20.0] {
        let rc = RewardConfig { lambda };
        let (cov, cap) = pooled_coverage(&suite, |s, g, acts| {
            *acts.iter().max_by(|a, b| {
                let ra = reward(g, &apply_action(g, &s.rsrp, **a).unwrap(), &s.rsrp, &s.channel, &rc);
                let rb = reward(g, &apply_action(g, &s.rsrp, **b).unwrap(), &s.rsrp, &s.channel, &rc);
                ra.partial_cmp(&rb).unwrap()
            }).unwrap()
        });
        println!("reward-greedy l={lambda}: cov {cov:.4e} cap {cap:.4e}");
    }


    // Fairness over served rates instead of capacities.
    for lambda in [0.2, 0.5, 1.0, 2.0, 5.0] {
        let (cov, cap) = pooled_coverage(&suite, |s, g, acts| {
            *acts.iter().max_by(|a, b| {
                let score = |act: &Action| {
                    let next = apply_action(g, &s.rsrp, *act).unwrap();
                    let du = network_throughput(&next, &s.rsrp, &s.channel) - network_throughput(g, &s.rsrp, &s.channel);
                    let (_, rate) = capacity_and_rate(&s.rsrp, &next.a_u, &s.channel);
                    let mut fairness = 0.0;
                    for i in 0..s.n_cells {
                        let min = (0..s.n_ues)
                            .filter(|&u| next.a_u[(i, u)] != 0.0)
                            .map(|u| rate[(i, u)])
                            .fold(f64::INFINITY, f64::min);
                        if min.is_finite() { fairness += min; }
                    }
                    du + lambda / s.n_cells as f64 * fairness
                };
                score(a).partial_cmp(&score(b)).unwrap()
            }).unwrap()
        });
        println!("rate-min greedy l={lambda}: cov {cov:.4e} cap {cap:.4e}");
    }
    println!();
    let (cov, cap) = pooled_coverage(&suite, |_, g, acts| {
        let loads = g.cell_loads();
        *acts.iter().min_by_key(|a| loads[a.cell_id]).unwrap()
    });
    println!("least-loaded:     cov {cov:.4e} cap {cap:.4e}");


    // Demand-capped throughput: served rate = min(demand, equal share).
    for demand in [5e7, 1e8, 1.5e8, 2e8, 4e8] {
        for lambda in [0.0, 0.2] {
            let (cov, cap) = pooled_coverage(&suite, |s, g, acts| {
                *acts.iter().max_by(|a, b| {
                    let score = |act: &Action| {
                        let next = apply_action(g, &s.rsrp, *act).unwrap();
                        let (c, _) = capacity_and_rate(&s.rsrp, &next.a_u, &s.channel);
                        let capped_u = |st: &GraphState| {
                            let loads = st.cell_loads();
                            let mut u = 0.0;
                            for ((i, j), &v) in st.a_u.indexed_iter() {
                                if v != 0.0 {
                                    u += (c[(i, j)] / loads[i].max(1) as f64).min(demand);
                                }
                            }
                            u
                        };
                        let du = capped_u(&next) - capped_u(g);
                        let mut fairness = 0.0;
                        for i in 0..s.n_cells {
                            let min = (0..s.n_ues)
                                .filter(|&u| next.a_u[(i, u)] != 0.0)
                                .map(|u| capacity_bps(s.rsrp.dbm[(i, u)], s.channel.noise_floor, s.channel.bandwidth))
                                .fold(f64::INFINITY, f64::min);
                            if min.is_finite() { fairness += min; }
                        }
                        du + lambda / s.n_cells as f64 * fairness
                    };
                    score(a).partial_cmp(&score(b)).unwrap()
                }).unwrap()
            });
            println!("capped d={demand:.1e} l={lambda}: cov {cov:.4e} cap {cap:.4e}");
        }
    }
    // Max served-rate after placement (c/load with the new edge).
    let (cov, cap) = pooled_coverage(&suite, |s, g, acts| {
        let loads = g.cell_loads();
        *acts.iter().max_by(|a, b| {
            let ra = capacity_bps(s.rsrp.dbm[(a.cell_id, a.ue_id)], s.channel.noise_floor, s.channel.bandwidth) / (loads[a.cell_id] + 1) as f64;
            let rb = capacity_bps(s.rsrp.dbm[(b.cell_id, b.ue_id)], s.channel.noise_floor, s.channel.bandwidth) / (loads[b.cell_id] + 1) as f64;
            ra.partial_cmp(&rb).unwrap()
        }).unwrap()
    });
    println!("max-own-rate:     cov {cov:.4e} cap {cap:.4e}");
}
