//! `cmlab`: scenario generation, policy training, robust fine-tuning,
//! attacks, and experiment sweeps over simulated RAN deployments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/run error.

mod overlay;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use cm_core::attack::{AttackConfig, AttackMode, Surface};
use cm_core::checkpoint::{load_checkpoint, save_checkpoint};
use cm_core::defense::{finetune, DefenseConfig, DefenseKind};
use cm_core::eval::{run_experiment, ExperimentPlan, GridCell};
use cm_core::gnn::GnnDims;
use cm_core::rl::{train, TrainConfig};
use cm_core::sim::{
    generate_deployment, load_scenario, save_scenario, RewardConfig, Scenario, ScenarioConfig,
};

use overlay::FileConfig;

#[derive(Parser)]
#[command(name = "cmlab", version, about = "Connection-management robustness lab")]
struct Cli {
    /// Base seed; overrides the per-command default.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// TOML file overriding built-in defaults (sections: gen, train,
    /// defense, attack).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Gnn,
    Maxrsrp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SurfaceArg {
    Digital,
    Physical,
    Patch,
}

impl From<SurfaceArg> for Surface {
    fn from(s: SurfaceArg) -> Surface {
        match s {
            SurfaceArg::Digital => Surface::Digital,
            SurfaceArg::Physical => Surface::Physical,
            SurfaceArg::Patch => Surface::Patch,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Whitebox,
    Blackbox,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Adversarial,
    Regularized,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenario files.
    Gen {
        #[arg(long, default_value_t = 5)]
        scenarios: usize,
        #[arg(long, default_value_t = 6)]
        cells: usize,
        #[arg(long, default_value_t = 50)]
        ues: usize,
        #[arg(long, default_value_t = 2)]
        macros: usize,
    },
    /// Train a policy over a scenario directory.
    Train {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Fine-tune a trained policy with a defense.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Benign evaluation of a policy.
    Eval {
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        scenarios: PathBuf,
    },
    /// Run one attack setting over the suite.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, value_enum)]
        surface: SurfaceArg,
        /// PNR budget in dB (physical/patch surfaces).
        #[arg(long)]
        pnr: Option<f64>,
        /// Normalized feature budget (digital surface).
        #[arg(long)]
        eps: Option<f64>,
        /// Patch width in UEs (patch surface).
        #[arg(long, default_value_t = 10)]
        width: usize,
        #[arg(long, value_enum, default_value = "whitebox")]
        mode: ModeArg,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Full degradation/recovery sweep (uniform-noise baseline included).
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        adversarial: Option<PathBuf>,
        #[arg(long)]
        regularized: Option<PathBuf>,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
}

fn load_suite(dir: &Path) -> anyhow::Result<Vec<Scenario>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading scenario directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "toml")
                && p.file_name().is_some_and(|n| n != "manifest.toml")
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no scenario files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| load_scenario(p).map_err(Into::into))
        .collect()
}

fn write_manifest(out: &Path, command: &str, config: toml::Value) -> anyhow::Result<()> {
    let manifest = toml::toml! {
        tool = "cmlab"
        version = (env!("CARGO_PKG_VERSION"))
        command = (command)
    };
    let mut root = manifest;
    root.insert("config".into(), toml::Value::Table(
        config.as_table().cloned().unwrap_or_default(),
    ));
    std::fs::write(out.join("manifest.toml"), toml::to_string(&root)?)?;
    Ok(())
}

fn benign_plan(seed: u64) -> ExperimentPlan {
    ExperimentPlan { seeds: vec![seed], ..Default::default() }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    std::fs::create_dir_all(&cli.out)?;
    let file_cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    match cli.command {
        Command::Gen { scenarios, cells, ues, macros } => {
            let base_seed = cli.seed.unwrap_or(0);
            let mut manifest = toml::map::Map::new();
            for i in 0..scenarios {
                let mut cfg = ScenarioConfig {
                    seed: base_seed + i as u64,
                    n_cells: cells,
                    n_ues: ues,
                    macro_count: macros,
                    ..Default::default()
                };
                file_cfg.apply_gen(&mut cfg);
                let scenario = generate_deployment(&cfg)?;
                let path = cli.out.join(format!("{}.toml", scenario.name));
                save_scenario(&scenario, &path)?;
                println!("wrote {}", path.display());
                if i == 0 {
                    manifest.insert("scenario0".into(), toml::Value::try_from(&cfg)?);
                }
            }
            manifest.insert("count".into(), (scenarios as i64).into());
            write_manifest(&cli.out, "gen", toml::Value::Table(manifest))?;
        }

        Command::Train { scenarios, episodes } => {
            let suite = load_suite(&scenarios)?;
            let mut cfg = TrainConfig {
                seed: cli.seed.unwrap_or(0),
                ..Default::default()
            };
            let mut reward = RewardConfig::default();
            file_cfg.apply_train(&mut cfg, &mut reward);
            if let Some(e) = episodes {
                cfg.episodes = e;
                cfg.eps_decay_episodes = e / 2;
            }
            let (model, log) = train(&suite, GnnDims::default(), reward, &cfg)?;
            save_checkpoint(&model, &cli.out.join("model.ckpt"))?;
            log.write_csv(&cli.out.join("training_log.csv"))?;
            write_manifest(&cli.out, "train", overlay::train_manifest(&cfg)?)?;
            println!(
                "trained {} episodes; final eval coverage {:.4e} bits/s",
                cfg.episodes,
                log.rows.last().map_or(f64::NAN, |r| r.eval_coverage)
            );
        }

        Command::Finetune { model, scenarios, kind, episodes } => {
            let suite = load_suite(&scenarios)?;
            let base = load_checkpoint(&model)?;
            let mut cfg = DefenseConfig::new(match kind {
                KindArg::Adversarial => DefenseKind::Adversarial,
                KindArg::Regularized => DefenseKind::Regularized,
            });
            cfg.seed = cli.seed.unwrap_or(0);
            let mut train_cfg = TrainConfig::default();
            let mut reward = base.reward.clone();
            file_cfg.apply_train(&mut train_cfg, &mut reward);
            file_cfg.apply_defense(&mut cfg);
            if let Some(e) = episodes {
                cfg.finetune_episodes = e;
            }
            let (defended, log) = finetune(&base, &suite, &cfg, &train_cfg)?;
            let name = format!("{}.ckpt", cfg.kind.label());
            save_checkpoint(&defended, &cli.out.join(&name))?;
            log.write_csv(&cli.out.join(format!("{}_log.csv", cfg.kind.label())))?;
            write_manifest(&cli.out, "finetune", toml::Value::try_from(&cfg)?)?;
            println!("wrote {}", cli.out.join(&name).display());
        }

        Command::Eval { policy, model, scenarios } => {
            let suite = load_suite(&scenarios)?;
            let mut models = BTreeMap::new();
            if policy == PolicyArg::Gnn {
                let path = model.context("--policy gnn needs --model")?;
                models.insert("none".to_string(), load_checkpoint(&path)?);
            }
            let plan = benign_plan(cli.seed.unwrap_or(0));
            let rows = run_experiment(&plan, &suite, &models, Some(&cli.out))?;
            write_manifest(&cli.out, "eval", toml::Value::Table(Default::default()))?;
            for row in rows.iter().filter(|r| r.scenario == "all") {
                println!(
                    "{}/{}: coverage {:.4e} capacity {:.4e}",
                    row.policy, row.defense, row.coverage, row.capacity
                );
            }
        }

        Command::Attack { model, scenarios, surface, pnr, eps, width, mode, steps } => {
            let suite = load_suite(&scenarios)?;
            let victim = load_checkpoint(&model)?;
            let surface: Surface = surface.into();
            let budget = match surface {
                Surface::Digital => eps.context("digital attacks need --eps")?,
                _ => pnr.context("physical/patch attacks need --pnr")?,
            };
            let mut probe = AttackConfig::new(surface, budget, cm_core::attack::TargetSpec::WorstAction);
            file_cfg.apply_attack(&mut probe);
            if let Some(s) = steps {
                probe.steps = s;
            }
            let mut plan = ExperimentPlan {
                seeds: vec![cli.seed.unwrap_or(0)],
                grid: vec![GridCell {
                    surface,
                    mode: match mode {
                        ModeArg::Whitebox => AttackMode::Whitebox,
                        ModeArg::Blackbox => AttackMode::Blackbox,
                    },
                    budget,
                    patch_width: width,
                }],
                ..Default::default()
            };
            plan.pgd_steps = probe.steps;
            plan.pgd_restarts = probe.restarts;
            let mut models = BTreeMap::new();
            let label = victim
                .defense
                .as_ref()
                .map_or("none".to_string(), |d| d.kind.label().to_string());
            models.insert(label, victim);
            let rows = run_experiment(&plan, &suite, &models, Some(&cli.out))?;
            write_manifest(&cli.out, "attack", toml::Value::Table(Default::default()))?;
            for row in rows.iter().filter(|r| r.scenario == "all" && r.surface != "none") {
                println!(
                    "{} budget {}: coverage {:.4e} (benign {:.4e})",
                    row.surface,
                    row.budget,
                    row.coverage,
                    rows.iter()
                        .find(|b| b.scenario == "all" && b.surface == "none" && b.policy == "gnn")
                        .map_or(f64::NAN, |b| b.coverage)
                );
            }
        }

        Command::Sweep { model, adversarial, regularized, scenarios, seeds } => {
            let suite = load_suite(&scenarios)?;
            let mut models = BTreeMap::new();
            models.insert("none".to_string(), load_checkpoint(&model)?);
            if let Some(p) = adversarial {
                models.insert("adversarial".to_string(), load_checkpoint(&p)?);
            }
            if let Some(p) = regularized {
                models.insert("regularized".to_string(), load_checkpoint(&p)?);
            }
            let pnr_grid: Vec<f64> = (0..8).map(|i| 3.0 * i as f64).collect();
            let mut grid = Vec::new();
            for &pnr in &pnr_grid {
                grid.push(GridCell {
                    surface: Surface::Physical,
                    mode: AttackMode::Whitebox,
                    budget: pnr,
                    patch_width: 0,
                });
                grid.push(GridCell {
                    surface: Surface::Physical,
                    mode: AttackMode::Blackbox,
                    budget: pnr,
                    patch_width: 0,
                });
            }
            for eps in [0.0, 0.008, 0.016, 0.032, 0.064, 0.128] {
                grid.push(GridCell {
                    surface: Surface::Digital,
                    mode: AttackMode::Whitebox,
                    budget: eps,
                    patch_width: 0,
                });
            }
            for width in [5, 10, 20, 30, 40, 50] {
                grid.push(GridCell {
                    surface: Surface::Patch,
                    mode: AttackMode::Whitebox,
                    budget: 20.0,
                    patch_width: width,
                });
            }
            let seeds = if let Some(s) = cli.seed { vec![s] } else { seeds };
            let plan = ExperimentPlan {
                seeds,
                grid,
                noise_pnrs: pnr_grid,
                ..Default::default()
            };
            let rows = run_experiment(&plan, &suite, &models, Some(&cli.out))?;
            write_manifest(&cli.out, "sweep", toml::Value::Table(Default::default()))?;
            println!("wrote {} rows to {}", rows.len(), cli.out.join("metrics.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not usage errors.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
