//! The `sweep' subcommand: named Monte-Carlo experiment presets, desk-scale
//! and full-scale, written as one CSV row per (config, method).

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use sidemat::harness::{run_experiment, Method, Regime, ScenarioConfig};
use sidemat::simgen::{corner_alphas, renormalize, sweep_grid_alpha, sweep_grid_rank, DgpConfig};

use crate::CliError;

#[derive(Args)]
pub struct SweepArgs {
    /// Preset name; see `--preset help` for the list.
    #[arg(long)]
    pub preset: String,

    /// Replications per grid point (defaults to the preset's).
    #[arg(long)]
    pub reps: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for the replication queue.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,

    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

struct Preset {
    scenarios: Vec<ScenarioConfig>,
    methods: Vec<Method>,
    default_reps: usize,
}

const FULL_METHODS: [Method; 5] = [
    Method::Ours,
    Method::NuclearNorm,
    Method::DoubleProjection,
    Method::SpectralOracle,
    Method::SpectralEstimated,
];
const MAR_METHODS: [Method; 3] = [Method::Ours, Method::NuclearNorm, Method::DoubleProjection];
const MNAR_METHODS: [Method; 2] = [Method::Ours, Method::MnarSpectral];

const PRESET_HELP: &str = "available presets: alpha-full-desk, mar-desk, mnar-desk, rank-desk, \
alpha-full, mar-full, mnar-full, rank-full";

fn alpha_scenarios(n: usize, t: usize, regime: Regime, grid: &[(String, [f64; 4])]) -> Vec<ScenarioConfig> {
    grid.iter()
        .map(|(id, alphas)| ScenarioConfig {
            id: id.clone(),
            dgp: DgpConfig::alpha_study(n, t, *alphas, 0),
            regime,
            sieve_j: 5,
        })
        .collect()
}

fn corner_grid() -> Vec<(String, [f64; 4])> {
    corner_alphas()
        .into_iter()
        .map(|(name, a)| (name.to_string(), a))
        .collect()
}

fn full_alpha_grid() -> Vec<(String, [f64; 4])> {
    let mut grid: Vec<(String, [f64; 4])> = sweep_grid_alpha(0.11)
        .into_iter()
        .map(|a| (format!("a1={:.2}_a4={:.2}", a[0], a[3]), a))
        .collect();
    // the footnote anchor corners, renormalized
    grid.push(("a1-heavy".to_string(), renormalize([1.0, 0.01, 0.01, 0.01])));
    grid.push(("a4-heavy".to_string(), renormalize([0.01, 0.01, 0.01, 1.0])));
    grid
}

fn rank_scenarios(n: usize, t: usize, ranks: &[[usize; 4]], reps_id: &str) -> Vec<ScenarioConfig> {
    ranks
        .iter()
        .map(|k| ScenarioConfig {
            id: format!("{reps_id}k1={}_k2={}_k3={}_k4={}", k[0], k[1], k[2], k[3]),
            dgp: DgpConfig::rank_study(n, t, *k, 0),
            regime: Regime::Full,
            sieve_j: 4,
        })
        .collect()
}

fn build_preset(name: &str) -> Result<Preset, CliError> {
    let preset = match name {
        "alpha-full-desk" => Preset {
            scenarios: alpha_scenarios(120, 120, Regime::Full, &corner_grid()),
            methods: FULL_METHODS.to_vec(),
            default_reps: 20,
        },
        "mar-desk" => Preset {
            scenarios: alpha_scenarios(120, 120, Regime::Mar { p: 0.6 }, &corner_grid()),
            methods: MAR_METHODS.to_vec(),
            default_reps: 20,
        },
        "mnar-desk" => Preset {
            scenarios: alpha_scenarios(
                200,
                200,
                Regime::Mnar { n0: 100, t0: 100 },
                &[
                    ("a1-heavy".to_string(), renormalize([1.0, 0.01, 0.01, 0.01])),
                    ("a4-heavy".to_string(), renormalize([0.01, 0.01, 0.01, 1.0])),
                ],
            ),
            methods: MNAR_METHODS.to_vec(),
            default_reps: 20,
        },
        "rank-desk" => Preset {
            scenarios: rank_scenarios(
                120,
                120,
                &[[12, 1, 1, 1], [1, 6, 6, 2], [1, 1, 1, 12], [5, 4, 3, 3]],
                "",
            ),
            methods: FULL_METHODS.to_vec(),
            default_reps: 20,
        },
        "alpha-full" => Preset {
            scenarios: alpha_scenarios(200, 200, Regime::Full, &full_alpha_grid()),
            methods: FULL_METHODS.to_vec(),
            default_reps: 100,
        },
        "mar-full" => Preset {
            scenarios: alpha_scenarios(400, 400, Regime::Mar { p: 0.6 }, &full_alpha_grid()),
            methods: MAR_METHODS.to_vec(),
            default_reps: 100,
        },
        "mnar-full" => Preset {
            scenarios: alpha_scenarios(
                400,
                400,
                Regime::Mnar { n0: 200, t0: 200 },
                &full_alpha_grid(),
            ),
            methods: MNAR_METHODS.to_vec(),
            default_reps: 100,
        },
        "rank-full" => Preset {
            scenarios: rank_scenarios(200, 200, &sweep_grid_rank(), ""),
            methods: FULL_METHODS.to_vec(),
            default_reps: 100,
        },
        other => {
            return Err(CliError::Validation(format!(
                "unknown preset {other:?}; {PRESET_HELP}"
            )))
        }
    };
    Ok(preset)
}

pub fn run(args: &SweepArgs) -> Result<(), CliError> {
    if args.jobs == 0 {
        return Err(CliError::Validation("--jobs must be >= 1".to_string()));
    }
    let preset = build_preset(&args.preset)?;
    let reps = args.reps.unwrap_or(preset.default_reps);
    if reps == 0 {
        return Err(CliError::Validation("--reps must be >= 1".to_string()));
    }
    for s in &preset.scenarios {
        s.dgp
            .validate()
            .map_err(|e| CliError::Validation(format!("{}: {e}", s.id)))?;
    }

    let records = run_experiment(&preset.scenarios, &preset.methods, reps, args.seed, args.jobs)?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.out_dir.display())))?;

    let mut csv = String::from(
        "config,n,t,regime,variant,alpha1,alpha2,alpha3,alpha4,k1,k2,k3,k4,noise_sd,method,amse,reps,failures,runtime_per_rep_secs,seed\n",
    );
    let scenario_of = |id: &str| preset.scenarios.iter().find(|s| s.id == id).unwrap();
    for rec in &records {
        let s = scenario_of(&rec.config_id);
        let regime = match s.regime {
            Regime::Full => "full".to_string(),
            Regime::Mar { p } => format!("mar(p={p})"),
            Regime::Mnar { n0, t0 } => format!("mnar(n0={n0};t0={t0})"),
        };
        let a = s.dgp.alphas;
        let k = s.dgp.ranks;
        let _ = writeln!(
            csv,
            "{},{},{},{},{:?},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{},{},{},{},{:.4},{}",
            rec.config_id,
            s.dgp.n,
            s.dgp.t,
            regime,
            s.dgp.variant,
            a[0],
            a[1],
            a[2],
            a[3],
            k[0],
            k[1],
            k[2],
            k[3],
            s.dgp.noise_sd,
            rec.method,
            crate::io::format_g10(rec.amse),
            rec.per_rep_mse.len(),
            rec.failures,
            rec.runtime_per_rep,
            rec.seed_base,
        );
    }
    let path = args.out_dir.join("results.csv");
    std::fs::write(&path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    println!(
        "wrote {} rows to {}",
        records.len(),
        path.display()
    );
    Ok(())
}
