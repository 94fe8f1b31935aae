//! Monte-Carlo experiment runner: error metrics, scenario/method dispatch,
//! and deterministic replication-parallel execution.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::baselines;
use crate::estimate::{
    estimate_full_projected, estimate_mar, estimate_mnar, MarConfig, PenaltyScale, PenaltySpec,
    RankChoice,
};
use crate::mask::{BlockShape, MaskPattern, ObservationMask};
use crate::sieve::{build_design, projector, Projector, SieveSpec};
use crate::simgen::{self, streams, DgpConfig, SimulatedPanel};
use crate::{Error, Matrix, Result};

/// Mean squared entrywise error over a target cell set (`None` = all cells).
pub fn amse(estimate: &Matrix, truth: &Matrix, target: Option<&ObservationMask>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "estimate is {:?} but truth is {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    match target {
        None => {
            let diff = estimate - truth;
            Ok(diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64)
        }
        Some(mask) => {
            mask.check_shape(truth)?;
            let mut total = 0.0;
            let mut count = 0usize;
            for i in 0..truth.nrows() {
                for j in 0..truth.ncols() {
                    if mask.observed(i, j) {
                        let d = estimate[(i, j)] - truth[(i, j)];
                        total += d * d;
                        count += 1;
                    }
                }
            }
            if count == 0 {
                return Err(Error::Degenerate("empty target cell set".to_string()));
            }
            Ok(total / count as f64)
        }
    }
}

/// Aggregate targets over the missing block: squared errors of the per-column
/// averages (averaged over missing columns), and the squared error of the
/// grand mean of the block.
pub fn averaged_targets(
    estimate: &Matrix,
    truth: &Matrix,
    shape: &BlockShape,
) -> Result<(f64, f64)> {
    if estimate.shape() != truth.shape() {
        return Err(Error::Dimension("shape mismatch".to_string()));
    }
    if estimate.nrows() != shape.n || estimate.ncols() != shape.t {
        return Err(Error::Dimension(
            "block shape does not match the matrices".to_string(),
        ));
    }
    let rows = shape.n0..shape.n;
    let mut per_year_sum = 0.0;
    let mut grand_est = 0.0;
    let mut grand_truth = 0.0;
    let n_rows = (shape.n - shape.n0) as f64;
    for t in shape.t0..shape.t {
        let mut col_est = 0.0;
        let mut col_truth = 0.0;
        for i in rows.clone() {
            col_est += estimate[(i, t)];
            col_truth += truth[(i, t)];
        }
        grand_est += col_est;
        grand_truth += col_truth;
        per_year_sum += (col_est / n_rows - col_truth / n_rows).powi(2);
    }
    let n_cols = (shape.t - shape.t0) as f64;
    let cells = n_rows * n_cols;
    let per_year = per_year_sum / n_cols;
    let overall = (grand_est / cells - grand_truth / cells).powi(2);
    Ok((per_year, overall))
}

/// `(AMSE_other - AMSE_ours) / AMSE_ours`.
pub fn relative_improvement(amse_other: f64, amse_ours: f64) -> f64 {
    (amse_other - amse_ours) / amse_ours
}

/// Observation regime of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// Fully observed; errors scored on all cells.
    Full,
    /// I.i.d. Bernoulli observation; errors scored on all cells.
    Mar { p: f64 },
    /// Block-missing; errors scored on the missing block.
    Mnar { n0: usize, t0: usize },
}

/// Estimators the runner knows how to dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// The side-information estimator matching the regime.
    Ours,
    DoubleProjection,
    NuclearNorm,
    SpectralOracle,
    SpectralEstimated,
    MnarSpectral,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::DoubleProjection => "double_projection",
            Method::NuclearNorm => "nuclear_norm",
            Method::SpectralOracle => "spectral_oracle",
            Method::SpectralEstimated => "spectral_estimated",
            Method::MnarSpectral => "mnar_spectral",
        }
    }

    pub fn applies_to(&self, regime: &Regime) -> bool {
        matches!(
            (self, regime),
            (Method::Ours, _)
                | (Method::DoubleProjection, Regime::Full | Regime::Mar { .. })
                | (Method::NuclearNorm, Regime::Full | Regime::Mar { .. })
                | (Method::SpectralOracle | Method::SpectralEstimated, Regime::Full)
                | (Method::MnarSpectral, Regime::Mnar { .. })
        )
    }
}

/// One grid point of an experiment: a data-generating config, an observation
/// regime, and the sieve degree used for estimation.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub id: String,
    pub dgp: DgpConfig,
    pub regime: Regime,
    pub sieve_j: usize,
}

/// Result row for one (scenario, method) pair.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub config_id: String,
    pub method: &'static str,
    /// Per-replication MSE; `None` marks a failed replication.
    pub per_rep_mse: Vec<Option<f64>>,
    /// Mean over successful replications.
    pub amse: f64,
    pub failures: usize,
    /// Mean wall-clock seconds per replication for this method.
    pub runtime_per_rep: f64,
    pub seed_base: u64,
}

struct RepOutcome {
    config_index: usize,
    rep_index: usize,
    results: Vec<(Method, std::result::Result<f64, String>, Duration)>,
}

/// Run every applicable (scenario, method) pair over `reps` independent
/// panels. Replication seeds derive from `(seed, config_index, rep_index)`,
/// so records do not depend on `jobs` and grids can be re-run piecewise.
pub fn run_experiment(
    scenarios: &[ScenarioConfig],
    methods: &[Method],
    reps: usize,
    seed: u64,
    jobs: usize,
) -> Result<Vec<ExperimentRecord>> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".to_string()));
    }
    let pairs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();

    let worker = |&(config_index, rep_index): &(usize, usize)| -> RepOutcome {
        let scenario = &scenarios[config_index];
        let rep_seed = simgen::mix_seed(seed, config_index as u64, rep_index as u64);
        let mut results = Vec::new();
        match prepare_rep(scenario, rep_seed) {
            Ok(prep) => {
                for method in methods {
                    if !method.applies_to(&scenario.regime) {
                        continue;
                    }
                    let start = Instant::now();
                    let outcome = evaluate_method(scenario, &prep, *method)
                        .map_err(|e| e.to_string());
                    results.push((*method, outcome, start.elapsed()));
                }
            }
            Err(e) => {
                // panel or projector construction failed: every method fails
                for method in methods {
                    if method.applies_to(&scenario.regime) {
                        results.push((*method, Err(e.to_string()), Duration::ZERO));
                    }
                }
            }
        }
        RepOutcome {
            config_index,
            rep_index,
            results,
        }
    };

    let outcomes: Vec<RepOutcome> = if jobs <= 1 {
        pairs.iter().map(worker).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| pairs.par_iter().map(worker).collect())
    };

    // aggregate keyed by (config, method); order of outcomes is irrelevant
    let mut records: Vec<ExperimentRecord> = Vec::new();
    for scenario in scenarios.iter() {
        for method in methods {
            if !method.applies_to(&scenario.regime) {
                continue;
            }
            records.push(ExperimentRecord {
                config_id: scenario.id.clone(),
                method: method.name(),
                per_rep_mse: vec![None; reps],
                amse: f64::NAN,
                failures: 0,
                runtime_per_rep: 0.0,
                seed_base: seed,
            });
        }
    }
    let row_of = |config_index: usize, method: Method| -> usize {
        let mut row = 0;
        for (ci, scenario) in scenarios.iter().enumerate() {
            for m in methods.iter().filter(|m| m.applies_to(&scenario.regime)) {
                if ci == config_index && *m == method {
                    return row;
                }
                row += 1;
            }
        }
        unreachable!("method not registered for scenario")
    };
    for outcome in outcomes {
        for (method, result, elapsed) in outcome.results {
            let row = &mut records[row_of(outcome.config_index, method)];
            row.runtime_per_rep += elapsed.as_secs_f64();
            match result {
                Ok(mse) => row.per_rep_mse[outcome.rep_index] = Some(mse),
                Err(_) => row.failures += 1,
            }
        }
    }
    for row in &mut records {
        let successes: Vec<f64> = row.per_rep_mse.iter().flatten().copied().collect();
        row.amse = if successes.is_empty() {
            f64::NAN
        } else {
            successes.iter().sum::<f64>() / successes.len() as f64
        };
        row.runtime_per_rep /= reps as f64;
    }
    Ok(records)
}

/// Everything shared by the methods within one replication.
struct PreparedRep {
    panel: SimulatedPanel,
    mask: Option<ObservationMask>,
    px: Projector,
    pz: Projector,
    target: Option<ObservationMask>,
}

fn prepare_rep(scenario: &ScenarioConfig, rep_seed: u64) -> Result<PreparedRep> {
    let dgp = scenario.dgp.clone().with_seed(rep_seed);
    let panel = simgen::gen_panel(&dgp)?;
    let spec = SieveSpec::polynomial(scenario.sieve_j);
    let px = projector(&build_design(&panel.x, &spec)?)?;
    let pz = projector(&build_design(&panel.z, &spec)?)?;
    let (mask, target) = match scenario.regime {
        Regime::Full => (None, None),
        Regime::Mar { p } => {
            let mut rng = simgen::stream_rng(rep_seed, streams::MASK);
            (Some(simgen::gen_mask_mar(dgp.n, dgp.t, p, &mut rng)?), None)
        }
        Regime::Mnar { n0, t0 } => {
            let shape = BlockShape::new(dgp.n, dgp.t, n0, t0)?;
            // score on the missing block
            let mut flags = vec![false; dgp.n * dgp.t];
            for i in n0..dgp.n {
                for j in t0..dgp.t {
                    flags[i * dgp.t + j] = true;
                }
            }
            let target = ObservationMask::from_flags(dgp.n, dgp.t, flags, MaskPattern::Block)?;
            (Some(shape.mask()), Some(target))
        }
    };
    Ok(PreparedRep {
        panel,
        mask,
        px,
        pz,
        target,
    })
}

fn evaluate_method(scenario: &ScenarioConfig, prep: &PreparedRep, method: Method) -> Result<f64> {
    let panel = &prep.panel;
    let truth = &panel.m;
    let spec = SieveSpec::polynomial(scenario.sieve_j);
    let estimate: Matrix = match (&scenario.regime, method) {
        (Regime::Full, Method::Ours) => {
            estimate_full_projected(&panel.y, &prep.px, &prep.pz, &PenaltySpec::default())?.m_hat
        }
        (Regime::Full, Method::DoubleProjection) => {
            baselines::double_projection(&panel.y, &prep.px, &prep.pz)?
        }
        (Regime::Full, Method::NuclearNorm) => {
            let nu = baselines::nuclear_norm_auto_penalty(&panel.y, &prep.px, &prep.pz, 2.0)?;
            baselines::nuclear_norm_full(&panel.y, nu)?
        }
        (Regime::Full, Method::SpectralOracle) => {
            baselines::spectral_oracle(&panel.y, scenario.dgp.total_rank())?
        }
        (Regime::Full, Method::SpectralEstimated) => {
            baselines::spectral_estimated_default(&panel.y)?.0
        }
        (Regime::Mar { p }, Method::Ours) => {
            let mask = prep.mask.as_ref().expect("mar regime has a mask");
            let cfg = MarConfig::default().with_known_p(*p);
            estimate_mar(&panel.y, mask, &panel.x, &panel.z, &spec, &spec, &cfg)?.m_hat
        }
        (Regime::Mar { p }, Method::DoubleProjection) => {
            let mask = prep.mask.as_ref().expect("mar regime has a mask");
            baselines::double_projection_mar(&panel.y, mask, *p, &prep.px, &prep.pz)?
        }
        (Regime::Mar { p }, Method::NuclearNorm) => {
            let mask = prep.mask.as_ref().expect("mar regime has a mask");
            // same noise rule as the main estimator, for an even-handed tuning
            let y_obs = mask.apply(&panel.y)?;
            let m1 = baselines::double_projection_mar(&panel.y, mask, *p, &prep.px, &prep.pz)?;
            let sigma = crate::estimate::sigma_mad_observed(&(&y_obs - &m1), mask)?;
            let (n, t) = panel.y.shape();
            let nu = 2.0 * sigma * p.sqrt() * ((n as f64).sqrt() + (t as f64).sqrt());
            let mut m_max = 0.0f64;
            for i in 0..n {
                for j in 0..t {
                    if mask.observed(i, j) {
                        m_max = m_max.max(y_obs[(i, j)].abs());
                    }
                }
            }
            baselines::nuclear_norm_mar(&panel.y, mask, nu, (3.0 * m_max).max(1.0), 1e-7, 2000)?
                .matrix
        }
        (Regime::Mnar { n0, t0 }, Method::Ours) => {
            let shape = BlockShape::new(panel.y.nrows(), panel.y.ncols(), *n0, *t0)?;
            estimate_mnar(
                &panel.y,
                &shape,
                &panel.x,
                &panel.z,
                &spec,
                &spec,
                RankChoice::Auto,
                &PenaltySpec::Auto(PenaltyScale::default()),
            )?
            .m_hat
        }
        (Regime::Mnar { n0, t0 }, Method::MnarSpectral) => {
            let shape = BlockShape::new(panel.y.nrows(), panel.y.ncols(), *n0, *t0)?;
            baselines::mnar_spectral(&panel.y, &shape, scenario.dgp.total_rank())?
        }
        (regime, method) => {
            return Err(Error::InvalidArgument(format!(
                "method {} does not apply to regime {regime:?}",
                method.name()
            )))
        }
    };
    amse(&estimate, truth, prep.target.as_ref())
}
