//! The `estimate' subcommand: read a panel and its covariates, run the
//! estimator matching the observation pattern, write the imputed matrix and
//! a run report.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use sidemat::estimate::{
    estimate_full, estimate_mar, estimate_mnar, MMaxChoice, MarConfig, PenaltyScale,
    PenaltySource, PenaltySpec, ProbabilityChoice, RankChoice,
};
use sidemat::mask::{BlockShape, ObservationMask};
use sidemat::sieve::SieveSpec;
use sidemat::Matrix;

use crate::io::{read_mask, read_matrix, write_matrix};
use crate::report::RunReport;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Full,
    Mar,
    Mnar,
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Observation pattern of the panel.
    #[arg(long, value_enum)]
    pub mode: Mode,

    /// Outcome matrix CSV (N rows x T columns); missing cells empty or NaN.
    #[arg(long)]
    pub y: PathBuf,

    /// Row covariates CSV (N rows x d1 columns), no missing values.
    #[arg(long)]
    pub x: PathBuf,

    /// Column covariates CSV (T rows x d2 columns), no missing values.
    #[arg(long)]
    pub z: PathBuf,

    /// 0/1 observation mask CSV; inferred from missing cells of Y if absent.
    #[arg(long)]
    pub mask: Option<PathBuf>,

    /// Number of fully observed rows (mnar mode, canonical ordering).
    #[arg(long)]
    pub n0: Option<usize>,

    /// Number of fully observed columns (mnar mode, canonical ordering).
    #[arg(long)]
    pub t0: Option<usize>,

    /// File of 0-based treated row indices, one per line (mnar mode); rows
    /// are permuted so treated rows come last, and the permutation is
    /// recorded in the report.
    #[arg(long)]
    pub treated: Option<PathBuf>,

    /// File of 0-based post-period column indices, one per line (mnar mode).
    #[arg(long)]
    pub post: Option<PathBuf>,

    /// Singular-vector count for mnar recombination: "auto" or an integer.
    #[arg(long, default_value = "auto")]
    pub rank: String,

    /// Multiplier on all automatic penalties.
    #[arg(long, default_value_t = 2.0)]
    pub penalty_scale: f64,

    /// Observation probability for mar mode: "auto" or a number in (0, 1].
    #[arg(long, default_value = "auto")]
    pub p: String,

    /// Entrywise bound for the mar completion: "auto" or a positive number.
    #[arg(long, default_value = "auto")]
    pub m_max: String,

    /// Relative objective-change tolerance of the mar completion solver.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,

    /// Iteration cap of the mar completion solver.
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,

    /// Polynomial sieve degree J per covariate coordinate.
    #[arg(long, default_value_t = 5)]
    pub degree_j: usize,

    /// Recorded in the report; estimation itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory for m_hat.csv and report.txt.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

pub fn run(args: &EstimateArgs) -> Result<(), CliError> {
    let parsed_y = read_matrix(&args.y, true)?;
    let mut y = parsed_y.values;
    let (n, t) = y.shape();

    let x_parsed = read_matrix(&args.x, false)?;
    let z_parsed = read_matrix(&args.z, false)?;
    let mut x = x_parsed.values;
    let mut z = z_parsed.values;
    if x.nrows() != n {
        return Err(CliError::Validation(format!(
            "X has {} rows but Y has {n}",
            x.nrows()
        )));
    }
    if z.nrows() != t {
        return Err(CliError::Validation(format!(
            "Z has {} rows but Y has {t} columns",
            z.nrows()
        )));
    }

    // reject flags that would otherwise be silently ignored
    if args.mode != Mode::Mnar {
        if args.rank != "auto" {
            return Err(CliError::Validation(
                "--rank only applies to mnar mode".to_string(),
            ));
        }
        if args.n0.is_some() || args.t0.is_some() {
            return Err(CliError::Validation(
                "--n0/--t0 only apply to mnar mode".to_string(),
            ));
        }
    }
    if args.mode != Mode::Mar && (args.p != "auto" || args.m_max != "auto") {
        return Err(CliError::Validation(
            "--p/--m-max only apply to mar mode".to_string(),
        ));
    }

    let mut mask = match &args.mask {
        Some(path) => {
            let m = read_mask(path, n, t)?;
            if let Some(inferred) = &parsed_y.mask {
                for i in 0..n {
                    for j in 0..t {
                        if !inferred.observed(i, j) && m.observed(i, j) {
                            return Err(CliError::Validation(format!(
                                "cell ({},{}) is missing in Y but marked observed in the mask",
                                i + 1,
                                j + 1
                            )));
                        }
                    }
                }
            }
            m
        }
        None => parsed_y.mask.clone().unwrap_or_else(|| ObservationMask::full(n, t)),
    };

    let mut report = RunReport::new();
    report.section("run");
    report.entry("mode", format!("{:?}", args.mode).to_lowercase());
    report.entry("rows", n);
    report.entry("cols", t);
    report.entry("degree_j", args.degree_j);
    report.entry("penalty_scale", args.penalty_scale);
    report.entry("seed", args.seed);
    report.entry("observed_cells", mask.n_observed());

    let spec = SieveSpec::polynomial(args.degree_j);
    let scale = PenaltyScale::uniform(args.penalty_scale);

    report.section("designs");
    for (name, cov, rows) in [("x", &x, n), ("z", &z, t)] {
        let design = sidemat::sieve::build_design(cov, &spec)?;
        let (lo, hi) = sidemat::sieve::condition_diagnostic(&design, rows)?;
        report.entry(format!("{name}_width").as_str(), design.width());
        report.entry_f64(format!("{name}_gram_lambda_min").as_str(), lo);
        report.entry_f64(format!("{name}_gram_lambda_max").as_str(), hi);
        if lo < sidemat::sieve::CONDITION_FLOOR {
            report.entry(
                format!("{name}_conditioning_warning").as_str(),
                format!("lambda_min below {}", sidemat::sieve::CONDITION_FLOOR),
            );
        }
    }

    // row/column permutation from label files (mnar only)
    let mut row_perm: Option<Vec<usize>> = None;
    let mut col_perm: Option<Vec<usize>> = None;
    if args.mode == Mode::Mnar {
        if let Some(path) = &args.treated {
            let treated = read_index_file(path, n)?;
            let perm = canonical_permutation(n, &treated);
            y = permute_rows(&y, &perm);
            x = permute_rows(&x, &perm);
            mask = permute_mask(&mask, &perm, None)?;
            row_perm = Some(perm);
        }
        if let Some(path) = &args.post {
            let post = read_index_file(path, t)?;
            let perm = canonical_permutation(t, &post);
            y = permute_cols(&y, &perm);
            z = permute_rows(&z, &perm);
            mask = permute_mask(&mask, &[], Some(&perm))?;
            col_perm = Some(perm);
        }
    } else if args.treated.is_some() || args.post.is_some() {
        return Err(CliError::Validation(
            "--treated/--post labels only apply to mnar mode".to_string(),
        ));
    }

    let mut exit_nonconverged = false;
    match args.mode {
        Mode::Full => {
            if !mask.is_all_ones() {
                return Err(CliError::Validation(
                    "full mode requires a fully observed panel; found missing cells".to_string(),
                ));
            }
            let est = estimate_full(&y, &x, &z, &spec, &spec, &PenaltySpec::Auto(scale))?;
            report.section("estimate");
            if let PenaltySource::Auto { sigma_hat, .. } = est.penalties.source {
                report.entry_f64("sigma_hat", sigma_hat);
            }
            report.entry_f64("nu2", est.penalties.nu2);
            report.entry_f64("nu3", est.penalties.nu3);
            report.entry_f64("nu4", est.penalties.nu4);
            report.entry("rank_m2", est.ranks.0);
            report.entry("rank_m3", est.ranks.1);
            report.entry("rank_m4", est.ranks.2);
            ensure_out_dir(&args.out_dir)?;
            write_matrix(&args.out_dir.join("m_hat.csv"), &est.m_hat)?;
        }
        Mode::Mar => {
            let p = match args.p.as_str() {
                "auto" => ProbabilityChoice::Estimate,
                other => ProbabilityChoice::Known(parse_flag_number(other, "--p")?),
            };
            let m_max = match args.m_max.as_str() {
                "auto" => MMaxChoice::Auto,
                other => MMaxChoice::Value(parse_flag_number(other, "--m-max")?),
            };
            let cfg = MarConfig {
                p,
                penalty_multiplier: args.penalty_scale,
                m_max,
                tol: args.tol,
                max_iter: args.max_iter,
            };
            let est = estimate_mar(&y, &mask, &x, &z, &spec, &spec, &cfg)?;
            report.section("estimate");
            report.entry_f64("p_hat", est.p_used);
            report.entry_f64("sigma_hat", est.sigma_hat);
            report.entry_f64("nu", est.nu);
            report.entry_f64("m_max", est.m_max);
            report.entry_f64("tol", args.tol);
            report.entry("max_iter", args.max_iter);
            report.entry("converged", est.converged);
            report.entry("iterations", est.iterations);
            ensure_out_dir(&args.out_dir)?;
            write_matrix(&args.out_dir.join("m_hat.csv"), &est.m_hat)?;
            exit_nonconverged = !est.converged;
        }
        Mode::Mnar => {
            let shape = resolve_block_shape(args, &mask, n, t)?;
            let rank = match args.rank.as_str() {
                "auto" => RankChoice::Auto,
                other => {
                    let k: usize = other.parse().map_err(|_| {
                        CliError::Validation(format!("--rank must be \"auto\" or an integer, got {other:?}"))
                    })?;
                    RankChoice::Fixed(k)
                }
            };
            let est = estimate_mnar(&y, &shape, &x, &z, &spec, &spec, rank, &PenaltySpec::Auto(scale))?;
            report.section("estimate");
            report.entry("n0", shape.n0);
            report.entry("t0", shape.t0);
            report.entry("rank_used", est.diagnostics.rank_used);
            report.entry_f64("sigma_tall", est.diagnostics.sigma_tall);
            report.entry_f64("sigma_wide", est.diagnostics.sigma_wide);
            report.entry_f64("row_incoherence_min", est.diagnostics.row_incoherence.0);
            report.entry_f64("row_incoherence_max", est.diagnostics.row_incoherence.1);
            report.entry_f64("col_incoherence_min", est.diagnostics.col_incoherence.0);
            report.entry_f64("col_incoherence_max", est.diagnostics.col_incoherence.1);
            report.entry("incoherence_warning", est.diagnostics.incoherence_warning);
            ensure_out_dir(&args.out_dir)?;
            write_matrix(&args.out_dir.join("m_hat.csv"), &est.m_hat)?;
        }
    }

    if let Some(perm) = row_perm {
        report.section("row_permutation");
        report.entry("canonical_order_of_input_rows", format_perm(&perm));
    }
    if let Some(perm) = col_perm {
        report.section("col_permutation");
        report.entry("canonical_order_of_input_cols", format_perm(&perm));
    }
    report.write(&args.out_dir.join("report.txt"))?;

    if exit_nonconverged {
        return Err(CliError::NonConvergence(
            "completion solver hit max_iter; results written with converged = false".to_string(),
        ));
    }
    Ok(())
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn parse_flag_number(text: &str, flag: &str) -> Result<f64, CliError> {
    text.parse::<f64>()
        .map_err(|_| CliError::Validation(format!("{flag} must be \"auto\" or a number, got {text:?}")))
}

fn resolve_block_shape(
    args: &EstimateArgs,
    mask: &ObservationMask,
    n: usize,
    t: usize,
) -> Result<BlockShape, CliError> {
    let from_mask = mask.block_shape();
    if !mask.is_all_ones() && from_mask.is_none() {
        return Err(CliError::Validation(
            "mnar mode requires a block-shaped mask: every missing cell in rows >= N0 and columns >= T0"
                .to_string(),
        ));
    }
    match (args.n0, args.t0, from_mask) {
        (Some(n0), Some(t0), detected) => {
            let shape = BlockShape::new(n, t, n0, t0).map_err(|e| CliError::Validation(e.to_string()))?;
            if let Some(d) = detected {
                if d != shape {
                    return Err(CliError::Validation(format!(
                        "mask block is N0={}, T0={} but flags say N0={n0}, T0={t0}",
                        d.n0, d.t0
                    )));
                }
            }
            Ok(shape)
        }
        (None, None, Some(shape)) => Ok(shape),
        _ => Err(CliError::Validation(
            "mnar mode needs --n0 and --t0 (or treated/post label files, or a block mask)"
                .to_string(),
        )),
    }
}

fn read_index_file(path: &Path, limit: usize) -> Result<Vec<usize>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let idx: usize = trimmed.parse().map_err(|_| CliError::Parse {
            path: path.display().to_string(),
            line: line_idx + 1,
            column: 1,
            message: format!("expected a 0-based index, found {trimmed:?}"),
        })?;
        if idx >= limit {
            return Err(CliError::Validation(format!(
                "index {idx} out of range 0..{limit} in {}",
                path.display()
            )));
        }
        if out.contains(&idx) {
            return Err(CliError::Validation(format!(
                "duplicate index {idx} in {}",
                path.display()
            )));
        }
        out.push(idx);
    }
    if out.is_empty() {
        return Err(CliError::Validation(format!(
            "{} lists no indices",
            path.display()
        )));
    }
    Ok(out)
}

/// Order with the labeled indices moved to the end, both groups keeping
/// their original relative order.
fn canonical_permutation(len: usize, labeled: &[usize]) -> Vec<usize> {
    let mut head: Vec<usize> = (0..len).filter(|i| !labeled.contains(i)).collect();
    head.extend(labeled.iter().copied());
    head
}

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(perm[i], j)])
}

fn permute_cols(m: &Matrix, perm: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, perm[j])])
}

fn permute_mask(
    mask: &ObservationMask,
    row_perm: &[usize],
    col_perm: Option<&[usize]>,
) -> Result<ObservationMask, CliError> {
    let (n, t) = (mask.nrows(), mask.ncols());
    let mut flags = vec![false; n * t];
    for i in 0..n {
        for j in 0..t {
            let src_i = if row_perm.is_empty() { i } else { row_perm[i] };
            let src_j = col_perm.map_or(j, |p| p[j]);
            flags[i * t + j] = mask.observed(src_i, src_j);
        }
    }
    ObservationMask::from_flags(n, t, flags, mask.pattern())
        .map_err(|e| CliError::Validation(e.to_string()))
}

fn format_perm(perm: &[usize]) -> String {
    perm.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
