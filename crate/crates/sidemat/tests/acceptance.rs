//! Acceptance suite: one test per acceptance criterion, each printing a
//! single PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`
//! to see them).

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sidemat::baselines;
use sidemat::estimate::{
    estimate_full, estimate_full_projected, estimate_mar, estimate_mnar, MarConfig, PenaltySpec,
    RankChoice,
};
use sidemat::harness::{run_experiment, Method, Regime, ScenarioConfig};
use sidemat::lowrank::{full_svd, procrustes_distance, svt};
use sidemat::mask::BlockShape;
use sidemat::sieve::{build_design, projector, SieveSpec};
use sidemat::simgen::{self, renormalize, DgpConfig};
use sidemat::Matrix;

fn verdict(criterion: &str, pass: bool, detail: &str) -> bool {
    println!(
        "acceptance {criterion}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

// --- criterion 1 ------------------------------------------------------

/// Independent minimizer of ||B - A||_F^2 + nu ||A||_* by proximal gradient
/// with a conservative step (t = 0.25), prox computed inline from a fresh
/// SVD. Deliberately avoids the production svt path.
fn prox_oracle(b: &Matrix, nu: f64, max_iters: usize) -> Matrix {
    let t = 0.25;
    let mut a = Matrix::zeros(b.nrows(), b.ncols());
    for _ in 0..max_iters {
        let y = &a - (&a - b) * (2.0 * t);
        let svd = nalgebra::SVD::try_new(y, true, true, f64::EPSILON, 0).unwrap();
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let mut next = Matrix::zeros(b.nrows(), b.ncols());
        for k in 0..svd.singular_values.len() {
            let s = (svd.singular_values[k] - t * nu).max(0.0);
            if s > 0.0 {
                next.ger(s, &u.column(k), &vt.row(k).transpose(), 1.0);
            }
        }
        let delta = (&next - &a).norm();
        a = next;
        if delta < 1e-13 {
            break;
        }
    }
    a
}

#[test]
fn criterion_01_svt_matches_proximal_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(2..=12);
        let m = rng.gen_range(2..=10);
        let scale = rng.gen_range(0.5..4.0);
        let b = DMatrix::from_fn(n, m, |_, _| (rng.gen::<f64>() * 2.0 - 1.0) * scale);
        let op = full_svd(&b).unwrap().singular_values[0];
        let nu = rng.gen_range(0.05..2.0) * op;
        let closed = svt(&b, nu / 2.0).unwrap();
        let oracle = prox_oracle(&b, nu, 10_000);
        worst = worst.max((closed - oracle).norm());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-8 && elapsed < 10.0;
    assert!(
        verdict(
            "criterion 1 (svt oracle equivalence)",
            pass,
            &format!("worst deviation {worst:.3e} over 50 matrices in {elapsed:.2}s (limit 1e-8, 10s)"),
        ),
        "worst {worst:.3e}, elapsed {elapsed:.2}s"
    );
}

// --- criterion 2 ------------------------------------------------------

#[test]
fn criterion_02_exact_zero_components_under_pure_interaction() {
    let reps = 40;
    let mut all_zero = 0;
    for rep in 0..reps {
        let seed = simgen::mix_seed(202, 0, rep);
        let cfg = DgpConfig::alpha_study(120, 120, [1.0, 0.0, 0.0, 0.0], seed);
        let panel = simgen::gen_panel(&cfg).unwrap();
        let spec = SieveSpec::polynomial(5);
        let est = estimate_full(
            &panel.y,
            &panel.x,
            &panel.z,
            &spec,
            &spec,
            &PenaltySpec::default(),
        )
        .unwrap();
        let exactly_zero = est.ranks == (0, 0, 0)
            && est.m2_hat.iter().all(|&v| v == 0.0)
            && est.m3_hat.iter().all(|&v| v == 0.0)
            && est.m4_hat.iter().all(|&v| v == 0.0);
        if exactly_zero {
            all_zero += 1;
        }
    }
    let pass = all_zero * 100 >= reps as usize * 95;
    assert!(
        verdict(
            "criterion 2 (exact-zero thresholding)",
            pass,
            &format!("{all_zero}/{reps} replications had all three residual components exactly zero (need >= 95%)"),
        ),
        "{all_zero}/{reps}"
    );
}

// --- criterion 3 ------------------------------------------------------

#[test]
fn criterion_03_noiseless_sieve_span_exactness() {
    // signal in the degree-J sieve span, no noise
    let (n, t, j, k) = (60, 60, 3, 3);
    let mut cov_rng = simgen::stream_rng(303, simgen::streams::COVARIATES);
    let (x, z) = simgen::gen_characteristics(n, t, &mut cov_rng);
    let spec = SieveSpec::polynomial(j);
    let dx = build_design(&x, &spec).unwrap();
    let dz = build_design(&z, &spec).unwrap();
    let mut coef_rng = simgen::stream_rng(303, simgen::streams::COEFFICIENTS);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let bx = Matrix::from_fn(dx.width(), k, |_, _| std_normal.sample(&mut coef_rng));
    let bz = Matrix::from_fn(dz.width(), k, |_, _| std_normal.sample(&mut coef_rng));
    let m = (&dx.values * bx) * (&dz.values * bz).transpose();

    let full = estimate_full(&m, &x, &z, &spec, &spec, &PenaltySpec::default()).unwrap();
    let rel_full = (&full.m_hat - &m).norm() / m.norm();

    let mar = estimate_mar(
        &m,
        &sidemat::mask::ObservationMask::full(n, t),
        &x,
        &z,
        &spec,
        &spec,
        &MarConfig::default(),
    )
    .unwrap();
    let rel_mar = (&mar.m_hat - &m).norm() / m.norm();

    let shape = BlockShape::new(n, t, 30, 30).unwrap();
    let mnar = estimate_mnar(
        &m,
        &shape,
        &x,
        &z,
        &spec,
        &spec,
        RankChoice::Fixed(k),
        &PenaltySpec::default(),
    )
    .unwrap();
    let rel_mnar = (&mnar.m_hat - &m).norm() / m.norm();

    let pass = rel_full <= 1e-8 && rel_mar <= 1e-6 && rel_mnar <= 1e-6;
    assert!(
        verdict(
            "criterion 3 (noiseless sieve-span exactness)",
            pass,
            &format!("relative errors: full {rel_full:.2e} (<=1e-8), mar {rel_mar:.2e} (<=1e-6), mnar {rel_mnar:.2e} (<=1e-6)"),
        ),
        "full {rel_full:.2e} mar {rel_mar:.2e} mnar {rel_mnar:.2e}"
    );
}

// --- criterion 4 ------------------------------------------------------

#[test]
fn criterion_04_near_pure_interaction_beats_nuclear_norm() {
    let start = Instant::now();
    let scenarios = vec![ScenarioConfig {
        id: "a1-heavy".to_string(),
        dgp: DgpConfig::alpha_study(120, 120, renormalize([1.0, 0.01, 0.01, 0.01]), 0),
        regime: Regime::Full,
        sieve_j: 5,
    }];
    let records = run_experiment(
        &scenarios,
        &[Method::Ours, Method::NuclearNorm],
        20,
        404,
        4,
    )
    .unwrap();
    let ours = records.iter().find(|r| r.method == "ours").unwrap().amse;
    let nn = records
        .iter()
        .find(|r| r.method == "nuclear_norm")
        .unwrap()
        .amse;
    let improvement = (nn - ours) / ours;
    let elapsed = start.elapsed().as_secs_f64();
    let pass = improvement >= 5.0 && elapsed < 300.0;
    assert!(
        verdict(
            "criterion 4 (near-pure-interaction advantage)",
            pass,
            &format!("relative improvement over nuclear norm {improvement:.2} (need >= 5), AMSE ours {ours:.4} vs {nn:.4}, {elapsed:.1}s (limit 300s)"),
        ),
        "improvement {improvement:.2}, elapsed {elapsed:.1}s"
    );
}

// --- criterion 5 ------------------------------------------------------

#[test]
fn criterion_05_least_favorable_parity_with_oracle() {
    let scenarios = vec![ScenarioConfig {
        id: "pure-residual".to_string(),
        dgp: DgpConfig::alpha_study(120, 120, [0.0, 0.0, 0.0, 1.0], 0),
        regime: Regime::Full,
        sieve_j: 5,
    }];
    let records = run_experiment(
        &scenarios,
        &[Method::Ours, Method::SpectralOracle],
        20,
        505,
        4,
    )
    .unwrap();
    let ours = records.iter().find(|r| r.method == "ours").unwrap().amse;
    let oracle = records
        .iter()
        .find(|r| r.method == "spectral_oracle")
        .unwrap()
        .amse;
    let factor = ours / oracle;
    let pass = factor <= 1.5;
    // The four-block split cannot reach this bound in the no-signal regime:
    // the interaction block alone retains q_x * q_z cells of noise and each
    // thresholded block pays rank x threshold of shrinkage bias on top of
    // the oracle's rank x (N + T) noise floor. See the ledger analysis; the
    // criterion is asserted as stated rather than weakened.
    assert!(
        verdict(
            "criterion 5 (least-favorable parity with rank-aware oracle)",
            pass,
            &format!("AMSE ours {ours:.4} vs oracle {oracle:.4}: factor {factor:.2} (need <= 1.5)"),
        ),
        "factor {factor:.2}"
    );
}

// --- criterion 6 ------------------------------------------------------

#[test]
fn criterion_06_error_scales_with_rate() {
    let sizes = [80usize, 160, 320];
    let mut medians = Vec::new();
    for (ci, &n) in sizes.iter().enumerate() {
        let mut ratios = Vec::new();
        for rep in 0..10u64 {
            let seed = simgen::mix_seed(606, ci as u64, rep);
            let cfg = DgpConfig::alpha_study(n, n, [0.0, 0.0, 0.0, 1.0], seed);
            let panel = simgen::gen_panel(&cfg).unwrap();
            let spec = SieveSpec::polynomial(5);
            let est = estimate_full(
                &panel.y,
                &panel.x,
                &panel.z,
                &spec,
                &spec,
                &PenaltySpec::default(),
            )
            .unwrap();
            let err = (&est.m_hat - &panel.m).norm();
            ratios.push(err / (3.0 * (2 * n) as f64).sqrt());
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(0.5 * (ratios[4] + ratios[5]));
    }
    let spread = medians.iter().cloned().fold(f64::MIN, f64::max)
        / medians.iter().cloned().fold(f64::MAX, f64::min);
    let pass = spread < 2.0;
    assert!(
        verdict(
            "criterion 6 (rate scaling over sizes)",
            pass,
            &format!(
                "median error/sqrt(K4(N+T)) at N=80/160/320: {:.3}/{:.3}/{:.3}, spread factor {spread:.2} (need < 2)",
                medians[0], medians[1], medians[2]
            ),
        ),
        "spread {spread:.2}"
    );
}

// --- criterion 7 ------------------------------------------------------

#[test]
fn criterion_07_mnar_exact_recovery() {
    let (n, t, k) = (80usize, 80usize, 2usize);
    let mut rng = simgen::stream_rng(707, simgen::streams::FACTORS);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let u = Matrix::from_fn(n, k, |_, _| std_normal.sample(&mut rng));
    let v = Matrix::from_fn(t, k, |_, _| std_normal.sample(&mut rng));
    let m = simgen::normalize_component(&(&u * v.transpose()), n, t, 2.0).unwrap();
    let mut cov_rng = simgen::stream_rng(707, simgen::streams::COVARIATES);
    let (x, z) = simgen::gen_characteristics(n, t, &mut cov_rng);
    let shape = BlockShape::new(n, t, 40, 40).unwrap();
    let spec = SieveSpec::polynomial(5);

    let est = estimate_mnar(
        &m,
        &shape,
        &x,
        &z,
        &spec,
        &spec,
        RankChoice::Fixed(k),
        &PenaltySpec::default(),
    )
    .unwrap();
    let spectral = baselines::mnar_spectral(&m, &shape, k).unwrap();

    let block_err = |estimate: &Matrix| -> f64 {
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for i in shape.n0..n {
            for j in shape.t0..t {
                err2 += (estimate[(i, j)] - m[(i, j)]).powi(2);
                norm2 += m[(i, j)].powi(2);
            }
        }
        (err2 / norm2).sqrt()
    };
    let rel_ours = block_err(&est.m_hat);
    let rel_spectral = block_err(&spectral);
    let incoherent = !est.diagnostics.incoherence_warning;
    let pass = rel_ours <= 1e-6 && rel_spectral <= 1e-6 && incoherent;
    assert!(
        verdict(
            "criterion 7 (block-missing exact recovery)",
            pass,
            &format!("missing-block relative errors: ours {rel_ours:.2e}, spectral {rel_spectral:.2e} (<= 1e-6); incoherence diagnostic ok: {incoherent}"),
        ),
        "ours {rel_ours:.2e} spectral {rel_spectral:.2e}"
    );
}

// --- criterion 8 ------------------------------------------------------

#[test]
fn criterion_08_mnar_comparison_sign_pattern() {
    let mk = |id: &str, alphas: [f64; 4]| ScenarioConfig {
        id: id.to_string(),
        dgp: DgpConfig::alpha_study(200, 200, alphas, 0),
        regime: Regime::Mnar { n0: 100, t0: 100 },
        sieve_j: 5,
    };
    let scenarios = vec![
        mk("a1-heavy", renormalize([1.0, 0.01, 0.01, 0.01])),
        mk("a4-heavy", renormalize([0.01, 0.01, 0.01, 1.0])),
    ];
    let records = run_experiment(
        &scenarios,
        &[Method::Ours, Method::MnarSpectral],
        20,
        808,
        4,
    )
    .unwrap();
    let get = |id: &str, method: &str| -> f64 {
        records
            .iter()
            .find(|r| r.config_id == id && r.method == method)
            .unwrap()
            .amse
    };
    let ri_a1 = (get("a1-heavy", "mnar_spectral") - get("a1-heavy", "ours"))
        / get("a1-heavy", "ours");
    let a4_ours = get("a4-heavy", "ours");
    let a4_spec = get("a4-heavy", "mnar_spectral");
    let a4_factor = (a4_ours / a4_spec).max(a4_spec / a4_ours);
    let pass = ri_a1 >= 3.0 && a4_factor <= 2.0;
    assert!(
        verdict(
            "criterion 8 (block-missing comparison corners)",
            pass,
            &format!("a1-heavy improvement over spectral {ri_a1:.2} (need >= 3); a4-heavy mutual factor {a4_factor:.2} (need <= 2)"),
        ),
        "ri {ri_a1:.2}, factor {a4_factor:.2}"
    );
}

// --- criterion 9 ------------------------------------------------------

#[test]
fn criterion_09_mar_ignores_unobserved_cells() {
    let cfg = DgpConfig::alpha_study(40, 30, [0.25; 4], 909);
    let panel = simgen::gen_panel(&cfg).unwrap();
    let mut mask_rng = simgen::stream_rng(909, simgen::streams::MASK);
    let mask = simgen::gen_mask_mar(40, 30, 0.7, &mut mask_rng).unwrap();
    let spec = SieveSpec::polynomial(2);
    let cfg_mar = MarConfig::default();
    let base = estimate_mar(&panel.y, &mask, &panel.x, &panel.z, &spec, &spec, &cfg_mar).unwrap();
    let mut poisoned = panel.y.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(910);
    for i in 0..40 {
        for j in 0..30 {
            if !mask.observed(i, j) {
                poisoned[(i, j)] = (rng.gen::<f64>() - 0.5) * 1e15;
            }
        }
    }
    let alt = estimate_mar(&poisoned, &mask, &panel.x, &panel.z, &spec, &spec, &cfg_mar).unwrap();
    let identical = base.m_hat == alt.m_hat && base.m1_hat == alt.m1_hat;
    assert!(
        verdict(
            "criterion 9 (unobserved-cell independence)",
            identical,
            "poisoning unobserved cells changed the output by exactly zero",
        ),
        "outputs differ"
    );
}

// --- criterion 10 -----------------------------------------------------

#[test]
fn criterion_10_invariant_suites() {
    let cases = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut failures: Vec<String> = Vec::new();

    // projector idempotence / symmetry
    for case in 0..cases {
        let n = rng.gen_range(6..=14);
        let q = rng.gen_range(1..=4);
        let values = DMatrix::from_fn(n, q, |_, _| std_normal.sample(&mut rng));
        let design = sidemat::sieve::DesignMatrix {
            n,
            d: q,
            degree_j: 1,
            intercept: false,
            values,
        };
        let p = projector(&design).unwrap();
        if (&p.values - p.values.transpose()).abs().max() > 1e-10
            || (&p.values * &p.values - &p.values).abs().max() > 1e-8
        {
            failures.push(format!("projector case {case}"));
        }
    }

    // svt nonexpansiveness
    for case in 0..cases {
        let n = rng.gen_range(3..=9);
        let m = rng.gen_range(3..=8);
        let b = DMatrix::from_fn(n, m, |_, _| std_normal.sample(&mut rng));
        let c = DMatrix::from_fn(n, m, |_, _| std_normal.sample(&mut rng));
        let tau = rng.gen_range(0.0..4.0);
        let lhs = (svt(&b, tau).unwrap() - svt(&c, tau).unwrap()).norm();
        let rhs = (&b - &c).norm();
        if lhs > rhs + 1e-9 * rhs.max(1.0) {
            failures.push(format!("svt case {case}: {lhs} > {rhs}"));
        }
    }

    // Procrustes rotation invariance
    for case in 0..cases {
        let n = rng.gen_range(5..=10);
        let a = DMatrix::from_fn(n, 2, |_, _| std_normal.sample(&mut rng));
        let u = a.qr().q().columns(0, 2).into_owned();
        let b = DMatrix::from_fn(n, 2, |_, _| std_normal.sample(&mut rng));
        let u_hat = b.qr().q().columns(0, 2).into_owned();
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        let q = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let d = procrustes_distance(&u_hat, &u).unwrap();
        let d_rot = procrustes_distance(&(&u_hat * &q), &u).unwrap();
        if (d - d_rot).abs() > 1e-8 {
            failures.push(format!("procrustes case {case}"));
        }
    }

    // decomposition completeness at zero penalty
    for case in 0..cases {
        let seed = simgen::mix_seed(1010, 4, case as u64);
        let cfg = DgpConfig::alpha_study(24, 20, [0.25; 4], seed);
        let panel = simgen::gen_panel(&cfg).unwrap();
        let spec = SieveSpec::polynomial(1);
        let px = projector(&build_design(&panel.x, &spec).unwrap()).unwrap();
        let pz = projector(&build_design(&panel.z, &spec).unwrap()).unwrap();
        let est = estimate_full_projected(&panel.y, &px, &pz, &PenaltySpec::zero()).unwrap();
        if (&est.m_hat - &panel.y).norm() / panel.y.norm() > 1e-10 {
            failures.push(format!("tiling case {case}"));
        }
    }

    // component normalization
    for case in 0..cases {
        let seed = simgen::mix_seed(1010, 5, case as u64);
        let cfg = DgpConfig::alpha_study(20, 18, [0.25; 4], seed);
        let panel = simgen::gen_panel(&cfg).unwrap();
        let nt = (20.0f64 * 18.0).sqrt();
        for m in [&panel.m1, &panel.m2, &panel.m3, &panel.m4] {
            if (m.norm() / (0.25 * nt) - 2.0).abs() > 1e-10 {
                failures.push(format!("normalization case {case}"));
            }
        }
    }

    let pass = failures.is_empty();
    assert!(
        verdict(
            "criterion 10 (invariant suites)",
            pass,
            &format!(
                "5 invariant families x {cases} random cases: {} failures",
                failures.len()
            ),
        ),
        "failures: {failures:?}"
    );
}
