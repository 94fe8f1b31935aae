//! Simulation designs: covariates, polynomial component factors,
//! normalization, noise, observation masks, and sweep grids.
//!
//! Reproducibility contract: a `(DgpConfig, seed)` pair maps to a
//! bit-identical panel within this implementation. Randomness comes from
//! ChaCha8, a counter-based generator, with one named stream per purpose
//! (covariates / coefficients / factors / noise / mask) so the sub-draws are
//! independent and insensitive to each other's consumption order.

use crate::mask::{BlockShape, MaskPattern, ObservationMask};
use crate::{Error, Matrix, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// Which simulation study a config belongs to. The two studies differ in the
/// polynomial degree of the component functions, the factor covariances, and
/// the noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpVariant {
    /// Component-weight sweep: degree-4 polynomials, noise sd 0.5.
    AlphaStudy,
    /// Rank sweep: degree-3 polynomials, noise sd 1.5.
    RankStudy,
}

impl DgpVariant {
    pub fn poly_degree(self) -> usize {
        match self {
            DgpVariant::AlphaStudy => 4,
            DgpVariant::RankStudy => 3,
        }
    }

    pub fn noise_sd(self) -> f64 {
        match self {
            DgpVariant::AlphaStudy => 0.5,
            DgpVariant::RankStudy => 1.5,
        }
    }

    /// Variances of the one-sided factor coordinates (V1 rows and W1 rows).
    fn one_sided_variances(self) -> &'static [f64] {
        match self {
            DgpVariant::AlphaStudy => &[0.5, 1.0, 1.5],
            DgpVariant::RankStudy => &[
                1.0, 0.5625, 1.5625, 0.25, 2.25, 0.0625, 3.0625, // 1, .75^2, 1.25^2, ...
            ],
        }
    }

    /// Variances of the W2 row coordinates.
    fn w2_variances(self) -> &'static [f64] {
        match self {
            DgpVariant::AlphaStudy => &[0.5, 1.0, 1.5],
            DgpVariant::RankStudy => &[
                1.0, 0.5625, 1.5625, 0.5625, 1.5625, 0.25, 2.25, 0.25, 2.25, 0.0625, 3.0625,
                0.0625,
            ],
        }
    }
}

/// Simulation recipe: dimensions, component weights, component ranks, noise
/// scale, per-component Frobenius scale, variant, and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub n: usize,
    pub t: usize,
    pub alphas: [f64; 4],
    pub ranks: [usize; 4],
    pub noise_sd: f64,
    /// Each component is normalized to `target_scale * sqrt(NT)` in
    /// Frobenius norm before weighting.
    pub target_scale: f64,
    pub variant: DgpVariant,
    pub seed: u64,
}

impl DgpConfig {
    /// Component-weight study config: ranks (17, 3, 3, 3), noise sd 0.5.
    pub fn alpha_study(n: usize, t: usize, alphas: [f64; 4], seed: u64) -> Self {
        Self {
            n,
            t,
            alphas,
            ranks: [17, 3, 3, 3],
            noise_sd: DgpVariant::AlphaStudy.noise_sd(),
            target_scale: 2.0,
            variant: DgpVariant::AlphaStudy,
            seed,
        }
    }

    /// Rank study config: equal weights, noise sd 1.5.
    pub fn rank_study(n: usize, t: usize, ranks: [usize; 4], seed: u64) -> Self {
        Self {
            n,
            t,
            alphas: [0.25; 4],
            ranks,
            noise_sd: DgpVariant::RankStudy.noise_sd(),
            target_scale: 2.0,
            variant: DgpVariant::RankStudy,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        let sum: f64 = self.alphas.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "component weights must sum to 1, got {sum}"
            )));
        }
        if self.alphas.iter().any(|&a| a < 0.0) {
            return Err(Error::InvalidArgument(
                "component weights must be nonnegative".into(),
            ));
        }
        if self.ranks.contains(&0) {
            return Err(Error::InvalidArgument("ranks must be >= 1".into()));
        }
        if self.noise_sd < 0.0 || self.target_scale <= 0.0 {
            return Err(Error::InvalidArgument(
                "noise sd must be >= 0 and target scale > 0".into(),
            ));
        }
        let one_sided = self.variant.one_sided_variances().len();
        let w2 = self.variant.w2_variances().len();
        if self.ranks[1] > one_sided || self.ranks[2] > one_sided {
            return Err(Error::InvalidArgument(format!(
                "K2/K3 exceed the factor covariance list (max {one_sided})"
            )));
        }
        if self.ranks[3] > w2 {
            return Err(Error::InvalidArgument(format!(
                "K4 exceeds the factor covariance list (max {w2})"
            )));
        }
        Ok(())
    }

    /// Rank of `M` implied by the nonzero component weights.
    pub fn total_rank(&self) -> usize {
        self.alphas
            .iter()
            .zip(self.ranks)
            .filter(|&(&a, _)| a > 0.0)
            .map(|(_, k)| k)
            .sum()
    }
}

/// One simulated panel: outcome, signal, the four weighted components, noise,
/// covariates, and an observation mask (all-ones unless replaced).
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub y: Matrix,
    pub m: Matrix,
    pub m1: Matrix,
    pub m2: Matrix,
    pub m3: Matrix,
    pub m4: Matrix,
    pub e: Matrix,
    pub x: Matrix,
    pub z: Matrix,
    pub mask: ObservationMask,
}

/// Named RNG streams, one per purpose.
pub mod streams {
    pub const COVARIATES: u64 = 0;
    pub const COEFFICIENTS: u64 = 1;
    pub const FACTORS: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const MASK: u64 = 4;
}

/// ChaCha8 stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// splitmix64 mix used to derive per-replication seeds.
pub fn mix_seed(base: u64, config_index: u64, rep_index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(base) ^ config_index.wrapping_mul(0xA076_1D64_78BD_642F)) ^ rep_index)
}

/// Draw the four row characteristics and four column characteristics:
/// Unif[-1,1], Unif[-0.5,0.5], N(0, 0.2^2), N(0, 0.3^2), i.i.d. down each
/// column, X first then Z.
pub fn gen_characteristics(n: usize, t: usize, rng: &mut ChaCha8Rng) -> (Matrix, Matrix) {
    let draw = |rows: usize, rng: &mut ChaCha8Rng| -> Matrix {
        let u1 = Uniform::new_inclusive(-1.0, 1.0);
        let u2 = Uniform::new_inclusive(-0.5, 0.5);
        let n3 = Normal::new(0.0, 0.2).unwrap();
        let n4 = Normal::new(0.0, 0.3).unwrap();
        let mut m = Matrix::zeros(rows, 4);
        for i in 0..rows {
            m[(i, 0)] = u1.sample(rng);
            m[(i, 1)] = u2.sample(rng);
            m[(i, 2)] = n3.sample(rng);
            m[(i, 3)] = n4.sample(rng);
        }
        m
    };
    let x = draw(n, rng);
    let z = draw(t, rng);
    (x, z)
}

/// Evaluate `K` random additive polynomials of the given degree at each row
/// of `c`: column `k` is `b0 + sum_l sum_{j<=deg} b_lj c_l^j` with standard
/// normal coefficients drawn in (k, intercept, (l, j)) order.
fn polynomial_factor(c: &Matrix, k: usize, degree: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let (rows, d) = (c.nrows(), c.ncols());
    let mut out = Matrix::zeros(rows, k);
    for col in 0..k {
        let b0: f64 = std_normal.sample(rng);
        for i in 0..rows {
            out[(i, col)] = b0;
        }
        for l in 0..d {
            for j in 1..=degree {
                let b: f64 = std_normal.sample(rng);
                for i in 0..rows {
                    out[(i, col)] += b * c[(i, l)].powi(j as i32);
                }
            }
        }
    }
    out
}

/// Gaussian factor matrix with independent coordinates of the given
/// variances, drawn row by row.
fn gaussian_factor(rows: usize, variances: &[f64], rng: &mut ChaCha8Rng) -> Matrix {
    let dists: Vec<Normal<f64>> = variances
        .iter()
        .map(|&v| Normal::new(0.0, v.sqrt()).unwrap())
        .collect();
    let mut out = Matrix::zeros(rows, variances.len());
    for i in 0..rows {
        for (j, dist) in dists.iter().enumerate() {
            out[(i, j)] = dist.sample(rng);
        }
    }
    out
}

/// Generate the four unnormalized components
/// `M1 = G1 Q1^T`, `M2 = G2 V1^T`, `M3 = W1 Q2^T`, `M4 = W2 V2^T`.
///
/// Polynomial coefficients come from `coef_rng`, latent factors from
/// `factor_rng`.
pub fn gen_components(
    x: &Matrix,
    z: &Matrix,
    cfg: &DgpConfig,
    coef_rng: &mut ChaCha8Rng,
    factor_rng: &mut ChaCha8Rng,
) -> Result<[Matrix; 4]> {
    cfg.validate()?;
    let deg = cfg.variant.poly_degree();
    let [k1, k2, k3, k4] = cfg.ranks;
    let g1 = polynomial_factor(x, k1, deg, coef_rng);
    let q1 = polynomial_factor(z, k1, deg, coef_rng);
    let g2 = polynomial_factor(x, k2, deg, coef_rng);
    let q2 = polynomial_factor(z, k3, deg, coef_rng);

    let one_sided = cfg.variant.one_sided_variances();
    let v1 = gaussian_factor(z.nrows(), &one_sided[..k2], factor_rng);
    let w1 = gaussian_factor(x.nrows(), &one_sided[..k3], factor_rng);
    let w2 = gaussian_factor(x.nrows(), &cfg.variant.w2_variances()[..k4], factor_rng);
    let v2 = gaussian_factor(z.nrows(), &vec![2.25; k4], factor_rng);

    Ok([
        &g1 * q1.transpose(),
        &g2 * v1.transpose(),
        &w1 * q2.transpose(),
        &w2 * v2.transpose(),
    ])
}

/// Rescale a component so its Frobenius norm is `target_scale * sqrt(NT)`.
pub fn normalize_component(m: &Matrix, n: usize, t: usize, target_scale: f64) -> Result<Matrix> {
    let norm = m.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate(
            "cannot normalize a zero component".to_string(),
        ));
    }
    Ok(m * (target_scale * ((n * t) as f64).sqrt() / norm))
}

/// Generate a complete panel from a config: `Y = sum_r alpha_r M_r + E`
/// with every component normalized, plus an all-ones mask.
pub fn gen_panel(cfg: &DgpConfig) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let mut cov_rng = stream_rng(cfg.seed, streams::COVARIATES);
    let mut coef_rng = stream_rng(cfg.seed, streams::COEFFICIENTS);
    let mut factor_rng = stream_rng(cfg.seed, streams::FACTORS);
    let mut noise_rng = stream_rng(cfg.seed, streams::NOISE);

    let (x, z) = gen_characteristics(cfg.n, cfg.t, &mut cov_rng);
    let raw = gen_components(&x, &z, cfg, &mut coef_rng, &mut factor_rng)?;
    let mut weighted: Vec<Matrix> = Vec::with_capacity(4);
    for (r, m) in raw.into_iter().enumerate() {
        let normalized = normalize_component(&m, cfg.n, cfg.t, cfg.target_scale)?;
        weighted.push(normalized * cfg.alphas[r]);
    }
    let m = &weighted[0] + &weighted[1] + &weighted[2] + &weighted[3];
    let e = if cfg.noise_sd > 0.0 {
        let dist = Normal::new(0.0, cfg.noise_sd).unwrap();
        Matrix::from_fn(cfg.n, cfg.t, |_, _| dist.sample(&mut noise_rng))
    } else {
        Matrix::zeros(cfg.n, cfg.t)
    };
    let y = &m + &e;
    let mut it = weighted.into_iter();
    Ok(SimulatedPanel {
        y,
        m,
        m1: it.next().unwrap(),
        m2: it.next().unwrap(),
        m3: it.next().unwrap(),
        m4: it.next().unwrap(),
        e,
        x,
        z,
        mask: ObservationMask::full(cfg.n, cfg.t),
    })
}

/// I.i.d. Bernoulli(p) observation mask.
pub fn gen_mask_mar(n: usize, t: usize, p: f64, rng: &mut ChaCha8Rng) -> Result<ObservationMask> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "observation probability must be in [0, 1], got {p}"
        )));
    }
    let flags: Vec<bool> = (0..n * t).map(|_| rng.gen::<f64>() < p).collect();
    ObservationMask::from_flags(n, t, flags, MaskPattern::Bernoulli)
}

/// Block-missing mask: zeros exactly on the bottom-right block.
pub fn gen_mask_mnar(shape: &BlockShape) -> ObservationMask {
    shape.mask()
}

/// Component-weight grid under `sum alpha = 1`, `alpha_2 = alpha_3`, all
/// weights `>= 0.01`, walked on the given step along the `alpha_1` and
/// `alpha_4` axes starting from 0.01.
pub fn sweep_grid_alpha(step: f64) -> Vec<[f64; 4]> {
    let mut grid = Vec::new();
    let mut a1 = 0.01;
    while a1 <= 0.97 + 1e-9 {
        let mut a4 = 0.01;
        while a1 + a4 <= 0.98 + 1e-9 {
            let rest = 1.0 - a1 - a4;
            let a23 = rest / 2.0;
            if a23 >= 0.01 - 1e-9 {
                grid.push([a1, a23, a23, a4]);
            }
            a4 += step;
        }
        a1 += step;
    }
    grid
}

/// The four named corner configurations used by the desk-scale sweeps. The
/// heavy corners follow the convention of setting the lead weight to 1 and
/// the others to 0.01, then renormalizing to sum to one.
pub fn corner_alphas() -> [(&'static str, [f64; 4]); 4] {
    [
        ("a1-heavy", renormalize([1.0, 0.01, 0.01, 0.01])),
        ("a4-heavy", renormalize([0.01, 0.01, 0.01, 1.0])),
        ("a23-heavy", renormalize([0.01, 0.485, 0.485, 0.01])),
        ("balanced", [0.25, 0.25, 0.25, 0.25]),
    ]
}

/// Scale a weight vector to sum exactly to one.
pub fn renormalize(alphas: [f64; 4]) -> [f64; 4] {
    let sum: f64 = alphas.iter().sum();
    let mut out = alphas;
    for a in &mut out {
        *a /= sum;
    }
    // absorb the last rounding ulp so the sum is exactly 1
    let partial: f64 = out[0] + out[1] + out[2];
    out[3] = 1.0 - partial;
    out
}

/// Rank grid under `sum K = 15`, `K2 = K3` (or `K2 = K3 + 1` when the
/// remainder is odd) and all ranks `>= 1`, enumerated over `(K1, K4)`.
pub fn sweep_grid_rank() -> Vec<[usize; 4]> {
    let mut grid = Vec::new();
    for k1 in 1..=13 {
        for k4 in 1..=13 {
            if k1 + k4 > 13 {
                continue;
            }
            let rest = 15 - k1 - k4;
            let k3 = rest / 2;
            let k2 = rest - k3; // K2 = K3 + 1 when rest is odd
            if k3 >= 1 {
                grid.push([k1, k2, k3, k4]);
            }
        }
    }
    grid
}
