//! Sieve design matrices and the projectors built from them.
//!
//! A covariate vector `x` of length `d` is expanded coordinate by coordinate
//! into the first `J` basis functions; the design stacks one expanded row per
//! observation. The projector onto the design's column space is computed via
//! a rank-revealing orthogonal factorization, never the normal equations.

use crate::{ensure_finite, Error, Matrix, Result};

/// Basis family for the per-coordinate expansion. Only polynomial series are
/// implemented; the enum leaves room for B-splines, Fourier, and wavelets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFamily {
    Polynomial,
}

/// Specification of a sieve basis: family, per-coordinate degree `J`, and
/// whether a leading intercept column is included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SieveSpec {
    pub family: BasisFamily,
    pub degree_j: usize,
    pub include_intercept: bool,
    /// Center and scale each raw covariate column before expansion. Off by
    /// default; with an intercept present this does not change the column
    /// space of a polynomial design, only its conditioning.
    pub standardize: bool,
}

impl SieveSpec {
    /// Polynomial sieve of degree `j` with an intercept.
    pub fn polynomial(degree_j: usize) -> Self {
        Self {
            family: BasisFamily::Polynomial,
            degree_j,
            include_intercept: true,
            standardize: false,
        }
    }

    pub fn without_intercept(mut self) -> Self {
        self.include_intercept = false;
        self
    }

    pub fn with_standardize(mut self) -> Self {
        self.standardize = true;
        self
    }

    /// Design width `q = J d + 1{intercept}` for `d` covariate coordinates.
    pub fn width(&self, d: usize) -> usize {
        self.degree_j * d + usize::from(self.include_intercept)
    }

    fn validate(&self) -> Result<()> {
        if self.degree_j == 0 {
            return Err(Error::InvalidArgument(
                "sieve degree J must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// An `n x q` sieve design matrix together with its provenance.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub values: Matrix,
    pub n: usize,
    pub d: usize,
    pub degree_j: usize,
    pub intercept: bool,
}

impl DesignMatrix {
    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// Orthogonal projector onto a design's column space, with the numerical
/// rank that was detected while building it.
#[derive(Debug, Clone)]
pub struct Projector {
    pub values: Matrix,
    pub rank: usize,
}

impl Projector {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// `(I - P) A` without forming `I - P`.
    pub fn complement_apply(&self, a: &Matrix) -> Matrix {
        a - &self.values * a
    }
}

/// Expand one covariate vector into its sieve row.
///
/// For the polynomial family coordinate `l` contributes `(x_l, x_l^2, ..., x_l^J)`
/// in order; a leading 1 is prepended when the intercept is enabled.
pub fn eval_basis(x: &[f64], spec: &SieveSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariate vector".to_string()));
    }
    let mut row = Vec::with_capacity(spec.width(x.len()));
    if spec.include_intercept {
        row.push(1.0);
    }
    for &xl in x {
        let mut p = 1.0;
        for _ in 0..spec.degree_j {
            p *= xl;
            row.push(p);
        }
    }
    Ok(row)
}

/// Build the design matrix for an `n x d` covariate matrix.
///
/// Fails when `n <= q`: the projector would be trivial and the projection
/// step of the estimators undefined.
pub fn build_design(c: &Matrix, spec: &SieveSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    ensure_finite(c, "covariate matrix")?;
    let (n, d) = (c.nrows(), c.ncols());
    if d == 0 || n == 0 {
        return Err(Error::Dimension("empty covariate matrix".to_string()));
    }
    let q = spec.width(d);
    if n <= q {
        return Err(Error::Dimension(format!(
            "design would have {q} columns from only {n} rows; need n > q"
        )));
    }
    let source = if spec.standardize {
        standardize_columns(c)
    } else {
        c.clone()
    };
    let mut values = Matrix::zeros(n, q);
    for i in 0..n {
        let xi: Vec<f64> = (0..d).map(|l| source[(i, l)]).collect();
        let row = eval_basis(&xi, spec)?;
        for (j, v) in row.into_iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    // high powers of large covariates can overflow
    ensure_finite(&values, "basis expansion (consider standardizing)")?;
    Ok(DesignMatrix {
        values,
        n,
        d,
        degree_j: spec.degree_j,
        intercept: spec.include_intercept,
    })
}

fn standardize_columns(c: &Matrix) -> Matrix {
    let n = c.nrows() as f64;
    let mut out = c.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
    out
}

/// Orthogonal projector onto the column space of a design.
///
/// Uses a column-pivoted QR factorization with rank tolerance
/// `max(n, q) * eps * |r_11|`; rank-deficient designs project onto the
/// detected column space and report the smaller rank.
pub fn projector(design: &DesignMatrix) -> Result<Projector> {
    ensure_finite(&design.values, "design matrix")?;
    let n = design.values.nrows();
    let q = design.values.ncols();
    let qr = design.values.clone().col_piv_qr();
    let r = qr.r();
    let rmax = r[(0, 0)].abs();
    let tol = n.max(q) as f64 * f64::EPSILON * rmax;
    let rank = (0..q.min(n))
        .take_while(|&k| r[(k, k)].abs() > tol)
        .count();
    if rank == 0 {
        return Ok(Projector {
            values: Matrix::zeros(n, n),
            rank: 0,
        });
    }
    let qfull = qr.q();
    let q1 = qfull.columns(0, rank);
    Ok(Projector {
        values: q1 * q1.transpose(),
        rank,
    })
}

/// Extreme eigenvalues `(lambda_min, lambda_max)` of the scaled Gram matrix
/// `n^{-1} D^T D`, used to check the conditioning of a design.
pub fn condition_diagnostic(design: &DesignMatrix, n: usize) -> Result<(f64, f64)> {
    if design.values.is_empty() {
        return Err(Error::Dimension("empty design matrix".to_string()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".to_string()));
    }
    let gram = design.values.transpose() * &design.values / n as f64;
    let eigs = gram.symmetric_eigen().eigenvalues;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in eigs.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    Ok((lo, hi))
}

/// Default warning floor for `lambda_min` of the scaled Gram matrix.
pub const CONDITION_FLOOR: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn no_intercept(j: usize) -> SieveSpec {
        SieveSpec::polynomial(j).without_intercept()
    }

    #[test]
    fn eval_basis_monomials() {
        assert_eq!(
            eval_basis(&[0.5], &no_intercept(2)).unwrap(),
            vec![0.5, 0.25]
        );
        assert_eq!(
            eval_basis(&[0.0], &no_intercept(3)).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
        assert_eq!(
            eval_basis(&[1.0, 2.0], &no_intercept(3)).unwrap(),
            vec![1.0, 1.0, 1.0, 2.0, 4.0, 8.0]
        );
    }

    #[test]
    fn eval_basis_rejects_non_finite() {
        assert!(matches!(
            eval_basis(&[f64::NAN], &no_intercept(2)),
            Err(Error::NonFinite(_))
        ));
        assert!(eval_basis(&[f64::INFINITY], &no_intercept(1)).is_err());
    }

    #[test]
    fn eval_basis_permutation_consistency() {
        let spec = no_intercept(3);
        let a = eval_basis(&[0.3, -1.2, 0.7], &spec).unwrap();
        let b = eval_basis(&[0.7, 0.3, -1.2], &spec).unwrap();
        assert_eq!(&a[0..3], &b[3..6]);
        assert_eq!(&a[3..6], &b[6..9]);
        assert_eq!(&a[6..9], &b[0..3]);
    }

    #[test]
    fn build_design_small_examples() {
        let c = Matrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let d = build_design(&c, &SieveSpec::polynomial(2)).unwrap();
        assert_eq!(
            d.values.rows(0, 2).into_owned(),
            Matrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, 2.0, 4.0])
        );

        let zeros = Matrix::zeros(3, 1);
        let dz = build_design(&zeros, &no_intercept(1)).unwrap();
        assert_eq!(dz.values, Matrix::zeros(3, 1));
    }

    #[test]
    fn build_design_rejects_wide_designs() {
        let c = Matrix::zeros(3, 2);
        assert!(matches!(
            build_design(&c, &SieveSpec::polynomial(2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn build_design_rejects_overflowing_expansion() {
        let c = Matrix::from_element(20, 1, 1e200);
        assert!(matches!(
            build_design(&c, &no_intercept(3)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn simulation_design_has_full_column_rank() {
        // Covariates drawn per the simulation design: J=5, d=4 gives a
        // 200 x 21 design; rank checked through the pivoted QR path.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, _) = simgen::gen_characteristics(200, 5, &mut rng);
        let design = build_design(&x, &SieveSpec::polynomial(5)).unwrap();
        assert_eq!(design.values.shape(), (200, 21));
        let p = projector(&design).unwrap();
        assert_eq!(p.rank, 21);
    }

    #[test]
    fn projector_of_unit_vector() {
        let d = DesignMatrix {
            values: Matrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            n: 3,
            d: 1,
            degree_j: 1,
            intercept: false,
        };
        let p = projector(&d).unwrap();
        let expected = Matrix::from_diagonal(&crate::Vector::from_vec(vec![1.0, 0.0, 0.0]));
        assert_abs_diff_eq!(p.values, expected, epsilon = 1e-12);
        assert_eq!(p.rank, 1);
    }

    #[test]
    fn projector_reproduces_design_and_trace_matches_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, _) = simgen::gen_characteristics(10, 5, &mut rng);
        let c = x.columns(0, 3).into_owned();
        let d = build_design(&c, &no_intercept(1)).unwrap();
        let p = projector(&d).unwrap();
        assert_eq!(p.rank, 3);
        let pd = &p.values * &d.values;
        assert_abs_diff_eq!(pd, d.values, epsilon = 1e-8);
        // trace equals rank, cross-checked against an independent Gram-Schmidt oracle
        assert_abs_diff_eq!(p.values.trace(), 3.0, epsilon = 1e-10);
        let oracle = gram_schmidt_projector(&d.values);
        assert_abs_diff_eq!(p.values, oracle, epsilon = 1e-8);
    }

    // Independent construction of the projector by classical Gram-Schmidt.
    fn gram_schmidt_projector(a: &Matrix) -> Matrix {
        let mut basis: Vec<crate::Vector> = Vec::new();
        for j in 0..a.ncols() {
            let mut v = a.column(j).into_owned();
            for b in &basis {
                let coef = b.dot(&v);
                v -= b * coef;
            }
            let norm = v.norm();
            if norm > 1e-10 {
                basis.push(v / norm);
            }
        }
        let mut p = Matrix::zeros(a.nrows(), a.nrows());
        for b in &basis {
            p += b * b.transpose();
        }
        p
    }

    #[test]
    fn rank_deficient_design_is_handled() {
        // second column is twice the first
        let mut v = Matrix::zeros(5, 2);
        for i in 0..5 {
            v[(i, 0)] = i as f64 + 1.0;
            v[(i, 1)] = 2.0 * (i as f64 + 1.0);
        }
        let d = DesignMatrix {
            values: v.clone(),
            n: 5,
            d: 2,
            degree_j: 1,
            intercept: false,
        };
        let p = projector(&d).unwrap();
        assert_eq!(p.rank, 1);
        assert_abs_diff_eq!(&p.values * &v, v, epsilon = 1e-10);
    }

    #[test]
    fn condition_diagnostic_cases() {
        // orthonormal columns scaled by sqrt(n) -> (1, 1)
        let n = 4;
        let mut v = Matrix::zeros(n, 2);
        v[(0, 0)] = (n as f64).sqrt();
        v[(1, 1)] = (n as f64).sqrt();
        let d = DesignMatrix {
            values: v,
            n,
            d: 2,
            degree_j: 1,
            intercept: false,
        };
        let (lo, hi) = condition_diagnostic(&d, n).unwrap();
        assert_abs_diff_eq!(lo, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);

        // duplicated column -> lambda_min = 0
        let mut w = Matrix::zeros(5, 2);
        for i in 0..5 {
            w[(i, 0)] = i as f64 - 2.0;
            w[(i, 1)] = i as f64 - 2.0;
        }
        let d2 = DesignMatrix {
            values: w,
            n: 5,
            d: 2,
            degree_j: 1,
            intercept: false,
        };
        let (lo2, _) = condition_diagnostic(&d2, 5).unwrap();
        assert_abs_diff_eq!(lo2, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn condition_diagnostic_simulation_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (x, _) = simgen::gen_characteristics(200, 5, &mut rng);
        let d = build_design(&x, &SieveSpec::polynomial(5)).unwrap();
        let (lo, hi) = condition_diagnostic(&d, 200).unwrap();
        assert!(lo > 0.0, "lambda_min = {lo}");
        assert!(hi > lo);
    }

    #[test]
    fn polynomial_functions_are_reproduced_by_projection() {
        // Any b0 + sum_l sum_{j<=J} b_lj x_l^j is invariant under the projector.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, _) = simgen::gen_characteristics(50, 5, &mut rng);
        let spec = SieveSpec::polynomial(3);
        let d = build_design(&x, &spec).unwrap();
        let p = projector(&d).unwrap();
        let coefs = Matrix::from_fn(d.width(), 2, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let g = &d.values * coefs;
        let pg = &p.values * &g;
        let scale = g.norm().max(1.0);
        assert!((pg - &g).norm() / scale < 1e-8);
    }

    #[test]
    fn standardization_keeps_column_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, _) = simgen::gen_characteristics(40, 5, &mut rng);
        let plain = build_design(&x, &SieveSpec::polynomial(3)).unwrap();
        let scaled = build_design(&x, &SieveSpec::polynomial(3).with_standardize()).unwrap();
        let p1 = projector(&plain).unwrap();
        let p2 = projector(&scaled).unwrap();
        assert_abs_diff_eq!(p1.values, p2.values, epsilon = 1e-8);
    }
}
