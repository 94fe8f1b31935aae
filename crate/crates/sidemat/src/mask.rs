//! Observation masks and the block-missing geometry.

use crate::{Error, Matrix, Result};

/// How the observed cells of a panel were generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskPattern {
    /// Every cell observed.
    Full,
    /// Cells observed independently with a common probability.
    Bernoulli,
    /// All cells observed except a fixed bottom-right block.
    Block,
}

/// Binary N x T indicator of observed cells, with a pattern tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    flags: Vec<bool>,
    nrows: usize,
    ncols: usize,
    pattern: MaskPattern,
}

impl ObservationMask {
    /// All-ones mask.
    pub fn full(nrows: usize, ncols: usize) -> Self {
        Self {
            flags: vec![true; nrows * ncols],
            nrows,
            ncols,
            pattern: MaskPattern::Full,
        }
    }

    /// Build from row-major flags.
    pub fn from_flags(
        nrows: usize,
        ncols: usize,
        flags: Vec<bool>,
        pattern: MaskPattern,
    ) -> Result<Self> {
        if flags.len() != nrows * ncols {
            return Err(Error::Dimension(format!(
                "mask flags have length {}, expected {}x{}={}",
                flags.len(),
                nrows,
                ncols,
                nrows * ncols
            )));
        }
        Ok(Self {
            flags,
            nrows,
            ncols,
            pattern,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn pattern(&self) -> MaskPattern {
        self.pattern
    }

    #[inline]
    pub fn observed(&self, i: usize, j: usize) -> bool {
        self.flags[i * self.ncols + j]
    }

    pub fn n_observed(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn is_empty(&self) -> bool {
        self.n_observed() == 0
    }

    pub fn is_all_ones(&self) -> bool {
        self.flags.iter().all(|&f| f)
    }

    /// Fraction of observed cells.
    pub fn fraction_observed(&self) -> f64 {
        if self.flags.is_empty() {
            0.0
        } else {
            self.n_observed() as f64 / self.flags.len() as f64
        }
    }

    /// `Omega o Y`: observed entries kept, unobserved entries set to zero.
    ///
    /// Implemented by selection rather than multiplication so that arbitrary
    /// finite (or non-finite) values at unobserved cells cannot leak through.
    pub fn apply(&self, y: &Matrix) -> Result<Matrix> {
        self.check_shape(y)?;
        Ok(Matrix::from_fn(self.nrows, self.ncols, |i, j| {
            if self.observed(i, j) {
                y[(i, j)]
            } else {
                0.0
            }
        }))
    }

    pub fn check_shape(&self, y: &Matrix) -> Result<()> {
        if y.nrows() != self.nrows || y.ncols() != self.ncols {
            return Err(Error::Dimension(format!(
                "mask is {}x{} but matrix is {}x{}",
                self.nrows,
                self.ncols,
                y.nrows(),
                y.ncols()
            )));
        }
        Ok(())
    }

    /// Detect whether the zeros form exactly the block `{i >= n0} x {t >= t0}`
    /// (0-based) for some `0 < n0 < N`, `0 < t0 < T`.
    pub fn block_shape(&self) -> Option<BlockShape> {
        let first_missing = (0..self.nrows * self.ncols).position(|k| !self.flags[k])?;
        let (n0, t0) = (first_missing / self.ncols, first_missing % self.ncols);
        if n0 == 0 || t0 == 0 {
            return None;
        }
        let shape = BlockShape::new(self.nrows, self.ncols, n0, t0).ok()?;
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                if self.observed(i, j) != (i < n0 || j < t0) {
                    return None;
                }
            }
        }
        Some(shape)
    }
}

/// Geometry of the block-missing pattern: the bottom-right
/// `(N - N0) x (T - T0)` block is unobserved, everything else is observed.
///
/// `n0` counts the fully observed ("control") rows and `t0` the fully
/// observed ("pre-treatment") columns, both in canonical ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape {
    pub n: usize,
    pub t: usize,
    pub n0: usize,
    pub t0: usize,
}

impl BlockShape {
    pub fn new(n: usize, t: usize, n0: usize, t0: usize) -> Result<Self> {
        if n0 == 0 || n0 >= n {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= N0 < N, got N0={n0}, N={n}"
            )));
        }
        if t0 == 0 || t0 >= t {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= T0 < T, got T0={t0}, T={t}"
            )));
        }
        Ok(Self { n, t, n0, t0 })
    }

    /// Share of observed rows, `N0 / N`.
    pub fn delta_n(&self) -> f64 {
        self.n0 as f64 / self.n as f64
    }

    /// Share of observed columns, `T0 / T`.
    pub fn delta_t(&self) -> f64 {
        self.t0 as f64 / self.t as f64
    }

    /// Number of missing cells, `(N - N0)(T - T0)`.
    pub fn n_missing(&self) -> usize {
        (self.n - self.n0) * (self.t - self.t0)
    }

    /// True when cell `(i, t)` lies in the missing block.
    pub fn in_missing_block(&self, i: usize, t: usize) -> bool {
        i >= self.n0 && t >= self.t0
    }

    /// The observation mask this shape induces.
    pub fn mask(&self) -> ObservationMask {
        let mut flags = vec![true; self.n * self.t];
        for i in self.n0..self.n {
            for j in self.t0..self.t {
                flags[i * self.t + j] = false;
            }
        }
        ObservationMask {
            flags,
            nrows: self.n,
            ncols: self.t,
            pattern: MaskPattern::Block,
        }
    }
}
