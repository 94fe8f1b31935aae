//! Noise-scale estimation from the doubly-projected residual block.
//!
//! Two estimators are provided. The root-mean-square rule divides the
//! Frobenius norm of the residual block by the square root of its effective
//! cell count; it is exact for pure noise but inflates whenever the block
//! still carries low-rank signal. The spectral-median rule reads the noise
//! scale off the median singular value via the Marchenko-Pastur law, which a
//! low-rank contamination of the top of the spectrum leaves untouched; the
//! automatic penalty schedules use it for that reason.

use crate::{Error, Matrix, Result};

/// Root-mean-square noise scale of a residual block:
/// `||R||_F / sqrt(rows_eff * cols_eff)`.
pub fn sigma_rms(resid: &Matrix, rows_eff: usize, cols_eff: usize) -> Result<f64> {
    if rows_eff == 0 || cols_eff == 0 {
        return Err(Error::Degenerate(
            "residual block has no effective cells; projector rank equals a matrix dimension"
                .to_string(),
        ));
    }
    Ok(resid.norm() / ((rows_eff * cols_eff) as f64).sqrt())
}

/// Noise scale from the median of a residual spectrum.
///
/// `singular_values` must be sorted descending; `rows_eff x cols_eff` are the
/// effective dimensions of the block (matrix dimensions minus projector
/// ranks). For an i.i.d. noise block the squared median singular value
/// concentrates at `max_dim * sigma^2 * median(MP_beta)` with
/// `beta = min_dim / max_dim`.
pub fn sigma_spectral_median(
    singular_values: &[f64],
    rows_eff: usize,
    cols_eff: usize,
) -> Result<f64> {
    if rows_eff == 0 || cols_eff == 0 {
        return Err(Error::Degenerate(
            "residual block has no effective cells".to_string(),
        ));
    }
    let m = rows_eff.min(cols_eff);
    let n = rows_eff.max(cols_eff);
    if singular_values.is_empty() {
        return Err(Error::Degenerate("empty spectrum".to_string()));
    }
    // The residual block has at most m nonzero singular values; anything past
    // that is rank-truncation noise and must not drag the median down.
    let k = m.min(singular_values.len());
    let spectrum = &singular_values[..k];
    let median = if k % 2 == 1 {
        spectrum[k / 2]
    } else {
        0.5 * (spectrum[k / 2 - 1] + spectrum[k / 2])
    };
    let beta = m as f64 / n as f64;
    Ok(median / (n as f64 * marchenko_pastur_median(beta)).sqrt())
}

/// Median of the Marchenko-Pastur distribution with aspect ratio
/// `beta = m / n <= 1` and unit variance, by numerical integration of the
/// density on its support `[(1 - sqrt(beta))^2, (1 + sqrt(beta))^2]`.
pub fn marchenko_pastur_median(beta: f64) -> f64 {
    let beta = beta.clamp(1e-12, 1.0);
    let a = (1.0 - beta.sqrt()).powi(2);
    let b = (1.0 + beta.sqrt()).powi(2);
    let steps = 20_000usize;
    let h = (b - a) / steps as f64;
    let density = |x: f64| {
        let arg = (b - x) * (x - a);
        if arg <= 0.0 || x <= 0.0 {
            0.0
        } else {
            arg.sqrt() / (2.0 * std::f64::consts::PI * beta * x)
        }
    };
    // trapezoid cumulative; the total integrates to 1 up to discretization
    let mut cum = vec![0.0f64; steps + 1];
    let mut prev = density(a);
    for k in 1..=steps {
        let x = a + k as f64 * h;
        let cur = density(x);
        cum[k] = cum[k - 1] + 0.5 * (prev + cur) * h;
        prev = cur;
    }
    let total = cum[steps];
    let half = 0.5 * total;
    let idx = cum.partition_point(|&c| c < half);
    if idx == 0 {
        return a;
    }
    let (c0, c1) = (cum[idx - 1], cum[idx]);
    let frac = if c1 > c0 { (half - c0) / (c1 - c0) } else { 0.0 };
    a + (idx as f64 - 1.0 + frac) * h
}
