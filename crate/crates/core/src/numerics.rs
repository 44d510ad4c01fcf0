//! Dense complex linear algebra and power allocation kernels.
//!
//! Matrices are `nalgebra` dynamic matrices over `Complex64`. The
//! decompositions here wrap nalgebra's and add the input validation and
//! ordering guarantees the rest of the crate relies on; water-filling is
//! implemented directly.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix (channel matrices, beamformer stacks).
pub type ComplexMatrix = DMatrix<Complex64>;
/// Dense complex column vector.
pub type ComplexVector = DVector<Complex64>;

/// Singular values below this fraction of the largest are treated as zero
/// when summing capacities.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("matrix is singular or not positive definite (condition estimate {condition:.3e})")]
    NotPositiveDefinite { condition: f64 },
}

/// Result of a singular value decomposition `matrix = U diag(s) V^H`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    /// `rows x k` with orthonormal columns, `k = min(rows, cols)`.
    pub left: ComplexMatrix,
    /// `cols x k` with orthonormal columns.
    pub right: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let k = self.singular_values.len();
        let mut scaled = self.left.clone();
        for (j, s) in self.singular_values.iter().enumerate().take(k) {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.right.adjoint()
    }

    /// Squared singular values above the rank tolerance.
    pub fn power_gains(&self) -> Vec<f64> {
        significant_power_gains(&self.singular_values)
    }
}

/// Squares the singular values, dropping those below [`RANK_TOLERANCE`]
/// times the largest.
pub fn significant_power_gains(singular_values: &[f64]) -> Vec<f64> {
    let max = singular_values.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Vec::new();
    }
    singular_values
        .iter()
        .filter(|s| **s > RANK_TOLERANCE * max)
        .map(|s| s * s)
        .collect()
}

fn ensure_finite(matrix: &ComplexMatrix, what: &str) -> Result<(), NumericsError> {
    if matrix.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Full (thin) singular value decomposition with singular values sorted in
/// non-increasing order.
pub fn svd(matrix: &ComplexMatrix) -> Result<Svd, NumericsError> {
    ensure_finite(matrix, "matrix")?;
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return Err(NumericsError::InvalidInput("empty matrix".into()));
    }
    let decomposition = matrix.clone().svd(true, true);
    let u = decomposition.u.expect("requested U");
    let v_t = decomposition.v_t.expect("requested V^H");
    let values = decomposition.singular_values;

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let k = order.len();
    let mut left = ComplexMatrix::zeros(rows, k);
    let mut right = ComplexMatrix::zeros(cols, k);
    let mut singular_values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        singular_values.push(values[src]);
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v_t.row(src).adjoint());
    }
    Ok(Svd {
        singular_values,
        left,
        right,
    })
}

/// Singular values only, non-increasing.
pub fn singular_values(matrix: &ComplexMatrix) -> Result<Vec<f64>, NumericsError> {
    ensure_finite(matrix, "matrix")?;
    if matrix.is_empty() {
        return Ok(Vec::new());
    }
    let mut values: Vec<f64> = matrix.singular_values().iter().cloned().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Water-filling power split over parallel channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub powers: Vec<f64>,
    pub water_level: f64,
}

impl PowerAllocation {
    /// `sum_i log2(1 + p_i g_i / noise)`.
    pub fn rate(&self, gains: &[f64], noise: f64) -> f64 {
        self.powers
            .iter()
            .zip(gains)
            .map(|(p, g)| (p * g / noise).ln_1p())
            .sum::<f64>()
            / std::f64::consts::LN_2
    }

    pub fn total(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// Capacity-maximising power allocation `p_i = max(0, mu - noise/g_i)` with
/// `sum p_i = budget`.
///
/// The water level is located by bisection on `[0, noise/g_max + budget]`
/// and then snapped to the closed form for the resulting active set. Zero
/// gains receive no power.
pub fn water_fill(gains: &[f64], budget: f64, noise: f64) -> Result<PowerAllocation, NumericsError> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(NumericsError::InvalidInput(format!(
            "power budget must be positive, got {budget}"
        )));
    }
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(NumericsError::InvalidInput(format!(
            "noise power must be positive, got {noise}"
        )));
    }
    if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(NumericsError::InvalidInput(
            "gains must be finite and non-negative".into(),
        ));
    }
    let floors: Vec<Option<f64>> = gains.iter().map(|&g| (g > 0.0).then(|| noise / g)).collect();
    let min_floor = floors.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    if min_floor == f64::INFINITY {
        return Err(NumericsError::Degenerate("all channel gains are zero".into()));
    }

    let filled = |mu: f64| -> f64 { floors.iter().flatten().map(|f| (mu - f).max(0.0)).sum() };

    // At mu = min floor + budget the strongest channel alone takes the whole
    // budget. The looser bound noise/g_min + budget spans hundreds of orders
    // of magnitude when numerically-zero singular values are present.
    let (mut lo, mut hi) = (0.0, min_floor + budget);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let total = filled(mid);
        if (total - budget).abs() <= 1e-12 * budget {
            lo = mid;
            hi = mid;
            break;
        }
        if total > budget {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let mut mu = 0.5 * (lo + hi);

    // Snap to the exact level for the active set found by bisection.
    let active: Vec<f64> = floors.iter().flatten().filter(|f| **f < mu).cloned().collect();
    if !active.is_empty() {
        let exact = (budget + active.iter().sum::<f64>()) / active.len() as f64;
        let consistent =
            active.iter().all(|f| *f < exact) && floors.iter().flatten().filter(|f| **f >= mu).all(|f| *f >= exact);
        if consistent {
            mu = exact;
        }
    }

    let powers = floors
        .iter()
        .map(|f| match f {
            Some(f) => (mu - f).max(0.0),
            None => 0.0,
        })
        .collect();
    Ok(PowerAllocation {
        powers,
        water_level: mu,
    })
}

/// Water-filled sum rate over parallel channels in bits per channel use.
/// Returns zero when every gain is zero.
pub fn water_filled_rate(gains: &[f64], budget: f64, noise: f64) -> Result<f64, NumericsError> {
    match water_fill(gains, budget, noise) {
        Ok(allocation) => Ok(allocation.rate(gains, noise)),
        Err(NumericsError::Degenerate(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Solves `C x = b` for Hermitian positive definite `C` by Cholesky.
pub fn hermitian_solve(c: &ComplexMatrix, b: &ComplexVector) -> Result<ComplexVector, NumericsError> {
    ensure_finite(c, "matrix")?;
    let n = c.nrows();
    if n == 0 || c.ncols() != n {
        return Err(NumericsError::InvalidInput(format!(
            "matrix must be square, got {}x{}",
            n,
            c.ncols()
        )));
    }
    if b.len() != n {
        return Err(NumericsError::InvalidInput(format!(
            "rhs length {} does not match {}",
            b.len(),
            n
        )));
    }
    let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let asymmetry = (c - c.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if asymmetry > 1e-12 * scale {
        return Err(NumericsError::InvalidInput(format!(
            "matrix is not Hermitian (max |C - C^H| = {asymmetry:.3e})"
        )));
    }
    let condition = || {
        let s = c.singular_values();
        let max = s.max();
        let min = s.min();
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    };
    let chol = c
        .clone()
        .cholesky()
        .ok_or_else(|| NumericsError::NotPositiveDefinite { condition: condition() })?;
    // The complex factorisation takes complex square roots, so a negative
    // pivot shows up as a non-real diagonal entry rather than a failure.
    let factor = chol.l_dirty();
    let pivots_ok = (0..n).all(|i| {
        let d = factor[(i, i)];
        d.re > 0.0 && d.im.abs() <= 1e-12 * d.re
    });
    if !pivots_ok {
        return Err(NumericsError::NotPositiveDefinite { condition: condition() });
    }
    let x = chol.solve(b);
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(NumericsError::NotPositiveDefinite { condition: condition() });
    }
    Ok(x)
}

/// Frobenius norm squared.
pub fn frobenius_sq(matrix: &ComplexMatrix) -> f64 {
    matrix.iter().map(|z| z.norm_sqr()).sum()
}
