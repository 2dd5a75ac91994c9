//! Classical channel estimators: pilot least squares, bilinear
//! interpolation, Wiener smoothing, and the NMSE metric.
//!
//! The estimation chain starts from per-pilot least-squares ratios
//! `ĥ = y / x`, then fills the full data grid either by separable bilinear
//! interpolation or by the Wiener (LMMSE) filter
//!
//! ```text
//! ĥ_full = R_cross · (R_auto + ν⁻¹ I)⁻¹ · ĥ_pilots
//! ```
//!
//! built from the separable correlation model in [`crate::correlation`].
//! The Wiener filter targets *all* grid positions, pilots included, so its
//! output doubles as a denoised full-grid input for downstream models.

use num_complex::Complex64;

use crate::channel::Observation;
use crate::correlation::{build_wiener_matrices, ChannelParams};
use crate::grid::{Numerology, PilotPattern, ResourceGrid};
use crate::linalg::{cholesky, cholesky_solve, CMat};
use crate::{Error, Result};

/// Least-squares channel estimates at pilot positions.
///
/// `values` is stored subcarrier-major: entry `i * n_time + j` corresponds
/// to pilot subcarrier index `i` and pilot symbol index `j` of `pattern`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotLsEstimates {
    /// Per-pilot LS ratios in subcarrier-major pattern order.
    pub values: Vec<Complex64>,
    /// The pilot pattern the values are aligned with.
    pub pattern: PilotPattern,
}

impl PilotLsEstimates {
    /// Number of pilot subcarriers.
    pub fn n_freq(&self) -> usize {
        self.pattern.freq_indices.len()
    }

    /// Number of pilot symbols.
    pub fn n_time(&self) -> usize {
        self.pattern.time_indices.len()
    }

    /// The estimate for pilot subcarrier `i`, pilot symbol `j`.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.n_time() + j]
    }
}

/// How a full-grid estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMethod {
    /// Separable bilinear interpolation of pilot LS values.
    Bilinear,
    /// Wiener (LMMSE) smoothing under the separable correlation model.
    Wiener,
    /// A learned model's output.
    Model,
}

/// A channel estimate covering the full data grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FullGridEstimate {
    /// Estimated h(k, n) over the data grid.
    pub values: ResourceGrid,
    /// Producing method.
    pub method: EstimateMethod,
}

/// Per-pilot least-squares estimation: `ĥ = y / x` at each pilot position.
///
/// `pattern` must be the pattern `obs.tx_dmrs` was generated against; the
/// received values are read from `obs.rx_data_grid`.
///
/// # Errors
///
/// Returns [`Error::ShapeMismatch`] if the pattern does not match the
/// observation, and [`Error::InvalidConfig`] on a zero pilot symbol.
pub fn ls_estimate(obs: &Observation, pattern: &PilotPattern) -> Result<PilotLsEstimates> {
    pattern.validate(obs.rx_data_grid.n_subcarriers(), obs.rx_data_grid.n_symbols())?;
    if pattern.num_pilots() != obs.tx_dmrs.len() {
        return Err(Error::ShapeMismatch(format!(
            "pattern has {} pilots but observation carries {} pilot symbols",
            pattern.num_pilots(),
            obs.tx_dmrs.len()
        )));
    }
    let mut values = Vec::with_capacity(pattern.num_pilots());
    for (idx, (k, n)) in pattern.positions().enumerate() {
        let x = obs.tx_dmrs[idx];
        if x.norm() == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "zero pilot symbol at ({k}, {n})"
            )));
        }
        values.push(obs.rx_data_grid.get(k, n) / x);
    }
    Ok(PilotLsEstimates {
        values,
        pattern: pattern.clone(),
    })
}

/// Linear interpolation of `(anchor, value)` samples at `x`, clamping to the
/// first/last anchor outside the covered range. Anchors must be strictly
/// increasing.
fn interp_clamped(anchors: &[usize], values: &[Complex64], x: usize) -> Complex64 {
    debug_assert_eq!(anchors.len(), values.len());
    if x <= anchors[0] {
        return values[0];
    }
    if x >= *anchors.last().unwrap() {
        return *values.last().unwrap();
    }
    // x is strictly inside; find the segment [a_i, a_{i+1}) containing it.
    let mut hi = 1;
    while anchors[hi] < x {
        hi += 1;
    }
    let lo = hi - 1;
    let t = (x - anchors[lo]) as f64 / (anchors[hi] - anchors[lo]) as f64;
    values[lo] * (1.0 - t) + values[hi] * t
}

/// Fill the data grid by separable bilinear interpolation of pilot LS
/// values: linear in frequency along each pilot symbol, then linear in time,
/// with nearest-edge clamping outside the pilot hull.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] unless the pattern has at least two
/// pilot subcarriers and two pilot symbols.
pub fn bilinear_init(pilots: &PilotLsEstimates, num: &Numerology) -> Result<FullGridEstimate> {
    let n_f = pilots.n_freq();
    let n_t = pilots.n_time();
    if n_f < 2 || n_t < 2 {
        return Err(Error::InvalidConfig(format!(
            "bilinear interpolation needs a >= 2 x 2 pilot lattice, got {n_f} x {n_t}"
        )));
    }
    if pilots.values.len() != n_f * n_t {
        return Err(Error::ShapeMismatch(format!(
            "pilot values {} do not fill a {n_f} x {n_t} lattice",
            pilots.values.len()
        )));
    }
    let freq_anchors = &pilots.pattern.freq_indices;
    let time_anchors = &pilots.pattern.time_indices;

    // Stage 1: interpolate along frequency at each pilot symbol.
    let mut columns = vec![Complex64::new(0.0, 0.0); num.data_subcarriers * n_t];
    for j in 0..n_t {
        let col: Vec<Complex64> = (0..n_f).map(|i| pilots.get(i, j)).collect();
        for k in 0..num.data_subcarriers {
            columns[k * n_t + j] = interp_clamped(freq_anchors, &col, k);
        }
    }

    // Stage 2: interpolate along time at each subcarrier.
    let mut grid = ResourceGrid::zeros(num.data_subcarriers, num.data_symbols);
    for k in 0..num.data_subcarriers {
        let row = &columns[k * n_t..(k + 1) * n_t];
        for n in 0..num.data_symbols {
            grid.set(k, n, interp_clamped(time_anchors, row, n));
        }
    }
    Ok(FullGridEstimate {
        values: grid,
        method: EstimateMethod::Bilinear,
    })
}

/// Diagonal regularization for the Wiener solve: the model noise term
/// `ν⁻¹`, or a tiny ridge when the noiseless sentinel makes it vanish.
fn wiener_regularization(params: &ChannelParams) -> f64 {
    if params.snr_linear.is_infinite() {
        1e-12
    } else {
        1.0 / params.snr_linear
    }
}

/// Wiener (LMMSE) smoothing of pilot LS values onto the full data grid.
///
/// Computes `R_cross · (R_auto + ν⁻¹ I)⁻¹ · ĥ_pilots` with the correlation
/// matrices of the separable channel model, solving through a Cholesky
/// factorization (no explicit inverse). The target set is every data-grid
/// position, pilots included.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] for invalid parameters and
/// [`Error::Numerical`] if the regularized pilot correlation matrix is not
/// positive definite.
pub fn wiener_estimate(
    pilots: &PilotLsEstimates,
    params: &ChannelParams,
    num: &Numerology,
) -> Result<FullGridEstimate> {
    params.validate()?;
    let pilot_positions: Vec<(usize, usize)> = pilots.pattern.positions().collect();
    if pilot_positions.len() != pilots.values.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} pilot values for {} pattern positions",
            pilots.values.len(),
            pilot_positions.len()
        )));
    }
    let mut targets = Vec::with_capacity(num.data_subcarriers * num.data_symbols);
    for k in 0..num.data_subcarriers {
        for n in 0..num.data_symbols {
            targets.push((k, n));
        }
    }
    let (cross, mut auto) = build_wiener_matrices(&targets, &pilot_positions, params, num);
    auto.add_diagonal(wiener_regularization(params));
    let factor = cholesky(&auto)?;
    let rhs = CMat::from_fn(pilot_positions.len(), 1, |i, _| pilots.values[i]);
    let weights = cholesky_solve(&factor, &rhs);
    let smoothed = cross.mul(&weights);

    let mut grid = ResourceGrid::zeros(num.data_subcarriers, num.data_symbols);
    for (idx, &(k, n)) in targets.iter().enumerate() {
        grid.set(k, n, smoothed.get(idx, 0));
    }
    Ok(FullGridEstimate {
        values: grid,
        method: EstimateMethod::Wiener,
    })
}

/// Normalized mean squared error `‖estimate − truth‖² / ‖truth‖²`.
///
/// # Errors
///
/// Returns [`Error::ShapeMismatch`] on differing shapes and
/// [`Error::InvalidConfig`] for an all-zero truth grid.
pub fn nmse(estimate: &ResourceGrid, truth: &ResourceGrid) -> Result<f64> {
    if estimate.n_subcarriers() != truth.n_subcarriers()
        || estimate.n_symbols() != truth.n_symbols()
    {
        return Err(Error::ShapeMismatch(format!(
            "estimate {} x {} vs truth {} x {}",
            estimate.n_subcarriers(),
            estimate.n_symbols(),
            truth.n_subcarriers(),
            truth.n_symbols()
        )));
    }
    let denom = truth.power();
    if denom == 0.0 {
        return Err(Error::InvalidConfig("all-zero truth grid".into()));
    }
    let num: f64 = estimate
        .values()
        .iter()
        .zip(truth.values())
        .map(|(e, t)| (e - t).norm_sqr())
        .sum();
    Ok(num / denom)
}
