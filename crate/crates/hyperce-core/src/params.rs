//! Channel parameter estimation from the wideband tracking reference
//! signal.
//!
//! A single TRS burst (156 stride-4 subcarriers × 4 symbols) is reduced to
//! empirical correlation statistics, and the four conditioning parameters
//! are recovered by correlation matching against the separable model:
//!
//! - **Mean delay** `τμ`: weighted least-squares slope of the unwrapped
//!   phase of the frequency correlation, `arg R̂_f(Δk) = −2π τμ Δk Δf`.
//! - **Delay width** `τw`: 1-D search fitting `|sinc(π τw Δk Δf)|` to the
//!   normalized correlation magnitudes.
//! - **Noise / SNR** `ν`: lag-0 power minus the delay-compensated lag-1
//!   correlation magnitude separates noise from signal power.
//! - **Doppler** `f_D`: 1-D search fitting `J0(2π f_D Ts Δn)` to the
//!   noise-corrected time correlations at the symbol lags the TRS offers.
//!
//! The stages compose in that order because the SNR split needs the fitted
//! delay width (to undo channel decorrelation at lag 1) and the Doppler fit
//! needs the noise power (to normalize time correlations by signal power).
//!
//! All estimators are deterministic functions of the field and
//! scale-equivariant: rotating the field by a unit-modulus constant changes
//! nothing.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{golden_section_min, trs_known_symbol, Observation};
use crate::correlation::{bessel_j0, sinc, ChannelParams};
use crate::grid::{trs_pattern, Numerology, PilotPattern};
use crate::{Error, Result};

/// Lower clamp for the estimated SNR (−5 dB).
pub const NU_FLOOR: f64 = 0.316_227_766_016_837_94; // 10^(-0.5)
/// Upper clamp for the estimated SNR (40 dB).
pub const NU_CEILING: f64 = 1e4;
/// Relative noise floor: the estimated noise power never drops below
/// `1e-6 · P0`, which also caps the SNR estimate before clamping.
const NOISE_FLOOR_FRACTION: f64 = 1e-6;
/// Maximum number of frequency lags entering the delay fits.
const MAX_FREQ_LAGS: usize = 16;

/// Least-squares channel estimates over the TRS lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct TrsLsField {
    /// Per-TRS-position LS ratios, subcarrier-major (`i * n_time + j`).
    pub values: Vec<Complex64>,
    /// The TRS pattern the values are aligned with.
    pub pattern: PilotPattern,
}

impl TrsLsField {
    /// Number of TRS subcarriers.
    pub fn n_freq(&self) -> usize {
        self.pattern.freq_indices.len()
    }

    /// Number of TRS symbols.
    pub fn n_time(&self) -> usize {
        self.pattern.time_indices.len()
    }

    /// The estimate at TRS subcarrier `i`, TRS symbol `j`.
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.n_time() + j]
    }

    /// Mean per-position power (the lag-0 statistic `P0`).
    pub fn lag0_power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }

    /// The raw-subcarrier spacing of the TRS comb.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] unless the subcarrier indices form a
    /// uniform comb with at least two teeth.
    pub fn freq_stride(&self) -> Result<usize> {
        let fi = &self.pattern.freq_indices;
        if fi.len() < 2 {
            return Err(Error::InvalidConfig(
                "TRS comb needs at least two subcarriers".into(),
            ));
        }
        let stride = fi[1] - fi[0];
        for w in fi.windows(2) {
            if w[1] - w[0] != stride {
                return Err(Error::InvalidConfig(
                    "TRS subcarriers are not uniformly spaced".into(),
                ));
            }
        }
        Ok(stride)
    }

    /// Empirical frequency correlation at `lag` comb steps, averaged over
    /// TRS symbols and all start positions. Lag 0 returns the mean power.
    pub fn freq_correlation(&self, lag: usize) -> Complex64 {
        if lag == 0 {
            return Complex64::new(self.lag0_power(), 0.0);
        }
        let (nf, nt) = (self.n_freq(), self.n_time());
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..nf - lag {
            for j in 0..nt {
                acc += self.get(i + lag, j) * self.get(i, j).conj();
            }
        }
        acc / ((nf - lag) * nt) as f64
    }

    /// Distinct symbol lags offered by the TRS symbol positions, ascending.
    pub fn symbol_lags(&self) -> Vec<usize> {
        let ti = &self.pattern.time_indices;
        let mut lags: Vec<usize> = Vec::new();
        for a in 0..ti.len() {
            for b in a + 1..ti.len() {
                let lag = ti[b] - ti[a];
                if !lags.contains(&lag) {
                    lags.push(lag);
                }
            }
        }
        lags.sort_unstable();
        lags
    }

    /// Empirical time correlation at a symbol lag, averaged over subcarriers
    /// and over every symbol pair at that lag.
    pub fn time_correlation(&self, lag: usize) -> Complex64 {
        let ti = &self.pattern.time_indices;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut count = 0usize;
        for a in 0..ti.len() {
            for b in a + 1..ti.len() {
                if ti[b] - ti[a] == lag {
                    for i in 0..self.n_freq() {
                        acc += self.get(i, b) * self.get(i, a).conj();
                    }
                    count += self.n_freq();
                }
            }
        }
        acc / count as f64
    }
}

/// Estimated channel parameters with estimation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedParams {
    /// The recovered parameter set (SNR clamped to the working range).
    pub params: ChannelParams,
    /// Fit quality information.
    pub diagnostics: ParamDiagnostics,
}

/// Diagnostics accompanying a parameter estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    /// Estimated signal power (lag-0 power minus estimated noise).
    pub signal_power: f64,
    /// Estimated noise power.
    pub noise_power: f64,
    /// Sum of the squared-error objectives of the delay-width and Doppler
    /// fits at their optima.
    pub fit_residual: f64,
}

/// Least-squares estimation over the TRS: divide each received TRS value by
/// the known transmitted symbol at its position.
///
/// # Errors
///
/// Returns [`Error::ShapeMismatch`] if the observation's TRS vector does not
/// match the numerology's TRS pattern.
pub fn trs_ls(obs: &Observation, num: &Numerology) -> Result<TrsLsField> {
    let pattern = trs_pattern(num);
    if obs.rx_trs.len() != pattern.num_pilots() {
        return Err(Error::ShapeMismatch(format!(
            "observation carries {} TRS values, pattern expects {}",
            obs.rx_trs.len(),
            pattern.num_pilots()
        )));
    }
    let values: Vec<Complex64> = pattern
        .positions()
        .zip(&obs.rx_trs)
        .map(|((k, n), y)| y / trs_known_symbol(k, n))
        .collect();
    Ok(TrsLsField { values, pattern })
}

/// Unwrap a phase sequence starting from 0, flagging ambiguity.
///
/// Each phase is shifted by the multiple of 2π that brings it closest to
/// its predecessor. A consecutive step above π/2 after unwrapping means the
/// underlying delay is too large for the lag spacing to track reliably.
fn unwrap_phases(raw: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(raw.len());
    let mut prev = 0.0f64;
    for (i, &phi) in raw.iter().enumerate() {
        let two_pi = 2.0 * std::f64::consts::PI;
        let adjusted = phi + two_pi * ((prev - phi) / two_pi).round();
        if (adjusted - prev).abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::Numerical(format!(
                "phase unwrap ambiguity at lag {}: step {:.3} rad exceeds pi/2",
                i + 1,
                adjusted - prev
            )));
        }
        out.push(adjusted);
        prev = adjusted;
    }
    Ok(out)
}

/// Number of frequency lags a field offers to the delay fits, capped at 16.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] below 8 lags.
fn usable_freq_lags(field: &TrsLsField) -> Result<usize> {
    let n_lags = MAX_FREQ_LAGS.min(field.n_freq().saturating_sub(1));
    if n_lags < 8 {
        return Err(Error::InvalidConfig(format!(
            "delay estimation needs >= 8 frequency lags, field offers {n_lags}"
        )));
    }
    Ok(n_lags)
}

/// Fit the delay width alone: minimize the squared error between the
/// normalized correlation magnitudes `|R̂_f(Δk)| / P0` and the model
/// `|sinc(π τw Δk Δf)|` over `τw ∈ [0, 1/(4 Δf s)]` (s = comb stride; the
/// upper end keeps the first lag short of the sinc alias). Returns the
/// fitted width and the objective value at the optimum.
///
/// Unlike the mean-delay phase fit, this magnitude fit stays well-posed even
/// when the true width pushes some lag past a sinc zero (where correlation
/// sign flips make phases ambiguous).
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] on a degenerate comb or too few lags
/// and [`Error::Numerical`] on an all-zero field.
pub fn fit_delay_width(field: &TrsLsField, num: &Numerology) -> Result<(f64, f64)> {
    let stride = field.freq_stride()?;
    let n_lags = usable_freq_lags(field)?;
    let p0 = field.lag0_power();
    if p0 <= 0.0 {
        return Err(Error::Numerical("all-zero TRS field".into()));
    }
    let df = num.subcarrier_spacing_hz;
    let mags: Vec<f64> = (1..=n_lags)
        .map(|m| field.freq_correlation(m).norm() / p0)
        .collect();
    let objective = |tw: f64| -> f64 {
        mags.iter()
            .enumerate()
            .map(|(m, &g)| {
                let x = std::f64::consts::PI * tw * ((m + 1) * stride) as f64 * df;
                let model = sinc(x).abs();
                (g - model) * (g - model)
            })
            .sum()
    };
    let hi = 1.0 / (4.0 * df * stride as f64);
    let delay_width_s = golden_section_min(&objective, 0.0, hi, 200);
    Ok((delay_width_s, objective(delay_width_s)))
}

/// Estimate `(mean_delay_s, delay_width_s)` from the TRS field.
///
/// The mean delay is the no-intercept weighted least-squares slope of the
/// unwrapped correlation phases against `−2π Δk Δf`, weighted by the
/// correlation magnitudes; the width comes from [`fit_delay_width`].
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] if fewer than 8 frequency lags are
/// available and [`Error::Numerical`] on phase-unwrap ambiguity or an
/// all-zero field.
pub fn estimate_delay_params(field: &TrsLsField, num: &Numerology) -> Result<(f64, f64)> {
    Ok(delay_fit(field, num)?.0)
}

/// Delay fit returning `((τ̂μ, τ̂w), width-fit residual)`.
fn delay_fit(field: &TrsLsField, num: &Numerology) -> Result<((f64, f64), f64)> {
    let stride = field.freq_stride()?;
    let n_lags = usable_freq_lags(field)?;
    let p0 = field.lag0_power();
    if p0 <= 0.0 {
        return Err(Error::Numerical("all-zero TRS field".into()));
    }
    let corr: Vec<Complex64> = (1..=n_lags).map(|m| field.freq_correlation(m)).collect();
    let raw_phases: Vec<f64> = corr.iter().map(|c| c.arg()).collect();
    let phases = unwrap_phases(&raw_phases)?;

    let df = num.subcarrier_spacing_hz;
    let mut num_acc = 0.0;
    let mut den_acc = 0.0;
    for (m, (phi, c)) in phases.iter().zip(&corr).enumerate() {
        let x = 2.0 * std::f64::consts::PI * ((m + 1) * stride) as f64 * df;
        let w = c.norm();
        num_acc += w * phi * x;
        den_acc += w * x * x;
    }
    let mean_delay_s = if den_acc > 0.0 { -num_acc / den_acc } else { 0.0 };

    let (delay_width_s, width_residual) = fit_delay_width(field, num)?;
    Ok(((mean_delay_s, delay_width_s), width_residual))
}

/// Estimate `(snr_linear, noise_power)` from the TRS field.
///
/// The lag-0 power carries signal plus noise; the lag-1 correlation carries
/// only signal, attenuated by the channel's own frequency decorrelation.
/// Dividing the lag-1 magnitude by the model `|sinc(π τ̂w s Δf)|` (using the
/// previously fitted delay width) undoes that attenuation, so the
/// difference estimates the noise power:
///
/// ```text
/// σ̂² = max(1e−6 · P0, P0 − |C₁| / |R_f(s)|),   ν̂ = (P0 − σ̂²) / σ̂²
/// ```
///
/// The returned `ν̂` is clamped to `[10^(−0.5), 10^4]` (−5 dB to 40 dB).
///
/// # Errors
///
/// Returns [`Error::Numerical`] for an all-zero field and propagates comb
/// validation errors.
pub fn estimate_snr(
    field: &TrsLsField,
    delay_width_s: f64,
    num: &Numerology,
) -> Result<(f64, f64)> {
    let stride = field.freq_stride()?;
    let p0 = field.lag0_power();
    if p0 <= 0.0 {
        return Err(Error::Numerical("all-zero TRS field".into()));
    }
    let c1 = field.freq_correlation(1).norm();
    let compensation = sinc(
        std::f64::consts::PI * delay_width_s * stride as f64 * num.subcarrier_spacing_hz,
    )
    .abs()
    .max(1e-6);
    let noise_power = (p0 - c1 / compensation).max(NOISE_FLOOR_FRACTION * p0);
    let nu = ((p0 - noise_power) / noise_power).clamp(NU_FLOOR, NU_CEILING);
    Ok((nu, noise_power))
}

/// Estimate the Doppler frequency from the TRS field.
///
/// Time correlations at the symbol lags the TRS offers, normalized by the
/// signal power `P0 − σ̂²`, are matched against `J0(2π f_D Ts Δn)` by a 1-D
/// search over `[0, 1/(2 Ts Δn_min)]` (pre-alias range of the shortest
/// lag). `noise_power` comes from [`estimate_snr`]; the composition in
/// [`estimate_params`] wires it through.
pub fn estimate_doppler(field: &TrsLsField, noise_power: f64, num: &Numerology) -> f64 {
    doppler_fit(field, noise_power, num).0
}

/// Doppler fit returning `(f̂_D, fit residual)`.
fn doppler_fit(field: &TrsLsField, noise_power: f64, num: &Numerology) -> (f64, f64) {
    let p0 = field.lag0_power();
    let denom = (p0 - noise_power).max(NOISE_FLOOR_FRACTION * p0);
    let lags = field.symbol_lags();
    let ratios: Vec<f64> = lags
        .iter()
        .map(|&lag| field.time_correlation(lag).re / denom)
        .collect();
    let ts = num.symbol_duration_s;
    let objective = |fd: f64| -> f64 {
        ratios
            .iter()
            .zip(&lags)
            .map(|(&r, &lag)| {
                let model = bessel_j0(2.0 * std::f64::consts::PI * fd * ts * lag as f64);
                (r - model) * (r - model)
            })
            .sum()
    };
    let min_lag = *lags.first().expect("TRS offers at least one symbol lag") as f64;
    let hi = 1.0 / (2.0 * ts * min_lag);
    let doppler = golden_section_min(&objective, 0.0, hi, 400);
    (doppler, objective(doppler))
}

/// Full parameter estimation from one observation: TRS least squares, then
/// the delay, SNR, and Doppler stages in dependency order.
///
/// # Errors
///
/// Propagates errors from the component stages.
pub fn estimate_params(obs: &Observation, num: &Numerology) -> Result<EstimatedParams> {
    let field = trs_ls(obs, num)?;
    let ((mean_delay_s, delay_width_s), width_residual) = delay_fit(&field, num)?;
    let (snr_linear, noise_power) = estimate_snr(&field, delay_width_s, num)?;
    let (doppler_hz, doppler_residual) = doppler_fit(&field, noise_power, num);
    let params = ChannelParams {
        mean_delay_s,
        delay_width_s,
        doppler_hz,
        snr_linear,
    };
    params.validate()?;
    Ok(EstimatedParams {
        params,
        diagnostics: ParamDiagnostics {
            signal_power: field.lag0_power() - noise_power,
            noise_power,
            fit_residual: width_residual + doppler_residual,
        },
    })
}
