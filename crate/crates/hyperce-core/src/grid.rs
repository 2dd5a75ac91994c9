//! OFDM numerology, resource grids, and pilot patterns.
//!
//! The workbench operates on two nested grids:
//!
//! - a **wideband grid** spanning the whole simulated bandwidth over two
//!   14-symbol subframes, on which the channel is realized and the tracking
//!   reference signal (TRS) lives, and
//! - a **data grid**, a contiguous subband/time window of the wideband grid
//!   that carries data and demodulation reference signals (DMRS) and is the
//!   target of channel estimation.
//!
//! [`Numerology`] fixes the dimensions of both and where the data grid sits
//! inside the wideband grid. [`ResourceGrid`] is a dense complex matrix over
//! subcarriers × symbols, used for transmitted symbols, received symbols, and
//! channel responses alike. [`PilotPattern`] describes a rectangular lattice
//! of pilot resource elements as the Cartesian product of a subcarrier index
//! list and a symbol index list.
//!
//! ## Example
//!
//! ```rust
//! use hyperce_core::grid::{default_numerology, dmrs_pattern};
//!
//! let num = default_numerology();
//! assert_eq!(num.data_subcarriers, 48);
//! assert_eq!(num.data_symbols, 12);
//!
//! let dmrs = dmrs_pattern(&num);
//! assert_eq!(dmrs.num_pilots(), 48); // 24 subcarriers x 2 symbols
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Numerology
// ---------------------------------------------------------------------------

/// OFDM numerology and grid geometry shared by all modules.
///
/// Serializes to JSON with exactly these field names; the document is embedded
/// in dataset manifests so that stored samples are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Numerology {
    /// Subcarrier spacing Δf in Hz.
    pub subcarrier_spacing_hz: f64,
    /// OFDM symbol duration Ts in seconds (cyclic prefix absorbed).
    pub symbol_duration_s: f64,
    /// Number of subcarriers in the data grid (N_f).
    pub data_subcarriers: usize,
    /// Number of OFDM symbols in the data grid (N_t).
    pub data_symbols: usize,
    /// Number of subcarriers in the wideband grid.
    pub wideband_subcarriers: usize,
    /// Number of OFDM symbols in the wideband grid.
    pub wideband_symbols: usize,
    /// First wideband subcarrier of the data subband.
    pub data_band_offset: usize,
    /// First wideband symbol of the data time window.
    pub data_symbol_offset: usize,
}

impl Numerology {
    /// Check all structural invariants.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] if the data window does not fit inside
    /// the wideband grid, or any spacing/duration/count is non-positive.
    pub fn validate(&self) -> Result<()> {
        if !(self.subcarrier_spacing_hz > 0.0) || !(self.symbol_duration_s > 0.0) {
            return Err(Error::InvalidConfig(
                "subcarrier spacing and symbol duration must be positive".into(),
            ));
        }
        if self.data_subcarriers == 0
            || self.data_symbols == 0
            || self.wideband_subcarriers == 0
            || self.wideband_symbols == 0
        {
            return Err(Error::InvalidConfig("grid dimensions must be >= 1".into()));
        }
        if self.data_band_offset + self.data_subcarriers > self.wideband_subcarriers {
            return Err(Error::InvalidConfig(format!(
                "data subband [{}, {}) exceeds {} wideband subcarriers",
                self.data_band_offset,
                self.data_band_offset + self.data_subcarriers,
                self.wideband_subcarriers
            )));
        }
        if self.data_symbol_offset + self.data_symbols > self.wideband_symbols {
            return Err(Error::InvalidConfig(format!(
                "data time window [{}, {}) exceeds {} wideband symbols",
                self.data_symbol_offset,
                self.data_symbol_offset + self.data_symbols,
                self.wideband_symbols
            )));
        }
        Ok(())
    }
}

/// The default numerology used throughout the workbench.
///
/// 15 kHz subcarrier spacing, 1/14 ms symbol duration (14 symbols per 1 ms
/// slot), a 48 × 12 data grid centered inside a 624-subcarrier wideband grid
/// spanning two 14-symbol subframes, with the data window starting at
/// wideband symbol 2.
pub fn default_numerology() -> Numerology {
    Numerology {
        subcarrier_spacing_hz: 15_000.0,
        symbol_duration_s: 1e-3 / 14.0,
        data_subcarriers: 48,
        data_symbols: 12,
        wideband_subcarriers: 624,
        wideband_symbols: 28,
        data_band_offset: 288,
        data_symbol_offset: 2,
    }
}

// ---------------------------------------------------------------------------
// ResourceGrid
// ---------------------------------------------------------------------------

/// A dense complex matrix over subcarriers × OFDM symbols.
///
/// Values are stored subcarrier-major: entry `(k, n)` lives at index
/// `k * n_symbols + n`. The same container holds transmitted symbols,
/// received symbols, or channel responses depending on context.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    n_subcarriers: usize,
    n_symbols: usize,
    values: Vec<Complex64>,
}

impl ResourceGrid {
    /// Create an all-zero grid.
    pub fn zeros(n_subcarriers: usize, n_symbols: usize) -> Self {
        Self {
            n_subcarriers,
            n_symbols,
            values: vec![Complex64::new(0.0, 0.0); n_subcarriers * n_symbols],
        }
    }

    /// Create a grid from subcarrier-major values.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if `values.len()` differs from
    /// `n_subcarriers * n_symbols`.
    pub fn from_values(
        n_subcarriers: usize,
        n_symbols: usize,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if values.len() != n_subcarriers * n_symbols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for a {} x {} grid, got {}",
                n_subcarriers * n_symbols,
                n_subcarriers,
                n_symbols,
                values.len()
            )));
        }
        Ok(Self {
            n_subcarriers,
            n_symbols,
            values,
        })
    }

    /// Number of subcarriers (rows).
    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    /// Number of OFDM symbols (columns).
    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    /// Value at subcarrier `k`, symbol `n`.
    #[inline]
    pub fn get(&self, k: usize, n: usize) -> Complex64 {
        debug_assert!(k < self.n_subcarriers && n < self.n_symbols);
        self.values[k * self.n_symbols + n]
    }

    /// Set the value at subcarrier `k`, symbol `n`.
    #[inline]
    pub fn set(&mut self, k: usize, n: usize, v: Complex64) {
        debug_assert!(k < self.n_subcarriers && n < self.n_symbols);
        self.values[k * self.n_symbols + n] = v;
    }

    /// Subcarrier-major view of all values.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Mutable subcarrier-major view of all values.
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Sum of squared magnitudes over the whole grid.
    pub fn power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Copy a rectangular window into a new grid.
    ///
    /// The window starts at `(k0, n0)` and spans `n_subcarriers × n_symbols`
    /// entries of the source grid.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if the window exceeds the source.
    pub fn window(
        &self,
        k0: usize,
        n0: usize,
        n_subcarriers: usize,
        n_symbols: usize,
    ) -> Result<ResourceGrid> {
        if k0 + n_subcarriers > self.n_subcarriers || n0 + n_symbols > self.n_symbols {
            return Err(Error::ShapeMismatch(format!(
                "window {}+{} x {}+{} exceeds {} x {} grid",
                k0, n_subcarriers, n0, n_symbols, self.n_subcarriers, self.n_symbols
            )));
        }
        let mut out = ResourceGrid::zeros(n_subcarriers, n_symbols);
        for k in 0..n_subcarriers {
            for n in 0..n_symbols {
                out.set(k, n, self.get(k0 + k, n0 + n));
            }
        }
        Ok(out)
    }

    /// Check that every entry is finite.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Numerical`] on the first non-finite entry.
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite grid entry at flat index {i}: {v}"
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// PilotPattern
// ---------------------------------------------------------------------------

/// Which reference signal a pattern describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PilotKind {
    /// Demodulation reference signal inside the data grid.
    Dmrs,
    /// Tracking reference signal on the wideband grid.
    Trs,
}

/// A rectangular lattice of pilot resource elements.
///
/// The pilot set is the Cartesian product `freq_indices × time_indices`;
/// both index lists are strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotPattern {
    /// Subcarrier indices carrying pilots (strictly increasing).
    pub freq_indices: Vec<usize>,
    /// OFDM symbol indices carrying pilots (strictly increasing).
    pub time_indices: Vec<usize>,
    /// Which reference signal this pattern describes.
    pub kind: PilotKind,
}

impl PilotPattern {
    /// Total number of pilot resource elements (product of the two lists).
    pub fn num_pilots(&self) -> usize {
        self.freq_indices.len() * self.time_indices.len()
    }

    /// Check ordering and bounds against a grid of the given dimensions.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] if either index list is empty or not
    /// strictly increasing, or any index falls outside the grid.
    pub fn validate(&self, n_subcarriers: usize, n_symbols: usize) -> Result<()> {
        fn check(name: &str, indices: &[usize], bound: usize) -> Result<()> {
            if indices.is_empty() {
                return Err(Error::InvalidConfig(format!("{name} indices are empty")));
            }
            for w in indices.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::InvalidConfig(format!(
                        "{name} indices not strictly increasing: {} then {}",
                        w[0], w[1]
                    )));
                }
            }
            if *indices.last().unwrap() >= bound {
                return Err(Error::InvalidConfig(format!(
                    "{name} index {} out of bounds for {} entries",
                    indices.last().unwrap(),
                    bound
                )));
            }
            Ok(())
        }
        check("frequency", &self.freq_indices, n_subcarriers)?;
        check("time", &self.time_indices, n_symbols)
    }

    /// Iterate over all pilot positions `(k, n)` in subcarrier-major order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.freq_indices
            .iter()
            .flat_map(move |&k| self.time_indices.iter().map(move |&n| (k, n)))
    }
}

/// The DMRS pattern on the data grid: symbols {0, 9} relative to the data
/// window, pilots on every even data subcarrier (24 of 48).
pub fn dmrs_pattern(num: &Numerology) -> PilotPattern {
    PilotPattern {
        freq_indices: (0..num.data_subcarriers).step_by(2).collect(),
        time_indices: vec![0, 9],
        kind: PilotKind::Dmrs,
    }
}

/// The TRS pattern on the wideband grid: symbols {6, 10, 20, 24} (two bursts
/// of two symbols, one per subframe), pilots on every fourth wideband
/// subcarrier (156 of 624).
pub fn trs_pattern(num: &Numerology) -> PilotPattern {
    PilotPattern {
        freq_indices: (0..num.wideband_subcarriers).step_by(4).collect(),
        time_indices: vec![6, 10, 20, 24],
        kind: PilotKind::Trs,
    }
}
