//! Estimator benchmark sweeps: run a registry of channel estimators over a
//! dataset and aggregate per-scenario NMSE into a report table.
//!
//! Every estimator shares one pipeline per sample: least squares at the
//! DMRS pilots, an initial full-grid estimate (bilinear interpolation or a
//! Wiener smoother driven by channel parameters), optionally a learned
//! refinement network, then NMSE against the stored ground truth. TRS-based
//! parameter estimates recorded on the dataset feed the Wiener smoother and
//! the hypernetwork — matching deployment, where true parameters are
//! unavailable — unless the oracle option substitutes the true values.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::TdlProfileName;
use crate::correlation::ChannelParams;
use crate::dataset::{DatasetManifest, DatasetSample};
use crate::estimators::{bilinear_init, ls_estimate, nmse, wiener_estimate};
use crate::grid::{dmrs_pattern, Numerology};
use crate::model::{ForwardMode, Model, ModelConfig, TrainSample};
use crate::{Error, Result};

/// The benchmark estimator registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Least squares at the pilots, bilinearly interpolated.
    LsBilinear,
    /// Wiener smoothing of the pilot estimates under estimated parameters.
    Lmmse,
    /// UNet refinement of the bilinear initialization (no hypernetwork).
    UnetBilinear,
    /// Hypernetwork-conditioned UNet over the bilinear initialization.
    HyperceBilinear,
    /// Hypernetwork-conditioned UNet over the Wiener initialization.
    HyperceWn,
    /// [`EstimatorKind::HyperceWn`] plus channel attention.
    HyperceWnCa,
    /// Debug pseudo-estimator that returns the ground truth.
    PerfectCsi,
}

/// The six benchmark estimators, in reporting order (the perfect-CSI
/// pseudo-estimator is debug-only and excluded).
pub const REGISTRY: [EstimatorKind; 6] = [
    EstimatorKind::LsBilinear,
    EstimatorKind::Lmmse,
    EstimatorKind::UnetBilinear,
    EstimatorKind::HyperceBilinear,
    EstimatorKind::HyperceWn,
    EstimatorKind::HyperceWnCa,
];

impl EstimatorKind {
    /// Stable registry label.
    pub fn label(&self) -> &'static str {
        match self {
            Self::LsBilinear => "LS_BILINEAR",
            Self::Lmmse => "LMMSE",
            Self::UnetBilinear => "UNET_BILINEAR",
            Self::HyperceBilinear => "HYPERCE_BILINEAR",
            Self::HyperceWn => "HYPERCE_WN",
            Self::HyperceWnCa => "HYPERCE_WN_CA",
            Self::PerfectCsi => "PERFECT_CSI",
        }
    }

    /// Parse a registry label.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] for unknown labels.
    pub fn parse(label: &str) -> Result<Self> {
        REGISTRY
            .iter()
            .copied()
            .chain([Self::PerfectCsi])
            .find(|k| k.label() == label)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown estimator {label:?}; expected one of {:?}",
                    REGISTRY.map(|k| k.label())
                ))
            })
    }

    /// The network architecture behind this estimator, if it is learned.
    pub fn model_config(&self) -> Option<ModelConfig> {
        match self {
            Self::UnetBilinear => Some(ModelConfig::unet_baseline()),
            Self::HyperceBilinear | Self::HyperceWn => Some(ModelConfig::hyper()),
            Self::HyperceWnCa => Some(ModelConfig::hyper_ca()),
            _ => None,
        }
    }

    /// Whether the initial estimate is the Wiener smoother rather than
    /// bilinear interpolation.
    pub fn wiener_init(&self) -> bool {
        matches!(self, Self::Lmmse | Self::HyperceWn | Self::HyperceWnCa)
    }

    /// Whether evaluation needs channel parameters (for the Wiener
    /// initialization or the hypernetwork conditioning).
    pub fn needs_params(&self) -> bool {
        self.wiener_init()
            || self
                .model_config()
                .is_some_and(|c| c.use_hyper_prefilter)
    }
}

/// An estimator plus the trained model it needs, if any.
#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    /// Registry entry.
    pub kind: EstimatorKind,
    /// Trained network for learned estimators.
    pub model: Option<Model>,
}

impl EstimatorSpec {
    /// A classical (model-free) estimator.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] if the estimator needs a model.
    pub fn classical(kind: EstimatorKind) -> Result<Self> {
        if kind.model_config().is_some() {
            return Err(Error::InvalidConfig(format!(
                "estimator {} needs a trained model checkpoint",
                kind.label()
            )));
        }
        Ok(Self { kind, model: None })
    }

    /// A learned estimator with its trained model.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] if the estimator is classical or
    /// the model's architecture switches do not match the registry entry.
    pub fn with_model(kind: EstimatorKind, model: Model) -> Result<Self> {
        let expected = kind.model_config().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "estimator {} does not take a model",
                kind.label()
            ))
        })?;
        let got = model.config();
        if got.use_hyper_prefilter != expected.use_hyper_prefilter
            || got.use_channel_attention != expected.use_channel_attention
        {
            return Err(Error::InvalidConfig(format!(
                "model architecture (hyper={}, attention={}) does not match estimator {}",
                got.use_hyper_prefilter,
                got.use_channel_attention,
                kind.label()
            )));
        }
        Ok(Self {
            kind,
            model: Some(model),
        })
    }
}

/// Benchmark options.
#[derive(Debug, Clone, Copy, Default)]
pub struct BenchmarkOptions {
    /// Feed true channel parameters instead of TRS estimates to the Wiener
    /// smoother and the hypernetwork (matched-parameter ablation).
    pub oracle_params: bool,
}

/// One aggregated benchmark cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Estimator registry label.
    pub estimator: String,
    /// Power-delay profile of the cell.
    pub profile: TdlProfileName,
    /// Maximum Doppler frequency in Hz.
    pub doppler_hz: f64,
    /// Observation SNR in dB.
    pub snr_db: f64,
    /// Mean linear NMSE over the cell's samples.
    pub mean_nmse: f64,
    /// Number of samples aggregated.
    pub samples: usize,
}

/// Benchmark results: one row per (estimator, profile, Doppler, SNR).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportTable {
    /// Rows in registry-then-scenario order.
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    /// Check the row invariants.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] for an empty table, a row without
    /// samples, or a negative mean.
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::InvalidConfig("report table is empty".into()));
        }
        for row in &self.rows {
            if row.samples == 0 {
                return Err(Error::InvalidConfig(format!(
                    "row {}/{}/{}/{} has no samples",
                    row.estimator,
                    row.profile.label(),
                    row.doppler_hz,
                    row.snr_db
                )));
            }
            if !(row.mean_nmse >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "row {} has negative mean NMSE {}",
                    row.estimator, row.mean_nmse
                )));
            }
        }
        Ok(())
    }
}

/// Compensated (Kahan) accumulator so cell means do not depend on sample
/// order beyond 1e-12.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// The channel parameters an estimator should be conditioned on.
fn conditioning_params(
    sample: &DatasetSample,
    kind: EstimatorKind,
    options: &BenchmarkOptions,
) -> Result<ChannelParams> {
    if !kind.needs_params() || options.oracle_params {
        return Ok(sample.record.true_params);
    }
    sample.record.est_params.ok_or_else(|| {
        Error::InvalidConfig(format!(
            "sample {} lacks estimated parameters needed by {}; annotate the dataset first \
             or use oracle parameters",
            sample.record.index,
            kind.label()
        ))
    })
}

/// Evaluate one estimator on one sample; returns the linear NMSE.
fn sample_nmse(
    spec: &EstimatorSpec,
    sample: &DatasetSample,
    num: &Numerology,
    options: &BenchmarkOptions,
) -> Result<f64> {
    if spec.kind == EstimatorKind::PerfectCsi {
        return nmse(&sample.truth, &sample.truth);
    }
    let params = conditioning_params(sample, spec.kind, options)?;
    let obs = sample.to_observation(num);
    let pilots = ls_estimate(&obs, &dmrs_pattern(num))?;
    let init = if spec.kind.wiener_init() {
        wiener_estimate(&pilots, &params, num)?
    } else {
        bilinear_init(&pilots, num)?
    };
    let estimate = match &spec.model {
        None => init.values,
        Some(model) => model.forward(&init.values, &params, ForwardMode::Eval)?,
    };
    nmse(&estimate, &sample.truth)
}

/// Assemble network training samples from dataset rows: least squares at
/// the DMRS pilots, the chosen initialization, conditioning parameters,
/// and the ground truth as target.
///
/// `indices` selects dataset rows (typically the manifest's train or
/// validation split). With `wiener` the initialization is the Wiener
/// smoother under the conditioning parameters; otherwise bilinear
/// interpolation. Parameters come from the TRS annotations unless
/// `oracle_params` substitutes the generator truth.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] for an out-of-range index or a missing
/// parameter annotation.
pub fn build_train_samples(
    num: &Numerology,
    samples: &[DatasetSample],
    indices: &[usize],
    wiener: bool,
    oracle_params: bool,
) -> Result<Vec<TrainSample>> {
    indices
        .par_iter()
        .map(|&i| {
            let sample = samples.get(i).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "split index {i} out of range for {} samples",
                    samples.len()
                ))
            })?;
            let params = if oracle_params {
                sample.record.true_params
            } else {
                sample.record.est_params.ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "sample {} lacks estimated parameters; annotate the dataset first \
                         or use oracle parameters",
                        sample.record.index
                    ))
                })?
            };
            let obs = sample.to_observation(num);
            let pilots = ls_estimate(&obs, &dmrs_pattern(num))?;
            let init = if wiener {
                wiener_estimate(&pilots, &params, num)?
            } else {
                bilinear_init(&pilots, num)?
            };
            TrainSample::new(&init.values, &sample.truth, &params)
        })
        .collect()
}

/// Run every estimator over every sample and aggregate cell means.
///
/// Rows come back in estimator order, then the manifest's scenario order
/// (profile-major). Samples evaluate in parallel; each cell mean uses
/// compensated summation, so results are independent of evaluation order
/// to well below 1e-12.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] if inputs are empty, a learned
/// estimator is missing its model, required parameter annotations are
/// absent, or some sweep cell has no samples.
pub fn run_benchmark(
    manifest: &DatasetManifest,
    samples: &[DatasetSample],
    estimators: &[EstimatorSpec],
    options: &BenchmarkOptions,
) -> Result<ReportTable> {
    if estimators.is_empty() {
        return Err(Error::InvalidConfig("no estimators selected".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidConfig("no samples to evaluate".into()));
    }
    for spec in estimators {
        if spec.kind.model_config().is_some() && spec.model.is_none() {
            return Err(Error::InvalidConfig(format!(
                "estimator {} needs a trained model checkpoint",
                spec.kind.label()
            )));
        }
    }
    let num = &manifest.numerology;

    // (estimator, sample) evaluations, parallel over samples, collected in
    // deterministic order.
    let evals: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|sample| {
            estimators
                .iter()
                .map(|spec| sample_nmse(spec, sample, num, options))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut cells: BTreeMap<(usize, &'static str, u64, u64), (Kahan, usize)> = BTreeMap::new();
    for (sample, row) in samples.iter().zip(&evals) {
        let key_profile = sample.record.profile.label();
        let dop = sample.record.doppler_hz.to_bits();
        let snr = sample.record.snr_db.to_bits();
        for (ei, &v) in row.iter().enumerate() {
            let cell = cells.entry((ei, key_profile, dop, snr)).or_default();
            cell.0.add(v);
            cell.1 += 1;
        }
    }

    let mut rows = Vec::new();
    for (ei, spec) in estimators.iter().enumerate() {
        for (profile, doppler_hz, snr_db) in manifest.sweep.configs() {
            let key = (ei, profile.label(), doppler_hz.to_bits(), snr_db.to_bits());
            let Some((acc, count)) = cells.get(&key) else {
                return Err(Error::InvalidConfig(format!(
                    "dataset has no samples for cell {}/{}/{} Hz/{} dB",
                    spec.kind.label(),
                    profile.label(),
                    doppler_hz,
                    snr_db
                )));
            };
            rows.push(ReportRow {
                estimator: spec.kind.label().to_string(),
                profile,
                doppler_hz,
                snr_db,
                mean_nmse: acc.sum / *count as f64,
                samples: *count,
            });
        }
    }
    let table = ReportTable { rows };
    table.validate()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, DatasetReader, ScenarioSweep};
    use crate::grid::default_numerology;
    use crate::params::estimate_params;

    /// Small in-memory dataset: generate to a temp file, read back, and
    /// annotate estimated parameters.
    fn small_dataset(
        snrs_db: Vec<f64>,
        per_config: usize,
        seed: u64,
    ) -> (DatasetManifest, Vec<DatasetSample>) {
        let num = default_numerology();
        let sweep = ScenarioSweep {
            profiles: vec![TdlProfileName::TdlA],
            dopplers_hz: vec![100.0],
            snrs_db,
            delay_spread_s: 100e-9,
            n_sinusoids: 32,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.ceds");
        generate_dataset(&sweep, per_config, &path, seed, &num).unwrap();
        let mut reader = DatasetReader::open(&path).unwrap();
        let manifest = reader.manifest().clone();
        let mut samples = reader.load_all().unwrap();
        for s in &mut samples {
            let est = estimate_params(&s.to_observation(&num), &num).unwrap();
            s.record.est_params = Some(est.params);
        }
        (manifest, samples)
    }

    #[test]
    fn test_perfect_csi_scores_zero_everywhere() {
        let (manifest, samples) = small_dataset(vec![0.0, 10.0], 3, 42);
        let estimators = vec![EstimatorSpec {
            kind: EstimatorKind::PerfectCsi,
            model: None,
        }];
        let table = run_benchmark(
            &manifest,
            &samples,
            &estimators,
            &BenchmarkOptions::default(),
        )
        .unwrap();
        assert_eq!(table.rows.len(), 2);
        for row in &table.rows {
            assert_eq!(row.mean_nmse, 0.0);
            assert_eq!(row.samples, 3);
        }
    }

    #[test]
    fn test_row_count_is_the_estimator_scenario_cross_product() {
        let (manifest, samples) = small_dataset(vec![0.0, 10.0, 20.0], 2, 7);
        let estimators = vec![
            EstimatorSpec::classical(EstimatorKind::LsBilinear).unwrap(),
            EstimatorSpec::classical(EstimatorKind::Lmmse).unwrap(),
        ];
        let table = run_benchmark(
            &manifest,
            &samples,
            &estimators,
            &BenchmarkOptions::default(),
        )
        .unwrap();
        // 2 estimators x 1 profile x 1 doppler x 3 SNRs.
        assert_eq!(table.rows.len(), 6);
        assert!(table.rows.iter().all(|r| r.samples == 2));
        // Rows are ordered estimator-major.
        assert!(table.rows[..3].iter().all(|r| r.estimator == "LS_BILINEAR"));
        assert!(table.rows[3..].iter().all(|r| r.estimator == "LMMSE"));
    }

    #[test]
    fn test_lmmse_mean_nmse_decreases_with_snr() {
        // The matched-parameter Wiener smoother must improve monotonically
        // as observation noise falls, and beat raw bilinear interpolation.
        let (manifest, samples) = small_dataset(vec![0.0, 10.0, 20.0], 500, 11);
        let estimators = vec![
            EstimatorSpec::classical(EstimatorKind::Lmmse).unwrap(),
            EstimatorSpec::classical(EstimatorKind::LsBilinear).unwrap(),
        ];
        let table = run_benchmark(
            &manifest,
            &samples,
            &estimators,
            &BenchmarkOptions::default(),
        )
        .unwrap();
        let lmmse: Vec<f64> = table.rows[..3].iter().map(|r| r.mean_nmse).collect();
        assert!(
            lmmse[0] > lmmse[1] && lmmse[1] > lmmse[2],
            "LMMSE NMSE not decreasing: {lmmse:?}"
        );
        for (l, b) in table.rows[..3].iter().zip(&table.rows[3..]) {
            assert!(
                l.mean_nmse < b.mean_nmse,
                "LMMSE {} not below bilinear {} at {} dB",
                l.mean_nmse,
                b.mean_nmse,
                l.snr_db
            );
        }
    }

    #[test]
    fn test_aggregation_is_order_independent() {
        let (manifest, samples) = small_dataset(vec![5.0], 40, 3);
        let estimators = vec![EstimatorSpec::classical(EstimatorKind::LsBilinear).unwrap()];
        let options = BenchmarkOptions::default();
        let forward = run_benchmark(&manifest, &samples, &estimators, &options).unwrap();
        let mut reversed_samples = samples.clone();
        reversed_samples.reverse();
        let reversed = run_benchmark(&manifest, &reversed_samples, &estimators, &options).unwrap();
        for (a, b) in forward.rows.iter().zip(&reversed.rows) {
            assert!(
                (a.mean_nmse - b.mean_nmse).abs() <= 1e-12,
                "order dependence: {} vs {}",
                a.mean_nmse,
                b.mean_nmse
            );
        }
    }

    #[test]
    fn test_learned_estimators_run_and_need_their_pieces() {
        let (manifest, mut samples) = small_dataset(vec![10.0], 2, 19);

        // Missing model is rejected up front.
        let bare = vec![EstimatorSpec {
            kind: EstimatorKind::HyperceWnCa,
            model: None,
        }];
        assert!(run_benchmark(
            &manifest,
            &samples,
            &bare,
            &BenchmarkOptions::default()
        )
        .is_err());

        // A fresh (untrained) model still produces finite NMSE cells.
        let model = Model::new(ModelConfig::hyper_ca(), 1).unwrap();
        let estimators = vec![EstimatorSpec::with_model(EstimatorKind::HyperceWnCa, model).unwrap()];
        let table = run_benchmark(
            &manifest,
            &samples,
            &estimators,
            &BenchmarkOptions::default(),
        )
        .unwrap();
        assert!(table.rows[0].mean_nmse.is_finite());

        // Without annotations, parameter-hungry estimators fail...
        for s in &mut samples {
            s.record.est_params = None;
        }
        assert!(run_benchmark(
            &manifest,
            &samples,
            &estimators,
            &BenchmarkOptions::default()
        )
        .is_err());
        // ...unless oracle parameters are requested.
        assert!(run_benchmark(
            &manifest,
            &samples,
            &estimators,
            &BenchmarkOptions {
                oracle_params: true
            }
        )
        .is_ok());
    }

    #[test]
    fn test_build_train_samples_selects_rows_and_needs_annotations() {
        let (manifest, mut samples) = small_dataset(vec![10.0], 4, 23);
        let num = &manifest.numerology;

        let built = build_train_samples(num, &samples, &[0, 2], true, false).unwrap();
        assert_eq!(built.len(), 2);
        assert_eq!(
            (built[0].height, built[0].width),
            (num.data_subcarriers, num.data_symbols)
        );
        // Wiener and bilinear initializations differ.
        let bilinear = build_train_samples(num, &samples, &[0], false, false).unwrap();
        assert!(built[0].init_planes != bilinear[0].init_planes);
        // Targets match the stored truth regardless of initialization.
        assert_eq!(built[0].target_planes, bilinear[0].target_planes);

        assert!(build_train_samples(num, &samples, &[99], true, false).is_err());
        for s in &mut samples {
            s.record.est_params = None;
        }
        assert!(build_train_samples(num, &samples, &[0], true, false).is_err());
        assert!(build_train_samples(num, &samples, &[0], true, true).is_ok());
    }

    #[test]
    fn test_spec_construction_validates_kind_model_pairing() {
        assert!(EstimatorSpec::classical(EstimatorKind::LsBilinear).is_ok());
        assert!(EstimatorSpec::classical(EstimatorKind::UnetBilinear).is_err());

        let unet = Model::new(ModelConfig::unet_baseline(), 0).unwrap();
        assert!(EstimatorSpec::with_model(EstimatorKind::LsBilinear, unet.clone()).is_err());
        // Architecture switches must match the registry entry.
        assert!(EstimatorSpec::with_model(EstimatorKind::HyperceWnCa, unet.clone()).is_err());
        assert!(EstimatorSpec::with_model(EstimatorKind::UnetBilinear, unet).is_ok());
    }

    #[test]
    fn test_estimator_labels_round_trip() {
        for kind in REGISTRY.iter().copied().chain([EstimatorKind::PerfectCsi]) {
            assert_eq!(EstimatorKind::parse(kind.label()).unwrap(), kind);
        }
        assert!(EstimatorKind::parse("NOT_AN_ESTIMATOR").is_err());
    }
}
