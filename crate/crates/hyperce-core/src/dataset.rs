//! Scenario sweeps and the binary sample container.
//!
//! A dataset is produced by sweeping the cross product of TDL profiles,
//! Doppler frequencies, and SNRs, simulating `per_config` observations for
//! each combination. Samples land in a single binary file:
//!
//! ```text
//! "CEDS" | version (1 byte) | manifest length (u64 LE) | JSON manifest |
//! sample 0 | sample 1 | ...
//! ```
//!
//! Each fixed-size sample stores, as little-endian f32 planes in
//! subcarrier-major order: received data grid (re, im), ground-truth
//! channel (re, im), a reserved zero-length section for precomputed DMRS LS
//! inputs, and the received TRS (re, im). Everything else needed to rebuild
//! an [`Observation`] — transmitted symbols and noise parameters — follows
//! deterministically from the per-sample seed recorded in the manifest
//! (`dataset seed ⊕ sample index`).
//!
//! The train/validation split is an 80/20 partition (floor rule on the
//! train side) of a seeded shuffle of the sample indices, recorded
//! explicitly in the manifest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    generate_channel, simulate_observation, tdl_profile, tx_data_symbols, FadingConfig,
    Observation, TdlProfileName,
};
use crate::correlation::ChannelParams;
use crate::grid::{dmrs_pattern, trs_pattern, Numerology, ResourceGrid};
use crate::params::estimate_params;
use crate::{Error, Result};

/// File magic for datasets.
const MAGIC: &[u8; 4] = b"CEDS";
/// Container format version.
const VERSION: u8 = 1;
/// Seed decorrelator between the channel and observation RNG lineages of a
/// sample (golden-ratio constant).
const OBS_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// The scenario grid a dataset covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSweep {
    /// TDL profiles to sweep.
    pub profiles: Vec<TdlProfileName>,
    /// Doppler frequencies in Hz.
    pub dopplers_hz: Vec<f64>,
    /// Observation SNRs in dB.
    pub snrs_db: Vec<f64>,
    /// Delay spread applied to every profile, seconds.
    pub delay_spread_s: f64,
    /// Sinusoids per tap in the fading synthesis.
    pub n_sinusoids: usize,
}

impl ScenarioSweep {
    /// Check the sweep invariants.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] for empty axes, non-finite SNRs, or
    /// an invalid fading configuration.
    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() || self.dopplers_hz.is_empty() || self.snrs_db.is_empty() {
            return Err(Error::InvalidConfig("sweep axes must be non-empty".into()));
        }
        if self.snrs_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig(
                "dataset SNRs must be finite (the noiseless sentinel is for tests)".into(),
            ));
        }
        if !(self.delay_spread_s > 0.0) {
            return Err(Error::InvalidConfig("delay spread must be > 0".into()));
        }
        if self.n_sinusoids < 8 {
            return Err(Error::InvalidConfig("need at least 8 sinusoids".into()));
        }
        Ok(())
    }

    /// All `(profile, doppler, snr)` combinations, profile-major then
    /// Doppler then SNR.
    pub fn configs(&self) -> Vec<(TdlProfileName, f64, f64)> {
        let mut out = Vec::with_capacity(self.profiles.len() * self.dopplers_hz.len() * self.snrs_db.len());
        for &p in &self.profiles {
            for &fd in &self.dopplers_hz {
                for &snr in &self.snrs_db {
                    out.push((p, fd, snr));
                }
            }
        }
        out
    }
}

/// The benchmark sweep: 3 profiles × 3 Dopplers × 11 SNRs = 99
/// configurations at 100 ns delay spread.
pub fn default_sweep() -> ScenarioSweep {
    ScenarioSweep {
        profiles: TdlProfileName::ALL.to_vec(),
        dopplers_hz: vec![5.0, 100.0, 300.0],
        snrs_db: (0..=20).step_by(2).map(f64::from).collect(),
        delay_spread_s: 100e-9,
        n_sinusoids: 32,
    }
}

/// Planned sample counts for a sweep: `(total, train, validation)` under
/// the 80/20 floor-rule split.
pub fn planned_counts(sweep: &ScenarioSweep, per_config: usize) -> (usize, usize, usize) {
    let total = sweep.configs().len() * per_config;
    let train = (total * 8) / 10;
    (total, train, total - train)
}

/// Per-sample metadata stored in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Position of the sample in the blob.
    pub index: usize,
    /// Per-sample seed (`dataset seed ⊕ index`).
    pub seed: u64,
    /// TDL profile of the realization.
    pub profile: TdlProfileName,
    /// Doppler frequency in Hz.
    pub doppler_hz: f64,
    /// Observation SNR in dB.
    pub snr_db: f64,
    /// Generator ground truth (SNR folded in as `snr_linear`).
    pub true_params: ChannelParams,
    /// TRS-estimated parameters, filled by the labeling pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub est_params: Option<ChannelParams>,
}

/// Dataset metadata: everything except the sample payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// OFDM configuration the samples were generated with.
    pub numerology: Numerology,
    /// The scenario grid.
    pub sweep: ScenarioSweep,
    /// Observations per sweep configuration.
    pub per_config: usize,
    /// Dataset-level seed.
    pub seed: u64,
    /// Total sample count.
    pub n_samples: usize,
    /// Sample indices in the training split.
    pub train_indices: Vec<usize>,
    /// Sample indices in the validation split.
    pub val_indices: Vec<usize>,
    /// Per-sample metadata, in index order.
    pub samples: Vec<SampleRecord>,
}

/// One fully loaded sample.
#[derive(Debug, Clone)]
pub struct DatasetSample {
    /// Manifest entry for the sample.
    pub record: SampleRecord,
    /// Received data grid.
    pub rx_data_grid: ResourceGrid,
    /// Ground-truth channel over the data grid.
    pub truth: ResourceGrid,
    /// Received TRS values in pattern order.
    pub rx_trs: Vec<Complex64>,
}

impl DatasetSample {
    /// Rebuild the full observation: payload fields plus the transmitted
    /// DMRS symbols regenerated from the per-sample seed.
    pub fn to_observation(&self, num: &Numerology) -> Observation {
        let tx = tx_data_symbols(num, self.record.seed ^ OBS_SEED_SALT);
        let tx_dmrs: Vec<Complex64> = dmrs_pattern(num)
            .positions()
            .map(|(k, n)| tx[k * num.data_symbols + n])
            .collect();
        Observation {
            rx_data_grid: self.rx_data_grid.clone(),
            rx_trs: self.rx_trs.clone(),
            tx_dmrs,
            snr_db: self.record.snr_db,
            noise_var: 10f64.powf(-self.record.snr_db / 10.0),
            truth: self.truth.clone(),
        }
    }
}

/// Bytes per stored sample for a numerology.
fn sample_payload_len(num: &Numerology) -> usize {
    let data = num.data_subcarriers * num.data_symbols;
    let trs = trs_pattern(num).num_pilots();
    // rx (re+im) + truth (re+im) + empty DMRS-LS section + TRS (re+im).
    (data * 2 + data * 2 + trs * 2) * 4
}

fn push_grid_f32(out: &mut Vec<u8>, grid: &ResourceGrid) {
    for v in grid.values() {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
    }
    for v in grid.values() {
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
}

fn push_complex_f32(out: &mut Vec<u8>, values: &[Complex64]) {
    for v in values {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
}

/// Serialize one observation into its fixed-size payload.
fn sample_payload(obs: &Observation, num: &Numerology) -> Vec<u8> {
    let mut out = Vec::with_capacity(sample_payload_len(num));
    push_grid_f32(&mut out, &obs.rx_data_grid);
    push_grid_f32(&mut out, &obs.truth);
    // DMRS LS inputs: reserved, currently zero-length.
    push_complex_f32(&mut out, &obs.rx_trs);
    debug_assert_eq!(out.len(), sample_payload_len(num));
    out
}

fn read_f32_plane(bytes: &[u8], offset: &mut usize, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let raw: [u8; 4] = bytes[*offset..*offset + 4].try_into().expect("bounds checked");
        out.push(f32::from_le_bytes(raw) as f64);
        *offset += 4;
    }
    out
}

fn parse_complex_planes(bytes: &[u8], offset: &mut usize, count: usize) -> Vec<Complex64> {
    let re = read_f32_plane(bytes, offset, count);
    let im = read_f32_plane(bytes, offset, count);
    re.into_iter().zip(im).map(|(r, i)| Complex64::new(r, i)).collect()
}

/// Parse one payload into grids and TRS values.
fn parse_sample_payload(
    bytes: &[u8],
    num: &Numerology,
) -> Result<(ResourceGrid, ResourceGrid, Vec<Complex64>)> {
    if bytes.len() != sample_payload_len(num) {
        return Err(Error::Format(format!(
            "sample payload is {} bytes, expected {}",
            bytes.len(),
            sample_payload_len(num)
        )));
    }
    let data = num.data_subcarriers * num.data_symbols;
    let trs = trs_pattern(num).num_pilots();
    let mut offset = 0usize;
    let rx = ResourceGrid::from_values(
        num.data_subcarriers,
        num.data_symbols,
        parse_complex_planes(bytes, &mut offset, data),
    )?;
    let truth = ResourceGrid::from_values(
        num.data_subcarriers,
        num.data_symbols,
        parse_complex_planes(bytes, &mut offset, data),
    )?;
    let rx_trs = parse_complex_planes(bytes, &mut offset, trs);
    Ok((rx, truth, rx_trs))
}

/// Simulate the sample at `index` of a sweep.
fn simulate_sample(
    num: &Numerology,
    sweep: &ScenarioSweep,
    per_config: usize,
    dataset_seed: u64,
    index: usize,
) -> Result<(SampleRecord, Observation)> {
    let configs = sweep.configs();
    let (profile_name, doppler_hz, snr_db) = configs[index / per_config];
    let seed = dataset_seed ^ index as u64;
    let profile = tdl_profile(profile_name);
    let fading = FadingConfig {
        delay_spread_s: sweep.delay_spread_s,
        doppler_hz,
        n_sinusoids: sweep.n_sinusoids,
        seed,
    };
    let chan = generate_channel(num, &profile, &fading)?;
    let obs = simulate_observation(
        &chan,
        num,
        &dmrs_pattern(num),
        &trs_pattern(num),
        snr_db,
        seed ^ OBS_SEED_SALT,
    );
    let true_params = ChannelParams {
        snr_linear: 10f64.powf(snr_db / 10.0),
        ..chan.true_params
    };
    Ok((
        SampleRecord {
            index,
            seed,
            profile: profile_name,
            doppler_hz,
            snr_db,
            true_params,
            est_params: None,
        },
        obs,
    ))
}

/// Shuffled 80/20 index split (floor rule on the train side), seeded from
/// the dataset seed.
fn split_indices(n_samples: usize, dataset_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(dataset_seed.wrapping_add(1));
    // Fisher-Yates.
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (n_samples * 8) / 10;
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut val: Vec<usize> = order[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Generate a dataset file covering `sweep × per_config` samples.
///
/// Samples are simulated in parallel but written strictly in index order;
/// the output is bit-identical for identical inputs.
///
/// # Errors
///
/// Returns configuration errors from the sweep and I/O errors from writing.
pub fn generate_dataset(
    sweep: &ScenarioSweep,
    per_config: usize,
    out_path: &Path,
    seed: u64,
    num: &Numerology,
) -> Result<DatasetManifest> {
    num.validate()?;
    sweep.validate()?;
    if per_config == 0 {
        return Err(Error::InvalidConfig("per_config must be >= 1".into()));
    }
    let n_samples = sweep.configs().len() * per_config;
    let (train_indices, val_indices) = split_indices(n_samples, seed);

    // Simulate in parallel chunks, collecting records and payload bytes.
    let chunk = 1024usize;
    let mut samples = Vec::with_capacity(n_samples);
    let mut payloads: Vec<Vec<u8>> = Vec::with_capacity(n_samples);
    for start in (0..n_samples).step_by(chunk) {
        let end = (start + chunk).min(n_samples);
        let batch: Result<Vec<(SampleRecord, Vec<u8>)>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let (record, obs) = simulate_sample(num, sweep, per_config, seed, i)?;
                let payload = sample_payload(&obs, num);
                Ok((record, payload))
            })
            .collect();
        for (record, payload) in batch? {
            samples.push(record);
            payloads.push(payload);
        }
    }

    let manifest = DatasetManifest {
        numerology: num.clone(),
        sweep: sweep.clone(),
        per_config,
        seed,
        n_samples,
        train_indices,
        val_indices,
        samples,
    };
    write_dataset_file(out_path, &manifest, payloads.iter().map(|p| p.as_slice()))?;
    Ok(manifest)
}

/// Write a complete dataset file from a manifest and payload iterator.
fn write_dataset_file<'a>(
    path: &Path,
    manifest: &DatasetManifest,
    payloads: impl Iterator<Item = &'a [u8]>,
) -> Result<()> {
    let json = serde_json::to_vec(manifest)
        .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for payload in payloads {
        w.write_all(payload)?;
    }
    w.flush()?;
    Ok(())
}

/// Random-access reader over a dataset file.
pub struct DatasetReader {
    file: BufReader<File>,
    manifest: DatasetManifest,
    blob_start: u64,
    payload_len: usize,
}

impl DatasetReader {
    /// Open a dataset and parse its manifest.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Format`] for wrong magic, version, or manifest
    /// contents, and I/O errors from reading.
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut version = [0u8; 1];
        file.read_exact(&mut version)?;
        if version[0] != VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {}, expected {VERSION}",
                version[0]
            )));
        }
        let mut len_bytes = [0u8; 8];
        file.read_exact(&mut len_bytes)?;
        let json_len = u64::from_le_bytes(len_bytes) as usize;
        let mut json = vec![0u8; json_len];
        file.read_exact(&mut json)?;
        let manifest: DatasetManifest = serde_json::from_slice(&json)
            .map_err(|e| Error::Format(format!("manifest parse failed: {e}")))?;
        let payload_len = sample_payload_len(&manifest.numerology);
        let blob_start = (4 + 1 + 8 + json_len) as u64;
        Ok(Self {
            file,
            manifest,
            blob_start,
            payload_len,
        })
    }

    /// The parsed manifest.
    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    /// Load the sample at `index`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] for an out-of-range index and I/O or
    /// format errors from reading.
    pub fn load_sample(&mut self, index: usize) -> Result<DatasetSample> {
        if index >= self.manifest.n_samples {
            return Err(Error::InvalidConfig(format!(
                "sample index {index} out of range ({} samples)",
                self.manifest.n_samples
            )));
        }
        self.file.seek(SeekFrom::Start(
            self.blob_start + (index * self.payload_len) as u64,
        ))?;
        let mut bytes = vec![0u8; self.payload_len];
        self.file.read_exact(&mut bytes)?;
        let (rx, truth, rx_trs) = parse_sample_payload(&bytes, &self.manifest.numerology)?;
        Ok(DatasetSample {
            record: self.manifest.samples[index].clone(),
            rx_data_grid: rx,
            truth,
            rx_trs,
        })
    }

    /// Load every sample into memory, in index order.
    ///
    /// # Errors
    ///
    /// Propagates per-sample load errors.
    pub fn load_all(&mut self) -> Result<Vec<DatasetSample>> {
        (0..self.manifest.n_samples).map(|i| self.load_sample(i)).collect()
    }
}

/// Run TRS parameter estimation over every sample and rewrite the dataset
/// with `est_params` filled in. Returns the number of labeled samples.
///
/// # Errors
///
/// Propagates read, estimation, and write errors.
pub fn annotate_est_params(path: &Path) -> Result<usize> {
    let mut reader = DatasetReader::open(path)?;
    let num = reader.manifest().numerology.clone();
    let samples = reader.load_all()?;
    let mut manifest = reader.manifest().clone();
    drop(reader);

    let estimates: Result<Vec<ChannelParams>> = samples
        .par_iter()
        .map(|s| Ok(estimate_params(&s.to_observation(&num), &num)?.params))
        .collect();
    let estimates = estimates?;
    for (record, est) in manifest.samples.iter_mut().zip(estimates) {
        record.est_params = Some(est);
    }

    let payloads: Vec<Vec<u8>> = samples
        .iter()
        .map(|s| {
            let mut out = Vec::with_capacity(sample_payload_len(&num));
            push_grid_f32(&mut out, &s.rx_data_grid);
            push_grid_f32(&mut out, &s.truth);
            push_complex_f32(&mut out, &s.rx_trs);
            out
        })
        .collect();
    write_dataset_file(path, &manifest, payloads.iter().map(|p| p.as_slice()))?;
    Ok(manifest.n_samples)
}
