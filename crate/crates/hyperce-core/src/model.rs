//! The learned channel estimator: a compact UNet over the data grid whose
//! input pre-filter is generated per sample by a hypernetwork conditioned on
//! the estimated channel parameters, with squeeze-excite channel attention
//! at the bottleneck.
//!
//! The real and imaginary parts of a coarse initial estimate enter as two
//! image planes (frequency as height, time as width); the network refines
//! them into two output planes. A 4-value conditioning vector — normalized
//! mean delay, delay width, Doppler, and SNR — drives a three-layer
//! hypernetwork that emits the 3×3 kernel and bias of the first
//! convolution, so the input filtering adapts to the channel statistics
//! while the shared backbone stays fixed.
//!
//! [`Model`] owns the parameters as named tensors in a deterministic order;
//! every forward builds a fresh [`Graph`] (see [`ForwardMode`]), and
//! [`train`] runs mini-batch Adam with per-sample gradient accumulation.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::correlation::ChannelParams;
use crate::grid::ResourceGrid;
use crate::nn::checkpoint::{Checkpoint, CheckpointEntry};
use crate::nn::graph::{Graph, TensorId};
use crate::nn::optim::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::nn::tensor::{lit, Scalar, Tensor};
use crate::{Error, Result};

/// Normalization scale for the mean-delay conditioning input (5 µs).
pub const MEAN_DELAY_SCALE_S: f64 = 5e-6;
/// Normalization scale for the delay-width conditioning input (5 µs).
pub const DELAY_WIDTH_SCALE_S: f64 = 5e-6;
/// Normalization scale for the Doppler conditioning input (400 Hz).
pub const DOPPLER_SCALE_HZ: f64 = 400.0;
/// Offset added to the SNR in dB before scaling.
pub const SNR_DB_OFFSET: f64 = 5.0;
/// Range of the offset SNR in dB mapped onto [0, 1].
pub const SNR_DB_RANGE: f64 = 30.0;

/// Channel parameters mapped onto `[0, 1]^4` for the hypernetwork input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedParams(pub [f64; 4]);

impl NormalizedParams {
    /// Normalize a physical parameter set: delays against 5 µs, Doppler
    /// against 400 Hz, and SNR as `(snr_db + 5) / 30`, each clamped to
    /// [0, 1]. An infinite SNR saturates the SNR coordinate at 1.
    pub fn from_channel_params(p: &ChannelParams) -> Self {
        let snr_db = if p.snr_linear.is_infinite() {
            f64::INFINITY
        } else {
            10.0 * p.snr_linear.log10()
        };
        let clamp = |v: f64| {
            if v.is_nan() {
                0.0
            } else {
                v.clamp(0.0, 1.0)
            }
        };
        Self([
            clamp(p.mean_delay_s / MEAN_DELAY_SCALE_S),
            clamp(p.delay_width_s / DELAY_WIDTH_SCALE_S),
            clamp(p.doppler_hz / DOPPLER_SCALE_HZ),
            clamp((snr_db + SNR_DB_OFFSET) / SNR_DB_RANGE),
        ])
    }
}

/// Architecture switches and sizes.
///
/// The defaults reproduce the full estimator: hypernetwork-generated
/// pre-filter, channel attention, 16 base channels, dropout 0.3.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Channel count of the first encoder stage; later stages double it.
    pub base_channels: usize,
    /// Output channels of the hypernetwork-generated pre-filter.
    pub prefilter_channels: usize,
    /// Squeeze ratio of the channel-attention block.
    pub ca_reduction: usize,
    /// Channel-dropout probability at the bottleneck during training.
    pub dropout_p: f64,
    /// Hidden widths of the hypernetwork MLP.
    pub hyper_hidden: (usize, usize),
    /// Generate the input pre-filter from the conditioning vector.
    pub use_hyper_prefilter: bool,
    /// Apply channel attention after the bottleneck.
    pub use_channel_attention: bool,
    /// Add the input estimate to the network output (ablation flag).
    pub global_residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            prefilter_channels: 8,
            ca_reduction: 8,
            dropout_p: 0.3,
            hyper_hidden: (16, 8),
            use_hyper_prefilter: true,
            use_channel_attention: true,
            global_residual: false,
        }
    }
}

impl ModelConfig {
    /// The full estimator: hypernetwork pre-filter plus channel attention.
    pub fn hyper_ca() -> Self {
        Self::default()
    }

    /// Hypernetwork pre-filter without channel attention.
    pub fn hyper() -> Self {
        Self {
            use_channel_attention: false,
            ..Self::default()
        }
    }

    /// Plain UNet baseline: no hypernetwork, no channel attention.
    pub fn unet_baseline() -> Self {
        Self {
            use_hyper_prefilter: false,
            use_channel_attention: false,
            ..Self::default()
        }
    }

    /// Check the structural invariants.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] for zero sizes, a dropout
    /// probability outside `[0, 1)`, or a channel-attention reduction that
    /// does not divide the bottleneck width.
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0
            || self.prefilter_channels == 0
            || self.hyper_hidden.0 == 0
            || self.hyper_hidden.1 == 0
        {
            return Err(Error::InvalidConfig(
                "model channel and hidden sizes must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig(format!(
                "dropout probability must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        let bottleneck = 4 * self.base_channels;
        if self.use_channel_attention
            && (self.ca_reduction == 0 || bottleneck % self.ca_reduction != 0)
        {
            return Err(Error::InvalidConfig(format!(
                "channel-attention reduction {} must divide the bottleneck width {bottleneck}",
                self.ca_reduction
            )));
        }
        Ok(())
    }

    /// Channel count entering the UNet encoder: the pre-filter output when
    /// the hypernetwork is on, otherwise the two raw input planes.
    pub fn encoder_in_channels(&self) -> usize {
        if self.use_hyper_prefilter {
            self.prefilter_channels
        } else {
            2
        }
    }

    /// Output width of the hypernetwork: one 3×3 kernel over the two input
    /// planes plus one bias per pre-filter channel.
    pub fn hyper_output_len(&self) -> usize {
        self.prefilter_channels * 2 * 9 + self.prefilter_channels
    }
}

/// One named parameter tensor.
#[derive(Debug, Clone)]
struct ParamTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

/// Blueprint entry: name, shape, and the fan-in used for init bounds.
struct LayerSpec {
    name: &'static str,
    suffix: &'static str,
    shape: Vec<usize>,
    fan_in: usize,
}

/// Enumerate every parameter tensor of a configuration, in the fixed order
/// shared by initialization, the forward wiring, and checkpoints.
fn layer_specs(config: &ModelConfig) -> Vec<LayerSpec> {
    let b = config.base_channels;
    let cin = config.encoder_in_channels();
    let (h1, h2) = config.hyper_hidden;
    let mut specs = Vec::new();
    let fc = |name, suffix_w, suffix_b, dout: usize, din: usize, specs: &mut Vec<LayerSpec>| {
        specs.push(LayerSpec {
            name,
            suffix: suffix_w,
            shape: vec![dout, din],
            fan_in: din,
        });
        specs.push(LayerSpec {
            name,
            suffix: suffix_b,
            shape: vec![dout],
            fan_in: din,
        });
    };
    if config.use_hyper_prefilter {
        fc("hyper.fc1", ".weight", ".bias", h1, 4, &mut specs);
        fc("hyper.fc2", ".weight", ".bias", h2, h1, &mut specs);
        fc("hyper.fc3", ".weight", ".bias", config.hyper_output_len(), h2, &mut specs);
    }
    let conv = |name, cout: usize, ci: usize, specs: &mut Vec<LayerSpec>| {
        specs.push(LayerSpec {
            name,
            suffix: ".weight",
            shape: vec![cout, ci, 3, 3],
            fan_in: ci * 9,
        });
        specs.push(LayerSpec {
            name,
            suffix: ".bias",
            shape: vec![cout],
            fan_in: ci * 9,
        });
    };
    let up = |name, ci: usize, cout: usize, specs: &mut Vec<LayerSpec>| {
        // Transposed-conv weights are stored [Cin, Cout, 2, 2]; the fan-in
        // convention reads the second axis times the kernel area.
        specs.push(LayerSpec {
            name,
            suffix: ".weight",
            shape: vec![ci, cout, 2, 2],
            fan_in: cout * 4,
        });
        specs.push(LayerSpec {
            name,
            suffix: ".bias",
            shape: vec![cout],
            fan_in: cout * 4,
        });
    };
    conv("enc1.conv1", b, cin, &mut specs);
    conv("enc1.conv2", b, b, &mut specs);
    conv("enc2.conv1", 2 * b, b, &mut specs);
    conv("enc2.conv2", 2 * b, 2 * b, &mut specs);
    conv("bottleneck.conv1", 4 * b, 2 * b, &mut specs);
    conv("bottleneck.conv2", 4 * b, 4 * b, &mut specs);
    if config.use_channel_attention {
        let squeezed = 4 * b / config.ca_reduction;
        fc("ca.fc1", ".weight", ".bias", squeezed, 4 * b, &mut specs);
        fc("ca.fc2", ".weight", ".bias", 4 * b, squeezed, &mut specs);
    }
    up("dec1.up", 4 * b, 2 * b, &mut specs);
    conv("dec1.conv1", 2 * b, 4 * b, &mut specs);
    conv("dec1.conv2", 2 * b, 2 * b, &mut specs);
    up("dec2.up", 2 * b, b, &mut specs);
    conv("dec2.conv1", b, 2 * b, &mut specs);
    conv("dec2.conv2", b, b, &mut specs);
    conv("out.conv", 2, b, &mut specs);
    specs
}

/// Parameter totals by architectural role.
///
/// `backbone` counts the UNet as if it read the two raw input planes
/// directly; the widening of its first convolution to the pre-filter
/// channels is reported separately as `prefilter_extra`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ParameterCounts {
    /// UNet encoder/decoder parameters (first conv counted at 2 input
    /// channels).
    pub backbone: usize,
    /// Hypernetwork MLP parameters.
    pub hypernetwork: usize,
    /// Channel-attention parameters.
    pub channel_attention: usize,
    /// Extra first-conv weights from widening 2 input channels to the
    /// pre-filter output.
    pub prefilter_extra: usize,
    /// Every trainable parameter.
    pub total: usize,
}

impl ParameterCounts {
    /// Hypernetwork size relative to the backbone.
    pub fn hyper_overhead_ratio(&self) -> f64 {
        self.hypernetwork as f64 / self.backbone as f64
    }
}

/// Dropout/no-dropout switch for one forward pass.
#[derive(Debug, Clone, Copy)]
pub enum ForwardMode {
    /// Deterministic inference: dropout is the identity.
    Eval,
    /// Training: channel dropout draws its mask from `dropout_seed`.
    Train {
        /// Seed for the bottleneck dropout mask.
        dropout_seed: u64,
    },
}

/// The estimator model: configuration plus named parameter tensors.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: Vec<ParamTensor>,
}

impl Model {
    /// Build a model with uniform `±1/√fan_in` initialization drawn from a
    /// seeded stream, so identical seeds give identical models.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] if the configuration is invalid.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layer_specs(&config)
            .into_iter()
            .map(|spec| {
                let bound = 1.0 / (spec.fan_in as f64).sqrt();
                let len = spec.shape.iter().product();
                let data = (0..len)
                    .map(|_| rng.gen_range(-bound..bound) as f32)
                    .collect();
                ParamTensor {
                    name: format!("{}{}", spec.name, spec.suffix),
                    shape: spec.shape,
                    data,
                }
            })
            .collect();
        Ok(Self { config, params })
    }

    /// The architecture configuration.
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Number of parameter tensors.
    pub fn num_tensors(&self) -> usize {
        self.params.len()
    }

    /// Zero the final convolution so the untrained network outputs exactly
    /// zero (useful as a known starting point in tests).
    pub fn zero_output_layer(&mut self) {
        for p in &mut self.params {
            if p.name.starts_with("out.conv") {
                p.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Parameter totals by architectural role.
    pub fn parameter_counts(&self) -> ParameterCounts {
        let mut counts = ParameterCounts {
            backbone: 0,
            hypernetwork: 0,
            channel_attention: 0,
            prefilter_extra: 0,
            total: 0,
        };
        for p in &self.params {
            let n = p.data.len();
            counts.total += n;
            if p.name.starts_with("hyper.") {
                counts.hypernetwork += n;
            } else if p.name.starts_with("ca.") {
                counts.channel_attention += n;
            } else if p.name == "enc1.conv1.weight" {
                // Count the first conv at 2 input channels; the widening to
                // the pre-filter output is the pre-filter's cost.
                let cout = p.shape[0];
                let cin = p.shape[1];
                counts.backbone += cout * 2 * 9;
                counts.prefilter_extra += cout * (cin - 2) * 9;
            } else {
                counts.backbone += n;
            }
        }
        counts
    }

    /// One inference pass: refine an initial estimate of the channel into a
    /// full-grid estimate, conditioned on the (estimated) channel
    /// parameters.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] unless both grid dimensions are
    /// multiples of 4 (two pooling levels).
    pub fn forward(
        &self,
        init: &ResourceGrid,
        params: &ChannelParams,
        mode: ForwardMode,
    ) -> Result<ResourceGrid> {
        let (h, w) = (init.n_subcarriers(), init.n_symbols());
        check_pool_dims(h, w)?;
        let np = NormalizedParams::from_channel_params(params);
        let mut g = Graph::<f32>::new();
        let ids = insert_params::<f32>(&mut g, &self.params, false);
        let input = g.leaf(Tensor::from_vec(
            vec![1, 2, h, w],
            grid_to_planes(init),
        )?);
        let out = wire(&mut g, &self.config, &ids, input, &np, mode)?;
        Ok(planes_to_grid(g.data(out), h, w))
    }

    /// Serialize the parameters (and optimizer moments, when given) into a
    /// checkpoint taken at `step`.
    pub fn to_checkpoint(&self, step: u64, optimizer: Option<&[AdamState<f32>]>) -> Checkpoint {
        let mut entries: Vec<CheckpointEntry> = self
            .params
            .iter()
            .map(|p| CheckpointEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                data: p.data.clone(),
            })
            .collect();
        if let Some(states) = optimizer {
            for (p, s) in self.params.iter().zip(states) {
                entries.push(CheckpointEntry {
                    name: format!("{}.adam_m", p.name),
                    shape: p.shape.clone(),
                    data: s.first_moments().to_vec(),
                });
                entries.push(CheckpointEntry {
                    name: format!("{}.adam_v", p.name),
                    shape: p.shape.clone(),
                    data: s.second_moments().to_vec(),
                });
            }
        }
        Checkpoint {
            step,
            optimizer_state: optimizer.is_some(),
            entries,
        }
    }

    /// Rebuild a model (and optimizer moments, when present) from a
    /// checkpoint.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Format`] if any expected tensor is missing or has
    /// the wrong shape for this configuration.
    pub fn from_checkpoint(
        config: ModelConfig,
        ckpt: &Checkpoint,
    ) -> Result<(Self, Option<Vec<AdamState<f32>>>)> {
        config.validate()?;
        let mut params = Vec::new();
        let mut states = Vec::new();
        for spec in layer_specs(&config) {
            let name = format!("{}{}", spec.name, spec.suffix);
            let entry = ckpt
                .entry(&name)
                .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor {name}")))?;
            if entry.shape != spec.shape {
                return Err(Error::Format(format!(
                    "checkpoint tensor {name} has shape {:?}, expected {:?}",
                    entry.shape, spec.shape
                )));
            }
            if ckpt.optimizer_state {
                let m = ckpt
                    .entry(&format!("{name}.adam_m"))
                    .ok_or_else(|| Error::Format(format!("missing moments for {name}")))?;
                let v = ckpt
                    .entry(&format!("{name}.adam_v"))
                    .ok_or_else(|| Error::Format(format!("missing moments for {name}")))?;
                if m.data.len() != entry.data.len() || v.data.len() != entry.data.len() {
                    return Err(Error::Format(format!("moment size mismatch for {name}")));
                }
                states.push(AdamState::from_moments(
                    m.data.clone(),
                    v.data.clone(),
                    ckpt.step,
                ));
            }
            params.push(ParamTensor {
                name,
                shape: spec.shape,
                data: entry.data.clone(),
            });
        }
        let optimizer = ckpt.optimizer_state.then_some(states);
        Ok((Self { config, params }, optimizer))
    }
}

fn check_pool_dims(h: usize, w: usize) -> Result<()> {
    if h % 4 != 0 || w % 4 != 0 {
        return Err(Error::InvalidConfig(format!(
            "grid dimensions must be multiples of 4 for two pooling levels, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Pack a complex grid into two image planes `[2, H, W]`: real then
/// imaginary, subcarriers as rows.
pub fn grid_to_planes(grid: &ResourceGrid) -> Vec<f32> {
    let n = grid.values().len();
    let mut planes = vec![0.0f32; 2 * n];
    for (i, v) in grid.values().iter().enumerate() {
        planes[i] = v.re as f32;
        planes[n + i] = v.im as f32;
    }
    planes
}

/// Inverse of [`grid_to_planes`].
pub fn planes_to_grid(planes: &[f32], n_subcarriers: usize, n_symbols: usize) -> ResourceGrid {
    let n = n_subcarriers * n_symbols;
    let mut grid = ResourceGrid::zeros(n_subcarriers, n_symbols);
    for (i, v) in grid.values_mut().iter_mut().enumerate() {
        *v = Complex64::new(planes[i] as f64, planes[n + i] as f64);
    }
    grid
}

/// `‖pred − target‖² / ‖target‖²` over plane-packed grids, in f64.
pub fn planes_nmse(pred: &[f32], target: &[f32]) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (&p, &t) in pred.iter().zip(target) {
        num += (p as f64 - t as f64).powi(2);
        den += (t as f64).powi(2);
    }
    num / den
}

/// Insert every parameter tensor as a graph leaf, in store order.
fn insert_params<T: Scalar>(
    g: &mut Graph<T>,
    params: &[ParamTensor],
    requires_grad: bool,
) -> Vec<TensorId> {
    params
        .iter()
        .map(|p| {
            let data: Vec<T> = p.data.iter().map(|&v| lit(v as f64)).collect();
            let mut t = Tensor::from_vec(p.shape.clone(), data).expect("stored shapes are valid");
            if requires_grad {
                t = t.with_requires_grad();
            }
            g.leaf(t)
        })
        .collect()
}

/// Sequential reader over the parameter leaves; consumption order must
/// match [`layer_specs`].
struct ParamCursor<'a> {
    ids: &'a [TensorId],
    pos: usize,
}

impl<'a> ParamCursor<'a> {
    fn new(ids: &'a [TensorId]) -> Self {
        Self { ids, pos: 0 }
    }

    /// The next (weight, bias) pair.
    fn take2(&mut self) -> (TensorId, TensorId) {
        let pair = (self.ids[self.pos], self.ids[self.pos + 1]);
        self.pos += 2;
        pair
    }
}

/// Build the full forward graph from an input leaf to the two output
/// planes. `ids` must hold the parameter leaves in [`layer_specs`] order.
fn wire<T: Scalar>(
    g: &mut Graph<T>,
    config: &ModelConfig,
    ids: &[TensorId],
    input: TensorId,
    np: &NormalizedParams,
    mode: ForwardMode,
) -> Result<TensorId> {
    let mut cursor = ParamCursor::new(ids);
    let conv_relu = |g: &mut Graph<T>, c: &mut ParamCursor, x: TensorId| -> Result<TensorId> {
        let (w, b) = c.take2();
        let y = g.conv2d(x, w, b)?;
        Ok(g.relu(y))
    };

    let unet_in = if config.use_hyper_prefilter {
        // Hypernetwork: conditioning vector -> pre-filter kernel and bias.
        let pf = config.prefilter_channels;
        let (w1, b1) = cursor.take2();
        let (w2, b2) = cursor.take2();
        let (w3, b3) = cursor.take2();
        let p_data: Vec<T> = np.0.iter().map(|&v| lit(v)).collect();
        let p = g.leaf(Tensor::from_vec(vec![1, 4], p_data)?);
        let h = g.fully_connected(p, w1, b1)?;
        let h = g.relu(h);
        let h = g.fully_connected(h, w2, b2)?;
        let h = g.relu(h);
        let theta = g.fully_connected(h, w3, b3)?;
        let kernel_flat = g.slice_flat(theta, 0, pf * 2 * 9)?;
        let kernel = g.reshape(kernel_flat, vec![pf, 2, 3, 3])?;
        let bias = g.slice_flat(theta, pf * 2 * 9, pf)?;
        let pre = g.conv2d(input, kernel, bias)?;
        g.relu(pre)
    } else {
        input
    };

    let e1 = conv_relu(g, &mut cursor, unet_in)?;
    let e1 = conv_relu(g, &mut cursor, e1)?;
    let p1 = g.maxpool2(e1)?;
    let e2 = conv_relu(g, &mut cursor, p1)?;
    let e2 = conv_relu(g, &mut cursor, e2)?;
    let p2 = g.maxpool2(e2)?;
    let mut bott = conv_relu(g, &mut cursor, p2)?;
    bott = conv_relu(g, &mut cursor, bott)?;

    if config.use_channel_attention {
        let (w1, b1) = cursor.take2();
        let (w2, b2) = cursor.take2();
        let s = g.global_avg_pool(bott)?;
        let s = g.fully_connected(s, w1, b1)?;
        let s = g.relu(s);
        let s = g.fully_connected(s, w2, b2)?;
        let s = g.sigmoid(s);
        bott = g.scale_channels(bott, s)?;
    }
    if let ForwardMode::Train { dropout_seed } = mode {
        if config.dropout_p > 0.0 {
            bott = g.channel_dropout(bott, config.dropout_p, true, dropout_seed)?;
        }
    }

    let (uw, ub) = cursor.take2();
    let d1 = g.conv_transpose2d(bott, uw, ub)?;
    let d1 = g.relu(d1);
    let d1 = g.concat_channels(d1, e2)?;
    let d1 = conv_relu(g, &mut cursor, d1)?;
    let d1 = conv_relu(g, &mut cursor, d1)?;

    let (uw, ub) = cursor.take2();
    let d2 = g.conv_transpose2d(d1, uw, ub)?;
    let d2 = g.relu(d2);
    let d2 = g.concat_channels(d2, e1)?;
    let d2 = conv_relu(g, &mut cursor, d2)?;
    let d2 = conv_relu(g, &mut cursor, d2)?;

    let (ow, ob) = cursor.take2();
    let mut out = g.conv2d(d2, ow, ob)?;
    if config.global_residual {
        out = g.add(out, input)?;
    }
    debug_assert_eq!(cursor.pos, ids.len(), "forward consumed every parameter");
    Ok(out)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One training example in plane-packed form.
#[derive(Debug, Clone)]
pub struct TrainSample {
    /// Grid height (subcarriers).
    pub height: usize,
    /// Grid width (OFDM symbols).
    pub width: usize,
    /// Initial estimate planes `[2, H, W]`.
    pub init_planes: Vec<f32>,
    /// True channel planes `[2, H, W]`.
    pub target_planes: Vec<f32>,
    /// Conditioning vector for the hypernetwork.
    pub norm_params: NormalizedParams,
}

impl TrainSample {
    /// Pack an initial estimate, its target, and the conditioning
    /// parameters.
    ///
    /// # Errors
    ///
    /// Returns [`Error::ShapeMismatch`] if the grids differ in size and
    /// [`Error::InvalidConfig`] if the dimensions are not multiples of 4.
    pub fn new(
        init: &ResourceGrid,
        truth: &ResourceGrid,
        params: &ChannelParams,
    ) -> Result<Self> {
        if init.n_subcarriers() != truth.n_subcarriers()
            || init.n_symbols() != truth.n_symbols()
        {
            return Err(Error::ShapeMismatch(format!(
                "init grid is {}x{} but truth is {}x{}",
                init.n_subcarriers(),
                init.n_symbols(),
                truth.n_subcarriers(),
                truth.n_symbols()
            )));
        }
        check_pool_dims(init.n_subcarriers(), init.n_symbols())?;
        Ok(Self {
            height: init.n_subcarriers(),
            width: init.n_symbols(),
            init_planes: grid_to_planes(init),
            target_planes: grid_to_planes(truth),
            norm_params: NormalizedParams::from_channel_params(params),
        })
    }
}

/// Optimization settings for [`train`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    /// Passes over the training set.
    pub epochs: usize,
    /// Samples per optimizer step (gradients are averaged).
    pub batch_size: usize,
    /// Adam learning rate.
    pub learning_rate: f64,
    /// Seed for shuffling and dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Check the optimization settings.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidConfig`] for zero epochs/batch or a
    /// non-positive learning rate.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch size must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EpochStats {
    /// Epoch index, from 0.
    pub epoch: usize,
    /// Mean per-sample squared-error loss over the epoch.
    pub train_loss: f64,
    /// Mean NMSE over the validation set in dB (absent without one).
    pub val_nmse_db: Option<f64>,
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Per-epoch statistics in order.
    pub history: Vec<EpochStats>,
    /// Optimizer steps taken.
    pub steps: u64,
    /// Final optimizer state, aligned with the model's parameter tensors.
    pub optimizer: Vec<AdamState<f32>>,
}

/// Cheap stateless mixer for per-sample dropout seeds.
fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a ^ b.rotate_left(17) ^ c.rotate_left(41);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Forward + backward for one sample; returns the loss and per-parameter
/// gradients in store order.
fn sample_pass(
    model: &Model,
    sample: &TrainSample,
    dropout_seed: u64,
) -> Result<(f64, Vec<Vec<f32>>)> {
    let mut g = Graph::<f32>::new();
    let ids = insert_params::<f32>(&mut g, &model.params, true);
    let input = g.leaf(Tensor::from_vec(
        vec![1, 2, sample.height, sample.width],
        sample.init_planes.clone(),
    )?);
    let target = g.leaf(Tensor::from_vec(
        vec![1, 2, sample.height, sample.width],
        sample.target_planes.clone(),
    )?);
    let out = wire(
        &mut g,
        &model.config,
        &ids,
        input,
        &sample.norm_params,
        ForwardMode::Train { dropout_seed },
    )?;
    let loss = g.mse_loss(out, target)?;
    let loss_value = g.data(loss)[0] as f64;
    g.backward(loss)?;
    let grads = ids
        .iter()
        .zip(&model.params)
        .map(|(&id, p)| g.take_grad(id).unwrap_or_else(|| vec![0.0; p.data.len()]))
        .collect();
    Ok((loss_value, grads))
}

/// Mini-batch Adam training.
///
/// Every epoch shuffles the training set with the seeded stream, splits it
/// into batches, and for each batch accumulates per-sample gradients
/// (computed in parallel, reduced in sample order so results do not depend
/// on thread count), averages them, and takes one Adam step. With a
/// non-empty validation set, each epoch records the mean validation NMSE.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] for invalid settings or an empty
/// training set.
pub fn train(
    model: &mut Model,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    tc: &TrainConfig,
) -> Result<TrainReport> {
    tc.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut states: Vec<AdamState<f32>> = model
        .params
        .iter()
        .map(|p| AdamState::new(p.data.len()))
        .collect();
    let mut history = Vec::with_capacity(tc.epochs);
    let mut steps = 0u64;

    for epoch in 0..tc.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        // Seeded Fisher–Yates shuffle, advancing the same stream each epoch.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0f64;
        for (chunk_idx, chunk) in order.chunks(tc.batch_size).enumerate() {
            let base = chunk_idx * tc.batch_size;
            let passes: Vec<(f64, Vec<Vec<f32>>)> = chunk
                .par_iter()
                .enumerate()
                .map(|(offset, &sample_idx)| {
                    let seed = mix_seed(tc.seed, epoch as u64, (base + offset) as u64);
                    sample_pass(model, &train_set[sample_idx], seed)
                })
                .collect::<Result<_>>()?;

            let inv_batch = 1.0 / chunk.len() as f32;
            let mut grad_acc: Vec<Vec<f32>> = model
                .params
                .iter()
                .map(|p| vec![0.0f32; p.data.len()])
                .collect();
            for (loss, grads) in &passes {
                loss_sum += loss;
                for (acc, g) in grad_acc.iter_mut().zip(grads) {
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            for ((param, grads), state) in
                model.params.iter_mut().zip(&mut grad_acc).zip(&mut states)
            {
                grads.iter_mut().for_each(|v| *v *= inv_batch);
                adam_step(
                    &mut param.data,
                    grads,
                    state,
                    tc.learning_rate,
                    ADAM_BETA1,
                    ADAM_BETA2,
                    ADAM_EPS,
                );
            }
            steps += 1;
        }

        let val_nmse_db = if val_set.is_empty() {
            None
        } else {
            Some(10.0 * evaluate_mean_nmse(model, val_set)?.log10())
        };
        let train_loss = loss_sum / train_set.len() as f64;
        match val_nmse_db {
            Some(v) => log::info!(
                "epoch {}/{}: train loss {train_loss:.6}, val NMSE {v:.3} dB",
                epoch + 1,
                tc.epochs
            ),
            None => log::info!(
                "epoch {}/{}: train loss {train_loss:.6}",
                epoch + 1,
                tc.epochs
            ),
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_nmse_db,
        });
    }
    Ok(TrainReport {
        history,
        steps,
        optimizer: states,
    })
}

/// Mean linear NMSE of the model over a sample set (inference mode).
///
/// Samples are evaluated in parallel and reduced in order, so the result
/// is independent of thread count.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] for an empty set.
pub fn evaluate_mean_nmse(model: &Model, samples: &[TrainSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("evaluation set is empty".into()));
    }
    let nmses: Vec<f64> = samples
        .par_iter()
        .map(|s| -> Result<f64> {
            let mut g = Graph::<f32>::new();
            let ids = insert_params::<f32>(&mut g, &model.params, false);
            let input = g.leaf(Tensor::from_vec(
                vec![1, 2, s.height, s.width],
                s.init_planes.clone(),
            )?);
            let out = wire(&mut g, &model.config, &ids, input, &s.norm_params, ForwardMode::Eval)?;
            Ok(planes_nmse(g.data(out), &s.target_planes))
        })
        .collect::<Result<_>>()?;
    Ok(nmses.iter().sum::<f64>() / nmses.len() as f64)
}

// ---------------------------------------------------------------------------
// Composition gradient check
// ---------------------------------------------------------------------------

/// Result of [`check_composition_gradients`].
#[derive(Debug, Clone, Copy)]
pub struct CompositionGradCheck {
    /// Worst probed error, relative to the largest analytic gradient.
    pub max_rel_error: f64,
    /// Largest analytic gradient magnitude over all parameters.
    pub grad_scale: f64,
    /// Number of coordinates probed.
    pub probes: usize,
}

/// Finite-difference validation of the full forward/backward composition.
///
/// Runs one analytic backward through the entire network (training mode,
/// fixed dropout mask), then central-differences the loss along selected
/// coordinates: for every parameter tensor and for the input planes, the
/// coordinate carrying that tensor's largest gradient. Errors are measured
/// relative to the largest analytic gradient magnitude. The precision `T`
/// selects 32-bit or 64-bit arithmetic for the whole check.
///
/// # Errors
///
/// Returns shape errors from the forward pass.
pub fn check_composition_gradients<T: Scalar>(
    model: &Model,
    sample: &TrainSample,
) -> Result<CompositionGradCheck> {
    let dropout_seed = 0x5eed;
    let target: Vec<T> = sample.target_planes.iter().map(|&v| lit(v as f64)).collect();
    let forward = |params: &[ParamTensor], input_planes: &[f32]| -> Result<f64> {
        let mut g = Graph::<T>::new();
        let ids = insert_params::<T>(&mut g, params, false);
        let input_data: Vec<T> = input_planes.iter().map(|&v| lit(v as f64)).collect();
        let input = g.leaf(Tensor::from_vec(vec![1, 2, sample.height, sample.width], input_data)?);
        let out = wire(
            &mut g,
            &model.config,
            &ids,
            input,
            &sample.norm_params,
            ForwardMode::Train { dropout_seed },
        )?;
        // Compute the loss in f64 from the prediction so the probe is not
        // limited by the precision of the loss scalar itself.
        let mut acc = 0.0f64;
        for (p, t) in g.data(out).iter().zip(&target) {
            let d = p.to_f64().expect("finite") - t.to_f64().expect("finite");
            acc += d * d;
        }
        Ok(acc)
    };

    // Analytic pass (in T) over parameters and input.
    let mut g = Graph::<T>::new();
    let ids = insert_params::<T>(&mut g, &model.params, true);
    let input_data: Vec<T> = sample.init_planes.iter().map(|&v| lit(v as f64)).collect();
    let input = g.leaf(
        Tensor::from_vec(vec![1, 2, sample.height, sample.width], input_data)?.with_requires_grad(),
    );
    let target_id = g.leaf(Tensor::from_vec(
        vec![1, 2, sample.height, sample.width],
        target.clone(),
    )?);
    let out = wire(
        &mut g,
        &model.config,
        &ids,
        input,
        &sample.norm_params,
        ForwardMode::Train { dropout_seed },
    )?;
    let loss = g.mse_loss(out, target_id)?;
    g.backward(loss)?;

    // For each tensor, probe the coordinate with the largest gradient.
    let mut probe_list: Vec<(Option<usize>, usize, f64)> = Vec::new();
    let mut grad_scale = 0.0f64;
    let mut collect = |tensor_idx: Option<usize>, grad: &[T]| {
        let mut best = (0usize, 0.0f64);
        for (i, gv) in grad.iter().enumerate() {
            let a = gv.to_f64().expect("finite").abs();
            if a > best.1 {
                best = (i, a);
            }
        }
        grad_scale = grad_scale.max(best.1);
        let analytic = grad[best.0].to_f64().expect("finite");
        probe_list.push((tensor_idx, best.0, analytic));
    };
    for (idx, &id) in ids.iter().enumerate() {
        if let Some(grad) = g.grad(id) {
            collect(Some(idx), grad);
        }
    }
    if let Some(grad) = g.grad(input) {
        collect(None, grad);
    }

    let step = T::GRAD_CHECK_STEP;
    let mut max_rel_error = 0.0f64;
    let mut params = model.params.to_vec();
    let mut input_planes = sample.init_planes.clone();
    for &(tensor_idx, element, analytic) in &probe_list {
        // Perturbation happens in f32 storage (exact at 64-bit check
        // precision for these magnitudes); the stored value is read back so
        // the divisor reflects the perturbation actually applied.
        let original = match tensor_idx {
            Some(t) => params[t].data[element],
            None => input_planes[element],
        };
        let set = |params: &mut [ParamTensor], planes: &mut [f32], value: f64| -> f64 {
            let slot = match tensor_idx {
                Some(t) => &mut params[t].data[element],
                None => &mut planes[element],
            };
            *slot = value as f32;
            *slot as f64
        };
        let stored_plus = set(&mut params, &mut input_planes, original as f64 + step);
        let plus = forward(&params, &input_planes)?;
        let stored_minus = set(&mut params, &mut input_planes, original as f64 - step);
        let minus = forward(&params, &input_planes)?;
        set(&mut params, &mut input_planes, original as f64);
        let numeric = (plus - minus) / (stored_plus - stored_minus);
        let err = (analytic - numeric).abs() / grad_scale.max(1e-6);
        max_rel_error = max_rel_error.max(err);
    }
    Ok(CompositionGradCheck {
        max_rel_error,
        grad_scale,
        probes: probe_list.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::nmse;

    /// Deterministic pseudo-random complex grid for fixtures.
    fn random_grid(h: usize, w: usize, seed: u64) -> ResourceGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = ResourceGrid::zeros(h, w);
        for v in grid.values_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        grid
    }

    fn test_params() -> ChannelParams {
        ChannelParams {
            mean_delay_s: 1e-6,
            delay_width_s: 0.5e-6,
            doppler_hz: 100.0,
            snr_linear: 10.0,
        }
    }

    fn tiny_sample(seed: u64) -> TrainSample {
        let truth = random_grid(8, 4, seed);
        let mut init = truth.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for v in init.values_mut() {
            *v += Complex64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
        }
        TrainSample::new(&init, &truth, &test_params()).unwrap()
    }

    #[test]
    fn test_parameter_counts_match_architecture() {
        // Full model: 117,170 backbone + 1,584 hypernetwork + 1,096 channel
        // attention + 864 first-conv widening = 120,714 total. The
        // hypernetwork adds 1.35% of the backbone size.
        let model = Model::new(ModelConfig::hyper_ca(), 0).unwrap();
        let c = model.parameter_counts();
        assert_eq!(c.backbone, 117_170);
        assert_eq!(c.hypernetwork, 1_584);
        assert_eq!(c.channel_attention, 1_096);
        assert_eq!(c.prefilter_extra, 864);
        assert_eq!(c.total, 117_170 + 1_584 + 1_096 + 864);
        assert!((c.hyper_overhead_ratio() - 0.0135).abs() < 2e-4);

        // Ablations drop exactly their role's parameters.
        let unet = Model::new(ModelConfig::unet_baseline(), 0).unwrap();
        let cu = unet.parameter_counts();
        assert_eq!(cu.backbone, 117_170);
        assert_eq!(cu.hypernetwork, 0);
        assert_eq!(cu.channel_attention, 0);
        assert_eq!(cu.prefilter_extra, 0);
        assert_eq!(cu.total, 117_170);

        let hyper = Model::new(ModelConfig::hyper(), 0).unwrap();
        let ch = hyper.parameter_counts();
        assert_eq!(ch.total, 117_170 + 1_584 + 864);
        assert_eq!(ch.channel_attention, 0);
    }

    #[test]
    fn test_config_validation_rejects_bad_settings() {
        let mut cfg = ModelConfig::default();
        cfg.dropout_p = 1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::default();
        cfg.ca_reduction = 7; // does not divide 64
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::default();
        cfg.base_channels = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn test_forward_preserves_grid_shape_and_rejects_bad_dims() {
        let model = Model::new(ModelConfig::hyper_ca(), 7).unwrap();
        let init = random_grid(48, 12, 3);
        let out = model
            .forward(&init, &test_params(), ForwardMode::Eval)
            .unwrap();
        assert_eq!(out.n_subcarriers(), 48);
        assert_eq!(out.n_symbols(), 12);

        let bad = random_grid(10, 12, 4);
        assert!(model.forward(&bad, &test_params(), ForwardMode::Eval).is_err());
    }

    #[test]
    fn test_forward_is_deterministic_for_fixed_inputs() {
        let model = Model::new(ModelConfig::hyper_ca(), 11).unwrap();
        let init = random_grid(8, 4, 5);
        let a = model.forward(&init, &test_params(), ForwardMode::Eval).unwrap();
        let b = model.forward(&init, &test_params(), ForwardMode::Eval).unwrap();
        assert_eq!(a.values(), b.values());

        // Same seed in training mode reproduces the same dropout mask.
        let t1 = model
            .forward(&init, &test_params(), ForwardMode::Train { dropout_seed: 9 })
            .unwrap();
        let t2 = model
            .forward(&init, &test_params(), ForwardMode::Train { dropout_seed: 9 })
            .unwrap();
        assert_eq!(t1.values(), t2.values());
    }

    #[test]
    fn test_seeds_and_params_change_the_model_output() {
        let m1 = Model::new(ModelConfig::hyper_ca(), 1).unwrap();
        let m2 = Model::new(ModelConfig::hyper_ca(), 2).unwrap();
        let init = random_grid(8, 4, 6);
        let o1 = m1.forward(&init, &test_params(), ForwardMode::Eval).unwrap();
        let o2 = m2.forward(&init, &test_params(), ForwardMode::Eval).unwrap();
        assert_ne!(o1.values(), o2.values());

        // Distinct conditioning vectors produce distinct outputs through
        // the hypernetwork-generated pre-filter.
        let mut other = test_params();
        other.doppler_hz = 300.0;
        let o3 = m1.forward(&init, &other, ForwardMode::Eval).unwrap();
        assert_ne!(o1.values(), o3.values());

        // Without the hypernetwork the conditioning vector is unused.
        let unet = Model::new(ModelConfig::unet_baseline(), 1).unwrap();
        let u1 = unet.forward(&init, &test_params(), ForwardMode::Eval).unwrap();
        let u2 = unet.forward(&init, &other, ForwardMode::Eval).unwrap();
        assert_eq!(u1.values(), u2.values());
    }

    #[test]
    fn test_normalized_params_clamp_and_scale() {
        let np = NormalizedParams::from_channel_params(&ChannelParams {
            mean_delay_s: 1e-6,
            delay_width_s: 0.5e-6,
            doppler_hz: 100.0,
            snr_linear: 10.0, // 10 dB
        });
        assert!((np.0[0] - 0.2).abs() < 1e-12);
        assert!((np.0[1] - 0.1).abs() < 1e-12);
        assert!((np.0[2] - 0.25).abs() < 1e-12);
        assert!((np.0[3] - 0.5).abs() < 1e-12);

        // Out-of-range values clamp to [0, 1]; infinite SNR saturates.
        let np = NormalizedParams::from_channel_params(&ChannelParams {
            mean_delay_s: 99e-6,
            delay_width_s: -1.0,
            doppler_hz: 1e5,
            snr_linear: f64::INFINITY,
        });
        assert_eq!(np.0, [1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn test_zero_output_layer_gives_zero_prediction_and_known_loss() {
        let mut model = Model::new(ModelConfig::hyper_ca(), 3).unwrap();
        model.zero_output_layer();
        let init = random_grid(8, 4, 8);
        let out = model.forward(&init, &test_params(), ForwardMode::Eval).unwrap();
        assert!(out.values().iter().all(|v| v.norm() == 0.0));

        // With a zero prediction, the per-sample loss is exactly the
        // squared norm of the target (batch dimension is 1).
        let truth = random_grid(8, 4, 9);
        let sample = TrainSample::new(&init, &truth, &test_params()).unwrap();
        let (loss, _) = sample_pass(&model, &sample, 123).unwrap();
        let expected: f64 = sample
            .target_planes
            .iter()
            .map(|&t| (t as f64) * (t as f64))
            .sum();
        assert!(
            (loss - expected).abs() < 1e-3 * expected.max(1.0),
            "loss {loss} vs expected {expected}"
        );

        // The residual ablation instead passes the input through.
        let mut cfg = ModelConfig::hyper_ca();
        cfg.global_residual = true;
        let mut residual = Model::new(cfg, 3).unwrap();
        residual.zero_output_layer();
        let out = residual.forward(&init, &test_params(), ForwardMode::Eval).unwrap();
        for (o, i) in out.values().iter().zip(init.values()) {
            assert!((o - i).norm() < 1e-6);
        }
    }

    #[test]
    fn test_hypernetwork_zeroed_final_layer_silences_the_prefilter() {
        // Zeroing hyper.fc3 makes the generated kernel and bias zero, so
        // the pre-filter output is relu(0) = 0 everywhere; the rest of the
        // network still produces its bias-driven response.
        let mut model = Model::new(ModelConfig::hyper(), 5).unwrap();
        for p in &mut model.params {
            if p.name.starts_with("hyper.fc3") {
                p.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let init = random_grid(8, 4, 10);
        let a = model.forward(&init, &test_params(), ForwardMode::Eval).unwrap();
        let zero_init = ResourceGrid::zeros(8, 4);
        let b = model
            .forward(&zero_init, &test_params(), ForwardMode::Eval)
            .unwrap();
        // With a silenced pre-filter the encoder sees zeros either way.
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn test_checkpoint_round_trip_preserves_model_and_optimizer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cewt");

        let mut model = Model::new(ModelConfig::hyper_ca(), 21).unwrap();
        let samples: Vec<TrainSample> = (0..4).map(tiny_sample).collect();
        let tc = TrainConfig {
            epochs: 2,
            batch_size: 2,
            learning_rate: 1e-3,
            seed: 4,
        };
        let report = train(&mut model, &samples, &[], &tc).unwrap();
        assert_eq!(report.steps, 4);

        model
            .to_checkpoint(report.steps, Some(&report.optimizer))
            .save(&path)
            .unwrap();
        let ckpt = Checkpoint::load(&path).unwrap();
        let (restored, optimizer) =
            Model::from_checkpoint(ModelConfig::hyper_ca(), &ckpt).unwrap();
        let states = optimizer.expect("moments were saved");
        assert_eq!(states.len(), model.params.len());
        for (a, b) in model.params.iter().zip(&restored.params) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.data, b.data);
        }
        for (a, b) in report.optimizer.iter().zip(&states) {
            assert_eq!(a.first_moments(), b.first_moments());
            assert_eq!(a.second_moments(), b.second_moments());
            assert_eq!(b.step_count(), report.steps);
        }

        // A mismatched architecture is rejected.
        assert!(Model::from_checkpoint(ModelConfig::unet_baseline(), &ckpt).is_err());
    }

    #[test]
    fn test_every_parameter_group_receives_gradient() {
        let model = Model::new(ModelConfig::hyper_ca(), 13).unwrap();
        let sample = tiny_sample(31);
        let (_, grads) = sample_pass(&model, &sample, 77).unwrap();
        let group_max = |prefix: &str| -> f32 {
            model
                .params
                .iter()
                .zip(&grads)
                .filter(|(p, _)| p.name.starts_with(prefix))
                .flat_map(|(_, g)| g.iter().map(|v| v.abs()))
                .fold(0.0, f32::max)
        };
        for prefix in ["hyper.", "enc1.", "enc2.", "bottleneck.", "ca.", "dec1.", "dec2.", "out."] {
            assert!(
                group_max(prefix) > 0.0,
                "no gradient reached parameter group {prefix}"
            );
        }
    }

    #[test]
    fn test_composition_gradcheck_32_and_64_bit() {
        // Finite differences through the entire network: hypernetwork,
        // generated conv, encoder, attention, dropout, decoder, loss.
        let model = Model::new(ModelConfig::hyper_ca(), 17).unwrap();
        let sample = tiny_sample(41);
        let r64 = check_composition_gradients::<f64>(&model, &sample).unwrap();
        assert!(
            r64.max_rel_error < 1e-5,
            "64-bit composition error {} (scale {})",
            r64.max_rel_error,
            r64.grad_scale
        );
        let r32 = check_composition_gradients::<f32>(&model, &sample).unwrap();
        assert!(
            r32.max_rel_error < 1e-3,
            "32-bit composition error {} (scale {})",
            r32.max_rel_error,
            r32.grad_scale
        );
        // One probe per parameter tensor plus the input planes.
        assert_eq!(r64.probes, model.num_tensors() + 1);
    }

    #[test]
    fn test_training_is_deterministic_and_seed_sensitive() {
        let samples: Vec<TrainSample> = (0..6).map(tiny_sample).collect();
        let tc = TrainConfig {
            epochs: 2,
            batch_size: 3,
            learning_rate: 1e-3,
            seed: 99,
        };
        let run = |seed: u64| {
            let mut model = Model::new(ModelConfig::hyper_ca(), 50).unwrap();
            let tc = TrainConfig { seed, ..tc.clone() };
            let report = train(&mut model, &samples, &samples[..2], &tc).unwrap();
            (model, report)
        };
        let (m1, r1) = run(99);
        let (m2, r2) = run(99);
        for (a, b) in m1.params.iter().zip(&m2.params) {
            assert_eq!(a.data, b.data, "nondeterministic weights in {}", a.name);
        }
        assert_eq!(
            r1.history.iter().map(|h| h.train_loss).collect::<Vec<_>>(),
            r2.history.iter().map(|h| h.train_loss).collect::<Vec<_>>()
        );
        assert_eq!(r1.history[0].val_nmse_db, r2.history[0].val_nmse_db);

        let (m3, _) = run(100);
        assert!(
            m1.params.iter().zip(&m3.params).any(|(a, b)| a.data != b.data),
            "different shuffle/dropout seeds should change training"
        );
    }

    #[test]
    fn test_small_training_run_overfits_a_tiny_set() {
        // A 120k-parameter network must be able to drive the loss far down
        // on 6 fixed samples; this exercises the full optimizer loop.
        let samples: Vec<TrainSample> = (0..6).map(tiny_sample).collect();
        let mut model = Model::new(ModelConfig::hyper_ca(), 23).unwrap();
        let tc = TrainConfig {
            epochs: 120,
            batch_size: 6,
            learning_rate: 3e-3,
            seed: 7,
        };
        let report = train(&mut model, &samples, &[], &tc).unwrap();
        let first = report.history.first().unwrap().train_loss;
        let last = report.history.last().unwrap().train_loss;
        assert!(
            last < 0.1 * first,
            "loss failed to drop: {first} -> {last}"
        );
    }

    #[test]
    fn test_trained_model_beats_its_initialization_on_nmse() {
        // Training on noisy inits toward clean targets should improve NMSE
        // over the identity baseline of just returning the init.
        let samples: Vec<TrainSample> = (0..8).map(tiny_sample).collect();
        let mut model = Model::new(ModelConfig::hyper_ca(), 29).unwrap();
        let tc = TrainConfig {
            epochs: 80,
            batch_size: 4,
            learning_rate: 3e-3,
            seed: 11,
        };
        train(&mut model, &samples, &[], &tc).unwrap();
        let model_nmse = evaluate_mean_nmse(&model, &samples).unwrap();
        let init_nmse: f64 = samples
            .iter()
            .map(|s| planes_nmse(&s.init_planes, &s.target_planes))
            .sum::<f64>()
            / samples.len() as f64;
        assert!(
            model_nmse < init_nmse,
            "trained NMSE {model_nmse} not below init NMSE {init_nmse}"
        );
    }

    #[test]
    fn test_planes_round_trip_and_nmse_against_grid_version() {
        let grid = random_grid(8, 4, 55);
        let planes = grid_to_planes(&grid);
        let back = planes_to_grid(&planes, 8, 4);
        for (a, b) in grid.values().iter().zip(back.values()) {
            assert!((a - b).norm() < 1e-7);
        }

        let other = random_grid(8, 4, 56);
        let a = planes_nmse(&grid_to_planes(&other), &planes);
        let b = nmse(&other, &grid).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn test_train_rejects_invalid_configs() {
        let samples: Vec<TrainSample> = (0..2).map(tiny_sample).collect();
        let mut model = Model::new(ModelConfig::hyper_ca(), 1).unwrap();
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&mut model, &samples, &[], &bad).is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(&mut model, &samples, &[], &bad).is_err());
        assert!(train(&mut model, &[], &[], &TrainConfig::default()).is_err());
    }
}
