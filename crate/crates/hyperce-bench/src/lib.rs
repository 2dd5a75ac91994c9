//! Benchmark-only crate; see `benches/pipeline.rs`.
//!
//! Shared fixture builders live here so benchmarks stay declarative.

use hyperce_core::channel::{
    generate_channel, simulate_observation, tdl_profile, FadingConfig, Observation,
    TdlProfileName,
};
use hyperce_core::correlation::ChannelParams;
use hyperce_core::grid::{default_numerology, dmrs_pattern, trs_pattern, Numerology};
use hyperce_core::model::TrainSample;
use hyperce_core::{estimators, Model, ModelConfig};

/// Default-numerology observation of a TDL-A channel at 100 Hz / 10 dB.
pub fn example_observation(seed: u64) -> (Numerology, Observation) {
    let num = default_numerology();
    let fading = FadingConfig::new(100.0, seed);
    let profile = tdl_profile(TdlProfileName::TdlA);
    let chan = generate_channel(&num, &profile, &fading).expect("valid config");
    let obs = simulate_observation(
        &chan,
        &num,
        &dmrs_pattern(&num),
        &trs_pattern(&num),
        10.0,
        seed ^ 0x9e37_79b9_7f4a_7c15,
    );
    (num, obs)
}

/// Nominal physical parameters matching [`example_observation`].
pub fn example_params() -> ChannelParams {
    ChannelParams {
        mean_delay_s: 1e-6,
        delay_width_s: 0.5e-6,
        doppler_hz: 100.0,
        snr_linear: 10.0,
    }
}

/// A plane-packed training sample built from a simulated observation with a
/// bilinear initial estimate.
pub fn example_train_sample(seed: u64) -> TrainSample {
    let (num, obs) = example_observation(seed);
    let pattern = dmrs_pattern(&num);
    let pilots = estimators::ls_estimate(&obs, &pattern).expect("pattern matches");
    let init = estimators::bilinear_init(&pilots, &num).expect("valid grid");
    TrainSample::new(&init.values, &obs.truth, &example_params()).expect("valid sample")
}

/// A freshly initialized full model.
pub fn example_model(seed: u64) -> Model {
    Model::new(ModelConfig::hyper_ca(), seed).expect("valid config")
}
