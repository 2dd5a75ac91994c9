//! Central-difference verification of reverse-mode gradients.

use crate::{Error, Result};

use super::graph::{Graph, TensorId};
use super::tensor::{lit, Scalar, Tensor};

/// Outcome of a gradient check.
///
/// Errors are measured relative to the largest analytic gradient magnitude
/// (floored at 1e-6), so elements whose true gradient is zero compare the
/// finite-difference noise against the gradient scale rather than against
/// zero.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest scaled deviation between analytic and numeric gradients.
    pub max_rel_error: f64,
    /// Largest analytic gradient magnitude (the error scale).
    pub grad_scale: f64,
    /// Index of the input tensor holding the worst element.
    pub worst_input: usize,
    /// Flat element index of the worst element.
    pub worst_element: usize,
    /// Analytic gradient at the worst element.
    pub analytic: f64,
    /// Central-difference gradient at the worst element.
    pub numeric: f64,
    /// Total number of elements compared.
    pub checked: usize,
}

impl GradCheckReport {
    /// Whether every element stayed within the tolerance.
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compare reverse-mode gradients against central finite differences.
///
/// `build` constructs a scalar loss inside a fresh graph from leaf handles
/// matching `inputs` (order preserved). The analytic pass marks every input
/// as a differentiation target; the numeric pass perturbs one element at a
/// time by ± the precision's step ([`Scalar::GRAD_CHECK_STEP`]: 1e-3 in
/// f32, 1e-6 in f64) and differences the loss.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] when the combined input size exceeds
/// 1000 elements (each element costs two forward passes), and
/// [`Error::ShapeMismatch`] if `build` does not produce a scalar.
pub fn grad_check<T: Scalar>(
    build: impl Fn(&mut Graph<T>, &[TensorId]) -> TensorId,
    inputs: &[Tensor<T>],
) -> Result<GradCheckReport> {
    let total: usize = inputs.iter().map(Tensor::len).sum();
    if total == 0 || total > 1000 {
        return Err(Error::InvalidConfig(format!(
            "gradient check needs 1..=1000 input elements, got {total}"
        )));
    }
    let h = T::GRAD_CHECK_STEP;

    // Analytic gradients.
    let mut g = Graph::new();
    let ids: Vec<TensorId> = inputs
        .iter()
        .map(|t| g.leaf(t.clone().with_requires_grad()))
        .collect();
    let loss = build(&mut g, &ids);
    if g.tensor(loss).len() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "gradient check target must be scalar, got shape {:?}",
            g.tensor(loss).shape()
        )));
    }
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .zip(inputs)
        .map(|(&id, t)| match g.grad(id) {
            Some(grad) => grad.iter().map(|v| v.to_f64().expect("finite")).collect(),
            None => vec![0.0; t.len()],
        })
        .collect();

    let grad_scale = analytic
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1e-6);

    // Numeric pass: untracked leaves, so evaluation records nothing.
    let eval = |tensors: &[Tensor<T>]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<TensorId> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &ids);
        g.data(loss)[0].to_f64().expect("finite loss")
    };

    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        grad_scale,
        worst_input: 0,
        worst_element: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: total,
    };
    for ti in 0..inputs.len() {
        for e in 0..inputs[ti].len() {
            let orig = work[ti].data()[e];
            work[ti].data_mut()[e] = orig + lit(h);
            let loss_plus = eval(&work);
            work[ti].data_mut()[e] = orig - lit(h);
            let loss_minus = eval(&work);
            work[ti].data_mut()[e] = orig;
            let numeric = (loss_plus - loss_minus) / (2.0 * h);
            let a = analytic[ti][e];
            let err = (a - numeric).abs() / grad_scale;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_input = ti;
                report.worst_element = e;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Seeded tensor fill with magnitudes in `[0.25, 0.95]`, keeping values
/// away from ReLU kinks and max-pool ties at the finite-difference step.
fn seeded_tensor<T: Scalar>(shape: Vec<usize>, seed: u64) -> Tensor<T> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let len: usize = shape.iter().product();
    let data: Vec<T> = (0..len)
        .map(|_| {
            let mag = rng.gen_range(0.25..0.95);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            lit(sign * mag)
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches data length")
}

/// Run a named gradient check on a tiny graph built by `build`.
fn named_check<T: Scalar>(
    out: &mut Vec<(&'static str, GradCheckReport)>,
    name: &'static str,
    build: impl Fn(&mut Graph<T>, &[TensorId]) -> TensorId,
    inputs: &[Tensor<T>],
) -> Result<()> {
    let report = grad_check(build, inputs)?;
    out.push((name, report));
    Ok(())
}

/// Gradient-check every differentiable operation on small fixed-seed
/// inputs; returns one named report per operation.
///
/// Shapes are kept tiny so the full suite runs in well under a second in
/// either precision. Used by the self-test command and the verification
/// suite; the full-network composition has its own dedicated check.
///
/// # Errors
///
/// Propagates graph construction failures (none are expected for the
/// embedded shapes).
pub fn standard_op_checks<T: Scalar>() -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut out = Vec::new();

    named_check::<T>(
        &mut out,
        "conv2d",
        |g, ids| {
            let y = g.conv2d(ids[0], ids[1], ids[2]).expect("conv shapes");
            let zero = g.leaf(Tensor::zeros(vec![2, 4, 4, 4]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[
            seeded_tensor(vec![2, 3, 4, 4], 11),
            seeded_tensor(vec![4, 3, 3, 3], 12),
            seeded_tensor(vec![4], 13),
        ],
    )?;

    named_check::<T>(
        &mut out,
        "conv_transpose2d",
        |g, ids| {
            let y = g
                .conv_transpose2d(ids[0], ids[1], ids[2])
                .expect("conv transpose shapes");
            let zero = g.leaf(Tensor::zeros(vec![1, 2, 6, 6]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[
            seeded_tensor(vec![1, 4, 3, 3], 21),
            seeded_tensor(vec![4, 2, 2, 2], 22),
            seeded_tensor(vec![2], 23),
        ],
    )?;

    named_check::<T>(
        &mut out,
        "maxpool2",
        |g, ids| {
            let y = g.maxpool2(ids[0]).expect("pool shapes");
            let zero = g.leaf(Tensor::zeros(vec![1, 2, 2, 2]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[seeded_tensor(vec![1, 2, 4, 4], 31)],
    )?;

    named_check::<T>(
        &mut out,
        "fully_connected",
        |g, ids| {
            let y = g.fully_connected(ids[0], ids[1], ids[2]).expect("fc shapes");
            let zero = g.leaf(Tensor::zeros(vec![3, 4]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[
            seeded_tensor(vec![3, 5], 41),
            seeded_tensor(vec![4, 5], 42),
            seeded_tensor(vec![4], 43),
        ],
    )?;

    named_check::<T>(
        &mut out,
        "relu",
        |g, ids| {
            let y = g.relu(ids[0]);
            let zero = g.leaf(Tensor::zeros(vec![2, 12]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[seeded_tensor(vec![2, 12], 51)],
    )?;

    named_check::<T>(
        &mut out,
        "sigmoid",
        |g, ids| {
            let y = g.sigmoid(ids[0]);
            let zero = g.leaf(Tensor::zeros(vec![2, 8]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[seeded_tensor(vec![2, 8], 61)],
    )?;

    named_check::<T>(
        &mut out,
        "global_avg_pool",
        |g, ids| {
            let y = g.global_avg_pool(ids[0]).expect("pool shapes");
            let zero = g.leaf(Tensor::zeros(vec![2, 3]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[seeded_tensor(vec![2, 3, 4, 4], 71)],
    )?;

    named_check::<T>(
        &mut out,
        "concat_channels",
        |g, ids| {
            let y = g.concat_channels(ids[0], ids[1]).expect("concat shapes");
            let zero = g.leaf(Tensor::zeros(vec![1, 5, 3, 3]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[
            seeded_tensor(vec![1, 2, 3, 3], 81),
            seeded_tensor(vec![1, 3, 3, 3], 82),
        ],
    )?;

    named_check::<T>(
        &mut out,
        "scale_channels",
        |g, ids| {
            let y = g.scale_channels(ids[0], ids[1]).expect("scale shapes");
            let zero = g.leaf(Tensor::zeros(vec![1, 3, 4, 4]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[
            seeded_tensor(vec![1, 3, 4, 4], 91),
            seeded_tensor(vec![1, 3], 92),
        ],
    )?;

    named_check::<T>(
        &mut out,
        "channel_dropout",
        |g, ids| {
            let y = g
                .channel_dropout(ids[0], 0.5, true, 0x0dd5)
                .expect("dropout config");
            let zero = g.leaf(Tensor::zeros(vec![1, 4, 4, 4]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[seeded_tensor(vec![1, 4, 4, 4], 101)],
    )?;

    named_check::<T>(
        &mut out,
        "mse_loss",
        |g, ids| g.mse_loss(ids[0], ids[1]).expect("loss shapes"),
        &[seeded_tensor(vec![2, 6], 111), seeded_tensor(vec![2, 6], 112)],
    )?;

    named_check::<T>(
        &mut out,
        "add",
        |g, ids| {
            let y = g.add(ids[0], ids[1]).expect("add shapes");
            let zero = g.leaf(Tensor::zeros(vec![2, 5]));
            g.mse_loss(y, zero).expect("loss shapes")
        },
        &[seeded_tensor(vec![2, 5], 121), seeded_tensor(vec![2, 5], 122)],
    )?;

    named_check::<T>(
        &mut out,
        "reshape",
        |g, ids| {
            let y = g.reshape(ids[0], vec![3, 4]).expect("reshape size");
            let s = g.sigmoid(y);
            let zero = g.leaf(Tensor::zeros(vec![3, 4]));
            g.mse_loss(s, zero).expect("loss shapes")
        },
        &[seeded_tensor(vec![2, 6], 131)],
    )?;

    named_check::<T>(
        &mut out,
        "slice_flat",
        |g, ids| {
            let y = g.slice_flat(ids[0], 2, 5).expect("slice range");
            let s = g.sigmoid(y);
            let zero = g.leaf(Tensor::zeros(vec![5]));
            g.mse_loss(s, zero).expect("loss shapes")
        },
        &[seeded_tensor(vec![10], 141)],
    )?;

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_linear_map_error_at_rounding_level() {
        // Central differences are exact for quadratics, so a linear op
        // feeding a squared loss agrees to rounding precision in f64.
        fn build<T: Scalar>(g: &mut Graph<T>, ids: &[TensorId]) -> TensorId {
            let w = g.leaf(Tensor::from_vec(vec![2, 3], (0..6).map(|i| lit(i as f64 * 0.3 - 0.7)).collect()).unwrap());
            let b = g.leaf(Tensor::zeros(vec![2]));
            let y = g.fully_connected(ids[0], w, b).unwrap();
            let zero = g.leaf(Tensor::zeros(vec![1, 2]));
            g.mse_loss(y, zero).unwrap()
        }
        let inputs = vec![Tensor::<f64>::from_vec(vec![1, 3], vec![0.4, -1.2, 0.9]).unwrap()];
        let report = grad_check(build::<f64>, &inputs).unwrap();
        assert!(report.max_rel_error < 1e-6, "error {}", report.max_rel_error);
        assert!(report.passes(1e-6));
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn test_rejects_oversized_inputs() {
        fn build<T: Scalar>(g: &mut Graph<T>, ids: &[TensorId]) -> TensorId {
            let zero = g.leaf(Tensor::zeros(vec![1001]));
            g.mse_loss(ids[0], zero).unwrap()
        }
        let inputs = vec![Tensor::<f32>::zeros(vec![1001])];
        assert!(grad_check(build::<f32>, &inputs).is_err());
    }

    #[test]
    fn test_rejects_non_scalar_target() {
        fn build<T: Scalar>(g: &mut Graph<T>, ids: &[TensorId]) -> TensorId {
            g.relu(ids[0])
        }
        let inputs = vec![Tensor::<f32>::zeros(vec![4])];
        assert!(grad_check(build::<f32>, &inputs).is_err());
    }

    #[test]
    fn test_standard_op_suite_passes_in_both_precisions() {
        let f32_reports = standard_op_checks::<f32>().unwrap();
        assert_eq!(f32_reports.len(), 14);
        for (name, report) in &f32_reports {
            assert!(
                report.passes(1e-3),
                "{name} f32 error {} (analytic {} vs numeric {})",
                report.max_rel_error,
                report.analytic,
                report.numeric
            );
            // Every check must exercise a non-degenerate gradient.
            assert!(report.grad_scale > 0.01, "{name} gradient vanished");
        }
        let f64_reports = standard_op_checks::<f64>().unwrap();
        for (name, report) in &f64_reports {
            assert!(
                report.passes(1e-5),
                "{name} f64 error {}",
                report.max_rel_error
            );
        }
    }

    #[test]
    fn test_input_not_reaching_loss_gets_zero_gradient() {
        // The second input is ignored by the loss; both its analytic and
        // numeric gradients are zero and the check still passes.
        fn build<T: Scalar>(g: &mut Graph<T>, ids: &[TensorId]) -> TensorId {
            let zero = g.leaf(Tensor::zeros(vec![1, 4]));
            g.mse_loss(ids[0], zero).unwrap()
        }
        let inputs = vec![
            Tensor::<f64>::from_vec(vec![1, 4], vec![0.1, -0.2, 0.3, -0.4]).unwrap(),
            Tensor::<f64>::from_vec(vec![2], vec![5.0, 6.0]).unwrap(),
        ];
        let report = grad_check(build::<f64>, &inputs).unwrap();
        assert!(report.max_rel_error < 1e-6, "error {}", report.max_rel_error);
        assert_eq!(report.checked, 6);
    }
}
