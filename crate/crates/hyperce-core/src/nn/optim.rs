//! Adam optimizer with bias-corrected moment estimates.

use super::tensor::{lit, Scalar};

/// Default exponential decay for the first moment.
pub const ADAM_BETA1: f64 = 0.9;
/// Default exponential decay for the second moment.
pub const ADAM_BETA2: f64 = 0.999;
/// Default denominator offset guarding against division by zero.
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter-vector optimizer state: first and second moment estimates
/// plus the step counter driving bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state (zero moments, step 0) for a parameter vector of `len`
    /// elements.
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }

    /// Number of steps applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First-moment estimates (for checkpointing).
    pub fn first_moments(&self) -> &[T] {
        &self.m
    }

    /// Second-moment estimates (for checkpointing).
    pub fn second_moments(&self) -> &[T] {
        &self.v
    }

    /// Rebuild state from checkpointed moments and step count.
    ///
    /// # Panics
    ///
    /// Panics if the moment vectors differ in length.
    pub fn from_moments(m: Vec<T>, v: Vec<T>, step: u64) -> Self {
        assert_eq!(m.len(), v.len(), "moment vectors must match in length");
        Self { m, v, step }
    }
}

/// Apply one Adam update in place.
///
/// Increments the step counter, updates both moment estimates from `grads`,
/// and moves `params` along the bias-corrected ratio:
///
/// ```text
/// m ← β1 m + (1-β1) g        m̂ = m / (1-β1^t)
/// v ← β2 v + (1-β2) g²       v̂ = v / (1-β2^t)
/// p ← p - lr · m̂ / (√v̂ + ε)
/// ```
///
/// # Panics
///
/// Panics if `params`, `grads`, and `state` lengths disagree (programming
/// error, not a runtime condition).
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
    assert_eq!(params.len(), state.m.len(), "params/state length mismatch");
    state.step += 1;
    let t = state.step as i32;
    let b1 = lit::<T>(beta1);
    let b2 = lit::<T>(beta2);
    let one = T::one();
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    let lr_t = lit::<T>(lr);
    let eps_t = lit::<T>(eps);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (one - b1) * g;
        state.v[i] = b2 * state.v[i] + (one - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] = params[i] - lr_t * m_hat / (v_hat.sqrt() + eps_t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_zero_gradient_leaves_params_unchanged() {
        let mut params = vec![1.0f32, -2.0, 0.5];
        let mut state = AdamState::new(3);
        adam_step(&mut params, &[0.0; 3], &mut state, 1e-3, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn test_first_step_moves_by_lr_times_sign() {
        // At t = 1 both bias corrections cancel their decay factors, so the
        // update is -lr * g / (|g| + eps) ~= -lr * sign(g) for |g| >> eps.
        let lr = 1e-3;
        let grads = vec![1.0f64, -2.5, 0.3, -1e-3];
        let mut params = vec![0.0f64; 4];
        let mut state = AdamState::new(4);
        adam_step(&mut params, &grads, &mut state, lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
        for (p, g) in params.iter().zip(&grads) {
            let expected = -lr * g.signum();
            assert!(
                (p - expected).abs() < lr * 1e-4,
                "param {p} vs -lr*sign {expected}"
            );
        }
    }

    #[test]
    fn test_updates_are_deterministic() {
        let run = || {
            let mut params = vec![0.2f32, -0.4, 1.1];
            let mut state = AdamState::new(3);
            for step in 0..5 {
                let grads: Vec<f32> = params.iter().map(|p| p * 0.3 + step as f32 * 0.01).collect();
                adam_step(&mut params, &grads, &mut state, 1e-2, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn test_multi_step_matches_closed_form_moments() {
        // Independent oracle: after t steps with gradient history g_1..g_t,
        // the exponential moving averages have the closed forms
        //   m_t = (1-b1) * sum_i b1^(t-i) g_i
        //   v_t = (1-b2) * sum_i b2^(t-i) g_i^2
        // Replaying the parameter trajectory from those sums must agree
        // with the incremental implementation.
        let (b1, b2, eps, lr) = (ADAM_BETA1, ADAM_BETA2, ADAM_EPS, 1e-2);
        let history = [0.7f64, -1.3, 0.2, 2.0, -0.5, 0.9];

        let mut param = [0.5f64];
        let mut state = AdamState::new(1);
        let mut oracle_param = 0.5f64;
        for (t, &g) in history.iter().enumerate() {
            adam_step(&mut param, &[g], &mut state, lr, b1, b2, eps);

            let t1 = t + 1;
            let m: f64 = (1.0 - b1)
                * history[..t1]
                    .iter()
                    .enumerate()
                    .map(|(i, &gi)| b1.powi((t1 - 1 - i) as i32) * gi)
                    .sum::<f64>();
            let v: f64 = (1.0 - b2)
                * history[..t1]
                    .iter()
                    .enumerate()
                    .map(|(i, &gi)| b2.powi((t1 - 1 - i) as i32) * gi * gi)
                    .sum::<f64>();
            let m_hat = m / (1.0 - b1.powi(t1 as i32));
            let v_hat = v / (1.0 - b2.powi(t1 as i32));
            oracle_param -= lr * m_hat / (v_hat.sqrt() + eps);
            assert!(
                (param[0] - oracle_param).abs() < 1e-12,
                "step {t1}: incremental {} vs closed form {oracle_param}",
                param[0]
            );
        }
        assert_eq!(state.step_count(), history.len() as u64);
    }

    #[test]
    fn test_state_round_trips_through_moments() {
        let mut params = vec![1.0f32; 4];
        let mut state = AdamState::new(4);
        adam_step(&mut params, &[0.3; 4], &mut state, 1e-3, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
        let rebuilt = AdamState::from_moments(
            state.first_moments().to_vec(),
            state.second_moments().to_vec(),
            state.step_count(),
        );
        assert_eq!(rebuilt, state);
    }
}
