//! Per-sample weight updates for the component adaptive filters.
//!
//! Two update rules are provided:
//!
//! ```text
//! LMS      w(n+1) = w(n) + mu * e(n) * x(n)
//! L0-LMS   w(n+1) = w(n) + mu * e(n) * x(n) + (mu * beta / 2) * S{w(n)}
//! ```
//!
//! `S{w}` is a piecewise-linear zero attractor obtained from an exponential
//! approximation of the l0 norm. Descending the per-tap penalty
//! `beta * (1 - exp(-alpha * |w|))` contributes
//! `-mu * beta * alpha * sgn(w) * exp(-alpha * |w|)` to the update; replacing
//! the exponential by its first-order expansion inside the window
//! `|w| <= 1/alpha` (and by zero outside) turns that into the cheap form
//!
//! ```text
//! S{w} = 2 alpha^2 w - 2 alpha sgn(w)   if |w| <= 1/alpha
//!      = 0                              otherwise
//! ```
//!
//! which opposes the sign of `w` everywhere inside the window: small taps are
//! dragged toward exactly zero while taps larger than `1/alpha` are left
//! untouched.

use crate::error::{Error, Result};
use crate::signal_model::{dot, RegressorWindow};

/// Sign with `sgn(0) = 0`, so exact zeros are fixed points of the attractor.
pub fn sgn(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-tap gradient of the exponential sparsity penalty, without the step
/// size: `beta * alpha * sgn(w) * exp(-alpha * |w|)`.
pub fn l0_penalty_gradient_exact(w: f64, alpha: f64, beta: f64) -> f64 {
    beta * alpha * sgn(w) * (-alpha * w.abs()).exp()
}

/// Piecewise zero attractor `S{w}`: `2 alpha^2 w - 2 alpha sgn(w)` for
/// `|w| <= 1/alpha`, zero outside. Vanishes at `w = 0` and at the window
/// edges `|w| = 1/alpha`.
pub fn zero_attract(w: f64, alpha: f64) -> f64 {
    if w.abs() <= 1.0 / alpha {
        2.0 * alpha * alpha * w - 2.0 * alpha * sgn(w)
    } else {
        0.0
    }
}

/// Zero-attraction parameters: regularization weight `beta` and attractor
/// sharpness `alpha` (attraction acts on taps with `|w| <= 1/alpha`).
///
/// `beta = 0` switches attraction off exactly, reducing L0-LMS to LMS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityParams {
    beta: f64,
    alpha: f64,
}

impl SparsityParams {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "attractor sharpness alpha must be finite and > 0, got {alpha}"
            )));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "regularization weight beta must be finite and >= 0, got {beta}"
            )));
        }
        Ok(Self { beta, alpha })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// One adaptive filter: weight vector plus fixed step size.
///
/// Weights start at zero. An update that produces a non-finite entry is a
/// divergence fault; the filter state is then unusable and the run that owns
/// it must be discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    weights: Vec<f64>,
    step_size: f64,
}

impl FilterState {
    pub fn new(n_taps: usize, step_size: f64) -> Result<Self> {
        Self::with_weights(vec![0.0; n_taps], step_size)
    }

    /// Filter starting from explicit weights instead of zeros.
    pub fn with_weights(weights: Vec<f64>, step_size: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig("filter needs at least one tap".into()));
        }
        if !step_size.is_finite() || step_size <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "step size must be finite and > 0, got {step_size}"
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("initial weights must be finite".into()));
        }
        Ok(Self { weights, step_size })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_taps(&self) -> usize {
        self.weights.len()
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    fn check_window(&self, window: &RegressorWindow) -> Result<()> {
        if window.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: window.len(),
            });
        }
        Ok(())
    }

    /// Filter output `y = w^T x` for the current regressor.
    pub fn predict(&self, window: &RegressorWindow) -> Result<f64> {
        self.check_window(window)?;
        Ok(dot(&self.weights, window.samples()))
    }

    /// Identification error `e = d - w^T x`.
    pub fn prediction_error(&self, desired: f64, window: &RegressorWindow) -> Result<f64> {
        Ok(desired - self.predict(window)?)
    }

    /// Standard stochastic-gradient update `w += mu * e * x`.
    pub fn lms_step(&mut self, window: &RegressorWindow, error: f64) -> Result<()> {
        self.check_window(window)?;
        let gain = self.step_size * error;
        let mut finite = true;
        for (w, &x) in self.weights.iter_mut().zip(window.samples()) {
            let next = *w + gain * x;
            finite &= next.is_finite();
            *w = next;
        }
        if finite {
            Ok(())
        } else {
            Err(Error::Divergence("non-finite filter weight after update".into()))
        }
    }

    /// Zero-attracting update: the LMS step plus `(mu * beta / 2) * S{w_k}`
    /// per tap, evaluated at the pre-update weights.
    pub fn l0lms_step(
        &mut self,
        params: &SparsityParams,
        window: &RegressorWindow,
        error: f64,
    ) -> Result<()> {
        if params.beta == 0.0 {
            // Exact degeneration to the plain update, bit for bit.
            return self.lms_step(window, error);
        }
        self.check_window(window)?;
        let gain = self.step_size * error;
        let attract_gain = 0.5 * self.step_size * params.beta;
        let mut finite = true;
        for (w, &x) in self.weights.iter_mut().zip(window.samples()) {
            let next = *w + gain * x + attract_gain * zero_attract(*w, params.alpha);
            finite &= next.is_finite();
            *w = next;
        }
        if finite {
            Ok(())
        } else {
            Err(Error::Divergence("non-finite filter weight after update".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::{generate_sparse_fir, system_output};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn window_from(samples: &[f64]) -> RegressorWindow {
        let mut w = RegressorWindow::new(samples.len());
        for &x in samples.iter().rev() {
            w.push(x);
        }
        w
    }

    fn filter_with(weights: &[f64], mu: f64) -> FilterState {
        FilterState::with_weights(weights.to_vec(), mu).unwrap()
    }

    #[test]
    fn predict_examples() {
        let f = filter_with(&[1.0, 1.0], 0.1);
        assert_eq!(f.predict(&window_from(&[2.0, 3.0])).unwrap(), 5.0);

        let zero = FilterState::new(2, 0.1).unwrap();
        assert_eq!(zero.predict(&window_from(&[4.0, -7.0])).unwrap(), 0.0);

        // unit basis selects the delayed sample
        let sel = filter_with(&[0.0, 1.0, 0.0], 0.1);
        assert_eq!(sel.predict(&window_from(&[9.0, 4.0, 2.0])).unwrap(), 4.0);

        assert!(matches!(
            f.predict(&RegressorWindow::new(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn prediction_error_examples() {
        let f = filter_with(&[1.0], 0.1);
        assert_eq!(f.prediction_error(1.0, &window_from(&[1.0])).unwrap(), 0.0);

        let zero = FilterState::new(2, 0.1).unwrap();
        assert_eq!(zero.prediction_error(1.0, &window_from(&[5.0, 5.0])).unwrap(), 1.0);

        let sym = filter_with(&[0.5, -0.5], 0.1);
        assert_relative_eq!(
            sym.prediction_error(0.3, &window_from(&[1.0, 1.0])).unwrap(),
            0.3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn lms_step_hand_computed() {
        let mut f = FilterState::new(2, 0.5).unwrap();
        let win = window_from(&[1.0, -1.0]);
        let e = f.prediction_error(1.0, &win).unwrap();
        assert_eq!(e, 1.0);
        f.lms_step(&win, e).unwrap();
        assert_eq!(f.weights(), &[0.5, -0.5]);
    }

    #[test]
    fn lms_step_zero_error_is_stationary() {
        let mut f = filter_with(&[0.3, -0.2], 0.5);
        let before = f.clone();
        f.lms_step(&window_from(&[1.0, 2.0]), 0.0).unwrap();
        assert_eq!(f, before);
    }

    #[test]
    fn lms_step_zero_regressor_leaves_weights() {
        let mut f = filter_with(&[0.3, -0.2], 0.5);
        let before = f.clone();
        let win = RegressorWindow::new(2);
        f.lms_step(&win, 1.0).unwrap();
        f.lms_step(&win, -2.0).unwrap();
        assert_eq!(f, before);
    }

    #[test]
    fn penalty_gradient_examples() {
        assert_eq!(l0_penalty_gradient_exact(0.0, 10.0, 1.0), 0.0);
        // independent high-precision value of 10 * exp(-0.5)
        assert_relative_eq!(
            l0_penalty_gradient_exact(0.05, 10.0, 1.0),
            6.065306597126334,
            epsilon = 1e-12
        );
        for w in [0.01, 0.07, 0.3, 2.0] {
            assert_eq!(
                l0_penalty_gradient_exact(-w, 10.0, 0.7),
                -l0_penalty_gradient_exact(w, 10.0, 0.7)
            );
        }
    }

    #[test]
    fn zero_attract_examples() {
        assert_relative_eq!(zero_attract(0.05, 10.0), -10.0, epsilon = 1e-12);
        assert_eq!(zero_attract(0.2, 10.0), 0.0);
        assert_relative_eq!(zero_attract(-0.05, 10.0), 10.0, epsilon = 1e-12);
        assert_eq!(zero_attract(0.0, 10.0), 0.0);
        // window edges are exact zeros of the attractor
        assert_relative_eq!(zero_attract(0.1, 10.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(zero_attract(-0.1, 10.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn l0lms_with_zero_beta_matches_lms_bitwise() {
        let params = SparsityParams::new(0.0, 10.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let mut plain = FilterState::new(8, 0.05).unwrap();
        let mut sparse = FilterState::new(8, 0.05).unwrap();
        let mut win = RegressorWindow::new(8);
        for _ in 0..500 {
            let x: f64 = rng.sample(StandardNormal);
            let d: f64 = rng.sample(StandardNormal);
            win.push(x);
            let e1 = plain.prediction_error(d, &win).unwrap();
            let e2 = sparse.prediction_error(d, &win).unwrap();
            assert_eq!(e1.to_bits(), e2.to_bits());
            plain.lms_step(&win, e1).unwrap();
            sparse.l0lms_step(&params, &win, e2).unwrap();
            for (a, b) in plain.weights().iter().zip(sparse.weights()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn l0lms_attractor_hand_values() {
        // error-free step so only the attractor acts; large beta overshoots
        // through zero, small beta shrinks the tap
        let win = window_from(&[0.0]);
        let mut f = filter_with(&[0.05], 0.1);
        let big = SparsityParams::new(0.4, 10.0).unwrap();
        f.l0lms_step(&big, &win, 0.0).unwrap();
        assert_relative_eq!(f.weights()[0], -0.15, epsilon = 1e-12);

        let mut f = filter_with(&[0.05], 0.1);
        let small = SparsityParams::new(0.004, 10.0).unwrap();
        f.l0lms_step(&small, &win, 0.0).unwrap();
        assert_relative_eq!(f.weights()[0], 0.048, epsilon = 1e-12);
    }

    #[test]
    fn l0lms_outside_window_no_attraction() {
        let win = window_from(&[0.0]);
        let params = SparsityParams::new(0.4, 10.0).unwrap();
        let mut f = filter_with(&[0.5], 0.1);
        f.l0lms_step(&params, &win, 0.0).unwrap();
        assert_eq!(f.weights(), &[0.5]);
    }

    #[test]
    fn error_free_attraction_matches_closed_form() {
        // With error = 0 the scalar recursion is
        //   w(n+1) = w(n) * (1 + mu*beta*alpha^2) - mu*beta*alpha,
        // whose solution is w(n) = 1/alpha - (1/alpha - w0) * r^n with
        // r = 1 + mu*beta*alpha^2. For small mu*beta the iterate decreases
        // monotonically toward zero without crossing it over this horizon.
        let (mu, beta, alpha, w0) = (0.1, 4e-4, 10.0, 0.05);
        let params = SparsityParams::new(beta, alpha).unwrap();
        let win = window_from(&[0.0]);
        let mut f = filter_with(&[w0], mu);
        let r = 1.0 + mu * beta * alpha * alpha;
        let mut prev = w0;
        for n in 1..=100 {
            f.l0lms_step(&params, &win, 0.0).unwrap();
            let w = f.weights()[0];
            let closed = 1.0 / alpha - (1.0 / alpha - w0) * r.powi(n);
            assert_relative_eq!(w, closed, max_relative = 1e-10);
            assert!(w > 0.0, "tap crossed zero at step {n}");
            assert!(w < prev, "tap failed to decrease at step {n}");
            prev = w;
        }
    }

    #[test]
    fn gradient_matches_finite_difference_of_penalty() {
        // central difference of beta * (1 - exp(-alpha |w|)) away from the kink
        let (alpha, beta, h) = (10.0, 1.0, 1e-6);
        let penalty = |w: f64| beta * (1.0 - (-alpha * w.abs()).exp());
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mag = rng.gen_range(0.01..=1.0);
            let w = if rng.gen::<bool>() { mag } else { -mag };
            let numeric = (penalty(w + h) - penalty(w - h)) / (2.0 * h);
            let analytic = l0_penalty_gradient_exact(w, alpha, beta);
            let rel = (analytic - numeric).abs() / numeric.abs().max(1e-300);
            assert!(rel <= 1e-4, "relative error {rel} at w={w}");
        }
    }

    #[test]
    fn taylor_form_matches_windowed_expression_exactly() {
        // within the window, -S{w}/2 = alpha * sgn(w) * (1 - alpha |w|),
        // i.e. the exponential gradient with exp(-alpha|w|) -> 1 - alpha|w|
        let alpha = 10.0;
        for i in -100i32..=100 {
            let w = f64::from(i) * 0.001; // spans the window [-0.1, 0.1]
            let lhs = -zero_attract(w, alpha) / 2.0;
            let rhs = alpha * sgn(w) * (1.0 - alpha * w.abs());
            assert!((lhs - rhs).abs() <= 1e-12, "mismatch at w={w}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn lms_converges_in_nearly_all_seeded_runs() {
        // 32-tap unit-norm system, white input, mu = 1/36: the final MSD must
        // fall below the first recorded MSD in at least 99% of 200 runs.
        let (n_taps, mu, iters, runs) = (32, 1.0 / 36.0, 3000, 200);
        let mut converged = 0;
        for seed in 0..runs {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let sys = generate_sparse_fir(n_taps, 3, &mut rng, true).unwrap();
            let noise = crate::signal_model::NoiseSpec::new(0.1).unwrap();
            let mut f = FilterState::new(n_taps, mu).unwrap();
            let mut win = RegressorWindow::new(n_taps);
            let mut first = None;
            let mut last = 0.0;
            for _ in 0..iters {
                let x: f64 = rng.sample(StandardNormal);
                win.push(x);
                let d = system_output(&sys, &win, noise.sample(&mut rng)).unwrap();
                let e = f.prediction_error(d, &win).unwrap();
                f.lms_step(&win, e).unwrap();
                let msd = crate::metrics::msd(sys.weights(), f.weights()).unwrap();
                first.get_or_insert(msd);
                last = msd;
            }
            if last < first.unwrap() {
                converged += 1;
            }
        }
        assert!(
            converged * 100 >= runs * 99,
            "only {converged}/{runs} runs converged"
        );
    }

    proptest! {
        #[test]
        fn attractor_opposes_sign_inside_window(w in -0.099f64..0.099) {
            let alpha = 10.0;
            let s = zero_attract(w, alpha);
            if w == 0.0 {
                prop_assert_eq!(s, 0.0);
            } else {
                prop_assert_eq!(sgn(s), -sgn(w));
            }
        }

        #[test]
        fn attractor_zero_outside_window(mag in 0.1000001f64..10.0, neg in any::<bool>()) {
            let w = if neg { -mag } else { mag };
            prop_assert_eq!(zero_attract(w, 10.0), 0.0);
        }

        #[test]
        fn penalty_gradient_is_odd(w in -1.0f64..1.0, beta in 0.0f64..2.0) {
            let g_pos = l0_penalty_gradient_exact(w, 10.0, beta);
            let g_neg = l0_penalty_gradient_exact(-w, 10.0, beta);
            prop_assert_eq!(g_pos, -g_neg);
        }
    }
}
