//! Affine combination of a fast and a slow component filter.
//!
//! Both filters see the same regressor. Their outputs are mixed as
//! `y = lambda * y_fast + (1 - lambda) * y_slow`, which equals filtering with
//! the equivalent weights `lambda * (w_fast - w_slow) + w_slow`. The mixing
//! parameter is affine, not convex: `lambda` may leave `[0, 1]`, letting the
//! combination extrapolate beyond either component. It adapts by stochastic
//! gradient on the combined squared error,
//!
//! ```text
//! lambda(n+1) = lambda(n) + mu_lambda * e(n) * (y_fast(n) - y_slow(n)),
//! ```
//!
//! and for a known target an analytic optimum is available as a Rayleigh-style
//! quotient over the input correlation ([`optimal_lambda`]).

use crate::adaptive_filters::{FilterState, SparsityParams};
use crate::error::{Error, Result};
use crate::signal_model::{dot, RegressorWindow};

/// Mixing parameter `lambda` with its own step size and an optional clamp
/// interval applied after every update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinerState {
    lambda: f64,
    step_size: f64,
    clamp: Option<(f64, f64)>,
}

impl CombinerState {
    pub fn new(lambda_init: f64, step_size: f64, clamp: Option<(f64, f64)>) -> Result<Self> {
        if !step_size.is_finite() || step_size <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "combiner step size must be finite and > 0, got {step_size}"
            )));
        }
        if !lambda_init.is_finite() {
            return Err(Error::InvalidConfig("lambda_init must be finite".into()));
        }
        if let Some((lo, hi)) = clamp {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!(
                    "lambda clamp must satisfy lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        let lambda = match clamp {
            Some((lo, hi)) => lambda_init.clamp(lo, hi),
            None => lambda_init,
        };
        Ok(Self {
            lambda,
            step_size,
            clamp,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn clamp_range(&self) -> Option<(f64, f64)> {
        self.clamp
    }

    /// Stochastic-gradient update toward lower combined squared error. The
    /// gradient direction is the output gap of the component filters, so the
    /// combiner freezes when the filters agree.
    pub fn step(&mut self, combined_error: f64, y_fast: f64, y_slow: f64) -> Result<()> {
        let mut next = self.lambda + self.step_size * combined_error * (y_fast - y_slow);
        if let Some((lo, hi)) = self.clamp {
            next = next.clamp(lo, hi);
        }
        if !next.is_finite() {
            return Err(Error::Divergence(format!(
                "combiner parameter became non-finite (lambda was {})",
                self.lambda
            )));
        }
        self.lambda = next;
        Ok(())
    }
}

/// Whether the component filters run plain LMS updates or zero-attracting
/// ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterMode {
    Standard,
    Sparse(SparsityParams),
}

/// The affine combination: a fast filter, a slow filter (step sizes ordered
/// `fast >= slow`), and the adaptive mixing parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedFilter {
    fast: FilterState,
    slow: FilterState,
    combiner: CombinerState,
    mode: FilterMode,
}

impl CombinedFilter {
    pub fn new(
        fast: FilterState,
        slow: FilterState,
        combiner: CombinerState,
        mode: FilterMode,
    ) -> Result<Self> {
        if fast.n_taps() != slow.n_taps() {
            return Err(Error::DimensionMismatch {
                expected: fast.n_taps(),
                actual: slow.n_taps(),
            });
        }
        if fast.step_size() < slow.step_size() {
            return Err(Error::InvalidConfig(format!(
                "fast step size {} must be >= slow step size {}",
                fast.step_size(),
                slow.step_size()
            )));
        }
        Ok(Self {
            fast,
            slow,
            combiner,
            mode,
        })
    }

    pub fn fast(&self) -> &FilterState {
        &self.fast
    }

    pub fn slow(&self) -> &FilterState {
        &self.slow
    }

    pub fn combiner(&self) -> &CombinerState {
        &self.combiner
    }

    pub fn mode(&self) -> &FilterMode {
        &self.mode
    }

    /// `w_fast - w_slow`, the direction along which `lambda` interpolates.
    pub fn difference_filter(&self) -> Vec<f64> {
        self.fast
            .weights()
            .iter()
            .zip(self.slow.weights())
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Single filter equivalent to the combination:
    /// `lambda * (w_fast - w_slow) + w_slow`.
    pub fn equivalent_weights(&self) -> Vec<f64> {
        let lambda = self.combiner.lambda;
        self.fast
            .weights()
            .iter()
            .zip(self.slow.weights())
            .map(|(a, b)| lambda * (a - b) + b)
            .collect()
    }

    /// Mixed output `lambda * y_fast + (1 - lambda) * y_slow`.
    pub fn combined_output(&self, window: &RegressorWindow) -> Result<f64> {
        let y_fast = self.fast.predict(window)?;
        let y_slow = self.slow.predict(window)?;
        let lambda = self.combiner.lambda;
        Ok(lambda * y_fast + (1.0 - lambda) * y_slow)
    }

    /// Overall error `d - y` of the combination.
    pub fn combined_error(&self, desired: f64, window: &RegressorWindow) -> Result<f64> {
        Ok(desired - self.combined_output(window)?)
    }

    /// One full iteration. Every quantity is computed from the current
    /// weights; the combiner then updates from the output gap, and each
    /// component filter adapts on its own error. The component filters never
    /// see `lambda`.
    pub fn iterate(&mut self, window: &RegressorWindow, desired: f64) -> Result<()> {
        let y_fast = self.fast.predict(window)?;
        let y_slow = self.slow.predict(window)?;
        let e_fast = desired - y_fast;
        let e_slow = desired - y_slow;
        let lambda = self.combiner.lambda;
        let combined = lambda * y_fast + (1.0 - lambda) * y_slow;
        self.combiner.step(desired - combined, y_fast, y_slow)?;
        match self.mode {
            FilterMode::Standard => {
                self.fast.lms_step(window, e_fast)?;
                self.slow.lms_step(window, e_slow)?;
            }
            FilterMode::Sparse(params) => {
                self.fast.l0lms_step(&params, window, e_fast)?;
                self.slow.l0lms_step(&params, window, e_slow)?;
            }
        }
        Ok(())
    }
}

fn quadratic_form(a: &[f64], m: &[Vec<f64>], b: &[f64]) -> f64 {
    m.iter().zip(a).map(|(row, &ai)| ai * dot(row, b)).sum()
}

/// Analytic minimizer of the expected squared deviation over the affine
/// family through the two filters:
///
/// ```text
/// lambda = <w_true - w_slow, R (w_fast - w_slow)>
///        / <w_fast - w_slow, R (w_fast - w_slow)>
/// ```
///
/// For `R = sigma^2 I` this reduces to the projection coefficient
/// `<w_true - w_slow, w_fast - w_slow> / |w_fast - w_slow|^2`, independent of
/// `sigma^2`. Requires knowledge of the true system, so it serves as a
/// verification oracle rather than a runtime component.
///
/// Fails with [`Error::DegenerateCombiner`] when the difference filter is
/// numerically zero; callers that need a value should fall back to
/// `lambda = 0`.
pub fn optimal_lambda(
    w_true: &[f64],
    w_fast: &[f64],
    w_slow: &[f64],
    r_xx: &[Vec<f64>],
) -> Result<f64> {
    let n = w_true.len();
    for len in [w_fast.len(), w_slow.len(), r_xx.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    for row in r_xx {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: row.len(),
            });
        }
    }
    let diff: Vec<f64> = w_fast.iter().zip(w_slow).map(|(a, b)| a - b).collect();
    let target_gap: Vec<f64> = w_true.iter().zip(w_slow).map(|(a, b)| a - b).collect();
    let denom = quadratic_form(&diff, r_xx, &diff);
    if denom <= 1e-12 * dot(&diff, &diff) {
        return Err(Error::DegenerateCombiner);
    }
    Ok(quadratic_form(&target_gap, r_xx, &diff) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

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

    fn identity(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    fn scaled_identity(n: usize, s: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { s } else { 0.0 }).collect())
            .collect()
    }

    fn combined(fast_w: &[f64], slow_w: &[f64], lambda: f64) -> CombinedFilter {
        CombinedFilter::new(
            filter_with(fast_w, 0.1),
            filter_with(slow_w, 0.05),
            CombinerState::new(lambda, 1.0, None).unwrap(),
            FilterMode::Standard,
        )
        .unwrap()
    }

    #[test]
    fn difference_filter_examples() {
        let cf = combined(&[1.0, 2.0], &[1.0, 2.0], 0.5);
        assert_eq!(cf.difference_filter(), vec![0.0, 0.0]);

        let cf = combined(&[0.5, 0.0], &[0.0, 0.0], 0.5);
        assert_eq!(cf.difference_filter(), vec![0.5, 0.0]);

        let a = combined(&[0.3, -0.1], &[0.2, 0.4], 0.5);
        let b = combined(&[0.2, 0.4], &[0.3, -0.1], 0.5);
        let neg: Vec<f64> = b.difference_filter().iter().map(|x| -x).collect();
        for (u, v) in a.difference_filter().iter().zip(&neg) {
            assert_relative_eq!(u, v, epsilon = 1e-15);
        }
    }

    #[test]
    fn equivalent_weights_boundaries_and_extrapolation() {
        let cf = combined(&[0.4, -0.2], &[0.1, 0.3], 1.0);
        for (a, b) in cf.equivalent_weights().iter().zip(cf.fast().weights()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        let cf = combined(&[0.4, -0.2], &[0.1, 0.3], 0.0);
        for (a, b) in cf.equivalent_weights().iter().zip(cf.slow().weights()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        // lambda beyond [0, 1] extrapolates past the fast filter
        let cf = combined(&[0.5, 0.0], &[0.0, 0.0], 2.0);
        let eq = cf.equivalent_weights();
        assert_relative_eq!(eq[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(eq[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn combined_output_examples() {
        // y_fast = 2, y_slow = 0 at the midpoint
        let cf = combined(&[1.0, 0.0], &[0.0, 0.0], 0.5);
        let win = window_from(&[2.0, 7.0]);
        assert_relative_eq!(cf.combined_output(&win).unwrap(), 1.0, epsilon = 1e-15);

        let cf = combined(&[1.0, 0.0], &[0.0, 0.5], 1.0);
        assert_relative_eq!(cf.combined_output(&win).unwrap(), 2.0, epsilon = 1e-15);

        // identical filters agree for any lambda
        for lambda in [-3.0, 0.0, 0.5, 1.0, 4.0] {
            let cf = combined(&[0.3, -0.4], &[0.3, -0.4], lambda);
            assert_relative_eq!(
                cf.combined_output(&win).unwrap(),
                0.3 * 2.0 - 0.4 * 7.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn combined_error_examples() {
        let win = window_from(&[1.0, 0.0]);
        // equivalent filter reproduces the target with zero noise
        let cf = combined(&[1.0, 0.0], &[1.0, 0.0], 0.7);
        assert_relative_eq!(cf.combined_error(1.0, &win).unwrap(), 0.0, epsilon = 1e-15);

        // lambda = 0 reduces to the slow filter's error
        let cf = combined(&[0.9, 0.0], &[0.25, 0.0], 0.0);
        let slow_err = cf.slow().prediction_error(1.0, &win).unwrap();
        assert_relative_eq!(cf.combined_error(1.0, &win).unwrap(), slow_err, epsilon = 1e-15);
        assert_relative_eq!(cf.combined_error(1.0, &win).unwrap(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn combiner_step_examples() {
        // hand computation: lambda 0 -> 1 in one step
        let mut c = CombinerState::new(0.0, 1.0, None).unwrap();
        let (y_fast, y_slow, d) = (1.0, 0.0, 1.0);
        let combined = 0.0 * y_fast + 1.0 * y_slow;
        c.step(d - combined, y_fast, y_slow).unwrap();
        assert_relative_eq!(c.lambda(), 1.0, epsilon = 1e-15);

        // agreeing filters freeze the combiner
        let mut c = CombinerState::new(0.3, 1.0, None).unwrap();
        c.step(5.0, 2.0, 2.0).unwrap();
        assert_eq!(c.lambda(), 0.3);

        // zero error freezes the combiner
        let mut c = CombinerState::new(0.3, 1.0, None).unwrap();
        c.step(0.0, 2.0, -1.0).unwrap();
        assert_eq!(c.lambda(), 0.3);
    }

    #[test]
    fn combiner_clamp_applies() {
        let mut c = CombinerState::new(0.5, 1.0, Some((-1.0, 2.0))).unwrap();
        c.step(10.0, 3.0, 0.0).unwrap();
        assert_eq!(c.lambda(), 2.0);
        c.step(-10.0, 3.0, 0.0).unwrap();
        assert_eq!(c.lambda(), -1.0);
    }

    #[test]
    fn optimal_lambda_examples() {
        let eye = identity(2);
        // extrapolating combiner: 0.5 / 0.25 = 2
        let l = optimal_lambda(&[1.0, 0.0], &[0.5, 0.0], &[0.0, 0.0], &eye).unwrap();
        assert_eq!(l, 2.0);
        // fast filter already exact
        let l = optimal_lambda(&[1.0, 0.3], &[1.0, 0.3], &[0.0, 0.0], &eye).unwrap();
        assert_eq!(l, 1.0);
        // slow filter already exact
        let l = optimal_lambda(&[1.0, 0.3], &[0.5, 0.0], &[1.0, 0.3], &eye).unwrap();
        assert_eq!(l, 0.0);
        // coinciding filters are degenerate
        assert!(matches!(
            optimal_lambda(&[1.0, 0.0], &[0.2, 0.1], &[0.2, 0.1], &eye),
            Err(Error::DegenerateCombiner)
        ));
    }

    #[test]
    fn optimal_lambda_scale_invariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        for _ in 0..50 {
            let n = 12;
            let draw = |rng: &mut ChaCha12Rng| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let (wt, wf, ws) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let base = optimal_lambda(&wt, &wf, &ws, &identity(n)).unwrap();
            for s in [0.25, 4.0] {
                // powers of two scale exactly
                let l = optimal_lambda(&wt, &wf, &ws, &scaled_identity(n, s)).unwrap();
                assert_eq!(l, base);
            }
            for s in [1e-3, 0.1, 10.0, 1e3] {
                let l = optimal_lambda(&wt, &wf, &ws, &scaled_identity(n, s)).unwrap();
                assert_relative_eq!(l, base, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn optimal_lambda_matches_grid_and_golden_section() {
        // independent oracle: coarse grid over [-5, 5] refined by golden
        // section on the bracketing interval
        fn oracle(w_true: &[f64], w_fast: &[f64], w_slow: &[f64]) -> f64 {
            let objective = |l: f64| -> f64 {
                w_true
                    .iter()
                    .zip(w_fast.iter().zip(w_slow))
                    .map(|(t, (f, s))| {
                        let eq = l * (f - s) + s;
                        (t - eq) * (t - eq)
                    })
                    .sum()
            };
            let grid = 2000;
            let (mut best_i, mut best_v) = (0usize, f64::INFINITY);
            for i in 0..=grid {
                let l = -5.0 + 10.0 * i as f64 / grid as f64;
                let v = objective(l);
                if v < best_v {
                    best_v = v;
                    best_i = i;
                }
            }
            let mut lo = -5.0 + 10.0 * best_i.saturating_sub(1) as f64 / grid as f64;
            let mut hi = -5.0 + 10.0 * (best_i + 1).min(grid) as f64 / grid as f64;
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            while hi - lo > 1e-9 {
                let a = hi - phi * (hi - lo);
                let b = lo + phi * (hi - lo);
                if objective(a) < objective(b) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            0.5 * (lo + hi)
        }

        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 16;
        for _ in 0..100 {
            let draw = |rng: &mut ChaCha12Rng| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let (wt, wf, ws) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let analytic = optimal_lambda(&wt, &wf, &ws, &identity(n)).unwrap();
            assert!(
                analytic.abs() < 4.5,
                "instance outside oracle search range, reseed the test"
            );
            let searched = oracle(&wt, &wf, &ws);
            assert!(
                (analytic - searched).abs() <= 1e-3,
                "analytic {analytic} vs searched {searched}"
            );
        }
    }

    #[test]
    fn optimum_dominates_both_components() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 16;
        for _ in 0..100 {
            let draw = |rng: &mut ChaCha12Rng| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let (wt, wf, ws) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let l = optimal_lambda(&wt, &wf, &ws, &identity(n)).unwrap();
            let dev = |lambda: f64| -> f64 {
                wt.iter()
                    .zip(wf.iter().zip(&ws))
                    .map(|(t, (f, s))| {
                        let eq = lambda * (f - s) + s;
                        (t - eq) * (t - eq)
                    })
                    .sum()
            };
            let at_opt = dev(l);
            assert!(at_opt <= dev(1.0) + 1e-12);
            assert!(at_opt <= dev(0.0) + 1e-12);
        }
    }

    #[test]
    fn iterate_standard_mode_matches_manual_composition() {
        let mut cf = combined(&[0.2, -0.1, 0.4], &[0.1, 0.0, -0.3], 0.8);
        let mut fast = cf.fast().clone();
        let mut slow = cf.slow().clone();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut win = RegressorWindow::new(3);
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let d: f64 = rng.gen_range(-1.0..1.0);
            win.push(x);
            let e_fast = fast.prediction_error(d, &win).unwrap();
            let e_slow = slow.prediction_error(d, &win).unwrap();
            fast.lms_step(&win, e_fast).unwrap();
            slow.lms_step(&win, e_slow).unwrap();
            cf.iterate(&win, d).unwrap();
            assert_eq!(cf.fast().weights(), fast.weights());
            assert_eq!(cf.slow().weights(), slow.weights());
        }
    }

    #[test]
    fn identical_filters_with_equal_steps_stay_identical() {
        let fast = FilterState::new(4, 0.05).unwrap();
        let slow = FilterState::new(4, 0.05).unwrap();
        let combiner = CombinerState::new(0.5, 1.0, None).unwrap();
        let mut cf = CombinedFilter::new(fast, slow, combiner, FilterMode::Standard).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut win = RegressorWindow::new(4);
        for _ in 0..300 {
            win.push(rng.gen_range(-1.0..1.0));
            cf.iterate(&win, rng.gen_range(-1.0..1.0)).unwrap();
            assert_eq!(cf.fast().weights(), cf.slow().weights());
            assert_eq!(cf.combiner().lambda(), 0.5);
        }
    }

    #[test]
    fn first_iteration_from_zero_state() {
        let fast = FilterState::new(4, 0.1).unwrap();
        let slow = FilterState::new(4, 0.05).unwrap();
        let combiner = CombinerState::new(0.5, 1.0, None).unwrap();
        let mut cf = CombinedFilter::new(fast, slow, combiner, FilterMode::Standard).unwrap();
        let mut win = RegressorWindow::new(4);
        win.push(1.0);
        cf.iterate(&win, 1.0).unwrap();
        // both outputs were zero, so lambda holds and each filter moves by
        // mu * d along the regressor
        assert_eq!(cf.combiner().lambda(), 0.5);
        assert_eq!(cf.fast().weights(), &[0.1, 0.0, 0.0, 0.0]);
        assert_eq!(cf.slow().weights(), &[0.05, 0.0, 0.0, 0.0]);
    }

    proptest! {
        // mixing outputs and filtering with the equivalent weights are the
        // same operation
        #[test]
        fn affine_identity(
            n in 1usize..48,
            lambda in -5.0f64..5.0,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let draw = |rng: &mut ChaCha12Rng, n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let fast_w = draw(&mut rng, n);
            let slow_w = draw(&mut rng, n);
            let xs = draw(&mut rng, n);
            let cf = combined(&fast_w, &slow_w, lambda);
            let win = window_from(&xs);
            let mixed = cf.combined_output(&win).unwrap();
            let through_eq = crate::signal_model::dot(&cf.equivalent_weights(), win.samples());
            prop_assert!((mixed - through_eq).abs() <= 1e-12 * (1.0 + mixed.abs()));
        }

        // swapping the component roles while replacing lambda by 1 - lambda
        // leaves the combination invariant
        #[test]
        fn combiner_update_swap_symmetry(
            lambda in -2.0f64..3.0,
            y_fast in -2.0f64..2.0,
            y_slow in -2.0f64..2.0,
            desired in -2.0f64..2.0,
        ) {
            let combined_err = desired - (lambda * y_fast + (1.0 - lambda) * y_slow);
            let mut c = CombinerState::new(lambda, 1.0, None).unwrap();
            c.step(combined_err, y_fast, y_slow).unwrap();

            let swapped_err = desired - ((1.0 - lambda) * y_slow + lambda * y_fast);
            let mut c_swapped = CombinerState::new(1.0 - lambda, 1.0, None).unwrap();
            c_swapped.step(swapped_err, y_slow, y_fast).unwrap();

            prop_assert!((c_swapped.lambda() - (1.0 - c.lambda())).abs() <= 1e-12);
        }
    }
}
