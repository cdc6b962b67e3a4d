//! Univariate bandwidth predictors: history-repeat, exponentially weighted
//! moving average, harmonic mean, and recursive least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero bandwidths are clamped to this before inversion; traces do hit 0 Mbps.
pub const HARMONIC_EPS: f64 = 1e-6;

/// Repeats the last observation: the prediction for t+tau is b(t) for any tau.
pub fn history_repeat(history: &[f64], _horizon: usize) -> Result<f64> {
    history
        .last()
        .copied()
        .ok_or_else(|| Error::empty("history-repeat needs at least one observation"))
}

/// One EWMA update: (1 - alpha) * previous estimate + alpha * observation.
pub fn ewma_step(prev_estimate: f64, observation: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("EWMA alpha {alpha} outside [0,1]")));
    }
    Ok((1.0 - alpha) * prev_estimate + alpha * observation)
}

/// Harmonic mean of the last `h` observations.
pub fn harmonic_mean_predict(history: &[f64], h: usize) -> Result<f64> {
    if h == 0 {
        return Err(Error::config("harmonic mean needs h >= 1".to_string()));
    }
    if history.len() < h {
        return Err(Error::invalid(format!(
            "harmonic mean over {h} values but history has {}",
            history.len()
        )));
    }
    let inv_sum: f64 = history[history.len() - h..]
        .iter()
        .map(|&b| 1.0 / b.max(HARMONIC_EPS))
        .sum();
    Ok(h as f64 / inv_sum)
}

/// Recursive least squares filter state: weights over the last `h`
/// bandwidths (most recent first) plus the inverse correlation matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RlsState {
    order: usize,
    /// Filter coefficients, most-recent-first.
    weights: Vec<f64>,
    /// Inverse correlation matrix, row-major `order x order`.
    p: Vec<f64>,
    lambda: f64,
    delta: f64,
}

impl RlsState {
    /// `lambda` is the forgetting factor in (0,1]; `delta` the initialization
    /// scale of P = I/delta.
    pub fn new(order: usize, lambda: f64, delta: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("RLS order must be >= 1".to_string()));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::config(format!("forgetting factor {lambda} outside (0,1]")));
        }
        if delta <= 0.0 {
            return Err(Error::config(format!("regularization {delta} must be > 0")));
        }
        let mut p = vec![0.0; order * order];
        for i in 0..order {
            p[i * order + i] = 1.0 / delta;
        }
        Ok(RlsState {
            order,
            weights: vec![0.0; order],
            p,
            lambda,
            delta,
        })
    }

    /// Paper-default filter: order 5, lambda 0.99, delta 0.01.
    pub fn with_defaults() -> Self {
        RlsState::new(5, 0.99, 0.01).expect("valid defaults")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn inverse_correlation(&self) -> &[f64] {
        &self.p
    }

    /// One-step prediction from a most-recent-first window of length `order`.
    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.order {
            return Err(Error::shape(format!(
                "RLS window length {} != order {}",
                window.len(),
                self.order
            )));
        }
        Ok(self.weights.iter().zip(window).map(|(w, x)| w * x).sum())
    }

    /// Iterated multi-step prediction: the one-step filter is re-applied on
    /// its own outputs to reach `horizon` steps ahead.
    pub fn predict_horizon(&self, window: &[f64], horizon: usize) -> Result<f64> {
        if horizon == 0 {
            return Err(Error::config("horizon must be >= 1".to_string()));
        }
        let mut buf = window.to_vec();
        let mut pred = self.predict(&buf)?;
        for _ in 1..horizon {
            buf.rotate_right(1);
            buf[0] = pred;
            pred = self.predict(&buf)?;
        }
        Ok(pred)
    }

    /// Standard O(h^2) RLS update with exponential forgetting, after the
    /// realized observation for the window arrives. P is re-symmetrized to
    /// keep round-off from accumulating.
    pub fn update(&mut self, window: &[f64], observation: f64) -> Result<()> {
        if window.len() != self.order {
            return Err(Error::shape(format!(
                "RLS window length {} != order {}",
                window.len(),
                self.order
            )));
        }
        if !observation.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite RLS observation {observation}"
            )));
        }
        let h = self.order;
        // pi = P x
        let mut pi = vec![0.0; h];
        for i in 0..h {
            pi[i] = (0..h).map(|j| self.p[i * h + j] * window[j]).sum();
        }
        let denom = self.lambda + window.iter().zip(&pi).map(|(x, p)| x * p).sum::<f64>();
        let gain: Vec<f64> = pi.iter().map(|p| p / denom).collect();
        let err = observation - self.predict(window)?;
        for (w, g) in self.weights.iter_mut().zip(&gain) {
            *w += g * err;
        }
        // P = (P - gain pi^T) / lambda, then symmetrize.
        for i in 0..h {
            for j in 0..h {
                self.p[i * h + j] = (self.p[i * h + j] - gain[i] * pi[j]) / self.lambda;
            }
        }
        for i in 0..h {
            for j in (i + 1)..h {
                let s = 0.5 * (self.p[i * h + j] + self.p[j * h + i]);
                self.p[i * h + j] = s;
                self.p[j * h + i] = s;
            }
        }
        Ok(())
    }

    /// Predict-then-update convenience: returns the prediction made before
    /// the observation was folded in, plus the updated state.
    pub fn predict_update(mut self, window: &[f64], observation: f64) -> Result<(f64, RlsState)> {
        let pred = self.predict(window)?;
        self.update(window, observation)?;
        Ok((pred, self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn history_repeat_definition() {
        assert_eq!(history_repeat(&[3.0, 7.5], 1).unwrap(), 7.5);
        assert_eq!(history_repeat(&[3.0, 7.5], 3).unwrap(), 7.5);
        assert!(history_repeat(&[], 1).is_err());
    }

    #[test]
    fn ewma_endpoints() {
        assert_eq!(ewma_step(4.0, 8.0, 1.0).unwrap(), 8.0);
        assert_eq!(ewma_step(4.0, 8.0, 0.0).unwrap(), 4.0);
        assert_eq!(ewma_step(4.0, 8.0, 0.5).unwrap(), 6.0);
        assert!(ewma_step(4.0, 8.0, 1.5).is_err());
        assert!(ewma_step(4.0, 8.0, -0.1).is_err());
    }

    #[test]
    fn harmonic_mean_values() {
        assert!((harmonic_mean_predict(&[10.0, 10.0, 10.0], 3).unwrap() - 10.0).abs() < 1e-12);
        assert!((harmonic_mean_predict(&[5.0, 20.0], 2).unwrap() - 8.0).abs() < 1e-12);
        // A zero in the window is clamped and dominates the mean.
        assert!(harmonic_mean_predict(&[0.0, 10.0], 2).unwrap() < 0.01);
        assert!(harmonic_mean_predict(&[1.0], 2).is_err());
    }

    #[test]
    fn rls_learns_noiseless_recursion() {
        // b(t) = 0.5 b(t-1) + 0.5 b(t-2), h = 5, lambda = 1.
        let mut series = vec![1.0, 2.0];
        for t in 2..260 {
            series.push(0.5 * series[t - 1] + 0.5 * series[t - 2]);
        }
        // Small delta: the regularized initialization would otherwise floor
        // the reachable error above the tolerance.
        let mut rls = RlsState::new(5, 1.0, 1e-6).unwrap();
        let mut last_err = f64::MAX;
        for t in 5..series.len() {
            let window: Vec<f64> = (0..5).map(|k| series[t - 1 - k]).collect();
            let pred = rls.predict(&window).unwrap();
            last_err = (pred - series[t]).abs();
            rls.update(&window, series[t]).unwrap();
        }
        assert!(last_err < 1e-6, "one-step error {last_err}");
    }

    #[test]
    fn rls_converges_on_constant_sequence() {
        let mut rls = RlsState::new(5, 1.0, 1e-4).unwrap();
        let window = [3.0; 5];
        let mut pred = 0.0;
        for _ in 0..100 {
            pred = rls.predict(&window).unwrap();
            rls.update(&window, 3.0).unwrap();
        }
        assert!((pred - 3.0).abs() < 1e-6);
    }

    #[test]
    fn rls_matches_batch_least_squares() {
        // lambda = 1, delta -> 0: final weights equal the delta-regularized
        // normal-equation solution.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let series: Vec<f64> = (0..300).map(|_| rng.gen_range(0.0..20.0)).collect();
        let h = 5;
        let delta = 1e-8;
        let mut rls = RlsState::new(h, 1.0, delta).unwrap();
        let mut xs: Vec<Vec<f64>> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for t in h..series.len() {
            let window: Vec<f64> = (0..h).map(|k| series[t - 1 - k]).collect();
            rls.update(&window, series[t]).unwrap();
            xs.push(window);
            ys.push(series[t]);
        }
        let ols = ols_oracle(&xs, &ys, delta);
        for (w, o) in rls.weights().iter().zip(&ols) {
            assert!((w - o).abs() < 1e-5, "rls {w} vs ols {o}");
        }
    }

    /// Independent batch solution of (X^T X + delta I) w = X^T y.
    fn ols_oracle(xs: &[Vec<f64>], ys: &[f64], delta: f64) -> Vec<f64> {
        let h = xs[0].len();
        let mut xtx = nalgebra::DMatrix::<f64>::zeros(h, h);
        let mut xty = nalgebra::DVector::<f64>::zeros(h);
        for (x, &y) in xs.iter().zip(ys) {
            for i in 0..h {
                xty[i] += x[i] * y;
                for j in 0..h {
                    xtx[(i, j)] += x[i] * x[j];
                }
            }
        }
        for i in 0..h {
            xtx[(i, i)] += delta;
        }
        let solution = xtx.lu().solve(&xty).expect("well-conditioned system");
        solution.iter().copied().collect()
    }

    #[test]
    fn p_stays_symmetric_and_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rls = RlsState::new(5, 0.99, 0.01).unwrap();
        let mut window = [1.0, 2.0, 3.0, 4.0, 5.0];
        for _ in 0..10_000 {
            let obs = rng.gen_range(0.0..30.0);
            rls.update(&window, obs).unwrap();
            window.rotate_right(1);
            window[0] = obs;
        }
        let h = rls.order();
        let p = rls.inverse_correlation();
        for i in 0..h {
            for j in 0..h {
                assert!((p[i * h + j] - p[j * h + i]).abs() <= 1e-10);
            }
        }
        // Positive definiteness via Cholesky.
        let m = nalgebra::DMatrix::from_row_slice(h, h, p);
        assert!(nalgebra::Cholesky::new(m).is_some(), "P lost positive definiteness");
    }

    #[test]
    fn non_finite_observation_leaves_state_unchanged() {
        let mut rls = RlsState::with_defaults();
        let window = [1.0; 5];
        rls.update(&window, 2.0).unwrap();
        let before = rls.clone();
        assert!(rls.update(&window, f64::NAN).is_err());
        assert_eq!(rls.weights(), before.weights());
        assert_eq!(rls.inverse_correlation(), before.inverse_correlation());
    }

    proptest! {
        #[test]
        fn harmonic_below_arithmetic(values in proptest::collection::vec(0.01f64..100.0, 1..20)) {
            let h = values.len();
            let harmonic = harmonic_mean_predict(&values, h).unwrap();
            let arithmetic = values.iter().sum::<f64>() / h as f64;
            prop_assert!(harmonic <= arithmetic + 1e-9);
        }

        #[test]
        fn history_repeat_is_ewma_alpha_one(values in proptest::collection::vec(0f64..50.0, 1..30)) {
            // Running EWMA with alpha = 1 tracks the last observation exactly.
            let mut estimate = values[0];
            for &v in &values {
                estimate = ewma_step(estimate, v, 1.0).unwrap();
            }
            prop_assert_eq!(estimate, history_repeat(&values, 1).unwrap());
        }
    }
}
