//! The unified bandwidth-forecaster contract and its implementations over
//! the univariate filters, the random forest, and the recurrent models.
//!
//! A predictor plays a trace forward: `observe` is called once per second in
//! time order, and `predict` asks for b(t + horizon) from the raw feature
//! window ending at the current second. Online filters keep internal state;
//! window models are stateless.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::filters::{ewma_step, harmonic_mean_predict, history_repeat, RlsState};
use crate::nn::RecurrentModel;
use crate::trees::{rf_predict, TreeEnsemble};

pub trait Predictor {
    fn name(&self) -> &str;
    /// History rows the raw window passed to `predict` must contain.
    fn window(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Feed the next second's feature row (schema order). Default: no-op.
    fn observe(&mut self, _row: &[f64]) {}
    /// Forecast bandwidth `horizon` seconds past the window end, in Mbps.
    fn predict(&mut self, window: &[f64]) -> Result<f64>;
}

/// b(t + tau) = b(t), for any tau.
pub struct HistoryRepeat {
    target_col: usize,
    n_features: usize,
    horizon: usize,
}

impl HistoryRepeat {
    pub fn new(target_col: usize, n_features: usize, horizon: usize) -> Self {
        HistoryRepeat {
            target_col,
            n_features,
            horizon,
        }
    }
}

impl Predictor for HistoryRepeat {
    fn name(&self) -> &str {
        "history"
    }

    fn window(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&mut self, window: &[f64]) -> Result<f64> {
        let bw: Vec<f64> = window
            .chunks(self.n_features)
            .map(|row| row[self.target_col])
            .collect();
        history_repeat(&bw, self.horizon)
    }
}

/// Running exponentially weighted average of observed bandwidth; the
/// current estimate is the forecast at any horizon.
pub struct EwmaPredictor {
    alpha: f64,
    estimate: Option<f64>,
    target_col: usize,
    horizon: usize,
}

impl EwmaPredictor {
    pub fn new(alpha: f64, target_col: usize, horizon: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!("EWMA alpha {alpha} outside [0,1]")));
        }
        Ok(EwmaPredictor {
            alpha,
            estimate: None,
            target_col,
            horizon,
        })
    }
}

impl Predictor for EwmaPredictor {
    fn name(&self) -> &str {
        "ewma"
    }

    fn window(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn observe(&mut self, row: &[f64]) {
        let b = row[self.target_col];
        self.estimate = Some(match self.estimate {
            None => b,
            Some(prev) => ewma_step(prev, b, self.alpha).expect("alpha validated"),
        });
    }

    fn predict(&mut self, _window: &[f64]) -> Result<f64> {
        self.estimate
            .ok_or_else(|| Error::empty("EWMA has seen no observations"))
    }
}

/// Harmonic mean of the last `h` observed bandwidths.
pub struct HarmonicPredictor {
    h: usize,
    target_col: usize,
    n_features: usize,
    horizon: usize,
}

impl HarmonicPredictor {
    pub fn new(h: usize, target_col: usize, n_features: usize, horizon: usize) -> Self {
        HarmonicPredictor {
            h,
            target_col,
            n_features,
            horizon,
        }
    }
}

impl Predictor for HarmonicPredictor {
    fn name(&self) -> &str {
        "harmonic"
    }

    fn window(&self) -> usize {
        self.h
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&mut self, window: &[f64]) -> Result<f64> {
        let bw: Vec<f64> = window
            .chunks(self.n_features)
            .map(|row| row[self.target_col])
            .collect();
        harmonic_mean_predict(&bw, self.h)
    }
}

/// Online RLS over observed bandwidth; multi-step forecasts iterate the
/// one-step filter on its own outputs.
pub struct RlsPredictor {
    state: RlsState,
    history: VecDeque<f64>,
    target_col: usize,
    horizon: usize,
}

impl RlsPredictor {
    pub fn new(state: RlsState, target_col: usize, horizon: usize) -> Self {
        RlsPredictor {
            state,
            history: VecDeque::new(),
            target_col,
            horizon,
        }
    }
}

impl Predictor for RlsPredictor {
    fn name(&self) -> &str {
        "rls"
    }

    fn window(&self) -> usize {
        self.state.order()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn observe(&mut self, row: &[f64]) {
        let b = row[self.target_col];
        let h = self.state.order();
        if self.history.len() == h {
            // The buffer holds the previous h seconds, most recent first:
            // exactly the regression window for the arriving observation.
            let window: Vec<f64> = self.history.iter().copied().collect();
            let _ = self.state.update(&window, b);
        }
        self.history.push_front(b);
        if self.history.len() > h {
            self.history.pop_back();
        }
    }

    fn predict(&mut self, _window: &[f64]) -> Result<f64> {
        if self.history.len() < self.state.order() {
            return Err(Error::empty("RLS has not seen a full window yet"));
        }
        let window: Vec<f64> = self.history.iter().copied().collect();
        Ok(self.state.predict_horizon(&window, self.horizon)?.max(0.0))
    }
}

/// Random forest over the flattened raw feature window (W = horizon).
pub struct ForestPredictor {
    ensemble: TreeEnsemble,
    w: usize,
    horizon: usize,
}

impl ForestPredictor {
    pub fn new(ensemble: TreeEnsemble, w: usize, horizon: usize) -> Self {
        ForestPredictor {
            ensemble,
            w,
            horizon,
        }
    }
}

impl Predictor for ForestPredictor {
    fn name(&self) -> &str {
        "rf"
    }

    fn window(&self) -> usize {
        self.w
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&mut self, window: &[f64]) -> Result<f64> {
        if window.len() != self.ensemble.n_features {
            return Err(Error::shape(format!(
                "forest expects {} flattened values, got {}",
                self.ensemble.n_features,
                window.len()
            )));
        }
        Ok(rf_predict(&self.ensemble, window))
    }
}

/// Trained LSTM or TPA-LSTM model behind the common contract.
pub struct RecurrentPredictor {
    model: RecurrentModel,
    name: &'static str,
}

impl RecurrentPredictor {
    pub fn new(model: RecurrentModel) -> Self {
        let name = match model.kind {
            crate::nn::ModelKind::Lstm => "lstm",
            crate::nn::ModelKind::Tpa => "tpa",
        };
        RecurrentPredictor { model, name }
    }

    pub fn model(&self) -> &RecurrentModel {
        &self.model
    }
}

impl Predictor for RecurrentPredictor {
    fn name(&self) -> &str {
        self.name
    }

    fn window(&self) -> usize {
        self.model.window
    }

    fn horizon(&self) -> usize {
        self.model.horizon
    }

    fn predict(&mut self, window: &[f64]) -> Result<f64> {
        self.model.predict(window)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_repeat_reads_last_row() {
        let mut p = HistoryRepeat::new(0, 2, 3);
        // Two rows of (bw, other).
        let window = [3.0, 9.9, 7.5, 9.9];
        assert_eq!(p.predict(&window).unwrap(), 7.5);
    }

    #[test]
    fn ewma_tracks_observations() {
        let mut p = EwmaPredictor::new(0.5, 0, 1).unwrap();
        assert!(p.predict(&[]).is_err());
        p.observe(&[4.0]);
        assert_eq!(p.predict(&[]).unwrap(), 4.0);
        p.observe(&[8.0]);
        assert_eq!(p.predict(&[]).unwrap(), 6.0);
    }

    #[test]
    fn rls_predictor_needs_full_window() {
        let mut p = RlsPredictor::new(RlsState::new(3, 1.0, 0.01).unwrap(), 0, 1);
        p.observe(&[1.0]);
        p.observe(&[2.0]);
        assert!(p.predict(&[]).is_err());
        p.observe(&[3.0]);
        assert!(p.predict(&[]).is_ok());
    }
}
