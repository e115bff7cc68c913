use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::math::{Matrix, MinMaxScaler, Rng};
use crate::window::{scale_window, Partition, WindowSpec};

use super::{backward_into, forward, LstmParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Global L2 norm above which gradients are rescaled.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 32,
            epochs: 300,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: None,
            seed: 0,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.hidden == 0 {
            return bad("hidden size must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} = {b} must lie in (0, 1)"));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad(format!("clip norm {} must be positive", self.clip_norm));
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive".into());
        }
        Ok(())
    }
}

/// Mean squared error.
pub fn loss_mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Argument("loss of an empty batch".into()));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64)
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: LstmParams,
    pub v: LstmParams,
}

impl AdamState {
    pub fn new(like: &LstmParams) -> Self {
        AdamState {
            m: LstmParams::zeros(like.features(), like.hidden()),
            v: LstmParams::zeros(like.features(), like.hidden()),
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based). Gradients whose
/// global norm exceeds `cfg.clip_norm` are rescaled to that norm first.
/// Returns the pre-clipping norm.
pub fn adam_step(
    p: &mut LstmParams,
    grads: &LstmParams,
    state: &mut AdamState,
    t: usize,
    cfg: &TrainConfig,
) -> Result<f64> {
    if t < 1 {
        return Err(Error::Argument("Adam step count starts at 1".into()));
    }
    p.same_shape(grads)?;
    p.same_shape(&state.m)?;
    p.same_shape(&state.v)?;
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    let scale = if norm > cfg.clip_norm {
        cfg.clip_norm / norm
    } else {
        1.0
    };
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let gs = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((pt, gt), mt), vt) in p.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs) {
        for k in 0..pt.len() {
            let g = gt[k] * scale;
            mt[k] = b1 * mt[k] + (1.0 - b1) * g;
            vt[k] = b2 * vt[k] + (1.0 - b2) * g * g;
            let m_hat = mt[k] / c1;
            let v_hat = vt[k] / c2;
            pt[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: LstmParams,
    pub spec: WindowSpec,
    pub input_scaler: MinMaxScaler,
    pub target_scaler: MinMaxScaler,
    /// Mean training loss (scaled units) of each epoch.
    pub loss_history: Vec<f64>,
    /// Free-form metadata carried through serialization (region, split...).
    pub labels: BTreeMap<String, String>,
}

/// Non-negativity clamp applied to every case-count forecast.
pub fn clip_forecast(v: f64) -> f64 {
    v.max(0.0)
}

impl TrainedModel {
    fn check_window(&self, w: &Matrix) -> Result<()> {
        if w.cols() != self.spec.variant.width() {
            return Err(Error::Shape(format!(
                "{} model given window of width {}",
                self.spec.variant,
                w.cols()
            )));
        }
        Ok(())
    }

    /// Forecasts from windows already scaled with this model's input scaler.
    pub fn predict(&self, scaled_windows: &[Matrix]) -> Result<Vec<f64>> {
        scaled_windows
            .iter()
            .map(|w| {
                self.check_window(w)?;
                let (y, _) = forward(&self.params, w)?;
                Ok(clip_forecast(self.target_scaler.inverse_one(0, y)))
            })
            .collect()
    }

    /// Forecasts from unscaled windows.
    pub fn predict_raw(&self, windows: &[Matrix]) -> Result<Vec<f64>> {
        let scaled = windows
            .iter()
            .map(|w| scale_window(&self.input_scaler, w))
            .collect::<Result<Vec<_>>>()?;
        self.predict(&scaled)
    }

    /// Multi-step forecast over consecutive windows: after the first window,
    /// every lagged case value inside the horizon is replaced by the model's
    /// own earlier forecast. Covariates stay as observed.
    pub fn predict_recursive(&self, windows: &[Matrix]) -> Result<Vec<f64>> {
        let col = self.spec.variant.cases_column();
        let mut out: Vec<f64> = Vec::with_capacity(windows.len());
        for (k, w) in windows.iter().enumerate() {
            self.check_window(w)?;
            let l = w.rows();
            let mut w = w.clone();
            for r in 0..l {
                if let Some(s) = (k + r).checked_sub(l) {
                    w.set(r, col, out[s]);
                }
            }
            let scaled = scale_window(&self.input_scaler, &w)?;
            let (y, _) = forward(&self.params, &scaled)?;
            out.push(clip_forecast(self.target_scaler.inverse_one(0, y)));
        }
        Ok(out)
    }
}

/// Trains on a scaled training partition with BPTT and Adam.
pub fn train(data: &Partition, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Argument("training partition is empty".into()));
    }
    let width = data.spec.variant.width();
    let mut rng = Rng::new(cfg.seed);
    let mut params = LstmParams::init(width, cfg.hidden, &mut rng)?;
    let mut adam = AdamState::new(&params);
    let mut grads = LstmParams::zeros(width, cfg.hidden);
    let n = data.len();
    let batch = cfg.batch_size.unwrap_or(n).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut t = 0;
    for epoch in 1..=cfg.epochs {
        if batch < n {
            rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            grads.fill_zero();
            let scale = 2.0 / chunk.len() as f64;
            for &s in chunk {
                let (pred, cache) = forward(&params, &data.inputs[s])?;
                let err = pred - data.targets[s];
                total += err * err;
                backward_into(&params, &cache, scale * err, &mut grads)?;
            }
            t += 1;
            adam_step(&mut params, &grads, &mut adam, t, cfg)?;
        }
        let loss = total / n as f64;
        if !loss.is_finite() || !params.all_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(loss);
    }
    Ok(TrainedModel {
        params,
        spec: data.spec,
        input_scaler: data.input_scaler.clone(),
        target_scaler: data.target_scaler.clone(),
        loss_history: history,
        labels: BTreeMap::new(),
    })
}
