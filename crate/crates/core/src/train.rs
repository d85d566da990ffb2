//! Single-threaded trainer for the grounding model: Adam with global
//! gradient-norm clipping, batch size one, deterministic per-epoch shuffling.
//!
//! Determinism contract: given the same model, dataset order, and
//! `TrainConfig`, training produces bit-identical parameters. All randomness
//! flows through named sub-streams of the config seed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::model::{GroundingExample, ModelError, TagModel};
use crate::num;
use crate::rng::sub_rng;

// ── errors ──────────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training needs at least one example")]
    EmptyDataset,
    #[error("train config `{field}`: {why}")]
    Config { field: &'static str, why: &'static str },
    #[error("non-finite loss at epoch {epoch}, example {example_id}")]
    NonFiniteLoss { epoch: usize, example_id: String },
    #[error("non-finite parameter {param} after update at epoch {epoch}, example {example_id}")]
    NonFiniteParam { epoch: usize, example_id: String, param: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

// ── config ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Seed for the per-epoch shuffle streams (independent of the model's
    /// init seed).
    pub seed: u64,
    /// Global gradient-norm ceiling; `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f64, seed: u64) -> Self {
        TrainConfig {
            epochs,
            lr,
            seed,
            clip_norm: 5.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        let bad = |field, why| Err(TrainError::Config { field, why });
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr", "must be finite and ≥ 0");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm", "must be positive (inf disables clipping)");
        }
        for (field, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(field, "must lie in [0, 1)");
            }
        }
        if !(self.eps > 0.0) {
            return bad("eps", "must be positive");
        }
        Ok(())
    }
}

/// Per-epoch mean training loss, in epoch order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
}

/// Trailing-window moving average, for monotonicity checks on noisy traces.
pub fn smoothed(trace: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "smoothing window must be at least 1");
    (0..trace.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &trace[lo..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

fn example_key(ex: &GroundingExample) -> String {
    format!("{}:{}", ex.clip_id, ex.phrase.text())
}

// ── training loop ───────────────────────────────────────────────────────────

/// Runs Adam over the dataset, one example per step. Examples are revisited
/// every epoch in a freshly shuffled order drawn from
/// `sub_rng(seed, "train/shuffle/{epoch}")`.
pub fn train(
    model: &mut TagModel,
    dataset: &[GroundingExample],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    cfg.validate()?;
    let sizes: Vec<usize> = model.params().iter().map(|p| p.numel()).collect();
    let mut m: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let mut v: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    // Running β^t products for bias correction.
    let mut b1_pow = 1.0;
    let mut b2_pow = 1.0;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut sub_rng(cfg.seed, &format!("train/shuffle/{epoch}")));
        let mut total = 0.0;
        for &ei in &order {
            let ex = &dataset[ei];
            let mut lg = model.build_loss_graph(ex)?;
            let loss = lg.graph.value(lg.loss).data()[0];
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, example_id: example_key(ex) });
            }
            total += loss;
            lg.graph.backward(lg.loss).map_err(ModelError::from)?;
            let grads: Vec<&[f64]> = lg.params.iter().map(|&id| lg.graph.grad(id)).collect();
            let norm_sq: f64 = grads
                .iter()
                .flat_map(|g| g.iter())
                .map(|&g| g * g)
                .sum();
            let norm = num::sqrt(norm_sq);
            let scale = if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };
            b1_pow *= cfg.beta1;
            b2_pow *= cfg.beta2;
            let bc1 = 1.0 - b1_pow;
            let bc2 = 1.0 - b2_pow;
            for (((param, grad), mi), vi) in
                model.params_mut().into_iter().zip(&grads).zip(&mut m).zip(&mut v)
            {
                for (j, pv) in param.data_mut().iter_mut().enumerate() {
                    let g = grad[j] * scale;
                    mi[j] = cfg.beta1 * mi[j] + (1.0 - cfg.beta1) * g;
                    vi[j] = cfg.beta2 * vi[j] + (1.0 - cfg.beta2) * g * g;
                    let m_hat = mi[j] / bc1;
                    let v_hat = vi[j] / bc2;
                    *pv -= cfg.lr * m_hat / (num::sqrt(v_hat) + cfg.eps);
                }
            }
            for (param, name) in model.params().iter().zip(model.param_names()) {
                if param.data().iter().any(|x| !x.is_finite()) {
                    return Err(TrainError::NonFiniteParam {
                        epoch,
                        example_id: example_key(ex),
                        param: name,
                    });
                }
            }
        }
        epoch_loss.push(total / dataset.len() as f64);
    }
    Ok(TrainReport { epoch_loss })
}

// ── tests ───────────────────────────────────────────────────────────────────
