//! Training loop and dataset evaluation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::loss::{aux_loss, final_loss, thumb_loss};
use crate::metrics::{
    predict_thumbnail, score_against, select_consistent_gt, Aggregation, InferenceRule, ThumbnailAnnotation,
};
use crate::model::Model;
use crate::optim::{AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    /// Drives the pair shuffle and dropout masks.
    pub seed: u64,
    /// Record metrics every this many epochs (and after the last); 0 never.
    pub eval_every: usize,
    pub aux_weight: f64,
    pub rule: InferenceRule,
    /// Aggregation for validation metrics.
    pub val_aggregation: Aggregation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            epochs: 100,
            seed: 0,
            eval_every: 0,
            aux_weight: 1.0,
            rule: InferenceRule::Argmax,
            val_aggregation: Aggregation::Mean,
        }
    }
}

/// One epoch of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean final loss over the epoch's steps.
    pub loss: f64,
    pub thumb_loss: Option<f64>,
    pub aux_loss: Option<f64>,
    /// Against the training targets.
    pub train_f1: Option<f64>,
    pub train_iou: Option<f64>,
    pub val_f1: Option<f64>,
    pub val_iou: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub adam: AdamState,
    pub history: Vec<EpochRecord>,
}

/// Per-pair evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEval {
    pub video_id: String,
    pub predicted: Vec<usize>,
    pub f1: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub aggregation: Aggregation,
    pub rule: InferenceRule,
    pub f1: f64,
    pub iou: f64,
    pub pairs: Vec<PairEval>,
}

/// Scores every pair's prediction against its annotations. Pairs are
/// evaluated in parallel and reduced in dataset order.
pub fn evaluate<E: Example>(model: &Model, dataset: &[E], agg: Aggregation, rule: InferenceRule) -> Result<EvalResult> {
    if dataset.is_empty() {
        return Err(Error::Validation("cannot evaluate an empty dataset".into()));
    }
    let pairs = dataset
        .par_iter()
        .map(|ex| {
            let anns = ex
                .annotations()
                .ok_or_else(|| Error::Validation(format!("pair {} has no annotations", ex.video_id())))?;
            let scores = model.scores(ex.video(), Some(ex.sentence()))?;
            let pred = predict_thumbnail(&scores, rule);
            let (f1, iou) = score_against(&pred, anns, agg)?;
            Ok(PairEval {
                video_id: ex.video_id().to_string(),
                predicted: pred.selected().to_vec(),
                f1,
                iou,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = pairs.len() as f64;
    let f1 = pairs.iter().map(|p| p.f1).sum::<f64>() / n;
    let iou = pairs.iter().map(|p| p.iou).sum::<f64>() / n;
    Ok(EvalResult {
        aggregation: agg,
        rule,
        f1,
        iou,
        pairs,
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Trains `model` on `train_set` with Adam, one pair per step.
///
/// Supervised variants learn against the most consistent of each pair's
/// annotations. The unsupervised variant never touches annotations, and
/// records losses only.
pub fn train<E: Example>(mut model: Model, train_set: &[E], val_set: &[E], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let variant = model.variant;
    let supervised = variant.uses_thumb_loss();
    let targets: Vec<Option<ThumbnailAnnotation>> = if supervised {
        train_set
            .iter()
            .map(|ex| {
                let anns = ex.annotations().ok_or_else(|| {
                    Error::Validation(format!(
                        "variant {} needs annotations, pair {} has none",
                        variant.variant,
                        ex.video_id()
                    ))
                })?;
                select_consistent_gt(anns).map(Some)
            })
            .collect::<Result<_>>()?
    } else {
        vec![None; train_set.len()]
    };

    let mut adam = AdamState::new(cfg.adam, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut losses = Vec::with_capacity(order.len());
        let mut thumbs = Vec::new();
        let mut auxes = Vec::new();
        for &idx in &order {
            let ex = &train_set[idx];
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let out = model.forward(&mut tape, &bound, ex.video(), Some(ex.sentence()), true, &mut rng)?;
            let thumb = match &targets[idx] {
                Some(gt) => Some(thumb_loss(&mut tape, out.scores, gt)?),
                None => None,
            };
            let aux = match (variant.uses_aux_loss(), out.z, out.z_hat) {
                (true, Some(z), Some(z_hat)) => Some(aux_loss(&mut tape, z, z_hat)?),
                _ => None,
            };
            let loss = final_loss(&mut tape, thumb, aux, &variant, cfg.aux_weight)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    pair: idx,
                    video_id: ex.video_id().to_string(),
                    msg: format!("loss is {value}"),
                });
            }
            losses.push(value);
            if let Some(t) = thumb {
                thumbs.push(tape.value(t).item());
            }
            if let Some(a) = aux {
                auxes.push(tape.value(a).item());
            }
            let mut grads = tape.backward(loss);
            let grads = bound.grads(&mut grads);
            adam.step(&mut model.params, &grads)?;
        }

        let mut record = EpochRecord {
            epoch,
            loss: mean(&losses).unwrap_or(0.0),
            thumb_loss: mean(&thumbs),
            aux_loss: mean(&auxes),
            train_f1: None,
            train_iou: None,
            val_f1: None,
            val_iou: None,
        };
        let due = cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        if due && supervised {
            let r = evaluate(&model, train_set, Aggregation::Consistent, cfg.rule)?;
            record.train_f1 = Some(r.f1);
            record.train_iou = Some(r.iou);
            if !val_set.is_empty() {
                let r = evaluate(&model, val_set, cfg.val_aggregation, cfg.rule)?;
                record.val_f1 = Some(r.f1);
                record.val_iou = Some(r.iou);
            }
        }
        log::debug!("epoch {epoch}: loss {:.6}", record.loss);
        history.push(record);
    }
    Ok(TrainOutcome { model, adam, history })
}

/// Loss history as CSV. Floats use the shortest exact representation.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,loss,thumb_loss,aux_loss,train_f1,train_iou,val_f1,val_iou\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            r.loss,
            opt(r.thumb_loss),
            opt(r.aux_loss),
            opt(r.train_f1),
            opt(r.train_iou),
            opt(r.val_f1),
            opt(r.val_iou)
        );
    }
    out
}
