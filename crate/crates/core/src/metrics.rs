//! Clip-set agreement metrics, annotation consensus and inference rules.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ClipScores;

/// Annotations per video-sentence pair.
pub const ANNOTATIONS_PER_PAIR: usize = 4;
/// Largest thumbnail a generated annotation may contain.
pub const MAX_THUMB_CLIPS: usize = 5;

/// A set of selected clip indices out of `clips`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThumbnailAnnotation {
    selected: Vec<usize>,
    clips: usize,
}

impl ThumbnailAnnotation {
    /// Sorts `selected`; rejects duplicates and out-of-range indices.
    pub fn new(mut selected: Vec<usize>, clips: usize) -> Result<Self> {
        selected.sort_unstable();
        if let Some(w) = selected.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("clip {} selected twice", w[0])));
        }
        if let Some(&bad) = selected.last().filter(|&&i| i >= clips) {
            return Err(Error::Validation(format!(
                "clip index {bad} out of range for {clips} clips"
            )));
        }
        Ok(Self { selected, clips })
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Self {
            selected: mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect(),
            clips: mask.len(),
        }
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn clips(&self) -> usize {
        self.clips
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, clip: usize) -> bool {
        self.selected.binary_search(&clip).is_ok()
    }

    /// Per-clip class labels: 1 for selected clips, 0 otherwise.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.clips];
        for &i in &self.selected {
            labels[i] = 1;
        }
        labels
    }

    fn overlap(&self, other: &Self) -> Result<usize> {
        if self.clips != other.clips {
            return Err(Error::Validation(format!(
                "clip count mismatch: {} vs {}",
                self.clips, other.clips
            )));
        }
        // both sorted
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.selected.len() && j < other.selected.len() {
            match self.selected[i].cmp(&other.selected[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(n)
    }
}

impl fmt::Display for ThumbnailAnnotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.selected.iter().map(usize::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Harmonic mean of precision and recall, `2|P∩G| / (|P| + |G|)`.
/// Zero when either side is empty.
pub fn f1_score(pred: &ThumbnailAnnotation, gt: &ThumbnailAnnotation) -> Result<f64> {
    let inter = pred.overlap(gt)?;
    let total = pred.len() + gt.len();
    if inter == 0 {
        return Ok(0.0);
    }
    Ok((2 * inter) as f64 / total as f64)
}

/// `|P∩G| / |P∪G|`, zero for an empty union.
pub fn iou_score(pred: &ThumbnailAnnotation, gt: &ThumbnailAnnotation) -> Result<f64> {
    let inter = pred.overlap(gt)?;
    let union = pred.len() + gt.len() - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Index of the annotation with the highest mean F1 against the other
/// three. Ties go to the lowest index.
pub fn select_consistent_index(annotations: &[ThumbnailAnnotation]) -> Result<usize> {
    if annotations.len() != ANNOTATIONS_PER_PAIR {
        return Err(Error::Validation(format!(
            "expected {ANNOTATIONS_PER_PAIR} annotations, got {}",
            annotations.len()
        )));
    }
    // Summed F1 against the others as an exact fraction, so ties are real
    // ties and the lowest index wins them.
    let mut best = 0;
    let mut best_score = (0u128, 1u128);
    for (k, a) in annotations.iter().enumerate() {
        let mut score = (0u128, 1u128);
        for (j, b) in annotations.iter().enumerate() {
            if j == k {
                continue;
            }
            let inter = a.overlap(b)? as u128;
            let total = (a.len() + b.len()).max(1) as u128;
            score = (score.0 * total + 2 * inter * score.1, score.1 * total);
        }
        if k == 0 || score.0 * best_score.1 > best_score.0 * score.1 {
            best = k;
            best_score = score;
        }
    }
    Ok(best)
}

pub fn select_consistent_gt(annotations: &[ThumbnailAnnotation]) -> Result<ThumbnailAnnotation> {
    Ok(annotations[select_consistent_index(annotations)?].clone())
}

/// How clip scores become a thumbnail.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceRule {
    #[default]
    /// Clips whose thumbnail score beats the non-thumbnail score, or the
    /// single best clip when none does.
    Argmax,
    /// The `k` clips with the highest thumbnail probability.
    TopK(usize),
}

impl FromStr for InferenceRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "argmax" {
            return Ok(InferenceRule::Argmax);
        }
        if s == "topk" {
            return Ok(InferenceRule::TopK(MAX_THUMB_CLIPS));
        }
        if let Some(k) = s.strip_prefix("topk:") {
            let k: usize = k.parse().map_err(|_| Error::Usage(format!("bad top-k count `{k}`")))?;
            if k == 0 {
                return Err(Error::Usage("top-k needs k >= 1".into()));
            }
            return Ok(InferenceRule::TopK(k));
        }
        Err(Error::Usage(format!("unknown inference rule `{s}`")))
    }
}

impl fmt::Display for InferenceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InferenceRule::Argmax => f.write_str("argmax"),
            InferenceRule::TopK(k) => write!(f, "topk:{k}"),
        }
    }
}

/// Clip indices ordered by descending margin, ties by index.
fn ranked(margins: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..margins.len()).collect();
    idx.sort_by(|&a, &b| margins[b].total_cmp(&margins[a]).then(a.cmp(&b)));
    idx
}

pub fn predict_from_margins(margins: &[f64], rule: InferenceRule) -> ThumbnailAnnotation {
    let clips = margins.len();
    let selected = match rule {
        InferenceRule::Argmax => {
            let positive: Vec<usize> = (0..clips).filter(|&i| margins[i] > 0.0).collect();
            if positive.is_empty() {
                ranked(margins).into_iter().take(1).collect()
            } else {
                positive
            }
        }
        InferenceRule::TopK(k) => ranked(margins).into_iter().take(k.max(1)).collect(),
    };
    ThumbnailAnnotation::new(selected, clips).expect("indices come from the clip range")
}

pub fn predict_thumbnail(scores: &ClipScores, rule: InferenceRule) -> ThumbnailAnnotation {
    predict_from_margins(&scores.margins(), rule)
}

/// How one prediction is scored against a pair's annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean over the four annotations.
    Mean,
    /// Best of the four annotations.
    Max,
    /// Only the most consistent annotation (the training target).
    Consistent,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            "consistent" => Ok(Aggregation::Consistent),
            other => Err(Error::Usage(format!("unknown aggregation `{other}`"))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
            Aggregation::Consistent => "consistent",
        })
    }
}

/// `(f1, iou)` of `pred` against `annotations` under `agg`.
pub fn score_against(
    pred: &ThumbnailAnnotation,
    annotations: &[ThumbnailAnnotation],
    agg: Aggregation,
) -> Result<(f64, f64)> {
    if annotations.is_empty() {
        return Err(Error::Validation("no annotations to score against".into()));
    }
    match agg {
        Aggregation::Consistent => {
            let gt = select_consistent_gt(annotations)?;
            Ok((f1_score(pred, &gt)?, iou_score(pred, &gt)?))
        }
        Aggregation::Mean | Aggregation::Max => {
            let mut f1s = Vec::with_capacity(annotations.len());
            let mut ious = Vec::with_capacity(annotations.len());
            for a in annotations {
                f1s.push(f1_score(pred, a)?);
                ious.push(iou_score(pred, a)?);
            }
            let reduce = |v: &[f64]| match agg {
                Aggregation::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                _ => v.iter().sum::<f64>() / v.len() as f64,
            };
            Ok((reduce(&f1s), reduce(&ious)))
        }
    }
}

/// Union of clip indices over a set of annotations.
pub fn union_of(annotations: &[ThumbnailAnnotation]) -> BTreeSet<usize> {
    annotations.iter().flat_map(|a| a.selected().iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(sel: &[usize], clips: usize) -> ThumbnailAnnotation {
        ThumbnailAnnotation::new(sel.to_vec(), clips).unwrap()
    }

    #[test]
    fn f1_and_iou_examples() {
        let a = ann(&[0, 1], 4);
        assert_eq!(f1_score(&a, &a).unwrap(), 1.0);
        assert_eq!(iou_score(&a, &a).unwrap(), 1.0);
        let p = ann(&[0], 4);
        assert!((f1_score(&p, &a).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou_score(&p, &a).unwrap(), 0.5);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let empty = ThumbnailAnnotation::from_mask(&[false; 4]);
        let gt = ann(&[1], 4);
        assert_eq!(f1_score(&empty, &gt).unwrap(), 0.0);
        assert_eq!(iou_score(&empty, &gt).unwrap(), 0.0);
        assert_eq!(iou_score(&empty, &empty).unwrap(), 0.0);
    }

    #[test]
    fn clip_count_mismatch_is_an_error() {
        assert!(f1_score(&ann(&[0], 3), &ann(&[0], 4)).is_err());
        assert!(iou_score(&ann(&[0], 3), &ann(&[0], 4)).is_err());
    }

    #[test]
    fn annotation_validation() {
        assert!(ThumbnailAnnotation::new(vec![1, 1], 3).is_err());
        assert!(ThumbnailAnnotation::new(vec![3], 3).is_err());
        assert_eq!(ann(&[2, 0], 3).selected(), &[0, 2]);
        assert_eq!(ann(&[2, 0], 3).labels(), vec![1, 0, 1]);
    }

    #[test]
    fn consistent_selection_examples() {
        let same = vec![ann(&[0, 1], 8); 4];
        assert_eq!(select_consistent_index(&same).unwrap(), 0);
        let outlier = vec![ann(&[0, 1], 8), ann(&[0, 1], 8), ann(&[0, 1], 8), ann(&[5], 8)];
        assert_eq!(select_consistent_index(&outlier).unwrap(), 0);
        assert!(select_consistent_index(&same[..3]).is_err());
    }

    #[test]
    fn argmax_rule_and_fallback() {
        assert_eq!(
            predict_from_margins(&[1.0, -1.0, 1.0], InferenceRule::Argmax).selected(),
            &[0, 2]
        );
        assert_eq!(
            predict_from_margins(&[-3.0, -0.5, -2.0], InferenceRule::Argmax).selected(),
            &[1]
        );
        assert_eq!(
            predict_from_margins(&[0.9, 0.5, 0.7], InferenceRule::TopK(2)).selected(),
            &[0, 2]
        );
    }

    #[test]
    fn aggregation_semantics() {
        let gt = ann(&[0, 1], 8);
        let other = ann(&[6, 7], 8);
        let anns = vec![gt.clone(), other.clone(), other.clone(), other];
        let (f1, iou) = score_against(&gt, &anns, Aggregation::Max).unwrap();
        assert_eq!((f1, iou), (1.0, 1.0));
        let (f1, iou) = score_against(&gt, &anns, Aggregation::Mean).unwrap();
        assert_eq!((f1, iou), (0.25, 0.25));
    }

    #[test]
    fn parse_rules() {
        assert_eq!("argmax".parse::<InferenceRule>().unwrap(), InferenceRule::Argmax);
        assert_eq!("topk:3".parse::<InferenceRule>().unwrap(), InferenceRule::TopK(3));
        assert!("topk:0".parse::<InferenceRule>().is_err());
        assert_eq!("max".parse::<Aggregation>().unwrap(), Aggregation::Max);
    }
}
