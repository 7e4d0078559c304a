//! Synthetic video-sentence datasets.
//!
//! Every video is cut into `sentences_per_video` contiguous segments of
//! near-equal length. Each segment shows one concept, drawn without
//! replacement, so each clip is that concept's prototype plus gaussian
//! noise. Pair `k` of a video has the words of segment `k`'s concept as its
//! sentence and up to `max_thumb_clips` clips centred in segment `k` as its
//! ground truth. The other three annotations drop or swap one clip.
//!
//! Because the same video carries several sentences with disjoint ground
//! truths, a predictor that ignores the sentence cannot fit the data.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledPair;
use crate::error::{Error, Result};
use crate::io::{save_manifest, write_embeddings, write_features, DatasetManifest, EmbeddingTable, ManifestPair};
use crate::metrics::{f1_score, select_consistent_gt, ThumbnailAnnotation, ANNOTATIONS_PER_PAIR, MAX_THUMB_CLIPS};
use crate::model::VideoClipFeatures;
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const FEATURES_DIR: &str = "features";

const MAX_RETRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_videos: usize,
    pub clips_per_video: usize,
    pub n_concepts: usize,
    pub d_c: usize,
    pub d_w: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub max_thumb_clips: usize,
    pub sentences_per_video: usize,
    pub words_per_concept: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_videos: 8,
            clips_per_video: 32,
            n_concepts: 2,
            d_c: 16,
            d_w: 300,
            noise_sigma: 0.1,
            seed: 0,
            max_thumb_clips: MAX_THUMB_CLIPS,
            sentences_per_video: 2,
            words_per_concept: 3,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("synthetic spec: {msg}")));
        if self.n_concepts < 2 {
            return fail(format!("need at least 2 concepts, got {}", self.n_concepts));
        }
        if !(1..=MAX_THUMB_CLIPS).contains(&self.max_thumb_clips) {
            return fail(format!(
                "max_thumb_clips must be in 1..={MAX_THUMB_CLIPS}, got {}",
                self.max_thumb_clips
            ));
        }
        if self.sentences_per_video == 0 || self.sentences_per_video > self.n_concepts {
            return fail(format!(
                "sentences_per_video must be in 1..={}, got {}",
                self.n_concepts, self.sentences_per_video
            ));
        }
        if self.clips_per_video < self.sentences_per_video {
            return fail(format!(
                "{} clips cannot hold {} segments",
                self.clips_per_video, self.sentences_per_video
            ));
        }
        if self.n_videos == 0 || self.d_c == 0 || self.d_w == 0 || self.words_per_concept == 0 {
            return fail("sizes must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("bad noise_sigma {}", self.noise_sigma));
        }
        Ok(())
    }
}

/// One generated pair before it is bound to files.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub video: usize,
    pub concept: usize,
    pub words: Vec<String>,
    pub ground_truth: ThumbnailAnnotation,
    pub annotations: Vec<ThumbnailAnnotation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    /// Concept prototypes, `n_concepts x d_c`.
    pub prototypes: Vec<Vec<f64>>,
    /// Concept of every clip, per video.
    pub clip_concepts: Vec<Vec<usize>>,
    pub videos: Vec<VideoClipFeatures>,
    pub embeddings: EmbeddingTable,
    pub pairs: Vec<SynthPair>,
}

fn video_id(v: usize) -> String {
    format!("v{v:03}")
}

fn feature_file(v: usize) -> String {
    format!("{FEATURES_DIR}/{}.dvtf", video_id(v))
}

fn concept_word(c: usize, k: usize) -> String {
    format!("c{c}w{k}")
}

fn gaussian<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Prototypes far enough apart that noise cannot confuse them.
fn draw_prototypes<R: Rng>(spec: &SynthSpec, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let min_dist = 0.5 * (spec.d_c as f64).sqrt();
    let mut closest = f64::INFINITY;
    for _ in 0..MAX_RETRIES {
        let protos: Vec<Vec<f64>> = (0..spec.n_concepts).map(|_| gaussian(spec.d_c, rng)).collect();
        closest = f64::INFINITY;
        for a in 0..protos.len() {
            for b in a + 1..protos.len() {
                let d: f64 = protos[a]
                    .iter()
                    .zip(&protos[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                closest = closest.min(d);
            }
        }
        if closest >= min_dist {
            return Ok(protos);
        }
        log::debug!("prototype draw rejected, closest pair {closest:.3} < {min_dist:.3}");
    }
    Err(Error::Data(format!(
        "could not draw {} prototypes of width {} at least {min_dist:.3} apart in {MAX_RETRIES} tries (last closest {closest:.3})",
        spec.n_concepts, spec.d_c
    )))
}

/// Segment `k` of `n` over `clips` clips, as a half-open range.
fn segment(clips: usize, n: usize, k: usize) -> (usize, usize) {
    (k * clips / n, (k + 1) * clips / n)
}

fn perturb<R: Rng>(gt: &[usize], seg: (usize, usize), clips: usize, rng: &mut R) -> ThumbnailAnnotation {
    let free: Vec<usize> = (seg.0..seg.1).filter(|c| !gt.contains(c)).collect();
    let can_drop = gt.len() >= 2;
    let can_swap = !free.is_empty();
    let mut sel = gt.to_vec();
    let i = rng.random_range(0..sel.len());
    match (can_drop, can_swap) {
        (false, false) => {}
        (true, false) => {
            sel.remove(i);
        }
        (false, true) => sel[i] = free[rng.random_range(0..free.len())],
        (true, true) => {
            if rng.random::<bool>() {
                sel.remove(i);
            } else {
                sel[i] = free[rng.random_range(0..free.len())];
            }
        }
    }
    ThumbnailAnnotation::new(sel, clips).expect("perturbed clips stay in range")
}

/// Ground truth plus three perturbations in shuffled order, retried
/// until the ground truth is the most consistent of the four.
fn annotate<R: Rng>(gt: &ThumbnailAnnotation, seg: (usize, usize), rng: &mut R) -> Result<Vec<ThumbnailAnnotation>> {
    for _ in 0..MAX_RETRIES {
        let mut anns = vec![gt.clone()];
        for _ in 1..ANNOTATIONS_PER_PAIR {
            anns.push(perturb(gt.selected(), seg, gt.clips(), rng));
        }
        anns.shuffle(rng);
        if select_consistent_gt(&anns)? == *gt {
            return Ok(anns);
        }
    }
    Err(Error::Data(format!(
        "ground truth {gt} never came out most consistent in {MAX_RETRIES} tries"
    )))
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prototypes = draw_prototypes(spec, &mut rng)?;

    let mut embeddings = EmbeddingTable::new(spec.d_w);
    for c in 0..spec.n_concepts {
        for k in 0..spec.words_per_concept {
            embeddings.insert(&concept_word(c, k), gaussian(spec.d_w, &mut rng))?;
        }
    }

    let clips = spec.clips_per_video;
    let n_seg = spec.sentences_per_video;
    let mut clip_concepts = Vec::with_capacity(spec.n_videos);
    let mut videos = Vec::with_capacity(spec.n_videos);
    let mut pairs = Vec::new();
    for v in 0..spec.n_videos {
        let mut concepts: Vec<usize> = (0..spec.n_concepts).collect();
        concepts.shuffle(&mut rng);
        concepts.truncate(n_seg);

        let mut per_clip = Vec::with_capacity(clips);
        let mut data = Vec::with_capacity(clips * spec.d_c);
        for k in 0..n_seg {
            let (lo, hi) = segment(clips, n_seg, k);
            for _ in lo..hi {
                per_clip.push(concepts[k]);
                for x in &prototypes[concepts[k]] {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    // stored as f32 on disk, so keep memory identical
                    data.push((x + spec.noise_sigma * noise) as f32 as f64);
                }
            }
        }
        videos.push(VideoClipFeatures::new(Tensor::new(vec![1, clips, spec.d_c], data)?)?);
        clip_concepts.push(per_clip);

        for (k, &concept) in concepts.iter().enumerate() {
            let seg = segment(clips, n_seg, k);
            let len = (seg.1 - seg.0).min(spec.max_thumb_clips);
            let start = seg.0 + (seg.1 - seg.0 - len) / 2;
            let ground_truth = ThumbnailAnnotation::new((start..start + len).collect(), clips)?;
            let annotations = annotate(&ground_truth, seg, &mut rng)
                .map_err(|e| Error::Data(format!("video {}: {e}", video_id(v))))?;
            pairs.push(SynthPair {
                video: v,
                concept,
                words: (0..spec.words_per_concept).map(|w| concept_word(concept, w)).collect(),
                ground_truth,
                annotations,
            });
        }
    }

    Ok(SynthDataset {
        spec: spec.clone(),
        prototypes,
        clip_concepts,
        videos,
        embeddings,
        pairs,
    })
}

impl SynthDataset {
    pub fn manifest(&self) -> DatasetManifest {
        let mut m = DatasetManifest::new(self.spec.d_c, self.spec.d_w);
        m.pairs = self
            .pairs
            .iter()
            .map(|p| ManifestPair {
                video_id: video_id(p.video),
                feature_file: feature_file(p.video),
                sentence: p.words.clone(),
                annotations: p.annotations.iter().map(|a| a.selected().to_vec()).collect(),
            })
            .collect();
        m
    }

    /// The dataset as in-memory pairs, identical to loading the written files.
    pub fn labeled_pairs(&self) -> Result<Vec<LabeledPair>> {
        self.pairs
            .iter()
            .map(|p| {
                Ok(LabeledPair {
                    video_id: video_id(p.video),
                    video: self.videos[p.video].clone(),
                    sentence: self.embeddings.sentence(&p.words)?,
                    words: p.words.clone(),
                    annotations: p.annotations.clone(),
                })
            })
            .collect()
    }

    /// Writes the manifest, embeddings and feature files under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (v, video) in self.videos.iter().enumerate() {
            write_features(&dir.join(feature_file(v)), video)?;
        }
        write_embeddings(&dir.join(EMBEDDINGS_FILE), &self.embeddings)?;
        save_manifest(&dir.join(MANIFEST_FILE), &self.manifest())
    }
}

/// Best mean F1 any sentence-blind predictor can reach against each pair's
/// training target: one labeling per video, shared by all its sentences.
///
/// Clips outside the union of a video's targets can only lower F1, so the
/// search runs over subsets of that union. Unions above 20 clips are
/// rejected.
pub fn sentence_blind_ceiling(pairs: &[LabeledPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Validation("no pairs".into()));
    }
    let mut by_video: BTreeMap<&str, Vec<ThumbnailAnnotation>> = BTreeMap::new();
    for p in pairs {
        by_video
            .entry(&p.video_id)
            .or_default()
            .push(select_consistent_gt(&p.annotations)?);
    }
    let mut total = 0.0;
    for (id, targets) in &by_video {
        let union: Vec<usize> = crate::metrics::union_of(targets).into_iter().collect();
        if union.len() > 20 {
            return Err(Error::Validation(format!(
                "video `{id}`: union of {} clips too large for exhaustive search",
                union.len()
            )));
        }
        let clips = targets[0].clips();
        let mut best = 0.0f64;
        for mask in 1u32..(1 << union.len()) {
            let sel: Vec<usize> = (0..union.len())
                .filter(|&b| mask & (1 << b) != 0)
                .map(|b| union[b])
                .collect();
            let labeling = ThumbnailAnnotation::new(sel, clips)?;
            let mut sum = 0.0;
            for t in targets {
                sum += f1_score(&labeling, t)?;
            }
            best = best.max(sum);
        }
        total += best;
    }
    Ok(total / pairs.len() as f64)
}
