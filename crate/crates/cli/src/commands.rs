use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dvtg_core::io::{
    load_checkpoint, load_dataset, load_embeddings, load_features, load_manifest, save_checkpoint, Checkpoint,
};
use dvtg_core::metrics::{predict_thumbnail, select_consistent_gt};
use dvtg_core::synth::{generate_synthetic, sentence_blind_ceiling, SynthSpec};
use dvtg_core::train::history_csv;
use dvtg_core::{
    evaluate, train as run_training, AdamConfig, Aggregation, ArchConfig, Error, EvalResult, LabeledPair, Model,
    Result, TrainConfig, VariantConfig,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{AggArg, EvalArgs, InspectArgs, PredictArgs, SynthArgs, TrainArgs};

pub const CHECKPOINT_FILE: &str = "checkpoint.dvtc";
pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SPLIT_FILE: &str = "split.json";
pub const EVAL_FILE: &str = "eval.json";
pub const SYNTH_SPEC_FILE: &str = "synth.json";

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text.as_bytes())
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Applies the keys of a JSON object file on top of `base`.
fn overlay<T: Serialize + for<'de> Deserialize<'de>>(base: &T, file: Option<&Path>) -> Result<T> {
    let Some(path) = file else {
        return serde_json::from_value(serde_json::to_value(base)?).map_err(Error::from);
    };
    let mut merged = serde_json::to_value(base)?;
    match (read_json(path)?, merged.as_object_mut()) {
        (Value::Object(over), Some(target)) => {
            target.extend(over);
        }
        _ => return Err(Error::Validation(format!("{}: expected a JSON object", path.display()))),
    }
    serde_json::from_value(merged).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

pub fn synth_data(args: SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = overlay(&SynthSpec::default(), args.config.as_deref())?;
    spec.seed = args.seed;
    if let Some(v) = args.videos {
        spec.n_videos = v;
    }
    if let Some(c) = args.clips {
        spec.clips_per_video = c;
    }
    let data = generate_synthetic(&spec)?;
    data.write(&args.out)?;
    write_json(&args.out.join(SYNTH_SPEC_FILE), &spec)?;
    let pairs = data.labeled_pairs()?;
    println!("seed {}", spec.seed);
    println!(
        "wrote {} pairs over {} videos to {}",
        pairs.len(),
        spec.n_videos,
        args.out.display()
    );
    match sentence_blind_ceiling(&pairs) {
        Ok(c) => println!("sentence-blind F1 ceiling {c:.4}"),
        Err(e) => log::info!("ceiling not computed: {e}"),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    /// 70/15/15 over videos, so no video is in two subsets.
    pub fn new(pairs: &[LabeledPair], seed: u64) -> Self {
        let ids: BTreeSet<&str> = pairs.iter().map(|p| p.video_id.as_str()).collect();
        let mut ids: Vec<String> = ids.into_iter().map(String::from).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = ids.len();
        let n_train = ((0.7 * n as f64).round() as usize).clamp(1.min(n), n);
        let n_val = ((0.15 * n as f64).round() as usize).min(n - n_train);
        let test = ids.split_off(n_train + n_val);
        let val = ids.split_off(n_train);
        Self {
            seed,
            train: ids,
            val,
            test,
        }
    }

    pub fn subset(&self, name: &str) -> Result<&[String]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::Usage(format!("unknown subset `{other}`"))),
        }
    }
}

fn select(pairs: &[LabeledPair], ids: &[String]) -> Vec<LabeledPair> {
    pairs.iter().filter(|p| ids.contains(&p.video_id)).cloned().collect()
}

fn load_pairs(manifest: &Path, embeddings: &Path) -> Result<Vec<LabeledPair>> {
    let table = load_embeddings(embeddings)?;
    let pairs = load_dataset(manifest, &table)?;
    if pairs.is_empty() {
        return Err(Error::Validation(format!(
            "{}: manifest has no pairs",
            manifest.display()
        )));
    }
    Ok(pairs)
}

fn aggregations(agg: AggArg) -> Vec<Aggregation> {
    match agg {
        AggArg::Mean => vec![Aggregation::Mean],
        AggArg::Max => vec![Aggregation::Max],
        AggArg::Consistent => vec![Aggregation::Consistent],
        AggArg::Both => vec![Aggregation::Mean, Aggregation::Max],
    }
}

fn metrics_json(results: &[EvalResult]) -> Value {
    results
        .iter()
        .map(|r| (r.aggregation.to_string(), json!({ "f1": r.f1, "iou": r.iou })))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

pub fn train(args: TrainArgs) -> Result<()> {
    let pairs = load_pairs(&args.data.manifest, &args.data.embeddings)?;
    let arch: ArchConfig = overlay(&ArchConfig::default(), args.config.as_deref())?;
    arch.validate()?;
    let variant = match args.modulation {
        Some(m) => VariantConfig::with_mode(args.variant, m.into())?,
        None => VariantConfig::new(args.variant),
    };
    if !(args.lr > 0.0 && args.lr.is_finite()) {
        return Err(Error::Usage(format!("learning rate must be positive, got {}", args.lr)));
    }
    let (d_c, d_w) = (pairs[0].video.dim(), pairs[0].sentence.dim());
    eprintln!("seed {}", args.seed);

    let split = Split::new(&pairs, args.seed);
    let train_set = select(&pairs, &split.train);
    let val_set = select(&pairs, &split.val);
    write_json(&args.out.join(SPLIT_FILE), &split)?;

    let model = Model::init(arch, variant, d_c, d_w, args.seed)?;
    let aggs = aggregations(args.agg);
    let cfg = TrainConfig {
        adam: AdamConfig {
            lr: args.lr,
            ..AdamConfig::default()
        },
        epochs: args.epochs,
        seed: args.seed,
        eval_every: args.eval_every,
        aux_weight: args.aux_weight,
        rule: args.infer,
        val_aggregation: aggs[0],
    };
    log::info!(
        "training {} on {} pairs ({} validation), {} parameters",
        variant.variant,
        train_set.len(),
        val_set.len(),
        model.num_scalars()
    );
    let start = Instant::now();
    let outcome = run_training(model, &train_set, &val_set, &cfg)?;
    log::info!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let train_eval = evaluate(&outcome.model, &train_set, Aggregation::Consistent, args.infer)?;
    let val_eval = if val_set.is_empty() {
        Vec::new()
    } else {
        aggs.iter()
            .map(|&a| evaluate(&outcome.model, &val_set, a, args.infer))
            .collect::<Result<Vec<_>>>()?
    };

    let ckpt = Checkpoint {
        model: outcome.model,
        seed: args.seed,
        adam: Some(outcome.adam),
    };
    save_checkpoint(&args.out.join(CHECKPOINT_FILE), &ckpt)?;
    write(&args.out.join(HISTORY_FILE), history_csv(&outcome.history).as_bytes())?;
    let last = outcome.history.last();
    let summary = json!({
        "variant": variant.variant,
        "modulation": variant.modulation,
        "seed": args.seed,
        "epochs": args.epochs,
        "lr": args.lr,
        "aux_weight": args.aux_weight,
        "rule": args.infer.to_string(),
        "parameters": ckpt.model.num_scalars(),
        "pairs": { "train": train_set.len(), "val": val_set.len() },
        "final_loss": last.map(|r| r.loss),
        "train": { "f1": train_eval.f1, "iou": train_eval.iou },
        "val": metrics_json(&val_eval),
    });
    write_json(&args.out.join(SUMMARY_FILE), &summary)?;
    println!("train F1 {:.4} IoU {:.4}", train_eval.f1, train_eval.iou);
    for r in &val_eval {
        println!("val ({}) F1 {:.4} IoU {:.4}", r.aggregation, r.f1, r.iou);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn check_widths(model: &Model, pairs: &[LabeledPair]) -> Result<()> {
    let (d_c, d_w) = (pairs[0].video.dim(), pairs[0].sentence.dim());
    if (d_c, d_w) != (model.d_c, model.d_w) {
        return Err(Error::Validation(format!(
            "checkpoint expects d_c {} and d_w {}, data has {d_c} and {d_w}",
            model.d_c, model.d_w
        )));
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    if let Some(v) = args.variant {
        if v != ckpt.model.variant.variant {
            return Err(Error::Usage(format!(
                "checkpoint holds {}, not {v}",
                ckpt.model.variant.variant
            )));
        }
    }
    let mut pairs = load_pairs(&args.data.manifest, &args.data.embeddings)?;
    check_widths(&ckpt.model, &pairs)?;
    if let (Some(path), Some(name)) = (&args.split, &args.subset) {
        let split: Split = serde_json::from_value(read_json(path)?)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        pairs = select(&pairs, split.subset(name)?);
        if pairs.is_empty() {
            return Err(Error::Validation(format!("subset `{name}` has no pairs")));
        }
    }
    let results = aggregations(args.agg)
        .into_iter()
        .map(|a| evaluate(&ckpt.model, &pairs, a, args.infer))
        .collect::<Result<Vec<_>>>()?;
    for r in &results {
        println!(
            "{} ({}, {} pairs): F1 {:.4} IoU {:.4}",
            r.aggregation,
            r.rule,
            r.pairs.len(),
            r.f1,
            r.iou
        );
    }
    if let Some(out) = &args.out {
        let report = json!({
            "variant": ckpt.model.variant.variant,
            "rule": args.infer.to_string(),
            "results": results,
        });
        write_json(&out.join(EVAL_FILE), &report)?;
    }
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let words: Vec<&str> = args.sentence.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::Usage("sentence has no words".into()));
    }
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let table = load_embeddings(&args.data.embeddings)?;
    let manifest = load_manifest(&args.data.manifest)?;
    let base = args.data.manifest.parent().unwrap_or(Path::new(""));
    let entry = manifest
        .pairs
        .iter()
        .find(|p| p.video_id == args.video)
        .ok_or_else(|| Error::Validation(format!("unknown video `{}`", args.video)))?;
    let video = load_features(&base.join(&entry.feature_file))?;
    let sentence = table.sentence(&words)?;
    if (video.dim(), sentence.dim()) != (ckpt.model.d_c, ckpt.model.d_w) {
        return Err(Error::Validation(format!(
            "checkpoint expects d_c {} and d_w {}, data has {} and {}",
            ckpt.model.d_c,
            ckpt.model.d_w,
            video.dim(),
            sentence.dim()
        )));
    }
    let scores = ckpt.model.scores(&video, Some(&sentence))?;
    let pred = predict_thumbnail(&scores, args.infer);

    let ground_truth = manifest
        .pairs
        .iter()
        .find(|p| p.video_id == args.video && p.sentence.iter().map(String::as_str).eq(words.iter().copied()))
        .map(|p| {
            let anns = p
                .annotations
                .iter()
                .map(|a| dvtg_core::ThumbnailAnnotation::new(a.clone(), video.num_clips()))
                .collect::<Result<Vec<_>>>()?;
            select_consistent_gt(&anns)
        })
        .transpose()?;

    println!("video {} ({} clips)", args.video, video.num_clips());
    println!("selected {:?}", pred.selected());
    if let Some(gt) = &ground_truth {
        println!("ground truth {:?}", gt.selected());
    }
    for (c, p) in scores.thumbnail_probs().iter().enumerate() {
        println!("{c}\t{p:.6}");
    }
    if let Some(out) = &args.out {
        let path: PathBuf = out.join(format!("{}.svg", args.video));
        let svg = crate::svg::timeline(
            video.num_clips(),
            pred.selected(),
            ground_truth.as_ref().map(|g| g.selected()),
        );
        write(&path, svg.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    if let Some(path) = &args.checkpoint {
        let ckpt = load_checkpoint(path)?;
        let m = &ckpt.model;
        println!("variant {}", m.variant.variant);
        println!("modulation {:?}", m.variant.modulation);
        println!("d_c {} d_w {}", m.d_c, m.d_w);
        println!("seed {}", ckpt.seed);
        match &ckpt.adam {
            Some(a) => println!("optimizer step {} lr {}", a.step, a.config.lr),
            None => println!("optimizer state absent"),
        }
        println!("architecture {}", serde_json::to_string(&m.arch)?);
        for (name, t) in m.params.iter() {
            println!("  {name} {:?}", t.shape());
        }
        println!("{} tensors, {} parameters", m.params.len(), m.num_scalars());
    }
    if let Some(path) = &args.manifest {
        let m = load_manifest(path)?;
        let videos: BTreeSet<&str> = m.pairs.iter().map(|p| p.video_id.as_str()).collect();
        let vocab: BTreeSet<&str> = m
            .pairs
            .iter()
            .flat_map(|p| p.sentence.iter().map(String::as_str))
            .collect();
        println!("manifest version {}", m.version);
        println!("d_c {} d_w {}", m.d_c, m.d_w);
        println!(
            "{} pairs, {} videos, {} distinct words",
            m.pairs.len(),
            videos.len(),
            vocab.len()
        );
    }
    Ok(())
}
