mod common;

use std::fs;
use std::path::Path;

use dvtg_core::io::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_dataset, load_embeddings, load_features, load_manifest,
    parse_embeddings, save_checkpoint, save_manifest, write_embeddings, write_features, Checkpoint, DatasetManifest,
    EmbeddingTable, ManifestPair,
};
use dvtg_core::optim::{AdamConfig, AdamState};
use dvtg_core::{ArchConfig, Error, Model, Tensor, Variant, VariantConfig, VideoClipFeatures};
use rand::Rng;

use common::rng;

fn f32_video(clips: usize, dim: usize, seed: u64) -> VideoClipFeatures {
    let mut r = rng(seed);
    let data = (0..clips * dim)
        .map(|_| r.random_range(-10.0f32..10.0) as f64)
        .collect();
    VideoClipFeatures::new(Tensor::new(vec![1, clips, dim], data).unwrap()).unwrap()
}

#[test]
fn features_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for (i, (clips, dim)) in [(1, 1), (7, 3), (100, 16)].into_iter().enumerate() {
        let path = dir.path().join(format!("nested/v{i}.dvtf"));
        let v = f32_video(clips, dim, i as u64);
        write_features(&path, &v).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len() as usize, 16 + 4 * clips * dim);
        let back = load_features(&path).unwrap();
        assert_eq!(back.tensor().shape(), &[1, clips, dim]);
        assert_eq!(back.tensor().to_bits(), v.tensor().to_bits());
    }
}

#[test]
fn features_file_errors_carry_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.dvtf");
    write_features(&path, &f32_video(2, 3, 0)).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 2);
    fs::write(&path, &bytes).unwrap();
    let msg = load_features(&path).unwrap_err().to_string();
    assert!(msg.contains("40") && msg.contains("38"), "{msg}");

    let err = load_features(&dir.path().join("missing.dvtf")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

fn table(words: &[&str], dim: usize, seed: u64) -> EmbeddingTable {
    let mut r = rng(seed);
    let mut t = EmbeddingTable::new(dim);
    for w in words {
        t.insert(w, (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
            .unwrap();
    }
    t
}

#[test]
fn embeddings_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.txt");
    let t = table(&["cat", "dog", "a", "z9"], 5, 3);
    write_embeddings(&path, &t).unwrap();
    let back = load_embeddings(&path).unwrap();
    assert_eq!(back.words(), t.words());
    for w in t.words() {
        let (a, b) = (t.get(w).unwrap(), back.get(w).unwrap());
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(back.lookup("zzz"), vec![0.0; 5]);
}

#[test]
fn embeddings_reject_ragged_lines() {
    let err = parse_embeddings("a 1 2 3\nb 4 5\n", Path::new("e.txt")).unwrap_err();
    assert!(matches!(err, Error::TextFormat { line: 2, .. }), "{err}");
    let err = parse_embeddings("a 1 x\n", Path::new("e.txt")).unwrap_err();
    assert!(matches!(err, Error::TextFormat { line: 1, .. }), "{err}");
}

fn write_minimal(dir: &Path, annotations: Vec<Vec<usize>>) -> std::path::PathBuf {
    write_features(&dir.join("features/v0.dvtf"), &f32_video(6, 4, 1)).unwrap();
    let mut m = DatasetManifest::new(4, 3);
    m.pairs.push(ManifestPair {
        video_id: "v0".into(),
        feature_file: "features/v0.dvtf".into(),
        sentence: vec!["red".into(), "ball".into()],
        annotations,
    });
    let path = dir.join("manifest.json");
    save_manifest(&path, &m).unwrap();
    path
}

#[test]
fn minimal_manifest_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_minimal(dir.path(), vec![vec![0, 1], vec![1], vec![1, 2], vec![5]]);
    let m = load_manifest(&path).unwrap();
    assert_eq!(m.pairs.len(), 1);
    assert_eq!((m.d_c, m.d_w), (4, 3));

    let pairs = load_dataset(&path, &table(&["red", "ball"], 3, 0)).unwrap();
    assert_eq!(pairs[0].video.num_clips(), 6);
    assert_eq!(pairs[0].sentence.num_words(), 2);
    assert_eq!(pairs[0].annotations[3].selected(), &[5]);
}

#[test]
fn manifest_rejects_out_of_range_annotation() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_minimal(dir.path(), vec![vec![0], vec![1], vec![6], vec![2]]);
    let err = load_manifest(&path).unwrap_err();
    let msg = err.to_string();
    assert!(
        matches!(err, Error::Validation(_)) && msg.contains("v0") && msg.contains('6'),
        "{msg}"
    );
}

#[test]
fn manifest_rejects_wrong_annotation_count_and_width() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_minimal(dir.path(), vec![vec![0], vec![1], vec![2]]);
    assert!(matches!(load_manifest(&path), Err(Error::Validation(_))));

    let path = write_minimal(dir.path(), vec![vec![0], vec![1], vec![2], vec![3]]);
    let mut m = load_manifest(&path).unwrap();
    m.d_c = 5;
    save_manifest(&path, &m).unwrap();
    let msg = load_manifest(&path).unwrap_err().to_string();
    assert!(msg.contains("v0"), "{msg}");

    m.d_c = 4;
    save_manifest(&path, &m).unwrap();
    let err = load_dataset(&path, &table(&["red"], 7, 0)).unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
}

fn trained_checkpoint() -> Checkpoint {
    let model = Model::init(ArchConfig::tiny(), VariantConfig::new(Variant::GuidedDvtg), 6, 8, 21).unwrap();
    let mut adam = AdamState::new(AdamConfig::default(), &model.params);
    let mut params = model.params.clone();
    let grads = params
        .iter()
        .map(|(k, v)| (k.to_string(), Tensor::full(v.shape(), 0.1)))
        .collect();
    adam.step(&mut params, &grads).unwrap();
    Checkpoint {
        model: Model { params, ..model },
        seed: 21,
        adam: Some(adam),
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt/model.dvtc");
    let ckpt = trained_checkpoint();
    save_checkpoint(&path, &ckpt).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    for ((na, a), (nb, b)) in ckpt.model.params.iter().zip(back.model.params.iter()) {
        assert_eq!(na, nb);
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let video = f32_video(37, 6, 5);
    let sentence = dvtg_core::SentenceTokens::new(Tensor::uniform(&[8, 3], 1.0, &mut rng(6))).unwrap();
    let a = ckpt.model.scores(&video, Some(&sentence)).unwrap();
    let b = back.model.scores(&video, Some(&sentence)).unwrap();
    assert_eq!(a.tensor().to_bits(), b.tensor().to_bits());

    let bare = Checkpoint { adam: None, ..ckpt };
    assert_eq!(
        decode_checkpoint(&encode_checkpoint(&bare).unwrap(), &path).unwrap(),
        bare
    );
}

#[test]
fn checkpoint_corruption_is_rejected() {
    let path = Path::new("m.dvtc");
    let bytes = encode_checkpoint(&trained_checkpoint()).unwrap();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        decode_checkpoint(&bad, path),
        Err(Error::Format { offset: 0, .. })
    ));

    let cut = &bytes[..bytes.len() - 3];
    assert!(matches!(decode_checkpoint(cut, path), Err(Error::Format { .. })));

    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(decode_checkpoint(&long, path), Err(Error::Format { .. })));

    let mut nan = bytes.clone();
    let n = nan.len();
    nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(decode_checkpoint(&nan, path).is_err());

    let at = bytes.windows(7).position(|w| w == b"senc.wh").unwrap();
    let mut renamed = bytes.clone();
    renamed[at..at + 7].copy_from_slice(b"senc.wq");
    let msg = decode_checkpoint(&renamed, path).unwrap_err().to_string();
    assert!(msg.contains("senc.wq") || msg.contains("senc.wh"), "{msg}");
}
