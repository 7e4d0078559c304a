use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dvtg_core::ArchConfig;
use serde_json::Value;
use tempfile::TempDir;

fn dvtg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dvtg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    /// Small synthetic dataset plus a tiny architecture file.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let synth = dir.path().join("synth.json");
        std::fs::write(&synth, r#"{"d_w": 16}"#).unwrap();
        let arch = dir.path().join("arch.json");
        std::fs::write(&arch, serde_json::to_string(&ArchConfig::tiny()).unwrap()).unwrap();
        let data = dir.path().join("data");
        let out = dvtg(&[
            "synth-data",
            "--out",
            s(&data),
            "--videos",
            "8",
            "--seed",
            "3",
            "--config",
            s(&synth),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn data_args(&self) -> Vec<String> {
        vec![
            "--manifest".into(),
            self.path("data/manifest.json").to_str().unwrap().into(),
            "--embeddings".into(),
            self.path("data/embeddings.txt").to_str().unwrap().into(),
        ]
    }

    fn run(&self, cmd: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec![cmd.into()];
        args.extend(self.data_args());
        args.extend(extra.iter().map(|a| a.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        dvtg(&refs)
    }

    fn train(&self, out: &str, epochs: &str) -> Output {
        let arch = self.path("arch.json");
        let out = self.path(out);
        self.run(
            "train",
            &[
                "--out",
                s(&out),
                "--epochs",
                epochs,
                "--config",
                s(&arch),
                "--eval-every",
                "2",
                "--seed",
                "5",
            ],
        )
    }

    fn first_pair(&self) -> (String, String) {
        let text = std::fs::read_to_string(self.path("data/manifest.json")).unwrap();
        let m: Value = serde_json::from_str(&text).unwrap();
        let p = &m["pairs"][0];
        let words: Vec<&str> = p["sentence"]
            .as_array()
            .unwrap()
            .iter()
            .map(|w| w.as_str().unwrap())
            .collect();
        (p["video_id"].as_str().unwrap().to_string(), words.join(" "))
    }
}

#[test]
fn train_writes_artifacts_deterministically() {
    let ws = Workspace::new();
    for run in ["a", "b"] {
        let out = ws.train(run, "4");
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        for file in ["checkpoint.dvtc", "history.csv", "summary.json", "split.json"] {
            assert!(ws.path(run).join(file).is_file(), "{run}/{file}");
        }
    }
    for file in ["checkpoint.dvtc", "history.csv", "summary.json", "split.json"] {
        let a = std::fs::read(ws.path("a").join(file)).unwrap();
        let b = std::fs::read(ws.path("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let history = std::fs::read_to_string(ws.path("a/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 4);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(ws.path("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 5);
    assert_eq!(summary["variant"], "guided_dvtg");

    let split: Value = serde_json::from_str(&std::fs::read_to_string(ws.path("a/split.json")).unwrap()).unwrap();
    let sizes: Vec<usize> = ["train", "val", "test"]
        .iter()
        .map(|k| split[k].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes.iter().sum::<usize>(), 8);
    assert!(sizes[0] >= 5, "{sizes:?}");
}

#[test]
fn zero_epochs_saves_the_initial_model() {
    let ws = Workspace::new();
    let out = ws.train("zero", "0");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(ws.path("zero/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1);
    let out = dvtg(&["inspect", "--checkpoint", s(&ws.path("zero/checkpoint.dvtc"))]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("optimizer step 0"));
}

#[test]
fn eval_reports_both_aggregations() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.train("run", "2")), 0);
    let ckpt = ws.path("run/checkpoint.dvtc");
    let split = ws.path("run/split.json");
    let out_dir = ws.path("eval");
    let out = ws.run(
        "eval",
        &[
            "--checkpoint",
            s(&ckpt),
            "--agg",
            "both",
            "--out",
            s(&out_dir),
            "--split",
            s(&split),
            "--subset",
            "train",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("eval.json")).unwrap()).unwrap();
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["aggregation"], "mean");
    assert_eq!(results[1]["aggregation"], "max");
    let (mean, max) = (results[0]["f1"].as_f64().unwrap(), results[1]["f1"].as_f64().unwrap());
    assert!(max >= mean, "max {max} < mean {mean}");

    let wrong = ws.run("eval", &["--checkpoint", s(&ckpt), "--variant", "fcsn"]);
    assert_eq!(code(&wrong), 1);
}

#[test]
fn predict_draws_one_cell_per_clip() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.train("run", "1")), 0);
    let ckpt = ws.path("run/checkpoint.dvtc");
    let (video, sentence) = ws.first_pair();
    let svg_dir = ws.path("svg");
    let out = ws.run(
        "predict",
        &[
            "--checkpoint",
            s(&ckpt),
            "--video",
            &video,
            "--sentence",
            &sentence,
            "--out",
            s(&svg_dir),
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ground truth"), "{stdout}");
    let svg = std::fs::read_to_string(svg_dir.join(format!("{video}.svg"))).unwrap();
    assert_eq!(svg.matches(r#"class="clip""#).count(), 32);
    assert!(svg.contains(r#"class="gt""#));

    // unknown words fall back to zero vectors with a warning
    let oov = ws.run(
        "predict",
        &["--checkpoint", s(&ckpt), "--video", &video, "--sentence", "zzz qqq"],
    );
    assert_eq!(code(&oov), 0);
    assert!(String::from_utf8_lossy(&oov.stderr).contains("out-of-vocabulary"));

    let missing = ws.run(
        "predict",
        &["--checkpoint", s(&ckpt), "--video", "nope", "--sentence", "a"],
    );
    assert_eq!(code(&missing), 2);
    let blank = ws.run(
        "predict",
        &["--checkpoint", s(&ckpt), "--video", &video, "--sentence", " "],
    );
    assert_eq!(code(&blank), 1);
}

#[test]
fn bad_input_exit_codes() {
    let ws = Workspace::new();
    let empty = ws.path("empty.json");
    std::fs::write(&empty, r#"{"version": 1, "d_c": 16, "d_w": 16, "pairs": []}"#).unwrap();
    let emb = ws.path("data/embeddings.txt");
    let out_dir = ws.path("x");
    let out = dvtg(&[
        "train",
        "--manifest",
        s(&empty),
        "--embeddings",
        s(&emb),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    let bad_arch = ws.path("bad.json");
    std::fs::write(&bad_arch, r#"{"no_such_field": 1}"#).unwrap();
    let out = ws.run("train", &["--out", s(&out_dir), "--config", s(&bad_arch)]);
    assert_eq!(code(&out), 2);

    let out = ws.run("train", &["--out", s(&out_dir), "--lr", "-1"]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&dvtg(&["train", "--bogus"])), 1);
    assert_eq!(code(&dvtg(&["--help"])), 0);
    assert_eq!(code(&dvtg(&["inspect"])), 1);
}

#[test]
fn inspect_describes_a_manifest() {
    let ws = Workspace::new();
    let out = dvtg(&["inspect", "--manifest", s(&ws.path("data/manifest.json"))]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("8 videos"), "{text}");
    assert!(text.contains("d_w 16"), "{text}");
}
