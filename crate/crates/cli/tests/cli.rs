//! Drives the `acsr` binary through the full pipeline on a small synthetic
//! dataset and checks outputs, exit codes, and the external-scorer protocol.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn acsr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acsr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn acsr")
}

fn assert_ok(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_synth_config(dir: &Path) -> PathBuf {
    let config = serde_json::json!({
        "num_phones": 6,
        "train_utterances": 14,
        "test_utterances": 4,
        "lexicon_words": 8,
        "words_per_utterance": [2, 3],
        "frames_per_phone_mean": 7.0,
        "frames_per_phone_jitter": 1.0,
        "anticipation_mean": 3.0,
        "anticipation_jitter": 1.0,
        "noise_sigma": 0.05,
        "rate": 60.0,
        "seed": 11,
    });
    let path = dir.join("synth.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

#[test]
fn full_pipeline_files_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_synth_config(root);

    assert_ok(
        &acsr(root, &["synth", "--config", "synth.json", "--out-dir", "data"]),
        "synth",
    );
    for file in [
        "data/manifest.json",
        "data/inventory.txt",
        "data/lexicon.txt",
        "data/lm.arpa",
        "data/rescore.arpa",
        "data/summary.synth.json",
        "data/landmarks/train_000.jsonl",
        "data/streams/test_000.json",
        "data/annotations/test_000.tsv",
    ] {
        assert!(root.join(file).exists(), "missing {file}");
    }

    assert_ok(
        &acsr(root, &["featurize", "--manifest", "data/manifest.json", "--out-dir", "features"]),
        "featurize",
    );
    assert!(root.join("features/pipeline.json").exists());
    assert!(root.join("features/train_000.json").exists());

    assert_ok(
        &acsr(
            root,
            &[
                "train", "--manifest", "data/manifest.json", "--streams", "data/streams",
                "--inventory", "data/inventory.txt", "--out", "run/model.json",
                "--epochs", "150", "--batch-size", "2", "--hidden", "6", "--d-k", "4",
                "--learning-rate", "0.01", "--seed", "3",
            ],
        ),
        "train",
    );
    assert!(root.join("run/model.json").exists());
    let log = std::fs::read_to_string(root.join("run/model.log.csv")).unwrap();
    assert!(log.starts_with("epoch,mean_loss,learning_rate\n"));
    assert_eq!(log.lines().count(), 151);

    assert_ok(
        &acsr(
            root,
            &[
                "decode", "--manifest", "data/manifest.json", "--streams", "data/streams",
                "--model", "run/model.json", "--out-dir", "greedy", "--mode", "greedy",
            ],
        ),
        "decode greedy",
    );
    let decoded = std::fs::read_to_string(root.join("greedy/decoded.jsonl")).unwrap();
    assert_eq!(decoded.lines().count(), 4);
    assert!(decoded.contains("\"phones\""));

    assert_ok(
        &acsr(
            root,
            &[
                "decode", "--manifest", "data/manifest.json", "--streams", "data/streams",
                "--model", "run/model.json", "--out-dir", "beam", "--mode", "beam",
                "--lexicon", "data/lexicon.txt", "--lm", "data/lm.arpa",
                "--beam-width", "40", "--nbest", "5",
                "--rescore", "ngram", "--rescore-lm", "data/rescore.arpa",
            ],
        ),
        "decode beam",
    );
    let nbest = std::fs::read_to_string(root.join("beam/test_000.nbest.jsonl")).unwrap();
    assert!(nbest.lines().count() >= 1);
    let first: serde_json::Value = serde_json::from_str(nbest.lines().next().unwrap()).unwrap();
    assert_eq!(first["rank"], 1);
    assert!(first["beam_score"].is_f64());

    assert_ok(
        &acsr(
            root,
            &[
                "segment", "--manifest", "data/manifest.json", "--streams", "data/streams",
                "--model", "run/model.json", "--out-dir", "segments", "--svg",
            ],
        ),
        "segment",
    );
    let segment_summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root.join("segments/summary.segment.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(segment_summary["metrics"]["processed"], 4, "{segment_summary}");
    assert!(root.join("segments/test_000.segments.jsonl").exists());
    assert!(root.join("segments/test_000.onsets.json").exists());
    assert!(root.join("segments/test_000.lips.svg").exists());
    assert!(root.join("segments/test_000.lips.timeline.svg").exists());

    let eval = acsr(
        root,
        &[
            "eval", "--manifest", "data/manifest.json", "--out-dir", "eval",
            "--hyp", "beam/decoded.jsonl", "--segments", "segments",
            "--inventory", "data/inventory.txt",
        ],
    );
    assert_ok(&eval, "eval");
    let stdout = String::from_utf8_lossy(&eval.stdout);
    assert!(stdout.contains("word"), "table missing word row: {stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("eval/report.json")).unwrap())
            .unwrap();
    assert!(report["transcripts"]["word"]["acc"].is_f64());
    assert!(report["segmentation"]["lips"]["mean_tiou"].is_f64());
    assert!(report["segmentation"]["asynchrony"]["mean_hand_lead_ms"].is_f64());
}

#[test]
fn greedy_decode_matches_identity_reference_on_eval() {
    // An eval against hypotheses copied from the references scores 100.
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_synth_config(root);
    assert_ok(
        &acsr(root, &["synth", "--config", "synth.json", "--out-dir", "data"]),
        "synth",
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("data/manifest.json")).unwrap())
            .unwrap();
    let mut hyp = String::new();
    for utt in manifest["utterances"].as_array().unwrap() {
        if utt["split"] == "test" {
            hyp.push_str(
                &serde_json::json!({
                    "id": utt["id"],
                    "words": utt["words"],
                    "phones": utt["phones"],
                })
                .to_string(),
            );
            hyp.push('\n');
        }
    }
    std::fs::write(root.join("identity.jsonl"), hyp).unwrap();
    let eval = acsr(
        root,
        &[
            "eval", "--manifest", "data/manifest.json", "--out-dir", "eval",
            "--hyp", "identity.jsonl",
        ],
    );
    assert_ok(&eval, "eval");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("eval/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["transcripts"]["word"]["acc"], 100.0);
    assert_eq!(report["transcripts"]["phone"]["corr"], 100.0);
}

#[test]
fn external_scorer_protocol_round_trip() {
    // Rescoring through the stub scorer exercises the NDJSON child-process
    // protocol; with a constant per-token logprob, every candidate gets the
    // same perplexity, so rescoring must return the beam 1-best.
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_synth_config(root);
    assert_ok(
        &acsr(root, &["synth", "--config", "synth.json", "--out-dir", "data"]),
        "synth",
    );
    assert_ok(
        &acsr(
            root,
            &[
                "train", "--manifest", "data/manifest.json", "--streams", "data/streams",
                "--inventory", "data/inventory.txt", "--out", "run/model.json",
                "--epochs", "3", "--hidden", "4", "--d-k", "4", "--seed", "5",
            ],
        ),
        "train",
    );
    let stub_cmd = format!("{} stub-scorer --logprob-per-token -1.5", env!("CARGO_BIN_EXE_acsr"));
    assert_ok(
        &acsr(
            root,
            &[
                "decode", "--manifest", "data/manifest.json", "--streams", "data/streams",
                "--model", "run/model.json", "--out-dir", "ext", "--mode", "beam",
                "--lexicon", "data/lexicon.txt", "--beam-width", "30", "--nbest", "4",
                "--rescore", "external", "--scorer-cmd", &stub_cmd,
            ],
        ),
        "decode with external scorer",
    );
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root.join("ext/summary.decode.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["metrics"]["rescore_fallbacks"], 0);
    assert_eq!(summary["metrics"]["utterances"], 4);

    // Beam 1-best equals the externally rescored choice under a constant
    // scorer (ties break to the higher beam score).
    for id in ["test_000", "test_001"] {
        let nbest = std::fs::read_to_string(root.join(format!("ext/{id}.nbest.jsonl"))).unwrap();
        let first: serde_json::Value =
            serde_json::from_str(nbest.lines().next().unwrap()).unwrap();
        let decoded = std::fs::read_to_string(root.join("ext/decoded.jsonl")).unwrap();
        let line = decoded
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .find(|v| v["id"] == id)
            .unwrap();
        assert_eq!(line["words"], first["words"]);
    }
}

#[test]
fn usage_errors_exit_one_runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Unknown flag.
    let out = acsr(root, &["synth", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown subcommand.
    let out = acsr(root, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));

    // Missing manifest.
    let out = acsr(
        root,
        &["featurize", "--manifest", "missing.json", "--out-dir", "x"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    // Beam decode without a lexicon.
    write_synth_config(root);
    assert_ok(
        &acsr(root, &["synth", "--config", "synth.json", "--out-dir", "data"]),
        "synth",
    );
    assert_ok(
        &acsr(
            root,
            &[
                "train", "--manifest", "data/manifest.json", "--streams", "data/streams",
                "--inventory", "data/inventory.txt", "--out", "run/model.json",
                "--epochs", "1", "--hidden", "4", "--d-k", "4",
            ],
        ),
        "train",
    );
    let out = acsr(
        root,
        &[
            "decode", "--manifest", "data/manifest.json", "--streams", "data/streams",
            "--model", "run/model.json", "--out-dir", "d", "--mode", "beam",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lexicon"));

    // Help exits zero.
    let out = acsr(root, &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn synth_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_synth_config(root);
    assert_ok(
        &acsr(root, &["synth", "--config", "synth.json", "--out-dir", "a"]),
        "synth a",
    );
    assert_ok(
        &acsr(root, &["synth", "--config", "synth.json", "--out-dir", "b"]),
        "synth b",
    );
    for file in [
        "manifest.json",
        "lexicon.txt",
        "lm.arpa",
        "rescore.arpa",
        "summary.synth.json",
        "landmarks/train_003.jsonl",
        "streams/test_001.json",
        "annotations/train_000.tsv",
    ] {
        let a = std::fs::read(root.join("a").join(file)).unwrap();
        let b = std::fs::read(root.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }

    // A different seed changes the data.
    assert_ok(
        &acsr(
            root,
            &["synth", "--config", "synth.json", "--out-dir", "c", "--seed", "99"],
        ),
        "synth c",
    );
    let a = std::fs::read(root.join("a/streams/test_001.json")).unwrap();
    let c = std::fs::read(root.join("c/streams/test_001.json")).unwrap();
    assert_ne!(a, c);
}
