mod common;

use std::path::Path;
use std::process::Command;

use cola::data_model::{load_dataset, write_activations, SelectionResult};
use cola::pipeline::{
    compare_selections, run_pipeline, stage_seed, PipelineConfig, StageStatus, STAGE_HARNESS,
    STAGE_PROCESS, STAGE_SELECT_DATASETS, STAGE_SELECT_SAMPLES,
};
use cola::synthetic::{write_comparison_bundle, ComparisonSpec};
use cola::ColaError;
use common::{activations_for, text_config, write_config, write_text_bundle};
use serde_json::json;

fn small_spec() -> ComparisonSpec {
    ComparisonSpec {
        n_candidates: 120,
        n_eval: 48,
        n_blobs: 4,
        layer_dims: vec![16, 16],
        n_layers: 4,
        layer_rows: 8,
        k: 12,
        ..Default::default()
    }
}

fn processed_ids(dir: &Path) -> Vec<String> {
    let d = load_dataset(dir.join("out/processed.jsonl")).unwrap();
    d.samples.into_iter().map(|s| s.id).collect()
}

#[test]
fn degenerate_pipeline_selects_every_processed_sample() {
    let dir = tempfile::tempdir().unwrap();
    let pool = write_text_bundle(dir.path());
    let budget = pool.len();

    let cfg = write_config(dir.path(), &text_config(&pool, json!({ "budget": budget })));
    let manifest = run_pipeline(&PipelineConfig::load(&cfg).unwrap()).unwrap();
    assert_eq!(
        manifest.stage(STAGE_SELECT_SAMPLES).unwrap().status,
        StageStatus::Skipped
    );
    let ids = processed_ids(dir.path());
    assert!(ids.len() > 10);

    write_activations(&activations_for(&ids, 3), dir.path().join("acts.cola")).unwrap();
    let cfg = write_config(
        dir.path(),
        &text_config(
            &pool,
            json!({ "budget": budget, "activations": "acts.cola", "projection": { "reduced_dim": 4 }, "kmeans": { "k": ids.len() } }),
        ),
    );
    let manifest = run_pipeline(&PipelineConfig::load(&cfg).unwrap()).unwrap();
    assert_eq!(
        manifest.stage(STAGE_HARNESS).unwrap().status,
        StageStatus::Skipped
    );
    let sel = SelectionResult::load(dir.path().join("out/selection.json")).unwrap();
    let mut got = sel.selected_ids.clone();
    got.sort();
    let mut want = ids;
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn relocated_bundle_reproduces_the_manifest() {
    let root = tempfile::tempdir().unwrap();
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let dir = root.path().join(name);
        let pool = write_text_bundle(&dir);
        let cfg = write_config(&dir, &text_config(&pool, json!({})));
        run_pipeline(&PipelineConfig::load(&cfg).unwrap()).unwrap();
        manifests.push(std::fs::read(dir.join("out/manifest.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
}

#[test]
fn missing_activations_abort_in_stage_three_and_clean_up() {
    let dir = tempfile::tempdir().unwrap();
    let pool = write_text_bundle(dir.path());
    let cfg = write_config(
        dir.path(),
        &text_config(&pool, json!({ "activations": "missing.cola" })),
    );
    let err = run_pipeline(&PipelineConfig::load(&cfg).unwrap()).unwrap_err();
    match &err {
        ColaError::Stage { stage, .. } => assert_eq!(stage, STAGE_SELECT_SAMPLES),
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("stage3"));
    let out = dir.path().join("out");
    let leftovers: Vec<_> = std::fs::read_dir(&out).unwrap().collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn stage_seeds_are_distinct() {
    let seeds: Vec<u64> = [
        STAGE_SELECT_DATASETS,
        STAGE_PROCESS,
        STAGE_SELECT_SAMPLES,
        STAGE_HARNESS,
    ]
    .iter()
    .map(|s| stage_seed(42, s))
    .collect();
    let unique: std::collections::BTreeSet<_> = seeds.iter().collect();
    assert_eq!(unique.len(), seeds.len());
    assert_eq!(stage_seed(42, STAGE_PROCESS), stage_seed(42, STAGE_PROCESS));
}

#[test]
fn activation_only_run_reports_harness_errors() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_comparison_bundle(dir.path(), &small_spec()).unwrap();
    let manifest = run_pipeline(&PipelineConfig::load(&paths.config).unwrap()).unwrap();
    assert_eq!(
        manifest.stage(STAGE_SELECT_DATASETS).unwrap().status,
        StageStatus::Skipped
    );
    let harness = manifest.stage(STAGE_HARNESS).unwrap();
    assert_eq!(harness.status, StageStatus::Completed);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["layers"].as_array().unwrap().len(), 4);
    assert_eq!(report["calibration_size"], 12);
}

#[test]
fn comparison_reports_every_trial() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_comparison_bundle(dir.path(), &small_spec()).unwrap();
    let cfg = PipelineConfig::load(&paths.config).unwrap();
    let report = compare_selections(&cfg, 3).unwrap();
    assert_eq!(report.trials.len(), 3);
    assert_eq!(report.layers.len(), 4);
    assert!(report.trials.iter().all(|t| t.cola_errors.len() == 4));
    assert_eq!(report, compare_selections(&cfg, 3).unwrap());
    assert!(compare_selections(&cfg, 0).is_err());
}

#[test]
fn unknown_config_fields_are_rejected() {
    assert!(PipelineConfig::from_json(r#"{"seed": 1, "sede": 2}"#, ".").is_err());
    assert!(PipelineConfig::from_json(r#"{"seed": 1, "pool": ["a.jsonl"]}"#, ".").is_err());
}

fn cola() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cola"))
}

#[test]
fn cli_reports_stage_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    let pool = write_text_bundle(dir.path());
    let cfg = write_config(
        dir.path(),
        &text_config(&pool, json!({ "activations": "missing.cola" })),
    );
    let out = cola().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage3:select_samples"), "{stderr}");
}

#[test]
fn cli_subcommands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_text_bundle(d);
    std::fs::write(
        d.join("caps.json"),
        r#"[{"capability":"math","weight":1.0,"reference":"refs/math.jsonl"}]"#,
    )
    .unwrap();
    let run = |args: &[&str]| {
        let out = cola().current_dir(d).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&[
        "select-datasets",
        "--pool",
        "pool/*.jsonl",
        "--capabilities",
        "caps.json",
        "--budget",
        "2",
        "--vocab-size",
        "1024",
        "--out",
        "picks.json",
    ]);
    let picks: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("picks.json")).unwrap()).unwrap();
    assert_eq!(picks[0]["name"], "math");

    run(&[
        "process",
        "--in",
        "pool/math.jsonl",
        "--out",
        "math.processed.jsonl",
        "--target-length",
        "30",
        "--min-length",
        "8",
        "--format",
        "wrap-qa",
        "--mix",
        "0.4,0.3,0.3",
        "--count",
        "5",
        "--seed",
        "42",
        "--vocab-size",
        "1024",
    ]);
    assert_eq!(
        load_dataset(d.join("math.processed.jsonl")).unwrap().len(),
        5
    );

    let paths = write_comparison_bundle(&d.join("synth"), &small_spec()).unwrap();
    std::fs::write(
        d.join("scheme.json"),
        r#"{"kind":"reconstruct_prune","sparsity":0.5}"#,
    )
    .unwrap();
    run(&[
        "select-samples",
        "--activations",
        paths.activations.to_str().unwrap(),
        "--k",
        "6",
        "--dim",
        "8",
        "--seed",
        "1",
        "--out",
        "sel.json",
    ]);
    assert_eq!(
        SelectionResult::load(d.join("sel.json"))
            .unwrap()
            .selected_ids
            .len(),
        6
    );
    run(&[
        "harness",
        "--layers",
        paths.layers.to_str().unwrap(),
        "--acts",
        paths.activations.to_str().unwrap(),
        "--selection",
        "sel.json",
        "--scheme",
        "scheme.json",
        "--eval",
        paths.eval.to_str().unwrap(),
        "--out",
        "report.json",
    ]);
    run(&[
        "spectrum",
        "--original",
        paths.layers.to_str().unwrap(),
        "--out",
        "spectrum.json",
    ]);
    let spectra: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("spectrum.json")).unwrap()).unwrap();
    assert_eq!(spectra.as_array().unwrap().len(), 4);
}
