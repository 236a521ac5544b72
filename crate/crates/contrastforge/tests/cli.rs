mod common;

use std::path::Path;
use std::process::Command;

use contrastforge::commands::{cmd_diagnose, cmd_eval, cmd_generate, cmd_prepare, cmd_train, cmd_train_base};
use contrastforge::config::RunConfig;
use contrastforge::export::{parse_diagnostics_csv, read_metrics_json};
use contrastforge::run::RunDir;
use contrastforge::Error;

fn bin(args: &[&str], cwd: &Path) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_contrastforge")).args(args).current_dir(cwd).output().unwrap();
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn toy(dir: &Path) -> std::path::PathBuf {
    let mut tsv = String::new();
    for u in 0..4 {
        for i in 0..6 {
            if i != u {
                tsv.push_str(&format!("u{u}\ti{i}\n"));
            }
        }
    }
    tsv.push_str("u0\ti1\n");
    std::fs::write(dir.join("interactions.tsv"), tsv).unwrap();
    let attrs: String = (0..6).map(|i| format!("{{\"item_id\":\"i{i}\",\"title\":\"red cotton item {i}\"}}\n")).collect();
    std::fs::write(dir.join("attributes.jsonl"), attrs).unwrap();
    let config = dir.join("config.toml");
    std::fs::write(&config, "[data]\ninteractions = \"interactions.tsv\"\nattributes = \"attributes.jsonl\"\nk_core = 3\n").unwrap();
    config
}

#[test]
fn toy_prepare_counts_and_rerun_digest() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy(dir.path());
    let cfg = RunConfig::load(&config).unwrap();
    let run = RunDir::new(dir.path().join("run"));
    let first = cmd_prepare(&cfg, &run).unwrap();
    let s = &first.summary;
    assert_eq!((s.users, s.items, s.interactions), (4, 6, 20));
    assert_eq!(s.train + s.val + s.test, 20);
    assert_eq!((s.val, s.test), (4, 4));
    let again = cmd_prepare(&cfg, &run).unwrap();
    assert_eq!(first.entry.digest(), again.entry.digest());
    assert_eq!(run.manifest().unwrap().len(), 2);

    let (ok, stdout, _) = bin(&["prepare", "--config", "config.toml", "--run-dir", "run2"], dir.path());
    assert!(ok);
    assert!(stdout.starts_with("4 users, 6 items, 20 interactions"), "{stdout}");
}

#[test]
fn stages_refuse_to_run_out_of_order() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let (ok, _, stderr) = bin(&["eval", "--config", "config.toml"], dir.path());
    assert!(!ok);
    assert!(stderr.contains("run train-base first"), "{stderr}");
    let (ok, _, stderr) = bin(&["train", "--config", "config.toml"], dir.path());
    assert!(!ok);
    assert!(stderr.contains("first"), "{stderr}");
}

#[test]
fn missing_inputs_fail_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    std::fs::remove_file(dir.path().join("attributes.jsonl")).unwrap();
    let (ok, _, stderr) = bin(&["prepare", "--config", "config.toml"], dir.path());
    assert!(!ok);
    assert!(stderr.contains("attributes.jsonl"), "{stderr}");
    assert!(!dir.path().join("run").join("manifest.jsonl").exists());
}

#[test]
fn items_without_attributes_are_named() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let attrs: String = (0..5).map(|i| format!("{{\"item_id\":\"i{i}\"}}\n")).collect();
    std::fs::write(dir.path().join("attributes.jsonl"), attrs).unwrap();
    let (ok, _, stderr) = bin(&["prepare", "--config", "config.toml"], dir.path());
    assert!(!ok);
    assert!(stderr.contains("i5"), "{stderr}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[train]\nlamda = 0.5\n").unwrap();
    let (ok, _, stderr) = bin(&["prepare", "--config", "bad.toml"], dir.path());
    assert!(!ok);
    assert!(stderr.contains("lamda"), "{stderr}");
}

#[test]
fn concurrent_runs_are_locked_out() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy(dir.path());
    let run = RunDir::new(dir.path().join("run"));
    run.create().unwrap();
    let _held = run.lock().unwrap();
    let err = cmd_prepare(&RunConfig::load(&config).unwrap(), &run).unwrap_err();
    assert!(matches!(err, Error::Locked(_)), "{err}");
}

#[test]
fn full_stub_run() {
    let fx = common::fixture(80, 40, "");
    let cfg = RunConfig::load(&fx.config).unwrap();
    let run = RunDir::new(fx.run_dir());

    cmd_prepare(&cfg, &run).unwrap();
    let gen = cmd_generate(&cfg, &run).unwrap();
    assert_eq!(gen.items, 40);
    assert!(gen.failures.is_empty());
    assert_eq!(gen.stats.backend_calls, 0);
    let base = cmd_train_base(&cfg, &run).unwrap();
    assert!(!base.record.epochs.is_empty());
    let outcomes = cmd_train(&cfg, &run).unwrap();
    assert_eq!(outcomes.iter().map(|o| o.seed).collect::<Vec<_>>(), vec![1, 2]);
    let eval = cmd_eval(&cfg, &run).unwrap();
    assert_eq!(eval.neggen.len(), 2);
    for k in [10, 20] {
        assert!(eval.base.metrics.iter().any(|m| m.k == k));
    }
    let trace = cmd_diagnose(&cfg, &run).unwrap();
    assert!(!trace.is_empty());

    let metrics = run.metrics_dir();
    for stem in ["base", "neggen_seed1", "neggen_seed2"] {
        let report = read_metrics_json(&metrics.join(format!("{stem}.json"))).unwrap();
        assert!(report.metrics.iter().all(|m| (0.0..=1.0).contains(&m.recall) && (0.0..=1.0).contains(&m.ndcg)));
        let csv = std::fs::read_to_string(metrics.join(format!("{stem}.csv"))).unwrap();
        assert!(csv.contains("convergence_epoch"));
    }
    let csv_path = metrics.join("diagnostics.csv");
    let parsed = parse_diagnostics_csv(&std::fs::read_to_string(&csv_path).unwrap(), &csv_path).unwrap();
    assert_eq!(parsed.len(), trace.len());

    let commands: Vec<String> = run.manifest().unwrap().into_iter().map(|e| e.command).collect();
    assert_eq!(commands, ["prepare", "generate", "train-base", "train", "eval", "diagnose"]);
    assert!(!run.root().join("lock").exists());

    // Same inputs give the same generated embeddings and the same base.
    let other = RunDir::new(fx.dir.path().join("run-b"));
    cmd_prepare(&cfg, &other).unwrap();
    cmd_generate(&cfg, &other).unwrap();
    for f in ["pos.emb", "neg.emb", "attributes.enriched.jsonl", "train.tsv"] {
        assert_eq!(std::fs::read(run.dataset_dir().join(f)).unwrap(), std::fs::read(other.dataset_dir().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn generate_through_backend_uses_the_cache() {
    let server = common::MockServer::start(common::generation_backend);
    let fx = common::fixture(60, 20, "");
    let text = std::fs::read_to_string(&fx.config).unwrap().replace("stub = true", &format!("stub = false\nbackend_url = \"{}\"", server.url));
    std::fs::write(&fx.config, text).unwrap();
    let cfg = RunConfig::load(&fx.config).unwrap();
    let run = RunDir::new(fx.run_dir());
    cmd_prepare(&cfg, &run).unwrap();
    // Synthetic records carry neither image nor description.
    let err = cmd_generate(&cfg, &run).unwrap_err();
    assert!(matches!(err, Error::PipelineFailed { .. }), "{err}");
    assert_eq!(server.count(), 0);

    let attrs: String = std::fs::read_to_string(fx.dir.path().join("attributes.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["image_ref"] = format!("https://example.com/{}.jpg", v["item_id"].as_str().unwrap()).into();
            format!("{v}\n")
        })
        .collect();
    std::fs::write(fx.dir.path().join("attributes.jsonl"), attrs).unwrap();
    let cold = cmd_generate(&cfg, &run).unwrap();
    assert!(cold.failures.is_empty());
    assert!(cold.stats.backend_calls > 0);
    let before = server.count();
    let warm = cmd_generate(&cfg, &run).unwrap();
    assert_eq!(server.count(), before);
    assert_eq!(warm.stats.backend_calls, 0);
    assert!(run.default_cache_path().exists());
}
