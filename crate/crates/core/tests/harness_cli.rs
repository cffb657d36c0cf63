mod common;

use std::path::Path;
use std::process::{Command, Output};

use bilevel_cot::harness::{
    cmd_report, cmd_train, ErrorRecord, RunManifest, ERROR_FILE, METRICS_FILE, SUMMARY_FILE,
};
use bilevel_cot::prompt::SelectorKind;
use bilevel_cot::trainer::{checkpoint_path, Summary};
use bilevel_cot::util::{read_json, write_json};
use bilevel_cot::Error;

use common::{config_path, core_dir, load_config, read_to_string};

fn bilevel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bilevel"))
        .args(args)
        .env_remove("LLM_ENDPOINT")
        .env_remove("EMBED_ENDPOINT")
        .env("LLM_API_KEY", "sk-never-persisted")
        .output()
        .unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_small(config: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = config_path(config);
    let mut args = vec![
        "train",
        "--config",
        path_str(&cfg),
        "--seed",
        "0",
        "--set",
        "episodes=16",
        "--out",
        path_str(out),
    ];
    args.extend_from_slice(extra);
    let out = bilevel(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn cli_train_writes_a_self_describing_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("ucb");
    let out = train_small("chainworld_full", &run, &["--selector", "ucb", "--seed", "3"]);
    let line = String::from_utf8_lossy(&out.stdout);
    assert!(line.contains("chainworld-full ucb neg-entropy"), "{line}");

    let m = RunManifest::load(&run).unwrap();
    assert_eq!(m.command, "train");
    assert_eq!(m.config.selector, SelectorKind::Ucb);
    assert_eq!(m.seeds, [0, 3]);
    assert_eq!(m.config.episodes, 16);
    assert_eq!(m.backends.reasoner.as_deref(), Some("cache"));
    assert!(!read_to_string(&run.join("manifest.json")).contains("sk-never-persisted"));
    for f in [METRICS_FILE, "entropy.csv", SUMMARY_FILE] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    for seed in [0, 3] {
        assert!(checkpoint_path(&run, seed, "final").exists());
    }
    let rows = read_to_string(&run.join(METRICS_FILE)).lines().count();
    assert_eq!(rows, 1 + 2 * 16);
}

#[test]
fn cli_eval_reads_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    train_small("chainworld_full", &run, &[]);
    let ck = checkpoint_path(&run, 0, "final");
    let eval_dir = dir.path().join("eval");
    let cfg = config_path("chainworld_full");
    let out = bilevel(&[
        "eval",
        "--config",
        path_str(&cfg),
        "--checkpoint",
        path_str(&ck),
        "--episodes",
        "5",
        "--greedy",
        "--out",
        path_str(&eval_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_to_string(&eval_dir.join("eval_metrics.csv")).lines().count();
    assert_eq!(rows, 6);
    assert_eq!(RunManifest::load(&eval_dir).unwrap().command, "eval");
}

#[test]
fn cli_errors_are_json_on_stderr() {
    let out = bilevel(&["train", "--config", "/no/such/config.json", "--out", "/tmp/unused"]);
    assert!(!out.status.success());
    let rec: ErrorRecord = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec.kind, "missing_file");
    assert!(rec.message.contains("/no/such/config.json"));

    let cfg = config_path("chainworld_full");
    let out = bilevel(&["train", "--config", path_str(&cfg), "--set", "novalue", "--out", "/tmp/x"]);
    assert!(!out.status.success());
}

#[test]
fn missing_candidate_file_is_named_and_recorded() {
    let resolved = load_config("chainworld_full", &[("candidates", "/nowhere/prompts.json")]);
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_train(&resolved, dir.path()).err().unwrap();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("/nowhere/prompts.json"), "{err}");
    let rec: ErrorRecord = read_json(&dir.path().join(ERROR_FILE)).unwrap();
    assert_eq!(rec.kind, "config");
    assert!(rec.message.contains("/nowhere/prompts.json"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"episodez": 10}"#).unwrap();
    let err = bilevel_cot::harness::load(&bad, &Default::default()).err().unwrap();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn report_of_one_run_passes_the_summary_through() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("learned");
    let resolved = load_config(
        "chainworld_full",
        &[("seeds", "[0]"), ("episodes", "16")],
    );
    let outcome = cmd_train(&resolved, &run).unwrap();
    let report = cmd_report(&[run.clone()], &dir.path().join("report")).unwrap();
    assert_eq!(report.methods, ["learned"]);

    let mut rdr = csv::Reader::from_path(&report.auc).unwrap();
    let row: Vec<String> = rdr.records().next().unwrap().unwrap().iter().map(String::from).collect();
    assert_eq!(row[0], "learned");
    assert_eq!(row[4].parse::<f64>().unwrap(), outcome.report.auc_mean);
    assert_eq!(row[5].parse::<f64>().unwrap(), 0.0);

    let mut rdr = csv::Reader::from_path(&report.curves).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 16);
    for (r, ep) in rows.iter().zip(&outcome.report.episodes) {
        assert_eq!(&r[2], "1");
        assert_eq!(r[3].parse::<f64>().unwrap(), ep.norm_reward);
        assert_eq!(&r[4], "0");
    }
}

#[test]
fn report_rejects_mixed_environments() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let resolved = load_config("chainworld_full", &[("seeds", "[0]"), ("episodes", "16")]);
    cmd_train(&resolved, &a).unwrap();
    // a copy whose manifest claims another environment
    let b = dir.path().join("b");
    std::fs::create_dir_all(&b).unwrap();
    for f in [METRICS_FILE, SUMMARY_FILE] {
        std::fs::copy(a.join(f), b.join(f)).unwrap();
    }
    let mut m = RunManifest::load(&a).unwrap();
    m.env = "fourroom".into();
    write_json(&b.join("manifest.json"), &m).unwrap();
    let err = cmd_report(&[a.clone(), b], &dir.path().join("r")).err().unwrap();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");

    // the same run twice gets distinct method names
    let r = cmd_report(&[a.clone(), a], &dir.path().join("r2")).unwrap();
    assert_eq!(r.methods, ["a", "a-2"]);
    let s: Summary = read_json(&dir.path().join("a").join(SUMMARY_FILE)).unwrap();
    assert_eq!(s.seeds.len(), 1);
}

#[test]
fn every_shipped_config_trains_briefly() {
    let mut names: Vec<String> = std::fs::read_dir(core_dir().join("configs"))
        .unwrap()
        .map(|e| e.unwrap().path().file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.len() >= 7);
    for name in names {
        let resolved = load_config(
            &name,
            &[("seeds", "[0]"), ("episodes", "8"), ("batch_episodes", "8")],
        );
        let dir = tempfile::tempdir().unwrap();
        let outcome = cmd_train(&resolved, dir.path())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(outcome.report.episodes.len(), 8, "{name}");
        for s in &outcome.report.seeds {
            assert!((0.0..=1.0).contains(&s.auc), "{name}");
        }
    }
}
