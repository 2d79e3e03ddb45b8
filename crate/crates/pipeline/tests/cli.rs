use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neus_pipeline::manifest::Manifest;
use neus_pipeline::synth::{files, read_truth_clusters, read_truth_supports};
use neus_pipeline::PipelineConfig;
use proptest::prelude::*;

const SPEC: &str = "version = 1\nseed = 3\n\n[returns]\nsupport_min = 3\nsupport_max = 3\n";

fn neus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neus"))
        .args(args)
        .env_remove("NEUS_SEED")
        .env_remove("NEUS_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_of_failure(out: Output) -> String {
    assert!(!out.status.success(), "command unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

/// Writes a synthetic-data spec and generates its fixture in `root/fixture`.
fn synth(root: &Path, spec: &str) -> PathBuf {
    let spec_path = root.join("spec.toml");
    std::fs::write(&spec_path, spec).unwrap();
    let out = root.join("fixture");
    ok(neus(&["synth", "--spec", spec_path.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    out
}

fn run(stage: &str, config: &Path) -> Output {
    neus(&["run", stage, "--config", config.to_str().unwrap()])
}

/// `stage -> built|cached` from the run subcommand's output.
fn states(stdout: &str) -> BTreeMap<String, String> {
    stdout
        .lines()
        .map(|l| {
            let mut f = l.split('\t');
            (f.next().unwrap().to_string(), f.next().unwrap().to_string())
        })
        .collect()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap());
    }
    out
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = dir_bytes(&synth(a.path(), SPEC));
    let fb = dir_bytes(&synth(b.path(), SPEC));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    assert!(fa == fb);

    let c = tempfile::tempdir().unwrap();
    let fc = dir_bytes(&synth(c.path(), &SPEC.replace("seed = 3", "seed = 4")));
    assert_ne!(fa[files::NEWS], fc[files::NEWS]);
}

#[test]
fn synth_plants_three_topics_and_three_factor_supports() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = synth(tmp.path(), SPEC);
    let clusters = read_truth_clusters(&fixture.join(files::TRUTH_CLUSTERS)).unwrap();
    assert_eq!(clusters.len(), 60);
    let labels: BTreeSet<usize> = clusters.iter().map(|c| c.1).collect();
    assert_eq!(labels.len(), 3);

    let supports = read_truth_supports(&fixture.join(files::TRUTH_SUPPORTS)).unwrap();
    assert_eq!(supports.len(), 200);
    for s in &supports {
        assert_eq!(s.support.len(), 3, "{}", s.ticker);
        assert_eq!(s.coefficients.len(), 3, "{}", s.ticker);
    }
}

#[test]
fn inconsistent_spec_is_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.toml");
    std::fs::write(&spec, "version = 1\n\n[returns]\nsupport_min = 4\nsupport_max = 2\n").unwrap();
    let out = tmp.path().join("fixture");
    let err = stderr_of_failure(neus(&["synth", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    assert!(err.starts_with("error[config]:"), "{err}");
    assert!(err.contains("support_min"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    std::fs::write(&spec, "version = 1\n\n[news]\ntopic = 3\n").unwrap();
    let err = stderr_of_failure(neus(&["synth", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    assert!(err.starts_with("error[config]:") && err.contains("topic"), "{err}");
}

#[test]
fn config_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), SPEC).join(files::CONFIG);
    let text = std::fs::read_to_string(&config).unwrap();

    std::fs::write(&config, text.replace("[clustering]", "[clustering]\ncut_hieght = 1.0")).unwrap();
    let err = stderr_of_failure(run("corpus", &config));
    assert!(err.starts_with("error[config]:") && err.contains("cut_hieght"), "{err}");

    std::fs::write(&config, &text).unwrap();
    let mut cfg = PipelineConfig::load(&config).unwrap();
    cfg.evaluation.level = 1.5;
    std::fs::write(&config, cfg.to_toml().unwrap()).unwrap();
    let err = stderr_of_failure(run("corpus", &config));
    assert!(err.starts_with("error[config]:") && err.contains("evaluation"), "{err}");

    std::fs::write(&config, &text).unwrap();
    let err = stderr_of_failure(run("embedd", &config));
    assert!(err.starts_with("error[config]:") && err.contains("embedd"), "{err}");

    std::fs::remove_file(config.parent().unwrap().join(files::NEWS)).unwrap();
    let err = stderr_of_failure(run("corpus", &config));
    assert!(err.contains("paths.news"), "{err}");
}

#[test]
fn rerunning_a_stage_is_a_cache_hit() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), SPEC).join(files::CONFIG);
    let first = ok(run("corpus", &config));
    assert_eq!(states(&first)["corpus"], "built");
    let output = config.parent().unwrap().join("output");
    let before = dir_bytes(&output.join("corpus"));

    let second = ok(run("corpus", &config));
    assert_eq!(states(&second)["corpus"], "cached");
    assert!(dir_bytes(&output.join("corpus")) == before);

    // A damaged artifact no longer counts as cached.
    std::fs::write(output.join("corpus").join("universe.txt"), "tampered\n").unwrap();
    assert_eq!(states(&ok(run("corpus", &config)))["corpus"], "built");
    assert!(dir_bytes(&output.join("corpus")) == before);
}

#[test]
fn missing_upstream_artifact_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), SPEC).join(files::CONFIG);
    ok(run("corpus", &config));
    let err = stderr_of_failure(run("select", &config));
    assert!(err.starts_with("error[stage]:"), "{err}");
    assert!(err.contains("`cluster`"), "{err}");
}

#[test]
fn full_run_emits_reports_and_isolates_evaluation_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = synth(tmp.path(), SPEC);
    let config = fixture.join(files::CONFIG);
    let first = states(&ok(run("all", &config)));
    let order = ["corpus", "embed", "project", "cluster", "select", "evaluate", "report"];
    assert_eq!(first.len(), order.len());
    assert!(first.values().all(|s| s == "built"));

    let output = fixture.join("output");
    let reports: Vec<String> = dir_bytes(&output.join("report")).into_keys().collect();
    assert_eq!(reports.len(), 4, "{reports:?}");
    assert!(reports.iter().all(|r| r.ends_with(".csv")));
    let exported = tmp.path().join("exported");
    ok(neus(&["report", "--out", exported.to_str().unwrap(), "--config", config.to_str().unwrap()]));
    assert!(dir_bytes(&exported) == dir_bytes(&output.join("report")));

    let before = Manifest::load(&output).unwrap();
    let mut cfg = PipelineConfig::load(&config).unwrap();
    cfg.evaluation.level = 0.10;
    std::fs::write(&config, cfg.to_toml().unwrap()).unwrap();
    let second = states(&ok(run("all", &config)));
    for stage in &order[..6] {
        assert_eq!(second[*stage], "cached", "{stage}");
    }
    assert_eq!(second["report"], "built");
    let after = Manifest::load(&output).unwrap();
    for stage in &order[..6] {
        assert_eq!(before.stages[*stage], after.stages[*stage], "{stage}");
    }
    assert_ne!(before.stages["report"].key, after.stages["report"].key);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_survives_a_toml_round_trip(
        seed in 0..=i64::MAX as u64,
        workers in 1usize..16,
        cut in 0.01f64..10.0,
        level in 0.001f64..0.5,
        epochs in 1usize..200,
    ) {
        let tmp = tempfile::tempdir().unwrap();
        let fixture = synth_once();
        let mut cfg = PipelineConfig::load(&fixture.join(files::CONFIG)).unwrap();
        cfg.seed = seed;
        cfg.workers = workers;
        cfg.clustering.cut_height = cut;
        cfg.evaluation.level = level;
        cfg.embedding.epochs = epochs;
        let path = tmp.path().join("config.toml");
        std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
        let mut back = PipelineConfig::parse(&std::fs::read_to_string(&path).unwrap(), &path).unwrap();
        back.base_dir = cfg.base_dir.clone();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn seeds_beyond_toml_integers_are_rejected(seed in i64::MAX as u64 + 1..=u64::MAX) {
        let fixture = synth_once();
        let out = Command::new(env!("CARGO_BIN_EXE_neus"))
            .args(["run", "corpus", "--config", fixture.join(files::CONFIG).to_str().unwrap()])
            .env("NEUS_SEED", seed.to_string())
            .output()
            .unwrap();
        let err = stderr_of_failure(out);
        prop_assert!(err.starts_with("error[config]:") && err.contains("seed"), "{}", err);
    }
}

/// One shared fixture for the round-trip property.
fn synth_once() -> PathBuf {
    static FIXTURE: std::sync::OnceLock<(tempfile::TempDir, PathBuf)> = std::sync::OnceLock::new();
    FIXTURE
        .get_or_init(|| {
            let tmp = tempfile::tempdir().unwrap();
            let dir = synth(tmp.path(), SPEC);
            (tmp, dir)
        })
        .1
        .clone()
}
