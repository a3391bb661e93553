use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqlink")).args(args).env("SEQLINK_ARTIFACT_DIR", root).output().unwrap()
}

fn ok(out: Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout: {stdout}\nstderr: {}", String::from_utf8_lossy(&out.stderr));
    stdout
}

const TINY: &[&str] = &[
    "--set", "dataset.samples=16",
    "--set", "dataset.length=12",
    "--set", "hyper.epochs=2",
    "--set", "hyper.ae_epochs=1",
    "--set", "hyper.attention_epochs=1",
    "--set", "hyper.ode_units=8",
    "--set", "hyper.latent=2",
    "--set", "hyper.levels=2",
    "--set", "solver.substeps=1",
    "--set", "seeds=[0]",
];

fn with_tiny<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(TINY.iter().copied()).collect()
}

fn find(root: &Path, name: &str) -> PathBuf {
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == name) {
                return p;
            }
        }
    }
    panic!("{name} not found under {}", root.display());
}

#[test]
fn train_writes_reports_and_eval_reproduces_them() {
    let root = tempfile::tempdir().unwrap();
    let text = ok(run(root.path(), &with_tiny(&["train", "--set", "name=cli", "--set", "model=ode_rnn"])));
    assert!(text.contains("mse"), "{text}");
    let metrics = find(root.path(), "metrics.json");
    let dir = metrics.parent().unwrap();
    assert!(dir.file_name().unwrap().to_string_lossy().starts_with("cli-ode_rnn-"));
    for f in ["loss_curve.csv", "plot.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.join("loss_curve.csv")).unwrap();
    assert!(csv.lines().count() > 1);

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    let reported = report["per_seed"][0]["test_mse"].as_f64().unwrap();
    let ckpt = find(root.path(), "ode_rnn_checkpoint_seed0.json");
    let eval = ok(run(
        root.path(),
        &with_tiny(&["eval", "--set", "name=cli", "--set", "model=ode_rnn", "--checkpoint", ckpt.to_str().unwrap()]),
    ));
    let v: serde_json::Value = serde_json::from_str(eval.trim()).unwrap();
    assert_eq!(v["test_mse"].as_f64().unwrap(), reported);

    let summary = ok(run(root.path(), &["report", metrics.to_str().unwrap()]));
    assert!(summary.contains("ode_rnn"), "{summary}");
}

#[test]
fn staged_commands_feed_a_skipped_training_run() {
    let root = tempfile::tempdir().unwrap();
    ok(run(root.path(), &with_tiny(&["gen-data", "--set", "name=staged"])));
    assert!(find(root.path(), "manifest.json").exists());
    ok(run(root.path(), &with_tiny(&["train-ae", "--set", "name=staged"])));
    let bank = find(root.path(), "bank_seed0.json");
    ok(run(root.path(), &with_tiny(&["build-pyramid", "--set", "name=staged"])));
    let pyr = find(root.path(), "pyramids_seed0.json");
    let dir = bank.parent().unwrap();
    let bank_set = format!("stages.bank_path=\"{}\"", dir.join("bank_seed{seed}.json").display());
    let pyr_set = format!("stages.pyramid_path=\"{}\"", pyr.parent().unwrap().join("pyramids_seed{seed}.json").display());
    let args = with_tiny(&[
        "train",
        "--set", "name=staged",
        "--set", "stages.skip_autoencoder=true",
        "--set", "stages.skip_pyramid=true",
        "--set", &bank_set,
        "--set", &pyr_set,
    ]);
    ok(run(root.path(), &args));
}

#[test]
fn missing_bank_fails_with_a_clear_message() {
    let root = tempfile::tempdir().unwrap();
    let out = run(
        root.path(),
        &with_tiny(&["train", "--set", "stages.skip_autoencoder=true", "--set", "stages.skip_pyramid=true"]),
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing trajectory bank"), "{err}");
}

#[test]
fn config_file_and_bad_overrides() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("cfg.json");
    let written = seqlink::experiment::ExperimentConfig::desk();
    std::fs::write(&cfg, serde_json::to_string(&written).unwrap()).unwrap();
    ok(run(root.path(), &["gen-data", "--config", cfg.to_str().unwrap(), "--set", "dataset.samples=6"]));
    let bad = run(root.path(), &["gen-data", "--set", "hyper.no_such_field=3"]);
    assert!(!bad.status.success());
    let bad = run(root.path(), &["gen-data", "--set", "missing-equals"]);
    assert!(!bad.status.success());
}

#[test]
fn ranktest_and_sweep() {
    let root = tempfile::tempdir().unwrap();
    let p = ok(run(root.path(), &["ranktest", "--a", "1,2,3", "--b", "4,5,6"]));
    let v: f64 = p.trim().trim_start_matches("p = ").parse().unwrap();
    assert!((v - 0.1).abs() < 1e-12, "{p}");
    let grid = ok(run(
        root.path(),
        &with_tiny(&["sweep", "--set", "model=ode_rnn", "--set", "hyper.epochs=1", "--lengths", "10,12", "--fractions", "0.1,0.4"]),
    ));
    assert!(grid.contains("40%") && grid.lines().count() == 4, "{grid}");
    let sweep = find(root.path(), "sweep.json");
    let again = ok(run(root.path(), &["report", sweep.to_str().unwrap()]));
    assert_eq!(again, grid);
}

#[test]
fn every_example_runs() {
    // A filtered test run does not build examples, so make sure they exist.
    let status = Command::new(env!("CARGO"))
        .args(["build", "--quiet", "--examples", "--profile", "test", "-p", "seqlink"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .status()
        .unwrap();
    assert!(status.success());
    let examples = Path::new(env!("CARGO_BIN_EXE_seqlink")).parent().unwrap().join("examples");
    let names = std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")).unwrap();
    let mut ran = 0;
    for e in names {
        let name = e.unwrap().path().file_stem().unwrap().to_string_lossy().into_owned();
        let exe = examples.join(&name);
        assert!(exe.exists(), "example {name} was not built at {}", exe.display());
        let root = tempfile::tempdir().unwrap();
        let out = Command::new(&exe).env("SEQLINK_ARTIFACT_DIR", root.path()).output().unwrap();
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        ran += 1;
    }
    assert_eq!(ran, 9);
}
