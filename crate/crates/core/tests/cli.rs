use std::path::Path;
use std::process::{Command, Output};

fn daenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daenet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env("DAENET_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.ini");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const PENDULUM: &str = "
[experiment]
problem = pendulum
seeds = 0
[data]
bodies = 2
steps = 300
h = 0.001
substeps = 1
k = 5
n_train = 10, 20
n_val = 10
n_test = 10
[model]
latent = 8
hidden = 8
layers = 2
[train]
epochs = 2
[constraint]
mode = none, smooth
[sweep]
parameter = gamma
values = 0.5, 2
";

#[test]
fn pendulum_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), PENDULUM);
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let common = ["--config", cfg.as_str(), "--out", out_s];

    ok(&daenet(&[&["generate"][..], &common].concat()));
    for f in [
        "dataset.bin",
        "dataset.csv",
        "dataset.provenance",
        "config.ini",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    // refuses to overwrite without --force
    assert_eq!(
        daenet(&[&["generate"][..], &common].concat()).status.code(),
        Some(2)
    );
    ok(&daenet(
        &[&["generate"][..], &common, &["--force"]].concat(),
    ));

    ok(&daenet(&[&["train"][..], &common].concat()));
    for label in ["none_n10", "none_n20", "smooth_n10", "smooth_n20"] {
        let run = out.join("runs").join(label).join("seed_0");
        for f in ["params.ckpt", "metrics.csv", "eval.csv"] {
            assert!(run.join(f).exists(), "{label}/{f}");
        }
    }
    let metrics = std::fs::read_to_string(out.join("runs/none_n10/seed_0/metrics.csv")).unwrap();
    // header plus a train and a val row per epoch
    assert_eq!(metrics.lines().count(), 5);

    let table = daenet(&[&["table"][..], &common].concat());
    ok(&table);
    let text = String::from_utf8_lossy(&table.stdout);
    assert!(
        text.contains("smooth") && text.contains("MAE n=20 [cm]"),
        "{text}"
    );
    assert!(out.join("table.csv").exists() && out.join("table.txt").exists());

    ok(&daenet(&[&["sweep"][..], &common].concat()));
    assert!(out.join("sweep_summary.csv").exists());
    assert!(out.join("sweep/gamma_0.5/seed_0/eval.csv").exists());

    // denoising only
    assert_eq!(
        daenet(&[&["oos-denoise"][..], &common].concat())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn denoise_out_of_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "
[experiment]
problem = denoise
seeds = 0
[data]
grid = 8
n_train = 10
n_val = 5
n_test = 5
[model]
layers = 1
[train]
epochs = 1
[constraint]
mode = none, smooth
",
    );
    let out = dir.path().join("out");
    let common = ["--config", cfg.as_str(), "--out", out.to_str().unwrap()];
    ok(&daenet(&[&["generate"][..], &common].concat()));
    ok(&daenet(&[&["train"][..], &common].concat()));
    let oos = daenet(&[&["oos-denoise"][..], &common, &["--sigma", "10"]].concat());
    ok(&oos);
    assert!(out.join("oos/sigma_10/smooth_n10/seed_0/eval.csv").exists());
    assert_eq!(
        daenet(&[&["oos-denoise"][..], &common, &["--sigma", "-1"]].concat())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.ini");
    let out = daenet(&["generate", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));

    let bad = write_config(
        dir.path(),
        "[experiment]\nproblem = pendulum\n[data]\nbogus = 1\n",
    );
    let out = daenet(&["generate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.bogus"));

    // training before any dataset exists
    let cfg = write_config(dir.path(), PENDULUM);
    let out = daenet(&[
        "train",
        "--config",
        &cfg,
        "--out",
        dir.path().join("empty").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}
