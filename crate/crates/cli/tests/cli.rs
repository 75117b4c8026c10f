use std::path::Path;
use std::process::{Command, Output};

use eegwgan::Signals;
use eegwgan_cli::archive::DatasetArchive;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_eegwgan");

fn eegwgan(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// 2-channel desk settings small enough for a few-second pipeline run.
const SMALL: [&str; 6] =
    ["--set", "data.channels=2", "--set", "train.checkpoint_every=5", "--set", "fid.train.epochs=5"];

fn run_ok(args: &[&str]) -> Output {
    let o = eegwgan(&[args, &SMALL[..]].concat());
    assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    o
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let d = |s: &str| tmp.path().join(s);
    run_ok(&["synth", "--out", p(&d("open")), "--seed", "1"]);
    run_ok(&["synth", "--out", p(&d("closed")), "--seed", "2", "--freq", "20"]);
    run_ok(&["train", "--data", p(&d("open")), "--out", p(&d("run")), "--iterations", "12"]);
    assert!(d("run/checkpoint/manifest.json").is_file());
    let metrics = std::fs::read_to_string(d("run/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 13);
    assert!(metrics.starts_with("iteration,critic_loss,gen_loss,wasserstein_estimate,mean_grad_norm"));

    run_ok(&["generate", "--checkpoint", p(&d("run/checkpoint")), "--out", p(&d("gen")), "--n", "70"]);
    let gen = DatasetArchive::load(&d("gen")).unwrap();
    assert_eq!(gen.signals.shape(), [70, 2, 128]);

    let psd = run_ok(&["eval-psd", "--real", p(&d("open")), "--generated", p(&d("gen")), "--out", p(&d("psd"))]);
    assert!(String::from_utf8_lossy(&psd.stdout).contains("real PSD peak: 10 Hz"));
    let csv = std::fs::read_to_string(d("psd/psd.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("freq_hz,real,generated"));
    assert_eq!(csv.lines().count(), 1 + 33);

    let (open, gen) = (d("open"), d("gen"));
    let args = ["eval-fid", "--real", p(&open), "--generated", p(&gen)];
    run_ok(&[&args[..], &["--contrast", p(&d("closed")), "--out", p(&d("fid"))]].concat());
    let first = std::fs::read_to_string(d("fid/fid.csv")).unwrap();
    let pairs: Vec<&str> = first.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(pairs, ["real-vs-real", "real-vs-generated", "real-vs-noise"]);
    // A saved classifier reproduces the same distances.
    let saved = d("fid/classifier.json");
    run_ok(&[&args[..], &["--classifier", p(&saved), "--out", p(&d("fid2"))]].concat());
    assert_eq!(std::fs::read_to_string(d("fid2/fid.csv")).unwrap(), first);

    run_ok(&["eval-topomap", "--data", p(&d("open")), "--out", p(&d("topo"))]);
    assert!(std::fs::read_to_string(d("topo/topomap.svg")).unwrap().starts_with("<svg"));
    run_ok(&["eval-bands", "--data", p(&d("open")), p(&d("closed")), "--out", p(&d("bands"))]);
    let bands = std::fs::read_to_string(d("bands/bands.csv")).unwrap();
    assert_eq!(bands.lines().next(), Some("dataset,channel,delta,theta,alpha,beta,gamma"));

    let o = run_ok(&[
        "bench",
        "--open",
        p(&d("open")),
        "--closed",
        p(&d("closed")),
        "--gen-open",
        p(&d("gen")),
        "--gen-closed",
        p(&d("closed")),
        "--out",
        p(&d("bench")),
        "--trials",
        "2",
        "--set",
        "bench.train.epochs=2",
    ]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("classifier,real_accuracy"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d("bench/bench.json")).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 4);

    for dir in ["open", "run", "gen", "psd", "fid", "topo", "bands", "bench"] {
        assert!(d(dir).join("config.json").is_file(), "{dir} lacks a config snapshot");
    }
}

#[test]
fn snapshot_reproduces_the_run_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    run_ok(&["synth", "--out", p(&out), "--seed", "9", "--set", "synth.noise_std=0.5", "--n", "5"]);
    let snap: Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(snap["synth.seed"], 9);
    assert_eq!(snap["train.seed"], 9);
    assert_eq!(snap["synth.noise_std"], 0.5);
    assert_eq!(snap["synth.n"], 5);
    // Feeding the snapshot back regenerates identical data.
    let again = tmp.path().join("t");
    let o = eegwgan(&["--config", p(&out.join("config.json")), "synth", "--out", p(&again)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(out.join("data.f64")).unwrap(), std::fs::read(again.join("data.f64")).unwrap());
}

#[test]
fn usage_and_input_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = eegwgan(&["ingest", "--root", "/no/such/root", "--subjects", "x", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/no/such/root"));

    assert_eq!(code(&eegwgan(&["frobnicate"])), 2);
    assert_eq!(code(&eegwgan(&["synth"])), 2, "missing --out");
    let o = eegwgan(&["synth", "--out", p(tmp.path()), "--set", "train.nope=1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("train.nope"));
    assert_eq!(code(&eegwgan(&["synth", "--out", p(tmp.path()), "--set", "novalue"])), 2);
    assert_eq!(code(&eegwgan(&["generate", "--checkpoint", "/no/ckpt", "--out", p(tmp.path())])), 2);

    // 2-channel data against the default 4-channel desk config
    let data = tmp.path().join("d");
    run_ok(&["synth", "--out", p(&data), "--n", "4"]);
    let o = eegwgan(&["train", "--data", p(&data), "--out", p(&tmp.path().join("r"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("data.channels"));
}

#[test]
fn help_exits_zero() {
    let o = eegwgan(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("gradcheck"));
}

#[test]
fn divergence_exits_1_and_keeps_last_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let (n, c, l) = (40, 2, 128);
    let mut data: Vec<f64> = (0..n * c * l).map(|i| ((i % 17) as f64 / 8.0 - 1.0) * 0.5).collect();
    // the last sample is poisoned, so training runs until a batch draws it
    data[(n - 1) * c * l] = f64::NAN;
    let signals = Signals::new(data, n, c, l).unwrap();
    let archive = DatasetArchive::new(signals, vec!["Fz".into(), "Cz".into()], 160.0, "test", None, None).unwrap();
    let dir = tmp.path().join("nan");
    archive.save(&dir).unwrap();
    let out = tmp.path().join("run");
    let o = eegwgan(&[
        "train",
        "--data",
        p(&dir),
        "--out",
        p(&out),
        "--iterations",
        "50",
        "--set",
        "data.channels=2",
        "--set",
        "train.checkpoint_every=1",
        "--set",
        "train.n_critic=1",
        "--set",
        "train.batch_size=4",
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("non-finite"), "{err}");
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("checkpoint/manifest.json")).unwrap()).unwrap();
    let kept = manifest["iteration"].as_u64().unwrap();
    assert!(err.contains(&format!("iteration {kept})")), "{err}");
    let rows = std::fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count() as u64;
    assert_eq!(rows, kept + 1);
}

#[test]
fn gradcheck_passes_and_detects_an_injected_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let o = eegwgan(&["gradcheck", "--configs", "20", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("gradient_penalty composite") && !table.contains("FAIL"));
    assert!(tmp.path().join("gradcheck.json").is_file());

    let o = eegwgan(&["gradcheck", "--configs", "3", "--inject-fault", "conv1d"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("conv1d at cfg 0") && err.contains("rel err"), "{err}");
}
