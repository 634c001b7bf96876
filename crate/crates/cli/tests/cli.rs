use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use maskstream::dsp::wav::read_wav;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maskstream"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).filter(|r| r.starts_with(' ')).map(str::trim))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

const TINY: &str = "conv_config = custom\nconv_layers = 2x1x5x1x1, 1x3x1x1x1\nblstm_depth = 0\nfc_depth = 0\n\
                    learning_rate = 1e-3\ncausal = yes\nlook_ahead_frames = 2\n";

#[test]
fn info_reports_the_best_model_fields() {
    let cfg = configs().join("best.cfg");
    let out = ok(&["info", cfg.to_str().unwrap()]);
    assert_eq!(field(&out, "conv_config"), "small");
    assert_eq!(field(&out, "blstm_depth"), "3");
    assert_eq!(field(&out, "blstm_width"), "1023");
    assert_eq!(field(&out, "fc_depth"), "2");
    assert_eq!(field(&out, "fc_width"), "873");
    assert_eq!(field(&out, "input_channels"), "2");
    assert_eq!(field(&out, "delta_phase"), "yes");
    let params: usize = field(&out, "param_count").parse().unwrap();
    assert!(params > 30_000_000 && params < 130_000_000);
    assert!(field(&out, "latency").starts_with("400 samples"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["info", "--bogus", "x"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let out = run(&["info", "/nonexistent/model.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no such file"));
    assert_eq!(run(&["evaluate", "/nonexistent/best.ckpt", "/nonexistent/m.txt"]).status.code(), Some(2));
}

#[test]
fn bad_config_is_a_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "blstm_depth = 9\n").unwrap();
    let out = run(&["info", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
}

#[test]
fn train_enhance_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    std::fs::write(d("tiny.cfg"), TINY).unwrap();
    ok(&["gen-manifest", "train", &d("train.txt"), "--count", "2", "--duration-s", "3.5", "--seed", "1"]);
    ok(&["gen-manifest", "dev", &d("dev.txt"), "--count", "3", "--duration-s", "0.7", "--seed", "1"]);
    ok(&["gen-data", &d("dev.txt"), &d("corpus")]);
    ok(&[
        "train",
        &d("tiny.cfg"),
        "--train-manifest",
        &d("train.txt"),
        "--dev-manifest",
        &d("dev.txt"),
        "--steps",
        "2",
        "--batch-size",
        "2",
        "--eval-every",
        "1",
        "--out",
        &d("run"),
    ]);
    let ckpt = d("run/best.ckpt");
    let metrics = std::fs::read_to_string(d("run/metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,loss,dev_sdr\n"));
    assert_eq!(metrics.lines().count(), 3);

    let info = ok(&["info", &d("tiny.cfg"), "--checkpoint", &ckpt]);
    assert_eq!(field(&info, "checkpoint_params"), field(&info, "param_count"));

    let csv = ok(&["evaluate", &ckpt, &d("dev.txt")]);
    let rows: Vec<&str> = csv.lines().skip(1).filter(|l| !l.starts_with("mean_")).collect();
    assert_eq!(rows.len(), 3);
    assert!(csv.lines().any(|l| l.starts_with("mean_avg,")));
    let from_files = ok(&["evaluate", &ckpt, &d("dev.txt"), "--corpus-dir", &d("corpus")]);
    let ids = |s: &str| s.lines().map(|l| l.split(',').next().unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(ids(&csv), ids(&from_files));

    let noisy = d("corpus/dev_0001_noisy.wav");
    ok(&["enhance", &ckpt, &noisy, &d("offline.wav")]);
    let latency = ok(&["enhance", &ckpt, &noisy, &d("stream.wav"), "--stream", "--chunk", "97", "--report-latency"]);
    assert!(latency.contains("= 720 samples (45.0 ms)"), "{latency}");
    let (a, b) = (read_wav(d("offline.wav")).unwrap(), read_wav(d("stream.wav")).unwrap());
    assert_eq!(a.len(), b.len());
    let peak = a.peak();
    for (x, y) in a.channel(0).iter().zip(b.channel(0)) {
        assert!((x - y).abs() <= 1e-5 * peak.max(1.0));
    }

    ok(&["enhance", &ckpt, &noisy, &d("ms.wav"), "--look-ahead-ms", "20"]);
    assert_eq!(run(&["enhance", &ckpt, &noisy, &d("ms.wav"), "--look-ahead-ms", "0"]).status.code(), Some(2));
    assert_eq!(run(&["enhance", &ckpt, &noisy, &d("ms.wav"), "--look-ahead-ms", "15"]).status.code(), Some(2));

    ok(&["enhance", &ckpt, &noisy, &d("bypass.wav"), "--bypass-mask"]);
    let (inp, out) = (read_wav(&noisy).unwrap(), read_wav(d("bypass.wav")).unwrap());
    assert_eq!(out.num_channels(), 1);
    // the analysis window vanishes at the very first sample
    for i in 400..inp.len() - 400 {
        let sum = inp.channel(0)[i] + inp.channel(1)[i];
        assert!((out.channel(0)[i] - sum).abs() < 1e-6, "sample {i}: {} vs {sum}", out.channel(0)[i]);
    }
}

#[test]
fn search_and_sweep_write_their_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    std::fs::write(d("tiny.cfg"), TINY).unwrap();
    std::fs::write(
        d("space.cfg"),
        "conv_config = custom\nconv_layers = 2x1x5x1x1\nblstm_depth = 0\nfc_depth = 0..1\nfc_width = 8..16\ncausal = yes\n",
    )
    .unwrap();
    ok(&["gen-manifest", "train", &d("train.txt"), "--count", "1", "--duration-s", "3.2"]);
    ok(&["gen-manifest", "dev", &d("dev.txt"), "--count", "1", "--duration-s", "0.5"]);
    ok(&["gen-manifest", "eval", &d("eval.txt"), "--count", "1", "--duration-s", "0.5"]);
    let common = ["--train-manifest", &d("train.txt"), "--dev-manifest", &d("dev.txt"), "--steps", "1", "--batch-size", "1"]
        .map(str::to_string);
    let with_common = |head: Vec<String>| -> Vec<String> { head.into_iter().chain(common.iter().cloned()).collect() };
    let call = |v: Vec<String>| run(&v.iter().map(String::as_str).collect::<Vec<_>>());

    let scatter = d("scatter.csv");
    let out = call(with_common(vec!["search".into(), d("space.cfg"), "--budget".into(), "2".into(), "--out".into(), scatter.clone()]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&scatter).unwrap();
    assert!(csv.starts_with("trial,param_count,ops_per_second,best_dev_sdr,failed\n"));
    assert_eq!(csv.lines().count(), 3);

    let sweep = d("sweep.csv");
    let sweep_args = |ms: &str| {
        with_common(vec![
            "sweep".into(),
            d("tiny.cfg"),
            "--eval-manifest".into(),
            d("eval.txt"),
            "--look-ahead-ms".into(),
            ms.into(),
            "--out".into(),
            sweep.clone(),
        ])
    };
    let out = call(sweep_args("-20,0"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("dev_std"));
    let csv = std::fs::read_to_string(&sweep).unwrap();
    assert!(csv.starts_with("look_ahead_ms,trial,sdr_dev,sdr_eval\n"));
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(call(sweep_args("5")).status.code(), Some(2));
}
