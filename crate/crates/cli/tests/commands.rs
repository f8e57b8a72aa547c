use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use modkf::simkit::speech_like;
use modkf::trace::read_trace;
use modkf::wav::{read_wav, write_wav};

fn modkf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modkf")).args(args).output().expect("running modkf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn params_single_room() {
    let o = modkf(&["params", "--t60", "0.18", "--drr", "8.43"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("a=0.5412") && text.contains("b=0.0659"), "{text}");
}

#[test]
fn params_table_lists_every_room() {
    let o = modkf(&["params", "--table"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 23);
    assert!(text.lines().any(|l| l.starts_with("G,0.61,-1.74,5x4x4,0.83,0.25,0.8343,0.2474")), "{text}");
}

#[test]
fn params_rejects_bad_input() {
    assert!(!modkf(&["params", "--t60", "0", "--drr", "0"]).status.success());
    assert!(!modkf(&["params", "--t60", "0.5"]).status.success());
    assert!(!modkf(&["params", "--table", "--t60", "0.5"]).status.success());
}

#[test]
fn simulate_track_enhance_eval() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.wav");
    let noisy = dir.path().join("noisy.wav");
    let truth = dir.path().join("truth.csv");
    let estimates = dir.path().join("track.csv");
    let enhanced = dir.path().join("enhanced.wav");
    let trace = dir.path().join("trace.csv");
    write_wav(&clean, &speech_like(1.5, 16_000, 6)).unwrap();

    let o = modkf(&[
        "simulate", s(&clean), s(&noisy), "--t60", "0.61", "--drr", "-1.74", "--snr", "15", "--noise", "pink",
        "--seed", "6", "--truth", s(&truth),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_wav(&noisy).unwrap().len(), read_wav(&clean).unwrap().len());
    let (comments, rows) = read_trace(BufReader::new(std::fs::File::open(&truth).unwrap())).unwrap();
    assert!(comments[0].contains("a=0.8343 b=0.2474"), "{}", comments[0]);
    assert!(rows.iter().all(|r| r.bin == 32));

    let o = modkf(&[
        "track", s(&clean), s(&estimates), "--t60", "0.61", "--drr", "-1.74", "--snr", "15", "--bins", "16,32",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_trace(BufReader::new(std::fs::File::open(&estimates).unwrap())).unwrap();
    assert!(rows.iter().any(|r| r.bin == 16) && rows.iter().any(|r| r.bin == 32));
    assert!(rows.iter().all(|r| r.is_finite()));

    let o = modkf(&["enhance", s(&noisy), s(&enhanced), "--trace", s(&trace), "--set", "k_phase=6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_trace(BufReader::new(std::fs::File::open(&trace).unwrap())).unwrap();
    assert!(!rows.is_empty() && rows.iter().all(|r| r.bin == 32));

    let o = modkf(&["eval", s(&clean), s(&enhanced), "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["cepstral_distance", "log_spectral_distance", "segmental_snr"] {
        assert!(v[key].as_f64().unwrap().is_finite(), "{key}");
    }
    let o = modkf(&["eval", s(&clean), s(&clean)]);
    assert!(stdout(&o).contains("LSD 0.00 dB"), "{}", stdout(&o));
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.wav");
    let out = dir.path().join("out.wav");
    let o = modkf(&["enhance", s(&missing), s(&out)]);
    assert!(!o.status.success());
    assert!(!out.exists());

    let clean = dir.path().join("clean.wav");
    write_wav(&clean, &speech_like(1.0, 16_000, 2)).unwrap();
    assert!(!modkf(&["enhance", s(&clean), s(&out), "--set", "bogus=1"]).status.success());
    assert!(!modkf(&["enhance", s(&clean), s(&out), "--trace", s(&out), "--bins", "999"]).status.success());
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "min_fdr_length = 1\n").unwrap();
    assert!(!modkf(&["enhance", s(&clean), s(&out), "--config", s(&conf)]).status.success());

    let short = dir.path().join("short.wav");
    write_wav(&short, &speech_like(0.5, 16_000, 2)).unwrap();
    let o = modkf(&["eval", s(&clean), s(&short)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("length mismatch"));
}
