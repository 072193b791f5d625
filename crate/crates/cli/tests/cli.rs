use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cfnlab::corpus::Vocab;
use cfnlab::stack::{checkpoint, CellKind, ModelStack, StackParams};

fn cfnlab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfnlab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("CFNLAB_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_corpus(dir: &Path) {
    let line = "the cat sat on the mat and the dog sat on the log\n";
    fs::write(dir.join("train.txt"), line.repeat(60)).unwrap();
    fs::write(dir.join("valid.txt"), line.repeat(6)).unwrap();
    fs::write(dir.join("test.txt"), line.repeat(6)).unwrap();
}

/// Zero-weight CFN over a ten-token vocabulary, saved with its vocab file.
fn zero_checkpoint(dir: &Path) {
    let mut tokens = vec!["<eos>".to_string(), "<unk>".to_string()];
    tokens.extend(["the", "cat", "sat", "on", "mat", "and", "dog", "log"].map(String::from));
    Vocab::from_tokens(tokens).unwrap().save(&dir.join("vocab.tsv")).unwrap();
    let m = ModelStack::new(StackParams::zeros(CellKind::Cfn, 2, 4, 10), 0.0, 0.0).unwrap();
    checkpoint::save(&m, &dir.join("model.ckpt")).unwrap();
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cfnlab(tmp.path(), &["gradcheck", "--bogus"]).status.code(), Some(2));
    assert_eq!(cfnlab(tmp.path(), &["nosuch"]).status.code(), Some(2));
    assert_eq!(cfnlab(tmp.path(), &["--threads", "0", "gradcheck"]).status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_catches_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    for cell in ["cfn", "lstm", "gru"] {
        let o = cfnlab(tmp.path(), &["gradcheck", "--cell", cell, "--trials", "2"]);
        assert_eq!(o.status.code(), Some(0), "{cell}: {}", stdout(&o));
        assert!(stdout(&o).contains("PASS"));
    }
    let o = cfnlab(tmp.path(), &["gradcheck", "--cell", "cfn", "--trials", "1", "--corrupt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("out.b"));
}

#[test]
fn eval_of_zero_checkpoint_is_vocab_size() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(tmp.path());
    zero_checkpoint(tmp.path());
    let ckpt = tmp.path().join("model.ckpt");
    let args = ["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", tmp.path().to_str().unwrap(), "--split", "test"];
    let first = cfnlab(&tmp.path().join("o"), &args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("perplexity 10.000000"), "{}", stdout(&first));
    let again = cfnlab(&tmp.path().join("o"), &args);
    assert_eq!(stdout(&first), stdout(&again));
}

#[test]
fn eval_rejects_mismatched_vocab() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(tmp.path());
    zero_checkpoint(tmp.path());
    let short = tmp.path().join("short.tsv");
    Vocab::from_tokens(vec!["<eos>".into(), "<unk>".into(), "the".into()])
        .unwrap()
        .save(&short)
        .unwrap();
    let o = cfnlab(
        &tmp.path().join("o"),
        &[
            "eval",
            "--checkpoint",
            tmp.path().join("model.ckpt").to_str().unwrap(),
            "--vocab",
            short.to_str().unwrap(),
            "--data",
            tmp.path().to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn train_then_eval_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(tmp.path());
    let out = tmp.path().join("run");
    let data = tmp.path().to_str().unwrap();
    let o = cfnlab(
        &out,
        &["train", "--data", data, "--hidden", "6", "--batch", "2", "--unroll", "5", "--epochs", "2", "--lr0", "1"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.ckpt", "vocab.tsv", "train_log.csv", "run-manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,step,lr,train_nll,val_perp\n"));
    let text = stdout(&o);
    let val = text
        .lines()
        .find_map(|l| l.strip_prefix("final val perplexity "))
        .expect("final val line");

    let e = cfnlab(
        &tmp.path().join("ev"),
        &["eval", "--checkpoint", out.join("model.ckpt").to_str().unwrap(), "--data", data, "--split", "valid"],
    );
    assert_eq!(e.status.code(), Some(0));
    let printed: f64 = stdout(&e).split_whitespace().last().unwrap().parse().unwrap();
    assert_eq!(format!("{printed:.3}"), val);
}

#[test]
fn missing_corpus_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cfnlab(tmp.path(), &["train", "--data", tmp.path().join("none").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn lemma2_prints_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cfnlab(tmp.path(), &["dynamics", "lemma2", "--dim", "8", "--trials", "100", "--n-init", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn henon_cloud_is_bounded() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cfnlab(tmp.path(), &["dynamics", "henon", "--steps", "20000"]);
    assert_eq!(o.status.code(), Some(0));
    let cloud = fs::read_to_string(tmp.path().join("cloud.csv")).unwrap();
    let mut rows = 0;
    for line in cloud.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[0].abs() <= 1.5 && v[1].abs() <= 0.45, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 19_000);
    assert!(!cloud.contains('\r'));
}

#[test]
fn checkpoint_map_needs_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cfnlab(tmp.path(), &["dynamics", "lyapunov", "--map", "checkpoint"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn outputs_are_reproducible_and_thread_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = [
        vec!["dynamics", "attractor", "--map", "paper-gru", "--steps", "3000", "--n-init", "8"],
        vec!["dynamics", "diverge", "--map", "paper-lstm", "--trials", "40"],
        vec!["dynamics", "lemma1", "--trials", "20"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let dirs: Vec<_> = ["a", "b", "c"].iter().map(|d| tmp.path().join(format!("{i}{d}"))).collect();
        assert!(cfnlab(&dirs[0], args).status.success());
        assert!(cfnlab(&dirs[1], args).status.success());
        let mut threaded = vec!["--threads", "4"];
        threaded.extend(args);
        assert!(cfnlab(&dirs[2], &threaded).status.success());
        for entry in fs::read_dir(&dirs[0]).unwrap() {
            let name = entry.unwrap().file_name();
            if !name.to_string_lossy().ends_with(".csv") {
                continue;
            }
            let a = fs::read(dirs[0].join(&name)).unwrap();
            assert_eq!(a, fs::read(dirs[1].join(&name)).unwrap(), "{name:?} differs on repeat");
            assert_eq!(a, fs::read(dirs[2].join(&name)).unwrap(), "{name:?} differs across threads");
        }
    }
}
