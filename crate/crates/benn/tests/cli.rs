use std::path::Path;
use std::process::{Command, Output};

fn benn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_benn")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--toy-n", "400", "--epochs", "2", "--toy-seed", "3"];

#[test]
fn usage_errors_exit_one() {
    assert_eq!(benn(&[]).status.code(), Some(1));
    assert_eq!(benn(&["train"]).status.code(), Some(1));
    assert_eq!(benn(&["ensemble", "train", "--strategy", "bag", "--k", "2", "--out", "x"]).status.code(), Some(1));
    assert_eq!(benn(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let missing = benn(&["train", "--data", "idx:/nonexistent/a,/nonexistent/b", "--out", p(&out)]);
    assert_eq!(missing.status.code(), Some(2), "{}", String::from_utf8_lossy(&missing.stderr));
    let bogus = dir.path().join("bogus.ckpt");
    std::fs::write(&bogus, b"not a checkpoint at all, just some bytes to read").unwrap();
    assert_eq!(benn(&["eval", "--model", p(&bogus)]).status.code(), Some(2));
}

#[test]
fn invalid_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let r = benn(&["analyze", "b-table", "--sigmas", "-1", "--seed", "1", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(1), "{}", String::from_utf8_lossy(&r.stderr));
    let r = benn(&["train", "--profile", "wq1", "--out", p(dir.path())]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn train_eval_export_perturb() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut args = vec!["train", "--config", "builtin:toy-bnn", "--out", p(&run)];
    args.extend(SMALL);
    let r = benn(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["model.ckpt", "metrics.csv", "run_manifest.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,loss,train_accuracy,test_accuracy"));
    assert_eq!(metrics.lines().count(), 3);

    let ckpt = run.join("model.ckpt");
    let packed = dir.path().join("model.pbt");
    let r = benn(&["export", "--model", p(&ckpt), "--out", p(&packed)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("ratio"));

    let eval_dir = dir.path().join("eval");
    let toy = ["--toy-n", "400", "--toy-seed", "3"];
    let mut a = vec!["eval", "--model", p(&ckpt), "--out", p(&eval_dir)];
    a.extend(toy);
    let float = benn(&a);
    let mut b = vec!["eval", "--model", p(&packed)];
    b.extend(toy);
    let bits = benn(&b);
    assert!(float.status.success() && bits.status.success());
    assert_eq!(float.stdout, bits.stdout);
    let confusion = std::fs::read_to_string(eval_dir.join("confusion.csv")).unwrap();
    assert!(confusion.starts_with("true_class,pred_0,pred_1,pred_2,pred_3"));

    let pcsv = dir.path().join("perturb.csv");
    let mut c = vec!["perturb", "--model", p(&ckpt), "--sigma2", "0,0.01", "--trials", "3", "--out", p(&pcsv)];
    c.extend(toy);
    let r = benn(&c);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rows = std::fs::read_to_string(&pcsv).unwrap();
    assert_eq!(rows.lines().count(), 3);
    assert!(rows.lines().nth(1).unwrap().starts_with("0.0,input,"));
}

#[test]
fn ensemble_train_writes_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ens");
    let mut args = vec!["ensemble", "train", "--strategy", "boost", "--k", "3", "--mode", "warm", "--seed", "5", "--out", p(&out)];
    args.extend(SMALL);
    let r = benn(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("ensemble.json").exists());
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let r = benn(&["eval", "--model", p(&out), "--toy-n", "400", "--toy-seed", "3"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn analyses_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("b.csv");
    let r = benn(&["analyze", "b-table", "--mc-samples", "1000", "--seed", "1", "--out", p(&b)]);
    assert!(r.status.success());
    let text = std::fs::read_to_string(&b).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().nth(2).unwrap().starts_with("1.0,1.0"), "{text}");

    let t1 = dir.path().join("t1.csv");
    let r = benn(&["analyze", "theorem1", "--trials", "2000", "--ks", "2", "--seed", "1", "--out", p(&t1)]);
    assert!(r.status.success());
    assert_eq!(std::fs::read_to_string(&t1).unwrap().lines().count(), 1 + 2 * 4 * 2);

    let t2 = dir.path().join("t2.csv");
    let r = benn(&["analyze", "theorem2", "--trials", "50", "--samples-per-trial", "8", "--seed", "1", "--out", p(&t2)]);
    assert!(r.status.success());
    assert_eq!(std::fs::read_to_string(&t2).unwrap().lines().count(), 1 + 2 * 4);
}

#[test]
fn bench_reports_speedup() {
    let r = benn(&["bench", "--outputs", "16", "--fan-in", "256", "--batch", "4", "--reps", "1"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("speedup"));
    assert_eq!(benn(&["bench", "--reps", "x"]).status.code(), Some(1));
}
