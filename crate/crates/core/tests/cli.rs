use std::path::{Path, PathBuf};
use std::process::Command;

use sfl::cli::run_from;
use sfl::treebank::{corruption_count, read_records, DepTree};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn sfl(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["sfl"];
    full.extend_from_slice(args);
    let code = run_from(full, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, count: usize, split: u64) -> PathBuf {
    let path = dir.join(name);
    let r = sfl(&["synth", "--count", &count.to_string(), "--seed", "3", "--split", &split.to_string(), "--out", p(&path)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    path
}

const SMALL: [&str; 10] = [
    "--layers", "1", "--gnn-layers", "1", "--d-model", "16", "--heads", "2", "--d-ff", "32",
];

fn train(data: &Path, dev: &Path, variant: &str, out: &Path, extra: &[&str]) -> Run {
    let mut args = vec![
        "train", "--task", "tag", "--variant", variant, "--data", p(data), "--dev", p(dev), "--epochs", "2", "--seed", "7",
        "--out", p(out),
    ];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    sfl(&args)
}

#[test]
fn train_writes_artifacts_and_eval_reproduces_dev_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "train.jsonl", 80, 0);
    let dev = synth(dir.path(), "dev.jsonl", 30, 1);
    let out = dir.path().join("run");
    let r = train(&data, &dev, "late", &out, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for f in ["checkpoint.bin", "metrics.csv", "config.echo"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    let echo = std::fs::read_to_string(out.join("config.echo")).unwrap();
    assert!(echo.contains("\"trees\": \"gold\""));

    let last = r.stdout.lines().last().unwrap().to_string();
    assert!(last.starts_with("P=") && last.contains(" F1="), "{last}");
    let ckpt = out.join("checkpoint.bin");
    let e = sfl(&["eval", "--checkpoint", p(&ckpt), "--data", p(&dev), "--seed", "7"]);
    assert_eq!(e.code, 0, "{}", e.stderr);
    assert_eq!(e.stdout.trim(), last);
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "train.jsonl", 40, 0);
    let dev = synth(dir.path(), "dev.jsonl", 10, 1);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = train(&data, &dev, "joint", out, &["--joint-mode", "add", "--trees", "corrupted@0.2"]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    for f in ["metrics.csv", "checkpoint.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn configuration_errors_exit_2_and_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = sfl(&["train", "--task", "tag", "--variant", "late", "--out", p(&out)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("data"), "{}", r.stderr);

    let missing = dir.path().join("nope.jsonl");
    let r = sfl(&["train", "--task", "tag", "--variant", "late", "--data", p(&missing), "--out", p(&out)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("--data"), "{}", r.stderr);

    let data = synth(dir.path(), "d.jsonl", 5, 0);
    let r = sfl(&["train", "--task", "tag", "--variant", "sideways", "--data", p(&data), "--out", p(&out)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("variant"), "{}", r.stderr);

    let r = sfl(&["train", "--task", "tag", "--variant", "late", "--data", p(&data), "--heads", "5", "--out", p(&out)]);
    assert_eq!(r.code, 2, "{}", r.stderr);

    let r = sfl(&["eval", "--checkpoint", p(&missing), "--data", p(&data)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("--checkpoint"), "{}", r.stderr);
}

#[test]
fn compatibility_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "train.jsonl", 20, 0);
    let out = dir.path().join("run");
    let mut args = vec!["train", "--task", "tag", "--variant", "baseline", "--data", p(&data), "--epochs", "1", "--out", p(&out)];
    args.extend_from_slice(&SMALL);
    assert_eq!(sfl(&args).code, 0);
    let ckpt = out.join("checkpoint.bin");

    let re = dir.path().join("re.jsonl");
    std::fs::write(
        &re,
        "{\"tokens\":[\"w1\",\"w2\",\"w3\"],\"heads\":[0,1,2],\"deprels\":[\"root\",\"dep\",\"dep\"],\"subj\":[0,1],\"obj\":[2,3],\"relation\":\"r\"}\n",
    )
    .unwrap();
    let r = sfl(&["eval", "--checkpoint", p(&ckpt), "--data", p(&re)]);
    assert_eq!(r.code, 3, "{}", r.stderr);

    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes[0] ^= 0xff;
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, &bytes).unwrap();
    let r = sfl(&["eval", "--checkpoint", p(&bad), "--data", p(&data)]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("version mismatch"), "{}", r.stderr);

    let short = dir.path().join("short.bin");
    std::fs::write(&short, &std::fs::read(&ckpt).unwrap()[..100]).unwrap();
    let r = sfl(&["eval", "--checkpoint", p(&short), "--data", p(&data)]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("truncated"), "{}", r.stderr);

    // a second vocabulary
    let other = dir.path().join("other.jsonl");
    std::fs::write(
        &other,
        "{\"tokens\":[\"zz\"],\"heads\":[0],\"deprels\":[\"root\"],\"tags\":[\"B-c1\"]}\n",
    )
    .unwrap();
    let out2 = dir.path().join("run2");
    let mut args = vec!["train", "--task", "tag", "--variant", "late", "--data", p(&other), "--epochs", "1", "--out", p(&out2)];
    args.extend_from_slice(&SMALL);
    assert_eq!(sfl(&args).code, 0);
    let r = sfl(&[
        "sensitivity", "--gold-checkpoint", p(&ckpt), "--noisy-checkpoint", p(&out2.join("checkpoint.bin")), "--data", p(&data),
        "--out", p(&dir.path().join("s")),
    ]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn baseline_ignores_trees() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "train.jsonl", 40, 0);
    let dev = synth(dir.path(), "dev.jsonl", 20, 1);
    let out = dir.path().join("run");
    assert_eq!(train(&data, &dev, "baseline", &out, &[]).code, 0);
    let ckpt = out.join("checkpoint.bin");
    let perturbed = dir.path().join("pert");
    assert_eq!(sfl(&["perturb", "--data", p(&dev), "--rate", "0.7", "--out", p(&perturbed)]).code, 0);
    let file = format!("file:{}", p(&perturbed.join("perturbed.jsonl")));
    let lines: Vec<String> = ["gold", "corrupted@0.5", "corrupted@1", file.as_str()]
        .iter()
        .map(|t| {
            let r = sfl(&["eval", "--checkpoint", p(&ckpt), "--data", p(&dev), "--trees", t]);
            assert_eq!(r.code, 0, "{}", r.stderr);
            r.stdout
        })
        .collect();
    assert!(lines.iter().all(|l| l == &lines[0]), "{lines:?}");
}

#[test]
fn perturb_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.jsonl", 300, 0);
    let original = read_records(&std::fs::read_to_string(&data).unwrap()).unwrap();

    let out0 = dir.path().join("p0");
    let r = sfl(&["perturb", "--data", p(&data), "--rate", "0", "--out", p(&out0)]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("mean UAS 1.0000"), "{}", r.stdout);
    let same = read_records(&std::fs::read_to_string(out0.join("perturbed.jsonl")).unwrap()).unwrap();
    assert_eq!(same, original);

    let out = dir.path().join("p3");
    let r = sfl(&["perturb", "--data", p(&data), "--rate", "0.3", "--seed", "11", "--out", p(&out)]);
    assert_eq!(r.code, 0);
    let noisy = read_records(&std::fs::read_to_string(out.join("perturbed.jsonl")).unwrap()).unwrap();
    let mut total = 0.0;
    for (a, b) in original.iter().zip(&noisy) {
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.tags, b.tags);
        DepTree::new(b.heads.clone(), b.deprels.clone()).unwrap();
        let n = a.heads.len();
        let changed = a.heads.iter().zip(&b.heads).filter(|(x, y)| x != y).count();
        assert_eq!(changed, corruption_count(n, 0.3));
        total += 1.0 - changed as f64 / n as f64;
    }
    let mean = total / original.len() as f64;
    assert!(r.stdout.contains(&format!("mean UAS {mean:.4}")), "{} vs {mean}", r.stdout);
    let approx: f64 = original
        .iter()
        .map(|a| 1.0 - 0.3 * (a.heads.len() - 1) as f64 / a.heads.len() as f64)
        .sum::<f64>()
        / original.len() as f64;
    assert!((mean - approx).abs() < 0.06, "{mean} vs {approx}");

    let r = sfl(&["perturb", "--data", p(&data), "--rate", "1.5", "--out", p(&out)]);
    assert_eq!(r.code, 2);
}

#[test]
fn sensitivity_with_zero_rate_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "train.jsonl", 30, 0);
    let dev = synth(dir.path(), "dev.jsonl", 12, 1);
    let (g, n) = (dir.path().join("g"), dir.path().join("n"));
    assert_eq!(train(&data, &dev, "late", &g, &[]).code, 0);
    assert_eq!(train(&data, &dev, "late", &n, &["--trees", "corrupted@0.3"]).code, 0);
    let run = |rates: &str, out: &Path| {
        sfl(&[
            "sensitivity", "--gold-checkpoint", p(&g.join("checkpoint.bin")), "--noisy-checkpoint", p(&n.join("checkpoint.bin")),
            "--data", p(&dev), "--rates", rates, "--out", p(out),
        ])
    };
    let out = dir.path().join("s0");
    let r = run("0", &out);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("gold_trained slope undefined"), "{}", r.stdout);
    let fits = std::fs::read_to_string(out.join("sensitivity.csv")).unwrap();
    assert!(fits.starts_with("condition,rate,slope,intercept,n,flag\n"));
    assert!(fits.lines().skip(1).all(|l| l.ends_with(",degenerate")), "{fits}");
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("condition,rate,sentence_id,uas,f1_ref,f1_noisy,delta\n"));
    assert_eq!(metrics.lines().count(), 1 + 2 * 12);
    for line in metrics.lines().skip(1) {
        assert!(line.ends_with(",0.000000"), "{line}");
    }

    let (a, b) = (dir.path().join("sa"), dir.path().join("sb"));
    assert_eq!(run("0.1,0.3,0.5", &a).code, 0);
    assert_eq!(run("0.1,0.3,0.5", &b).code, 0);
    for f in ["metrics.csv", "sensitivity.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let r = run("0.1,1.2", &a);
    assert_eq!(r.code, 2);
}

#[test]
fn eval_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "train.jsonl", 30, 0);
    let dev = synth(dir.path(), "dev.jsonl", 15, 1);
    let out = dir.path().join("run");
    assert_eq!(train(&data, &dev, "joint", &out, &[]).code, 0);
    let ckpt = out.join("checkpoint.bin");
    let (a, b) = (dir.path().join("ea"), dir.path().join("eb"));
    for o in [&a, &b] {
        let r = sfl(&["eval", "--checkpoint", p(&ckpt), "--data", p(&dev), "--trees", "corrupted@0.5", "--seed", "4", "--out", p(o)]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    let csv = std::fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("metrics.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("condition,rate,sentence_id,uas,f1_ref,f1_noisy,delta\ncorrupted@0.5,0.5,0,"));
    assert_eq!(text.lines().count(), 16);
}

#[test]
fn gradcheck_passes_and_catches_injected_gelu_fault() {
    let r = sfl(&["gradcheck", "--seeds", "1"]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    for layer in sfl::verify::LAYERS {
        let lines = r.stdout.lines().filter(|l| l.split_whitespace().next() == Some(layer)).count();
        assert_eq!(lines, 1, "{layer}");
    }

    let r = sfl(&["gradcheck", "--seeds", "1", "--inject-fault", "gelu-backward-sign"]);
    assert_eq!(r.code, 4);
    assert!(r.stderr.contains("gelu"), "{}", r.stderr);
    let gelu = r.stdout.lines().find(|l| l.starts_with("gelu ")).unwrap();
    assert!(gelu.contains("FAIL"), "{gelu}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_sfl");
    let status = Command::new(bin).args(["train", "--task", "tag"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8(help.stdout).unwrap();
    for cmd in ["train", "eval", "perturb", "gradcheck", "sensitivity"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}
