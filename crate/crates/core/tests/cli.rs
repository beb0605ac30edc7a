use std::path::Path;
use std::process::{Command, Output};

use oslr::eval::{bbox_from_mask, binarize, connected_components, ProbMap};
use oslr::synth::{pnm, DatasetReader};
use sha2::{Digest, Sha256};

fn oslr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oslr"))
        .args(args)
        .env_remove("OSLR_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--set", "batch_size=2", "--set", "checkpoint_every=2", "--set", "clutter=1"];

#[test]
fn dry_run_reports_paper_counts() {
    let o = oslr(&["gen-data", "--dry-run", "--regime", "traditional", "--classes", "32", "--per-class", "70"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("triplets      154560"), "{text}");
    assert!(text.contains("train         139104"), "{text}");
    assert!(text.contains("val           15456"), "{text}");
}

#[test]
fn one_shot_files_have_disjoint_classes() {
    let dir = tempfile::tempdir().unwrap();
    let o = oslr(&[
        "gen-data", "--regime", "one_shot", "--classes", "4", "--train-classes", "3", "--per-class", "2",
        "--seed", "3", "--out", p(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let train = DatasetReader::open(dir.path().join("train.osds")).unwrap();
    let val = DatasetReader::open(dir.path().join("val.osds")).unwrap();
    let test = DatasetReader::open(dir.path().join("test.osds")).unwrap();
    assert_eq!(train.len() + val.len(), 3 * 2);
    assert_eq!(test.len(), 2);
    assert_eq!(train.classes(), val.classes());
    for a in train.classes() {
        assert!(test.classes().iter().all(|b| a.class_id != b.class_id));
    }
}

fn gen_traditional(dir: &Path) {
    let o = oslr(&[
        "gen-data", "--regime", "traditional", "--classes", "2", "--per-class", "3", "--seed", "1",
        "--out", p(dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn train(data: &Path, out: &Path, iterations: &str, resume: bool) -> Output {
    let mut args = vec!["train", "--data", p(data), "--out", p(out), "--iterations", iterations];
    args.extend_from_slice(&SMALL);
    if resume {
        args.push("--resume");
    }
    oslr(&args)
}

#[test]
fn train_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    gen_traditional(dir.path());
    let data = dir.path().join("train.osds");

    let full = dir.path().join("full");
    assert!(train(&data, &full, "6", false).status.success());
    let split = dir.path().join("split");
    assert!(train(&data, &split, "4", false).status.success());
    let o = train(&data, &split, "6", true);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let log_full = std::fs::read_to_string(full.join("loss.csv")).unwrap();
    let log_split = std::fs::read_to_string(split.join("loss.csv")).unwrap();
    assert_eq!(log_full.lines().count(), 7);
    assert_eq!(log_full, log_split);
    assert_eq!(
        std::fs::read(full.join("latest.oslr")).unwrap(),
        std::fs::read(split.join("latest.oslr")).unwrap()
    );
    for it in ["0000002", "0000004", "0000006"] {
        assert!(full.join(format!("checkpoint-{it}.oslr")).exists());
    }
    for line in log_full.lines().skip(1) {
        let loss: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(loss > 0.0 && loss < 2.0, "{line}");
    }
}

#[test]
fn eval_and_infer_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // The held-out file keeps every scene's full query group, so k-shot applies.
    let o = oslr(&[
        "gen-data", "--regime", "one_shot", "--classes", "3", "--train-classes", "2", "--per-class", "3",
        "--seed", "2", "--out", p(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run");
    assert!(train(&dir.path().join("train.osds"), &run, "2", false).status.success());
    let ckpt = run.join("latest.oslr");
    let val = dir.path().join("test.osds");

    let mut reports = Vec::new();
    for (i, k) in ["1", "2"].iter().enumerate() {
        for rep in 0..2 {
            let out = dir.path().join(format!("eval{i}{rep}"));
            let o = oslr(&["eval", "--checkpoint", p(&ckpt), "--data", p(&val), "--out", p(&out), "--k", k]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
            assert!(csv.starts_with("class_id,ap,pix_iou,n_gt,n_det\n"));
            assert!(out.join("report.txt").exists());
            reports.push(csv);
        }
    }
    assert_eq!(reports[0], reports[1], "eval is idempotent");
    assert_eq!(reports[2], reports[3]);
    let o = oslr(&["eval", "--checkpoint", p(&ckpt), "--data", p(&val), "--out", p(dir.path()), "--k", "3"]);
    assert_eq!(o.status.code(), Some(1), "k beyond available queries is a usage error");

    let mut reader = DatasetReader::open(&val).unwrap();
    let layout = reader.layout();
    let rec = reader.record(0).unwrap();
    let q = dir.path().join("q.ppm");
    let t = dir.path().join("t.ppm");
    let img = |side, data| pnm::Image { width: side, height: side, channels: 3, data };
    pnm::write(&q, &img(layout.query_size, rec.query.clone())).unwrap();
    pnm::write(&t, &img(layout.target_size, rec.target.clone())).unwrap();
    let out = dir.path().join("infer");
    let o = oslr(&["infer", "--checkpoint", p(&ckpt), "--query", p(&q), "--target", p(&t), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["mask.pgm", "binary.pgm", "overlay.ppm", "boxes.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // Boxes in the text file are exactly the component boxes of the binary mask.
    let bin = pnm::read(out.join("binary.pgm")).unwrap();
    let side = layout.target_size;
    let prob = ProbMap::new(side, side, bin.data.iter().map(|&b| b as f64 / 255.0).collect()).unwrap();
    let expected: Vec<String> = connected_components(&binarize(&prob, 0.5))
        .iter()
        .map(|c| {
            let b = bbox_from_mask(c).unwrap();
            format!("{} {} {} {}", b.x_min, b.y_min, b.x_max, b.y_max)
        })
        .collect();
    let text = std::fs::read_to_string(out.join("boxes.txt")).unwrap();
    let got: Vec<String> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(' ').take(4).collect::<Vec<_>>().join(" "))
        .collect();
    assert_eq!(got, expected);

    // Same inputs, same overlay bytes.
    let out2 = dir.path().join("infer2");
    assert!(oslr(&["infer", "--checkpoint", p(&ckpt), "--query", p(&q), "--target", p(&t), "--out", p(&out2)])
        .status
        .success());
    let h = |d: &Path| Sha256::digest(std::fs::read(d.join("overlay.ppm")).unwrap());
    assert_eq!(h(&out), h(&out2));

    let o = oslr(&["infer", "--checkpoint", p(&ckpt), "--query", p(&t), "--target", p(&t), "--out", p(&out2)]);
    assert_eq!(o.status.code(), Some(2), "mis-sized query is a data error");
}

#[test]
fn exit_codes() {
    assert_eq!(oslr(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(oslr(&["train", "--data", "x"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.osds");
    std::fs::write(&bad, b"nope").unwrap();
    let o = oslr(&["train", "--data", p(&bad), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = oslr(&["gen-data", "--dry-run", "--per-class", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_command_reports_every_check() {
    let o = oslr(&["gradcheck", "--seeds", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in oslr::gradsuite::check_names() {
        assert!(text.lines().any(|l| l.starts_with(name) && l.ends_with("pass")), "{name}\n{text}");
    }
}
