use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use nnc::detect::{AppearanceSource, NormalityModel};

fn nnc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: PathBuf,
    train_log: String,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// Short synthetic clips and one model trained on them, shared by all tests.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("nnc-cli-fixture");
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        let train_dir = dir.join("train");
        let test_dir = dir.join("test");
        let out = nnc(&["synth", "--preset", "training", "--frames", "60", "-o", s(&train_dir)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let out = nnc(&["synth", "--frames", "200", "-o", s(&test_dir)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));

        let model = dir.join("model.nncm");
        let out = nnc(&[
            "train",
            "--video",
            s(&train_dir.join("video.nncv")),
            "-o",
            s(&model),
            "--restarts",
            "2",
            "--min-cluster-size",
            "50",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        Fixture {
            dir,
            train_log: stderr(&out),
        }
    })
}

#[test]
fn train_writes_loadable_model_and_echoes_nu() {
    let f = fixture();
    let model = NormalityModel::load(&f.path("model.nncm")).unwrap();
    assert!(model.r() >= 1);
    assert!(f.train_log.contains("nu = 0.01"), "{}", f.train_log);
}

#[test]
fn missing_video_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.nncv");
    let out = nnc(&["train", "--video", s(&missing), "-o", s(&dir.path().join("m.nncm"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));
}

#[test]
fn score_reports_speed_and_is_deterministic() {
    let f = fixture();
    let video = f.path("test/video.nncv");
    let mut csvs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = nnc(&["score", "--video", s(&video), "--model", s(&f.path("model.nncm")), "-o", s(&f.path(name))]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).contains("frames/s"), "{}", stdout(&out));
        csvs.push(fs::read(f.path(name)).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert!(text.starts_with("frame_index,raw,smoothed,normalized"));
    assert_eq!(text.lines().count(), 201);
}

#[test]
fn feature_file_model_without_features_is_rejected() {
    let f = fixture();
    let mut model = NormalityModel::load(&f.path("model.nncm")).unwrap();
    model.features.appearance = AppearanceSource::File;
    let path = f.path("file-model.nncm");
    model.save(&path).unwrap();
    let out = nnc(&["score", "--video", s(&f.path("test/video.nncv")), "--model", s(&path), "-o", s(&f.path("x.csv"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--features"), "{}", stderr(&out));
}

#[test]
fn score_then_eval_on_synthetic_clip() {
    let f = fixture();
    let scores = f.path("eval-scores.csv");
    let maps = f.path("eval-maps.nnca");
    let out = nnc(&[
        "score",
        "--video",
        s(&f.path("test/video.nncv")),
        "--model",
        s(&f.path("model.nncm")),
        "-o",
        s(&scores),
        "--maps",
        s(&maps),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = f.path("report.csv");
    let out = nnc(&[
        "eval",
        "--scores",
        s(&scores),
        "--labels",
        s(&f.path("test/labels.csv")),
        "--masks",
        s(&f.path("test/masks.nncv")),
        "--maps",
        s(&maps),
        "-o",
        s(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("frame_auc") && text.contains("pixel_auc"), "{text}");
    assert!(fs::read_to_string(&report).unwrap().contains("frame_auc"));
}

fn write_scores(path: &Path, scores: &[f64]) {
    let mut text = String::from("frame_index,raw,smoothed,normalized\n");
    for (i, v) in scores.iter().enumerate() {
        text.push_str(&format!("{i},{v},{v},{v}\n"));
    }
    fs::write(path, text).unwrap();
}

fn write_labels(path: &Path, labels: &[bool]) {
    let mut text = String::from("frame_index,label\n");
    for (i, &l) in labels.iter().enumerate() {
        text.push_str(&format!("{i},{}\n", l as u8));
    }
    fs::write(path, text).unwrap();
}

fn eval_auc(dir: &Path, scores: &[f64], labels: &[bool]) -> f64 {
    let (sp, lp) = (dir.join("s.csv"), dir.join("l.csv"));
    write_scores(&sp, scores);
    write_labels(&lp, labels);
    let out = nnc(&["eval", "--scores", s(&sp), "--labels", s(&lp)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let line = text.lines().find(|l| l.starts_with("frame_auc")).unwrap();
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn eval_perfect_and_chance_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
    let perfect: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
    assert_eq!(eval_auc(dir.path(), &perfect, &labels), 1.0);
    assert_eq!(eval_auc(dir.path(), &[0.5; 20], &labels), 0.5);
}

#[test]
fn eval_rejects_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (sp, lp) = (dir.path().join("s.csv"), dir.path().join("l.csv"));
    write_scores(&sp, &[0.1, 0.2, 0.3]);
    write_labels(&lp, &[true, false]);
    let out = nnc(&["eval", "--scores", s(&sp), "--labels", s(&lp)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

fn rect_runs(svg: &str) -> Vec<(usize, usize)> {
    let attr = |line: &str, key: &str| -> usize {
        let start = line.find(&format!("{key}=\"")).unwrap() + key.len() + 2;
        let end = start + line[start..].find('"').unwrap();
        line[start..end].parse().unwrap()
    };
    svg.lines()
        .filter(|l| l.contains("class=\"gt\""))
        .map(|l| (attr(l, "data-start"), attr(l, "data-end")))
        .collect()
}

#[test]
fn plot_shades_ground_truth_runs() {
    let dir = tempfile::tempdir().unwrap();
    let scores: Vec<f64> = (0..10).map(|i| (i % 4) as f64 / 3.0).collect();
    let sp = dir.path().join("s.csv");
    write_scores(&sp, &scores);

    let bare = dir.path().join("bare.svg");
    let out = nnc(&["plot", "--scores", s(&sp), "-o", s(&bare)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let svg = fs::read_to_string(&bare).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(rect_runs(&svg).is_empty());
    assert!(!svg.contains("#ffc0cb"));

    let labels = [false, true, true, false, false, true, false, true, true, true];
    let lp = dir.path().join("l.csv");
    write_labels(&lp, &labels);
    let shaded = dir.path().join("gt.svg");
    let out = nnc(&["plot", "--scores", s(&sp), "--labels", s(&lp), "-o", s(&shaded)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let svg = fs::read_to_string(&shaded).unwrap();
    assert_eq!(rect_runs(&svg), vec![(1, 3), (5, 6), (7, 10)]);
}

#[test]
fn config_prints_defaults_and_rejects_bad_files() {
    let out = nnc(&["config"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("nu = 0.01"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[svm]\nnu = 3.0\n").unwrap();
    let out = nnc(&["--config", s(&bad), "config"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}
