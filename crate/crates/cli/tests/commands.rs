use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use udup_core::corpus::{self, Corpus, Split};
use udup_core::detector::{register_external, Detector, ExternalSpec, OutputFormat, Surrogate};
use udup_core::eval::{ratio_report, EvalOptions, Transform};
use udup_core::imageops::{fuse, Patch};
use udup_core::Raster;

fn udup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udup"))
        .args(args)
        .output()
        .expect("udup binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

fn render_small(root: &Path, name: &str) -> PathBuf {
    let conf = write(
        &root.join(format!("{name}.conf")),
        "n_train = 6\nn_test = 4\nmin_side = 64\nmax_side = 96\nfonts = tiny,normal\n",
    );
    let dir = root.join(name);
    ok(&udup(&["render-corpus", "--config", s(&conf), "--seed", "5", "--out", s(&dir)]));
    dir
}

fn train_small_detector(root: &Path, corpus: &Path) -> PathBuf {
    let conf = write(&root.join("det.conf"), "epochs = 2\nmin_recall = 0\n");
    let ckpt = root.join("det").join("surrogate.json");
    ok(&udup(&[
        "train-detector",
        "--config",
        s(&conf),
        "--corpus",
        s(corpus),
        "--out",
        s(&ckpt),
    ]));
    ckpt
}

fn read_manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn unknown_flag_exits_nonzero_with_usage() {
    let out = udup(&["render-corpus", "--no-such-flag"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_exits_nonzero() {
    let out = udup(&["render-everything"]);
    assert!(!out.status.success());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(&dir.path().join("bad.conf"), "n_train = 2\nn_tset = 1\n");
    let out = udup(&["render-corpus", "--config", s(&conf), "--out", s(&dir.path().join("c"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_tset"));
}

#[test]
fn render_is_deterministic_and_records_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = render_small(dir.path(), "a");
    let b = render_small(dir.path(), "b");
    let ma = read_manifest(&a);
    let mb = read_manifest(&b);
    assert_eq!(ma["command"], "render-corpus");
    assert_eq!(ma["seed"], 5);
    assert_eq!(ma["config"]["n_train"], "6");
    assert_eq!(ma["config"], mb["config"]);
    let ca = Corpus::load(&a).unwrap();
    let cb = Corpus::load(&b).unwrap();
    assert_eq!(ca, cb);
    assert_eq!((ca.train.len(), ca.test.len()), (6, 4));
}

#[test]
fn apply_equals_fuse_at_unit_scale() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = render_small(dir.path(), "c");
    let sample = &Corpus::load(&corpus_dir).unwrap().train[0];
    let eps = 30.0 / 255.0;
    let values = Raster::from_fn(7, 7, |y, x| 1.0 - eps * ((y * 7 + x) % 5) as f32 / 4.0);
    let patch = Patch::clipped(&values, eps).unwrap();
    let patch_path = dir.path().join("p.udup");
    patch.save(&patch_path).unwrap();
    let image = corpus_dir.join("train").join(format!("{}.png", sample.id));
    let mask = corpus_dir.join("train").join(format!("{}.mask.png", sample.id));
    let out_dir = dir.path().join("apply-run");
    let out = udup(&[
        "apply",
        "--patch",
        s(&patch_path),
        "--image",
        s(&image),
        "--mask",
        s(&mask),
        "--out",
        "defended.png",
        "--out-dir",
        s(&out_dir),
    ]);
    ok(&out);
    let written = corpus::load_u8(&out_dir.join("defended.png")).unwrap();
    let expected = fuse(sample, &patch, 1.0).unwrap().map(corpus::to_u8);
    assert_eq!(written, expected);
    let m = read_manifest(&out_dir);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);
}

/// Patch values on the 8-bit grid, so the PNG handed to an adapter carries
/// exactly the image the in-process detector sees.
fn grid_patch() -> Patch {
    let values = Raster::from_fn(6, 6, |y, x| 1.0 - ((y + 2 * x) % 4) as f32 * 7.0 / 255.0);
    Patch::new(values, 30.0 / 255.0).unwrap()
}

#[test]
fn adapter_round_trip_matches_direct_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = render_small(dir.path(), "c");
    let ckpt = train_small_detector(dir.path(), &corpus_dir);
    let corpus = Corpus::load(&corpus_dir).unwrap();
    let samples = corpus.split(Split::Test);
    let patch = grid_patch();
    let options = EvalOptions::default();

    let direct = Detector::Surrogate(Surrogate::load(&ckpt).unwrap());
    let want = ratio_report(&direct, samples, &patch, &Transform::None, &options).unwrap();

    let adapter = env!("CARGO_BIN_EXE_surrogate-adapter").to_string();
    for extra in [None, Some("--boxes")] {
        let mut command = vec![adapter.clone(), s(&ckpt).to_string()];
        command.extend(extra.map(str::to_string));
        let external = register_external(ExternalSpec {
            command,
            output: OutputFormat::Auto,
        })
        .unwrap();
        let got = ratio_report(&external, samples, &patch, &Transform::None, &options).unwrap();
        assert_eq!(got.clean, want.clean, "{extra:?}");
        assert_eq!(got.defended, want.defended, "{extra:?}");
    }
}

#[test]
fn adapter_failure_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = render_small(dir.path(), "c");
    let corpus = Corpus::load(&corpus_dir).unwrap();
    let external = register_external(ExternalSpec {
        command: vec![
            env!("CARGO_BIN_EXE_surrogate-adapter").to_string(),
            s(&dir.path().join("missing.json")).to_string(),
        ],
        output: OutputFormat::Auto,
    })
    .unwrap();
    let r = ratio_report(
        &external,
        corpus.split(Split::Test),
        &grid_patch(),
        &Transform::None,
        &EvalOptions::default(),
    );
    assert!(r.is_err());
}

fn pipeline(root: &Path) -> String {
    let corpus_dir = render_small(root, "corpus");
    let ckpt = train_small_detector(root, &corpus_dir);
    let tconf = write(
        &root.join("patch.conf"),
        "iterations = 4\nbatch_size = 3\nside = 8\ndirection = ascent\n",
    );
    let patch_dir = root.join("patch-run");
    ok(&udup(&[
        "train-patch",
        "--config",
        s(&tconf),
        "--corpus",
        s(&corpus_dir),
        "--detector",
        s(&ckpt),
        "--out-dir",
        s(&patch_dir),
    ]));
    let loss = std::fs::read_to_string(patch_dir.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 5);
    assert!(patch_dir.join("patch-0004.udup").is_file());
    let eval_dir = root.join("eval-run");
    ok(&udup(&[
        "evaluate",
        "--patch",
        s(&patch_dir.join("patch.udup")),
        "--detector",
        s(&ckpt),
        "--corpus",
        s(&corpus_dir),
        "--jpeg",
        "80",
        "--overlays",
        "1",
        "--out-dir",
        s(&eval_dir),
    ]));
    assert_eq!(std::fs::read_dir(eval_dir.join("overlays")).unwrap().count(), 1);
    let m = read_manifest(&eval_dir);
    assert_eq!(m["command"], "evaluate");
    std::fs::read_to_string(eval_dir.join("report.csv")).unwrap()
}

#[test]
fn full_pipeline_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path());
    let rb = pipeline(b.path());
    assert_eq!(ra, rb);
    assert!(ra.lines().nth(1).unwrap().contains("jpeg=80"));
}

#[test]
fn sweep_and_ablate_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let corpus_dir = render_small(root, "corpus");
    let ckpt = train_small_detector(root, &corpus_dir);
    let tconf = write(&root.join("patch.conf"), "iterations = 3\nbatch_size = 2\nside = 8\n");
    let patch_dir = root.join("patch-run");
    ok(&udup(&[
        "train-patch", "--config", s(&tconf), "--corpus", s(&corpus_dir),
        "--detector", s(&ckpt), "--out-dir", s(&patch_dir),
    ]));
    let sweep_dir = root.join("sweep-run");
    ok(&udup(&[
        "sweep", "--axis", "scale", "--levels", "0.8,1.5", "--patch", s(&patch_dir.join("patch.udup")),
        "--detector", s(&ckpt), "--corpus", s(&corpus_dir), "--out-dir", s(&sweep_dir),
    ]));
    let csv = std::fs::read_to_string(sweep_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let mui_dir = root.join("mui-run");
    ok(&udup(&[
        "sweep", "--axis", "mui", "--levels", "0.06", "--checkpoints", s(&patch_dir),
        "--detector", s(&ckpt), "--corpus", s(&corpus_dir), "--out-dir", s(&mui_dir),
    ]));
    let ablate_dir = root.join("ablate-run");
    ok(&udup(&[
        "ablate", "--grid", "lambda:0,0.1", "--train-config", s(&tconf),
        "--detector", s(&ckpt), "--corpus", s(&corpus_dir), "--out-dir", s(&ablate_dir),
    ]));
    let csv = std::fs::read_to_string(ablate_dir.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let bad = udup(&[
        "sweep", "--axis", "rotation", "--detector", s(&ckpt), "--corpus", s(&corpus_dir),
        "--out-dir", s(&root.join("x")),
    ]);
    assert!(!bad.status.success());
}
