use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use recfno::cli::{RunConfig, CHECKPOINT_FILE, FAILED_FILE, RUN_CONFIG_FILE};
use recfno::eval::{read_csv_grid, MetricReport};
use recfno::train::History;

fn recfno(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recfno"))
        .args(args)
        .env_remove("RECFNO_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let o = recfno(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_heat(dir: &Path, grid: &str, count: &str) {
    ok(&["gen", "--task", "heat", "--grid", grid, "--count", count, "--seed", "5", "--out", s(dir)]);
}

const SMALL_FNO: &[&str] = &["--layers", "2", "--width", "8", "--modes", "6x6", "--batch", "4", "--lr", "3e-3"];

#[test]
fn gen_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    gen_heat(&a, "12x12", "10");
    gen_heat(&b, "12x12", "10");
    let ds = recfno::data::FieldDataset::read(&a).unwrap();
    assert_eq!(ds.fields.len(), 10);
    assert_eq!(ds.fields[0].shape(), &[12, 12]);
    for f in ["fields.bin", "manifest.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let rc = RunConfig::from_text(&fs::read_to_string(a.join(RUN_CONFIG_FILE)).unwrap(), &a).unwrap();
    assert_eq!(rc.command, "gen");
    assert_eq!(rc.seed, 5);
    assert_eq!(rc.dataset["count"], "10");
}

#[test]
fn import_audits_shapes() {
    let t = tempfile::tempdir().unwrap();
    let (h, w, n) = (3usize, 4usize, 7usize);
    let values: Vec<f32> = (0..h * w * n).map(|k| k as f32 * 0.5).collect();
    let raw = t.path().join("stack.f32");
    fs::write(&raw, values.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()).unwrap();
    let grid = recfno::embed::GridSpec::nodal(h, w, recfno::embed::Extent::unit()).unwrap();
    let m = recfno::data::Manifest::new(grid, recfno::data::default_splits(n), None, 0).unwrap();
    let man = t.path().join("m.txt");
    fs::write(&man, m.to_text()).unwrap();
    let out = t.path().join("imp");
    ok(&["gen", "--task", "import", "--raw", s(&raw), "--manifest", s(&man), "--out", s(&out)]);
    let ds = recfno::data::FieldDataset::read(&out).unwrap();
    assert_eq!(ds.fields.len(), n);
    assert_eq!(ds.fields[6].at2(2, 3), 83.0 * 0.5);

    // one grid short of the manifest
    fs::write(&raw, &fs::read(&raw).unwrap()[..h * w * (n - 1) * 4]).unwrap();
    let bad = t.path().join("bad");
    let o = recfno(&["gen", "--task", "import", "--raw", s(&raw), "--manifest", s(&man), "--out", s(&bad)]);
    assert!(!o.status.success());
    assert!(bad.join(FAILED_FILE).exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let o = recfno(&["train", "--data", "x", "--embedding", "fourier"]);
    assert_eq!(o.status.code(), Some(2));
    let o = recfno(&["gen", "--task", "plasma"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_eval_superres_and_baseline() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    gen_heat(&data, "32x32", "35");
    let d = s(&data);

    let zero = t.path().join("zero");
    let mut args = vec!["train", "--data", d, "--sensors", "16", "--epochs", "0", "--out", s(&zero)];
    args.extend_from_slice(SMALL_FNO);
    ok(&args);
    assert_eq!(recfno::cli::checkpoint_kind(&zero.join(CHECKPOINT_FILE)).unwrap(), "recfno");
    let ev0 = t.path().join("ev0");
    let ck0 = zero.join(CHECKPOINT_FILE);
    ok(&["eval", "--data", d, "--checkpoint", s(&ck0), "--split", "val", "--out", s(&ev0)]);
    let initial = MetricReport::from_csv(&fs::read_to_string(ev0.join("report.csv")).unwrap()).unwrap();

    let run = t.path().join("run");
    let mut args = vec!["train", "--data", d, "--sensors", "16", "--epochs", "10", "--out", s(&run)];
    args.extend_from_slice(SMALL_FNO);
    ok(&args);
    let history = History::from_csv(&fs::read_to_string(run.join("history.csv")).unwrap()).unwrap();
    assert_eq!(history.records.len(), 10);
    let best = history.best().unwrap();
    assert!(best.val_mae < initial.mae, "{} vs {}", best.val_mae, initial.mae);

    let ck = run.join(CHECKPOINT_FILE);
    let ev = t.path().join("ev");
    ok(&["eval", "--data", d, "--checkpoint", s(&ck), "--split", "val", "--out", s(&ev)]);
    let rep = MetricReport::from_csv(&fs::read_to_string(ev.join("report.csv")).unwrap()).unwrap();
    assert!((rep.mae - best.val_mae).abs() <= 1e-6);
    let pred = read_csv_grid(&ev.join("sample0_pred_field.csv")).unwrap();
    assert_eq!(pred.shape(), &[32, 32]);

    let sr = t.path().join("sr");
    ok(&["superres", "--data", d, "--checkpoint", s(&ck), "--scale", "2", "--export", "1", "--out", s(&sr)]);
    let fine = read_csv_grid(&sr.join("sample0_x2_pred_field.csv")).unwrap();
    assert_eq!(fine.shape(), &[64, 64]);
    let pgm = fs::read(sr.join("sample0_x2_pred_error.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n64 64\n255\n"));
    let native = MetricReport::from_csv(&fs::read_to_string(sr.join("report_native.csv")).unwrap()).unwrap();
    let test = MetricReport::from_csv(&fs::read_to_string(run.join("report_test.csv")).unwrap()).unwrap();
    assert_eq!(native.mae, test.mae);

    let base = t.path().join("base");
    ok(&["baseline", "--data", d, "--sensors", "16", "--epochs", "3", "--hidden", "16x16", "--out", s(&base)]);
    let text = fs::read_to_string(base.join("report_test.csv")).unwrap();
    let rep = MetricReport::from_csv(&text).unwrap();
    assert_eq!(rep.per_sample.len(), 5);
    assert!(rep.mae.is_finite() && rep.mae <= rep.max_ae);

    // the baseline cannot be evaluated on a refined grid
    let bsr = t.path().join("bsr");
    let bck = base.join(CHECKPOINT_FILE);
    let o = recfno(&["superres", "--data", d, "--checkpoint", s(&bck), "--scale", "2", "--out", s(&bsr)]);
    assert!(!o.status.success());
    assert!(bsr.join(FAILED_FILE).exists());
}

#[test]
fn config_file_reruns_and_flags_override() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    gen_heat(&data, "12x12", "14");
    let a = t.path().join("a");
    let mut args = vec!["train", "--data", s(&data), "--sensors", "5", "--epochs", "2", "--seed", "9", "--out", s(&a)];
    args.extend_from_slice(SMALL_FNO);
    args.extend_from_slice(&["--modes", "3x3"]);
    ok(&args);

    // same config, new output directory
    let b = t.path().join("b");
    let cfg = a.join(RUN_CONFIG_FILE);
    ok(&["train", "--config", s(&cfg), "--out", s(&b)]);
    assert_eq!(fs::read(a.join(CHECKPOINT_FILE)).unwrap(), fs::read(b.join(CHECKPOINT_FILE)).unwrap());
    assert_eq!(fs::read(a.join("history.csv")).unwrap(), fs::read(b.join("history.csv")).unwrap());
    let rb = RunConfig::from_text(&fs::read_to_string(b.join(RUN_CONFIG_FILE)).unwrap(), &b).unwrap();
    assert_eq!(rb.seed, 9);
    assert_eq!(rb.model["modes"], "3x3");

    let c = t.path().join("c");
    ok(&["--config", s(&cfg), "--epochs", "1", "--out", s(&c)]);
    let rc = RunConfig::from_text(&fs::read_to_string(c.join(RUN_CONFIG_FILE)).unwrap(), &c).unwrap();
    assert_eq!(rc.train["epochs"], "1");
    assert_eq!(rc.command, "train");

    let o = recfno(&["eval", "--config", s(&cfg), "--out", s(&c)]);
    assert!(!o.status.success());
}

#[test]
fn seed_comes_from_the_environment() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("g");
    let o = Command::new(env!("CARGO_BIN_EXE_recfno"))
        .args(["gen", "--task", "darcy", "--grid", "8x8", "--count", "7", "--out", s(&out)])
        .env("RECFNO_SEED", "123")
        .output()
        .unwrap();
    assert!(o.status.success());
    let rc = RunConfig::from_text(&fs::read_to_string(out.join(RUN_CONFIG_FILE)).unwrap(), &out).unwrap();
    assert_eq!(rc.seed, 123);
    assert_eq!(recfno::data::FieldDataset::read(&out).unwrap().manifest.seed, 123);
}
