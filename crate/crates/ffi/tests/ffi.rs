use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use recfno::data::{Placement, TaskKind};
use recfno::embed::{EmbeddingKind, ObservationSet};
use recfno::eval::{run_experiment, ModelSpec, RunSpec, TrainedModel};
use recfno::train::TrainConfig;
use recfno_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn path(p: &Path) -> CString {
    cstr(p.to_str().unwrap())
}

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe { recfno_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(recfno_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn errors_carry_a_status_and_a_message() {
    let mut ds = ptr::null_mut();
    let s = unsafe { recfno_dataset_generate(cstr("plasma").as_ptr(), 8, 8, 7, 0, &mut ds) };
    assert_eq!(s, RecfnoStatus::Config);
    assert!(ds.is_null());
    assert!(last_error().contains("plasma"), "{}", last_error());

    let s = unsafe { recfno_dataset_generate(ptr::null(), 8, 8, 7, 0, &mut ds) };
    assert_eq!(s, RecfnoStatus::NullPointer);

    let s = unsafe { recfno_dataset_load(cstr("/nonexistent/recfno").as_ptr(), &mut ds) };
    assert_eq!(s, RecfnoStatus::Io);

    // truncated copy is still terminated; the full length is reported
    let mut small = [0 as c_char; 4];
    let full = unsafe { recfno_last_error(small.as_mut_ptr(), small.len()) };
    assert!(full > 3);
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes().len(), 3);

    // a successful call clears the message
    let (a, b) = ([1.0, 2.0], [1.5, 2.0]);
    let (mut mae, mut max) = (0.0, 0.0);
    let s = unsafe { recfno_metrics(a.as_ptr(), b.as_ptr(), 2, &mut mae, &mut max) };
    assert_eq!(s, RecfnoStatus::Ok);
    assert_eq!((mae, max), (0.25, 0.5));
    assert_eq!(unsafe { recfno_last_error(ptr::null_mut(), 0) }, 0);
}

#[test]
fn dataset_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { recfno_dataset_generate(cstr("darcy").as_ptr(), 9, 11, 7, 4, &mut ds) }, RecfnoStatus::Ok);
    let (mut n, mut h, mut w) = (0, 0, 0);
    assert_eq!(unsafe { recfno_dataset_shape(ds, &mut n, &mut h, &mut w) }, RecfnoStatus::Ok);
    assert_eq!((n, h, w), (7, 9, 11));

    let dir = path(&t.path().join("d"));
    assert_eq!(unsafe { recfno_dataset_save(ds, dir.as_ptr()) }, RecfnoStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { recfno_dataset_load(dir.as_ptr(), &mut back) }, RecfnoStatus::Ok);
    let (mut f1, mut f2) = (vec![0.0; h * w], vec![0.0; h * w]);
    for k in 0..n {
        assert_eq!(unsafe { recfno_dataset_field(ds, k, f1.as_mut_ptr(), f1.len()) }, RecfnoStatus::Ok);
        assert_eq!(unsafe { recfno_dataset_field(back, k, f2.as_mut_ptr(), f2.len()) }, RecfnoStatus::Ok);
        assert_eq!(f1, f2);
    }
    assert_eq!(unsafe { recfno_dataset_field(ds, n, f1.as_mut_ptr(), f1.len()) }, RecfnoStatus::InvalidArgument);
    assert_eq!(unsafe { recfno_dataset_field(ds, 0, f1.as_mut_ptr(), h * w - 1) }, RecfnoStatus::BufferTooSmall);
    unsafe {
        recfno_dataset_free(ds);
        recfno_dataset_free(back);
        recfno_dataset_free(ptr::null_mut());
    }
}

#[test]
fn model_predicts_like_the_library() {
    let t = tempfile::tempdir().unwrap();
    let gen = recfno::data::Generator::default_for(TaskKind::Heat).unwrap();
    let base = gen.default_grid();
    let grid = recfno::embed::GridSpec::new(16, 16, base.extent, base.layout).unwrap();
    let ds = recfno::data::generate(&gen, &grid, recfno::data::default_splits(14), 2).unwrap();
    let spec = RunSpec {
        model: ModelSpec::RecFno { embedding: EmbeddingKind::Voronoi, layers: 1, width: 4, modes: (3, 3), proj_hidden: 8 },
        sensors: 5,
        placement: Placement::Random,
        train: TrainConfig { epochs: 2, batch_size: 4, lr0: 1e-3, gamma: 0.97, seed: 3, checkpoint: None },
    };
    let out = run_experiment(&ds, &spec, None).unwrap();
    let ck = t.path().join("m.ckpt");
    out.model.checkpoint().save(&ck).unwrap();

    let mut m = ptr::null_mut();
    assert_eq!(unsafe { recfno_model_load(path(&ck).as_ptr(), &mut m) }, RecfnoStatus::Ok);
    let (mut h, mut w, mut n) = (0, 0, 0);
    assert_eq!(unsafe { recfno_model_grid(m, &mut h, &mut w) }, RecfnoStatus::Ok);
    assert_eq!((h, w), (16, 16));
    assert_eq!(unsafe { recfno_model_sensor_count(m, &mut n) }, RecfnoStatus::Ok);
    assert_eq!(n, 5);
    let mut xy = vec![0.0; 2 * n];
    assert_eq!(unsafe { recfno_model_sensors(m, xy.as_mut_ptr(), xy.len() - 1) }, RecfnoStatus::BufferTooSmall);
    assert_eq!(unsafe { recfno_model_sensors(m, xy.as_mut_ptr(), xy.len()) }, RecfnoStatus::Ok);
    let positions: Vec<(f64, f64)> = xy.chunks(2).map(|p| (p[0], p[1])).collect();
    assert_eq!(positions, out.model.positions().unwrap());

    let field = &ds.fields[13];
    let mut values = vec![0.0; n];
    let s = unsafe { recfno_model_observe(m, field.data().as_ptr(), field.len(), values.as_mut_ptr(), n) };
    assert_eq!(s, RecfnoStatus::Ok);

    let reference = TrainedModel::load(&ck).unwrap();
    for scale in [1, 2] {
        let mut pred = vec![0.0; scale * scale * h * w];
        let s = unsafe { recfno_model_predict(m, values.as_ptr(), n, scale, pred.as_mut_ptr(), pred.len()) };
        assert_eq!(s, RecfnoStatus::Ok, "{}", last_error());
        let obs = ObservationSet::new(positions.clone(), values.clone(), &grid).unwrap();
        assert_eq!(pred, reference.predict(&obs, scale).unwrap().data());
    }
    let mut pred = vec![0.0; h * w];
    let s = unsafe { recfno_model_predict(m, values.as_ptr(), n - 1, 1, pred.as_mut_ptr(), pred.len()) };
    assert_eq!(s, RecfnoStatus::InvalidArgument);
    let s = unsafe { recfno_model_predict(m, values.as_ptr(), n, 2, pred.as_mut_ptr(), pred.len()) };
    assert_eq!(s, RecfnoStatus::BufferTooSmall);
    let s = unsafe { recfno_model_observe(m, field.data().as_ptr(), field.len() - 1, values.as_mut_ptr(), n) };
    assert_eq!(s, RecfnoStatus::Shape);
    unsafe { recfno_model_free(m) };
}

const HEADER: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/include/recfno.h");

#[test]
fn header_declares_the_interface() {
    let h = std::fs::read_to_string(HEADER).unwrap();
    for name in [
        "recfno_version",
        "recfno_last_error",
        "recfno_metrics",
        "recfno_dataset_generate",
        "recfno_dataset_load",
        "recfno_dataset_save",
        "recfno_dataset_shape",
        "recfno_dataset_field",
        "recfno_dataset_free",
        "recfno_model_load",
        "recfno_model_free",
        "recfno_model_grid",
        "recfno_model_sensor_count",
        "recfno_model_sensors",
        "recfno_model_predict",
        "recfno_model_observe",
        "typedef struct RecfnoDataset RecfnoDataset",
        "typedef struct RecfnoModel RecfnoModel",
        "RECFNO_STATUS_OK = 0",
        "RECFNO_STATUS_PANIC = 12",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c_and_cxx() {
    let Ok(cc) = which_cc() else { return };
    let t = tempfile::tempdir().unwrap();
    let src = t.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"recfno.h\"\n\
         int main(void) {\n\
           RecfnoModel *m = 0;\n\
           size_t n = 0;\n\
           RecfnoStatus s = recfno_model_sensor_count(m, &n);\n\
           return s == RECFNO_STATUS_NULL_POINTER ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let include = Path::new(HEADER).parent().unwrap();
    for lang in ["c", "c++"] {
        let o = Command::new(&cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(include)
            .arg(&src)
            .output()
            .unwrap();
        assert!(o.status.success(), "{lang}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "clang", "gcc"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
