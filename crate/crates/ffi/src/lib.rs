//! C interface: opaque handles for datasets and trained models, status
//! codes for every call, and a per-thread last-error message.
//!
//! Fields cross the boundary as row-major `double` arrays of `n_y * n_x`
//! values. Handles are released with the matching `*_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use recfno::data::{default_splits, generate, observe, FieldDataset, Generator, TaskKind};
use recfno::embed::{GridSpec, ObservationSet};
use recfno::eval::{self, TrainedModel};
use recfno::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecfnoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Config = 4,
    Io = 5,
    Format = 6,
    Resolution = 7,
    Numeric = 8,
    Solver = 9,
    Diverged = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// A dataset of fields on one grid.
pub struct RecfnoDataset {
    inner: FieldDataset,
}

/// A trained RecFNO or POD-MLP model with its sensor layout.
pub struct RecfnoModel {
    inner: TrainedModel,
    positions: Vec<(f64, f64)>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RecfnoStatus {
    match e {
        Error::Shape(_) => RecfnoStatus::Shape,
        Error::NonFinite(_) | Error::Symmetry { .. } => RecfnoStatus::Numeric,
        Error::Modes(_) | Error::Config(_) | Error::Sensor(_) | Error::Contract(_) => RecfnoStatus::Config,
        Error::Solver(_) => RecfnoStatus::Solver,
        Error::Diverged { .. } => RecfnoStatus::Diverged,
        Error::Format { .. } => RecfnoStatus::Format,
        Error::Resolution(_) => RecfnoStatus::Resolution,
        Error::Io(_) => RecfnoStatus::Io,
    }
}

struct Fail(RecfnoStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail(status: RecfnoStatus, msg: &str) -> Fail {
    Fail(status, msg.to_string())
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RecfnoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RecfnoStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            RecfnoStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(fail(RecfnoStatus::NullPointer, "null path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RecfnoStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(fail(RecfnoStatus::NullPointer, "null input array"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(fail(RecfnoStatus::NullPointer, "null output array"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const RecfnoModel) -> Result<&'a RecfnoModel, Fail> {
    m.as_ref().ok_or_else(|| fail(RecfnoStatus::NullPointer, "null model"))
}

unsafe fn dataset_ref<'a>(d: *const RecfnoDataset) -> Result<&'a RecfnoDataset, Fail> {
    d.as_ref().ok_or_else(|| fail(RecfnoStatus::NullPointer, "null dataset"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn recfno_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// without the terminator.
#[no_mangle]
pub unsafe extern "C" fn recfno_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Mean and maximum absolute error between two arrays of `len` values.
#[no_mangle]
pub unsafe extern "C" fn recfno_metrics(
    truth: *const f64,
    pred: *const f64,
    len: usize,
    mae: *mut f64,
    max_ae: *mut f64,
) -> RecfnoStatus {
    guard(|| {
        let (u, p) = (slice_arg(truth, len)?, slice_arg(pred, len)?);
        if mae.is_null() || max_ae.is_null() {
            return Err(fail(RecfnoStatus::NullPointer, "null metric output"));
        }
        let shape = [1, len];
        let u = recfno::Tensor::new(&shape, u.to_vec())?;
        let p = recfno::Tensor::new(&shape, p.to_vec())?;
        *mae = eval::mae(&u, &p)?;
        *max_ae = eval::max_ae(&u, &p)?;
        Ok(())
    })
}

/// Generates a dataset of `count` snapshots for `task` ("darcy", "heat" or
/// "wake") on an `n_y` x `n_x` grid; zero sizes select the task's default
/// grid. Split 5:1:1 into train, val and test.
#[no_mangle]
pub unsafe extern "C" fn recfno_dataset_generate(
    task: *const c_char,
    n_y: usize,
    n_x: usize,
    count: usize,
    seed: u64,
    out: *mut *mut RecfnoDataset,
) -> RecfnoStatus {
    guard(|| {
        if task.is_null() || out.is_null() {
            return Err(fail(RecfnoStatus::NullPointer, "null argument"));
        }
        let name = CStr::from_ptr(task)
            .to_str()
            .map_err(|_| fail(RecfnoStatus::InvalidArgument, "task is not UTF-8"))?;
        let kind: TaskKind = name.parse()?;
        let gen = Generator::default_for(kind)?;
        let default = gen.default_grid();
        let grid = if n_y == 0 && n_x == 0 {
            default
        } else {
            GridSpec::new(n_y, n_x, default.extent, default.layout)?
        };
        let ds = generate(&gen, &grid, default_splits(count), seed)?;
        *out = Box::into_raw(Box::new(RecfnoDataset { inner: ds }));
        Ok(())
    })
}

/// Reads a dataset directory written by `recfno gen`.
#[no_mangle]
pub unsafe extern "C" fn recfno_dataset_load(dir: *const c_char, out: *mut *mut RecfnoDataset) -> RecfnoStatus {
    guard(|| {
        let dir = path_arg(dir)?;
        if out.is_null() {
            return Err(fail(RecfnoStatus::NullPointer, "null output handle"));
        }
        let ds = FieldDataset::read(&dir)?;
        *out = Box::into_raw(Box::new(RecfnoDataset { inner: ds }));
        Ok(())
    })
}

/// Writes the dataset to `dir`.
#[no_mangle]
pub unsafe extern "C" fn recfno_dataset_save(ds: *const RecfnoDataset, dir: *const c_char) -> RecfnoStatus {
    guard(|| {
        let ds = dataset_ref(ds)?;
        ds.inner.write(&path_arg(dir)?)?;
        Ok(())
    })
}

/// Number of fields and grid size.
#[no_mangle]
pub unsafe extern "C" fn recfno_dataset_shape(
    ds: *const RecfnoDataset,
    count: *mut usize,
    n_y: *mut usize,
    n_x: *mut usize,
) -> RecfnoStatus {
    guard(|| {
        let ds = dataset_ref(ds)?;
        if count.is_null() || n_y.is_null() || n_x.is_null() {
            return Err(fail(RecfnoStatus::NullPointer, "null shape output"));
        }
        *count = ds.inner.fields.len();
        *n_y = ds.inner.manifest.grid.n_y;
        *n_x = ds.inner.manifest.grid.n_x;
        Ok(())
    })
}

/// Copies field `index` into `out`, which holds `len >= n_y * n_x` values.
#[no_mangle]
pub unsafe extern "C" fn recfno_dataset_field(
    ds: *const RecfnoDataset,
    index: usize,
    out: *mut f64,
    len: usize,
) -> RecfnoStatus {
    guard(|| {
        let ds = dataset_ref(ds)?;
        let f = ds
            .inner
            .fields
            .get(index)
            .ok_or_else(|| fail(RecfnoStatus::InvalidArgument, "field index out of range"))?;
        if len < f.len() {
            return Err(fail(RecfnoStatus::BufferTooSmall, "output buffer too small"));
        }
        out_slice(out, len)?[..f.len()].copy_from_slice(f.data());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn recfno_dataset_free(ds: *mut RecfnoDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Loads a checkpoint written by `recfno train` or `recfno baseline`.
#[no_mangle]
pub unsafe extern "C" fn recfno_model_load(path: *const c_char, out: *mut *mut RecfnoModel) -> RecfnoStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(fail(RecfnoStatus::NullPointer, "null output handle"));
        }
        let inner = TrainedModel::load(&path)?;
        let positions = inner.positions()?;
        *out = Box::into_raw(Box::new(RecfnoModel { inner, positions }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn recfno_model_free(m: *mut RecfnoModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Training grid of the model.
#[no_mangle]
pub unsafe extern "C" fn recfno_model_grid(m: *const RecfnoModel, n_y: *mut usize, n_x: *mut usize) -> RecfnoStatus {
    guard(|| {
        let m = model_ref(m)?;
        if n_y.is_null() || n_x.is_null() {
            return Err(fail(RecfnoStatus::NullPointer, "null shape output"));
        }
        let g = m.inner.grid();
        *n_y = g.n_y;
        *n_x = g.n_x;
        Ok(())
    })
}

/// Number of sensors the model reads.
#[no_mangle]
pub unsafe extern "C" fn recfno_model_sensor_count(m: *const RecfnoModel, count: *mut usize) -> RecfnoStatus {
    guard(|| {
        let m = model_ref(m)?;
        if count.is_null() {
            return Err(fail(RecfnoStatus::NullPointer, "null count output"));
        }
        *count = m.positions.len();
        Ok(())
    })
}

/// Sensor coordinates as `x0, y0, x1, y1, ...` into `xy` of `len >= 2n`.
#[no_mangle]
pub unsafe extern "C" fn recfno_model_sensors(m: *const RecfnoModel, xy: *mut f64, len: usize) -> RecfnoStatus {
    guard(|| {
        let m = model_ref(m)?;
        if len < 2 * m.positions.len() {
            return Err(fail(RecfnoStatus::BufferTooSmall, "output buffer too small"));
        }
        let out = out_slice(xy, len)?;
        for (k, (x, y)) in m.positions.iter().enumerate() {
            out[2 * k] = *x;
            out[2 * k + 1] = *y;
        }
        Ok(())
    })
}

/// Reconstructs a field from `n_values` sensor readings (in the order of
/// [`recfno_model_sensors`]) on the training grid refined `scale` times.
/// `out` must hold `scale^2 * n_y * n_x` values.
#[no_mangle]
pub unsafe extern "C" fn recfno_model_predict(
    m: *const RecfnoModel,
    values: *const f64,
    n_values: usize,
    scale: usize,
    out: *mut f64,
    len: usize,
) -> RecfnoStatus {
    guard(|| {
        let m = model_ref(m)?;
        let v = slice_arg(values, n_values)?;
        if n_values != m.positions.len() {
            return Err(fail(
                RecfnoStatus::InvalidArgument,
                &format!("{n_values} readings for {} sensors", m.positions.len()),
            ));
        }
        let grid = m.inner.grid();
        let obs = ObservationSet::new(m.positions.clone(), v.to_vec(), &grid)?;
        let field = m.inner.predict(&obs, scale)?;
        if len < field.len() {
            return Err(fail(RecfnoStatus::BufferTooSmall, "output buffer too small"));
        }
        out_slice(out, len)?[..field.len()].copy_from_slice(field.data());
        Ok(())
    })
}

/// Reads the model's sensors from a full field of `n_y * n_x` values into
/// `values` (one per sensor).
#[no_mangle]
pub unsafe extern "C" fn recfno_model_observe(
    m: *const RecfnoModel,
    field: *const f64,
    len: usize,
    values: *mut f64,
    n_values: usize,
) -> RecfnoStatus {
    guard(|| {
        let m = model_ref(m)?;
        let grid = m.inner.grid();
        if len != grid.len() {
            return Err(fail(RecfnoStatus::Shape, "field length does not match the model grid"));
        }
        if n_values < m.positions.len() {
            return Err(fail(RecfnoStatus::BufferTooSmall, "output buffer too small"));
        }
        let f = recfno::Tensor::new(&[grid.n_y, grid.n_x], slice_arg(field, len)?.to_vec())?;
        let obs = observe(&f, &m.positions, &grid)?;
        out_slice(values, n_values)?[..obs.values.len()].copy_from_slice(&obs.values);
        Ok(())
    })
}
