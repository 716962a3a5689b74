//! Dataset files.
//!
//! `fields.bin` (little-endian): magic `b"RFNO"`, version u32, n_y u32,
//! n_x u32, count u32, then `count` row-major `f32` grids.
//! `manifest.txt`: `key=value` lines with the grid, ordered splits, sensor
//! layout, generator and seed, and training-split statistics.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use super::Generator;
use crate::embed::{meta_parse, meta_str, GridSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATA_MAGIC: &[u8; 4] = b"RFNO";
pub const DATA_VERSION: u32 = 1;
pub const FIELDS_FILE: &str = "fields.bin";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub name: String,
    pub start: usize,
    pub count: usize,
}

impl Split {
    pub fn new(name: &str, start: usize, count: usize) -> Self {
        Self {
            name: name.to_string(),
            start,
            count,
        }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.count
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub grid: GridSpec,
    pub splits: Vec<Split>,
    /// `None` for imported data.
    pub generator: Option<Generator>,
    pub seed: u64,
    pub sensors: Vec<(f64, f64)>,
    /// Mean and standard deviation over the training split.
    pub field_stats: Option<(f64, f64)>,
}

impl Manifest {
    /// Splits must be contiguous from 0, in declaration order.
    pub fn new(grid: GridSpec, splits: Vec<Split>, generator: Option<Generator>, seed: u64) -> Result<Self> {
        let mut next = 0;
        for s in &splits {
            if s.start != next {
                return Err(Error::Config(format!("split '{}' starts at {} instead of {next}", s.name, s.start)));
            }
            if s.name.is_empty() || s.name.contains(['=', '\n', '.']) {
                return Err(Error::Config(format!("bad split name '{}'", s.name)));
            }
            next += s.count;
        }
        let mut names: Vec<&str> = splits.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != splits.len() {
            return Err(Error::Config("duplicate split names".into()));
        }
        Ok(Self {
            grid,
            splits,
            generator,
            seed,
            sensors: Vec::new(),
            field_stats: None,
        })
    }

    pub fn count(&self) -> usize {
        self.splits.iter().map(|s| s.count).sum()
    }

    pub fn split(&self, name: &str) -> Result<&Split> {
        self.splits
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Config(format!("dataset has no '{name}' split")))
    }

    pub fn to_text(&self) -> String {
        let mut meta = IndexMap::new();
        meta.insert("version".to_string(), DATA_VERSION.to_string());
        match &self.generator {
            Some(g) => g.to_meta(&mut meta),
            None => {
                meta.insert("generator".into(), "import".into());
            }
        }
        meta.insert("seed".into(), self.seed.to_string());
        self.grid.to_meta("grid", &mut meta);
        for s in &self.splits {
            meta.insert(format!("split.{}", s.name), format!("{},{}", s.start, s.count));
        }
        if !self.sensors.is_empty() {
            let s: Vec<String> = self.sensors.iter().map(|(x, y)| format!("{x}:{y}")).collect();
            meta.insert("sensors".into(), s.join(";"));
        }
        if let Some((m, s)) = self.field_stats {
            meta.insert("stats.mean".into(), m.to_string());
            meta.insert("stats.std".into(), s.to_string());
        }
        meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut meta = IndexMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(origin, format!("bad manifest line '{line}'")))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
        let version: u32 = meta_parse(&meta, "version")?;
        if version != DATA_VERSION {
            return Err(Error::format(origin, format!("unsupported manifest version {version}")));
        }
        let grid = GridSpec::from_meta("grid", &meta)?;
        let mut splits = Vec::new();
        for (k, v) in &meta {
            if let Some(name) = k.strip_prefix("split.") {
                let (a, b) = v
                    .split_once(',')
                    .ok_or_else(|| Error::format(origin, format!("bad split '{v}'")))?;
                let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| Error::format(origin, e.to_string()));
                splits.push(Split::new(name, parse(a)?, parse(b)?));
            }
        }
        let mut m = Self::new(grid, splits, Generator::from_meta(&meta)?, meta_parse(&meta, "seed")?)?;
        if let Ok(s) = meta_str(&meta, "sensors") {
            m.sensors = s
                .split(';')
                .map(|p| {
                    let (x, y) = p.split_once(':').ok_or_else(|| Error::format(origin, format!("bad sensor '{p}'")))?;
                    let f = |t: &str| t.parse::<f64>().map_err(|e| Error::format(origin, e.to_string()));
                    Ok((f(x)?, f(y)?))
                })
                .collect::<Result<_>>()?;
        }
        if meta.contains_key("stats.mean") {
            m.field_stats = Some((meta_parse(&meta, "stats.mean")?, meta_parse(&meta, "stats.std")?));
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDataset {
    pub manifest: Manifest,
    pub fields: Vec<Tensor>,
}

impl FieldDataset {
    /// Checks shapes and counts against the manifest and records the
    /// training-split statistics when a `train` split exists.
    pub fn new(mut manifest: Manifest, fields: Vec<Tensor>) -> Result<Self> {
        let (n_y, n_x) = manifest.grid.shape();
        if fields.len() != manifest.count() {
            return Err(Error::shape(format!(
                "{} fields for splits totalling {}",
                fields.len(),
                manifest.count()
            )));
        }
        if let Some(f) = fields.iter().find(|f| f.shape() != [n_y, n_x]) {
            return Err(Error::shape(format!("field {:?} on grid {n_y}x{n_x}", f.shape())));
        }
        if let Ok(train) = manifest.split("train") {
            let train = &fields[train.range()];
            if !train.is_empty() {
                let n = (train.len() * n_y * n_x) as f64;
                let mean = train.iter().map(|f| f.sum()).sum::<f64>() / n;
                let var = train
                    .iter()
                    .flat_map(|f| f.data().iter())
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>()
                    / n;
                manifest.field_stats = Some((mean, var.sqrt()));
            }
        }
        Ok(Self { manifest, fields })
    }

    pub fn split(&self, name: &str) -> Result<&[Tensor]> {
        Ok(&self.fields[self.manifest.split(name)?.range()])
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_fields(&dir.join(FIELDS_FILE), &self.manifest.grid, &self.fields)?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest.to_text())?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let manifest = Manifest::from_text(&fs::read_to_string(&mpath)?, &mpath)?;
        let fields = read_fields(&dir.join(FIELDS_FILE), Some(&manifest.grid))?;
        Self::new(manifest, fields)
    }
}

pub fn write_fields(path: &Path, grid: &GridSpec, fields: &[Tensor]) -> Result<()> {
    let mut out = Vec::with_capacity(20 + fields.len() * grid.len() * 4);
    out.extend_from_slice(DATA_MAGIC);
    for v in [DATA_VERSION as usize, grid.n_y, grid.n_x, fields.len()] {
        let v = u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit in u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for f in fields {
        if f.shape() != [grid.n_y, grid.n_x] {
            return Err(Error::shape(format!("field {:?} on grid {:?}", f.shape(), grid.shape())));
        }
        for &v in f.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn decode_f32(raw: &[u8], n_y: usize, n_x: usize, path: &Path) -> Result<Vec<Tensor>> {
    let per = n_y * n_x * 4;
    if per == 0 || raw.len() % per != 0 {
        return Err(Error::format(path, format!("{} bytes is not a whole number of {n_y}x{n_x} grids", raw.len())));
    }
    raw.chunks_exact(per)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            Tensor::new(&[n_y, n_x], data).map_err(|e| Error::format(path, e.to_string()))
        })
        .collect()
}

/// Reads a `fields.bin`; when `grid` is given its shape must match the
/// header.
pub fn read_fields(path: &Path, grid: Option<&GridSpec>) -> Result<Vec<Tensor>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 || &bytes[..4] != DATA_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let word = |k: usize| u32::from_le_bytes([bytes[4 * k], bytes[4 * k + 1], bytes[4 * k + 2], bytes[4 * k + 3]]) as usize;
    let (version, n_y, n_x, count) = (word(1), word(2), word(3), word(4));
    if version != DATA_VERSION as usize {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    if let Some(g) = grid {
        if (n_y, n_x) != g.shape() {
            return Err(Error::format(path, format!("header grid {n_y}x{n_x}, manifest {:?}", g.shape())));
        }
    }
    let body = &bytes[20..];
    if body.len() != count * n_y * n_x * 4 {
        return Err(Error::format(path, format!("header declares {count} grids, body holds {} bytes", body.len())));
    }
    decode_f32(body, n_y, n_x, path)
}

/// Imports a headerless little-endian `f32` stack described by a manifest
/// (grid and splits are required; the generator is recorded as `import`).
pub fn import_raw(raw: &Path, manifest: &Path) -> Result<FieldDataset> {
    let mut m = Manifest::from_text(&fs::read_to_string(manifest)?, manifest)?;
    m.generator = None;
    let bytes = fs::read(raw)?;
    let fields = decode_f32(&bytes, m.grid.n_y, m.grid.n_x, raw)?;
    if fields.len() != m.count() {
        return Err(Error::format(raw, format!("{} grids, manifest declares {}", fields.len(), m.count())));
    }
    FieldDataset::new(m, fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_splits, generate, HeatParams};
    use crate::embed::Extent;

    fn small() -> FieldDataset {
        let grid = GridSpec::nodal(8, 12, Extent::unit()).unwrap();
        generate(&Generator::Heat(HeatParams::default()), &grid, default_splits(5), 3).unwrap()
    }

    #[test]
    fn write_then_read_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = small();
        ds.manifest.sensors = vec![(0.25, 0.5), (0.75, 0.125)];
        ds.write(dir.path()).unwrap();
        let back = FieldDataset::read(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.manifest.count(), back.fields.len());
    }

    #[test]
    fn header_mismatches_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small();
        ds.write(dir.path()).unwrap();
        let path = dir.path().join(FIELDS_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 2;
        fs::write(&path, &bytes).unwrap();
        assert!(FieldDataset::read(dir.path()).is_err());
        bytes[4] = 1;
        bytes[8] = 9;
        fs::write(&path, &bytes).unwrap();
        assert!(FieldDataset::read(dir.path()).is_err());
    }

    #[test]
    fn splits_must_be_contiguous_and_unique() {
        let g = GridSpec::nodal(4, 4, Extent::unit()).unwrap();
        assert!(Manifest::new(g, vec![Split::new("train", 1, 2)], None, 0).is_err());
        assert!(Manifest::new(g, vec![Split::new("a", 0, 1), Split::new("a", 1, 1)], None, 0).is_err());
    }

    #[test]
    fn raw_import_reproduces_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small();
        let mut raw = Vec::new();
        for f in &ds.fields {
            for &v in f.data() {
                raw.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        fs::write(dir.path().join("stack.f32"), &raw).unwrap();
        fs::write(dir.path().join("m.txt"), ds.manifest.to_text()).unwrap();
        let imported = import_raw(&dir.path().join("stack.f32"), &dir.path().join("m.txt")).unwrap();
        assert_eq!(imported.fields, ds.fields);
        assert_eq!(imported.manifest.generator, None);
        fs::write(dir.path().join("short.f32"), &raw[..raw.len() - 4]).unwrap();
        assert!(import_raw(&dir.path().join("short.f32"), &dir.path().join("m.txt")).is_err());
    }
}
