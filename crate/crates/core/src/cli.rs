//! Command-line front end.
//!
//! Every command writes its resolved configuration to `run_config.txt` in
//! the output directory. That file can be passed back with `--config`;
//! flags given on the command line override its values.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use indexmap::IndexMap;

use crate::baseline::DEFAULT_HIDDEN;
use crate::checkpoint::Checkpoint;
use crate::data::{default_splits, generate, import_raw, FieldDataset, Generator, NoiseTarget, Placement, TaskKind};
use crate::embed::{parse_pair, snap_sensors, EmbeddingKind, Extent, GridSpec};
use crate::error::{Error, Result};
use crate::eval::{
    export_fields, fine_truth, mode_ablation, noise_experiment, rows_to_csv, run_experiment, sensor_sweep,
    superres_eval, MetricReport, ModelSpec, RunSpec, TrainedModel,
};
use crate::rng;
use crate::spectral::{DEFAULT_LAYERS, DEFAULT_WIDTH};
use crate::tensor::Tensor;
use crate::train::{write_history, TrainConfig, DEFAULT_BATCH, DEFAULT_EPOCHS, DEFAULT_GAMMA, DEFAULT_LR};

pub const RUN_CONFIG_FILE: &str = "run_config.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const FAILED_FILE: &str = "FAILED";

const NOISE_SEED_STREAM: u64 = 0x4E4F_4953;

#[derive(Parser, Debug)]
#[command(name = "recfno", version, about = "Field reconstruction from sparse sensors")]
pub struct Cli {
    /// Global seed; each command derives its streams from it.
    #[arg(long, global = true, env = "RECFNO_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Config file of `key = value` lines; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for independent sweep points.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate (or import) a dataset.
    Gen(GenArgs),
    /// Train RecFNO.
    Train(TrainArgs),
    /// Train the POD-MLP baseline.
    Baseline(BaselineArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Evaluate a checkpoint on a refined grid against regenerated truth.
    Superres(SuperresArgs),
    /// MAE against sensor count.
    Sweep(SweepArgs),
    /// MAE against SNR.
    Noise(NoiseArgs),
    /// MAE against retained Fourier modes.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// `darcy`, `heat`, `wake` or `import`
    #[arg(long)]
    pub task: TaskKind,
    /// `HxW`; defaults to the task's grid.
    #[arg(long)]
    pub grid: Option<String>,
    /// Number of snapshots, split 5:1:1 into train, val and test
    #[arg(long, default_value_t = 700)]
    pub count: usize,
    /// Raw little-endian f32 stack (import only).
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Manifest describing `--raw` (import only).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SensorArgs {
    #[arg(long, default_value_t = 32)]
    pub sensors: usize,
    #[arg(long, default_value = "uniform")]
    pub placement: Placement,
}

#[derive(Args, Debug, Clone)]
pub struct FnoArgs {
    #[arg(long, default_value = "voronoi")]
    pub embedding: EmbeddingKind,
    #[arg(long, default_value_t = DEFAULT_LAYERS)]
    pub layers: usize,
    #[arg(long, default_value_t = DEFAULT_WIDTH)]
    pub width: usize,
    /// `K1xK2`.
    #[arg(long, default_value = "12x12")]
    pub modes: String,
    /// Hidden width of the projection head; defaults to 4x width.
    #[arg(long)]
    pub proj_hidden: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct OptArgs {
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    pub batch: usize,
    #[arg(long, default_value_t = DEFAULT_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub sensors: SensorArgs,
    #[command(flatten)]
    pub fno: FnoArgs,
    #[command(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub sensors: SensorArgs,
    /// Hidden widths `AxB`.
    #[arg(long, default_value = "256x256")]
    pub hidden: String,
    #[command(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `model.ckpt` written by `train` or `baseline`
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Number of samples rendered as rasters.
    #[arg(long, default_value_t = 2)]
    pub export: usize,
}

#[derive(Args, Debug)]
pub struct SuperresArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `model.ckpt` written by `train` or `baseline`
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 2)]
    pub export: usize,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated sensor counts.
    #[arg(long, default_value = "8,16,32,64")]
    pub counts: String,
    /// Comma-separated models: recfno-mask, recfno-voronoi, recfno-mlp, pod-mlp.
    #[arg(long, default_value = "recfno-mask,recfno-voronoi,recfno-mlp,pod-mlp")]
    pub models: String,
    #[arg(long, default_value = "uniform")]
    pub placement: Placement,
    #[command(flatten)]
    pub fno: FnoArgs,
    #[arg(long, default_value = "256x256")]
    pub hidden: String,
    #[command(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `both` or `inputs-only`.
    #[arg(long, default_value = "both")]
    pub regime: NoiseTarget,
    /// Comma-separated SNR levels in dB.
    #[arg(long, default_value = "5,10,20,40")]
    pub snr: String,
    #[arg(long, default_value = "recfno-voronoi,pod-mlp")]
    pub models: String,
    #[command(flatten)]
    pub sensors: SensorArgs,
    #[command(flatten)]
    pub fno: FnoArgs,
    #[arg(long, default_value = "256x256")]
    pub hidden: String,
    #[command(flatten)]
    pub opt: OptArgs,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated retained-mode counts `k` (used as `k x k`).
    #[arg(long, default_value = "2,4,8,16")]
    pub mode_list: String,
    #[command(flatten)]
    pub sensors: SensorArgs,
    #[command(flatten)]
    pub fno: FnoArgs,
    #[command(flatten)]
    pub opt: OptArgs,
}

/// Resolved configuration of one invocation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: IndexMap<String, String>,
    pub model: IndexMap<String, String>,
    pub train: IndexMap<String, String>,
    /// Command-specific options outside the three groups above.
    pub run: IndexMap<String, String>,
}

const DATASET_KEYS: &[&str] = &["data", "task", "grid", "count", "raw", "manifest", "split", "scale"];
const MODEL_KEYS: &[&str] = &[
    "checkpoint",
    "sensors",
    "placement",
    "embedding",
    "layers",
    "width",
    "modes",
    "proj-hidden",
    "hidden",
    "models",
];
const TRAIN_KEYS: &[&str] = &["epochs", "batch", "lr", "gamma"];

impl RunConfig {
    /// Groups flag values by key.
    pub fn from_flags(command: &str, seed: u64, out: &Path, flags: IndexMap<String, String>) -> Self {
        let mut rc = RunConfig {
            command: command.into(),
            seed,
            out: out.into(),
            ..Default::default()
        };
        for (k, v) in flags {
            let group = if DATASET_KEYS.contains(&k.as_str()) {
                &mut rc.dataset
            } else if MODEL_KEYS.contains(&k.as_str()) {
                &mut rc.model
            } else if TRAIN_KEYS.contains(&k.as_str()) {
                &mut rc.train
            } else {
                &mut rc.run
            };
            group.insert(k, v);
        }
        rc
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("command = {}\nseed = {}\nout = {}\n", self.command, self.seed, self.out.display());
        for (name, group) in self.groups() {
            s.push_str(&format!("\n[{name}]\n"));
            for (k, v) in group {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut rc = RunConfig::default();
        let mut section: Option<String> = None;
        let mut have = (false, false, false);
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if !["dataset", "model", "train", "run"].contains(&name) {
                    return Err(Error::format(origin, format!("line {}: unknown section [{name}]", n + 1)));
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(origin, format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            match section.as_deref() {
                None => match k.as_str() {
                    "command" => {
                        rc.command = v;
                        have.0 = true;
                    }
                    "seed" => {
                        rc.seed = v.parse().map_err(|_| Error::format(origin, format!("bad seed '{v}'")))?;
                        have.1 = true;
                    }
                    "out" => {
                        rc.out = v.into();
                        have.2 = true;
                    }
                    _ => return Err(Error::format(origin, format!("line {}: unknown key '{k}'", n + 1))),
                },
                Some("dataset") => {
                    rc.dataset.insert(k, v);
                }
                Some("model") => {
                    rc.model.insert(k, v);
                }
                Some("train") => {
                    rc.train.insert(k, v);
                }
                Some(_) => {
                    rc.run.insert(k, v);
                }
            }
        }
        if have != (true, true, true) {
            return Err(Error::format(origin, "command, seed and out are required"));
        }
        Ok(rc)
    }

    fn groups(&self) -> [(&'static str, &IndexMap<String, String>); 4] {
        [("dataset", &self.dataset), ("model", &self.model), ("train", &self.train), ("run", &self.run)]
    }

    /// Flags reproducing this configuration, subcommand first.
    pub fn to_args(&self) -> Vec<String> {
        let mut a = vec![
            self.command.clone(),
            "--seed".into(),
            self.seed.to_string(),
            "--out".into(),
            self.out.display().to_string(),
        ];
        for (_, group) in self.groups() {
            for (k, v) in group {
                a.push(format!("--{k}"));
                a.push(v.clone());
            }
        }
        a
    }
}

fn list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("bad {what} '{s}'"))))
        .collect()
}

fn parse_models(text: &str, fno: &FnoArgs, hidden: &str) -> Result<Vec<ModelSpec>> {
    let fno_spec = fno_model(fno)?;
    let hidden = parse_pair(hidden)?;
    text.split(',')
        .map(|m| m.trim())
        .filter(|m| !m.is_empty())
        .map(|m| {
            if m == "pod-mlp" {
                return Ok(ModelSpec::PodMlp { hidden });
            }
            let kind: EmbeddingKind = m
                .strip_prefix("recfno-")
                .ok_or_else(|| Error::Config(format!("unknown model '{m}'")))?
                .parse()?;
            match &fno_spec {
                ModelSpec::RecFno { layers, width, modes, proj_hidden, .. } => Ok(ModelSpec::RecFno {
                    embedding: kind,
                    layers: *layers,
                    width: *width,
                    modes: *modes,
                    proj_hidden: *proj_hidden,
                }),
                ModelSpec::PodMlp { .. } => unreachable!("fno_model builds a RecFNO spec"),
            }
        })
        .collect()
}

fn fno_model(a: &FnoArgs) -> Result<ModelSpec> {
    Ok(ModelSpec::RecFno {
        embedding: a.embedding,
        layers: a.layers,
        width: a.width,
        modes: parse_pair(&a.modes)?,
        proj_hidden: a.proj_hidden.unwrap_or(4 * a.width),
    })
}

fn train_cfg(o: &OptArgs, seed: u64, checkpoint: Option<PathBuf>) -> TrainConfig {
    TrainConfig {
        epochs: o.epochs,
        batch_size: o.batch,
        lr0: o.lr,
        gamma: o.gamma,
        seed,
        checkpoint,
    }
}

/// Long flag name for every argument id of a subcommand.
fn long_names(cmd: &clap::Command) -> IndexMap<String, String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(|l| (a.get_id().to_string(), l.to_string())))
        .collect()
}

/// Values of the subcommand's own flags (globals excluded), defaults
/// included, keyed by long flag name.
fn resolved_flags(cmd: &clap::Command, m: &ArgMatches) -> IndexMap<String, String> {
    const GLOBAL: &[&str] = &["seed", "out", "config", "jobs", "help", "version"];
    let names = long_names(cmd);
    let mut out = IndexMap::new();
    for (id, long) in names {
        if GLOBAL.contains(&long.as_str()) {
            continue;
        }
        if let Some(vals) = m.get_raw(&id) {
            let v: Vec<String> = vals.map(|v| v.to_string_lossy().into_owned()).collect();
            out.insert(long, v.join(","));
        }
    }
    out
}

/// Splices the `--config` file's flags in front of the command-line flags,
/// so that later (command-line) occurrences win.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (k, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(k + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let rc = RunConfig::from_text(&fs::read_to_string(&path)?, &path)?;
    let file_args = rc.to_args();
    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let sub_pos = args.iter().position(|a| names.iter().any(|n| a == n.as_str()));
    let mut out: Vec<OsString> = Vec::with_capacity(args.len() + file_args.len());
    match sub_pos {
        Some(p) => {
            if args[p] != rc.command.as_str() {
                return Err(Error::Config(format!(
                    "config file is for '{}', command line asks for '{}'",
                    rc.command,
                    args[p].to_string_lossy()
                )));
            }
            out.extend(args[..=p].iter().cloned());
            out.extend(file_args[1..].iter().map(OsString::from));
            out.extend(args[p + 1..].iter().cloned());
        }
        None => {
            out.push(args[0].clone());
            out.extend(file_args.iter().map(OsString::from));
            out.extend(args[1..].iter().cloned());
        }
    }
    Ok(out)
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Sensor(_) | Error::Modes(_) => 2,
        Error::Diverged { .. } => 3,
        Error::Io(_) | Error::Format { .. } => 4,
        _ => 1,
    }
}

/// Parses and runs; usage errors are returned as clap errors.
pub fn run(args: Vec<OsString>) -> std::result::Result<RunConfig, CliError> {
    let args = expand_config(args).map_err(CliError::Run)?;
    let cmd = Cli::command().args_override_self(true);
    let m = cmd.clone().try_get_matches_from(args).map_err(CliError::Usage)?;
    let cli = Cli::from_arg_matches(&m).map_err(CliError::Usage)?;
    let (name, sub_m) = m.subcommand().expect("subcommand is required");
    let sub_cmd = cmd.find_subcommand(name).expect("matched subcommand exists");
    let rc = RunConfig::from_flags(name, cli.seed, &cli.out, resolved_flags(sub_cmd, sub_m));
    fs::create_dir_all(&cli.out).map_err(|e| CliError::Run(e.into()))?;
    let _ = fs::remove_file(cli.out.join(FAILED_FILE));
    let res = fs::write(cli.out.join(RUN_CONFIG_FILE), rc.to_text())
        .map_err(Error::from)
        .and_then(|_| dispatch(&cli));
    match res {
        Ok(()) => Ok(rc),
        Err(e) => {
            // outputs already written stay, flagged as incomplete
            let _ = fs::write(cli.out.join(FAILED_FILE), format!("{e}\n"));
            Err(CliError::Run(e))
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(clap::Error),
    Run(Error),
}

fn dispatch(cli: &Cli) -> Result<()> {
    let out = &cli.out;
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, cli.seed, out),
        Command::Train(a) => cmd_train(a, cli.seed, out),
        Command::Baseline(a) => cmd_baseline(a, cli.seed, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Superres(a) => cmd_superres(a, out),
        Command::Sweep(a) => cmd_sweep(a, cli.seed, cli.jobs, out),
        Command::Noise(a) => cmd_noise(a, cli.seed, cli.jobs, out),
        Command::Ablate(a) => cmd_ablate(a, cli.seed, cli.jobs, out),
    }
}

fn grid_for(gen: &Generator, grid: Option<&str>) -> Result<GridSpec> {
    let default = gen.default_grid();
    match grid {
        None => Ok(default),
        Some(g) => {
            let (h, w) = parse_pair(g)?;
            let extent: Extent = default.extent;
            GridSpec::new(h, w, extent, default.layout)
        }
    }
}

pub fn cmd_gen(a: &GenArgs, seed: u64, out: &Path) -> Result<()> {
    let ds = if a.task == TaskKind::Import {
        let (Some(raw), Some(manifest)) = (&a.raw, &a.manifest) else {
            return Err(Error::Config("--task import needs --raw and --manifest".into()));
        };
        import_raw(raw, manifest)?
    } else {
        if a.raw.is_some() || a.manifest.is_some() {
            return Err(Error::Config("--raw and --manifest only apply to --task import".into()));
        }
        let gen = Generator::default_for(a.task)?;
        let grid = grid_for(&gen, a.grid.as_deref())?;
        generate(&gen, &grid, default_splits(a.count), seed)?
    };
    ds.write(out)
}

fn write_report(path: &Path, r: &MetricReport) -> Result<()> {
    fs::write(path, r.to_csv())?;
    Ok(())
}

fn train_run(ds: &FieldDataset, spec: &RunSpec, out: &Path) -> Result<()> {
    let res = run_experiment(ds, spec, None)?;
    res.outcome.checkpoint.save(&out.join(CHECKPOINT_FILE))?;
    write_history(&res.outcome.history, out)?;
    write_report(&out.join("report_test.csv"), &res.test)
}

pub fn cmd_train(a: &TrainArgs, seed: u64, out: &Path) -> Result<()> {
    let ds = FieldDataset::read(&a.data.data)?;
    let spec = RunSpec {
        model: fno_model(&a.fno)?,
        sensors: a.sensors.sensors,
        placement: a.sensors.placement,
        train: train_cfg(&a.opt, seed, Some(out.join(CHECKPOINT_FILE))),
    };
    train_run(&ds, &spec, out)
}

pub fn cmd_baseline(a: &BaselineArgs, seed: u64, out: &Path) -> Result<()> {
    let ds = FieldDataset::read(&a.data.data)?;
    let spec = RunSpec {
        model: ModelSpec::PodMlp {
            hidden: if a.hidden.is_empty() { DEFAULT_HIDDEN } else { parse_pair(&a.hidden)? },
        },
        sensors: a.sensors.sensors,
        placement: a.sensors.placement,
        train: train_cfg(&a.opt, seed, Some(out.join(CHECKPOINT_FILE))),
    };
    train_run(&ds, &spec, out)
}

fn sensor_cells(model: &TrainedModel, grid: &GridSpec) -> Result<Vec<(usize, usize)>> {
    snap_sensors(&model.positions()?, grid)
}

pub fn cmd_eval(a: &EvalArgs, out: &Path) -> Result<()> {
    let ds = FieldDataset::read(&a.data.data)?;
    let model = TrainedModel::load(&a.checkpoint)?;
    let grid = model.grid();
    if ds.manifest.grid != grid {
        return Err(Error::Resolution("dataset grid differs from the checkpoint's".into()));
    }
    let fields = ds.split(&a.split)?;
    let fp = model.meta().get("fingerprint").cloned().unwrap_or_default();
    let report = model.report(fields, fields, fp)?;
    write_report(&out.join("report.csv"), &report)?;
    let positions = model.positions()?;
    let cells = sensor_cells(&model, &grid)?;
    for (k, truth) in fields.iter().take(a.export).enumerate() {
        let pred = model.predict(&crate::data::observe(truth, &positions, &grid)?, 1)?;
        export_fields(out, &format!("sample{k}_pred"), &pred, Some(truth), &cells)?;
        export_fields(out, &format!("sample{k}_truth"), truth, None, &cells)?;
    }
    Ok(())
}

pub fn cmd_superres(a: &SuperresArgs, out: &Path) -> Result<()> {
    let ds = FieldDataset::read(&a.data.data)?;
    let model = TrainedModel::load(&a.checkpoint)?;
    let fine = fine_truth(&ds, &a.split, a.scale)?;
    let rep = superres_eval(&model, &ds, &a.split, a.scale, &fine)?;
    write_report(&out.join("report_native.csv"), &rep.native)?;
    write_report(&out.join(format!("report_x{}.csv", a.scale)), &rep.fine)?;
    let grid = model.grid();
    let fine_grid = grid.scaled(a.scale)?;
    let positions = model.positions()?;
    let cells = snap_sensors(&positions, &fine_grid)?;
    for (k, (coarse, truth)) in ds.split(&a.split)?.iter().zip(&fine).take(a.export).enumerate() {
        let pred = model.predict(&crate::data::observe(coarse, &positions, &grid)?, a.scale)?;
        export_fields(out, &format!("sample{k}_x{}_pred", a.scale), &pred, Some(truth), &cells)?;
        export_fields(out, &format!("sample{k}_x{}_truth", a.scale), truth, None, &cells)?;
    }
    Ok(())
}

fn write_rows(path: &Path, x_name: &str, rows: &[crate::eval::SweepRow]) -> Result<()> {
    fs::write(path, rows_to_csv(x_name, rows))?;
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs, seed: u64, jobs: usize, out: &Path) -> Result<()> {
    let ds = FieldDataset::read(&a.data.data)?;
    let counts: Vec<usize> = list("sensor count", &a.counts)?;
    let models = parse_models(&a.models, &a.fno, &a.hidden)?;
    let base = RunSpec {
        model: fno_model(&a.fno)?,
        sensors: 0,
        placement: a.placement,
        train: train_cfg(&a.opt, seed, None),
    };
    let rows = sensor_sweep(&ds, &counts, &models, &base, jobs)?;
    write_rows(&out.join("sweep.csv"), "sensors", &rows)
}

pub fn cmd_noise(a: &NoiseArgs, seed: u64, jobs: usize, out: &Path) -> Result<()> {
    let ds = FieldDataset::read(&a.data.data)?;
    let snrs: Vec<f64> = list("SNR", &a.snr)?;
    let models = parse_models(&a.models, &a.fno, &a.hidden)?;
    let base = RunSpec {
        model: fno_model(&a.fno)?,
        sensors: a.sensors.sensors,
        placement: a.sensors.placement,
        train: train_cfg(&a.opt, seed, None),
    };
    let noise_seed = rng::derive_seed(seed, NOISE_SEED_STREAM);
    let rows = noise_experiment(&ds, &snrs, a.regime, &models, &base, noise_seed, jobs)?;
    write_rows(&out.join(format!("noise_{}.csv", a.regime)), "snr_db", &rows)
}

pub fn cmd_ablate(a: &AblateArgs, seed: u64, jobs: usize, out: &Path) -> Result<()> {
    let ds = FieldDataset::read(&a.data.data)?;
    let modes: Vec<usize> = list("mode count", &a.mode_list)?;
    let base = RunSpec {
        model: fno_model(&a.fno)?,
        sensors: a.sensors.sensors,
        placement: a.sensors.placement,
        train: train_cfg(&a.opt, seed, None),
    };
    let rows = mode_ablation(&ds, &modes, &base, jobs)?;
    write_rows(&out.join("ablation.csv"), "modes", &rows)
}

/// Field grid read back from a CSV export.
pub fn read_grid_csv(path: &Path) -> Result<Tensor> {
    crate::eval::read_csv_grid(path)
}

/// Loads a checkpoint and reports its kind.
pub fn checkpoint_kind(path: &Path) -> Result<String> {
    Ok(Checkpoint::load(path)?.meta("kind")?.to_string())
}
