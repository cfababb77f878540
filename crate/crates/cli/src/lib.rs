//! Command-line front end: dataset generation, training, evaluation,
//! reconstruction, noise sweeps, the classical baseline and ablations.

pub mod config;
pub mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tqst::baseline::{direct_invert, mle_refine};
use tqst::datagen::{
    build_dataset, export_csv, load_dataset, save_dataset, split, Dataset, DatasetSpec, Sample, Split,
    SplitFractions,
};
use tqst::eval::{evaluate_model, evaluate_purity, evaluate_states, examples, EvalReport};
use tqst::penet::{build_model, train_with, Family, Model, ModelConfig, Task, TrainConfig};
use tqst::qstate::{fidelity, purity};
use tqst::reconstruct::clamp_purity;
use tqst::tqst::{MeasureOptions, ThresholdMode};
use tqst::{DensityMatrix, MeasurementRecord, NoiseSpec};

use config::default_data_dir;
use output::{magnitude_phase_table, read_record, MatrixFile};

/// Noise strengths swept by default.
pub const DEFAULT_STRENGTHS: [f64; 8] = [0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Parser, Debug)]
#[command(name = "tqst", version, about = "Threshold quantum state tomography with equivariant networks")]
#[command(args_override_self = true)]
#[command(after_help = "Flags can also come from a file: `tqst --config run.conf <command> ...` reads \
`key = value` lines (`#` comments, `true` for switches); flags on the command line win.\n\
Dataset directories default to $TQST_DATA_DIR, or ./data when it is unset.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a dataset of tQST records and clean targets.
    Gen(GenArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Reconstruct a density matrix from one record.
    Reconstruct(ReconstructArgs),
    /// Estimate the purity of one record.
    Purity(PurityArgs),
    /// Train and evaluate across noise channels and strengths.
    NoiseSweep(SweepArgs),
    /// Score the classical reconstruction on a dataset split.
    Baseline(BaselineArgs),
    /// Grid over hidden-layer count and width.
    Ablate(AblateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataSpecArgs {
    #[arg(long, default_value_t = 2)]
    pub qubits: usize,
    /// Samples per (zeros, rank) pair and purity class.
    #[arg(long, default_value_t = 2000)]
    pub per_pair: usize,
    /// Dataset seed; in `noise-sweep` it also seeds training.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Finite-shot outcomes instead of exact expectation values.
    #[arg(long)]
    pub shots: Option<u64>,
    /// Fixed measurement threshold instead of the Gini rule.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl DataSpecArgs {
    fn spec(&self, noise: NoiseSpec) -> DatasetSpec {
        let threshold = self.threshold.map_or(ThresholdMode::Gini, ThresholdMode::Fixed);
        DatasetSpec::new(self.qubits, self.per_pair, self.seed)
            .with_noise(noise)
            .with_measure(MeasureOptions {
                threshold,
                shots: self.shots,
            })
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub data: DataSpecArgs,
    /// `none`, `depol:P` or `exp:EPS`.
    #[arg(long, default_value = "none")]
    pub noise: String,
    /// Output directory; defaults to `$TQST_DATA_DIR` or `./data`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the samples as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "mlp")]
    pub family: String,
    #[arg(long, default_value = "tomography")]
    pub task: String,
    /// Comma-separated equivariant channel counts (overrides the family default).
    #[arg(long)]
    pub pe_features: Option<String>,
    /// Comma-separated hidden Linear widths (overrides the family default).
    #[arg(long)]
    pub dense_hidden: Option<String>,
    #[arg(long)]
    pub dropout: Option<f64>,
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|_| anyhow::Error::from(tqst::Error::InvalidConfig(format!("bad list entry {x:?}")))))
        .collect()
}

impl ModelArgs {
    fn config(&self, n_qubits: usize) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::standard(self.task.parse()?, self.family.parse()?, n_qubits);
        if let Some(s) = &self.pe_features {
            cfg.pe_features = parse_list(s)?;
        }
        if let Some(s) = &self.dense_hidden {
            cfg.dense_hidden = parse_list(s)?;
        }
        if let Some(p) = self.dropout {
            cfg.dropout = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Seed of the train/validation/test split; defaults to the dataset seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Print the loss after every epoch.
    #[arg(long)]
    pub verbose: bool,
}

impl HyperArgs {
    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            seed,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checked against the dataset when given.
    #[arg(long)]
    pub qubits: Option<usize>,
    /// Seeds initialization, shuffling and dropout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Checkpoint path.
    #[arg(long, default_value = "model.bin")]
    pub out: PathBuf,
    /// Per-epoch loss CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitPart,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// JSON report path.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Per-sample CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    Mle,
}

#[derive(Args, Debug, Clone)]
pub struct MleArgs {
    #[arg(long, value_enum, default_value = "mle")]
    pub method: Method,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
}

impl MleArgs {
    fn reconstruct(&self, rec: &MeasurementRecord) -> tqst::Result<DensityMatrix> {
        let init = direct_invert(rec)?;
        match self.method {
            Method::Direct => Ok(init),
            Method::Mle => Ok(mle_refine(rec, &init, self.iters, self.step)?.state),
        }
    }
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Record file: JSON array, JSON object with `values`, or dataset CSV.
    #[arg(long)]
    pub record: PathBuf,
    /// CSV row to use.
    #[arg(long)]
    pub row: Option<usize>,
    /// Tomography checkpoint; the classical method is used when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub mle: MleArgs,
    /// Reference density matrix (JSON with `real`/`imag`) or a named state:
    /// `bell-phi-minus`, `maximally-mixed`.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, default_value = "rho.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PurityArgs {
    #[arg(long)]
    pub record: PathBuf,
    #[arg(long)]
    pub row: Option<usize>,
    /// Purity checkpoint; the classical reconstruction is used when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub mle: MleArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataSpecArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Comma-separated channels: `depol`, `exp`.
    #[arg(long, default_value = "depol,exp")]
    pub channels: String,
    /// Comma-separated strengths.
    #[arg(long)]
    pub strengths: Option<String>,
    /// Evaluate this checkpoint at every strength instead of retraining.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "noise_sweep.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub mle: MleArgs,
    /// Score the reconstructed states (`tomography`) or their purity.
    #[arg(long, default_value = "tomography")]
    pub task: String,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitPart,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long, default_value = "baseline.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `mlp` (hidden Linear layers) or `pemlp` (hidden equivariant layers).
    #[arg(long, default_value = "mlp")]
    pub family: String,
    #[arg(long, default_value = "tomography")]
    pub task: String,
    #[arg(long, default_value = "1,2,3")]
    pub layers: String,
    #[arg(long, default_value = "64,128,256,512,1024")]
    pub widths: String,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value = "ablation.csv")]
    pub out: PathBuf,
}

/// Exit status for an error: 3 numerical, 1 I/O, 2 everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<tqst::Error>() {
            return match e {
                tqst::Error::Io(_) => 1,
                e if e.is_numerical() => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Reconstruct(a) => cmd_reconstruct(a, out),
        Command::Purity(a) => cmd_purity(a, out),
        Command::NoiseSweep(a) => cmd_noise_sweep(a, out),
        Command::Baseline(a) => cmd_baseline(a, out),
        Command::Ablate(a) => cmd_ablate(a, out),
    }
}

fn data_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.unwrap_or_else(default_data_dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(a: GenArgs, out: &mut dyn Write) -> Result<()> {
    let noise = NoiseSpec::parse(&a.noise)?;
    let ds = build_dataset(&a.data.spec(noise))?;
    let dir = data_dir(a.out);
    save_dataset(&ds, &dir)?;
    if let Some(csv) = &a.csv {
        export_csv(&ds.samples.iter().collect::<Vec<_>>(), ds.n_qubits(), csv)?;
    }
    writeln!(
        out,
        "wrote {} samples ({} mixed, {} pure) to {}",
        ds.len(),
        ds.mixed_count(),
        ds.len() - ds.mixed_count(),
        dir.display()
    )?;
    writeln!(out, "mean measurements {:.3} of {}", ds.mean_measurements(), 1usize << (2 * ds.n_qubits()))?;
    let d = 1usize << ds.n_qubits();
    for z in 0..=d - 2 {
        let xs: Vec<f64> = ds.samples.iter().filter(|s| s.meta.zeros == z).map(|s| s.meta.measurements as f64).collect();
        writeln!(out, "  zeros {z:>2}: {:.3}", xs.iter().sum::<f64>() / xs.len() as f64)?;
    }
    Ok(())
}

fn load_split(dir: &Path, split_seed: Option<u64>) -> Result<(Dataset, Split)> {
    let ds = load_dataset(dir).with_context(|| format!("loading dataset from {}", dir.display()))?;
    let sp = split(&ds, SplitFractions::default(), split_seed.unwrap_or(ds.spec.seed))?;
    Ok((ds, sp))
}

fn part<'a>(ds: &'a Dataset, sp: &Split, which: SplitPart) -> Vec<&'a Sample> {
    match which {
        SplitPart::Train => ds.select(&sp.train),
        SplitPart::Val => ds.select(&sp.val),
        SplitPart::Test => ds.select(&sp.test),
        SplitPart::All => ds.samples.iter().collect(),
    }
}

/// Trains a fresh model on the train split, validating on the val split.
fn fit(ds: &Dataset, sp: &Split, cfg: &ModelConfig, hyper: &HyperArgs, seed: u64, log: &mut dyn Write) -> Result<(Model, tqst::penet::TrainHistory)> {
    let mut model = build_model(cfg, seed)?;
    let train_set = examples(&model, cfg.task, &ds.select(&sp.train));
    let val_set = examples(&model, cfg.task, &ds.select(&sp.val));
    let history = train_with(&mut model, &train_set, &val_set, &hyper.train_config(seed), |e, h| {
        if hyper.verbose {
            let val = h.val_loss.last().copied().unwrap_or(f64::NAN);
            let _ = writeln!(log, "epoch {:>3} train {:.6} val {:.6}", e + 1, h.train_loss[e], val);
        }
    })?;
    Ok((model, history))
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let (ds, sp) = load_split(&data_dir(a.data), a.hyper.split_seed)?;
    if let Some(q) = a.qubits.filter(|&q| q != ds.n_qubits()) {
        bail!(tqst::Error::InvalidConfig(format!("--qubits {q} but the dataset has {} qubits", ds.n_qubits())));
    }
    let cfg = a.model.config(ds.n_qubits())?;
    let (model, history) = fit(&ds, &sp, &cfg, &a.hyper, a.seed, out)?;
    model.save(&a.out)?;
    let loss_path = a.loss_csv.unwrap_or_else(|| a.out.with_extension("loss.csv"));
    let mut w = csv::Writer::from_path(&loss_path)?;
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for (e, t) in history.train_loss.iter().enumerate() {
        let v = history.val_loss.get(e).map_or(String::new(), |v| v.to_string());
        w.write_record([(e + 1).to_string(), t.to_string(), v])?;
    }
    w.flush()?;
    writeln!(
        out,
        "{:?} {:?} model, {} parameters, final train loss {:.6}; saved {}",
        cfg.family,
        cfg.task,
        model.parameter_count(),
        history.train_loss.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    )?;
    Ok(())
}

fn write_rows_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "zeros", "rank", "pure", "noise_strength", "measurements", "fidelity", "predicted_purity", "target_purity", "squared_error"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &report.rows {
        w.write_record([
            r.index.to_string(),
            r.zeros.to_string(),
            r.rank.to_string(),
            (r.pure as u8).to_string(),
            r.noise_strength.to_string(),
            r.measurements.to_string(),
            opt(r.fidelity),
            opt(r.predicted_purity),
            opt(r.target_purity),
            opt(r.squared_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn summarize(report: &EvalReport, out: &mut dyn Write) -> Result<()> {
    match report.task {
        Task::Tomography => writeln!(
            out,
            "fidelity {:.4} ± {:.4} over {} samples ({} degenerate)",
            report.mean_fidelity.unwrap_or(f64::NAN),
            report.std_fidelity.unwrap_or(f64::NAN),
            report.count,
            report.degenerate
        )?,
        Task::Purity => writeln!(
            out,
            "purity MSE {:.5}, R² {:.4} over {} samples",
            report.mse.unwrap_or(f64::NAN),
            report.r2.unwrap_or(f64::NAN),
            report.count
        )?,
    }
    for b in &report.buckets {
        writeln!(out, "  zeros {:>2}-{:<2} n={:<5} mean {:.4}", b.zeros_lo, b.zeros_hi, b.count, b.mean.unwrap_or(f64::NAN))?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = Model::load(&a.model)?;
    let (ds, sp) = load_split(&data_dir(a.data), a.split_seed)?;
    let report = evaluate_model(&model, &part(&ds, &sp, a.split))?;
    write_json(&a.out, &report)?;
    if let Some(csv) = &a.csv {
        write_rows_csv(&report, csv)?;
    }
    summarize(&report, out)
}

fn model_for(path: &Path, task: Task, n_qubits: usize) -> Result<Model> {
    let model = Model::load(path)?;
    let cfg = model.config().expect("loaded models carry a config");
    if cfg.task != task || cfg.n_qubits != n_qubits {
        bail!(tqst::Error::InvalidConfig(format!(
            "checkpoint is a {:?} model for {} qubits; need {task:?} for {n_qubits}",
            cfg.task, cfg.n_qubits
        )));
    }
    Ok(model)
}

fn reference_state(spec: &str, n_qubits: usize) -> Result<DensityMatrix> {
    match spec {
        "bell-phi-minus" => Ok(DensityMatrix::bell_phi_minus()),
        "maximally-mixed" => Ok(DensityMatrix::maximally_mixed(n_qubits)?),
        path => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading reference {path}"))?;
            serde_json::from_str::<MatrixFile>(&text)?.to_state()
        }
    }
}

fn cmd_reconstruct(a: ReconstructArgs, out: &mut dyn Write) -> Result<()> {
    let rec = read_record(&a.record, a.row)?;
    let (rho, method) = match &a.model {
        Some(path) => {
            let model = model_for(path, Task::Tomography, rec.n_qubits())?;
            let raw = tqst::reconstruct::RawReconstruction::new(rec.n_qubits(), model.predict_record(&rec)?)?;
            (tqst::reconstruct::reconstruct(&raw)?, "model".to_string())
        }
        None => (a.mle.reconstruct(&rec)?, format!("{:?}", a.mle.method).to_lowercase()),
    };
    let mut file = MatrixFile::from_state(&rho);
    file.method = Some(method);
    file.measurements = Some(rec.performed_count());
    file.purity = Some(purity(&rho));
    if let Some(r) = &a.reference {
        let reference = reference_state(r, rec.n_qubits())?;
        file.fidelity = Some(fidelity(&rho, &reference)?);
    }
    write_json(&a.out, &file)?;
    write!(out, "{}", magnitude_phase_table(&rho))?;
    writeln!(out, "measurements {} of {}", rec.performed_count(), rec.values().len())?;
    if let Some(f) = file.fidelity {
        writeln!(out, "fidelity {f:.6}")?;
    }
    Ok(())
}

fn cmd_purity(a: PurityArgs, out: &mut dyn Write) -> Result<()> {
    let rec = read_record(&a.record, a.row)?;
    let p = match &a.model {
        Some(path) => {
            let model = model_for(path, Task::Purity, rec.n_qubits())?;
            clamp_purity(model.predict_record(&rec)?[0], rec.n_qubits())
        }
        None => purity(&a.mle.reconstruct(&rec)?),
    };
    writeln!(out, "{p:.6}")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub channel: String,
    pub strength: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub r2: Option<f64>,
    pub mean_measurements: f64,
}

fn sweep_row(channel: &str, strength: f64, rep: &EvalReport) -> SweepRow {
    let (metric, mean, std) = match rep.task {
        Task::Tomography => ("fidelity", rep.mean_fidelity.unwrap_or(f64::NAN), rep.std_fidelity.unwrap_or(f64::NAN)),
        Task::Purity => {
            let se: Vec<f64> = rep.rows.iter().filter_map(|r| r.squared_error).collect();
            let (m, s) = tqst::eval::mean_std(&se);
            ("squared_error", m, s)
        }
    };
    SweepRow {
        channel: channel.into(),
        strength,
        metric: metric.into(),
        mean,
        std,
        r2: rep.r2,
        mean_measurements: rep.mean_measurements,
    }
}

fn cmd_noise_sweep(a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let strengths = match &a.strengths {
        Some(s) => parse_list(s)?,
        None => DEFAULT_STRENGTHS.to_vec(),
    };
    let channels: Vec<String> = parse_list(&a.channels)?;
    let fixed = a.checkpoint.as_deref().map(Model::load).transpose()?;
    let cfg = match &fixed {
        Some(m) => m.config().expect("loaded models carry a config").clone(),
        None => a.model.config(a.data.qubits)?,
    };
    let mut rows = Vec::new();
    for channel in &channels {
        for &s in &strengths {
            let noise = NoiseSpec::parse(&format!("{channel}:{s}"))?;
            // Same seed, so every strength shares the clean states and split.
            let ds = build_dataset(&a.data.spec(noise))?;
            let sp = split(&ds, SplitFractions::default(), a.hyper.split_seed.unwrap_or(a.data.seed))?;
            let rep = match &fixed {
                Some(m) => evaluate_model(m, &ds.select(&sp.test))?,
                None => {
                    let (m, _) = fit(&ds, &sp, &cfg, &a.hyper, a.data.seed, &mut std::io::sink())?;
                    evaluate_model(&m, &ds.select(&sp.test))?
                }
            };
            let row = sweep_row(channel, s, &rep);
            writeln!(out, "{channel:>6} {s:<5} {} {:.4} ± {:.4}", row.metric, row.mean, row.std)?;
            rows.push(row);
        }
    }
    let mut w = csv::Writer::from_path(&a.out)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_baseline(a: BaselineArgs, out: &mut dyn Write) -> Result<()> {
    let task: Task = a.task.parse()?;
    let (ds, sp) = load_split(&data_dir(a.data), a.split_seed)?;
    let samples = part(&ds, &sp, a.split);
    let states = samples
        .iter()
        .map(|s| a.mle.reconstruct(&s.record))
        .collect::<tqst::Result<Vec<_>>>()?;
    let report = match task {
        Task::Tomography => evaluate_states(&states.into_iter().map(Some).collect::<Vec<_>>(), &samples)?,
        Task::Purity => evaluate_purity(&states.iter().map(purity).collect::<Vec<_>>(), &samples)?,
    };
    write_json(&a.out, &report)?;
    summarize(&report, out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub family: String,
    pub layers: usize,
    pub width: usize,
    pub parameters: usize,
    pub mean: f64,
    pub std: f64,
    pub r2: Option<f64>,
}

fn cmd_ablate(a: AblateArgs, out: &mut dyn Write) -> Result<()> {
    let family: Family = a.family.parse()?;
    let task: Task = a.task.parse()?;
    let layers: Vec<usize> = parse_list(&a.layers)?;
    let widths: Vec<usize> = parse_list(&a.widths)?;
    let (ds, sp) = load_split(&data_dir(a.data), a.hyper.split_seed)?;
    let mut rows = Vec::new();
    for &l in &layers {
        for &w in &widths {
            let mut cfg = ModelConfig::standard(task, family, ds.n_qubits());
            match family {
                Family::Mlp => cfg.dense_hidden = vec![w; l],
                Family::Pemlp => cfg.pe_features = vec![w; l],
                Family::Combined => bail!(tqst::Error::InvalidConfig("ablation covers mlp and pemlp".into())),
            }
            let (model, _) = fit(&ds, &sp, &cfg, &a.hyper, a.seed, &mut std::io::sink())?;
            let rep = evaluate_model(&model, &ds.select(&sp.test))?;
            let row = sweep_row(&a.family, 0.0, &rep);
            writeln!(out, "{l} × {w}: {} {:.4} ± {:.4}", row.metric, row.mean, row.std)?;
            rows.push(AblationRow {
                family: a.family.clone(),
                layers: l,
                width: w,
                parameters: model.parameter_count(),
                mean: row.mean,
                std: row.std,
                r2: row.r2,
            });
        }
    }
    let mut w = csv::Writer::from_path(&a.out)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
