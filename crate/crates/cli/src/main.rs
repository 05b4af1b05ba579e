//! `fusion`: coefficient tables, diagram tools, equivariance audits,
//! gradient checks, dataset generation, training and evaluation.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fusion_core::autodiff::Tolerance;
use fusion_core::block::{check_block, FusionBlockConfig};
use fusion_core::diagram::{DiagramJson, FusionTree, TreeShape};
use fusion_core::harness::{
    evaluate, format_real, generate_dataset, gradcheck_csv, parameter_gradcheck, read_jsonl, split_dataset, train,
    write_jsonl, DatasetConfig, LossConfig, Metrics, OptimizerConfig, PotentialKind, RunRecord, Sample, TrainConfig,
};
use fusion_core::layers::{Model, ModelConfig};
use fusion_core::su2::{cg_coefficient, cg_tensor};
use fusion_core::{enumerate_internal, Error, Spin};

/// Output directory override for every file the commands write.
const OUT_DIR_VAR: &str = "FUSION_OUT_DIR";

#[derive(Parser)]
#[command(name = "fusion", version, about = "Equivariant fusion blocks for SU(2)/SO(3)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Common {
    /// Seed for every random draw the command makes (default 0). For model
    /// commands it replaces the config's own seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Nonzero Clebsch-Gordan coefficients of one spin triple as CSV.
    CgTable {
        #[arg(long)]
        ja: Spin,
        #[arg(long)]
        jb: Spin,
        #[arg(long)]
        jc: Spin,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fusion diagram tools.
    Diagram {
        #[command(subcommand)]
        action: DiagramAction,
    },
    /// Fusion block audits.
    Block {
        #[command(subcommand)]
        action: BlockAction,
    },
    /// Model inspection.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Energy gradients of a freshly initialized model against finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        atoms: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Maximum relative error.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Synthetic dataset as JSON lines.
    GenData {
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        atoms: usize,
        #[arg(long, value_enum, default_value_t = PotentialArg::Morse)]
        potential: PotentialArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; writes run.json, curve.csv and model.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        #[arg(long, default_value_t = 1.0)]
        energy_weight: f64,
        #[arg(long, default_value_t = 1000.0)]
        force_weight: f64,
        #[arg(long, default_value_t = 0.125)]
        val_fraction: f64,
        #[arg(long, default_value_t = 0.125)]
        test_fraction: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Energy and force MAE of a saved or freshly initialized model.
    Evaluate {
        /// model.json from `train`, or a bare model config.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Worker threads for the per-sample fan-out.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Learning curve of a run record as CSV.
    PlotData {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum DiagramAction {
    /// Admissibility of a diagram JSON file.
    Validate {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Admissible internal-spin assignments.
    Enumerate {
        /// Leaf spins, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        leaves: Vec<Spin>,
        #[arg(long)]
        root: Spin,
        #[arg(long, value_enum, default_value_t = ShapeArg::LeftComb)]
        shape: ShapeArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum BlockAction {
    /// Equivariance and permutation residuals over Haar-random trials.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Elements per aggregated slot.
        #[arg(long, default_value_t = 3)]
        multiset_size: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum ModelAction {
    /// Parameter shapes and total count.
    Describe {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PotentialArg {
    Morse,
    MorseAngular,
}

impl From<PotentialArg> for PotentialKind {
    fn from(p: PotentialArg) -> Self {
        match p {
            PotentialArg::Morse => PotentialKind::Morse,
            PotentialArg::MorseAngular => PotentialKind::MorseAngular,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    LeftComb,
    RightComb,
}

/// Trained parameters next to the config that shapes them.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedModel {
    config: ModelConfig,
    params: Vec<f64>,
}

enum Failure {
    /// A check ran and did not pass.
    Validation(String),
    /// Bad input: unreadable files, malformed JSON, inconsistent flags.
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Json(_) | Error::Config(_) | Error::InvalidSpin(_) => Failure::Usage(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_VAR).map(PathBuf::from)
}

/// Relative output paths land under `FUSION_OUT_DIR` when it is set.
fn resolve(path: &Path) -> PathBuf {
    match out_dir() {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> CmdResult {
    match out {
        Some(p) => {
            let p = resolve(p);
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, text)?;
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_samples(path: &Path) -> Result<Vec<Sample>, Failure> {
    let f = fs::File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(read_jsonl(BufReader::new(f))?)
}

fn csv_text<I, R>(header: &[&str], rows: I) -> Result<String, Failure>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn metrics_csv(rows: &[(&str, Metrics)]) -> Result<String, Failure> {
    csv_text(
        &["split", "samples", "energy_mae", "force_mae"],
        rows.iter()
            .map(|(name, m)| vec![name.to_string(), m.samples.to_string(), format_real(m.energy_mae), format_real(m.force_mae)]),
    )
}

fn cg_table(ja: Spin, jb: Spin, jc: Spin, out: &Option<PathBuf>) -> CmdResult {
    // fails with InadmissibleTriple before any row is written
    cg_tensor(ja, jb, jc)?;
    let mut rows = Vec::new();
    for ma in ja.magnetic() {
        for mb in jb.magnetic() {
            for mc in jc.magnetic() {
                let v = cg_coefficient(ja, ma, jb, mb, jc, mc);
                if v != 0.0 {
                    rows.push(vec![
                        ma.twice().to_string(),
                        mb.twice().to_string(),
                        mc.twice().to_string(),
                        format_real(v),
                    ]);
                }
            }
        }
    }
    emit(out, &csv_text(&["two_ma", "two_mb", "two_mc", "value"], rows)?)
}

fn diagram_validate(file: &Path) -> CmdResult {
    let json: DiagramJson = serde_json::from_str(&read(file)?)?;
    let d = json.to_diagram()?;
    let violations = d.validate();
    if violations.is_empty() {
        println!("valid");
        Ok(())
    } else {
        Err(Failure::Validation(violations.iter().map(|v| format!("violation at {v}")).collect::<Vec<_>>().join("\n")))
    }
}

fn right_comb(n: usize) -> FusionTree {
    if n == 1 {
        return FusionTree::Leaf(0);
    }
    fn build(lo: usize, n: usize) -> FusionTree {
        if lo + 1 == n {
            FusionTree::Leaf(lo)
        } else {
            FusionTree::node(FusionTree::Leaf(lo), build(lo + 1, n), Some(Spin::ZERO))
        }
    }
    build(0, n)
}

fn diagram_enumerate(leaves: &[Spin], root: Spin, shape: ShapeArg, out: &Option<PathBuf>) -> CmdResult {
    if leaves.len() < 2 {
        return Err(Failure::Usage("--leaves needs at least two spins".into()));
    }
    let shape = match shape {
        ShapeArg::LeftComb => TreeShape::LeftComb,
        ShapeArg::RightComb => TreeShape::Custom(right_comb(leaves.len())),
    };
    let assignments = enumerate_internal(leaves, root, &shape);
    let internal = leaves.len() - 2;
    let mut header: Vec<String> = vec!["index".into()];
    header.extend((0..internal).map(|i| format!("two_k{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = assignments.iter().enumerate().map(|(i, ks)| {
        std::iter::once(i.to_string()).chain(ks.iter().map(|k| k.twice().to_string())).collect::<Vec<_>>()
    });
    emit(out, &csv_text(&header, rows)?)
}

fn block_check(config: &Path, trials: usize, multiset_size: usize, tol: f64, seed: u64) -> CmdResult {
    let cfg = FusionBlockConfig::from_json(&read(config)?)?;
    let r = check_block(&cfg, trials, multiset_size, seed)?;
    print!(
        "{}",
        csv_text(
            &["trials", "max_equivariance_residual", "max_permutation_residual"],
            [vec![r.trials.to_string(), format_real(r.max_equivariance_residual), format_real(r.max_permutation_residual)]],
        )?
    );
    if r.max_equivariance_residual > tol || r.max_permutation_residual > tol {
        return Err(Failure::Validation(format!("residual above tolerance {tol:e}")));
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    let text = read(path)?;
    if let Ok(saved) = serde_json::from_str::<SavedModel>(&text) {
        let mut m = Model::new(&saved.config)?;
        m.set_flat_params(&saved.params)?;
        return Ok(m);
    }
    Ok(Model::new(&ModelConfig::from_json(&text)?)?)
}

fn model_config(path: &Path, seed: Option<u64>) -> Result<ModelConfig, Failure> {
    let mut cfg = ModelConfig::from_json(&read(path)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn gradcheck_cmd(config: &Path, atoms: usize, step: f64, tol: f64, common: Common, out: &Option<PathBuf>) -> CmdResult {
    let cfg = model_config(config, common.seed)?;
    let seed = common.seed();
    let model = Model::new(&cfg)?;
    let cloud = generate_dataset(&DatasetConfig::new(1, atoms, PotentialKind::Morse, seed))?.remove(0).cloud;
    let rows = parameter_gradcheck(&model, &cloud, step, Tolerance { rtol: tol, ..Tolerance::default() })?;
    emit(out, &gradcheck_csv(&rows)?)?;
    if rows.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Failure::Validation(format!("gradient check above tolerance {tol:e}")))
    }
}

fn gen_data(samples: usize, atoms: usize, potential: PotentialArg, seed: u64, out: &Option<PathBuf>) -> CmdResult {
    let data = generate_dataset(&DatasetConfig::new(samples, atoms, potential.into(), seed))?;
    let mut buf = Vec::new();
    write_jsonl(&data, &mut buf)?;
    emit(out, std::str::from_utf8(&buf).expect("json is utf-8"))
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    config: &Path,
    data: &Path,
    epochs: usize,
    optimizer: OptimizerConfig,
    loss: LossConfig,
    fractions: (f64, f64),
    out_dir_flag: &Option<PathBuf>,
    common: Common,
) -> CmdResult {
    let model_cfg = model_config(config, common.seed)?;
    let seed = common.seed();
    let samples = read_samples(data)?;
    let (tr, va, te) = split_dataset(&samples, fractions.0, fractions.1, seed)?;
    let cfg = TrainConfig { epochs, optimizer, loss, seed };
    let (model, record) = train(&model_cfg, &tr, &va, &te, &cfg)?;
    let dir = match out_dir_flag {
        Some(d) => resolve(d),
        None => out_dir().unwrap_or_else(|| PathBuf::from(".")),
    };
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&record)?)?;
    fs::write(dir.join("curve.csv"), record.curve_csv()?)?;
    let saved = SavedModel { config: model_cfg, params: model.flat_params() };
    fs::write(dir.join("model.json"), serde_json::to_string(&saved)?)?;
    let metrics = metrics_csv(&[("initial_train", record.initial_train), ("final_train", record.final_train), ("test", record.test)])?;
    fs::write(dir.join("metrics.csv"), &metrics)?;
    print!("{metrics}");
    Ok(())
}

fn evaluate_cmd(model: &Path, data: &Path, jobs: usize, out: &Option<PathBuf>) -> CmdResult {
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be positive".into()));
    }
    let model = load_model(model)?;
    let samples = read_samples(data)?;
    let m = evaluate(&model, &samples, jobs)?;
    emit(out, &metrics_csv(&[("all", m)])?)
}

fn plot_data(run: &Path, out: &Option<PathBuf>) -> CmdResult {
    let record: RunRecord = serde_json::from_str(&read(run)?)?;
    emit(out, &record.curve_csv()?)
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::CgTable { ja, jb, jc, out, .. } => cg_table(ja, jb, jc, &out),
        Command::Diagram { action } => match action {
            DiagramAction::Validate { file, .. } => diagram_validate(&file),
            DiagramAction::Enumerate { leaves, root, shape, out, .. } => diagram_enumerate(&leaves, root, shape, &out),
        },
        Command::Block { action: BlockAction::Check { config, trials, multiset_size, tol, common } } => {
            block_check(&config, trials, multiset_size, tol, common.seed())
        }
        Command::Model { action: ModelAction::Describe { config, common } } => {
            let model = Model::new(&model_config(&config, common.seed)?)?;
            print!("{}", model.describe());
            Ok(())
        }
        Command::Gradcheck { config, atoms, step, tol, out, common } => {
            gradcheck_cmd(&config, atoms, step, tol, common, &out)
        }
        Command::GenData { samples, atoms, potential, out, common } => gen_data(samples, atoms, potential, common.seed(), &out),
        Command::Train {
            config,
            data,
            epochs,
            lr,
            batch_size,
            energy_weight,
            force_weight,
            val_fraction,
            test_fraction,
            out_dir,
            common,
        } => {
            let optimizer = OptimizerConfig { learning_rate: lr, batch_size, ..OptimizerConfig::default() };
            let loss = LossConfig { energy_weight, force_weight };
            train_cmd(&config, &data, epochs, optimizer, loss, (val_fraction, test_fraction), &out_dir, common)
        }
        Command::Evaluate { model, data, jobs, out, .. } => evaluate_cmd(&model, &data, jobs, &out),
        Command::PlotData { run, out, .. } => plot_data(&run, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // clap exits 2 on usage errors and 0 for --help / --version
        Err(e) => e.exit(),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("usage: fusion <COMMAND> [OPTIONS]; see `fusion --help`");
            ExitCode::from(2)
        }
    }
}
