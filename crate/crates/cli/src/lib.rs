//! `comfortd`: synthesize cohorts, extract features, train, evaluate and
//! serve. Every command that writes files also writes a `manifest.json`
//! recording its parameters and the checksums of what it read and wrote.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use comfort_core::eval::{
    calibration_sweep, evaluate_generic_loso, evaluate_person_specific_cohort, importance_control_study,
    CalibrationConfig, SelectionPolicy, SUBJECT_ID_FEATURE,
};
use comfort_core::hrv::{FeatureMatrix, WindowSpec};
use comfort_core::ingest::{read_annotations_csv, read_ibi_csv, write_annotations_csv, write_ibi_csv, ColumnMapping};
use comfort_core::pipeline::matrix_from_recordings;
use comfort_core::synth::{synthesize_cohort, CohortSpec};
use comfort_core::trees::{fit_ensemble, serialize_model, Dataset, EnsembleKind, EnsembleSpec, Task};
use comfort_core::{AnnotationTrack, FilterPolicy, IbiSeries};
use serde::Serialize;

mod manifest;

pub use manifest::{FileDigest, Manifest};

#[derive(Debug, Parser)]
#[command(name = "comfortd", version, about = "Thermal-comfort prediction from heart rate variability")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort: ibi.csv, annotations.csv, profiles.json.
    Synth(SynthArgs),
    /// Window recordings and compute the feature matrix.
    Extract(ExtractArgs),
    /// Fit an ensemble on a feature matrix and write a .tcm model.
    Train(TrainArgs),
    /// Leave-one-subject-out evaluation of the generic model.
    EvalLoso(EvalArgs),
    /// k-fold cross-validation inside each subject.
    EvalPerson(PersonArgs),
    /// Accuracy or error against the number of calibration samples.
    CalibSweep(SweepArgs),
    /// Impurity importance and RFE with the subject identity as a feature.
    Importance(ImportanceArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bagging,
    Rf,
    Extratrees,
    Adaboost,
}

impl From<ModelKind> for EnsembleKind {
    fn from(k: ModelKind) -> Self {
        match k {
            ModelKind::Bagging => EnsembleKind::Bagging,
            ModelKind::Rf => EnsembleKind::RandomForest,
            ModelKind::Extratrees => EnsembleKind::ExtraTrees,
            ModelKind::Adaboost => EnsembleKind::AdaBoost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskArg {
    Classify,
    Regress,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classify => Task::Classify,
            TaskArg::Regress => Task::Regress,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionArg {
    Chrono,
    Random,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "extratrees")]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value = "classify")]
    pub task: TaskArg,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Trees per ensemble; defaults to the family's standard size.
    #[arg(long)]
    pub estimators: Option<usize>,
}

impl ModelArgs {
    pub fn spec(&self) -> EnsembleSpec {
        let spec = EnsembleSpec::new(self.model.into(), self.task.into(), self.seed);
        match self.estimators {
            Some(n) => spec.with_estimators(n),
            None => spec,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 12)]
    pub subjects: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Strength of individual differences; 0 gives identical physiology.
    #[arg(long, default_value_t = 1.0)]
    pub idiosyncrasy: f64,
    /// Seconds per condition block.
    #[arg(long, default_value_t = 600.0)]
    pub block_s: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtractArgs {
    /// Directory holding ibi.csv and annotations.csv.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output feature matrix CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Column mapping (TOML) for recordings not in the native layout.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 300.0)]
    pub seed_window_s: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Feature matrix CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PersonArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Unseen subjects per repeat.
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    /// Calibration sample counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,100,200,300,400")]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, value_enum, default_value = "chrono")]
    pub selection: SelectionArg,
    /// Split each k across the unseen subjects instead of k per subject.
    #[arg(long)]
    pub pooled_k: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ImportanceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Features removed per RFE round.
    #[arg(long, default_value_t = 1)]
    pub drop: usize,
    #[arg(long, value_enum, default_value = "extratrees")]
    pub model: ModelKind,
    #[arg(long, value_enum, default_value = "regress")]
    pub task: TaskArg,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub estimators: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ServeArgs {
    /// Service configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
}

fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FeatureMatrix::read_csv(std::io::BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Native or mapped recordings from a directory with `ibi.csv` and
/// `annotations.csv`.
pub fn load_recordings(dir: &Path, mapping: Option<&Path>) -> Result<(Vec<IbiSeries>, Vec<AnnotationTrack>)> {
    let ibi = dir.join("ibi.csv");
    let ann = dir.join("annotations.csv");
    let open = |p: &Path| fs::File::open(p).with_context(|| format!("opening {}", p.display()));
    match mapping {
        None => Ok((
            read_ibi_csv(open(&ibi)?).with_context(|| format!("reading {}", ibi.display()))?,
            read_annotations_csv(open(&ann)?).with_context(|| format!("reading {}", ann.display()))?,
        )),
        Some(m) => {
            let text = fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?;
            let mapping = ColumnMapping::from_toml(&text).with_context(|| format!("parsing {}", m.display()))?;
            let series = mapping
                .import_ibi(open(&ibi)?)
                .with_context(|| format!("importing {}", ibi.display()))?;
            let tracks = if mapping.annotations.is_some() {
                mapping.import_annotations(open(&ann)?)
            } else {
                read_annotations_csv(open(&ann)?)
            }
            .with_context(|| format!("importing {}", ann.display()))?;
            Ok((series, tracks))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Extract(a) => extract(&a),
        Command::Train(a) => train(&a),
        Command::EvalLoso(a) => eval_loso(&a),
        Command::EvalPerson(a) => eval_person(&a),
        Command::CalibSweep(a) => calib_sweep(&a),
        Command::Importance(a) => importance(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = CohortSpec {
        idiosyncrasy: a.idiosyncrasy,
        ..CohortSpec::standard(a.subjects, a.block_s, a.seed)
    };
    let cohort = synthesize_cohort(&spec)?;
    let mut ibi = Vec::new();
    write_ibi_csv(&mut ibi, &cohort.series)?;
    let mut ann = Vec::new();
    write_annotations_csv(&mut ann, &cohort.tracks)?;
    let profiles = serde_json::to_vec_pretty(&cohort.profiles)?;
    let mut m = Manifest::new("synth", a, Some(a.seed));
    for (name, bytes) in [("ibi.csv", &ibi), ("annotations.csv", &ann), ("profiles.json", &profiles)] {
        write(&a.out.join(name), bytes)?;
        m.output(name, bytes);
    }
    m.write_to_dir(&a.out)?;
    log::info!("{} subjects, {} series -> {}", a.subjects, cohort.series.len(), a.out.display());
    Ok(())
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let (series, tracks) = load_recordings(&a.input, a.config.as_deref())?;
    let window = WindowSpec {
        seed_duration_s: a.seed_window_s,
        ..WindowSpec::default()
    };
    let matrix = matrix_from_recordings(&series, &tracks, &FilterPolicy::default(), &window)?;
    let mut csv = Vec::new();
    matrix.write_csv(&mut csv)?;
    write(&a.out, &csv)?;
    let mut m = Manifest::new("extract", a, None);
    m.input(&a.input.join("ibi.csv"))?;
    m.input(&a.input.join("annotations.csv"))?;
    if let Some(c) = &a.config {
        m.input(c)?;
    }
    m.output(file_name(&a.out), &csv);
    m.write_beside(&a.out)?;
    println!("{} windows x {} features", matrix.len(), matrix.n_features());
    Ok(())
}

fn file_name(p: &Path) -> &str {
    p.file_name().and_then(|n| n.to_str()).unwrap_or("out")
}

fn train(a: &TrainArgs) -> Result<()> {
    let matrix = read_matrix(&a.input)?;
    let spec = a.model.spec();
    let model = fit_ensemble(&Dataset::from_matrix(&matrix, spec.task), &spec)?;
    let bytes = serialize_model(&model);
    write(&a.out, &bytes)?;
    let mut m = Manifest::new("train", a, Some(a.model.seed));
    m.input(&a.input)?;
    m.output(file_name(&a.out), &bytes);
    m.write_beside(&a.out)?;
    println!("{} trees on {} rows -> {}", model.trees.len(), matrix.len(), a.out.display());
    Ok(())
}

fn eval_loso(a: &EvalArgs) -> Result<()> {
    let matrix = read_matrix(&a.input)?;
    let report = evaluate_generic_loso(&matrix, &a.model.spec())?;
    write_report(&report, "eval-loso", a, &a.input, &a.out, a.model.seed)
}

fn eval_person(a: &PersonArgs) -> Result<()> {
    let matrix = read_matrix(&a.input)?;
    let report = evaluate_person_specific_cohort(&matrix, &a.model.spec(), a.folds)?;
    write_report(&report, "eval-person", a, &a.input, &a.out, a.model.seed)
}

fn write_report(
    report: &comfort_core::eval::EvaluationReport,
    command: &str,
    args: &impl Serialize,
    input: &Path,
    out: &Path,
    seed: u64,
) -> Result<()> {
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let table = report.to_table();
    let lines = report.to_json_lines();
    let summary = serde_json::to_vec_pretty(&report.aggregate)?;
    let mut m = Manifest::new(command, args, Some(seed));
    m.input(input)?;
    for (name, bytes) in [
        ("units.jsonl", lines.as_bytes()),
        ("summary.json", summary.as_slice()),
        ("table.txt", table.as_bytes()),
    ] {
        write(&out.join(name), bytes)?;
        m.output(name, bytes);
    }
    m.write_to_dir(out)?;
    print!("{table}");
    Ok(())
}

fn calib_sweep(a: &SweepArgs) -> Result<()> {
    let matrix = read_matrix(&a.input)?;
    let cfg = CalibrationConfig {
        q: a.q,
        k_grid: a.k.clone(),
        selection: match a.selection {
            SelectionArg::Chrono => SelectionPolicy::ChronoPrefix,
            SelectionArg::Random => SelectionPolicy::Random,
        },
        seed: a.model.seed,
        repeats: a.repeats,
        pooled_k: a.pooled_k,
        ..CalibrationConfig::default()
    };
    let report = calibration_sweep(&matrix, &cfg, &a.model.spec())?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let mut m = Manifest::new("calib-sweep", a, Some(a.model.seed));
    m.input(&a.input)?;
    let mut files: Vec<(String, Vec<u8>)> = report
        .curves
        .iter()
        .map(|c| (format!("curve_{}.csv", c.metric), c.to_csv().into_bytes()))
        .collect();
    files.push(("units.jsonl".into(), report.to_json_lines().into_bytes()));
    files.push(("held_out.json".into(), serde_json::to_vec_pretty(&report.held_out)?));
    for (name, bytes) in &files {
        write(&a.out.join(name), bytes)?;
        m.output(name, bytes);
    }
    m.write_to_dir(&a.out)?;
    for c in &report.curves {
        println!("{}", c.metric);
        print!("{}", c.to_csv());
    }
    Ok(())
}

fn importance(a: &ImportanceArgs) -> Result<()> {
    let matrix = read_matrix(&a.input)?;
    let mut spec = EnsembleSpec::new(a.model.into(), a.task.into(), a.seed);
    if let Some(n) = a.estimators {
        spec = spec.with_estimators(n);
    }
    let study = importance_control_study(&matrix, &spec, a.drop)?;
    let mut imp = String::from("feature,importance,rank\n");
    for e in &study.importance.entries {
        imp.push_str(&format!("{},{},{}\n", e.feature, e.importance, e.rank));
    }
    let mut rfe = String::from("feature,rank\n");
    for (f, r) in &study.rfe.ranking {
        rfe.push_str(&format!("{f},{r}\n"));
    }
    let codes = serde_json::to_vec_pretty(&study.subject_codes)?;
    let mut m = Manifest::new("importance", a, Some(a.seed));
    m.input(&a.input)?;
    for (name, bytes) in [
        ("importance.csv", imp.as_bytes()),
        ("rfe.csv", rfe.as_bytes()),
        ("subject_codes.json", codes.as_slice()),
    ] {
        write(&a.out.join(name), bytes)?;
        m.output(name, bytes);
    }
    m.write_to_dir(&a.out)?;
    let show = |r: Option<usize>| r.map_or("-".to_string(), |r| r.to_string());
    println!(
        "{SUBJECT_ID_FEATURE}: importance rank {}, RFE rank {}",
        show(study.subject_id_rank()),
        show(study.subject_id_rfe_rank())
    );
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let cfg = comfort_service::ServiceConfig::load(&a.config)?;
    let service = comfort_service::Service::from_config(&cfg)?;
    if cfg.bind.is_empty() {
        bail!("bind address is empty");
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(comfort_service::http::serve(service, &cfg.bind))
        .with_context(|| format!("serving on {}", cfg.bind))
}
