//! Campaign plumbing: sampling and training runs into a resumable
//! `runs.csv`, then surrogate quality, importance, verification and the
//! Markdown summary.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::fanova::{self, ImportanceReport, RankedHyperparameter};
use crate::forest::{self, Forest, ForestParams, SurrogateQuality};
use crate::seed::{derive_seed, hash_str, run_seed};
use crate::space::{self, ConfigSpace, Configuration, Hyperparameter};
use crate::stats;
use crate::trainer::{self, LabeledSet, TrainOptions, TrainingRecord};
use crate::verification::{self, DatasetVerification, RankReport, SearchSettings};

pub const RUNS_FILE: &str = "runs.csv";
pub const RECORDS_DIR: &str = "records";
pub const FOREST_FILE: &str = "forest.json";
pub const QUALITY_FILE: &str = "quality.json";
pub const IMPORTANCE_CSV: &str = "importance.csv";
pub const IMPORTANCE_JSON: &str = "importance.json";
pub const VERIFICATION_CSV: &str = "verification.csv";
pub const VERIFICATION_JSON: &str = "verification.json";
pub const SUMMARY_FILE: &str = "summary.md";

// Stream tags mixed into the master seed for each analysis stage.
const FOLD_STREAM: u64 = 1;
const QUALITY_STREAM: u64 = 2;
const FOREST_STREAM: u64 = 3;
const SEARCH_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    /// Dataset manifest (JSON).
    pub manifest: PathBuf,
    pub configs: usize,
    pub epochs: usize,
    pub folds: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Datasets with more features are skipped.
    pub max_qubits: Option<usize>,
    pub quality_folds: usize,
    pub forest: ForestParams,
    pub search: SearchSettings,
}

impl ExperimentManifest {
    pub fn new(manifest: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            configs: 1000,
            epochs: trainer::DEFAULT_EPOCHS,
            folds: 10,
            seed: 0,
            out: out.into(),
            jobs: 1,
            max_qubits: None,
            quality_folds: 10,
            forest: ForestParams::default(),
            search: SearchSettings::default(),
        }
    }

    /// 200 configurations, 30 epochs, 5 folds, at most 6 qubits.
    pub fn desk_scale(mut self) -> Self {
        self.configs = 200;
        self.epochs = 30;
        self.folds = 5;
        self.max_qubits = Some(6);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("configs", self.configs),
            ("epochs", self.epochs),
            ("folds", self.folds),
            ("quality folds", self.quality_folds),
            ("trees", self.forest.n_trees),
            ("search iterations", self.search.iterations),
            ("search repeats", self.search.repeats),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.folds < 2 || self.quality_folds < 2 {
            return Err(Error::Config("fold counts must be at least 2".into()));
        }
        Ok(())
    }

    pub fn worker_count(&self) -> usize {
        match self.jobs {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

impl RunStatus {
    fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "failed",
        }
    }
}

/// One row of `runs.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_id: u64,
    pub seed: u64,
    pub config: Configuration,
    /// Mean over folds of the best validation accuracy; absent on failure.
    pub y: Option<f64>,
    pub status: RunStatus,
}

pub fn runs_header() -> Vec<String> {
    Hyperparameter::ALL
        .iter()
        .map(|h| h.name().to_string())
        .chain(["y", "status", "run_id", "seed"].map(String::from))
        .collect()
}

pub fn run_record(row: &RunRow) -> Vec<String> {
    let mut out: Vec<String> = Hyperparameter::ALL
        .iter()
        .map(|&h| row.config.value_label(h))
        .collect();
    out.push(row.y.map(stats::fmt17).unwrap_or_default());
    out.push(row.status.as_str().to_string());
    out.push(row.run_id.to_string());
    out.push(row.seed.to_string());
    out
}

fn parse_run(path: &Path, rec: &csv::StringRecord) -> Result<RunRow> {
    let bad = |m: String| Error::Parse {
        path: path.to_path_buf(),
        message: m,
    };
    if rec.len() != Hyperparameter::ALL.len() + 4 {
        return Err(bad(format!("row has {} fields", rec.len())));
    }
    let mut config = Configuration::default();
    for h in Hyperparameter::ALL {
        config.set_from_str(h, &rec[h.index()])?;
    }
    let n = Hyperparameter::ALL.len();
    let status = match &rec[n + 1] {
        "ok" => RunStatus::Ok,
        "failed" => RunStatus::Failed,
        s => return Err(bad(format!("unknown status {s:?}"))),
    };
    let y = match &rec[n] {
        "" => None,
        s => Some(s.parse::<f64>().map_err(|e| bad(format!("y {s:?}: {e}")))?),
    };
    let run_id = rec[n + 2].parse().map_err(|e| bad(format!("run_id: {e}")))?;
    let seed = rec[n + 3].parse().map_err(|e| bad(format!("seed: {e}")))?;
    Ok(RunRow {
        run_id,
        seed,
        config,
        y,
        status,
    })
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    })?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != runs_header() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "unexpected header".into(),
        });
    }
    reader
        .records()
        .map(|r| parse_run(path, &r?))
        .collect()
}

/// Safe file-system name for a dataset directory.
pub fn dataset_dir(out: &Path, name: &str) -> PathBuf {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    out.join(clean)
}

/// Everything stored for one run besides its CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: u64,
    pub seed: u64,
    pub config: Configuration,
    pub status: RunStatus,
    pub y: Option<f64>,
    pub error: Option<String>,
    pub folds: Vec<TrainingRecord>,
}

/// Samples and cross-validates run `run_id` on prepared fold sets.
pub fn execute_run(
    dataset_name: &str,
    fold_sets: &[(LabeledSet, LabeledSet)],
    run_id: u64,
    master_seed: u64,
    epochs: usize,
) -> RunRecord {
    let seed = run_seed(master_seed, dataset_name, run_id);
    let config = space::sample(&mut ChaCha8Rng::seed_from_u64(seed));
    let result: Result<Vec<TrainingRecord>> = fold_sets
        .iter()
        .enumerate()
        .map(|(k, (train, test))| {
            let opts = TrainOptions::new(epochs, derive_seed(seed, &[k as u64 + 1]));
            trainer::train_fold(&config, train, test, &opts)
        })
        .collect();
    match result {
        Ok(folds) => {
            let best: Vec<f64> = folds.iter().map(|f| f.best_val_accuracy).collect();
            RunRecord {
                run_id,
                seed,
                config,
                status: RunStatus::Ok,
                y: Some(stats::mean(&best)),
                error: None,
                folds,
            }
        }
        Err(e) => RunRecord {
            run_id,
            seed,
            config,
            status: RunStatus::Failed,
            y: None,
            error: Some(e.to_string()),
            folds: Vec::new(),
        },
    }
}

/// Drops a trailing partial line and returns the run ids already present.
fn prepare_runs_file(path: &Path) -> Result<HashSet<u64>> {
    let header = runs_header().join(",") + "\n";
    let existing = match fs::read(path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(path, e)),
    };
    let complete = existing
        .iter()
        .rposition(|&b| b == b'\n')
        .map_or(0, |i| i + 1);
    if complete < header.len() {
        fs::write(path, &header).map_err(|e| Error::io(path, e))?;
        return Ok(HashSet::new());
    }
    if complete < existing.len() {
        log::warn!("{}: dropping a partial last line", path.display());
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.set_len(complete as u64).map_err(|e| Error::io(path, e))?;
    }
    Ok(read_runs(path)?.into_iter().map(|r| r.run_id).collect())
}

/// Rewrites the data lines of `runs.csv` in run-id order, byte for byte.
fn sort_runs_file(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let id_col = Hyperparameter::ALL.len() + 2;
    let mut keyed: Vec<(u64, &str)> = lines
        .map(|l| {
            let id = l
                .split(',')
                .nth(id_col)
                .and_then(|s| s.parse().ok())
                .unwrap_or(u64::MAX);
            (id, l)
        })
        .collect();
    if keyed.windows(2).all(|w| w[0].0 <= w[1].0) {
        return Ok(());
    }
    keyed.sort_by_key(|k| k.0);
    let mut out = String::with_capacity(text.len());
    out.push_str(header);
    out.push('\n');
    for (_, l) in keyed {
        out.push_str(l);
        out.push('\n');
    }
    let tmp = path.with_extension("csv.tmp");
    fs::write(&tmp, out).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub datasets: Vec<DatasetCampaign>,
    /// Datasets that could not be used, with the reason.
    pub skipped: Vec<(String, String)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetCampaign {
    pub dataset: String,
    pub already_done: usize,
    pub completed: usize,
    pub failed: usize,
}

/// Runs the campaign for one prepared dataset, resuming from `runs.csv`.
pub fn run_dataset_campaign(dataset: &Dataset, exp: &ExperimentManifest) -> Result<DatasetCampaign> {
    let dir = dataset_dir(&exp.out, &dataset.name);
    let records_dir = dir.join(RECORDS_DIR);
    fs::create_dir_all(&records_dir).map_err(|e| Error::io(&records_dir, e))?;
    let runs_path = dir.join(RUNS_FILE);
    let done = prepare_runs_file(&runs_path)?;
    let pending: Vec<u64> = (0..exp.configs as u64).filter(|i| !done.contains(i)).collect();
    let mut summary = DatasetCampaign {
        dataset: dataset.name.clone(),
        already_done: done.len(),
        ..Default::default()
    };
    log::info!(
        "{}: {} runs done, {} pending",
        dataset.name,
        done.len(),
        pending.len()
    );

    let splits = data::make_folds(
        &dataset.labels,
        exp.folds,
        derive_seed(exp.seed, &[hash_str(&dataset.name), FOLD_STREAM]),
    )?;
    let fold_sets: Vec<(LabeledSet, LabeledSet)> = splits
        .iter()
        .map(|s| {
            let (train, test, _) = data::fold_sets(dataset, s);
            (train, test)
        })
        .collect();

    let file = OpenOptions::new()
        .append(true)
        .open(&runs_path)
        .map_err(|e| Error::io(&runs_path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));

    let next = AtomicUsize::new(0);
    let workers = exp.worker_count().min(pending.len().max(1));
    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel::<RunRecord>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending, fold_sets) = (&next, &pending, &fold_sets);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&run_id) = pending.get(i) else { break };
                let record = execute_run(&dataset.name, fold_sets, run_id, exp.seed, exp.epochs);
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // single writer: results land in arrival order
        for record in rx {
            let path = records_dir.join(format!("run_{:06}.json", record.run_id));
            fs::write(&path, serde_json::to_string(&record)?).map_err(|e| Error::io(&path, e))?;
            let row = RunRow {
                run_id: record.run_id,
                seed: record.seed,
                config: record.config.clone(),
                y: record.y,
                status: record.status,
            };
            writer.write_record(run_record(&row))?;
            writer.flush().map_err(|e| Error::io(&runs_path, e))?;
            summary.completed += 1;
            if record.status == RunStatus::Failed {
                summary.failed += 1;
                log::warn!(
                    "{} run {} failed: {}",
                    dataset.name,
                    record.run_id,
                    record.error.as_deref().unwrap_or("")
                );
            }
        }
        Ok(())
    })?;
    drop(writer);
    sort_runs_file(&runs_path)?;
    Ok(summary)
}

/// `sample-runs`: every dataset in the manifest, skipping unusable ones.
pub fn cmd_sample_runs(exp: &ExperimentManifest) -> Result<CampaignReport> {
    exp.validate()?;
    fs::create_dir_all(&exp.out).map_err(|e| Error::io(&exp.out, e))?;
    let entries = data::read_manifest(&exp.manifest)?;
    let mut report = CampaignReport::default();
    for entry in entries {
        let dataset = match data::load_manifest_entry(&entry) {
            Ok(d) => d,
            Err(e) => {
                log::error!("skipping dataset {}: {e}", entry.name);
                report.skipped.push((entry.name.clone(), e.to_string()));
                continue;
            }
        };
        if let Some(max) = exp.max_qubits {
            if dataset.num_features() > max {
                let reason = format!("{} qubits exceed the limit of {max}", dataset.num_features());
                log::warn!("skipping dataset {}: {reason}", entry.name);
                report.skipped.push((entry.name.clone(), reason));
                continue;
            }
        }
        report.datasets.push(run_dataset_campaign(&dataset, exp)?);
    }
    Ok(report)
}

/// Dataset directories under `out` holding a `runs.csv`, sorted by name.
pub fn discover_datasets(out: &Path) -> Result<Vec<String>> {
    let entries = match fs::read_dir(out) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(out, e)),
    };
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(RUNS_FILE).is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    Ok(names)
}

fn missing_runs(out: &Path) -> Error {
    Error::MissingInputs(vec![out.join("<dataset>").join(RUNS_FILE)])
}

/// Successful rows as encoded feature vectors and targets.
pub fn run_table(rows: &[RunRow]) -> (Vec<Vec<f64>>, Vec<f64>) {
    rows.iter()
        .filter(|r| r.status == RunStatus::Ok)
        .filter_map(|r| r.y.map(|y| (space::to_feature_vector(&r.config).to_vec(), y)))
        .unzip()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityEntry {
    pub dataset: String,
    pub quality: Option<SurrogateQuality>,
    pub successful_rows: usize,
    pub excluded_rows: usize,
    pub passed: bool,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceFile {
    pub datasets: Vec<DatasetImportance>,
    pub ranking: Vec<RankedHyperparameter>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetImportance {
    pub dataset: String,
    pub report: ImportanceReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisOutcome {
    pub quality: Vec<QualityEntry>,
    pub importance: Option<ImportanceFile>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Quality gate for one dataset's runs; fits and saves the full forest when it passes.
pub fn assess_dataset(name: &str, rows: &[RunRow], exp: &ExperimentManifest) -> Result<(QualityEntry, Option<Forest>)> {
    let (x, y) = run_table(rows);
    let mut entry = QualityEntry {
        dataset: name.to_string(),
        quality: None,
        successful_rows: x.len(),
        excluded_rows: rows.len() - x.len(),
        passed: false,
        reason: None,
    };
    if x.len() < forest::MIN_QUALITY_ROWS {
        entry.reason = Some(format!(
            "{} successful rows, fewer than {}",
            x.len(),
            forest::MIN_QUALITY_ROWS
        ));
        return Ok((entry, None));
    }
    let space = ConfigSpace::qnn();
    let base = hash_str(name);
    let q = forest::assess_quality(
        &x,
        &y,
        &space,
        exp.forest,
        exp.quality_folds,
        derive_seed(exp.seed, &[base, QUALITY_STREAM]),
    )?;
    entry.passed = q.passed;
    if !q.passed {
        entry.reason = Some(if q.zero_variance {
            "targets have zero variance".to_string()
        } else {
            format!("surrogate R2 {:.4} below {}", q.r2, forest::R2_THRESHOLD)
        });
    }
    entry.quality = Some(q);
    if !entry.passed {
        return Ok((entry, None));
    }
    let fitted = Forest::fit(&x, &y, &space, exp.forest, derive_seed(exp.seed, &[base, FOREST_STREAM]))?;
    Ok((entry, Some(fitted)))
}

/// `analyze`: quality gate, forest fit and fANOVA for every dataset.
/// The quality report is written even when no dataset passes.
pub fn cmd_analyze(exp: &ExperimentManifest) -> Result<AnalysisOutcome> {
    exp.validate()?;
    let names = discover_datasets(&exp.out)?;
    if names.is_empty() {
        return Err(missing_runs(&exp.out));
    }
    let mut quality = Vec::new();
    let mut importance = Vec::new();
    for name in &names {
        let dir = exp.out.join(name);
        let rows = read_runs(&dir.join(RUNS_FILE))?;
        let (entry, fitted) = assess_dataset(name, &rows, exp)?;
        match &fitted {
            Some(f) => {
                f.save(&dir.join(FOREST_FILE))?;
                importance.push(DatasetImportance {
                    dataset: name.clone(),
                    report: fanova::aggregate_importance(f)?,
                });
            }
            None => log::warn!(
                "excluding dataset {name}: {}",
                entry.reason.as_deref().unwrap_or("")
            ),
        }
        quality.push(entry);
    }
    write_json(&exp.out.join(QUALITY_FILE), &quality)?;
    if importance.is_empty() {
        return Err(Error::Validation(format!(
            "no dataset passed the surrogate quality gate; see {}",
            exp.out.join(QUALITY_FILE).display()
        )));
    }
    let reports: Vec<&ImportanceReport> = importance.iter().map(|d| &d.report).collect();
    let ranking = fanova::median_ranking(&reports)?;
    let pairs: Vec<(String, ImportanceReport)> = importance
        .iter()
        .map(|d| (d.dataset.clone(), d.report.clone()))
        .collect();
    let csv_path = exp.out.join(IMPORTANCE_CSV);
    let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    fanova::write_importance_csv(BufWriter::new(file), &pairs)?;
    let file = ImportanceFile {
        datasets: importance,
        ranking,
    };
    write_json(&exp.out.join(IMPORTANCE_JSON), &file)?;
    Ok(AnalysisOutcome {
        quality,
        importance: Some(file),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationFile {
    pub report: RankReport,
    pub datasets: Vec<DatasetVerification>,
    /// Spearman correlation between median importance and final average rank.
    pub agreement: Option<f64>,
}

/// `verify`: fixed-hyperparameter searches on every saved surrogate.
pub fn cmd_verify(exp: &ExperimentManifest) -> Result<VerificationFile> {
    exp.validate()?;
    let quality_path = exp.out.join(QUALITY_FILE);
    if !quality_path.is_file() {
        return Err(Error::MissingInputs(vec![quality_path]));
    }
    let quality: Vec<QualityEntry> = read_json(&quality_path)?;
    let mut results = Vec::new();
    for entry in quality.iter().filter(|q| q.passed) {
        let forest = Forest::load(&exp.out.join(&entry.dataset).join(FOREST_FILE))?;
        let seed = derive_seed(exp.seed, &[hash_str(&entry.dataset), SEARCH_STREAM]);
        results.push(verification::verify_dataset(&entry.dataset, &forest, exp.search, seed)?);
    }
    if results.is_empty() {
        return Err(Error::Validation("no passing dataset to verify".into()));
    }
    let report = verification::rank_curves(&results)?;
    let importance_path = exp.out.join(IMPORTANCE_JSON);
    let agreement = if importance_path.is_file() {
        let imp: ImportanceFile = read_json(&importance_path)?;
        let medians: Vec<f64> = report
            .names
            .iter()
            .map(|n| {
                imp.ranking
                    .iter()
                    .find(|r| &r.name == n)
                    .map_or(0.0, |r| r.median_fraction)
            })
            .collect();
        verification::ranking_agreement(&medians, report.final_ranks())
    } else {
        None
    };
    let csv_path = exp.out.join(VERIFICATION_CSV);
    let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    verification::write_verification_csv(BufWriter::new(file), &results, &report)?;
    let out = VerificationFile {
        report,
        datasets: results,
        agreement,
    };
    write_json(&exp.out.join(VERIFICATION_JSON), &out)?;
    Ok(out)
}

/// `report`: the Markdown summary built from the analysis outputs.
pub fn cmd_report(out: &Path) -> Result<String> {
    let names = discover_datasets(out)?;
    let mut missing = Vec::new();
    if names.is_empty() {
        missing.push(out.join("<dataset>").join(RUNS_FILE));
    }
    for f in [QUALITY_FILE, IMPORTANCE_JSON, VERIFICATION_JSON] {
        if !out.join(f).is_file() {
            missing.push(out.join(f));
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let quality: Vec<QualityEntry> = read_json(&out.join(QUALITY_FILE))?;
    let importance: ImportanceFile = read_json(&out.join(IMPORTANCE_JSON))?;
    let verification: VerificationFile = read_json(&out.join(VERIFICATION_JSON))?;
    let mut runs = Vec::new();
    for name in &names {
        runs.push((name.clone(), read_runs(&out.join(name).join(RUNS_FILE))?));
    }
    let text = render_summary(&quality, &importance, &verification, &runs);
    let path = out.join(SUMMARY_FILE);
    fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    Ok(text)
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

pub fn render_summary(
    quality: &[QualityEntry],
    importance: &ImportanceFile,
    verification: &VerificationFile,
    runs: &[(String, Vec<RunRow>)],
) -> String {
    let mut s = String::from("# Hyperparameter importance summary\n\n## Surrogate quality\n\n");
    s.push_str("| dataset | R2 | RMSE | CC | rows | excluded rows | status |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for q in quality {
        let (r2, rmse, cc) = q
            .quality
            .as_ref()
            .map_or(("-".into(), "-".into(), "-".into()), |m| {
                (f4(m.r2), f4(m.rmse), f4(m.spearman_cc))
            });
        let status = if q.passed {
            "kept".to_string()
        } else {
            format!("excluded: {}", q.reason.as_deref().unwrap_or(""))
        };
        let _ = writeln!(
            s,
            "| {} | {r2} | {rmse} | {cc} | {} | {} | {status} |",
            q.dataset, q.successful_rows, q.excluded_rows
        );
    }

    s.push_str("\n## Importance ranking\n\nMedian singleton variance fraction across kept datasets. ");
    s.push_str("Level 1 is the most important group.\n\n");
    s.push_str("| rank | hyperparameter | median fraction | level |\n|---|---|---|---|\n");
    for r in &importance.ranking {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} |",
            r.rank,
            r.name,
            f4(r.median_fraction),
            r.level
        );
    }
    s.push_str("\n### Per dataset\n\n| hyperparameter |");
    for d in &importance.datasets {
        let _ = write!(s, " {} fraction | {} marginal range |", d.dataset, d.dataset);
    }
    s.push('\n');
    s.push_str(&"|---".repeat(1 + 2 * importance.datasets.len()));
    s.push_str("|\n");
    for (j, h) in Hyperparameter::ALL.iter().enumerate() {
        let _ = write!(s, "| {h} |");
        for d in &importance.datasets {
            let single = &d.report.subsets[j];
            let show = |v: Option<f64>| v.map_or("-".to_string(), f4);
            let _ = write!(s, " {} | {} |", show(single.fraction), show(single.marginal_range));
        }
        s.push('\n');
    }

    let rep = &verification.report;
    let iters = rep.mean_rank.len();
    let _ = write!(
        s,
        "\n## Verification\n\nAverage rank after {iters} search iterations. \
         Rank 1 means fixing the hyperparameter costs least.\n\n| hyperparameter | average rank |"
    );
    for d in &rep.datasets {
        let _ = write!(s, " y* {d} |");
    }
    s.push('\n');
    s.push_str(&"|---".repeat(2 + rep.datasets.len()));
    s.push_str("|\n");
    for (j, name) in rep.names.iter().enumerate() {
        let _ = write!(s, "| {name} | {} |", f4(rep.final_ranks()[j]));
        for ys in &rep.y_star {
            let _ = write!(s, " {} |", f4(ys[j]));
        }
        s.push('\n');
    }
    let _ = writeln!(
        s,
        "\nSpearman agreement between importance and final rank: {}",
        verification.agreement.map_or("n/a".to_string(), f4)
    );
    let _ = writeln!(s, "\nAveraging: {}.", rep.averaging);

    s.push_str("\n## Performance distribution\n\n");
    s.push_str("| dataset | ok | failed | min | q1 | median | q3 | max | mean |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for (name, rows) in runs {
        let ys: Vec<f64> = rows.iter().filter_map(|r| r.y).collect();
        let failed = rows.len() - ys.len();
        if ys.is_empty() {
            let _ = writeln!(s, "| {name} | 0 | {failed} | - | - | - | - | - | - |");
            continue;
        }
        let _ = writeln!(
            s,
            "| {name} | {} | {failed} | {} | {} | {} | {} | {} | {} |",
            ys.len(),
            f4(stats::quantile(&ys, 0.0)),
            f4(stats::quantile(&ys, 0.25)),
            f4(stats::median(&ys)),
            f4(stats::quantile(&ys, 0.75)),
            f4(stats::quantile(&ys, 1.0)),
            f4(stats::mean(&ys)),
        );
    }
    s
}
