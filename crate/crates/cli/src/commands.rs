//! Subcommand implementations. Each returns a summary for the caller to
//! print; artifacts are written atomically.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use grading_core::achem::{format_search_log, run_search, EvaluationData, Molecule, SearchStop, TrainingFitness};
use grading_core::datasets::{load_manifest, stratified_split, synth_generate, Manifest, ManifestRecord, Splits};
use grading_core::evaluation::{
    confusion, hourly_accuracy, metrics, ordinal_errors, ConfusionMatrix, GraderLog, HourlyCurve, MulticlassConfusion,
    OrdinalReport,
};
use grading_core::features::{extract_spectral_pattern, read_feature_file, write_feature_file, FeatureRecord};
use grading_core::fsutil::write_atomic;
use grading_core::imaging::{load_image, segment};
use grading_core::neuralnet::{
    classify, init_network, load_model, save_model, train, write_history, Network, Sample, StopReason,
};
use grading_core::{Label, Task};
use rayon::prelude::*;
use serde_json::json;

use crate::config::PipelineConfig;

pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const SEARCH_MODEL_FILE: &str = "best_model.json";
pub const SEARCH_LOG_FILE: &str = "search_log.csv";

pub fn cmd_synth(config: &PipelineConfig, out_dir: &Path) -> Result<Manifest> {
    let manifest = synth_generate(&config.synth_config(), out_dir)?;
    log::info!("generated {} images in {}", manifest.len(), out_dir.display());
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub id: String,
    pub path: PathBuf,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct PreprocessSummary {
    pub records: usize,
    pub failures: Vec<Failure>,
    pub failures_path: PathBuf,
}

/// `<out>.failures.csv` next to the feature file.
pub fn failures_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".failures.csv");
    out.with_file_name(name)
}

/// Turns every manifest image into a feature record. Images that cannot be
/// decoded or segmented are listed in the failures sidecar and skipped.
pub fn cmd_preprocess(config: &PipelineConfig, manifest_path: &Path, out: &Path) -> Result<PreprocessSummary> {
    let manifest = load_manifest(manifest_path, config.task)
        .with_context(|| format!("loading manifest {}", manifest_path.display()))?;
    let outcomes: Vec<std::result::Result<FeatureRecord, Failure>> = manifest
        .records
        .par_iter()
        .map(|rec| featurize(&manifest, rec, config))
        .collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => {
                log::warn!("{}: {}", f.id, f.message);
                failures.push(f);
            }
        }
    }
    write_feature_file(out, &records, &config.preamble())?;

    let mut sidecar = String::from("id,path,error\n");
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        for f in &failures {
            w.write_record([f.id.as_str(), &f.path.display().to_string(), f.message.as_str()])?;
        }
        sidecar.push_str(std::str::from_utf8(&w.into_inner()?)?);
    }
    let failures_path = failures_path(out);
    write_atomic(&failures_path, sidecar.as_bytes())?;
    Ok(PreprocessSummary {
        records: records.len(),
        failures,
        failures_path,
    })
}

fn featurize(manifest: &Manifest, rec: &ManifestRecord, config: &PipelineConfig) -> std::result::Result<FeatureRecord, Failure> {
    let path = manifest.resolve(rec);
    let run = || -> grading_core::Result<FeatureRecord> {
        let img = load_image(&path)?;
        let mask = segment(&img, &config.edge, &rec.id)?;
        Ok(FeatureRecord {
            id: rec.id.clone(),
            label: rec.label,
            pattern: extract_spectral_pattern(&img, &mask)?,
        })
    };
    run().map_err(|e| Failure {
        id: rec.id.clone(),
        path: rec.path.clone(),
        message: e.to_string(),
    })
}

/// Feature records split into the configured train/test/validation sets.
pub struct SplitFeatures {
    pub train: Vec<FeatureRecord>,
    pub test: Vec<FeatureRecord>,
    pub validation: Vec<FeatureRecord>,
}

pub fn split_features(config: &PipelineConfig, features: Vec<FeatureRecord>) -> Result<SplitFeatures> {
    let mut index = Manifest::new(config.task, "");
    index.records = features
        .iter()
        .map(|f| ManifestRecord {
            id: f.id.clone(),
            path: PathBuf::from(&f.id),
            label: f.label,
            grader: None,
            hour: None,
        })
        .collect();
    let Splits {
        train,
        test,
        validation,
    } = stratified_split(&index, &config.split_spec())?;
    let mut by_id: HashMap<String, FeatureRecord> = features.into_iter().map(|f| (f.id.clone(), f)).collect();
    let mut take = |m: Manifest| -> Vec<FeatureRecord> {
        m.records
            .iter()
            .map(|r| by_id.remove(&r.id).expect("split ids come from the feature set"))
            .collect()
    };
    Ok(SplitFeatures {
        train: take(train),
        test: take(test),
        validation: take(validation),
    })
}

fn samples(records: &[FeatureRecord]) -> Vec<Sample> {
    records
        .iter()
        .map(|r| Sample {
            id: Some(r.id.clone()),
            input: r.pattern.values().to_vec(),
            target: r.label.target(),
        })
        .collect()
}

fn load_features(config: &PipelineConfig, path: &Path) -> Result<Vec<FeatureRecord>> {
    let records =
        read_feature_file(path, config.task).with_context(|| format!("reading features {}", path.display()))?;
    if records.is_empty() {
        bail!("feature file {} has no records", path.display());
    }
    Ok(records)
}

/// Validation predictions and the derived confusion matrix.
#[derive(Clone, Debug)]
pub struct ValidationResult {
    pub predictions: Vec<(String, Label, Label)>,
    pub confusion: ConfusionMatrix,
}

impl ValidationResult {
    pub fn accuracy(&self) -> f64 {
        let correct = self.predictions.iter().filter(|(_, t, p)| t == p).count();
        correct as f64 / self.predictions.len() as f64
    }

    pub fn ordinal(&self) -> OrdinalReport {
        match &self.confusion {
            ConfusionMatrix::Binary(b) => ordinal_errors(&b.to_multiclass()),
            ConfusionMatrix::Multiclass(m) => ordinal_errors(m),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,label,predicted\n");
        for (id, t, p) in &self.predictions {
            let _ = writeln!(out, "{id},{t},{p}");
        }
        out
    }
}

pub fn validate_network(net: &Network, records: &[FeatureRecord], task: Task) -> Result<ValidationResult> {
    let predictions = records
        .iter()
        .map(|r| Ok((r.id.clone(), r.label, classify(net, r.pattern.values(), task)?)))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<Label> = predictions.iter().map(|p| p.1).collect();
    let preds: Vec<Label> = predictions.iter().map(|p| p.2).collect();
    let confusion = confusion(&preds, &truth, task)?;
    Ok(ValidationResult {
        predictions,
        confusion,
    })
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub model_path: PathBuf,
    pub epochs: usize,
    pub best_epoch: usize,
    pub stopped: StopReason,
    pub validation: ValidationResult,
}

/// Trains the configured structure and writes `model.json`, `history.csv`
/// and `validation.csv` into `out_dir`.
pub fn cmd_train(config: &PipelineConfig, features: &Path, out_dir: &Path) -> Result<TrainSummary> {
    let records = load_features(config, features)?;
    let input_size = records[0].pattern.values().len();
    let split = split_features(config, records)?;
    let structure = config.network_structure(input_size);
    let net = init_network(&structure, config.init_seed())?;
    let (trained, history) = train(&net, &samples(&split.train), &samples(&split.test), &config.training_params())?;
    let validation = validate_network(&trained, &split.validation, config.task)?;

    let model_path = out_dir.join(MODEL_FILE);
    let metadata = json!({
        "task": config.task,
        "best_epoch": history.best_epoch,
        "epochs": history.epochs.len(),
        "validation_accuracy": validation.accuracy(),
        "config": config.to_json(),
    });
    save_model(&model_path, &trained, metadata)?;
    write_history(&out_dir.join(HISTORY_FILE), &history)?;
    write_atomic(&out_dir.join(VALIDATION_FILE), validation.to_csv().as_bytes())?;
    Ok(TrainSummary {
        model_path,
        epochs: history.epochs.len(),
        best_epoch: history.best_epoch,
        stopped: history.stopped_reason,
        validation,
    })
}

#[derive(Clone, Debug)]
pub struct SearchSummary {
    pub model_path: PathBuf,
    pub log_path: PathBuf,
    pub best: Molecule,
    pub cycles: usize,
    pub stopped: SearchStop,
    pub log: Vec<grading_core::achem::CycleLog>,
}

/// Runs the structure search and writes the best trained model (with its
/// molecule in the metadata) and the per-cycle log into `out_dir`.
pub fn cmd_search(config: &PipelineConfig, features: &Path, out_dir: &Path) -> Result<SearchSummary> {
    let records = load_features(config, features)?;
    let split = split_features(config, records)?;
    let data = EvaluationData {
        task: config.task,
        train: samples(&split.train),
        test: samples(&split.test),
        validation: split
            .validation
            .iter()
            .map(|r| (r.pattern.values().to_vec(), r.label))
            .collect(),
    };
    let fitness = TrainingFitness {
        data,
        settings: config.evaluation_settings(),
    };
    let outcome = run_search(&config.search_config(), &fitness)?;
    let model = outcome
        .best_model
        .as_ref()
        .ok_or_else(|| anyhow!("every candidate diverged; no model to save"))?;

    let model_path = out_dir.join(SEARCH_MODEL_FILE);
    let log_path = out_dir.join(SEARCH_LOG_FILE);
    let cycles = outcome.log.last().map_or(0, |l| l.cycle);
    let metadata = json!({
        "task": config.task,
        "molecule": outcome.best,
        "cycles": cycles,
        "stopped": outcome.stopped,
        "config": config.to_json(),
    });
    save_model(&model_path, model, metadata)?;
    write_atomic(&log_path, format_search_log(&outcome.log).as_bytes())?;
    Ok(SearchSummary {
        model_path,
        log_path,
        best: outcome.best,
        cycles,
        stopped: outcome.stopped,
        log: outcome.log,
    })
}

#[derive(Clone, Debug)]
pub enum GradeInput {
    Image(PathBuf),
    Features(PathBuf),
}

fn model_task(meta: &serde_json::Value, fallback: Task) -> Result<Task> {
    match meta.get("task") {
        Some(t) => serde_json::from_value(t.clone()).context("model metadata names an unknown task"),
        None => Ok(fallback),
    }
}

/// Classifies an image or every record of a feature file. With `report`,
/// the `id,label` lines are appended to that file.
pub fn cmd_grade(
    config: &PipelineConfig,
    model: &Path,
    input: &GradeInput,
    report: Option<&Path>,
) -> Result<Vec<(String, Label)>> {
    let (net, meta) = load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    let task = model_task(&meta, config.task)?;
    let graded: Vec<(String, Label)> = match input {
        GradeInput::Image(path) => {
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            let img = load_image(path)?;
            let mask = segment(&img, &config.edge, &id)?;
            let pattern = extract_spectral_pattern(&img, &mask)?;
            vec![(id, classify(&net, pattern.values(), task)?)]
        }
        GradeInput::Features(path) => read_feature_file(path, task)?
            .iter()
            .map(|r| Ok((r.id.clone(), classify(&net, r.pattern.values(), task)?)))
            .collect::<Result<_>>()?,
    };
    if let Some(report) = report {
        let mut text = match std::fs::read_to_string(report) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::from("id,label\n"),
            Err(e) => return Err(e).with_context(|| format!("reading report {}", report.display())),
        };
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        for (id, label) in &graded {
            let _ = writeln!(text, "{id},{label}");
        }
        write_atomic(report, text.as_bytes())?;
    }
    Ok(graded)
}

/// Reads the `id` and `label` columns of any CSV with a header row
/// (prediction files, manifests, feature files).
pub fn read_labels(path: &Path, task: Task) -> Result<Vec<(String, Label)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{} has no `{name}` column", path.display()))
    };
    let (id_col, label_col) = (column("id")?, column("label")?);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.with_context(|| format!("reading {}", path.display()))?;
        let field = |i: usize| {
            row.get(i)
                .ok_or_else(|| anyhow!("{}: short row at line {}", path.display(), row.position().map_or(0, |p| p.line())))
        };
        out.push((field(id_col)?.to_string(), task.parse_label(field(label_col)?)?));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Report {
    pub confusion: ConfusionMatrix,
    pub table: String,
    pub csv: String,
}

/// Joins predictions with ground truth by id and computes the task's
/// metric report.
pub fn cmd_report(task: Task, predictions: &Path, truth: &Path) -> Result<Report> {
    let truth: HashMap<String, Label> = read_labels(truth, task)?.into_iter().collect();
    let mut preds = Vec::new();
    let mut actual = Vec::new();
    for (id, label) in read_labels(predictions, task)? {
        let t = truth
            .get(&id)
            .ok_or_else(|| anyhow!("no ground truth for `{id}`"))?;
        preds.push(label);
        actual.push(*t);
    }
    let confusion = confusion(&preds, &actual, task)?;
    let (table, csv) = match &confusion {
        ConfusionMatrix::Binary(b) => {
            let m = metrics(b);
            let table = format!(
                "confusion: tp={} fp={} fn={} tn={}\n{}",
                b.true_positive,
                b.false_positive,
                b.false_negative,
                b.true_negative,
                m.to_table()
            );
            (table, m.to_csv())
        }
        ConfusionMatrix::Multiclass(m) => multiclass_report(m),
    };
    Ok(Report {
        confusion,
        table,
        csv,
    })
}

fn multiclass_report(m: &MulticlassConfusion) -> (String, String) {
    let names: Vec<&str> = Task::Tomato.labels().iter().map(|l| l.name()).collect();
    let mut table = format!("{:<10}", "truth");
    for n in &names {
        let _ = write!(table, " {n:>9}");
    }
    table.push('\n');
    for (t, n) in names.iter().enumerate() {
        let _ = write!(table, "{n:<10}");
        for p in 0..m.classes() {
            let _ = write!(table, " {:>9}", m.get(t, p));
        }
        table.push('\n');
    }
    let ord = ordinal_errors(m);
    let acc = ord.accuracy().map_or("undefined".to_string(), |r| r.percent(2));
    let _ = writeln!(table, "accuracy {acc}");
    let mut csv = String::from("distance,count\n");
    for (d, c) in ord.by_distance.iter().enumerate() {
        let _ = writeln!(table, "off by {d}: {c}");
        let _ = writeln!(csv, "{d},{c}");
    }
    (table, csv)
}

pub fn cmd_graders(task: Task, log: &Path) -> Result<HourlyCurve> {
    let log = GraderLog::load(log, task)?;
    Ok(hourly_accuracy(&log)?)
}
