//! Classifier metrics, ordinal error analysis, human-grader drift curves
//! and revenue arithmetic.
//!
//! Egg grading treats Accept as the positive class: a false positive is a
//! reject graded as accepted. Ratios keep their integer numerator and
//! denominator, and a metric whose denominator is zero is `None` rather
//! than a made-up 0 or 1.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::label::{EggGrade, Label, Task};

/// An exact fraction of counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    /// `None` for a zero denominator.
    pub fn new(numerator: u64, denominator: u64) -> Option<Self> {
        (denominator > 0).then_some(Self {
            numerator,
            denominator,
        })
    }

    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// Percentage rounded half-up to `decimals` places, computed in integer
    /// arithmetic so that exact halves never fall the wrong way.
    pub fn percent(self, decimals: u32) -> String {
        let scale = 10u128.pow(decimals);
        let num = self.numerator as u128 * 100 * scale;
        let den = self.denominator as u128;
        let rounded = (2 * num + den) / (2 * den);
        if decimals == 0 {
            format!("{rounded}%")
        } else {
            format!(
                "{}.{:0width$}%",
                rounded / scale,
                rounded % scale,
                width = decimals as usize
            )
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BinaryConfusion {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
}

impl BinaryConfusion {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self {
            true_positive: tp,
            false_positive: fp,
            false_negative: fn_,
            true_negative: tn,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }

    /// The same tallies as a 2x2 grid, class 0 = Accept.
    pub fn to_multiclass(&self) -> MulticlassConfusion {
        MulticlassConfusion {
            classes: 2,
            counts: vec![
                self.true_positive,
                self.false_negative,
                self.false_positive,
                self.true_negative,
            ],
        }
    }
}

/// Square grid: rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MulticlassConfusion {
    classes: usize,
    counts: Vec<u64>,
}

impl MulticlassConfusion {
    pub fn zeros(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::mismatch(format!("{classes}x{classes} grid"), "ragged rows"));
        }
        Ok(Self {
            classes,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn add(&mut self, truth: usize, predicted: usize, n: u64) {
        self.counts[truth * self.classes + predicted] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> Option<Ratio> {
        let diag = (0..self.classes).map(|i| self.get(i, i)).sum();
        Ratio::new(diag, self.total())
    }

    pub fn column_total(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfusionMatrix {
    Binary(BinaryConfusion),
    Multiclass(MulticlassConfusion),
}

/// Tallies predictions against truth: a binary matrix for eggs, a 6x6 grid
/// for tomato stages.
pub fn confusion(preds: &[Label], truth: &[Label], task: Task) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::mismatch(
            format!("{} predictions", truth.len()),
            preds.len(),
        ));
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataSet("no predictions to tally".into()));
    }
    if let Some(bad) = preds.iter().chain(truth).find(|l| l.task() != task) {
        return Err(Error::UnknownLabel {
            task: task.to_string(),
            label: bad.to_string(),
        });
    }
    Ok(match task {
        Task::Egg => {
            let mut cm = BinaryConfusion::default();
            for (p, t) in preds.iter().zip(truth) {
                let accept = |l: &Label| *l == Label::Egg(EggGrade::Accept);
                match (accept(p), accept(t)) {
                    (true, true) => cm.true_positive += 1,
                    (true, false) => cm.false_positive += 1,
                    (false, true) => cm.false_negative += 1,
                    (false, false) => cm.true_negative += 1,
                }
            }
            ConfusionMatrix::Binary(cm)
        }
        Task::Tomato => {
            let mut cm = MulticlassConfusion::zeros(task.output_size());
            for (p, t) in preds.iter().zip(truth) {
                cm.add(t.class_index(), p.class_index(), 1);
            }
            ConfusionMatrix::Multiclass(cm)
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetricsReport {
    pub accuracy: Option<Ratio>,
    pub sensitivity: Option<Ratio>,
    pub specificity: Option<Ratio>,
    pub false_positive_rate: Option<Ratio>,
    pub false_negative_rate: Option<Ratio>,
    pub positive_predictive_value: Option<Ratio>,
    pub negative_predictive_value: Option<Ratio>,
}

impl MetricsReport {
    pub fn rows(&self) -> [(&'static str, Option<Ratio>); 7] {
        [
            ("accuracy", self.accuracy),
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("false_positive_rate", self.false_positive_rate),
            ("false_negative_rate", self.false_negative_rate),
            ("positive_predictive_value", self.positive_predictive_value),
            ("negative_predictive_value", self.negative_predictive_value),
        ]
    }

    /// Aligned human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<27} {:>9} {:>10} {:>9} {:>7}\n",
            "metric", "count", "fraction", "percent", "rounded"
        );
        for (name, r) in self.rows() {
            let _ = match r {
                Some(r) => writeln!(
                    out,
                    "{:<27} {:>9} {:>10.6} {:>9} {:>7}",
                    name,
                    r.to_string(),
                    r.value(),
                    r.percent(2),
                    r.percent(0)
                ),
                None => writeln!(out, "{:<27} {:>9} {:>10} {:>9} {:>7}", name, "-", "undefined", "-", "-"),
            };
        }
        out
    }

    /// `metric,numerator,denominator,fraction`; undefined metrics leave the
    /// last three fields empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,numerator,denominator,fraction\n");
        for (name, r) in self.rows() {
            let _ = match r {
                Some(r) => writeln!(out, "{name},{},{},{}", r.numerator, r.denominator, r.value()),
                None => writeln!(out, "{name},,,"),
            };
        }
        out
    }
}

pub fn metrics(cm: &BinaryConfusion) -> MetricsReport {
    let (tp, fp, fn_, tn) = (
        cm.true_positive,
        cm.false_positive,
        cm.false_negative,
        cm.true_negative,
    );
    MetricsReport {
        accuracy: Ratio::new(tp + tn, cm.total()),
        sensitivity: Ratio::new(tp, tp + fn_),
        specificity: Ratio::new(tn, tn + fp),
        false_positive_rate: Ratio::new(fp, fp + tn),
        false_negative_rate: Ratio::new(fn_, tp + fn_),
        positive_predictive_value: Ratio::new(tp, tp + fp),
        negative_predictive_value: Ratio::new(tn, tn + fn_),
    }
}

/// Counts of `|true - predicted|` class distances.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrdinalReport {
    /// Index `d` holds the number of samples off by `d` stages.
    pub by_distance: Vec<u64>,
}

impl OrdinalReport {
    pub fn total(&self) -> u64 {
        self.by_distance.iter().sum()
    }

    pub fn accuracy(&self) -> Option<Ratio> {
        Ratio::new(self.by_distance.first().copied().unwrap_or(0), self.total())
    }

    /// Largest distance with a non-zero count.
    pub fn max_distance(&self) -> Option<usize> {
        self.by_distance.iter().rposition(|&c| c > 0)
    }
}

pub fn ordinal_errors(cm: &MulticlassConfusion) -> OrdinalReport {
    let mut by_distance = vec![0; cm.classes];
    for t in 0..cm.classes {
        for p in 0..cm.classes {
            by_distance[t.abs_diff(p)] += cm.get(t, p);
        }
    }
    OrdinalReport { by_distance }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraderRecord {
    pub item: String,
    /// Hour of the shift, 1 through 8.
    pub hour: u8,
    pub grader: String,
    pub label: Label,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraderLog {
    pub records: Vec<GraderRecord>,
}

#[derive(Deserialize)]
struct GraderRow {
    item: String,
    hour: u8,
    grader: String,
    label: String,
}

impl GraderLog {
    /// Reads `item,hour,grader,label` rows.
    pub fn load(path: &Path, task: Task) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file, task, &path.display().to_string())
    }

    pub fn parse(reader: impl std::io::Read, task: Task, name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize::<GraderRow>() {
            let row = row.map_err(|e| Error::csv(name, e))?;
            if !(1..=8).contains(&row.hour) {
                return Err(Error::InvalidParameter(format!(
                    "hour {} for item `{}` outside 1..=8",
                    row.hour, row.item
                )));
            }
            records.push(GraderRecord {
                label: task.parse_label(&row.label)?,
                item: row.item,
                hour: row.hour,
                grader: row.grader,
            });
        }
        Ok(Self { records })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,hour,grader,label\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.item, r.hour, r.grader, r.label);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HourlyCurve {
    /// `(hour, mean accuracy across graders)` for each hour with records.
    pub hours: Vec<(u8, f64)>,
    pub daily_average: f64,
}

impl HourlyCurve {
    pub fn to_table(&self) -> String {
        let mut out = String::from("hour  accuracy\n");
        for (h, a) in &self.hours {
            let _ = writeln!(out, "{h:>4}  {:>7.2}%", a * 100.0);
        }
        let _ = writeln!(out, "daily {:>7.2}%", self.daily_average * 100.0);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("hour,accuracy\n");
        for (h, a) in &self.hours {
            let _ = writeln!(out, "{h},{a}");
        }
        let _ = writeln!(out, "daily,{}", self.daily_average);
        out
    }
}

/// Accuracy per hour of the shift against the hour-1 benchmark.
///
/// Each item's hour-1 label is its benchmark. For every hour, each grader's
/// accuracy is the fraction of their records that match the benchmark; the
/// hour's value is the mean over graders active in that hour, and the daily
/// average is the mean over hours.
pub fn hourly_accuracy(log: &GraderLog) -> Result<HourlyCurve> {
    let mut benchmark: HashMap<&str, Label> = HashMap::new();
    for r in log.records.iter().filter(|r| r.hour == 1) {
        match benchmark.insert(&r.item, r.label) {
            Some(prev) if prev != r.label => {
                return Err(Error::ConflictingBenchmark {
                    item: r.item.clone(),
                })
            }
            _ => {}
        }
    }

    // hour -> grader -> (matches, total)
    let mut tallies: BTreeMap<u8, BTreeMap<&str, (u64, u64)>> = BTreeMap::new();
    for r in &log.records {
        let truth = benchmark
            .get(r.item.as_str())
            .ok_or_else(|| Error::MissingBenchmark(r.item.clone()))?;
        let entry = tallies.entry(r.hour).or_default().entry(&r.grader).or_default();
        entry.0 += u64::from(*truth == r.label);
        entry.1 += 1;
    }
    if tallies.is_empty() {
        return Err(Error::EmptyDataSet("grader log has no records".into()));
    }

    let hours: Vec<(u8, f64)> = tallies
        .iter()
        .map(|(&h, graders)| {
            let sum: f64 = graders.values().map(|&(m, n)| m as f64 / n as f64).sum();
            (h, sum / graders.len() as f64)
        })
        .collect();
    let daily_average = hours.iter().map(|(_, a)| a).sum::<f64>() / hours.len() as f64;
    Ok(HourlyCurve {
        hours,
        daily_average,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RevenueGain {
    pub extra_items: u64,
    pub extra_revenue: f64,
}

/// Extra correctly graded items per day, `round(volume * delta)`, and the
/// revenue they bring at `unit_price` each.
pub fn revenue_gain(daily_volume: u64, accuracy_delta: f64, unit_price: f64) -> Result<RevenueGain> {
    if !(accuracy_delta >= 0.0 && unit_price >= 0.0) {
        return Err(Error::InvalidParameter(
            "accuracy delta and unit price must be non-negative".into(),
        ));
    }
    let extra_items = (daily_volume as f64 * accuracy_delta).round() as u64;
    Ok(RevenueGain {
        extra_items,
        extra_revenue: extra_items as f64 * unit_price,
    })
}
