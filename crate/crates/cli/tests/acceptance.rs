//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use grading_cli::commands::{
    cmd_graders, cmd_preprocess, cmd_report, cmd_search, cmd_synth, cmd_train, failures_path, split_features,
    validate_network, HISTORY_FILE, MODEL_FILE, SEARCH_LOG_FILE, SEARCH_MODEL_FILE, VALIDATION_FILE,
};
use grading_cli::PipelineConfig;
use grading_core::evaluation::{metrics, ordinal_errors, BinaryConfusion, ConfusionMatrix, MulticlassConfusion, Ratio};
use grading_core::evaluation::revenue_gain;
use grading_core::features::{extract_spectral_pattern, read_feature_file};
use grading_core::imaging::{ForegroundMask, RgbImage};
use grading_core::neuralnet::{
    gradient, init_network, load_model, train, ActivationKind, Network, NetworkStructure, Sample, StopReason,
    TrainingParams,
};
use grading_core::{Label, Task, TomatoStage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and budgets.
const FRACTION_TOL: f64 = 1e-12;
const GRADIENT_REL_TOL: f64 = 1e-4;
const GRADIENT_STEP: f64 = 1e-6;
const GRADIENT_FLOOR: f64 = 1e-7;
const HISTOGRAM_SUM_TOL: f64 = 1e-9;
const GRADER_AVERAGE_TOL: f64 = 1e-9;
const TOMATO_MIN_ACCURACY: f64 = 0.95;
const EGG_MIN_ACCURACY: f64 = 0.90;
const SEARCH_MIN_ACCURACY: f64 = 0.90;
const SEARCH_SEEDS: u64 = 10;
const SEARCH_MIN_PASSING_SEEDS: usize = 8;
const FIXTURE_BUDGET: Duration = Duration::from_secs(1);
const GRADIENT_BUDGET: Duration = Duration::from_secs(30);
const TOMATO_BUDGET: Duration = Duration::from_secs(600);
const EGG_BUDGET: Duration = Duration::from_secs(300);
const SEARCH_BUDGET: Duration = Duration::from_secs(900);

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_budget(started: Instant, budget: Duration) -> Result<Duration, String> {
    let took = started.elapsed();
    ensure(took < budget, format!("took {took:.1?}, budget {budget:?}"))?;
    Ok(took)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    format!("{e:#}")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- 1

fn write_egg_fixture(dir: &Path, tp: usize, fp: usize, fn_: usize, tn: usize) -> (PathBuf, PathBuf) {
    let mut truth = String::from("id,label\n");
    let mut preds = String::from("id,label\n");
    let groups = [
        (tp, "Accept", "Accept"),
        (fp, "Reject", "Accept"),
        (fn_, "Accept", "Reject"),
        (tn, "Reject", "Reject"),
    ];
    let mut n = 0;
    for (count, t, p) in groups {
        for _ in 0..count {
            truth.push_str(&format!("egg{n:03},{t}\n"));
            preds.push_str(&format!("egg{n:03},{p}\n"));
            n += 1;
        }
    }
    let (tp_path, pp_path) = (dir.join("truth.csv"), dir.join("predictions.csv"));
    std::fs::write(&tp_path, truth).unwrap();
    std::fs::write(&pp_path, preds).unwrap();
    (pp_path, tp_path)
}

fn criterion_1(work: &Path) -> Outcome {
    let started = Instant::now();
    let (preds, truth) = write_egg_fixture(work, 44, 4, 12, 52);
    let report = cmd_report(Task::Egg, &preds, &truth).map_err(err)?;
    let ConfusionMatrix::Binary(cm) = report.confusion else {
        return Err("expected a binary confusion matrix".into());
    };
    ensure(cm == BinaryConfusion::new(44, 4, 12, 52), format!("confusion {cm:?}"))?;
    let m = metrics(&cm);
    let expected: [(&str, Option<Ratio>, f64, &str); 7] = [
        ("accuracy", m.accuracy, 96.0 / 112.0, "86%"),
        ("false_positive_rate", m.false_positive_rate, 4.0 / 56.0, "7%"),
        ("false_negative_rate", m.false_negative_rate, 12.0 / 56.0, "21%"),
        ("sensitivity", m.sensitivity, 44.0 / 56.0, "79%"),
        ("specificity", m.specificity, 52.0 / 56.0, "93%"),
        ("positive_predictive_value", m.positive_predictive_value, 44.0 / 48.0, "92%"),
        ("negative_predictive_value", m.negative_predictive_value, 52.0 / 64.0, "81%"),
    ];
    let mut shown = Vec::new();
    for (name, ratio, fraction, percent) in expected {
        let r = ratio.ok_or(format!("{name} undefined"))?;
        ensure(close(r.value(), fraction, FRACTION_TOL), format!("{name} = {}", r.value()))?;
        ensure(r.percent(0) == percent, format!("{name} shown as {}", r.percent(0)))?;
        let row = report.table.lines().find(|l| l.starts_with(name)).ok_or(format!("no {name} row"))?;
        ensure(row.split_whitespace().last() == Some(percent), format!("table row `{row}`"))?;
        shown.push(format!("{name}={percent}"));
    }
    ensure(close(m.accuracy.unwrap().value() * 100.0, 85.714_285_714_285_7, 1e-9), "accuracy 85.7%")?;
    let took = within_budget(started, FIXTURE_BUDGET)?;
    Ok(format!("{} ({took:.2?})", shown.join(" ")))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut cm = MulticlassConfusion::zeros(6);
    for t in 0..6 {
        cm.add(t, t, 194);
        // Six errors per stage, all one stage away.
        if t == 0 {
            cm.add(t, 1, 6);
        } else if t == 5 {
            cm.add(t, 4, 6);
        } else {
            cm.add(t, t - 1, 3);
            cm.add(t, t + 1, 3);
        }
    }
    ensure(cm.total() == 1200, "total")?;
    let ord = ordinal_errors(&cm);
    ensure(ord.by_distance[0] == 1164 && ord.by_distance[1] == 36, format!("{:?}", ord.by_distance))?;
    let acc = ord.accuracy().ok_or("undefined accuracy")?;
    ensure(acc.percent(2) == "97.00%", format!("accuracy {}", acc.percent(2)))?;
    ensure(close(acc.value(), 0.97, FRACTION_TOL), "accuracy fraction")?;
    ensure(ord.max_distance() == Some(1), format!("max distance {:?}", ord.max_distance()))?;
    let took = within_budget(started, FIXTURE_BUDGET)?;
    Ok(format!("accuracy {} max distance 1 ({took:.2?})", acc.percent(2)))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let gain = revenue_gain(10_000, 0.13, 4.0).map_err(err)?;
    ensure(gain.extra_items == 1300, format!("items {}", gain.extra_items))?;
    ensure(gain.extra_revenue == 5200.0, format!("revenue {}", gain.extra_revenue))?;
    Ok("1300 items, 5200 revenue".into())
}

// ---------------------------------------------------------------- 4

fn sample_error(net: &Network, input: &[f64], target: &[f64]) -> f64 {
    let out = net.forward(input).unwrap();
    out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / 2.0
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut networks = 0;
    let mut weights = 0;
    let mut worst = 0.0f64;
    for round in 0..4 {
        for activation in ActivationKind::ALL {
            for jump in [false, true] {
                let structure = NetworkStructure {
                    input_size: rng.gen_range(1..=5),
                    hidden_layers: (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=5)).collect(),
                    output_size: rng.gen_range(1..=3),
                    jump_connections: jump,
                    activation,
                    output_activation: ActivationKind::ALL[round % 3],
                };
                let net = init_network(&structure, rng.gen()).map_err(err)?;
                let input: Vec<f64> = (0..structure.input_size).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let target: Vec<f64> = (0..structure.output_size).map(|_| rng.gen()).collect();
                let (grad, _) = gradient(&net, &input, &target).map_err(err)?;
                for (k, &analytic) in grad.iter().enumerate() {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    *plus.params_mut().iter_mut().nth(k).unwrap() += GRADIENT_STEP;
                    *minus.params_mut().iter_mut().nth(k).unwrap() -= GRADIENT_STEP;
                    let numeric = (sample_error(&plus, &input, &target) - sample_error(&minus, &input, &target))
                        / (2.0 * GRADIENT_STEP);
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
                    worst = worst.max(rel);
                    ensure(
                        rel <= GRADIENT_REL_TOL,
                        format!("{structure:?} weight {k}: analytic {analytic} numeric {numeric}"),
                    )?;
                    weights += 1;
                }
                networks += 1;
            }
        }
    }
    ensure(networks >= 20, "too few networks")?;
    let took = within_budget(started, GRADIENT_BUDGET)?;
    Ok(format!("{networks} networks, {weights} weights, worst relative error {worst:.2e} ({took:.2?})"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        let (w, h) = (rng.gen_range(1..48), rng.gen_range(1..48));
        let pixels: Vec<[u8; 3]> = (0..w * h).map(|_| rng.gen()).collect();
        let mut member: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.5)).collect();
        let forced = rng.gen_range(0..w * h);
        member[forced] = true;
        let img = RgbImage::new(w, h, pixels.clone()).map_err(err)?;
        let mask = ForegroundMask::new(w, h, member.clone()).map_err(err)?;
        let pattern = extract_spectral_pattern(&img, &mask).map_err(err)?;
        for c in 0..3 {
            let sum: f64 = pattern.channel(c).iter().sum();
            ensure(close(sum, 1.0, HISTOGRAM_SUM_TOL), format!("case {case} channel {c} sums to {sum}"))?;
        }

        let mut order: Vec<usize> = (0..w * h).collect();
        order.shuffle(&mut rng);
        let permuted = RgbImage::new(w, h, order.iter().map(|&i| pixels[i]).collect()).map_err(err)?;
        let permuted_mask = ForegroundMask::new(w, h, order.iter().map(|&i| member[i]).collect()).map_err(err)?;
        ensure(
            extract_spectral_pattern(&permuted, &permuted_mask).map_err(err)? == pattern,
            format!("case {case}: permutation changed the pattern"),
        )?;

        let edited: Vec<[u8; 3]> = pixels
            .iter()
            .zip(&member)
            .map(|(&p, &m)| if m { p } else { rng.gen() })
            .collect();
        let edited = RgbImage::new(w, h, edited).map_err(err)?;
        ensure(
            extract_spectral_pattern(&edited, &mask).map_err(err)? == pattern,
            format!("case {case}: background edit changed the pattern"),
        )?;
    }
    Ok("100 fixtures: sums, permutation and background invariance hold".into())
}

// ---------------------------------------------------------------- 6

fn random_samples(rng: &mut ChaCha8Rng, n: usize, prefix: &str) -> Vec<Sample> {
    (0..n)
        .map(|i| Sample {
            id: Some(format!("{prefix}{i}")),
            input: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            target: vec![f64::from(u8::from(rng.gen_bool(0.5)))],
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let train_set = random_samples(&mut rng, 40, "train");
    let test_set = random_samples(&mut rng, 20, "test");
    let structure = NetworkStructure::sigmoid(4, vec![6], 1);
    let net = init_network(&structure, 6).map_err(err)?;
    let mut details = Vec::new();

    // Frozen weights: the first epoch is the best and nothing improves.
    let frozen = TrainingParams {
        learning_rate: 0.0,
        momentum: 0.0,
        max_epochs: 1000,
        patience: 7,
        shuffle_seed: 1,
    };
    // Random labels: the test error bottoms out and then rises.
    let overfit = TrainingParams {
        learning_rate: 0.5,
        momentum: 0.9,
        max_epochs: 5000,
        patience: 25,
        shuffle_seed: 2,
    };
    for (name, params) in [("frozen", frozen), ("overfit", overfit)] {
        let (snapshot, history) = train(&net, &train_set, &test_set, &params).map_err(err)?;
        ensure(history.stopped_reason == StopReason::Patience, format!("{name}: stopped by {:?}", history.stopped_reason))?;
        ensure(
            history.epochs.len() == history.best_epoch + params.patience,
            format!("{name}: stopped at {} with best {}", history.epochs.len(), history.best_epoch),
        )?;
        let minimum = history.epochs.iter().map(|e| e.test_error).fold(f64::INFINITY, f64::min);
        let snapshot_error = snapshot.mean_error(&test_set).map_err(err)?;
        ensure(snapshot_error == minimum, format!("{name}: snapshot error {snapshot_error} vs minimum {minimum}"))?;
        details.push(format!("{name} stopped at {} (best {})", history.epochs.len(), history.best_epoch));
    }
    Ok(details.join(", "))
}

// ---------------------------------------------------------------- 7, 8, 9

struct Artifacts {
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn snapshot(&self) -> BTreeMap<PathBuf, Vec<u8>> {
        self.files
            .iter()
            .map(|p| (p.clone(), std::fs::read(p).unwrap_or_default()))
            .collect()
    }
}

fn config(overrides: &[&str]) -> Result<PipelineConfig, String> {
    let owned: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    PipelineConfig::load(None, &owned).map_err(err)
}

fn tomato_config() -> Result<PipelineConfig, String> {
    config(&[
        "task=tomato",
        "seed=2024",
        "synth.per_class=100",
        "synth.noise=4.0",
        "split.train=60",
        "split.test=15",
        "split.validation=25",
        "network.hidden_layers=[64]",
    ])
}

fn egg_config() -> Result<PipelineConfig, String> {
    config(&[
        "task=egg",
        "seed=2025",
        "synth.per_class=100",
        "synth.noise=4.0",
        "split.train=50",
        "split.test=25",
        "split.validation=25",
        "network.hidden_layers=[32]",
    ])
}

fn search_config(seed: u64) -> Result<PipelineConfig, String> {
    let mut c = egg_config()?;
    c.seeds.search = Some(seed);
    c.search.capacity = 20;
    c.search.max_cycles = 100;
    c.search.max_epochs = 40;
    c.search.bounds.min_layers = 1;
    c.search.bounds.max_layers = 2;
    c.search.bounds.min_width = 4;
    c.search.bounds.max_width = 16;
    c.search.bounds.width_step = 1;
    c.validate().map_err(err)?;
    Ok(c)
}

/// Synthesizes, preprocesses and trains; returns the artifact list and a
/// summary of the validation result.
fn pipeline(
    config: &PipelineConfig,
    dir: &Path,
) -> Result<(Artifacts, grading_cli::commands::TrainSummary), String> {
    let images = dir.join("images");
    let features = dir.join("features.csv");
    let model_dir = dir.join("model");
    let manifest = cmd_synth(config, &images).map_err(err)?;
    let pre = cmd_preprocess(config, &images.join("manifest.csv"), &features).map_err(err)?;
    ensure(pre.records == manifest.len(), format!("{} records for {} images", pre.records, manifest.len()))?;
    ensure(pre.failures.is_empty(), format!("{} extraction failures", pre.failures.len()))?;
    let summary = cmd_train(config, &features, &model_dir).map_err(err)?;
    let mut files: Vec<PathBuf> = manifest.records.iter().map(|r| manifest.resolve(r)).collect();
    files.extend([
        images.join("manifest.csv"),
        features.clone(),
        failures_path(&features),
        model_dir.join(MODEL_FILE),
        model_dir.join(HISTORY_FILE),
        model_dir.join(VALIDATION_FILE),
    ]);
    Ok((Artifacts { files }, summary))
}

fn criterion_7(dir: &Path) -> Result<(String, Artifacts), String> {
    let started = Instant::now();
    let config = tomato_config()?;
    let (artifacts, summary) = pipeline(&config, dir)?;
    let acc = summary.validation.accuracy();
    let ord = summary.validation.ordinal();
    ensure(ord.total() == 150, format!("validation size {}", ord.total()))?;
    ensure(acc >= TOMATO_MIN_ACCURACY, format!("validation accuracy {acc:.4}"))?;
    ensure(ord.max_distance().unwrap_or(0) <= 1, format!("errors by distance {:?}", ord.by_distance))?;
    let took = within_budget(started, TOMATO_BUDGET)?;
    Ok((
        format!(
            "600 images, 0 failures, validation accuracy {acc:.4}, errors by distance {:?}, {} epochs ({took:.1?})",
            &ord.by_distance[1..],
            summary.epochs
        ),
        artifacts,
    ))
}

fn criterion_8(dir: &Path) -> Result<(String, Artifacts), String> {
    let started = Instant::now();
    let config = egg_config()?;
    let (artifacts, summary) = pipeline(&config, dir)?;
    let acc = summary.validation.accuracy();
    ensure(summary.validation.predictions.len() == 50, "held-out split is not 25%")?;
    ensure(acc >= EGG_MIN_ACCURACY, format!("held-out accuracy {acc:.4}"))?;
    let took = within_budget(started, EGG_BUDGET)?;
    Ok((format!("200 images, held-out accuracy {acc:.4}, {} epochs ({took:.1?})", summary.epochs), artifacts))
}

fn search_once(features: &Path, seed: u64, dir: &Path) -> Result<(f64, Artifacts, String), String> {
    let config = search_config(seed)?;
    let out = cmd_search(&config, features, dir).map_err(err)?;
    let last = out.log.last().ok_or("empty log")?;
    ensure(
        last.consensus >= 0.80 || last.cycle == 100,
        format!("seed {seed}: stopped at cycle {} with consensus {}", last.cycle, last.consensus),
    )?;
    ensure(
        out.log.windows(2).all(|w| w[1].best >= w[0].best),
        format!("seed {seed}: best weight decreased"),
    )?;
    let weight = out.best.molecular_weight.ok_or("best molecule unscored")?;
    ensure(close(last.best, weight, 0.0), format!("seed {seed}: log best differs from best molecule"))?;

    // The saved model reproduces the molecule's weight on the validation split.
    let (net, _) = load_model(&out.model_path).map_err(err)?;
    let records = read_feature_file(features, Task::Egg).map_err(err)?;
    let split = split_features(&config, records).map_err(err)?;
    let check = validate_network(&net, &split.validation, Task::Egg).map_err(err)?;
    ensure(check.accuracy() == weight, format!("seed {seed}: saved model scores {}", check.accuracy()))?;

    let summary = format!("seed {seed}: {weight:.2} after {} cycles", out.cycles);
    Ok((
        weight,
        Artifacts {
            files: vec![dir.join(SEARCH_MODEL_FILE), dir.join(SEARCH_LOG_FILE)],
        },
        summary,
    ))
}

fn criterion_9(egg_dir: &Path, dir: &Path) -> Result<(String, Artifacts), String> {
    let started = Instant::now();
    let features = egg_dir.join("features.csv");
    let mut passing = 0;
    let mut first = None;
    let mut notes = Vec::new();
    for seed in 0..SEARCH_SEEDS {
        let (weight, artifacts, note) = search_once(&features, seed, &dir.join(format!("seed{seed}")))?;
        passing += usize::from(weight >= SEARCH_MIN_ACCURACY);
        notes.push(note);
        first.get_or_insert(artifacts);
    }
    ensure(
        passing >= SEARCH_MIN_PASSING_SEEDS,
        format!("{passing} of {SEARCH_SEEDS} seeds reached {SEARCH_MIN_ACCURACY}: {}", notes.join("; ")),
    )?;
    let took = within_budget(started, SEARCH_BUDGET)?;
    Ok((
        format!("{passing}/{SEARCH_SEEDS} seeds >= {SEARCH_MIN_ACCURACY} [{}] ({took:.1?})", notes.join("; ")),
        first.expect("at least one seed"),
    ))
}

// ---------------------------------------------------------------- 10

fn compare(before: &BTreeMap<PathBuf, Vec<u8>>, after: &BTreeMap<PathBuf, Vec<u8>>) -> Result<(), String> {
    for (path, bytes) in before {
        ensure(!bytes.is_empty(), format!("{} missing or empty", path.display()))?;
        ensure(after.get(path) == Some(bytes), format!("{} differs between runs", path.display()))?;
    }
    Ok(())
}

fn criterion_10(work: &Path, runs: &[(&str, Option<Artifacts>)]) -> Outcome {
    let mut compared = 0;
    for (name, artifacts) in runs {
        let artifacts = artifacts.as_ref().ok_or(format!("criterion {name} produced no artifacts"))?;
        let before = artifacts.snapshot();
        match *name {
            "7" => drop(pipeline(&tomato_config()?, &work.join("tomato"))?),
            "8" => drop(pipeline(&egg_config()?, &work.join("egg"))?),
            "9" => drop(search_once(&work.join("egg/features.csv"), 0, &work.join("search/seed0"))?),
            _ => unreachable!(),
        }
        compare(&before, &artifacts.snapshot())?;
        compared += before.len();
    }
    Ok(format!("{compared} files byte-identical across reruns"))
}

// ---------------------------------------------------------------- 11

fn criterion_11(work: &Path) -> Outcome {
    // Mistakes per hour over 5 graders x 100 items; hour 1 is the benchmark.
    let mistakes = [0u32, 20, 30, 40, 45, 50, 54, 55];
    let graders = 5u32;
    let items = 100u32;
    let mut log = String::from("item,hour,grader,label\n");
    for (h, &wrong) in mistakes.iter().enumerate() {
        let hour = h + 1;
        for g in 0..graders {
            // Spread the hour's mistakes over graders as evenly as possible.
            let mine = wrong / graders + u32::from(g < wrong % graders);
            for i in 0..items {
                let truth = TomatoStage::from_index((i % 6) as usize).unwrap();
                let stage = if i < mine {
                    TomatoStage::from_index((truth.index() + 1) % 6).unwrap()
                } else {
                    truth
                };
                log.push_str(&format!("tomato{i:03},{hour},grader{g},{}\n", Label::Tomato(stage)));
            }
        }
    }
    let path = work.join("graders.csv");
    std::fs::write(&path, log).map_err(err)?;
    let curve = cmd_graders(Task::Tomato, &path).map_err(err)?;
    ensure(curve.hours.len() == 8, format!("{} hours", curve.hours.len()))?;
    ensure(curve.hours[0] == (1, 1.0), format!("hour 1: {:?}", curve.hours[0]))?;
    let sum: f64 = curve.hours.iter().map(|(_, a)| a).sum();
    ensure(close(sum, 7.412, GRADER_AVERAGE_TOL), format!("hour sum {sum}"))?;
    ensure(
        close(curve.daily_average, 0.9265, GRADER_AVERAGE_TOL),
        format!("daily average {}", curve.daily_average),
    )?;
    Ok(format!("daily average {:.4}, hour 1 = 1.0", curve.daily_average))
}

// ----------------------------------------------------------------

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn report(results: &mut Vec<bool>, id: u32, name: &str, outcome: &Outcome) {
    match outcome {
        Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
        Err(why) => println!("criterion {id:>2} FAIL  {name}: {why}"),
    }
    results.push(outcome.is_ok());
}

fn split_artifacts(r: Result<(String, Artifacts), String>) -> (Outcome, Option<Artifacts>) {
    match r {
        Ok((detail, a)) => (Ok(detail), Some(a)),
        Err(e) => (Err(e), None),
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    std::panic::set_hook(Box::new(|_| {}));
    let work = tempfile::tempdir().expect("temporary directory");
    let work = work.path();
    let mut results = Vec::new();

    report(&mut results, 1, "metric oracle", &guarded(|| criterion_1(work)));
    report(&mut results, 2, "ordinal oracle", &guarded(criterion_2));
    report(&mut results, 3, "revenue oracle", &guarded(criterion_3));
    report(&mut results, 4, "gradient suite", &guarded(criterion_4));
    report(&mut results, 5, "feature invariants", &guarded(criterion_5));
    report(&mut results, 6, "early stopping", &guarded(criterion_6));

    let (o7, a7) = split_artifacts(guarded(|| criterion_7(&work.join("tomato"))));
    report(&mut results, 7, "synthetic tomato end-to-end", &o7);
    let (o8, a8) = split_artifacts(guarded(|| criterion_8(&work.join("egg"))));
    report(&mut results, 8, "synthetic egg end-to-end", &o8);
    let (o9, a9) = split_artifacts(guarded(|| criterion_9(&work.join("egg"), &work.join("search"))));
    report(&mut results, 9, "desk-scale structure search", &o9);
    let runs = [("7", a7), ("8", a8), ("9", a9)];
    report(&mut results, 10, "determinism", &guarded(|| criterion_10(work, &runs)));
    report(&mut results, 11, "grader-log oracle", &guarded(|| criterion_11(work)));

    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
