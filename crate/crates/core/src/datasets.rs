//! Labeled corpora: manifests, stratified splits, and the synthetic image
//! generator used in place of real produce photographs.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::imaging::RgbImage;
use crate::label::{EggGrade, Label, Task, TomatoStage};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    /// As written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub path: PathBuf,
    pub label: Label,
    pub grader: Option<String>,
    pub hour: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub task: Task,
    /// Directory that relative image paths are resolved against.
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

#[derive(Deserialize)]
struct ManifestRow {
    id: String,
    path: String,
    label: String,
    #[serde(default)]
    grader: Option<String>,
    #[serde(default)]
    hour: Option<u8>,
}

impl Manifest {
    pub fn new(task: Task, root: impl Into<PathBuf>) -> Self {
        Self {
            task,
            root: root.into(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.root.join(&record.path)
        }
    }

    /// Records with the same task and root.
    pub fn with_records(&self, records: Vec<ManifestRecord>) -> Self {
        Self {
            task: self.task,
            root: self.root.clone(),
            records,
        }
    }

    pub fn count_by_label(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.label).or_insert(0) += 1;
        }
        counts
    }

    /// `id,path,label,grader,hour` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,path,label,grader,hour\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.id,
                r.path.display(),
                r.label,
                r.grader.as_deref().unwrap_or(""),
                r.hour.map(|h| h.to_string()).unwrap_or_default()
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Reads a manifest CSV. Relative image paths resolve against the file's
/// directory.
pub fn load_manifest(path: &Path, task: Task) -> Result<Manifest> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(file, task, root, &path.display().to_string())
}

pub fn parse_manifest(reader: impl std::io::Read, task: Task, root: PathBuf, name: &str) -> Result<Manifest> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut manifest = Manifest::new(task, root);
    let mut seen = HashSet::new();
    for row in rdr.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| Error::csv(name, e))?;
        if !seen.insert(row.id.clone()) {
            return Err(Error::DuplicateId(row.id));
        }
        manifest.records.push(ManifestRecord {
            label: task.parse_label(&row.label)?,
            id: row.id,
            path: PathBuf::from(row.path),
            grader: row.grader.filter(|g| !g.is_empty()),
            hour: row.hour,
        });
    }
    Ok(manifest)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    pub validation: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.test + self.validation
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub counts: BTreeMap<Label, SplitCounts>,
    pub seed: u64,
}

impl SplitSpec {
    /// The same counts for every class of `task`.
    pub fn balanced(task: Task, counts: SplitCounts, seed: u64) -> Self {
        Self {
            counts: task.labels().into_iter().map(|l| (l, counts)).collect(),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits {
    pub train: Manifest,
    pub test: Manifest,
    pub validation: Manifest,
}

/// Per-class selection: each class's ids are sorted, shuffled with a
/// generator seeded from `spec.seed` and the class, then carved into
/// train, test and validation in that order. Row order in the manifest
/// does not affect the result.
pub fn stratified_split(manifest: &Manifest, spec: &SplitSpec) -> Result<Splits> {
    let mut by_class: BTreeMap<Label, Vec<&ManifestRecord>> = BTreeMap::new();
    for r in &manifest.records {
        by_class.entry(r.label).or_default().push(r);
    }
    let (mut train, mut test, mut validation) = (Vec::new(), Vec::new(), Vec::new());
    for (label, counts) in &spec.counts {
        let mut members = by_class.remove(label).unwrap_or_default();
        if members.len() < counts.total() {
            return Err(Error::InsufficientClass {
                label: label.to_string(),
                available: members.len(),
                requested: counts.total(),
            });
        }
        members.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[label.class_index() as u64]));
        members.shuffle(&mut rng);
        let mut it = members.into_iter().cloned();
        train.extend(it.by_ref().take(counts.train));
        test.extend(it.by_ref().take(counts.test));
        validation.extend(it.by_ref().take(counts.validation));
    }
    let sorted = |mut v: Vec<ManifestRecord>| {
        v.sort_by(|a, b| a.id.cmp(&b.id));
        manifest.with_records(v)
    };
    Ok(Splits {
        train: sorted(train),
        test: sorted(test),
        validation: sorted(validation),
    })
}

/// Settings for the synthetic corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub task: Task,
    pub per_class: usize,
    /// Standard deviation, in intensity units, of the per-pixel channel
    /// noise on the produce. Per-image color jitter is half of it.
    pub noise: f64,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            task: Task::Tomato,
            per_class: 10,
            noise: 4.0,
            seed: 0,
            width: 80,
            height: 80,
        }
    }
}

const TOMATO_GREEN: [f64; 3] = [70.0, 150.0, 50.0];
const TOMATO_RED: [f64; 3] = [200.0, 35.0, 30.0];
const TOMATO_BACKGROUND: [f64; 3] = [225.0, 225.0, 230.0];
const EGG_SHELL: [f64; 3] = [225.0, 205.0, 170.0];
const EGG_BLEMISH: [f64; 3] = [70.0, 50.0, 35.0];
const EGG_BACKGROUND: [f64; 3] = [45.0, 50.0, 65.0];

/// Base produce color: stages interpolate linearly from green to red.
pub fn base_color(label: Label) -> [f64; 3] {
    match label {
        Label::Tomato(stage) => {
            let t = stage.index() as f64 / (TomatoStage::ALL.len() - 1) as f64;
            std::array::from_fn(|c| TOMATO_GREEN[c] + t * (TOMATO_RED[c] - TOMATO_GREEN[c]))
        }
        Label::Egg(_) => EGG_SHELL,
    }
}

/// Renders one item: a shaded ellipse with per-pixel channel noise on a
/// gently textured background. Rejected eggs get dark speckles.
pub fn render_item(config: &SynthConfig, label: Label, seed: u64) -> RgbImage {
    let (w, h) = (config.width, config.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, config.noise.max(0.0)).expect("finite sigma");
    let jitter = Normal::new(0.0, config.noise.max(0.0) / 2.0).expect("finite sigma");

    let background = match label.task() {
        Task::Tomato => TOMATO_BACKGROUND,
        Task::Egg => EGG_BACKGROUND,
    };
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut img = RgbImage::filled(w, h, [0, 0, 0]).expect("non-empty");
    for y in 0..h {
        for x in 0..w {
            let texture = 4.0 * ((x as f64 / 7.0 + phase).sin() * (y as f64 / 9.0).cos());
            let grain: f64 = rng.gen_range(-1.5..1.5);
            img.put(x, y, background.map(|c| to_u8(c + texture + grain)));
        }
    }

    let (cx, cy) = (
        w as f64 / 2.0 + rng.gen_range(-3.0..3.0),
        h as f64 / 2.0 + rng.gen_range(-3.0..3.0),
    );
    let scale = w.min(h) as f64 / 80.0;
    let (ax, ay) = match label.task() {
        Task::Tomato => (rng.gen_range(22.0..27.0) * scale, rng.gen_range(21.0..26.0) * scale),
        Task::Egg => (rng.gen_range(17.0..20.0) * scale, rng.gen_range(24.0..28.0) * scale),
    };
    let base = base_color(label);
    let tint: [f64; 3] = std::array::from_fn(|c| base[c] + jitter.sample(&mut rng));

    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = ((x as f64 - cx) / ax, (y as f64 - cy) / ay);
            let r2 = dx * dx + dy * dy;
            if r2 > 1.0 {
                continue;
            }
            let shade = 1.0 - 0.12 * r2;
            img.put(x, y, tint.map(|c| to_u8(c * shade + noise.sample(&mut rng))));
        }
    }

    if label == Label::Egg(EggGrade::Reject) {
        let spots = rng.gen_range(4..=9);
        for _ in 0..spots {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let reach = rng.gen_range(0.0..0.75f64).sqrt();
            let (sx, sy) = (cx + reach * ax * angle.cos(), cy + reach * ay * angle.sin());
            let radius: f64 = rng.gen_range(1.5..3.5) * scale;
            let r = radius.ceil() as isize;
            for oy in -r..=r {
                for ox in -r..=r {
                    if ((ox * ox + oy * oy) as f64) > radius * radius {
                        continue;
                    }
                    let (px, py) = (sx.round() as isize + ox, sy.round() as isize + oy);
                    if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                        continue;
                    }
                    let color = EGG_BLEMISH.map(|c| to_u8(c + noise.sample(&mut rng)));
                    img.put(px as usize, py as usize, color);
                }
            }
        }
    }
    img
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Writes `per_class` PNG images per class into `out_dir` together with
/// `manifest.csv`, and returns the manifest.
pub fn synth_generate(config: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    if config.per_class == 0 {
        return Err(Error::InvalidParameter("per-class count must be positive".into()));
    }
    if !(config.noise >= 0.0 && config.noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise must be non-negative, got {}", config.noise)));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let items: Vec<(Label, usize)> = config
        .task
        .labels()
        .into_iter()
        .flat_map(|l| (0..config.per_class).map(move |i| (l, i)))
        .collect();
    let records = items
        .par_iter()
        .map(|&(label, i)| {
            let id = format!("{}-{}-{:04}", config.task, label.name().to_ascii_lowercase(), i);
            let file = PathBuf::from(format!("{id}.png"));
            let seed = derive_seed(config.seed, &[label.class_index() as u64, i as u64]);
            render_item(config, label, seed).save(&out_dir.join(&file))?;
            Ok(ManifestRecord {
                id,
                path: file,
                label,
                grader: None,
                hour: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        task: config.task,
        root: out_dir.to_path_buf(),
        records,
    };
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
