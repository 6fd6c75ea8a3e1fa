//! Normalized RGB spectral patterns and the feature file format.
//!
//! A pattern is three 256-bin intensity histograms (red, then green, then
//! blue, each intensity-ascending) over the foreground pixels, each divided
//! by the foreground pixel count. Background pixels contribute nothing.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::imaging::{ForegroundMask, RgbImage};
use crate::label::{Label, Task};

pub const CHANNEL_BINS: usize = 256;
pub const PATTERN_LEN: usize = 3 * CHANNEL_BINS;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralPattern {
    values: Vec<f64>,
}

impl SpectralPattern {
    /// Wraps raw values, checking length and range.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != PATTERN_LEN {
            return Err(Error::mismatch(PATTERN_LEN, values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "pattern value {v} outside [0, 1]"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Histogram block for channel 0 (red), 1 (green) or 2 (blue).
    pub fn channel(&self, channel: usize) -> &[f64] {
        &self.values[channel * CHANNEL_BINS..(channel + 1) * CHANNEL_BINS]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub fn extract_spectral_pattern(img: &RgbImage, mask: &ForegroundMask) -> Result<SpectralPattern> {
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(Error::mismatch(
            format!("{}x{} mask", img.width(), img.height()),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    let mut counts = [0u64; PATTERN_LEN];
    let mut total = 0u64;
    for (rgb, _) in img
        .pixels()
        .iter()
        .zip(mask.members())
        .filter(|(_, &m)| m)
    {
        for (channel, &v) in rgb.iter().enumerate() {
            counts[channel * CHANNEL_BINS + v as usize] += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    let n = total as f64;
    Ok(SpectralPattern {
        values: counts.iter().map(|&c| c as f64 / n).collect(),
    })
}

/// One row of a feature file.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub label: Label,
    pub pattern: SpectralPattern,
}

fn header() -> Vec<String> {
    let mut cols = vec!["id".to_string(), "label".to_string()];
    for prefix in ["r", "g", "b"] {
        cols.extend((0..CHANNEL_BINS).map(|i| format!("{prefix}{i}")));
    }
    cols
}

/// Serializes feature records as comma-separated text.
///
/// Optional `preamble` lines are emitted first as `#` comments. Values use
/// the shortest decimal form that parses back to the identical `f64`.
pub fn format_feature_file(records: &[FeatureRecord], preamble: &[String]) -> String {
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str(&header().join(","));
    out.push('\n');
    for rec in records {
        out.push_str(&rec.id);
        out.push(',');
        out.push_str(rec.label.name());
        for v in rec.pattern.values() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_feature_file(path: &Path, records: &[FeatureRecord], preamble: &[String]) -> Result<()> {
    write_atomic(path, format_feature_file(records, preamble).as_bytes())
}

pub fn read_feature_file(path: &Path, task: Task) -> Result<Vec<FeatureRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_feature_file(file, task, &path.display().to_string())
}

pub fn parse_feature_file(reader: impl std::io::Read, task: Task, name: &str) -> Result<Vec<FeatureRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::csv(name, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: name.to_string(),
            line,
            message,
        };
        if row.len() != 2 + PATTERN_LEN {
            return Err(parse_err(format!(
                "expected {} fields, found {}",
                2 + PATTERN_LEN,
                row.len()
            )));
        }
        let label = task.parse_label(&row[1])?;
        let values = row
            .iter()
            .skip(2)
            .map(|s| s.trim().parse::<f64>().map_err(|e| parse_err(format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let pattern = SpectralPattern::from_values(values).map_err(|e| parse_err(e.to_string()))?;
        records.push(FeatureRecord {
            id: row[0].to_string(),
            label,
            pattern,
        });
    }
    Ok(records)
}
