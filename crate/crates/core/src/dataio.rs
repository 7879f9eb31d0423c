//! Dataset files, split conventions and the synthetic multi-sinusoid.
//!
//! A dataset is a JSON-lines file with one series per line
//! (`{"item_id": .., "start": .., "target": [..]}`) plus a key/value
//! metadata sidecar carrying `freq` and `prediction_length`. The final
//! `prediction_length` values of every series are its evaluation targets.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(default)]
    pub item_id: String,
    pub start: String,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub freq: String,
    pub prediction_length: usize,
    /// Optional seasonality hint for the baseline.
    pub season: Option<usize>,
}

impl Metadata {
    pub fn parse(text: &str) -> Result<Self> {
        let mut freq = None;
        let mut horizon = None;
        let mut season = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = split_key_value(line).ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected 'key = value' or 'key: value', got '{line}'"),
            })?;
            let parse_count = |v: &str| {
                v.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| Error::Parse {
                    line: i + 1,
                    message: format!("{key} must be a positive integer, got '{v}'"),
                })
            };
            match key {
                "freq" => freq = Some(value.to_string()),
                "prediction_length" => horizon = Some(parse_count(value)?),
                "season" => season = Some(parse_count(value)?),
                other => log::warn!("ignoring unknown metadata key '{other}'"),
            }
        }
        Ok(Self {
            freq: freq.ok_or_else(|| Error::Data("metadata lacks 'freq'".into()))?,
            prediction_length: horizon.ok_or_else(|| Error::Data("metadata lacks 'prediction_length'".into()))?,
            season,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("freq = {}\nprediction_length = {}\n", self.freq, self.prediction_length);
        if let Some(p) = self.season {
            let _ = writeln!(s, "season = {p}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Baseline season: the explicit hint, else 24 for hourly and 7 for
    /// daily data, else 1.
    pub fn default_season(&self) -> usize {
        self.season.unwrap_or(match self.freq.trim().to_ascii_uppercase().as_str() {
            "H" | "1H" | "HOURLY" => 24,
            "D" | "1D" | "DAILY" => 7,
            _ => 1,
        })
    }
}

pub(crate) fn split_key_value(line: &str) -> Option<(&str, &str)> {
    let idx = line.find(['=', ':'])?;
    let key = line[..idx].trim();
    let value = line[idx + 1..].trim();
    (!key.is_empty()).then_some((key, value))
}

/// The metadata sidecar path for a dataset file: `<data>.meta`.
pub fn metadata_path(data: &Path) -> std::path::PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".meta");
    s.into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub metadata: Metadata,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.metadata.prediction_length
    }

    /// Everything before the evaluation targets.
    pub fn observed(&self, i: usize) -> &[f64] {
        let t = &self.records[i].target;
        &t[..t.len().saturating_sub(self.horizon())]
    }

    /// The final `prediction_length` values.
    pub fn actuals(&self, i: usize) -> &[f64] {
        let t = &self.records[i].target;
        &t[t.len().saturating_sub(self.horizon())..]
    }

    pub fn parse_jsonlines(text: &str, metadata: Metadata) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut rec: DatasetRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if rec.target.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty target".into(),
                });
            }
            if rec.item_id.is_empty() {
                rec.item_id = records.len().to_string();
            }
            records.push(rec);
        }
        if records.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        Ok(Self { metadata, records })
    }

    pub fn load_jsonlines(path: &Path, metadata: Metadata) -> Result<Self> {
        Self::parse_jsonlines(&fs::read_to_string(path)?, metadata)
    }

    /// Loads a dataset together with its `<path>.meta` sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let meta = Metadata::load(&metadata_path(path))?;
        Self::load_jsonlines(path, meta)
    }

    pub fn to_jsonlines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Writes the JSON-lines file and its metadata sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonlines())?;
        self.metadata.write(&metadata_path(path))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "item_id,t,value")?;
        for r in &self.records {
            for (t, v) in r.target.iter().enumerate() {
                writeln!(out, "{},{t},{v}", r.item_id)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_train: usize,
    pub horizon: usize,
    pub periods: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 700,
            horizon: 100,
            periods: vec![200.0, 100.0, 20.0, 10.0],
            amplitudes: vec![1.0, 0.5, 0.5, 0.25],
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Period of the largest-amplitude component.
    pub fn dominant_period(&self) -> f64 {
        self.periods
            .iter()
            .zip(&self.amplitudes)
            .fold((0.0, f64::NEG_INFINITY), |best, (&p, &a)| if a.abs() > best.1 { (p, a.abs()) } else { best })
            .0
    }
}

/// `y_t = Σ_j a_j sin(2π t / P_j + φ_j)` for `t = 0 .. n_train + horizon`,
/// with phases uniform on `[0, 2π)` drawn from `seed`.
pub fn synth_multisin(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.n_train == 0 {
        return Err(Error::arg("n_train must be >= 1"));
    }
    if cfg.periods.len() != cfg.amplitudes.len() || cfg.periods.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::arg("periods must be positive and match the amplitudes"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let phases: Vec<f64> = cfg.periods.iter().map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    let target = (0..cfg.n_train + cfg.horizon)
        .map(|t| {
            cfg.periods
                .iter()
                .zip(&cfg.amplitudes)
                .zip(&phases)
                .map(|((&p, &a), &ph)| a * (2.0 * PI * t as f64 / p + ph).sin())
                .sum()
        })
        .collect();
    let season = cfg.dominant_period().round() as usize;
    Ok(Dataset {
        metadata: Metadata {
            freq: "H".into(),
            prediction_length: cfg.horizon.max(1),
            season: (season > 0).then_some(season),
        },
        records: vec![DatasetRecord {
            item_id: "multisin".into(),
            start: "2000-01-01 00:00:00".into(),
            target,
        }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Metadata {
        Metadata {
            freq: "H".into(),
            prediction_length: 2,
            season: None,
        }
    }

    #[test]
    fn parses_a_record() {
        let ds = Dataset::parse_jsonlines(r#"{"start":"2006-01-01 00:00:00","target":[1.0,2.0,3.0]}"#, meta()).unwrap();
        assert_eq!(ds.records[0].target, vec![1.0, 2.0, 3.0]);
        assert_eq!(ds.observed(0), &[1.0]);
        assert_eq!(ds.actuals(0), &[2.0, 3.0]);
    }

    #[test]
    fn bad_value_names_line() {
        let text = "{\"start\":\"a\",\"target\":[1.0]}\n{\"start\":\"a\",\"target\":[1.0,\"x\"]}\n";
        match Dataset::parse_jsonlines(text, meta()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(Dataset::parse_jsonlines("\n", meta()), Err(Error::Data(_))));
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = Dataset {
            metadata: meta(),
            records: vec![DatasetRecord {
                item_id: "a".into(),
                start: "s".into(),
                target: vec![0.1, 1.0 / 3.0, -2.5e-300, 1e300, std::f64::consts::PI],
            }],
        };
        ds.write(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.records[0].target.iter().zip(&ds.records[0].target) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn metadata_text() {
        let m = Metadata::parse("freq: D\nprediction_length = 30\n# comment\n").unwrap();
        assert_eq!(m.prediction_length, 30);
        assert_eq!(m.default_season(), 7);
        assert!(Metadata::parse("freq = H").is_err());
        assert_eq!(Metadata::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn synthetic_defaults() {
        let a = synth_multisin(&SynthConfig::default()).unwrap();
        assert_eq!(a.records[0].target.len(), 800);
        assert_eq!(a.observed(0).len(), 700);
        assert_eq!(a.metadata.default_season(), 200);
        let b = synth_multisin(&SynthConfig::default()).unwrap();
        assert_eq!(a, b);
        for seed in 0..20 {
            let ds = synth_multisin(&SynthConfig {
                seed,
                ..Default::default()
            })
            .unwrap();
            let y = &ds.records[0].target;
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            assert!(mean.abs() < 2.0 / (y.len() as f64).sqrt());
        }
    }

    #[test]
    fn csv_export() {
        let ds = Dataset::parse_jsonlines(r#"{"item_id":"x","start":"s","target":[1.5,2.0]}"#, meta()).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "item_id,t,value\nx,0,1.5\nx,1,2\n");
    }
}
