//! Per-seed results, their aggregate, and the JSON-lines / text renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Transfer result on one evaluation treebank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub language: String,
    pub path: String,
    /// Word-order distance between the source and this treebank.
    pub distance: f64,
    pub uas: f64,
    pub las: f64,
    pub n_tokens: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub targets: Vec<TargetResult>,
}

impl SeedRun {
    /// Scalar metrics plus `uas@lang` / `las@lang` per target.
    pub fn flat(&self) -> BTreeMap<String, f64> {
        let mut out = self.metrics.clone();
        for t in &self.targets {
            out.insert(format!("uas@{}", t.language), t.uas);
            out.insert(format!("las@{}", t.language), t.las);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std, n }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub runs: Vec<SeedRun>,
    pub wall_clock_secs: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Config {
        command: String,
        config: BTreeMap<String, String>,
    },
    Seed(SeedRun),
    Aggregate {
        metrics: BTreeMap<String, Stat>,
    },
    Timing {
        wall_clock_secs: f64,
    },
}

impl RunReport {
    pub fn aggregate(&self) -> BTreeMap<String, Stat> {
        let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &self.runs {
            for (k, v) in r.flat() {
                cols.entry(k).or_default().push(v);
            }
        }
        cols.into_iter().map(|(k, v)| (k, Stat::of(&v))).collect()
    }

    /// One JSON object per line: config, each seed, the aggregate, timing.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut lines = vec![Line::Config {
            command: self.command.clone(),
            config: self.config.clone(),
        }];
        lines.extend(self.runs.iter().cloned().map(Line::Seed));
        lines.push(Line::Aggregate {
            metrics: self.aggregate(),
        });
        lines.push(Line::Timing {
            wall_clock_secs: self.wall_clock_secs,
        });
        let mut out = String::new();
        for l in &lines {
            out.push_str(&serde_json::to_string(l)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut report = RunReport {
            command: String::new(),
            config: BTreeMap::new(),
            runs: Vec::new(),
            wall_clock_secs: 0.0,
        };
        let mut saw_config = false;
        for (no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str(line).with_context(|| format!("report line {}", no + 1))? {
                Line::Config { command, config } => {
                    report.command = command;
                    report.config = config;
                    saw_config = true;
                }
                Line::Seed(run) => report.runs.push(run),
                Line::Aggregate { .. } => {}
                Line::Timing { wall_clock_secs } => report.wall_clock_secs = wall_clock_secs,
            }
        }
        if !saw_config {
            bail!("report has no config line");
        }
        Ok(report)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        RunReport::from_jsonl(&text)
    }

    /// Seeds as rows, metrics as columns, with a mean ± std row.
    pub fn to_table(&self) -> String {
        let agg = self.aggregate();
        let cols: Vec<&String> = agg.keys().collect();
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "seed");
        for c in &cols {
            let _ = write!(out, " {:>18}", c);
        }
        out.push('\n');
        for r in &self.runs {
            let flat = r.flat();
            let _ = write!(out, "{:<8}", r.seed);
            for c in &cols {
                match flat.get(*c) {
                    Some(v) => {
                        let _ = write!(out, " {:>18.4}", v);
                    }
                    None => {
                        let _ = write!(out, " {:>18}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<8}", "mean");
        for c in &cols {
            let s = agg[*c];
            let _ = write!(out, " {:>18}", format!("{:.4}±{:.4}", s.mean, s.std));
        }
        out.push('\n');
        out
    }

    /// Write `<command>.jsonl` and `<command>.txt` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(format!("{}.jsonl", self.command)), self.to_jsonl()?)?;
        std::fs::write(dir.join(format!("{}.txt", self.command)), self.to_table())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        let run = |seed: u64, uas: f64| SeedRun {
            seed,
            metrics: BTreeMap::from([("order_acc".to_string(), uas / 2.0)]),
            targets: vec![TargetResult {
                language: "xx".into(),
                path: "xx.conllu".into(),
                distance: 0.25,
                uas,
                las: uas - 0.1,
                n_tokens: 100,
            }],
        };
        RunReport {
            command: "train-student".into(),
            config: BTreeMap::from([("seeds".to_string(), "1,2,3".to_string())]),
            runs: vec![run(1, 0.7), run(2, 0.8), run(3, 0.9)],
            wall_clock_secs: 1.5,
        }
    }

    #[test]
    fn aggregate_matches_recomputation() {
        let r = sample();
        let agg = r.aggregate();
        let s = agg["uas@xx"];
        assert!((s.mean - 0.8).abs() < 1e-12);
        // sample std of 0.7, 0.8, 0.9
        assert!((s.std - 0.1).abs() < 1e-12);
        assert_eq!(s.n, 3);
        assert!((agg["order_acc"].mean - 0.4).abs() < 1e-12);
    }

    #[test]
    fn jsonl_round_trip() {
        let r = sample();
        let text = r.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 6);
        assert_eq!(RunReport::from_jsonl(&text).unwrap(), r);
        assert!(r.to_table().contains("mean"));
    }

    #[test]
    fn single_run_has_zero_std() {
        assert_eq!(Stat::of(&[0.5]).std, 0.0);
    }
}
