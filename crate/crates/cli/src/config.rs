//! Flat `key = value` experiment configuration.
//!
//! Values come from defaults, then a config file, then `--set` flags, each
//! overriding the last. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use reorder::distill::{DistillConfig, DistillVariant};
use reorder::order::{TeacherConfig, TeacherTrainConfig};
use reorder::parser::{ParserConfig, ParserTrainConfig};
use reorder::training::OptimConfig;

pub const OUTPUT_DIR_ENV: &str = "REORDER_OUTPUT_DIR";

/// A bad key, value or file; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TeacherKind {
    Ours,
    Rand,
    Heur,
}

impl TeacherKind {
    fn name(self) -> &'static str {
        match self {
            TeacherKind::Ours => "ours",
            TeacherKind::Rand => "rand",
            TeacherKind::Heur => "heur",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub eval: Vec<PathBuf>,
    pub parser: Option<String>,
    pub teacher: Option<String>,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,

    pub optim: OptimConfig,
    pub model: ParserConfig,
    pub min_freq: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub variant: DistillVariant,
    pub order_mlp: usize,

    pub teacher_kind: TeacherKind,
    pub gold_heads: bool,
    pub teacher_model: TeacherConfig,
    pub teacher_epochs: Option<usize>,
    pub teacher_lr: Option<f64>,
    pub heldout: f64,

    pub k: usize,
    pub normalize: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: None,
            target: None,
            eval: Vec::new(),
            parser: None,
            teacher: None,
            output_dir: PathBuf::from("runs"),
            seeds: vec![1, 2, 3],
            optim: OptimConfig::default(),
            model: ParserConfig::default(),
            min_freq: 1,
            lambda1: 1.0,
            lambda2: 0.001,
            variant: DistillVariant::Kd,
            order_mlp: 100,
            teacher_kind: TeacherKind::Ours,
            gold_heads: false,
            teacher_model: TeacherConfig::default(),
            teacher_epochs: None,
            teacher_lr: None,
            heldout: 0.1,
            k: reorder::typology::DEFAULT_K,
            normalize: true,
        }
    }
}

/// Every accepted key, in snapshot order.
pub const KEYS: &[&str] = &[
    "source",
    "target",
    "eval",
    "parser",
    "teacher",
    "output_dir",
    "seeds",
    "epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "word_dim",
    "pos_dim",
    "lstm_hidden",
    "lstm_layers",
    "edge_mlp",
    "label_mlp",
    "dropout",
    "min_freq",
    "lambda1",
    "lambda2",
    "variant",
    "order_mlp",
    "teacher_variant",
    "teacher_heads",
    "teacher_pos_dim",
    "attn_layers",
    "attn_heads",
    "attn_head_dim",
    "attn_ff",
    "teacher_mlp",
    "teacher_epochs",
    "teacher_lr",
    "heldout",
    "k",
    "normalize",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, UsageError> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value {value:?} for {key}")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn opt_string(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_owned())
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, UsageError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn show_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        let v = value.trim();
        match key {
            "source" => self.source = opt_path(v),
            "target" => self.target = opt_path(v),
            "eval" => self.eval = list::<String>(key, v)?.into_iter().map(PathBuf::from).collect(),
            "parser" => self.parser = opt_string(v),
            "teacher" => self.teacher = opt_string(v),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "seeds" => {
                self.seeds = list(key, v)?;
                if self.seeds.is_empty() {
                    return Err(usage("seeds must not be empty"));
                }
            }
            "epochs" => self.optim.epochs = parse(key, v)?,
            "batch_size" => self.optim.batch_size = parse(key, v)?,
            "lr" => self.optim.lr = parse(key, v)?,
            "beta1" => self.optim.beta1 = parse(key, v)?,
            "beta2" => self.optim.beta2 = parse(key, v)?,
            "eps" => self.optim.eps = parse(key, v)?,
            "weight_decay" => self.optim.weight_decay = parse(key, v)?,
            "word_dim" => self.model.word_dim = parse(key, v)?,
            "pos_dim" => self.model.pos_dim = parse(key, v)?,
            "lstm_hidden" => self.model.lstm_hidden = parse(key, v)?,
            "lstm_layers" => self.model.lstm_layers = parse(key, v)?,
            "edge_mlp" => self.model.edge_mlp = parse(key, v)?,
            "label_mlp" => self.model.label_mlp = parse(key, v)?,
            "dropout" => self.model.dropout = parse(key, v)?,
            "min_freq" => self.min_freq = parse(key, v)?,
            "lambda1" => self.lambda1 = parse(key, v)?,
            "lambda2" => self.lambda2 = parse(key, v)?,
            "variant" => self.variant = v.parse().map_err(usage)?,
            "order_mlp" => self.order_mlp = parse(key, v)?,
            "teacher_variant" => {
                self.teacher_kind = match v {
                    "ours" => TeacherKind::Ours,
                    "rand" => TeacherKind::Rand,
                    "heur" => TeacherKind::Heur,
                    _ => return Err(usage(format!("teacher_variant must be ours, rand or heur, not {v:?}"))),
                }
            }
            "teacher_heads" => {
                self.gold_heads = match v {
                    "gold" => true,
                    "predicted" => false,
                    _ => return Err(usage(format!("teacher_heads must be gold or predicted, not {v:?}"))),
                }
            }
            "teacher_pos_dim" => self.teacher_model.pos_dim = parse(key, v)?,
            "attn_layers" => self.teacher_model.layers = parse(key, v)?,
            "attn_heads" => self.teacher_model.heads = parse(key, v)?,
            "attn_head_dim" => self.teacher_model.head_dim = parse(key, v)?,
            "attn_ff" => self.teacher_model.ff_dim = parse(key, v)?,
            "teacher_mlp" => self.teacher_model.mlp = parse(key, v)?,
            "teacher_epochs" => self.teacher_epochs = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "teacher_lr" => self.teacher_lr = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "heldout" => self.heldout = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "normalize" => self.normalize = parse(key, v)?,
            _ => return Err(usage(format!("unknown config key {key:?}"))),
        }
        self.check()
    }

    fn check(&self) -> Result<(), UsageError> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(usage("lambda1 and lambda2 must be non-negative"));
        }
        if self.optim.batch_size == 0 || self.k == 0 {
            return Err(usage("batch_size and k must be positive"));
        }
        if !(0.0..1.0).contains(&self.model.dropout) || !(0.0..1.0).contains(&self.heldout) {
            return Err(usage("dropout and heldout must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), UsageError> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| usage(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    /// Defaults, then `REORDER_OUTPUT_DIR`, then `file`, then `overrides`.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, UsageError> {
        let mut cfg = ExperimentConfig::default();
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects key=value, got {o:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    /// Current value of every key, rendered as it would be written.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let join = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",");
        let pairs: Vec<(&str, String)> = vec![
            ("source", show_path(&self.source)),
            ("target", show_path(&self.target)),
            ("eval", join(&self.eval)),
            ("parser", self.parser.clone().unwrap_or_default()),
            ("teacher", self.teacher.clone().unwrap_or_default()),
            ("output_dir", self.output_dir.display().to_string()),
            (
                "seeds",
                self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            ),
            ("epochs", self.optim.epochs.to_string()),
            ("batch_size", self.optim.batch_size.to_string()),
            ("lr", self.optim.lr.to_string()),
            ("beta1", self.optim.beta1.to_string()),
            ("beta2", self.optim.beta2.to_string()),
            ("eps", self.optim.eps.to_string()),
            ("weight_decay", self.optim.weight_decay.to_string()),
            ("word_dim", self.model.word_dim.to_string()),
            ("pos_dim", self.model.pos_dim.to_string()),
            ("lstm_hidden", self.model.lstm_hidden.to_string()),
            ("lstm_layers", self.model.lstm_layers.to_string()),
            ("edge_mlp", self.model.edge_mlp.to_string()),
            ("label_mlp", self.model.label_mlp.to_string()),
            ("dropout", self.model.dropout.to_string()),
            ("min_freq", self.min_freq.to_string()),
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("variant", self.variant.to_string()),
            ("order_mlp", self.order_mlp.to_string()),
            ("teacher_variant", self.teacher_kind.name().to_owned()),
            (
                "teacher_heads",
                if self.gold_heads { "gold" } else { "predicted" }.to_owned(),
            ),
            ("teacher_pos_dim", self.teacher_model.pos_dim.to_string()),
            ("attn_layers", self.teacher_model.layers.to_string()),
            ("attn_heads", self.teacher_model.heads.to_string()),
            ("attn_head_dim", self.teacher_model.head_dim.to_string()),
            ("attn_ff", self.teacher_model.ff_dim.to_string()),
            ("teacher_mlp", self.teacher_model.mlp.to_string()),
            ("teacher_epochs", show_opt(&self.teacher_epochs)),
            ("teacher_lr", show_opt(&self.teacher_lr)),
            ("heldout", self.heldout.to_string()),
            ("k", self.k.to_string()),
            ("normalize", self.normalize.to_string()),
        ];
        debug_assert_eq!(pairs.len(), KEYS.len());
        pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
    }

    pub fn parser_train(&self) -> ParserTrainConfig {
        ParserTrainConfig {
            model: self.model.clone(),
            optim: self.optim.clone(),
            lambda1: self.lambda1,
            min_freq: self.min_freq,
        }
    }

    pub fn teacher_train(&self) -> TeacherTrainConfig {
        let mut optim = self.optim.clone();
        if let Some(e) = self.teacher_epochs {
            optim.epochs = e;
        }
        if let Some(lr) = self.teacher_lr {
            optim.lr = lr;
        }
        TeacherTrainConfig {
            model: self.teacher_model.clone(),
            optim,
            heldout: self.heldout,
        }
    }

    pub fn distill(&self) -> DistillConfig {
        DistillConfig {
            parser: self.parser_train(),
            lambda2: self.lambda2,
            variant: self.variant,
            order_mlp: self.order_mlp,
        }
    }

    /// Treebanks to score a parser on: `eval`, else `target`.
    pub fn eval_sets(&self) -> Vec<PathBuf> {
        if self.eval.is_empty() {
            self.target.iter().cloned().collect()
        } else {
            self.eval.clone()
        }
    }
}

/// Substitute `{seed}` in a model path template.
pub fn seeded(template: &str, seed: u64) -> PathBuf {
    PathBuf::from(template.replace("{seed}", &seed.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_settings() {
        let c = ExperimentConfig::default();
        assert_eq!(c.optim.batch_size, 32);
        assert_eq!(c.optim.epochs, 50);
        assert_eq!(c.optim.lr, 3e-5);
        assert_eq!(c.optim.weight_decay, 1e-5);
        assert_eq!((c.optim.beta1, c.optim.beta2), (0.9, 0.9));
        assert_eq!(c.model.pos_dim, 50);
        assert_eq!(c.teacher_model.pos_dim, 50);
        assert_eq!((c.lambda1, c.lambda2), (1.0, 0.001));
        assert_eq!(c.k, 52);
        assert_eq!(c.seeds.len(), 3);
    }

    #[test]
    fn file_then_flag_precedence() {
        let dir = std::env::temp_dir().join(format!("reorder-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("exp.cfg");
        std::fs::write(&path, "# comment\nepochs = 7\nlr = 0.01  # inline\nvariant = wol\n").unwrap();
        let c = ExperimentConfig::load(Some(&path), &["lr=0.5".into()]).unwrap();
        assert_eq!(c.optim.epochs, 7);
        assert_eq!(c.optim.lr, 0.5);
        assert_eq!(c.variant, DistillVariant::Wol);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut c = ExperimentConfig::default();
        assert!(c.set("learning_rate", "1").is_err());
        assert!(c.set("epochs", "many").is_err());
        assert!(c.set("lambda2", "-1").is_err());
        assert!(c.apply_text("epochs 3").is_err());
    }

    #[test]
    fn snapshot_round_trips_through_set() {
        let mut c = ExperimentConfig::default();
        c.set("seeds", "4,5").unwrap();
        c.set("eval", "a.conllu,b.conllu").unwrap();
        c.set("teacher_epochs", "9").unwrap();
        let snap = c.snapshot();
        assert_eq!(snap.len(), KEYS.len());
        let mut d = ExperimentConfig::default();
        for (k, v) in &snap {
            d.set(k, v).unwrap();
        }
        assert_eq!(c, d);
    }
}
