//! Run configuration: a sectioned `key = value` file (TOML) with dotted-key
//! overrides from the command line. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four coverage views.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    Decay,
    Circle,
    Log,
    Gamma,
}

impl Augmentation {
    pub const ALL: [Augmentation; 4] = [
        Augmentation::Decay,
        Augmentation::Circle,
        Augmentation::Log,
        Augmentation::Gamma,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Augmentation::Decay => "Decay",
            Augmentation::Circle => "Circle",
            Augmentation::Log => "Log",
            Augmentation::Gamma => "Gamma",
        }
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label().to_lowercase())
    }
}

impl FromStr for Augmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "decay" => Ok(Augmentation::Decay),
            "circle" => Ok(Augmentation::Circle),
            "log" => Ok(Augmentation::Log),
            "gamma" => Ok(Augmentation::Gamma),
            other => Err(Error::Config(format!("unknown augmentation {other:?}"))),
        }
    }
}

/// Per-augmentation enable flags (Φ). A disabled view is neither embedded
/// into attention nor added to the regularizer target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phi {
    pub decay: bool,
    pub circle: bool,
    pub log: bool,
    pub gamma: bool,
}

impl Phi {
    pub const ALL_ON: Phi = Phi {
        decay: true,
        circle: true,
        log: true,
        gamma: true,
    };
    pub const ALL_OFF: Phi = Phi {
        decay: false,
        circle: false,
        log: false,
        gamma: false,
    };

    pub fn get(&self, a: Augmentation) -> bool {
        match a {
            Augmentation::Decay => self.decay,
            Augmentation::Circle => self.circle,
            Augmentation::Log => self.log,
            Augmentation::Gamma => self.gamma,
        }
    }

    pub fn set(&mut self, a: Augmentation, on: bool) {
        match a {
            Augmentation::Decay => self.decay = on,
            Augmentation::Circle => self.circle = on,
            Augmentation::Log => self.log = on,
            Augmentation::Gamma => self.gamma = on,
        }
    }

    pub fn any(&self) -> bool {
        Augmentation::ALL.iter().any(|&a| self.get(a))
    }
}

/// How the odd components of the Circle view are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircleOdd {
    Cos,
    Sin,
}

/// Where a head's averaged coverage enters its value path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Injection {
    /// Added to the head's value input before the V projection.
    Pre,
    /// Added to the head's slice of the projected values.
    Post,
}

/// Parses a head map such as `"decay,circle,log,gamma,none,none,none,none"`.
pub fn parse_head_map(s: &str) -> Result<Vec<Option<Augmentation>>> {
    s.split(',')
        .map(|tok| match tok.trim().to_ascii_lowercase().as_str() {
            "none" | "" => Ok(None),
            other => other.parse().map(Some),
        })
        .collect()
}

pub fn format_head_map(map: &[Option<Augmentation>]) -> String {
    map.iter()
        .map(|a| a.map_or_else(|| "none".to_string(), |a| a.to_string()))
        .collect::<Vec<_>>()
        .join(",")
}

/// Default map: the four views on the first four heads, plain heads after.
pub fn default_head_map(heads: usize) -> String {
    let mut map: Vec<Option<Augmentation>> = Augmentation::ALL.iter().copied().map(Some).collect();
    map.resize(heads, None);
    map.truncate(heads);
    format_head_map(&map)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// News/user representation width d.
    pub dim: usize,
    /// Attention heads n in the user encoder.
    pub heads: usize,
    /// Fixed user-sequence length N.
    pub seq_len: usize,
    /// Stacked user-encoder blocks L.
    pub layers: usize,
    pub dropout: f64,
    pub word_dim: usize,
    /// Transformer layers in the news encoder.
    pub news_layers: usize,
    /// Attention heads in the news encoder.
    pub news_heads: usize,
    pub head_map: String,
    pub eta: f64,
    pub freq: f64,
    pub beta: f64,
    pub phi_decay: bool,
    pub phi_circle: bool,
    pub phi_log: bool,
    pub phi_gamma: bool,
    pub circle_odd: CircleOdd,
    pub injection: Injection,
    /// Exclude masked items from the coverage sums during training.
    pub zero_masked_coverage: bool,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            heads: 8,
            seq_len: 50,
            layers: 2,
            dropout: 0.2,
            word_dim: 200,
            news_layers: 1,
            news_heads: 8,
            head_map: default_head_map(8),
            eta: 0.9,
            freq: 10_000.0,
            beta: 1.0,
            phi_decay: true,
            phi_circle: true,
            phi_log: true,
            phi_gamma: true,
            circle_odd: CircleOdd::Cos,
            injection: Injection::Pre,
            zero_masked_coverage: true,
            layer_norm_eps: 1e-12,
        }
    }
}

impl ModelConfig {
    pub fn phi(&self) -> Phi {
        Phi {
            decay: self.phi_decay,
            circle: self.phi_circle,
            log: self.phi_log,
            gamma: self.phi_gamma,
        }
    }

    pub fn set_phi(&mut self, phi: Phi) {
        self.phi_decay = phi.decay;
        self.phi_circle = phi.circle;
        self.phi_log = phi.log;
        self.phi_gamma = phi.gamma;
    }

    pub fn head_assignment(&self) -> Result<Vec<Option<Augmentation>>> {
        parse_head_map(&self.head_map)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return bad(format!("model.dim={} must be a positive multiple of model.heads={}", self.dim, self.heads));
        }
        if self.news_heads == 0 || self.dim % self.news_heads != 0 {
            return bad(format!("model.dim={} must be a multiple of model.news_heads={}", self.dim, self.news_heads));
        }
        if self.seq_len < 2 {
            return bad("model.seq_len must be at least 2".into());
        }
        if self.layers == 0 || self.news_layers == 0 {
            return bad("model.layers and model.news_layers must be at least 1".into());
        }
        if self.word_dim == 0 {
            return bad("model.word_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("model.dropout={} outside [0, 1)", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("model.eta={} outside [0, 1]", self.eta));
        }
        if !(self.freq > 0.0) || !(self.beta > 0.0) {
            return bad("model.freq and model.beta must be positive".into());
        }
        let map = self.head_assignment()?;
        if map.len() != self.heads {
            return bad(format!(
                "model.head_map lists {} heads but model.heads={}",
                map.len(),
                self.heads
            ));
        }
        let phi = self.phi();
        for (h, a) in map.iter().enumerate() {
            if let Some(a) = a {
                if !phi.get(*a) {
                    return bad(format!("head {h} is assigned {a} but phi_{a} is false"));
                }
                if map.iter().filter(|b| **b == Some(*a)).count() > 1 {
                    return bad(format!("augmentation {a} is assigned to more than one head"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Mask probability ρ.
    pub mask_prob: f64,
    /// Weight γ of the diversity regularizer.
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mask_prob: 0.2,
            gamma: 0.3,
            lr: 1e-3,
            batch_size: 64,
            epochs: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_prob > 0.0 && self.mask_prob <= 1.0) {
            return Err(Error::Config(format!("train.mask_prob={} outside (0, 1]", self.mask_prob)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("train.gamma={} must be non-negative", self.gamma)));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("train.lr and train.batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Item similarity used by DIV@k.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    /// Cosine between trained news-encoder vectors.
    Cosine,
    /// 1 when two items share a category, else 0.
    Category,
}

/// What the top-k for DIV@k is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ranking {
    /// The 1 + negatives candidate list.
    Candidates,
    /// The whole catalog minus the user's history.
    Catalog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    pub negatives: usize,
    pub popularity_alpha: f64,
    pub ndcg_at: Vec<usize>,
    pub div_at: Vec<usize>,
    pub similarity: Similarity,
    pub ranking: Ranking,
    /// Score the validation item instead of the test item.
    pub use_validation: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            negatives: 100,
            popularity_alpha: 1.0,
            ndcg_at: vec![5, 10],
            div_at: vec![10, 20, 50],
            similarity: Similarity::Cosine,
            ranking: Ranking::Candidates,
            use_validation: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("eval.seeds is empty".into()));
        }
        if self.negatives == 0 {
            return Err(Error::Config("eval.negatives must be positive".into()));
        }
        if self.ndcg_at.contains(&0) || self.div_at.iter().any(|&k| k < 2) {
            return Err(Error::Config("ndcg cutoffs must be ≥ 1 and div cutoffs ≥ 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_news: usize,
    pub num_topics: usize,
    /// Words per topic-specific vocabulary plus the shared pool.
    pub vocab_size: usize,
    /// Probability of staying in the current topic at each click.
    pub stickiness: f64,
    pub min_clicks: usize,
    pub max_clicks: usize,
    pub title_min: usize,
    pub title_max: usize,
    /// Non-clicked items listed next to each click in the impression log.
    pub impression_negatives: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_users: 500,
            num_news: 200,
            num_topics: 8,
            vocab_size: 400,
            stickiness: 0.8,
            min_clicks: 8,
            max_clicks: 20,
            title_min: 5,
            title_max: 10,
            impression_negatives: 2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_topics == 0 || self.num_news < self.num_topics {
            return bad("synth needs at least one news item per topic");
        }
        if self.vocab_size < 2 * self.num_topics {
            return bad("synth.vocab_size too small for the topic count");
        }
        if !(0.0..=1.0).contains(&self.stickiness) {
            return bad("synth.stickiness outside [0, 1]");
        }
        if self.min_clicks < 2 || self.min_clicks > self.max_clicks || self.max_clicks > self.num_news {
            return bad("synth click lengths must satisfy 2 ≤ min ≤ max ≤ num_news");
        }
        if self.title_min == 0 || self.title_min > self.title_max {
            return bad("synth title lengths must satisfy 1 ≤ min ≤ max");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub news: PathBuf,
    pub behaviors: PathBuf,
    pub max_title_len: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            news: PathBuf::from("data/news.tsv"),
            behaviors: PathBuf::from("data/behaviors.tsv"),
            max_title_len: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub head_sweep: Vec<usize>,
    /// Run variants concurrently (each keeps its own seed).
    pub parallel: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            head_sweep: vec![8, 10, 20, 25],
            parallel: false,
        }
    }
}

/// Everything a command needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for corpus generation, initialization and training.
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("runs/default"),
            threads: 1,
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    /// Parses config text, applies `section.key=value` overrides, and
    /// validates the result.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        for ov in overrides {
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {ov:?} is not key=value")))?;
            let path: Vec<&str> = key.trim().split('.').collect();
            let mut cursor = &mut table;
            for part in &path[..path.len() - 1] {
                let entry = cursor
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                cursor = entry
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override {key}: {part} is not a section")))?;
            }
            cursor.insert(path[path.len() - 1].to_string(), parse_override_value(raw.trim()));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        self.synth.validate()?;
        if self.data.max_title_len == 0 {
            return Err(Error::Config("data.max_title_len must be positive".into()));
        }
        Ok(())
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
