//! Experiment hyperparameters and their flat `section.key=value` form.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::char_embed::SgdConfig;
use crate::corpus::CorpusPaths;
use crate::error::{Error, Result};
use crate::features::Level;
use crate::struct_embed::LineConfig;
use crate::word_embed::CbowConfig;

/// Which feature levels feed the matcher and whether the projection is
/// learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// All four levels, projected.
    Full,
    /// Character, word and topic levels only.
    AttrsOnly,
    /// Structure level only.
    StructOnly,
    /// All four levels, matched directly on standardized features.
    NoProjection,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::AttrsOnly, Variant::StructOnly, Variant::NoProjection];

    pub fn levels(self) -> &'static [Level] {
        match self {
            Variant::Full | Variant::NoProjection => &Level::ALL,
            Variant::AttrsOnly => &Level::ATTRIBUTES,
            Variant::StructOnly => &[Level::Structure],
        }
    }

    pub fn projects(self) -> bool {
        self != Variant::NoProjection
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::AttrsOnly => "attrs_only",
            Variant::StructOnly => "struct_only",
            Variant::NoProjection => "no_projection",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant '{s}' (expected full, attrs_only, struct_only or no_projection)")))
    }
}

/// Target users eligible as candidates at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidatePool {
    /// Every user of the target network.
    All,
    /// Only the targets of the test pairs.
    TestOnly,
}

impl CandidatePool {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidatePool::All => "all",
            CandidatePool::TestOnly => "test",
        }
    }
}

impl FromStr for CandidatePool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(CandidatePool::All),
            "test" => Ok(CandidatePool::TestOnly),
            other => Err(Error::InvalidConfig(format!("unknown candidate pool '{other}' (expected all or test)"))),
        }
    }
}

/// Projection defaults tuned for two kinds of data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Noisy social-media profiles: k = 25, R = 1e5.
    Social,
    /// Bibliographic coauthor networks: k = 80, R = 1e3.
    Coauthor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: CorpusPaths,
    pub variant: Variant,
    pub d_char: usize,
    pub d_word: usize,
    pub d_topic: usize,
    pub d_struct: usize,
    pub q_values: Vec<usize>,
    /// Words rarer than this across one network's level corpus are dropped.
    pub min_word_count: usize,
    pub stop_words: bool,
    pub autoencoder: SgdConfig,
    pub cbow: CbowConfig,
    pub lambda: f64,
    /// `None` means `1/d_topic`.
    pub alpha: Option<f64>,
    /// `None` means `1/d_topic`.
    pub beta: Option<f64>,
    pub lda_iters: usize,
    pub line: LineConfig,
    pub k_proj: usize,
    pub reg: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub top_k: usize,
    pub repetitions: usize,
    pub pool: CandidatePool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Coauthor)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let (k_proj, reg) = match preset {
            Preset::Social => (25, 1e5),
            Preset::Coauthor => (80, 1e3),
        };
        ExperimentConfig {
            data: CorpusPaths::in_dir(&PathBuf::from(".")),
            variant: Variant::Full,
            d_char: 100,
            d_word: 100,
            d_topic: 100,
            d_struct: 100,
            q_values: vec![2, 3],
            min_word_count: 10,
            stop_words: true,
            autoencoder: SgdConfig::default(),
            cbow: CbowConfig::default(),
            lambda: 0.1,
            alpha: None,
            beta: None,
            lda_iters: 200,
            line: LineConfig::default(),
            k_proj,
            reg,
            n_train: 200,
            n_test: 500,
            top_k: 3,
            repetitions: 10,
            pool: CandidatePool::All,
            seed: 1,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(1.0 / self.d_topic as f64)
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(1.0 / self.d_topic as f64)
    }

    pub fn dim(&self, level: Level) -> usize {
        match level {
            Level::Char => self.d_char,
            Level::Word => self.d_word,
            Level::Topic => self.d_topic,
            Level::Structure => self.d_struct,
            Level::Fused => Level::ALL.iter().map(|&l| self.dim(l)).sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for level in Level::ALL {
            if self.dim(level) == 0 {
                return bad(format!("embed.d_{} must be positive", key_suffix(level)));
            }
        }
        if self.d_topic < 2 {
            return bad("embed.d_t must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("word.lambda={} outside [0, 1]", self.lambda));
        }
        if self.alpha() <= 0.0 || self.beta() <= 0.0 {
            return bad("topic.alpha and topic.beta must be positive".into());
        }
        if self.lda_iters == 0 {
            return bad("topic.iters must be at least 1".into());
        }
        if self.k_proj == 0 {
            return bad("rcca.k_proj must be at least 1".into());
        }
        if !(self.reg >= 0.0) {
            return bad(format!("rcca.reg={} must be nonnegative", self.reg));
        }
        if self.top_k == 0 || self.repetitions == 0 {
            return bad("eval.top_k and eval.repetitions must be at least 1".into());
        }
        if self.n_train == 0 && self.variant.projects() {
            return bad("eval.n_train must be positive when a projection is learned".into());
        }
        if self.n_test == 0 {
            return bad("eval.n_test must be positive".into());
        }
        if self.autoencoder.batch_size == 0 {
            return bad("char.batch_size must be positive".into());
        }
        Ok(())
    }

    /// Sets one `section.key` from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse '{value}'")))
        }
        let v = value.trim();
        match key {
            "data.users_x" => self.data.users_x = v.into(),
            "data.edges_x" => self.data.edges_x = v.into(),
            "data.users_y" => self.data.users_y = v.into(),
            "data.edges_y" => self.data.edges_y = v.into(),
            "data.pairs" => self.data.pairs = v.into(),
            "pipeline.variant" => self.variant = v.parse()?,
            "pipeline.seed" => self.seed = num(key, v)?,
            "embed.d_c" => self.d_char = num(key, v)?,
            "embed.d_w" => self.d_word = num(key, v)?,
            "embed.d_t" => self.d_topic = num(key, v)?,
            "embed.d_s" => self.d_struct = num(key, v)?,
            "embed.dim" => {
                let d = num(key, v)?;
                self.d_char = d;
                self.d_word = d;
                self.d_topic = d;
                self.d_struct = d;
            }
            "text.q_values" => {
                self.q_values = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| num(key, s))
                    .collect::<Result<_>>()?
            }
            "text.min_word_count" => self.min_word_count = num(key, v)?,
            "text.stop_words" => self.stop_words = num(key, v)?,
            "char.batch_size" => self.autoencoder.batch_size = num(key, v)?,
            "char.learning_rate" => self.autoencoder.learning_rate = num(key, v)?,
            "char.epochs" => self.autoencoder.max_epochs = num(key, v)?,
            "char.tolerance" => self.autoencoder.tolerance = num(key, v)?,
            "char.patience" => self.autoencoder.patience = num(key, v)?,
            "word.window" => self.cbow.window = num(key, v)?,
            "word.negative" => self.cbow.negative = num(key, v)?,
            "word.epochs" => self.cbow.epochs = num(key, v)?,
            "word.learning_rate" => self.cbow.learning_rate = num(key, v)?,
            "word.lambda" => self.lambda = num(key, v)?,
            "topic.alpha" => self.alpha = Some(num(key, v)?),
            "topic.beta" => self.beta = Some(num(key, v)?),
            "topic.iters" => self.lda_iters = num(key, v)?,
            "structure.negative" => self.line.negative = num(key, v)?,
            "structure.samples_per_edge" => self.line.samples_per_edge = num(key, v)?,
            "structure.learning_rate" => self.line.learning_rate = num(key, v)?,
            "rcca.preset" => {
                let preset = match v {
                    "social" => Preset::Social,
                    "coauthor" => Preset::Coauthor,
                    other => return Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
                };
                let p = ExperimentConfig::preset(preset);
                self.k_proj = p.k_proj;
                self.reg = p.reg;
            }
            "rcca.k_proj" => self.k_proj = num(key, v)?,
            "rcca.reg" => self.reg = num(key, v)?,
            "eval.n_train" => self.n_train = num(key, v)?,
            "eval.n_test" => self.n_test = num(key, v)?,
            "eval.top_k" => self.top_k = num(key, v)?,
            "eval.repetitions" => self.repetitions = num(key, v)?,
            "eval.pool" => self.pool = v.parse()?,
            other => return Err(Error::InvalidConfig(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines. A `[section]` header prefixes the keys
    /// that follow it; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected key=value, found '{line}'"),
                });
            };
            let key = key.trim();
            let full = if section.is_empty() || key.contains('.') {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            self.set(&full, value).map_err(|e| match e {
                Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}:{}: {msg}", origin.display(), i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Reads a config file over the defaults. Relative data paths are
    /// taken relative to the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.rebase(base);
        Ok(cfg)
    }

    /// Every resolved setting as `section.key=value`, in a fixed order.
    pub fn to_lines(&self) -> Vec<String> {
        let p = |path: &PathBuf| path.display().to_string();
        let mut out = vec![
            ("data.users_x", p(&self.data.users_x)),
            ("data.edges_x", p(&self.data.edges_x)),
            ("data.users_y", p(&self.data.users_y)),
            ("data.edges_y", p(&self.data.edges_y)),
            ("data.pairs", p(&self.data.pairs)),
        ];
        out.extend(self.model_settings());
        out.extend([
            ("eval.n_train", self.n_train.to_string()),
            ("eval.n_test", self.n_test.to_string()),
            ("eval.top_k", self.top_k.to_string()),
            ("eval.repetitions", self.repetitions.to_string()),
            ("eval.pool", self.pool.as_str().to_string()),
        ]);
        out.into_iter().map(|(k, v)| format!("{k}={v}")).collect()
    }

    /// Settings that affect features and models, excluding data paths and
    /// evaluation protocol.
    fn model_settings(&self) -> Vec<(&'static str, String)> {
        let q: Vec<String> = self.q_values.iter().map(|q| q.to_string()).collect();
        vec![
            ("pipeline.variant", self.variant.to_string()),
            ("pipeline.seed", self.seed.to_string()),
            ("embed.d_c", self.d_char.to_string()),
            ("embed.d_w", self.d_word.to_string()),
            ("embed.d_t", self.d_topic.to_string()),
            ("embed.d_s", self.d_struct.to_string()),
            ("text.q_values", q.join(",")),
            ("text.min_word_count", self.min_word_count.to_string()),
            ("text.stop_words", self.stop_words.to_string()),
            ("char.batch_size", self.autoencoder.batch_size.to_string()),
            ("char.learning_rate", self.autoencoder.learning_rate.to_string()),
            ("char.epochs", self.autoencoder.max_epochs.to_string()),
            ("char.tolerance", self.autoencoder.tolerance.to_string()),
            ("char.patience", self.autoencoder.patience.to_string()),
            ("word.window", self.cbow.window.to_string()),
            ("word.negative", self.cbow.negative.to_string()),
            ("word.epochs", self.cbow.epochs.to_string()),
            ("word.learning_rate", self.cbow.learning_rate.to_string()),
            ("word.lambda", self.lambda.to_string()),
            ("topic.alpha", self.alpha().to_string()),
            ("topic.beta", self.beta().to_string()),
            ("topic.iters", self.lda_iters.to_string()),
            ("structure.negative", self.line.negative.to_string()),
            ("structure.samples_per_edge", self.line.samples_per_edge.to_string()),
            ("structure.learning_rate", self.line.learning_rate.to_string()),
            ("rcca.k_proj", self.k_proj.to_string()),
            ("rcca.reg", self.reg.to_string()),
        ]
    }
}

fn key_suffix(level: Level) -> &'static str {
    match level {
        Level::Char => "c",
        Level::Word => "w",
        Level::Topic => "t",
        Level::Structure => "s",
        Level::Fused => "",
    }
}
