//! Stage functions and the repeated train/test experiment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::thread;

use crate::char_embed::{count_vectorize, encode_chars, train_autoencoder};
use crate::config::{CandidatePool, ExperimentConfig, Variant};
use crate::corpus::{
    char_tokenize, load_network, preprocess_text, remove_rare_words, word_tokenize, CorpusPaths, MatchedPairs,
    Network, PreprocessConfig, TokenStream, UserRecord, ENGLISH_STOP_WORDS,
};
use crate::error::{Error, Result};
use crate::eval::{hit_precision, split_pairs, SplitSpec};
use crate::features::{FeatureMatrix, Level};
use crate::fusion::{fuse, standardize};
use crate::matcher::{rank_in_pool, MatchRanking};
use crate::rcca::{fit_rcca, project, CcaModel, Side};
use crate::sampling::derive_seed;
use crate::struct_embed::embed_structure;
use crate::topic_embed::embed_topics;
use crate::word_embed::{embed_words, smooth_with_neighbors, train_cbow, SmoothingConfig};

/// Cut-offs always present in a report, besides the configured `top_k`.
pub const REPORT_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Network,
    pub y: Network,
    pub truth: MatchedPairs,
}

impl Dataset {
    pub fn load(paths: &CorpusPaths) -> Result<Self> {
        let (x, _) = load_network(&paths.users_x, &paths.edges_x)?;
        let (y, _) = load_network(&paths.users_y, &paths.edges_y)?;
        let truth = MatchedPairs::load(&paths.pairs, &x, &y)?;
        log::info!(
            "loaded {} users / {} edges (X), {} users / {} edges (Y), {} pairs",
            x.n_users(),
            x.edges().len(),
            y.n_users(),
            y.edges().len(),
            truth.len()
        );
        Ok(Dataset { x, y, truth })
    }
}

pub type LevelFeatures = BTreeMap<Level, FeatureMatrix>;

/// Token streams of one attribute level for every user of a network.
pub fn level_tokens(net: &Network, level: Level, cfg: &ExperimentConfig) -> Vec<TokenStream> {
    fn text(u: &UserRecord, level: Level) -> &str {
        match level {
            Level::Char => &u.char_attr,
            Level::Word => &u.word_attr,
            _ => &u.topic_attr,
        }
    }
    if level == Level::Char {
        let pre = PreprocessConfig::plain();
        return net
            .users()
            .iter()
            .map(|u| char_tokenize(&preprocess_text(text(u, level), &pre), &cfg.q_values))
            .collect();
    }
    let pre = if cfg.stop_words {
        PreprocessConfig::with_stop_words(ENGLISH_STOP_WORDS.iter().copied())
    } else {
        PreprocessConfig::plain()
    };
    let mut docs: Vec<TokenStream> = net
        .users()
        .iter()
        .map(|u| word_tokenize(&preprocess_text(text(u, level), &pre)))
        .collect();
    let removed = remove_rare_words(&mut docs, cfg.min_word_count);
    log::debug!("{} {level}: removed {removed} rare word types", net.name());
    docs
}

/// Embeds one level of one network. `label` separates the seed streams of
/// the two networks.
pub fn embed_level(net: &Network, level: Level, cfg: &ExperimentConfig, label: &str) -> Result<FeatureMatrix> {
    let seed = derive_seed(cfg.seed, &format!("{label}.{level}"));
    let fm = match level {
        Level::Char => {
            let counts = count_vectorize(&level_tokens(net, level, cfg));
            let (model, trace) = train_autoencoder(&counts, cfg.d_char, &cfg.autoencoder, seed)?;
            log::debug!(
                "{label} char autoencoder: {} tokens, loss {:.4e} -> {:.4e} in {} epochs",
                counts.n_tokens(),
                trace.initial_loss(),
                trace.final_loss(),
                trace.losses.len() - 1
            );
            encode_chars(&model, &counts)?
        }
        Level::Word => {
            let docs = level_tokens(net, level, cfg);
            let wv = train_cbow(&docs, cfg.d_word, &cfg.cbow, seed)?;
            let raw = embed_words(&docs, &wv);
            smooth_with_neighbors(&raw, net, &SmoothingConfig::new(cfg.lambda)?)?
        }
        Level::Topic => {
            let docs = level_tokens(net, level, cfg);
            embed_topics(&docs, cfg.d_topic, cfg.alpha(), cfg.beta(), cfg.lda_iters, seed)?
        }
        Level::Structure => embed_structure(net, cfg.d_struct, &cfg.line, seed)?,
        Level::Fused => return Err(Error::InvalidConfig("the fused level is not embedded directly".into())),
    };
    if !fm.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    Ok(fm)
}

/// Embeds the requested levels of both networks, each (network, level)
/// job on its own thread.
pub fn embed_pair(data: &Dataset, cfg: &ExperimentConfig, levels: &[Level]) -> Result<(LevelFeatures, LevelFeatures)> {
    let jobs: Vec<(usize, &Network, &str, Level)> = levels
        .iter()
        .flat_map(|&l| [(0, &data.x, "x", l), (1, &data.y, "y", l)])
        .collect();
    let results: Vec<(usize, Level, Result<FeatureMatrix>)> = thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(side, net, label, level)| s.spawn(move || (side, level, embed_level(net, level, cfg, label))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("embedding thread panicked")).collect()
    });
    let mut out = (LevelFeatures::new(), LevelFeatures::new());
    for (side, level, fm) in results {
        let target = if side == 0 { &mut out.0 } else { &mut out.1 };
        target.insert(level, fm?);
    }
    Ok(out)
}

/// Stacks the chosen levels and standardizes every feature over all users
/// of the network.
pub fn fuse_standardized(features: &LevelFeatures, levels: &[Level]) -> Result<FeatureMatrix> {
    let mut chosen = LevelFeatures::new();
    for &level in levels {
        let fm = features
            .get(&level)
            .ok_or_else(|| Error::InvalidConfig(format!("level {level} was not embedded")))?;
        chosen.insert(level, fm.clone());
    }
    let (std, _) = standardize(&fuse(&chosen)?, None)?;
    Ok(std)
}

/// Fits the projection on the training pairs. The centering means are taken
/// over all users, matching the standardization.
pub fn train_model(fx: &FeatureMatrix, fy: &FeatureMatrix, train: &MatchedPairs, cfg: &ExperimentConfig) -> Result<CcaModel> {
    let (xi, yi): (Vec<usize>, Vec<usize>) = train.pairs().iter().copied().unzip();
    let limit = fx.dim().min(fy.dim());
    let k = if cfg.k_proj > limit {
        log::warn!("rcca.k_proj={} exceeds the feature dimension; using {limit}", cfg.k_proj);
        limit
    } else {
        cfg.k_proj
    };
    let mut model = fit_rcca(&fx.select_columns(&xi), &fy.select_columns(&yi), k, cfg.reg, cfg.reg)?;
    model.means_x = fx.data().column_mean();
    model.means_y = fy.data().column_mean();
    Ok(model)
}

/// Both networks in the matching space: projected when a model is given,
/// the fused features themselves otherwise.
pub fn common_space(model: Option<&CcaModel>, fx: &FeatureMatrix, fy: &FeatureMatrix) -> Result<(FeatureMatrix, FeatureMatrix)> {
    match model {
        Some(m) => Ok((project(m, fx, Side::X)?, project(m, fy, Side::Y)?)),
        None => Ok((fx.clone(), fy.clone())),
    }
}

/// Ranks candidates for every test source.
pub fn rank_queries(
    zx: &FeatureMatrix,
    zy: &FeatureMatrix,
    test: &MatchedPairs,
    pool: CandidatePool,
    top_k: usize,
) -> Result<Vec<MatchRanking>> {
    let targets: Vec<usize> = match pool {
        CandidatePool::All => (0..zy.n_users()).collect(),
        CandidatePool::TestOnly => {
            let mut t: Vec<usize> = test.pairs().iter().map(|p| p.1).collect();
            t.sort_unstable();
            t
        }
    };
    test.pairs()
        .iter()
        .map(|&(q, _)| rank_in_pool(zx, zy, q, &targets, top_k))
        .collect()
}

/// The cut-offs a report carries: 1, 3, 5 and the configured `top_k`.
pub fn report_ks(top_k: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = REPORT_KS.to_vec();
    ks.push(top_k);
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Hit-Precision at each of `ks`.
pub fn evaluate(rankings: &[MatchRanking], test: &MatchedPairs, ks: &[usize]) -> Result<Vec<f64>> {
    ks.iter()
        .map(|&k| hit_precision(rankings, test, k).map(|r| r.hit_precision))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionRecord {
    pub repetition: usize,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Aligned with `ExperimentReport::ks`.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub variant: Variant,
    pub top_k: usize,
    pub ks: Vec<usize>,
    pub records: Vec<RepetitionRecord>,
    /// Resolved configuration as `key=value` lines.
    pub config: Vec<String>,
}

fn fmt_score(v: f64) -> String {
    format!("{v:.6}")
}

impl ExperimentReport {
    fn column(&self, k: usize) -> Option<Vec<f64>> {
        let c = self.ks.iter().position(|&x| x == k)?;
        Some(self.records.iter().map(|r| r.scores[c]).collect())
    }

    /// Mean Hit-Precision@k over repetitions.
    pub fn mean(&self, k: usize) -> Option<f64> {
        let v = self.column(k)?;
        Some(v.iter().sum::<f64>() / v.len().max(1) as f64)
    }

    /// Sample standard deviation over repetitions (0 for a single run).
    pub fn std(&self, k: usize) -> Option<f64> {
        let v = self.column(k)?;
        if v.len() < 2 {
            return Some(0.0);
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
    }

    /// Mean Hit-Precision at the configured `top_k`.
    pub fn headline(&self) -> f64 {
        self.mean(self.top_k).unwrap_or(0.0)
    }

    /// Per-repetition scores at `k`.
    pub fn scores_at(&self, k: usize) -> Option<Vec<f64>> {
        self.column(k)
    }

    /// Config lines prefixed by `#`, then one tab-separated record per
    /// repetition, then mean and std rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for line in &self.config {
            let _ = writeln!(out, "# {line}");
        }
        let hp: Vec<String> = self.ks.iter().map(|k| format!("hp@{k}")).collect();
        let _ = writeln!(out, "variant\trepetition\tseed\tn_train\tn_test\t{}", hp.join("\t"));
        for r in &self.records {
            let s: Vec<String> = r.scores.iter().map(|&v| fmt_score(v)).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                self.variant,
                r.repetition,
                r.split_seed,
                r.n_train,
                r.n_test,
                s.join("\t")
            );
        }
        for (name, f) in [("mean", Self::mean as fn(&Self, usize) -> Option<f64>), ("std", Self::std)] {
            let s: Vec<String> = self.ks.iter().map(|&k| fmt_score(f(self, k).unwrap_or(0.0))).collect();
            let _ = writeln!(out, "{}\t{name}\t\t\t\t{}", self.variant, s.join("\t"));
        }
        out
    }

    pub fn to_table(&self) -> String {
        format_table(std::slice::from_ref(self))
    }
}

/// Plain-text table with one row per report: `mean ± std` at each cut-off.
pub fn format_table(reports: &[ExperimentReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let mut out = format!("{:<15}", "variant");
    for k in &first.ks {
        let _ = write!(out, "{:>20}", format!("hp@{k}"));
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<15}", r.variant.as_str());
        for &k in &first.ks {
            let cell = match (r.mean(k), r.std(k)) {
                (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
                _ => "-".into(),
            };
            let _ = write!(out, "{cell:>20}");
        }
        out.push('\n');
    }
    out
}

/// Fused, standardized matrices of both networks for one variant.
pub fn variant_features(fx: &LevelFeatures, fy: &LevelFeatures, variant: Variant) -> Result<(FeatureMatrix, FeatureMatrix)> {
    Ok((fuse_standardized(fx, variant.levels())?, fuse_standardized(fy, variant.levels())?))
}

/// Train/test pairs of one repetition and the seed that drew them.
pub fn repetition_split(data: &Dataset, cfg: &ExperimentConfig, repetition: usize) -> Result<(u64, MatchedPairs, MatchedPairs)> {
    let n_train = if cfg.variant.projects() { cfg.n_train } else { 0 };
    let n_test = test_size(data, cfg, n_train)?;
    let split_seed = derive_seed(cfg.seed, &format!("split.{repetition}"));
    let (train, test) = split_pairs(&data.truth, &SplitSpec { n_train, n_test, seed: split_seed })?;
    Ok((split_seed, train, test))
}

/// Number of candidates each ranking must keep to score every cut-off.
pub fn ranking_depth(top_k: usize) -> usize {
    *report_ks(top_k).last().expect("non-empty")
}

/// One repetition: split, fit, project, rank, score.
pub fn run_repetition(
    data: &Dataset,
    fx: &FeatureMatrix,
    fy: &FeatureMatrix,
    cfg: &ExperimentConfig,
    repetition: usize,
) -> Result<RepetitionRecord> {
    let (split_seed, train, test) = repetition_split(data, cfg, repetition)?;
    let model = if cfg.variant.projects() {
        Some(train_model(fx, fy, &train, cfg)?)
    } else {
        None
    };
    let (zx, zy) = common_space(model.as_ref(), fx, fy)?;
    let rankings = rank_queries(&zx, &zy, &test, cfg.pool, ranking_depth(cfg.top_k))?;
    Ok(RepetitionRecord {
        repetition,
        split_seed,
        n_train: train.len(),
        n_test: test.len(),
        scores: evaluate(&rankings, &test, &report_ks(cfg.top_k))?,
    })
}

fn test_size(data: &Dataset, cfg: &ExperimentConfig, n_train: usize) -> Result<usize> {
    let available = data.truth.len();
    if n_train >= available {
        return Err(Error::InsufficientPairs {
            requested: n_train + 1,
            available,
        });
    }
    if n_train + cfg.n_test > available {
        log::warn!("eval.n_test={} capped at {}", cfg.n_test, available - n_train);
    }
    Ok(cfg.n_test.min(available - n_train))
}

/// Runs every repetition on prepared features, concurrently.
pub fn run_on_features(data: &Dataset, fx: &FeatureMatrix, fy: &FeatureMatrix, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let records: Vec<Result<RepetitionRecord>> = thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.repetitions)
            .map(|r| s.spawn(move || run_repetition(data, fx, fy, cfg, r)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("repetition thread panicked")).collect()
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        variant: cfg.variant,
        top_k: cfg.top_k,
        ks: report_ks(cfg.top_k),
        records,
        config: cfg.to_lines(),
    })
}

/// Embeds once and evaluates each variant on the shared level features.
pub fn run_variants(data: &Dataset, cfg: &ExperimentConfig, variants: &[Variant]) -> Result<Vec<ExperimentReport>> {
    cfg.validate()?;
    let mut levels: Vec<Level> = variants.iter().flat_map(|v| v.levels().iter().copied()).collect();
    levels.sort();
    levels.dedup();
    let (lx, ly) = embed_pair(data, cfg, &levels)?;
    variants
        .iter()
        .map(|&variant| {
            let vcfg = ExperimentConfig { variant, ..cfg.clone() };
            let (fx, fy) = variant_features(&lx, &ly, variant)?;
            let report = run_on_features(data, &fx, &fy, &vcfg)?;
            log::info!("{variant}: hp@{} = {:.4}", cfg.top_k, report.headline());
            Ok(report)
        })
        .collect()
}

/// Loads the data named in `cfg` and evaluates its variant.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = Dataset::load(&cfg.data)?;
    run_on(&data, cfg)
}

pub fn run_on(data: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut reports = run_variants(data, cfg, &[cfg.variant])?;
    Ok(reports.remove(0))
}
