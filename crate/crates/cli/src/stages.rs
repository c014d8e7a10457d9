//! Stage execution over a content-addressed artifact cache.
//!
//! Each stage writes into `<out>/<stage>-<key>/`, where the key hashes the
//! settings and input files the stage depends on plus the keys of its
//! upstream stages. A directory counts as complete once its `.done` marker
//! exists.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use idlink::corpus::MatchedPairs;
use idlink::matcher::{read_rankings, write_rankings};
use idlink::pipeline::{
    common_space, embed_pair, evaluate, fuse_standardized, rank_queries, ranking_depth, report_ks, repetition_split,
    train_model, Dataset, ExperimentReport, LevelFeatures, RepetitionRecord,
};
use idlink::rcca::CcaModel;
use idlink::sampling::derive_seed;
use idlink::{ExperimentConfig, FeatureMatrix, Level};
use sha2::{Digest, Sha256};

use crate::args::Stage;

const DONE: &str = ".done";

/// A stage was asked to run alone but an upstream artifact is missing.
#[derive(Debug)]
pub struct MissingPrerequisite {
    pub requested: Stage,
    pub missing: Stage,
    pub dir: PathBuf,
}

impl fmt::Display for MissingPrerequisite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stage '{}' needs the output of stage '{}' ({} not found); run `idlink {}` first",
            self.requested.name(),
            self.missing.name(),
            self.dir.display(),
            self.missing.name()
        )
    }
}

impl std::error::Error for MissingPrerequisite {}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha_hex(&bytes))
}

fn level_prefixes(level: Level) -> &'static [&'static str] {
    match level {
        Level::Char => &["embed.d_c=", "text.q_values=", "char."],
        Level::Word => &["embed.d_w=", "text.min_word_count=", "text.stop_words=", "word."],
        Level::Topic => &["embed.d_t=", "text.min_word_count=", "text.stop_words=", "topic."],
        Level::Structure => &["embed.d_s=", "structure."],
        Level::Fused => &[],
    }
}

pub struct Runner {
    cfg: ExperimentConfig,
    out: PathBuf,
    data: Dataset,
    settings: Vec<String>,
    network_hashes: Vec<String>,
    pairs_hash: String,
    csv: bool,
    /// When set, only this stage may be computed; the rest must be cached.
    only: Option<Stage>,
}

impl Runner {
    pub fn new(cfg: ExperimentConfig, out: &Path, csv: bool) -> Result<Self> {
        for line in cfg.to_lines() {
            log::info!("config {line}");
        }
        let paths = &cfg.data;
        let network_hashes = [&paths.users_x, &paths.edges_x, &paths.users_y, &paths.edges_y]
            .into_iter()
            .map(|p| file_hash(p))
            .collect::<Result<Vec<_>>>()?;
        let pairs_hash = file_hash(&paths.pairs)?;
        let data = Dataset::load(paths)?;
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Runner {
            settings: cfg.to_lines(),
            cfg,
            out: out.to_path_buf(),
            data,
            network_hashes,
            pairs_hash,
            csv,
            only: None,
        })
    }

    fn setting(&self, key: &str) -> String {
        let prefix = format!("{key}=");
        self.settings
            .iter()
            .find(|l| l.starts_with(&prefix))
            .cloned()
            .unwrap_or_default()
    }

    fn key(parts: &[String]) -> String {
        sha_hex(parts.join("\n").as_bytes())
    }

    fn level_key(&self, level: Level) -> String {
        let mut parts = vec![format!("embed {level}"), self.setting("pipeline.seed")];
        parts.extend(self.network_hashes.iter().cloned());
        let prefixes = level_prefixes(level);
        parts.extend(
            self.settings
                .iter()
                .filter(|l| prefixes.iter().any(|p| l.starts_with(p)))
                .cloned(),
        );
        Self::key(&parts)
    }

    fn fuse_key(&self) -> String {
        let mut parts = vec!["fuse".to_string()];
        parts.extend(self.cfg.variant.levels().iter().map(|&l| self.level_key(l)));
        Self::key(&parts)
    }

    fn train_key(&self) -> String {
        let mut parts = vec!["train".to_string(), self.fuse_key(), self.pairs_hash.clone()];
        for k in ["pipeline.variant", "pipeline.seed", "rcca.k_proj", "rcca.reg", "eval.n_train", "eval.n_test", "eval.repetitions"] {
            parts.push(self.setting(k));
        }
        Self::key(&parts)
    }

    fn match_key(&self) -> String {
        Self::key(&[
            "match".to_string(),
            self.train_key(),
            self.setting("eval.pool"),
            self.setting("eval.top_k"),
        ])
    }

    fn eval_key(&self) -> String {
        let mut parts = vec!["eval".to_string(), self.match_key()];
        parts.extend(self.settings.iter().cloned());
        Self::key(&parts)
    }

    fn dir(&self, label: &str, key: &str) -> PathBuf {
        self.out.join(format!("{label}-{}", &key[..16]))
    }

    /// Returns `None` if the stage directory is complete, or the scratch path
    /// to fill when this stage may be computed.
    fn prepare(&self, stage: Stage, dir: &Path) -> Result<Option<PathBuf>> {
        if dir.join(DONE).exists() {
            log::info!("{}: cached at {}", stage.name(), dir.display());
            return Ok(None);
        }
        if let Some(only) = self.only {
            if only != stage {
                return Err(MissingPrerequisite {
                    requested: only,
                    missing: stage,
                    dir: dir.to_path_buf(),
                }
                .into());
            }
        }
        Ok(Some(dir.with_extension(format!("tmp{}", std::process::id()))))
    }

    fn fresh(scratch: &Path) -> Result<()> {
        if scratch.exists() {
            fs::remove_dir_all(scratch)?;
        }
        fs::create_dir_all(scratch)?;
        Ok(())
    }

    fn commit(&self, scratch: &Path, dir: &Path) -> Result<()> {
        fs::write(scratch.join(DONE), b"")?;
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(scratch, dir).with_context(|| format!("finalizing {}", dir.display()))?;
        Ok(())
    }

    fn write_features(&self, fm: &FeatureMatrix, dir: &Path, stem: &str) -> Result<()> {
        fm.write_binary(&dir.join(format!("{stem}.bin")))?;
        if self.csv {
            fm.write_csv(&dir.join(format!("{stem}.csv")))?;
        }
        Ok(())
    }

    /// Per-level directories holding `x.bin` and `y.bin`.
    fn embed(&self) -> Result<BTreeMap<Level, PathBuf>> {
        let mut dirs = BTreeMap::new();
        let mut missing = Vec::new();
        for &level in self.cfg.variant.levels() {
            let dir = self.dir(&format!("embed-{level}"), &self.level_key(level));
            if let Some(scratch) = self.prepare(Stage::Embed, &dir)? {
                missing.push((level, scratch));
            }
            dirs.insert(level, dir);
        }
        if !missing.is_empty() {
            let levels: Vec<Level> = missing.iter().map(|m| m.0).collect();
            log::info!("embed: computing {levels:?}");
            let (fx, fy) = embed_pair(&self.data, &self.cfg, &levels)?;
            for (level, scratch) in missing {
                Self::fresh(&scratch)?;
                self.write_features(&fx[&level], &scratch, "x")?;
                self.write_features(&fy[&level], &scratch, "y")?;
                self.commit(&scratch, &dirs[&level])?;
            }
        }
        Ok(dirs)
    }

    fn fuse(&self) -> Result<PathBuf> {
        let dir = self.dir("fuse", &self.fuse_key());
        if let Some(scratch) = self.prepare(Stage::Fuse, &dir)? {
            let levels = self.embed()?;
            let (mut lx, mut ly) = (LevelFeatures::new(), LevelFeatures::new());
            for (&level, d) in &levels {
                lx.insert(level, FeatureMatrix::read_binary(&d.join("x.bin"))?);
                ly.insert(level, FeatureMatrix::read_binary(&d.join("y.bin"))?);
            }
            let order = self.cfg.variant.levels();
            Self::fresh(&scratch)?;
            self.write_features(&fuse_standardized(&lx, order)?, &scratch, "x")?;
            self.write_features(&fuse_standardized(&ly, order)?, &scratch, "y")?;
            self.commit(&scratch, &dir)?;
        }
        Ok(dir)
    }

    fn read_fused(&self, dir: &Path) -> Result<(FeatureMatrix, FeatureMatrix)> {
        Ok((
            FeatureMatrix::read_binary(&dir.join("x.bin"))?,
            FeatureMatrix::read_binary(&dir.join("y.bin"))?,
        ))
    }

    fn train(&self) -> Result<PathBuf> {
        let dir = self.dir("train", &self.train_key());
        if let Some(scratch) = self.prepare(Stage::Train, &dir)? {
            let (fx, fy) = self.read_fused(&self.fuse()?)?;
            let (x, y) = (&self.data.x, &self.data.y);
            Self::fresh(&scratch)?;
            for r in 0..self.cfg.repetitions {
                let (_, train, test) = repetition_split(&self.data, &self.cfg, r)?;
                train.save(&scratch.join(format!("train_{r}.tsv")), x, y)?;
                test.save(&scratch.join(format!("test_{r}.tsv")), x, y)?;
                if self.cfg.variant.projects() {
                    let model = train_model(&fx, &fy, &train, &self.cfg)?;
                    log::info!(
                        "train: repetition {r}, k={}, top correlation {:.4}",
                        model.k(),
                        model.correlations[0]
                    );
                    model.write_binary(&scratch.join(format!("model_{r}.bin")))?;
                }
            }
            self.commit(&scratch, &dir)?;
        }
        Ok(dir)
    }

    fn load_pairs(&self, path: &Path) -> Result<MatchedPairs> {
        Ok(MatchedPairs::load(path, &self.data.x, &self.data.y)?)
    }

    fn matching(&self) -> Result<PathBuf> {
        let dir = self.dir("match", &self.match_key());
        if let Some(scratch) = self.prepare(Stage::Match, &dir)? {
            let train_dir = self.train()?;
            let (fx, fy) = self.read_fused(&self.fuse()?)?;
            Self::fresh(&scratch)?;
            for r in 0..self.cfg.repetitions {
                let test = self.load_pairs(&train_dir.join(format!("test_{r}.tsv")))?;
                let model = if self.cfg.variant.projects() {
                    Some(CcaModel::read_binary(&train_dir.join(format!("model_{r}.bin")))?)
                } else {
                    None
                };
                let (zx, zy) = common_space(model.as_ref(), &fx, &fy)?;
                let rankings = rank_queries(&zx, &zy, &test, self.cfg.pool, ranking_depth(self.cfg.top_k))?;
                write_rankings(&scratch.join(format!("rankings_{r}.tsv")), &rankings, &self.data.x, &self.data.y)?;
                let best = MatchedPairs::predicted(rankings.iter().map(|rk| (rk.query, rk.candidates[0].0)).collect());
                best.save(&scratch.join(format!("predicted_{r}.tsv")), &self.data.x, &self.data.y)?;
            }
            self.commit(&scratch, &dir)?;
        }
        Ok(dir)
    }

    fn eval(&self) -> Result<PathBuf> {
        let dir = self.dir("eval", &self.eval_key());
        if let Some(scratch) = self.prepare(Stage::Eval, &dir)? {
            let match_dir = self.matching()?;
            let train_dir = self.train()?;
            let ks = report_ks(self.cfg.top_k);
            Self::fresh(&scratch)?;
            let mut records = Vec::new();
            for r in 0..self.cfg.repetitions {
                let train = self.load_pairs(&train_dir.join(format!("train_{r}.tsv")))?;
                let test = self.load_pairs(&train_dir.join(format!("test_{r}.tsv")))?;
                let rankings = read_rankings(&match_dir.join(format!("rankings_{r}.tsv")), &self.data.x, &self.data.y)?;
                records.push(RepetitionRecord {
                    repetition: r,
                    split_seed: derive_seed(self.cfg.seed, &format!("split.{r}")),
                    n_train: train.len(),
                    n_test: test.len(),
                    scores: evaluate(&rankings, &test, &ks)?,
                });
            }
            let report = ExperimentReport {
                variant: self.cfg.variant,
                top_k: self.cfg.top_k,
                ks,
                records,
                config: self.settings.clone(),
            };
            fs::write(scratch.join("report.tsv"), report.to_tsv())?;
            fs::write(scratch.join("report.txt"), report.to_table())?;
            self.commit(&scratch, &dir)?;
        }
        let tsv = fs::read_to_string(dir.join("report.tsv"))?;
        let table = fs::read_to_string(dir.join("report.txt"))?;
        fs::write(self.out.join("report.tsv"), &tsv)?;
        fs::write(self.out.join("report.txt"), &table)?;
        Ok(dir)
    }

    /// Runs every stage, or only `stage` using cached upstream artifacts.
    /// Returns the directory of the last stage run.
    pub fn run(&mut self, stage: Option<Stage>) -> Result<PathBuf> {
        self.only = stage;
        let dir = match stage.unwrap_or(Stage::Eval) {
            Stage::Embed => {
                let dirs = self.embed()?;
                dirs.values().next().cloned().unwrap_or_else(|| self.out.clone())
            }
            Stage::Fuse => self.fuse()?,
            Stage::Train => self.train()?,
            Stage::Match => self.matching()?,
            Stage::Eval => {
                let dir = self.eval()?;
                print!("{}", fs::read_to_string(self.out.join("report.txt"))?);
                dir
            }
        };
        Ok(dir)
    }
}
