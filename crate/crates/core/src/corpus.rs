//! Attributed networks, matched pairs and the text preprocessing shared by
//! all attribute levels.
//!
//! File formats:
//! - users: one record per line, `id<TAB>char_attr<TAB>word_attr<TAB>topic_attr`.
//!   Trailing fields may be missing and are then empty.
//! - edges: one edge per line, two whitespace-separated ids.
//! - pairs: one pair per line, `idX<TAB>idY`.
//!
//! Blank lines and lines starting with `#` are skipped in all three.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UserRecord {
    pub id: String,
    /// Username-like text.
    pub char_attr: String,
    /// Short phrases: affiliation, location.
    pub word_attr: String,
    /// Long text, possibly several items concatenated.
    pub topic_attr: String,
}

impl UserRecord {
    pub fn new(id: impl Into<String>, char_attr: &str, word_attr: &str, topic_attr: &str) -> Self {
        UserRecord {
            id: id.into(),
            char_attr: char_attr.to_string(),
            word_attr: word_attr.to_string(),
            topic_attr: topic_attr.to_string(),
        }
    }
}

/// Counts of edge lines that were discarded while building a network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub self_loops: usize,
    pub duplicate_edges: usize,
}

/// An undirected attributed network with dense user indices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    name: String,
    users: Vec<UserRecord>,
    /// Canonical edge list: `(i, j)` with `i < j`, sorted, unique.
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl Network {
    /// Builds a network from raw edges, dropping self-loops and duplicate
    /// (including reversed) edges.
    pub fn new(
        name: impl Into<String>,
        users: Vec<UserRecord>,
        raw_edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<(Self, LoadStats)> {
        let n = users.len();
        let mut index = HashMap::with_capacity(n);
        for (i, u) in users.iter().enumerate() {
            if index.insert(u.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(u.id.clone()));
            }
        }
        let mut stats = LoadStats::default();
        let mut set = BTreeSet::new();
        for (a, b) in raw_edges {
            if a >= n || b >= n {
                return Err(Error::UnknownId(format!("#{}", a.max(b))));
            }
            if a == b {
                stats.self_loops += 1;
                continue;
            }
            if !set.insert((a.min(b), a.max(b))) {
                stats.duplicate_edges += 1;
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok((
            Network {
                name: name.into(),
                users,
                edges,
                adjacency,
                index,
            },
            stats,
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn save(&self, users_path: &Path, edges_path: &Path) -> Result<()> {
        let mut w = create(users_path)?;
        let io = |e| Error::io(users_path, e);
        for u in &self.users {
            writeln!(w, "{}\t{}\t{}\t{}", u.id, u.char_attr, u.word_attr, u.topic_attr).map_err(io)?;
        }
        w.flush().map_err(io)?;

        let mut w = create(edges_path)?;
        let io = |e| Error::io(edges_path, e);
        for &(a, b) in &self.edges {
            writeln!(w, "{}\t{}", self.users[a].id, self.users[b].id).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .collect())
}

fn parse_users(path: &Path) -> Result<Vec<UserRecord>> {
    let mut users = Vec::new();
    for (line_no, line) in content_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() > 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected at most 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: "empty user id".into(),
            });
        }
        let field = |i: usize| fields.get(i).copied().unwrap_or("");
        users.push(UserRecord::new(id, field(1), field(2), field(3)));
    }
    Ok(users)
}

/// Reads a users file and an edges file into a [`Network`] named after the
/// users file stem.
pub fn load_network(users_path: &Path, edges_path: &Path) -> Result<(Network, LoadStats)> {
    let users = parse_users(users_path)?;
    let index: HashMap<&str, usize> = users
        .iter()
        .enumerate()
        .map(|(i, u)| (u.id.as_str(), i))
        .collect();
    let mut raw = Vec::new();
    for (line_no, line) in content_lines(edges_path)? {
        let ids: Vec<&str> = line.split_whitespace().collect();
        if ids.len() != 2 {
            return Err(Error::Parse {
                path: edges_path.to_path_buf(),
                line: line_no,
                msg: format!("expected 2 ids, found {}", ids.len()),
            });
        }
        let lookup = |id: &str| index.get(id).copied().ok_or_else(|| Error::UnknownId(id.to_string()));
        raw.push((lookup(ids[0])?, lookup(ids[1])?));
    }
    let name = users_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (net, stats) = Network::new(name, users, raw)?;
    if stats.self_loops > 0 {
        log::warn!("{}: dropped {} self-loop(s)", edges_path.display(), stats.self_loops);
    }
    Ok((net, stats))
}

/// Cross-network identity pairs `(index in X, index in Y)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchedPairs {
    pairs: Vec<(usize, usize)>,
}

impl MatchedPairs {
    /// Ground-truth style pairs: no index may repeat on either side.
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut left = HashSet::new();
        let mut right = HashSet::new();
        for &(x, y) in &pairs {
            if !left.insert(x) {
                return Err(Error::NotOneToOne { side: "X", index: x });
            }
            if !right.insert(y) {
                return Err(Error::NotOneToOne { side: "Y", index: y });
            }
        }
        Ok(MatchedPairs { pairs })
    }

    /// Predicted pairs from per-query nearest-neighbour search. Sources are
    /// unique but several sources may share a target.
    pub fn predicted(pairs: Vec<(usize, usize)>) -> Self {
        MatchedPairs { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn load(path: &Path, net_x: &Network, net_y: &Network) -> Result<Self> {
        let mut pairs = Vec::new();
        for (line_no, line) in content_lines(path)? {
            let ids: Vec<&str> = line.split('\t').map(str::trim).collect();
            if ids.len() != 2 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: format!("expected 'idX<TAB>idY', found {} field(s)", ids.len()),
                });
            }
            let x = net_x.index_of(ids[0]).ok_or_else(|| Error::UnknownId(ids[0].to_string()))?;
            let y = net_y.index_of(ids[1]).ok_or_else(|| Error::UnknownId(ids[1].to_string()))?;
            pairs.push((x, y));
        }
        MatchedPairs::new(pairs)
    }

    pub fn save(&self, path: &Path, net_x: &Network, net_y: &Network) -> Result<()> {
        let mut w = create(path)?;
        let io = |e| Error::io(path, e);
        for &(x, y) in &self.pairs {
            writeln!(w, "{}\t{}", net_x.users()[x].id, net_y.users()[y].id).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Paths of the five corpus files written by a synthetic generator or expected by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPaths {
    pub users_x: PathBuf,
    pub edges_x: PathBuf,
    pub users_y: PathBuf,
    pub edges_y: PathBuf,
    pub pairs: PathBuf,
}

impl CorpusPaths {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusPaths {
            users_x: dir.join("users_x.tsv"),
            edges_x: dir.join("edges_x.txt"),
            users_y: dir.join("users_y.tsv"),
            edges_y: dir.join("edges_y.txt"),
            pairs: dir.join("pairs.tsv"),
        }
    }

    /// Joins every relative path onto `base`.
    pub fn rebase(&mut self, base: &Path) {
        for p in [&mut self.users_x, &mut self.edges_x, &mut self.users_y, &mut self.edges_y, &mut self.pairs] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Ordered tokens extracted from one attribute.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn new(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.iter().all(|t| !t.is_empty()));
        TokenStream(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for TokenStream {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenStream(iter.into_iter().map(Into::into).filter(|t: &String| !t.is_empty()).collect())
    }
}

pub trait Stemmer: Send + Sync {
    fn stem(&self, word: &str) -> String;
}

pub const ENGLISH_STOP_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "into", "is", "it", "of",
    "on", "or", "that", "the", "this", "to", "was", "were", "with",
];

#[derive(Clone)]
pub struct PreprocessConfig {
    pub stop_words: HashSet<String>,
    /// No stemming when unset.
    pub stemmer: Option<Arc<dyn Stemmer>>,
}

impl PreprocessConfig {
    /// Lowercasing and diacritic stripping only.
    pub fn plain() -> Self {
        PreprocessConfig {
            stop_words: HashSet::new(),
            stemmer: None,
        }
    }

    pub fn with_stop_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        PreprocessConfig {
            stop_words: words.into_iter().map(Into::into).collect(),
            stemmer: None,
        }
    }
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self::with_stop_words(ENGLISH_STOP_WORDS.iter().copied())
    }
}

impl std::fmt::Debug for PreprocessConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PreprocessConfig")
            .field("stop_words", &self.stop_words.len())
            .finish_non_exhaustive()
    }
}

/// Lowercases, strips diacritics, removes stop words and applies the
/// stemmer. Whitespace runs collapse to single spaces once any word-level
/// step applies.
pub fn preprocess_text(raw: &str, cfg: &PreprocessConfig) -> String {
    let folded: String = raw
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .collect::<String>()
        .to_lowercase();
    if cfg.stop_words.is_empty() && cfg.stemmer.is_none() {
        return folded;
    }
    let mut out = Vec::new();
    for chunk in folded.split_whitespace() {
        let core = chunk.trim_matches(|c: char| !c.is_alphanumeric());
        if !core.is_empty() && cfg.stop_words.contains(core) {
            continue;
        }
        match &cfg.stemmer {
            Some(stemmer) if !core.is_empty() => out.push(chunk.replacen(core, &stemmer.stem(core), 1)),
            _ => out.push(chunk.to_string()),
        }
    }
    out.join(" ")
}

/// Every character of each whitespace-separated word, followed by that
/// word's contiguous q-grams for each q (ascending). Grams never span
/// whitespace; q values below 2 are ignored.
pub fn char_tokenize(attr: &str, q_values: &[usize]) -> TokenStream {
    let mut qs: Vec<usize> = q_values.iter().copied().filter(|&q| q >= 2).collect();
    qs.sort_unstable();
    qs.dedup();
    let mut tokens = Vec::new();
    for word in attr.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        tokens.extend(chars.iter().map(|c| c.to_string()));
        for &q in &qs {
            tokens.extend(chars.windows(q).map(|w| w.iter().collect::<String>()));
        }
    }
    TokenStream(tokens)
}

/// Splits on anything that is not alphanumeric.
pub fn word_tokenize(attr: &str) -> TokenStream {
    attr.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Drops every token whose frequency across `docs` is below `min_count`.
/// Returns the number of distinct words removed.
pub fn remove_rare_words(docs: &mut [TokenStream], min_count: usize) -> usize {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for doc in docs.iter() {
        for t in doc.iter() {
            *freq.entry(t).or_default() += 1;
        }
    }
    let rare: HashSet<String> = freq
        .into_iter()
        .filter(|&(_, c)| c < min_count)
        .map(|(w, _)| w.to_string())
        .collect();
    if !rare.is_empty() {
        for doc in docs.iter_mut() {
            doc.0.retain(|t| !rare.contains(t));
        }
    }
    rare.len()
}
