//! Word-level embedding: CBOW word vectors trained on the network's own
//! phrase corpus, summed per user, then smoothed once toward the mean of the
//! user's neighbours.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::corpus::{Network, TokenStream};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Level};
use crate::sampling::{self, AliasTable};

#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    words: Vec<String>,
    index: HashMap<String, usize>,
    /// |vocab|×d_w, row per word.
    vectors: DMatrix<f64>,
}

impl WordVectors {
    pub fn new(words: Vec<String>, vectors: DMatrix<f64>) -> Result<Self> {
        if words.len() != vectors.nrows() {
            return Err(Error::DimensionMismatch {
                what: "word vector rows",
                expected: words.len(),
                actual: vectors.nrows(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateId(w.clone()));
            }
        }
        Ok(WordVectors {
            words,
            index,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn get(&self, word: &str) -> Option<DVector<f64>> {
        self.index
            .get(word)
            .map(|&i| self.vectors.row(i).transpose())
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (va, vb) = (self.get(a)?, self.get(b)?);
        let denom = va.norm() * vb.norm();
        Some(if denom == 0.0 { 0.0 } else { va.dot(&vb) / denom })
    }

    /// Text format: first line `count dim`, then `word v1 … vdim` per line.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.len(), self.dim()).map_err(io)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}").map_err(io)?;
            for v in self.vectors.row(i).iter() {
                write!(w, " {v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| parse_err(1, format!("bad header field '{s}'"))))
            .collect::<Result<_>>()?;
        let [count, dim] = head[..] else {
            return Err(parse_err(1, "header must be 'count dim'".into()));
        };
        let mut words = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count * dim);
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap().to_string();
            let row: Vec<f64> = parts
                .map(|s| s.parse().map_err(|_| parse_err(i + 1, format!("bad number '{s}'"))))
                .collect::<Result<_>>()?;
            if row.len() != dim {
                return Err(parse_err(i + 1, format!("expected {dim} values, found {}", row.len())));
            }
            words.push(word);
            values.extend(row);
        }
        if words.len() != count {
            return Err(parse_err(1, format!("header says {count} words, file has {}", words.len())));
        }
        WordVectors::new(words, DMatrix::from_row_slice(count, dim, &values))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbowConfig {
    /// Maximum context distance on each side.
    pub window: usize,
    pub negative: usize,
    pub epochs: usize,
    /// Initial rate, decayed linearly to 1e-4 of itself.
    pub learning_rate: f64,
    pub min_count: usize,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            window: 5,
            negative: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x > 30.0 {
        1.0
    } else if x < -30.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

/// CBOW with negative sampling. The hidden vector is the mean of the
/// context input vectors; noise words are drawn from the unigram
/// distribution raised to 3/4.
pub fn train_cbow(docs: &[TokenStream], d_w: usize, cfg: &CbowConfig, seed: u64) -> Result<WordVectors> {
    if d_w == 0 {
        return Err(Error::InvalidConfig("word dimension must be at least 1".into()));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for d in docs {
        for t in d.iter() {
            *freq.entry(t).or_default() += 1;
        }
    }
    let mut words: Vec<String> = freq
        .iter()
        .filter(|&(_, &c)| c >= cfg.min_count.max(1))
        .map(|(w, _)| w.to_string())
        .collect();
    if words.is_empty() {
        return Err(Error::EmptyCorpus("no words to train word vectors on"));
    }
    words.sort_unstable();
    let index: HashMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let encoded: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| d.iter().filter_map(|t| index.get(t).copied()).collect())
        .collect();
    let v = words.len();
    let noise_weights: Vec<f64> = words.iter().map(|w| (freq[w.as_str()] as f64).powf(0.75)).collect();
    let noise = AliasTable::new(&noise_weights);

    let mut rng = sampling::rng(seed);
    let half = 0.5 / d_w as f64;
    // row-major: word i occupies [i*d_w, (i+1)*d_w)
    let mut syn0: Vec<f64> = (0..v * d_w).map(|_| rng.random_range(-half..half)).collect();
    let mut syn1: Vec<f64> = vec![0.0; v * d_w];

    let total_words = encoded.iter().map(Vec::len).sum::<usize>() * cfg.epochs;
    let mut processed = 0usize;
    let mut hidden = vec![0.0; d_w];
    let mut grad = vec![0.0; d_w];
    let mut context = Vec::with_capacity(2 * cfg.window);

    for _ in 0..cfg.epochs {
        for doc in &encoded {
            for pos in 0..doc.len() {
                let progress = processed as f64 / total_words.max(1) as f64;
                let lr = (cfg.learning_rate * (1.0 - progress)).max(cfg.learning_rate * 1e-4);
                processed += 1;

                let shrink = if cfg.window > 0 { rng.random_range(0..cfg.window) } else { 0 };
                let reach = cfg.window - shrink;
                context.clear();
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(doc.len() - 1);
                context.extend((lo..=hi).filter(|&j| j != pos).map(|j| doc[j]));
                if context.is_empty() {
                    continue;
                }

                hidden.iter_mut().for_each(|h| *h = 0.0);
                for &c in &context {
                    for (h, x) in hidden.iter_mut().zip(&syn0[c * d_w..(c + 1) * d_w]) {
                        *h += x;
                    }
                }
                let scale = 1.0 / context.len() as f64;
                hidden.iter_mut().for_each(|h| *h *= scale);
                grad.iter_mut().for_each(|g| *g = 0.0);

                let target = doc[pos];
                for s in 0..=cfg.negative {
                    let (word, label) = if s == 0 {
                        (target, 1.0)
                    } else {
                        let w = noise.sample(&mut rng);
                        if w == target {
                            continue;
                        }
                        (w, 0.0)
                    };
                    let out = &mut syn1[word * d_w..(word + 1) * d_w];
                    let dot: f64 = hidden.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                    let g = (label - sigmoid(dot)) * lr;
                    for ((gr, o), h) in grad.iter_mut().zip(out.iter_mut()).zip(&hidden) {
                        *gr += g * *o;
                        *o += g * h;
                    }
                }
                for &c in &context {
                    for (x, g) in syn0[c * d_w..(c + 1) * d_w].iter_mut().zip(&grad) {
                        *x += g;
                    }
                }
            }
        }
    }
    WordVectors::new(words, DMatrix::from_row_slice(v, d_w, &syn0))
}

/// Sum of the vectors of in-vocabulary tokens; unknown tokens add nothing.
pub fn embed_user_words(doc: &TokenStream, wv: &WordVectors) -> DVector<f64> {
    let mut acc = DVector::zeros(wv.dim());
    for t in doc.iter() {
        if let Some(&i) = wv.index.get(t) {
            acc += wv.vectors.row(i).transpose();
        }
    }
    acc
}

/// Per-user word sums as a d_w×n feature matrix.
pub fn embed_words(docs: &[TokenStream], wv: &WordVectors) -> FeatureMatrix {
    let mut data = DMatrix::zeros(wv.dim(), docs.len());
    for (i, doc) in docs.iter().enumerate() {
        data.set_column(i, &embed_user_words(doc, wv));
    }
    FeatureMatrix::new(Level::Word, data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    lambda: f64,
}

impl SmoothingConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidConfig(format!("smoothing lambda {lambda} outside [0, 1]")));
        }
        Ok(SmoothingConfig { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { lambda: 0.1 }
    }
}

/// One pass of `p_i ← (1−λ) p_i + (λ/s_i) Σ_{j∈N(i)} p*_j`, where `p*` is the
/// matrix before smoothing. Users without neighbours are left unchanged.
pub fn smooth_with_neighbors(raw: &FeatureMatrix, net: &Network, cfg: &SmoothingConfig) -> Result<FeatureMatrix> {
    if raw.n_users() != net.n_users() {
        return Err(Error::ColumnMismatch {
            level: raw.level().to_string(),
            expected: net.n_users(),
            actual: raw.n_users(),
        });
    }
    let frozen = raw.data();
    let lambda = cfg.lambda;
    let mut out = frozen.clone();
    for i in 0..net.n_users() {
        let nbrs = net.neighbors(i);
        if nbrs.is_empty() {
            continue;
        }
        let mut acc = DVector::zeros(frozen.nrows());
        for &j in nbrs {
            acc += frozen.column(j);
        }
        let blended = frozen.column(i) * (1.0 - lambda) + acc * (lambda / nbrs.len() as f64);
        out.set_column(i, &blended);
    }
    Ok(raw.map_data(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserRecord;

    fn net(n: usize, edges: &[(usize, usize)]) -> Network {
        let users = (0..n).map(|i| UserRecord::new(format!("u{i}"), "", "", "")).collect();
        Network::new("t", users, edges.iter().copied()).unwrap().0
    }

    fn vectors(words: &[&str], rows: &[f64], dim: usize) -> WordVectors {
        WordVectors::new(
            words.iter().map(|s| s.to_string()).collect(),
            DMatrix::from_row_slice(words.len(), dim, rows),
        )
        .unwrap()
    }

    #[test]
    fn user_sum_examples() {
        let wv = vectors(&["a"], &[1.0, 2.0], 2);
        let doc: TokenStream = ["a", "a"].into_iter().collect();
        assert_eq!(embed_user_words(&doc, &wv), DVector::from_vec(vec![2.0, 4.0]));
        assert_eq!(embed_user_words(&TokenStream::default(), &wv), DVector::zeros(2));
        let wv = vectors(&["a"], &[1.0, 0.0], 2);
        let doc: TokenStream = ["a", "zz"].into_iter().collect();
        assert_eq!(embed_user_words(&doc, &wv), DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn lambda_zero_is_identity_and_one_copies_neighbour() {
        let g = net(3, &[(0, 1)]);
        let raw = FeatureMatrix::new(Level::Word, DMatrix::from_row_slice(1, 3, &[1.0, 7.0, 4.0]));
        let same = smooth_with_neighbors(&raw, &g, &SmoothingConfig::new(0.0).unwrap()).unwrap();
        assert_eq!(same, raw);
        let full = smooth_with_neighbors(&raw, &g, &SmoothingConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(full.data()[(0, 0)], 7.0);
        assert_eq!(full.data()[(0, 1)], 1.0);
        assert_eq!(full.data()[(0, 2)], 4.0);
    }

    #[test]
    fn path_graph_hand_value() {
        let g = net(3, &[(0, 1), (1, 2)]);
        let raw = FeatureMatrix::new(Level::Word, DMatrix::from_row_slice(1, 3, &[1.0, 3.0, 5.0]));
        let out = smooth_with_neighbors(&raw, &g, &SmoothingConfig::new(0.5).unwrap()).unwrap();
        assert!((out.data()[(0, 1)] - 3.0).abs() < 1e-15);
        // ends read the frozen middle value, not the updated one
        assert!((out.data()[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((out.data()[(0, 2)] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_out_of_range_rejected() {
        assert!(SmoothingConfig::new(-0.1).is_err());
        assert!(SmoothingConfig::new(1.5).is_err());
    }

    #[test]
    fn smoothing_rejects_wrong_width() {
        let g = net(3, &[(0, 1)]);
        let raw = FeatureMatrix::new(Level::Word, DMatrix::zeros(2, 4));
        assert!(smooth_with_neighbors(&raw, &g, &SmoothingConfig::default()).is_err());
    }

    #[test]
    fn cbow_is_deterministic() {
        let docs: Vec<TokenStream> = (0..20)
            .map(|i| ["alpha", "beta", "gamma", if i % 2 == 0 { "delta" } else { "eps" }].into_iter().collect())
            .collect();
        let a = train_cbow(&docs, 8, &CbowConfig::default(), 5).unwrap();
        let b = train_cbow(&docs, 8, &CbowConfig::default(), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_word_corpus_yields_one_finite_vector() {
        let docs: Vec<TokenStream> = vec![["solo"].into_iter().collect()];
        let wv = train_cbow(&docs, 4, &CbowConfig::default(), 1).unwrap();
        assert_eq!(wv.len(), 1);
        assert!(wv.get("solo").unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let docs = vec![TokenStream::default(); 3];
        assert!(matches!(train_cbow(&docs, 4, &CbowConfig::default(), 1), Err(Error::EmptyCorpus(_))));
    }

    #[test]
    fn text_format_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wv.txt");
        let wv = vectors(&["a", "b"], &[1.5, -2.0, 0.0, 1e-3], 2);
        wv.write_text(&path).unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("2 2\n"));
        assert_eq!(WordVectors::read_text(&path).unwrap(), wv);
        fs::write(&path, "2 2\na 1 2\n").unwrap();
        assert!(WordVectors::read_text(&path).is_err());
    }
}
