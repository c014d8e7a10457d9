//! Topic-level embedding: LDA fitted by collapsed Gibbs sampling; each
//! user's feature vector is the smoothed topic proportion of their document
//! in the final sampler state.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;

use crate::corpus::TokenStream;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Level};
use crate::sampling::{self, SeededRng};

/// Sampler state: token assignments plus the word-topic and document-topic
/// counters derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaState {
    vocab: Vec<String>,
    /// Word ids per document.
    docs: Vec<Vec<usize>>,
    /// Topic per token, parallel to `docs`.
    assignments: Vec<Vec<usize>>,
    /// vocab×topics, row-major.
    word_topic: Vec<u32>,
    /// docs×topics, row-major.
    doc_topic: Vec<u32>,
    topic_totals: Vec<u32>,
    alpha: f64,
    beta: f64,
    n_topics: usize,
}

impl LdaState {
    /// Encodes the corpus and assigns every token a uniformly random topic.
    pub fn init(docs: &[TokenStream], n_topics: usize, alpha: f64, beta: f64, rng: &mut SeededRng) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus("no topic documents"));
        }
        if n_topics < 2 {
            return Err(Error::InvalidConfig(format!("topic count must be at least 2, got {n_topics}")));
        }
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "Dirichlet priors must be positive (alpha={alpha}, beta={beta})"
            )));
        }
        let mut vocab: Vec<String> = docs.iter().flat_map(|d| d.tokens().iter().cloned()).collect();
        vocab.sort_unstable();
        vocab.dedup();
        if vocab.is_empty() {
            return Err(Error::EmptyCorpus("topic documents contain no words"));
        }
        let encoded: Vec<Vec<usize>> = docs
            .iter()
            .map(|d| {
                d.iter()
                    .map(|t| vocab.binary_search_by(|v| v.as_str().cmp(t)).unwrap())
                    .collect()
            })
            .collect();
        let mut state = LdaState {
            word_topic: vec![0; vocab.len() * n_topics],
            doc_topic: vec![0; encoded.len() * n_topics],
            topic_totals: vec![0; n_topics],
            assignments: Vec::with_capacity(encoded.len()),
            vocab,
            docs: Vec::new(),
            alpha,
            beta,
            n_topics,
        };
        for (d, words) in encoded.iter().enumerate() {
            let mut z = Vec::with_capacity(words.len());
            for &w in words {
                let t = rng.random_range(0..n_topics);
                state.add(d, w, t);
                z.push(t);
            }
            state.assignments.push(z);
        }
        state.docs = encoded;
        Ok(state)
    }

    fn add(&mut self, d: usize, w: usize, t: usize) {
        self.word_topic[w * self.n_topics + t] += 1;
        self.doc_topic[d * self.n_topics + t] += 1;
        self.topic_totals[t] += 1;
    }

    fn remove(&mut self, d: usize, w: usize, t: usize) {
        self.word_topic[w * self.n_topics + t] -= 1;
        self.doc_topic[d * self.n_topics + t] -= 1;
        self.topic_totals[t] -= 1;
    }

    /// One Gibbs sweep over every token. Returns the largest deviation of the
    /// normalized conditional's total from 1 seen during the sweep.
    pub fn sweep(&mut self, rng: &mut SeededRng) -> f64 {
        let k = self.n_topics;
        let vbeta = self.vocab.len() as f64 * self.beta;
        let mut probs = vec![0.0; k];
        let mut worst: f64 = 0.0;
        for d in 0..self.docs.len() {
            // the document-length denominator is constant across topics, so
            // it cancels; it is kept for the normalization check only
            let doc_len = self.docs[d].len() as f64;
            for pos in 0..self.docs[d].len() {
                let w = self.docs[d][pos];
                let old = self.assignments[d][pos];
                self.remove(d, w, old);
                let doc_denom = doc_len - 1.0 + k as f64 * self.alpha;
                let mut total = 0.0;
                for (t, p) in probs.iter_mut().enumerate() {
                    let word_part = (f64::from(self.word_topic[w * k + t]) + self.beta)
                        / (f64::from(self.topic_totals[t]) + vbeta);
                    let doc_part = (f64::from(self.doc_topic[d * k + t]) + self.alpha) / doc_denom;
                    *p = word_part * doc_part;
                    total += *p;
                }
                let normalized: f64 = probs.iter().map(|p| p / total).sum();
                worst = worst.max((normalized - 1.0).abs());

                let mut u = rng.random::<f64>() * total;
                let mut new = k - 1;
                for (t, p) in probs.iter().enumerate() {
                    if u < *p {
                        new = t;
                        break;
                    }
                    u -= p;
                }
                self.add(d, w, new);
                self.assignments[d][pos] = new;
            }
        }
        worst
    }

    /// Rebuilds all counters from the assignments and compares.
    pub fn is_consistent(&self) -> bool {
        let k = self.n_topics;
        let mut wt = vec![0u32; self.word_topic.len()];
        let mut dt = vec![0u32; self.doc_topic.len()];
        let mut tt = vec![0u32; k];
        for (d, (words, z)) in self.docs.iter().zip(&self.assignments).enumerate() {
            if words.len() != z.len() {
                return false;
            }
            for (&w, &t) in words.iter().zip(z) {
                if t >= k {
                    return false;
                }
                wt[w * k + t] += 1;
                dt[d * k + t] += 1;
                tt[t] += 1;
            }
        }
        wt == self.word_topic && dt == self.doc_topic && tt == self.topic_totals
    }

    pub fn n_topics(&self) -> usize {
        self.n_topics
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn doc_topic_counts(&self, doc: usize) -> &[u32] {
        &self.doc_topic[doc * self.n_topics..(doc + 1) * self.n_topics]
    }

    pub fn word_topic_count(&self, word: usize, topic: usize) -> u32 {
        self.word_topic[word * self.n_topics + topic]
    }

    /// Smoothed word distribution of one topic.
    pub fn phi(&self, topic: usize) -> Vec<f64> {
        let v = self.vocab.len();
        let denom = f64::from(self.topic_totals[topic]) + v as f64 * self.beta;
        (0..v)
            .map(|w| (f64::from(self.word_topic_count(w, topic)) + self.beta) / denom)
            .collect()
    }

    /// Plain-text listing of the `top` most probable words of every topic.
    pub fn topic_report(&self, top: usize) -> String {
        let mut out = String::new();
        for t in 0..self.n_topics {
            let phi = self.phi(t);
            let mut order: Vec<usize> = (0..phi.len()).collect();
            order.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
            let words: Vec<String> = order
                .iter()
                .take(top)
                .map(|&w| format!("{}:{:.4}", self.vocab[w], phi[w]))
                .collect();
            let _ = writeln!(out, "topic {t}\t{}", words.join(" "));
        }
        out
    }
}

/// Runs `iters` sweeps from a seeded random initialization.
pub fn gibbs_sample(
    docs: &[TokenStream],
    d_t: usize,
    alpha: f64,
    beta: f64,
    iters: usize,
    seed: u64,
) -> Result<LdaState> {
    if iters == 0 {
        return Err(Error::InvalidConfig("Gibbs sampling needs at least one sweep".into()));
    }
    let mut rng = sampling::rng(seed);
    let mut state = LdaState::init(docs, d_t, alpha, beta, &mut rng)?;
    for _ in 0..iters {
        state.sweep(&mut rng);
    }
    debug_assert!(state.is_consistent());
    Ok(state)
}

/// `θ_j = (DT_j + α) / (Σ_k DT_k + d_t α)` for one document.
pub fn estimate_theta(state: &LdaState, doc_index: usize) -> Vec<f64> {
    let counts = state.doc_topic_counts(doc_index);
    let len: u32 = counts.iter().sum();
    let denom = f64::from(len) + state.n_topics as f64 * state.alpha;
    counts
        .iter()
        .map(|&c| (f64::from(c) + state.alpha) / denom)
        .collect()
}

/// Topic proportions of every document as a d_t×n feature matrix.
pub fn theta_matrix(state: &LdaState) -> FeatureMatrix {
    let mut data = DMatrix::zeros(state.n_topics, state.n_docs());
    for d in 0..state.n_docs() {
        for (t, v) in estimate_theta(state, d).into_iter().enumerate() {
            data[(t, d)] = v;
        }
    }
    FeatureMatrix::new(Level::Topic, data)
}

pub fn embed_topics(
    docs: &[TokenStream],
    d_t: usize,
    alpha: f64,
    beta: f64,
    iters: usize,
    seed: u64,
) -> Result<FeatureMatrix> {
    let state = gibbs_sample(docs, d_t, alpha, beta, iters, seed)?;
    Ok(theta_matrix(&state))
}
