//! Synthetic aligned network pairs with known ground truth.
//!
//! Network X grows by preferential attachment. Each user gets a two-part
//! name built from syllables, an affiliation made of a few phrases drawn
//! from word pools, and a document of short titles sampled mostly from one
//! of several planted topics. Network Y copies X and then applies noise:
//! edges are dropped, attribute items (name parts, affiliation phrases,
//! titles) are removed, name characters are mutated and affiliation words
//! are swapped. User i of X is user i of Y.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{CorpusPaths, MatchedPairs, Network, UserRecord};
use crate::error::{Error, Result};
use crate::sampling::{self, SeededRng};

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "to", "sa", "vi", "dan", "el", "mor", "ni", "ta", "qu", "zar", "bel", "fi", "go", "har",
    "is", "jun", "ko", "lin", "ma", "nor", "pe", "ri", "su", "tor", "ul", "wen", "xi", "yo", "ber", "cha", "dor", "ev",
];

const INSTITUTION_KINDS: &[&str] = &["university", "institute", "college", "academy", "laboratory", "school", "center"];

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    /// Edges added per arriving node.
    pub attachment_m: usize,
    pub edge_drop_p: f64,
    pub attr_drop_p: f64,
    pub char_noise_p: f64,
    pub word_swap_p: f64,
    /// Planted topics for the long-text attribute.
    pub n_topics: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 500,
            attachment_m: 6,
            edge_drop_p: 0.1,
            attr_drop_p: 0.2,
            char_noise_p: 0.05,
            word_swap_p: 0.1,
            n_topics: 10,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("edge_drop_p", self.edge_drop_p),
            ("attr_drop_p", self.attr_drop_p),
            ("char_noise_p", self.char_noise_p),
            ("word_swap_p", self.word_swap_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name}={p} is not a probability")));
            }
        }
        if self.attachment_m == 0 || self.n_users < self.attachment_m + 1 {
            return Err(Error::InvalidConfig(format!(
                "need attachment_m >= 1 and n_users >= attachment_m + 1 (got m={}, n={})",
                self.attachment_m, self.n_users
            )));
        }
        if self.n_topics == 0 {
            return Err(Error::InvalidConfig("n_topics must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthPair {
    pub x: Network,
    pub y: Network,
    pub truth: MatchedPairs,
}

/// Attribute items before they are joined into text, so that noise can act
/// on whole items.
#[derive(Debug, Clone)]
struct Profile {
    name: Vec<String>,
    affiliation: Vec<Vec<String>>,
    titles: Vec<Vec<String>>,
}

impl Profile {
    fn record(&self, id: String) -> UserRecord {
        let name = self.name.join(" ");
        let aff = self.affiliation.iter().map(|p| p.join(" ")).collect::<Vec<_>>().join(", ");
        let doc = self.titles.iter().map(|t| t.join(" ")).collect::<Vec<_>>().join("; ");
        UserRecord::new(id, &name, &aff, &doc)
    }
}

fn pseudo_word(rng: &mut SeededRng, syllables: usize) -> String {
    (0..syllables).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

struct Pools {
    cities: Vec<String>,
    fields: Vec<String>,
    topics: Vec<Vec<String>>,
    background: Vec<String>,
}

fn distinct_words(rng: &mut SeededRng, count: usize, syllables: usize, taken: &mut std::collections::HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = pseudo_word(rng, syllables);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn make_pools(rng: &mut SeededRng, n_topics: usize) -> Pools {
    let mut taken = std::collections::HashSet::new();
    taken.extend(INSTITUTION_KINDS.iter().map(|s| s.to_string()));
    let cities = distinct_words(rng, 40, 3, &mut taken);
    let fields = distinct_words(rng, 30, 2, &mut taken);
    let topics = (0..n_topics).map(|_| distinct_words(rng, 25, 3, &mut taken)).collect();
    let background = distinct_words(rng, 60, 2, &mut taken);
    Pools {
        cities,
        fields,
        topics,
        background,
    }
}

fn make_profile(rng: &mut SeededRng, pools: &Pools) -> Profile {
    let len = rng.random_range(2..=3);
    let first = capitalize(&pseudo_word(rng, len));
    let len = rng.random_range(2..=3);
    let last = capitalize(&pseudo_word(rng, len));
    let mut affiliation = vec![vec![
        INSTITUTION_KINDS.choose(rng).unwrap().to_string(),
        "of".to_string(),
        pools.cities.choose(rng).unwrap().clone(),
    ]];
    affiliation.push(vec![
        "department".to_string(),
        "of".to_string(),
        pools.fields.choose(rng).unwrap().clone(),
        pools.fields.choose(rng).unwrap().clone(),
    ]);
    if rng.random::<f64>() < 0.5 {
        affiliation.push(vec![pools.cities.choose(rng).unwrap().clone()]);
    }
    let topic = rng.random_range(0..pools.topics.len());
    let n_titles = rng.random_range(4..=8);
    let titles = (0..n_titles)
        .map(|_| {
            let len = rng.random_range(5..=9);
            (0..len)
                .map(|_| {
                    if rng.random::<f64>() < 0.8 {
                        pools.topics[topic].choose(rng).unwrap().clone()
                    } else {
                        pools.background.choose(rng).unwrap().clone()
                    }
                })
                .collect()
        })
        .collect();
    Profile {
        name: vec![first, last],
        affiliation,
        titles,
    }
}

fn preferential_attachment(rng: &mut SeededRng, n: usize, m: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    // each node appears once per incident edge
    let mut endpoints = Vec::new();
    for i in 0..=m {
        for j in 0..i {
            edges.push((j, i));
            endpoints.extend([i, j]);
        }
    }
    if m == 0 {
        endpoints.push(0);
    }
    for v in (m + 1)..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = *endpoints.choose(rng).unwrap();
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            edges.push((t, v));
            endpoints.extend([t, v]);
        }
    }
    edges
}

fn mutate_chars(rng: &mut SeededRng, word: &str, p: f64) -> String {
    word.chars()
        .map(|c| {
            if rng.random::<f64>() < p {
                char::from(*LETTERS.choose(rng).unwrap())
            } else {
                c
            }
        })
        .collect()
}

fn noisy_copy(rng: &mut SeededRng, p: &Profile, cfg: &SynthConfig, pools: &Pools) -> Profile {
    let keep = |rng: &mut SeededRng| rng.random::<f64>() >= cfg.attr_drop_p;
    let name = p
        .name
        .iter()
        .filter_map(|part| keep(rng).then(|| mutate_chars(rng, part, cfg.char_noise_p)))
        .collect();
    let affiliation = p
        .affiliation
        .iter()
        .filter_map(|phrase| {
            if !keep(rng) {
                return None;
            }
            let swapped = phrase
                .iter()
                .map(|w| {
                    if rng.random::<f64>() < cfg.word_swap_p {
                        let pool = if rng.random::<bool>() { &pools.cities } else { &pools.fields };
                        pool.choose(rng).unwrap().clone()
                    } else {
                        w.clone()
                    }
                })
                .collect();
            Some(swapped)
        })
        .collect();
    let titles = p.titles.iter().filter(|_| keep(rng)).cloned().collect();
    Profile {
        name,
        affiliation,
        titles,
    }
}

pub fn generate_pair(cfg: &SynthConfig) -> Result<SynthPair> {
    cfg.validate()?;
    let mut rng = sampling::rng(cfg.seed);
    let pools = make_pools(&mut rng, cfg.n_topics);
    let profiles: Vec<Profile> = (0..cfg.n_users).map(|_| make_profile(&mut rng, &pools)).collect();
    let edges = preferential_attachment(&mut rng, cfg.n_users, cfg.attachment_m);

    let mut noise_rng = sampling::rng(sampling::derive_seed(cfg.seed, "noise"));
    let users_x: Vec<UserRecord> = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| p.record(format!("x{i:05}")))
        .collect();
    let users_y: Vec<UserRecord> = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| noisy_copy(&mut noise_rng, p, cfg, &pools).record(format!("y{i:05}")))
        .collect();
    let edges_y: Vec<(usize, usize)> = edges
        .iter()
        .copied()
        .filter(|_| noise_rng.random::<f64>() >= cfg.edge_drop_p)
        .collect();

    let (x, _) = Network::new("synth_x", users_x, edges)?;
    let (y, _) = Network::new("synth_y", users_y, edges_y)?;
    let truth = MatchedPairs::new((0..cfg.n_users).map(|i| (i, i)).collect())?;
    Ok(SynthPair { x, y, truth })
}

impl SynthPair {
    pub fn write(&self, dir: &Path) -> Result<CorpusPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = CorpusPaths::in_dir(dir);
        self.x.save(&paths.users_x, &paths.edges_x)?;
        self.y.save(&paths.users_y, &paths.edges_y)?;
        self.truth.save(&paths.pairs, &self.x, &self.y)?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_copies_everything() {
        let cfg = SynthConfig {
            n_users: 60,
            edge_drop_p: 0.0,
            attr_drop_p: 0.0,
            char_noise_p: 0.0,
            word_swap_p: 0.0,
            ..SynthConfig::default()
        };
        let pair = generate_pair(&cfg).unwrap();
        assert_eq!(pair.x.edges(), pair.y.edges());
        for (a, b) in pair.x.users().iter().zip(pair.y.users()) {
            assert_eq!(
                (&a.char_attr, &a.word_attr, &a.topic_attr),
                (&b.char_attr, &b.word_attr, &b.topic_attr)
            );
        }
    }

    #[test]
    fn full_edge_drop_leaves_y_edgeless() {
        let cfg = SynthConfig {
            n_users: 40,
            edge_drop_p: 1.0,
            ..SynthConfig::default()
        };
        assert!(generate_pair(&cfg).unwrap().y.edges().is_empty());
    }

    #[test]
    fn attachment_graph_has_no_isolated_users_and_a_heavy_tail() {
        let pair = generate_pair(&SynthConfig::default()).unwrap();
        let n = pair.x.n_users();
        let degrees: Vec<usize> = (0..n).map(|i| pair.x.degree(i)).collect();
        assert!(degrees.iter().all(|&d| d >= 1));
        let mean = degrees.iter().sum::<usize>() as f64 / n as f64;
        let max = *degrees.iter().max().unwrap() as f64;
        assert!(max >= 3.0 * mean, "max {max} mean {mean}");
    }

    #[test]
    fn generation_is_deterministic_and_truth_is_bijective() {
        let cfg = SynthConfig {
            n_users: 50,
            ..SynthConfig::default()
        };
        let a = generate_pair(&cfg).unwrap();
        let b = generate_pair(&cfg).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.truth.len(), 50);
        let mut ys: Vec<usize> = a.truth.pairs().iter().map(|p| p.1).collect();
        ys.sort_unstable();
        assert_eq!(ys, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn invalid_configs() {
        let bad = SynthConfig {
            attr_drop_p: 1.5,
            ..SynthConfig::default()
        };
        assert!(generate_pair(&bad).is_err());
        let small = SynthConfig {
            n_users: 3,
            attachment_m: 3,
            ..SynthConfig::default()
        };
        assert!(generate_pair(&small).is_err());
    }

    #[test]
    fn written_corpus_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let pair = generate_pair(&SynthConfig {
            n_users: 30,
            ..SynthConfig::default()
        })
        .unwrap();
        let paths = pair.write(dir.path()).unwrap();
        let (x, _) = crate::corpus::load_network(&paths.users_x, &paths.edges_x).unwrap();
        let (y, _) = crate::corpus::load_network(&paths.users_y, &paths.edges_y).unwrap();
        assert_eq!(x.users(), pair.x.users());
        assert_eq!(y.edges(), pair.y.edges());
        assert_eq!(MatchedPairs::load(&paths.pairs, &x, &y).unwrap(), pair.truth);
    }
}
