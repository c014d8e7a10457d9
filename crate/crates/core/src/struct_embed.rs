//! Structure embedding with second-order LINE.
//!
//! Each vertex has a vertex vector `u` and a context vector `c`. For a
//! sampled directed edge (i, j) the objective is
//! `log σ(c_j · u_i) + Σ_neg log σ(−c_n · u_i)` with noise vertices drawn in
//! proportion to degree^0.75. Vertices sharing neighbours end up with
//! similar vertex vectors.

use nalgebra::DMatrix;
use rand::Rng;

use crate::corpus::Network;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Level};
use crate::sampling::{self, AliasTable};

#[derive(Debug, Clone, PartialEq)]
pub struct LineConfig {
    pub negative: usize,
    /// Total edge samples are `samples_per_edge × |E|`.
    pub samples_per_edge: usize,
    /// Initial rate, decayed linearly to 1e-4 of itself.
    pub learning_rate: f64,
}

impl Default for LineConfig {
    fn default() -> Self {
        LineConfig {
            negative: 5,
            samples_per_edge: 100,
            learning_rate: 0.025,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructEmbedding {
    /// n×d_s
    pub vertex_vectors: DMatrix<f64>,
    /// n×d_s
    pub context_vectors: DMatrix<f64>,
}

impl StructEmbedding {
    pub fn to_features(&self) -> FeatureMatrix {
        FeatureMatrix::new(Level::Structure, self.vertex_vectors.transpose())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-30.0, 30.0)).exp())
}

pub fn train_line(net: &Network, d_s: usize, cfg: &LineConfig, seed: u64) -> Result<StructEmbedding> {
    if net.edges().is_empty() {
        return Err(Error::EdgelessNetwork(net.name().to_string()));
    }
    if d_s == 0 {
        return Err(Error::InvalidConfig("structure dimension must be at least 1".into()));
    }
    let n = net.n_users();
    // both directions of every canonical edge, in canonical order
    let arcs: Vec<(usize, usize)> = net
        .edges()
        .iter()
        .flat_map(|&(a, b)| [(a, b), (b, a)])
        .collect();
    let noise_weights: Vec<f64> = (0..n).map(|i| (net.degree(i) as f64).powf(0.75)).collect();
    let noise = AliasTable::new(&noise_weights);

    let mut rng = sampling::rng(seed);
    let half = 0.5 / d_s as f64;
    let mut vertex: Vec<f64> = (0..n * d_s).map(|_| rng.random_range(-half..half)).collect();
    let mut context = vec![0.0; n * d_s];
    let mut err = vec![0.0; d_s];

    let total = cfg.samples_per_edge * net.edges().len();
    for step in 0..total {
        let lr = (cfg.learning_rate * (1.0 - step as f64 / total as f64)).max(cfg.learning_rate * 1e-4);
        let (src, dst) = arcs[rng.random_range(0..arcs.len())];
        err.iter_mut().for_each(|e| *e = 0.0);
        let u = &vertex[src * d_s..(src + 1) * d_s];
        for s in 0..=cfg.negative {
            let (target, label) = if s == 0 {
                (dst, 1.0)
            } else {
                let t = noise.sample(&mut rng);
                if t == dst || t == src {
                    continue;
                }
                (t, 0.0)
            };
            let c = &mut context[target * d_s..(target + 1) * d_s];
            let dot: f64 = u.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            let g = (label - sigmoid(dot)) * lr;
            for ((e, ci), ui) in err.iter_mut().zip(c.iter_mut()).zip(u) {
                *e += g * *ci;
                *ci += g * ui;
            }
        }
        for (ui, e) in vertex[src * d_s..(src + 1) * d_s].iter_mut().zip(&err) {
            *ui += e;
        }
    }
    Ok(StructEmbedding {
        vertex_vectors: DMatrix::from_row_slice(n, d_s, &vertex),
        context_vectors: DMatrix::from_row_slice(n, d_s, &context),
    })
}

/// d_s×n matrix of vertex vectors.
pub fn embed_structure(net: &Network, d_s: usize, cfg: &LineConfig, seed: u64) -> Result<FeatureMatrix> {
    Ok(train_line(net, d_s, cfg, seed)?.to_features())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserRecord;

    fn net(n: usize, edges: Vec<(usize, usize)>) -> Network {
        let users = (0..n).map(|i| UserRecord::new(format!("u{i}"), "", "", "")).collect();
        Network::new("g", users, edges).unwrap().0
    }

    fn cosine(m: &DMatrix<f64>, a: usize, b: usize) -> f64 {
        let (x, y) = (m.column(a), m.column(b));
        x.dot(&y) / (x.norm() * y.norm())
    }

    #[test]
    fn edgeless_network_is_rejected() {
        let g = net(3, vec![]);
        assert!(matches!(
            embed_structure(&g, 4, &LineConfig::default(), 0),
            Err(Error::EdgelessNetwork(_))
        ));
    }

    #[test]
    fn single_edge_graph_is_finite() {
        let g = net(2, vec![(0, 1)]);
        let fm = embed_structure(&g, 8, &LineConfig::default(), 1).unwrap();
        assert_eq!((fm.dim(), fm.n_users()), (8, 2));
        assert!(fm.is_finite());
    }

    #[test]
    fn deterministic_and_order_invariant() {
        let a = net(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]);
        let b = net(4, vec![(3, 0), (2, 3), (1, 0), (2, 1)]);
        let ea = embed_structure(&a, 6, &LineConfig::default(), 9).unwrap();
        let eb = embed_structure(&b, 6, &LineConfig::default(), 9).unwrap();
        assert_eq!(ea, eb);
        assert_eq!(ea, embed_structure(&a, 6, &LineConfig::default(), 9).unwrap());
    }

    #[test]
    fn disjoint_cliques_separate() {
        let mut edges = Vec::new();
        for base in [0, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    edges.push((base + i, base + j));
                }
            }
        }
        let g = net(10, edges);
        let fm = embed_structure(&g, 16, &LineConfig::default(), 4).unwrap();
        let m = fm.data();
        let (mut intra, mut inter) = (Vec::new(), Vec::new());
        for a in 0..10 {
            for b in a + 1..10 {
                let c = cosine(m, a, b);
                if (a < 5) == (b < 5) {
                    intra.push(c);
                } else {
                    inter.push(c);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&intra) > mean(&inter), "intra {} inter {}", mean(&intra), mean(&inter));
        assert!(m.column_iter().all(|c| c.norm() < 100.0));
    }
}
