//! Shared fixtures for the integration tests: an independent brute-force
//! clustering oracle and random weight-matrix instances.

#![allow(dead_code)]

use corrmine::encoder::EncoderModel;
use corrmine::idc::{partition, prune_edges, IdcConfig, SimilarityGraph};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A symmetric instance given by its strict upper triangle.
#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub upper: Vec<f64>,
}

impl Instance {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (i.min(j), i.max(j));
        // offset of row a in the packed upper triangle
        let row = a * (2 * self.n - a - 1) / 2;
        self.upper[row + (b - a - 1)]
    }

    pub fn graph(&self) -> SimilarityGraph {
        SimilarityGraph::from_upper(self.n, &self.upper).unwrap()
    }

    /// Instance whose sentence `i` is the original's `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut upper = Vec::with_capacity(self.upper.len());
        for i in 0..self.n {
            for j in i + 1..self.n {
                upper.push(self.weight(perm[i], perm[j]));
            }
        }
        Self { n: self.n, upper }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            upper: self.upper.iter().map(|w| w * c).collect(),
        }
    }
}

/// Random instance with `n` in `[2, 10]`. With `ties`, weights come from a
/// four-value grid so that equal weights are common.
pub fn random_instance(rng: &mut ChaCha8Rng, ties: bool) -> Instance {
    let n = rng.random_range(2..=10);
    let m = n * (n - 1) / 2;
    let upper = (0..m)
        .map(|_| {
            if ties {
                rng.random_range(0..4) as f64 * 0.25
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
        .collect();
    Instance { n, upper }
}

/// Top-K partners of `i` by repeated arg-max: largest weight first, smaller
/// index on equal weight.
pub fn oracle_top_k(inst: &Instance, i: usize, k: usize) -> Vec<usize> {
    let mut chosen = Vec::new();
    for _ in 0..k.min(inst.n - 1) {
        let mut best: Option<usize> = None;
        for j in 0..inst.n {
            if j == i || chosen.contains(&j) {
                continue;
            }
            best = match best {
                None => Some(j),
                Some(b) if inst.weight(i, j) > inst.weight(i, b) => Some(j),
                keep => keep,
            };
        }
        chosen.push(best.unwrap());
    }
    chosen
}

/// Adjacency after keeping every edge nominated by either endpoint.
pub fn oracle_kept(inst: &Instance, k: usize) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; inst.n]; inst.n];
    for i in 0..inst.n {
        for j in oracle_top_k(inst, i, k) {
            adj[i][j] = true;
            adj[j][i] = true;
        }
    }
    adj
}

/// Cluster labels from the transitive closure (Floyd–Warshall), numbered by
/// smallest member.
pub fn oracle_clusters(inst: &Instance, k: usize) -> Vec<usize> {
    let n = inst.n;
    let mut reach = oracle_kept(inst, k);
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][m] && reach[m][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if label[i] == usize::MAX {
            for j in 0..n {
                if reach[i][j] {
                    label[j] = next;
                }
            }
            next += 1;
        }
    }
    label
}

pub fn kept_edges(inst: &Instance, k: usize) -> Vec<(usize, usize)> {
    prune_edges(inst.graph(), &IdcConfig { k }).kept_edges
}

pub fn cluster_assignment(inst: &Instance, k: usize) -> Vec<usize> {
    partition(&prune_edges(inst.graph(), &IdcConfig { k })).assignment
}

/// The oracle's kept edges in the library's `(i < j)`, sorted form.
pub fn oracle_edges(inst: &Instance, k: usize) -> Vec<(usize, usize)> {
    let adj = oracle_kept(inst, k);
    let mut out = Vec::new();
    for i in 0..inst.n {
        for j in i + 1..inst.n {
            if adj[i][j] {
                out.push((i, j));
            }
        }
    }
    out
}

/// Whether two labelings describe the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// Bit equality of every parameter and every configuration field the
/// checkpoint format persists (`init_scale` only matters at construction and
/// is not stored).
pub fn same_persisted_model(a: &EncoderModel, b: &EncoderModel) -> bool {
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let (ca, cb) = (&a.config, &b.config);
    bits(&a.token_table) == bits(&b.token_table)
        && bits(&a.projection) == bits(&b.projection)
        && bits(&a.proj_bias) == bits(&b.proj_bias)
        && (ca.vocab_size, ca.embed_dim, ca.out_dim, ca.normalize, ca.seed)
            == (cb.vocab_size, cb.embed_dim, cb.out_dim, cb.normalize, cb.seed)
        && ca.temperature.to_bits() == cb.temperature.to_bits()
}
