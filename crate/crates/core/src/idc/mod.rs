//! Intra-document clustering.
//!
//! Sentences of one document form a complete graph weighted by embedding
//! inner products. An edge survives pruning when either endpoint ranks the
//! other among its top-K partners (ties go to the smaller partner index).
//! Connected components of the surviving edges are the clusters, and every
//! within-cluster pair becomes a positive training pair.

mod union_find;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::encoder::{EmbeddingVector, EncoderModel};
use crate::error::{Error, Result};

pub use union_find::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdcConfig {
    pub k: usize,
}

impl Default for IdcConfig {
    fn default() -> Self {
        Self { k: 1 }
    }
}

impl IdcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config {
                key: "idc.k".into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    /// Row-major `n x n`; the diagonal is NaN.
    weights: Vec<f64>,
    /// Unordered kept edges as `(i, j)` with `i < j`, sorted.
    pub kept_edges: Vec<(usize, usize)>,
}

impl SimilarityGraph {
    /// Builds a graph from the strict upper triangle, given row by row:
    /// `(0,1), (0,2), ..., (0,n-1), (1,2), ...`.
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        let expected = n * n.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "upper-triangle weights",
                expected,
                actual: upper.len(),
            });
        }
        let mut weights = vec![f64::NAN; n * n];
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                let w = *it.next().expect("length checked");
                weights[i * n + j] = w;
                weights[j * n + i] = w;
            }
        }
        Ok(Self {
            n,
            weights,
            kept_edges: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Weight of `{i, j}`; NaN on the diagonal.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Partners of `i` ordered by descending weight, ascending index on ties.
    pub fn ranked_partners(&self, i: usize) -> Vec<usize> {
        let mut partners: Vec<usize> = (0..self.n).filter(|&j| j != i).collect();
        partners.sort_by(|&a, &b| {
            self.weight(i, b)
                .total_cmp(&self.weight(i, a))
                .then(a.cmp(&b))
        });
        partners
    }
}

/// Weighted complete graph over the document's sentences. Requires at least
/// two sentences.
pub fn build_graph(model: &EncoderModel, doc: &Document) -> Result<SimilarityGraph> {
    let n = doc.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "document `{}` has {n} sentence(s); a graph needs at least 2",
            doc.doc_id
        )));
    }
    let emb: Vec<EmbeddingVector> = doc
        .sentences
        .iter()
        .map(|s| model.encode_sentence(&s.tokens))
        .collect::<Result<_>>()?;
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            upper.push(model.similarity(&emb[i], &emb[j])?);
        }
    }
    SimilarityGraph::from_upper(n, &upper)
}

/// Keeps edge `{i, j}` iff `j` is in the top-K of row `i` or `i` is in the
/// top-K of row `j`.
pub fn prune_edges(mut graph: SimilarityGraph, cfg: &IdcConfig) -> SimilarityGraph {
    let n = graph.n;
    let mut keep = vec![false; n * n];
    for i in 0..n {
        for j in graph.ranked_partners(i).into_iter().take(cfg.k) {
            keep[i.min(j) * n + i.max(j)] = true;
        }
    }
    graph.kept_edges = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| keep[i * n + j])
        .collect();
    graph
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Cluster id of each sentence.
    pub assignment: Vec<usize>,
    /// Members of each cluster in ascending order; clusters are ordered by
    /// their smallest member.
    pub clusters: Vec<Vec<usize>>,
}

impl Clustering {
    pub fn from_assignment(assignment: Vec<usize>) -> Self {
        let l = assignment.iter().map(|&c| c + 1).max().unwrap_or(0);
        let mut clusters = vec![Vec::new(); l];
        for (i, &c) in assignment.iter().enumerate() {
            clusters[c].push(i);
        }
        Self {
            assignment,
            clusters,
        }
    }
}

/// Connected components of the kept-edge graph.
pub fn partition(graph: &SimilarityGraph) -> Clustering {
    let mut uf = UnionFind::new(graph.n);
    for &(i, j) in &graph.kept_edges {
        uf.union(i, j);
    }
    let mut root_to_cluster = vec![usize::MAX; graph.n];
    let mut assignment = Vec::with_capacity(graph.n);
    let mut next = 0;
    for i in 0..graph.n {
        let root = uf.find(i);
        if root_to_cluster[root] == usize::MAX {
            root_to_cluster[root] = next;
            next += 1;
        }
        assignment.push(root_to_cluster[root]);
    }
    Clustering::from_assignment(assignment)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PositivePair {
    pub doc_id: String,
    #[serde(rename = "i")]
    pub sent_i: usize,
    #[serde(rename = "j")]
    pub sent_j: usize,
    pub cluster: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PositivePairSet {
    pub pairs: Vec<PositivePair>,
}

impl PositivePairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PositivePair> {
        self.pairs.iter()
    }

    /// Writes one JSON object per pair: `{"doc_id", "i", "j", "cluster"}`.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for p in &self.pairs {
            let line = serde_json::to_string(p).expect("pair serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// All unordered within-cluster pairs, ordered by `(sent_i, sent_j)`.
pub fn extract_pairs(clustering: &Clustering, doc_id: &str) -> PositivePairSet {
    let mut pairs = Vec::new();
    for (c, members) in clustering.clusters.iter().enumerate() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                pairs.push(PositivePair {
                    doc_id: doc_id.to_string(),
                    sent_i: i,
                    sent_j: j,
                    cluster: c,
                });
            }
        }
    }
    pairs.sort_by_key(|p| (p.sent_i, p.sent_j));
    PositivePairSet { pairs }
}

/// Graph, pruning, partition and extraction for one document.
pub fn annotate_document(
    model: &EncoderModel,
    doc: &Document,
    cfg: &IdcConfig,
) -> Result<(SimilarityGraph, Clustering, PositivePairSet)> {
    let graph = prune_edges(build_graph(model, doc)?, cfg);
    let clustering = partition(&graph);
    let pairs = extract_pairs(&clustering, &doc.doc_id);
    Ok((graph, clustering, pairs))
}

/// Mines positive pairs from every document with at least two sentences.
/// Documents are processed in parallel on the current rayon pool; the output
/// is in document order regardless of worker count.
pub fn annotate_corpus(
    model: &EncoderModel,
    corpus: &Corpus,
    cfg: &IdcConfig,
) -> Result<PositivePairSet> {
    cfg.validate()?;
    if model.vocab_size() != corpus.vocab().len() {
        return Err(Error::VocabMismatch {
            model: model.vocab_size(),
            corpus: corpus.vocab().len(),
        });
    }
    let per_doc: Vec<Vec<PositivePair>> = corpus
        .documents()
        .par_iter()
        .filter(|d| d.len() >= 2)
        .map(|d| annotate_document(model, d, cfg).map(|(_, _, p)| p.pairs))
        .collect::<Result<_>>()?;
    Ok(PositivePairSet {
        pairs: per_doc.into_iter().flatten().collect(),
    })
}
