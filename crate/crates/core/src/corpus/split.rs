use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Corpus, LabeledPair, SplitTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidArgument(format!(
                "split fractions must lie in [0, 1], got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Document counts for each split. Train and valid are rounded, test takes the
/// remainder.
pub fn split_counts(n: usize, f: SplitFractions) -> (usize, usize, usize) {
    let train = ((n as f64) * f.train).round().min(n as f64) as usize;
    let valid = ((n as f64) * f.valid).round().min((n - train) as f64) as usize;
    (train, valid, n - train - valid)
}

#[derive(Debug, Clone)]
pub struct Split {
    pub corpus: Corpus,
    pub pairs: Vec<LabeledPair>,
}

/// Splits by document in corpus order: a leading train block, then valid,
/// then test. Labeled pairs follow their document.
pub fn split_corpus(
    corpus: &Corpus,
    pairs: &[LabeledPair],
    fractions: SplitFractions,
) -> Result<[Split; 3]> {
    fractions.validate()?;
    let (n_train, n_valid, _) = split_counts(corpus.len(), fractions);
    let docs = corpus.documents();
    let blocks = [
        (&docs[..n_train], SplitTag::Train),
        (&docs[n_train..n_train + n_valid], SplitTag::Valid),
        (&docs[n_train + n_valid..], SplitTag::Test),
    ];
    let make = |(block, tag): (&[super::Document], SplitTag)| -> Result<Split> {
        let ids: HashSet<&str> = block.iter().map(|d| d.doc_id.as_str()).collect();
        Ok(Split {
            corpus: Corpus::new(block.to_vec(), corpus.vocab().clone(), tag)?,
            pairs: pairs
                .iter()
                .filter(|p| ids.contains(p.doc_id.as_str()))
                .cloned()
                .collect(),
        })
    };
    let [a, b, c] = blocks;
    Ok([make(a)?, make(b)?, make(c)?])
}
