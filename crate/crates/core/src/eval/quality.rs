use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::idc::PositivePairSet;

/// Mined pairs scored against the synthetic topic labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationQualityReport {
    pub precision: f64,
    pub recall: f64,
    pub mined: usize,
}

/// Precision is the share of mined pairs whose two sentences share a topic;
/// recall is the share of same-topic intra-document pairs that were mined.
/// A ratio with an empty denominator is reported as 0 for precision and 1 for
/// recall (nothing to find).
pub fn pair_quality(pairs: &PositivePairSet, corpus: &Corpus) -> Result<AnnotationQualityReport> {
    if !corpus.has_topic_labels() {
        return Err(Error::MissingTopicLabels);
    }
    let topic = |doc_id: &str, i: usize| -> Result<u32> {
        let doc = corpus
            .doc(doc_id)
            .ok_or_else(|| Error::UnknownDocId(doc_id.to_string()))?;
        doc.sentences
            .get(i)
            .and_then(|s| s.topic_label)
            .ok_or_else(|| Error::InvalidArgument(format!("document `{doc_id}` has no sentence {i}")))
    };

    let mut correct = 0usize;
    for p in pairs.iter() {
        if topic(&p.doc_id, p.sent_i)? == topic(&p.doc_id, p.sent_j)? {
            correct += 1;
        }
    }

    let mut relevant = 0usize;
    for doc in corpus.documents() {
        let labels: Vec<_> = doc.sentences.iter().map(|s| s.topic_label).collect();
        for i in 0..labels.len() {
            relevant += labels[i + 1..].iter().filter(|&&l| l == labels[i]).count();
        }
    }

    let mined = pairs.len();
    let precision = if mined == 0 { 0.0 } else { correct as f64 / mined as f64 };
    let recall = if relevant == 0 {
        1.0
    } else {
        correct as f64 / relevant as f64
    };
    Ok(AnnotationQualityReport {
        precision,
        recall,
        mined,
    })
}
