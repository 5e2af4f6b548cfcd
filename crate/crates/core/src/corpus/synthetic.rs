//! Synthetic corpora with known topic structure.
//!
//! Every document is a Markov walk over topics: the first sentence draws a
//! topic uniformly, and each later sentence switches to a different, uniformly
//! chosen topic with probability `topic_switch_prob`. A sentence's tokens come
//! from its topic's private vocabulary, except for a fixed fraction drawn from
//! a vocabulary shared by all topics. Each document gets one counterpart item
//! drawn from the private vocabulary of its majority topic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Document, LabeledPair, SplitTag, Vocab};
use crate::error::{Error, Result};

/// Probability that a sentence token is drawn from the shared vocabulary.
pub const SHARED_TOKEN_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_topics: usize,
    pub n_docs: usize,
    pub sentences_per_doc: usize,
    pub topic_switch_prob: f64,
    pub vocab_per_topic: usize,
    pub shared_vocab: usize,
    pub tokens_per_sentence: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_topics: 5,
            n_docs: 500,
            sentences_per_doc: 8,
            topic_switch_prob: 0.4,
            vocab_per_topic: 50,
            shared_vocab: 20,
            tokens_per_sentence: 6,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_topics", self.n_topics),
            ("n_docs", self.n_docs),
            ("sentences_per_doc", self.sentences_per_doc),
            ("vocab_per_topic", self.vocab_per_topic),
            ("shared_vocab", self.shared_vocab),
            ("tokens_per_sentence", self.tokens_per_sentence),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(Error::Config {
                    key: format!("synthetic.{key}"),
                    reason: "must be at least 1".into(),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.topic_switch_prob) {
            return Err(Error::Config {
                key: "synthetic.topic_switch_prob".into(),
                reason: format!("must lie in [0, 1], got {}", self.topic_switch_prob),
            });
        }
        Ok(())
    }

    fn private_word(topic: usize, i: usize) -> String {
        format!("t{topic}w{i}")
    }

    fn shared_word(i: usize) -> String {
        format!("s{i}")
    }
}

struct Sampler<'a> {
    spec: &'a SyntheticSpec,
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    fn next_topic(&mut self, current: usize) -> usize {
        let n = self.spec.n_topics;
        if n > 1 && self.rng.random_bool(self.spec.topic_switch_prob) {
            // uniform over the other n - 1 topics
            let step = self.rng.random_range(1..n);
            (current + step) % n
        } else {
            current
        }
    }

    fn sentence(&mut self, topic: usize) -> String {
        let spec = self.spec;
        (0..spec.tokens_per_sentence)
            .map(|_| {
                if self.rng.random_bool(SHARED_TOKEN_FRACTION) {
                    SyntheticSpec::shared_word(self.rng.random_range(0..spec.shared_vocab))
                } else {
                    SyntheticSpec::private_word(topic, self.rng.random_range(0..spec.vocab_per_topic))
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Samples, with replacement, from the majority-topic private words that
    /// occur in the document.
    fn item(&mut self, sentences: &[(String, Vec<super::TokenId>, Option<u32>)], topic: usize) -> String {
        let prefix = format!("t{topic}w");
        let words: Vec<&str> = sentences
            .iter()
            .filter(|s| s.2 == Some(topic as u32))
            .flat_map(|s| s.0.split(' '))
            .filter(|w| w.starts_with(&prefix))
            .collect();
        if words.is_empty() {
            // every majority-topic token came from the shared vocabulary
            return (0..self.spec.tokens_per_sentence)
                .map(|_| SyntheticSpec::private_word(topic, self.rng.random_range(0..self.spec.vocab_per_topic)))
                .collect::<Vec<_>>()
                .join(" ");
        }
        (0..self.spec.tokens_per_sentence)
            .map(|_| words[self.rng.random_range(0..words.len())])
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Generates a labeled corpus and one counterpart item per document.
/// Deterministic in `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Corpus, Vec<LabeledPair>)> {
    spec.validate()?;
    let mut vocab = Vocab::new();
    for t in 0..spec.n_topics {
        for i in 0..spec.vocab_per_topic {
            vocab.intern(&SyntheticSpec::private_word(t, i));
        }
    }
    for i in 0..spec.shared_vocab {
        vocab.intern(&SyntheticSpec::shared_word(i));
    }

    let mut sampler = Sampler {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
    };
    let width = spec.n_docs.to_string().len();
    let mut docs = Vec::with_capacity(spec.n_docs);
    let mut pairs = Vec::with_capacity(spec.n_docs);
    for d in 0..spec.n_docs {
        let mut topic = sampler.rng.random_range(0..spec.n_topics);
        let mut sentences = Vec::with_capacity(spec.sentences_per_doc);
        for s in 0..spec.sentences_per_doc {
            if s > 0 {
                topic = sampler.next_topic(topic);
            }
            let text = sampler.sentence(topic);
            let tokens = super::tokenize::tokenize_frozen(&text, &vocab);
            sentences.push((text, tokens, Some(topic as u32)));
        }
        let doc_id = format!("doc{d:0width$}");
        let (doc, _) = Document::from_sentences(doc_id.clone(), sentences.clone());
        let majority = doc.majority_topic().expect("labeled, non-empty") as usize;
        pairs.push(LabeledPair::new(doc_id, sampler.item(&sentences, majority), &vocab));
        docs.push(doc);
    }
    Ok((Corpus::new(docs, vocab, SplitTag::Train)?, pairs))
}
