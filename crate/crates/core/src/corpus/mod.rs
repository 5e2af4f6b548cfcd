//! Corpus data model: vocabulary, tokenized documents, labeled counterpart
//! items, JSONL ingestion, splitting and the synthetic topic generator.

mod io;
mod split;
mod synthetic;
mod tokenize;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_corpus, load_labeled_pairs, read_corpus_records, read_labeled_records, write_corpus,
    write_labeled_pairs, CorpusRecord, LabeledRecord,
};
pub use split::{split_corpus, split_counts, Split, SplitFractions};
pub use synthetic::{generate_synthetic, SyntheticSpec, SHARED_TOKEN_FRACTION};
pub use tokenize::{detokenize, split_words, tokenize};

pub type TokenId = u32;

/// Reserved id for out-of-vocabulary tokens.
pub const UNK_ID: TokenId = 0;
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    ids: HashMap<String, TokenId>,
    tokens: Vec<String>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut ids = HashMap::new();
        ids.insert(UNK_TOKEN.to_string(), UNK_ID);
        Self {
            ids,
            tokens: vec![UNK_TOKEN.to_string()],
        }
    }

    /// Rebuilds a vocabulary from its id-ordered token list. Entry 0 must be
    /// the UNK token and every entry must be unique.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(Error::Format(format!(
                "vocabulary must start with {UNK_TOKEN}"
            )));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if ids.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary entry `{tok}`")));
            }
        }
        Ok(Self { ids, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        // UNK is always present
        false
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Returns the id of `token`, inserting it if absent.
    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(id) = self.ids.get(token) {
            return *id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub sent_id: usize,
    pub tokens: Vec<TokenId>,
    pub raw_text: String,
    pub topic_label: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    /// Builds a document from already tokenized sentences, dropping empty ones
    /// and renumbering the survivors. Returns the document and the drop count.
    pub fn from_sentences(
        doc_id: impl Into<String>,
        sentences: impl IntoIterator<Item = (String, Vec<TokenId>, Option<u32>)>,
    ) -> (Self, usize) {
        let mut dropped = 0;
        let mut kept = Vec::new();
        for (raw_text, tokens, topic_label) in sentences {
            if tokens.is_empty() {
                dropped += 1;
                continue;
            }
            kept.push(Sentence {
                sent_id: kept.len(),
                tokens,
                raw_text,
                topic_label,
            });
        }
        (
            Self {
                doc_id: doc_id.into(),
                sentences: kept,
            },
            dropped,
        )
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_seqs(&self) -> Vec<&[TokenId]> {
        self.sentences.iter().map(|s| s.tokens.as_slice()).collect()
    }

    /// Topic with the most sentences; ties go to the smallest topic id.
    pub fn majority_topic(&self) -> Option<u32> {
        let mut counts: Vec<(u32, usize)> = Vec::new();
        for s in &self.sentences {
            let t = s.topic_label?;
            match counts.iter_mut().find(|(topic, _)| *topic == t) {
                Some((_, c)) => *c += 1,
                None => counts.push((t, 1)),
            }
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(t, _)| t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Valid => "valid",
            SplitTag::Test => "test",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    vocab: Vocab,
    split_tag: SplitTag,
    index: HashMap<String, usize>,
    /// Sentences dropped at ingestion because they tokenized to nothing.
    pub dropped_sentences: usize,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, vocab: Vocab, split_tag: SplitTag) -> Result<Self> {
        let mut index = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if index.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDocId(doc.doc_id.clone()));
            }
            for s in &doc.sentences {
                if let Some(&id) = s.tokens.iter().find(|&&id| id as usize >= vocab.len()) {
                    return Err(Error::TokenOutOfRange {
                        id,
                        vocab_size: vocab.len(),
                    });
                }
            }
        }
        Ok(Self {
            documents,
            vocab,
            split_tag,
            index,
            dropped_sentences: 0,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split_tag
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn doc(&self, doc_id: &str) -> Option<&Document> {
        self.index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn doc_position(&self, doc_id: &str) -> Option<usize> {
        self.index.get(doc_id).copied()
    }

    pub fn has_topic_labels(&self) -> bool {
        self.documents
            .iter()
            .flat_map(|d| &d.sentences)
            .all(|s| s.topic_label.is_some())
    }
}

/// A document paired with its ground-truth counterpart item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub doc_id: String,
    pub item_text: String,
    pub item_tokens: Vec<TokenId>,
}

impl LabeledPair {
    pub fn new(doc_id: impl Into<String>, item_text: impl Into<String>, vocab: &Vocab) -> Self {
        let item_text = item_text.into();
        let item_tokens = tokenize::tokenize_frozen(&item_text, vocab);
        Self {
            doc_id: doc_id.into(),
            item_text,
            item_tokens,
        }
    }
}
