//! JSONL ingestion and export for corpora and labeled pairs.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize, tokenize_frozen};
use super::{Corpus, Document, LabeledPair, SplitTag, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_labels: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub doc_id: String,
    pub item_text: String,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(&row).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads corpus records, validating per-line shape and doc_id uniqueness.
pub fn read_corpus_records(path: &Path) -> Result<Vec<CorpusRecord>> {
    let rows: Vec<(usize, CorpusRecord)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, rec) in rows {
        if let Some(labels) = &rec.topic_labels {
            if labels.len() != rec.sentences.len() {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    reason: format!(
                        "topic_labels has {} entries for {} sentences",
                        labels.len(),
                        rec.sentences.len()
                    ),
                });
            }
        }
        if !seen.insert(rec.doc_id.clone()) {
            return Err(Error::DuplicateDocId(rec.doc_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_labeled_records(path: &Path) -> Result<Vec<LabeledRecord>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

impl Corpus {
    /// Tokenizes `records` into a corpus. Unfrozen tokenization grows `vocab`.
    pub fn from_records(
        records: &[CorpusRecord],
        mut vocab: Vocab,
        frozen: bool,
        split_tag: SplitTag,
    ) -> Result<Self> {
        let mut dropped = 0;
        let mut docs = Vec::with_capacity(records.len());
        for rec in records {
            let sentences: Vec<_> = rec
                .sentences
                .iter()
                .enumerate()
                .map(|(i, text)| {
                    let tokens = tokenize(text, &mut vocab, frozen);
                    let label = rec.topic_labels.as_ref().map(|l| l[i]);
                    (text.clone(), tokens, label)
                })
                .collect();
            let (doc, d) = Document::from_sentences(rec.doc_id.clone(), sentences);
            dropped += d;
            docs.push(doc);
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} sentence(s) that tokenized to nothing");
        }
        let mut corpus = Corpus::new(docs, vocab, split_tag)?;
        corpus.dropped_sentences = dropped;
        Ok(corpus)
    }

    pub fn to_records(&self) -> Vec<CorpusRecord> {
        let labeled = self.has_topic_labels();
        self.documents
            .iter()
            .map(|d| CorpusRecord {
                doc_id: d.doc_id.clone(),
                sentences: d.sentences.iter().map(|s| s.raw_text.clone()).collect(),
                topic_labels: labeled
                    .then(|| d.sentences.iter().filter_map(|s| s.topic_label).collect()),
            })
            .collect()
    }
}

/// Loads a JSONL corpus. With `vocab` supplied, tokenization is frozen against
/// it; otherwise a fresh vocabulary is built from the file.
pub fn load_corpus(path: &Path, vocab: Option<Vocab>) -> Result<Corpus> {
    let records = read_corpus_records(path)?;
    let frozen = vocab.is_some();
    Corpus::from_records(&records, vocab.unwrap_or_default(), frozen, SplitTag::Train)
}

/// Loads labeled pairs, tokenizing items against a frozen vocabulary.
pub fn load_labeled_pairs(path: &Path, vocab: &Vocab) -> Result<Vec<LabeledPair>> {
    Ok(read_labeled_records(path)?
        .into_iter()
        .map(|r| LabeledPair {
            item_tokens: tokenize_frozen(&r.item_text, vocab),
            doc_id: r.doc_id,
            item_text: r.item_text,
        })
        .collect())
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    write_jsonl(path, corpus.to_records())
}

pub fn write_labeled_pairs(pairs: &[LabeledPair], path: &Path) -> Result<()> {
    write_jsonl(
        path,
        pairs.iter().map(|p| LabeledRecord {
            doc_id: p.doc_id.clone(),
            item_text: p.item_text.clone(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_two_documents_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.jsonl",
            "{\"doc_id\":\"b\",\"sentences\":[\"x y\",\"z\"]}\n{\"doc_id\":\"a\",\"sentences\":[\"w\"]}\n",
        );
        let c = load_corpus(&p, None).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.documents()[0].doc_id, "b");
        assert_eq!(c.documents()[1].doc_id, "a");
        assert_eq!(c.vocab().len(), 5);
    }

    #[test]
    fn duplicate_doc_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.jsonl",
            "{\"doc_id\":\"a\",\"sentences\":[\"x\"]}\n{\"doc_id\":\"a\",\"sentences\":[\"y\"]}\n",
        );
        assert!(matches!(load_corpus(&p, None), Err(Error::DuplicateDocId(id)) if id == "a"));
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.jsonl",
            "{\"doc_id\":\"a\",\"sentences\":[\"x\"]}\n{\"doc_id\": 3}\n",
        );
        match load_corpus(&p, None) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn empty_sentence_is_dropped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.jsonl",
            "{\"doc_id\":\"a\",\"sentences\":[\"x\",\"!!\",\"y\"],\"topic_labels\":[0,1,2]}\n",
        );
        let c = load_corpus(&p, None).unwrap();
        assert_eq!(c.dropped_sentences, 1);
        let doc = &c.documents()[0];
        assert_eq!(doc.len(), 2);
        assert_eq!(doc.sentences[1].sent_id, 1);
        assert_eq!(doc.sentences[1].raw_text, "y");
        assert_eq!(doc.sentences[1].topic_label, Some(2));
    }

    #[test]
    fn label_length_mismatch_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.jsonl",
            "{\"doc_id\":\"a\",\"sentences\":[\"x\",\"y\"],\"topic_labels\":[0]}\n",
        );
        assert!(matches!(load_corpus(&p, None), Err(Error::Malformed { line: 1, .. })));
    }

    #[test]
    fn frozen_load_does_not_grow_vocab() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.jsonl", "{\"doc_id\":\"a\",\"sentences\":[\"x new\"]}\n");
        let mut v = Vocab::new();
        v.intern("x");
        let c = load_corpus(&p, Some(v)).unwrap();
        assert_eq!(c.vocab().len(), 2);
        assert_eq!(c.documents()[0].sentences[0].tokens, vec![1, 0]);
    }

    #[test]
    fn labeled_pairs_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "p.jsonl", "{\"doc_id\":\"a\",\"item_text\":\"X z\"}\n");
        let mut v = Vocab::new();
        v.intern("x");
        let pairs = load_labeled_pairs(&p, &v).unwrap();
        assert_eq!(pairs[0].item_tokens, vec![1, 0]);
    }
}
