//! Run configuration: one JSON document with a section per component.
//! Unknown keys are rejected, missing keys take their defaults, and the fully
//! resolved configuration is written next to every run's outputs.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    generate_synthetic, read_corpus_records, read_labeled_records, split_corpus, split_counts,
    Corpus, LabeledPair, Split, SplitFractions, SplitTag, SyntheticSpec, Vocab,
};
use crate::driver::LoopConfig;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::GradCheckConfig;
use crate::idc::IdcConfig;
use crate::training::TrainConfig;

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Corpus JSONL. When absent the synthetic generator is used.
    pub corpus: Option<PathBuf>,
    /// Labeled pairs JSONL for a file corpus.
    pub labeled_pairs: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
    /// Where evaluation reports go; defaults to `checkpoint_dir`.
    pub report_dir: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            labeled_pairs: None,
            checkpoint_dir: PathBuf::from("out"),
            report_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub idc: IdcConfig,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
    pub synthetic: SyntheticSpec,
    pub split: SplitFractions,
    /// Use only the first N labeled training pairs for fine-tuning.
    pub labeled_limit: Option<usize>,
    pub gradcheck: GradCheckConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.train.validate()?;
        self.idc.validate()?;
        self.loop_config().validate()?;
        self.synthetic.validate()?;
        self.split.validate().map_err(|e| Error::Config {
            key: "split".into(),
            reason: e.to_string(),
        })?;
        if self.labeled_limit == Some(0) {
            return Err(Error::Config {
                key: "labeled_limit".into(),
                reason: "must be at least 1 when set".into(),
            });
        }
        if self.gradcheck.trials == 0 {
            return Err(Error::Config {
                key: "gradcheck.trials".into(),
                reason: "must be at least 1".into(),
            });
        }
        if !(self.gradcheck.tolerance > 0.0) {
            return Err(Error::Config {
                key: "gradcheck.tolerance".into(),
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// The loop settings with the top-level IDC and training sections folded
    /// in.
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            idc: self.idc,
            train: self.train.clone(),
            ..self.loop_cfg.clone()
        }
    }

    /// One seed for every randomized component.
    pub fn set_seed(&mut self, seed: u64) {
        self.encoder.seed = seed;
        self.train.seed = seed;
        self.synthetic.seed = seed;
        self.gradcheck.seed = seed;
    }

    pub fn report_dir(&self) -> &Path {
        self.paths.report_dir.as_deref().unwrap_or(&self.paths.checkpoint_dir)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Parses a config from JSON text. Errors name the offending key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::Config {
            key: if key == "." { "<root>".into() } else { key },
            reason: e.into_inner().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Train, valid and test splits with their labeled pairs. All three share the
/// training vocabulary.
pub fn prepare_splits(cfg: &RunConfig) -> Result<[Split; 3]> {
    let Some(corpus_path) = &cfg.paths.corpus else {
        let (corpus, pairs) = generate_synthetic(&cfg.synthetic)?;
        return split_corpus(&corpus, &pairs, cfg.split);
    };
    let records = read_corpus_records(corpus_path)?;
    let (n_train, n_valid, _) = split_counts(records.len(), cfg.split);
    let train = Corpus::from_records(&records[..n_train], Vocab::new(), false, SplitTag::Train)?;
    let vocab = train.vocab().clone();
    let valid = Corpus::from_records(
        &records[n_train..n_train + n_valid],
        vocab.clone(),
        true,
        SplitTag::Valid,
    )?;
    let test = Corpus::from_records(&records[n_train + n_valid..], vocab.clone(), true, SplitTag::Test)?;

    let mut buckets: [Vec<LabeledPair>; 3] = Default::default();
    if let Some(pairs_path) = &cfg.paths.labeled_pairs {
        let ids: [HashSet<&str>; 3] = [&train, &valid, &test]
            .map(|c| c.documents().iter().map(|d| d.doc_id.as_str()).collect());
        for rec in read_labeled_records(pairs_path)? {
            let slot = ids
                .iter()
                .position(|s| s.contains(rec.doc_id.as_str()))
                .ok_or_else(|| Error::UnknownDocId(rec.doc_id.clone()))?;
            buckets[slot].push(LabeledPair::new(rec.doc_id, rec.item_text, &vocab));
        }
    }
    let [p_train, p_valid, p_test] = buckets;
    Ok([
        Split { corpus: train, pairs: p_train },
        Split { corpus: valid, pairs: p_valid },
        Split { corpus: test, pairs: p_test },
    ])
}
