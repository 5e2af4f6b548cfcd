//! Lowercasing word tokenizer. Words are maximal runs of alphanumeric
//! characters; everything else separates them.

use super::{TokenId, Vocab, UNK_ID};

/// Lowercased alphanumeric runs of `raw`, in order.
pub fn split_words(raw: &str) -> Vec<String> {
    raw.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Maps `raw` to token ids. With `frozen`, unseen words become UNK; otherwise
/// they are appended to `vocab`.
pub fn tokenize(raw: &str, vocab: &mut Vocab, frozen: bool) -> Vec<TokenId> {
    if frozen {
        return tokenize_frozen(raw, vocab);
    }
    split_words(raw).iter().map(|w| vocab.intern(w)).collect()
}

pub(crate) fn tokenize_frozen(raw: &str, vocab: &Vocab) -> Vec<TokenId> {
    split_words(raw)
        .iter()
        .map(|w| vocab.id(w).unwrap_or(UNK_ID))
        .collect()
}

/// Space-joined surface form of `ids`.
pub fn detokenize(ids: &[TokenId], vocab: &Vocab) -> String {
    ids.iter()
        .map(|&id| vocab.token(id).unwrap_or(super::UNK_TOKEN))
        .collect::<Vec<_>>()
        .join(" ")
}
