//! Self-reinforcing positive-pair mining for contrastive sentence and
//! document representations.
//!
//! A bag-of-words encoder scores every sentence pair of a document; a top-K
//! partition of that similarity graph decides which pairs are positives; the
//! encoder is refined on those pairs with an in-batch InfoNCE objective, and
//! the refined encoder annotates again. Documents are embedded by averaging
//! their sentence embeddings and evaluated by Recall@K retrieval of a paired
//! item.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod driver;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod idc;
pub mod training;

pub use error::{Error, Result};
