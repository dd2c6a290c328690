//! Query auto-completion with subword language models.
//!
//! The crate covers the whole path from raw query logs to ranked
//! suggestions: normalization and time-based splitting ([`corpus`]),
//! character, BPE and unigram segmentation ([`segmentation`]), an n-gram
//! token language model ([`lm`]), beam decoding with retrace seeding and
//! duplicate merging ([`decode`]), a most-popular-completion trie
//! ([`mpc`]), metrics ([`eval`]) and an end-to-end driver ([`pipeline`]).

pub mod corpus;
pub mod decode;
pub mod error;
pub mod eval;
pub mod lm;
pub mod math;
pub mod mpc;
pub mod pipeline;
pub mod segmentation;
pub mod vocab;

pub use error::{QacError, Result};
