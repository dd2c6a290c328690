use super::Segmentation;
use crate::error::{QacError, Result};
use crate::vocab::{TokenId, Vocabulary};

/// Longest string [`enumerate_all_segmentations`] accepts.
pub const MAX_ENUMERATION_CHARS: usize = 20;

/// Every sequence of non-special tokens whose concatenation is `q`, found by
/// exhaustive recursion. Strings with characters no token covers have no
/// segmentation.
pub fn enumerate_all_segmentations(q: &str, vocab: &Vocabulary) -> Result<Vec<Segmentation>> {
    let chars: Vec<char> = q.chars().collect();
    if chars.len() > MAX_ENUMERATION_CHARS {
        return Err(QacError::TooLong {
            len: chars.len(),
            limit: MAX_ENUMERATION_CHARS,
        });
    }
    let mut out = Vec::new();
    let mut stack = Vec::new();
    recurse(&chars, vocab, &mut stack, &mut out);
    Ok(out)
}

fn recurse(
    rest: &[char],
    vocab: &Vocabulary,
    stack: &mut Vec<TokenId>,
    out: &mut Vec<Segmentation>,
) {
    if rest.is_empty() {
        out.push(Segmentation::from_ids(stack.clone(), vocab));
        return;
    }
    for id in vocab.regular_ids() {
        let surface: Vec<char> = vocab.surface(id).unwrap().chars().collect();
        if rest.starts_with(&surface) {
            stack.push(id);
            recurse(&rest[surface.len()..], vocab, stack, out);
            stack.pop();
        }
    }
}
