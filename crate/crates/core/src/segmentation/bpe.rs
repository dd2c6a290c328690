use std::collections::{HashMap, HashSet};

use super::Segmentation;
use crate::error::{QacError, Result};
use crate::vocab::{Alphabet, TokenId, Vocabulary, NUM_SPECIALS, UNK};

type Pair = (TokenId, TokenId);

/// Byte-pair-encoding model: a vocabulary plus the ordered merge list that
/// produced it. Token `NUM_SPECIALS + |alphabet| + i` is the result of merge `i`.
#[derive(Debug, Clone)]
pub struct BpeModel {
    vocab: Vocabulary,
    merges: Vec<(String, String)>,
    merge_ids: Vec<(TokenId, TokenId, TokenId)>,
}

impl BpeModel {
    pub fn from_parts(vocab: Vocabulary, merges: Vec<(String, String)>) -> Result<Self> {
        let base = NUM_SPECIALS + vocab.alphabet().len();
        if vocab.len() != base + merges.len() {
            return Err(QacError::ModelFormat(format!(
                "{} merges for {} multi-character tokens",
                merges.len(),
                vocab.len() - base
            )));
        }
        let mut merge_ids = Vec::with_capacity(merges.len());
        for (i, (l, r)) in merges.iter().enumerate() {
            let new_id = (base + i) as TokenId;
            let lookup = |s: &str| vocab.id(s).filter(|&id| id < new_id);
            match (lookup(l), lookup(r)) {
                (Some(a), Some(b)) if vocab.surface(new_id) == Some(&format!("{l}{r}")) => {
                    merge_ids.push((a, b, new_id))
                }
                _ => {
                    return Err(QacError::ModelFormat(format!(
                        "merge #{i} ({l:?}, {r:?}) is inconsistent with the vocabulary"
                    )))
                }
            }
        }
        Ok(BpeModel {
            vocab,
            merges,
            merge_ids,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Splits into characters, then applies every merge in learned order,
    /// left to right within each pass. `<UNK>` never merges.
    pub fn segment(&self, q: &str) -> Segmentation {
        let mut ids: Vec<TokenId> = q
            .chars()
            .map(|c| self.vocab.char_id(c).unwrap_or(UNK))
            .collect();
        for &(l, r, new) in &self.merge_ids {
            if ids.len() < 2 {
                break;
            }
            merge_pair(&mut ids, (l, r), new);
        }
        Segmentation::from_ids(ids, &self.vocab)
    }
}

/// Replaces non-overlapping occurrences of `pair`, scanning left to right.
/// Returns whether anything changed.
fn merge_pair(ids: &mut Vec<TokenId>, pair: Pair, new: TokenId) -> bool {
    let mut out = 0;
    let mut i = 0;
    let mut changed = false;
    while i < ids.len() {
        if i + 1 < ids.len() && ids[i] == pair.0 && ids[i + 1] == pair.1 {
            ids[out] = new;
            i += 2;
            changed = true;
        } else {
            ids[out] = ids[i];
            i += 1;
        }
        out += 1;
    }
    ids.truncate(out);
    changed
}

/// Learns `vocab_size - |alphabet| - 3` merges. Each step merges the most
/// frequent adjacent pair across the corpus; ties go to the
/// lexicographically smallest `(left, right)` surfaces. Pairs whose
/// concatenation is already a token are skipped so surfaces stay unique.
///
/// Characters outside `alphabet` act as hard boundaries.
pub fn train_bpe<S: AsRef<str>>(
    corpus: &[S],
    alphabet: &Alphabet,
    vocab_size: usize,
) -> Result<BpeModel> {
    if corpus.is_empty() {
        return Err(QacError::EmptyCorpus);
    }
    let minimum = NUM_SPECIALS + alphabet.len();
    if vocab_size < minimum {
        return Err(QacError::VocabTooSmall {
            requested: vocab_size,
            minimum,
        });
    }
    let requested = vocab_size - minimum;
    let base_vocab = Vocabulary::new(alphabet.clone(), std::iter::empty())?;

    let mut word_counts: HashMap<Vec<TokenId>, u64> = HashMap::new();
    for q in corpus {
        let mut run = Vec::new();
        for c in q.as_ref().chars() {
            match base_vocab.char_id(c) {
                Some(id) => run.push(id),
                None => {
                    if run.len() > 1 {
                        *word_counts.entry(std::mem::take(&mut run)).or_default() += 1;
                    }
                    run.clear();
                }
            }
        }
        if run.len() > 1 {
            *word_counts.entry(run).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<TokenId>, u64)> = word_counts.into_iter().collect();
    words.sort_unstable();

    let mut surfaces: Vec<String> = base_vocab.tokens().to_vec();
    let mut existing: HashSet<String> = surfaces[NUM_SPECIALS..].iter().cloned().collect();
    let mut pair_counts: HashMap<Pair, i64> = HashMap::new();
    let mut occurs_in: HashMap<Pair, HashSet<usize>> = HashMap::new();
    for (wi, (w, n)) in words.iter().enumerate() {
        for p in w.windows(2) {
            let pair = (p[0], p[1]);
            *pair_counts.entry(pair).or_default() += *n as i64;
            occurs_in.entry(pair).or_default().insert(wi);
        }
    }

    let mut blocked: HashSet<Pair> = HashSet::new();
    let mut merges: Vec<(String, String)> = Vec::with_capacity(requested);
    let lex_key = |s: &[String], p: Pair| (s[p.0 as usize].clone(), s[p.1 as usize].clone());

    while merges.len() < requested {
        let mut best: Option<(Pair, i64)> = None;
        for (&pair, &count) in &pair_counts {
            if count <= 0 || blocked.contains(&pair) {
                continue;
            }
            if let Some((bp, bc)) = best {
                if count < bc {
                    continue;
                }
                if count == bc {
                    let (l, r) = (&surfaces[pair.0 as usize], &surfaces[pair.1 as usize]);
                    let (bl, br) = (&surfaces[bp.0 as usize], &surfaces[bp.1 as usize]);
                    if (l, r) >= (bl, br) {
                        continue;
                    }
                }
            }
            let merged = format!("{}{}", surfaces[pair.0 as usize], surfaces[pair.1 as usize]);
            if existing.contains(&merged) {
                blocked.insert(pair);
                continue;
            }
            best = Some((pair, count));
        }
        let Some((pair, _)) = best else {
            return Err(QacError::InsufficientMerges {
                attained: merges.len(),
                requested,
                max_vocab: minimum + merges.len(),
            });
        };

        let new_id = surfaces.len() as TokenId;
        let (l, r) = lex_key(&surfaces, pair);
        let merged = format!("{l}{r}");
        existing.insert(merged.clone());
        surfaces.push(merged);
        merges.push((l, r));

        let mut affected: Vec<usize> = occurs_in
            .remove(&pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        affected.sort_unstable();
        for wi in affected {
            let (word, n) = &mut words[wi];
            let n = *n as i64;
            let before = word.clone();
            if !merge_pair(word, pair, new_id) {
                continue;
            }
            for p in before.windows(2) {
                *pair_counts.entry((p[0], p[1])).or_default() -= n;
            }
            for p in word.windows(2) {
                let q = (p[0], p[1]);
                *pair_counts.entry(q).or_default() += n;
                occurs_in.entry(q).or_default().insert(wi);
            }
        }
        pair_counts.remove(&pair);
    }

    let extra = surfaces.split_off(minimum);
    let vocab = Vocabulary::new(alphabet.clone(), extra)?;
    BpeModel::from_parts(vocab, merges)
}
