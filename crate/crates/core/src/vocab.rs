//! Character alphabets and token vocabularies.
//!
//! Every vocabulary starts with the three special tokens, followed by one
//! token per alphabet character, followed by multi-character tokens. The
//! character tokens guarantee that any string over the alphabet has at least
//! one segmentation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{QacError, Result};

pub type TokenId = u32;

pub const UNK: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const NUM_SPECIALS: usize = 3;

pub const UNK_SURFACE: &str = "<UNK>";
pub const BOS_SURFACE: &str = "<BOS>";
pub const EOS_SURFACE: &str = "<EOS>";

/// Sorted set of characters a vocabulary is built over.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub struct Alphabet(Vec<char>);

impl Alphabet {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Self {
        let mut v: Vec<char> = chars.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Alphabet(v)
    }

    /// Lowercase letters, digits and space, plus every other character seen
    /// in `queries`.
    pub fn with_base<'a>(queries: impl IntoIterator<Item = &'a str>) -> Self {
        let base = ('a'..='z').chain('0'..='9').chain(std::iter::once(' '));
        let seen = queries.into_iter().flat_map(str::chars);
        Alphabet::new(base.chain(seen))
    }

    pub fn from_corpus<'a>(queries: impl IntoIterator<Item = &'a str>) -> Self {
        Alphabet::new(queries.into_iter().flat_map(str::chars))
    }

    pub fn chars(&self) -> &[char] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, c: char) -> bool {
        self.0.binary_search(&c).is_ok()
    }
}

impl From<Alphabet> for String {
    fn from(a: Alphabet) -> String {
        a.0.into_iter().collect()
    }
}

impl From<String> for Alphabet {
    fn from(s: String) -> Alphabet {
        Alphabet::new(s.chars())
    }
}

/// Token inventory with stable ids.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    alphabet: Alphabet,
    tokens: Vec<String>,
    token_chars: Vec<usize>,
    index: HashMap<String, TokenId>,
    trie: TokenTrie,
}

impl Vocabulary {
    /// Builds a vocabulary from an alphabet and additional multi-character
    /// tokens, in the given order.
    pub fn new(alphabet: Alphabet, extra: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut tokens = vec![
            UNK_SURFACE.to_string(),
            BOS_SURFACE.to_string(),
            EOS_SURFACE.to_string(),
        ];
        tokens.extend(alphabet.chars().iter().map(|c| c.to_string()));
        for t in extra {
            if t.is_empty() {
                return Err(QacError::ModelFormat("empty token surface".into()));
            }
            if let Some(c) = t.chars().find(|c| !alphabet.contains(*c)) {
                return Err(QacError::ModelFormat(format!(
                    "token `{t}` uses character {c:?} outside the alphabet"
                )));
            }
            tokens.push(t);
        }
        Self::from_parts(alphabet, tokens)
    }

    fn from_parts(alphabet: Alphabet, tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        let mut trie = TokenTrie::default();
        let mut token_chars = Vec::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            let id = i as TokenId;
            if i < NUM_SPECIALS {
                token_chars.push(0);
                continue;
            }
            if index.insert(t.clone(), id).is_some() {
                return Err(QacError::DuplicateToken(t.clone()));
            }
            token_chars.push(t.chars().count());
            trie.insert(t, id);
        }
        Ok(Vocabulary {
            alphabet,
            tokens,
            token_chars,
            index,
            trie,
        })
    }

    /// Rebuilds a vocabulary from a full token list as persisted on disk.
    pub fn from_tokens(alphabet: Alphabet, tokens: Vec<String>) -> Result<Self> {
        let expected = [UNK_SURFACE, BOS_SURFACE, EOS_SURFACE];
        if tokens.len() < NUM_SPECIALS + alphabet.len()
            || tokens[..NUM_SPECIALS]
                .iter()
                .zip(expected)
                .any(|(a, b)| a != b)
        {
            return Err(QacError::ModelFormat(
                "token list must start with <UNK>, <BOS>, <EOS> and the alphabet".into(),
            ));
        }
        for (tok, c) in tokens[NUM_SPECIALS..].iter().zip(alphabet.chars()) {
            if tok.chars().ne(std::iter::once(*c)) {
                return Err(QacError::ModelFormat(format!(
                    "expected character token {c:?}, found `{tok}`"
                )));
            }
        }
        let extra = tokens[NUM_SPECIALS + alphabet.len()..].to_vec();
        Self::new(alphabet, extra)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Number of characters a token contributes to a query (0 for specials).
    pub fn token_chars(&self, id: TokenId) -> usize {
        self.token_chars[id as usize]
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn char_id(&self, c: char) -> Option<TokenId> {
        self.alphabet
            .chars()
            .binary_search(&c)
            .ok()
            .map(|i| (i + NUM_SPECIALS) as TokenId)
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < NUM_SPECIALS
    }

    /// Ids of all non-special tokens.
    pub fn regular_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (NUM_SPECIALS as TokenId)..(self.tokens.len() as TokenId)
    }

    pub fn is_char_token(&self, id: TokenId) -> bool {
        let i = id as usize;
        i >= NUM_SPECIALS && i < NUM_SPECIALS + self.alphabet.len()
    }

    pub fn max_token_chars(&self) -> usize {
        self.token_chars.iter().copied().max().unwrap_or(0)
    }

    /// Concatenated surface of a token sequence. Specials render as their
    /// bracketed names.
    pub fn concat(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.surface(id).unwrap_or(UNK_SURFACE))
            .collect()
    }

    /// Calls `f(id, len)` for every token that is a prefix of `chars`.
    pub fn for_each_prefix_token(&self, chars: &[char], f: impl FnMut(TokenId, usize)) {
        self.trie.for_each_prefix(chars, f)
    }

    /// Stable content hash used to pair language models with segmenters.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(String::from(self.alphabet.clone()).as_bytes());
        h.update([0xff]);
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0]);
        }
        to_hex(&h.finalize())
    }
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: Vec<(char, u32)>,
    token: Option<TokenId>,
}

/// Character trie over token surfaces for common-prefix lookups.
#[derive(Debug, Clone)]
struct TokenTrie {
    nodes: Vec<TrieNode>,
}

impl Default for TokenTrie {
    fn default() -> Self {
        TokenTrie {
            nodes: vec![TrieNode::default()],
        }
    }
}

impl TokenTrie {
    fn insert(&mut self, surface: &str, id: TokenId) {
        let mut node = 0usize;
        for c in surface.chars() {
            node = match self.nodes[node].children.binary_search_by_key(&c, |e| e.0) {
                Ok(i) => self.nodes[node].children[i].1 as usize,
                Err(i) => {
                    let next = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.insert(i, (c, next as u32));
                    next
                }
            };
        }
        self.nodes[node].token = Some(id);
    }

    fn for_each_prefix(&self, chars: &[char], mut f: impl FnMut(TokenId, usize)) {
        let mut node = 0usize;
        for (depth, c) in chars.iter().enumerate() {
            match self.nodes[node].children.binary_search_by_key(c, |e| e.0) {
                Ok(i) => node = self.nodes[node].children[i].1 as usize,
                Err(_) => return,
            }
            if let Some(id) = self.nodes[node].token {
                f(id, depth + 1);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_specials_then_chars_then_extras() {
        let v = Vocabulary::new(Alphabet::new("ba".chars()), ["ab".to_string()]).unwrap();
        assert_eq!(v.tokens(), ["<UNK>", "<BOS>", "<EOS>", "a", "b", "ab"]);
        assert_eq!(v.char_id('b'), Some(4));
        assert_eq!(v.id("ab"), Some(5));
        assert!(v.is_char_token(3));
        assert!(!v.is_char_token(5));
        assert_eq!(v.max_token_chars(), 2);
    }

    #[test]
    fn rejects_duplicates_and_foreign_chars() {
        let a = Alphabet::new("ab".chars());
        assert!(matches!(
            Vocabulary::new(a.clone(), ["a".to_string()]),
            Err(QacError::DuplicateToken(_))
        ));
        assert!(Vocabulary::new(a, ["ac".to_string()]).is_err());
    }

    #[test]
    fn prefix_lookup() {
        let v = Vocabulary::new(
            Alphabet::new("abc".chars()),
            ["ab".to_string(), "abc".to_string()],
        )
        .unwrap();
        let chars: Vec<char> = "abcx".chars().collect();
        let mut found = vec![];
        v.for_each_prefix_token(&chars, |id, len| found.push((v.surface(id).unwrap(), len)));
        assert_eq!(found, [("a", 1), ("ab", 2), ("abc", 3)]);
    }

    #[test]
    fn from_tokens_round_trip() {
        let v = Vocabulary::new(Alphabet::new("xy".chars()), ["xy".to_string()]).unwrap();
        let w = Vocabulary::from_tokens(v.alphabet().clone(), v.tokens().to_vec()).unwrap();
        assert_eq!(v.hash(), w.hash());
    }
}
