//! Most-popular-completion baseline over a frequency-annotated trie.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::path::Path;

use crate::decode::Candidate;
use crate::error::{QacError, Result};

const MAGIC: &[u8; 8] = b"QACMPC\x00\x01";

#[derive(Debug, Clone, Default)]
struct Node {
    /// Sorted by character.
    edges: Vec<(char, u32)>,
    count: u64,
    /// Largest terminal count anywhere in this subtree.
    best: u64,
}

#[derive(Debug, Clone)]
pub struct CompletionTrie {
    nodes: Vec<Node>,
    total: u64,
}

impl Default for CompletionTrie {
    fn default() -> Self {
        CompletionTrie {
            nodes: vec![Node::default()],
            total: 0,
        }
    }
}

impl CompletionTrie {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_queries<S: AsRef<str>>(queries: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut trie = Self::new();
        for q in queries {
            trie.insert(q.as_ref())?;
        }
        Ok(trie)
    }

    pub fn insert(&mut self, q: &str) -> Result<()> {
        self.insert_count(q, 1)
    }

    pub fn insert_count(&mut self, q: &str, count: u64) -> Result<()> {
        if q.is_empty() {
            return Err(QacError::Config("cannot insert an empty query".into()));
        }
        let mut path = vec![0usize];
        let mut node = 0usize;
        for c in q.chars() {
            node = match self.nodes[node].edges.binary_search_by_key(&c, |e| e.0) {
                Ok(i) => self.nodes[node].edges[i].1 as usize,
                Err(i) => {
                    let id = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[node].edges.insert(i, (c, id as u32));
                    id
                }
            };
            path.push(node);
        }
        self.nodes[node].count += count;
        let c = self.nodes[node].count;
        for n in path {
            let best = &mut self.nodes[n].best;
            *best = (*best).max(c);
        }
        self.total += count;
        Ok(())
    }

    /// Total inserted count.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, q: &str) -> u64 {
        self.find(q).map_or(0, |n| self.nodes[n].count)
    }

    fn find(&self, prefix: &str) -> Option<usize> {
        let mut node = 0usize;
        for c in prefix.chars() {
            let edges = &self.nodes[node].edges;
            let i = edges.binary_search_by_key(&c, |e| e.0).ok()?;
            node = edges[i].1 as usize;
        }
        Some(node)
    }

    /// The `n` most frequent stored queries starting with `prefix`, by count
    /// descending and then lexicographically.
    pub fn top_n(&self, prefix: &str, n: usize) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        let Some(start) = self.find(prefix) else {
            return out;
        };
        if n == 0 || self.nodes[start].best == 0 {
            return out;
        }
        // A subtree entry is keyed by its best count and its path, which
        // bounds every query below it in the output order.
        let mut heap = BinaryHeap::new();
        heap.push(Entry {
            count: self.nodes[start].best,
            text: prefix.to_string(),
            node: Some(start),
        });
        while let Some(e) = heap.pop() {
            match e.node {
                None => {
                    out.push((e.text, e.count));
                    if out.len() == n {
                        break;
                    }
                }
                Some(id) => {
                    let node = &self.nodes[id];
                    if node.count > 0 {
                        heap.push(Entry {
                            count: node.count,
                            text: e.text.clone(),
                            node: None,
                        });
                    }
                    for &(c, child) in &node.edges {
                        let mut text = e.text.clone();
                        text.push(c);
                        heap.push(Entry {
                            count: self.nodes[child as usize].best,
                            text,
                            node: Some(child as usize),
                        });
                    }
                }
            }
        }
        out
    }

    /// [`top_n`](Self::top_n) scored as `ln(count / total)`.
    pub fn complete(&self, prefix: &str, n: usize) -> Vec<Candidate> {
        let total = self.total as f64;
        self.top_n(prefix, n)
            .into_iter()
            .map(|(query, c)| Candidate {
                query,
                score: (c as f64 / total).ln(),
                token_seqs: 1,
            })
            .collect()
    }

    /// All stored queries with counts, in lexicographic order.
    pub fn entries(&self) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, String::new())];
        while let Some((id, text)) = stack.pop() {
            let node = &self.nodes[id];
            if node.count > 0 {
                out.push((text.clone(), node.count));
            }
            for &(c, child) in node.edges.iter().rev() {
                let mut t = text.clone();
                t.push(c);
                stack.push((child as usize, t));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let entries = self.entries();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
        for (q, c) in entries {
            out.extend_from_slice(&(q.len() as u32).to_le_bytes());
            out.extend_from_slice(q.as_bytes());
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| QacError::ModelFormat(format!("mpc trie: {m}"));
        let mut r = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| bad("bad magic"))?;
        fn take<'a>(r: &mut &'a [u8], k: usize) -> Result<&'a [u8]> {
            if r.len() < k {
                return Err(QacError::ModelFormat("mpc trie: truncated".into()));
            }
            let (head, tail) = r.split_at(k);
            *r = tail;
            Ok(head)
        }
        let n = u64::from_le_bytes(take(&mut r, 8)?.try_into().unwrap());
        let mut trie = Self::new();
        for _ in 0..n {
            let len = u32::from_le_bytes(take(&mut r, 4)?.try_into().unwrap()) as usize;
            let q = std::str::from_utf8(take(&mut r, len)?)
                .map_err(|_| bad("invalid utf-8"))?
                .to_string();
            let c = u64::from_le_bytes(take(&mut r, 8)?.try_into().unwrap());
            trie.insert_count(&q, c)?;
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(trie)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::corpus::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| QacError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, PartialEq, Eq)]
struct Entry {
    count: u64,
    text: String,
    node: Option<usize>,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap: higher count first, then smaller text, then subtrees
        // before the terminal they contain.
        (self.count, Reverse(&self.text), self.node.is_some()).cmp(&(
            other.count,
            Reverse(&other.text),
            other.node.is_some(),
        ))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_total() {
        let trie = CompletionTrie::from_queries(["ab", "ab", "abc"]).unwrap();
        assert_eq!(trie.count("ab"), 2);
        assert_eq!(trie.count("a"), 0);
        assert_eq!(trie.total(), 3);
        assert!(CompletionTrie::new().insert("").is_err());
    }

    #[test]
    fn top_n_examples() {
        let mut trie = CompletionTrie::new();
        trie.insert_count("ab", 3).unwrap();
        trie.insert_count("abc", 1).unwrap();
        assert_eq!(
            trie.top_n("a", 2),
            [("ab".to_string(), 3), ("abc".to_string(), 1)]
        );
        assert!(trie.top_n("x", 5).is_empty());
        assert_eq!(trie.top_n("abc", 5), [("abc".to_string(), 1)]);
        let c = trie.complete("ab", 1);
        assert_eq!(c[0].query, "ab");
        assert!((c[0].score - 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ties_are_lexicographic() {
        let trie = CompletionTrie::from_queries(["bca", "abd", "abc", "b"]).unwrap();
        let got: Vec<String> = trie.top_n("", 4).into_iter().map(|e| e.0).collect();
        assert_eq!(got, ["abc", "abd", "b", "bca"]);
    }

    #[test]
    fn bytes_round_trip() {
        let trie = CompletionTrie::from_queries(["new york", "new", "news", "new"]).unwrap();
        let bytes = trie.to_bytes();
        let back = CompletionTrie::from_bytes(&bytes).unwrap();
        assert_eq!(back.entries(), trie.entries());
        assert_eq!(back.total(), 4);
        assert!(CompletionTrie::from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }
}
