//! Query-log ingestion: normalization, adjacent-duplicate merging and
//! time-based splitting.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{QacError, Result};
use crate::vocab::Alphabet;

pub const MIN_QUERY_CHARS: usize = 3;
pub const TRAIN_TRUNCATE_CHARS: usize = 40;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.txt";
pub const VALID_FILE: &str = "valid.txt";
pub const TEST_FILE: &str = "test.txt";
pub const TEST_SEEN_FILE: &str = "test_seen.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLogRecord {
    pub user_id: String,
    pub timestamp: i64,
    pub query: String,
}

impl RawLogRecord {
    pub fn new(user_id: impl Into<String>, timestamp: i64, query: impl Into<String>) -> Self {
        RawLogRecord {
            user_id: user_id.into(),
            timestamp,
            query: query.into(),
        }
    }
}

/// A query that passed normalization and the minimum-length filter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormalizedQuery(String);

impl NormalizedQuery {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl std::fmt::Display for NormalizedQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// NFKC, drop non-ASCII, lowercase, collapse whitespace runs. No trimming.
fn canonical_chars(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.nfkc() {
        if !c.is_ascii() {
            continue;
        }
        if c.is_ascii_whitespace() {
            pending_space = true;
            continue;
        }
        if c.is_ascii_control() {
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c.to_ascii_lowercase());
    }
    if pending_space {
        out.push(' ');
    }
    out
}

fn normalize_text(raw: &str) -> String {
    canonical_chars(raw).trim_matches(' ').to_string()
}

/// Applies the corpus normalization rules; `None` if fewer than three
/// characters remain.
pub fn normalize_query(raw: &str) -> Option<NormalizedQuery> {
    let text = normalize_text(raw);
    (text.chars().count() >= MIN_QUERY_CHARS).then_some(NormalizedQuery(text))
}

/// Normalizes a typed prefix. Same rules as [`normalize_query`], except that
/// a trailing space is kept (it is significant for completion) and there is
/// no length filter.
pub fn normalize_prefix(raw: &str) -> String {
    canonical_chars(raw).trim_start_matches(' ').to_string()
}

/// Drops a record when the previously kept record has the same user and the
/// same normalized query. Expects records sorted by `(user_id, timestamp)`.
pub fn dedup_adjacent(records: Vec<RawLogRecord>) -> Vec<RawLogRecord> {
    let mut out: Vec<RawLogRecord> = Vec::with_capacity(records.len());
    let mut last_norm = String::new();
    for r in records {
        let norm = normalize_text(&r.query);
        if let Some(prev) = out.last() {
            if prev.user_id == r.user_id && last_norm == norm {
                continue;
            }
        }
        last_norm = norm;
        out.push(r);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
    /// `test_seen[i]` is true when `test[i]` occurs verbatim in the
    /// (untruncated) training queries.
    pub test_seen: Vec<bool>,
}

/// Assigns records to train (`ts < train_end`), valid
/// (`train_end <= ts < valid_end`) and test (`ts >= valid_end`).
///
/// Records are expected to be normalized already. Training queries are
/// truncated to [`TRAIN_TRUNCATE_CHARS`]; seen flags are computed against the
/// untruncated training text.
pub fn split_by_time(
    records: &[RawLogRecord],
    train_end: i64,
    valid_end: i64,
) -> Result<CorpusSplit> {
    if train_end >= valid_end {
        return Err(QacError::InvalidBoundaries {
            train_end,
            valid_end,
        });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        ra.timestamp
            .cmp(&rb.timestamp)
            .then_with(|| ra.user_id.cmp(&rb.user_id))
            .then(a.cmp(&b))
    });

    let mut split = CorpusSplit::default();
    let mut train_full: HashSet<&str> = HashSet::new();
    for i in order {
        let r = &records[i];
        if r.timestamp < train_end {
            train_full.insert(&r.query);
            split
                .train
                .push(r.query.chars().take(TRAIN_TRUNCATE_CHARS).collect());
        } else if r.timestamp < valid_end {
            split.valid.push(r.query.clone());
        } else {
            split.test.push(r.query.clone());
        }
    }
    for (name, part) in [
        ("train", &split.train),
        ("valid", &split.valid),
        ("test", &split.test),
    ] {
        if part.is_empty() {
            return Err(QacError::EmptySplit(name));
        }
    }
    split.test_seen = split
        .test
        .iter()
        .map(|q| train_full.contains(q.as_str()))
        .collect();
    Ok(split)
}

/// Exact-membership flags of `queries` in `train`.
pub fn seen_flags<S: AsRef<str>>(queries: &[S], train: &[String]) -> Vec<bool> {
    let set: HashSet<&str> = train.iter().map(String::as_str).collect();
    queries.iter().map(|q| set.contains(q.as_ref())).collect()
}

/// Boundaries at the 80% and 90% timestamp quantiles.
pub fn default_boundaries(records: &[RawLogRecord]) -> Result<(i64, i64)> {
    if records.is_empty() {
        return Err(QacError::EmptyCorpus);
    }
    let mut ts: Vec<i64> = records.iter().map(|r| r.timestamp).collect();
    ts.sort_unstable();
    let at = |f: f64| ts[((ts.len() as f64 * f) as usize).min(ts.len() - 1)];
    Ok((at(0.8), at(0.9)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// `user_id \t query \t timestamp`, extra columns ignored.
    Tsv,
    /// One query per line; the line number serves as timestamp.
    Plain,
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tsv" => Ok(InputFormat::Tsv),
            "plain" | "txt" => Ok(InputFormat::Plain),
            _ => Err(format!(
                "unknown input format `{s}` (expected tsv or plain)"
            )),
        }
    }
}

pub fn read_records(path: &Path, format: InputFormat) -> Result<Vec<RawLogRecord>> {
    let file = fs::File::open(path).map_err(|e| QacError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| QacError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        match format {
            InputFormat::Plain => out.push(RawLogRecord::new("", i as i64, line)),
            InputFormat::Tsv => {
                if line.trim().is_empty() {
                    continue;
                }
                let mut cols = line.split('\t');
                let (Some(user), Some(query), Some(ts)) = (cols.next(), cols.next(), cols.next())
                else {
                    return Err(QacError::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        message: "expected `user_id<TAB>query<TAB>timestamp`".into(),
                    });
                };
                let timestamp = ts.trim().parse::<i64>().map_err(|e| QacError::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    message: format!("bad timestamp `{ts}`: {e}"),
                })?;
                out.push(RawLogRecord::new(user, timestamp, query));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub raw: usize,
    pub normalized: usize,
    pub deduplicated: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub test_seen: usize,
    pub test_unseen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub format: InputFormat,
    pub counts: SplitCounts,
    pub alphabet: Alphabet,
    pub train_end: i64,
    pub valid_end: i64,
    pub train_truncate_chars: usize,
    /// Seen flags are computed against untruncated training queries.
    pub seen_against: String,
}

/// Normalize, filter, merge adjacent duplicates and split.
pub fn ingest(
    raw: Vec<RawLogRecord>,
    format: InputFormat,
    boundaries: Option<(i64, i64)>,
) -> Result<(CorpusSplit, Manifest)> {
    let raw_count = raw.len();
    let mut records: Vec<RawLogRecord> = raw
        .into_iter()
        .filter_map(|r| {
            normalize_query(&r.query).map(|q| RawLogRecord {
                query: q.into_string(),
                ..r
            })
        })
        .collect();
    let normalized = records.len();
    records.sort_by(|a, b| {
        a.user_id
            .cmp(&b.user_id)
            .then(a.timestamp.cmp(&b.timestamp))
    });
    let records = dedup_adjacent(records);
    let (train_end, valid_end) = match boundaries {
        Some(b) => b,
        None => default_boundaries(&records)?,
    };
    let split = split_by_time(&records, train_end, valid_end)?;
    let seen = split.test_seen.iter().filter(|&&s| s).count();
    let manifest = Manifest {
        schema: 1,
        format,
        counts: SplitCounts {
            raw: raw_count,
            normalized,
            deduplicated: records.len(),
            train: split.train.len(),
            valid: split.valid.len(),
            test: split.test.len(),
            test_seen: seen,
            test_unseen: split.test.len() - seen,
        },
        alphabet: Alphabet::with_base(split.train.iter().map(String::as_str)),
        train_end,
        valid_end,
        train_truncate_chars: TRAIN_TRUNCATE_CHARS,
        seen_against: "untruncated".into(),
    };
    Ok((split, manifest))
}

fn write_lines<'a>(path: &Path, lines: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut buf = String::new();
    for l in lines {
        buf.push_str(l);
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| QacError::io(path, e))
}

pub fn write_split(dir: &Path, split: &CorpusSplit, manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| QacError::io(dir, e))?;
    write_lines(
        &dir.join(TRAIN_FILE),
        split.train.iter().map(String::as_str),
    )?;
    write_lines(
        &dir.join(VALID_FILE),
        split.valid.iter().map(String::as_str),
    )?;
    write_lines(&dir.join(TEST_FILE), split.test.iter().map(String::as_str))?;
    write_lines(
        &dir.join(TEST_SEEN_FILE),
        split.test_seen.iter().map(|&s| if s { "1" } else { "0" }),
    )?;
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, json + "\n").map_err(|e| QacError::io(&path, e))
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| QacError::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| QacError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_split(dir: &Path) -> Result<CorpusSplit> {
    let test = read_lines(&dir.join(TEST_FILE))?;
    let flags = read_lines(&dir.join(TEST_SEEN_FILE))?;
    if flags.len() != test.len() {
        return Err(QacError::Parse {
            path: dir.join(TEST_SEEN_FILE),
            line: flags.len().min(test.len()) + 1,
            message: "seen flags do not line up with test queries".into(),
        });
    }
    Ok(CorpusSplit {
        train: read_lines(&dir.join(TRAIN_FILE))?,
        valid: read_lines(&dir.join(VALID_FILE))?,
        test,
        test_seen: flags.iter().map(|f| f == "1").collect(),
    })
}

/// Writes raw text atomically enough for CLI use.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| QacError::io(path, e))?;
    f.write_all(bytes).map_err(|e| QacError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(s: &str) -> Option<String> {
        normalize_query(s).map(NormalizedQuery::into_string)
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(norm("abc").as_deref(), Some("abc"));
        assert_eq!(norm("  NEW   York  ").as_deref(), Some("new york"));
        // NFKC keeps a precomposed é; dropping it leaves "caf".
        assert_eq!(norm("Café").as_deref(), Some("caf"));
        assert_eq!(norm("Cafe\u{301}").as_deref(), Some("caf"));
        assert_eq!(norm("Cé"), None);
        // Compatibility forms fold to ASCII.
        assert_eq!(norm("ｆｕｌｌ\u{fb01}").as_deref(), Some("fullfi"));
        assert_eq!(norm("a\tb\n\nc").as_deref(), Some("a b c"));
        assert_eq!(norm("ab"), None);
    }

    #[test]
    fn prefix_keeps_trailing_space() {
        assert_eq!(normalize_prefix("  New  "), "new ");
        assert_eq!(normalize_prefix("RES"), "res");
    }

    #[test]
    fn dedup_examples() {
        let r = |u: &str, q: &str| RawLogRecord::new(u, 0, q);
        let out = dedup_adjacent(vec![r("u1", "a b"), r("u1", "A  b"), r("u1", "c")]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].query, "c");

        let input = vec![r("u1", "x"), r("u2", "x")];
        assert_eq!(dedup_adjacent(input.clone()), input);
        let input = vec![r("u1", "x"), r("u1", "y"), r("u1", "x")];
        assert_eq!(dedup_adjacent(input.clone()), input);
    }

    #[test]
    fn split_examples() {
        let recs = vec![
            RawLogRecord::new("u", 1, "alpha"),
            RawLogRecord::new("u", 2, "beta"),
        ];
        assert!(matches!(
            split_by_time(&recs, 10, 20),
            Err(QacError::EmptySplit(_))
        ));

        let long = "x".repeat(50);
        let recs = vec![
            RawLogRecord::new("u", 1, long.clone()),
            RawLogRecord::new("u", 2, "seen query"),
            RawLogRecord::new("u", 5, "valid one"),
            RawLogRecord::new("u", 9, "seen query"),
            RawLogRecord::new("u", 9, "fresh query"),
            RawLogRecord::new("u", 9, long.clone()),
        ];
        let s = split_by_time(&recs, 3, 6).unwrap();
        assert_eq!(s.train[0], "x".repeat(40));
        assert_eq!(s.valid, ["valid one"]);
        assert_eq!(s.test, ["seen query", "fresh query", long.as_str()]);
        // The 50-char query matches the untruncated training text.
        assert_eq!(s.test_seen, [true, false, true]);
        assert!(split_by_time(&recs, 6, 6).is_err());
    }
}
