#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

pub const BIN: &str = env!("CARGO_BIN_EXE_qac");

/// A small query log: two-word queries over a fixed word list, with a few
/// frequent heads.
pub fn toy_log() -> String {
    let words = [
        "abandon", "about", "abstract", "acme", "bank", "banner", "basket", "cab", "cable",
        "cabin", "dance", "data", "date", "easy", "east", "echo", "fable", "fabric", "face",
    ];
    let mut x: u64 = 12345;
    let mut next = move || {
        x = x
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (x >> 33) as usize
    };
    let mut out = String::new();
    for i in 0..600 {
        let a = words[next() % words.len()].min(words[next() % words.len()]);
        let b = words[next() % words.len()];
        out.push_str(&format!("u{}\t{a} {b}\t{}\n", i % 13, 1000 + i));
    }
    out
}

pub fn qac(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("QAC_CONFIG")
        .output()
        .unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub struct Fixture {
    _dir: tempfile::TempDir,
    pub root: PathBuf,
    pub corpus: PathBuf,
    pub models: PathBuf,
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Ingested corpus and a trained BPE model, built once per test binary
/// through the CLI.
pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let raw = root.join("raw.tsv");
        std::fs::write(&raw, toy_log()).unwrap();
        let corpus = root.join("corpus");
        let models = root.join("models");
        let o = qac(&["ingest", "--input", p(&raw), "--out", p(&corpus)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = qac(&[
            "--seed",
            "3",
            "train",
            "--corpus",
            p(&corpus),
            "--models-dir",
            p(&models),
            "--type",
            "bpe",
            "--vocab-size",
            "60",
            "--order",
            "3",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        Fixture {
            _dir: dir,
            root,
            corpus,
            models,
        }
    })
}

pub fn path(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}
