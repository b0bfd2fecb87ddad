//! Word-level tokenizer with a character fallback.
//!
//! The vocabulary holds, in id order: four special tokens, single
//! characters that may start a word, `##`-prefixed continuation characters,
//! then whole words by descending frequency (ties broken lexically). A word
//! missing from the vocabulary is spelled out as its first character
//! followed by continuation characters; any piece still missing maps to
//! the unknown id.
//!
//! File format (UTF-8, one entry per line):
//!
//! ```text
//! triage-tokenizer 1
//! vocab_size=<n> pad=<id> unk=<id> start=<id> sep=<id>
//! <token with id 0>
//! <token with id 1>
//! ...
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{clean_text, pre_tokens, TokenCount};
use crate::corpus::Instance;
use crate::error::{Error, Result};

pub const TOKENIZER_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "triage-tokenizer";
const CONTINUATION: &str = "##";

const PAD: &str = "[PAD]";
const UNK: &str = "[UNK]";
const START: &str = "[START]";
const SEP: &str = "[SEP]";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: u32,
    pub unk: u32,
    pub start: u32,
    pub sep: u32,
}

impl SpecialIds {
    pub const COUNT: usize = 4;

    pub fn contains(&self, id: u32) -> bool {
        id == self.pad || id == self.unk || id == self.start || id == self.sep
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    special: SpecialIds,
}

/// Trains on the cleaned text of every document in `instances`.
pub fn train_tokenizer(instances: &[Instance], vocab_size: usize) -> Result<Tokenizer> {
    let texts: Vec<String> = instances
        .iter()
        .flat_map(|i| &i.documents)
        .map(|d| clean_text(&d.text))
        .collect();
    Tokenizer::train(texts.iter().map(String::as_str), vocab_size)
}

impl Tokenizer {
    pub fn train<'a>(texts: impl IntoIterator<Item = &'a str>, vocab_size: usize) -> Result<Self> {
        let min = SpecialIds::COUNT + 26;
        if vocab_size < min {
            return Err(Error::arg(format!("vocab_size must be at least {min}, got {vocab_size}")));
        }
        let mut words: HashMap<&str, u64> = HashMap::new();
        let mut any = false;
        for text in texts {
            for tok in pre_tokens(text) {
                any = true;
                *words.entry(tok.text).or_default() += 1;
            }
        }
        if !any {
            return Err(Error::arg("cannot train a tokenizer on an empty corpus"));
        }

        let mut initial: BTreeMap<char, u64> = BTreeMap::new();
        let mut continuation: BTreeMap<char, u64> = BTreeMap::new();
        for (w, &n) in &words {
            let mut chars = w.chars();
            if let Some(c) = chars.next() {
                *initial.entry(c).or_default() += n;
            }
            for c in chars {
                *continuation.entry(c).or_default() += n;
            }
        }

        let mut tokens: Vec<String> = [PAD, UNK, START, SEP].iter().map(|s| s.to_string()).collect();
        tokens.extend(by_frequency(initial).into_iter().map(|c| c.to_string()));
        tokens.extend(by_frequency(continuation).into_iter().map(|c| format!("{CONTINUATION}{c}")));
        let mut ranked: Vec<(&str, u64)> = words.into_iter().filter(|(w, _)| w.chars().count() > 1).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        tokens.extend(ranked.into_iter().map(|(w, _)| w.to_string()));
        tokens.truncate(vocab_size);

        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate token '{t}'")));
            }
        }
        let id = |s: &str| index.get(s).copied().ok_or_else(|| Error::Format(format!("missing special token {s}")));
        let special = SpecialIds { pad: id(PAD)?, unk: id(UNK)?, start: id(START)?, sep: id(SEP)? };
        Ok(Self { tokens, index, special })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn special(&self) -> SpecialIds {
        self.special
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Words in vocabulary order (most frequent first).
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens
            .iter()
            .skip(SpecialIds::COUNT)
            .filter(|t| t.chars().count() > 1 && !t.starts_with(CONTINUATION))
            .map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_with_offsets(text).into_iter().map(|(id, _, _)| id).collect()
    }

    /// Encodes already-cleaned text. Each id carries the char range of the
    /// source text it came from.
    pub fn encode_with_offsets(&self, text: &str) -> Vec<(u32, usize, usize)> {
        let mut out = Vec::new();
        for tok in pre_tokens(text) {
            if let Some(&id) = self.index.get(tok.text) {
                out.push((id, tok.start, tok.end));
                continue;
            }
            let mut buf = String::new();
            for (i, c) in tok.text.chars().enumerate() {
                buf.clear();
                if i > 0 {
                    buf.push_str(CONTINUATION);
                }
                buf.push(c);
                let id = self.index.get(&buf).copied().unwrap_or(self.special.unk);
                out.push((id, tok.start + i, tok.start + i + 1));
            }
        }
        out
    }

    /// Joins tokens with single spaces, gluing continuation pieces to their
    /// word. Special tokens are skipped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if self.special.contains(id) {
                continue;
            }
            let Some(tok) = self.token(id) else { continue };
            match tok.strip_prefix(CONTINUATION) {
                Some(rest) if !rest.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        out
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        let sp = self.special;
        writeln!(s, "{MAGIC} {TOKENIZER_FORMAT_VERSION}").unwrap();
        writeln!(
            s,
            "vocab_size={} pad={} unk={} start={} sep={}",
            self.tokens.len(),
            sp.pad,
            sp.unk,
            sp.start,
            sp.sep
        )
        .unwrap();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_file_string(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let magic = lines.next().ok_or_else(|| Error::Format("empty tokenizer file".into()))?;
        let version = magic
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Format("not a tokenizer file".into()))?;
        if version != TOKENIZER_FORMAT_VERSION.to_string() {
            return Err(Error::Format(format!("unsupported tokenizer version {version}")));
        }
        let header = lines.next().ok_or_else(|| Error::Format("missing tokenizer header".into()))?;
        let mut fields = HashMap::new();
        for kv in header.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Format(format!("bad header field '{kv}'")))?;
            let v: usize = v.parse().map_err(|_| Error::Format(format!("bad header value '{kv}'")))?;
            fields.insert(k, v);
        }
        let tokens: Vec<String> = lines.map(str::to_string).collect();
        if fields.get("vocab_size") != Some(&tokens.len()) {
            return Err(Error::Format("vocab_size does not match token count".into()));
        }
        let tok = Self::from_tokens(tokens)?;
        let sp = tok.special;
        for (k, v) in [("pad", sp.pad), ("unk", sp.unk), ("start", sp.start), ("sep", sp.sep)] {
            if fields.get(k) != Some(&(v as usize)) {
                return Err(Error::Format(format!("header id for {k} disagrees with vocabulary")));
            }
        }
        Ok(tok)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file_string(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized tokenizer, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

impl TokenCount for Tokenizer {
    fn count_tokens(&self, text: &str) -> usize {
        self.encode_with_offsets(&clean_text(text)).len()
    }
}

fn by_frequency(counts: BTreeMap<char, u64>) -> Vec<char> {
    let mut v: Vec<(char, u64)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(c, _)| c).collect()
}
