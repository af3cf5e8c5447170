//! Token counting shared by every ratio computation in a run.
//!
//! Two profiles are supported:
//!
//! * `ByteEstimator`: `count = floor(bytes / bytes_per_token + 0.5)` over the
//!   UTF-8 encoding (round half up).
//! * `SubwordVocab`: greedy longest-match over a vocabulary file. At every byte
//!   position the longest vocabulary entry that is a prefix of the remaining
//!   text is consumed as one token. If no entry matches, the next Unicode scalar
//!   value is consumed as one token. There are no merge ranks; the procedure is
//!   fully determined by the set of entries.
//!
//! Vocabulary file format: UTF-8, one entry per line. Empty lines and lines
//! starting with `#` are ignored. Inside an entry the escapes `\\`, `\n`, `\t`,
//! `\r`, `\s` (space) and `\#` are recognised; any other backslash sequence is
//! an error.

use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BYTES_PER_TOKEN: f64 = 3.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerProfile {
    ByteEstimator {
        #[serde(default = "default_bytes_per_token")]
        bytes_per_token: f64,
    },
    SubwordVocab {
        vocab_source: PathBuf,
    },
}

fn default_bytes_per_token() -> f64 {
    DEFAULT_BYTES_PER_TOKEN
}

impl Default for TokenizerProfile {
    fn default() -> Self {
        TokenizerProfile::ByteEstimator {
            bytes_per_token: DEFAULT_BYTES_PER_TOKEN,
        }
    }
}

/// A loaded, immutable tokenizer. Cloning is cheap; every component of a run
/// should hold a clone of the same handle.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    profile: TokenizerProfile,
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    Bytes(f64),
    Vocab(Arc<Vocab>),
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            profile: TokenizerProfile::default(),
            inner: Inner::Bytes(DEFAULT_BYTES_PER_TOKEN),
        }
    }
}

impl Tokenizer {
    pub fn from_profile(profile: &TokenizerProfile) -> Result<Self> {
        let inner = match profile {
            TokenizerProfile::ByteEstimator { bytes_per_token } => {
                if !(bytes_per_token.is_finite() && *bytes_per_token > 0.0) {
                    return Err(Error::Profile(format!(
                        "bytes_per_token must be positive, got {bytes_per_token}"
                    )));
                }
                Inner::Bytes(*bytes_per_token)
            }
            TokenizerProfile::SubwordVocab { vocab_source } => {
                Inner::Vocab(Arc::new(Vocab::load(vocab_source)?))
            }
        };
        Ok(Self {
            profile: profile.clone(),
            inner,
        })
    }

    pub fn byte_estimator(bytes_per_token: f64) -> Result<Self> {
        Self::from_profile(&TokenizerProfile::ByteEstimator { bytes_per_token })
    }

    /// Builds a vocabulary tokenizer from in-memory entries.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let vocab = Vocab::from_entries(entries);
        if vocab.is_empty() {
            return Err(Error::Vocab {
                path: PathBuf::from("<memory>"),
                reason: "vocabulary has no entries".into(),
            });
        }
        Ok(Self {
            profile: TokenizerProfile::SubwordVocab {
                vocab_source: PathBuf::from("<memory>"),
            },
            inner: Inner::Vocab(Arc::new(vocab)),
        })
    }

    pub fn profile(&self) -> &TokenizerProfile {
        &self.profile
    }

    pub fn count(&self, text: &str) -> usize {
        match &self.inner {
            Inner::Bytes(bpt) => count_bytes(text.len(), *bpt),
            Inner::Vocab(vocab) => vocab.count(text),
        }
    }

    pub fn is_length_based(&self) -> bool {
        matches!(self.inner, Inner::Bytes(_))
    }

    /// Token count of a text of `len` bytes, when it can be derived from the
    /// length alone.
    pub fn count_for_len(&self, len: usize) -> Option<usize> {
        match &self.inner {
            Inner::Bytes(bpt) => Some(count_bytes(len, *bpt)),
            Inner::Vocab(_) => None,
        }
    }

    /// Byte spans of the tokens of `text`, in order. The spans tile the text
    /// and their number equals [`Tokenizer::count`], except that a non-empty
    /// text the byte estimator rounds down to zero tokens still gets one span.
    /// For the byte estimator the text is divided into near-equal pieces
    /// snapped forward to char boundaries, so a span can be empty when
    /// multi-byte characters cluster.
    pub fn spans(&self, text: &str) -> Vec<Range<usize>> {
        match &self.inner {
            Inner::Bytes(bpt) => {
                let n = count_bytes(text.len(), *bpt).max(usize::from(!text.is_empty()));
                let len = text.len();
                let mut out = Vec::with_capacity(n);
                let mut start = 0;
                for k in 1..=n {
                    let mut end = if k == n { len } else { k * len / n };
                    while !text.is_char_boundary(end) {
                        end += 1;
                    }
                    let end = end.max(start);
                    out.push(start..end);
                    start = end;
                }
                out
            }
            Inner::Vocab(vocab) => vocab.spans(text),
        }
    }
}

fn count_bytes(len: usize, bytes_per_token: f64) -> usize {
    (len as f64 / bytes_per_token + 0.5).floor() as usize
}

/// Byte trie over vocabulary entries.
#[derive(Debug, Default)]
struct Vocab {
    nodes: Vec<Node>,
    entries: usize,
}

#[derive(Debug, Default)]
struct Node {
    children: Vec<(u8, u32)>,
    terminal: bool,
}

impl Vocab {
    fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Vocab {
            path: path.to_owned(),
            reason: "not valid UTF-8".into(),
        })?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let entry = unescape(line).map_err(|reason| Error::Vocab {
                path: path.to_owned(),
                reason: format!("line {}: {reason}", i + 1),
            })?;
            entries.push(entry);
        }
        let vocab = Self::from_entries(entries);
        if vocab.is_empty() {
            return Err(Error::Vocab {
                path: path.to_owned(),
                reason: "vocabulary has no entries".into(),
            });
        }
        Ok(vocab)
    }

    fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocab {
            nodes: vec![Node::default()],
            entries: 0,
        };
        for entry in entries {
            vocab.insert(entry.as_ref().as_bytes());
        }
        vocab
    }

    fn is_empty(&self) -> bool {
        self.entries == 0
    }

    fn insert(&mut self, bytes: &[u8]) {
        if bytes.is_empty() {
            return;
        }
        let mut node = 0usize;
        for &b in bytes {
            node = match self.nodes[node].children.iter().find(|(k, _)| *k == b) {
                Some(&(_, child)) => child as usize,
                None => {
                    let child = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[node].children.push((b, child as u32));
                    child
                }
            };
        }
        if !self.nodes[node].terminal {
            self.nodes[node].terminal = true;
            self.entries += 1;
        }
    }

    /// Length in bytes of the longest entry that prefixes `rest`.
    fn longest_match(&self, rest: &[u8]) -> usize {
        let mut node = 0usize;
        let mut best = 0;
        for (i, &b) in rest.iter().enumerate() {
            match self.nodes[node].children.iter().find(|(k, _)| *k == b) {
                Some(&(_, child)) => {
                    node = child as usize;
                    if self.nodes[node].terminal {
                        best = i + 1;
                    }
                }
                None => break,
            }
        }
        best
    }

    fn next_token_len(&self, text: &str, pos: usize) -> usize {
        match self.longest_match(&text.as_bytes()[pos..]) {
            0 => text[pos..].chars().next().map_or(1, char::len_utf8),
            n => n,
        }
    }

    fn count(&self, text: &str) -> usize {
        let mut pos = 0;
        let mut n = 0;
        while pos < text.len() {
            pos += self.next_token_len(text, pos);
            n += 1;
        }
        n
    }

    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut pos = 0;
        let mut out = Vec::new();
        while pos < text.len() {
            let end = pos + self.next_token_len(text, pos);
            out.push(pos..end);
            pos = end;
        }
        out
    }
}

fn unescape(line: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('s') => out.push(' '),
            Some('#') => out.push('#'),
            Some(other) => return Err(format!("unknown escape \\{other}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}
