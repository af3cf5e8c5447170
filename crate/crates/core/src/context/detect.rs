use std::ops::Range;

/// Finds top-level definitions in source text.
pub trait BoundaryDetector: Send + Sync {
    /// Top-level definitions in source order. Spans are byte ranges that do
    /// not overlap.
    fn definitions(&self, text: &str) -> Vec<Definition>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Definition {
    /// Start of the first decorator line, or of the signature line.
    pub start: usize,
    /// Start of the signature line.
    pub signature: usize,
    /// End of the body, including trailing blank lines.
    pub end: usize,
    /// The body contains indented definitions.
    pub has_nested: bool,
}

impl Definition {
    pub fn span(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Line-based detector.
///
/// A definition starts at a line with no leading whitespace that begins with
/// one of `keywords` followed by whitespace, `(` or end of line. Contiguous
/// zero-indent lines starting with `decorator_prefix` directly above it are
/// part of the definition. The body runs over following lines that are blank,
/// indented, or start with a closing bracket; trailing blank lines stay with
/// the definition.
#[derive(Debug, Clone)]
pub struct LineDetector {
    pub keywords: Vec<String>,
    pub decorator_prefix: String,
}

impl Default for LineDetector {
    fn default() -> Self {
        Self::python()
    }
}

impl LineDetector {
    pub fn python() -> Self {
        Self {
            keywords: vec!["def".into(), "async def".into(), "class".into()],
            decorator_prefix: "@".into(),
        }
    }

    pub fn new<I, S>(keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            keywords: keywords.into_iter().map(Into::into).collect(),
            decorator_prefix: "@".into(),
        }
    }

    fn is_signature(&self, line: &str) -> bool {
        self.keywords.iter().any(|kw| {
            line.strip_prefix(kw.as_str()).is_some_and(|rest| {
                rest.is_empty()
                    || rest.starts_with('(')
                    || rest.starts_with(char::is_whitespace)
            })
        })
    }

    fn is_nested_signature(&self, line: &str) -> bool {
        let trimmed = line.trim_start();
        trimmed.len() != line.len() && self.is_signature(trimmed)
    }

    fn is_decorator(&self, line: &str) -> bool {
        !self.decorator_prefix.is_empty() && line.starts_with(self.decorator_prefix.as_str())
    }
}

#[derive(Debug)]
struct Line<'a> {
    start: usize,
    text: &'a str,
}

impl Line<'_> {
    fn content(&self) -> &str {
        self.text.trim_end_matches(['\n', '\r'])
    }

    fn is_blank(&self) -> bool {
        self.content().trim().is_empty()
    }

    fn is_top_level(&self) -> bool {
        !self.is_blank() && !self.content().starts_with(char::is_whitespace)
    }
}

fn lines(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for piece in text.split_inclusive('\n') {
        out.push(Line { start, text: piece });
        start += piece.len();
    }
    out
}

impl BoundaryDetector for LineDetector {
    fn definitions(&self, text: &str) -> Vec<Definition> {
        let lines = lines(text);
        let mut defs = Vec::new();
        let mut i = 0;
        while i < lines.len() {
            if !(lines[i].is_top_level() && self.is_signature(lines[i].content())) {
                i += 1;
                continue;
            }
            let sig = i;
            let mut first = sig;
            while first > 0
                && lines[first - 1].is_top_level()
                && self.is_decorator(lines[first - 1].content())
            {
                first -= 1;
            }
            // Body: everything up to the next top-level line that is not a
            // closing bracket.
            let mut j = sig + 1;
            let mut has_nested = false;
            while j < lines.len() {
                let line = &lines[j];
                if line.is_top_level() && !line.content().starts_with(['}', ')', ']']) {
                    break;
                }
                if self.is_nested_signature(line.content()) {
                    has_nested = true;
                }
                j += 1;
            }
            let end = lines.get(j).map_or(text.len(), |l| l.start);
            defs.push(Definition {
                start: lines[first].start,
                signature: lines[sig].start,
                end,
                has_nested,
            });
            i = j;
        }
        defs
    }
}
