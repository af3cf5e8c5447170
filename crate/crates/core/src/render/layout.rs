use std::ops::Range;

use serde::{Deserialize, Serialize};

/// One visual row produced by wrapping a source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub line: usize,
    pub index: usize,
    pub text: String,
}

impl Segment {
    pub fn key(&self) -> SegmentRef {
        SegmentRef {
            line: self.line,
            segment: self.index,
        }
    }
}

/// (source line index, wrap segment index)
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentRef {
    pub line: usize,
    pub segment: usize,
}

/// Splits `text` into lines (`\n` or `\r\n`; a trailing newline does not start
/// a new line), replaces every tab with `tab_width` spaces, and hard-wraps each
/// line every `chars_per_line` characters. Empty lines yield one empty segment.
pub fn wrap_lines(text: &str, chars_per_line: usize, tab_width: usize) -> Vec<Segment> {
    assert!(chars_per_line >= 1, "chars_per_line must be at least 1");
    let tab = " ".repeat(tab_width);
    let mut out = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let expanded = line.replace('\t', &tab);
        if expanded.is_empty() {
            out.push(Segment {
                line: line_idx,
                index: 0,
                text: String::new(),
            });
            continue;
        }
        let mut seg = String::new();
        let mut n = 0;
        let mut index = 0;
        for c in expanded.chars() {
            seg.push(c);
            n += 1;
            if n == chars_per_line {
                out.push(Segment {
                    line: line_idx,
                    index,
                    text: std::mem::take(&mut seg),
                });
                index += 1;
                n = 0;
            }
        }
        if n > 0 {
            out.push(Segment {
                line: line_idx,
                index,
                text: seg,
            });
        }
    }
    out
}

/// Character length of every line after tab expansion.
pub(crate) fn expanded_line_lengths(text: &str, tab_width: usize) -> Vec<usize> {
    text.lines()
        .map(|l| {
            l.chars()
                .map(|c| if c == '\t' { tab_width } else { 1 })
                .sum()
        })
        .collect()
}

/// Number of segments [`wrap_lines`] would produce for these line lengths.
pub(crate) fn segment_count(line_lengths: &[usize], chars_per_line: usize) -> usize {
    line_lengths
        .iter()
        .map(|&len| len.div_ceil(chars_per_line).max(1))
        .sum()
}

/// Segment assignment for one page: one range of segment indices per column,
/// filled left to right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PagePlan {
    pub columns: Vec<Range<usize>>,
}

impl PagePlan {
    pub fn segments(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns.iter().flat_map(|r| r.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pagination {
    pub pages: Vec<PagePlan>,
    /// No segments were supplied.
    pub empty: bool,
}

/// Column-major fill: each page takes `columns * rows_per_column` segments,
/// the left column top to bottom first.
pub fn paginate(segment_count: usize, rows_per_column: usize, columns: usize) -> Pagination {
    assert!(rows_per_column >= 1 && columns >= 1);
    let capacity = rows_per_column * columns;
    let mut pages = Vec::with_capacity(segment_count.div_ceil(capacity));
    let mut start = 0;
    while start < segment_count {
        let mut cols = Vec::with_capacity(columns);
        for c in 0..columns {
            let lo = start + c * rows_per_column;
            if lo >= segment_count {
                break;
            }
            cols.push(lo..(lo + rows_per_column).min(segment_count));
        }
        pages.push(PagePlan { columns: cols });
        start += capacity;
    }
    Pagination {
        pages,
        empty: segment_count == 0,
    }
}

pub(crate) fn page_count(segment_count: usize, rows_per_column: usize, columns: usize) -> usize {
    segment_count.div_ceil(rows_per_column * columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_line_wraps_at_limit() {
        let segs = wrap_lines(&"x".repeat(250), 100, 4);
        let lens: Vec<_> = segs.iter().map(|s| s.text.len()).collect();
        assert_eq!(lens, [100, 100, 50]);
        assert!(segs.iter().all(|s| s.line == 0));
        assert_eq!(segs.iter().map(|s| s.index).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn empty_lines_are_kept() {
        let segs = wrap_lines("a\n\nb", 80, 4);
        let texts: Vec<_> = segs.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["a", "", "b"]);
    }

    #[test]
    fn tabs_expand_before_wrapping() {
        let segs = wrap_lines("x\ty", 80, 4);
        assert_eq!(segs[0].text, "x    y");
        let segs = wrap_lines("x\ty", 3, 4);
        let texts: Vec<_> = segs.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["x  ", "  y"]);
    }

    #[test]
    fn wraps_by_chars_not_bytes() {
        let segs = wrap_lines("ééé", 2, 4);
        let texts: Vec<_> = segs.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["éé", "é"]);
    }

    #[test]
    fn segment_count_matches_wrap() {
        let text = "a\tb\n\n".to_string() + &"z".repeat(301) + "\n\t\t\n";
        for cpl in [1, 2, 7, 100, 1000] {
            let lens = expanded_line_lengths(&text, 4);
            assert_eq!(segment_count(&lens, cpl), wrap_lines(&text, cpl, 4).len());
        }
    }

    #[test]
    fn paginate_fills_columns_then_pages() {
        let p = paginate(60, 40, 2);
        assert_eq!(p.pages.len(), 1);
        assert_eq!(p.pages[0].columns, vec![0..40, 40..60]);

        let p = paginate(81, 40, 2);
        assert_eq!(p.pages.len(), 2);
        assert_eq!(p.pages[1].columns, vec![80..81]);

        let p = paginate(0, 40, 2);
        assert!(p.pages.is_empty());
        assert!(p.empty);
        assert_eq!(page_count(81, 40, 2), 2);
    }
}
