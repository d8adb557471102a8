//! Sliding-window splitter measured in characters.

pub const DEFAULT_CHUNK_CHARS: usize = 1200;
pub const DEFAULT_OVERLAP_CHARS: usize = 180;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkPolicy {
    pub max_chars: usize,
    pub overlap: usize,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        Self {
            max_chars: DEFAULT_CHUNK_CHARS,
            overlap: DEFAULT_OVERLAP_CHARS,
        }
    }
}

/// Character span `[start, end)` of one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

fn is_sentence_end(chars: &[char], p: usize) -> bool {
    matches!(chars[p - 1], '.' | '!' | '?') && (p == chars.len() || chars[p].is_whitespace())
}

impl ChunkPolicy {
    /// Window spans over `text`. Text within the budget is one span; longer
    /// text is cut into windows of `max_chars` overlapping by `overlap`, each
    /// cut pulled back to the nearest sentence end in the second half of
    /// the window when there is one.
    pub fn spans(&self, text: &str) -> Vec<Span> {
        let chars: Vec<char> = text.chars().collect();
        let len = chars.len();
        if len == 0 {
            return Vec::new();
        }
        if len <= self.max_chars {
            return vec![Span { start: 0, end: len }];
        }
        let max = self.max_chars.max(1);
        let overlap = self.overlap.min(max.saturating_sub(1));
        let mut spans = Vec::new();
        let mut start = 0;
        loop {
            let mut end = (start + max).min(len);
            if end < len {
                let floor = start + (max / 2).max(overlap + 1);
                if let Some(p) = (floor..end).rev().find(|&p| p > 0 && is_sentence_end(&chars, p)) {
                    end = p;
                }
            }
            spans.push(Span { start, end });
            if end >= len {
                break;
            }
            start = end - overlap;
        }
        spans
    }

    pub fn split(&self, text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        self.spans(text)
            .into_iter()
            .map(|s| chars[s.start..s.end].iter().collect::<String>())
            .filter(|s| !s.trim().is_empty())
            .collect()
    }
}
