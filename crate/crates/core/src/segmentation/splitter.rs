//! Rule-based paragraph, sentence and inline list-item splitting.
//!
//! A sentence ends at `.`, `!` or `?` (plus trailing closing quotes or
//! brackets) when followed by whitespace and an upper-case letter, a digit or
//! an opening quote/bracket. A period does not end a sentence after a known
//! abbreviation, a single letter, or a bare enumerator such as `1.` or `iv.`.
//!
//! Inside a sentence, a new span starts before an inline enumerator at token
//! start: `(a)`, `(iv)`, `(3)`, `a)`, `iv)`, `3)` or `3.`.

use crate::corpus::SpanRecord;

const ABBREVIATIONS: &[&str] = &[
    "approx", "art", "cf", "cl", "co", "corp", "dept", "dr", "e.g", "etc", "fig", "i.e", "inc", "jr", "ltd", "mr",
    "mrs", "ms", "no", "nos", "p", "para", "pp", "prof", "sec", "sr", "st", "u.k", "u.s", "v", "vs",
];

/// Words after which a numbered token is a reference, not a list item.
const REFERENCE_WORDS: &[&str] = &[
    "article", "articles", "clause", "clauses", "exhibit", "item", "no", "paragraph", "paragraphs", "schedule",
    "section", "sections",
];

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

fn is_roman(word: &str) -> bool {
    // Numerals up to 39, which covers every enumerator seen in practice.
    let w = word.to_ascii_lowercase();
    if w.is_empty() || !w.chars().all(|c| matches!(c, 'i' | 'v' | 'x')) {
        return false;
    }
    let tens = w.chars().take_while(|&c| c == 'x').count();
    let rest = &w[tens..];
    tens <= 3 && matches!(rest, "" | "i" | "ii" | "iii" | "iv" | "v" | "vi" | "vii" | "viii" | "ix")
}

fn is_label(word: &str) -> bool {
    let single_letter = word.chars().count() == 1 && word.chars().all(|c| c.is_ascii_alphabetic());
    let number = !word.is_empty() && word.len() <= 3 && word.chars().all(|c| c.is_ascii_digit());
    single_letter || number || is_roman(word)
}

/// Length in chars of an enumerator starting at `chars[at]`, if any. The
/// enumerator must be followed by whitespace or the end of `chars`.
fn enumerator_len(chars: &[char], at: usize) -> Option<usize> {
    let end_ok = |i: usize| i >= chars.len() || chars[i].is_whitespace();
    let word_end = |from: usize| {
        let mut i = from;
        while i < chars.len() && chars[i].is_ascii_alphanumeric() {
            i += 1;
        }
        i
    };
    if chars.get(at) == Some(&'(') {
        let close = word_end(at + 1);
        let label: String = chars[at + 1..close].iter().collect();
        if chars.get(close) == Some(&')') && is_label(&label) && end_ok(close + 1) {
            return Some(close + 1 - at);
        }
        return None;
    }
    let close = word_end(at);
    let label: String = chars[at..close].iter().collect();
    if !is_label(&label) {
        return None;
    }
    match chars.get(close) {
        Some(')') if end_ok(close + 1) => Some(close + 1 - at),
        Some('.') if label.chars().all(|c| c.is_ascii_digit()) && end_ok(close + 1) => Some(close + 1 - at),
        _ => None,
    }
}

/// Lowercased word ending right before `end` (exclusive), without leading
/// brackets or quotes.
fn word_before(chars: &[char], end: usize) -> String {
    let mut start = end;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    chars[start..end]
        .iter()
        .skip_while(|c| is_opening(**c))
        .collect::<String>()
        .to_lowercase()
}

/// Char offsets at which a new paragraph starts: the first non-blank char
/// after a line break followed by a blank line.
pub fn paragraph_breaks(text: &str) -> Vec<usize> {
    let chars: Vec<char> = text.chars().collect();
    let mut breaks = Vec::new();
    let mut newlines = 0;
    for (i, &c) in chars.iter().enumerate() {
        if c == '\n' {
            newlines += 1;
        } else if !c.is_whitespace() {
            if newlines >= 2 {
                breaks.push(i);
            }
            newlines = 0;
        }
    }
    breaks
}

fn sentence_ends(chars: &[char], start: usize, end: usize) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut i = start;
    while i < end {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < end && is_closing(chars[j]) {
                j += 1;
            }
            let mut k = j;
            while k < end && chars[k].is_whitespace() {
                k += 1;
            }
            let followed = k > j && k < end && {
                let next = chars[k];
                next.is_uppercase() || next.is_ascii_digit() || is_opening(next)
            };
            if followed && !(c == '.' && protected_period(chars, i)) {
                ends.push(j);
                i = k;
                continue;
            }
        }
        i += 1;
    }
    ends
}

fn protected_period(chars: &[char], dot: usize) -> bool {
    let word = word_before(chars, dot);
    ABBREVIATIONS.contains(&word.as_str()) || is_label(&word) || word.contains('.')
}

fn list_item_starts(chars: &[char], start: usize, end: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    for at in start + 1..end {
        if !chars[at - 1].is_whitespace() || chars[at].is_whitespace() {
            continue;
        }
        if enumerator_len(&chars[..end], at).is_none() {
            continue;
        }
        let mut prev_end = at;
        while prev_end > start && chars[prev_end - 1].is_whitespace() {
            prev_end -= 1;
        }
        if prev_end == start {
            continue;
        }
        let prev = word_before(chars, prev_end);
        let prev = prev.trim_end_matches(|c: char| !c.is_alphanumeric());
        if REFERENCE_WORDS.contains(&prev) && !chars[at].eq(&'(') {
            continue;
        }
        starts.push(at);
    }
    starts
}

fn push_trimmed(chars: &[char], start: usize, end: usize, out: &mut Vec<SpanRecord>) {
    let mut s = start;
    let mut e = end;
    while s < e && chars[s].is_whitespace() {
        s += 1;
    }
    while e > s && chars[e - 1].is_whitespace() {
        e -= 1;
    }
    if s < e {
        out.push(SpanRecord::new(s, e));
    }
}

/// Split `text` into spans (sentences or inline list items).
///
/// `paragraph_breaks` are char offsets where a paragraph starts; spans never
/// cross them. Offsets outside the text are ignored. The output is ordered,
/// non-overlapping and covers every non-whitespace character.
pub fn split_spans(text: &str, paragraph_breaks: &[usize]) -> Vec<SpanRecord> {
    let chars: Vec<char> = text.chars().collect();
    let mut cuts: Vec<usize> = paragraph_breaks.iter().copied().filter(|&b| b > 0 && b < chars.len()).collect();
    cuts.sort_unstable();
    cuts.dedup();
    cuts.insert(0, 0);
    cuts.push(chars.len());

    let mut spans = Vec::new();
    for para in cuts.windows(2) {
        let (p_start, p_end) = (para[0], para[1]);
        let mut sentence_start = p_start;
        let mut bounds = sentence_ends(&chars, p_start, p_end);
        bounds.push(p_end);
        for sentence_end in bounds {
            let mut item_start = sentence_start;
            for at in list_item_starts(&chars, sentence_start, sentence_end) {
                push_trimmed(&chars, item_start, at, &mut spans);
                item_start = at;
            }
            push_trimmed(&chars, item_start, sentence_end, &mut spans);
            sentence_start = sentence_end;
        }
    }
    spans
}

/// Convenience: blank-line paragraphs, then [`split_spans`].
pub fn split_text(text: &str) -> Vec<SpanRecord> {
    split_spans(text, &paragraph_breaks(text))
}
