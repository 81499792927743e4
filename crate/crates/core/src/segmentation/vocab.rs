//! Subword vocabulary and greedy longest-match tokenization.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::{SegmentationError, Token};

pub const CLS: u32 = 0;
pub const SEP: u32 = 1;
pub const SPAN: u32 = 2;
pub const PAD: u32 = 3;
pub const UNK: u32 = 4;
const RESERVED: [&str; 5] = ["[CLS]", "[SEP]", "[SPAN]", "[PAD]", "[UNK]"];
pub const CONTINUATION: &str = "##";

fn hypothesis_symbol(h: usize) -> String {
    format!("[HYP{h}]")
}

/// Subword strings to ids. Ids `0..5` are the fixed special tokens, ids
/// `5..5+H` the per-hypothesis symbols; subwords follow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
    num_hypotheses: usize,
    max_piece_chars: usize,
}

impl Vocabulary {
    /// Vocabulary with the reserved header followed by `pieces` (duplicates
    /// and reserved strings are skipped).
    pub fn new(num_hypotheses: usize, pieces: impl IntoIterator<Item = String>) -> Self {
        let mut vocab = Vocabulary {
            pieces: Vec::new(),
            index: HashMap::new(),
            num_hypotheses,
            max_piece_chars: 0,
        };
        for special in RESERVED {
            vocab.push(special.to_string());
        }
        for h in 1..=num_hypotheses {
            vocab.push(hypothesis_symbol(h));
        }
        vocab.max_piece_chars = 0;
        for piece in pieces {
            vocab.push(piece);
        }
        vocab
    }

    fn push(&mut self, piece: String) {
        if self.index.contains_key(&piece) {
            return;
        }
        let chars = piece.strip_prefix(CONTINUATION).unwrap_or(&piece).chars().count();
        self.max_piece_chars = self.max_piece_chars.max(chars);
        self.index.insert(piece.clone(), self.pieces.len() as u32);
        self.pieces.push(piece);
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn num_hypotheses(&self) -> usize {
        self.num_hypotheses
    }

    pub fn num_reserved(&self) -> usize {
        RESERVED.len() + self.num_hypotheses
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    /// Reserved symbol id standing in for hypothesis `hypothesis_id` (1-based).
    pub fn hypothesis_symbol(&self, hypothesis_id: u32) -> Option<u32> {
        let h = hypothesis_id as usize;
        (1..=self.num_hypotheses)
            .contains(&h)
            .then(|| (RESERVED.len() + h - 1) as u32)
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < self.num_reserved()
    }

    /// One piece per line; line number is the id.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for piece in &self.pieces {
            out.push_str(piece);
            out.push('\n');
        }
        out
    }

    pub fn parse(contents: &str) -> Result<Self, SegmentationError> {
        let lines: Vec<&str> = contents.lines().collect();
        for (i, special) in RESERVED.iter().enumerate() {
            if lines.get(i) != Some(special) {
                return Err(SegmentationError::VocabFormat(format!(
                    "line {} must be {special}, found {:?}",
                    i + 1,
                    lines.get(i)
                )));
            }
        }
        let mut h = 0;
        while lines.get(RESERVED.len() + h).map(|l| *l == hypothesis_symbol(h + 1)) == Some(true) {
            h += 1;
        }
        let rest = &lines[RESERVED.len() + h..];
        let mut seen = HashSet::new();
        for (i, line) in rest.iter().enumerate() {
            if line.is_empty() || !seen.insert(*line) {
                return Err(SegmentationError::VocabFormat(format!(
                    "line {} is empty or duplicated",
                    RESERVED.len() + h + i + 1
                )));
            }
        }
        Ok(Vocabulary::new(h, rest.iter().map(|s| s.to_string())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SegmentationError> {
        let path = path.as_ref();
        let contents = fs::read_to_string(path)
            .map_err(|e| SegmentationError::VocabFormat(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&contents)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.to_file_string())
    }

    /// Tokenize `text`; offsets are char offsets into `text` plus `base`.
    pub fn tokenize_at(&self, text: &str, base: usize) -> Vec<Token> {
        let mut tokens = Vec::new();
        for (word_start, word) in pre_tokenize(text) {
            self.word_pieces(&word, base + word_start, &mut tokens);
        }
        tokens
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        self.tokenize_at(text, 0)
    }

    fn word_pieces(&self, word: &[char], offset: usize, out: &mut Vec<Token>) {
        let mut pos = 0;
        let mut candidate = String::new();
        while pos < word.len() {
            let max_end = word.len().min(pos + self.max_piece_chars.max(1));
            let mut matched = None;
            for end in (pos + 1..=max_end).rev() {
                candidate.clear();
                if pos > 0 {
                    candidate.push_str(CONTINUATION);
                }
                candidate.extend(&word[pos..end]);
                if let Some(id) = self.id(&candidate) {
                    matched = Some((end, id));
                    break;
                }
            }
            let (end, id, surface) = match matched {
                Some((end, id)) => (end, id, candidate.clone()),
                None => (pos + 1, UNK, RESERVED[UNK as usize].to_string()),
            };
            out.push(Token {
                surface,
                id,
                char_start: offset + pos,
                char_end: offset + end,
            });
            pos = end;
        }
    }
}

/// Lowercase and split into words: maximal alphanumeric runs, and every other
/// non-whitespace char on its own. Returns (char offset, lowercased chars).
///
/// Lowercasing is char-to-char so offsets stay aligned; chars whose lowercase
/// form is longer than one char are kept as-is.
pub fn pre_tokenize(text: &str) -> Vec<(usize, Vec<char>)> {
    let mut words = Vec::new();
    let mut current: Option<(usize, Vec<char>)> = None;
    for (i, c) in text.chars().enumerate() {
        let lower = {
            let mut it = c.to_lowercase();
            match (it.next(), it.next()) {
                (Some(l), None) => l,
                _ => c,
            }
        };
        if c.is_alphanumeric() {
            current.get_or_insert_with(|| (i, Vec::new())).1.push(lower);
            continue;
        }
        if let Some(word) = current.take() {
            words.push(word);
        }
        if !c.is_whitespace() {
            words.push((i, vec![lower]));
        }
    }
    words.extend(current);
    words
}

#[derive(Debug, Clone)]
pub struct VocabBuilder {
    pub target_size: usize,
    pub min_pair_frequency: u64,
}

impl Default for VocabBuilder {
    fn default() -> Self {
        VocabBuilder {
            target_size: 8192,
            min_pair_frequency: 2,
        }
    }
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Highest count first, then lexicographically smallest pair.
        self.count
            .cmp(&other.count)
            .then_with(|| Reverse((&self.left, &self.right)).cmp(&Reverse((&other.left, &other.right))))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl VocabBuilder {
    /// Learn subwords by repeatedly merging the most frequent adjacent pair
    /// until the vocabulary (including reserved ids) reaches `target_size` or
    /// no pair occurs at least `min_pair_frequency` times. Every single
    /// character seen is kept, so greedy matching never fails on training text.
    pub fn build<'a>(&self, texts: impl IntoIterator<Item = &'a str>, num_hypotheses: usize) -> Vocabulary {
        let mut word_counts: HashMap<Vec<char>, u64> = HashMap::new();
        for text in texts {
            for (_, word) in pre_tokenize(text) {
                *word_counts.entry(word).or_insert(0) += 1;
            }
        }
        let mut words: Vec<(Vec<char>, u64)> = word_counts.into_iter().collect();
        words.sort_unstable();

        let mut symbols: Vec<String> = Vec::new();
        let mut symbol_ids: HashMap<String, u32> = HashMap::new();
        let mut intern = |s: String, symbols: &mut Vec<String>| -> u32 {
            *symbol_ids.entry(s.clone()).or_insert_with(|| {
                symbols.push(s);
                symbols.len() as u32 - 1
            })
        };

        let mut segmented: Vec<Vec<u32>> = Vec::with_capacity(words.len());
        for (word, _) in &words {
            let ids = word
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let piece = if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") };
                    intern(piece, &mut symbols)
                })
                .collect();
            segmented.push(ids);
        }
        let mut alphabet: Vec<String> = symbols.clone();
        alphabet.sort();
        let mut learned: Vec<String> = Vec::new();
        let reserved = RESERVED.len() + num_hypotheses;
        let budget = self.target_size.saturating_sub(reserved + alphabet.len());

        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
        for (w, ids) in segmented.iter().enumerate() {
            for p in ids.windows(2) {
                *pair_counts.entry((p[0], p[1])).or_insert(0) += words[w].1;
                pair_words.entry((p[0], p[1])).or_default().insert(w);
            }
        }
        let candidate = |pair: (u32, u32), count: u64, symbols: &[String]| Candidate {
            count,
            left: symbols[pair.0 as usize].clone(),
            right: symbols[pair.1 as usize].clone(),
            pair,
        };
        let mut heap: BinaryHeap<Candidate> = pair_counts
            .iter()
            .map(|(&pair, &count)| candidate(pair, count, &symbols))
            .collect();

        let mut known: HashSet<String> = alphabet.iter().cloned().collect();
        while learned.len() < budget {
            let Some(top) = heap.pop() else { break };
            let current = pair_counts.get(&top.pair).copied().unwrap_or(0);
            if current != top.count {
                if current > 0 {
                    heap.push(candidate(top.pair, current, &symbols));
                }
                continue;
            }
            if current < self.min_pair_frequency {
                break;
            }
            let merged = format!("{}{}", top.left, top.right.strip_prefix(CONTINUATION).unwrap_or(&top.right));
            let merged_id = intern(merged.clone(), &mut symbols);
            if known.insert(merged.clone()) {
                learned.push(merged);
            }

            let mut affected: Vec<usize> = pair_words.remove(&top.pair).unwrap_or_default().into_iter().collect();
            affected.sort_unstable();
            let mut touched: HashSet<(u32, u32)> = HashSet::new();
            for w in affected {
                let freq = words[w].1;
                let ids = &mut segmented[w];
                if !ids.windows(2).any(|p| (p[0], p[1]) == top.pair) {
                    continue;
                }
                for p in ids.windows(2) {
                    let key = (p[0], p[1]);
                    if let Some(c) = pair_counts.get_mut(&key) {
                        *c -= freq;
                    }
                }
                let mut merged_ids = Vec::with_capacity(ids.len());
                let mut i = 0;
                while i < ids.len() {
                    if i + 1 < ids.len() && (ids[i], ids[i + 1]) == top.pair {
                        merged_ids.push(merged_id);
                        i += 2;
                    } else {
                        merged_ids.push(ids[i]);
                        i += 1;
                    }
                }
                *ids = merged_ids;
                for p in ids.windows(2) {
                    let key = (p[0], p[1]);
                    *pair_counts.entry(key).or_insert(0) += freq;
                    pair_words.entry(key).or_default().insert(w);
                    if key.0 == merged_id || key.1 == merged_id {
                        touched.insert(key);
                    }
                }
            }
            pair_counts.remove(&top.pair);
            let mut touched: Vec<_> = touched.into_iter().collect();
            touched.sort_unstable();
            for pair in touched {
                let count = pair_counts[&pair];
                heap.push(candidate(pair, count, &symbols));
            }
        }

        Vocabulary::new(num_hypotheses, alphabet.into_iter().chain(learned))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn greedy_longest_match() {
        let vocab = Vocabulary::new(0, ["agree", "##ment", "a", "##g"].map(String::from));
        let tokens = vocab.tokenize("Agreement");
        assert_eq!(surfaces(&tokens), vec!["agree", "##ment"]);
        assert_eq!((tokens[1].char_start, tokens[1].char_end), (5, 9));
    }

    #[test]
    fn empty_text() {
        let vocab = Vocabulary::new(0, Vec::new());
        assert!(vocab.tokenize("").is_empty());
        assert!(vocab.tokenize("  \n ").is_empty());
    }

    #[test]
    fn unknown_chars_keep_offsets() {
        let vocab = Vocabulary::new(0, ["ab"].map(String::from));
        let tokens = vocab.tokenize("abz, ab");
        assert_eq!(surfaces(&tokens), vec!["ab", "[UNK]", "[UNK]", "ab"]);
        assert_eq!(tokens[1].id, UNK);
        assert_eq!((tokens[1].char_start, tokens[1].char_end), (2, 3));
        assert_eq!((tokens[2].char_start, tokens[2].char_end), (3, 4));
        assert_eq!((tokens[3].char_start, tokens[3].char_end), (5, 7));
    }

    #[test]
    fn punctuation_is_isolated_and_lowercased() {
        let words: Vec<String> = pre_tokenize("Party's NDA-1")
            .into_iter()
            .map(|(_, w)| w.into_iter().collect())
            .collect();
        assert_eq!(words, vec!["party", "'", "s", "nda", "-", "1"]);
    }

    #[test]
    fn reserved_layout_and_file_round_trip() {
        let vocab = Vocabulary::new(3, ["x", "##y"].map(String::from));
        assert_eq!(vocab.id("[CLS]"), Some(CLS));
        assert_eq!(vocab.id("[UNK]"), Some(UNK));
        assert_eq!(vocab.hypothesis_symbol(1), Some(5));
        assert_eq!(vocab.hypothesis_symbol(3), Some(7));
        assert_eq!(vocab.hypothesis_symbol(4), None);
        assert_eq!(vocab.id("x"), Some(8));
        let parsed = Vocabulary::parse(&vocab.to_file_string()).unwrap();
        assert_eq!(parsed, vocab);
        assert!(Vocabulary::parse("[SEP]\n").is_err());
    }

    #[test]
    fn builder_learns_frequent_words() {
        let text = "confidential confidential confidential information information party";
        let vocab = VocabBuilder {
            target_size: 60,
            min_pair_frequency: 2,
        }
        .build([text], 2);
        assert!(vocab.len() <= 60);
        assert!(vocab.id("confidential").is_some());
        assert!(vocab.id("information").is_some());
        // "party" occurs once: only its characters are kept.
        assert!(vocab.id("party").is_none());
        assert_eq!(surfaces(&vocab.tokenize("Party")), vec!["p", "##a", "##r", "##t", "##y"]);
        let again = VocabBuilder {
            target_size: 60,
            min_pair_frequency: 2,
        }
        .build([text], 2);
        assert_eq!(again, vocab);
    }
}
