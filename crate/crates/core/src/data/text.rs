//! Character-level text pipeline: normalization, vocabulary, tokens and
//! fixed-length windows.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Index of the out-of-vocabulary token.
pub const PLACEHOLDER: usize = 0;
/// Character shown for the placeholder when detokenizing.
pub const PLACEHOLDER_CHAR: char = '\u{FFFD}';
/// Tokens rarer than this fraction of the corpus map to the placeholder.
pub const DEFAULT_MIN_RATE: f64 = 1e-4;

/// Replacement table applied before lowercasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantMap {
    map: HashMap<char, String>,
}

impl Default for VariantMap {
    /// Common typographic variants: curly quotes, dashes, ellipsis, ligatures,
    /// long s and non-breaking spaces.
    fn default() -> Self {
        let pairs: &[(char, &str)] = &[
            ('\u{2018}', "'"),
            ('\u{2019}', "'"),
            ('\u{201A}', "'"),
            ('\u{201B}', "'"),
            ('\u{201C}', "\""),
            ('\u{201D}', "\""),
            ('\u{201E}', "\""),
            ('\u{00AB}', "\""),
            ('\u{00BB}', "\""),
            ('\u{2010}', "-"),
            ('\u{2011}', "-"),
            ('\u{2012}', "-"),
            ('\u{2013}', "-"),
            ('\u{2014}', "-"),
            ('\u{2015}', "-"),
            ('\u{2026}', "..."),
            ('\u{FB00}', "ff"),
            ('\u{FB01}', "fi"),
            ('\u{FB02}', "fl"),
            ('\u{FB03}', "ffi"),
            ('\u{FB04}', "ffl"),
            ('\u{00C6}', "ae"),
            ('\u{00E6}', "ae"),
            ('\u{0152}', "oe"),
            ('\u{0153}', "oe"),
            ('\u{017F}', "s"),
            ('\u{00A0}', " "),
            ('\u{2009}', " "),
            ('\u{200A}', " "),
            ('\u{202F}', " "),
            ('\u{FEFF}', ""),
            ('\r', ""),
        ];
        VariantMap {
            map: pairs.iter().map(|&(c, s)| (c, s.to_string())).collect(),
        }
    }
}

impl VariantMap {
    pub fn empty() -> Self {
        VariantMap { map: HashMap::new() }
    }

    /// One mapping per line: a source character written literally or as
    /// `U+XXXX`, whitespace, then the replacement (`U+XXXX` sequences allowed,
    /// nothing for deletion). Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |m: &str| Error::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let mut parts = line.splitn(2, char::is_whitespace);
            let src = parse_chars(parts.next().unwrap_or("")).map_err(|m| err(&m))?;
            let dst = parse_chars(parts.next().unwrap_or("").trim()).map_err(|m| err(&m))?;
            let mut it = src.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => {
                    map.insert(c, dst);
                }
                _ => return Err(err("source must be a single character")),
            }
        }
        Ok(VariantMap { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        VariantMap::parse(&text)
    }

    pub fn insert(&mut self, from: char, to: &str) {
        self.map.insert(from, to.to_string());
    }

    pub fn apply(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        for c in text.chars() {
            match self.map.get(&c) {
                Some(r) => out.push_str(r),
                None => out.push(c),
            }
        }
        out
    }
}

fn parse_chars(s: &str) -> std::result::Result<String, String> {
    let mut out = String::new();
    for tok in s.split_whitespace() {
        if let Some(hex) = tok.strip_prefix("U+").or_else(|| tok.strip_prefix("u+")) {
            let code = u32::from_str_radix(hex, 16).map_err(|_| format!("bad code point {tok}"))?;
            out.push(char::from_u32(code).ok_or_else(|| format!("invalid code point {tok}"))?);
        } else {
            out.push_str(tok);
        }
    }
    Ok(out)
}

/// Variant mapping followed by lowercasing.
pub fn preprocess(text: &str, variants: &VariantMap) -> String {
    variants.apply(text).to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    /// Index 0 holds [`PLACEHOLDER_CHAR`]; the rest are sorted by descending
    /// corpus frequency, ties by code point.
    tokens: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocabulary {
    /// Builds from in-vocabulary characters ordered by rank.
    pub fn from_tokens(tokens: Vec<char>) -> Result<Self> {
        let mut all = Vec::with_capacity(tokens.len() + 1);
        all.push(PLACEHOLDER_CHAR);
        all.extend(tokens);
        let mut index = HashMap::with_capacity(all.len());
        for (i, &c) in all.iter().enumerate().skip(1) {
            if index.insert(c, i).is_some() {
                return Err(Error::data(format!("duplicate vocabulary token {c:?}")));
            }
        }
        Ok(Vocabulary { tokens: all, index })
    }

    /// Size including the placeholder.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn token(&self, i: usize) -> Option<char> {
        self.tokens.get(i).copied()
    }

    /// In-vocabulary characters in index order, without the placeholder.
    pub fn chars(&self) -> &[char] {
        &self.tokens[1..]
    }

    pub fn index_of(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(PLACEHOLDER)
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }
}

/// Counts length-`n` substrings and keeps those with rate `≥ min_rate`.
/// Only single characters (`n = 1`) are supported.
pub fn build_vocab(corpus: &str, n: usize, min_rate: f64) -> Result<Vocabulary> {
    if n != 1 {
        return Err(Error::config(format!("token length {n} unsupported; only 1")));
    }
    let mut counts: HashMap<char, usize> = HashMap::new();
    let mut total = 0usize;
    for c in corpus.chars() {
        *counts.entry(c).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::data("empty corpus"));
    }
    let mut kept: Vec<(char, usize)> = counts
        .into_iter()
        .filter(|&(_, k)| k as f64 / total as f64 >= min_rate)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(c, _)| c).collect())
}

pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<usize> {
    text.chars().map(|c| vocab.index_of(c)).collect()
}

pub fn detokenize(tokens: &[usize], vocab: &Vocabulary) -> String {
    tokens
        .iter()
        .map(|&t| vocab.token(t).unwrap_or(PLACEHOLDER_CHAR))
        .collect()
}

/// First `⌊fraction·len⌋` tokens and the remainder, order preserved.
pub fn split_contiguous(tokens: &[usize], fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let cut = ((tokens.len() as f64) * fraction).floor() as usize;
    let cut = cut.min(tokens.len());
    (tokens[..cut].to_vec(), tokens[cut..].to_vec())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenWindow {
    pub inputs: Vec<usize>,
    pub target: usize,
}

/// Non-overlapping windows of `t + 1` tokens; a short tail is dropped.
pub fn window_split(tokens: &[usize], t: usize) -> Result<Vec<TokenWindow>> {
    if t == 0 {
        return Err(Error::config("window length must be positive"));
    }
    if tokens.len() < t + 1 {
        return Err(Error::data(format!(
            "stream of {} tokens is shorter than one window of {}",
            tokens.len(),
            t + 1
        )));
    }
    Ok(tokens
        .chunks_exact(t + 1)
        .map(|w| TokenWindow {
            inputs: w[..t].to_vec(),
            target: w[t],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_order() {
        let v = build_vocab("aaab", 1, 0.0).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.index_of('a'), 1);
        assert_eq!(v.index_of('b'), 2);
        assert_eq!(v.token(0), Some(PLACEHOLDER_CHAR));
    }

    #[test]
    fn rare_char_maps_to_placeholder() {
        let mut corpus = "e".repeat(999_999);
        corpus.push('z');
        let v = build_vocab(&corpus, 1, DEFAULT_MIN_RATE).unwrap();
        assert_eq!(v.index_of('z'), PLACEHOLDER);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn vocab_errors() {
        assert!(build_vocab("", 1, 0.0).is_err());
        assert!(build_vocab("abc", 2, 0.0).is_err());
    }

    #[test]
    fn ties_break_by_code_point() {
        let v = build_vocab("cbacba", 1, 0.0).unwrap();
        assert_eq!(v.chars(), &['a', 'b', 'c']);
    }

    #[test]
    fn tokenize_cases() {
        let v = build_vocab("hello world", 1, 0.0).unwrap();
        let t = tokenize("hold", &v);
        assert_eq!(t.len(), 4);
        assert!(t.iter().all(|&i| i != PLACEHOLDER));
        assert_eq!(detokenize(&t, &v), "hold");
        assert_eq!(tokenize("hex", &v)[2], PLACEHOLDER);
    }

    #[test]
    fn preprocess_maps_variants_and_lowercases() {
        let s = preprocess("\u{201C}O Thou\u{2019}rt\u{2014}Fair\u{201D}", &VariantMap::default());
        assert_eq!(s, "\"o thou'rt-fair\"");
    }

    #[test]
    fn variant_file_parsing() {
        let m = VariantMap::parse("# comment\n\n\u{00E9} e\nU+00DF ss\nU+FEFF\n").unwrap();
        assert_eq!(m.apply("caf\u{00E9} stra\u{00DF}e\u{FEFF}"), "cafe strasse");
        let err = VariantMap::parse("o 0\nab c\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn window_cases() {
        let tokens: Vec<usize> = (0..25).collect();
        let w = window_split(&tokens, 4).unwrap();
        assert_eq!(w.len(), 5);
        assert_eq!(w[0].target, tokens[4]);
        let flat: Vec<usize> = w
            .iter()
            .flat_map(|x| x.inputs.iter().copied().chain([x.target]))
            .collect();
        assert_eq!(flat, tokens[..25].to_vec());

        let w = window_split(&(0..27).collect::<Vec<_>>(), 4).unwrap();
        assert_eq!(w.len(), 5);
        assert!(window_split(&[1, 2, 3], 3).is_err());
    }

    #[test]
    fn contiguous_split() {
        let tokens: Vec<usize> = (0..100).collect();
        let (a, b) = split_contiguous(&tokens, 0.9);
        assert_eq!(a.len(), 90);
        assert_eq!(b[0], 90);
    }
}
