//! Per-language tokenization.
//!
//! Mongolian, Uyghur and Kazakh words are space-separated. Tibetan splits
//! into syllables on the tsheg (U+0F0B) and shad (U+0F0D) delimiters, or
//! into words via lexicon-driven longest match. Korean is segmented into
//! morphemes with the same longest-match mechanism; the bundled lexicon
//! interface stands in for an external morphological analyzer, which can be
//! plugged in by supplying its vocabulary as a lexicon file.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Language;

/// Tibetan syllable delimiter.
pub const TSHEG: char = '\u{0F0B}';
/// Tibetan sentence delimiter, treated like the tsheg.
pub const SHAD: char = '\u{0F0D}';

/// Segmentation granularity. `Syllable` is Tibetan-only and `Morpheme` is
/// Korean-only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Word,
    Syllable,
    Morpheme,
}

impl Granularity {
    pub fn parse(s: &str) -> Result<Self, SegmentError> {
        match s {
            "word" => Ok(Granularity::Word),
            "syllable" => Ok(Granularity::Syllable),
            "morpheme" => Ok(Granularity::Morpheme),
            other => Err(SegmentError::UnknownGranularity(other.to_string())),
        }
    }
}

/// An ordered token sequence with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub lang: Language,
    pub granularity: Granularity,
}

/// A morpheme (or word) inventory for longest-match segmentation.
#[derive(Debug, Clone)]
pub struct MorphemeLexicon {
    entries: HashSet<String>,
    max_chars: usize,
    pub name: String,
}

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("unknown granularity {0:?} (expected word|syllable|morpheme)")]
    UnknownGranularity(String),
    #[error("granularity {granularity:?} is not valid for language {lang}")]
    Granularity {
        lang: Language,
        granularity: Granularity,
    },
    #[error("segmenting {0} at this granularity requires a lexicon")]
    LexiconRequired(Language),
    #[error("lexicon {0:?} is empty")]
    EmptyLexicon(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl MorphemeLexicon {
    /// Build from entries; empty entries are dropped, an empty inventory is
    /// rejected.
    pub fn new(name: &str, entries: impl IntoIterator<Item = String>) -> Result<Self, SegmentError> {
        let entries: HashSet<String> = entries.into_iter().filter(|e| !e.is_empty()).collect();
        if entries.is_empty() {
            return Err(SegmentError::EmptyLexicon(name.to_string()));
        }
        let max_chars = entries.iter().map(|e| e.chars().count()).max().unwrap_or(1);
        Ok(MorphemeLexicon {
            entries,
            max_chars,
            name: name.to_string(),
        })
    }

    /// Load a UTF-8 lexicon file, one morpheme per line.
    pub fn load(path: &Path) -> Result<Self, SegmentError> {
        let content = fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "lexicon".to_string());
        MorphemeLexicon::new(&name, content.lines().map(|l| l.trim().to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, s: &str) -> bool {
        self.entries.contains(s)
    }

    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }
}

/// Maximal non-whitespace runs, in order.
pub fn segment_space(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Split on tsheg, shad and whitespace; delimiters are discarded.
pub fn segment_tibetan_syllables(text: &str) -> Vec<String> {
    text.split(|c: char| c == TSHEG || c == SHAD || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Greedy left-to-right longest match against the lexicon. Whitespace acts
/// as a hard boundary and is discarded; spans with no lexicon match fall
/// back to single-character tokens, so concatenating the output (ignoring
/// discarded whitespace) reproduces the input.
pub fn segment_longest_match(text: &str, lexicon: &MorphemeLexicon) -> Vec<String> {
    let mut tokens = Vec::new();
    for span in text.split_whitespace() {
        let chars: Vec<char> = span.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let mut matched = None;
            let upper = (chars.len() - i).min(lexicon.max_chars);
            for len in (1..=upper).rev() {
                let candidate: String = chars[i..i + len].iter().collect();
                if lexicon.contains(&candidate) {
                    matched = Some((candidate, len));
                    break;
                }
            }
            match matched {
                Some((token, len)) => {
                    tokens.push(token);
                    i += len;
                }
                None => {
                    tokens.push(chars[i].to_string());
                    i += 1;
                }
            }
        }
    }
    tokens
}

fn valid_combination(lang: Language, granularity: Granularity) -> bool {
    matches!(
        (lang, granularity),
        (Language::Mongolian, Granularity::Word)
            | (Language::Uyghur, Granularity::Word)
            | (Language::Kazakh, Granularity::Word)
            | (Language::Tibetan, Granularity::Word)
            | (Language::Tibetan, Granularity::Syllable)
            | (Language::Korean, Granularity::Morpheme)
    )
}

/// Dispatch to the right segmenter for `(lang, granularity)`:
/// space-delimited words for Mongolian/Uyghur/Kazakh, tsheg syllables for
/// Tibetan, longest match for Tibetan words and Korean morphemes (both need
/// a lexicon).
pub fn segment(
    text: &str,
    lang: Language,
    granularity: Granularity,
    lexicon: Option<&MorphemeLexicon>,
) -> Result<TokenSequence, SegmentError> {
    if !valid_combination(lang, granularity) {
        return Err(SegmentError::Granularity { lang, granularity });
    }
    let tokens = match (lang, granularity) {
        (Language::Mongolian | Language::Uyghur | Language::Kazakh, Granularity::Word) => {
            segment_space(text)
        }
        (Language::Tibetan, Granularity::Syllable) => segment_tibetan_syllables(text),
        (Language::Tibetan, Granularity::Word) | (Language::Korean, Granularity::Morpheme) => {
            let lexicon = lexicon.ok_or(SegmentError::LexiconRequired(lang))?;
            // Tibetan word lexicons are written in syllables; strip the
            // delimiters first so matching sees bare syllable streams.
            if lang == Language::Tibetan {
                let desyllabled = segment_tibetan_syllables(text).join("");
                segment_longest_match(&desyllabled, lexicon)
            } else {
                segment_longest_match(text, lexicon)
            }
        }
        _ => unreachable!("validated above"),
    };
    Ok(TokenSequence {
        tokens,
        lang,
        granularity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_segmentation() {
        assert_eq!(segment_space("ab cd"), vec!["ab", "cd"]);
        assert_eq!(segment_space(""), Vec::<String>::new());
        assert_eq!(segment_space("a  b"), vec!["a", "b"]);
        assert_eq!(segment_space("  x "), vec!["x"]);
    }

    #[test]
    fn mongolian_words_split_on_space() {
        let seq = segment("ᠰᠤᠷᠭᠠᠨ ᠬᠦᠮᠦᠵᠢᠯ", Language::Mongolian, Granularity::Word, None).unwrap();
        assert_eq!(seq.tokens.len(), 2);
    }

    #[test]
    fn tibetan_syllables_split_on_tsheg() {
        assert_eq!(segment_tibetan_syllables("བོད་ཡིག"), vec!["བོད", "ཡིག"]);
        assert_eq!(segment_tibetan_syllables("ཀ"), vec!["ཀ"]);
        assert_eq!(segment_tibetan_syllables("ཀ་ཁ། ག"), vec!["ཀ", "ཁ", "ག"]);
        assert_eq!(segment_tibetan_syllables(""), Vec::<String>::new());
    }

    fn lexicon(entries: &[&str]) -> MorphemeLexicon {
        MorphemeLexicon::new("test", entries.iter().map(|s| s.to_string())).unwrap()
    }

    #[test]
    fn longest_match_prefers_longest() {
        let lex = lexicon(&["ab", "c", "abc"]);
        assert_eq!(segment_longest_match("abc", &lex), vec!["abc"]);
    }

    #[test]
    fn longest_match_falls_back_to_single_chars() {
        let lex = lexicon(&["ab", "c"]);
        assert_eq!(segment_longest_match("abd", &lex), vec!["ab", "d"]);
        assert_eq!(segment_longest_match("", &lex), Vec::<String>::new());
    }

    #[test]
    fn longest_match_concatenation_reproduces_input() {
        let lex = lexicon(&["ab", "bc", "cab"]);
        for text in ["abcabbc", "xyz", "abab", "cabcab"] {
            let tokens = segment_longest_match(text, &lex);
            assert_eq!(tokens.concat(), text);
        }
    }

    #[test]
    fn longest_match_discards_whitespace_between_spans() {
        let lex = lexicon(&["ab"]);
        assert_eq!(segment_longest_match("ab ab", &lex), vec!["ab", "ab"]);
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        let err = segment("x", Language::Tibetan, Granularity::Morpheme, None).unwrap_err();
        assert!(matches!(err, SegmentError::Granularity { .. }));
        let err = segment("x", Language::Korean, Granularity::Word, None).unwrap_err();
        assert!(matches!(err, SegmentError::Granularity { .. }));
        let err = segment("x", Language::Mongolian, Granularity::Syllable, None).unwrap_err();
        assert!(matches!(err, SegmentError::Granularity { .. }));
    }

    #[test]
    fn korean_morphemes_require_lexicon() {
        let err = segment("테스트", Language::Korean, Granularity::Morpheme, None).unwrap_err();
        assert!(matches!(err, SegmentError::LexiconRequired(Language::Korean)));

        let lex = lexicon(&["테스", "트"]);
        let seq = segment("테스트", Language::Korean, Granularity::Morpheme, Some(&lex)).unwrap();
        assert_eq!(seq.tokens, vec!["테스", "트"]);
    }

    #[test]
    fn tibetan_words_match_across_tsheg() {
        let lex = lexicon(&["བོདཡིག"]);
        let seq = segment("བོད་ཡིག", Language::Tibetan, Granularity::Word, Some(&lex)).unwrap();
        assert_eq!(seq.tokens, vec!["བོདཡིག"]);
    }

    #[test]
    fn no_token_is_empty_or_has_whitespace() {
        let lex = lexicon(&["ab", "cd"]);
        let texts = ["ab cd ef", "  ", "a\tb\nc"];
        for text in texts {
            for tokens in [
                segment_space(text),
                segment_tibetan_syllables(text),
                segment_longest_match(text, &lex),
            ] {
                for t in &tokens {
                    assert!(!t.is_empty());
                    assert!(!t.chars().any(char::is_whitespace));
                }
            }
        }
    }

    #[test]
    fn empty_lexicon_is_rejected() {
        assert!(MorphemeLexicon::new("empty", Vec::<String>::new()).is_err());
        assert!(MorphemeLexicon::new("blank", vec![String::new()]).is_err());
    }

    #[test]
    fn resegmentation_is_fixed_point() {
        // Joining tokens with the canonical delimiter and re-segmenting
        // reproduces the same tokens.
        let tokens = segment_space("ab cd  ef");
        assert_eq!(segment_space(&tokens.join(" ")), tokens);

        let syls = segment_tibetan_syllables("བོད་ཡིག ཀ་ཁ།");
        let joined = syls.join(&TSHEG.to_string());
        assert_eq!(segment_tibetan_syllables(&joined), syls);

        let lex = lexicon(&["ab", "cd"]);
        let toks = segment_longest_match("abcd xy", &lex);
        assert_eq!(segment_longest_match(&toks.join(" "), &lex), toks);
    }

    #[test]
    fn digit_runs_are_single_tokens_under_space_rule() {
        assert_eq!(segment_space("price 1234 units"), vec!["price", "1234", "units"]);
    }
}
