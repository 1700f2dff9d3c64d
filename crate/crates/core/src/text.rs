//! Tokenization shared by training, inference, and corpus tooling.
//!
//! The rules are deliberately simple and fully reproducible:
//!
//! * split on Unicode whitespace;
//! * strip maximal runs of leading/trailing punctuation and symbol
//!   characters (general categories `P*` and `S*`) into their own tokens,
//!   so `"hola!"` becomes `hola` + `!` while word-internal apostrophes and
//!   hyphens (`don't`, `state-of-the-art`) are kept;
//! * lowercase with the locale-independent Unicode mapping.

use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::error::{Error, Result};

/// A single lowercased token. Never empty, never contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    text: String,
    char_count: usize,
}

impl Token {
    /// Lowercases `text` and validates the token invariants.
    pub fn new(text: &str) -> Result<Self> {
        let lowered = lowercase(text);
        if lowered.is_empty() {
            return Err(Error::arg("token text must be non-empty".to_string()));
        }
        if lowered.chars().any(char::is_whitespace) {
            return Err(Error::arg(format!("token `{lowered}` contains whitespace")));
        }
        Ok(Self::from_lowered(lowered))
    }

    fn from_lowered(text: String) -> Self {
        let char_count = text.chars().count();
        Token { text, char_count }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Number of Unicode scalar values in the token.
    pub fn char_count(&self) -> usize {
        self.char_count
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

/// A tokenized sentence plus the non-whitespace character count of the text
/// it came from (the sentence-length measure used by evaluation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
    raw_char_count: usize,
}

impl Sentence {
    /// Assembles a sentence from pre-tokenized tokens, e.g. an annotated
    /// corpus. The raw character count is the sum of token lengths.
    pub fn from_tokens(tokens: Vec<Token>) -> Self {
        let raw_char_count = tokens.iter().map(Token::char_count).sum();
        Sentence { tokens, raw_char_count }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn raw_char_count(&self) -> usize {
        self.raw_char_count
    }
}

fn lowercase(text: &str) -> String {
    text.chars().flat_map(char::to_lowercase).collect()
}

fn is_punct_or_symbol(c: char) -> bool {
    matches!(
        c.general_category_group(),
        GeneralCategoryGroup::Punctuation | GeneralCategoryGroup::Symbol
    )
}

/// Tokenizes raw text. Whitespace-only input yields an empty sentence;
/// callers decide whether to skip it.
pub fn tokenize(text: &str) -> Sentence {
    let raw_char_count = text.chars().filter(|c| !c.is_whitespace()).count();
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        split_chunk(&lowercase(chunk), &mut tokens);
    }
    Sentence { tokens, raw_char_count }
}

/// Splits one whitespace-free chunk into up to three tokens: a leading
/// punctuation/symbol run, the core, and a trailing run.
fn split_chunk(chunk: &str, out: &mut Vec<Token>) {
    debug_assert!(!chunk.is_empty());
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let first_core = chars.iter().position(|&(_, c)| !is_punct_or_symbol(c));
    let Some(first) = first_core else {
        // Entirely punctuation/symbols: keep the whole run as one token.
        out.push(Token::from_lowered(chunk.to_string()));
        return;
    };
    let last = chars.iter().rposition(|&(_, c)| !is_punct_or_symbol(c)).unwrap();
    let core_start = chars[first].0;
    let core_end = chars[last].0 + chars[last].1.len_utf8();
    if core_start > 0 {
        out.push(Token::from_lowered(chunk[..core_start].to_string()));
    }
    out.push(Token::from_lowered(chunk[core_start..core_end].to_string()));
    if core_end < chunk.len() {
        out.push(Token::from_lowered(chunk[core_end..].to_string()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &Sentence) -> Vec<&str> {
        s.tokens().iter().map(Token::text).collect()
    }

    #[test]
    fn splits_on_whitespace_and_lowercases() {
        let s = tokenize("Dame ese book");
        assert_eq!(texts(&s), ["dame", "ese", "book"]);
        assert_eq!(s.raw_char_count(), 11);
    }

    #[test]
    fn strips_edge_punctuation_into_tokens() {
        assert_eq!(texts(&tokenize("hola!")), ["hola", "!"]);
        assert_eq!(texts(&tokenize("¿hola?")), ["¿", "hola", "?"]);
        assert_eq!(texts(&tokenize("\"wow...\"")), ["\"", "wow", "...\""]);
    }

    #[test]
    fn keeps_internal_apostrophes_and_hyphens() {
        assert_eq!(texts(&tokenize("don't stop")), ["don't", "stop"]);
        assert_eq!(texts(&tokenize("state-of-the-art")), ["state-of-the-art"]);
    }

    #[test]
    fn pure_punctuation_chunk_is_one_token() {
        assert_eq!(texts(&tokenize("!!! ??")), ["!!!", "??"]);
    }

    #[test]
    fn codemixed_informal_text() {
        let s = tokenize("ça va bien hmd w enti");
        assert_eq!(s.len(), 6);
        assert_eq!(tokenize("cv bien hmd w enti").len(), 5);
    }

    #[test]
    fn empty_and_whitespace_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n").is_empty());
        assert_eq!(tokenize("  ").raw_char_count(), 0);
    }

    #[test]
    fn retokenizing_a_token_is_identity() {
        let sentences = ["hola!", "¿qué tal?", "don't ... \"stop\"", "a+b=c", "१२३ क्या"];
        for s in sentences {
            for tok in tokenize(s).tokens() {
                let again = tokenize(tok.text());
                assert_eq!(again.len(), 1, "token {:?} re-split", tok.text());
                assert_eq!(again.tokens()[0], *tok);
            }
        }
    }

    #[test]
    fn token_new_validates() {
        assert!(Token::new("").is_err());
        assert!(Token::new("two words").is_err());
        let t = Token::new("Ça").unwrap();
        assert_eq!(t.text(), "ça");
        assert_eq!(t.char_count(), 2);
    }
}
