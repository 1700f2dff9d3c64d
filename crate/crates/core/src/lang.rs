//! Language codes and the registry mapping them to dense ids.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

/// Dense index of a language within one [`LanguageRegistry`].
///
/// Ids are assigned by registry order and are only meaningful relative to
/// the registry that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangId(u16);

impl LangId {
    pub fn new(id: u16) -> Self {
        LangId(id)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LangId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered set of language codes, e.g. `en`, `es`, `hi-Latn`.
///
/// A code is a lowercase ASCII base tag with an optional script qualifier
/// after a hyphen (`hi-Latn`). The registry is a bijection between codes and
/// dense ids; the order of codes is also the serialization order used by the
/// model and lexicon file formats.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageRegistry {
    codes: Vec<String>,
    index: HashMap<String, LangId>,
}

const DEFAULT_REGISTRY: &str = include_str!("../data/default_registry.txt");

impl LanguageRegistry {
    /// Builds a registry from codes in order; the position becomes the id.
    pub fn from_codes<I, S>(codes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut owned = Vec::new();
        let mut index = HashMap::new();
        for (i, code) in codes.into_iter().enumerate() {
            let code = code.as_ref();
            validate_code(code, i + 1)?;
            if i >= u16::MAX as usize {
                return Err(Error::format("language registry", "too many languages"));
            }
            if index.insert(code.to_string(), LangId(i as u16)).is_some() {
                return Err(Error::format(
                    "language registry",
                    format!("duplicate code `{code}` (line {})", i + 1),
                ));
            }
            owned.push(code.to_string());
        }
        if owned.is_empty() {
            return Err(Error::Empty("language registry"));
        }
        Ok(LanguageRegistry { codes: owned, index })
    }

    /// Reads a registry file: one code per line, line number minus one = id.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut codes = Vec::new();
        for line in reader.lines() {
            codes.push(line?.trim().to_string());
        }
        // A trailing newline is fine; blank lines elsewhere are not, since
        // they would silently shift every later id.
        while codes.last().is_some_and(|c| c.is_empty()) {
            codes.pop();
        }
        Self::from_codes(codes)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// The built-in 100-language registry shipped with the crate.
    pub fn default_100() -> Self {
        Self::from_reader(DEFAULT_REGISTRY.as_bytes()).expect("embedded registry is valid")
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn id(&self, code: &str) -> Option<LangId> {
        self.index.get(code).copied()
    }

    /// Like [`id`](Self::id) but returns a typed error naming the code.
    pub fn require(&self, code: &str, line: Option<usize>) -> Result<LangId> {
        self.id(code).ok_or_else(|| Error::UnknownLanguage { code: code.to_string(), line })
    }

    pub fn code(&self, id: LangId) -> &str {
        &self.codes[id.index()]
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.codes.iter().map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = LangId> {
        (0..self.codes.len() as u16).map(LangId)
    }
}

fn validate_code(code: &str, line: usize) -> Result<()> {
    let (base, qualifier) = match code.split_once('-') {
        Some((b, q)) => (b, Some(q)),
        None => (code, None),
    };
    let base_ok = !base.is_empty() && base.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit());
    let qual_ok = qualifier.is_none_or(|q| !q.is_empty() && q.chars().all(|c| c.is_ascii_alphanumeric()));
    if base_ok && qual_ok {
        Ok(())
    } else {
        Err(Error::format(
            "language registry",
            format!("malformed code `{code}` (line {line})"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_registry_has_100_languages() {
        let reg = LanguageRegistry::default_100();
        assert_eq!(reg.len(), 100);
        for code in ["en", "es", "hi", "hi-Latn", "id", "fr", "ar-Latn", "sv", "da", "nl", "fy"] {
            assert!(reg.id(code).is_some(), "missing {code}");
        }
    }

    #[test]
    fn ids_are_dense_and_stable() {
        let reg = LanguageRegistry::from_codes(["en", "es", "hi-Latn"]).unwrap();
        assert_eq!(reg.id("en"), Some(LangId::new(0)));
        assert_eq!(reg.id("hi-Latn"), Some(LangId::new(2)));
        assert_eq!(reg.code(LangId::new(1)), "es");
        assert_eq!(reg.id("xx"), None);
    }

    #[test]
    fn duplicate_and_malformed_codes_rejected() {
        assert!(LanguageRegistry::from_codes(["en", "en"]).is_err());
        assert!(LanguageRegistry::from_codes(["EN"]).is_err());
        assert!(LanguageRegistry::from_codes(["e n"]).is_err());
        assert!(LanguageRegistry::from_codes(["en-"]).is_err());
        assert!(LanguageRegistry::from_codes(Vec::<String>::new()).is_err());
    }

    #[test]
    fn registry_roundtrips_through_text() {
        let reg = LanguageRegistry::default_100();
        let text: String = reg.codes().map(|c| format!("{c}\n")).collect();
        let back = LanguageRegistry::from_reader(text.as_bytes()).unwrap();
        assert_eq!(reg, back);
    }
}
