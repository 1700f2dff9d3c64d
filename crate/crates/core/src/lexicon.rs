//! Token-to-language-distribution tables built from monolingual corpora.
//!
//! The lexicon table maps every retained token to the empirical distribution
//! of languages it was observed under; a companion prefix table aggregates
//! the same counts over 6-character prefixes and serves as a fallback for
//! unseen tokens of at least 6 characters.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::lang::LanguageRegistry;
use crate::text::tokenize;
use crate::util::atomic_write;

/// Number of leading characters used as the prefix-table key.
pub const PREFIX_CHARS: usize = 6;

const MAGIC: &[u8; 4] = b"CMXL";
const VERSION: u8 = 1;

/// Immutable lexicon + prefix tables. Build once, look up from any thread.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    num_languages: usize,
    tokens: HashMap<String, Vec<f32>>,
    prefixes: HashMap<String, Vec<f32>>,
}

/// What `build_lexicon` saw while scanning the corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildStats {
    pub lines: usize,
    /// `(line number, code)` of lines skipped for an unknown language.
    pub skipped: Vec<(usize, String)>,
    pub tokens_kept: usize,
    pub tokens_dropped: usize,
}

impl Lexicon {
    /// Exact-match lookup first, then the 6-character-prefix fallback for
    /// tokens of at least 6 characters.
    pub fn lookup(&self, token_text: &str) -> Option<&[f32]> {
        if let Some(v) = self.tokens.get(token_text) {
            return Some(v);
        }
        let prefix = prefix_of(token_text)?;
        self.prefixes.get(prefix).map(Vec::as_slice)
    }

    pub fn num_languages(&self) -> usize {
        self.num_languages
    }

    pub fn token_entries(&self) -> usize {
        self.tokens.len()
    }

    pub fn prefix_entries(&self) -> usize {
        self.prefixes.len()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path.as_ref(), |w| self.write_to(w))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(&mut std::io::BufReader::new(file))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u8(VERSION)?;
        w.write_u32::<LittleEndian>(self.num_languages as u32)?;
        w.write_u64::<LittleEndian>(self.tokens.len() as u64)?;
        w.write_u64::<LittleEndian>(self.prefixes.len() as u64)?;
        // Deterministic record order: sorted keys.
        for table in [&self.tokens, &self.prefixes] {
            let mut keys: Vec<&String> = table.keys().collect();
            keys.sort_unstable();
            for key in keys {
                let bytes = key.as_bytes();
                w.write_u32::<LittleEndian>(bytes.len() as u32)?;
                w.write_all(bytes)?;
                for &p in &table[key] {
                    w.write_f32::<LittleEndian>(p)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::format("lexicon file", "truncated header"))?;
        if &magic != MAGIC {
            return Err(Error::format("lexicon file", "bad magic"));
        }
        let version = r.read_u8()?;
        if version != VERSION {
            return Err(Error::format("lexicon file", format!("unsupported version {version}")));
        }
        let num_languages = r.read_u32::<LittleEndian>()? as usize;
        let token_count = r.read_u64::<LittleEndian>()? as usize;
        let prefix_count = r.read_u64::<LittleEndian>()? as usize;
        let mut read_table = |count: usize| -> Result<HashMap<String, Vec<f32>>> {
            let mut table = HashMap::with_capacity(count);
            for _ in 0..count {
                let len = r.read_u32::<LittleEndian>()? as usize;
                let mut buf = vec![0u8; len];
                r.read_exact(&mut buf)
                    .map_err(|_| Error::format("lexicon file", "truncated record"))?;
                let key = String::from_utf8(buf)
                    .map_err(|_| Error::format("lexicon file", "non-UTF-8 key"))?;
                let mut probs = vec![0.0f32; num_languages];
                for p in probs.iter_mut() {
                    *p = r
                        .read_f32::<LittleEndian>()
                        .map_err(|_| Error::format("lexicon file", "truncated record"))?;
                }
                table.insert(key, probs);
            }
            Ok(table)
        };
        let tokens = read_table(token_count)?;
        let prefixes = read_table(prefix_count)?;
        Ok(Lexicon { num_languages, tokens, prefixes })
    }
}

fn prefix_of(token_text: &str) -> Option<&str> {
    let mut chars = token_text.char_indices();
    let (last, c) = chars.nth(PREFIX_CHARS - 1)?;
    // Exactly PREFIX_CHARS chars would be the token itself; the fallback
    // only applies to strictly longer tokens' prefixes, but a 6-char token
    // that missed the lexicon can still match its own prefix bucket.
    Some(&token_text[..last + c.len_utf8()])
}

/// Scans a monolingual corpus of `lang<TAB>text` lines and builds both
/// tables. Tokens observed fewer than `min_count` times in total are
/// dropped before normalization; the prefix table aggregates the counts of
/// all retained tokens of at least 6 characters.
pub fn build_lexicon(
    corpus: impl BufRead,
    registry: &LanguageRegistry,
    min_count: usize,
) -> Result<(Lexicon, BuildStats)> {
    let num_languages = registry.len();
    let mut counts: HashMap<String, Vec<u32>> = HashMap::new();
    let mut stats = BuildStats::default();
    for (i, line) in corpus.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let line_no = i + 1;
        let Some((code, text)) = line.split_once('\t') else {
            return Err(Error::format(
                "monolingual corpus",
                format!("line {line_no}: expected `lang<TAB>text`"),
            ));
        };
        let Some(lang) = registry.id(code) else {
            stats.skipped.push((line_no, code.to_string()));
            continue;
        };
        for token in tokenize(text).tokens() {
            counts
                .entry(token.text().to_string())
                .or_insert_with(|| vec![0u32; num_languages])[lang.index()] += 1;
        }
    }

    let mut tokens = HashMap::new();
    let mut prefix_counts: HashMap<String, Vec<u64>> = HashMap::new();
    for (text, langs) in counts {
        let total: u64 = langs.iter().map(|&c| c as u64).sum();
        if (total as usize) < min_count {
            stats.tokens_dropped += 1;
            continue;
        }
        stats.tokens_kept += 1;
        if let Some(prefix) = prefix_of(&text) {
            let acc = prefix_counts
                .entry(prefix.to_string())
                .or_insert_with(|| vec![0u64; num_languages]);
            for (a, &c) in acc.iter_mut().zip(&langs) {
                *a += c as u64;
            }
        }
        tokens.insert(text, normalize(&langs.iter().map(|&c| c as u64).collect::<Vec<_>>()));
    }
    let prefixes =
        prefix_counts.into_iter().map(|(k, v)| (k, normalize(&v))).collect::<HashMap<_, _>>();
    if tokens.is_empty() {
        return Err(Error::Empty("lexicon (no token survived the corpus scan)"));
    }
    Ok((Lexicon { num_languages, tokens, prefixes }, stats))
}

fn normalize(counts: &[u64]) -> Vec<f32> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| (c as f64 / total as f64) as f32).collect()
}
