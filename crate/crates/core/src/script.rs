//! Per-character script classification into a fixed 27-way table.
//!
//! Every Unicode scalar value maps to exactly one of 27 script buckets: the
//! 26 scripts most relevant to the supported language set each get their own
//! id, and everything else (including Common and Inherited characters such
//! as digits and punctuation) falls into the final `Other` bucket.

use unicode_script::{Script, UnicodeScript};

/// One of the 27 script buckets. `id()` is in `[0, 27)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScriptId(u8);

pub const NUM_SCRIPTS: usize = 27;

/// Bucket for Common, Inherited, and all scripts without a dedicated id.
pub const OTHER_SCRIPT: ScriptId = ScriptId(26);

impl ScriptId {
    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        SCRIPT_NAMES[self.0 as usize]
    }
}

const SCRIPT_NAMES: [&str; NUM_SCRIPTS] = [
    "Latin",
    "Cyrillic",
    "Greek",
    "Arabic",
    "Hebrew",
    "Devanagari",
    "Bengali",
    "Gurmukhi",
    "Gujarati",
    "Oriya",
    "Tamil",
    "Telugu",
    "Kannada",
    "Malayalam",
    "Sinhala",
    "Thai",
    "Lao",
    "Myanmar",
    "Khmer",
    "Georgian",
    "Armenian",
    "Ethiopic",
    "Han",
    "Hiragana",
    "Katakana",
    "Hangul",
    "Other",
];

/// Classifies one Unicode scalar value. Total and deterministic.
pub fn script_of_char(c: char) -> ScriptId {
    let id = match c.script() {
        Script::Latin => 0,
        Script::Cyrillic => 1,
        Script::Greek => 2,
        Script::Arabic => 3,
        Script::Hebrew => 4,
        Script::Devanagari => 5,
        Script::Bengali => 6,
        Script::Gurmukhi => 7,
        Script::Gujarati => 8,
        Script::Oriya => 9,
        Script::Tamil => 10,
        Script::Telugu => 11,
        Script::Kannada => 12,
        Script::Malayalam => 13,
        Script::Sinhala => 14,
        Script::Thai => 15,
        Script::Lao => 16,
        Script::Myanmar => 17,
        Script::Khmer => 18,
        Script::Georgian => 19,
        Script::Armenian => 20,
        Script::Ethiopic => 21,
        Script::Han => 22,
        Script::Hiragana => 23,
        Script::Katakana => 24,
        Script::Hangul => 25,
        _ => 26,
    };
    ScriptId(id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn major_scripts_get_distinct_ids() {
        let samples = [
            ('a', "Latin"),
            ('ж', "Cyrillic"),
            ('λ', "Greek"),
            ('ب', "Arabic"),
            ('א', "Hebrew"),
            ('क', "Devanagari"),
            ('ก', "Thai"),
            ('中', "Han"),
            ('の', "Hiragana"),
            ('カ', "Katakana"),
            ('한', "Hangul"),
        ];
        let mut seen = std::collections::HashSet::new();
        for (c, name) in samples {
            let s = script_of_char(c);
            assert_eq!(s.name(), name, "{c}");
            assert!(seen.insert(s), "{name} shares an id");
        }
    }

    #[test]
    fn common_and_inherited_bucket_to_other() {
        for c in ['0', '!', ' ', ',', '\u{0301}'] {
            assert_eq!(script_of_char(c), OTHER_SCRIPT, "{c:?}");
        }
    }

    #[test]
    fn devanagari_combining_marks_stay_devanagari() {
        // The dependent vowels and virama carry the Devanagari script
        // property themselves, so क्या is uniformly Devanagari.
        for c in "क्या".chars() {
            assert_eq!(script_of_char(c).name(), "Devanagari", "{c:?}");
        }
    }

    #[test]
    fn total_over_sampled_codepoints() {
        // Every scalar value must land in [0, 27).
        for u in (0u32..=0x10FFFF).step_by(97) {
            if let Some(c) = char::from_u32(u) {
                assert!(script_of_char(c).id() < NUM_SCRIPTS);
            }
        }
    }
}
