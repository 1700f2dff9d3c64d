//! Readers and writers for the two corpus formats.
//!
//! * Annotated format: one `token<TAB>lang` line per token, a blank line
//!   between sentences. Produced by the generator and the predictor,
//!   consumed by training and evaluation.
//! * Monolingual TSV: one `lang<TAB>text` line per sentence.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lang::{LangId, LanguageRegistry};
use crate::text::{Sentence, Token};

/// A tokenized sentence with one gold language label per token.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSentence {
    pub sentence: Sentence,
    pub labels: Vec<LangId>,
}

impl LabeledSentence {
    pub fn new(sentence: Sentence, labels: Vec<LangId>) -> Self {
        debug_assert_eq!(sentence.len(), labels.len());
        LabeledSentence { sentence, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Reads an annotated corpus. Tokens are lowercased on the way in so files
/// annotated over raw text line up with the tokenizer's output.
pub fn read_annotated(reader: impl BufRead, registry: &LanguageRegistry) -> Result<Vec<LabeledSentence>> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut labels: Vec<LangId> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            flush_sentence(&mut tokens, &mut labels, &mut sentences);
            continue;
        }
        let Some((token_text, code)) = line.split_once('\t') else {
            return Err(Error::format(
                "annotated corpus",
                format!("line {line_no}: expected `token<TAB>lang`"),
            ));
        };
        let token = Token::new(token_text).map_err(|_| {
            Error::format("annotated corpus", format!("line {line_no}: bad token `{token_text}`"))
        })?;
        labels.push(registry.require(code.trim(), Some(line_no))?);
        tokens.push(token);
    }
    flush_sentence(&mut tokens, &mut labels, &mut sentences);
    Ok(sentences)
}

fn flush_sentence(
    tokens: &mut Vec<Token>,
    labels: &mut Vec<LangId>,
    out: &mut Vec<LabeledSentence>,
) {
    if !tokens.is_empty() {
        out.push(LabeledSentence::new(
            Sentence::from_tokens(std::mem::take(tokens)),
            std::mem::take(labels),
        ));
    }
}

pub fn read_annotated_file(path: impl AsRef<Path>, registry: &LanguageRegistry) -> Result<Vec<LabeledSentence>> {
    let file = std::fs::File::open(path)?;
    read_annotated(std::io::BufReader::new(file), registry)
}

/// Writes one sentence in the annotated format, including the trailing
/// blank separator line.
pub fn write_annotated_sentence(
    w: &mut impl Write,
    tokens: &[Token],
    labels: &[LangId],
    registry: &LanguageRegistry,
) -> Result<()> {
    debug_assert_eq!(tokens.len(), labels.len());
    for (token, &label) in tokens.iter().zip(labels) {
        writeln!(w, "{}\t{}", token.text(), registry.code(label))?;
    }
    writeln!(w)?;
    Ok(())
}
