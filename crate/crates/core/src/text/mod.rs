//! Text cleaning, tokenization and sequence assembly.

mod assemble;
mod clean;
mod tokenizer;

pub use assemble::{
    assemble_instance, segment, truncate, AssembledSequence, SegmentBatch, TokenOrigin, TokenSequence,
};
pub use clean::{clean_bytes, clean_text};
pub use tokenizer::{train_tokenizer, SpecialIds, Tokenizer, TOKENIZER_FORMAT_VERSION};

/// Something that can count the tokens of a piece of text.
pub trait TokenCount {
    fn count_tokens(&self, text: &str) -> usize;
}

/// Counts pre-tokens (words and single punctuation marks) of cleaned text.
#[derive(Debug, Clone, Copy, Default)]
pub struct PreTokenCount;

impl TokenCount for PreTokenCount {
    fn count_tokens(&self, text: &str) -> usize {
        pre_tokens(&clean_text(text)).count()
    }
}

/// A word or punctuation mark with its char offsets in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreToken<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '\'' || c == '_'
}

/// Splits text into maximal runs of word characters (alphanumerics plus
/// `-`, `'`, `_`) and single-character punctuation tokens. Offsets are in
/// chars, not bytes.
pub fn pre_tokens(text: &str) -> impl Iterator<Item = PreToken<'_>> {
    let mut chars = text.char_indices().enumerate().peekable();
    std::iter::from_fn(move || {
        while let Some(&(_, (_, c))) = chars.peek() {
            if c.is_whitespace() {
                chars.next();
            } else {
                break;
            }
        }
        let (start_char, (start_byte, first)) = chars.next()?;
        let mut end_char = start_char + 1;
        let mut end_byte = start_byte + first.len_utf8();
        if is_word_char(first) {
            while let Some(&(ci, (bi, c))) = chars.peek() {
                if !is_word_char(c) {
                    break;
                }
                end_char = ci + 1;
                end_byte = bi + c.len_utf8();
                chars.next();
            }
        }
        Some(PreToken { text: &text[start_byte..end_byte], start: start_char, end: end_char })
    })
}
