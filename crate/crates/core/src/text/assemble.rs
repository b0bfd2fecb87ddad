use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{clean_text, Tokenizer};
use crate::corpus::Instance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Where a token of an assembled sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenOrigin {
    Start,
    Separator,
    /// `doc_index` indexes the instance's (chronologically sorted)
    /// documents; `start..end` is a char range of the cleaned text.
    Document { doc_index: usize, start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSequence {
    pub tokens: TokenSequence,
    pub origins: Vec<TokenOrigin>,
}

impl AssembledSequence {
    pub fn truncated(&self, max_len: usize) -> AssembledSequence {
        let n = self.tokens.len().min(max_len);
        AssembledSequence {
            tokens: TokenSequence::new(self.tokens.ids[..n].to_vec()),
            origins: self.origins[..n].to_vec(),
        }
    }
}

/// Builds the model input for an instance: the start token followed by
/// the documents most-recent-first, separated by the separator token.
pub fn assemble_instance(instance: &Instance, tokenizer: &Tokenizer) -> AssembledSequence {
    let sp = tokenizer.special();
    let mut order: Vec<usize> = (0..instance.documents.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&instance.documents[a], &instance.documents[b]);
        (db.timestamp, &db.doc_id).cmp(&(da.timestamp, &da.doc_id))
    });

    let mut ids = vec![sp.start];
    let mut origins = vec![TokenOrigin::Start];
    for (k, &doc_index) in order.iter().enumerate() {
        if k > 0 {
            ids.push(sp.sep);
            origins.push(TokenOrigin::Separator);
        }
        let text = clean_text(&instance.documents[doc_index].text);
        for (id, start, end) in tokenizer.encode_with_offsets(&text) {
            ids.push(id);
            origins.push(TokenOrigin::Document { doc_index, start, end });
        }
    }
    AssembledSequence { tokens: TokenSequence::new(ids), origins }
}

/// Keeps the first `max_len` ids.
pub fn truncate(seq: &TokenSequence, max_len: usize) -> Result<TokenSequence> {
    if max_len == 0 {
        return Err(Error::arg("max_len must be at least 1"));
    }
    Ok(TokenSequence::new(seq.ids[..seq.len().min(max_len)].to_vec()))
}

/// Fixed-size, non-overlapping segmentation of a sequence. Only the last
/// segment is padded.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBatch {
    pub segment_size: usize,
    pub segments: Array2<u32>,
    /// `true` marks a real token.
    pub pad_mask: Array2<bool>,
    pub original_length: usize,
}

impl SegmentBatch {
    pub fn num_segments(&self) -> usize {
        self.segments.nrows()
    }

    pub fn num_pads(&self) -> usize {
        self.pad_mask.iter().filter(|m| !**m).count()
    }

    /// Concatenates the unmasked positions in order.
    pub fn desegment(&self) -> TokenSequence {
        let ids = self
            .segments
            .iter()
            .zip(self.pad_mask.iter())
            .filter(|(_, &m)| m)
            .map(|(&id, _)| id)
            .collect();
        TokenSequence::new(ids)
    }
}

pub const MIN_SEGMENT_SIZE: usize = 8;

pub fn segment(seq: &TokenSequence, s: usize, pad_id: u32) -> Result<SegmentBatch> {
    if s < MIN_SEGMENT_SIZE {
        return Err(Error::arg(format!("segment size must be at least {MIN_SEGMENT_SIZE}, got {s}")));
    }
    let n = seq.len();
    let k = n.div_ceil(s).max(1);
    let mut segments = Array2::from_elem((k, s), pad_id);
    let mut pad_mask = Array2::from_elem((k, s), false);
    for (i, &id) in seq.ids.iter().enumerate() {
        segments[[i / s, i % s]] = id;
        pad_mask[[i / s, i % s]] = true;
    }
    Ok(SegmentBatch { segment_size: s, segments, pad_mask, original_length: n })
}
