//! Decoding, frame-specific document classification, and frame reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{viterbi_with, Assignment, LogTables, StateSpace};
use crate::corpus::{index_document, Corpus, IndexedDocument, Vocabularies, Vocabulary, UNK_ID};
use crate::error::{Error, Result};
use crate::params::{FrameRef, ModelParams};

/// One argument assigned to a content slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExtractedEntity {
    pub doc_id: String,
    pub frame: usize,
    pub event: usize,
    pub slot: usize,
    pub head_lemma: String,
    pub clause_index: usize,
    pub arg_index: usize,
}

impl ExtractedEntity {
    /// Frame-qualified slot key, e.g. `f2.s1`.
    pub fn slot_key(&self) -> String {
        slot_key(self.frame, self.slot)
    }
}

pub fn slot_key(frame: usize, slot: usize) -> String {
    format!("f{frame}.s{slot}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub assignments: Vec<Assignment>,
    pub entities: Vec<ExtractedEntity>,
    /// Arguments that fell in background slots and were left out of `entities`.
    pub background_args: usize,
}

/// Viterbi-decodes every document and lists one entity per argument in a content slot.
pub fn decode_corpus(
    params: &ModelParams,
    vocab: &Vocabularies,
    corpus: &Corpus,
) -> Result<Decoded> {
    if vocab.sizes() != params.vocab_sizes() {
        return Err(Error::ShapeMismatch(
            "vocabulary does not match the model tables".into(),
        ));
    }
    let t = LogTables::new(params);
    let space = StateSpace::of_params(params);
    let assignments: Vec<Assignment> = corpus
        .documents
        .par_iter()
        .map(|d| viterbi_with(&t, &space, &index_document(d, vocab)))
        .collect::<Result<_>>()?;
    let mut entities = Vec::new();
    let mut background_args = 0;
    for (doc, a) in corpus.documents.iter().zip(&assignments) {
        for (ci, (clause, ca)) in doc.clauses.iter().zip(&a.clauses).enumerate() {
            for (ai, (arg, choice)) in clause.args.iter().zip(&ca.slots).enumerate() {
                match choice.frame {
                    FrameRef::Background => background_args += 1,
                    FrameRef::Content(f) => entities.push(ExtractedEntity {
                        doc_id: doc.doc_id.clone(),
                        frame: f,
                        event: ca.state.event,
                        slot: choice.slot,
                        head_lemma: arg.head_lemma.clone(),
                        clause_index: ci,
                        arg_index: ai,
                    }),
                }
            }
        }
    }
    Ok(Decoded {
        assignments,
        entities,
        background_args,
    })
}

pub fn entities_to_jsonl(entities: &[ExtractedEntity]) -> String {
    let mut out = String::new();
    for e in entities {
        out.push_str(&serde_json::to_string(e).expect("entity serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_entities<R: BufRead>(reader: R) -> Result<Vec<ExtractedEntity>> {
    crate::corpus::parse_jsonl(reader)
}

/// `P_F(w)`: the mean event-head probability of `word` over the events of content
/// frame `frame`.
pub fn frame_word_prob_id(params: &ModelParams, frame: usize, word: u32) -> f64 {
    let rows = &params.frames[frame].event_head;
    rows.iter().map(|r| r[word as usize]).sum::<f64>() / rows.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WordProb {
    pub prob: f64,
    pub oov: bool,
}

/// [`frame_word_prob_id`] by lemma; out-of-vocabulary words get probability zero.
pub fn frame_word_prob(
    params: &ModelParams,
    vocab: &Vocabulary,
    frame: usize,
    word: &str,
) -> WordProb {
    match vocab.get(word) {
        Some(id) => WordProb {
            prob: frame_word_prob_id(params, frame, id),
            oov: false,
        },
        None => WordProb {
            prob: 0.0,
            oov: true,
        },
    }
}

/// `P(F | w)` over content frames.
pub fn frame_posterior(params: &ModelParams, word: u32) -> Result<Vec<f64>> {
    let scores: Vec<f64> = (0..params.num_frames())
        .map(|f| frame_word_prob_id(params, f, word))
        .collect();
    let z: f64 = scores.iter().sum();
    if z.is_nan() || z <= 0.0 {
        return Err(Error::UndefinedPosterior(format!(
            "word id {word} has zero probability under every frame"
        )));
    }
    Ok(scores.into_iter().map(|s| s / z).collect())
}

pub const DEFAULT_TRIGGER_THRESHOLD: f64 = 0.2;

/// Whether `doc` belongs to `frame`: the token-averaged `P_F(w)` over its event heads
/// exceeds `avg_threshold` and some head has `P(F | w) > trigger_threshold`. Unknown
/// heads count as probability zero and never trigger.
pub fn classify_document(
    params: &ModelParams,
    doc: &IndexedDocument,
    frame: usize,
    avg_threshold: f64,
    trigger_threshold: f64,
) -> bool {
    if doc.clauses.is_empty() {
        return false;
    }
    let mut total = 0.0;
    let mut trigger = false;
    for c in &doc.clauses {
        if c.head == UNK_ID {
            continue;
        }
        total += frame_word_prob_id(params, frame, c.head);
        if !trigger {
            trigger = frame_posterior(params, c.head).is_ok_and(|p| p[frame] > trigger_threshold);
        }
    }
    trigger && total / doc.clauses.len() as f64 > avg_threshold
}

/// Content frames each document is classified into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentFrames {
    pub doc_id: String,
    pub frames: Vec<usize>,
}

pub fn classify_corpus(
    params: &ModelParams,
    docs: &[IndexedDocument],
    avg_threshold: f64,
    trigger_threshold: f64,
) -> Vec<DocumentFrames> {
    docs.par_iter()
        .map(|d| DocumentFrames {
            doc_id: d.doc_id.clone(),
            frames: (0..params.num_frames())
                .filter(|&f| classify_document(params, d, f, avg_threshold, trigger_threshold))
                .collect(),
        })
        .collect()
}

/// Keeps the entities whose frame their document was classified into.
pub fn restrict_to_frames(
    entities: &[ExtractedEntity],
    labels: &[DocumentFrames],
) -> Vec<ExtractedEntity> {
    let allowed: HashMap<&str, &[usize]> = labels
        .iter()
        .map(|l| (l.doc_id.as_str(), l.frames.as_slice()))
        .collect();
    entities
        .iter()
        .filter(|e| {
            allowed
                .get(e.doc_id.as_str())
                .is_some_and(|f| f.contains(&e.frame))
        })
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedWord {
    pub word: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub event: usize,
    pub heads: Vec<WeightedWord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSummary {
    pub slot: usize,
    pub heads: Vec<WeightedWord>,
    pub caseframes: Vec<WeightedWord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub frame: FrameRef,
    pub events: Vec<EventSummary>,
    pub slots: Vec<SlotSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub top_k: usize,
    pub frames: Vec<FrameSummary>,
}

/// The `k` most probable entries of `row`, ties broken by id.
fn top_k(row: &[f64], vocab: &Vocabulary, k: usize) -> Vec<WeightedWord> {
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    ids.into_iter()
        .take(k)
        .map(|i| WeightedWord {
            word: vocab.token(i as u32).to_string(),
            prob: row[i],
        })
        .collect()
}

/// Most probable event heads per event and argument heads and caseframes per slot,
/// for every frame including the background.
pub fn dump_frames(params: &ModelParams, vocab: &Vocabularies, k: usize) -> Result<FrameReport> {
    if k == 0 {
        return Err(Error::InvalidConfig("top-k must be at least 1".into()));
    }
    if vocab.sizes() != params.vocab_sizes() {
        return Err(Error::ShapeMismatch(
            "vocabulary does not match the model tables".into(),
        ));
    }
    let frames = params
        .frame_refs()
        .map(|frame| {
            let fp = params.frame(frame);
            FrameSummary {
                frame,
                events: fp
                    .event_head
                    .iter()
                    .enumerate()
                    .map(|(event, row)| EventSummary {
                        event,
                        heads: top_k(row, &vocab.event_heads, k),
                    })
                    .collect(),
                slots: (0..fp.arg_head.len())
                    .map(|slot| SlotSummary {
                        slot,
                        heads: top_k(&fp.arg_head[slot], &vocab.arg_heads, k),
                        caseframes: top_k(&fp.arg_dep[slot], &vocab.caseframes, k),
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(FrameReport { top_k: k, frames })
}

fn words(list: &[WeightedWord]) -> String {
    list.iter()
        .map(|w| format!("{} ({:.3})", w.word, w.prob))
        .collect::<Vec<_>>()
        .join(", ")
}

impl FrameReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.frames {
            let name = match f.frame {
                FrameRef::Content(i) => format!("Frame {i}"),
                FrameRef::Background => "Background".to_string(),
            };
            let _ = writeln!(out, "{name}");
            for e in &f.events {
                let _ = writeln!(out, "  Event {}: {}", e.event, words(&e.heads));
            }
            for s in &f.slots {
                let _ = writeln!(out, "  Slot {}: {}", s.slot, words(&s.heads));
                let _ = writeln!(out, "    caseframes: {}", words(&s.caseframes));
            }
            out.push('\n');
        }
        out
    }
}
