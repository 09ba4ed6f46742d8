//! Planted models, ancestral sampling, and recovery of planted structure.

use std::collections::HashMap;
use std::hash::Hash;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{Assignment, CollapsedState};
use crate::corpus::{
    ArgType, ArgumentRecord, ClauseRecord, Corpus, Document, Vocabularies, Vocabulary,
};
use crate::error::{Error, Result};
use crate::evaluate::GoldEntity;
use crate::extract::{slot_key, ExtractedEntity};
use crate::params::{FrameParams, FrameRef, ModelParams, Smoothing, BKG, CNT};

/// Shape of a planted model. Every event and slot owns a block of `words` tokens that
/// receives `concentration` of its emission mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub frames: usize,
    pub events: usize,
    pub slots: usize,
    pub background_events: usize,
    pub background_slots: usize,
    pub words: usize,
    pub concentration: f64,
    pub p_background: f64,
    pub beta: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            frames: 2,
            events: 2,
            slots: 2,
            background_events: 1,
            background_slots: 2,
            words: 5,
            concentration: 0.9,
            p_background: 0.1,
            beta: 0.5,
        }
    }
}

/// Mass `mass` spread over `block`, the rest over all other tokens except the unknown
/// token at id 0, which gets nothing.
fn block_row(len: usize, block: std::ops::Range<usize>, mass: f64) -> Vec<f64> {
    let others = len - 1 - block.len();
    let inside = if others == 0 { 1.0 } else { mass };
    let mut row = vec![0.0; len];
    for (i, v) in row.iter_mut().enumerate().skip(1) {
        *v = if block.contains(&i) {
            inside / block.len() as f64
        } else {
            (1.0 - inside) / others as f64
        };
    }
    row
}

/// `mass` on `peak`, the remainder shared by the other entries.
fn peaked(len: usize, peak: usize, mass: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let mut row = vec![(1.0 - mass) / (len - 1) as f64; len];
    row[peak] = mass;
    row
}

struct Blocks {
    tokens: Vec<String>,
}

impl Blocks {
    fn new() -> Self {
        Blocks { tokens: Vec::new() }
    }

    /// Appends `n` tokens `{prefix}{j}` and returns their ids (offset by the unknown token).
    fn add(&mut self, prefix: &str, n: usize) -> std::ops::Range<usize> {
        let start = self.tokens.len() + 1;
        self.tokens.extend((0..n).map(|j| format!("{prefix}{j}")));
        start..start + n
    }
}

type Span = std::ops::Range<usize>;

#[allow(clippy::too_many_arguments)]
fn planted_frame(
    name: &str,
    events: usize,
    slots: usize,
    content: bool,
    spec: &PlantedSpec,
    heads: &mut Blocks,
    args: &mut Blocks,
    frames: &mut Blocks,
) -> (FrameParams, Vec<Span>, Vec<(Span, Span)>) {
    let event_blocks: Vec<_> = (0..events)
        .map(|e| heads.add(&format!("{name}e{e}w"), spec.words))
        .collect();
    let slot_blocks: Vec<_> = (0..slots)
        .map(|s| {
            (
                args.add(&format!("{name}s{s}a"), spec.words),
                frames.add(&format!("{name}s{s}c"), spec.words),
            )
        })
        .collect();
    let fp = FrameParams {
        event_init: vec![1.0 / events as f64; events],
        event_tran: if content {
            (0..events)
                .map(|e| peaked(events, (e + 1) % events, 0.7))
                .collect()
        } else {
            Vec::new()
        },
        event_head: Vec::new(),
        slot: (0..events)
            .map(|e| std::array::from_fn(|a| peaked(slots, (e + a) % slots, 0.8)))
            .collect(),
        arg_head: Vec::new(),
        arg_dep: Vec::new(),
    };
    (fp, event_blocks, slot_blocks)
}

/// A model with disjoint high-mass emission supports per event and slot, together with
/// the vocabularies its ids refer to.
pub fn planted_model(spec: &PlantedSpec) -> Result<(ModelParams, Vocabularies)> {
    if spec.frames == 0 || spec.events == 0 || spec.slots == 0 || spec.words == 0 {
        return Err(Error::InvalidConfig(
            "planted structure sizes must be positive".into(),
        ));
    }
    if spec.background_events == 0 || spec.background_slots == 0 {
        return Err(Error::InvalidConfig(
            "background needs at least one event and slot".into(),
        ));
    }
    if !(0.0..1.0).contains(&spec.p_background) || !(0.0..=1.0).contains(&spec.beta) {
        return Err(Error::InvalidConfig(
            "background rate and stickiness must be probabilities".into(),
        ));
    }
    let (mut heads, mut args, mut cfs) = (Blocks::new(), Blocks::new(), Blocks::new());
    let mut built = Vec::new();
    for f in 0..spec.frames {
        built.push(planted_frame(
            &format!("f{f}"),
            spec.events,
            spec.slots,
            true,
            spec,
            &mut heads,
            &mut args,
            &mut cfs,
        ));
    }
    built.push(planted_frame(
        "bg",
        spec.background_events,
        spec.background_slots,
        false,
        spec,
        &mut heads,
        &mut args,
        &mut cfs,
    ));
    let sizes = (
        heads.tokens.len() + 1,
        args.tokens.len() + 1,
        cfs.tokens.len() + 1,
    );
    let mut frames: Vec<FrameParams> = built
        .into_iter()
        .map(|(mut fp, eb, sb)| {
            fp.event_head = eb
                .into_iter()
                .map(|b| block_row(sizes.0, b, spec.concentration))
                .collect();
            fp.arg_head = sb
                .iter()
                .map(|(a, _)| block_row(sizes.1, a.clone(), spec.concentration))
                .collect();
            fp.arg_dep = sb
                .into_iter()
                .map(|(_, c)| block_row(sizes.2, c, spec.concentration))
                .collect();
            fp
        })
        .collect();
    let background = frames.pop().expect("background frame");
    let n = spec.frames;
    let params = ModelParams {
        switch: [spec.p_background, 1.0 - spec.p_background],
        frame_init: vec![1.0 / n as f64; n],
        frame_tran: vec![vec![1.0 / n as f64; n]; n],
        frames,
        background,
        beta: spec.beta,
        smoothing: Smoothing::default(),
    };
    let vocab = Vocabularies {
        event_heads: Vocabulary::from_tokens(heads.tokens),
        arg_heads: Vocabulary::from_tokens(args.tokens),
        caseframes: Vocabulary::from_tokens(cfs.tokens),
    };
    params.validate(1e-9)?;
    Ok((params, vocab))
}

/// Inclusive bounds of a uniform count distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub documents: usize,
    pub clauses: CountRange,
    pub args: CountRange,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            documents: 100,
            clauses: CountRange { min: 2, max: 8 },
            args: CountRange { min: 0, max: 3 },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseTruth {
    pub state: CollapsedState,
    pub bkg_event: Option<usize>,
    pub slots: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTruth {
    pub doc_id: String,
    pub clauses: Vec<ClauseTruth>,
    /// Log probability of the sampled configuration and observations.
    pub log_joint: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    pub truth: Vec<DocTruth>,
}

fn dep_label(arg_type: ArgType) -> &'static str {
    match arg_type {
        ArgType::Subj => "nsubj",
        ArgType::Obj => "dobj",
        ArgType::Prep => "prep_in",
    }
}

fn draw<R: Rng>(rng: &mut R, row: &[f64], log_joint: &mut f64) -> Result<usize> {
    let dist = WeightedIndex::new(row)
        .map_err(|e| Error::NumericDegeneracy(format!("cannot sample from row: {e}")))?;
    let i = dist.sample(rng);
    *log_joint += row[i].ln();
    Ok(i)
}

fn sample_document<R: Rng>(
    params: &ModelParams,
    vocab: &Vocabularies,
    doc_id: String,
    opts: &SampleOptions,
    rng: &mut R,
) -> Result<(Document, DocTruth)> {
    let len = rng.gen_range(opts.clauses.min..=opts.clauses.max);
    let mut lj = 0.0;
    let mut records = Vec::with_capacity(len);
    let mut truth = Vec::with_capacity(len);
    let mut prev: Option<CollapsedState> = None;
    for i in 0..len {
        let state = match prev {
            None => {
                let frame = draw(rng, &params.frame_init, &mut lj)?;
                let event = draw(rng, &params.frames[frame].event_init, &mut lj)?;
                CollapsedState {
                    frame,
                    event,
                    bkg: false,
                }
            }
            Some(p) => {
                if draw(rng, &params.switch, &mut lj)? == BKG {
                    CollapsedState { bkg: true, ..p }
                } else {
                    debug_assert_eq!(CNT, 1);
                    let beta = params.beta;
                    let row: Vec<f64> = params.frame_tran[p.frame]
                        .iter()
                        .enumerate()
                        .map(|(f, t)| (1.0 - beta) * t + if f == p.frame { beta } else { 0.0 })
                        .collect();
                    let frame = draw(rng, &row, &mut lj)?;
                    let fp = &params.frames[frame];
                    let event = if frame == p.frame {
                        draw(rng, &fp.event_tran[p.event], &mut lj)?
                    } else {
                        draw(rng, &fp.event_init, &mut lj)?
                    };
                    CollapsedState {
                        frame,
                        event,
                        bkg: false,
                    }
                }
            }
        };
        let (fp, event, bkg_event) = if state.bkg {
            let b = draw(rng, &params.background.event_init, &mut lj)?;
            (&params.background, b, Some(b))
        } else {
            (&params.frames[state.frame], state.event, None)
        };
        let head = draw(rng, &fp.event_head[event], &mut lj)?;
        let head_lemma = vocab.event_heads.token(head as u32).to_string();
        let n_args = rng.gen_range(opts.args.min..=opts.args.max);
        let mut args = Vec::with_capacity(n_args);
        let mut slots = Vec::with_capacity(n_args);
        for _ in 0..n_args {
            let arg_type = ArgType::ALL[rng.gen_range(0..3)];
            let s = draw(rng, &fp.slot[event][arg_type.index()], &mut lj)?;
            let a = draw(rng, &fp.arg_head[s], &mut lj)?;
            let c = draw(rng, &fp.arg_dep[s], &mut lj)?;
            args.push(ArgumentRecord {
                arg_type,
                head_lemma: vocab.arg_heads.token(a as u32).to_string(),
                dep_label: dep_label(arg_type).to_string(),
                caseframe: vocab.caseframes.token(c as u32).to_string(),
            });
            slots.push(s);
        }
        records.push(ClauseRecord {
            doc_id: doc_id.clone(),
            sentence_index: i as u32,
            clause_index: i as u32,
            event_head_lemma: head_lemma,
            args,
        });
        truth.push(ClauseTruth {
            state,
            bkg_event,
            slots,
        });
        prev = Some(state);
    }
    Ok((
        Document {
            doc_id: doc_id.clone(),
            clauses: records,
        },
        DocTruth {
            doc_id,
            clauses: truth,
            log_joint: lj,
        },
    ))
}

/// Ancestral sampling of `opts.documents` documents. Document `i` uses its own stream
/// of a generator seeded with `opts.seed`, so output does not depend on scheduling.
pub fn sample_corpus(
    params: &ModelParams,
    vocab: &Vocabularies,
    opts: &SampleOptions,
) -> Result<PlantedCorpus> {
    params.validate(1e-9)?;
    if vocab.sizes() != params.vocab_sizes() {
        return Err(Error::ShapeMismatch(
            "vocabulary does not match the model tables".into(),
        ));
    }
    if opts.clauses.min == 0 || opts.clauses.min > opts.clauses.max || opts.args.min > opts.args.max
    {
        return Err(Error::InvalidConfig(
            "clause and argument count ranges must be non-empty with at least one clause".into(),
        ));
    }
    let width = opts.documents.to_string().len();
    let sampled: Vec<(Document, DocTruth)> = (0..opts.documents)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            sample_document(params, vocab, format!("doc{i:0width$}"), opts, &mut rng)
        })
        .collect::<Result<_>>()?;
    let (documents, truth) = sampled.into_iter().unzip();
    Ok(PlantedCorpus {
        corpus: Corpus { documents },
        truth,
    })
}

impl PlantedCorpus {
    /// Content-slot arguments in the entity output format.
    pub fn truth_entities(&self) -> Vec<ExtractedEntity> {
        let mut out = Vec::new();
        for (doc, t) in self.corpus.documents.iter().zip(&self.truth) {
            for (ci, (clause, ct)) in doc.clauses.iter().zip(&t.clauses).enumerate() {
                if ct.state.bkg {
                    continue;
                }
                for (ai, (arg, &s)) in clause.args.iter().zip(&ct.slots).enumerate() {
                    out.push(ExtractedEntity {
                        doc_id: doc.doc_id.clone(),
                        frame: ct.state.frame,
                        event: ct.state.event,
                        slot: s,
                        head_lemma: arg.head_lemma.clone(),
                        clause_index: ci,
                        arg_index: ai,
                    });
                }
            }
        }
        out
    }

    /// Gold entities named by planted slot, one per content-slot argument.
    pub fn gold_entities(&self) -> Vec<GoldEntity> {
        self.truth_entities()
            .into_iter()
            .map(|e| GoldEntity {
                doc_id: e.doc_id,
                gold_slot: slot_key(e.frame, e.slot),
                head_lemma: e.head_lemma,
                optional: false,
                template: format!("f{}", e.frame),
            })
            .collect()
    }

    pub fn truth_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.truth {
            out.push_str(&serde_json::to_string(t).expect("truth serializes"));
            out.push('\n');
        }
        out
    }
}

/// Agreement between planted and decoded labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// Micro-F1 of argument slot labels under the best one-to-one label mapping.
    pub slot_f1: f64,
    /// Fraction of clauses whose decoded event label agrees with the majority planted
    /// event label of that decoded label.
    pub event_purity: f64,
    pub args: usize,
    pub clauses: usize,
}

/// Size of the best one-to-one matching between the two label sets.
fn matched<A: Eq + Hash + Clone, B: Eq + Hash + Clone>(pairs: &[(A, B)]) -> usize {
    let mut rows: HashMap<A, usize> = HashMap::new();
    let mut cols: HashMap<B, usize> = HashMap::new();
    for (a, b) in pairs {
        let n = rows.len();
        rows.entry(a.clone()).or_insert(n);
        let n = cols.len();
        cols.entry(b.clone()).or_insert(n);
    }
    let size = rows.len().max(cols.len());
    if size == 0 {
        return 0;
    }
    let mut m = Matrix::new(size, size, 0i64);
    for (a, b) in pairs {
        m[(rows[a], cols[b])] += 1;
    }
    let (total, _) = kuhn_munkres(&m);
    total as usize
}

fn purity<A: Eq + Hash + Clone, B: Eq + Hash + Clone>(pairs: &[(A, B)]) -> f64 {
    if pairs.is_empty() {
        return 1.0;
    }
    let mut counts: HashMap<B, HashMap<A, usize>> = HashMap::new();
    for (a, b) in pairs {
        *counts
            .entry(b.clone())
            .or_default()
            .entry(a.clone())
            .or_default() += 1;
    }
    let majority: usize = counts
        .values()
        .map(|c| c.values().copied().max().unwrap_or(0))
        .sum();
    majority as f64 / pairs.len() as f64
}

fn event_label(state: CollapsedState, bkg_event: Option<usize>) -> (FrameRef, usize) {
    if state.bkg {
        (FrameRef::Background, bkg_event.unwrap_or(0))
    } else {
        (FrameRef::Content(state.frame), state.event)
    }
}

pub fn recovery_score(truth: &[DocTruth], decoded: &[Assignment]) -> Result<Recovery> {
    if truth.len() != decoded.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} planted documents but {} decoded",
            truth.len(),
            decoded.len()
        )));
    }
    let mut slot_pairs = Vec::new();
    let mut event_pairs = Vec::new();
    for (t, d) in truth.iter().zip(decoded) {
        if t.clauses.len() != d.clauses.len() {
            return Err(Error::ShapeMismatch(format!(
                "document {} differs in length",
                t.doc_id
            )));
        }
        for (tc, dc) in t.clauses.iter().zip(&d.clauses) {
            if tc.slots.len() != dc.slots.len() {
                return Err(Error::ShapeMismatch(format!(
                    "document {} differs in argument count",
                    t.doc_id
                )));
            }
            let truth_frame = if tc.state.bkg {
                FrameRef::Background
            } else {
                FrameRef::Content(tc.state.frame)
            };
            for (&s, choice) in tc.slots.iter().zip(&dc.slots) {
                slot_pairs.push(((truth_frame, s), (choice.frame, choice.slot)));
            }
            event_pairs.push((
                event_label(tc.state, tc.bkg_event),
                event_label(dc.state, dc.bkg_event),
            ));
        }
    }
    let args = slot_pairs.len();
    let slot_f1 = if args == 0 {
        1.0
    } else {
        matched(&slot_pairs) as f64 / args as f64
    };
    Ok(Recovery {
        slot_f1,
        event_purity: purity(&event_pairs),
        args,
        clauses: event_pairs.len(),
    })
}
