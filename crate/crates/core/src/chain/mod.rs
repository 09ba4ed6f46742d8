//! Collapsed-state chain inference.
//!
//! Each clause carries one hidden label `(frame, event, background flag)`. Content
//! states come first in frame-major, event-minor order, followed by the background
//! copies in the same order; Viterbi ties resolve to the lowest state index.
//!
//! A background state keeps the nominal `(frame, event)` of its predecessor, while the
//! clause itself is emitted by the background frame with its event marginalized under
//! the background entry distribution. The first clause is always a content clause.

mod oracle;
mod tables;

pub use oracle::{brute_force_loglik, exhaustive_viterbi, ORACLE_LIMIT};
pub use tables::{
    ClauseEmission, CountEmissions, DenseEmissions, EmissionLookup, EmissionTotals, LogTables,
};

use serde::{Deserialize, Serialize};

use crate::corpus::{IndexedClause, IndexedDocument};
use crate::error::{Error, Result};
use crate::math::{argmax, ln, log_add, log_sum_exp};
use crate::params::{FrameRef, ModelParams, StructureConfig, BKG, CNT};

/// Hidden label of one clause. `frame`/`event` are the nominal content frame and event;
/// `bkg` marks a clause emitted by the background frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CollapsedState {
    pub frame: usize,
    pub event: usize,
    pub bkg: bool,
}

/// Enumerates collapsed states for a structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    offsets: Vec<usize>,
    events: Vec<usize>,
    nominal: usize,
}

impl StateSpace {
    pub fn new(events_per_frame: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(events_per_frame.len());
        let mut total = 0;
        for &e in events_per_frame {
            offsets.push(total);
            total += e;
        }
        StateSpace {
            offsets,
            events: events_per_frame.to_vec(),
            nominal: total,
        }
    }

    pub fn of_params(params: &ModelParams) -> Self {
        StateSpace::new(
            &params
                .frames
                .iter()
                .map(|f| f.event_init.len())
                .collect::<Vec<_>>(),
        )
    }

    pub fn of_structure(config: &StructureConfig) -> Self {
        StateSpace::new(&config.events_per_frame())
    }

    /// Number of collapsed states (twice the number of content events).
    pub fn len(&self) -> usize {
        2 * self.nominal
    }

    pub fn is_empty(&self) -> bool {
        self.nominal == 0
    }

    pub fn num_nominal(&self) -> usize {
        self.nominal
    }

    pub fn num_frames(&self) -> usize {
        self.events.len()
    }

    pub fn events(&self, frame: usize) -> usize {
        self.events[frame]
    }

    pub fn offset(&self, frame: usize) -> usize {
        self.offsets[frame]
    }

    pub fn index(&self, s: CollapsedState) -> Option<usize> {
        if s.frame >= self.events.len() || s.event >= self.events[s.frame] {
            return None;
        }
        let k = self.offsets[s.frame] + s.event;
        Some(if s.bkg { self.nominal + k } else { k })
    }

    pub fn state(&self, index: usize) -> CollapsedState {
        let bkg = index >= self.nominal;
        let k = if bkg { index - self.nominal } else { index };
        let frame = self.offsets.partition_point(|&o| o <= k) - 1;
        CollapsedState {
            frame,
            event: k - self.offsets[frame],
            bkg,
        }
    }

    pub fn states(&self) -> impl Iterator<Item = CollapsedState> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }
}

/// Forward and backward log-messages for one document.
#[derive(Debug, Clone)]
pub struct Trellis {
    pub space: StateSpace,
    pub log_alpha: Vec<Vec<f64>>,
    pub log_beta: Vec<Vec<f64>>,
    pub emissions: Vec<ClauseEmission>,
    pub loglik: f64,
}

impl Trellis {
    /// Posterior over collapsed states at clause `i`.
    pub fn posterior(&self, i: usize) -> Vec<f64> {
        self.log_alpha[i]
            .iter()
            .zip(&self.log_beta[i])
            .map(|(a, b)| (a + b - self.loglik).exp())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.log_alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_alpha.is_empty()
    }
}

/// Predecessor-side summaries reused by the forward pass and the E-step.
pub(crate) struct Predecessors {
    /// Per nominal state: mass summed over both background flags.
    pub combined: Vec<f64>,
    /// Per frame: `combined` summed over the frame's events.
    pub per_frame: Vec<f64>,
}

pub(crate) fn predecessors(space: &StateSpace, alpha: &[f64]) -> Predecessors {
    let n = space.num_nominal();
    let combined: Vec<f64> = (0..n).map(|k| log_add(alpha[k], alpha[n + k])).collect();
    let per_frame = (0..space.num_frames())
        .map(|f| {
            let o = space.offset(f);
            log_sum_exp(combined[o..o + space.events(f)].iter().copied())
        })
        .collect();
    Predecessors {
        combined,
        per_frame,
    }
}

/// `ln sum_{f != target} exp(per_frame[f] + cross[f][target])`.
pub(crate) fn cross_inflow<E>(t: &LogTables<E>, per_frame: &[f64], target: usize) -> f64 {
    log_sum_exp(
        (0..per_frame.len())
            .filter(|&f| f != target)
            .map(|f| per_frame[f] + t.cross[f][target]),
    )
}

/// Log predecessor flow into every state of a clause, before its emission: the initial
/// distribution when `prev` is `None`, otherwise the transition-weighted forward mass.
pub(crate) fn inflow<E>(t: &LogTables<E>, space: &StateSpace, prev: Option<&[f64]>) -> Vec<f64> {
    let n = space.num_nominal();
    let mut pre = vec![f64::NEG_INFINITY; 2 * n];
    let prev = match prev {
        None => {
            for f in 0..space.num_frames() {
                for e in 0..space.events(f) {
                    pre[space.offset(f) + e] = t.frame_init[f] + t.event_init[f][e];
                }
            }
            return pre;
        }
        Some(p) => predecessors(space, p),
    };
    for f in 0..space.num_frames() {
        let o = space.offset(f);
        let ne = space.events(f);
        let cross = cross_inflow(t, &prev.per_frame, f);
        for e2 in 0..ne {
            let same = log_sum_exp((0..ne).map(|e| prev.combined[o + e] + t.event_tran[f][e][e2]))
                + t.stay[f];
            pre[o + e2] = t.switch[CNT] + log_add(same, cross + t.event_init[f][e2]);
            pre[n + o + e2] = t.switch[BKG] + prev.combined[o + e2];
        }
    }
    pre
}

pub(crate) fn forward<E: EmissionLookup>(
    t: &LogTables<E>,
    space: &StateSpace,
    em: &[ClauseEmission],
) -> Vec<Vec<f64>> {
    let n = space.num_nominal();
    let mut alphas: Vec<Vec<f64>> = Vec::with_capacity(em.len());
    for (i, emi) in em.iter().enumerate() {
        let mut a = inflow(t, space, alphas.last().map(Vec::as_slice));
        for f in 0..space.num_frames() {
            let o = space.offset(f);
            for e in 0..space.events(f) {
                a[o + e] += emi.event[f][e];
                a[n + o + e] += emi.bkg;
            }
        }
        if i == 0 {
            a[n..].fill(f64::NEG_INFINITY);
        }
        alphas.push(a);
    }
    alphas
}

pub(crate) fn backward<E: EmissionLookup>(
    t: &LogTables<E>,
    space: &StateSpace,
    em: &[ClauseEmission],
) -> Vec<Vec<f64>> {
    let n = space.num_nominal();
    let len = em.len();
    let mut betas = vec![vec![0.0; 2 * n]; len];
    for i in (0..len.saturating_sub(1)).rev() {
        let next = &betas[i + 1];
        let en = &em[i + 1];
        // entering frame f' from elsewhere
        let entry: Vec<f64> = (0..space.num_frames())
            .map(|f2| {
                let o = space.offset(f2);
                log_sum_exp(
                    (0..space.events(f2))
                        .map(|e2| t.event_init[f2][e2] + en.event[f2][e2] + next[o + e2]),
                )
            })
            .collect();
        let mut cur = vec![f64::NEG_INFINITY; 2 * n];
        for f in 0..space.num_frames() {
            let o = space.offset(f);
            let ne = space.events(f);
            let leave = log_sum_exp(
                (0..space.num_frames())
                    .filter(|&f2| f2 != f)
                    .map(|f2| t.cross[f][f2] + entry[f2]),
            );
            for e in 0..ne {
                let same = log_sum_exp(
                    (0..ne).map(|e2| t.event_tran[f][e][e2] + en.event[f][e2] + next[o + e2]),
                );
                let content = t.switch[CNT] + log_add(t.stay[f] + same, leave);
                let background = t.switch[BKG] + en.bkg + next[n + o + e];
                let v = log_add(content, background);
                cur[o + e] = v;
                cur[n + o + e] = v;
            }
        }
        betas[i] = cur;
    }
    betas
}

pub(crate) fn forward_backward_with<E: EmissionLookup>(
    t: &LogTables<E>,
    space: &StateSpace,
    doc: &IndexedDocument,
) -> Result<Trellis> {
    if doc.clauses.is_empty() {
        return Err(Error::Integrity(format!(
            "document {} is empty",
            doc.doc_id
        )));
    }
    let emissions: Vec<ClauseEmission> = doc.clauses.iter().map(|c| t.clause_emission(c)).collect();
    let log_alpha = forward(t, space, &emissions);
    let loglik = log_sum_exp(log_alpha.last().expect("non-empty").iter().copied());
    if !loglik.is_finite() {
        return Err(Error::NumericDegeneracy(format!(
            "document {} has log-likelihood {loglik}",
            doc.doc_id
        )));
    }
    let log_beta = backward(t, space, &emissions);
    Ok(Trellis {
        space: space.clone(),
        log_alpha,
        log_beta,
        emissions,
        loglik,
    })
}

pub fn forward_backward(params: &ModelParams, doc: &IndexedDocument) -> Result<Trellis> {
    let tables = LogTables::new(params);
    forward_backward_with(&tables, &StateSpace::of_params(params), doc)
}

/// `ln P(D)` for every document, summed.
pub fn corpus_loglik(params: &ModelParams, docs: &[IndexedDocument]) -> Result<f64> {
    use rayon::prelude::*;
    let tables = LogTables::new(params);
    let space = StateSpace::of_params(params);
    let per_doc: Vec<f64> = docs
        .par_iter()
        .map(|d| forward_backward_with(&tables, &space, d).map(|t| t.loglik))
        .collect::<Result<_>>()?;
    Ok(per_doc.iter().sum())
}

/// Log emission of one clause under one collapsed state.
pub fn clause_log_emission(
    params: &ModelParams,
    clause: &IndexedClause,
    state: CollapsedState,
) -> f64 {
    let t = LogTables::new(params);
    let em = t.clause_emission(clause);
    if state.bkg {
        em.bkg
    } else {
        em.event[state.frame][state.event]
    }
}

/// Log probability of the first clause's state.
pub fn initial_log_prob(params: &ModelParams, state: CollapsedState) -> f64 {
    if state.bkg {
        return f64::NEG_INFINITY;
    }
    ln(params.frame_init[state.frame]) + ln(params.frames[state.frame].event_init[state.event])
}

/// `ln[P_BKG(next.bkg) * P_FRAME(next | prev) * P_EVENT(next | prev)]`.
pub fn transition_log_prob(
    params: &ModelParams,
    prev: CollapsedState,
    next: CollapsedState,
) -> f64 {
    if next.bkg {
        return if next.frame == prev.frame && next.event == prev.event {
            ln(params.switch[BKG])
        } else {
            f64::NEG_INFINITY
        };
    }
    let beta = params.beta;
    let same = next.frame == prev.frame;
    let frame =
        if same { beta } else { 0.0 } + (1.0 - beta) * params.frame_tran[prev.frame][next.frame];
    let event = if same {
        params.frames[next.frame].event_tran[prev.event][next.event]
    } else {
        params.frames[next.frame].event_init[next.event]
    };
    ln(params.switch[CNT]) + ln(frame) + ln(event)
}

/// Slot chosen for one argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotChoice {
    pub frame: FrameRef,
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseAssignment {
    pub state: CollapsedState,
    /// Most probable background event, for background clauses.
    pub bkg_event: Option<usize>,
    pub slots: Vec<SlotChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub doc_id: String,
    pub clauses: Vec<ClauseAssignment>,
    /// Log joint of the decoded state path, slots and background events marginalized.
    pub log_joint: f64,
}

impl Assignment {
    pub fn path(&self) -> Vec<CollapsedState> {
        self.clauses.iter().map(|c| c.state).collect()
    }
}

#[inline]
fn better(v: f64, idx: usize, best: (f64, usize)) -> bool {
    v > best.0 || (v == best.0 && idx < best.1)
}

/// Most probable collapsed-state path by max-product over the same factorization as
/// [`forward`]. Returns the path and its log joint.
pub(crate) fn viterbi_path<E: EmissionLookup>(
    t: &LogTables<E>,
    space: &StateSpace,
    em: &[ClauseEmission],
) -> (Vec<usize>, f64) {
    let n = space.num_nominal();
    let nf = space.num_frames();
    let none = (f64::NEG_INFINITY, usize::MAX);
    let mut delta = vec![f64::NEG_INFINITY; 2 * n];
    for f in 0..nf {
        for e in 0..space.events(f) {
            delta[space.offset(f) + e] = t.frame_init[f] + t.event_init[f][e] + em[0].event[f][e];
        }
    }
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(em.len());
    for emi in em.iter().skip(1) {
        let mut ptr = vec![usize::MAX; 2 * n];
        let mut next = vec![f64::NEG_INFINITY; 2 * n];
        // best predecessor arriving from outside each target frame, before the entry row
        let cross_best: Vec<(f64, usize)> = (0..nf)
            .map(|f2| {
                let mut best = none;
                for idx in 0..2 * n {
                    let k = if idx < n { idx } else { idx - n };
                    let src = space.state(k).frame;
                    if src == f2 {
                        continue;
                    }
                    let v = delta[idx] + t.cross[src][f2];
                    if better(v, idx, best) {
                        best = (v, idx);
                    }
                }
                best
            })
            .collect();
        for f in 0..nf {
            let o = space.offset(f);
            let ne = space.events(f);
            for e2 in 0..ne {
                let mut best = none;
                for idx in (o..o + ne).chain(n + o..n + o + ne) {
                    let e = if idx < n { idx - o } else { idx - n - o };
                    let v = delta[idx] + t.stay[f] + t.event_tran[f][e][e2];
                    if better(v, idx, best) {
                        best = (v, idx);
                    }
                }
                let (cv, ci) = cross_best[f];
                let cv = cv + t.event_init[f][e2];
                if better(cv, ci, best) {
                    best = (cv, ci);
                }
                next[o + e2] = t.switch[CNT] + best.0 + emi.event[f][e2];
                ptr[o + e2] = best.1;

                let k = o + e2;
                let (v, idx) = if better(delta[n + k], n + k, (delta[k], k)) {
                    (delta[n + k], n + k)
                } else {
                    (delta[k], k)
                };
                next[n + k] = t.switch[BKG] + v + emi.bkg;
                ptr[n + k] = idx;
            }
        }
        back.push(ptr);
        delta = next;
    }
    let last = argmax(&delta);
    let score = delta[last];
    let mut path = vec![last];
    for ptr in back.iter().rev() {
        let prev = ptr[*path.last().expect("non-empty")];
        path.push(prev);
    }
    path.reverse();
    (path, score)
}

pub(crate) fn viterbi_with<E: EmissionLookup>(
    t: &LogTables<E>,
    space: &StateSpace,
    doc: &IndexedDocument,
) -> Result<Assignment> {
    if doc.clauses.is_empty() {
        return Err(Error::Integrity(format!(
            "document {} is empty",
            doc.doc_id
        )));
    }
    let em: Vec<ClauseEmission> = doc.clauses.iter().map(|c| t.clause_emission(c)).collect();
    let (path, log_joint) = viterbi_path(t, space, &em);
    if !log_joint.is_finite() {
        return Err(Error::NumericDegeneracy(format!(
            "document {} has no finite-probability path",
            doc.doc_id
        )));
    }
    let b = t.background();
    let clauses = path
        .iter()
        .zip(doc.clauses.iter().zip(&em))
        .map(|(&idx, (clause, emission))| {
            let state = space.state(idx);
            let (frame, frame_ref, event, bkg_event) = if state.bkg {
                let scores: Vec<f64> = t.event_init[b]
                    .iter()
                    .zip(&emission.event[b])
                    .map(|(pi, lh)| pi + lh)
                    .collect();
                let be = argmax(&scores);
                (b, FrameRef::Background, be, Some(be))
            } else {
                (
                    state.frame,
                    FrameRef::Content(state.frame),
                    state.event,
                    None,
                )
            };
            let slots = clause
                .args
                .iter()
                .map(|arg| SlotChoice {
                    frame: frame_ref,
                    slot: argmax(&t.slot_scores(frame, event, arg)),
                })
                .collect();
            ClauseAssignment {
                state,
                bkg_event,
                slots,
            }
        })
        .collect();
    Ok(Assignment {
        doc_id: doc.doc_id.clone(),
        clauses,
        log_joint,
    })
}

pub fn viterbi(params: &ModelParams, doc: &IndexedDocument) -> Result<Assignment> {
    let tables = LogTables::new(params);
    viterbi_with(&tables, &StateSpace::of_params(params), doc)
}

/// Log joint of a state path with slots and background events marginalized.
pub fn path_log_joint(params: &ModelParams, doc: &IndexedDocument, path: &[CollapsedState]) -> f64 {
    let t = LogTables::new(params);
    let mut total = 0.0;
    for (i, (state, clause)) in path.iter().zip(&doc.clauses).enumerate() {
        total += if i == 0 {
            initial_log_prob(params, *state)
        } else {
            transition_log_prob(params, path[i - 1], *state)
        };
        let em = t.clause_emission(clause);
        total += if state.bkg {
            em.bkg
        } else {
            em.event[state.frame][state.event]
        };
    }
    total
}

/// Log joint of a fully specified configuration: state path, the background event
/// used by each background clause, and every argument's slot.
pub fn complete_log_joint(
    params: &ModelParams,
    doc: &IndexedDocument,
    path: &[CollapsedState],
    bkg_events: &[Option<usize>],
    slots: &[Vec<usize>],
) -> f64 {
    let mut total = 0.0;
    for (i, clause) in doc.clauses.iter().enumerate() {
        let state = path[i];
        total += if i == 0 {
            initial_log_prob(params, state)
        } else {
            transition_log_prob(params, path[i - 1], state)
        };
        let (fp, event) = if state.bkg {
            let b = match bkg_events[i] {
                Some(b) => b,
                None => return f64::NEG_INFINITY,
            };
            total += ln(params.background.event_init[b]);
            (&params.background, b)
        } else {
            (&params.frames[state.frame], state.event)
        };
        total += ln(fp.event_head[event][clause.head as usize]);
        for (arg, &s) in clause.args.iter().zip(&slots[i]) {
            total += ln(fp.slot[event][arg.arg_type.index()][s])
                + ln(fp.arg_head[s][arg.head as usize])
                + ln(fp.arg_dep[s][arg.caseframe as usize]);
        }
    }
    total
}
