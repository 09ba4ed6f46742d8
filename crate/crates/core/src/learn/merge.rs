//! Scoring and merging sibling pairs produced by the last split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{
    corpus_loglik, forward_backward_with, inflow, ClauseEmission, EmissionLookup, LogTables,
    StateSpace,
};
use crate::corpus::{IndexedClause, IndexedDocument};
use crate::error::{Error, Result};
use crate::math::{log_add, normalize};
use crate::params::{FrameParams, FrameRef, ModelParams};

use super::estep::e_step_corpus;
use super::split::SplitRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeKind {
    Event,
    Slot,
}

/// A sibling pair that could be merged back into one element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeCandidate {
    pub kind: MergeKind,
    pub frame: FrameRef,
    pub pair: (usize, usize),
    /// Estimated decrease in corpus log-likelihood if the pair is merged.
    pub loss: f64,
    /// Expected counts of the two children, used to average their rows.
    pub weights: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeScoring {
    /// Posterior-weighted local estimate from one forward-backward pass.
    #[default]
    Approximate,
    /// Recompute the corpus likelihood once per candidate.
    Exact,
}

/// (kind, owning frame, (first child, second child))
type SiblingPair = (MergeKind, FrameRef, (usize, usize));

fn sibling_pairs(params: &ModelParams, record: &SplitRecord) -> Result<Vec<SiblingPair>> {
    let mut out = Vec::new();
    for &(frame, parent) in &record.parents {
        if let FrameRef::Content(f) = frame {
            if f >= params.frames.len() {
                return Err(Error::ShapeMismatch(format!(
                    "split record names missing frame {f}"
                )));
            }
        }
        let shape = params.frame(frame).shape();
        if shape.events != 2 * parent.events || shape.slots != 2 * parent.slots {
            return Err(Error::ShapeMismatch(format!(
                "{frame:?} has {}x{} elements, expected the split of {}x{}",
                shape.events, shape.slots, parent.events, parent.slots
            )));
        }
        for k in 0..parent.events {
            out.push((MergeKind::Event, frame, (2 * k, 2 * k + 1)));
        }
        for k in 0..parent.slots {
            out.push((MergeKind::Slot, frame, (2 * k, 2 * k + 1)));
        }
    }
    Ok(out)
}

/// Scores every sibling pair of the last split, sorted by ascending loss. Ties keep
/// frame order, events before slots, then pair order.
pub fn score_merges(
    params: &ModelParams,
    docs: &[IndexedDocument],
    record: &SplitRecord,
    scoring: MergeScoring,
) -> Result<Vec<MergeCandidate>> {
    let pairs = sibling_pairs(params, record)?;
    let (stats, ll) = e_step_corpus(params, docs)?;
    let mut cands: Vec<MergeCandidate> = pairs
        .into_iter()
        .map(|(kind, frame, pair)| {
            let occ = match kind {
                MergeKind::Event => stats.event_occupancy(frame),
                MergeKind::Slot => stats.slot_occupancy(frame),
            };
            MergeCandidate {
                kind,
                frame,
                pair,
                loss: 0.0,
                weights: (occ[pair.0], occ[pair.1]),
            }
        })
        .collect();
    match scoring {
        MergeScoring::Exact => {
            for c in cands.iter_mut() {
                let merged = merge_pairs(params, std::slice::from_ref(c));
                c.loss = ll - corpus_loglik(&merged, docs)?;
            }
        }
        MergeScoring::Approximate => {
            let t = LogTables::new(params);
            let space = StateSpace::of_params(params);
            let per_doc: Vec<Vec<f64>> = docs
                .par_iter()
                .map(|d| approximate_losses(&t, &space, d, &cands))
                .collect::<Result<_>>()?;
            for losses in per_doc {
                for (c, l) in cands.iter_mut().zip(losses) {
                    c.loss += l;
                }
            }
        }
    }
    cands.sort_by(|a, b| a.loss.total_cmp(&b.loss));
    Ok(cands)
}

fn shares(w: (f64, f64)) -> (f64, f64) {
    let total = w.0 + w.1;
    if total > 0.0 && total.is_finite() {
        (w.0 / total, w.1 / total)
    } else {
        (0.5, 0.5)
    }
}

/// Per-candidate loss estimates for one document. At each clause the merged element
/// receives the pooled predecessor flow of both children and emits with their
/// share-weighted mixture; the remaining states keep their exact posterior mass.
fn approximate_losses<E: EmissionLookup>(
    t: &LogTables<E>,
    space: &StateSpace,
    doc: &IndexedDocument,
    cands: &[MergeCandidate],
) -> Result<Vec<f64>> {
    let tr = forward_backward_with(t, space, doc)?;
    let ll = tr.loglik;
    let n = space.num_nominal();
    let mut losses = vec![0.0; cands.len()];
    for (i, clause) in doc.clauses.iter().enumerate() {
        let pre = inflow(
            t,
            space,
            if i == 0 {
                None
            } else {
                Some(&tr.log_alpha[i - 1])
            },
        );
        let beta = &tr.log_beta[i];
        let gamma: Vec<f64> = tr.log_alpha[i]
            .iter()
            .zip(beta)
            .map(|(a, b)| (a + b - ll).exp())
            .collect();
        let g_bkg: f64 = gamma[n..].iter().sum();
        let em = &tr.emissions[i];
        for (c, loss) in cands.iter().zip(losses.iter_mut()) {
            let (p1, p2) = shares(c.weights);
            let (a, b) = c.pair;
            let ratio = match (c.kind, c.frame) {
                (MergeKind::Event, FrameRef::Content(f)) => {
                    let o = space.offset(f);
                    let mut delta = 0.0;
                    for (base, ea, eb) in [(0, em.event[f][a], em.event[f][b]), (n, em.bkg, em.bkg)]
                    {
                        let (ia, ib) = (base + o + a, base + o + b);
                        let out = log_add(pre[ia], pre[ib]);
                        let inn = log_add(p1.ln() + ea + beta[ia], p2.ln() + eb + beta[ib]);
                        delta += (out + inn - ll).exp() - gamma[ia] - gamma[ib];
                    }
                    1.0 + delta
                }
                (MergeKind::Event, FrameRef::Background) => {
                    if g_bkg > 0.0 {
                        let bg = t.background();
                        let pi = &t.event_init[bg];
                        let lh = &em.event[bg];
                        let old = log_add(pi[a] + lh[a], pi[b] + lh[b]);
                        let new = log_add(pi[a], pi[b]) + log_add(p1.ln() + lh[a], p2.ln() + lh[b]);
                        let r = 1.0 + (new - em.bkg).exp() - (old - em.bkg).exp();
                        1.0 + g_bkg * (r - 1.0)
                    } else {
                        1.0
                    }
                }
                (MergeKind::Slot, FrameRef::Content(f)) => {
                    let o = space.offset(f);
                    let mut delta = 0.0;
                    for e in 0..space.events(f) {
                        let g = gamma[o + e];
                        if g > 0.0 {
                            delta += g * (slot_ratio(t, f, e, clause, c.pair, (p1, p2)) - 1.0);
                        }
                    }
                    1.0 + delta
                }
                (MergeKind::Slot, FrameRef::Background) => {
                    if g_bkg > 0.0 {
                        1.0 + g_bkg * (background_slot_ratio(t, em, clause, c.pair, (p1, p2)) - 1.0)
                    } else {
                        1.0
                    }
                }
            };
            *loss -= ratio.max(f64::MIN_POSITIVE).ln();
        }
    }
    Ok(losses)
}

/// Ratio of the clause's argument likelihood under `(frame, event)` after and before
/// merging slots `pair`, with the merged slot emitting the share-weighted mixture.
fn slot_ratio<E: EmissionLookup>(
    t: &LogTables<E>,
    frame: usize,
    event: usize,
    clause: &IndexedClause,
    (a, b): (usize, usize),
    (q1, q2): (f64, f64),
) -> f64 {
    let mut r = 1.0;
    for arg in &clause.args {
        let m = t.arg_log_marginal(frame, event, arg);
        if !m.is_finite() {
            continue;
        }
        let row = &t.slot[frame][event][arg.arg_type.index()];
        let lik = |s: usize| {
            t.emit.arg_head(frame, s, arg.head) + t.emit.arg_dep(frame, s, arg.caseframe)
        };
        let (la, lb) = (lik(a), lik(b));
        let old = log_add(row[a] + la, row[b] + lb);
        let new = log_add(row[a], row[b]) + log_add(q1.ln() + la, q2.ln() + lb);
        r *= 1.0 + (new - m).exp() - (old - m).exp();
    }
    r
}

fn background_slot_ratio<E: EmissionLookup>(
    t: &LogTables<E>,
    em: &ClauseEmission,
    clause: &IndexedClause,
    pair: (usize, usize),
    q: (f64, f64),
) -> f64 {
    let bg = t.background();
    (0..t.num_events(bg))
        .map(|be| {
            let w = (t.event_init[bg][be] + em.event[bg][be] - em.bkg).exp();
            if w > 0.0 {
                w * slot_ratio(t, bg, be, clause, pair, q)
            } else {
                0.0
            }
        })
        .sum()
}

/// Groups of old indices forming each new element, with merge weights.
fn groups(len: usize, merges: &[&MergeCandidate]) -> Vec<Vec<(usize, f64)>> {
    let mut taken = vec![false; len];
    let mut out = Vec::new();
    for k in 0..len {
        if taken[k] {
            continue;
        }
        match merges.iter().find(|c| c.pair.0.min(c.pair.1) == k) {
            Some(c) => {
                let (a, b) = c.pair;
                let (wa, wb) = shares(c.weights);
                taken[a] = true;
                taken[b] = true;
                out.push(vec![(a, wa), (b, wb)]);
            }
            None => {
                taken[k] = true;
                out.push(vec![(k, 1.0)]);
            }
        }
    }
    out
}

fn average(rows: &[Vec<f64>], group: &[(usize, f64)]) -> Vec<f64> {
    if let [(k, _)] = group {
        return rows[*k].clone();
    }
    let mut out = vec![0.0; rows[group[0].0].len()];
    for &(k, w) in group {
        for (o, v) in out.iter_mut().zip(&rows[k]) {
            *o += w * v;
        }
    }
    normalize(&mut out);
    out
}

fn collapse(row: &[f64], groups: &[Vec<(usize, f64)>]) -> Vec<f64> {
    groups
        .iter()
        .map(|g| g.iter().map(|&(k, _)| row[k]).sum())
        .collect()
}

fn merge_frame(
    fp: &FrameParams,
    eg: &[Vec<(usize, f64)>],
    sg: &[Vec<(usize, f64)>],
) -> FrameParams {
    let tran: Vec<Vec<f64>> = fp.event_tran.iter().map(|r| collapse(r, eg)).collect();
    let slot: [Vec<Vec<f64>>; 3] =
        std::array::from_fn(|a| fp.slot.iter().map(|r| collapse(&r[a], sg)).collect());
    FrameParams {
        event_init: collapse(&fp.event_init, eg),
        event_tran: if tran.is_empty() {
            Vec::new()
        } else {
            eg.iter().map(|g| average(&tran, g)).collect()
        },
        event_head: eg.iter().map(|g| average(&fp.event_head, g)).collect(),
        slot: eg
            .iter()
            .map(|g| std::array::from_fn(|a| average(&slot[a], g)))
            .collect(),
        arg_head: sg.iter().map(|g| average(&fp.arg_head, g)).collect(),
        arg_dep: sg.iter().map(|g| average(&fp.arg_dep, g)).collect(),
    }
}

/// Merges the given sibling pairs: entry and incoming probabilities are summed,
/// outgoing and emission rows are averaged with the children's expected counts.
pub fn merge_pairs(params: &ModelParams, merges: &[MergeCandidate]) -> ModelParams {
    let mut out = params.clone();
    for frame in params.frame_refs() {
        let of = |kind| -> Vec<&MergeCandidate> {
            merges
                .iter()
                .filter(|c| c.kind == kind && c.frame == frame)
                .collect()
        };
        let (ev, sl) = (of(MergeKind::Event), of(MergeKind::Slot));
        if ev.is_empty() && sl.is_empty() {
            continue;
        }
        let fp = params.frame(frame);
        let shape = fp.shape();
        *out.frame_mut(frame) =
            merge_frame(fp, &groups(shape.events, &ev), &groups(shape.slots, &sl));
    }
    out
}

/// Merges the lowest-loss `ceil(fraction * candidates.len())` pairs of a sorted list.
pub fn merge_back(
    params: &ModelParams,
    candidates: &[MergeCandidate],
    fraction: f64,
) -> ModelParams {
    let fraction = fraction.clamp(0.0, 1.0);
    let k = ((fraction * candidates.len() as f64).ceil() as usize).min(candidates.len());
    merge_pairs(params, &candidates[..k])
}
