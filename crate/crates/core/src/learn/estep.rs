//! Expected counts from one forward-backward pass.

use rayon::prelude::*;

use crate::chain::{
    cross_inflow, forward_backward_with, predecessors, EmissionLookup, LogTables, StateSpace,
};
use crate::corpus::{IndexedClause, IndexedDocument, VocabSizes};
use crate::error::Result;
use crate::math::log_sum_exp;
use crate::params::{
    DocStats, EmissionRow, FrameShape, ModelParams, SparseRow, StructureConfig, SufficientStats,
    BKG, CNT,
};

const NO_VOCAB: VocabSizes = VocabSizes {
    event_heads: 0,
    arg_heads: 0,
    caseframes: 0,
};

pub(crate) fn structure_of<E: EmissionLookup>(t: &LogTables<E>) -> StructureConfig {
    let shape = |f| FrameShape {
        events: t.num_events(f),
        slots: t.num_slots(f),
    };
    StructureConfig {
        frames: (0..t.background()).map(shape).collect(),
        background: shape(t.background()),
    }
}

/// Softmax of slot scores; `None` when every slot is impossible.
fn slot_posterior(scores: &[f64]) -> Option<Vec<f64>> {
    let z = log_sum_exp(scores.iter().copied());
    if !z.is_finite() {
        return None;
    }
    Some(scores.iter().map(|s| (s - z).exp()).collect())
}

/// Adds the emissions of `clause` under `(frame, event)` with weight `w`. Argument
/// slot mass is accumulated into `arg_mass[arg][slot]` for the caller to flush.
fn add_emissions<E: EmissionLookup>(
    t: &LogTables<E>,
    stats: &mut DocStats,
    frame: usize,
    event: usize,
    clause: &IndexedClause,
    w: f64,
    arg_mass: &mut [Vec<f64>],
) {
    let fc = if frame == t.background() {
        &mut stats.background
    } else {
        &mut stats.frames[frame]
    };
    fc.event_head[event].add(clause.head, w);
    for (arg, mass) in clause.args.iter().zip(arg_mass.iter_mut()) {
        let Some(q) = slot_posterior(&t.slot_scores(frame, event, arg)) else {
            continue;
        };
        let row = &mut fc.slot[event][arg.arg_type.index()];
        for (s, qs) in q.iter().enumerate() {
            row[s] += w * qs;
            mass[s] += w * qs;
        }
    }
}

fn flush_args(
    rows_head: &mut [SparseRow],
    rows_dep: &mut [SparseRow],
    clause: &IndexedClause,
    arg_mass: &mut [Vec<f64>],
) {
    for (arg, mass) in clause.args.iter().zip(arg_mass.iter_mut()) {
        for (s, m) in mass.iter_mut().enumerate() {
            if *m > 0.0 {
                rows_head[s].add(arg.head, *m);
                rows_dep[s].add(arg.caseframe, *m);
            }
            *m = 0.0;
        }
    }
}

/// Expected counts and log-likelihood of one document under `t`.
pub(crate) fn doc_stats<E: EmissionLookup>(
    t: &LogTables<E>,
    space: &StateSpace,
    doc: &IndexedDocument,
) -> Result<(DocStats, f64)> {
    let tr = forward_backward_with(t, space, doc)?;
    let ll = tr.loglik;
    let n = space.num_nominal();
    let nf = space.num_frames();
    let b = t.background();
    let config = structure_of(t);
    let mut s = DocStats::zeros(&config, NO_VOCAB);

    for (i, clause) in doc.clauses.iter().enumerate() {
        let em = &tr.emissions[i];
        let beta = &tr.log_beta[i];
        let gamma: Vec<f64> = tr.log_alpha[i]
            .iter()
            .zip(beta)
            .map(|(a, bt)| (a + bt - ll).exp())
            .collect();

        if i == 0 {
            for f in 0..nf {
                let o = space.offset(f);
                for e in 0..space.events(f) {
                    s.frame_init[f] += gamma[o + e];
                    s.frames[f].event_init[e] += gamma[o + e];
                }
            }
        } else {
            s.switch[BKG] += gamma[n..].iter().sum::<f64>();
            s.switch[CNT] += gamma[..n].iter().sum::<f64>();
            let prev = predecessors(space, &tr.log_alpha[i - 1]);
            for f2 in 0..nf {
                let o2 = space.offset(f2);
                let ne2 = space.events(f2);
                let target: Vec<f64> = (0..ne2)
                    .map(|e2| t.switch[CNT] + em.event[f2][e2] + beta[o2 + e2] - ll)
                    .collect();
                // same-frame flow; the share drawn from the frame transition row
                // (rather than the stickiness term) also counts towards it
                let from_table = if t.stay[f2].is_finite() {
                    (t.cross[f2][f2] - t.stay[f2]).exp()
                } else {
                    0.0
                };
                let mut same_total = 0.0;
                for e in 0..ne2 {
                    for e2 in 0..ne2 {
                        let x = (prev.combined[o2 + e]
                            + t.stay[f2]
                            + t.event_tran[f2][e][e2]
                            + target[e2])
                            .exp();
                        s.frames[f2].event_tran[e][e2] += x;
                        same_total += x;
                    }
                }
                s.frame_tran[f2][f2] += same_total * from_table;
                // flow entering f2 from other frames
                let entry = log_sum_exp((0..ne2).map(|e2| t.event_init[f2][e2] + target[e2]));
                for f in (0..nf).filter(|&f| f != f2) {
                    s.frame_tran[f][f2] += (prev.per_frame[f] + t.cross[f][f2] + entry).exp();
                }
                let cross = cross_inflow(t, &prev.per_frame, f2);
                for e2 in 0..ne2 {
                    s.frames[f2].event_init[e2] +=
                        (cross + t.event_init[f2][e2] + target[e2]).exp();
                }
            }
        }

        let mut arg_mass: Vec<Vec<f64>> = Vec::new();
        for f in 0..nf {
            arg_mass.clear();
            arg_mass.resize(clause.args.len(), vec![0.0; t.num_slots(f)]);
            let o = space.offset(f);
            for e in 0..space.events(f) {
                let w = gamma[o + e];
                if w > 0.0 {
                    add_emissions(t, &mut s, f, e, clause, w, &mut arg_mass);
                }
            }
            let fc = &mut s.frames[f];
            flush_args(&mut fc.arg_head, &mut fc.arg_dep, clause, &mut arg_mass);
        }

        let g_bkg: f64 = gamma[n..].iter().sum();
        if g_bkg > 0.0 {
            arg_mass.clear();
            arg_mass.resize(clause.args.len(), vec![0.0; t.num_slots(b)]);
            for be in 0..t.num_events(b) {
                let w = g_bkg * (t.event_init[b][be] + em.event[b][be] - em.bkg).exp();
                if w > 0.0 {
                    s.background.event_init[be] += w;
                    add_emissions(t, &mut s, b, be, clause, w, &mut arg_mass);
                }
            }
            let fc = &mut s.background;
            flush_args(&mut fc.arg_head, &mut fc.arg_dep, clause, &mut arg_mass);
        }
    }
    Ok((s, ll))
}

/// Expected counts for a single document under `params`, densified.
pub fn e_step(params: &ModelParams, doc: &IndexedDocument) -> Result<(SufficientStats, f64)> {
    let t = LogTables::new(params);
    let (s, ll) = doc_stats(&t, &StateSpace::of_params(params), doc)?;
    Ok((
        SufficientStats::from_doc(&params.structure(), params.vocab_sizes(), &s),
        ll,
    ))
}

/// Per-document statistics computed in parallel, plus their sum and the total
/// log-likelihood. Summation runs in document order, so results do not depend on the
/// number of worker threads.
pub(crate) fn corpus_doc_stats<E: EmissionLookup>(
    t: &LogTables<E>,
    space: &StateSpace,
    vocab: VocabSizes,
    docs: &[IndexedDocument],
) -> Result<(Vec<DocStats>, SufficientStats, f64)> {
    let per_doc: Vec<(DocStats, f64)> = docs
        .par_iter()
        .map(|d| doc_stats(t, space, d))
        .collect::<Result<_>>()?;
    let mut total = SufficientStats::zeros(&structure_of(t), vocab);
    let mut ll = 0.0;
    let mut stats = Vec::with_capacity(per_doc.len());
    for (s, l) in per_doc {
        total.add_doc(&s, 1.0);
        ll += l;
        stats.push(s);
    }
    Ok((stats, total, ll))
}

/// Expected counts summed over a corpus, with the corpus log-likelihood.
pub fn e_step_corpus(
    params: &ModelParams,
    docs: &[IndexedDocument],
) -> Result<(SufficientStats, f64)> {
    let t = LogTables::new(params);
    let (_, total, ll) = corpus_doc_stats(
        &t,
        &StateSpace::of_params(params),
        params.vocab_sizes(),
        docs,
    )?;
    Ok((total, ll))
}
