//! Exhaustive-enumeration reference for the chain computations.
//!
//! Everything here works in probability space directly from [`ModelParams`] and the
//! generative definition, sharing no code with the dynamic programs: it enumerates
//! every state sequence, every background event of every background clause, and every
//! joint slot assignment of each clause's arguments.

use crate::corpus::{IndexedClause, IndexedDocument};
use crate::error::{Error, Result};
use crate::params::{FrameParams, ModelParams, BKG, CNT};

use super::CollapsedState;

/// Upper bound on the number of enumerated state sequences.
pub const ORACLE_LIMIT: u128 = 1_000_000;

/// States in canonical order: content states frame-major, then background copies.
fn canonical_states(params: &ModelParams) -> Vec<CollapsedState> {
    let mut states = Vec::new();
    for bkg in [false, true] {
        for (frame, fp) in params.frames.iter().enumerate() {
            for event in 0..fp.event_init.len() {
                states.push(CollapsedState { frame, event, bkg });
            }
        }
    }
    states
}

/// `P(clause | frame params, event)`, summing over every joint slot assignment.
fn clause_given_event(fp: &FrameParams, event: usize, clause: &IndexedClause) -> f64 {
    let head = fp.event_head[event][clause.head as usize];
    let num_slots = fp.arg_head.len();
    let m = clause.args.len();
    let mut choice = vec![0usize; m];
    let mut total = 0.0;
    loop {
        let mut p = 1.0;
        for (arg, &s) in clause.args.iter().zip(&choice) {
            p *= fp.slot[event][arg.arg_type.index()][s]
                * fp.arg_head[s][arg.head as usize]
                * fp.arg_dep[s][arg.caseframe as usize];
        }
        total += p;
        // odometer increment over slot assignments
        let mut j = 0;
        while j < m {
            choice[j] += 1;
            if choice[j] < num_slots {
                break;
            }
            choice[j] = 0;
            j += 1;
        }
        if j == m {
            break;
        }
    }
    head * total
}

fn clause_prob(params: &ModelParams, clause: &IndexedClause, state: CollapsedState) -> f64 {
    if state.bkg {
        let bg = &params.background;
        (0..bg.event_init.len())
            .map(|b| bg.event_init[b] * clause_given_event(bg, b, clause))
            .sum()
    } else {
        clause_given_event(&params.frames[state.frame], state.event, clause)
    }
}

fn step_prob(params: &ModelParams, prev: Option<CollapsedState>, next: CollapsedState) -> f64 {
    let prev = match prev {
        None => {
            return if next.bkg {
                0.0
            } else {
                params.frame_init[next.frame] * params.frames[next.frame].event_init[next.event]
            };
        }
        Some(p) => p,
    };
    if next.bkg {
        let keep = next.frame == prev.frame && next.event == prev.event;
        return params.switch[BKG] * if keep { 1.0 } else { 0.0 };
    }
    let beta = params.beta;
    let indicator = if next.frame == prev.frame { 1.0 } else { 0.0 };
    let frame = beta * indicator + (1.0 - beta) * params.frame_tran[prev.frame][next.frame];
    let event = if next.frame == prev.frame {
        params.frames[next.frame].event_tran[prev.event][next.event]
    } else {
        params.frames[next.frame].event_init[next.event]
    };
    params.switch[CNT] * frame * event
}

fn enumerate<F: FnMut(&[CollapsedState], f64)>(
    params: &ModelParams,
    doc: &IndexedDocument,
    mut visit: F,
) -> Result<()> {
    let states = canonical_states(params);
    let len = doc.clauses.len();
    let count = (states.len() as u128)
        .checked_pow(len as u32)
        .unwrap_or(u128::MAX);
    if count > ORACLE_LIMIT {
        return Err(Error::SizeGuard {
            configurations: count,
            limit: ORACLE_LIMIT,
        });
    }
    // emission of each clause under each state, computed once
    let emission: Vec<Vec<f64>> = doc
        .clauses
        .iter()
        .map(|c| states.iter().map(|&s| clause_prob(params, c, s)).collect())
        .collect();
    let mut idx = vec![0usize; len];
    let mut path = vec![states[0]; len];
    loop {
        let mut p = 1.0;
        for i in 0..len {
            path[i] = states[idx[i]];
            let prev = if i == 0 { None } else { Some(path[i - 1]) };
            p *= step_prob(params, prev, path[i]) * emission[i][idx[i]];
        }
        visit(&path, p);
        // lexicographic increment, last clause fastest
        let mut i = len;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < states.len() {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// `ln P(D)` by summing the joint over every configuration.
pub fn brute_force_loglik(params: &ModelParams, doc: &IndexedDocument) -> Result<f64> {
    let mut total = 0.0;
    enumerate(params, doc, |_, p| total += p)?;
    Ok(total.ln())
}

/// The highest-probability state path (slots and background events marginalized) and
/// its log joint. Among exact ties the lexicographically smallest path in canonical
/// state order wins.
pub fn exhaustive_viterbi(
    params: &ModelParams,
    doc: &IndexedDocument,
) -> Result<(Vec<CollapsedState>, f64)> {
    let mut best: Option<(Vec<CollapsedState>, f64)> = None;
    enumerate(params, doc, |path, p| {
        if best.as_ref().is_none_or(|(_, bp)| p > *bp) {
            best = Some((path.to_vec(), p));
        }
    })?;
    let (path, p) = best.expect("at least one path");
    Ok((path, p.ln()))
}
