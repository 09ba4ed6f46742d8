//! Batch and incremental MAP-EM.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{corpus_loglik, EmissionTotals, LogTables, StateSpace};
use crate::corpus::IndexedDocument;
use crate::error::{Error, Result};
use crate::params::{m_step, ModelParams};

use super::estep::{corpus_doc_stats, doc_stats};

/// Result of an EM run.
#[derive(Debug, Clone)]
pub struct EmRun {
    pub params: ModelParams,
    /// Corpus log-likelihood of the starting parameters and after each iteration.
    pub loglik: Vec<f64>,
    /// `loglik` plus the log prior implied by smoothing; the quantity EM ascends.
    pub objective: Vec<f64>,
}

impl EmRun {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik.last().expect("non-empty trace")
    }
}

fn check_docs(docs: &[IndexedDocument]) -> Result<()> {
    if docs.is_empty() {
        return Err(Error::InvalidConfig("training corpus is empty".into()));
    }
    Ok(())
}

/// `iters` rounds of expected counts followed by MAP re-estimation over the whole corpus.
pub fn batch_em(params: &ModelParams, docs: &[IndexedDocument], iters: usize) -> Result<EmRun> {
    check_docs(docs)?;
    let space = StateSpace::of_params(params);
    let vocab = params.vocab_sizes();
    let mut cur = params.clone();
    let mut loglik = Vec::with_capacity(iters + 1);
    let mut objective = Vec::with_capacity(iters + 1);
    for _ in 0..iters {
        let t = LogTables::new(&cur);
        let (_, stats, ll) = corpus_doc_stats(&t, &space, vocab, docs)?;
        loglik.push(ll);
        objective.push(ll + cur.log_prior());
        cur = m_step(&stats, &cur.smoothing, cur.beta)?;
    }
    let ll = corpus_loglik(&cur, docs)?;
    loglik.push(ll);
    objective.push(ll + cur.log_prior());
    Ok(EmRun {
        params: cur,
        loglik,
        objective,
    })
}

/// Incremental EM over `passes` sweeps of the corpus. The first sweep collects
/// per-document statistics in one batch step; every later sweep visits documents in a
/// seeded random order, swapping each document's old statistics for fresh ones and
/// re-estimating the parameters before the next document.
pub fn incremental_em(
    params: &ModelParams,
    docs: &[IndexedDocument],
    passes: usize,
    seed: u64,
) -> Result<EmRun> {
    check_docs(docs)?;
    let space = StateSpace::of_params(params);
    let smoothing = params.smoothing;
    smoothing.validate()?;
    let beta = params.beta;
    let mut loglik = Vec::with_capacity(passes + 1);
    let mut objective = Vec::with_capacity(passes + 1);
    if passes == 0 {
        let ll = corpus_loglik(params, docs)?;
        return Ok(EmRun {
            params: params.clone(),
            loglik: vec![ll],
            objective: vec![ll + params.log_prior()],
        });
    }

    let t = LogTables::new(params);
    let (mut per_doc, mut mu, ll) = corpus_doc_stats(&t, &space, params.vocab_sizes(), docs)?;
    drop(t);
    loglik.push(ll);
    objective.push(ll + params.log_prior());
    let mut totals = EmissionTotals::of(&mu);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();

    for pass in 0..passes {
        if pass > 0 {
            order.shuffle(&mut rng);
            for &d in &order {
                let fresh = {
                    let t = LogTables::from_counts(&mu, &totals, &smoothing, beta);
                    doc_stats(&t, &space, &docs[d])?.0
                };
                mu.add_doc(&per_doc[d], -1.0);
                totals.add_doc(&per_doc[d], -1.0);
                mu.add_doc(&fresh, 1.0);
                totals.add_doc(&fresh, 1.0);
                per_doc[d] = fresh;
            }
        }
        let p = m_step(&mu, &smoothing, beta)?;
        let ll = corpus_loglik(&p, docs)?;
        loglik.push(ll);
        objective.push(ll + p.log_prior());
    }
    Ok(EmRun {
        params: m_step(&mu, &smoothing, beta)?,
        loglik,
        objective,
    })
}
