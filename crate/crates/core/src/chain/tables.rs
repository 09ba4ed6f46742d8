//! Log-space views of the model used by the dynamic programs.
//!
//! Frames are addressed by a flat index: `0..F` are content frames and `F` is the
//! background frame.

use crate::corpus::{IndexedArg, IndexedClause};
use crate::math::{ln, log_sum_exp};
use crate::params::{FrameParams, ModelParams, Smoothing, SufficientStats, BKG, CNT};

/// Log emission probabilities for the three vocabulary-sized families.
pub trait EmissionLookup: Sync {
    fn event_head(&self, frame: usize, event: usize, word: u32) -> f64;
    fn arg_head(&self, frame: usize, slot: usize, word: u32) -> f64;
    fn arg_dep(&self, frame: usize, slot: usize, caseframe: u32) -> f64;
}

/// Log emission tables materialized from [`ModelParams`].
#[derive(Debug, Clone)]
pub struct DenseEmissions {
    event_head: Vec<Vec<Vec<f64>>>,
    arg_head: Vec<Vec<Vec<f64>>>,
    arg_dep: Vec<Vec<Vec<f64>>>,
}

fn ln_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().map(|&p| ln(p)).collect())
        .collect()
}

impl DenseEmissions {
    pub fn new(params: &ModelParams) -> Self {
        let frames: Vec<&FrameParams> = params.frames.iter().chain([&params.background]).collect();
        DenseEmissions {
            event_head: frames.iter().map(|f| ln_rows(&f.event_head)).collect(),
            arg_head: frames.iter().map(|f| ln_rows(&f.arg_head)).collect(),
            arg_dep: frames.iter().map(|f| ln_rows(&f.arg_dep)).collect(),
        }
    }
}

impl EmissionLookup for DenseEmissions {
    #[inline]
    fn event_head(&self, frame: usize, event: usize, word: u32) -> f64 {
        self.event_head[frame][event][word as usize]
    }

    #[inline]
    fn arg_head(&self, frame: usize, slot: usize, word: u32) -> f64 {
        self.arg_head[frame][slot][word as usize]
    }

    #[inline]
    fn arg_dep(&self, frame: usize, slot: usize, caseframe: u32) -> f64 {
        self.arg_dep[frame][slot][caseframe as usize]
    }
}

/// Emission log-probabilities read straight from smoothed expected counts,
/// `ln(count + alpha) - ln(total + alpha * K)`, without materializing parameters.
pub struct CountEmissions<'a> {
    stats: &'a SufficientStats,
    alpha: [f64; 3],
    // ln denominators per [frame][row] for event heads, arg heads, caseframes
    denom: [Vec<Vec<f64>>; 3],
}

/// Row totals of the emission families, kept in step with a [`SufficientStats`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTotals {
    pub event_head: Vec<Vec<f64>>,
    pub arg_head: Vec<Vec<f64>>,
    pub arg_dep: Vec<Vec<f64>>,
}

impl EmissionTotals {
    pub fn of(stats: &SufficientStats) -> Self {
        let frames: Vec<_> = stats.frames.iter().chain([&stats.background]).collect();
        let sums = |rows: &Vec<Vec<f64>>| rows.iter().map(|r| r.iter().sum()).collect();
        EmissionTotals {
            event_head: frames.iter().map(|f| sums(&f.event_head)).collect(),
            arg_head: frames.iter().map(|f| sums(&f.arg_head)).collect(),
            arg_dep: frames.iter().map(|f| sums(&f.arg_dep)).collect(),
        }
    }

    pub fn add_doc(&mut self, doc: &crate::params::DocStats, sign: f64) {
        let frames: Vec<_> = doc.frames.iter().chain([&doc.background]).collect();
        for (fi, f) in frames.iter().enumerate() {
            for (tot, row) in [
                (&mut self.event_head[fi], &f.event_head),
                (&mut self.arg_head[fi], &f.arg_head),
                (&mut self.arg_dep[fi], &f.arg_dep),
            ] {
                for (t, r) in tot.iter_mut().zip(row) {
                    *t += sign * r.0.iter().map(|(_, v)| v).sum::<f64>();
                }
            }
        }
    }
}

impl<'a> CountEmissions<'a> {
    pub fn new(stats: &'a SufficientStats, totals: &EmissionTotals, smoothing: &Smoothing) -> Self {
        let alpha = [smoothing.event_head, smoothing.arg_head, smoothing.arg_dep];
        let width = |rows: &Vec<Vec<f64>>| rows.first().map_or(0, Vec::len) as f64;
        let frames: Vec<_> = stats.frames.iter().chain([&stats.background]).collect();
        let k = [
            width(&frames[0].event_head),
            width(&frames[0].arg_head),
            width(&frames[0].arg_dep),
        ];
        let denom_of = |tot: &Vec<Vec<f64>>, a: f64, k: f64| -> Vec<Vec<f64>> {
            tot.iter()
                .map(|r| r.iter().map(|t| (t.max(0.0) + a * k).ln()).collect())
                .collect()
        };
        CountEmissions {
            stats,
            alpha,
            denom: [
                denom_of(&totals.event_head, alpha[0], k[0]),
                denom_of(&totals.arg_head, alpha[1], k[1]),
                denom_of(&totals.arg_dep, alpha[2], k[2]),
            ],
        }
    }

    fn frame(&self, frame: usize) -> &crate::params::FrameCounts<Vec<f64>> {
        if frame < self.stats.frames.len() {
            &self.stats.frames[frame]
        } else {
            &self.stats.background
        }
    }
}

impl EmissionLookup for CountEmissions<'_> {
    #[inline]
    fn event_head(&self, frame: usize, event: usize, word: u32) -> f64 {
        let c = self.frame(frame).event_head[event][word as usize];
        (c.max(0.0) + self.alpha[0]).ln() - self.denom[0][frame][event]
    }

    #[inline]
    fn arg_head(&self, frame: usize, slot: usize, word: u32) -> f64 {
        let c = self.frame(frame).arg_head[slot][word as usize];
        (c.max(0.0) + self.alpha[1]).ln() - self.denom[1][frame][slot]
    }

    #[inline]
    fn arg_dep(&self, frame: usize, slot: usize, caseframe: u32) -> f64 {
        let c = self.frame(frame).arg_dep[slot][caseframe as usize];
        (c.max(0.0) + self.alpha[2]).ln() - self.denom[2][frame][slot]
    }
}

/// Log-space model: structure-sized tables plus an emission lookup.
pub struct LogTables<E> {
    pub(crate) num_frames: usize,
    pub(crate) switch: [f64; 2],
    pub(crate) frame_init: Vec<f64>,
    /// `ln(beta + (1 - beta) P(f | f))`.
    pub(crate) stay: Vec<f64>,
    /// `ln((1 - beta) P(f' | f))`, indexed `[f][f']`.
    pub(crate) cross: Vec<Vec<f64>>,
    /// Per flat frame index, including the background frame.
    pub(crate) event_init: Vec<Vec<f64>>,
    /// Per content frame.
    pub(crate) event_tran: Vec<Vec<Vec<f64>>>,
    /// `[frame][event][arg type][slot]`, including the background frame.
    pub(crate) slot: Vec<Vec<[Vec<f64>; 3]>>,
    pub(crate) emit: E,
}

/// The structure-sized rows of a model, in probability space.
pub(crate) struct SmallRows<'a> {
    pub switch: [f64; 2],
    pub frame_init: std::borrow::Cow<'a, [f64]>,
    pub frame_tran: std::borrow::Cow<'a, [Vec<f64>]>,
    pub event_init: Vec<std::borrow::Cow<'a, [f64]>>,
    pub event_tran: Vec<std::borrow::Cow<'a, [Vec<f64>]>>,
    pub slot: Vec<std::borrow::Cow<'a, [[Vec<f64>; 3]]>>,
    pub beta: f64,
}

impl<'a> SmallRows<'a> {
    pub fn of_params(p: &'a ModelParams) -> Self {
        let frames: Vec<&FrameParams> = p.frames.iter().chain([&p.background]).collect();
        SmallRows {
            switch: p.switch,
            frame_init: (&p.frame_init[..]).into(),
            frame_tran: (&p.frame_tran[..]).into(),
            event_init: frames.iter().map(|f| (&f.event_init[..]).into()).collect(),
            event_tran: p
                .frames
                .iter()
                .map(|f| (&f.event_tran[..]).into())
                .collect(),
            slot: frames.iter().map(|f| (&f.slot[..]).into()).collect(),
            beta: p.beta,
        }
    }
}

impl<E: EmissionLookup> LogTables<E> {
    pub(crate) fn from_rows(rows: SmallRows<'_>, emit: E) -> Self {
        let n = rows.frame_init.len();
        let beta = rows.beta;
        let stay = (0..n)
            .map(|f| ln(beta + (1.0 - beta) * rows.frame_tran[f][f]))
            .collect();
        let cross = rows
            .frame_tran
            .iter()
            .map(|r| r.iter().map(|&p| ln((1.0 - beta) * p)).collect())
            .collect();
        LogTables {
            num_frames: n,
            switch: [ln(rows.switch[BKG]), ln(rows.switch[CNT])],
            frame_init: rows.frame_init.iter().map(|&p| ln(p)).collect(),
            stay,
            cross,
            event_init: rows
                .event_init
                .iter()
                .map(|r| r.iter().map(|&p| ln(p)).collect())
                .collect(),
            event_tran: rows.event_tran.iter().map(|m| ln_rows(m)).collect(),
            slot: rows
                .slot
                .iter()
                .map(|per_event| {
                    per_event
                        .iter()
                        .map(|r| {
                            [
                                r[0].iter().map(|&p| ln(p)).collect(),
                                r[1].iter().map(|&p| ln(p)).collect(),
                                r[2].iter().map(|&p| ln(p)).collect(),
                            ]
                        })
                        .collect()
                })
                .collect(),
            emit,
        }
    }

    pub fn background(&self) -> usize {
        self.num_frames
    }

    pub fn num_events(&self, frame: usize) -> usize {
        self.event_init[frame].len()
    }

    pub fn num_slots(&self, frame: usize) -> usize {
        self.slot[frame].first().map_or(0, |r| r[0].len())
    }

    /// Unnormalized slot scores `ln P(S|E,A) + ln P(a|S) + ln P(dep|S)` for one argument.
    pub fn slot_scores(&self, frame: usize, event: usize, arg: &IndexedArg) -> Vec<f64> {
        let row = &self.slot[frame][event][arg.arg_type.index()];
        row.iter()
            .enumerate()
            .map(|(s, &lp)| {
                lp + self.emit.arg_head(frame, s, arg.head)
                    + self.emit.arg_dep(frame, s, arg.caseframe)
            })
            .collect()
    }

    /// `ln P(clause | frame, event)` with slots marginalized per argument.
    pub fn event_log_lik(&self, frame: usize, event: usize, clause: &IndexedClause) -> f64 {
        let mut v = self.emit.event_head(frame, event, clause.head);
        for arg in &clause.args {
            v += self.arg_log_marginal(frame, event, arg);
        }
        v
    }

    /// `ln sum_S P(S|E,A) P(a|S) P(dep|S)` for one argument.
    pub fn arg_log_marginal(&self, frame: usize, event: usize, arg: &IndexedArg) -> f64 {
        let row = &self.slot[frame][event][arg.arg_type.index()];
        let score = |s: usize| {
            row[s]
                + self.emit.arg_head(frame, s, arg.head)
                + self.emit.arg_dep(frame, s, arg.caseframe)
        };
        let max = (0..row.len()).map(score).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + (0..row.len())
            .map(|s| (score(s) - max).exp())
            .sum::<f64>()
            .ln()
    }

    pub fn clause_emission(&self, clause: &IndexedClause) -> ClauseEmission {
        let event: Vec<Vec<f64>> = (0..=self.num_frames)
            .map(|f| {
                (0..self.num_events(f))
                    .map(|e| self.event_log_lik(f, e, clause))
                    .collect()
            })
            .collect();
        let b = self.num_frames;
        let bkg = log_sum_exp(
            self.event_init[b]
                .iter()
                .zip(&event[b])
                .map(|(pi, lh)| pi + lh),
        );
        ClauseEmission { event, bkg }
    }
}

impl LogTables<DenseEmissions> {
    pub fn new(params: &ModelParams) -> Self {
        LogTables::from_rows(SmallRows::of_params(params), DenseEmissions::new(params))
    }
}

impl<'a> LogTables<CountEmissions<'a>> {
    /// Tables for the MAP estimate implied by `stats`, with emission rows read lazily.
    pub fn from_counts(
        stats: &'a SufficientStats,
        totals: &EmissionTotals,
        smoothing: &Smoothing,
        beta: f64,
    ) -> Self {
        let smooth = |c: &[f64], a: f64| -> Vec<f64> {
            let total: f64 = c.iter().map(|v| v.max(0.0)).sum();
            let d = total + a * c.len() as f64;
            c.iter().map(|v| (v.max(0.0) + a) / d).collect()
        };
        let s = smoothing;
        let frames: Vec<_> = stats.frames.iter().chain([&stats.background]).collect();
        let switch = smooth(&stats.switch, s.switch);
        let rows = SmallRows {
            switch: [switch[0], switch[1]],
            frame_init: smooth(&stats.frame_init, s.frame_init).into(),
            frame_tran: stats
                .frame_tran
                .iter()
                .map(|r| smooth(r, s.frame_tran))
                .collect::<Vec<_>>()
                .into(),
            event_init: frames
                .iter()
                .map(|f| smooth(&f.event_init, s.event_init).into())
                .collect(),
            event_tran: stats
                .frames
                .iter()
                .map(|f| {
                    f.event_tran
                        .iter()
                        .map(|r| smooth(r, s.event_tran))
                        .collect::<Vec<_>>()
                        .into()
                })
                .collect(),
            slot: frames
                .iter()
                .map(|f| {
                    f.slot
                        .iter()
                        .map(|r| {
                            [
                                smooth(&r[0], s.slot),
                                smooth(&r[1], s.slot),
                                smooth(&r[2], s.slot),
                            ]
                        })
                        .collect::<Vec<_>>()
                        .into()
                })
                .collect(),
            beta,
        };
        LogTables::from_rows(rows, CountEmissions::new(stats, totals, smoothing))
    }
}

/// Per-clause emission log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct ClauseEmission {
    /// `[frame][event]` log-likelihood of the clause, background frame last.
    pub event: Vec<Vec<f64>>,
    /// Background emission, marginalized over background events.
    pub bkg: f64,
}
