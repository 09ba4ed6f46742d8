//! Expected-count accumulators mirroring [`super::ModelParams`].
//!
//! The structure-sized families are always dense. The three vocabulary-sized emission
//! families are generic over the row type: [`SufficientStats`] uses dense rows for the
//! corpus-level accumulator, [`DocStats`] uses sparse rows so per-document statistics
//! stay small enough to keep around for incremental EM.

use crate::corpus::VocabSizes;

use super::{FrameRef, FrameShape, StructureConfig};

pub trait EmissionRow: Clone {
    fn empty(len: usize) -> Self;
    fn add(&mut self, col: u32, value: f64);
}

impl EmissionRow for Vec<f64> {
    fn empty(len: usize) -> Self {
        vec![0.0; len]
    }

    #[inline]
    fn add(&mut self, col: u32, value: f64) {
        self[col as usize] += value;
    }
}

/// `(column, value)` pairs; a column may repeat.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow(pub Vec<(u32, f64)>);

impl EmissionRow for SparseRow {
    fn empty(_len: usize) -> Self {
        SparseRow(Vec::new())
    }

    #[inline]
    fn add(&mut self, col: u32, value: f64) {
        self.0.push((col, value));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameCounts<R> {
    pub event_init: Vec<f64>,
    pub event_tran: Vec<Vec<f64>>,
    pub slot: Vec<[Vec<f64>; 3]>,
    pub event_head: Vec<R>,
    pub arg_head: Vec<R>,
    pub arg_dep: Vec<R>,
}

impl<R: EmissionRow> FrameCounts<R> {
    fn zeros(shape: FrameShape, vocab: VocabSizes, with_tran: bool) -> Self {
        let e = shape.events;
        let s = shape.slots;
        FrameCounts {
            event_init: vec![0.0; e],
            event_tran: if with_tran {
                vec![vec![0.0; e]; e]
            } else {
                Vec::new()
            },
            slot: vec![[vec![0.0; s], vec![0.0; s], vec![0.0; s]]; e],
            event_head: vec![R::empty(vocab.event_heads); e],
            arg_head: vec![R::empty(vocab.arg_heads); s],
            arg_dep: vec![R::empty(vocab.caseframes); s],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counts<R> {
    /// `[BKG, CNT]` switch outcomes (clauses after the first).
    pub switch: Vec<f64>,
    pub frame_init: Vec<f64>,
    pub frame_tran: Vec<Vec<f64>>,
    pub frames: Vec<FrameCounts<R>>,
    pub background: FrameCounts<R>,
}

pub type SufficientStats = Counts<Vec<f64>>;
pub type DocStats = Counts<SparseRow>;

impl<R: EmissionRow> Counts<R> {
    pub fn zeros(config: &StructureConfig, vocab: VocabSizes) -> Self {
        let n = config.num_frames();
        Counts {
            switch: vec![0.0; 2],
            frame_init: vec![0.0; n],
            frame_tran: vec![vec![0.0; n]; n],
            frames: config
                .frames
                .iter()
                .map(|&s| FrameCounts::zeros(s, vocab, true))
                .collect(),
            background: FrameCounts::zeros(config.background, vocab, false),
        }
    }

    pub fn frame(&self, frame: FrameRef) -> &FrameCounts<R> {
        match frame {
            FrameRef::Content(f) => &self.frames[f],
            FrameRef::Background => &self.background,
        }
    }

    pub fn frame_mut(&mut self, frame: FrameRef) -> &mut FrameCounts<R> {
        match frame {
            FrameRef::Content(f) => &mut self.frames[f],
            FrameRef::Background => &mut self.background,
        }
    }

    fn dense_rows(&self) -> impl Iterator<Item = &Vec<f64>> {
        std::iter::once(&self.switch)
            .chain(std::iter::once(&self.frame_init))
            .chain(self.frame_tran.iter())
            .chain(
                self.frames
                    .iter()
                    .chain(std::iter::once(&self.background))
                    .flat_map(|f| {
                        std::iter::once(&f.event_init)
                            .chain(f.event_tran.iter())
                            .chain(f.slot.iter().flat_map(|s| s.iter()))
                    }),
            )
    }

    fn dense_rows_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        std::iter::once(&mut self.switch)
            .chain(std::iter::once(&mut self.frame_init))
            .chain(self.frame_tran.iter_mut())
            .chain(
                self.frames
                    .iter_mut()
                    .chain(std::iter::once(&mut self.background))
                    .flat_map(|f| {
                        std::iter::once(&mut f.event_init)
                            .chain(f.event_tran.iter_mut())
                            .chain(f.slot.iter_mut().flat_map(|s| s.iter_mut()))
                    }),
            )
    }
}

fn add_rows(dst: &mut [f64], src: &[f64], sign: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += sign * s;
    }
}

impl SufficientStats {
    /// Adds `sign` times a document's statistics.
    pub fn add_doc(&mut self, doc: &DocStats, sign: f64) {
        for (d, s) in self.dense_rows_mut().zip(doc.dense_rows()) {
            add_rows(d, s, sign);
        }
        let frames = self
            .frames
            .iter_mut()
            .chain(std::iter::once(&mut self.background));
        let other = doc.frames.iter().chain(std::iter::once(&doc.background));
        for (d, s) in frames.zip(other) {
            for (dr, sr) in d
                .event_head
                .iter_mut()
                .zip(&s.event_head)
                .chain(d.arg_head.iter_mut().zip(&s.arg_head))
                .chain(d.arg_dep.iter_mut().zip(&s.arg_dep))
            {
                for &(col, v) in &sr.0 {
                    dr[col as usize] += sign * v;
                }
            }
        }
    }

    /// Element-wise sum; associative and commutative up to floating-point rounding.
    pub fn merge(&mut self, other: &SufficientStats) {
        for (d, s) in self.dense_rows_mut().zip(other.dense_rows()) {
            add_rows(d, s, 1.0);
        }
        let frames = self
            .frames
            .iter_mut()
            .chain(std::iter::once(&mut self.background));
        let src = other
            .frames
            .iter()
            .chain(std::iter::once(&other.background));
        for (d, s) in frames.zip(src) {
            for (dr, sr) in d
                .event_head
                .iter_mut()
                .zip(&s.event_head)
                .chain(d.arg_head.iter_mut().zip(&s.arg_head))
                .chain(d.arg_dep.iter_mut().zip(&s.arg_dep))
            {
                add_rows(dr, sr, 1.0);
            }
        }
    }

    pub fn from_doc(config: &StructureConfig, vocab: VocabSizes, doc: &DocStats) -> Self {
        let mut s = SufficientStats::zeros(config, vocab);
        s.add_doc(doc, 1.0);
        s
    }

    /// Largest absolute difference over all cells; `inf` on a shape mismatch.
    pub fn max_abs_diff(&self, other: &SufficientStats) -> f64 {
        if self.frames.len() != other.frames.len() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        let mut cmp = |a: &Vec<f64>, b: &Vec<f64>| {
            if a.len() != b.len() {
                worst = f64::INFINITY;
            } else {
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x - y).abs());
                }
            }
        };
        for (a, b) in self.dense_rows().zip(other.dense_rows()) {
            cmp(a, b);
        }
        let fa = self.frames.iter().chain(std::iter::once(&self.background));
        let fb = other
            .frames
            .iter()
            .chain(std::iter::once(&other.background));
        for (a, b) in fa.zip(fb) {
            for (x, y) in a
                .event_head
                .iter()
                .zip(&b.event_head)
                .chain(a.arg_head.iter().zip(&b.arg_head))
                .chain(a.arg_dep.iter().zip(&b.arg_dep))
            {
                cmp(x, y);
            }
        }
        worst
    }

    pub fn all_finite_nonnegative(&self, tol: f64) -> bool {
        let ok = |r: &Vec<f64>| r.iter().all(|v| v.is_finite() && *v >= -tol);
        self.dense_rows().all(ok)
            && self
                .frames
                .iter()
                .chain(std::iter::once(&self.background))
                .all(|f| {
                    f.event_head.iter().all(ok)
                        && f.arg_head.iter().all(ok)
                        && f.arg_dep.iter().all(ok)
                })
    }

    /// Expected number of event-head emissions attributed to each event of `frame`.
    pub fn event_occupancy(&self, frame: FrameRef) -> Vec<f64> {
        self.frame(frame)
            .event_head
            .iter()
            .map(|r| r.iter().sum())
            .collect()
    }

    /// Expected number of arguments attributed to each slot of `frame`.
    pub fn slot_occupancy(&self, frame: FrameRef) -> Vec<f64> {
        self.frame(frame)
            .arg_head
            .iter()
            .map(|r| r.iter().sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (StructureConfig, VocabSizes) {
        (
            StructureConfig::initial(2, 1, 2),
            VocabSizes {
                event_heads: 3,
                arg_heads: 3,
                caseframes: 2,
            },
        )
    }

    #[test]
    fn doc_stats_add_and_subtract_round_trip() {
        let (config, vocab) = setup();
        let mut doc = DocStats::zeros(&config, vocab);
        doc.switch[1] = 2.0;
        doc.frames[1].event_head[0].add(2, 0.75);
        doc.frames[1].event_head[0].add(2, 0.25);
        doc.background.arg_dep[1].add(1, 0.5);
        let mut total = SufficientStats::zeros(&config, vocab);
        total.add_doc(&doc, 1.0);
        assert_eq!(total.frames[1].event_head[0][2], 1.0);
        assert_eq!(total.background.arg_dep[1][1], 0.5);
        total.add_doc(&doc, -1.0);
        assert_eq!(total, SufficientStats::zeros(&config, vocab));
    }

    #[test]
    fn merge_is_elementwise_sum() {
        let (config, vocab) = setup();
        let mut a = SufficientStats::zeros(&config, vocab);
        let mut b = SufficientStats::zeros(&config, vocab);
        a.frame_tran[0][1] = 1.0;
        b.frame_tran[0][1] = 2.0;
        b.frames[0].arg_head[1][2] = 4.0;
        a.merge(&b);
        assert_eq!(a.frame_tran[0][1], 3.0);
        assert_eq!(a.frames[0].arg_head[1][2], 4.0);
    }
}
