//! Model distributions, smoothing, and structure bookkeeping.
//!
//! Every family is stored as nested rows of probabilities. Events and slots live inside
//! their owning frame ([`FrameParams`]); the background frame has the same layout except
//! that it carries no event transition matrix.

mod io;
mod stats;

pub use io::{deserialize, serialize, ModelFile, FORMAT_NAME, FORMAT_VERSION};
pub use stats::{Counts, DocStats, EmissionRow, FrameCounts, SparseRow, SufficientStats};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::VocabSizes;
use crate::error::{Error, Result};
use crate::math::{normalize, uniform};

/// Index of the background outcome in [`ModelParams::switch`].
pub const BKG: usize = 0;
/// Index of the content outcome in [`ModelParams::switch`].
pub const CNT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameShape {
    pub events: usize,
    pub slots: usize,
}

/// Addresses one of the content frames or the background frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameRef {
    Content(usize),
    Background,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureConfig {
    pub frames: Vec<FrameShape>,
    pub background: FrameShape,
}

impl StructureConfig {
    /// One event and two slots per content frame.
    pub fn initial(num_frames: usize, bkg_events: usize, bkg_slots: usize) -> Self {
        StructureConfig {
            frames: vec![
                FrameShape {
                    events: 1,
                    slots: 2
                };
                num_frames
            ],
            background: FrameShape {
                events: bkg_events,
                slots: bkg_slots,
            },
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn events_per_frame(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.events).collect()
    }

    pub fn slots_per_frame(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.slots).collect()
    }

    pub fn shape(&self, frame: FrameRef) -> FrameShape {
        match frame {
            FrameRef::Content(f) => self.frames[f],
            FrameRef::Background => self.background,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one frame is required".into(),
            ));
        }
        let all = self.frames.iter().chain(std::iter::once(&self.background));
        for shape in all {
            if shape.events == 0 || shape.slots == 0 {
                return Err(Error::InvalidConfig(
                    "every frame needs at least one event and one slot".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Additive-smoothing constants, one per distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub switch: f64,
    pub frame_init: f64,
    pub frame_tran: f64,
    pub event_init: f64,
    pub event_tran: f64,
    pub event_head: f64,
    pub slot: f64,
    pub arg_head: f64,
    pub arg_dep: f64,
}

impl Smoothing {
    pub fn uniform(alpha: f64) -> Self {
        Smoothing {
            switch: alpha,
            frame_init: alpha,
            frame_tran: alpha,
            event_init: alpha,
            event_tran: alpha,
            event_head: alpha,
            slot: alpha,
            arg_head: alpha,
            arg_dep: alpha,
        }
    }

    fn values(&self) -> [f64; 9] {
        [
            self.switch,
            self.frame_init,
            self.frame_tran,
            self.event_init,
            self.event_tran,
            self.event_head,
            self.slot,
            self.arg_head,
            self.arg_dep,
        ]
    }

    pub fn halved(&self) -> Self {
        let mut s = *self;
        for v in [
            &mut s.switch,
            &mut s.frame_init,
            &mut s.frame_tran,
            &mut s.event_init,
            &mut s.event_tran,
            &mut s.event_head,
            &mut s.slot,
            &mut s.arg_head,
            &mut s.arg_dep,
        ] {
            *v *= 0.5;
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.values().iter().all(|a| *a > 0.0 && a.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "smoothing constants must be positive and finite".into(),
            ))
        }
    }
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::uniform(0.1)
    }
}

/// Distributions owned by one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    /// `P(E | F)` when entering the frame.
    pub event_init: Vec<f64>,
    /// `P(E' | E)` within the frame; empty for the background frame.
    pub event_tran: Vec<Vec<f64>>,
    /// `P(head | E)` per event.
    pub event_head: Vec<Vec<f64>>,
    /// `P(S | E, A)` per event and argument type, over this frame's slots.
    pub slot: Vec<[Vec<f64>; 3]>,
    /// `P(arg head | S)` per slot.
    pub arg_head: Vec<Vec<f64>>,
    /// `P(caseframe | S)` per slot.
    pub arg_dep: Vec<Vec<f64>>,
}

impl FrameParams {
    pub fn shape(&self) -> FrameShape {
        FrameShape {
            events: self.event_init.len(),
            slots: self.arg_head.len(),
        }
    }

    fn uniform(shape: FrameShape, vocab: VocabSizes, with_tran: bool) -> Self {
        FrameParams {
            event_init: uniform(shape.events),
            event_tran: if with_tran {
                vec![uniform(shape.events); shape.events]
            } else {
                Vec::new()
            },
            event_head: vec![uniform(vocab.event_heads); shape.events],
            slot: vec![
                [
                    uniform(shape.slots),
                    uniform(shape.slots),
                    uniform(shape.slots)
                ];
                shape.events
            ],
            arg_head: vec![uniform(vocab.arg_heads); shape.slots],
            arg_dep: vec![uniform(vocab.caseframes); shape.slots],
        }
    }

    pub(crate) fn rows(&self) -> impl Iterator<Item = &Vec<f64>> {
        std::iter::once(&self.event_init)
            .chain(self.event_tran.iter())
            .chain(self.event_head.iter())
            .chain(self.slot.iter().flat_map(|s| s.iter()))
            .chain(self.arg_head.iter())
            .chain(self.arg_dep.iter())
    }

    pub(crate) fn rows_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        std::iter::once(&mut self.event_init)
            .chain(self.event_tran.iter_mut())
            .chain(self.event_head.iter_mut())
            .chain(self.slot.iter_mut().flat_map(|s| s.iter_mut()))
            .chain(self.arg_head.iter_mut())
            .chain(self.arg_dep.iter_mut())
    }

    fn log_prior(&self, s: &Smoothing) -> f64 {
        let sum_ln = |row: &Vec<f64>| row.iter().map(|p| p.ln()).sum::<f64>();
        s.event_init * sum_ln(&self.event_init)
            + s.event_tran * self.event_tran.iter().map(sum_ln).sum::<f64>()
            + s.event_head * self.event_head.iter().map(sum_ln).sum::<f64>()
            + s.slot
                * self
                    .slot
                    .iter()
                    .flat_map(|r| r.iter())
                    .map(sum_ln)
                    .sum::<f64>()
            + s.arg_head * self.arg_head.iter().map(sum_ln).sum::<f64>()
            + s.arg_dep * self.arg_dep.iter().map(sum_ln).sum::<f64>()
    }
}

/// All learned distributions plus the stickiness weight and smoothing constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `[P(BKG), P(CNT)]`.
    pub switch: [f64; 2],
    pub frame_init: Vec<f64>,
    pub frame_tran: Vec<Vec<f64>>,
    pub frames: Vec<FrameParams>,
    pub background: FrameParams,
    /// Stickiness: probability mass forced onto staying in the current frame.
    pub beta: f64,
    pub smoothing: Smoothing,
}

pub const DEFAULT_BETA: f64 = 0.5;

impl ModelParams {
    /// Uniform parameters for the given structure.
    pub fn uniform(
        config: &StructureConfig,
        vocab: VocabSizes,
        beta: f64,
        smoothing: Smoothing,
    ) -> Self {
        let n = config.num_frames();
        ModelParams {
            switch: [0.5, 0.5],
            frame_init: uniform(n),
            frame_tran: vec![uniform(n); n],
            frames: config
                .frames
                .iter()
                .map(|&s| FrameParams::uniform(s, vocab, true))
                .collect(),
            background: FrameParams::uniform(config.background, vocab, false),
            beta,
            smoothing,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, frame: FrameRef) -> &FrameParams {
        match frame {
            FrameRef::Content(f) => &self.frames[f],
            FrameRef::Background => &self.background,
        }
    }

    pub fn frame_mut(&mut self, frame: FrameRef) -> &mut FrameParams {
        match frame {
            FrameRef::Content(f) => &mut self.frames[f],
            FrameRef::Background => &mut self.background,
        }
    }

    pub fn frame_refs(&self) -> impl Iterator<Item = FrameRef> {
        (0..self.frames.len())
            .map(FrameRef::Content)
            .chain(std::iter::once(FrameRef::Background))
    }

    pub fn structure(&self) -> StructureConfig {
        StructureConfig {
            frames: self.frames.iter().map(FrameParams::shape).collect(),
            background: self.background.shape(),
        }
    }

    pub fn vocab_sizes(&self) -> VocabSizes {
        VocabSizes {
            event_heads: self.background.event_head.first().map_or(0, Vec::len),
            arg_heads: self.background.arg_head.first().map_or(0, Vec::len),
            caseframes: self.background.arg_dep.first().map_or(0, Vec::len),
        }
    }

    /// Every probability row in a fixed order.
    pub fn rows(&self) -> impl Iterator<Item = &Vec<f64>> {
        std::iter::once(&self.frame_init)
            .chain(self.frame_tran.iter())
            .chain(self.frames.iter().flat_map(FrameParams::rows))
            .chain(self.background.rows())
    }

    pub fn rows_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        std::iter::once(&mut self.frame_init)
            .chain(self.frame_tran.iter_mut())
            .chain(self.frames.iter_mut().flat_map(FrameParams::rows_mut))
            .chain(self.background.rows_mut())
    }

    /// Log density of the parameters under the symmetric Dirichlet priors implied by
    /// additive smoothing, up to a constant: `sum over rows and cells of alpha * ln p`.
    pub fn log_prior(&self) -> f64 {
        let s = &self.smoothing;
        let sum_ln = |row: &Vec<f64>| row.iter().map(|p| p.ln()).sum::<f64>();
        s.switch * (self.switch[0].ln() + self.switch[1].ln())
            + s.frame_init * sum_ln(&self.frame_init)
            + s.frame_tran * self.frame_tran.iter().map(sum_ln).sum::<f64>()
            + self.frames.iter().map(|f| f.log_prior(s)).sum::<f64>()
            + self.background.log_prior(s)
    }

    /// Checks shapes and normalization (rows must sum to one within `tol`).
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.frames.len();
        let bad = |m: String| Err(Error::ShapeMismatch(m));
        if n == 0 {
            return bad("no content frames".into());
        }
        if self.frame_init.len() != n
            || self.frame_tran.iter().any(|r| r.len() != n)
            || self.frame_tran.len() != n
        {
            return bad("frame tables do not match the number of frames".into());
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("stickiness {} outside [0, 1]", self.beta));
        }
        let vocab = self.vocab_sizes();
        for frame in self.frame_refs() {
            let p = self.frame(frame);
            let shape = p.shape();
            let tran_ok = match frame {
                FrameRef::Content(_) => {
                    p.event_tran.len() == shape.events
                        && p.event_tran.iter().all(|r| r.len() == shape.events)
                }
                FrameRef::Background => p.event_tran.is_empty(),
            };
            let ok = shape.events > 0
                && shape.slots > 0
                && tran_ok
                && p.event_head.len() == shape.events
                && p.event_head.iter().all(|r| r.len() == vocab.event_heads)
                && p.slot.len() == shape.events
                && p.slot
                    .iter()
                    .all(|r| r.iter().all(|x| x.len() == shape.slots))
                && p.arg_dep.len() == shape.slots
                && p.arg_head.iter().all(|r| r.len() == vocab.arg_heads)
                && p.arg_dep.iter().all(|r| r.len() == vocab.caseframes);
            if !ok {
                return bad(format!("inconsistent table shapes in {frame:?}"));
            }
        }
        let check = |row: &[f64]| {
            let total: f64 = row.iter().sum();
            row.iter().all(|p| p.is_finite() && *p >= 0.0) && (total - 1.0).abs() <= tol
        };
        if !check(&self.switch) || !self.rows().all(|r| check(r)) {
            return bad("a probability row is not normalized".into());
        }
        Ok(())
    }
}

/// Multiplies every entry by `1 + eps * u` with `u` uniform in `[-1, 1)`, then renormalizes.
pub(crate) fn perturb_row<R: Rng>(row: &mut [f64], eps: f64, rng: &mut R) {
    for v in row.iter_mut() {
        let u: f64 = rng.gen_range(-1.0..1.0);
        *v *= 1.0 + eps * u;
    }
    normalize(row);
}

/// Uniform parameters with multiplicative jitter, deterministic for a fixed seed.
pub fn init_model(
    config: &StructureConfig,
    vocab: VocabSizes,
    seed: u64,
    jitter: f64,
    beta: f64,
    smoothing: Smoothing,
) -> Result<ModelParams> {
    config.validate()?;
    smoothing.validate()?;
    if !(0.0..1.0).contains(&jitter) {
        return Err(Error::InvalidConfig(format!(
            "jitter {jitter} must lie in [0, 1)"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidConfig(format!(
            "stickiness {beta} must lie in [0, 1]"
        )));
    }
    let mut params = ModelParams::uniform(config, vocab, beta, smoothing);
    if jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        perturb_row(&mut params.switch, jitter, &mut rng);
        for row in params.rows_mut() {
            perturb_row(row, jitter, &mut rng);
        }
    }
    Ok(params)
}

fn smooth_row(counts: &[f64], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().map(|c| c.max(0.0)).sum();
    let denom = total + alpha * counts.len() as f64;
    counts
        .iter()
        .map(|c| (c.max(0.0) + alpha) / denom)
        .collect()
}

fn smooth_frame(c: &FrameCounts<Vec<f64>>, s: &Smoothing) -> FrameParams {
    FrameParams {
        event_init: smooth_row(&c.event_init, s.event_init),
        event_tran: c
            .event_tran
            .iter()
            .map(|r| smooth_row(r, s.event_tran))
            .collect(),
        event_head: c
            .event_head
            .iter()
            .map(|r| smooth_row(r, s.event_head))
            .collect(),
        slot: c
            .slot
            .iter()
            .map(|rows| {
                [
                    smooth_row(&rows[0], s.slot),
                    smooth_row(&rows[1], s.slot),
                    smooth_row(&rows[2], s.slot),
                ]
            })
            .collect(),
        arg_head: c
            .arg_head
            .iter()
            .map(|r| smooth_row(r, s.arg_head))
            .collect(),
        arg_dep: c.arg_dep.iter().map(|r| smooth_row(r, s.arg_dep)).collect(),
    }
}

/// MAP re-estimation: every row becomes `(count + alpha) / (total + alpha * K)`.
pub fn m_step(stats: &SufficientStats, smoothing: &Smoothing, beta: f64) -> Result<ModelParams> {
    smoothing.validate()?;
    let s = smoothing;
    let switch = smooth_row(&stats.switch, s.switch);
    Ok(ModelParams {
        switch: [switch[0], switch[1]],
        frame_init: smooth_row(&stats.frame_init, s.frame_init),
        frame_tran: stats
            .frame_tran
            .iter()
            .map(|r| smooth_row(r, s.frame_tran))
            .collect(),
        frames: stats.frames.iter().map(|f| smooth_frame(f, s)).collect(),
        background: smooth_frame(&stats.background, s),
        beta,
        smoothing: *smoothing,
    })
}
