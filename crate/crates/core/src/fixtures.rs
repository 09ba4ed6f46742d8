//! Random small models and documents for tests and oracle comparisons.

use rand::Rng;

use crate::corpus::{ArgType, IndexedArg, IndexedClause, IndexedDocument, VocabSizes};
use crate::math::normalize;
use crate::params::{FrameShape, ModelParams, Smoothing, StructureConfig};

/// Bounds for [`random_model`].
#[derive(Debug, Clone, Copy)]
pub struct ModelBounds {
    pub max_frames: usize,
    pub max_events: usize,
    pub max_slots: usize,
    pub vocab: usize,
}

impl Default for ModelBounds {
    fn default() -> Self {
        ModelBounds {
            max_frames: 2,
            max_events: 2,
            max_slots: 2,
            vocab: 5,
        }
    }
}

fn random_row<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    normalize(&mut row);
    row
}

/// A model with random shape within `bounds` and strictly positive random rows.
pub fn random_model<R: Rng>(rng: &mut R, bounds: ModelBounds) -> ModelParams {
    let num_frames = rng.gen_range(1..=bounds.max_frames);
    let mut shape = || FrameShape {
        events: rng.gen_range(1..=bounds.max_events),
        slots: rng.gen_range(1..=bounds.max_slots),
    };
    let frames = (0..num_frames).map(|_| shape()).collect();
    let background = shape();
    let config = StructureConfig { frames, background };
    let vocab = VocabSizes {
        event_heads: bounds.vocab,
        arg_heads: bounds.vocab,
        caseframes: bounds.vocab,
    };
    randomize(&config, vocab, rng)
}

/// Random strictly positive parameters for a fixed structure.
pub fn randomize<R: Rng>(config: &StructureConfig, vocab: VocabSizes, rng: &mut R) -> ModelParams {
    let mut params = ModelParams::uniform(config, vocab, 0.5, Smoothing::default());
    params.beta = rng.gen_range(0.0..1.0);
    let p: f64 = rng.gen_range(0.05..0.6);
    params.switch = [p, 1.0 - p];
    for row in params.rows_mut() {
        let fresh = random_row(rng, row.len());
        *row = fresh;
    }
    params
}

/// A document of `1..=max_clauses` clauses with `0..=max_args` arguments each.
pub fn random_document<R: Rng>(
    rng: &mut R,
    vocab: VocabSizes,
    max_clauses: usize,
    max_args: usize,
) -> IndexedDocument {
    let len = rng.gen_range(1..=max_clauses);
    let clauses = (0..len)
        .map(|_| IndexedClause {
            head: rng.gen_range(0..vocab.event_heads as u32),
            args: (0..rng.gen_range(0..=max_args))
                .map(|_| IndexedArg {
                    arg_type: ArgType::ALL[rng.gen_range(0..3)],
                    head: rng.gen_range(0..vocab.arg_heads as u32),
                    caseframe: rng.gen_range(0..vocab.caseframes as u32),
                })
                .collect(),
        })
        .collect();
    IndexedDocument {
        doc_id: "random".into(),
        clauses,
    }
}

/// One frame with two events that alternate deterministically, one slot per argument
/// type, and one-hot emissions.
pub fn deterministic_model() -> ModelParams {
    let config = StructureConfig {
        frames: vec![FrameShape {
            events: 2,
            slots: 2,
        }],
        background: FrameShape {
            events: 1,
            slots: 1,
        },
    };
    let mut p = ModelParams::uniform(
        &config,
        VocabSizes {
            event_heads: 3,
            arg_heads: 3,
            caseframes: 3,
        },
        0.0,
        Smoothing::default(),
    );
    p.switch = [0.0, 1.0];
    p.frame_init = vec![1.0];
    p.frame_tran = vec![vec![1.0]];
    let f = &mut p.frames[0];
    f.event_init = vec![1.0, 0.0];
    f.event_tran = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    f.event_head = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    for rows in &mut f.slot {
        rows[0] = vec![1.0, 0.0];
        rows[1] = vec![0.0, 1.0];
        rows[2] = vec![0.0, 1.0];
    }
    f.arg_head = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    f.arg_dep = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    p
}
