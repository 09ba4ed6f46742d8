//! Doubling every event and slot.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::params::{perturb_row, FrameParams, FrameRef, FrameShape, ModelParams};

/// Shapes before a split; child `2k` and `2k + 1` descend from element `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub parents: Vec<(FrameRef, FrameShape)>,
}

fn halve(row: &[f64]) -> Vec<f64> {
    row.iter().flat_map(|&p| [p / 2.0, p / 2.0]).collect()
}

fn duplicate<T: Clone>(rows: &[T]) -> Vec<T> {
    rows.iter().flat_map(|r| [r.clone(), r.clone()]).collect()
}

fn split_frame(fp: &FrameParams) -> FrameParams {
    FrameParams {
        event_init: halve(&fp.event_init),
        event_tran: fp
            .event_tran
            .iter()
            .flat_map(|r| {
                let h = halve(r);
                [h.clone(), h]
            })
            .collect(),
        event_head: duplicate(&fp.event_head),
        slot: fp
            .slot
            .iter()
            .flat_map(|rows| {
                let h = [halve(&rows[0]), halve(&rows[1]), halve(&rows[2])];
                [h.clone(), h]
            })
            .collect(),
        arg_head: duplicate(&fp.arg_head),
        arg_dep: duplicate(&fp.arg_dep),
    }
}

/// Splits each event and slot of every frame (background included) into two children
/// sharing the parent's probability mass, then multiplies every frame-owned row by
/// `1 + eps * u`, `u` uniform in `[-1, 1)`, and renormalizes. With `eps == 0` the
/// corpus likelihood is unchanged.
pub fn split_all(params: &ModelParams, eps: f64, seed: u64) -> (ModelParams, SplitRecord) {
    let record = SplitRecord {
        parents: params
            .frame_refs()
            .map(|f| (f, params.frame(f).shape()))
            .collect(),
    };
    let mut out = params.clone();
    out.frames = params.frames.iter().map(split_frame).collect();
    out.background = split_frame(&params.background);
    if eps > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for fp in out
            .frames
            .iter_mut()
            .chain(std::iter::once(&mut out.background))
        {
            for row in fp.rows_mut() {
                perturb_row(row, eps, &mut rng);
            }
        }
    }
    (out, record)
}
