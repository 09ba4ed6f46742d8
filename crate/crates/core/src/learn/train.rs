//! The split-merge training schedule.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::corpus_loglik;
use crate::corpus::{IndexedDocument, VocabSizes};
use crate::error::{Error, Result};
use crate::params::{
    init_model, FrameShape, ModelParams, Smoothing, StructureConfig, DEFAULT_BETA,
};

use super::em::{batch_em, incremental_em, EmRun};
use super::merge::{merge_back, score_merges, MergeScoring};
use super::split::split_all;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmMode {
    Batch,
    #[default]
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub cycles: usize,
    pub em_iters_per_cycle: usize,
    pub post_merge_iters: usize,
    pub merge_fraction: f64,
    pub perturb_eps: f64,
    pub mode: EmMode,
    pub scoring: MergeScoring,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            cycles: 4,
            em_iters_per_cycle: 10,
            post_merge_iters: 5,
            merge_fraction: 0.5,
            perturb_eps: 0.01,
            mode: EmMode::Incremental,
            scoring: MergeScoring::Approximate,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.cycles == 0 {
            return bad("cycles must be positive");
        }
        if self.em_iters_per_cycle == 0 {
            return bad("EM iterations per cycle must be positive");
        }
        if !(0.0..=1.0).contains(&self.merge_fraction) {
            return bad("merge fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.perturb_eps) {
            return bad("split perturbation must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Initial structure and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub structure: StructureConfig,
    pub beta: f64,
    pub smoothing: Smoothing,
    /// Multiplicative noise applied to the uniform starting point.
    pub init_jitter: f64,
}

impl TrainConfig {
    /// `num_frames` frames of one event and two slots, background of the same size.
    pub fn new(num_frames: usize) -> Self {
        TrainConfig {
            structure: StructureConfig::initial(num_frames, 1, 2),
            beta: DEFAULT_BETA,
            smoothing: Smoothing::default(),
            init_jitter: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub cycle: usize,
    pub stage: String,
    pub loglik: f64,
    pub events_per_frame: Vec<usize>,
    pub slots_per_frame: Vec<usize>,
    pub background: FrameShape,
    pub iterations: usize,
    pub merged: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub schedule: TrainSchedule,
    pub config: TrainConfig,
    pub documents: usize,
    pub stages: Vec<StageReport>,
}

impl TrainingReport {
    pub fn initial_loglik(&self) -> f64 {
        self.stages.first().map_or(f64::NAN, |s| s.loglik)
    }

    pub fn final_loglik(&self) -> f64 {
        self.stages.last().map_or(f64::NAN, |s| s.loglik)
    }
}

fn run_em(
    params: &ModelParams,
    docs: &[IndexedDocument],
    iters: usize,
    mode: EmMode,
    seed: u64,
) -> Result<EmRun> {
    match mode {
        EmMode::Batch => batch_em(params, docs, iters),
        EmMode::Incremental => incremental_em(params, docs, iters, seed),
    }
}

struct Recorder {
    stages: Vec<StageReport>,
    clock: Instant,
}

impl Recorder {
    fn push(
        &mut self,
        cycle: usize,
        stage: &str,
        params: &ModelParams,
        loglik: f64,
        iterations: usize,
        merged: usize,
    ) {
        let s = params.structure();
        self.stages.push(StageReport {
            cycle,
            stage: stage.into(),
            loglik,
            events_per_frame: s.events_per_frame(),
            slots_per_frame: s.slots_per_frame(),
            background: s.background,
            iterations,
            merged,
            seconds: self.clock.elapsed().as_secs_f64(),
        });
        self.clock = Instant::now();
    }
}

/// Initializes a model and runs `schedule.cycles` rounds of EM; every round but the
/// last then splits all events and slots, halves the smoothing constants, retrains,
/// merges back the least useful fraction of the new pairs and retrains again.
pub fn train(
    config: &TrainConfig,
    vocab: VocabSizes,
    docs: &[IndexedDocument],
    schedule: &TrainSchedule,
) -> Result<(ModelParams, TrainingReport)> {
    schedule.validate()?;
    if docs.is_empty() {
        return Err(Error::InvalidConfig("training corpus is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut params = init_model(
        &config.structure,
        vocab,
        rng.gen(),
        config.init_jitter,
        config.beta,
        config.smoothing,
    )?;
    let mut rec = Recorder {
        stages: Vec::new(),
        clock: Instant::now(),
    };
    rec.push(0, "init", &params, corpus_loglik(&params, docs)?, 0, 0);

    for cycle in 0..schedule.cycles {
        let run = run_em(
            &params,
            docs,
            schedule.em_iters_per_cycle,
            schedule.mode,
            rng.gen(),
        )?;
        let ll = run.final_loglik();
        params = run.params;
        rec.push(cycle, "em", &params, ll, schedule.em_iters_per_cycle, 0);
        if cycle + 1 == schedule.cycles {
            break;
        }

        let (mut split, record) = split_all(&params, schedule.perturb_eps, rng.gen());
        split.smoothing = split.smoothing.halved();
        let run = run_em(
            &split,
            docs,
            schedule.em_iters_per_cycle,
            schedule.mode,
            rng.gen(),
        )?;
        let ll = run.final_loglik();
        params = run.params;
        rec.push(cycle, "split", &params, ll, schedule.em_iters_per_cycle, 0);

        let candidates = score_merges(&params, docs, &record, schedule.scoring)?;
        let before = params.structure();
        params = merge_back(&params, &candidates, schedule.merge_fraction);
        let after = params.structure();
        let merged = count_elements(&before) - count_elements(&after);
        rec.push(
            cycle,
            "merge",
            &params,
            corpus_loglik(&params, docs)?,
            0,
            merged,
        );

        if schedule.post_merge_iters > 0 {
            let run = run_em(
                &params,
                docs,
                schedule.post_merge_iters,
                schedule.mode,
                rng.gen(),
            )?;
            let ll = run.final_loglik();
            params = run.params;
            rec.push(
                cycle,
                "post-merge",
                &params,
                ll,
                schedule.post_merge_iters,
                0,
            );
        }
    }
    let report = TrainingReport {
        schedule: *schedule,
        config: config.clone(),
        documents: docs.len(),
        stages: rec.stages,
    };
    Ok((params, report))
}

fn count_elements(s: &StructureConfig) -> usize {
    s.frames
        .iter()
        .chain(std::iter::once(&s.background))
        .map(|f| f.events + f.slots)
        .sum()
}
