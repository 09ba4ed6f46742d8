use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use frame_induction::chain::{forward_backward, viterbi};
use frame_induction::corpus::{index_corpus, parse_corpus, ArgType, VocabSizes};
use frame_induction::fixtures::{random_document, random_model, ModelBounds};
use frame_induction::learn::{e_step_corpus, train, EmMode, TrainConfig, TrainSchedule};
use frame_induction::params::{m_step, serialize, FrameRef, ModelFile, Smoothing};
use frame_induction::synth::{
    planted_model, recovery_score, sample_corpus, PlantedSpec, SampleOptions,
};

fn vocab(n: usize) -> VocabSizes {
    VocabSizes {
        event_heads: n,
        arg_heads: n,
        caseframes: n,
    }
}

fn planted(documents: usize, seed: u64) -> frame_induction::synth::PlantedCorpus {
    let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
    sample_corpus(
        &p,
        &v,
        &SampleOptions {
            documents,
            seed,
            ..SampleOptions::default()
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ingestion_is_deterministic_and_indexing_keeps_counts(seed in any::<u64>(), n in 1usize..20) {
        let pc = planted(n, seed);
        let bytes = pc.corpus.to_jsonl();
        let a = parse_corpus(bytes.as_bytes()).unwrap();
        let b = parse_corpus(bytes.as_bytes()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a, &pc.corpus);
        let (_, v) = planted_model(&PlantedSpec::default()).unwrap();
        let idx = index_corpus(&a, &v);
        let clauses: usize = idx.documents.iter().map(|d| d.clauses.len()).sum();
        let args: usize = idx.documents.iter().flat_map(|d| &d.clauses).map(|c| c.args.len()).sum();
        prop_assert_eq!(clauses, a.num_clauses());
        prop_assert_eq!(args, a.num_args());
    }

    #[test]
    fn every_dependency_label_has_an_argument_type(label in "[a-z_:]{0,12}") {
        let t = ArgType::from_dep_label(&label);
        prop_assert!(ArgType::ALL.contains(&t));
        let known = ["nsubj", "csubj", "xsubj", "agent", "dobj", "obj", "iobj"];
        if !known.iter().any(|k| label.starts_with(k)) && !label.contains("pass") {
            prop_assert_eq!(t, ArgType::Prep);
        }
    }

    #[test]
    fn m_step_rows_are_normalized_and_supported(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_model(&mut rng, ModelBounds::default());
        let docs: Vec<_> = (0..4).map(|_| random_document(&mut rng, vocab(5), 5, 3)).collect();
        let (stats, _) = e_step_corpus(&p, &docs).unwrap();
        let q = m_step(&stats, &p.smoothing, p.beta).unwrap();
        for row in q.rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(q.structure(), p.structure());
        for f in q.frame_refs() {
            let fp = q.frame(f);
            let sh = fp.shape();
            for row in fp.slot.iter().flatten() {
                prop_assert_eq!(row.len(), sh.slots);
            }
            for row in &fp.event_tran {
                prop_assert_eq!(row.len(), sh.events);
            }
        }
    }

    #[test]
    fn doubling_counts_leaves_vanishing_smoothing_rows_unchanged(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_model(&mut rng, ModelBounds::default());
        let docs: Vec<_> = (0..3).map(|_| random_document(&mut rng, vocab(5), 4, 2)).collect();
        let twice: Vec<_> = docs.iter().chain(&docs).cloned().collect();
        let tiny = Smoothing::uniform(1e-12);
        let a = m_step(&e_step_corpus(&p, &docs).unwrap().0, &tiny, p.beta).unwrap();
        let b = m_step(&e_step_corpus(&p, &twice).unwrap().0, &tiny, p.beta).unwrap();
        for (x, y) in a.rows().zip(b.rows()) {
            for (u, v) in x.iter().zip(y) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn posteriors_normalize_and_decoded_paths_freeze_under_background(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_model(&mut rng, ModelBounds { max_frames: 3, max_events: 3, max_slots: 3, vocab: 6 });
        let d = random_document(&mut rng, vocab(6), 10, 3);
        let fb = forward_backward(&p, &d).unwrap();
        for i in 0..d.clauses.len() {
            prop_assert!((fb.posterior(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let path = viterbi(&p, &d).unwrap().path();
        prop_assert!(!path[0].bkg);
        for w in path.windows(2) {
            if w[1].bkg {
                prop_assert_eq!((w[0].frame, w[0].event), (w[1].frame, w[1].event));
            }
        }
    }

    #[test]
    fn recovery_ignores_label_permutations(seed in any::<u64>()) {
        let pc = planted(30, seed);
        let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
        let decoded = frame_induction::extract::decode_corpus(&p, &v, &pc.corpus).unwrap().assignments;
        let base = recovery_score(&pc.truth, &decoded).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut slot_perm: Vec<usize> = (0..2).collect();
        slot_perm.shuffle(&mut rng);
        let mut frame_perm: Vec<usize> = (0..2).collect();
        frame_perm.shuffle(&mut rng);
        let mut relabeled = decoded.clone();
        for a in &mut relabeled {
            for c in &mut a.clauses {
                c.state.frame = frame_perm[c.state.frame];
                for s in &mut c.slots {
                    if let FrameRef::Content(f) = s.frame {
                        s.frame = FrameRef::Content(frame_perm[f]);
                        s.slot = slot_perm[s.slot];
                    }
                }
            }
        }
        let moved = recovery_score(&pc.truth, &relabeled).unwrap();
        prop_assert!((moved.slot_f1 - base.slot_f1).abs() < 1e-12);
        prop_assert!((moved.event_purity - base.event_purity).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn training_is_seeded_and_structurally_sound(seed in any::<u64>(), batch in any::<bool>()) {
        let pc = planted(25, seed);
        let (_, v) = planted_model(&PlantedSpec::default()).unwrap();
        let docs = index_corpus(&pc.corpus, &v).documents;
        let schedule = TrainSchedule {
            cycles: 2,
            em_iters_per_cycle: 3,
            post_merge_iters: 2,
            mode: if batch { EmMode::Batch } else { EmMode::Incremental },
            seed,
            ..TrainSchedule::default()
        };
        let (a, _) = train(&TrainConfig::new(2), v.sizes(), &docs, &schedule).unwrap();
        let (b, _) = train(&TrainConfig::new(2), v.sizes(), &docs, &schedule).unwrap();
        let meta = serde_json::Value::Null;
        prop_assert_eq!(
            serialize(&ModelFile::new(a.clone(), v.clone(), meta.clone())),
            serialize(&ModelFile::new(b, v.clone(), meta))
        );
        a.validate(1e-9).unwrap();
        let structure = a.structure();
        for f in a.frame_refs() {
            let fp = a.frame(f);
            let sh = match f {
                FrameRef::Content(i) => structure.frames[i],
                FrameRef::Background => structure.background,
            };
            prop_assert_eq!(fp.arg_head.len(), sh.slots);
            prop_assert!(fp.slot.iter().flatten().all(|r| r.len() == sh.slots));
        }
    }
}
