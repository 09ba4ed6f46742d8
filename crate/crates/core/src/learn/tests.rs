use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::chain::{corpus_loglik, forward_backward};
use crate::corpus::{ArgType, IndexedArg, IndexedClause, IndexedDocument, VocabSizes};
use crate::fixtures::{deterministic_model, random_document, random_model, randomize, ModelBounds};
use crate::params::{m_step, FrameShape, ModelParams, StructureConfig, SufficientStats, BKG, CNT};

fn vocab(n: usize) -> VocabSizes {
    VocabSizes {
        event_heads: n,
        arg_heads: n,
        caseframes: n,
    }
}

fn clause(head: u32, args: &[(ArgType, u32, u32)]) -> IndexedClause {
    IndexedClause {
        head,
        args: args
            .iter()
            .map(|&(arg_type, head, caseframe)| IndexedArg {
                arg_type,
                head,
                caseframe,
            })
            .collect(),
    }
}

fn corpus<R: Rng>(rng: &mut R, n: usize, v: usize, len: usize) -> Vec<IndexedDocument> {
    (0..n)
        .map(|i| {
            let mut d = random_document(rng, vocab(v), len, 2);
            d.doc_id = format!("d{i}");
            d
        })
        .collect()
}

fn max_param_diff(a: &ModelParams, b: &ModelParams) -> f64 {
    let mut worst = (a.switch[0] - b.switch[0]).abs();
    for (x, y) in a.rows().zip(b.rows()) {
        assert_eq!(x.len(), y.len());
        for (p, q) in x.iter().zip(y) {
            worst = worst.max((p - q).abs());
        }
    }
    worst
}

#[test]
fn deterministic_model_yields_hard_counts() {
    let p = deterministic_model();
    let doc = IndexedDocument {
        doc_id: "d".into(),
        clauses: vec![
            clause(1, &[(ArgType::Subj, 1, 1), (ArgType::Obj, 2, 2)]),
            clause(2, &[]),
            clause(1, &[(ArgType::Obj, 2, 2)]),
        ],
    };
    let (stats, ll) = e_step(&p, &doc).unwrap();
    assert!(ll.abs() < 1e-12);
    let mut want = SufficientStats::zeros(&p.structure(), p.vocab_sizes());
    want.switch[CNT] = 2.0;
    want.frame_init[0] = 1.0;
    want.frame_tran[0][0] = 2.0;
    let f = &mut want.frames[0];
    f.event_init[0] = 1.0;
    f.event_tran[0][1] = 1.0;
    f.event_tran[1][0] = 1.0;
    f.event_head[0][1] = 2.0;
    f.event_head[1][2] = 1.0;
    f.slot[0][ArgType::Subj.index()][0] = 1.0;
    f.slot[0][ArgType::Obj.index()][1] = 2.0;
    f.arg_head[0][1] = 1.0;
    f.arg_head[1][2] = 2.0;
    f.arg_dep[0][1] = 1.0;
    f.arg_dep[1][2] = 2.0;
    assert!(stats.max_abs_diff(&want) < 1e-12, "{stats:?}");
}

#[test]
fn expected_counts_are_normalized_per_clause() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = random_model(&mut rng, ModelBounds::default());
        let d = random_document(&mut rng, vocab(5), 5, 3);
        let (s, _) = e_step(&p, &d).unwrap();
        let len = d.clauses.len() as f64;
        let args: usize = d.clauses.iter().map(|c| c.args.len()).sum();
        let heads: f64 = p
            .frame_refs()
            .map(|f| s.event_occupancy(f).iter().sum::<f64>())
            .sum();
        let arg_mass: f64 = p
            .frame_refs()
            .map(|f| s.slot_occupancy(f).iter().sum::<f64>())
            .sum();
        assert!((heads - len).abs() < 1e-9);
        assert!((arg_mass - args as f64).abs() < 1e-9);
        assert!((s.frame_init.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((s.switch[BKG] + s.switch[CNT] - (len - 1.0)).abs() < 1e-9);
        // each background clause draws exactly one background event
        let bkg_events: f64 = s.background.event_init.iter().sum();
        assert!((bkg_events - s.switch[BKG]).abs() < 1e-9);
        assert!(s.all_finite_nonnegative(0.0));
    }
}

/// Expected counts equal `p * d ln P / d p` for every multinomial cell, computed here by
/// central differences on the forward likelihood.
#[test]
fn expected_counts_match_likelihood_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..4 {
        let p = random_model(&mut rng, ModelBounds::default());
        let d = random_document(&mut rng, vocab(5), 4, 2);
        let (stats, _) = e_step(&p, &d).unwrap();
        let ll = |q: &ModelParams| forward_backward(q, &d).unwrap().loglik;
        let h = 1e-6;
        let numeric = |mutate: &dyn Fn(&mut ModelParams, f64), value: f64| {
            let mut up = p.clone();
            mutate(&mut up, value * (1.0 + h));
            let mut down = p.clone();
            mutate(&mut down, value * (1.0 - h));
            (ll(&up) - ll(&down)) / (2.0 * h)
        };
        let check = |got: f64, want: f64, what: &str| {
            assert!(
                (got - want).abs() < 1e-6 * (1.0 + want.abs()),
                "{what}: {got} vs {want}"
            );
        };
        for k in 0..2 {
            check(
                stats.switch[k],
                numeric(&|q, v| q.switch[k] = v, p.switch[k]),
                "switch",
            );
        }
        for f in 0..p.num_frames() {
            check(
                stats.frame_init[f],
                numeric(&|q, v| q.frame_init[f] = v, p.frame_init[f]),
                "frame_init",
            );
            for g in 0..p.num_frames() {
                check(
                    stats.frame_tran[f][g],
                    numeric(&|q, v| q.frame_tran[f][g] = v, p.frame_tran[f][g]),
                    "frame_tran",
                );
            }
        }
        for frame in p.frame_refs() {
            let fp = p.frame(frame).clone();
            let fs = stats.frame(frame);
            for e in 0..fp.event_init.len() {
                check(
                    fs.event_init[e],
                    numeric(
                        &|q, v| q.frame_mut(frame).event_init[e] = v,
                        fp.event_init[e],
                    ),
                    "event_init",
                );
                for e2 in 0..fp.event_tran.get(e).map_or(0, Vec::len) {
                    check(
                        fs.event_tran[e][e2],
                        numeric(
                            &|q, v| q.frame_mut(frame).event_tran[e][e2] = v,
                            fp.event_tran[e][e2],
                        ),
                        "event_tran",
                    );
                }
                for w in 0..5 {
                    check(
                        fs.event_head[e][w],
                        numeric(
                            &|q, v| q.frame_mut(frame).event_head[e][w] = v,
                            fp.event_head[e][w],
                        ),
                        "event_head",
                    );
                }
                for a in 0..3 {
                    for s in 0..fp.arg_head.len() {
                        check(
                            fs.slot[e][a][s],
                            numeric(
                                &|q, v| q.frame_mut(frame).slot[e][a][s] = v,
                                fp.slot[e][a][s],
                            ),
                            "slot",
                        );
                    }
                }
            }
            for s in 0..fp.arg_head.len() {
                for w in 0..5 {
                    check(
                        fs.arg_head[s][w],
                        numeric(
                            &|q, v| q.frame_mut(frame).arg_head[s][w] = v,
                            fp.arg_head[s][w],
                        ),
                        "arg_head",
                    );
                    check(
                        fs.arg_dep[s][w],
                        numeric(
                            &|q, v| q.frame_mut(frame).arg_dep[s][w] = v,
                            fp.arg_dep[s][w],
                        ),
                        "arg_dep",
                    );
                }
            }
        }
    }
}

#[test]
fn corpus_stats_are_the_sum_of_document_stats() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = random_model(&mut rng, ModelBounds::default());
    let docs = corpus(&mut rng, 2, 5, 5);
    let (a, la) = e_step(&p, &docs[0]).unwrap();
    let (b, lb) = e_step(&p, &docs[1]).unwrap();
    let (total, lt) = e_step_corpus(&p, &docs).unwrap();
    let mut sum = a.clone();
    sum.merge(&b);
    assert!(total.max_abs_diff(&sum) < 1e-12);
    assert!((lt - la - lb).abs() < 1e-12);
    let mut other_order = b;
    other_order.merge(&a);
    assert!(other_order.max_abs_diff(&sum) < 1e-12);
}

#[test]
fn batch_em_objective_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..5 {
        let p = random_model(&mut rng, ModelBounds::default());
        let docs = corpus(&mut rng, 15, 5, 6);
        let run = batch_em(&p, &docs, 15).unwrap();
        assert_eq!(run.objective.len(), 16);
        for w in run.objective.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        let ll = corpus_loglik(&run.params, &docs).unwrap();
        assert!((ll - run.final_loglik()).abs() < 1e-9);
    }
}

#[test]
fn batch_em_leaves_a_fixed_point_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let config = StructureConfig {
        frames: vec![FrameShape {
            events: 1,
            slots: 1,
        }],
        background: FrameShape {
            events: 1,
            slots: 1,
        },
    };
    let p = randomize(&config, vocab(3), &mut rng);
    let docs = corpus(&mut rng, 4, 3, 4);
    let mut cur = p;
    for _ in 0..5000 {
        let next = batch_em(&cur, &docs, 1).unwrap().params;
        let done = max_param_diff(&cur, &next) < 1e-15;
        cur = next;
        if done {
            break;
        }
    }
    let (stats, _) = e_step_corpus(&cur, &docs).unwrap();
    let fixed = m_step(&stats, &cur.smoothing, cur.beta).unwrap();
    assert!(max_param_diff(&cur, &fixed) < 1e-12);
    let again = batch_em(&fixed, &docs, 1).unwrap().params;
    assert!(max_param_diff(&fixed, &again) < 1e-12);
}

#[test]
fn incremental_em_on_one_document_matches_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let p = random_model(&mut rng, ModelBounds::default());
    let docs = corpus(&mut rng, 1, 5, 6);
    for passes in 1..4 {
        let inc = incremental_em(&p, &docs, passes, 7).unwrap();
        let bat = batch_em(&p, &docs, passes).unwrap();
        assert!(max_param_diff(&inc.params, &bat.params) < 1e-10);
        for (a, b) in inc.loglik.iter().zip(&bat.loglik) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn incremental_em_is_seeded_and_improves() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let p = random_model(&mut rng, ModelBounds::default());
    let docs = corpus(&mut rng, 20, 5, 6);
    let a = incremental_em(&p, &docs, 5, 3).unwrap();
    let b = incremental_em(&p, &docs, 5, 3).unwrap();
    assert_eq!(a.params, b.params);
    assert!(a.final_loglik() >= a.loglik[0]);
    let c = incremental_em(&p, &docs, 5, 4).unwrap();
    assert!(max_param_diff(&a.params, &c.params) > 0.0);
}

#[test]
fn em_rejects_an_empty_corpus() {
    let p = deterministic_model();
    assert!(batch_em(&p, &[], 1).is_err());
    assert!(incremental_em(&p, &[], 1, 0).is_err());
}

#[test]
fn unperturbed_split_preserves_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..20 {
        let p = random_model(&mut rng, ModelBounds::default());
        let docs = corpus(&mut rng, 5, 5, 5);
        let (s, record) = split_all(&p, 0.0, 1);
        s.validate(1e-12).unwrap();
        let before = corpus_loglik(&p, &docs).unwrap();
        let after = corpus_loglik(&s, &docs).unwrap();
        assert!((before - after).abs() < 1e-8, "{before} vs {after}");
        for (frame, parent) in &record.parents {
            let shape = s.frame(*frame).shape();
            assert_eq!(shape.events, 2 * parent.events);
            assert_eq!(shape.slots, 2 * parent.slots);
        }
    }
}

#[test]
fn perturbed_split_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let p = random_model(&mut rng, ModelBounds::default());
    let (a, _) = split_all(&p, 0.01, 5);
    let (b, _) = split_all(&p, 0.01, 5);
    let (c, _) = split_all(&p, 0.01, 6);
    assert_eq!(a, b);
    assert_ne!(a, c);
    a.validate(1e-12).unwrap();
    let (plain, _) = split_all(&p, 0.0, 5);
    let d = max_param_diff(&a, &plain);
    assert!(d > 0.0 && d < 0.03);
}

#[test]
fn merge_fraction_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let p = random_model(&mut rng, ModelBounds::default());
    let docs = corpus(&mut rng, 8, 5, 5);
    let (s, record) = split_all(&p, 0.05, 2);
    let cands = score_merges(&s, &docs, &record, MergeScoring::Approximate).unwrap();
    let expected: usize = record
        .parents
        .iter()
        .map(|(_, sh)| sh.events + sh.slots)
        .sum();
    assert_eq!(cands.len(), expected);
    assert!(cands.windows(2).all(|w| w[0].loss <= w[1].loss));
    assert_eq!(merge_back(&s, &cands, 0.0), s);
    let restored = merge_back(&s, &cands, 1.0);
    assert_eq!(restored.structure(), p.structure());
    restored.validate(1e-9).unwrap();
    let half = merge_back(&s, &cands, 0.5);
    half.validate(1e-9).unwrap();
    let merged = (expected as f64 * 0.5).ceil() as usize;
    let count = |m: &ModelParams| -> usize {
        m.frame_refs()
            .map(|f| m.frame(f).shape())
            .map(|sh| sh.events + sh.slots)
            .sum()
    };
    assert_eq!(count(&s) - count(&half), merged);
}

#[test]
fn redundant_children_cost_nothing_to_merge() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = random_model(&mut rng, ModelBounds::default());
    let docs = corpus(&mut rng, 6, 5, 5);
    let (s, record) = split_all(&p, 0.0, 0);
    for scoring in [MergeScoring::Approximate, MergeScoring::Exact] {
        let cands = score_merges(&s, &docs, &record, scoring).unwrap();
        for c in &cands {
            assert!(c.loss.abs() < 1e-6, "{c:?}");
        }
        let back = merge_back(&s, &cands, 1.0);
        assert!(max_param_diff(&back, &p) < 1e-12);
    }
}

#[test]
fn exact_merge_loss_is_the_likelihood_drop() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let p = random_model(&mut rng, ModelBounds::default());
    let docs = corpus(&mut rng, 6, 5, 5);
    let (s, record) = split_all(&p, 0.2, 3);
    let base = corpus_loglik(&s, &docs).unwrap();
    for c in score_merges(&s, &docs, &record, MergeScoring::Exact).unwrap() {
        let merged = merge_pairs(&s, &[c]);
        let drop = base - corpus_loglik(&merged, &docs).unwrap();
        assert!((c.loss - drop).abs() < 1e-8);
    }
}

#[test]
fn unsplit_pairs_are_not_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let p = random_model(&mut rng, ModelBounds::default());
    let docs = corpus(&mut rng, 3, 5, 3);
    let (_, record) = split_all(&p, 0.0, 0);
    // the record does not describe an unsplit model
    assert!(score_merges(&p, &docs, &record, MergeScoring::Approximate).is_err());
    let (s, record) = split_all(&p, 0.0, 0);
    for c in score_merges(&s, &docs, &record, MergeScoring::Approximate).unwrap() {
        assert_eq!(c.pair.0 / 2, c.pair.1 / 2);
        assert_eq!(c.pair.0 + 1, c.pair.1);
    }
}

#[test]
fn single_cycle_is_plain_em() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let docs = corpus(&mut rng, 10, 5, 5);
    let schedule = TrainSchedule {
        cycles: 1,
        em_iters_per_cycle: 3,
        ..TrainSchedule::default()
    };
    let (params, report) = train(&TrainConfig::new(2), vocab(5), &docs, &schedule).unwrap();
    assert_eq!(params.structure(), StructureConfig::initial(2, 1, 2));
    assert_eq!(report.stages.len(), 2);
}

#[test]
fn training_is_bounded_seeded_and_improving() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let docs = corpus(&mut rng, 12, 5, 5);
    let schedule = TrainSchedule {
        cycles: 3,
        em_iters_per_cycle: 3,
        post_merge_iters: 2,
        ..TrainSchedule::default()
    };
    let config = TrainConfig::new(2);
    let (a, report) = train(&config, vocab(5), &docs, &schedule).unwrap();
    let (b, _) = train(&config, vocab(5), &docs, &schedule).unwrap();
    assert_eq!(a, b);
    for f in a.frame_refs() {
        let sh = a.frame(f).shape();
        assert!(sh.events <= 4 && sh.slots <= 8, "{sh:?}");
    }
    a.validate(1e-9).unwrap();
    assert!(report.final_loglik() >= report.initial_loglik());
    let stages: Vec<&str> = report.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(
        stages,
        [
            "init",
            "em",
            "split",
            "merge",
            "post-merge",
            "em",
            "split",
            "merge",
            "post-merge",
            "em"
        ]
    );
    let batch = TrainSchedule {
        mode: EmMode::Batch,
        ..schedule
    };
    let (c, _) = train(&config, vocab(5), &docs, &batch).unwrap();
    c.validate(1e-9).unwrap();
}

#[test]
fn schedule_validation() {
    let bad = [
        TrainSchedule {
            cycles: 0,
            ..TrainSchedule::default()
        },
        TrainSchedule {
            merge_fraction: 1.5,
            ..TrainSchedule::default()
        },
        TrainSchedule {
            em_iters_per_cycle: 0,
            ..TrainSchedule::default()
        },
    ];
    for s in bad {
        assert!(s.validate().is_err());
    }
    assert!(TrainSchedule::default().validate().is_ok());
}
