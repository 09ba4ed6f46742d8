use frame_induction::chain::{complete_log_joint, Assignment, ClauseAssignment, SlotChoice};
use frame_induction::corpus::{index_document, Corpus, Vocabularies, Vocabulary};
use frame_induction::fixtures::deterministic_model;
use frame_induction::params::FrameRef;
use frame_induction::synth::{
    planted_model, recovery_score, sample_corpus, CountRange, DocTruth, PlantedSpec, SampleOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts(documents: usize, seed: u64) -> SampleOptions {
    SampleOptions {
        documents,
        seed,
        ..SampleOptions::default()
    }
}

fn as_assignments(truth: &[DocTruth]) -> Vec<Assignment> {
    truth
        .iter()
        .map(|t| Assignment {
            doc_id: t.doc_id.clone(),
            clauses: t
                .clauses
                .iter()
                .map(|c| ClauseAssignment {
                    state: c.state,
                    bkg_event: c.bkg_event,
                    slots: c
                        .slots
                        .iter()
                        .map(|&slot| SlotChoice {
                            frame: if c.state.bkg {
                                FrameRef::Background
                            } else {
                                FrameRef::Content(c.state.frame)
                            },
                            slot,
                        })
                        .collect(),
                })
                .collect(),
            log_joint: t.log_joint,
        })
        .collect()
}

#[test]
fn sampling_is_seeded() {
    let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
    let a = sample_corpus(&p, &v, &opts(50, 3)).unwrap();
    let b = sample_corpus(&p, &v, &opts(50, 3)).unwrap();
    let c = sample_corpus(&p, &v, &opts(50, 4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.corpus, c.corpus);
    // records survive the corpus validator
    Corpus::from_records(
        a.corpus
            .documents
            .iter()
            .flat_map(|d| d.clauses.clone())
            .collect(),
    )
    .unwrap();
}

#[test]
fn deterministic_model_samples_deterministic_structure() {
    let p = deterministic_model();
    let tok = |n: usize| Vocabulary::from_tokens((1..n).map(|i| format!("t{i}")));
    let sizes = p.vocab_sizes();
    let v = Vocabularies {
        event_heads: tok(sizes.event_heads),
        arg_heads: tok(sizes.arg_heads),
        caseframes: tok(sizes.caseframes),
    };
    let pc = sample_corpus(&p, &v, &opts(20, 1)).unwrap();
    for (doc, t) in pc.corpus.documents.iter().zip(&pc.truth) {
        for (i, c) in t.clauses.iter().enumerate() {
            assert!(!c.state.bkg);
            assert_eq!(c.state.event, i % 2);
            let clause = &doc.clauses[i];
            for (arg, &s) in clause.args.iter().zip(&c.slots) {
                let want = if arg.arg_type.index() == 0 { 0 } else { 1 };
                assert_eq!(s, want);
            }
        }
        assert!(t.log_joint.abs() < 1e-12, "every draw had probability one");
    }
}

#[test]
fn zero_background_rate_never_samples_background() {
    let spec = PlantedSpec {
        p_background: 0.0,
        ..PlantedSpec::default()
    };
    let (p, v) = planted_model(&spec).unwrap();
    let pc = sample_corpus(&p, &v, &opts(200, 9)).unwrap();
    assert!(pc
        .truth
        .iter()
        .flat_map(|t| &t.clauses)
        .all(|c| !c.state.bkg));
}

#[test]
fn empirical_frequencies_match_the_model() {
    let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
    let pc = sample_corpus(&p, &v, &opts(20_000, 5)).unwrap();
    let check = |hits: usize, n: usize, q: f64, what: &str| {
        let sd = (q * (1.0 - q) / n as f64).sqrt();
        let got = hits as f64 / n as f64;
        assert!((got - q).abs() < 3.0 * sd, "{what}: {got} vs {q} over {n}");
    };
    let later: Vec<_> = pc
        .truth
        .iter()
        .flat_map(|t| t.clauses.iter().skip(1))
        .collect();
    assert!(later.len() > 50_000);
    check(
        later.iter().filter(|c| c.state.bkg).count(),
        later.len(),
        p.switch[0],
        "background rate",
    );

    // preferred slot for (event 0, subject) in content clauses
    let (mut n, mut hits) = (0, 0);
    for (doc, t) in pc.corpus.documents.iter().zip(&pc.truth) {
        for (clause, c) in doc.clauses.iter().zip(&t.clauses) {
            if c.state.bkg || c.state.event != 0 {
                continue;
            }
            for (arg, &s) in clause.args.iter().zip(&c.slots) {
                if arg.arg_type.index() == 0 {
                    n += 1;
                    hits += (s == 0) as usize;
                }
            }
        }
    }
    check(hits, n, p.frames[0].slot[0][0][0], "preferred slot");

    // event heads of content clauses in (frame 1, event 0), token by token
    let mut counts = vec![0usize; v.event_heads.len()];
    for (doc, t) in pc.corpus.documents.iter().zip(&pc.truth) {
        for (clause, c) in doc.clauses.iter().zip(&t.clauses) {
            if !c.state.bkg && c.state.frame == 1 && c.state.event == 0 {
                counts[v.event_heads.id(&clause.event_head_lemma) as usize] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    let row = &p.frames[1].event_head[0];
    for w in v
        .event_heads
        .tokens()
        .iter()
        .filter(|w| w.starts_with("f1e0") || w.starts_with("f0e1w0"))
    {
        let id = v.event_heads.id(w) as usize;
        check(counts[id], total, row[id], w);
    }
    assert_eq!(counts[0], 0, "the unknown token is never emitted");
}

#[test]
fn recorded_log_joint_matches_the_model() {
    let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
    let pc = sample_corpus(&p, &v, &opts(100, 2)).unwrap();
    for (doc, t) in pc.corpus.documents.iter().zip(&pc.truth) {
        let idx = index_document(doc, &v);
        let path: Vec<_> = t.clauses.iter().map(|c| c.state).collect();
        let bkg: Vec<_> = t.clauses.iter().map(|c| c.bkg_event).collect();
        let slots: Vec<_> = t.clauses.iter().map(|c| c.slots.clone()).collect();
        let lj = complete_log_joint(&p, &idx, &path, &bkg, &slots);
        assert!((lj - t.log_joint).abs() < 1e-9, "{lj} vs {}", t.log_joint);
    }
}

#[test]
fn recovery_is_perfect_under_identity_and_relabeling() {
    let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
    let pc = sample_corpus(&p, &v, &opts(100, 7)).unwrap();
    let same = as_assignments(&pc.truth);
    let r = recovery_score(&pc.truth, &same).unwrap();
    assert_eq!((r.slot_f1, r.event_purity), (1.0, 1.0));

    let mut relabeled = same.clone();
    for a in &mut relabeled {
        for c in &mut a.clauses {
            if !c.state.bkg {
                c.state.frame = 1 - c.state.frame;
                c.state.event = 1 - c.state.event;
            }
            for s in &mut c.slots {
                if let FrameRef::Content(f) = s.frame {
                    s.frame = FrameRef::Content(1 - f);
                }
                s.slot = 1 - s.slot;
            }
        }
    }
    let r = recovery_score(&pc.truth, &relabeled).unwrap();
    assert_eq!((r.slot_f1, r.event_purity), (1.0, 1.0));
}

#[test]
fn random_labels_recover_little() {
    let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
    let pc = sample_corpus(&p, &v, &opts(400, 8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut noise = as_assignments(&pc.truth);
    for a in &mut noise {
        for c in &mut a.clauses {
            for s in &mut c.slots {
                s.frame = FrameRef::Content(rng.gen_range(0..3));
                s.slot = rng.gen_range(0..2);
            }
        }
    }
    // six planted slot labels against six random ones
    let r = recovery_score(&pc.truth, &noise).unwrap();
    assert!(r.slot_f1 < 0.3, "{}", r.slot_f1);
}

#[test]
fn recovery_rejects_mismatched_shapes() {
    let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
    let pc = sample_corpus(&p, &v, &opts(3, 0)).unwrap();
    let a = as_assignments(&pc.truth);
    assert!(recovery_score(&pc.truth, &a[..2]).is_err());
}

#[test]
fn sampling_rejects_empty_ranges() {
    let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
    let bad = SampleOptions {
        clauses: CountRange { min: 0, max: 3 },
        ..opts(3, 0)
    };
    assert!(sample_corpus(&p, &v, &bad).is_err());
}
