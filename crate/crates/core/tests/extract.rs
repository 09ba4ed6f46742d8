use frame_induction::corpus::{
    ArgType, IndexedArg, IndexedClause, IndexedDocument, VocabSizes, Vocabularies, Vocabulary,
    UNK_ID,
};
use frame_induction::error::Error;
use frame_induction::extract::{
    classify_corpus, classify_document, decode_corpus, dump_frames, entities_to_jsonl,
    frame_posterior, frame_word_prob, frame_word_prob_id, parse_entities, restrict_to_frames,
    DocumentFrames, ExtractedEntity, DEFAULT_TRIGGER_THRESHOLD,
};
use frame_induction::fixtures::{random_model, ModelBounds};
use frame_induction::params::{FrameRef, FrameShape, ModelParams, Smoothing, StructureConfig};
use frame_induction::synth::{planted_model, sample_corpus, PlantedSpec, SampleOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Heads: 1 "attack", 2 "bomb", 3 "kill", 4 "vote". Frame 0 owns 2 and 3, frame 1 owns 4,
/// and both emit 1.
fn two_frame_model() -> (ModelParams, Vocabularies) {
    let shape = FrameShape {
        events: 2,
        slots: 1,
    };
    let config = StructureConfig {
        frames: vec![shape; 2],
        background: shape,
    };
    let vocab = VocabSizes {
        event_heads: 5,
        arg_heads: 2,
        caseframes: 2,
    };
    let mut p = ModelParams::uniform(&config, vocab, 0.5, Smoothing::default());
    p.frames[0].event_head = vec![vec![0.0, 0.2, 0.3, 0.5, 0.0], vec![0.0, 0.4, 0.1, 0.5, 0.0]];
    p.frames[1].event_head = vec![vec![0.0, 0.1, 0.0, 0.0, 0.9]; 2];
    p.validate(1e-12).unwrap();
    let v = Vocabularies {
        event_heads: Vocabulary::from_tokens(["attack", "bomb", "kill", "vote"]),
        arg_heads: Vocabulary::from_tokens(["x"]),
        caseframes: Vocabulary::from_tokens(["x"]),
    };
    (p, v)
}

fn doc(heads: &[u32]) -> IndexedDocument {
    IndexedDocument {
        doc_id: "d".into(),
        clauses: heads
            .iter()
            .map(|&head| IndexedClause {
                head,
                args: vec![IndexedArg {
                    arg_type: ArgType::Subj,
                    head: 1,
                    caseframe: 1,
                }],
            })
            .collect(),
    }
}

#[test]
fn frame_word_probability_averages_events() {
    let (p, v) = two_frame_model();
    assert!((frame_word_prob_id(&p, 0, 1) - 0.3).abs() < 1e-15);
    let w = frame_word_prob(&p, &v.event_heads, 0, "attack");
    assert!(!w.oov && (w.prob - 0.3).abs() < 1e-15);
    let w = frame_word_prob(&p, &v.event_heads, 0, "unseen");
    assert!(w.oov && w.prob == 0.0);
    for f in 0..2 {
        let total: f64 = (0..5).map(|w| frame_word_prob_id(&p, f, w)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn frame_posterior_values() {
    let (p, _) = two_frame_model();
    let post = frame_posterior(&p, 1).unwrap();
    assert!((post[0] - 0.75).abs() < 1e-12 && (post[1] - 0.25).abs() < 1e-12);
    assert_eq!(frame_posterior(&p, 4).unwrap(), vec![0.0, 1.0]);
    assert!(matches!(
        frame_posterior(&p, UNK_ID),
        Err(Error::UndefinedPosterior(_))
    ));
}

#[test]
fn classification_boundaries() {
    let (p, _) = two_frame_model();
    assert_eq!(DEFAULT_TRIGGER_THRESHOLD, 0.2);
    assert!(!classify_document(&p, &doc(&[]), 0, 0.0, 0.2));
    // "kill" triggers frame 0 and nothing else
    assert!(classify_document(&p, &doc(&[3, 4]), 0, 0.0, 0.2));
    // mean P_0 over tokens (kill, vote, vote) is 0.5/3
    let d = doc(&[3, 4, 4]);
    assert!(classify_document(&p, &d, 0, 0.16, 0.2));
    assert!(!classify_document(&p, &d, 0, 0.17, 0.2));
    // no trigger: "attack" has P(F1 | w) = 0.25, under a 0.3 trigger threshold
    assert!(!classify_document(&p, &doc(&[1]), 1, 0.0, 0.3));
    assert!(classify_document(&p, &doc(&[1]), 1, 0.0, 0.2));
    // unknown heads dilute the mean but never trigger
    assert!(!classify_document(&p, &doc(&[UNK_ID]), 0, 0.0, 0.0));
    assert!(!classify_document(&p, &doc(&[3, UNK_ID]), 0, 0.25, 0.2));
    assert!(classify_document(&p, &doc(&[3, UNK_ID]), 0, 0.24, 0.2));
}

#[test]
fn classify_corpus_lists_frames() {
    let (p, _) = two_frame_model();
    let out = classify_corpus(&p, &[doc(&[3, 2]), doc(&[4]), doc(&[1])], 0.05, 0.2);
    let frames: Vec<_> = out.iter().map(|d| d.frames.clone()).collect();
    assert_eq!(frames, vec![vec![0], vec![1], vec![0, 1]]);
}

#[test]
fn frame_report_truncates_and_matches_tables() {
    let (p, v) = two_frame_model();
    let r = dump_frames(&p, &v, 2).unwrap();
    assert_eq!(r.frames.len(), 3);
    assert_eq!(r.frames[2].frame, FrameRef::Background);
    let e0 = &r.frames[0].events[0].heads;
    assert_eq!(
        e0.iter().map(|w| w.word.as_str()).collect::<Vec<_>>(),
        ["kill", "bomb"]
    );
    assert_eq!(e0[0].prob, p.frames[0].event_head[0][3]);

    let full = dump_frames(&p, &v, 100).unwrap();
    let heads = &full.frames[1].events[0].heads;
    assert_eq!(heads.len(), 5);
    assert_eq!(
        heads.iter().map(|w| w.prob).sum::<f64>(),
        p.frames[1].event_head[0].iter().sum::<f64>()
    );
    assert!(heads.windows(2).all(|w| w[0].prob >= w[1].prob));
    assert!(full.to_text().contains("Frame 1\n  Event 0: vote (0.900)"));
    assert!(matches!(
        dump_frames(&p, &v, 0),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn frame_report_at_five_lists_five_words() {
    let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
    let r = dump_frames(&p, &v, 5).unwrap();
    for f in &r.frames {
        assert!(f.events.iter().all(|e| e.heads.len() == 5));
        assert!(f
            .slots
            .iter()
            .all(|s| s.heads.len() == 5 && s.caseframes.len() == 5));
    }
    // the planted block of event 0 in frame 0 fills its top five
    assert!(r.frames[0].events[0]
        .heads
        .iter()
        .all(|w| w.word.starts_with("f0e0w")));
}

#[test]
fn decoding_is_deterministic_and_round_trips() {
    let (p, v) = planted_model(&PlantedSpec::default()).unwrap();
    let pc = sample_corpus(
        &p,
        &v,
        &SampleOptions {
            documents: 30,
            ..SampleOptions::default()
        },
    )
    .unwrap();
    let a = decode_corpus(&p, &v, &pc.corpus).unwrap();
    let b = decode_corpus(&p, &v, &pc.corpus).unwrap();
    assert_eq!(a, b);
    let args = pc.corpus.num_args();
    assert_eq!(a.entities.len() + a.background_args, args);
    let back = parse_entities(entities_to_jsonl(&a.entities).as_bytes()).unwrap();
    assert_eq!(back, a.entities);

    let (other, ov) = two_frame_model();
    assert_eq!(ov.sizes(), other.vocab_sizes());
    assert!(matches!(
        decode_corpus(&other, &v, &pc.corpus),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn restriction_keeps_classified_frames() {
    let e = |doc: &str, frame| ExtractedEntity {
        doc_id: doc.into(),
        frame,
        event: 0,
        slot: 0,
        head_lemma: "x".into(),
        clause_index: 0,
        arg_index: 0,
    };
    let ents = vec![e("a", 0), e("a", 1), e("b", 1), e("c", 0)];
    let labels = vec![
        DocumentFrames {
            doc_id: "a".into(),
            frames: vec![1],
        },
        DocumentFrames {
            doc_id: "b".into(),
            frames: vec![],
        },
    ];
    assert_eq!(restrict_to_frames(&ents, &labels), vec![e("a", 1)]);
}

proptest! {
    #[test]
    fn classification_is_monotone_in_thresholds(
        seed in any::<u64>(),
        heads in prop::collection::vec(0u32..5, 0..6),
        avg in 0.0f64..0.6,
        trig in 0.0f64..1.0,
        bump_avg in 0.0f64..0.3,
        bump_trig in 0.0f64..0.3,
    ) {
        let p = random_model(&mut ChaCha8Rng::seed_from_u64(seed), ModelBounds::default());
        let d = doc(&heads);
        for f in 0..p.num_frames() {
            let base = classify_document(&p, &d, f, avg, trig);
            prop_assert!(base || !classify_document(&p, &d, f, avg + bump_avg, trig));
            prop_assert!(base || !classify_document(&p, &d, f, avg, trig + bump_trig));
        }
    }

    #[test]
    fn frame_posterior_is_normalized(seed in any::<u64>(), word in 1u32..5) {
        let p = random_model(&mut ChaCha8Rng::seed_from_u64(seed), ModelBounds::default());
        let post = frame_posterior(&p, word).unwrap();
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // same posterior from the unnormalized scores scaled by a constant
        let scaled: Vec<f64> = (0..p.num_frames()).map(|f| 7.5 * frame_word_prob_id(&p, f, word)).collect();
        let z: f64 = scaled.iter().sum();
        for (a, b) in post.iter().zip(&scaled) {
            prop_assert!((a - b / z).abs() < 1e-12);
        }
    }
}
