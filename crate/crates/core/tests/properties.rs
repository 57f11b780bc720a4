//! Property tests for invariants that must hold on every input.

use image::{Rgb, RgbImage};
use proptest::prelude::*;
use ssg_core::harness::frame_text_tokens;
use ssg_core::metrics::{
    average_precision, multilabel_map, recall_at_k, srv_metrics, FrameTriplets, ScoredTriplet, SrvOptions, SrvRecord,
};
use ssg_core::nn::argmax;
use ssg_core::schema::{parse_video_document, write_video_document, SsgAnnotation};
use ssg_core::synth::{generate_dataset, random_schema, SchemaShape, SynthConfig};
use ssg_core::{apply_prompt, BBox, EntityKind, PromptKind, PromptSpec, Region};

fn srv_record() -> impl Strategy<Value = SrvRecord> {
    (0usize..3, 0usize..3, 1usize..5)
        .prop_flat_map(|(kind, class, n)| {
            (
                Just(kind),
                Just(class),
                prop::collection::vec(0usize..3, n),
                prop::collection::vec(prop::option::weighted(0.9, 0usize..3), n),
                prop::collection::vec(prop::bool::weighted(0.15), n),
            )
        })
        .prop_map(|(kind, class, gt, predicted, unsure)| SrvRecord {
            kind: [EntityKind::Person, EntityKind::Object, EntityKind::Verb][kind],
            class: format!("class{class}"),
            roles: (0..gt.len()).map(|i| format!("role{i}")).collect(),
            predicted: predicted.into_iter().map(|p| p.map(|v| format!("v{v}"))).collect(),
            gt: gt.into_iter().map(|v| format!("v{v}")).collect(),
            unsure,
        })
}

fn records_with_permutation() -> impl Strategy<Value = (Vec<SrvRecord>, Vec<SrvRecord>)> {
    prop::collection::vec(srv_record(), 1..30).prop_flat_map(|recs| {
        let shuffled = Just(recs.clone()).prop_shuffle();
        (Just(recs), shuffled)
    })
}

fn labelled_scores() -> impl Strategy<Value = Vec<(f64, bool)>> {
    // distinct scores so that rank ties cannot depend on sample order
    prop::collection::vec(any::<bool>(), 2..40).prop_map(|labels| {
        labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| ((i * 7919 % 1009) as f64 / 1009.0, l))
            .collect()
    })
}

fn frame_triplets() -> impl Strategy<Value = FrameTriplets> {
    (
        prop::collection::vec((0usize..4, 0usize..6, 0u32..20), 1..25),
        prop::collection::vec((0usize..4, 0usize..6), 1..5),
    )
        .prop_map(|(scored, gt)| FrameTriplets {
            scored: scored
                .into_iter()
                .map(|(object, predicate, s)| ScoredTriplet {
                    object,
                    predicate,
                    score: s as f64 / 20.0,
                })
                .collect(),
            gt,
        })
}

fn synthetic_frames(seed: u64, unsure_rate: f64) -> (ssg_core::FrameStructure, Vec<SsgAnnotation>) {
    let schema = random_schema(&SchemaShape::default(), seed);
    let cfg = SynthConfig {
        frames: 4,
        max_relations_per_object: 3,
        image_size: 8,
        unsure_rate,
        ..SynthConfig::default()
    };
    let anns = generate_dataset(&schema, &cfg, seed).annotations;
    (schema, anns)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn annotation_documents_round_trip(seed in 0u64..1000, unsure in 0.0f64..0.5) {
        let (_, anns) = synthetic_frames(seed, unsure);
        let video = anns[0].video_id.clone();
        let frames: Vec<SsgAnnotation> = anns.into_iter().filter(|a| a.video_id == video).collect();
        let text = write_video_document(&video, &frames);
        prop_assert_eq!(parse_video_document(&text).unwrap(), frames);
    }

    #[test]
    fn srv_metrics_ignore_record_order((recs, shuffled) in records_with_permutation()) {
        let a = srv_metrics(&recs, SrvOptions::default());
        let b = srv_metrics(&shuffled, SrvOptions::default());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn srv_metrics_are_ordered_and_bounded(recs in prop::collection::vec(srv_record(), 1..30)) {
        if let Ok(r) = srv_metrics(&recs, SrvOptions::default()) {
            let (one, two, all) = (r.get("value").unwrap(), r.get("value_two").unwrap(), r.get("value_all").unwrap());
            prop_assert!(one >= two && two >= all, "{} {} {}", one, two, all);
            for v in r.metrics.values() {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }

    #[test]
    fn average_precision_ignores_sample_order(samples in labelled_scores(), rot in 0usize..40) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = samples.iter().cloned().unzip();
        let mut rotated = samples.clone();
        rotated.rotate_left(rot % samples.len());
        let (rs, rl): (Vec<f64>, Vec<bool>) = rotated.into_iter().unzip();
        let a = average_precision(&scores, &labels);
        prop_assert_eq!(a, average_precision(&rs, &rl));
        if let Some(ap) = a {
            prop_assert!(ap > 0.0 && ap <= 1.0);
        }
    }

    #[test]
    fn map_is_a_probability(samples in labelled_scores()) {
        let scores: Vec<Vec<f64>> = samples.iter().map(|&(s, _)| vec![s, 1.0 - s]).collect();
        let labels: Vec<Vec<bool>> = samples.iter().map(|&(_, l)| vec![l, !l]).collect();
        if let Ok(r) = multilabel_map(&scores, &labels) {
            prop_assert!(r.map > 0.0 && r.map <= 1.0);
        }
    }

    #[test]
    fn recall_ignores_candidate_order(frame in frame_triplets(), k in 1usize..30) {
        let mut reversed = frame.clone();
        reversed.scored.reverse();
        let a = recall_at_k(std::slice::from_ref(&frame), k).unwrap();
        let b = recall_at_k(std::slice::from_ref(&reversed), k).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a.recall));
    }

    #[test]
    fn recall_grows_with_k(frame in frame_triplets(), k in 1usize..30) {
        let a = recall_at_k(std::slice::from_ref(&frame), k).unwrap().recall;
        let b = recall_at_k(std::slice::from_ref(&frame), k + 1).unwrap().recall;
        prop_assert!(b >= a);
    }

    #[test]
    fn argmax_is_scale_and_shift_invariant(
        v in prop::collection::vec(-100i32..100, 1..20),
        scale in 1u32..50,
        shift in -100i32..100,
    ) {
        let v: Vec<f64> = v.into_iter().map(f64::from).collect();
        let w: Vec<f64> = v.iter().map(|x| x * scale as f64 + shift as f64).collect();
        prop_assert_eq!(argmax(&v), argmax(&w));
    }

    #[test]
    fn text_token_count_follows_the_frame(seed in 0u64..1000, unsure in 0.0f64..0.6) {
        let (schema, anns) = synthetic_frames(seed, unsure);
        for ann in &anns {
            let scored = |srv: &indexmap::IndexMap<String, String>, unsure: &[String]| {
                srv.keys().filter(|r| !unsure.contains(r)).count()
            };
            let person = scored(&ann.person.srv, &ann.person.unsure);
            let expected = if person > 0 { 1 + person } else { 0 }
                + ann.objects.iter().map(|o| 1 + scored(&o.srv, &o.unsure)).sum::<usize>()
                + ann.relations.iter().map(|r| 1 + scored(&r.srv, &r.unsure)).sum::<usize>();
            prop_assert_eq!(frame_text_tokens(ann, &schema).len(), expected);
        }
    }

    #[test]
    fn padding_is_idempotent(
        w in 1u32..24, h in 1u32..24,
        (x, y, bw, bh) in (0i64..24, 0i64..24, 1i64..24, 1i64..24),
        seed in any::<u32>(),
    ) {
        let img = RgbImage::from_fn(w, h, |i, j| {
            let v = seed.wrapping_mul(2654435761).wrapping_add(i * 31 + j * 17);
            Rgb([v as u8, (v >> 8) as u8, (v >> 16) as u8])
        });
        let region = Region::single(BBox::new(x, y, bw, bh));
        let spec = PromptSpec::new(PromptKind::Padding);
        if let Ok(once) = apply_prompt(&img, &region, &spec) {
            let twice = apply_prompt(&once, &region, &spec).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
