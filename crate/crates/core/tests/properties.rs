use chain_reasoner::attributes::{self, RawAttribute};
use chain_reasoner::backend::{self, MockBackend, ScoreRequest};
use chain_reasoner::chain::{Blocklist, ExtraFields, ReasoningChain, ReasoningStep, StepTag, ValidationMode};
use chain_reasoner::dataset::{self, LoadOptions};
use chain_reasoner::engine::{self, AugmentOptions, ScoringOptions, Variant};
use chain_reasoner::evaluation::{self, MulColumn, StepScoreTable};
use chain_reasoner::fixtures;
use chain_reasoner::probe::{self, CoverageRule, ProbeRecord, Vote};
use proptest::prelude::*;

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "you", "are", "old", "fat", "people", "eat", "too", "much", "the", "town", "guitar", "I", "my", "never",
        ]),
        1..8,
    )
    .prop_map(|w| {
        let mut s = w.join(" ");
        s.push('.');
        let mut c = s.chars();
        let first = c.next().unwrap().to_uppercase().collect::<String>();
        first + c.as_str()
    })
}

fn step() -> impl Strategy<Value = ReasoningStep> {
    (sentence(), 0..3u8, sentence()).prop_map(|(text, tag, knowledge)| match tag {
        0 => ReasoningStep::new(text, StepTag::Air),
        1 => ReasoningStep::kir(text, knowledge),
        _ => ReasoningStep::new(text, StepTag::Rr),
    })
}

prop_compose! {
    fn chain()(implicit in sentence(), steps in prop::collection::vec(step(), 1..9), id in 0u32..1_000_000) -> ReasoningChain {
        let mut c = fixtures::pancakes();
        c.id = format!("c{id}");
        c.implicit = implicit;
        c.explicit = steps.last().map(|s| s.text.clone()).unwrap_or_default();
        c.steps = steps;
        c
    }
}

fn corpus() -> impl Strategy<Value = Vec<ReasoningChain>> {
    prop::collection::vec(chain(), 1..12).prop_map(|mut cs| {
        for (i, c) in cs.iter_mut().enumerate() {
            c.id = format!("chain-{i}");
        }
        cs
    })
}

fn votes(items: usize, coders: usize) -> impl Strategy<Value = Vec<Vec<Vote>>> {
    prop::collection::vec(
        prop::collection::vec(prop::option::weighted(0.8, any::<bool>()), coders),
        items,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn product_is_bounded_by_weakest_transition(c in chain()) {
        let r = engine::mul_chain(&c, &MockBackend::hash()).unwrap();
        prop_assert_eq!(r.transition_scores.len(), c.len());
        let min = r.transition_scores.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(r.mul <= min);
        prop_assert!((0.0..=1.0).contains(&r.mul));
        prop_assert!((0.0..=1.0).contains(&r.direct));
    }

    #[test]
    fn augmentation_touches_only_statements_before_sites(c in chain(), include in any::<bool>()) {
        let aug = engine::augment_knowledge_with(&c, AugmentOptions { include_kir_step: include }).unwrap();
        let sites = chain_reasoner::chain::kir_sites(&c);
        let last_touched = sites.iter().map(|s| if include { s.k } else { s.k - 1 }).max();
        let before: Vec<&str> = c.statements().collect();
        let after: Vec<&str> = aug.statements().collect();
        prop_assert_eq!(before.len(), after.len());
        for (i, (b, a)) in before.iter().zip(&after).enumerate() {
            match last_touched {
                Some(t) if i <= t => {
                    prop_assert!(a.starts_with(b.trim_end_matches('.')));
                    prop_assert!(a.contains(" and "));
                }
                _ => prop_assert_eq!(b, a),
            }
        }
        // Tags and knowledge are carried over untouched.
        for (x, y) in c.steps.iter().zip(&aug.steps) {
            prop_assert_eq!(x.tag, y.tag);
            prop_assert_eq!(&x.knowledge, &y.knowledge);
        }
    }

    #[test]
    fn variants_agree_without_kir(mut c in chain()) {
        for s in &mut c.steps {
            if s.tag == StepTag::Kir {
                *s = ReasoningStep::new(s.text.clone(), StepTag::Rr);
            }
        }
        let m = MockBackend::hash();
        let p = engine::score_chain(&c, &m, Variant::Plain).unwrap();
        let k = engine::score_chain(&c, &m, Variant::KPlus).unwrap();
        prop_assert_eq!(p.transition_scores, k.transition_scores);
        prop_assert_eq!(p.direct, k.direct);
    }

    #[test]
    fn corpus_round_trips_through_jsonl(cs in corpus()) {
        let loaded = dataset::read_corpus(dataset::to_jsonl(&cs).as_bytes(), &LoadOptions {
            mode: ValidationMode::Lenient,
            blocklist: None,
        }).unwrap();
        prop_assert_eq!(loaded.chains, cs);
    }

    #[test]
    fn step_table_is_order_and_schedule_invariant(cs in corpus(), seed in any::<u64>(), workers in 1usize..6) {
        let m = MockBackend::hash();
        let reports = engine::score_corpus(&cs, &m, &[Variant::Plain], ScoringOptions::default()).unwrap();
        let table = StepScoreTable::from_reports(Variant::Plain, &reports).unwrap();

        let mut shuffled = cs.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed as usize ^ i.wrapping_mul(2654435761)) % (i + 1));
        }
        let opts = ScoringOptions { parallelism: workers, ..Default::default() };
        let other = engine::score_corpus(&shuffled, &m, &[Variant::Plain], opts).unwrap();
        prop_assert_eq!(&table, &StepScoreTable::from_reports(Variant::Plain, &other).unwrap());

        let lo = table.groups.values().map(|g| g.mul).fold(f64::INFINITY, f64::min);
        let hi = table.groups.values().map(|g| g.mul).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(table.all_mul >= lo - 1e-12 && table.all_mul <= hi + 1e-12);
        for g in table.groups.values() {
            prop_assert!(g.transitions.iter().chain([&g.mul, &g.direct]).all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn per_step_accuracy_is_a_proportion(cs in corpus()) {
        let m = MockBackend::lexicon(Blocklist::new(["fat", "old"]));
        let acc = evaluation::per_step_accuracy(&cs, &m, 2).unwrap();
        let total: usize = acc.groups.values().map(|g| g.n_chains).sum();
        prop_assert_eq!(total, cs.len());
        for (len, g) in &acc.groups {
            prop_assert_eq!(g.accuracy.len(), len + 1);
            prop_assert!(g.accuracy.iter().all(|a| (0.0..=1.0).contains(a)));
            if let Some(t) = g.trend {
                prop_assert!((-1.0..=1.0).contains(&t));
            }
        }
    }

    #[test]
    fn combined_cells_are_products(
        muls in prop::collection::vec(0.0f64..=1.0, 1..5),
        accs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..6),
    ) {
        let cols: Vec<(MulColumn, f64)> = muls.iter().enumerate()
            .map(|(i, &m)| (MulColumn::new(format!("e{i}"), if i % 2 == 0 { Variant::Plain } else { Variant::KPlus }), m))
            .collect();
        let explicit: Vec<(String, f64)> = accs.iter().enumerate().map(|(i, a)| (format!("d{i}"), a.0)).collect();
        let implicit: Vec<(String, f64)> = accs.iter().enumerate().map(|(i, a)| (format!("d{i}"), a.1)).collect();
        let t = evaluation::combine_full_accuracy(&cols, &explicit, &implicit).unwrap();
        for (r, (_, e)) in t.rows.iter().zip(&explicit) {
            for (cell, (_, m)) in r.cells.iter().zip(&cols) {
                prop_assert!((cell - m * e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn alpha_is_permutation_invariant(items in votes(6, 4), rot in 0usize..6, col in 0usize..4) {
        let Ok(base) = probe::krippendorff_alpha(&items) else { return Ok(()); };
        prop_assert!(base.alpha <= 1.0);
        let mut rotated = items.clone();
        rotated.rotate_left(rot);
        let mut swapped = items.clone();
        for row in &mut swapped {
            row.swap(0, col);
        }
        for other in [rotated, swapped] {
            let a = probe::krippendorff_alpha(&other).unwrap();
            prop_assert!((a.alpha - base.alpha).abs() < 1e-12);
            prop_assert_eq!(a.degenerate, base.degenerate);
        }
    }

    #[test]
    fn coverage_order_and_flip(items in prop::collection::vec(prop::collection::vec(any::<bool>(), 5), 1..30), rot in 0usize..30) {
        let records: Vec<ProbeRecord> = items.iter().map(|v| ProbeRecord {
            knowledge: "k.".into(),
            prompt: String::new(),
            explanation: String::new(),
            votes: v.iter().map(|&b| Some(b)).collect(),
        }).collect();
        let f = probe::coverage(&records, CoverageRule::Majority, "m").unwrap().covered;
        let mut rotated = records.clone();
        rotated.rotate_left(rot % records.len());
        prop_assert_eq!(probe::coverage(&rotated, CoverageRule::Majority, "m").unwrap().covered, f);
        // Five votes never tie, so flipping every vote complements coverage.
        let flipped: Vec<ProbeRecord> = records.iter().cloned().map(|mut r| {
            r.votes = r.votes.iter().map(|v| v.map(|b| !b)).collect();
            r
        }).collect();
        let g = probe::coverage(&flipped, CoverageRule::Majority, "m").unwrap().covered;
        prop_assert!((f + g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prompt_is_stable(k in sentence()) {
        let a = probe::build_prompt(&k).unwrap();
        prop_assert_eq!(&a, &probe::build_prompt(&k).unwrap());
        prop_assert!(a.starts_with(probe::FEW_SHOT));
        prop_assert!(a.ends_with("?\nA: Yes.\nQ: Why?\nA:"));
    }

    #[test]
    fn categorizer_is_total_and_case_insensitive(text in "[ a-zA-Z0-9',.]{0,40}", pad in " {0,3}") {
        let (c, s) = attributes::classify(&text);
        prop_assert_eq!(s.map(|s| s.family()).unwrap_or(c), c);
        prop_assert_eq!(attributes::classify(&format!("{pad}{}", text.to_uppercase())), attributes::classify(&text.to_lowercase()));
    }

    #[test]
    fn histogram_counts_every_input(texts in prop::collection::vec("[ a-zA-Z']{0,30}", 0..40)) {
        let raw: Vec<RawAttribute> = texts.into_iter().map(|text| RawAttribute { text, extra: ExtraFields::new() }).collect();
        let (attrs, hist) = attributes::categorize_corpus(&raw);
        prop_assert_eq!(attrs.len(), raw.len());
        prop_assert_eq!(hist.categories.values().sum::<usize>(), raw.len());
        prop_assert_eq!(hist.total, raw.len());
    }

    #[test]
    fn mock_distributions_are_normalized(p in ".{0,60}", h in ".{0,60}") {
        for m in [MockBackend::hash(), MockBackend::lexicon(Blocklist::new(["old"]))] {
            m.entailment(&p, &h).validate().unwrap();
            m.otd(&p).validate().unwrap();
        }
    }

    #[test]
    fn wire_requests_round_trip(p in ".{1,40}", h in ".{1,40}") {
        let req = ScoreRequest::entailment("x1", p, h);
        let line = serde_json::to_string(&req).unwrap();
        prop_assert!(!line.contains('\n'));
        let back: ScoreRequest = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(back, req.clone());
        let resp = backend::handle_line(&MockBackend::hash(), &line);
        backend::check_response(&req, &resp).unwrap();
    }
}
