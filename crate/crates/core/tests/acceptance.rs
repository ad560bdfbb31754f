//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chain_reasoner::attributes;
use chain_reasoner::backend::MockBackend;
use chain_reasoner::chain::{
    self, Blocklist, Category, ReasoningChain, ReasoningStep, StepTag, Subcategory, ViolationCode,
};
use chain_reasoner::dataset::{self, LoadOptions};
use chain_reasoner::engine::{self, ScoringOptions, Variant};
use chain_reasoner::evaluation;
use chain_reasoner::pipeline::{self, EvaluateConfig};
use chain_reasoner::probe::{krippendorff_alpha, Vote};
use chain_reasoner::{fixtures, ValidationMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn full_accuracy_table() -> Outcome {
    let start = Instant::now();
    let table = pipeline::combine_tables(&read_fixture("mul_table.csv"), &read_fixture("classifier_table.csv"))
        .map_err(|e| e.to_string())?;
    let expected_text = read_fixture("full_accuracy_expected.csv");
    let mut expected = csv::Reader::from_reader(expected_text.as_bytes());
    let headers = expected.headers().map_err(|e| e.to_string())?.clone();
    let mut checked = 0;
    for rec in expected.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = table
            .rows
            .iter()
            .find(|r| r.otd_model == rec[0])
            .ok_or_else(|| format!("no row for {}", &rec[0]))?;
        let want_implicit: f64 = rec[1].parse().map_err(|e| format!("{e}"))?;
        ensure((row.implicit * 100.0 - want_implicit).abs() < 1e-9, || {
            format!("{} implicit", row.otd_model)
        })?;
        for (i, col) in table.columns.iter().enumerate() {
            let h = headers
                .iter()
                .position(|h| h == col.label())
                .ok_or_else(|| format!("no column {}", col.label()))?;
            let want: f64 = rec[h].parse().map_err(|e| format!("{e}"))?;
            let got = row.cells[i] * 100.0;
            ensure((got - want).abs() <= 0.1 + 1e-9, || {
                format!("{} / {}: got {got:.3}, published {want}", row.otd_model, col.label())
            })?;
            ensure(evaluation::percent(row.cells[i]).parse::<f64>().is_ok(), || {
                "percent rendering".into()
            })?;
            checked += 1;
        }
    }
    ensure(checked == 20, || format!("checked {checked} cells, expected 20"))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("{checked} cells within 0.1 points"))
}

const WORDS: &[&str] = &[
    "you",
    "are",
    "too",
    "old",
    "for",
    "this",
    "city",
    "people",
    "eat",
    "much",
    "fat",
    "guitar",
    "look",
    "never",
    "professional",
    "small",
    "town",
    "education",
    "I",
    "my",
    "contacts",
    "wear",
    "energy",
    "syrup",
];

fn random_sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..9);
    let words: Vec<&str> = (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
    let mut s = words.join(" ");
    s.push('.');
    s
}

fn random_chain(rng: &mut ChaCha8Rng, i: usize) -> ReasoningChain {
    let len = rng.gen_range(1..=8);
    let mut chain = fixtures::pancakes();
    chain.id = format!("random-{i}");
    chain.implicit = random_sentence(rng);
    chain.steps = (0..len)
        .map(|_| match rng.gen_range(0..3) {
            0 => ReasoningStep::new(random_sentence(rng), StepTag::Air),
            1 => ReasoningStep::kir(random_sentence(rng), random_sentence(rng)),
            _ => ReasoningStep::new(random_sentence(rng), StepTag::Rr),
        })
        .collect();
    chain.explicit = chain.steps.last().map(|s| s.text.clone()).unwrap_or_default();
    chain
}

fn product_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    let generated: Vec<ReasoningChain> = (0..1000).map(|i| random_chain(&mut rng, i)).collect();
    let loaded = dataset::read_corpus(
        dataset::to_jsonl(&generated).as_bytes(),
        &LoadOptions {
            mode: ValidationMode::Lenient,
            blocklist: None,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(loaded.chains.len() == 1000, || {
        format!("{} of 1000 chains loaded leniently", loaded.chains.len())
    })?;

    let mock = MockBackend::hash();
    let mut lengths = [0usize; 9];
    for chain in &loaded.chains {
        let report = engine::mul_chain(chain, &mock).map_err(|e| e.to_string())?;
        let texts: Vec<&str> = std::iter::once(chain.implicit.as_str())
            .chain(chain.steps.iter().map(|s| s.text.as_str()))
            .collect();
        let mut oracle = 1.0f64;
        let mut min = f64::INFINITY;
        for w in texts.windows(2) {
            let e = mock.entailment(w[0], w[1]).entailment;
            oracle *= e;
            min = min.min(e);
        }
        ensure(report.mul.to_bits() == oracle.to_bits(), || {
            format!("{}: mul {} != oracle {}", chain.id, report.mul, oracle)
        })?;
        ensure(report.mul <= min, || {
            format!("{}: mul {} > min {}", chain.id, report.mul, min)
        })?;
        lengths[chain.len()] += 1;
    }
    ensure(lengths[1..=8].iter().all(|&n| n > 0), || {
        format!("length coverage {lengths:?}")
    })?;
    within(start, Duration::from_secs(5))?;
    Ok("1000 chains bit-exact, mul <= min transition".into())
}

fn knowledge_augmentation() -> Outcome {
    let chain = fixtures::pancakes();
    let aug = engine::augment_knowledge(&chain).map_err(|e| e.to_string())?;
    let want = "You eat too much and eating too much can make people fat.";
    ensure(aug.steps[2].text == want, || format!("s3 = {:?}", aug.steps[2].text))?;
    ensure(aug.steps[3].text == chain.steps[3].text, || "s4 changed".into())?;
    ensure(aug.steps[4].text == chain.steps[4].text, || "s5 changed".into())?;
    Ok(format!("s3 = {want:?}"))
}

fn fixture_validation() -> Outcome {
    let corpus =
        dataset::load_corpus(fixture("sample_chains.jsonl"), ValidationMode::Strict).map_err(|e| e.to_string())?;
    ensure(corpus.chains.len() == 4, || {
        format!("{} chains loaded", corpus.chains.len())
    })?;
    ensure(corpus.error_count() == 0, || format!("{} errors", corpus.error_count()))?;
    ensure(corpus.warning_count() == 1, || {
        format!("{} warnings", corpus.warning_count())
    })?;
    let warned: Vec<(&str, ViolationCode)> = corpus
        .records
        .iter()
        .flat_map(|r| r.result.warnings().map(move |w| (r.id.as_str(), w.code)))
        .collect();
    ensure(warned == [("small-town", ViolationCode::ExplicitFinalMismatch)], || {
        format!("warnings {warned:?}")
    })?;
    let counts = chain::tag_counts(&corpus.chains);
    let got = (counts[&StepTag::Air], counts[&StepTag::Kir], counts[&StepTag::Rr]);
    ensure(got == (4, 4, 13), || format!("tags AIR/KIR/RR = {got:?}"))?;
    Ok("0 errors, 1 warning, AIR 4 / KIR 4 / RR 13".into())
}

/// Alpha straight from its definition: observed disagreement over pairable
/// within-item value pairs (weighted by 1/(m-1)) against disagreement over
/// all pairs of pairable values.
fn alpha_by_definition(items: &[Vec<Vote>]) -> f64 {
    let pairable: Vec<Vec<bool>> = items
        .iter()
        .map(|i| i.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|v| v.len() >= 2)
        .collect();
    let all: Vec<bool> = pairable.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let mut d_o = 0.0;
    for vals in &pairable {
        let m = vals.len() as f64;
        for (a, x) in vals.iter().enumerate() {
            for (b, y) in vals.iter().enumerate() {
                if a != b && x != y {
                    d_o += 1.0 / (m - 1.0);
                }
            }
        }
    }
    d_o /= n;
    let mut d_e = 0.0;
    for (a, x) in all.iter().enumerate() {
        for (b, y) in all.iter().enumerate() {
            if a != b && x != y {
                d_e += 1.0;
            }
        }
    }
    d_e /= n * (n - 1.0);
    1.0 - d_o / d_e
}

fn agreement() -> Outcome {
    let start = Instant::now();
    let perfect: Vec<Vec<Vote>> = (0..20).map(|i| vec![Some(i % 3 == 0); 5]).collect();
    let a = krippendorff_alpha(&perfect).map_err(|e| e.to_string())?;
    ensure(a.alpha == 1.0 && !a.degenerate, || {
        format!("perfect agreement gave {a:?}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let random: Vec<Vec<Vote>> = (0..2000)
        .map(|_| (0..5).map(|_| Some(rng.gen_bool(0.5))).collect())
        .collect();
    let r = krippendorff_alpha(&random).map_err(|e| e.to_string())?.alpha;
    ensure(r.abs() < 0.05, || format!("random votes gave alpha {r}"))?;

    let hand = vec![
        vec![Some(true), Some(true)],
        vec![Some(true), Some(false)],
        vec![Some(false), Some(false)],
        vec![Some(false), Some(true)],
    ];
    let h = krippendorff_alpha(&hand).map_err(|e| e.to_string())?.alpha;
    let oracle = alpha_by_definition(&hand);
    ensure((h - oracle).abs() < 1e-12, || {
        format!("hand fixture {h} vs oracle {oracle}")
    })?;
    within(start, Duration::from_secs(5))?;
    Ok(format!("perfect 1, random {r:+.4}, hand fixture {h:.6} = oracle"))
}

fn attribute_categories() -> Outcome {
    use Subcategory::*;
    let table: &[(&str, Category, Option<Subcategory>)] = &[
        ("I am a teacher.", Category::Am, Some(AmNoun)),
        ("I am 30 years old.", Category::Am, Some(AmNumber)),
        ("I'm getting married next week.", Category::Am, Some(AmStatus)),
        ("I am funny.", Category::Am, Some(AmStatus)),
        ("I'm from San Francisco.", Category::Am, Some(AmOther)),
        ("I like to remodel homes.", Category::Have, Some(HavePreference)),
        ("I hate talking to people.", Category::Have, Some(HavePreference)),
        ("I have a dog named bob.", Category::Have, Some(HaveStatus)),
        ("I own my home.", Category::Have, Some(HaveOther)),
        ("I live in Colorado.", Category::Have, Some(HaveOther)),
        ("My favorite sport is football.", Category::My, Some(MyPreference)),
        ("My favorite movie is pretty woman.", Category::My, Some(MyPreference)),
        ("My favorite food is cheeseburgers.", Category::My, Some(MyPreference)),
        (
            "My mom is a checker at the local grocery store.",
            Category::My,
            Some(MyOther),
        ),
        ("My wife and i like to go scuba diving.", Category::My, Some(MyOther)),
        ("Before i die , i want to skydive.", Category::Other, None),
        (
            "While both my parents have thick European accents, I do not.",
            Category::Other,
            None,
        ),
        (
            "It is my universe, and everyone else is just a character in it.",
            Category::Other,
            None,
        ),
    ];
    for (text, cat, sub) in table {
        let a = attributes::categorize(text);
        ensure((a.category, a.subcategory) == (*cat, *sub), || {
            format!("{text:?} -> {:?}/{:?}", a.category, a.subcategory)
        })?;
    }
    Ok(format!("{} example sentences", table.len()))
}

fn evaluate_determinism() -> Outcome {
    let chains = dataset::load_corpus(fixture("sample_chains.jsonl"), ValidationMode::Lenient)
        .map_err(|e| e.to_string())?
        .chains;
    let mock = MockBackend::hash();
    let run = |parallelism| {
        let cfg = EvaluateConfig {
            variants: vec![Variant::Plain, Variant::KPlus],
            scoring: ScoringOptions {
                parallelism,
                ..Default::default()
            },
        };
        pipeline::evaluate_corpus(&chains, &mock, &mock, &cfg).map(|o| o.files)
    };
    let first: BTreeMap<String, String> = run(1).map_err(|e| e.to_string())?;
    let second = run(1).map_err(|e| e.to_string())?;
    let parallel = run(8).map_err(|e| e.to_string())?;
    for (name, body) in &first {
        ensure(second.get(name) == Some(body), || {
            format!("{name} differs between runs")
        })?;
        ensure(parallel.get(name) == Some(body), || {
            format!("{name} differs under 8 workers")
        })?;
    }
    let csvs = first.keys().filter(|k| k.ends_with(".csv")).count();
    ensure(csvs >= 6, || format!("only {csvs} csv outputs"))?;
    Ok(format!(
        "{} files ({csvs} csv) identical across reruns and 8 workers",
        first.len()
    ))
}

fn kir_direction() -> Outcome {
    let chains = dataset::load_corpus(fixture("sample_chains.jsonl"), ValidationMode::Strict)
        .map_err(|e| e.to_string())?
        .chains;
    let blocklist = Blocklist::parse(&read_fixture("blocklist.txt"));
    let mock = MockBackend::lexicon(blocklist);
    let k = evaluation::kir_analysis(&chains, &mock, &mock, 1).map_err(|e| e.to_string())?;
    ensure(k.accuracy_after > k.accuracy_before, || {
        format!("s_k {} not above s_k-1 {}", k.accuracy_after, k.accuracy_before)
    })?;
    Ok(format!(
        "accuracy s_k-1 {} -> s_k {}",
        k.accuracy_before, k.accuracy_after
    ))
}

fn main() -> ExitCode {
    let criteria: &[Criterion] = &[
        ("full-accuracy table from published inputs", full_accuracy_table),
        ("product score equals fold-multiply oracle", product_oracle),
        ("knowledge augmentation rendering", knowledge_augmentation),
        ("four-chain fixture validation", fixture_validation),
        ("krippendorff alpha", agreement),
        ("attribute categorizer examples", attribute_categories),
        ("evaluate outputs are deterministic", evaluate_determinism),
        ("accuracy rises at knowledge insertion", kir_direction),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    if failed == 0 {
        println!(
            "NOTE model-dependent table values: not asserted (need specific fine-tuned checkpoints); \
             structure covered by the criteria above"
        );
    }
    println!("{} criteria, {failed} failed", criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
