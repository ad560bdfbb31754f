//! Surface-pattern categorization of persona attributes.
//!
//! | leading words                  | category | subcategory                         |
//! |--------------------------------|----------|-------------------------------------|
//! | `i am`, `i'm`                  | AM       | number / noun / status / other      |
//! | `my`                           | MY       | preference if `my favorite …`       |
//! | `i will`, `i'll`, `i` + modal  | OTHER    | none                                |
//! | `i've`                         | HAVE     | other                               |
//! | `i` + verb                     | HAVE     | preference / status / other         |
//! | anything else                  | OTHER    | none                                |
//!
//! Within AM, a cardinal number anywhere in the predicate wins, then an
//! indefinite article at the predicate head (noun), then a preposition or
//! determiner at the head (other); any remaining head, typically an
//! adjective or a progressive verb, is a status. Leading adverbs and
//! negations are skipped when locating a head.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::{Attribute, Category, ExtraFields, Subcategory};

const NUMBER_WORDS: &[&str] = &[
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
    "thirty",
    "forty",
    "fifty",
    "sixty",
    "seventy",
    "eighty",
    "ninety",
    "hundred",
    "thousand",
    "million",
];

const PREPOSITIONS: &[&str] = &[
    "from", "in", "at", "on", "into", "with", "without", "about", "of", "for", "to", "by", "near", "under", "over",
    "out", "like", "after", "before", "between", "through", "within", "as",
];

const DETERMINERS: &[&str] = &[
    "the", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our", "their", "some", "no", "all",
];

const ADVERBS: &[&str] = &[
    "not",
    "never",
    "also",
    "really",
    "very",
    "so",
    "pretty",
    "quite",
    "just",
    "still",
    "always",
    "usually",
    "often",
    "sometimes",
    "currently",
    "actually",
    "definitely",
    "totally",
    "absolutely",
    "truly",
    "too",
    "extremely",
    "kind",
    "do",
    "don't",
    "does",
    "doesn't",
    "did",
    "didn't",
    "frequently",
    "rarely",
    "mostly",
    "generally",
    "only",
];

const PREFERENCE_VERBS: &[&str] = &[
    "like",
    "love",
    "hate",
    "enjoy",
    "prefer",
    "liked",
    "loved",
    "hated",
    "enjoyed",
    "preferred",
    "adore",
    "dislike",
];

const MODALS: &[&str] = &[
    "will", "would", "can", "could", "should", "shall", "might", "must", "may",
];

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.replace('\u{2019}', "'")
                .trim_matches(|c: char| c.is_ascii_punctuation() && c != '\'')
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn is_number(tok: &str) -> bool {
    tok.chars().any(|c| c.is_ascii_digit()) && tok.chars().all(|c| c.is_ascii_digit() || ",.-".contains(c))
        || tok
            .strip_suffix("s")
            .or(Some(tok))
            .is_some_and(|t| NUMBER_WORDS.contains(&t))
        || tok.split('-').count() == 2 && tok.split('-').all(|p| NUMBER_WORDS.contains(&p))
}

fn skip_adverbs(rest: &[String]) -> &[String] {
    let n = rest.iter().take_while(|t| ADVERBS.contains(&t.as_str())).count();
    &rest[n..]
}

fn am_subcategory(predicate: &[String]) -> Subcategory {
    if predicate.iter().any(|t| is_number(t)) {
        return Subcategory::AmNumber;
    }
    match skip_adverbs(predicate).first().map(String::as_str) {
        Some("a" | "an") => Subcategory::AmNoun,
        Some(h) if PREPOSITIONS.contains(&h) || DETERMINERS.contains(&h) => Subcategory::AmOther,
        Some(_) => Subcategory::AmStatus,
        None => Subcategory::AmOther,
    }
}

fn have_subcategory(after_subject: &[String]) -> Subcategory {
    let rest = skip_adverbs(after_subject);
    match rest.first().map(String::as_str) {
        Some(v) if PREFERENCE_VERBS.contains(&v) => Subcategory::HavePreference,
        Some("have" | "has") => match rest.get(1).map(String::as_str) {
            Some("to" | "been" | "got") | None => Subcategory::HaveOther,
            Some(_) => Subcategory::HaveStatus,
        },
        _ => Subcategory::HaveOther,
    }
}

/// Category and subcategory for an attribute sentence. OTHER has no
/// subcategory.
pub fn classify(text: &str) -> (Category, Option<Subcategory>) {
    let toks = tokens(text);
    let first = toks.first().map(String::as_str).unwrap_or_default();
    let second = toks.get(1).map(String::as_str);
    match (first, second) {
        ("i", Some("am")) => (Category::Am, Some(am_subcategory(&toks[2..]))),
        ("i'm" | "im", _) => (Category::Am, Some(am_subcategory(&toks[1..]))),
        ("my", Some("favorite" | "favourite")) => (Category::My, Some(Subcategory::MyPreference)),
        ("my", _) => (Category::My, Some(Subcategory::MyOther)),
        ("i'll" | "i'd", _) => (Category::Other, None),
        ("i", Some(m)) if MODALS.contains(&m) => (Category::Other, None),
        ("i've", _) => (Category::Have, Some(Subcategory::HaveOther)),
        ("i", Some(_)) => (Category::Have, Some(have_subcategory(&toks[1..]))),
        _ => (Category::Other, None),
    }
}

pub fn categorize(text: &str) -> Attribute {
    let (category, subcategory) = classify(text);
    Attribute::new(text.trim(), category, subcategory)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub categories: BTreeMap<Category, usize>,
    pub subcategories: BTreeMap<Subcategory, usize>,
    pub total: usize,
}

/// An attribute line as read from input; any fields besides `text` are
/// carried through to the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAttribute {
    pub text: String,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

pub fn categorize_corpus(inputs: &[RawAttribute]) -> (Vec<Attribute>, Histogram) {
    let out: Vec<Attribute> = inputs
        .iter()
        .map(|raw| {
            let mut a = categorize(&raw.text);
            // Incoming labels are replaced by the computed ones.
            a.extra = raw
                .extra
                .iter()
                .filter(|(k, _)| k.as_str() != "category" && k.as_str() != "subcategory")
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            a
        })
        .collect();
    let hist = Histogram::of(&out);
    (out, hist)
}

/// Parse attribute input: JSONL objects with a `text` field when the first
/// non-blank line starts with `{`, otherwise one sentence per line.
pub fn parse_attribute_input(content: &str) -> Result<Vec<RawAttribute>, String> {
    let lines = content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let jsonl = content
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    if jsonl {
        lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
            .collect()
    } else {
        Ok(lines
            .map(|(_, l)| RawAttribute {
                text: l.trim().to_string(),
                extra: ExtraFields::new(),
            })
            .collect())
    }
}

impl Histogram {
    pub fn of(attributes: &[Attribute]) -> Self {
        let mut h = Histogram::default();
        for a in attributes {
            *h.categories.entry(a.category).or_default() += 1;
            if let Some(s) = a.subcategory {
                *h.subcategories.entry(s).or_default() += 1;
            }
            h.total += 1;
        }
        h
    }

    /// `level,label,count` rows; categories first, then subcategories.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(["level", "label", "count"]).expect("in-memory csv");
        for (c, n) in &self.categories {
            w.write_record(["category", c.as_str(), &n.to_string()])
                .expect("in-memory csv");
        }
        for (s, n) in &self.subcategories {
            w.write_record(["subcategory", s.as_str(), &n.to_string()])
                .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}
