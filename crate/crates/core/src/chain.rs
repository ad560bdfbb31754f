//! Attributes, tagged reasoning steps and reasoning chains.
//!
//! A chain starts from an implicitly offensive statement `s0` (held in
//! [`ReasoningChain::implicit`]) and rewrites it step by step into an explicit
//! one. Step indices are 1-based: `steps[0]` is `s1` and the last step is `sL`,
//! so a chain of length `L` has exactly `L` transitions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Unknown JSON fields carried through a load/serialize round trip.
pub type ExtraFields = BTreeMap<String, Value>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("no chains")]
    NoChains,
    #[error("step {index} is tagged KIR but carries no knowledge sentence")]
    MissingKnowledge { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "AM")]
    Am,
    #[serde(rename = "HAVE")]
    Have,
    #[serde(rename = "MY")]
    My,
    #[serde(rename = "OTHER")]
    Other,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Am, Category::Have, Category::My, Category::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Am => "AM",
            Category::Have => "HAVE",
            Category::My => "MY",
            Category::Other => "OTHER",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subcategory {
    #[serde(rename = "AM-noun")]
    AmNoun,
    #[serde(rename = "AM-number")]
    AmNumber,
    #[serde(rename = "AM-status")]
    AmStatus,
    #[serde(rename = "AM-other")]
    AmOther,
    #[serde(rename = "HAVE-preference")]
    HavePreference,
    #[serde(rename = "HAVE-status")]
    HaveStatus,
    #[serde(rename = "HAVE-other")]
    HaveOther,
    #[serde(rename = "MY-preference")]
    MyPreference,
    #[serde(rename = "MY-other")]
    MyOther,
}

impl Subcategory {
    /// The top-level category this subcategory belongs to.
    pub fn family(self) -> Category {
        use Subcategory::*;
        match self {
            AmNoun | AmNumber | AmStatus | AmOther => Category::Am,
            HavePreference | HaveStatus | HaveOther => Category::Have,
            MyPreference | MyOther => Category::My,
        }
    }

    pub fn as_str(self) -> &'static str {
        use Subcategory::*;
        match self {
            AmNoun => "AM-noun",
            AmNumber => "AM-number",
            AmStatus => "AM-status",
            AmOther => "AM-other",
            HavePreference => "HAVE-preference",
            HaveStatus => "HAVE-status",
            HaveOther => "HAVE-other",
            MyPreference => "MY-preference",
            MyOther => "MY-other",
        }
    }
}

impl fmt::Display for Subcategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A persona attribute of the hypothetical listener, e.g. "I am a teacher."
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub text: String,
    pub category: Category,
    #[serde(default)]
    pub subcategory: Option<Subcategory>,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

impl Attribute {
    pub fn new(text: impl Into<String>, category: Category, subcategory: Option<Subcategory>) -> Self {
        Self {
            text: text.into(),
            category,
            subcategory,
            extra: ExtraFields::new(),
        }
    }
}

const FIRST_PERSON: [&str; 5] = ["i", "i'm", "my", "me", "mine"];

/// True when the text contains one of the first-person tokens used by persona
/// sentences ("i", "i'm", "my", "me", "mine"), case-insensitively.
pub fn has_first_person_marker(text: &str) -> bool {
    word_tokens(text).any(|t| FIRST_PERSON.contains(&t.as_str()))
}

/// Lowercased word tokens with surrounding punctuation stripped. Apostrophes
/// inside a word are kept and curly apostrophes are folded to `'`.
pub(crate) fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| c.is_whitespace() || (c.is_ascii_punctuation() && c != '\''))
        .map(|t| t.replace('\u{2019}', "'").trim_matches('\'').to_lowercase())
        .filter(|t| !t.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepTag {
    /// Attribute insertion.
    #[serde(rename = "AIR")]
    Air,
    /// Knowledge insertion.
    #[serde(rename = "KIR")]
    Kir,
    /// Rephrasing.
    #[serde(rename = "RR")]
    Rr,
}

impl StepTag {
    pub const ALL: [StepTag; 3] = [StepTag::Air, StepTag::Kir, StepTag::Rr];

    pub fn as_str(self) -> &'static str {
        match self {
            StepTag::Air => "AIR",
            StepTag::Kir => "KIR",
            StepTag::Rr => "RR",
        }
    }
}

impl fmt::Display for StepTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub text: String,
    pub tag: StepTag,
    /// The commonsense statement introduced by a KIR step.
    #[serde(default)]
    pub knowledge: Option<String>,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

impl ReasoningStep {
    pub fn new(text: impl Into<String>, tag: StepTag) -> Self {
        Self {
            text: text.into(),
            tag,
            knowledge: None,
            extra: ExtraFields::new(),
        }
    }

    pub fn kir(text: impl Into<String>, knowledge: impl Into<String>) -> Self {
        Self {
            knowledge: Some(knowledge.into()),
            ..Self::new(text, StepTag::Kir)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub id: String,
    pub attribute: Attribute,
    /// `s0`, the implicitly offensive statement.
    pub implicit: String,
    pub explicit: String,
    pub non_offensive: String,
    /// `s1..sL`.
    #[serde(rename = "chain")]
    pub steps: Vec<ReasoningStep>,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

impl ReasoningChain {
    /// Chain length `L`; `s0` is not counted.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Statement `s_i` for `0 <= i <= L`.
    pub fn statement(&self, i: usize) -> Option<&str> {
        if i == 0 {
            Some(&self.implicit)
        } else {
            self.steps.get(i - 1).map(|s| s.text.as_str())
        }
    }

    /// All statements `s0..sL` in order.
    pub fn statements(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.implicit.as_str()).chain(self.steps.iter().map(|s| s.text.as_str()))
    }

    /// Final step text `sL`.
    pub fn final_statement(&self) -> Option<&str> {
        self.steps.last().map(|s| s.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KirSite {
    pub chain_id: String,
    /// 1-based index of the KIR step within `s1..sL`.
    pub k: usize,
    pub knowledge: Option<String>,
}

pub fn kir_sites(chain: &ReasoningChain) -> Vec<KirSite> {
    chain
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.tag == StepTag::Kir)
        .map(|(i, s)| KirSite {
            chain_id: chain.id.clone(),
            k: i + 1,
            knowledge: s.knowledge.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    EmptyChain,
    EmptyId,
    EmptyStatement,
    EmptyStepText,
    EmptyAttribute,
    NoFirstPersonMarker,
    SubcategoryMismatch,
    KnowledgeOnNonKir,
    KirMissingKnowledge,
    LengthOutOfRange,
    AirPosition,
    MultipleAir,
    ExplicitFinalMismatch,
    BlockedTerm,
    DuplicateId,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            EmptyChain => "empty-chain",
            EmptyId => "empty-id",
            EmptyStatement => "empty-statement",
            EmptyStepText => "empty-step-text",
            EmptyAttribute => "empty-attribute",
            NoFirstPersonMarker => "no-first-person-marker",
            SubcategoryMismatch => "subcategory-mismatch",
            KnowledgeOnNonKir => "knowledge-on-non-kir",
            KirMissingKnowledge => "kir-missing-knowledge",
            LengthOutOfRange => "length-out-of-range",
            AirPosition => "air-position",
            MultipleAir => "multiple-air",
            ExplicitFinalMismatch => "explicit-final-mismatch",
            BlockedTerm => "blocked-term",
            DuplicateId => "duplicate-id",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub severity: Severity,
    pub message: String,
}

impl Violation {
    pub fn error(code: ViolationCode, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    pub fn warning(code: ViolationCode, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: Severity::Warning,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{}]: {}", self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Warning)
    }

    pub fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

/// Shortest and longest chain accepted in strict mode.
pub const MIN_STRICT_LENGTH: usize = 3;
pub const MAX_STRICT_LENGTH: usize = 6;

/// Lowercase terms whose presence in an attribute marks it as touching a
/// protected class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blocklist {
    terms: BTreeSet<String>,
}

impl Blocklist {
    pub fn new<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            terms: terms
                .into_iter()
                .map(|t| t.as_ref().trim().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }

    /// One term per line; blank lines and `#` comments are skipped.
    pub fn parse(content: &str) -> Self {
        Self::new(content.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.terms.contains(token)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    /// Blocklisted tokens occurring in `text`, in text order.
    pub fn hits(&self, text: &str) -> Vec<String> {
        word_tokens(text).filter(|t| self.terms.contains(t)).collect()
    }
}

/// Check a chain against the structural rules. The violation list is in a
/// fixed order: attribute, statements, steps, length, AIR placement,
/// explicit/final comparison, blocklist.
pub fn validate_chain(chain: &ReasoningChain, mode: ValidationMode) -> ValidationResult {
    validate_chain_with(chain, mode, None)
}

pub fn validate_chain_with(
    chain: &ReasoningChain,
    mode: ValidationMode,
    blocklist: Option<&Blocklist>,
) -> ValidationResult {
    let mut out = ValidationResult::default();
    let soft = |code, msg: String| match mode {
        ValidationMode::Strict => Violation::error(code, msg),
        ValidationMode::Lenient => Violation::warning(code, msg),
    };

    if chain.id.trim().is_empty() {
        out.push(Violation::error(ViolationCode::EmptyId, "chain id is empty"));
    }

    let attr = &chain.attribute;
    if attr.text.trim().is_empty() {
        out.push(Violation::error(
            ViolationCode::EmptyAttribute,
            "attribute text is empty",
        ));
    } else if !has_first_person_marker(&attr.text) {
        out.push(Violation::error(
            ViolationCode::NoFirstPersonMarker,
            format!("attribute {:?} has no first-person marker", attr.text),
        ));
    }
    if let Some(sub) = attr.subcategory {
        if sub.family() != attr.category {
            out.push(Violation::error(
                ViolationCode::SubcategoryMismatch,
                format!("subcategory {sub} does not belong to category {}", attr.category),
            ));
        }
    }

    for (name, value) in [
        ("implicit", &chain.implicit),
        ("explicit", &chain.explicit),
        ("non_offensive", &chain.non_offensive),
    ] {
        if value.trim().is_empty() {
            out.push(Violation::error(
                ViolationCode::EmptyStatement,
                format!("{name} statement is empty"),
            ));
        }
    }

    if chain.steps.is_empty() {
        out.push(Violation::error(ViolationCode::EmptyChain, "empty chain"));
    }

    for (i, step) in chain.steps.iter().enumerate() {
        let idx = i + 1;
        if step.text.trim().is_empty() {
            out.push(Violation::error(
                ViolationCode::EmptyStepText,
                format!("step {idx} has empty text"),
            ));
        }
        let has_knowledge = step.knowledge.as_deref().is_some_and(|k| !k.trim().is_empty());
        match (step.tag, has_knowledge) {
            (StepTag::Kir, false) => out.push(Violation::error(
                ViolationCode::KirMissingKnowledge,
                format!("step {idx} is tagged KIR but has no knowledge sentence"),
            )),
            (StepTag::Air | StepTag::Rr, _) if step.knowledge.is_some() => out.push(Violation::error(
                ViolationCode::KnowledgeOnNonKir,
                format!("step {idx} is tagged {} but carries knowledge", step.tag),
            )),
            _ => {}
        }
    }

    let len = chain.len();
    if len > 0 && !(MIN_STRICT_LENGTH..=MAX_STRICT_LENGTH).contains(&len) {
        out.push(soft(
            ViolationCode::LengthOutOfRange,
            format!("chain length {len} outside {MIN_STRICT_LENGTH}..={MAX_STRICT_LENGTH}"),
        ));
    }

    let air: Vec<usize> = chain
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| s.tag == StepTag::Air)
        .map(|(i, _)| i + 1)
        .collect();
    if air.len() > 1 {
        out.push(soft(
            ViolationCode::MultipleAir,
            format!("{} AIR steps (at {:?}); at most one allowed", air.len(), air),
        ));
    }
    if let Some(&first) = air.iter().find(|&&k| k != 1) {
        out.push(soft(
            ViolationCode::AirPosition,
            format!("AIR tag on step {first}; only step 1 may carry it"),
        ));
    }

    if let Some(last) = chain.final_statement() {
        if last.trim() != chain.explicit.trim() {
            out.push(Violation::warning(
                ViolationCode::ExplicitFinalMismatch,
                format!(
                    "explicit/final-step mismatch: explicit {:?} vs final step {:?}",
                    chain.explicit, last
                ),
            ));
        }
    }

    if let Some(bl) = blocklist {
        let hits = bl.hits(&attr.text);
        if !hits.is_empty() {
            out.push(soft(
                ViolationCode::BlockedTerm,
                format!("attribute contains blocklisted term(s): {}", hits.join(", ")),
            ));
        }
    }

    out
}

/// Fraction of all steps, over all chains, carrying each tag. Every tag has
/// an entry, zero when absent.
pub fn tag_frequencies(chains: &[ReasoningChain]) -> Result<BTreeMap<StepTag, f64>, ChainError> {
    if chains.is_empty() {
        return Err(ChainError::NoChains);
    }
    let counts = tag_counts(chains);
    let total: usize = counts.values().sum();
    Ok(counts
        .into_iter()
        .map(|(tag, n)| (tag, if total == 0 { 0.0 } else { n as f64 / total as f64 }))
        .collect())
}

pub fn tag_counts(chains: &[ReasoningChain]) -> BTreeMap<StepTag, usize> {
    let mut counts: BTreeMap<StepTag, usize> = StepTag::ALL.iter().map(|&t| (t, 0)).collect();
    for step in chains.iter().flat_map(|c| &c.steps) {
        *counts.entry(step.tag).or_default() += 1;
    }
    counts
}
