//! Chain scoring: per-transition entailment, the product model, direct
//! single-hop scoring, and knowledge augmentation.
//!
//! The probability of a chain `s0 -> s1 -> ... -> sL` is the product of its
//! transition entailment scores, `E(c) = E(s0->s1) * ... * E(s(L-1)->sL)`,
//! multiplied left to right. The direct score is `E(s0->sL)`.
//!
//! The `k_plus` variant conjoins each KIR step's knowledge onto every
//! statement before that step (including `s0`) and scores the result:
//! "You eat too much." + "Eating too much can make people fat." becomes
//! "You eat too much and eating too much can make people fat."

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{score_entailment, Backend, BackendError};
use crate::chain::{kir_sites, ChainError, ReasoningChain};
use crate::exec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("chain {chain_id:?}: transition s{from}->s{to}: {source}")]
    Transition {
        chain_id: String,
        from: usize,
        to: usize,
        source: BackendError,
    },
    #[error("chain {chain_id:?}: direct s0->sL: {source}")]
    Direct { chain_id: String, source: BackendError },
    #[error("chain {chain_id:?} has no steps")]
    EmptyChain { chain_id: String },
    #[error("chain {chain_id:?}: {source}")]
    Augment { chain_id: String, source: ChainError },
}

impl EngineError {
    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            EngineError::Transition { source, .. } | EngineError::Direct { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    KPlus,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::KPlus => "k_plus",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Variant::Plain),
            "k_plus" | "k+" => Ok(Variant::KPlus),
            other => Err(format!("unknown variant {other:?} (expected plain or k_plus)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainScoreReport {
    pub chain_id: String,
    pub variant: Variant,
    /// `E(s_i -> s_i+1)` for `i = 0..L-1`.
    pub transition_scores: Vec<f64>,
    pub mul: f64,
    pub direct: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentOptions {
    /// Also conjoin the knowledge onto the KIR step itself (indices `<= k`
    /// instead of `< k`).
    pub include_kir_step: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoringOptions {
    pub parallelism: usize,
    pub augment: AugmentOptions,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            augment: AugmentOptions::default(),
        }
    }
}

/// Left-to-right product of transition scores.
pub fn chain_probability(transition_scores: &[f64]) -> f64 {
    transition_scores.iter().fold(1.0, |acc, &s| acc * s)
}

pub fn transition_scores(chain: &ReasoningChain, backend: &dyn Backend) -> Result<Vec<f64>, EngineError> {
    if chain.is_empty() {
        return Err(EngineError::EmptyChain {
            chain_id: chain.id.clone(),
        });
    }
    let statements: Vec<&str> = chain.statements().collect();
    statements
        .windows(2)
        .enumerate()
        .map(|(i, pair)| {
            score_entailment(backend, pair[0], pair[1])
                .map(|s| s.entailment)
                .map_err(|source| EngineError::Transition {
                    chain_id: chain.id.clone(),
                    from: i,
                    to: i + 1,
                    source,
                })
        })
        .collect()
}

pub fn direct_score(chain: &ReasoningChain, backend: &dyn Backend) -> Result<f64, EngineError> {
    let last = chain.final_statement().ok_or_else(|| EngineError::EmptyChain {
        chain_id: chain.id.clone(),
    })?;
    score_entailment(backend, &chain.implicit, last)
        .map(|s| s.entailment)
        .map_err(|source| EngineError::Direct {
            chain_id: chain.id.clone(),
            source,
        })
}

/// Product-model report for the chain as given.
pub fn mul_chain(chain: &ReasoningChain, backend: &dyn Backend) -> Result<ChainScoreReport, EngineError> {
    report_for(chain, backend, Variant::Plain)
}

fn report_for(
    chain: &ReasoningChain,
    backend: &dyn Backend,
    variant: Variant,
) -> Result<ChainScoreReport, EngineError> {
    let transition_scores = transition_scores(chain, backend)?;
    let direct = direct_score(chain, backend)?;
    Ok(ChainScoreReport {
        chain_id: chain.id.clone(),
        variant,
        mul: chain_probability(&transition_scores),
        transition_scores,
        direct,
    })
}

pub fn score_chain(
    chain: &ReasoningChain,
    backend: &dyn Backend,
    variant: Variant,
) -> Result<ChainScoreReport, EngineError> {
    score_chain_with(chain, backend, variant, AugmentOptions::default())
}

pub fn score_chain_with(
    chain: &ReasoningChain,
    backend: &dyn Backend,
    variant: Variant,
    opts: AugmentOptions,
) -> Result<ChainScoreReport, EngineError> {
    match variant {
        Variant::Plain => report_for(chain, backend, variant),
        Variant::KPlus => {
            let augmented = augment_knowledge_with(chain, opts).map_err(|source| EngineError::Augment {
                chain_id: chain.id.clone(),
                source,
            })?;
            report_for(&augmented, backend, variant)
        }
    }
}

/// Score every chain under every requested variant. Output is chain-major,
/// variants in the order given, independent of `parallelism`.
pub fn score_corpus(
    chains: &[ReasoningChain],
    backend: &dyn Backend,
    variants: &[Variant],
    opts: ScoringOptions,
) -> Result<Vec<ChainScoreReport>, EngineError> {
    let jobs: Vec<(&ReasoningChain, Variant)> = chains
        .iter()
        .flat_map(|c| variants.iter().map(move |&v| (c, v)))
        .collect();
    exec::run_indexed(opts.parallelism, &jobs, |&(chain, variant)| {
        score_chain_with(chain, backend, variant, opts.augment)
    })
}

pub fn augment_knowledge(chain: &ReasoningChain) -> Result<ReasoningChain, ChainError> {
    augment_knowledge_with(chain, AugmentOptions::default())
}

/// Conjoin each KIR site's knowledge onto the statements before it. Sites
/// apply in ascending order, so a statement preceding several sites collects
/// one " and ..." clause per site.
pub fn augment_knowledge_with(chain: &ReasoningChain, opts: AugmentOptions) -> Result<ReasoningChain, ChainError> {
    let sites = kir_sites(chain);
    let mut out = chain.clone();
    for site in &sites {
        let knowledge = site
            .knowledge
            .as_deref()
            .filter(|k| !k.trim().is_empty())
            .ok_or(ChainError::MissingKnowledge { index: site.k })?;
        let clause = knowledge_clause(knowledge, chain);
        let upto = if opts.include_kir_step { site.k } else { site.k - 1 };
        out.implicit = conjoin(&out.implicit, &clause);
        for step in out.steps.iter_mut().take(upto) {
            step.text = conjoin(&step.text, &clause);
        }
    }
    Ok(out)
}

/// `"<statement minus one terminal . ! ?> and <clause>"`.
pub fn conjoin(statement: &str, clause: &str) -> String {
    let s = statement.trim_end();
    let s = s.strip_suffix(['.', '!', '?']).unwrap_or(s).trim_end();
    format!("{s} and {clause}")
}

/// The knowledge sentence as it appears after "and": first letter lowered
/// unless its first word looks like a proper noun, the pronoun "I", or an
/// acronym. A word counts as a proper noun when it also appears capitalized
/// mid-sentence somewhere in the chain.
fn knowledge_clause(knowledge: &str, chain: &ReasoningChain) -> String {
    let knowledge = knowledge.trim();
    let first: String = knowledge
        .split_whitespace()
        .next()
        .unwrap_or("")
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && c != '\'')
        .to_string();
    if keeps_capital(&first, chain) {
        return knowledge.to_string();
    }
    let mut chars = knowledge.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn keeps_capital(word: &str, chain: &ReasoningChain) -> bool {
    if word == "I" || word.starts_with("I'") || word.starts_with("I\u{2019}") {
        return true;
    }
    if word.chars().filter(|c| c.is_uppercase()).count() >= 2 {
        return true;
    }
    if !word.chars().next().is_some_and(char::is_uppercase) {
        return false;
    }
    let knowledge = chain.steps.iter().filter_map(|s| s.knowledge.as_deref());
    chain
        .statements()
        .chain(knowledge)
        .chain([
            chain.explicit.as_str(),
            chain.non_offensive.as_str(),
            chain.attribute.text.as_str(),
        ])
        .any(|text| appears_mid_sentence(text, word))
}

fn appears_mid_sentence(text: &str, word: &str) -> bool {
    let mut prev: Option<&str> = None;
    for tok in text.split_whitespace() {
        let bare = tok.trim_matches(|c: char| c.is_ascii_punctuation() && c != '\'');
        if let Some(p) = prev {
            let sentence_start = p.ends_with(['.', '!', '?']);
            if !sentence_start && bare == word {
                return true;
            }
        }
        prev = Some(tok);
    }
    false
}
