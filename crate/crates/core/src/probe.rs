//! Knowledge coverage probing: a fixed two-step conversational prompt sent
//! to a completion backend, human votes on whether each completion explains
//! the knowledge, majority aggregation and Krippendorff's alpha.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{complete, Backend, BackendError};
use crate::exec;

/// Annotators per item.
pub const DEFAULT_ANNOTATORS: usize = 5;

/// Few-shot block preceding every question.
pub const FEW_SHOT: &str = "\
Q: Do you know that junk food are unhealthy?
A: Yes.
Q: Why?
A: Because junk food is high in calories and can cause obesity.

Q: Do you know that people hate disasters?
A: Yes.
Q: Why?
A: Because they think that they are going to die.
";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("knowledge sentence is empty")]
    EmptyKnowledge,
    #[error("need at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("no item has two or more votes")]
    NoPairableItems,
    #[error("no probe records")]
    NoRecords,
    #[error("record {index} has no votes")]
    NoVotes { index: usize },
    #[error("votes csv line {line}: {message}")]
    Votes { line: usize, message: String },
    #[error("probe failed after {completed} of {total} prompts: {source}")]
    Backend {
        completed: usize,
        total: usize,
        source: BackendError,
    },
    #[error("io: {0}")]
    Io(String),
}

/// The knowledge as asked about: first letter lowered (except the pronoun
/// "I" and acronyms) and the terminal period replaced by a question mark.
pub fn question_form(knowledge: &str) -> Result<String, ProbeError> {
    let k = knowledge.trim();
    if k.is_empty() {
        return Err(ProbeError::EmptyKnowledge);
    }
    let first = k.split_whitespace().next().unwrap_or_default();
    let keep = first == "I"
        || first.starts_with("I'")
        || first.starts_with("I\u{2019}")
        || first.chars().filter(|c| c.is_uppercase()).count() >= 2;
    let mut out: String = if keep {
        k.to_string()
    } else {
        let mut chars = k.chars();
        let c = chars.next().expect("non-empty");
        c.to_lowercase().chain(chars).collect()
    };
    if out.ends_with('.') {
        out.pop();
    }
    if !out.ends_with('?') {
        out.push('?');
    }
    Ok(out)
}

pub fn build_prompt(knowledge: &str) -> Result<String, ProbeError> {
    let q = question_form(knowledge)?;
    Ok(format!("{FEW_SHOT}\nQ: Do you know that {q}\nA: Yes.\nQ: Why?\nA:"))
}

/// `None` marks a missing vote; `Some(true)` means "explains".
pub type Vote = Option<bool>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub knowledge: String,
    pub prompt: String,
    pub explanation: String,
    #[serde(default)]
    pub votes: Vec<Vote>,
}

/// Prompt the completion backend once per knowledge sentence.
pub fn run_probe(
    knowledge: &[String],
    backend: &dyn Backend,
    parallelism: usize,
) -> Result<Vec<ProbeRecord>, ProbeError> {
    let prompts: Vec<(usize, String)> = knowledge
        .iter()
        .map(|k| build_prompt(k))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .enumerate()
        .collect();
    let explanations = exec::run_indexed(parallelism, &prompts, |(i, p)| {
        complete(backend, p).map_err(|e| (*i, e))
    })
    .map_err(|(i, source)| ProbeError::Backend {
        completed: i,
        total: prompts.len(),
        source,
    })?;
    Ok(knowledge
        .iter()
        .zip(prompts)
        .zip(explanations)
        .map(|((k, (_, prompt)), explanation)| ProbeRecord {
            knowledge: k.trim().to_string(),
            prompt,
            explanation: explanation.trim().to_string(),
            votes: Vec::new(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub alpha: f64,
    /// Expected disagreement was zero (a single label across all pairable
    /// votes); alpha is reported as 1.
    pub degenerate: bool,
}

/// Nominal Krippendorff's alpha over binary votes with missing entries.
///
/// Each item contributes its ordered pairs of present votes to the
/// coincidence matrix with weight `1 / (m - 1)`, `m` being its number of
/// present votes; items with fewer than two votes are not pairable.
pub fn krippendorff_alpha(items: &[Vec<Vote>]) -> Result<Alpha, ProbeError> {
    if items.len() < 2 {
        return Err(ProbeError::TooFewItems(items.len()));
    }
    // o[c][k], labels false = 0, true = 1.
    let mut o = [[0.0f64; 2]; 2];
    let mut pairable = false;
    for item in items {
        let mut n = [0usize; 2];
        for v in item.iter().flatten() {
            n[usize::from(*v)] += 1;
        }
        let m = n[0] + n[1];
        if m < 2 {
            continue;
        }
        pairable = true;
        let w = 1.0 / (m - 1) as f64;
        for c in 0..2 {
            for k in 0..2 {
                let pairs = if c == k {
                    n[c] * (n[c] - usize::from(n[c] > 0))
                } else {
                    n[c] * n[k]
                };
                o[c][k] += pairs as f64 * w;
            }
        }
    }
    if !pairable {
        return Err(ProbeError::NoPairableItems);
    }
    let n_c = [o[0][0] + o[0][1], o[1][0] + o[1][1]];
    let n = n_c[0] + n_c[1];
    let observed = o[0][1] + o[1][0];
    let expected = 2.0 * n_c[0] * n_c[1] / (n - 1.0);
    if expected == 0.0 {
        return Ok(Alpha {
            alpha: 1.0,
            degenerate: true,
        });
    }
    Ok(Alpha {
        alpha: 1.0 - observed / expected,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageRule {
    /// Covered iff more than half of the present votes say "explains".
    #[default]
    Majority,
}

pub fn is_covered(votes: &[Vote], rule: CoverageRule) -> bool {
    match rule {
        CoverageRule::Majority => {
            let yes = votes.iter().filter(|v| **v == Some(true)).count();
            let no = votes.iter().filter(|v| **v == Some(false)).count();
            yes > no
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub model: String,
    pub n_items: usize,
    pub n_covered: usize,
    pub covered: f64,
    /// Agreement over the vote matrix; absent when fewer than two items or no
    /// item with two votes.
    pub alpha: Option<Alpha>,
}

pub fn coverage(records: &[ProbeRecord], rule: CoverageRule, model: &str) -> Result<CoverageReport, ProbeError> {
    if records.is_empty() {
        return Err(ProbeError::NoRecords);
    }
    if let Some(index) = records.iter().position(|r| r.votes.iter().all(Option::is_none)) {
        return Err(ProbeError::NoVotes { index });
    }
    let n_covered = records.iter().filter(|r| is_covered(&r.votes, rule)).count();
    let matrix: Vec<Vec<Vote>> = records.iter().map(|r| r.votes.clone()).collect();
    Ok(CoverageReport {
        model: model.to_string(),
        n_items: records.len(),
        n_covered,
        covered: n_covered as f64 / records.len() as f64,
        alpha: krippendorff_alpha(&matrix).ok(),
    })
}

/// Votes keyed by item id, then annotator id.
pub type VoteTable = BTreeMap<String, BTreeMap<String, Vote>>;

/// Parse a votes CSV with header `item_id,annotator_id,label`, label one of
/// `1`, `0` or `NA`.
pub fn parse_votes<R: std::io::Read>(reader: R) -> Result<VoteTable, ProbeError> {
    #[derive(Deserialize)]
    struct Row {
        item_id: String,
        annotator_id: String,
        label: String,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut table = VoteTable::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| ProbeError::Votes {
            line,
            message: e.to_string(),
        })?;
        let vote = match row.label.as_str() {
            "1" => Some(true),
            "0" => Some(false),
            "NA" => None,
            other => {
                return Err(ProbeError::Votes {
                    line,
                    message: format!("label {other:?} is not 1, 0 or NA"),
                })
            }
        };
        let item = table.entry(row.item_id.clone()).or_default();
        if item.insert(row.annotator_id.clone(), vote).is_some() {
            return Err(ProbeError::Votes {
                line,
                message: format!("duplicate vote by {:?} on item {:?}", row.annotator_id, row.item_id),
            });
        }
    }
    Ok(table)
}

/// Attach votes to records; item ids are 1-based record positions. Each
/// record's votes are ordered by annotator id.
pub fn attach_votes(records: &mut [ProbeRecord], votes: &VoteTable, max_annotators: usize) -> Result<(), ProbeError> {
    let annotators: BTreeSet<&String> = votes.values().flat_map(|m| m.keys()).collect();
    if annotators.len() > max_annotators {
        return Err(ProbeError::Votes {
            line: 0,
            message: format!("{} annotators exceed the configured {max_annotators}", annotators.len()),
        });
    }
    for item in votes.keys() {
        let ok = item.parse::<usize>().is_ok_and(|i| (1..=records.len()).contains(&i));
        if !ok {
            return Err(ProbeError::Votes {
                line: 0,
                message: format!(
                    "item id {item:?} does not name one of the {} knowledge lines",
                    records.len()
                ),
            });
        }
    }
    for (i, record) in records.iter_mut().enumerate() {
        let item = votes.iter().find(|(k, _)| k.parse::<usize>().ok() == Some(i + 1));
        record.votes = annotators
            .iter()
            .map(|a| item.and_then(|(_, m)| m.get(*a).copied()).flatten())
            .collect();
    }
    Ok(())
}

pub fn write_records<W: Write>(mut w: W, records: &[ProbeRecord]) -> Result<(), ProbeError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| ProbeError::Io(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| ProbeError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<ProbeRecord>, ProbeError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| ProbeError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ProbeError::Io(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
