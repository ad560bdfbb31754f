//! JSON Lines corpus format, loading, statistics and attribute sampling.
//!
//! One chain per line:
//!
//! ```text
//! {"id": str, "attribute": {"text": str, "category": "AM|HAVE|MY|OTHER", "subcategory": str|null},
//!  "implicit": str, "explicit": str, "non_offensive": str,
//!  "chain": [{"text": str, "tag": "AIR|KIR|RR", "knowledge": str|null}]}
//! ```
//!
//! Unknown fields at any of the three object levels survive a round trip.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    self, Attribute, Blocklist, Category, ReasoningChain, StepTag, ValidationMode, ValidationResult, Violation,
    ViolationCode,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: io::Error },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("category {category} has {available} attributes, {requested} requested")]
    InsufficientCategory {
        category: Category,
        available: usize,
        requested: usize,
    },
}

/// Validation outcome for one input line that parsed as a chain record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordReport {
    pub line: usize,
    pub id: String,
    pub result: ValidationResult,
    /// False when the record was dropped for hard violations.
    pub loaded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedLine {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadedCorpus {
    pub chains: Vec<ReasoningChain>,
    pub records: Vec<RecordReport>,
    pub malformed: Vec<MalformedLine>,
}

impl LoadedCorpus {
    pub fn error_count(&self) -> usize {
        self.records.iter().map(|r| r.result.errors().count()).sum::<usize>() + self.malformed.len()
    }

    pub fn warning_count(&self) -> usize {
        self.records.iter().map(|r| r.result.warnings().count()).sum()
    }

    pub fn dropped(&self) -> impl Iterator<Item = &RecordReport> {
        self.records.iter().filter(|r| !r.loaded)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions<'a> {
    pub mode: ValidationMode,
    pub blocklist: Option<&'a Blocklist>,
}

pub fn load_corpus(path: impl AsRef<Path>, mode: ValidationMode) -> Result<LoadedCorpus, DatasetError> {
    load_corpus_with(path, &LoadOptions { mode, blocklist: None })
}

pub fn load_corpus_with(path: impl AsRef<Path>, opts: &LoadOptions<'_>) -> Result<LoadedCorpus, DatasetError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| DatasetError::Read {
        path: path.display().to_string(),
        source,
    })?;
    read_corpus(io::BufReader::new(file), opts)
}

/// Parse and validate a corpus stream. Malformed lines are reported and
/// skipped; records with hard violations (after mode-dependent downgrading)
/// are reported and dropped. Blank lines are ignored.
pub fn read_corpus<R: BufRead>(reader: R, opts: &LoadOptions<'_>) -> Result<LoadedCorpus, DatasetError> {
    let mut out = LoadedCorpus::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let chain: ReasoningChain = match serde_json::from_str(&line) {
            Ok(c) => c,
            Err(e) => {
                out.malformed.push(MalformedLine {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let mut result = chain::validate_chain_with(&chain, opts.mode, opts.blocklist);
        if !seen.insert(chain.id.clone()) {
            result.push(Violation::error(
                ViolationCode::DuplicateId,
                format!("duplicate id {:?}", chain.id),
            ));
        }
        let loaded = !result.has_errors();
        out.records.push(RecordReport {
            line: line_no,
            id: chain.id.clone(),
            result,
            loaded,
        });
        if loaded {
            out.chains.push(chain);
        }
    }
    Ok(out)
}

pub fn write_corpus<W: Write>(mut writer: W, chains: &[ReasoningChain]) -> Result<(), DatasetError> {
    for chain in chains {
        serde_json::to_writer(&mut writer, chain)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(chains: &[ReasoningChain]) -> String {
    let mut buf = Vec::new();
    write_corpus(&mut buf, chains).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_examples: usize,
    pub mean_chain_length: f64,
    pub min_length: usize,
    pub max_length: usize,
    pub per_length_counts: BTreeMap<usize, usize>,
    pub tag_fractions: BTreeMap<StepTag, f64>,
    pub kir_site_count: usize,
}

pub fn corpus_stats(chains: &[ReasoningChain]) -> Result<CorpusStats, DatasetError> {
    if chains.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let mut per_length_counts = BTreeMap::new();
    for c in chains {
        *per_length_counts.entry(c.len()).or_insert(0) += 1;
    }
    let total_steps: usize = chains.iter().map(ReasoningChain::len).sum();
    let tag_fractions = chain::tag_frequencies(chains).map_err(|_| DatasetError::EmptyCorpus)?;
    Ok(CorpusStats {
        n_examples: chains.len(),
        mean_chain_length: total_steps as f64 / chains.len() as f64,
        min_length: *per_length_counts.keys().next().unwrap(),
        max_length: *per_length_counts.keys().next_back().unwrap(),
        per_length_counts,
        tag_fractions,
        kir_site_count: chains.iter().map(|c| chain::kir_sites(c).len()).sum(),
    })
}

/// Order-preserving subset of chains whose length is in `lengths`.
pub fn filter_by_length(chains: &[ReasoningChain], lengths: &BTreeSet<usize>) -> Vec<ReasoningChain> {
    chains.iter().filter(|c| lengths.contains(&c.len())).cloned().collect()
}

/// Draw `per_category` attributes from each of AM, HAVE, MY and OTHER.
///
/// Sampling is without replacement using ChaCha8 seeded with `seed` via
/// `seed_from_u64`. Output is grouped by category in that order; within a
/// category, input order is kept.
pub fn sample_attributes(
    attributes: &[Attribute],
    per_category: usize,
    seed: u64,
) -> Result<Vec<Attribute>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_category * Category::ALL.len());
    for category in Category::ALL {
        let members: Vec<&Attribute> = attributes.iter().filter(|a| a.category == category).collect();
        if members.len() < per_category {
            return Err(DatasetError::InsufficientCategory {
                category,
                available: members.len(),
                requested: per_category,
            });
        }
        let mut picked = index::sample(&mut rng, members.len(), per_category).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| members[i].clone()));
    }
    Ok(out)
}
