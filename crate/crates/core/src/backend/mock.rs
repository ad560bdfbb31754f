//! Deterministic in-process backend.
//!
//! Hash mode: the entailment triple for `(p, h)` is derived from the 64-bit
//! FNV-1a hash of the UTF-8 bytes of `p + "§" + h`. That hash seeds a
//! SplitMix64 stream; three draws `u` (top 53 bits scaled to `[0, 1)`) become
//! weights `0.01 + u` for entailment, neutral and contradiction, normalized
//! by their sum. OTD scores hash `"otd§" + text` and take one draw:
//! `offensive = 0.01 + 0.98 u`.
//!
//! Lexicon mode: entailment is driven by the share of distinct hypothesis
//! tokens that also occur in the premise, `r`:
//! `entailment = F + (1 - 2F) r`, `contradiction = F`, neutral takes the rest,
//! with `F = LEXICON_FLOOR`. Self-entailment is therefore `1 - F`, the mode's
//! maximum. A text is offensive (0.9) when any token is on the blocklist,
//! otherwise 0.1.
//!
//! Both modes answer completion requests by echoing the last
//! "Do you know that X?" question of the prompt as "Because X.".

use std::collections::BTreeSet;

use super::{Backend, BackendError, EntailmentScores, OtdScores, RequestKind, ScoreRequest, ScoreResponse, Scores};
use crate::chain::{word_tokens, Blocklist};

pub const LEXICON_FLOOR: f64 = 0.02;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockMode {
    Hash,
    Lexicon(Blocklist),
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    mode: MockMode,
    name: String,
}

impl MockBackend {
    pub fn new(mode: MockMode) -> Self {
        let name = match mode {
            MockMode::Hash => "mock:hash".to_string(),
            MockMode::Lexicon(_) => "mock:lexicon".to_string(),
        };
        Self { mode, name }
    }

    pub fn hash() -> Self {
        Self::new(MockMode::Hash)
    }

    pub fn lexicon(blocklist: Blocklist) -> Self {
        Self::new(MockMode::Lexicon(blocklist))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn mode(&self) -> &MockMode {
        &self.mode
    }

    pub fn entailment(&self, premise: &str, hypothesis: &str) -> EntailmentScores {
        match &self.mode {
            MockMode::Hash => {
                let key = format!("{premise}§{hypothesis}");
                let mut rng = SplitMix64(fnv1a64(key.as_bytes()));
                let w = [0.01 + rng.next_unit(), 0.01 + rng.next_unit(), 0.01 + rng.next_unit()];
                let sum: f64 = w.iter().sum();
                EntailmentScores {
                    entailment: w[0] / sum,
                    neutral: w[1] / sum,
                    contradiction: w[2] / sum,
                }
            }
            MockMode::Lexicon(_) => {
                let p: BTreeSet<String> = word_tokens(premise).collect();
                let h: BTreeSet<String> = word_tokens(hypothesis).collect();
                let overlap = if h.is_empty() {
                    0.0
                } else {
                    h.intersection(&p).count() as f64 / h.len() as f64
                };
                let entailment = LEXICON_FLOOR + (1.0 - 2.0 * LEXICON_FLOOR) * overlap;
                let contradiction = LEXICON_FLOOR;
                EntailmentScores {
                    entailment,
                    neutral: (1.0 - entailment - contradiction).max(0.0),
                    contradiction,
                }
            }
        }
    }

    /// The highest entailment score lexicon mode can produce.
    pub fn lexicon_self_entailment() -> f64 {
        1.0 - LEXICON_FLOOR
    }

    pub fn otd(&self, text: &str) -> OtdScores {
        let offensive = match &self.mode {
            MockMode::Hash => {
                let key = format!("otd§{text}");
                0.01 + 0.98 * SplitMix64(fnv1a64(key.as_bytes())).next_unit()
            }
            MockMode::Lexicon(bl) => {
                if bl.hits(text).is_empty() {
                    0.1
                } else {
                    0.9
                }
            }
        };
        OtdScores {
            offensive,
            non_offensive: 1.0 - offensive,
        }
    }

    pub fn completion(&self, prompt: &str) -> String {
        const Q: &str = "Do you know that ";
        prompt
            .rfind(Q)
            .map(|at| &prompt[at + Q.len()..])
            .and_then(|rest| rest.split_once('?'))
            .map(|(fact, _)| format!("Because {}.", fact.trim()))
            .unwrap_or_else(|| "I don't know.".to_string())
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn call(&self, request: &ScoreRequest) -> Result<ScoreResponse, BackendError> {
        if let Err(e) = request.validate() {
            return Ok(ScoreResponse::error(&request.id, e.to_string()));
        }
        let field = |f: &Option<String>| f.clone().unwrap_or_default();
        Ok(match request.kind {
            RequestKind::Entailment => ScoreResponse::scores(
                &request.id,
                Scores::Entailment(self.entailment(&field(&request.premise), &field(&request.hypothesis))),
            ),
            RequestKind::Otd => ScoreResponse::scores(&request.id, Scores::Otd(self.otd(&field(&request.text)))),
            RequestKind::Completion => ScoreResponse::completion(&request.id, self.completion(&field(&request.prompt))),
        })
    }
}
