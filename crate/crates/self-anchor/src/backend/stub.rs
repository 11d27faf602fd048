//! Deterministic table-driven backend for exact tests and demos.
//!
//! A fixture scripts the model: the first rule whose suffix matches the end
//! of the context supplies the logits, otherwise `default_logits` apply.
//! Tokenization is greedy longest-match over the vocabulary strings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendDescriptor};
use crate::error::{Error, Result};
use crate::steering::{LogitVector, TokenId};

/// One scripted response: if the context ends with `suffix`, answer `logits`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StubRule {
    pub suffix: Vec<TokenId>,
    pub logits: Vec<f64>,
}

/// On-disk stub description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StubFixture {
    /// Token strings; ids are positions in this list.
    pub vocab: Vec<String>,
    /// Ordered rules; the earliest matching rule wins.
    pub rules: Vec<StubRule>,
    /// Logits used when no rule matches.
    pub default_logits: Vec<f64>,
    /// Mask token id. Absent means the backend declares no mask token and
    /// steering requires one from the config.
    #[serde(default)]
    pub mask_token: Option<TokenId>,
    pub eos_token: TokenId,
}

impl StubFixture {
    /// Builds a fixture over a single-character vocabulary (ids 2..) plus
    /// `<mask>` (0) and `<eos>` (1) that deterministically emits
    /// `script_text` followed by eos, whatever the prompt was.
    ///
    /// Rules key on suffixes of the scripted token stream, lengthened until
    /// they distinguish every position with a different continuation, and are
    /// ordered longest-first so the most specific rule wins. `extra_chars`
    /// widens the vocabulary so prompts tokenize.
    pub fn scripted(script_text: &str, extra_chars: &str, peak: f64) -> Result<Self> {
        use std::collections::BTreeSet;

        let chars: BTreeSet<char> = script_text.chars().chain(extra_chars.chars()).collect();
        if chars.is_empty() {
            return Err(Error::Backend("scripted fixture needs at least one character".into()));
        }
        let mut vocab: Vec<String> = vec!["<mask>".into(), "<eos>".into()];
        vocab.extend(chars.iter().map(|c| c.to_string()));
        let id_of = |c: char| -> TokenId {
            (2 + chars.iter().position(|x| *x == c).unwrap()) as TokenId
        };

        let mut script: Vec<TokenId> = script_text.chars().map(id_of).collect();
        script.push(1); // eos ends the script

        let n = vocab.len();
        let peaked = |favored: TokenId| -> Vec<f64> {
            let mut v = vec![0.0; n];
            v[favored as usize] = peak;
            v
        };

        let mut rules: Vec<StubRule> = Vec::new();
        for k in 1..script.len() {
            let mut len = 1;
            loop {
                let tail = &script[k - len..k];
                let ambiguous = (1..script.len()).any(|j| {
                    j != k && j >= len && script[j - len..j] == *tail && script[j] != script[k]
                });
                if !ambiguous || len == k {
                    break;
                }
                len += 1;
            }
            rules.push(StubRule { suffix: script[k - len..k].to_vec(), logits: peaked(script[k]) });
        }
        rules.sort_by_key(|r| std::cmp::Reverse(r.suffix.len()));
        let mut seen: BTreeSet<Vec<TokenId>> = BTreeSet::new();
        rules.retain(|r| seen.insert(r.suffix.clone()));

        Ok(StubFixture {
            vocab,
            rules,
            default_logits: peaked(script[0]),
            mask_token: Some(0),
            eos_token: 1,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let data = std::fs::read_to_string(path)
            .map_err(|e| Error::Backend(format!("cannot read stub fixture {}: {e}", path.display())))?;
        let fixture: StubFixture = serde_json::from_str(&data)
            .map_err(|e| Error::Backend(format!("invalid stub fixture {}: {e}", path.display())))?;
        Ok(fixture)
    }

    pub fn to_path(&self, path: &Path) -> Result<()> {
        let data = serde_json::to_string_pretty(self)?;
        std::fs::write(path, data)?;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let n = self.vocab.len();
        if n == 0 {
            return Err(Error::Backend("stub fixture has an empty vocabulary".into()));
        }
        let check_vec = |logits: &[f64], what: &str| -> Result<()> {
            if logits.len() != n {
                return Err(Error::Backend(format!(
                    "{what} has {} logits but the vocabulary has {n} entries",
                    logits.len()
                )));
            }
            if logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::Backend(format!("{what} contains non-finite logits")));
            }
            Ok(())
        };
        check_vec(&self.default_logits, "default_logits")?;
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.suffix.is_empty() {
                return Err(Error::Backend(format!("rule {i} has an empty suffix")));
            }
            if let Some(bad) = rule.suffix.iter().find(|t| **t as usize >= n) {
                return Err(Error::Backend(format!("rule {i} suffix token {bad} out of range")));
            }
            check_vec(&rule.logits, &format!("rule {i}"))?;
        }
        if let Some(mask) = self.mask_token {
            if mask as usize >= n {
                return Err(Error::Backend(format!("mask token {mask} out of range")));
            }
        }
        if self.eos_token as usize >= n {
            return Err(Error::Backend(format!("eos token {} out of range", self.eos_token)));
        }
        Ok(())
    }
}

/// Immutable-after-load stub model.
pub struct StubBackend {
    fixture: StubFixture,
    descriptor: BackendDescriptor,
}

impl StubBackend {
    pub fn new(fixture: StubFixture) -> Result<Self> {
        Self::with_name(fixture, "stub")
    }

    pub fn with_name(fixture: StubFixture, name: &str) -> Result<Self> {
        fixture.validate()?;
        let descriptor = BackendDescriptor {
            vocab_size: fixture.vocab.len(),
            mask_token: fixture.mask_token,
            eos_token: fixture.eos_token,
            name: name.to_string(),
        };
        Ok(StubBackend { fixture, descriptor })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let fixture = StubFixture::from_path(path)?;
        let name = path
            .file_stem()
            .map(|s| format!("stub:{}", s.to_string_lossy()))
            .unwrap_or_else(|| "stub".to_string());
        Self::with_name(fixture, &name)
    }

    pub fn fixture(&self) -> &StubFixture {
        &self.fixture
    }
}

impl Backend for StubBackend {
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut tokens = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let mut best: Option<(usize, TokenId)> = None;
            for (id, entry) in self.fixture.vocab.iter().enumerate() {
                if entry.is_empty() || !rest.starts_with(entry.as_str()) {
                    continue;
                }
                let candidate = (entry.len(), id as TokenId);
                best = match best {
                    // longest match wins; ties break to the lowest id
                    Some((len, id0)) if len > candidate.0 || (len == candidate.0 && id0 < candidate.1) => {
                        Some((len, id0))
                    }
                    _ => Some(candidate),
                };
            }
            match best {
                Some((len, id)) => {
                    tokens.push(id);
                    rest = &rest[len..];
                }
                None => {
                    let head: String = rest.chars().take(12).collect();
                    return Err(Error::Tokenization(format!(
                        "no vocabulary entry matches at `{head}`"
                    )));
                }
            }
        }
        Ok(tokens)
    }

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for &t in tokens {
            let entry = self
                .fixture
                .vocab
                .get(t as usize)
                .ok_or_else(|| Error::contract(format!("token {t} out of range")))?;
            out.push_str(entry);
        }
        Ok(out)
    }

    fn logits(&self, context: &[TokenId]) -> Result<LogitVector> {
        if let Some(bad) = context.iter().find(|t| **t as usize >= self.fixture.vocab.len()) {
            return Err(Error::contract(format!("context token {bad} out of range")));
        }
        let values = self
            .fixture
            .rules
            .iter()
            .find(|rule| context.ends_with(&rule.suffix))
            .map(|rule| rule.logits.clone())
            .unwrap_or_else(|| self.fixture.default_logits.clone());
        LogitVector::new(values)
    }

    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }
}
