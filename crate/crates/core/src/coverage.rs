//! Coverage-aware static library.
//!
//! Demonstrations are reduced to object-agnostic tokens: `V:<verb>` for each
//! distinct verb and `B:<v1>-><v2>` for each distinct adjacent verb pair.
//! Tokens carry IDF weights `w_t = (ln((N+1)/(df(t)+1)) + 1)^β`, and a demo's
//! value against a target token set is
//!
//! ```text
//! Score(d) = Σ_{t ∈ T(d) ∩ target} w_t / (1 + γ·|S_d|)
//! ```
//!
//! Both the offline library construction and the inference-time gap fill are
//! greedy maximizations of that score.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::demo::{canonical_json, DemoLibrary};
use crate::skill::SkillSequence;

pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 0.03;
/// Tag for the natural logarithm used in IDF weights.
pub const LOG_BASE: &str = "e";

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("cannot build a static library from an empty demonstration library")]
    EmptyLibrary,
    #[error("invalid coverage token {0:?}")]
    BadToken(String),
    #[error("static library file: {0}")]
    Format(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoverageToken {
    Verb(String),
    Bigram(String, String),
}

impl fmt::Display for CoverageToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Verb(v) => write!(f, "V:{v}"),
            Self::Bigram(a, b) => write!(f, "B:{a}->{b}"),
        }
    }
}

impl FromStr for CoverageToken {
    type Err = CoverageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CoverageError::BadToken(s.to_string());
        if let Some(v) = s.strip_prefix("V:") {
            if v.is_empty() || v.contains("->") {
                return Err(bad());
            }
            return Ok(Self::Verb(v.to_string()));
        }
        let (a, b) = s.strip_prefix("B:").and_then(|p| p.split_once("->")).ok_or_else(bad)?;
        if a.is_empty() || b.is_empty() {
            return Err(bad());
        }
        Ok(Self::Bigram(a.to_string(), b.to_string()))
    }
}

impl Serialize for CoverageToken {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CoverageToken {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub type TokenSet = BTreeSet<CoverageToken>;

/// Verb and verb-bigram tokens of a skill sequence; object names are ignored.
pub fn tokens_of(seq: &SkillSequence) -> TokenSet {
    let verbs = seq.verbs().map(|v| CoverageToken::Verb(v.to_string()));
    let pairs = seq
        .labels()
        .windows(2)
        .map(|w| CoverageToken::Bigram(w[0].verb_name().to_string(), w[1].verb_name().to_string()));
    verbs.chain(pairs).collect()
}

/// `(ln((N+1)/(df+1)) + 1)^β`
pub fn idf_weight_raw(n: usize, df: usize, beta: f64) -> f64 {
    (((n as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0).powf(beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub n: usize,
    pub df: BTreeMap<CoverageToken, usize>,
    pub beta: f64,
}

impl IdfTable {
    pub fn from_token_sets<'a>(sets: impl IntoIterator<Item = &'a TokenSet>, beta: f64) -> Self {
        let mut n = 0;
        let mut df = BTreeMap::new();
        for set in sets {
            n += 1;
            for t in set {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        Self { n, df, beta }
    }

    /// Unseen tokens have df 0 and therefore the largest weight.
    pub fn df(&self, token: &CoverageToken) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }
}

pub fn idf_weight(token: &CoverageToken, table: &IdfTable) -> f64 {
    idf_weight_raw(table.n, table.df(token), table.beta)
}

/// Weight of the demo's tokens inside `target`, over `1 + γ·len`.
pub fn target_score(
    tokens: &TokenSet,
    length: usize,
    target: &TokenSet,
    table: &IdfTable,
    gamma: f64,
) -> f64 {
    let gain: f64 = tokens.intersection(target).map(|t| idf_weight(t, table)).sum();
    gain / (1.0 + gamma * length as f64)
}

/// Weight of the demo's tokens not yet in `covered`.
pub fn selection_score(
    tokens: &TokenSet,
    length: usize,
    covered: &TokenSet,
    table: &IdfTable,
    gamma: f64,
) -> f64 {
    let gain: f64 = tokens.difference(covered).map(|t| idf_weight(t, table)).sum();
    gain / (1.0 + gamma * length as f64)
}

pub fn coverage_gap(plan_tokens: &TokenSet, covered: &TokenSet) -> TokenSet {
    plan_tokens.difference(covered).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticEntry {
    pub id: String,
    /// Number of skills `|S_d|`.
    pub length: usize,
    pub tokens: TokenSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticLibrary {
    pub log_base: String,
    pub beta: f64,
    pub gamma: f64,
    pub idf: IdfTable,
    /// Entries in greedy selection order.
    pub entries: Vec<StaticEntry>,
}

/// Greedy maximization of [`target_score`] over `entries`, consuming
/// `target` as tokens get covered. Stops when the target is empty, the
/// budget is spent or nothing scores above zero. Ties go to the smaller id.
fn greedy_cover(
    entries: &[StaticEntry],
    mut target: TokenSet,
    budget: usize,
    table: &IdfTable,
    gamma: f64,
    excluded: &BTreeSet<&str>,
) -> (Vec<usize>, TokenSet) {
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < budget && !target.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in entries.iter().enumerate() {
            if chosen.contains(&i) || excluded.contains(e.id.as_str()) {
                continue;
            }
            let s = target_score(&e.tokens, e.length, &target, table, gamma);
            if s <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((j, bs)) => s > bs || (s == bs && e.id < entries[j].id),
            };
            if better {
                best = Some((i, s));
            }
        }
        let Some((i, _)) = best else { break };
        for t in &entries[i].tokens {
            target.remove(t);
        }
        chosen.push(i);
    }
    (chosen, target)
}

/// Builds the static library by greedy coverage of the corpus token
/// universe. `budget` caps the number of selected demos.
pub fn build_static_library(
    lib: &DemoLibrary,
    beta: f64,
    gamma: f64,
    budget: Option<usize>,
) -> Result<StaticLibrary, CoverageError> {
    if lib.is_empty() {
        return Err(CoverageError::EmptyLibrary);
    }
    let entries: Vec<StaticEntry> = lib
        .demos()
        .iter()
        .map(|d| StaticEntry { id: d.id.clone(), length: d.skills.len(), tokens: tokens_of(&d.skills) })
        .collect();
    let idf = IdfTable::from_token_sets(entries.iter().map(|e| &e.tokens), beta);
    let universe: TokenSet = idf.df.keys().cloned().collect();
    let (chosen, _) =
        greedy_cover(&entries, universe, budget.unwrap_or(usize::MAX), &idf, gamma, &BTreeSet::new());
    Ok(StaticLibrary {
        log_base: LOG_BASE.to_string(),
        beta,
        gamma,
        idf,
        entries: chosen.into_iter().map(|i| entries[i].clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFill {
    pub ids: Vec<String>,
    pub remaining_gap: TokenSet,
}

/// Picks up to `k_cov` static demos that cover the gap, never returning an
/// id in `excluded` (the dynamic set).
pub fn fill_gaps(
    gap: &TokenSet,
    static_lib: &StaticLibrary,
    k_cov: usize,
    excluded: &BTreeSet<&str>,
) -> GapFill {
    let (chosen, remaining_gap) =
        greedy_cover(&static_lib.entries, gap.clone(), k_cov, &static_lib.idf, static_lib.gamma, excluded);
    GapFill { ids: chosen.into_iter().map(|i| static_lib.entries[i].id.clone()).collect(), remaining_gap }
}

impl StaticLibrary {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn covered_tokens(&self) -> TokenSet {
        self.entries.iter().flat_map(|e| e.tokens.iter().cloned()).collect()
    }

    pub fn to_json(&self) -> String {
        canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, CoverageError> {
        let lib: Self = serde_json::from_str(text).map_err(|e| CoverageError::Format(e.to_string()))?;
        if lib.log_base != LOG_BASE {
            return Err(CoverageError::Format(format!("unsupported log base {:?}", lib.log_base)));
        }
        if let Some((t, df)) = lib.idf.df.iter().find(|(_, &df)| df > lib.idf.n) {
            return Err(CoverageError::Format(format!("df({t}) = {df} exceeds N = {}", lib.idf.n)));
        }
        Ok(lib)
    }

    pub fn save(&self, path: &Path) -> Result<(), CoverageError> {
        let io = |source| CoverageError::Io { path: path.display().to_string(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io)?;
        }
        fs::write(path, self.to_json()).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CoverageError> {
        let text = fs::read_to_string(path)
            .map_err(|source| CoverageError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}
