//! Atomic skill labels: `Verb[obj]` / `Verb[obj1, obj2]`.
//!
//! Labels are the composable intermediate representation shared by the
//! annotation pipeline, plan similarity, coverage tokens and prompts. The
//! verb vocabulary is an open registry: a handful of verbs are seeded, and
//! unknown verbs parse as single-argument verbs unless registered as
//! relational.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkillError {
    #[error("malformed skill label {text:?}: {reason}")]
    MalformedLabel { text: String, reason: &'static str },
    #[error("verb {verb} expects {expected} argument(s), got {got}")]
    ArityMismatch { verb: String, expected: usize, got: usize },
    #[error("{verb}[{object}] targets an object that is not movable")]
    NonMovableGrasp { verb: String, object: String },
}

/// Verbs seeded into the default registry, with their relational flag.
pub const SEED_VERBS: &[(&str, bool)] = &[
    ("Reach", false),
    ("Move", false),
    ("Grasp", false),
    ("Release", false),
    ("Place", true),
    ("Insert", true),
    ("Close", true),
    ("Push", false),
    ("Pull", false),
    ("Lift", false),
    ("Rotate", false),
];

pub const GRASP: &str = "Grasp";
pub const RELEASE: &str = "Release";
pub const MOVE: &str = "Move";

fn valid_verb_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() => chars.all(|c| c.is_ascii_alphabetic()),
        _ => false,
    }
}

fn valid_arg(arg: &str) -> bool {
    !arg.is_empty() && !arg.contains(['[', ']', ','])
}

/// A skill verb together with its arity class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Verb {
    name: String,
    relational: bool,
}

impl Verb {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_relational(&self) -> bool {
        self.relational
    }

    pub fn arity(&self) -> usize {
        if self.relational {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Known verbs and whether they take two object arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbRegistry {
    relational: BTreeMap<String, bool>,
}

impl Default for VerbRegistry {
    fn default() -> Self {
        Self { relational: SEED_VERBS.iter().map(|(name, rel)| (name.to_string(), *rel)).collect() }
    }
}

impl VerbRegistry {
    /// Registers (or re-registers) a verb. Grasp and Release are pinned to a
    /// single argument; attempts to make them relational are ignored.
    pub fn register(&mut self, name: &str, relational: bool) -> Result<(), SkillError> {
        if !valid_verb_name(name) {
            return Err(SkillError::MalformedLabel {
                text: name.to_string(),
                reason: "verb must be alphabetic and start uppercase",
            });
        }
        let relational = relational && name != GRASP && name != RELEASE;
        self.relational.insert(name.to_string(), relational);
        Ok(())
    }

    pub fn verb(&self, name: &str) -> Result<Verb, SkillError> {
        if !valid_verb_name(name) {
            return Err(SkillError::MalformedLabel {
                text: name.to_string(),
                reason: "verb must be alphabetic and start uppercase",
            });
        }
        Ok(Verb { name: name.to_string(), relational: self.relational.get(name).copied().unwrap_or(false) })
    }

    pub fn is_known(&self, name: &str) -> bool {
        self.relational.contains_key(name)
    }

    /// Parses a label against this registry.
    pub fn parse(&self, text: &str) -> Result<SkillLabel, SkillError> {
        let malformed = |reason| SkillError::MalformedLabel { text: text.to_string(), reason };
        let trimmed = text.trim();
        let open = trimmed.find('[').ok_or_else(|| malformed("missing '['"))?;
        let inner = trimmed[open + 1..].strip_suffix(']').ok_or_else(|| malformed("missing closing ']'"))?;
        if inner.contains(['[', ']']) {
            return Err(malformed("nested brackets"));
        }
        let verb = self
            .verb(trimmed[..open].trim_end())
            .map_err(|_| malformed("verb must be alphabetic and start uppercase"))?;
        let args: Vec<String> = inner.split(',').map(|a| a.trim().to_string()).collect();
        if args.iter().any(|a| a.is_empty()) {
            return Err(malformed("empty argument"));
        }
        if args.len() > 2 {
            return Err(malformed("more than two arguments"));
        }
        SkillLabel::new(verb, args)
    }
}

/// One atomic skill.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SkillLabel {
    verb: Verb,
    args: Vec<String>,
}

impl SkillLabel {
    pub fn new(verb: Verb, args: Vec<String>) -> Result<Self, SkillError> {
        if args.is_empty() || args.len() > 2 {
            return Err(SkillError::MalformedLabel {
                text: format!("{}[{}]", verb.name, args.join(", ")),
                reason: "expected one or two arguments",
            });
        }
        if let Some(bad) = args.iter().find(|a| !valid_arg(a) || a.trim() != a.as_str()) {
            return Err(SkillError::MalformedLabel {
                text: bad.clone(),
                reason: "argument must be non-empty without brackets, commas or padding",
            });
        }
        if args.len() != verb.arity() {
            return Err(SkillError::ArityMismatch {
                verb: verb.name.clone(),
                expected: verb.arity(),
                got: args.len(),
            });
        }
        Ok(Self { verb, args })
    }

    /// Builds a label using the default registry for the verb's arity.
    pub fn from_parts(verb: &str, args: &[&str]) -> Result<Self, SkillError> {
        let verb = VerbRegistry::default().verb(verb)?;
        Self::new(verb, args.iter().map(|a| a.to_string()).collect())
    }

    pub fn verb(&self) -> &Verb {
        &self.verb
    }

    pub fn verb_name(&self) -> &str {
        &self.verb.name
    }

    pub fn args(&self) -> &[String] {
        &self.args
    }
}

impl fmt::Display for SkillLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.verb.name, self.args.join(", "))
    }
}

impl FromStr for SkillLabel {
    type Err = SkillError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_skill(s)
    }
}

impl Serialize for SkillLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SkillLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_skill(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses a label with the default verb registry.
pub fn parse_skill(text: &str) -> Result<SkillLabel, SkillError> {
    VerbRegistry::default().parse(text)
}

/// Canonical form: `Verb[a]` or `Verb[a, b]`.
pub fn format_skill(label: &SkillLabel) -> String {
    label.to_string()
}

/// Skills in execution order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkillSequence(pub Vec<SkillLabel>);

impl SkillSequence {
    pub fn new(labels: Vec<SkillLabel>) -> Self {
        Self(labels)
    }

    /// Parses every label; fails on the first bad one.
    pub fn parse_all<S: AsRef<str>>(items: &[S]) -> Result<Self, SkillError> {
        items.iter().map(|s| parse_skill(s.as_ref())).collect::<Result<Vec<_>, _>>().map(Self)
    }

    pub fn labels(&self) -> &[SkillLabel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SkillLabel> {
        self.0.iter()
    }

    pub fn verbs(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|l| l.verb_name())
    }

    /// Labels joined with `" -> "`.
    pub fn render_chain(&self) -> String {
        self.0.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" -> ")
    }
}

impl From<Vec<SkillLabel>> for SkillSequence {
    fn from(v: Vec<SkillLabel>) -> Self {
        Self(v)
    }
}

impl<'a> IntoIterator for &'a SkillSequence {
    type Item = &'a SkillLabel;
    type IntoIter = std::slice::Iter<'a, SkillLabel>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

pub type VerbSet = BTreeSet<String>;
pub type BigramSet = BTreeSet<(String, String)>;

pub fn verb_set(seq: &SkillSequence) -> VerbSet {
    seq.verbs().map(str::to_string).collect()
}

/// Distinct ordered verb pairs from adjacent positions.
pub fn bigrams(seq: &SkillSequence) -> BigramSet {
    seq.0.windows(2).map(|w| (w[0].verb_name().to_string(), w[1].verb_name().to_string())).collect()
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets scoring 1.0.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Weighted mix of verb-set and verb-bigram Jaccard similarity. Object
/// arguments do not participate.
pub fn plan_similarity(a: &SkillSequence, b: &SkillSequence, lambda: f64) -> f64 {
    let verbs = jaccard(&verb_set(a), &verb_set(b));
    let pairs = jaccard(&bigrams(a), &bigrams(b));
    lambda * verbs + (1.0 - lambda) * pairs
}

fn is_movable(obj: &str, movable: &BTreeSet<String>) -> bool {
    movable.contains(obj) || movable.iter().any(|m| m.eq_ignore_ascii_case(obj))
}

/// Rule-based clean-up of an annotated label.
///
/// Relational labels get `(movable, target)` argument order when exactly one
/// argument is movable; a relational label whose segment kept the gripper
/// open becomes `Move[movable]`. Grasp/Release must target a movable object.
pub fn normalize_skill(
    label: &SkillLabel,
    movable_objects: &BTreeSet<String>,
    gripper_open_throughout: bool,
) -> Result<SkillLabel, SkillError> {
    let verb = label.verb_name();
    if verb == GRASP || verb == RELEASE {
        let obj = &label.args[0];
        if !is_movable(obj, movable_objects) {
            return Err(SkillError::NonMovableGrasp { verb: verb.to_string(), object: obj.clone() });
        }
        return Ok(label.clone());
    }
    if !label.verb.relational || label.args.len() != 2 {
        return Ok(label.clone());
    }
    let mut args = label.args.clone();
    let first_movable = is_movable(&args[0], movable_objects);
    let second_movable = is_movable(&args[1], movable_objects);
    if second_movable && !first_movable {
        args.swap(0, 1);
    }
    if gripper_open_throughout {
        let move_verb = Verb { name: MOVE.to_string(), relational: false };
        return SkillLabel::new(move_verb, vec![args.swap_remove(0)]);
    }
    Ok(SkillLabel { verb: label.verb.clone(), args })
}
