//! Seen-task demonstration library: data model, keyframe segmentation,
//! validation and on-disk persistence.
//!
//! Layout of a library directory:
//!
//! ```text
//! manifest.json
//! demos/<id>.json
//! embeddings/<id>.json
//! images/...
//! ```
//!
//! All JSON is written with sorted keys and a trailing newline so that
//! `save → load → save` is byte-stable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecConfig, DiscreteAction, Quaternion, Vec3};
use crate::skill::{parse_skill, SkillSequence, GRASP, RELEASE};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEMOS_DIR: &str = "demos";
pub const EMBEDDINGS_DIR: &str = "embeddings";
pub const FORMAT_VERSION: u32 = 1;
/// Motion-stop threshold on `max |joint velocity|`, rad/s.
pub const DEFAULT_VELOCITY_THRESHOLD: f64 = 0.05;

pub const GRIPPER_OPEN: u8 = 1;
pub const GRIPPER_CLOSED: u8 = 0;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("trajectory has no frames")]
    EmptyTrajectory,
    #[error("no manifest at {0}")]
    MissingManifest(PathBuf),
    #[error("malformed record {id}: field {field}: {reason}")]
    MalformedRecord { id: String, field: String, reason: String },
    #[error("library failed validation:\n{0}")]
    ValidationFailed(ValidationReport),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DemoError + '_ {
    move |source| DemoError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quaternion,
}

/// One raw trajectory sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub step: u64,
    pub joint_velocities: Vec<f64>,
    /// 1 = open, 0 = closed.
    pub gripper_state: u8,
    pub pose: Pose,
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl TrajectoryFrame {
    fn speed(&self) -> f64 {
        self.joint_velocities.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Positions (into `frames`) of keyframes: the first frame, every gripper
/// change, every downward crossing of the velocity threshold, and the last
/// frame.
pub fn keyframe_positions(
    frames: &[TrajectoryFrame],
    velocity_threshold: f64,
) -> Result<Vec<usize>, DemoError> {
    if frames.is_empty() {
        return Err(DemoError::EmptyTrajectory);
    }
    let mut keys = BTreeSet::from([0, frames.len() - 1]);
    for (i, pair) in frames.windows(2).enumerate() {
        let (prev, cur) = (&pair[0], &pair[1]);
        if cur.gripper_state != prev.gripper_state {
            keys.insert(i + 1);
        }
        if prev.speed() >= velocity_threshold && cur.speed() < velocity_threshold {
            keys.insert(i + 1);
        }
    }
    Ok(keys.into_iter().collect())
}

/// Step indices of the keyframes, sorted and unique.
pub fn extract_keyframes(frames: &[TrajectoryFrame], velocity_threshold: f64) -> Result<Vec<u64>, DemoError> {
    Ok(keyframe_positions(frames, velocity_threshold)?.into_iter().map(|i| frames[i].step).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeObservation {
    pub step: u64,
    pub image_ref: String,
    pub gripper_state: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<String>,
}

/// Scene facts the annotator and prompt builder need.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemoMetadata {
    /// Scene objects with their initial voxel coordinates.
    #[serde(default)]
    pub objects: BTreeMap<String, [u32; 3]>,
    #[serde(default)]
    pub movable_objects: Vec<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl DemoMetadata {
    pub fn movable_set(&self) -> BTreeSet<String> {
        self.movable_objects.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub task_name: String,
    pub instruction: String,
    pub keyframes: Vec<KeyframeObservation>,
    pub actions: Vec<DiscreteAction>,
    pub skills: SkillSequence,
    #[serde(default)]
    pub metadata: DemoMetadata,
    /// Unit-norm visual embedding of the first keyframe; stored in a sidecar.
    #[serde(skip)]
    pub embedding: Option<Vec<f64>>,
}

impl Demonstration {
    pub fn initial_gripper(&self) -> Option<u8> {
        self.keyframes.first().map(|k| k.gripper_state)
    }

    /// `(g_k, g_{k+1})` for every segment.
    pub fn gripper_transitions(&self) -> Vec<(u8, u8)> {
        self.keyframes.windows(2).map(|w| (w[0].gripper_state, w[1].gripper_state)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    EmptyId,
    InvalidId,
    DuplicateId,
    EmptyInstruction,
    LengthMismatch,
    KeyframeCountMismatch,
    NonIncreasingSteps,
    EmptyImageRef,
    MissingFile,
    KeyframeGripperInvalid,
    TranslationOutOfRange,
    RotationOutOfRange,
    ActionGripperInvalid,
    ActionGripperMismatch,
    GripperSkillInconsistency,
    NonMovableGrasp,
    UnknownObject,
    DegenerateEmbedding,
    EmbeddingDimensionMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub demo_id: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = serde_json::to_value(self.kind).unwrap_or_default();
        write!(f, "{}: {}: {}", self.demo_id, kind.as_str().unwrap_or("?"), self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn kinds(&self) -> BTreeSet<ViolationKind> {
        self.violations.iter().map(|v| v.kind).collect()
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    fn push(&mut self, demo_id: &str, kind: ViolationKind, detail: impl Into<String>) {
        self.violations.push(Violation { demo_id: demo_id.to_string(), kind, detail: detail.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

fn valid_id(id: &str) -> bool {
    id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !id.starts_with('.')
}

/// Checks one demonstration against every structural invariant and reports
/// all violations found.
pub fn validate(demo: &Demonstration, codec: &CodecConfig) -> ValidationReport {
    use ViolationKind::*;
    let mut r = ValidationReport::default();
    let id = demo.id.as_str();
    if id.is_empty() {
        r.push(id, EmptyId, "id is empty");
    } else if !valid_id(id) {
        r.push(id, InvalidId, "id must use [A-Za-z0-9._-] and not start with '.'");
    }
    if demo.instruction.trim().is_empty() {
        r.push(id, EmptyInstruction, "instruction is empty");
    }
    if demo.actions.len() != demo.skills.len() {
        r.push(id, LengthMismatch, format!("{} actions vs {} skills", demo.actions.len(), demo.skills.len()));
    }
    if demo.keyframes.len() != demo.actions.len() + 1 {
        r.push(
            id,
            KeyframeCountMismatch,
            format!("{} keyframes for {} actions", demo.keyframes.len(), demo.actions.len()),
        );
    }
    for (k, pair) in demo.keyframes.windows(2).enumerate() {
        if pair[1].step <= pair[0].step {
            r.push(
                id,
                NonIncreasingSteps,
                format!("keyframe {} step {} after {}", k + 1, pair[1].step, pair[0].step),
            );
        }
    }
    for (k, kf) in demo.keyframes.iter().enumerate() {
        if kf.image_ref.trim().is_empty() {
            r.push(id, EmptyImageRef, format!("keyframe {k} has no image"));
        }
        if kf.gripper_state > 1 {
            r.push(id, KeyframeGripperInvalid, format!("keyframe {k} gripper {}", kf.gripper_state));
        }
    }
    let max_t = codec.bins_per_axis.saturating_sub(1);
    let max_r = codec.rotation_bins().saturating_sub(1);
    for (k, a) in demo.actions.iter().enumerate() {
        if a.translation.iter().any(|&i| i > max_t) {
            r.push(id, TranslationOutOfRange, format!("action {k} {a} exceeds {max_t}"));
        }
        if a.rotation.iter().any(|&i| i > max_r) {
            r.push(id, RotationOutOfRange, format!("action {k} {a} exceeds {max_r}"));
        }
        if a.gripper > 1 {
            r.push(id, ActionGripperInvalid, format!("action {k} gripper {}", a.gripper));
        } else if let Some(next) = demo.keyframes.get(k + 1) {
            if u32::from(next.gripper_state) != a.gripper {
                r.push(
                    id,
                    ActionGripperMismatch,
                    format!(
                        "action {k} gripper {} but keyframe {} is {}",
                        a.gripper,
                        k + 1,
                        next.gripper_state
                    ),
                );
            }
        }
    }
    let transitions = demo.gripper_transitions();
    let movable = demo.metadata.movable_set();
    let known: BTreeSet<String> = demo.metadata.objects.keys().map(|o| o.to_lowercase()).collect();
    for (k, label) in demo.skills.iter().enumerate() {
        let verb = label.verb_name();
        if let Some(&(from, to)) = transitions.get(k) {
            let expected = match (from, to) {
                (1, 0) => Some(GRASP),
                (0, 1) => Some(RELEASE),
                _ => None,
            };
            let consistent = match expected {
                Some(v) => verb == v,
                None => verb != GRASP && verb != RELEASE,
            };
            if !consistent {
                r.push(id, GripperSkillInconsistency, format!("skill {k} {label} with gripper {from}->{to}"));
            }
        }
        if (verb == GRASP || verb == RELEASE)
            && !movable.is_empty()
            && !movable.iter().any(|m| m.eq_ignore_ascii_case(&label.args()[0]))
        {
            r.push(id, NonMovableGrasp, format!("skill {k} {label} targets a fixed object"));
        }
        if !known.is_empty() {
            for arg in label.args() {
                if !known.contains(&arg.to_lowercase()) {
                    r.push(id, UnknownObject, format!("skill {k} {label}: {arg} not in scene"));
                }
            }
        }
    }
    if let Some(e) = &demo.embedding {
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if e.is_empty() || !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
            r.push(id, DegenerateEmbedding, format!("embedding norm {norm}"));
        }
    }
    r
}

/// Validates a set of demonstrations as a library: per-demo checks plus
/// id uniqueness, embedding dimension agreement and, when `root` is given,
/// existence of referenced files.
pub fn validate_all(demos: &[Demonstration], codec: &CodecConfig, root: Option<&Path>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    let mut dim = None;
    for demo in demos {
        report.extend(validate(demo, codec));
        if !seen.insert(demo.id.as_str()) {
            report.push(&demo.id, ViolationKind::DuplicateId, format!("id {} repeated", demo.id));
        }
        if let Some(e) = &demo.embedding {
            match dim {
                None => dim = Some(e.len()),
                Some(d) if d != e.len() => report.push(
                    &demo.id,
                    ViolationKind::EmbeddingDimensionMismatch,
                    format!("dimension {} vs {d}", e.len()),
                ),
                _ => {}
            }
        }
        if let Some(root) = root {
            for kf in &demo.keyframes {
                let refs = std::iter::once(&kf.image_ref).chain(kf.embedding_ref.as_ref());
                for rel in refs.filter(|r| !r.is_empty()) {
                    if !root.join(rel).is_file() {
                        report.push(&demo.id, ViolationKind::MissingFile, format!("{rel} not found"));
                    }
                }
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub codec: CodecConfig,
    pub created: String,
    pub source: String,
    pub demos: Vec<String>,
}

/// Immutable, validated demonstration library, ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoLibrary {
    demos: Vec<Demonstration>,
    codec: CodecConfig,
    pub created: String,
    pub source: String,
}

impl DemoLibrary {
    /// Validates and builds a library; any violation is an error.
    pub fn new(
        demos: Vec<Demonstration>,
        codec: CodecConfig,
        created: impl Into<String>,
        source: impl Into<String>,
    ) -> Result<Self, DemoError> {
        let mut demos: Vec<Demonstration> = demos
            .into_iter()
            .map(|mut d| {
                d.embedding = d.embedding.map(l2_normalized);
                d
            })
            .collect();
        let report = validate_all(&demos, &codec, None);
        if !report.is_empty() {
            return Err(DemoError::ValidationFailed(report));
        }
        demos.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { demos, codec, created: created.into(), source: source.into() })
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }

    pub fn codec(&self) -> &CodecConfig {
        &self.codec
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Demonstration> {
        self.demos.binary_search_by(|d| d.id.as_str().cmp(id)).ok().map(|i| &self.demos[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.demos.iter().map(|d| d.id.as_str())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            codec: self.codec,
            created: self.created.clone(),
            source: self.source.clone(),
            demos: self.ids().map(str::to_string).collect(),
        }
    }
}

/// Divides by the L2 norm. Vectors already unit to within a few ulps are
/// returned unchanged so repeated normalization is a fixed point.
pub fn l2_normalized(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() || (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
        return v;
    }
    v.into_iter().map(|x| x / norm).collect()
}

/// Canonical JSON text: sorted keys, two-space indent, trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    let mut s = serde_json::to_string_pretty(&v).expect("json value");
    s.push('\n');
    s
}

fn write_file(path: &Path, text: &str) -> Result<(), DemoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn save_library(lib: &DemoLibrary, dir: &Path) -> Result<(), DemoError> {
    write_file(&dir.join(MANIFEST_FILE), &canonical_json(&lib.manifest()))?;
    for demo in lib.demos() {
        write_file(&dir.join(DEMOS_DIR).join(format!("{}.json", demo.id)), &canonical_json(demo))?;
        if let Some(e) = &demo.embedding {
            write_file(&dir.join(EMBEDDINGS_DIR).join(format!("{}.json", demo.id)), &canonical_json(e))?;
        }
    }
    Ok(())
}

/// On-disk record; skills stay as text until parsed so errors can name the
/// offending entry.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoRecord {
    id: String,
    task_name: String,
    instruction: String,
    keyframes: Vec<KeyframeObservation>,
    actions: Vec<DiscreteAction>,
    skills: Vec<String>,
    #[serde(default)]
    metadata: DemoMetadata,
}

fn malformed(id: &str, field: impl Into<String>, reason: impl fmt::Display) -> DemoError {
    DemoError::MalformedRecord { id: id.to_string(), field: field.into(), reason: reason.to_string() }
}

fn read_demo(dir: &Path, id: &str) -> Result<Demonstration, DemoError> {
    let path = dir.join(DEMOS_DIR).join(format!("{id}.json"));
    let text = fs::read_to_string(&path).map_err(|e| malformed(id, "file", e))?;
    let rec: DemoRecord = serde_json::from_str(&text).map_err(|e| malformed(id, "record", e))?;
    if rec.id != id {
        return Err(malformed(id, "id", format!("record id {:?} differs from manifest", rec.id)));
    }
    let skills = rec
        .skills
        .iter()
        .enumerate()
        .map(|(k, s)| parse_skill(s).map_err(|e| malformed(id, format!("skills[{k}]"), e)))
        .collect::<Result<Vec<_>, _>>()?;
    let emb_path = dir.join(EMBEDDINGS_DIR).join(format!("{id}.json"));
    let embedding = if emb_path.is_file() {
        let text = fs::read_to_string(&emb_path).map_err(io_err(&emb_path))?;
        let raw: Vec<f64> = serde_json::from_str(&text).map_err(|e| malformed(id, "embedding", e))?;
        Some(l2_normalized(raw))
    } else {
        None
    };
    Ok(Demonstration {
        id: rec.id,
        task_name: rec.task_name,
        instruction: rec.instruction,
        keyframes: rec.keyframes,
        actions: rec.actions,
        skills: SkillSequence::new(skills),
        metadata: rec.metadata,
        embedding,
    })
}

/// Reads without validating; used by audits that want the full report.
pub fn read_library_unchecked(dir: &Path) -> Result<(Manifest, Vec<Demonstration>), DemoError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(DemoError::MissingManifest(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| malformed("manifest", "manifest", e))?;
    manifest.codec.validate().map_err(|e| malformed("manifest", "codec", e))?;
    let demos = manifest.demos.iter().map(|id| read_demo(dir, id)).collect::<Result<Vec<_>, _>>()?;
    Ok((manifest, demos))
}

pub fn load_library(dir: &Path) -> Result<DemoLibrary, DemoError> {
    let (manifest, demos) = read_library_unchecked(dir)?;
    let report = validate_all(&demos, &manifest.codec, Some(dir));
    if !report.is_empty() {
        return Err(DemoError::ValidationFailed(report));
    }
    DemoLibrary::new(demos, manifest.codec, manifest.created, manifest.source)
}
