//! Offline annotation: segment raw trajectories at keyframes, label each
//! segment with an atomic skill via a pluggable annotator, enforce the
//! gripper constraints and align labels with discrete actions.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode_action, CodecConfig, CodecError, ContinuousControl, DiscreteAction};
use crate::demo::{
    keyframe_positions, DemoError, DemoMetadata, Demonstration, KeyframeObservation, TrajectoryFrame,
    GRIPPER_CLOSED, GRIPPER_OPEN,
};
use crate::providers::{image_data_uri, ChatMessage, ChatModel, ContentPart, ImageUrl, ProviderError};
use crate::skill::{
    normalize_skill, parse_skill, SkillError, SkillLabel, SkillSequence, GRASP, MOVE, RELEASE,
};

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("annotator unavailable for {demo} segment {segment}: {source}")]
    AnnotatorUnavailable {
        demo: String,
        segment: usize,
        #[source]
        source: ProviderError,
    },
    #[error("no usable label for {demo} segment {segment}: scene has no objects")]
    UnparseableAnnotation { demo: String, segment: usize },
    #[error("{label} must become {verb} but none of its arguments is movable")]
    NoMovableArgument { label: String, verb: &'static str },
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error("episode {id}: {reason}")]
    Episode { id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub start_image_ref: PathBuf,
    pub end_image_ref: PathBuf,
    pub gripper_transition: (u8, u8),
    pub object_names: Vec<String>,
    pub movable_objects: Vec<String>,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorResult {
    pub raw_label_text: String,
    /// Kept for audit only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// Vision-language annotator. `feedback` carries the reason the previous
/// answer was rejected, on the retry.
pub trait Annotator: Send + Sync {
    fn annotate(
        &self,
        req: &AnnotationRequest,
        feedback: Option<&str>,
    ) -> Result<AnnotatorResult, ProviderError>;
}

pub const ANNOTATOR_SYSTEM_PROMPT: &str = "You label one segment of a robot manipulation \
demonstration. You see the start and end keyframe images. Answer with a single atomic skill \
label of the form Verb[object] or Verb[object1, object2], using only the listed object names.";

/// Annotator backed by a chat model; images travel as data URIs.
pub struct ChatAnnotator {
    model: Box<dyn ChatModel>,
}

impl ChatAnnotator {
    pub fn new(model: Box<dyn ChatModel>) -> Self {
        Self { model }
    }
}

impl Annotator for ChatAnnotator {
    fn annotate(
        &self,
        req: &AnnotationRequest,
        feedback: Option<&str>,
    ) -> Result<AnnotatorResult, ProviderError> {
        let (g0, g1) = req.gripper_transition;
        let mut text = format!(
            "Instruction: {}\nObjects: {}\nMovable objects: {}\nGripper: {} -> {}",
            req.instruction,
            req.object_names.join(", "),
            req.movable_objects.join(", "),
            gripper_word(g0),
            gripper_word(g1),
        );
        if let Some(f) = feedback {
            text.push_str(&format!("\nYour previous answer was rejected: {f}"));
        }
        let mut parts = vec![ContentPart::Text { text }];
        for path in [&req.start_image_ref, &req.end_image_ref] {
            parts.push(ContentPart::ImageUrl { image_url: ImageUrl { url: image_data_uri(path)? } });
        }
        let messages =
            [ChatMessage::system(ANNOTATOR_SYSTEM_PROMPT), ChatMessage { role: "user".into(), parts }];
        Ok(AnnotatorResult { raw_label_text: self.model.chat(&messages)?, confidence: None })
    }
}

fn gripper_word(g: u8) -> &'static str {
    if g == GRIPPER_OPEN {
        "open"
    } else {
        "closed"
    }
}

fn forced_verb(transition: (u8, u8)) -> Option<&'static str> {
    match transition {
        (GRIPPER_OPEN, GRIPPER_CLOSED) => Some(GRASP),
        (GRIPPER_CLOSED, GRIPPER_OPEN) => Some(RELEASE),
        _ => None,
    }
}

fn is_movable(obj: &str, movable: &BTreeSet<String>) -> bool {
    movable.iter().any(|m| m.eq_ignore_ascii_case(obj))
}

/// Applies the gripper hard constraints, then [`normalize_skill`].
pub fn constrain_label(
    raw: &SkillLabel,
    transition: (u8, u8),
    movable: &BTreeSet<String>,
) -> Result<SkillLabel, CollectError> {
    let label = match forced_verb(transition) {
        Some(verb) => {
            let arg = raw
                .args()
                .iter()
                .find(|a| is_movable(a, movable))
                .ok_or_else(|| CollectError::NoMovableArgument { label: raw.to_string(), verb })?;
            SkillLabel::from_parts(verb, &[arg])?
        }
        None => raw.clone(),
    };
    let open_throughout = transition == (GRIPPER_OPEN, GRIPPER_OPEN);
    Ok(normalize_skill(&label, movable, open_throughout)?)
}

/// Object for fallback labels: the lexicographically first movable object
/// named in the instruction, else the first movable object, else the first
/// scene object.
pub fn fallback_object(req: &AnnotationRequest) -> Option<String> {
    let instruction = req.instruction.to_lowercase();
    let mut mentioned: Vec<&String> =
        req.movable_objects.iter().filter(|m| instruction.contains(&m.to_lowercase())).collect();
    mentioned.sort();
    mentioned.first().copied().or(req.movable_objects.first()).or(req.object_names.first()).cloned()
}

/// Parses and checks one annotator answer; the error text becomes the
/// retry feedback.
fn accept(text: &str, req: &AnnotationRequest) -> Result<SkillLabel, String> {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty()).ok_or("empty answer")?;
    let raw = parse_skill(line).map_err(|e| e.to_string())?;
    let args = raw
        .args()
        .iter()
        .map(|a| {
            req.object_names
                .iter()
                .find(|o| o.eq_ignore_ascii_case(a))
                .cloned()
                .ok_or_else(|| format!("{a} is not one of the scene objects"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let raw = SkillLabel::new(raw.verb().clone(), args).map_err(|e| e.to_string())?;
    let movable: BTreeSet<String> = req.movable_objects.iter().cloned().collect();
    let label = constrain_label(&raw, req.gripper_transition, &movable).map_err(|e| e.to_string())?;
    if forced_verb(req.gripper_transition).is_none()
        && (label.verb_name() == GRASP || label.verb_name() == RELEASE)
    {
        return Err(format!("{} needs a gripper change but the gripper did not change", label.verb_name()));
    }
    Ok(label)
}

/// How a segment label was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    FirstAttempt,
    Retry,
    Fallback,
}

/// Labels one segment: one retry with feedback, then the gripper-implied
/// fallback.
pub fn annotate_segment(
    annotator: &dyn Annotator,
    req: &AnnotationRequest,
    demo: &str,
    segment: usize,
) -> Result<(SkillLabel, LabelSource), CollectError> {
    let unavailable = |source| CollectError::AnnotatorUnavailable { demo: demo.to_string(), segment, source };
    let first = annotator.annotate(req, None).map_err(unavailable)?;
    let feedback = match accept(&first.raw_label_text, req) {
        Ok(label) => return Ok((label, LabelSource::FirstAttempt)),
        Err(f) => f,
    };
    log::debug!("{demo} segment {segment}: retrying after {feedback}");
    let second = annotator.annotate(req, Some(&feedback)).map_err(unavailable)?;
    if let Ok(label) = accept(&second.raw_label_text, req) {
        return Ok((label, LabelSource::Retry));
    }
    let obj = fallback_object(req)
        .ok_or_else(|| CollectError::UnparseableAnnotation { demo: demo.to_string(), segment })?;
    let verb = forced_verb(req.gripper_transition).unwrap_or(MOVE);
    log::warn!("{demo} segment {segment}: falling back to {verb}[{obj}]");
    Ok((SkillLabel::from_parts(verb, &[&obj])?, LabelSource::Fallback))
}

/// Labels every segment of a demo, in order.
pub fn annotate_segments(
    annotator: &dyn Annotator,
    requests: &[AnnotationRequest],
    demo: &str,
) -> Result<Vec<(SkillLabel, LabelSource)>, CollectError> {
    requests.iter().enumerate().map(|(k, r)| annotate_segment(annotator, r, demo, k)).collect()
}

/// A recorded, unannotated episode as stored in a raw-trajectory directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEpisode {
    pub id: String,
    pub task_name: String,
    pub instruction: String,
    pub objects: BTreeMap<String, [u32; 3]>,
    pub movable_objects: Vec<String>,
    pub frames: Vec<TrajectoryFrame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

fn image_of(ep: &RawEpisode, pos: usize) -> Result<&str, CollectError> {
    ep.frames[pos].image_ref.as_deref().filter(|r| !r.is_empty()).ok_or_else(|| CollectError::Episode {
        id: ep.id.clone(),
        reason: format!("keyframe at step {} has no image", ep.frames[pos].step),
    })
}

/// Annotated `(s_k, a_k)` pairs for an episode: keyframes, a request per
/// segment, and the action that reaches keyframe `k+1`.
pub fn annotate_demo(
    ep: &RawEpisode,
    annotator: &dyn Annotator,
    codec: &CodecConfig,
    velocity_threshold: f64,
    image_root: &Path,
) -> Result<Vec<(SkillLabel, DiscreteAction)>, CollectError> {
    let keys = keyframe_positions(&ep.frames, velocity_threshold)?;
    let object_names: Vec<String> = ep.objects.keys().cloned().collect();
    let requests = keys
        .windows(2)
        .map(|w| {
            Ok(AnnotationRequest {
                start_image_ref: image_root.join(image_of(ep, w[0])?),
                end_image_ref: image_root.join(image_of(ep, w[1])?),
                gripper_transition: (ep.frames[w[0]].gripper_state, ep.frames[w[1]].gripper_state),
                object_names: object_names.clone(),
                movable_objects: ep.movable_objects.clone(),
                instruction: ep.instruction.clone(),
            })
        })
        .collect::<Result<Vec<_>, CollectError>>()?;
    let labels = annotate_segments(annotator, &requests, &ep.id)?;
    keys[1..]
        .iter()
        .zip(labels)
        .map(|(&pos, (label, _))| {
            let f = &ep.frames[pos];
            let control = ContinuousControl {
                position: f.pose.position,
                orientation: f.pose.orientation,
                gripper: f.gripper_state,
            };
            Ok((label, encode_action(&control, codec)?))
        })
        .collect()
}

/// Builds a library record. Image references are rewritten to
/// `images/<id>/<step>.<ext>`; the caller copies the files.
pub fn build_demo(
    ep: &RawEpisode,
    annotator: &dyn Annotator,
    codec: &CodecConfig,
    velocity_threshold: f64,
    image_root: &Path,
) -> Result<Demonstration, CollectError> {
    let keys = keyframe_positions(&ep.frames, velocity_threshold)?;
    if keys.len() < 2 {
        return Err(CollectError::Episode {
            id: ep.id.clone(),
            reason: "a single keyframe has no segments".into(),
        });
    }
    let pairs = annotate_demo(ep, annotator, codec, velocity_threshold, image_root)?;
    let keyframes = keys
        .iter()
        .map(|&pos| {
            let f = &ep.frames[pos];
            Ok(KeyframeObservation {
                step: f.step,
                image_ref: library_image_ref(&ep.id, f.step, image_of(ep, pos)?),
                gripper_state: f.gripper_state,
                embedding_ref: None,
            })
        })
        .collect::<Result<Vec<_>, CollectError>>()?;
    let (skills, actions): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(Demonstration {
        id: ep.id.clone(),
        task_name: ep.task_name.clone(),
        instruction: ep.instruction.clone(),
        keyframes,
        actions,
        skills: SkillSequence::new(skills),
        metadata: DemoMetadata {
            objects: ep.objects.clone(),
            movable_objects: ep.movable_objects.clone(),
            extra: BTreeMap::new(),
        },
        embedding: ep.embedding.clone().map(crate::demo::l2_normalized),
    })
}

pub fn library_image_ref(id: &str, step: u64, source: &str) -> String {
    match Path::new(source).extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("images/{id}/{step}.{ext}"),
        None => format!("images/{id}/{step}"),
    }
}

/// Reads every `*.json` episode under `dir/episodes`, sorted by file name.
pub fn read_episodes(dir: &Path) -> Result<Vec<RawEpisode>, CollectError> {
    let ep_dir = dir.join("episodes");
    let io = |e: std::io::Error| DemoError::Io { path: ep_dir.clone(), source: e };
    let mut paths: Vec<PathBuf> = fs::read_dir(&ep_dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io)?;
            serde_json::from_str(&text)
                .map_err(|e| CollectError::Episode { id: p.display().to_string(), reason: e.to_string() })
        })
        .collect()
}

/// Annotates episodes concurrently; the output keeps input order.
pub fn collect_episodes(
    episodes: &[RawEpisode],
    annotator: &dyn Annotator,
    codec: &CodecConfig,
    velocity_threshold: f64,
    image_root: &Path,
) -> Result<Vec<Demonstration>, CollectError> {
    episodes.par_iter().map(|ep| build_demo(ep, annotator, codec, velocity_threshold, image_root)).collect()
}

/// Copies keyframe images of `ep` into the library layout under `out`.
pub fn copy_keyframe_images(
    ep: &RawEpisode,
    demo: &Demonstration,
    image_root: &Path,
    out: &Path,
) -> Result<(), CollectError> {
    for kf in &demo.keyframes {
        let frame = ep.frames.iter().find(|f| f.step == kf.step);
        let Some(src) = frame.and_then(|f| f.image_ref.as_deref()) else {
            continue;
        };
        let dst = out.join(&kf.image_ref);
        let io = |e| DemoError::Io { path: dst.clone(), source: e };
        if let Some(parent) = dst.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        fs::copy(image_root.join(src), &dst).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Verb counts, descending, ties by name.
    pub verbs: Vec<(String, usize)>,
    /// Canonical label counts, descending, ties by label.
    pub labels: Vec<(String, usize)>,
    pub total_segments: usize,
}

fn sorted_counts(counts: BTreeMap<String, usize>) -> Vec<(String, usize)> {
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

pub fn corpus_stats<'a>(demos: impl IntoIterator<Item = &'a Demonstration>) -> CorpusStats {
    let mut verbs = BTreeMap::new();
    let mut labels = BTreeMap::new();
    let mut total = 0;
    for label in demos.into_iter().flat_map(|d| d.skills.iter()) {
        *verbs.entry(label.verb_name().to_string()).or_insert(0) += 1;
        *labels.entry(label.to_string()).or_insert(0) += 1;
        total += 1;
    }
    CorpusStats { verbs: sorted_counts(verbs), labels: sorted_counts(labels), total_segments: total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Quaternion;
    use crate::demo::Pose;
    use proptest::prelude::*;
    use std::sync::Mutex;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn label(s: &str) -> SkillLabel {
        parse_skill(s).unwrap()
    }

    /// Replies from a fixed list in call order, cycling.
    struct Scripted {
        replies: Vec<String>,
        calls: Mutex<Vec<Option<String>>>,
    }

    impl Scripted {
        fn new(replies: &[&str]) -> Self {
            Self { replies: replies.iter().map(|s| s.to_string()).collect(), calls: Mutex::new(Vec::new()) }
        }
    }

    impl Annotator for Scripted {
        fn annotate(
            &self,
            _req: &AnnotationRequest,
            feedback: Option<&str>,
        ) -> Result<AnnotatorResult, ProviderError> {
            let mut calls = self.calls.lock().unwrap();
            let n = calls.len();
            calls.push(feedback.map(str::to_string));
            Ok(AnnotatorResult {
                raw_label_text: self.replies[n % self.replies.len()].clone(),
                confidence: None,
            })
        }
    }

    struct Down;

    impl Annotator for Down {
        fn annotate(&self, _: &AnnotationRequest, _: Option<&str>) -> Result<AnnotatorResult, ProviderError> {
            Err(ProviderError::Transport { attempts: 3, message: "connection refused".into() })
        }
    }

    fn request(transition: (u8, u8)) -> AnnotationRequest {
        AnnotationRequest {
            start_image_ref: "a.png".into(),
            end_image_ref: "b.png".into(),
            gripper_transition: transition,
            object_names: vec!["cup".into(), "plate".into(), "table".into()],
            movable_objects: vec!["cup".into(), "plate".into()],
            instruction: "put the plate under the cup".into(),
        }
    }

    #[test]
    fn constraint_examples() {
        let movable = set(&["cup"]);
        assert_eq!(constrain_label(&label("Move[cup]"), (1, 0), &movable).unwrap(), label("Grasp[cup]"));
        assert_eq!(
            constrain_label(&label("Place[cup, plate]"), (0, 1), &movable).unwrap(),
            label("Release[cup]")
        );
        assert_eq!(constrain_label(&label("Reach[cup]"), (1, 1), &movable).unwrap(), label("Reach[cup]"));
        assert!(matches!(
            constrain_label(&label("Move[plate]"), (1, 0), &movable),
            Err(CollectError::NoMovableArgument { verb: "Grasp", .. })
        ));
        // Relational with the gripper open the whole segment.
        assert_eq!(
            constrain_label(&label("Place[plate, cup]"), (1, 1), &movable).unwrap(),
            label("Move[cup]")
        );
    }

    #[test]
    fn unparseable_answer_falls_back_after_one_retry() {
        let ann = Scripted::new(&["grasp the cup"]);
        let (l, src) = annotate_segment(&ann, &request((1, 0)), "d", 0).unwrap();
        // "cup" and "plate" are both in the instruction; "cup" sorts first.
        assert_eq!(l, label("Grasp[cup]"));
        assert_eq!(src, LabelSource::Fallback);
        let calls = ann.calls.lock().unwrap();
        assert_eq!(calls.len(), 2);
        assert!(calls[0].is_none());
        assert!(calls[1].as_deref().unwrap().contains("malformed"));
    }

    #[test]
    fn retry_can_recover() {
        let ann = Scripted::new(&["Push[mug]", "Push[Plate]"]);
        let (l, src) = annotate_segment(&ann, &request((1, 1)), "d", 0).unwrap();
        assert_eq!(l, label("Push[plate]"));
        assert_eq!(src, LabelSource::Retry);
        assert!(ann.calls.lock().unwrap()[1].as_deref().unwrap().contains("mug"));
    }

    #[test]
    fn grasp_without_gripper_change_is_rejected() {
        let ann = Scripted::new(&["Grasp[cup]"]);
        let (l, src) = annotate_segment(&ann, &request((0, 0)), "d", 0).unwrap();
        assert_eq!(l.verb_name(), MOVE);
        assert_eq!(src, LabelSource::Fallback);
    }

    #[test]
    fn annotator_failure_and_empty_scene() {
        assert!(matches!(
            annotate_segment(&Down, &request((1, 1)), "d", 3),
            Err(CollectError::AnnotatorUnavailable { segment: 3, .. })
        ));
        let mut req = request((1, 0));
        req.object_names.clear();
        req.movable_objects.clear();
        assert!(matches!(
            annotate_segment(&Scripted::new(&["??"]), &req, "d", 0),
            Err(CollectError::UnparseableAnnotation { .. })
        ));
    }

    #[test]
    fn fallback_object_order() {
        let mut req = request((1, 0));
        assert_eq!(fallback_object(&req).as_deref(), Some("cup"));
        req.instruction = "tidy up".into();
        req.movable_objects = vec!["plate".into(), "cup".into()];
        assert_eq!(fallback_object(&req).as_deref(), Some("plate"));
        req.movable_objects.clear();
        assert_eq!(fallback_object(&req).as_deref(), Some("cup"));
    }

    #[test]
    fn four_segment_hard_constraints() {
        let transitions = [(1, 1), (1, 0), (0, 0), (0, 1)];
        let ann = Scripted::new(&["Reach[plate]", "Push[cup]", "Lift[cup]", "Rotate[table]"]);
        let reqs: Vec<_> = transitions.iter().map(|&t| request(t)).collect();
        let labels = annotate_segments(&ann, &reqs, "d").unwrap();
        let verbs: Vec<_> = labels.iter().map(|(l, _)| l.verb_name().to_string()).collect();
        assert_eq!(verbs, ["Reach", "Grasp", "Lift", "Release"]);
    }

    #[test]
    fn canonical_labels_pass_through() {
        let ann = Scripted::new(&["Reach[cup]", "Grasp[cup]", "Place[cup, plate]", "Release[cup]"]);
        let reqs: Vec<_> = [(1, 1), (1, 0), (0, 0), (0, 1)].iter().map(|&t| request(t)).collect();
        let labels = annotate_segments(&ann, &reqs, "d").unwrap();
        let chain = SkillSequence::new(labels.into_iter().map(|(l, _)| l).collect()).render_chain();
        assert_eq!(chain, "Reach[cup] -> Grasp[cup] -> Place[cup, plate] -> Release[cup]");
    }

    fn frame(step: u64, gripper: u8, z: f64, image: bool) -> TrajectoryFrame {
        TrajectoryFrame {
            step,
            joint_velocities: vec![0.5],
            gripper_state: gripper,
            pose: Pose { position: [0.0, 0.105, z], orientation: Quaternion::IDENTITY },
            timestamp: step as f64,
            image_ref: image.then(|| format!("raw/{step}.png")),
        }
    }

    fn episode() -> RawEpisode {
        let frames = (0..10)
            .map(|s| frame(s, if (3..7).contains(&s) { 0 } else { 1 }, 0.1 * s as f64 + 0.005, true))
            .collect();
        RawEpisode {
            id: "ep1".into(),
            task_name: "pick".into(),
            instruction: "pick up the cup".into(),
            objects: BTreeMap::from([("cup".into(), [50, 60, 10]), ("table".into(), [50, 50, 0])]),
            movable_objects: vec!["cup".into()],
            frames,
            embedding: Some(vec![3.0, 4.0]),
        }
    }

    #[test]
    fn build_demo_aligns_labels_and_actions() {
        let ann = Scripted::new(&["Grasp[cup]", "Release[cup]", "Lift[cup]"]);
        let d = build_demo(&episode(), &ann, &CodecConfig::default(), 0.05, Path::new("/raw")).unwrap();
        let steps: Vec<u64> = d.keyframes.iter().map(|k| k.step).collect();
        assert_eq!(steps, [0, 3, 7, 9]);
        assert_eq!(d.skills.render_chain(), "Grasp[cup] -> Release[cup] -> Lift[cup]");
        // Actions reach keyframe k+1: step 3 pose, gripper closed.
        assert_eq!(d.actions[0].to_array(), [50, 60, 30, 36, 36, 36, 0]);
        assert_eq!(d.actions[1].gripper, 1);
        assert_eq!(d.keyframes[1].image_ref, "images/ep1/3.png");
        let report = crate::demo::validate(&d, &CodecConfig::default());
        assert!(report.is_empty(), "{report:?}");
    }

    #[test]
    fn missing_keyframe_image_is_an_episode_error() {
        let mut ep = episode();
        ep.frames[3].image_ref = None;
        let ann = Scripted::new(&["Reach[cup]"]);
        assert!(matches!(
            build_demo(&ep, &ann, &CodecConfig::default(), 0.05, Path::new(".")),
            Err(CollectError::Episode { .. })
        ));
    }

    #[test]
    fn stats_count_and_sort() {
        let ann = Scripted::new(&["Grasp[cup]", "Release[cup]", "Lift[cup]"]);
        let d = build_demo(&episode(), &ann, &CodecConfig::default(), 0.05, Path::new(".")).unwrap();
        let mut e = d.clone();
        e.skills = SkillSequence::parse_all(&["Grasp[cup]", "Move[cup]", "Grasp[cup]"]).unwrap();
        let stats = corpus_stats([&d, &e]);
        assert_eq!(stats.verbs[0], ("Grasp".to_string(), 3));
        assert_eq!(stats.total_segments, 6);
        assert_eq!(stats.verbs.iter().map(|v| v.1).sum::<usize>(), 6);
        assert_eq!(corpus_stats([&e, &d]), stats);
        assert_eq!(corpus_stats([]), CorpusStats::default());
    }

    proptest! {
        #[test]
        fn constrain_is_idempotent(
            verb in prop::sample::select(vec!["Reach", "Move", "Push", "Lift", "Place", "Insert", "Close", "Grasp"]),
            a in prop::sample::select(vec!["cup", "plate", "table"]),
            b in prop::sample::select(vec!["cup", "plate", "table"]),
            g0 in 0u8..2, g1 in 0u8..2,
        ) {
            let raw = if ["Place", "Insert", "Close"].contains(&verb) {
                SkillLabel::from_parts(verb, &[a, b]).unwrap()
            } else {
                SkillLabel::from_parts(verb, &[a]).unwrap()
            };
            let movable = set(&["cup", "plate"]);
            if let Ok(once) = constrain_label(&raw, (g0, g1), &movable) {
                prop_assert_eq!(constrain_label(&once, (g0, g1), &movable).unwrap(), once);
            }
        }
    }
}
