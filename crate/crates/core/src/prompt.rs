//! Skill-augmented in-context prompts and action-response parsing.
//!
//! Each demonstration is rendered as
//!
//! ```text
//! Instruction: put the cup on the plate
//! Observation: objects: cup@(40,52,3); plate@(61,50,1); gripper: open
//! Plan: Reach[cup] -> Grasp[cup] -> Place[cup, plate] -> Release[cup]
//! 1. Reach[cup]: [40, 52, 8, 36, 36, 36, 1]
//! 2. Grasp[cup]: [40, 52, 3, 36, 36, 36, 0]
//! ...
//! ```
//!
//! and blocks are separated by a `---` line. The query block has the three
//! header lines only.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecConfig, DiscreteAction};
use crate::demo::{Demonstration, GRIPPER_OPEN};
use crate::skill::SkillSequence;

pub const BLOCK_DELIMITER: &str = "---";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no 7-integer action found in response")]
    NoActionsFound,
    #[error("action {tuple} field {field} value {value} outside [0, {max}]")]
    OutOfRange { tuple: usize, field: &'static str, value: i64, max: u32 },
    #[error("prompt of {len} characters exceeds cap of {limit}")]
    PromptTooLong { len: usize, limit: usize },
}

const SYSTEM_PROMPT: &str = "You control a robot arm by predicting discrete actions. \
Each action is a list of 7 integers [ix, iy, iz, iroll, ipitch, iyaw, g]: three voxel indices \
for the end-effector position, three bins for the roll, pitch and yaw angles, and the gripper \
command (1 = open, 0 = closed).
The demonstrations below show, for each task, the instruction, the observed scene, the skill plan \
and every action annotated with the atomic skill it performs, such as Grasp[cup] or \
Place[cup, plate]. The skill annotations are there to guide your reasoning about what each action \
does and how skills compose into new tasks.
For the final task, output only the action sequence: one 7-integer list per line in execution \
order, with no skill labels and no other text.";

/// Fixed system text stating the output contract.
pub fn build_system_prompt() -> &'static str {
    SYSTEM_PROMPT
}

/// `objects: cup@(40,52,3); plate@(61,50,1); gripper: open`
pub fn scene_state_text(objects: &BTreeMap<String, [u32; 3]>, gripper_open: bool) -> String {
    let objs = if objects.is_empty() {
        "(none)".to_string()
    } else {
        objects.iter().map(|(name, [x, y, z])| format!("{name}@({x},{y},{z})")).collect::<Vec<_>>().join("; ")
    };
    let gripper = if gripper_open { "open" } else { "closed" };
    format!("objects: {objs}; gripper: {gripper}")
}

pub fn demo_scene_text(demo: &Demonstration) -> String {
    scene_state_text(&demo.metadata.objects, demo.initial_gripper().unwrap_or(GRIPPER_OPEN) == GRIPPER_OPEN)
}

fn plan_line(plan: &SkillSequence) -> String {
    if plan.is_empty() {
        "Plan: (none)".to_string()
    } else {
        format!("Plan: {}", plan.render_chain())
    }
}

fn header(instruction: &str, scene: &str, plan: &SkillSequence) -> String {
    format!("Instruction: {}\nObservation: {}\n{}", instruction.trim(), scene.trim(), plan_line(plan))
}

pub fn format_demo(demo: &Demonstration) -> String {
    let mut out = header(&demo.instruction, &demo_scene_text(demo), &demo.skills);
    for (k, (skill, action)) in demo.skills.iter().zip(&demo.actions).enumerate() {
        out.push_str(&format!("\n{}. {skill}: {action}", k + 1));
    }
    out
}

pub fn build_query_block(instruction: &str, scene_state: &str, plan: &SkillSequence) -> String {
    header(instruction, scene_state, plan)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub demo_blocks: Vec<String>,
    pub query_block: String,
    pub total_chars: usize,
}

impl PromptBundle {
    /// User message: demo blocks then the query, separated by `---` lines.
    pub fn user_text(&self) -> String {
        let mut parts: Vec<&str> = self.demo_blocks.iter().map(String::as_str).collect();
        parts.push(&self.query_block);
        parts.join(&format!("\n{BLOCK_DELIMITER}\n"))
    }

    /// The full payload as a single text (system, blank line, user).
    pub fn render(&self) -> String {
        format!("{}\n\n{}\n", self.system_text, self.user_text())
    }
}

/// Dynamic demos first (retrieval order), then coverage demos (fill order).
pub fn assemble_prompt(
    dynamic: &[&Demonstration],
    coverage: &[&Demonstration],
    query_block: String,
    max_chars: Option<usize>,
) -> Result<PromptBundle, PromptError> {
    let mut bundle = PromptBundle {
        system_text: build_system_prompt().to_string(),
        demo_blocks: dynamic.iter().chain(coverage).map(|d| format_demo(d)).collect(),
        query_block,
        total_chars: 0,
    };
    bundle.total_chars = bundle.render().chars().count();
    if let Some(limit) = max_chars {
        if bundle.total_chars > limit {
            return Err(PromptError::PromptTooLong { len: bundle.total_chars, limit });
        }
    }
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipEvent {
    pub tuple: usize,
    pub field: String,
    pub original: i64,
    pub clipped: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub actions: Vec<DiscreteAction>,
    pub clips: Vec<ClipEvent>,
    /// Bracketed groups that were not 7 integers.
    pub skipped: Vec<String>,
}

const FIELDS: [&str; 7] = ["ix", "iy", "iz", "i_roll", "i_pitch", "i_yaw", "g"];

fn bracket_groups() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([^\[\]]*)\]").expect("valid regex"))
}

/// Extracts bracketed 7-integer groups in order of appearance. Values out of
/// range are clipped and recorded; with `strict` they are errors instead.
pub fn parse_action_response(
    text: &str,
    cfg: &CodecConfig,
    strict: bool,
) -> Result<ParsedResponse, PromptError> {
    let maxes = {
        let t = cfg.bins_per_axis - 1;
        let r = cfg.rotation_bins() - 1;
        [t, t, t, r, r, r, 1]
    };
    let mut out = ParsedResponse::default();
    for caps in bracket_groups().captures_iter(text) {
        let inner = &caps[1];
        let values: Option<Vec<i64>> = inner
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<i64>().ok())
            .collect();
        let values = match values {
            Some(v) if v.len() == 7 => v,
            _ => {
                log::debug!("skipping bracket group {:?}", &caps[0]);
                out.skipped.push(caps[0].to_string());
                continue;
            }
        };
        let tuple = out.actions.len();
        let mut clipped = [0u32; 7];
        for (i, (&v, &max)) in values.iter().zip(&maxes).enumerate() {
            let c = v.clamp(0, i64::from(max)) as u32;
            if i64::from(c) != v {
                if strict {
                    return Err(PromptError::OutOfRange { tuple, field: FIELDS[i], value: v, max });
                }
                log::warn!("action {tuple}: {} = {v} clipped to {c}", FIELDS[i]);
                out.clips.push(ClipEvent { tuple, field: FIELDS[i].to_string(), original: v, clipped: c });
            }
            clipped[i] = c;
        }
        out.actions.push(DiscreteAction::new(clipped));
    }
    if out.actions.is_empty() {
        return Err(PromptError::NoActionsFound);
    }
    Ok(out)
}
