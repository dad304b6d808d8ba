//! Seeded synthetic demonstration libraries and queries.
//!
//! Six common task families share a visual direction; two rare families
//! (the only sources of `Rotate` and `Insert`) sit in an orthogonal
//! subspace. Queries for unseen tasks that need a rare verb therefore rank
//! the rare demos low and leave a coverage gap that only the static
//! library can fill.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{CodecConfig, DiscreteAction};
use crate::demo::{DemoMetadata, Demonstration, KeyframeObservation, GRIPPER_CLOSED, GRIPPER_OPEN};
use crate::skill::{SkillSequence, GRASP, RELEASE};

pub const EMBEDDING_DIM: usize = 16;
/// PNG signature; enough for a file that exists and looks like an image.
pub const PLACEHOLDER_IMAGE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, Copy)]
pub struct TaskFamily {
    pub name: &'static str,
    pub instruction: &'static str,
    pub skills: &'static [&'static str],
    pub movable: &'static [&'static str],
    pub fixed: &'static [&'static str],
    pub rare: bool,
}

pub const FAMILIES: &[TaskFamily] = &[
    TaskFamily {
        name: "pick_cup",
        instruction: "pick up the cup",
        skills: &["Reach[cup]", "Grasp[cup]", "Lift[cup]"],
        movable: &["cup"],
        fixed: &["table"],
        rare: false,
    },
    TaskFamily {
        name: "place_cup",
        instruction: "put the cup on the plate",
        skills: &["Reach[cup]", "Grasp[cup]", "Move[cup]", "Place[cup, plate]", "Release[cup]"],
        movable: &["cup"],
        fixed: &["plate"],
        rare: false,
    },
    TaskFamily {
        name: "push_block",
        instruction: "push the block to the wall",
        skills: &["Reach[block]", "Push[block]"],
        movable: &["block"],
        fixed: &["wall"],
        rare: false,
    },
    TaskFamily {
        name: "open_drawer",
        instruction: "open the drawer",
        skills: &["Reach[handle]", "Grasp[handle]", "Pull[handle]", "Release[handle]"],
        movable: &["handle"],
        fixed: &["drawer"],
        rare: false,
    },
    TaskFamily {
        name: "stack_blocks",
        instruction: "stack the red block on the blue block",
        skills: &[
            "Reach[red_block]",
            "Grasp[red_block]",
            "Lift[red_block]",
            "Place[red_block, blue_block]",
            "Release[red_block]",
        ],
        movable: &["blue_block", "red_block"],
        fixed: &[],
        rare: false,
    },
    TaskFamily {
        name: "close_jar",
        instruction: "close the jar with the lid",
        skills: &["Reach[lid]", "Grasp[lid]", "Move[lid]", "Close[lid, jar]", "Release[lid]"],
        movable: &["lid"],
        fixed: &["jar"],
        rare: false,
    },
    TaskFamily {
        name: "turn_tap",
        instruction: "turn the tap",
        skills: &["Reach[tap]", "Grasp[tap]", "Rotate[tap]", "Release[tap]"],
        movable: &["tap"],
        fixed: &["sink"],
        rare: true,
    },
    TaskFamily {
        name: "insert_peg",
        instruction: "insert the peg into the hole",
        skills: &["Reach[peg]", "Grasp[peg]", "Lift[peg]", "Insert[peg, hole]", "Release[peg]"],
        movable: &["peg"],
        fixed: &["hole"],
        rare: true,
    },
];

/// Unseen query tasks. The first two need a rare verb, the last one is
/// fully covered by common families.
pub const QUERY_FAMILIES: &[TaskFamily] = &[
    TaskFamily {
        name: "turn_valve",
        instruction: "turn the valve",
        skills: &["Reach[valve]", "Grasp[valve]", "Rotate[valve]", "Release[valve]"],
        movable: &["valve"],
        fixed: &["pipe"],
        rare: true,
    },
    TaskFamily {
        name: "plug_socket",
        instruction: "insert the plug into the socket",
        skills: &["Reach[plug]", "Grasp[plug]", "Lift[plug]", "Insert[plug, socket]", "Release[plug]"],
        movable: &["plug"],
        fixed: &["socket"],
        rare: true,
    },
    TaskFamily {
        name: "lift_mug",
        instruction: "lift the mug",
        skills: &["Reach[mug]", "Grasp[mug]", "Lift[mug]"],
        movable: &["mug"],
        fixed: &["shelf"],
        rare: false,
    },
];

fn family_index(name: &str) -> usize {
    FAMILIES.iter().position(|f| f.name == name).unwrap_or(0)
}

/// Common families: shared axis 0 plus a family axis. Rare families: their
/// own axes only.
fn embedding(rng: &mut ChaCha8Rng, family: usize, rare: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.gen_range(-0.02..0.02)).collect();
    if rare {
        v[8 + family % 8] += 1.0;
    } else {
        v[0] += 1.0;
        v[1 + family % 7] += 0.4;
    }
    crate::demo::l2_normalized(v)
}

fn scene(rng: &mut ChaCha8Rng, f: &TaskFamily, cfg: &CodecConfig) -> BTreeMap<String, [u32; 3]> {
    let hi = cfg.bins_per_axis - 1;
    f.movable
        .iter()
        .chain(f.fixed)
        .map(|o| {
            let p = [rng.gen_range(20..=hi - 20), rng.gen_range(20..=hi - 20), rng.gen_range(0..=10)];
            (o.to_string(), p)
        })
        .collect()
}

/// Actions that walk the skill chain over the scene: each target is the
/// first argument's voxel, lifted for Lift/Move, with a yaw turn for Rotate.
fn actions_for(
    rng: &mut ChaCha8Rng,
    skills: &SkillSequence,
    objects: &BTreeMap<String, [u32; 3]>,
    cfg: &CodecConfig,
) -> (Vec<DiscreteAction>, Vec<u8>) {
    let hi = cfg.bins_per_axis - 1;
    let rot_hi = cfg.rotation_bins() - 1;
    let neutral = cfg.rotation_bins() / 2;
    let mut gripper = GRIPPER_OPEN;
    let mut states = vec![gripper];
    let mut yaw = neutral;
    let actions = skills
        .iter()
        .map(|s| {
            let base = objects.get(&s.args()[0]).copied().unwrap_or([hi / 2, hi / 2, 0]);
            let lift = match s.verb_name() {
                "Lift" | "Move" => 25,
                "Reach" => 8,
                _ => 2,
            };
            match s.verb_name() {
                GRASP => gripper = GRIPPER_CLOSED,
                RELEASE => gripper = GRIPPER_OPEN,
                "Rotate" => yaw = (yaw + 18).min(rot_hi),
                _ => {}
            }
            states.push(gripper);
            let jitter = rng.gen_range(0..=1);
            DiscreteAction::new([
                base[0],
                base[1],
                (base[2] + lift + jitter).min(hi),
                neutral,
                neutral,
                yaw,
                u32::from(gripper),
            ])
        })
        .collect();
    (actions, states)
}

fn demo_from_family(
    rng: &mut ChaCha8Rng,
    fi: usize,
    f: &TaskFamily,
    id: String,
    cfg: &CodecConfig,
) -> Demonstration {
    let skills = SkillSequence::parse_all(f.skills).expect("family skills parse");
    let objects = scene(rng, f, cfg);
    let (actions, states) = actions_for(rng, &skills, &objects, cfg);
    let keyframes = states
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            let step = k as u64 * 10;
            KeyframeObservation {
                step,
                image_ref: format!("images/{id}/{step}.png"),
                gripper_state: g,
                embedding_ref: None,
            }
        })
        .collect();
    Demonstration {
        id,
        task_name: f.name.to_string(),
        instruction: f.instruction.to_string(),
        keyframes,
        actions,
        skills,
        metadata: DemoMetadata {
            objects,
            movable_objects: f.movable.iter().map(|s| s.to_string()).collect(),
            extra: BTreeMap::new(),
        },
        embedding: Some(embedding(rng, fi, f.rare)),
    }
}

/// `counts[i]` demos of `FAMILIES[i]`, ids `<family>-<nn>`.
pub fn generate_demos(seed: u64, counts: &[usize], cfg: &CodecConfig) -> Vec<Demonstration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut demos = Vec::new();
    for (fi, (&n, f)) in counts.iter().zip(FAMILIES).enumerate() {
        for j in 0..n {
            demos.push(demo_from_family(&mut rng, fi, f, format!("{}-{j:02}", f.name), cfg));
        }
    }
    demos
}

/// `n` demos spread round-robin over all families.
pub fn random_library_demos(seed: u64, n: usize, cfg: &CodecConfig) -> Vec<Demonstration> {
    let mut counts = vec![0; FAMILIES.len()];
    for i in 0..n {
        counts[i % FAMILIES.len()] += 1;
    }
    generate_demos(seed, &counts, cfg)
}

/// 30 demos: 26 common, two of each rare family.
pub const PLANTED_GAP_COUNTS: [usize; 8] = [5, 5, 4, 4, 4, 4, 2, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticQuery {
    pub id: String,
    pub task_name: String,
    pub instruction: String,
    pub objects: BTreeMap<String, [u32; 3]>,
    pub gripper_open: bool,
    pub embedding: Vec<f64>,
    /// What a scripted planner answers.
    pub plan: Vec<String>,
    /// What a scripted completer answers; also the oracle.
    pub actions: Vec<DiscreteAction>,
}

impl SyntheticQuery {
    pub fn plan_text(&self) -> String {
        self.plan.join("\n")
    }

    pub fn actions_text(&self) -> String {
        self.actions.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
    }
}

/// `n` queries cycling over [`QUERY_FAMILIES`]. Query embeddings lean
/// towards a common family so the visual score favours common demos.
pub fn generate_queries(seed: u64, n: usize, cfg: &CodecConfig) -> Vec<SyntheticQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..n)
        .map(|i| {
            let f = &QUERY_FAMILIES[i % QUERY_FAMILIES.len()];
            let skills = SkillSequence::parse_all(f.skills).expect("query skills parse");
            let objects = scene(&mut rng, f, cfg);
            let (actions, _) = actions_for(&mut rng, &skills, &objects, cfg);
            let near = family_index(["place_cup", "stack_blocks", "pick_cup"][i % 3]);
            SyntheticQuery {
                id: format!("q{i:03}"),
                task_name: f.name.to_string(),
                instruction: f.instruction.to_string(),
                objects,
                gripper_open: true,
                embedding: embedding(&mut rng, near, false),
                plan: f.skills.iter().map(|s| s.to_string()).collect(),
                actions,
            }
        })
        .collect()
}

/// Writes a placeholder file for every keyframe image under `root`.
pub fn write_placeholder_images(demos: &[Demonstration], root: &Path) -> io::Result<()> {
    for kf in demos.iter().flat_map(|d| &d.keyframes) {
        let path = root.join(&kf.image_ref);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, PLACEHOLDER_IMAGE)?;
    }
    Ok(())
}
