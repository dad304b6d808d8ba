//! Fixtures shared by the persistence and acceptance targets.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use recompose::demo::{load_library, save_library, DemoError, DemoLibrary, ViolationKind};
use recompose::synthetic::write_placeholder_images;
use serde_json::{json, Value};

/// Relative path and bytes of every file under `dir`, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub enum Expect {
    Kind(ViolationKind),
    Malformed(&'static str),
    MissingManifest,
}

pub const TARGET: &str = "place_cup-00";

fn edit_demo(dir: &Path, f: impl FnOnce(&mut Value)) {
    let path = dir.join("demos").join(format!("{TARGET}.json"));
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    f(&mut v);
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn edit_json(path: &Path, f: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

pub type Corruption = (&'static str, Box<dyn Fn(&Path)>, Expect);

pub fn corruptions() -> Vec<Corruption> {
    use Expect::*;
    use ViolationKind as K;
    vec![
        (
            "length mismatch",
            Box::new(|d| {
                edit_demo(d, |v| {
                    v["skills"].as_array_mut().unwrap().pop();
                })
            }),
            Kind(K::LengthMismatch),
        ),
        (
            "keyframe count mismatch",
            Box::new(|d| {
                edit_demo(d, |v| {
                    v["keyframes"].as_array_mut().unwrap().pop();
                })
            }),
            Kind(K::KeyframeCountMismatch),
        ),
        (
            "translation out of range",
            Box::new(|d| edit_demo(d, |v| v["actions"][0][2] = json!(100))),
            Kind(K::TranslationOutOfRange),
        ),
        (
            "rotation out of range",
            Box::new(|d| edit_demo(d, |v| v["actions"][1][5] = json!(72))),
            Kind(K::RotationOutOfRange),
        ),
        (
            "duplicate id",
            Box::new(|d| {
                edit_json(&d.join("manifest.json"), |v| {
                    v["demos"].as_array_mut().unwrap().push(json!(TARGET));
                })
            }),
            Kind(K::DuplicateId),
        ),
        (
            "gripper/skill inconsistency",
            Box::new(|d| edit_demo(d, |v| v["skills"][1] = json!("Move[cup]"))),
            Kind(K::GripperSkillInconsistency),
        ),
        (
            "action gripper disagrees with keyframe",
            Box::new(|d| edit_demo(d, |v| v["actions"][2][6] = json!(1))),
            Kind(K::ActionGripperMismatch),
        ),
        (
            "non-increasing keyframe steps",
            Box::new(|d| edit_demo(d, |v| v["keyframes"][2]["step"] = json!(5))),
            Kind(K::NonIncreasingSteps),
        ),
        (
            "missing image file",
            Box::new(|d| fs::remove_file(d.join(format!("images/{TARGET}/20.png"))).unwrap()),
            Kind(K::MissingFile),
        ),
        (
            "grasp of a fixed object",
            Box::new(|d| edit_demo(d, |v| v["skills"][1] = json!("Grasp[plate]"))),
            Kind(K::NonMovableGrasp),
        ),
        (
            "object not in scene",
            Box::new(|d| edit_demo(d, |v| v["skills"][0] = json!("Reach[ghost]"))),
            Kind(K::UnknownObject),
        ),
        (
            "embedding dimension mismatch",
            Box::new(|d| fs::write(d.join(format!("embeddings/{TARGET}.json")), "[0.6, 0.8]").unwrap()),
            Kind(K::EmbeddingDimensionMismatch),
        ),
        (
            "zero embedding",
            Box::new(|d| {
                let zeros = serde_json::to_string(&vec![0.0; 16]).unwrap();
                fs::write(d.join(format!("embeddings/{TARGET}.json")), zeros).unwrap()
            }),
            Kind(K::DegenerateEmbedding),
        ),
        (
            "empty instruction",
            Box::new(|d| edit_demo(d, |v| v["instruction"] = json!("  "))),
            Kind(K::EmptyInstruction),
        ),
        (
            "unparseable skill label",
            Box::new(|d| edit_demo(d, |v| v["skills"][3] = json!("put cup on plate"))),
            Malformed("skills[3]"),
        ),
        (
            "unknown record field",
            Box::new(|d| edit_demo(d, |v| v["colour"] = json!("red"))),
            Malformed("record"),
        ),
        (
            "missing manifest",
            Box::new(|d| fs::remove_file(d.join("manifest.json")).unwrap()),
            MissingManifest,
        ),
    ]
}

/// Saves `clean`, applies one corruption and checks the loader reports it.
pub fn check_corruption(clean: &DemoLibrary, corrupt: &dyn Fn(&Path), expect: &Expect) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    save_library(clean, dir.path()).map_err(|e| e.to_string())?;
    write_placeholder_images(clean.demos(), dir.path()).map_err(|e| e.to_string())?;
    load_library(dir.path()).map_err(|e| format!("clean copy rejected: {e}"))?;
    corrupt(dir.path());
    let err = match load_library(dir.path()) {
        Ok(_) => return Err("corruption not detected".into()),
        Err(e) => e,
    };
    match (expect, &err) {
        (Expect::Kind(kind), DemoError::ValidationFailed(report)) => {
            if !report.kinds().contains(kind) {
                return Err(format!("expected {kind:?}, got {report:?}"));
            }
            if report.violations.iter().any(|v| v.demo_id != TARGET) {
                return Err(format!("violation blamed on another demo: {report:?}"));
            }
            Ok(())
        }
        (Expect::Malformed(field), DemoError::MalformedRecord { field: f, id, .. })
            if f == field && id == TARGET =>
        {
            Ok(())
        }
        (Expect::MissingManifest, DemoError::MissingManifest(_)) => Ok(()),
        (_, other) => Err(format!("unexpected error {other}")),
    }
}
