//! Capability-aligned task instantiation from metadata graphs: five task
//! families, seeded multiple-choice construction, canonical mixture sampling
//! with per-scene caps, and an oracle answerer that recomputes every key
//! from the graph.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{
    absolute_sector, camera_rotate, default_angular_deadzone, relative_3d, relative_direction,
    reorient_to_object, seam_nearest, LateralSector, R2dLabel, Relation3D, SectorLabel,
    VerticalBand, DEFAULT_LEN_DEADZONE,
};
use crate::graph::{EntityNode, MetadataGraph};
use crate::sphere::{deg_to_rad, wrap_angle, Bfov};
use std::f64::consts::PI;

pub const TASK_SCHEMA_VERSION: u32 = 1;
/// Tasks reference the shared system prompt by id instead of inlining it.
pub const SYSTEM_PROMPT_REF: &str = "pano-system-v1";
pub const OPTION_LETTERS: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];

/// Nodes whose center yaw is within this margin of the +-180 seam anchor
/// seam-continuity items.
pub fn default_seam_margin() -> f64 {
    deg_to_rad(20.0)
}

#[derive(Debug, Error)]
pub enum TaskGenError {
    #[error("mixture ratios sum to {0}, expected 1")]
    RatiosNotNormalized(f64),
    #[error("mixture ratio for {0} is negative")]
    NegativeRatio(String),
    #[error("task {0} references unknown node '{1}'")]
    UnknownNode(String, String),
    #[error("task {0} is malformed: {1}")]
    Malformed(String, String),
    #[error("task file parse error at line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("unsupported schema_version {0} (expected {TASK_SCHEMA_VERSION})")]
    SchemaVersion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    Semantic,
    Angular,
    Refframe,
    Depth3d,
    ErpProperty,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 5] = [
        TaskFamily::Semantic,
        TaskFamily::Angular,
        TaskFamily::Refframe,
        TaskFamily::Depth3d,
        TaskFamily::ErpProperty,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskFamily::Semantic => "semantic",
            TaskFamily::Angular => "angular",
            TaskFamily::Refframe => "refframe",
            TaskFamily::Depth3d => "depth3d",
            TaskFamily::ErpProperty => "erp_property",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOperator {
    Identification,
    AttributeQa,
    Existence,
    Counting,
    SceneCaptioning,
    AbsoluteDirection,
    AngularCenter,
    AngularFootprint,
    ReferringGrounding,
    RelativeDirection,
    CameraRotation,
    Reorientation,
    ObserverDistance,
    DistanceOrdering,
    RelativePosition3d,
    Compound3d,
    SeamContinuity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Choice,
    Bfov,
    Direction,
    Text,
}

/// One generated instruction/QA item. `answer` is the option letter for
/// choice items and the literal value string otherwise. `params` carries the
/// operator-specific inputs needed to recompute the key from the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub family: TaskFamily,
    pub operator: TaskOperator,
    pub prompt: String,
    pub answer_kind: AnswerKind,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bfov_deg: Option<[f64; 4]>,
    pub panorama_id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<String>,
    pub system_prompt_ref: String,
}

/// Target mixture over families plus sampling controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSpec {
    /// (family, target ratio); ratios must sum to 1
    pub ratios: Vec<(TaskFamily, f64)>,
    /// max items one panorama may contribute per family
    pub per_scene_cap: Option<usize>,
    pub total: usize,
    pub seed: u64,
}

impl MixtureSpec {
    /// Default family mixture used by the benchmark builds.
    pub fn canonical(total: usize, seed: u64) -> Self {
        Self {
            ratios: vec![
                (TaskFamily::Semantic, 0.368),
                (TaskFamily::Angular, 0.111),
                (TaskFamily::Refframe, 0.275),
                (TaskFamily::Depth3d, 0.244),
                (TaskFamily::ErpProperty, 0.002),
            ],
            per_scene_cap: None,
            total,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TaskGenError> {
        for (f, r) in &self.ratios {
            if *r < 0.0 {
                return Err(TaskGenError::NegativeRatio(f.name().to_string()));
            }
        }
        let sum: f64 = self.ratios.iter().map(|(_, r)| r).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TaskGenError::RatiosNotNormalized(sum));
        }
        Ok(())
    }
}

fn normalize_option(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Category vocabulary used for hard negatives when the scene itself cannot
/// supply enough distinct distractors.
const CATEGORY_VOCAB: [&str; 16] = [
    "chair", "table", "sofa", "bed", "window", "door", "lamp", "plant", "television", "sink",
    "mirror", "shelf", "rug", "painting", "refrigerator", "cabinet",
];

const ATTRIBUTE_VOCAB: [&str; 12] = [
    "red", "blue", "green", "white", "black", "wooden", "metal", "leather", "round", "square",
    "large", "small",
];

fn sector_vocab() -> Vec<String> {
    let mut v = Vec::new();
    for lat in LateralSector::ALL {
        for band in [VerticalBand::Level, VerticalBand::Above, VerticalBand::Below] {
            v.push(SectorLabel { lateral: lat, vertical: band }.name());
        }
    }
    v
}

fn r2d_vocab() -> Vec<String> {
    let mut v = Vec::new();
    for lat in [-1i8, 0, 1] {
        for vert in [-1i8, 0, 1] {
            v.push(R2dLabel { lateral: lat, vertical: vert }.name());
        }
    }
    v
}

fn r3d_vocab(compact: bool) -> Vec<String> {
    let mut v = Vec::new();
    for depth in [-1i8, 0, 1] {
        for lat in [-1i8, 0, 1] {
            for vert in [-1i8, 0, 1] {
                let r = Relation3D { lateral: lat, vertical: vert, depth_axis: depth };
                v.push(if compact { r.compact() } else { r.name() });
            }
        }
    }
    v.sort();
    v.dedup();
    v
}

/// Assemble a 4-option multiple choice: key plus distinct distractors from
/// `pool`, key position uniformly randomized. Returns (options, key letter).
fn make_choice(
    rng: &mut ChaCha8Rng,
    key: &str,
    pool: &[String],
    n_options: usize,
) -> Option<(Vec<String>, String)> {
    let key_norm = normalize_option(key);
    let mut distractors: Vec<String> = pool
        .iter()
        .filter(|p| normalize_option(p) != key_norm)
        .cloned()
        .collect();
    distractors.sort();
    distractors.dedup_by_key(|d| normalize_option(d));
    if distractors.len() + 1 < n_options.min(2) {
        return None;
    }
    distractors.shuffle(rng);
    distractors.truncate(n_options.saturating_sub(1));
    let mut options = distractors;
    options.push(key.to_string());
    options.shuffle(rng);
    let idx = options.iter().position(|o| normalize_option(o) == key_norm).unwrap();
    Some((options, OPTION_LETTERS[idx].to_string()))
}

fn fmt_options(options: &[String]) -> String {
    options
        .iter()
        .enumerate()
        .map(|(i, o)| format!("{}. {}", OPTION_LETTERS[i], o))
        .collect::<Vec<_>>()
        .join("\n")
}

fn bfov_deg_of(b: &Bfov) -> [f64; 4] {
    [
        b.center().yaw_deg(),
        b.center().pitch_deg(),
        crate::sphere::rad_to_deg(b.x_fov()),
        crate::sphere::rad_to_deg(b.y_fov()),
    ]
}

fn center_text(b: &Bfov) -> String {
    format!("[{:.2}, {:.2}]", b.center().yaw_deg(), b.center().pitch_deg())
}

fn node_ref(n: &EntityNode) -> String {
    if n.phrase.is_empty() {
        format!("the {} at {}", n.semantics, n.footprint.to_text())
    } else {
        n.phrase.clone()
    }
}

struct TaskBuilder<'a> {
    g: &'a MetadataGraph,
    items: Vec<TaskInstance>,
    counter: usize,
}

impl<'a> TaskBuilder<'a> {
    fn new(g: &'a MetadataGraph) -> Self {
        Self { g, items: Vec::new(), counter: 0 }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        family: TaskFamily,
        operator: TaskOperator,
        prompt: String,
        answer_kind: AnswerKind,
        answer: String,
        options: Vec<String>,
        bfov_deg: Option<[f64; 4]>,
        node_ids: Vec<String>,
        params: Vec<String>,
    ) {
        let id = format!("{}-{}-{:04}", self.g.panorama_id, family.name(), self.counter);
        self.counter += 1;
        self.items.push(TaskInstance {
            id,
            family,
            operator,
            prompt,
            answer_kind,
            answer,
            options,
            bfov_deg,
            panorama_id: self.g.panorama_id.clone(),
            node_ids,
            params,
            system_prompt_ref: SYSTEM_PROMPT_REF.to_string(),
        });
    }
}

fn category_census(g: &MetadataGraph) -> Vec<(String, usize)> {
    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    for n in &g.nodes {
        *counts.entry(n.semantics.clone()).or_default() += 1;
    }
    counts.into_iter().collect()
}

fn scene_caption(g: &MetadataGraph) -> String {
    let dz = default_angular_deadzone();
    let parts: Vec<String> = g
        .nodes
        .iter()
        .map(|n| {
            format!("a {} to the {}", n.semantics, absolute_sector(n.footprint.center(), dz).name())
        })
        .collect();
    format!("This panorama contains {}.", parts.join(", "))
}

/// Entity recognition items: identification, attribute QA, existence with
/// hard negatives, counting, and a template scene caption.
pub fn gen_semantic(g: &MetadataGraph, seed: u64) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = TaskBuilder::new(g);
    let categories: Vec<String> = {
        let mut v: Vec<String> = g.nodes.iter().map(|n| n.semantics.clone()).collect();
        v.extend(CATEGORY_VOCAB.iter().map(|s| s.to_string()));
        v.sort();
        v.dedup();
        v
    };
    let census = category_census(g);
    for n in &g.nodes {
        if let Some((options, key)) = make_choice(&mut rng, &n.semantics, &categories, 4) {
            b.push(
                TaskFamily::Semantic,
                TaskOperator::Identification,
                format!(
                    "What is the entity highlighted by the BFOV {}?\n{}",
                    n.footprint.to_text(),
                    fmt_options(&options)
                ),
                AnswerKind::Choice,
                key,
                options,
                Some(bfov_deg_of(&n.footprint)),
                vec![n.id.clone()],
                vec![],
            );
        }
        if let Some(attr) = n.attributes.first() {
            let mut pool: Vec<String> = g.nodes.iter().flat_map(|m| m.attributes.clone()).collect();
            pool.extend(ATTRIBUTE_VOCAB.iter().map(|s| s.to_string()));
            if let Some((options, key)) = make_choice(&mut rng, attr, &pool, 4) {
                b.push(
                    TaskFamily::Semantic,
                    TaskOperator::AttributeQa,
                    format!(
                        "Which attribute describes {}?\n{}",
                        node_ref(n),
                        fmt_options(&options)
                    ),
                    AnswerKind::Choice,
                    key,
                    options,
                    Some(bfov_deg_of(&n.footprint)),
                    vec![n.id.clone()],
                    vec![attr.clone()],
                );
            }
        }
    }
    // existence: one present and one absent category
    let present: Vec<&str> = census.iter().map(|(c, _)| c.as_str()).collect();
    let mut absent: Vec<&str> =
        CATEGORY_VOCAB.iter().copied().filter(|c| !present.contains(c)).collect();
    if let Some(cat) = present.first() {
        let (options, key) = yes_no_choice(&mut rng, true);
        b.push(
            TaskFamily::Semantic,
            TaskOperator::Existence,
            format!("Is there a {} in this panorama?\n{}", cat, fmt_options(&options)),
            AnswerKind::Choice,
            key,
            options,
            None,
            vec![],
            vec![cat.to_string()],
        );
    }
    if !absent.is_empty() {
        let cat = absent.remove(rng.gen_range(0..absent.len()));
        let (options, key) = yes_no_choice(&mut rng, false);
        b.push(
            TaskFamily::Semantic,
            TaskOperator::Existence,
            format!("Is there a {} in this panorama?\n{}", cat, fmt_options(&options)),
            AnswerKind::Choice,
            key,
            options,
            None,
            vec![],
            vec![cat.to_string()],
        );
    }
    // counting over each present category
    for (cat, count) in &census {
        let key = count.to_string();
        let pool: Vec<String> = (count.saturating_sub(2).max(0)..count + 4)
            .filter(|c| c != count)
            .map(|c| c.to_string())
            .collect();
        if let Some((options, letter)) = make_choice(&mut rng, &key, &pool, 4) {
            b.push(
                TaskFamily::Semantic,
                TaskOperator::Counting,
                format!("How many {}(s) are in this panorama?\n{}", cat, fmt_options(&options)),
                AnswerKind::Choice,
                letter,
                options,
                None,
                vec![],
                vec![cat.clone()],
            );
        }
    }
    if !g.nodes.is_empty() {
        let caption = scene_caption(g);
        b.push(
            TaskFamily::Semantic,
            TaskOperator::SceneCaptioning,
            "List the entities in this panorama with their directions.".to_string(),
            AnswerKind::Text,
            caption,
            vec![],
            None,
            g.nodes.iter().map(|n| n.id.clone()).collect(),
            vec![],
        );
    }
    b.items
}

fn yes_no_choice(rng: &mut ChaCha8Rng, yes: bool) -> (Vec<String>, String) {
    let mut options = vec!["yes".to_string(), "no".to_string()];
    options.shuffle(rng);
    let key = if yes { "yes" } else { "no" };
    let idx = options.iter().position(|o| o == key).unwrap();
    (options, OPTION_LETTERS[idx].to_string())
}

/// BFOV-style grounding items: absolute direction, angular center, angular
/// footprint, referring grounding.
pub fn gen_angular(g: &MetadataGraph, seed: u64) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = TaskBuilder::new(g);
    let dz = default_angular_deadzone();
    let sectors = sector_vocab();
    for n in &g.nodes {
        let key = absolute_sector(n.footprint.center(), dz).name();
        if let Some((options, letter)) = make_choice(&mut rng, &key, &sectors, 4) {
            b.push(
                TaskFamily::Angular,
                TaskOperator::AbsoluteDirection,
                format!("In which direction is {}?\n{}", node_ref(n), fmt_options(&options)),
                AnswerKind::Choice,
                letter,
                options,
                Some(bfov_deg_of(&n.footprint)),
                vec![n.id.clone()],
                vec![],
            );
        }
        b.push(
            TaskFamily::Angular,
            TaskOperator::AngularCenter,
            format!("Give the angular center [yaw, pitch] in degrees of {}.", node_ref(n)),
            AnswerKind::Direction,
            center_text(&n.footprint),
            vec![],
            Some(bfov_deg_of(&n.footprint)),
            vec![n.id.clone()],
            vec![],
        );
        b.push(
            TaskFamily::Angular,
            TaskOperator::AngularFootprint,
            format!("Give the BFOV [yaw, pitch, x_fov, y_fov] in degrees of {}.", node_ref(n)),
            AnswerKind::Bfov,
            n.footprint.to_text(),
            vec![],
            Some(bfov_deg_of(&n.footprint)),
            vec![n.id.clone()],
            vec![],
        );
        if !n.phrase.is_empty() {
            b.push(
                TaskFamily::Angular,
                TaskOperator::ReferringGrounding,
                format!("Locate \"{}\" and answer with its BFOV.", n.phrase),
                AnswerKind::Bfov,
                n.footprint.to_text(),
                vec![],
                Some(bfov_deg_of(&n.footprint)),
                vec![n.id.clone()],
                vec![],
            );
        }
    }
    b.items
}

/// Observer-heading items: relative direction between entity pairs, camera
/// rotation updates, object-conditioned reorientation.
pub fn gen_refframe(g: &MetadataGraph, seed: u64) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = TaskBuilder::new(g);
    if g.nodes.len() < 2 {
        return b.items;
    }
    let dz = default_angular_deadzone();
    let by_id = |id: &str| g.nodes.iter().find(|n| n.id == id).unwrap();
    let vocab = r2d_vocab();
    let sectors = sector_vocab();
    for e in &g.edges {
        let from = by_id(&e.from_id);
        let to = by_id(&e.to_id);
        let key =
            relative_direction(from.footprint.center(), to.footprint.center(), dz).name();
        if let Some((options, letter)) = make_choice(&mut rng, &key, &vocab, 4) {
            b.push(
                TaskFamily::Refframe,
                TaskOperator::RelativeDirection,
                format!(
                    "From your viewpoint, where is {} relative to {}?\n{}",
                    node_ref(from),
                    node_ref(to),
                    fmt_options(&options)
                ),
                AnswerKind::Choice,
                letter,
                options,
                None,
                vec![from.id.clone(), to.id.clone()],
                vec![],
            );
        }
    }
    for n in &g.nodes {
        let turn_deg: f64 = *[45.0, 90.0, 135.0, 180.0].choose(&mut rng).unwrap()
            * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let rotated = camera_rotate(n.footprint.center(), deg_to_rad(turn_deg));
        let key = absolute_sector(rotated, dz).name();
        let side = if turn_deg >= 0.0 { "right" } else { "left" };
        if let Some((options, letter)) = make_choice(&mut rng, &key, &sectors, 4) {
            b.push(
                TaskFamily::Refframe,
                TaskOperator::CameraRotation,
                format!(
                    "After you turn {} by {:.0} degrees, in which direction is {}?\n{}",
                    side,
                    turn_deg.abs(),
                    node_ref(n),
                    fmt_options(&options)
                ),
                AnswerKind::Choice,
                letter,
                options,
                None,
                vec![n.id.clone()],
                vec![format!("{turn_deg}")],
            );
        }
    }
    for e in &g.edges {
        let front = by_id(&e.from_id);
        let target = by_id(&e.to_id);
        let sep = crate::sphere::angular_distance(
            front.footprint.center(),
            target.footprint.center(),
        );
        // coincident pairs make a degenerate "front" answer
        if sep <= dz {
            continue;
        }
        let reoriented = reorient_to_object(target.footprint.center(), front.footprint.center());
        let key = absolute_sector(reoriented, dz).name();
        if let Some((options, letter)) = make_choice(&mut rng, &key, &sectors, 4) {
            b.push(
                TaskFamily::Refframe,
                TaskOperator::Reorientation,
                format!(
                    "Suppose you turn to face {}. In which direction is {} then?\n{}",
                    node_ref(front),
                    node_ref(target),
                    fmt_options(&options)
                ),
                AnswerKind::Choice,
                letter,
                options,
                None,
                vec![front.id.clone(), target.id.clone()],
                vec![],
            );
        }
    }
    b.items
}

/// Metric items over nodes with depth: closest entity, distance ordering,
/// pairwise 3D relation, compound multi-axis relation. Returns items plus
/// notices for graphs where depth is missing.
pub fn gen_depth3d(g: &MetadataGraph, seed: u64) -> (Vec<TaskInstance>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = TaskBuilder::new(g);
    let mut notices = Vec::new();
    let with_depth: Vec<&EntityNode> =
        g.nodes.iter().filter(|n| n.distance.is_some()).collect();
    if with_depth.len() < 2 {
        notices.push(format!(
            "panorama {}: fewer than 2 nodes with depth, no depth3d items",
            g.panorama_id
        ));
        return (b.items, notices);
    }
    // closest entity
    let closest = with_depth
        .iter()
        .min_by(|p, q| {
            p.distance
                .unwrap()
                .partial_cmp(&q.distance.unwrap())
                .unwrap()
                .then_with(|| p.id.cmp(&q.id))
        })
        .unwrap();
    let pool: Vec<String> = with_depth.iter().map(|n| node_ref(n)).collect();
    if let Some((options, letter)) = make_choice(&mut rng, &node_ref(closest), &pool, 4) {
        b.push(
            TaskFamily::Depth3d,
            TaskOperator::ObserverDistance,
            format!("Which entity is closest to you?\n{}", fmt_options(&options)),
            AnswerKind::Choice,
            letter,
            options,
            None,
            with_depth.iter().map(|n| n.id.clone()).collect(),
            vec![],
        );
    }
    // distance ordering over a sampled triple
    if with_depth.len() >= 3 {
        let mut idx: Vec<usize> = (0..with_depth.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(3);
        idx.sort();
        let triple: Vec<&EntityNode> = idx.iter().map(|&i| with_depth[i]).collect();
        let mut order = triple.clone();
        order.sort_by(|p, q| {
            p.distance
                .unwrap()
                .partial_cmp(&q.distance.unwrap())
                .unwrap()
                .then_with(|| p.id.cmp(&q.id))
        });
        let fmt_perm =
            |perm: &[&EntityNode]| perm.iter().map(|n| node_ref(n)).collect::<Vec<_>>().join(" < ");
        let key = fmt_perm(&order);
        let mut perms: Vec<String> = Vec::new();
        permutations(&triple, &mut |perm| perms.push(fmt_perm(perm)));
        if let Some((options, letter)) = make_choice(&mut rng, &key, &perms, 4) {
            b.push(
                TaskFamily::Depth3d,
                TaskOperator::DistanceOrdering,
                format!(
                    "Order these entities from nearest to farthest.\n{}",
                    fmt_options(&options)
                ),
                AnswerKind::Choice,
                letter,
                options,
                None,
                triple.iter().map(|n| n.id.clone()).collect(),
                vec![],
            );
        }
    }
    // pairwise and compound 3D relations over graph edges with depth
    let by_id = |id: &str| g.nodes.iter().find(|n| n.id == id).unwrap();
    let vocab = r3d_vocab(false);
    let compound_vocab: Vec<String> = r3d_vocab(true)
        .into_iter()
        .filter(|s| s.matches('-').count() >= 1 && s != "co-located")
        .collect();
    for e in &g.edges {
        let a = by_id(&e.from_id);
        let bb = by_id(&e.to_id);
        if a.distance.is_none() || bb.distance.is_none() {
            continue;
        }
        let rel = relative_3d(a, bb, DEFAULT_LEN_DEADZONE).expect("depth present");
        if let Some((options, letter)) = make_choice(&mut rng, &rel.name(), &vocab, 4) {
            b.push(
                TaskFamily::Depth3d,
                TaskOperator::RelativePosition3d,
                format!(
                    "In 3D, where is {} relative to {}?\n{}",
                    node_ref(a),
                    node_ref(bb),
                    fmt_options(&options)
                ),
                AnswerKind::Choice,
                letter,
                options,
                None,
                vec![a.id.clone(), bb.id.clone()],
                vec![],
            );
        }
        let active =
            [rel.lateral, rel.vertical, rel.depth_axis].iter().filter(|&&v| v != 0).count();
        if active >= 2 {
            if let Some((options, letter)) = make_choice(&mut rng, &rel.compact(), &compound_vocab, 4)
            {
                b.push(
                    TaskFamily::Depth3d,
                    TaskOperator::Compound3d,
                    format!(
                        "Which compound relation holds for {} relative to {}?\n{}",
                        node_ref(a),
                        node_ref(bb),
                        fmt_options(&options)
                    ),
                    AnswerKind::Choice,
                    letter,
                    options,
                    None,
                    vec![a.id.clone(), bb.id.clone()],
                    vec![],
                );
            }
        }
    }
    (b.items, notices)
}

fn permutations<'a>(items: &[&'a EntityNode], f: &mut impl FnMut(&[&'a EntityNode])) {
    let mut v: Vec<&EntityNode> = items.to_vec();
    let n = v.len();
    fn heap<'a>(v: &mut Vec<&'a EntityNode>, k: usize, f: &mut impl FnMut(&[&'a EntityNode])) {
        if k <= 1 {
            f(v);
            return;
        }
        for i in 0..k {
            heap(v, k - 1, f);
            if k % 2 == 0 {
                v.swap(i, k - 1);
            } else {
                v.swap(0, k - 1);
            }
        }
    }
    heap(&mut v, n, f);
}

/// Seam-continuity items: for each node near the +-180 yaw boundary, ask for
/// the angularly nearest other entity, which may lie across the seam.
pub fn gen_seam(g: &MetadataGraph, seed: u64, margin: f64) -> (Vec<TaskInstance>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = TaskBuilder::new(g);
    let mut notices = Vec::new();
    let anchors: Vec<&EntityNode> = g
        .nodes
        .iter()
        .filter(|n| wrap_angle(n.footprint.center().yaw() - PI).abs() <= margin)
        .collect();
    if anchors.is_empty() || g.nodes.len() < 3 {
        notices.push(format!(
            "panorama {}: no seam-margin anchors with 2+ other nodes, no erp_property items",
            g.panorama_id
        ));
        return (b.items, notices);
    }
    for anchor in anchors {
        let others: Vec<EntityNode> =
            g.nodes.iter().filter(|n| n.id != anchor.id).cloned().collect();
        let nearest = seam_nearest(anchor, &others).expect("others nonempty");
        let pool: Vec<String> = others.iter().map(node_ref).collect();
        if let Some((options, letter)) = make_choice(&mut rng, &node_ref(nearest), &pool, 4) {
            b.push(
                TaskFamily::ErpProperty,
                TaskOperator::SeamContinuity,
                format!(
                    "The left and right borders of the panorama are adjacent on the viewing \
                     sphere. Which entity is angularly nearest to {}?\n{}",
                    node_ref(anchor),
                    fmt_options(&options)
                ),
                AnswerKind::Choice,
                letter,
                options,
                None,
                std::iter::once(anchor.id.clone())
                    .chain(others.iter().map(|n| n.id.clone()))
                    .collect(),
                vec![],
            );
        }
    }
    (b.items, notices)
}

/// All families for one graph, with per-family seed derivation.
pub fn gen_all(g: &MetadataGraph, seed: u64, seam_margin: f64) -> (Vec<TaskInstance>, Vec<String>) {
    let mut items = gen_semantic(g, seed);
    items.extend(gen_angular(g, seed.wrapping_add(1)));
    items.extend(gen_refframe(g, seed.wrapping_add(2)));
    let (depth_items, mut notices) = gen_depth3d(g, seed.wrapping_add(3));
    items.extend(depth_items);
    let (seam_items, seam_notices) = gen_seam(g, seed.wrapping_add(4), seam_margin);
    items.extend(seam_items);
    notices.extend(seam_notices);
    (items, notices)
}

/// Largest-remainder apportionment of `total` over the ratio list.
fn apportion(ratios: &[(TaskFamily, f64)], total: usize) -> Vec<(TaskFamily, usize)> {
    let mut counts: Vec<(TaskFamily, usize, f64)> = ratios
        .iter()
        .map(|&(f, r)| {
            let exact = r * total as f64;
            (f, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&i, &j| counts[j].2.partial_cmp(&counts[i].2).unwrap().then(i.cmp(&j)));
    for &i in order.iter().take(total - assigned) {
        counts[i].1 += 1;
    }
    counts.into_iter().map(|(f, c, _)| (f, c)).collect()
}

/// Seeded stratified sampling of the pool to the target family mixture with
/// per-scene caps. Returns the sample and any down-scaling warnings.
pub fn sample_canonical(
    pool: &[TaskInstance],
    spec: &MixtureSpec,
) -> Result<(Vec<TaskInstance>, Vec<String>), TaskGenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut targets = apportion(&spec.ratios, spec.total);
    // per-family candidate lists after the per-scene cap
    let mut candidates: Vec<Vec<&TaskInstance>> = Vec::new();
    for (family, _) in &targets {
        let mut fam: Vec<&TaskInstance> = pool.iter().filter(|t| t.family == *family).collect();
        fam.shuffle(&mut rng);
        if let Some(cap) = spec.per_scene_cap {
            let mut per_scene: std::collections::BTreeMap<&str, usize> = Default::default();
            fam.retain(|t| {
                let c = per_scene.entry(t.panorama_id.as_str()).or_default();
                *c += 1;
                *c <= cap
            });
        }
        candidates.push(fam);
    }
    // proportional down-scaling when some family cannot meet its target
    let mut warnings = Vec::new();
    let scale = targets
        .iter()
        .zip(&candidates)
        .filter(|((_, t), _)| *t > 0)
        .map(|((_, t), c)| (c.len() as f64 / *t as f64).min(1.0))
        .fold(1.0f64, f64::min);
    if scale < 1.0 {
        warnings.push(format!(
            "pool cannot meet the mixture; scaling all family targets by {scale:.4}"
        ));
        for (_, t) in &mut targets {
            *t = (*t as f64 * scale).floor() as usize;
        }
    }
    let mut out = Vec::new();
    for ((_, target), fam) in targets.iter().zip(&candidates) {
        out.extend(fam.iter().take(*target).map(|t| (*t).clone()));
    }
    Ok((out, warnings))
}

/// Recompute a task's answer from its graph; for choice items the result is
/// the option letter of the recomputed value.
pub fn recompute_answer(task: &TaskInstance, g: &MetadataGraph) -> Result<String, TaskGenError> {
    let node = |id: &str| -> Result<&EntityNode, TaskGenError> {
        g.nodes
            .iter()
            .find(|n| n.id == id)
            .ok_or_else(|| TaskGenError::UnknownNode(task.id.clone(), id.to_string()))
    };
    let nid = |i: usize| -> Result<&str, TaskGenError> {
        task.node_ids
            .get(i)
            .map(|s| s.as_str())
            .ok_or_else(|| TaskGenError::Malformed(task.id.clone(), format!("missing node_ids[{i}]")))
    };
    let param = |i: usize| -> Result<&str, TaskGenError> {
        task.params
            .get(i)
            .map(|s| s.as_str())
            .ok_or_else(|| TaskGenError::Malformed(task.id.clone(), format!("missing params[{i}]")))
    };
    let dz = default_angular_deadzone();
    let value: String = match task.operator {
        TaskOperator::Identification => node(nid(0)?)?.semantics.clone(),
        TaskOperator::AttributeQa => {
            let n = node(nid(0)?)?;
            let want = param(0)?;
            n.attributes
                .iter()
                .find(|a| a.as_str() == want)
                .cloned()
                .ok_or_else(|| {
                    TaskGenError::Malformed(task.id.clone(), format!("attribute '{want}' not on node"))
                })?
        }
        TaskOperator::Existence => {
            let cat = param(0)?;
            if g.nodes.iter().any(|n| n.semantics == cat) { "yes".into() } else { "no".into() }
        }
        TaskOperator::Counting => {
            let cat = param(0)?;
            g.nodes.iter().filter(|n| n.semantics == cat).count().to_string()
        }
        TaskOperator::SceneCaptioning => scene_caption(g),
        TaskOperator::AbsoluteDirection => {
            absolute_sector(node(nid(0)?)?.footprint.center(), dz).name()
        }
        TaskOperator::AngularCenter => center_text(&node(nid(0)?)?.footprint),
        TaskOperator::AngularFootprint | TaskOperator::ReferringGrounding => {
            node(nid(0)?)?.footprint.to_text()
        }
        TaskOperator::RelativeDirection => {
            let a = node(nid(0)?)?;
            let b = node(nid(1)?)?;
            relative_direction(a.footprint.center(), b.footprint.center(), dz).name()
        }
        TaskOperator::CameraRotation => {
            let n = node(nid(0)?)?;
            let turn_deg: f64 = param(0)?
                .parse()
                .map_err(|_| TaskGenError::Malformed(task.id.clone(), "bad turn".into()))?;
            absolute_sector(camera_rotate(n.footprint.center(), deg_to_rad(turn_deg)), dz).name()
        }
        TaskOperator::Reorientation => {
            let front = node(nid(0)?)?;
            let target = node(nid(1)?)?;
            absolute_sector(
                reorient_to_object(target.footprint.center(), front.footprint.center()),
                dz,
            )
            .name()
        }
        TaskOperator::ObserverDistance => {
            let mut best: Option<&EntityNode> = None;
            for id in &task.node_ids {
                let n = node(id)?;
                let d = n.distance.ok_or_else(|| {
                    TaskGenError::Malformed(task.id.clone(), format!("node {id} lacks depth"))
                })?;
                best = match best {
                    Some(prev) if prev.distance.unwrap() <= d => Some(prev),
                    _ => Some(n),
                };
            }
            node_ref(best.ok_or_else(|| {
                TaskGenError::Malformed(task.id.clone(), "no nodes listed".into())
            })?)
        }
        TaskOperator::DistanceOrdering => {
            let mut ns: Vec<&EntityNode> =
                task.node_ids.iter().map(|id| node(id)).collect::<Result<_, _>>()?;
            ns.sort_by(|p, q| {
                p.distance
                    .unwrap()
                    .partial_cmp(&q.distance.unwrap())
                    .unwrap()
                    .then_with(|| p.id.cmp(&q.id))
            });
            ns.iter().map(|n| node_ref(n)).collect::<Vec<_>>().join(" < ")
        }
        TaskOperator::RelativePosition3d => {
            let a = node(nid(0)?)?;
            let b = node(nid(1)?)?;
            relative_3d(a, b, DEFAULT_LEN_DEADZONE)
                .map_err(|e| TaskGenError::Malformed(task.id.clone(), e.to_string()))?
                .name()
        }
        TaskOperator::Compound3d => {
            let a = node(nid(0)?)?;
            let b = node(nid(1)?)?;
            relative_3d(a, b, DEFAULT_LEN_DEADZONE)
                .map_err(|e| TaskGenError::Malformed(task.id.clone(), e.to_string()))?
                .compact()
        }
        TaskOperator::SeamContinuity => {
            let anchor = node(nid(0)?)?;
            let others: Vec<EntityNode> = task.node_ids[1..]
                .iter()
                .map(|id| node(id).cloned())
                .collect::<Result<_, _>>()?;
            node_ref(
                seam_nearest(anchor, &others)
                    .map_err(|e| TaskGenError::Malformed(task.id.clone(), e.to_string()))?,
            )
        }
    };
    if task.answer_kind == AnswerKind::Choice {
        let want = normalize_option(&value);
        let idx = task
            .options
            .iter()
            .position(|o| normalize_option(o) == want)
            .ok_or_else(|| {
                TaskGenError::Malformed(task.id.clone(), format!("value '{value}' not in options"))
            })?;
        Ok(OPTION_LETTERS[idx].to_string())
    } else {
        Ok(value)
    }
}

// --- line-delimited task file ---

#[derive(Debug, Serialize, Deserialize)]
pub struct TaskFileHeader {
    pub schema_version: u32,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Header line followed by one task per line.
pub fn serialize_tasks(tasks: &[TaskInstance], config_hash: Option<&str>) -> String {
    let header = TaskFileHeader {
        schema_version: TASK_SCHEMA_VERSION,
        count: tasks.len(),
        config_hash: config_hash.map(|s| s.to_string()),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    for t in tasks {
        out.push('\n');
        out.push_str(&serde_json::to_string(t).expect("task serializes"));
    }
    out.push('\n');
    out
}

pub fn parse_tasks(text: &str) -> Result<(TaskFileHeader, Vec<TaskInstance>), TaskGenError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (i, first) = lines
        .next()
        .ok_or_else(|| TaskGenError::Malformed("<file>".into(), "empty task file".into()))?;
    let header: TaskFileHeader = serde_json::from_str(first)
        .map_err(|source| TaskGenError::Parse { line: i + 1, source })?;
    if header.schema_version != TASK_SCHEMA_VERSION {
        return Err(TaskGenError::SchemaVersion(header.schema_version));
    }
    let tasks = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| TaskGenError::Parse { line: i + 1, source }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((header, tasks))
}
