//! Two-level detection verification as deterministic, data-driven filters:
//! confidence gating, per-view NMS, cross-view ERP merging with geometric
//! consistency, and description-guided semantic verification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::projection::{persp_box_to_bfov, planar_iou, PerspBox, PerspViewSpec, ProjectionError};
use crate::sphere::{bfov_iou, deg_to_rad, rad_to_deg, Bfov, TAU};

pub const DETECTIONS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("re-detection references unknown candidate id '{0}'")]
    DanglingCandidate(String),
    #[error("views reference different panoramas: '{0}' vs '{1}'")]
    MixedPanoramas(String, String),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("unsupported schema_version {0} (expected {DETECTIONS_SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("detections parse error at line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// Default thresholds for the verification pipeline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// confidence gate, kept when confidence >= threshold
    pub confidence_threshold: f64,
    /// view-level NMS, suppressed when planar IoU > threshold
    pub nms_iou_threshold: f64,
    /// cross-view merge, connected when ERP IoU > threshold
    pub erp_iou_threshold: f64,
    /// semantic verification, kept when re-detection IoU > threshold
    pub semantic_iou_threshold: f64,
    /// candidates below this support inside multi-view overlap are dropped
    pub min_support: usize,
    /// switch for the overlap-region consistency interpretation
    pub consistency_check: bool,
    pub samples_per_edge: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.3,
            nms_iou_threshold: 0.5,
            erp_iou_threshold: 0.6,
            semantic_iou_threshold: 0.7,
            min_support: 1,
            consistency_check: true,
            samples_per_edge: 16,
        }
    }
}

/// Detector output for one perspective view of a panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewDetections {
    pub view: PerspViewSpec,
    pub boxes: Vec<PerspBox>,
}

/// Panorama-level entity candidate after cross-view merging.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEntity {
    pub id: String,
    pub bfov: Bfov,
    pub confidence: f64,
    pub label: String,
    pub source_views: Vec<usize>,
    pub support_count: usize,
}

/// Output contract of the external referring re-detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReDetection {
    pub candidate_id: String,
    pub phrase: String,
    pub bfov_deg: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Confidence,
    Nms,
    Consistency,
    Semantic,
    Unverified,
}

/// One dropped detection or candidate with the stage that removed it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropRecord {
    pub stage: DropReason,
    pub label: String,
    pub detail: String,
}

pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

/// Remove boxes below the confidence threshold (>= keeps), preserving order.
pub fn filter_confidence(
    dets: &ViewDetections,
    threshold: f64,
    drops: &mut Vec<DropRecord>,
) -> ViewDetections {
    let mut kept = Vec::with_capacity(dets.boxes.len());
    for b in &dets.boxes {
        if b.confidence >= threshold {
            kept.push(b.clone());
        } else {
            drops.push(DropRecord {
                stage: DropReason::Confidence,
                label: normalize_label(&b.label),
                detail: format!("confidence {} < {}", b.confidence, threshold),
            });
        }
    }
    ViewDetections { view: dets.view, boxes: kept }
}

/// Greedy per-label NMS: sort by confidence descending (ties by smaller box
/// area, then input order), suppress planar IoU > threshold against a kept
/// box of the same label.
pub fn nms_view(
    dets: &ViewDetections,
    iou_threshold: f64,
    drops: &mut Vec<DropRecord>,
) -> ViewDetections {
    let mut order: Vec<usize> = (0..dets.boxes.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&dets.boxes[i], &dets.boxes[j]);
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(a.area().partial_cmp(&b.area()).unwrap())
            .then(i.cmp(&j))
    });
    let mut kept_idx: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = kept_idx.iter().any(|&k| {
            normalize_label(&dets.boxes[k].label) == normalize_label(&dets.boxes[i].label)
                && planar_iou(&dets.boxes[k], &dets.boxes[i]) > iou_threshold
        });
        if suppressed {
            drops.push(DropRecord {
                stage: DropReason::Nms,
                label: normalize_label(&dets.boxes[i].label),
                detail: format!("suppressed at IoU > {}", iou_threshold),
            });
        } else {
            kept_idx.push(i);
        }
    }
    kept_idx.sort();
    ViewDetections {
        view: dets.view,
        boxes: kept_idx.into_iter().map(|i| dets.boxes[i].clone()).collect(),
    }
}

/// Minimal circular yaw interval covering a set of arcs (start, width).
fn cover_yaw_arcs(arcs: &[(f64, f64)]) -> (f64, f64) {
    assert!(!arcs.is_empty());
    let mut best: Option<(f64, f64)> = None;
    for &(cand_start, _) in arcs {
        let mut width = 0.0f64;
        for &(s, w) in arcs {
            let off = (s - cand_start).rem_euclid(TAU);
            width = width.max(off + w);
        }
        if width <= TAU + 1e-12 && best.map_or(true, |(_, bw)| width < bw) {
            best = Some((cand_start, width));
        }
    }
    best.map(|(s, w)| (s, w.min(TAU))).unwrap_or((arcs[0].0, TAU))
}

/// Wrap-aware minimal rectangle covering a set of member BFOVs.
fn cover_bfovs(members: &[Bfov]) -> Bfov {
    let arcs: Vec<(f64, f64)> = members
        .iter()
        .map(|b| {
            let r = b.rect();
            (r.yaw_start, r.yaw_width)
        })
        .collect();
    let (start, width) = cover_yaw_arcs(&arcs);
    let pitch_lo = members.iter().map(|b| b.rect().pitch_lo).fold(f64::INFINITY, f64::min);
    let pitch_hi = members.iter().map(|b| b.rect().pitch_hi).fold(f64::NEG_INFINITY, f64::max);
    crate::projection::rect_to_bfov(start, width, pitch_lo, pitch_hi).expect("cover rect valid")
}

/// True when the rectangle of `b` lies entirely inside the angular footprint
/// of the view.
fn view_contains_bfov(view: &PerspViewSpec, b: &Bfov) -> bool {
    let vf = view.footprint().rect();
    let br = b.rect();
    if br.pitch_lo < vf.pitch_lo - 1e-12 || br.pitch_hi > vf.pitch_hi + 1e-12 {
        return false;
    }
    let off = (br.yaw_start - vf.yaw_start).rem_euclid(TAU);
    off + br.yaw_width <= vf.yaw_width + 1e-12
}

/// Reproject every box to a BFOV, connect same-label BFOVs whose ERP IoU
/// exceeds the threshold, and collapse connected components into candidates.
/// Components with support below `min_support` that lie entirely inside a
/// multi-view overlap region fail the cross-view consistency check.
pub fn merge_cross_view(
    per_view: &[ViewDetections],
    cfg: &VerifyConfig,
    drops: &mut Vec<DropRecord>,
) -> Result<Vec<CandidateEntity>, VerifyError> {
    struct Member {
        view_idx: usize,
        bfov: Bfov,
        confidence: f64,
        label: String,
    }
    let mut members = Vec::new();
    for (view_idx, dets) in per_view.iter().enumerate() {
        for b in &dets.boxes {
            members.push(Member {
                view_idx,
                bfov: persp_box_to_bfov(&dets.view, b, cfg.samples_per_edge)?,
                confidence: b.confidence,
                label: normalize_label(&b.label),
            });
        }
    }
    // union-find over same-label pairs with IoU > threshold
    let n = members.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if members[i].label == members[j].label
                && bfov_iou(&members[i].bfov, &members[j].bfov) > cfg.erp_iou_threshold
            {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut components: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(i);
    }
    let mut candidates = Vec::new();
    for (_, comp) in components {
        let bfovs: Vec<Bfov> = comp.iter().map(|&i| members[i].bfov).collect();
        let bfov = cover_bfovs(&bfovs);
        let mut source_views: Vec<usize> = comp.iter().map(|&i| members[i].view_idx).collect();
        source_views.sort();
        source_views.dedup();
        let support_count = source_views.len();
        let label = members[comp[0]].label.clone();
        let confidence =
            comp.iter().map(|&i| members[i].confidence).fold(f64::NEG_INFINITY, f64::max);
        if cfg.consistency_check && support_count < cfg.min_support {
            let containing = per_view.iter().filter(|v| view_contains_bfov(&v.view, &bfov)).count();
            if containing >= 2 {
                drops.push(DropRecord {
                    stage: DropReason::Consistency,
                    label,
                    detail: format!(
                        "support {} < {} inside {}-view overlap",
                        support_count, cfg.min_support, containing
                    ),
                });
                continue;
            }
        }
        candidates.push(CandidateEntity {
            id: String::new(),
            bfov,
            confidence,
            label,
            source_views,
            support_count,
        });
    }
    // deterministic candidate order and ids
    candidates.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then(a.bfov.center().yaw().partial_cmp(&b.bfov.center().yaw()).unwrap())
            .then(a.bfov.center().pitch().partial_cmp(&b.bfov.center().pitch()).unwrap())
    });
    for (i, c) in candidates.iter_mut().enumerate() {
        c.id = format!("c{i:03}");
    }
    Ok(candidates)
}

/// Keep a candidate iff some re-detection for it overlaps above the
/// threshold. Candidates with no re-detection record are reported as
/// unverified.
pub fn semantic_verify(
    candidates: &[CandidateEntity],
    redets: &[ReDetection],
    threshold: f64,
    drops: &mut Vec<DropRecord>,
) -> Result<Vec<CandidateEntity>, VerifyError> {
    let known: std::collections::BTreeSet<&str> =
        candidates.iter().map(|c| c.id.as_str()).collect();
    for r in redets {
        if !known.contains(r.candidate_id.as_str()) {
            return Err(VerifyError::DanglingCandidate(r.candidate_id.clone()));
        }
    }
    let mut kept = Vec::new();
    for c in candidates {
        let mine: Vec<&ReDetection> =
            redets.iter().filter(|r| r.candidate_id == c.id).collect();
        if mine.is_empty() {
            drops.push(DropRecord {
                stage: DropReason::Unverified,
                label: c.label.clone(),
                detail: format!("candidate {} has no re-detection", c.id),
            });
            continue;
        }
        let best = mine
            .iter()
            .map(|r| {
                Bfov::from_degrees(r.bfov_deg[0], r.bfov_deg[1], r.bfov_deg[2], r.bfov_deg[3])
                    .map(|b| bfov_iou(&c.bfov, &b))
                    .unwrap_or(0.0)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if best > threshold {
            kept.push(c.clone());
        } else {
            drops.push(DropRecord {
                stage: DropReason::Semantic,
                label: c.label.clone(),
                detail: format!("candidate {} best re-detection IoU {best:.3} <= {threshold}", c.id),
            });
        }
    }
    Ok(kept)
}

/// Full pipeline: confidence gate, per-view NMS, cross-view merge,
/// semantic verification. Returns kept candidates and the drop report.
pub fn run_pipeline(
    per_view: &[ViewDetections],
    redets: &[ReDetection],
    cfg: &VerifyConfig,
) -> Result<(Vec<CandidateEntity>, Vec<DropRecord>), VerifyError> {
    let mut drops = Vec::new();
    let filtered: Vec<ViewDetections> = per_view
        .iter()
        .map(|v| {
            let v = filter_confidence(v, cfg.confidence_threshold, &mut drops);
            nms_view(&v, cfg.nms_iou_threshold, &mut drops)
        })
        .collect();
    let candidates = merge_cross_view(&filtered, cfg, &mut drops)?;
    let kept = semantic_verify(&candidates, redets, cfg.semantic_iou_threshold, &mut drops)?;
    Ok((kept, drops))
}

// --- detections interchange schema (degrees, line-delimited) ---

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewDoc {
    pub view_yaw_deg: f64,
    pub view_pitch_deg: f64,
    pub h_fov_deg: f64,
    pub v_fov_deg: f64,
    pub width: u32,
    pub height: u32,
    pub boxes: Vec<PerspBox>,
}

/// One document per panorama in the line-delimited detections file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionsDoc {
    pub schema_version: u32,
    pub panorama_id: String,
    pub image_path: String,
    pub views: Vec<ViewDoc>,
}

impl DetectionsDoc {
    pub fn to_view_detections(&self) -> Result<Vec<ViewDetections>, VerifyError> {
        if self.schema_version != DETECTIONS_SCHEMA_VERSION {
            return Err(VerifyError::SchemaVersion(self.schema_version));
        }
        self.views
            .iter()
            .map(|v| {
                let spec = PerspViewSpec::new(
                    deg_to_rad(v.view_yaw_deg),
                    deg_to_rad(v.view_pitch_deg),
                    deg_to_rad(v.h_fov_deg),
                    deg_to_rad(v.v_fov_deg),
                    v.width,
                    v.height,
                )?;
                for b in &v.boxes {
                    b.validate(&spec)?;
                }
                Ok(ViewDetections { view: spec, boxes: v.boxes.clone() })
            })
            .collect()
    }

    pub fn from_view_detections(
        panorama_id: &str,
        image_path: &str,
        views: &[ViewDetections],
    ) -> Self {
        Self {
            schema_version: DETECTIONS_SCHEMA_VERSION,
            panorama_id: panorama_id.to_string(),
            image_path: image_path.to_string(),
            views: views
                .iter()
                .map(|v| ViewDoc {
                    view_yaw_deg: rad_to_deg(v.view.view_yaw),
                    view_pitch_deg: rad_to_deg(v.view.view_pitch),
                    h_fov_deg: rad_to_deg(v.view.h_fov),
                    v_fov_deg: rad_to_deg(v.view.v_fov),
                    width: v.view.out_width,
                    height: v.view.out_height,
                    boxes: v.boxes.clone(),
                })
                .collect(),
        }
    }
}

/// Parse a line-delimited file of documents, reporting the offending line on
/// error.
pub fn parse_jsonl<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, VerifyError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| VerifyError::Parse { line: i + 1, source }))
        .collect()
}
