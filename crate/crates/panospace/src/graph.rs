//! The per-panorama metadata graph: verified entity nodes, pairwise relation
//! edges, depth aggregation, and the versioned graph document schema.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::erp::ErpImage;
use crate::frame::{self, R2dLabel, Relation3D};
use crate::projection::PerspViewSpec;
use crate::sphere::{
    deg_to_rad, pixel_to_direction, rad_to_deg, wrap_angle, Bfov,
};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("duplicate entity id '{0}'")]
    DuplicateId(String),
    #[error("expected a 1-channel depth map, got {0} channels")]
    NotDepth(u8),
    #[error("entity '{id}' distance {value} must be finite and > 0")]
    BadDistance { id: String, value: f64 },
    #[error("unsupported schema_version {0} (expected {GRAPH_SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("graph document parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid bfov in document: {0}")]
    BadBfov(String),
}

/// Reference to the local visual context crop of an entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropRef {
    pub image_path: String,
    pub view: PerspViewSpec,
}

/// Verified entity: semantics, attributes, footprint, observer distance,
/// and optional local context.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityNode {
    pub id: String,
    pub semantics: String,
    pub attributes: Vec<String>,
    pub description: String,
    pub phrase: String,
    pub footprint: Bfov,
    pub distance: Option<f64>,
    pub context: Option<CropRef>,
}

/// Pairwise relation between two entities: angular offsets, depth delta,
/// and the discretized spherical / viewer-centered 3D relation labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationEdge {
    pub from_id: String,
    pub to_id: String,
    /// wrap(yaw_from - yaw_to), radians in [-pi, pi)
    pub delta_yaw: f64,
    pub delta_pitch: f64,
    pub delta_depth: Option<f64>,
    pub r2d: R2dLabel,
    pub r3d: Option<Relation3D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetadataGraph {
    pub panorama_id: String,
    pub image_width: u32,
    pub image_height: u32,
    /// true when the edge set is a declared sampled subset rather than the
    /// complete directed graph
    pub partial_edges: bool,
    pub nodes: Vec<EntityNode>,
    pub edges: Vec<RelationEdge>,
}

/// Median depth over the samples whose pixel-center directions fall inside
/// the footprint rectangle (wrap-aware). None when the footprint covers no
/// samples.
pub fn aggregate_depth(depth: &ErpImage, footprint: &Bfov) -> Result<Option<f64>, GraphError> {
    if depth.channels() != 1 {
        return Err(GraphError::NotDepth(depth.channels()));
    }
    let (w, h) = (depth.width(), depth.height());
    let rect = footprint.rect();
    // row band from the pitch interval
    let v_lo = ((0.5 - rect.pitch_hi / std::f64::consts::PI) * h as f64).floor().max(0.0) as u32;
    let v_hi = ((0.5 - rect.pitch_lo / std::f64::consts::PI) * h as f64).ceil().min(h as f64) as u32;
    // wrapped column band from the yaw interval
    let u_from = ((rect.yaw_start / crate::sphere::TAU + 0.5) * w as f64).floor() as i64;
    let n_cols = ((rect.yaw_width / crate::sphere::TAU) * w as f64).ceil() as i64 + 1;
    let mut samples = Vec::new();
    for v in v_lo..v_hi {
        for k in 0..n_cols.min(w as i64) {
            let u = (u_from + k).rem_euclid(w as i64) as u32;
            let d = pixel_to_direction(u as f64 + 0.5, v as f64 + 0.5, w, h)
                .expect("pixel centers are in range");
            if rect.contains(d) {
                samples.push(depth.get(u, v, 0));
            }
        }
    }
    if samples.is_empty() {
        return Ok(None);
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Some(samples[(samples.len() - 1) / 2]))
}

/// Relation edge from `a` to `b`: angular deltas, depth delta, and the
/// discretized labels. The all-neutral r2d is reported as "coincident".
pub fn compute_edge(a: &EntityNode, b: &EntityNode, angular_deadzone: f64, len_deadzone: f64) -> RelationEdge {
    let ca = a.footprint.center();
    let cb = b.footprint.center();
    let r2d = frame::relative_direction(ca, cb, angular_deadzone);
    let r3d = match (a.distance, b.distance) {
        (Some(_), Some(_)) => Some(frame::relative_3d(a, b, len_deadzone).expect("both depths present")),
        _ => None,
    };
    RelationEdge {
        from_id: a.id.clone(),
        to_id: b.id.clone(),
        delta_yaw: wrap_angle(ca.yaw() - cb.yaw()),
        delta_pitch: ca.pitch() - cb.pitch(),
        delta_depth: match (a.distance, b.distance) {
            (Some(da), Some(db)) => Some(da - db),
            _ => None,
        },
        r2d,
        r3d,
    }
}

/// Human-readable r2d label for an edge ("coincident" when both axes are
/// inside the dead-zone).
pub fn edge_r2d_name(r2d: &R2dLabel) -> String {
    if r2d.lateral == 0 && r2d.vertical == 0 {
        "coincident".to_string()
    } else {
        r2d.name()
    }
}

/// Build the complete directed metadata graph. Distances absent from a node
/// are filled from the depth map when one is provided; nodes are sorted by
/// id; edges cover all ordered pairs unless `edge_cap` limits each node to
/// its k nearest neighbors by angular distance (flagged partial).
pub fn build_graph(
    panorama_id: &str,
    image_width: u32,
    image_height: u32,
    entities: Vec<EntityNode>,
    depth: Option<&ErpImage>,
    edge_cap: Option<usize>,
    angular_deadzone: f64,
    len_deadzone: f64,
) -> Result<MetadataGraph, GraphError> {
    let mut nodes = entities;
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in nodes.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(GraphError::DuplicateId(pair[0].id.clone()));
        }
    }
    for node in &mut nodes {
        if let Some(d) = node.distance {
            if !(d.is_finite() && d > 0.0) {
                return Err(GraphError::BadDistance { id: node.id.clone(), value: d });
            }
        } else if let Some(depth_map) = depth {
            node.distance = aggregate_depth(depth_map, &node.footprint)?
                .filter(|&d| d.is_finite() && d > 0.0);
        }
    }
    let mut edges = Vec::new();
    let partial = edge_cap.map_or(false, |k| k + 1 < nodes.len());
    for (i, a) in nodes.iter().enumerate() {
        let mut targets: Vec<usize> = (0..nodes.len()).filter(|&j| j != i).collect();
        if let Some(k) = edge_cap {
            targets.sort_by(|&p, &q| {
                let dp = crate::sphere::angular_distance(a.footprint.center(), nodes[p].footprint.center());
                let dq = crate::sphere::angular_distance(a.footprint.center(), nodes[q].footprint.center());
                dp.partial_cmp(&dq).unwrap().then_with(|| nodes[p].id.cmp(&nodes[q].id))
            });
            targets.truncate(k);
            targets.sort();
        }
        for j in targets {
            edges.push(compute_edge(a, &nodes[j], angular_deadzone, len_deadzone));
        }
    }
    Ok(MetadataGraph {
        panorama_id: panorama_id.to_string(),
        image_width,
        image_height,
        partial_edges: partial,
        nodes,
        edges,
    })
}

// --- document schema (degrees and meters, canonical field order) ---

fn bfov_deg_array(b: &Bfov) -> [f64; 4] {
    [
        b.center().yaw_deg(),
        b.center().pitch_deg(),
        rad_to_deg(b.x_fov()),
        rad_to_deg(b.y_fov()),
    ]
}

fn bfov_from_deg_array(a: [f64; 4]) -> Result<Bfov, GraphError> {
    Bfov::from_degrees(a[0], a[1], a[2], a[3]).map_err(|e| GraphError::BadBfov(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    id: String,
    semantics: String,
    attributes: Vec<String>,
    description: String,
    phrase: String,
    bfov_deg: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    distance_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<CropRef>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeDoc {
    from_id: String,
    to_id: String,
    delta_yaw_deg: f64,
    delta_pitch_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_depth_m: Option<f64>,
    r2d: R2dLabel,
    r2d_label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    r3d: Option<Relation3D>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r3d_label: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphDoc {
    schema_version: u32,
    panorama_id: String,
    image_width: u32,
    image_height: u32,
    partial_edges: bool,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

/// Deterministic serialization: canonical field order, degrees and meters.
pub fn serialize_graph(g: &MetadataGraph) -> String {
    let doc = GraphDoc {
        schema_version: GRAPH_SCHEMA_VERSION,
        panorama_id: g.panorama_id.clone(),
        image_width: g.image_width,
        image_height: g.image_height,
        partial_edges: g.partial_edges,
        nodes: g
            .nodes
            .iter()
            .map(|n| NodeDoc {
                id: n.id.clone(),
                semantics: n.semantics.clone(),
                attributes: n.attributes.clone(),
                description: n.description.clone(),
                phrase: n.phrase.clone(),
                bfov_deg: bfov_deg_array(&n.footprint),
                distance_m: n.distance,
                context: n.context.clone(),
            })
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|e| EdgeDoc {
                from_id: e.from_id.clone(),
                to_id: e.to_id.clone(),
                delta_yaw_deg: rad_to_deg(e.delta_yaw),
                delta_pitch_deg: rad_to_deg(e.delta_pitch),
                delta_depth_m: e.delta_depth,
                r2d: e.r2d,
                r2d_label: edge_r2d_name(&e.r2d),
                r3d: e.r3d,
                r3d_label: e.r3d.map(|r| r.name()),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("graph document serializes")
}

pub fn parse_graph(text: &str) -> Result<MetadataGraph, GraphError> {
    let doc: GraphDoc = serde_json::from_str(text)?;
    if doc.schema_version != GRAPH_SCHEMA_VERSION {
        return Err(GraphError::SchemaVersion(doc.schema_version));
    }
    let nodes = doc
        .nodes
        .into_iter()
        .map(|n| {
            Ok(EntityNode {
                id: n.id,
                semantics: n.semantics,
                attributes: n.attributes,
                description: n.description,
                phrase: n.phrase,
                footprint: bfov_from_deg_array(n.bfov_deg)?,
                distance: n.distance_m,
                context: n.context,
            })
        })
        .collect::<Result<Vec<_>, GraphError>>()?;
    let edges = doc
        .edges
        .into_iter()
        .map(|e| RelationEdge {
            from_id: e.from_id,
            to_id: e.to_id,
            delta_yaw: deg_to_rad(e.delta_yaw_deg),
            delta_pitch: deg_to_rad(e.delta_pitch_deg),
            delta_depth: e.delta_depth_m,
            r2d: e.r2d,
            r3d: e.r3d,
        })
        .collect();
    Ok(MetadataGraph {
        panorama_id: doc.panorama_id,
        image_width: doc.image_width,
        image_height: doc.image_height,
        partial_edges: doc.partial_edges,
        nodes,
        edges,
    })
}
