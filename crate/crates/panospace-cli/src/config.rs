//! Effective pipeline configuration. A JSON document plus flag overrides
//! collapse into one struct; its canonical-JSON sha256 is the `config_hash`
//! echoed by every subcommand so artifacts can be traced to their settings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use panospace::taskgen::TaskFamily;

use crate::CliError;

fn d_confidence() -> f64 {
    0.3
}
fn d_nms_iou() -> f64 {
    0.5
}
fn d_erp_iou() -> f64 {
    0.6
}
fn d_semantic_iou() -> f64 {
    0.7
}
fn d_min_support() -> usize {
    1
}
fn d_h_fov() -> f64 {
    120.0
}
fn d_stride() -> f64 {
    60.0
}
fn d_pitch_rings() -> Vec<f64> {
    vec![0.0]
}
fn d_view_side() -> u32 {
    640
}
fn d_image_width() -> u32 {
    2048
}
fn d_image_height() -> u32 {
    1024
}
fn d_angular_deadzone() -> f64 {
    5.0
}
fn d_len_deadzone() -> f64 {
    0.15
}
fn d_seam_margin() -> f64 {
    20.0
}
fn d_mixture() -> Vec<(String, f64)> {
    vec![
        ("semantic".into(), 0.368),
        ("angular".into(), 0.111),
        ("refframe".into(), 0.275),
        ("depth3d".into(), 0.244),
        ("erp_property".into(), 0.002),
    ]
}
fn d_vln_radius() -> f64 {
    3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub confidence_threshold: f64,
    pub nms_iou_threshold: f64,
    pub erp_iou_threshold: f64,
    pub semantic_iou_threshold: f64,
    pub min_support: usize,
    pub h_fov_deg: f64,
    pub v_fov_deg: f64,
    pub stride_deg: f64,
    pub pitch_rings_deg: Vec<f64>,
    pub view_width: u32,
    pub view_height: u32,
    pub image_width: u32,
    pub image_height: u32,
    pub angular_deadzone_deg: f64,
    pub len_deadzone_m: f64,
    pub seam_margin_deg: f64,
    pub seed: u64,
    pub total_tasks: Option<usize>,
    pub per_scene_cap: Option<usize>,
    /// (family name, ratio); must sum to 1 when sampling
    pub mixture_ratios: Vec<(String, f64)>,
    pub vln_radius_m: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: d_confidence(),
            nms_iou_threshold: d_nms_iou(),
            erp_iou_threshold: d_erp_iou(),
            semantic_iou_threshold: d_semantic_iou(),
            min_support: d_min_support(),
            h_fov_deg: d_h_fov(),
            v_fov_deg: d_h_fov(),
            stride_deg: d_stride(),
            pitch_rings_deg: d_pitch_rings(),
            view_width: d_view_side(),
            view_height: d_view_side(),
            image_width: d_image_width(),
            image_height: d_image_height(),
            angular_deadzone_deg: d_angular_deadzone(),
            len_deadzone_m: d_len_deadzone(),
            seam_margin_deg: d_seam_margin(),
            seed: 0,
            total_tasks: None,
            per_scene_cap: None,
            mixture_ratios: d_mixture(),
            vln_radius_m: d_vln_radius(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))
            }
        }
    }

    /// sha256 over the canonical JSON of the effective config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        format!("{:x}", h.finalize())
    }

    pub fn mixture_spec_ratios(&self) -> Result<Vec<(TaskFamily, f64)>, CliError> {
        self.mixture_ratios
            .iter()
            .map(|(name, r)| {
                let family = TaskFamily::ALL
                    .into_iter()
                    .find(|f| f.name() == name)
                    .ok_or_else(|| CliError::Usage(format!("unknown task family '{name}'")))?;
                Ok((family, *r))
            })
            .collect()
    }
}

/// "0.368,0.111,0.275,0.244,0.002" in fixed family order.
pub fn parse_ratio_list(text: &str) -> Result<Vec<(String, f64)>, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != TaskFamily::ALL.len() {
        return Err(CliError::Usage(format!(
            "expected {} comma-separated ratios, got {}",
            TaskFamily::ALL.len(),
            parts.len()
        )));
    }
    TaskFamily::ALL
        .iter()
        .zip(&parts)
        .map(|(f, p)| {
            let r: f64 = p
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad ratio '{p}'")))?;
            Ok((f.name().to_string(), r))
        })
        .collect()
}
