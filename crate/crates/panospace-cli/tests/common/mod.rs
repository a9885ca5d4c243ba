//! Fixture builders shared by the CLI end-to-end tests and the acceptance
//! gate. Everything here is deterministic so artifact bytes can be compared
//! across runs.

use std::path::{Path, PathBuf};

use panospace::erp::ErpImage;
use panospace::projection::{persp_box_to_bfov, PerspBox, PerspViewSpec};
use panospace::sphere::{deg_to_rad, rad_to_deg};
use panospace::verify::{self, DetectionsDoc, ReDetection, ViewDetections};

/// Deterministic gradient panorama (width must be 2x height).
pub fn write_fixture_erp(path: &Path, w: u32, h: u32) {
    let mut img = ErpImage::constant_color(w, h, [0.0, 0.0, 0.0]).unwrap();
    for y in 0..h {
        for x in 0..w {
            img.set(x, y, 0, (x % 256) as f64);
            img.set(x, y, 1, (y * 2 % 256) as f64);
            img.set(x, y, 2, ((x + y) % 256) as f64);
        }
    }
    img.save_png(path).unwrap();
}

pub fn view(yaw_deg: f64) -> PerspViewSpec {
    PerspViewSpec::new(deg_to_rad(yaw_deg), 0.0, deg_to_rad(120.0), deg_to_rad(120.0), 640, 640)
        .unwrap()
}

pub fn centered_box(label: &str, confidence: f64) -> PerspBox {
    PerspBox {
        x_min: 280.0,
        y_min: 280.0,
        x_max: 360.0,
        y_max: 360.0,
        confidence,
        label: label.to_string(),
    }
}

pub fn fixture_views() -> Vec<ViewDetections> {
    vec![
        ViewDetections {
            view: view(-180.0),
            boxes: vec![centered_box("chair", 0.9), centered_box("noise", 0.1)],
        },
        ViewDetections { view: view(-120.0), boxes: vec![] },
        ViewDetections { view: view(-60.0), boxes: vec![centered_box("lamp", 0.8)] },
        ViewDetections { view: view(0.0), boxes: vec![centered_box("table", 0.7)] },
        ViewDetections { view: view(60.0), boxes: vec![] },
        ViewDetections { view: view(120.0), boxes: vec![] },
    ]
}

/// Three entities in three different views plus one low-confidence reject.
/// Returns (detections, redetections, depth) paths.
pub fn write_detection_fixtures(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let views = fixture_views();
    let doc = DetectionsDoc::from_view_detections("pano-e2e", "fixture.png", &views);
    let det_path = dir.join("detections.jsonl");
    std::fs::write(&det_path, serde_json::to_string(&doc).unwrap() + "\n").unwrap();

    let cfg = verify::VerifyConfig::default();
    let mut redets = Vec::new();
    for v in views.iter() {
        for b in &v.boxes {
            if b.confidence < cfg.confidence_threshold {
                continue;
            }
            let bfov = persp_box_to_bfov(&v.view, b, cfg.samples_per_edge).unwrap();
            // candidate ids are assigned in (label, yaw, pitch) order; with
            // unique labels the alphabetical rank is the id index
            let rank = views
                .iter()
                .flat_map(|v| &v.boxes)
                .filter(|o| o.confidence >= cfg.confidence_threshold && o.label < b.label)
                .count();
            redets.push(ReDetection {
                candidate_id: format!("c{rank:03}"),
                phrase: format!("the {} near the center", b.label),
                bfov_deg: [
                    bfov.center().yaw_deg(),
                    bfov.center().pitch_deg(),
                    rad_to_deg(bfov.x_fov()),
                    rad_to_deg(bfov.y_fov()),
                ],
            });
        }
    }
    let redet_path = dir.join("redetections.jsonl");
    let lines: Vec<String> = redets.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    std::fs::write(&redet_path, lines.join("\n") + "\n").unwrap();

    let depth_path = dir.join("depth.json");
    let meters: Vec<f64> = vec![3.0; 256 * 128];
    std::fs::write(
        &depth_path,
        serde_json::to_string(&serde_json::json!({
            "width": 256, "height": 128, "meters": meters
        }))
        .unwrap(),
    )
    .unwrap();
    (det_path, redet_path, depth_path)
}
