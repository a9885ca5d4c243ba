//! Observer-centered reference-frame math: sector classification, relative
//! direction, camera rotation, object-conditioned reorientation,
//! viewer-centered 3D relations, and seam-nearest queries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::EntityNode;
use crate::sphere::{
    angular_distance, deg_to_rad, direction_to_ray, ray_to_direction, wrap_angle,
    SphericalDirection, UnitRay,
};

/// Default angular dead-zone for relation discretization (5 degrees).
pub fn default_angular_deadzone() -> f64 {
    deg_to_rad(5.0)
}

/// Default metric dead-zone for 3D relation discretization (0.15 m).
pub const DEFAULT_LEN_DEADZONE: f64 = 0.15;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("depth required for entity '{0}'")]
    DepthRequired(String),
    #[error("no candidate entities supplied")]
    EmptyCandidates,
}

/// Eight half-open lateral sectors of 45 degrees, front centered at yaw 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LateralSector {
    Front,
    FrontRight,
    Right,
    BackRight,
    Back,
    BackLeft,
    Left,
    FrontLeft,
}

impl LateralSector {
    pub const ALL: [LateralSector; 8] = [
        LateralSector::Front,
        LateralSector::FrontRight,
        LateralSector::Right,
        LateralSector::BackRight,
        LateralSector::Back,
        LateralSector::BackLeft,
        LateralSector::Left,
        LateralSector::FrontLeft,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LateralSector::Front => "front",
            LateralSector::FrontRight => "front-right",
            LateralSector::Right => "right",
            LateralSector::BackRight => "back-right",
            LateralSector::Back => "back",
            LateralSector::BackLeft => "back-left",
            LateralSector::Left => "left",
            LateralSector::FrontLeft => "front-left",
        }
    }

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|s| s == self).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerticalBand {
    Above,
    Level,
    Below,
}

impl VerticalBand {
    pub fn name(&self) -> &'static str {
        match self {
            VerticalBand::Above => "above",
            VerticalBand::Level => "level",
            VerticalBand::Below => "below",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SectorLabel {
    pub lateral: LateralSector,
    pub vertical: VerticalBand,
}

impl SectorLabel {
    pub fn name(&self) -> String {
        match self.vertical {
            VerticalBand::Level => self.lateral.name().to_string(),
            v => format!("{}-{}", self.lateral.name(), v.name()),
        }
    }
}

/// Quantize a direction into the 8x3 sector scheme. Sector boundaries are
/// half-open: front = [-22.5, 22.5) degrees.
pub fn absolute_sector(d: SphericalDirection, vertical_deadzone: f64) -> SectorLabel {
    let deg45 = std::f64::consts::FRAC_PI_4;
    let shifted = wrap_angle(d.yaw() + deg45 / 2.0);
    let idx = ((shifted + std::f64::consts::PI) / deg45).floor() as i64;
    // shifted in [-pi, pi) puts idx in [0, 8); index 4 is front
    let lateral = LateralSector::ALL[((idx + 4) % 8) as usize];
    let vertical = if d.pitch() > vertical_deadzone {
        VerticalBand::Above
    } else if d.pitch() < -vertical_deadzone {
        VerticalBand::Below
    } else {
        VerticalBand::Level
    };
    SectorLabel { lateral, vertical }
}

/// Discretized pairwise spherical relation (the r2d vocabulary).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct R2dLabel {
    /// -1 left, 0 aligned, +1 right
    pub lateral: i8,
    /// -1 below, 0 aligned, +1 above
    pub vertical: i8,
}

impl R2dLabel {
    pub fn name(&self) -> String {
        let lat = match self.lateral {
            1 => Some("right"),
            -1 => Some("left"),
            _ => None,
        };
        let vert = match self.vertical {
            1 => Some("above"),
            -1 => Some("below"),
            _ => None,
        };
        match (lat, vert) {
            (Some(l), Some(v)) => format!("{l}-{v}"),
            (Some(l), None) => l.to_string(),
            (None, Some(v)) => v.to_string(),
            (None, None) => "aligned".to_string(),
        }
    }

    pub fn opposite(&self) -> R2dLabel {
        R2dLabel { lateral: -self.lateral, vertical: -self.vertical }
    }
}

/// Where `target` lies relative to `reference` with the observer orientation
/// held fixed. Deltas outside the dead-zone pick the axis labels.
pub fn relative_direction(
    target: SphericalDirection,
    reference: SphericalDirection,
    deadzone: f64,
) -> R2dLabel {
    let d_yaw = wrap_angle(target.yaw() - reference.yaw());
    let d_pitch = target.pitch() - reference.pitch();
    let lateral = if d_yaw > deadzone {
        1
    } else if d_yaw < -deadzone {
        -1
    } else {
        0
    };
    let vertical = if d_pitch > deadzone {
        1
    } else if d_pitch < -deadzone {
        -1
    } else {
        0
    };
    R2dLabel { lateral, vertical }
}

/// Direction of a fixed target after the observer turns in place.
/// Positive `turn` is a right turn (toward positive yaw).
pub fn camera_rotate(d: SphericalDirection, turn: f64) -> SphericalDirection {
    SphericalDirection::new(wrap_angle(d.yaw() - turn), d.pitch()).expect("pitch unchanged")
}

/// Direction of `target` after the zero-roll reorientation that makes
/// `new_front` the front direction.
pub fn reorient_to_object(
    target: SphericalDirection,
    new_front: SphericalDirection,
) -> SphericalDirection {
    let r = direction_to_ray(target);
    // inverse of the view rotation: Rx(-pitch) * Ry(-yaw)
    let (sy, cy) = (-new_front.yaw()).sin_cos();
    let (sp, cp) = (-new_front.pitch()).sin_cos();
    let x1 = r.x * cy + r.z * sy;
    let z1 = -r.x * sy + r.z * cy;
    let y1 = r.y;
    let y2 = y1 * cp + z1 * sp;
    let z2 = -y1 * sp + z1 * cp;
    let rotated = UnitRay::from_vec(x1, y2, z2).expect("rotation preserves norm");
    ray_to_direction(rotated).expect("unit ray")
}

/// Viewer-centered 3D relation along the three observer axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation3D {
    /// -1 left, 0 centered, +1 right
    pub lateral: i8,
    /// -1 below, 0 level, +1 above
    pub vertical: i8,
    /// -1 behind, 0 same-depth, +1 in front of
    pub depth_axis: i8,
}

impl Relation3D {
    /// Composite label in front/lateral/vertical order, e.g.
    /// "front-left-above"; all-neutral is "co-located".
    pub fn name(&self) -> String {
        let mut parts: Vec<&str> = Vec::new();
        match self.depth_axis {
            1 => parts.push("in front of"),
            -1 => parts.push("behind"),
            _ => {}
        }
        match self.lateral {
            1 => parts.push("right"),
            -1 => parts.push("left"),
            _ => {}
        }
        match self.vertical {
            1 => parts.push("above"),
            -1 => parts.push("below"),
            _ => {}
        }
        if parts.is_empty() {
            "co-located".to_string()
        } else {
            parts.join(", ")
        }
    }

    /// Compact form used as MC option text: "front-left-above".
    pub fn compact(&self) -> String {
        let mut parts: Vec<&str> = Vec::new();
        match self.depth_axis {
            1 => parts.push("front"),
            -1 => parts.push("behind"),
            _ => {}
        }
        match self.lateral {
            1 => parts.push("right"),
            -1 => parts.push("left"),
            _ => {}
        }
        match self.vertical {
            1 => parts.push("above"),
            -1 => parts.push("below"),
            _ => {}
        }
        if parts.is_empty() {
            "co-located".to_string()
        } else {
            parts.join("-")
        }
    }

    pub fn opposite(&self) -> Relation3D {
        Relation3D {
            lateral: -self.lateral,
            vertical: -self.vertical,
            depth_axis: -self.depth_axis,
        }
    }
}

/// Observer-frame 3D position of an entity: p = d * ray(center).
pub fn entity_position(node: &EntityNode) -> Result<[f64; 3], FrameError> {
    let d = node.distance.ok_or_else(|| FrameError::DepthRequired(node.id.clone()))?;
    let r = direction_to_ray(node.footprint.center());
    Ok([d * r.x, d * r.y, d * r.z])
}

/// Componentwise comparison of entity positions with a metric dead-zone.
/// Depth axis convention: (p_a - p_b).z < -eps means a is "in front of" b
/// (nearer the observer along the forward axis).
pub fn relative_3d(a: &EntityNode, b: &EntityNode, len_deadzone: f64) -> Result<Relation3D, FrameError> {
    let pa = entity_position(a)?;
    let pb = entity_position(b)?;
    let diff = [pa[0] - pb[0], pa[1] - pb[1], pa[2] - pb[2]];
    let axis = |v: f64| -> i8 {
        if v > len_deadzone {
            1
        } else if v < -len_deadzone {
            -1
        } else {
            0
        }
    };
    Ok(Relation3D {
        lateral: axis(diff[0]),
        vertical: axis(diff[1]),
        depth_axis: -axis(diff[2]),
    })
}

/// Indices of `nodes` sorted ascending by observer distance, ties broken by
/// id for determinism.
pub fn observer_distance_rank(nodes: &[EntityNode]) -> Result<Vec<usize>, FrameError> {
    for n in nodes {
        if n.distance.is_none() {
            return Err(FrameError::DepthRequired(n.id.clone()));
        }
    }
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&i, &j| {
        nodes[i]
            .distance
            .unwrap()
            .partial_cmp(&nodes[j].distance.unwrap())
            .unwrap()
            .then_with(|| nodes[i].id.cmp(&nodes[j].id))
    });
    Ok(order)
}

/// The entity among `others` minimizing great-circle distance to the anchor
/// center; wrap-aware by construction.
pub fn seam_nearest<'a>(
    anchor: &EntityNode,
    others: &'a [EntityNode],
) -> Result<&'a EntityNode, FrameError> {
    others
        .iter()
        .min_by(|p, q| {
            let dp = angular_distance(anchor.footprint.center(), p.footprint.center());
            let dq = angular_distance(anchor.footprint.center(), q.footprint.center());
            dp.partial_cmp(&dq).unwrap().then_with(|| p.id.cmp(&q.id))
        })
        .ok_or(FrameError::EmptyCandidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EntityNode;
    use crate::sphere::Bfov;
    use approx::assert_abs_diff_eq;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn dir(yaw: f64, pitch: f64) -> SphericalDirection {
        SphericalDirection::from_degrees(yaw, pitch).unwrap()
    }

    fn node(id: &str, yaw: f64, pitch: f64, dist: Option<f64>) -> EntityNode {
        EntityNode {
            id: id.to_string(),
            semantics: "thing".to_string(),
            attributes: vec![],
            description: String::new(),
            phrase: String::new(),
            footprint: Bfov::from_degrees(yaw, pitch, 20.0, 20.0).unwrap(),
            distance: dist,
            context: None,
        }
    }

    #[test]
    fn sector_anchors() {
        let dz = default_angular_deadzone();
        let s = absolute_sector(dir(0.0, 0.0), dz);
        assert_eq!(s.name(), "front");
        let s = absolute_sector(dir(-90.0, 0.0), dz);
        assert_eq!(s.name(), "left");
        let s = absolute_sector(dir(180.0 - 1e-6, 40.0), dz);
        assert_eq!(s.name(), "back-above");
    }

    #[test]
    fn sector_boundaries_half_open() {
        let dz = default_angular_deadzone();
        assert_eq!(absolute_sector(dir(-22.5, 0.0), dz).lateral, LateralSector::Front);
        assert_eq!(absolute_sector(dir(22.5, 0.0), dz).lateral, LateralSector::FrontRight);
        assert_eq!(absolute_sector(dir(-157.5, 0.0), dz).lateral, LateralSector::BackLeft);
        assert_eq!(absolute_sector(dir(-158.0, 0.0), dz).lateral, LateralSector::Back);
    }

    #[test]
    fn sector_shifts_under_rotation() {
        let dz = default_angular_deadzone();
        for k in 0..8i64 {
            let d = dir(0.0, 0.0);
            let rotated = camera_rotate(d, deg_to_rad(45.0 * k as f64));
            // turning right by 45k moves a front target k sectors to the left
            let got = absolute_sector(rotated, dz).lateral.index();
            let want = ((-k).rem_euclid(8)) as usize;
            let want = (LateralSector::Front.index() as i64 + want as i64).rem_euclid(8) as usize;
            assert_eq!(got, want % 8, "k={k}");
        }
    }

    #[test]
    fn relative_direction_cases() {
        let dz = default_angular_deadzone();
        assert_eq!(relative_direction(dir(30.0, 0.0), dir(-30.0, 0.0), dz).name(), "right");
        // wrap: 170 vs -170 is a 20-degree left offset
        assert_eq!(relative_direction(dir(170.0, 0.0), dir(-170.0, 0.0), dz).name(), "left");
        assert_eq!(relative_direction(dir(10.0, 5.0), dir(10.0, 5.0), dz).name(), "aligned");
    }

    #[test]
    fn relative_direction_antisymmetry() {
        let dz = default_angular_deadzone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = dir(rng.gen_range(-180.0..180.0), rng.gen_range(-80.0..80.0));
            let r = dir(rng.gen_range(-180.0..180.0), rng.gen_range(-80.0..80.0));
            let fwd = relative_direction(t, r, dz);
            let rev = relative_direction(r, t, dz);
            // outside the dead-zone (and away from the 180-degree wrap pole,
            // where the yaw delta flips sign without negating) swapping
            // arguments negates both axes
            let d_yaw = wrap_angle(t.yaw() - r.yaw());
            if fwd.lateral != 0 && (d_yaw.abs() - std::f64::consts::PI).abs() > 1e-9 {
                assert_eq!(fwd.lateral, -rev.lateral);
            }
            if fwd.vertical != 0 {
                assert_eq!(fwd.vertical, -rev.vertical);
            }
        }
    }

    #[test]
    fn camera_rotate_cases() {
        let d = camera_rotate(dir(90.0, 0.0), deg_to_rad(90.0));
        assert_abs_diff_eq!(d.yaw(), 0.0, epsilon = 1e-12);
        let d = camera_rotate(dir(90.0, 0.0), deg_to_rad(-90.0));
        assert_abs_diff_eq!(d.yaw(), deg_to_rad(-180.0), epsilon = 1e-12);
    }

    #[test]
    fn camera_rotate_composition_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let d = dir(rng.gen_range(-180.0..180.0), rng.gen_range(-90.0..90.0));
            let a = rng.gen_range(-720.0..720.0);
            let b = rng.gen_range(-720.0..720.0);
            let lhs = camera_rotate(camera_rotate(d, deg_to_rad(a)), deg_to_rad(b));
            let rhs = camera_rotate(d, deg_to_rad(a + b));
            assert!(wrap_angle(lhs.yaw() - rhs.yaw()).abs() < 1e-9);
            let back = camera_rotate(camera_rotate(d, deg_to_rad(a)), deg_to_rad(-a));
            assert!(wrap_angle(back.yaw() - d.yaw()).abs() < 1e-9);
        }
    }

    #[test]
    fn reorient_cases() {
        let d = reorient_to_object(dir(180.0, 0.0), dir(90.0, 0.0));
        assert_abs_diff_eq!(d.yaw(), deg_to_rad(90.0), epsilon = 1e-12);
        let d = reorient_to_object(dir(0.0, 90.0), dir(0.0, 45.0));
        assert_abs_diff_eq!(d.pitch(), deg_to_rad(45.0), epsilon = 1e-12);
        assert_abs_diff_eq!(d.yaw(), 0.0, epsilon = 1e-12);
        // self-reorientation lands on front
        let f = dir(123.0, -37.0);
        let d = reorient_to_object(f, f);
        assert_abs_diff_eq!(d.yaw(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d.pitch(), 0.0, epsilon = 1e-9);
    }

    /// Independent oracle via explicit 3x3 matrix composition.
    fn reorient_matrix_oracle(t: SphericalDirection, f: SphericalDirection) -> SphericalDirection {
        let r = direction_to_ray(t);
        let (sy, cy) = f.yaw().sin_cos();
        let (sp, cp) = f.pitch().sin_cos();
        // R = Rx(-pitch) * Ry(-yaw); rows of the product
        let m = [
            [cy, 0.0, -sy],
            [-sy * sp, cp, -cy * sp],
            [sy * cp, sp, cy * cp],
        ];
        let v = [
            m[0][0] * r.x + m[0][1] * r.y + m[0][2] * r.z,
            m[1][0] * r.x + m[1][1] * r.y + m[1][2] * r.z,
            m[2][0] * r.x + m[2][1] * r.y + m[2][2] * r.z,
        ];
        ray_to_direction(UnitRay::from_vec(v[0], v[1], v[2]).unwrap()).unwrap()
    }

    #[test]
    fn reorient_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10_000 {
            let t = dir(rng.gen_range(-180.0..180.0), rng.gen_range(-89.0..89.0));
            let f = dir(rng.gen_range(-180.0..180.0), rng.gen_range(-89.0..89.0));
            let a = reorient_to_object(t, f);
            let b = reorient_matrix_oracle(t, f);
            assert!(wrap_angle(a.yaw() - b.yaw()).abs() < 1e-9, "{a:?} vs {b:?}");
            assert!((a.pitch() - b.pitch()).abs() < 1e-9);
        }
    }

    #[test]
    fn reorient_pitch_zero_equals_camera_rotate() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..1000 {
            let t = dir(rng.gen_range(-180.0..180.0), rng.gen_range(-89.0..89.0));
            let yaw = rng.gen_range(-180.0..180.0);
            let a = reorient_to_object(t, dir(yaw, 0.0));
            let b = camera_rotate(t, deg_to_rad(yaw));
            assert!(wrap_angle(a.yaw() - b.yaw()).abs() < 1e-9);
            assert!((a.pitch() - b.pitch()).abs() < 1e-9);
        }
    }

    #[test]
    fn relative_3d_cases() {
        let a = node("a", 0.0, 0.0, Some(2.0));
        let b = node("b", 0.0, 0.0, Some(5.0));
        let r = relative_3d(&a, &b, DEFAULT_LEN_DEADZONE).unwrap();
        assert_eq!((r.depth_axis, r.lateral, r.vertical), (1, 0, 0));
        assert!(r.name().contains("in front of"));

        let a = node("a", 90.0, 0.0, Some(3.0));
        let b = node("b", -90.0, 0.0, Some(3.0));
        let r = relative_3d(&a, &b, DEFAULT_LEN_DEADZONE).unwrap();
        assert_eq!(r.name(), "right");
    }

    #[test]
    fn relative_3d_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..500 {
            let a = node("a", rng.gen_range(-180.0..180.0), rng.gen_range(-80.0..80.0), Some(rng.gen_range(0.5..10.0)));
            let b = node("b", rng.gen_range(-180.0..180.0), rng.gen_range(-80.0..80.0), Some(rng.gen_range(0.5..10.0)));
            let k = rng.gen_range(0.1..10.0);
            let scale = |n: &EntityNode| {
                let mut m = n.clone();
                m.distance = Some(n.distance.unwrap() * k);
                m
            };
            let base = relative_3d(&a, &b, DEFAULT_LEN_DEADZONE).unwrap();
            let scaled = relative_3d(&scale(&a), &scale(&b), DEFAULT_LEN_DEADZONE * k).unwrap();
            assert_eq!(base, scaled);
        }
    }

    #[test]
    fn relative_3d_requires_depth() {
        let a = node("a", 0.0, 0.0, None);
        let b = node("b", 0.0, 0.0, Some(1.0));
        assert_eq!(
            relative_3d(&a, &b, DEFAULT_LEN_DEADZONE),
            Err(FrameError::DepthRequired("a".to_string()))
        );
    }

    #[test]
    fn distance_rank_cases() {
        let nodes = vec![
            node("a", 0.0, 0.0, Some(5.0)),
            node("b", 10.0, 0.0, Some(2.0)),
            node("c", 20.0, 0.0, Some(9.0)),
        ];
        assert_eq!(observer_distance_rank(&nodes).unwrap(), vec![1, 0, 2]);
        let ties = vec![node("b", 0.0, 0.0, Some(3.0)), node("a", 5.0, 0.0, Some(3.0))];
        assert_eq!(observer_distance_rank(&ties).unwrap(), vec![1, 0]);
    }

    #[test]
    fn distance_rank_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nodes: Vec<EntityNode> = (0..100)
            .map(|i| node(&format!("n{i:03}"), rng.gen_range(-180.0..180.0), 0.0, Some(rng.gen_range(0.1..50.0))))
            .collect();
        let order = observer_distance_rank(&nodes).unwrap();
        let mut pairs: Vec<(f64, String)> =
            nodes.iter().map(|n| (n.distance.unwrap(), n.id.clone())).collect();
        pairs.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let want: Vec<String> = pairs.into_iter().map(|(_, id)| id).collect();
        let got: Vec<String> = order.into_iter().map(|i| nodes[i].id.clone()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn seam_nearest_prefers_cross_seam() {
        let anchor = node("anchor", 178.0, 0.0, None);
        let others = vec![node("far", 150.0, 0.0, None), node("near", -179.0, 0.0, None)];
        assert_eq!(seam_nearest(&anchor, &others).unwrap().id, "near");
        assert_eq!(seam_nearest(&anchor, &others[..1]).unwrap().id, "far");
        assert_eq!(seam_nearest(&anchor, &[]), Err(FrameError::EmptyCandidates));
    }

    #[test]
    fn seam_nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..1000 {
            let anchor = node("anchor", rng.gen_range(160.0..180.0), rng.gen_range(-60.0..60.0), None);
            let others: Vec<EntityNode> = (0..6)
                .map(|i| node(&format!("o{i}"), rng.gen_range(-180.0..180.0), rng.gen_range(-60.0..60.0), None))
                .collect();
            let got = seam_nearest(&anchor, &others).unwrap();
            let want = others
                .iter()
                .map(|o| (angular_distance(anchor.footprint.center(), o.footprint.center()), &o.id))
                .min_by(|p, q| p.partial_cmp(q).unwrap())
                .unwrap()
                .1;
            assert_eq!(&got.id, want);
        }
    }
}
