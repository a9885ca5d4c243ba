//! ERP/sphere coordinate algebra: pixel/direction/ray conversions, yaw wrap
//! handling, angular distance, and the wrap-aware BFOV angular rectangle.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TAU: f64 = 2.0 * PI;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("pixel coordinate {name}={value} outside [0, {max})")]
    PixelOutOfRange { name: &'static str, value: f64, max: f64 },
    #[error("image dimension {name}={value} must be positive")]
    BadDimension { name: &'static str, value: i64 },
    #[error("pitch {0} outside [-pi/2, pi/2]")]
    PitchOutOfRange(f64),
    #[error("ray norm {0} deviates from 1 by more than 1e-9")]
    NotUnit(f64),
    #[error("fov {name}={value} outside (0, pi]")]
    FovOutOfRange { name: &'static str, value: f64 },
}

/// Wrap an angle into [-pi, pi).
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(TAU) - PI;
    // rem_euclid can land exactly on pi for inputs like pi - tiny*eps
    if r >= PI {
        r = -PI;
    }
    r
}

pub fn deg_to_rad(d: f64) -> f64 {
    d * PI / 180.0
}

pub fn rad_to_deg(r: f64) -> f64 {
    r * 180.0 / PI
}

/// Observer-centered direction: yaw in [-pi, pi), pitch in [-pi/2, pi/2].
///
/// Positive yaw is the observer's right, positive pitch is up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalDirection {
    yaw: f64,
    pitch: f64,
}

impl SphericalDirection {
    /// Normalizes yaw into [-pi, pi); rejects out-of-range pitch.
    pub fn new(yaw: f64, pitch: f64) -> Result<Self, GeomError> {
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&pitch) || !pitch.is_finite() {
            return Err(GeomError::PitchOutOfRange(pitch));
        }
        Ok(Self { yaw: wrap_angle(yaw), pitch })
    }

    pub fn from_degrees(yaw_deg: f64, pitch_deg: f64) -> Result<Self, GeomError> {
        Self::new(deg_to_rad(yaw_deg), deg_to_rad(pitch_deg))
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn yaw_deg(&self) -> f64 {
        rad_to_deg(self.yaw)
    }

    pub fn pitch_deg(&self) -> f64 {
        rad_to_deg(self.pitch)
    }
}

/// Unit vector in the observer frame: +z front, +x right, +y up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitRay {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitRay {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, GeomError> {
        let norm = (x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(GeomError::NotUnit(norm));
        }
        Ok(Self { x, y, z })
    }

    /// Normalizes an arbitrary non-zero vector.
    pub fn from_vec(x: f64, y: f64, z: f64) -> Result<Self, GeomError> {
        let norm = (x * x + y * y + z * z).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(GeomError::NotUnit(norm));
        }
        Ok(Self { x: x / norm, y: y / norm, z: z / norm })
    }

    pub fn dot(&self, other: &UnitRay) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }
}

/// Yaw/pitch of the continuous ERP pixel (u, v). u is the top-left sample
/// coordinate; pixel centers add +0.5 at call sites.
pub fn pixel_to_direction(u: f64, v: f64, w: u32, h: u32) -> Result<SphericalDirection, GeomError> {
    if w == 0 {
        return Err(GeomError::BadDimension { name: "W", value: w as i64 });
    }
    if h == 0 {
        return Err(GeomError::BadDimension { name: "H", value: h as i64 });
    }
    let (wf, hf) = (w as f64, h as f64);
    if !(0.0..wf).contains(&u) {
        return Err(GeomError::PixelOutOfRange { name: "u", value: u, max: wf });
    }
    if !(0.0..=hf).contains(&v) {
        return Err(GeomError::PixelOutOfRange { name: "v", value: v, max: hf });
    }
    let yaw = TAU * (u / wf - 0.5);
    let pitch = PI * (0.5 - v / hf);
    SphericalDirection::new(yaw, pitch)
}

/// Exact inverse of [`pixel_to_direction`]; u in [0, W), v in [0, H].
pub fn direction_to_pixel(d: SphericalDirection, w: u32, h: u32) -> (f64, f64) {
    let u = (d.yaw() / TAU + 0.5) * w as f64;
    let v = (0.5 - d.pitch() / PI) * h as f64;
    // wrap_angle can return exactly pi from -pi - eps inputs only via yaw
    // normalization; clamp the half-open side.
    (u.clamp(0.0, (w as f64).next_down()), v.clamp(0.0, h as f64))
}

pub fn direction_to_ray(d: SphericalDirection) -> UnitRay {
    let (sy, cy) = d.yaw().sin_cos();
    let (sp, cp) = d.pitch().sin_cos();
    UnitRay { x: cp * sy, y: sp, z: cp * cy }
}

/// Inverse of [`direction_to_ray`]. At the poles (|y| -> 1) yaw is 0 by
/// convention so equality tests have a canonical form.
pub fn ray_to_direction(r: UnitRay) -> Result<SphericalDirection, GeomError> {
    let norm = (r.x * r.x + r.y * r.y + r.z * r.z).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(GeomError::NotUnit(norm));
    }
    let pitch = r.y.clamp(-1.0, 1.0).asin();
    let yaw = if r.x == 0.0 && r.z == 0.0 { 0.0 } else { r.x.atan2(r.z) };
    SphericalDirection::new(yaw, pitch)
}

/// Great-circle angle between two directions, in [0, pi].
pub fn angular_distance(a: SphericalDirection, b: SphericalDirection) -> f64 {
    let d = direction_to_ray(a).dot(&direction_to_ray(b));
    d.clamp(-1.0, 1.0).acos()
}

/// Angular footprint [yaw, pitch, x_fov, y_fov]. The unit of grounding and
/// the IoU operand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bfov {
    center: SphericalDirection,
    x_fov: f64,
    y_fov: f64,
}

impl Bfov {
    pub fn new(center: SphericalDirection, x_fov: f64, y_fov: f64) -> Result<Self, GeomError> {
        if !(x_fov > 0.0 && x_fov <= PI) {
            return Err(GeomError::FovOutOfRange { name: "x_fov", value: x_fov });
        }
        if !(y_fov > 0.0 && y_fov <= PI) {
            return Err(GeomError::FovOutOfRange { name: "y_fov", value: y_fov });
        }
        Ok(Self { center, x_fov, y_fov })
    }

    pub fn from_degrees(yaw: f64, pitch: f64, x_fov: f64, y_fov: f64) -> Result<Self, GeomError> {
        Self::new(
            SphericalDirection::from_degrees(yaw, pitch)?,
            deg_to_rad(x_fov),
            deg_to_rad(y_fov),
        )
    }

    pub fn center(&self) -> SphericalDirection {
        self.center
    }

    pub fn x_fov(&self) -> f64 {
        self.x_fov
    }

    pub fn y_fov(&self) -> f64 {
        self.y_fov
    }

    /// Angular rectangle with the pitch band truncated to [-pi/2, pi/2].
    /// The stored fields are never mutated by truncation.
    pub fn rect(&self) -> AngularRect {
        let pitch_lo = (self.center.pitch() - self.y_fov / 2.0).max(-FRAC_PI_2);
        let pitch_hi = (self.center.pitch() + self.y_fov / 2.0).min(FRAC_PI_2);
        AngularRect {
            yaw_start: wrap_angle(self.center.yaw() - self.x_fov / 2.0),
            yaw_width: self.x_fov,
            pitch_lo,
            pitch_hi,
        }
    }

    /// Canonical degree-valued text form "[yaw, pitch, x_fov, y_fov]".
    pub fn to_text(&self) -> String {
        format!(
            "[{:.2}, {:.2}, {:.2}, {:.2}]",
            self.center.yaw_deg(),
            self.center.pitch_deg(),
            rad_to_deg(self.x_fov),
            rad_to_deg(self.y_fov)
        )
    }
}

/// Rectangle on the yaw-pitch domain. The yaw interval lives on the circle
/// as (start, width) so wrapped intervals need no seam special cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularRect {
    pub yaw_start: f64,
    pub yaw_width: f64,
    pub pitch_lo: f64,
    pub pitch_hi: f64,
}

impl AngularRect {
    pub fn area(&self) -> f64 {
        self.yaw_width * (self.pitch_hi - self.pitch_lo).max(0.0)
    }

    /// Membership of a direction, wrap-aware in yaw.
    pub fn contains(&self, d: SphericalDirection) -> bool {
        if d.pitch() < self.pitch_lo || d.pitch() > self.pitch_hi {
            return false;
        }
        let off = (d.yaw() - self.yaw_start).rem_euclid(TAU);
        off <= self.yaw_width
    }
}

/// Overlap length of two circular intervals given as (start, width),
/// width <= 2*pi.
fn circular_overlap(s0: f64, w0: f64, s1: f64, w1: f64) -> f64 {
    // shift interval 1 relative to interval 0; it can overlap either the
    // [0, w0] copy or the copy one turn earlier
    let d = (s1 - s0).rem_euclid(TAU);
    let seg = |a: f64, b: f64| -> f64 { (w0.min(b) - a.max(0.0)).max(0.0) };
    let overlap = seg(d, d + w1) + seg(d - TAU, d - TAU + w1);
    overlap.min(w0).min(w1)
}

/// Wrap-aware IoU of two BFOV angular rectangles on the yaw-pitch domain.
pub fn bfov_iou(a: &Bfov, b: &Bfov) -> f64 {
    let ra = a.rect();
    let rb = b.rect();
    let yaw_inter = circular_overlap(ra.yaw_start, ra.yaw_width, rb.yaw_start, rb.yaw_width);
    let pitch_inter = (ra.pitch_hi.min(rb.pitch_hi) - ra.pitch_lo.max(rb.pitch_lo)).max(0.0);
    let inter = yaw_inter * pitch_inter;
    let union = ra.area() + rb.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Smallest circular yaw interval containing all the given yaws, as
/// (start, width). The interval is the complement of the largest gap
/// between sorted yaws.
pub fn minimal_yaw_interval(yaws: &[f64]) -> (f64, f64) {
    assert!(!yaws.is_empty(), "minimal_yaw_interval needs at least one yaw");
    let mut sorted: Vec<f64> = yaws.iter().map(|&y| wrap_angle(y)).collect();
    sorted.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = sorted.len();
    if n == 1 {
        return (sorted[0], 0.0);
    }
    let mut best_gap = TAU - sorted[n - 1] + sorted[0];
    let mut start = sorted[0];
    for i in 1..n {
        let gap = sorted[i] - sorted[i - 1];
        if gap > best_gap {
            best_gap = gap;
            start = sorted[i];
        }
    }
    (start, TAU - best_gap)
}
