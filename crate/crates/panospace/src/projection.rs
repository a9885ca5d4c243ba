//! Gnomonic (perspective) view rendering from ERP and reprojection of
//! perspective-view detections back to ERP BFOVs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::erp::ErpImage;
use crate::sphere::{
    self, direction_to_pixel, minimal_yaw_interval, ray_to_direction, wrap_angle, Bfov,
    SphericalDirection, UnitRay, TAU,
};

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("fov {name}={value_deg} degrees must be in (0, 180)")]
    BadFov { name: &'static str, value_deg: f64 },
    #[error("output dimension {name} must be positive")]
    BadDimension { name: &'static str },
    #[error("yaw stride {stride_deg} degrees does not divide 360")]
    StrideNotDividing { stride_deg: f64 },
    #[error("h_fov must exceed the yaw stride so adjacent views overlap")]
    NoOverlap,
    #[error("pixel ({x}, {y}) outside the {w}x{h} view raster")]
    OutOfRaster { x: f64, y: f64, w: u32, h: u32 },
    #[error("box [{x_min}, {y_min}, {x_max}, {y_max}] is degenerate or outside the raster")]
    BadBox { x_min: f64, y_min: f64, x_max: f64, y_max: f64 },
    #[error(transparent)]
    Geom(#[from] sphere::GeomError),
    #[error(transparent)]
    Erp(#[from] crate::erp::ErpError),
}

/// One perspective view: center direction, FoV, and output raster size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerspViewSpec {
    pub view_yaw: f64,
    pub view_pitch: f64,
    pub h_fov: f64,
    pub v_fov: f64,
    pub out_width: u32,
    pub out_height: u32,
}

impl PerspViewSpec {
    pub fn new(
        view_yaw: f64,
        view_pitch: f64,
        h_fov: f64,
        v_fov: f64,
        out_width: u32,
        out_height: u32,
    ) -> Result<Self, ProjectionError> {
        if !(h_fov > 0.0 && h_fov < PI) {
            return Err(ProjectionError::BadFov { name: "h_fov", value_deg: sphere::rad_to_deg(h_fov) });
        }
        if !(v_fov > 0.0 && v_fov < PI) {
            return Err(ProjectionError::BadFov { name: "v_fov", value_deg: sphere::rad_to_deg(v_fov) });
        }
        if out_width == 0 {
            return Err(ProjectionError::BadDimension { name: "out_width" });
        }
        if out_height == 0 {
            return Err(ProjectionError::BadDimension { name: "out_height" });
        }
        Ok(Self { view_yaw: wrap_angle(view_yaw), view_pitch, h_fov, v_fov, out_width, out_height })
    }

    pub fn center(&self) -> SphericalDirection {
        SphericalDirection::new(self.view_yaw, self.view_pitch).expect("valid view center")
    }

    /// Angular footprint of the view as a BFOV (yaw extent = h_fov at the
    /// center pitch; an approximation used for overlap-region reasoning).
    pub fn footprint(&self) -> Bfov {
        Bfov::new(self.center(), self.h_fov, self.v_fov).expect("valid view footprint")
    }
}

/// Axis-aligned detector box in a perspective view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerspBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub confidence: f64,
    pub label: String,
}

impl PerspBox {
    pub fn validate(&self, spec: &PerspViewSpec) -> Result<(), ProjectionError> {
        let ok = self.x_min < self.x_max
            && self.y_min < self.y_max
            && self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= spec.out_width as f64
            && self.y_max <= spec.out_height as f64;
        if ok {
            Ok(())
        } else {
            Err(ProjectionError::BadBox {
                x_min: self.x_min,
                y_min: self.y_min,
                x_max: self.x_max,
                y_max: self.y_max,
            })
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Planar IoU of two perspective boxes.
pub fn planar_iou(a: &PerspBox, b: &PerspBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// One view per (ring pitch x yaw multiple of stride), yaws starting at
/// -180 degrees. The default pipeline set is h_fov 120 degrees, stride 60
/// degrees, single pitch-0 ring: 6 views with 60 degrees pairwise overlap.
pub fn generate_view_set(
    h_fov: f64,
    v_fov: f64,
    yaw_stride: f64,
    pitch_rings: &[f64],
    out_width: u32,
    out_height: u32,
) -> Result<Vec<PerspViewSpec>, ProjectionError> {
    let per_ring = TAU / yaw_stride;
    if (per_ring - per_ring.round()).abs() > 1e-9 || yaw_stride <= 0.0 {
        return Err(ProjectionError::StrideNotDividing { stride_deg: sphere::rad_to_deg(yaw_stride) });
    }
    if h_fov < yaw_stride {
        return Err(ProjectionError::NoOverlap);
    }
    let per_ring = per_ring.round() as usize;
    let mut views = Vec::with_capacity(per_ring * pitch_rings.len());
    for &pitch in pitch_rings {
        for k in 0..per_ring {
            let yaw = -PI + k as f64 * yaw_stride;
            views.push(PerspViewSpec::new(yaw, pitch, h_fov, v_fov, out_width, out_height)?);
        }
    }
    Ok(views)
}

/// World ray of the camera-frame ray (xc, yc, zc) under the view's
/// yaw-then-pitch rotation (zero roll).
fn camera_to_world(spec: &PerspViewSpec, xc: f64, yc: f64, zc: f64) -> UnitRay {
    let (sp, cp) = spec.view_pitch.sin_cos();
    let (sy, cy) = spec.view_yaw.sin_cos();
    // pitch about +x: lifts +z toward +y
    let y1 = yc * cp + zc * sp;
    let z1 = -yc * sp + zc * cp;
    let x1 = xc;
    // yaw about +y: turns +z toward +x
    let x2 = x1 * cy + z1 * sy;
    let z2 = -x1 * sy + z1 * cy;
    UnitRay::from_vec(x2, y1, z2).expect("camera ray is non-zero")
}

/// World direction of a continuous pixel position in the view raster.
/// x in [0, out_width], y in [0, out_height]; the raster center maps to
/// the view center exactly.
pub fn persp_pixel_to_direction(
    spec: &PerspViewSpec,
    x: f64,
    y: f64,
) -> Result<SphericalDirection, ProjectionError> {
    let (w, h) = (spec.out_width as f64, spec.out_height as f64);
    if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
        return Err(ProjectionError::OutOfRaster { x, y, w: spec.out_width, h: spec.out_height });
    }
    let xc = (2.0 * x / w - 1.0) * (spec.h_fov / 2.0).tan();
    let yc = (1.0 - 2.0 * y / h) * (spec.v_fov / 2.0).tan();
    let ray = camera_to_world(spec, xc, yc, 1.0);
    Ok(ray_to_direction(ray)?)
}

/// Render a gnomonic perspective view by bilinear sampling of the ERP with
/// horizontal wrap and vertical clamp.
pub fn render_perspective(erp: &ErpImage, spec: &PerspViewSpec) -> Result<Vec<Vec<[f64; 3]>>, ProjectionError> {
    if erp.width() != 2 * erp.height() {
        return Err(crate::erp::ErpError::BadAspect { w: erp.width(), h: erp.height() }.into());
    }
    let mut out = vec![vec![[0.0; 3]; spec.out_width as usize]; spec.out_height as usize];
    for py in 0..spec.out_height {
        for px in 0..spec.out_width {
            let d = persp_pixel_to_direction(spec, px as f64 + 0.5, py as f64 + 0.5)?;
            let (u, v) = direction_to_pixel(d, erp.width(), erp.height());
            for c in 0..3u8 {
                out[py as usize][px as usize][c as usize] = erp.sample_wrap(u, v, c);
            }
        }
    }
    Ok(out)
}

/// Reproject a perspective box to the minimal wrap-aware angular rectangle
/// covering its boundary samples, expressed as a BFOV.
pub fn persp_box_to_bfov(
    spec: &PerspViewSpec,
    pbox: &PerspBox,
    samples_per_edge: usize,
) -> Result<Bfov, ProjectionError> {
    pbox.validate(spec)?;
    let n = samples_per_edge.max(2);
    let mut yaws = Vec::with_capacity(4 * n);
    let mut pitch_lo = f64::INFINITY;
    let mut pitch_hi = f64::NEG_INFINITY;
    let mut push = |d: SphericalDirection, yaws: &mut Vec<f64>| {
        yaws.push(d.yaw());
        pitch_lo = pitch_lo.min(d.pitch());
        pitch_hi = pitch_hi.max(d.pitch());
    };
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let x = pbox.x_min + t * (pbox.x_max - pbox.x_min);
        let y = pbox.y_min + t * (pbox.y_max - pbox.y_min);
        push(persp_pixel_to_direction(spec, x, pbox.y_min)?, &mut yaws);
        push(persp_pixel_to_direction(spec, x, pbox.y_max)?, &mut yaws);
        push(persp_pixel_to_direction(spec, pbox.x_min, y)?, &mut yaws);
        push(persp_pixel_to_direction(spec, pbox.x_max, y)?, &mut yaws);
    }
    let (start, width) = minimal_yaw_interval(&yaws);
    rect_to_bfov(start, width, pitch_lo, pitch_hi)
}

/// BFOV whose rectangle is the given (start, width) yaw interval and pitch
/// band. Degenerate extents are widened to a minimal epsilon so the Bfov
/// invariant (fov > 0) holds.
pub fn rect_to_bfov(
    yaw_start: f64,
    yaw_width: f64,
    pitch_lo: f64,
    pitch_hi: f64,
) -> Result<Bfov, ProjectionError> {
    let eps = 1e-9;
    let x_fov = yaw_width.max(eps).min(PI);
    let y_fov = (pitch_hi - pitch_lo).max(eps).min(PI);
    let center_yaw = wrap_angle(yaw_start + yaw_width / 2.0);
    let center_pitch = ((pitch_lo + pitch_hi) / 2.0).clamp(-PI / 2.0, PI / 2.0);
    Ok(Bfov::new(SphericalDirection::new(center_yaw, center_pitch)?, x_fov, y_fov)?)
}
