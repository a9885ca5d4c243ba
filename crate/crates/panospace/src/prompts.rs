//! Byte-stable prompt templates and the coordinate-grid overlay used for
//! visual prompting. Everything here must render identically across runs
//! and platforms: LF endings, fixed colors, an embedded bitmap font.

use sha2::{Digest, Sha256};

use crate::erp::ErpImage;

/// Stable id under which task files reference the system prompt.
pub use crate::taskgen::SYSTEM_PROMPT_REF;

pub const SYSTEM_PROMPT: &str = "\
You are a multimodal assistant specialized in ERP (equirectangular projection) panoramic image understanding.

The input image is an ERP panorama representing the full 360-degree surrounding scene captured from a single fixed viewpoint. It should be interpreted as a continuous panoramic observation centered at the current observer, rather than as a standard perspective image.

All directional and spatial judgments are defined in an observer-centered reference frame anchored at the current observer. The image center corresponds to the current front direction.

BFOV is represented as [yaw, pitch, x_fov, y_fov] in degrees. In this representation, yaw and pitch denote the center direction of the target object, while x_fov and y_fov denote the angular width and angular height covering the target object.

Positive yaw corresponds to the observer's right, and negative yaw corresponds to the observer's left. Positive pitch corresponds to the upward direction, and negative pitch corresponds to the downward direction. The valid range of yaw is [-180, 180), the valid range of pitch is [-90, 90), and the valid ranges of x_fov and y_fov are (0, 180].

Relative direction is defined by comparing the center direction of the target object with that of the reference object while keeping the current observer orientation fixed.

Camera rotation is defined as an in-place change of observer orientation without any change in observer position. Under this operation, the current front direction is updated according to the specified turn angle and turn direction, and the target object is then judged in the rotated observer frame.

Object-conditioned reorientation is defined as an in-place reorientation in which the center direction of the specified facing object becomes the new front direction. The target object is then judged in the reoriented observer frame.

Physical distance is defined in scene 3D space relative to the current observer, namely the current camera position.

Relative 3D position is defined as the positional relation of one object to another in the current observer-centered 3D frame.

Return only the requested answer in the required format unless explicitly instructed otherwise.
";

pub const TEXT_APPENDIX: &str = "\
Reference System (Equirectangular Projection):
- Image center: yaw 0 degrees, corresponding to the front direction.
- Left and right image boundaries: yaw +-180 degrees, corresponding to the back direction.
- Yaw 90 degrees: one quarter of the image width to the right of the center.
- Yaw -90 degrees: one quarter of the image width to the left of the center.
- Vertical axis: pitch 0 degrees is the horizon, pitch 90 degrees is the top (zenith), and pitch -90 degrees is the bottom (nadir).
";

pub const VISUAL_APPENDIX: &str = "\
Visual Guidance System:
- The image is overlaid with a coordinate grid and numerical labels.
- Green vertical lines represent yaw angles. Numerical labels (e.g., -180, -150, ..., 0, ..., 180) are shown at the top and bottom.
- Blue horizontal lines represent pitch angles. Numerical labels (e.g., -90, -75, ..., 0, ..., 90) are shown at the left and right ends.
- A yellow crosshair marks the front direction at (0, 0).

Task: Use the visual grid lines and numerical labels as a ruler to estimate the target center direction [yaw, pitch]. Interpolate between lines if the target does not lie exactly on a grid intersection.
";

/// The three prompt templates plus their content hashes.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub text_appendix: String,
    pub visual_appendix: String,
}

pub fn emit_prompts() -> PromptBundle {
    PromptBundle {
        system_prompt: SYSTEM_PROMPT.to_string(),
        text_appendix: TEXT_APPENDIX.to_string(),
        visual_appendix: VISUAL_APPENDIX.to_string(),
    }
}

pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    format!("{:x}", h.finalize())
}

impl PromptBundle {
    /// (name, sha256) per template, for report headers.
    pub fn hashes(&self) -> Vec<(&'static str, String)> {
        vec![
            ("system_prompt", content_hash(&self.system_prompt)),
            ("text_appendix", content_hash(&self.text_appendix)),
            ("visual_appendix", content_hash(&self.visual_appendix)),
        ]
    }
}

/// Overlay parameters; fixed full-intensity colors, 1 px lines.
#[derive(Debug, Clone, Copy)]
pub struct GridStyle {
    pub yaw_step_deg: f64,
    pub pitch_step_deg: f64,
    pub yaw_color: [f64; 3],
    pub pitch_color: [f64; 3],
    pub crosshair_color: [f64; 3],
}

impl Default for GridStyle {
    fn default() -> Self {
        Self {
            yaw_step_deg: 30.0,
            pitch_step_deg: 15.0,
            yaw_color: [0.0, 255.0, 0.0],
            pitch_color: [0.0, 0.0, 255.0],
            crosshair_color: [255.0, 255.0, 0.0],
        }
    }
}

impl GridStyle {
    pub fn validate(&self) -> Result<(), String> {
        let divides = |whole: f64, step: f64| step > 0.0 && (whole / step).fract().abs() < 1e-9;
        if !divides(360.0, self.yaw_step_deg) {
            return Err(format!("yaw step {} does not divide 360", self.yaw_step_deg));
        }
        if !divides(180.0, self.pitch_step_deg) {
            return Err(format!("pitch step {} does not divide 180", self.pitch_step_deg));
        }
        Ok(())
    }
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Column of the vertical line for a yaw angle in degrees.
pub fn yaw_column(yaw_deg: f64, width: u32) -> u32 {
    let u = round_half_up((yaw_deg / 360.0 + 0.5) * width as f64);
    (u.rem_euclid(width as i64)) as u32
}

/// Row of the horizontal line for a pitch angle in degrees.
pub fn pitch_row(pitch_deg: f64, height: u32) -> u32 {
    let v = round_half_up((0.5 - pitch_deg / 180.0) * height as f64);
    v.clamp(0, height as i64 - 1) as u32
}

/// Yaw angles drawn, one line each; +180 coincides with -180 and is skipped.
pub fn grid_yaws(style: &GridStyle) -> Vec<i32> {
    let step = style.yaw_step_deg as i32;
    (-180..180).step_by(step as usize).collect()
}

pub fn grid_pitches(style: &GridStyle) -> Vec<i32> {
    let step = style.pitch_step_deg as i32;
    (-90..=90).step_by(step as usize).collect()
}

// 3x5 bitmap glyphs for digits and minus, row-major, bit 0 = top-left.
fn glyph(c: char) -> u16 {
    match c {
        '0' => 0b111_101_101_101_111,
        '1' => 0b010_110_010_010_111,
        '2' => 0b111_001_111_100_111,
        '3' => 0b111_001_111_001_111,
        '4' => 0b101_101_111_001_001,
        '5' => 0b111_100_111_001_111,
        '6' => 0b111_100_111_101_111,
        '7' => 0b111_001_010_010_010,
        '8' => 0b111_101_111_101_111,
        '9' => 0b111_101_111_001_111,
        '-' => 0b000_000_111_000_000,
        _ => 0,
    }
}

fn draw_pixel(img: &mut ErpImage, u: i64, v: i64, color: [f64; 3]) {
    if u < 0 || v < 0 || u >= img.width() as i64 || v >= img.height() as i64 {
        return;
    }
    for (c, &val) in color.iter().enumerate() {
        img.set(u as u32, v as u32, c as u8, val);
    }
}

fn draw_text(img: &mut ErpImage, text: &str, left: i64, top: i64, color: [f64; 3]) {
    let mut x = left;
    for c in text.chars() {
        let bits = glyph(c);
        for row in 0..5i64 {
            for col in 0..3i64 {
                if bits >> (14 - (row * 3 + col)) & 1 == 1 {
                    draw_pixel(img, x + col, top + row, color);
                }
            }
        }
        x += 4;
    }
}

const LABEL_MARGIN: i64 = 2;

/// Draw the coordinate grid, border labels, and center crosshair onto a
/// copy of the panorama. Idempotent: drawing twice equals drawing once.
pub fn render_grid(erp: &ErpImage, style: &GridStyle) -> Result<ErpImage, String> {
    style.validate()?;
    if erp.channels() != 3 {
        return Err(format!("grid overlay needs a 3-channel image, got {}", erp.channels()));
    }
    let mut img = erp.clone();
    let (w, h) = (erp.width(), erp.height());
    // pitch lines first so yaw lines win at intersections, then labels
    for &pitch in &grid_pitches(style) {
        let v = pitch_row(pitch as f64, h) as i64;
        for u in 0..w as i64 {
            draw_pixel(&mut img, u, v, style.pitch_color);
        }
    }
    for &yaw in &grid_yaws(style) {
        let u = yaw_column(yaw as f64, w) as i64;
        for v in 0..h as i64 {
            draw_pixel(&mut img, u, v, style.yaw_color);
        }
    }
    for &pitch in &grid_pitches(style) {
        let v = pitch_row(pitch as f64, h) as i64;
        let text = pitch.to_string();
        let top = (v - 6).max(LABEL_MARGIN).min(h as i64 - 7);
        draw_text(&mut img, &text, LABEL_MARGIN, top, style.pitch_color);
        let width_px = text.chars().count() as i64 * 4 - 1;
        draw_text(&mut img, &text, w as i64 - LABEL_MARGIN - width_px, top, style.pitch_color);
    }
    for &yaw in &grid_yaws(style) {
        let u = yaw_column(yaw as f64, w) as i64;
        let text = yaw.to_string();
        let left = (u + LABEL_MARGIN).min(w as i64 - LABEL_MARGIN - text.chars().count() as i64 * 4);
        draw_text(&mut img, &text, left, LABEL_MARGIN, style.yaw_color);
        draw_text(&mut img, &text, left, h as i64 - LABEL_MARGIN - 5, style.yaw_color);
    }
    // crosshair at the ERP center (yaw 0, pitch 0)
    let cx = (w / 2) as i64;
    let cy = (h / 2) as i64;
    for off in -8..=8i64 {
        draw_pixel(&mut img, cx + off, cy, style.crosshair_color);
        draw_pixel(&mut img, cx, cy + off, style.crosshair_color);
    }
    Ok(img)
}
