//! ERP raster container shared by color panoramas and depth maps.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ErpError {
    #[error("ERP aspect must be W = 2H, got {w}x{h}")]
    BadAspect { w: u32, h: u32 },
    #[error("depth sample at ({x}, {y}) is {value}, must be finite and >= 0")]
    BadDepthSample { x: u32, y: u32, value: f64 },
    #[error("expected {expected} channels, got {got}")]
    ChannelMismatch { expected: u8, got: u8 },
    #[error("data length {got} does not match {w}x{h}x{channels}")]
    DataLength { got: usize, w: u32, h: u32, channels: u8 },
    #[error("image io: {0}")]
    Io(#[from] image::ImageError),
    #[error("file io: {0}")]
    File(#[from] std::io::Error),
}

/// Full-surround ERP raster. Color images carry 3 channels of 8-bit samples
/// stored as f64 in [0, 255]; depth maps carry 1 channel of nonnegative
/// finite meters.
#[derive(Debug, Clone)]
pub struct ErpImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<f64>,
}

impl ErpImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<f64>) -> Result<Self, ErpError> {
        if width != 2 * height || height == 0 {
            return Err(ErpError::BadAspect { w: width, h: height });
        }
        let expect = width as usize * height as usize * channels as usize;
        if data.len() != expect {
            return Err(ErpError::DataLength { got: data.len(), w: width, h: height, channels });
        }
        if channels == 1 {
            for (i, &v) in data.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    let x = (i % width as usize) as u32;
                    let y = (i / width as usize) as u32;
                    return Err(ErpError::BadDepthSample { x, y, value: v });
                }
            }
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn constant_color(width: u32, height: u32, rgb: [f64; 3]) -> Result<Self, ErpError> {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self::new(width, height, 3, data)
    }

    pub fn constant_depth(width: u32, height: u32, meters: f64) -> Result<Self, ErpError> {
        let n = width as usize * height as usize;
        Self::new(width, height, 1, vec![meters; n])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn get(&self, x: u32, y: u32, c: u8) -> f64 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y as usize * self.width as usize + x as usize) * self.channels as usize + c as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: u8, v: f64) {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y as usize * self.width as usize + x as usize) * self.channels as usize + c as usize] = v;
    }

    /// Bilinear sample at a continuous ERP position with horizontal wrap and
    /// vertical clamp. Pixel centers sit at integer + 0.5.
    pub fn sample_wrap(&self, u: f64, v: f64, c: u8) -> f64 {
        let w = self.width as i64;
        let h = self.height as i64;
        let uf = u - 0.5;
        let vf = (v - 0.5).clamp(0.0, (h - 1) as f64);
        let u0 = uf.floor() as i64;
        let v0 = vf.floor() as i64;
        let du = uf - u0 as f64;
        let dv = vf - v0 as f64;
        let xi = |i: i64| -> u32 { i.rem_euclid(w) as u32 };
        let yi = |i: i64| -> u32 { i.clamp(0, h - 1) as u32 };
        let p00 = self.get(xi(u0), yi(v0), c);
        let p10 = self.get(xi(u0 + 1), yi(v0), c);
        let p01 = self.get(xi(u0), yi(v0 + 1), c);
        let p11 = self.get(xi(u0 + 1), yi(v0 + 1), c);
        p00 * (1.0 - du) * (1.0 - dv) + p10 * du * (1.0 - dv) + p01 * (1.0 - du) * dv + p11 * du * dv
    }

    pub fn load_color(path: &Path) -> Result<Self, ErpError> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = (img.width(), img.height());
        let data: Vec<f64> = img.as_raw().iter().map(|&b| b as f64).collect();
        Self::new(w, h, 3, data)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ErpError> {
        save_rgb_png(path, self.width, self.height, |x, y, c| self.get(x, y, c))
    }
}

/// Save any 3-channel f64 raster (values clamped to [0, 255]) as PNG.
pub fn save_rgb_png<F: Fn(u32, u32, u8) -> f64>(
    path: &Path,
    width: u32,
    height: u32,
    get: F,
) -> Result<(), ErpError> {
    let mut buf = image::RgbImage::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let px = [
                get(x, y, 0).round().clamp(0.0, 255.0) as u8,
                get(x, y, 1).round().clamp(0.0, 255.0) as u8,
                get(x, y, 2).round().clamp(0.0, 255.0) as u8,
            ];
            buf.put_pixel(x, y, image::Rgb(px));
        }
    }
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
