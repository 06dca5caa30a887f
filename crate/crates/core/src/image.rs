//! RGB raster with float intensities, decoding, and bilinear resizing.

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major RGB image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    /// Builds an image, checking dimensions and the intensity range.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimension(format!(
                "image must be at least 1x1, got {height}x{width}"
            )));
        }
        if data.len() != height * width * Self::CHANNELS {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} image needs {} values, got {}",
                height * width * Self::CHANNELS,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParam(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Image filled with one color.
    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self::new(height, width, data)
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} RGB buffer needs {} bytes, got {}",
                height * width * 3,
                bytes.len()
            )));
        }
        Self::new(
            height,
            width,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    /// Drops the alpha channel of an RGBA buffer.
    pub fn from_rgba8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * 4 {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} RGBA buffer needs {} bytes, got {}",
                height * width * 4,
                bytes.len()
            )));
        }
        let rgb: Vec<u8> = bytes
            .chunks_exact(4)
            .flat_map(|px| [px[0], px[1], px[2]])
            .collect();
        Self::from_rgb8(height, width, &rgb)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        self.pixel_at(row * self.width + col)
    }

    /// Pixel by flat (row-major) index.
    #[inline]
    pub fn pixel_at(&self, index: usize) -> [f64; 3] {
        let i = index * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Overwrites a pixel; values are clamped to `[0, 1]`.
    #[inline]
    pub fn set_pixel_at(&mut self, index: usize, rgb: [f64; 3]) {
        let i = index * 3;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Quantizes to 8-bit RGB, rounding to nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn to_rgba8(&self) -> Vec<u8> {
        self.to_rgb8()
            .chunks_exact(3)
            .flat_map(|px| [px[0], px[1], px[2], 255])
            .collect()
    }

    /// Decodes PNG or binary PPM bytes. `origin` only labels errors.
    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let format = image::guess_format(bytes).map_err(|e| Error::Decode {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Pnm) {
            return Err(Error::Decode {
                path: origin.to_path_buf(),
                reason: format!("unsupported format {format:?}"),
            });
        }
        let decoded =
            image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode {
                path: origin.to_path_buf(),
                reason: e.to_string(),
            })?;
        let rgb = decoded.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::from_rgb8(h as usize, w as usize, rgb.as_raw())
    }

    /// Encodes as 8-bit RGB PNG.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .expect("buffer length matches dimensions");
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::InvalidParam(format!("png encoding failed: {e}")))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()?).map_err(|e| Error::io(path, e))
    }
}

/// Reads a PNG or PPM file into an [`Image`].
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Image::decode(&bytes, path)
}

/// Bilinear resize with corner-aligned sample positions.
///
/// Output pixel `i` samples source coordinate `i * (n_in - 1) / (n_out - 1)`,
/// so the first and last rows/columns map onto the source corners. A
/// one-pixel output axis samples the source center.
pub fn resize(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidDimension(format!(
            "resize target must be at least 1x1, got {out_h}x{out_w}"
        )));
    }
    if out_h == img.height && out_w == img.width {
        return Ok(img.clone());
    }

    let rows = sample_positions(img.height, out_h);
    let cols = sample_positions(img.width, out_w);
    let mut data = Vec::with_capacity(out_h * out_w * 3);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let p00 = img.pixel(r0, c0);
            let p01 = img.pixel(r0, c1);
            let p10 = img.pixel(r1, c0);
            let p11 = img.pixel(r1, c1);
            for ch in 0..3 {
                let top = p00[ch] * (1.0 - fc) + p01[ch] * fc;
                let bottom = p10[ch] * (1.0 - fc) + p11[ch] * fc;
                data.push((top * (1.0 - fr) + bottom * fr).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(out_h, out_w, data)
}

fn sample_positions(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let src = if n_out == 1 {
                (n_in - 1) as f64 / 2.0
            } else {
                i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
            };
            let lo = (src.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}
