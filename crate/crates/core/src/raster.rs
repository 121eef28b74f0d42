//! 2-D rasters: grayscale scenes, binary masks and instance label images.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::bbox::BBox;

/// Background value of synthetic scenes and of padding (white paper).
pub const BACKGROUND: u8 = 255;

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: png decode: {message}")]
    Decode { path: String, message: String },
    #[error("{path}: png encode: {message}")]
    Encode { path: String, message: String },
    #[error("{path}: expected 8-bit grayscale, found {found}")]
    Format { path: String, found: String },
}

/// Row-major 2-D grid of values.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

impl<P> std::fmt::Debug for Raster<P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Raster({}x{})", self.width, self.height)
    }
}

/// 8-bit grayscale image; 0 is black.
pub type GrayImage = Raster<u8>;
/// Instance label image; 0 is background, `k` is instance `k`.
pub type LabelImage = Raster<u8>;
/// Probability map produced by the segmentation network.
pub type ProbMap = Raster<f32>;

impl<P: Copy> Raster<P> {
    pub fn filled(width: usize, height: usize, value: P) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<P>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[P] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [P] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> P {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: P) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[P] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Copies the `w x h` window at (`x0`, `y0`); pixels outside the
    /// raster take `fill`.
    pub fn crop_padded(&self, x0: i64, y0: i64, w: usize, h: usize, fill: P) -> Self {
        Self::from_fn(w, h, |x, y| {
            let sx = x0 + x as i64;
            let sy = y0 + y as i64;
            if sx < 0 || sy < 0 || sx >= self.width as i64 || sy >= self.height as i64 {
                fill
            } else {
                self.get(sx as usize, sy as usize)
            }
        })
    }

    pub fn map<Q: Copy>(&self, f: impl Fn(P) -> Q) -> Raster<Q> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Binary mask, one byte per pixel holding 0 or 1.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask(Raster<u8>);

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BinaryMask({}x{}, {} set)",
            self.width(),
            self.height(),
            self.count_ones()
        )
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self(Raster::filled(width, height, 0))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self(Raster::from_fn(width, height, |x, y| f(x, y) as u8))
    }

    pub fn from_labels(labels: &LabelImage) -> Self {
        Self(labels.map(|v| (v != 0) as u8))
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.0.get(x, y) != 0
    }

    /// Out-of-image reads are `false`.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width()
            && (y as usize) < self.height()
            && self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.0.set(x, y, v as u8);
    }

    pub fn bits(&self) -> &[u8] {
        self.0.data()
    }

    pub fn count_ones(&self) -> usize {
        self.0.data().iter().filter(|&&v| v != 0).count()
    }

    pub fn fill_box(&mut self, b: &BBox) {
        let (x0, y0, x1, y1) = b.pixel_span(self.width(), self.height());
        for y in y0..y1 {
            for x in x0..x1 {
                self.set(x, y, true);
            }
        }
    }

    /// Pixels set in both masks are set in `self`.
    pub fn or_window(&mut self, other: &BinaryMask, x0: i64, y0: i64) {
        for y in 0..other.height() {
            let ty = y0 + y as i64;
            if ty < 0 || ty >= self.height() as i64 {
                continue;
            }
            for x in 0..other.width() {
                let tx = x0 + x as i64;
                if tx >= 0 && tx < self.width() as i64 && other.get(x, y) {
                    self.set(tx as usize, ty as usize, true);
                }
            }
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        self.0.map(|v| if v != 0 { 255 } else { 0 })
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self(img.map(|v| (v >= 128) as u8))
    }
}

/// Encodes 8-bit grayscale PNG and writes it atomically.
pub fn save_png(img: &GrayImage, path: &Path) -> Result<(), RasterError> {
    let p = path.display().to_string();
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, img.width() as u32, img.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| RasterError::Encode {
            path: p.clone(),
            message: e.to_string(),
        })?;
        writer
            .write_image_data(img.data())
            .map_err(|e| RasterError::Encode {
                path: p.clone(),
                message: e.to_string(),
            })?;
        writer.finish().map_err(|e| RasterError::Encode {
            path: p.clone(),
            message: e.to_string(),
        })?;
    }
    crate::atomic::write_atomic(path, &bytes).map_err(|source| RasterError::Io { path: p, source })
}

pub fn load_png(path: &Path) -> Result<GrayImage, RasterError> {
    let p = path.display().to_string();
    let file = File::open(path).map_err(|source| RasterError::Io {
        path: p.clone(),
        source,
    })?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| RasterError::Decode {
        path: p.clone(),
        message: e.to_string(),
    })?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Eight {
        return Err(RasterError::Format {
            path: p,
            found: format!("{color:?}/{depth:?}"),
        });
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| RasterError::Decode {
            path: p.clone(),
            message: "image too large".into(),
        })?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| RasterError::Decode {
            path: p.clone(),
            message: e.to_string(),
        })?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    Raster::from_vec(w, h, buf).ok_or(RasterError::Decode {
        path: p,
        message: "short pixel buffer".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(13, 7, |x, y| (x * 19 + y * 7) as u8);
        let path = dir.path().join("a.png");
        save_png(&img, &path).unwrap();
        assert_eq!(load_png(&path).unwrap(), img);
    }

    #[test]
    fn padded_crop_fills_outside() {
        let img = GrayImage::filled(4, 4, 7);
        let c = img.crop_padded(-1, 2, 3, 3, 255);
        assert_eq!(c.row(0), &[255, 7, 7]);
        assert_eq!(c.row(2), &[255, 255, 255]);
    }
}
