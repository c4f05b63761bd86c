//! Grayscale → jet pseudo-color preprocessing.
//!
//! The pipeline is fixed: resize the raw intensity field to `S×S` with
//! half-pixel-center bilinear sampling, divide by 255, look every value up in
//! a 256-entry colormap table indexed by `round(v·255)`, and stack the three
//! color planes channel-first.

use std::path::Path;

use crate::numerics::Tensor;

/// Default model input resolution.
pub const DEFAULT_IMAGE_SIZE: usize = 224;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("intensity {value} outside [0, 255]")]
    IntensityOutOfRange { value: f64 },
    #[error("colormap input {value} outside [0, 1]")]
    ColormapDomain { value: f64 },
    #[error("image dimensions must be positive, got {height}x{width}")]
    EmptyImage { height: usize, width: usize },
    #[error("{height}x{width} image needs {expected} pixels, got {found}")]
    PixelCount { height: usize, width: usize, expected: usize, found: usize },
    #[error("target size must be positive")]
    ZeroTargetSize,
    #[error("cannot decode image {path}: {source}")]
    Decode { path: String, source: image::ImageError },
}

/// 8-bit single-channel image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayscaleImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl GrayscaleImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, PreprocessError> {
        if height == 0 || width == 0 {
            return Err(PreprocessError::EmptyImage { height, width });
        }
        if pixels.len() != height * width {
            return Err(PreprocessError::PixelCount { height, width, expected: height * width, found: pixels.len() });
        }
        Ok(Self { height, width, pixels })
    }

    /// Accepts wider integer intensities, rejecting anything outside `[0, 255]`.
    pub fn from_levels(height: usize, width: usize, levels: &[i64]) -> Result<Self, PreprocessError> {
        let pixels = levels
            .iter()
            .map(|&v| u8::try_from(v).map_err(|_| PreprocessError::IntensityOutOfRange { value: v as f64 }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(height, width, pixels)
    }

    /// Converts a decoded raster. Color inputs are reduced to the mean of
    /// their RGB channels (alpha ignored), rounded to the nearest level.
    pub fn from_dynamic(img: &image::DynamicImage) -> Result<Self, PreprocessError> {
        use image::DynamicImage as D;
        let (width, height) = (img.width() as usize, img.height() as usize);
        let pixels = match img {
            D::ImageLuma8(g) => g.as_raw().clone(),
            D::ImageLuma16(_) | D::ImageLumaA8(_) | D::ImageLumaA16(_) => img.to_luma8().into_raw(),
            _ => img
                .to_rgb8()
                .pixels()
                .map(|p| ((p[0] as u16 + p[1] as u16 + p[2] as u16 + 1) / 3) as u8)
                .collect(),
        };
        Self::new(height, width, pixels)
    }

    pub fn open(path: &Path) -> Result<Self, PreprocessError> {
        let img = image::open(path)
            .map_err(|source| PreprocessError::Decode { path: path.display().to_string(), source })?;
        Self::from_dynamic(&img)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Raw intensity levels as a float field, unnormalized.
    pub fn to_field(&self) -> Field {
        Field { height: self.height, width: self.width, values: self.pixels.iter().map(|&p| p as f32).collect() }
    }
}

/// Single-channel float raster, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl Field {
    fn at(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// Maps every pixel to `I / 255`.
pub fn normalize_intensity(img: &GrayscaleImage) -> Field {
    let mut field = img.to_field();
    field.values.iter_mut().for_each(|v| *v /= 255.0);
    field
}

/// Divides a raw-level field by 255, rejecting values outside `[0, 255]`.
pub fn normalize_field(mut field: Field) -> Result<Field, PreprocessError> {
    for v in field.values.iter_mut() {
        if !(0.0..=255.0).contains(v) {
            return Err(PreprocessError::IntensityOutOfRange { value: *v as f64 });
        }
        *v /= 255.0;
    }
    Ok(field)
}

/// Source coordinate and blend weight for one output index under the
/// half-pixel-center convention (`align_corners = false`).
fn sample_axis(out_index: usize, in_len: usize, out_len: usize) -> (usize, usize, f32) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((out_index as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, (src - lo as f64) as f32)
}

// exact at both endpoints and for equal inputs
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

/// Bilinear resize to `height×width`.
pub fn resize_bilinear(field: &Field, height: usize, width: usize) -> Result<Field, PreprocessError> {
    if height == 0 || width == 0 {
        return Err(PreprocessError::ZeroTargetSize);
    }
    if field.height == 0 || field.width == 0 {
        return Err(PreprocessError::EmptyImage { height: field.height, width: field.width });
    }
    let cols: Vec<_> = (0..width).map(|x| sample_axis(x, field.width, width)).collect();
    let mut values = Vec::with_capacity(height * width);
    for y in 0..height {
        let (y0, y1, fy) = sample_axis(y, field.height, height);
        for &(x0, x1, fx) in &cols {
            let top = lerp(field.at(y0, x0), field.at(y0, x1), fx);
            let bottom = lerp(field.at(y1, x0), field.at(y1, x1), fx);
            values.push(lerp(top, bottom, fy));
        }
    }
    Ok(Field { height, width, values })
}

/// A scalar-to-RGB map over `[0, 1]`.
pub trait Colormap {
    fn name(&self) -> &str;

    /// RGB triple in `[0, 1]³` for `v ∈ [0, 1]`.
    fn map(&self, v: f64) -> Result<[f64; 3], PreprocessError>;
}

/// Per-channel anchors `(position, value)`; linear between anchors.
type Segments = &'static [(f64, f64)];

const JET_RED: Segments = &[(0.0, 0.0), (0.35, 0.0), (0.66, 1.0), (0.89, 1.0), (1.0, 0.5)];
const JET_GREEN: Segments = &[(0.0, 0.0), (0.125, 0.0), (0.375, 1.0), (0.64, 1.0), (0.91, 0.0), (1.0, 0.0)];
const JET_BLUE: Segments = &[(0.0, 0.5), (0.11, 1.0), (0.34, 1.0), (0.65, 0.0), (1.0, 0.0)];

fn interpolate(segments: Segments, v: f64) -> f64 {
    for pair in segments.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        if v <= x1 {
            return y0 + (y1 - y0) * (v - x0) / (x1 - x0);
        }
    }
    segments[segments.len() - 1].1
}

/// Classic piecewise-linear jet: blue → cyan → yellow → red.
#[derive(Clone, Copy, Debug, Default)]
pub struct Jet;

impl Colormap for Jet {
    fn name(&self) -> &str {
        "jet"
    }

    fn map(&self, v: f64) -> Result<[f64; 3], PreprocessError> {
        jet(v)
    }
}

pub fn jet(v: f64) -> Result<[f64; 3], PreprocessError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(PreprocessError::ColormapDomain { value: v });
    }
    Ok([interpolate(JET_RED, v), interpolate(JET_GREEN, v), interpolate(JET_BLUE, v)])
}

/// 256-entry table; entry `i` is the colormap at `i / 255`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColormapLut {
    entries: Vec<[f64; 3]>,
}

impl ColormapLut {
    pub const LEN: usize = 256;

    pub fn build(map: &dyn Colormap) -> Result<Self, PreprocessError> {
        let entries = (0..Self::LEN).map(|i| map.map(i as f64 / 255.0)).collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn jet() -> Self {
        Self::build(&Jet).expect("jet is defined on all of [0, 1]")
    }

    pub fn entries(&self) -> &[[f64; 3]] {
        &self.entries
    }

    /// Entry at `round(v·255)`.
    pub fn lookup(&self, v: f32) -> Result<[f64; 3], PreprocessError> {
        if !(0.0..=1.0).contains(&v) {
            return Err(PreprocessError::ColormapDomain { value: v as f64 });
        }
        Ok(self.entries[(v * 255.0).round() as usize])
    }
}

/// Channel-first `3×S×S` tensor with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoColorTensor {
    tensor: Tensor<f32>,
}

impl PseudoColorTensor {
    /// Wraps an existing tensor after checking shape and value range.
    pub fn from_tensor(tensor: Tensor<f32>) -> Option<Self> {
        let s = tensor.shape();
        let valid = s.len() == 3 && s[0] == 3 && s[1] == s[2] && tensor.data().iter().all(|v| (0.0..=1.0).contains(v));
        valid.then_some(Self { tensor })
    }

    pub fn size(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.tensor
    }
}

/// Stateless preprocessor holding a prebuilt lookup table.
#[derive(Clone, Debug)]
pub struct Preprocessor {
    lut: ColormapLut,
    size: usize,
}

impl Preprocessor {
    pub fn new(lut: ColormapLut, size: usize) -> Result<Self, PreprocessError> {
        if size == 0 {
            return Err(PreprocessError::ZeroTargetSize);
        }
        Ok(Self { lut, size })
    }

    pub fn jet(size: usize) -> Result<Self, PreprocessError> {
        Self::new(ColormapLut::jet(), size)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn apply(&self, img: &GrayscaleImage) -> Result<PseudoColorTensor, PreprocessError> {
        let field = normalize_field(resize_bilinear(&img.to_field(), self.size, self.size)?)?;
        let plane = self.size * self.size;
        let mut data = vec![0.0f32; 3 * plane];
        for (i, &v) in field.values.iter().enumerate() {
            let rgb = self.lut.lookup(v)?;
            for (c, &component) in rgb.iter().enumerate() {
                data[c * plane + i] = component as f32;
            }
        }
        Ok(PseudoColorTensor { tensor: Tensor::from_parts(vec![3, self.size, self.size], data) })
    }
}

/// One-shot jet preprocessing at resolution `size`.
pub fn preprocess(img: &GrayscaleImage, size: usize) -> Result<PseudoColorTensor, PreprocessError> {
    Preprocessor::jet(size)?.apply(img)
}
