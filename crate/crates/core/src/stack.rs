//! Shared data model: image stacks, their unfolded (pixel, time) view,
//! dynamic images and SVD factors.
//!
//! Samples are stored x-fastest, then y, then t. A frame is therefore a
//! contiguous slice, and the whole buffer read column-major is the
//! `(n_pixels, frames)` matrix. Unfolding and folding never touch sample
//! values.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

/// Raw acquisition cube `M(x, y, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    width: usize,
    height: usize,
    frames: usize,
    data: Vec<f32>,
    /// Camera frame rate, when known.
    pub frame_rate_hz: Option<f64>,
    /// Illumination centre wavelength, when known.
    pub wavelength_nm: Option<f64>,
}

impl Stack {
    pub fn new(width: usize, height: usize, frames: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!(
                "frame must be at least 1x1, got {width}x{height}"
            )));
        }
        if frames < 2 {
            return Err(Error::InvalidDimensions(format!(
                "a stack needs at least 2 frames, got {frames}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(frames))
            .ok_or_else(|| Error::InvalidDimensions("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{frames} stack needs {expected} samples, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            frames,
            data,
            frame_rate_hz: None,
            wavelength_nm: None,
        })
    }

    /// Builds a stack by evaluating `f(x, y, t)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        frames: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * frames);
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, t));
                }
            }
        }
        Self::new(width, height, frames, data)
    }

    pub fn with_metadata(mut self, frame_rate_hz: Option<f64>, wavelength_nm: Option<f64>) -> Self {
        self.frame_rate_hz = frame_rate_hz;
        self.wavelength_nm = wavelength_nm;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn sample(&self, x: usize, y: usize, t: usize) -> f32 {
        self.data[(t * self.height + y) * self.width + x]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.n_pixels();
        &self.data[t * n..(t + 1) * n]
    }

    /// Time series of pixel `p = y * width + x`.
    pub fn pixel_series(&self, p: usize) -> impl ExactSizeIterator<Item = f32> + '_ {
        self.data.iter().skip(p).step_by(self.n_pixels()).copied()
    }

    /// Copies pixel `p`'s time series into `out` as f64.
    pub fn pixel_series_into(&self, p: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.pixel_series(p).map(f64::from));
    }

    /// Multiplies every sample by `c`.
    pub fn scaled(&self, c: f32) -> Result<Self> {
        let data = self.data.iter().map(|v| v * c).collect();
        Ok(Self::new(self.width, self.height, self.frames, data)?
            .with_metadata(self.frame_rate_hz, self.wavelength_nm))
    }

    /// Zero-copy reinterpretation as a `(pixel, time)` matrix.
    pub fn into_unfolded(self) -> UnfoldedMatrix {
        UnfoldedMatrix {
            n_pixels: self.width * self.height,
            frames: self.frames,
            values: self.data,
            source_dims: (self.width, self.height),
        }
    }
}

/// `(pixel, time)` matrix `M_u(r, t)`; row `p` is the time series of pixel
/// `p = y * width + x`. Stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedMatrix {
    n_pixels: usize,
    frames: usize,
    values: Vec<f32>,
    source_dims: (usize, usize),
}

impl UnfoldedMatrix {
    /// `values` is column-major: `values[t * n_pixels + p]`.
    pub fn new(
        n_pixels: usize,
        frames: usize,
        values: Vec<f32>,
        source_dims: (usize, usize),
    ) -> Result<Self> {
        if n_pixels.checked_mul(frames) != Some(values.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{n_pixels}x{frames} matrix needs {} values, got {}",
                n_pixels.saturating_mul(frames),
                values.len()
            )));
        }
        Ok(Self {
            n_pixels,
            frames,
            values,
            source_dims,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], source_dims: (usize, usize)) -> Result<Self> {
        let n_pixels = rows.len();
        let frames = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != frames) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let mut values = vec![0.0; n_pixels * frames];
        for (p, row) in rows.iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                values[t * n_pixels + p] = v;
            }
        }
        Self::new(n_pixels, frames, values, source_dims)
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, p: usize, t: usize) -> f32 {
        self.values[t * self.n_pixels + p]
    }

    pub fn row(&self, p: usize) -> Vec<f32> {
        (0..self.frames).map(|t| self.get(p, t)).collect()
    }

    /// Copy into a dense f64 matrix for linear algebra.
    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.n_pixels, self.frames, |p, t| f64::from(self.get(p, t)))
    }

    pub(crate) fn from_mat(m: MatRef<'_, f64>, source_dims: (usize, usize)) -> Self {
        let (n_pixels, frames) = m.shape();
        let mut values = Vec::with_capacity(n_pixels * frames);
        for t in 0..frames {
            values.extend(m.col(t).iter().map(|&v| v as f32));
        }
        Self {
            n_pixels,
            frames,
            values,
            source_dims,
        }
    }

    /// Frobenius norm computed in f64.
    pub fn frobenius_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

/// Unfolds a stack into its `(pixel, time)` matrix. Copies the buffer; use
/// [`Stack::into_unfolded`] to avoid the copy.
pub fn unfold(stack: &Stack) -> UnfoldedMatrix {
    stack.clone().into_unfolded()
}

/// Exact inverse of [`unfold`].
pub fn fold(matrix: UnfoldedMatrix) -> Result<Stack> {
    let (w, h) = matrix.source_dims;
    if w.checked_mul(h) != Some(matrix.n_pixels) {
        return Err(Error::DimensionMismatch(format!(
            "{} rows cannot fold into a {w}x{h} frame",
            matrix.n_pixels
        )));
    }
    Stack::new(w, h, matrix.frames, matrix.values)
}

/// Per-pixel fluctuation map (`I_dyn`, `I'_dyn` or the raw `I_mes`).
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicImage {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DynamicImage {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if width.checked_mul(height) != Some(values.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image needs {} values, got {}",
                width.saturating_mul(height),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(if values[index].is_finite() {
                Error::InvalidParameter {
                    name: "values",
                    reason: format!("negative value {} at index {index}", values[index]),
                }
            } else {
                Error::NonFinite { index }
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// Economy SVD `M_u = Σ σ_i U_i ⊗ V_i` plus the filter's keep/reject mask.
///
/// When the decomposition was taken after removing each pixel's temporal
/// mean, the means are carried in `pixel_means` and added back on
/// reconstruction.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub(crate) singular_values: Vec<f64>,
    pub(crate) spatial: Mat<f64>,
    pub(crate) temporal: Mat<f64>,
    pub(crate) kept_mask: Vec<bool>,
    pub(crate) pixel_means: Option<Vec<f64>>,
    pub(crate) source_dims: (usize, usize),
}

impl SvdFactors {
    /// Number of components, `min(n_pixels, frames)`.
    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.spatial.nrows()
    }

    pub fn frames(&self) -> usize {
        self.temporal.nrows()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn kept_mask(&self) -> &[bool] {
        &self.kept_mask
    }

    pub fn pixel_means(&self) -> Option<&[f64]> {
        self.pixel_means.as_deref()
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    /// Spatial eigenvector `U_i`.
    pub fn spatial_vector(&self, i: usize) -> &[f64] {
        self.spatial
            .col(i)
            .try_as_col_major()
            .expect("owned matrix columns are contiguous")
            .as_slice()
    }

    /// Temporal eigenvector `V_i`.
    pub fn temporal_vector(&self, i: usize) -> &[f64] {
        self.temporal
            .col(i)
            .try_as_col_major()
            .expect("owned matrix columns are contiguous")
            .as_slice()
    }

    pub fn spatial_vectors(&self) -> MatRef<'_, f64> {
        self.spatial.as_ref()
    }

    pub fn temporal_vectors(&self) -> MatRef<'_, f64> {
        self.temporal.as_ref()
    }

    /// Indices whose singular value is masked out.
    pub fn rejected(&self) -> Vec<usize> {
        self.kept_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &kept)| (!kept).then_some(i))
            .collect()
    }
}
