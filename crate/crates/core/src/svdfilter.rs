//! Adaptive SVD filter for bulk-motion artifacts.
//!
//! The unfolded stack is decomposed as `M_u = Σ σ_i U_i ⊗ V_i`. Artifact
//! components are found by jumps in the zero-crossing rate of the temporal
//! eigenvectors, their singular values are masked, and the stack is rebuilt
//! from the remaining components.

use std::time::Instant;

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::matmul::matmul;
use faer::linalg::svd::{svd, svd_scratch, ComputeSvdVectors};
use faer::{Accum, Mat, MatRef, Par};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{DetectorMode, FilterReport, TileEvidence};
use crate::stack::{DynamicImage, Stack, SvdFactors, UnfoldedMatrix};

/// Singular values at or below this fraction of σ₀ are treated as null.
pub const NULL_SPECTRUM_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    #[default]
    DzcrThreshold,
    Manual(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub threshold_multiplier: f64,
    /// Only components with index below this bound may be flagged. `None`
    /// scans the whole spectrum.
    pub max_candidate_index: Option<usize>,
    /// Tile size `(width, height)`; `None` processes the whole frame.
    pub tile: Option<(usize, usize)>,
    pub detector: Detector,
    /// Remove each pixel's temporal mean before decomposing.
    pub center_pixels: bool,
    /// Upper bound on concurrent decomposition memory. `None` = unbounded.
    pub memory_budget_bytes: Option<u64>,
    pub parallel_tiles: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            threshold_multiplier: 3.0,
            max_candidate_index: Some(8),
            tile: None,
            detector: Detector::DzcrThreshold,
            center_pixels: true,
            memory_budget_bytes: None,
            parallel_tiles: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_multiplier > 0.0 && self.threshold_multiplier.is_finite()) {
            return Err(Error::param("threshold_multiplier", "must be > 0"));
        }
        if let Some((w, h)) = self.tile {
            if w < 2 || h < 2 {
                return Err(Error::param("tile", format!("{w}x{h} is smaller than 2x2")));
            }
        }
        if self.memory_budget_bytes == Some(0) {
            return Err(Error::param("memory_budget_bytes", "must be > 0"));
        }
        Ok(())
    }
}

/// Zero-crossing evidence for one decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcrSeries {
    /// Zero crossings of every temporal eigenvector.
    pub zcr: Vec<u32>,
    /// `|zcr[i+1] - zcr[i]|` over the non-null part of the spectrum.
    pub dzcr: Vec<f64>,
    /// `zcr[0]`, the jump from the removed (constant) pixel mean into the
    /// first component. Only present for centred decompositions.
    pub lead_dzcr: Option<f64>,
    pub threshold_value: f64,
}

/// Number of sign changes between adjacent samples. Zeros carry the previous
/// sign; leading zeros take the first nonzero sign.
pub fn zero_crossing_rate(v: &[f64]) -> u32 {
    let Some(mut last) = v.iter().find(|x| **x != 0.0).map(|x| x.is_sign_positive()) else {
        return 0;
    };
    let mut count = 0;
    for &x in v {
        if x != 0.0 {
            let positive = x > 0.0;
            if positive != last {
                count += 1;
            }
            last = positive;
        }
    }
    count
}

fn svd_seq(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>, Mat<f64>)> {
    let (m, n) = a.shape();
    let k = m.min(n);
    let mut s = Diag::<f64>::zeros(k);
    let mut u = Mat::<f64>::zeros(m, k);
    let mut v = Mat::<f64>::zeros(n, k);
    let par = Par::Seq;
    let mut mem = MemBuffer::new(svd_scratch::<f64>(
        m,
        n,
        ComputeSvdVectors::Thin,
        ComputeSvdVectors::Thin,
        par,
        Default::default(),
    ));
    svd(
        a,
        s.as_mut(),
        Some(u.as_mut()),
        Some(v.as_mut()),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|_| Error::Decomposition { rows: m, cols: n })?;
    let sv: Vec<f64> = s.column_vector().iter().map(|x| x.max(0.0)).collect();
    if sv.iter().any(|x| !x.is_finite()) {
        return Err(Error::Decomposition { rows: m, cols: n });
    }
    Ok((sv, u, v))
}

fn factors_from(
    a: MatRef<'_, f64>,
    pixel_means: Option<Vec<f64>>,
    source_dims: (usize, usize),
) -> Result<SvdFactors> {
    let (singular_values, spatial, temporal) = svd_seq(a)?;
    let k = singular_values.len();
    Ok(SvdFactors {
        singular_values,
        spatial,
        temporal,
        kept_mask: vec![true; k],
        pixel_means,
        source_dims,
    })
}

/// Economy SVD of the unfolded matrix as given.
pub fn decompose(matrix: &UnfoldedMatrix) -> Result<SvdFactors> {
    factors_from(matrix.to_mat().as_ref(), None, matrix.source_dims())
}

/// Economy SVD after subtracting each pixel's temporal mean. The means are
/// kept in the factors and restored by [`reconstruct`].
pub fn decompose_centered(matrix: &UnfoldedMatrix) -> Result<SvdFactors> {
    let mut a = matrix.to_mat();
    let (n, f) = a.shape();
    let mut means = vec![0.0; n];
    for t in 0..f {
        for (p, m) in means.iter_mut().enumerate() {
            *m += a[(p, t)];
        }
    }
    for m in &mut means {
        *m /= f as f64;
    }
    for t in 0..f {
        for (p, m) in means.iter().enumerate() {
            a[(p, t)] -= m;
        }
    }
    factors_from(a.as_ref(), Some(means), matrix.source_dims())
}

fn non_null_rank(singular_values: &[f64]) -> usize {
    let Some(&s0) = singular_values.first() else {
        return 0;
    };
    if s0 <= 0.0 {
        return 0;
    }
    singular_values
        .iter()
        .take_while(|&&s| s > NULL_SPECTRUM_RTOL * s0)
        .count()
}

fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Flags artifact components by thresholding zero-crossing-rate jumps at
/// `threshold_multiplier × std(dzcr)`. For each jump above threshold the
/// member of the pair with more zero crossings is flagged (ties flag the
/// later one). A zero threshold flags nothing.
pub fn detect_artifact_vectors(
    factors: &SvdFactors,
    config: &FilterConfig,
) -> Result<(Vec<usize>, ZcrSeries)> {
    let k = factors.k();
    if k < 3 {
        return Err(Error::InsufficientData {
            required: 3,
            available: k,
        });
    }
    let zcr: Vec<u32> = (0..k)
        .map(|i| zero_crossing_rate(factors.temporal_vector(i)))
        .collect();
    let rank = non_null_rank(factors.singular_values());
    let dzcr: Vec<f64> = zcr[..rank]
        .windows(2)
        .map(|w| f64::from(w[1].abs_diff(w[0])))
        .collect();
    let lead_dzcr = (factors.pixel_means().is_some() && rank > 0).then(|| f64::from(zcr[0]));

    let mut all: Vec<f64> = lead_dzcr.into_iter().collect();
    all.extend_from_slice(&dzcr);
    let threshold_value = config.threshold_multiplier * population_std(&all);

    // A series with zero spread has no outliers.
    let limit = if threshold_value > 0.0 {
        config.max_candidate_index.unwrap_or(k)
    } else {
        0
    };
    let mut flagged = Vec::new();
    if let Some(lead) = lead_dzcr {
        if lead > threshold_value && limit > 0 {
            flagged.push(0);
        }
    }
    for (i, &d) in dzcr.iter().enumerate() {
        if i + 1 >= limit {
            break;
        }
        if d > threshold_value {
            flagged.push(if zcr[i] > zcr[i + 1] { i } else { i + 1 });
        }
    }
    flagged.sort_unstable();
    flagged.dedup();
    Ok((
        flagged,
        ZcrSeries {
            zcr,
            dzcr,
            lead_dzcr,
            threshold_value,
        },
    ))
}

/// Masks the singular values at `indices`. The spectrum itself is kept.
pub fn apply_filter(mut factors: SvdFactors, indices: &[usize]) -> Result<SvdFactors> {
    let k = factors.k();
    if let Some(&index) = indices.iter().find(|&&i| i >= k) {
        return Err(Error::IndexOutOfRange { index, k });
    }
    for &i in indices {
        factors.kept_mask[i] = false;
    }
    Ok(factors)
}

/// `Σ_kept σ_i U_i ⊗ V_i` (plus pixel means when centred), in f64.
pub fn reconstruct_f64(factors: &SvdFactors) -> Mat<f64> {
    let kept: Vec<usize> = (0..factors.k())
        .filter(|&i| factors.kept_mask[i] && factors.singular_values[i] > 0.0)
        .collect();
    let (n, f) = (factors.n_pixels(), factors.frames());
    let us = Mat::from_fn(n, kept.len(), |p, j| {
        factors.spatial[(p, kept[j])] * factors.singular_values[kept[j]]
    });
    let v = Mat::from_fn(f, kept.len(), |t, j| factors.temporal[(t, kept[j])]);
    let mut out = Mat::<f64>::zeros(n, f);
    if !kept.is_empty() {
        matmul(out.as_mut(), Accum::Replace, us.as_ref(), v.transpose(), 1.0, Par::Seq);
    }
    if let Some(means) = &factors.pixel_means {
        for t in 0..f {
            for (p, m) in means.iter().enumerate() {
                out[(p, t)] += m;
            }
        }
    }
    out
}

/// Rebuilds the unfolded matrix from the kept components.
pub fn reconstruct(factors: &SvdFactors) -> UnfoldedMatrix {
    UnfoldedMatrix::from_mat(reconstruct_f64(factors).as_ref(), factors.source_dims())
}

/// `Σ_rejected |U_i|` per pixel.
pub fn artifact_map(factors: &SvdFactors) -> Vec<f64> {
    let mut out = vec![0.0; factors.n_pixels()];
    for i in factors.rejected() {
        for (o, u) in out.iter_mut().zip(factors.spatial_vector(i)) {
            *o += u.abs();
        }
    }
    out
}

/// Approximate peak memory (bytes) to decompose and rebuild an
/// `n_pixels x frames` tile: input copy, U, reconstruction and O(F²)
/// workspace, all in f64.
pub fn tile_memory_estimate(n_pixels: usize, frames: usize) -> u64 {
    let (n, f) = (n_pixels as u64, frames as u64);
    let k = n.min(f);
    8 * (3 * n * f + 3 * f * k).max(3 * n * k)
}

/// A rectangular block of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

fn spans(extent: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    while start < extent {
        let len = size.min(extent - start);
        if len < 2 {
            if let Some(last) = out.last_mut() {
                last.1 += len;
                break;
            }
        }
        out.push((start, len));
        start += len;
    }
    out
}

/// Partitions a frame into row-major tiles. A remainder narrower than two
/// pixels is merged into its neighbour.
pub fn tile_grid(width: usize, height: usize, tile: Option<(usize, usize)>) -> Vec<TileRect> {
    let (tw, th) = tile.unwrap_or((width, height));
    let xs = spans(width, tw.max(1));
    let ys = spans(height, th.max(1));
    ys.iter()
        .flat_map(|&(y0, h)| {
            xs.iter().map(move |&(x0, w)| TileRect {
                x0,
                y0,
                width: w,
                height: h,
            })
        })
        .collect()
}

fn extract_tile(stack: &Stack, r: TileRect) -> UnfoldedMatrix {
    let n = r.width * r.height;
    let mut values = Vec::with_capacity(n * stack.frames());
    for t in 0..stack.frames() {
        let frame = stack.frame(t);
        for y in r.y0..r.y0 + r.height {
            let row = y * stack.width();
            values.extend_from_slice(&frame[row + r.x0..row + r.x0 + r.width]);
        }
    }
    UnfoldedMatrix::new(n, stack.frames(), values, (r.width, r.height))
        .expect("tile dimensions are consistent")
}

struct TileOutput {
    rect: TileRect,
    values: UnfoldedMatrix,
    artifact: Vec<f64>,
    evidence: TileEvidence,
}

fn process_tile(stack: &Stack, rect: TileRect, config: &FilterConfig) -> Result<TileOutput> {
    let m = extract_tile(stack, rect);
    let factors = if config.center_pixels {
        decompose_centered(&m)?
    } else {
        decompose(&m)?
    };
    let (indices, series) = match &config.detector {
        Detector::DzcrThreshold => detect_artifact_vectors(&factors, config)?,
        Detector::Manual(indices) => {
            let zcr = (0..factors.k())
                .map(|i| zero_crossing_rate(factors.temporal_vector(i)))
                .collect();
            (
                indices.clone(),
                ZcrSeries {
                    zcr,
                    dzcr: Vec::new(),
                    lead_dzcr: None,
                    threshold_value: 0.0,
                },
            )
        }
    };
    let mut indices = indices;
    indices.sort_unstable();
    indices.dedup();
    let factors = apply_filter(factors, &indices)?;
    let values = reconstruct(&factors);
    let artifact = artifact_map(&factors);
    let evidence = TileEvidence {
        x0: rect.x0,
        y0: rect.y0,
        width: rect.width,
        height: rect.height,
        rejected_indices: indices,
        zcr: series.zcr,
        dzcr: series.dzcr,
        lead_dzcr: series.lead_dzcr,
        threshold_value: series.threshold_value,
        singular_values: factors.singular_values,
    };
    Ok(TileOutput {
        rect,
        values,
        artifact,
        evidence,
    })
}

/// Result of [`filter_stack`].
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub stack: Stack,
    pub report: FilterReport,
    /// `Σ_rejected |U_i|` refolded per tile.
    pub artifact_image: DynamicImage,
}

/// Number of tiles that may be decomposed at once under the configured
/// budget. Fails when a single tile already exceeds it.
pub fn concurrent_tiles(tiles: &[TileRect], frames: usize, config: &FilterConfig) -> Result<usize> {
    let largest = tiles
        .iter()
        .map(|r| tile_memory_estimate(r.width * r.height, frames))
        .max()
        .unwrap_or(0);
    let threads = if config.parallel_tiles {
        rayon::current_num_threads().max(1)
    } else {
        1
    };
    match config.memory_budget_bytes {
        Some(budget) if largest > budget => Err(Error::MemoryBudget {
            required: largest,
            budget,
        }),
        Some(budget) => Ok(((budget / largest.max(1)) as usize).clamp(1, threads)),
        None => Ok(threads),
    }
}

/// Decompose → detect → mask → reconstruct, tile by tile.
pub fn filter_stack(stack: &Stack, config: &FilterConfig) -> Result<FilterOutcome> {
    config.validate()?;
    let started = Instant::now();
    let tiles = tile_grid(stack.width(), stack.height(), config.tile);
    if config.tile.is_some() && tiles.iter().any(|r| r.width < 2 || r.height < 2) {
        return Err(Error::param(
            "tile",
            format!("frame {}x{} cannot be split into tiles of at least 2x2", stack.width(), stack.height()),
        ));
    }
    let workers = concurrent_tiles(&tiles, stack.frames(), config)?;

    let outputs: Vec<TileOutput> = if workers > 1 && tiles.len() > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::param("parallel_tiles", e.to_string()))?;
        pool.install(|| {
            tiles
                .par_iter()
                .map(|&r| process_tile(stack, r, config))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        tiles
            .iter()
            .map(|&r| process_tile(stack, r, config))
            .collect::<Result<Vec<_>>>()?
    };

    let (w, frames) = (stack.width(), stack.frames());
    let n = stack.n_pixels();
    let mut data = vec![0f32; n * frames];
    let mut artifact = vec![0f32; n];
    let mut evidence = Vec::with_capacity(outputs.len());
    for out in outputs {
        let r = out.rect;
        let tn = r.width * r.height;
        for t in 0..frames {
            let src = &out.values.values()[t * tn..(t + 1) * tn];
            for ty in 0..r.height {
                let dst = t * n + (r.y0 + ty) * w + r.x0;
                data[dst..dst + r.width].copy_from_slice(&src[ty * r.width..(ty + 1) * r.width]);
            }
        }
        for ty in 0..r.height {
            for tx in 0..r.width {
                artifact[(r.y0 + ty) * w + r.x0 + tx] = out.artifact[ty * r.width + tx] as f32;
            }
        }
        evidence.push(out.evidence);
    }

    let mut rejected: Vec<usize> = evidence
        .iter()
        .flat_map(|e| e.rejected_indices.iter().copied())
        .collect();
    rejected.sort_unstable();
    rejected.dedup();

    let filtered = Stack::new(w, stack.height(), frames, data)?
        .with_metadata(stack.frame_rate_hz, stack.wavelength_nm);
    let artifact_image = DynamicImage::new(w, stack.height(), artifact)?;
    let report = FilterReport {
        detector: match config.detector {
            Detector::DzcrThreshold => DetectorMode::DzcrThreshold,
            Detector::Manual(_) => DetectorMode::Manual,
        },
        threshold_multiplier: config.threshold_multiplier,
        max_candidate_index: config.max_candidate_index,
        centered: config.center_pixels,
        rejected_indices: rejected,
        tiles: evidence,
        wall_time_seconds: Some(started.elapsed().as_secs_f64()),
    };
    Ok(FilterOutcome {
        stack: filtered,
        report,
        artifact_image,
    })
}
