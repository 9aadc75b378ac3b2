//! Synthetic dynamic full-field OCT acquisitions with known ground truth.
//!
//! Every pixel follows the two-beam interference model
//!
//! ```text
//! I(r,t) = η·I₀/4 · (R + R_inc + R_ref + 2·√(R·R_ref)·cos(Δφ(r,t))) + noise
//! Δφ(r,t) = φ_walk(r,t) + 4π·z(t)/λ
//! ```
//!
//! where `R` is the region reflectivity (zero for background), `φ_walk` is a
//! per-pixel phase that stays constant on static reflectors and performs a
//! Gaussian random walk on motile pixels, and `z(t)` is a global axial
//! displacement shared by all pixels.
//!
//! Randomness is drawn from one ChaCha8 stream per pixel (stream index =
//! pixel index) and a dedicated stream for the bulk motion, so the output is
//! independent of how pixels are scheduled across threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::MaskImage;
use crate::stack::Stack;

const MOTION_STREAM: u64 = u64::MAX;

/// Acquisition and optics parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Centre wavelength λ (nm).
    pub wavelength_nm: f64,
    /// Source intensity I₀ (arbitrary units).
    pub source_intensity: f64,
    /// Camera quantum efficiency η in (0, 1].
    pub quantum_efficiency: f64,
    /// Reference mirror reflectivity in (0, 1].
    pub r_ref: f64,
    /// Incoherent sample reflectivity ≥ 0.
    pub r_inc: f64,
    pub frame_rate_hz: f64,
    /// Additive Gaussian noise on intensity (same units as the output).
    pub camera_noise_std: f64,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            frames: 512,
            wavelength_nm: 660.0,
            source_intensity: 1e5,
            quantum_efficiency: 0.5,
            r_ref: 0.2,
            r_inc: 0.01,
            frame_rate_hz: 150.0,
            camera_noise_std: 2.0,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn new(width: usize, height: usize, frames: usize) -> Self {
        Self {
            width,
            height,
            frames,
            ..Self::default()
        }
    }

    /// Prefactor η·I₀/4.
    pub fn intensity_scale(&self) -> f64 {
        self.quantum_efficiency * self.source_intensity / 4.0
    }

    /// Peak interferometric amplitude `η·I₀/2·√(r_s·R_ref)` of a scatterer.
    pub fn fringe_amplitude(&self, r_s: f64) -> f64 {
        2.0 * self.intensity_scale() * (r_s * self.r_ref).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.frames < 2 {
            return Err(Error::InvalidDimensions(format!(
                "simulation needs at least 1x1x2, got {}x{}x{}",
                self.width, self.height, self.frames
            )));
        }
        let checks: [(&'static str, bool, &str); 7] = [
            ("wavelength_nm", self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite(), "must be > 0"),
            ("source_intensity", self.source_intensity >= 0.0 && self.source_intensity.is_finite(), "must be >= 0"),
            ("quantum_efficiency", self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0, "must be in (0, 1]"),
            ("r_ref", self.r_ref > 0.0 && self.r_ref <= 1.0, "must be in (0, 1]"),
            ("r_inc", self.r_inc >= 0.0 && self.r_inc.is_finite(), "must be >= 0"),
            ("frame_rate_hz", self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite(), "must be > 0"),
            ("camera_noise_std", self.camera_noise_std >= 0.0 && self.camera_noise_std.is_finite(), "must be >= 0"),
        ];
        for (name, ok, reason) in checks {
            if !ok {
                return Err(Error::param(name, reason));
            }
        }
        Ok(())
    }
}

/// Set of pixels covered by a region. Shapes are clipped to the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PixelSet {
    Rect {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    Disk {
        cx: f64,
        cy: f64,
        radius: f64,
    },
    /// Segment of the given full thickness.
    Line {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        thickness: f64,
    },
    Pixels {
        pixels: Vec<[usize; 2]>,
    },
}

impl PixelSet {
    /// Linear indices `y * width + x` inside a `width x height` frame, sorted
    /// and deduplicated.
    pub fn rasterize(&self, width: usize, height: usize) -> Vec<usize> {
        let mut out = Vec::new();
        match self {
            PixelSet::Rect {
                x,
                y,
                width: w,
                height: h,
            } => {
                for yy in *y..(y + h).min(height) {
                    for xx in *x..(x + w).min(width) {
                        out.push(yy * width + xx);
                    }
                }
            }
            PixelSet::Disk { cx, cy, radius } => {
                let r2 = radius * radius;
                for_each_in_box(width, height, cx - radius, cy - radius, cx + radius, cy + radius, |x, y| {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    if dx * dx + dy * dy <= r2 {
                        out.push(y * width + x);
                    }
                });
            }
            PixelSet::Line {
                x0,
                y0,
                x1,
                y1,
                thickness,
            } => {
                let half = thickness / 2.0;
                let (dx, dy) = (x1 - x0, y1 - y0);
                let len2 = dx * dx + dy * dy;
                for_each_in_box(
                    width,
                    height,
                    x0.min(*x1) - half,
                    y0.min(*y1) - half,
                    x0.max(*x1) + half,
                    y0.max(*y1) + half,
                    |x, y| {
                        let (px, py) = (x as f64 - x0, y as f64 - y0);
                        let s = if len2 > 0.0 {
                            ((px * dx + py * dy) / len2).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        let (ex, ey) = (px - s * dx, py - s * dy);
                        if ex * ex + ey * ey <= half * half {
                            out.push(y * width + x);
                        }
                    },
                );
            }
            PixelSet::Pixels { pixels } => {
                out.extend(
                    pixels
                        .iter()
                        .filter(|[x, y]| *x < width && *y < height)
                        .map(|[x, y]| y * width + x),
                );
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn for_each_in_box(
    width: usize,
    height: usize,
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
    mut f: impl FnMut(usize, usize),
) {
    let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64 - 1.0);
    if xmax < 0.0 || ymax < 0.0 || xmin > (width - 1) as f64 || ymin > (height - 1) as f64 {
        return;
    }
    let (x_lo, x_hi) = (clamp(xmin.floor(), width) as usize, clamp(xmax.ceil(), width) as usize);
    let (y_lo, y_hi) = (clamp(ymin.floor(), height) as usize, clamp(ymax.ceil(), height) as usize);
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            f(x, y);
        }
    }
}

/// Per-frame phase increments of a motile scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WalkSpec {
    /// Zero-mean Gaussian steps (rad/frame).
    CenteredGaussian { std: f64 },
    /// Gaussian steps with a constant drift (rad/frame), i.e. a scatterer
    /// moving at constant velocity through the coherence volume.
    BiasedGaussian { std: f64, drift: f64 },
}

impl WalkSpec {
    pub fn std(&self) -> f64 {
        match *self {
            WalkSpec::CenteredGaussian { std } | WalkSpec::BiasedGaussian { std, .. } => std,
        }
    }

    pub fn drift(&self) -> f64 {
        match *self {
            WalkSpec::CenteredGaussian { .. } => 0.0,
            WalkSpec::BiasedGaussian { drift, .. } => drift,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.std() > 0.0 && self.std().is_finite()) {
            return Err(Error::param("walk.std", "must be > 0"));
        }
        if !self.drift().is_finite() {
            return Err(Error::param("walk.drift", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionKind {
    Background,
    StaticReflector { r_s: f64 },
    Motile { r_s: f64, walk: WalkSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub pixels: PixelSet,
    pub kind: RegionKind,
}

/// Global axial displacement `z(t)` of the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionSpec {
    #[default]
    None,
    Sinusoid {
        amplitude_nm: f64,
        frequency_hz: f64,
        #[serde(default)]
        phase: f64,
    },
    RandomWalk {
        std_nm_per_frame: f64,
    },
    Trace {
        z_nm: Vec<f64>,
    },
    /// Independent Gaussian displacement on every frame (vibration).
    Jitter {
        std_nm: f64,
    },
    /// Pointwise sum of several motions.
    Sum {
        components: Vec<MotionSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub regions: Vec<Region>,
    #[serde(default)]
    pub bulk_motion: MotionSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelKind {
    Background,
    StaticReflector,
    Motile,
}

/// Ground truth returned alongside a simulated stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimGroundTruth {
    pub width: usize,
    pub height: usize,
    pub label_map: Vec<PixelKind>,
    /// 1-based index of the covering region, 0 when uncovered.
    pub region_map: Vec<u32>,
    /// Phase-walk step std (rad/frame) on motile pixels, 0 elsewhere.
    pub motility_map: Vec<f64>,
    pub z_trace_nm: Vec<f64>,
}

impl SimGroundTruth {
    pub fn pixels_of(&self, kind: PixelKind) -> impl Iterator<Item = usize> + '_ {
        self.label_map
            .iter()
            .enumerate()
            .filter_map(move |(p, &k)| (k == kind).then_some(p))
    }

    /// One label per motile region (renumbered 1..), everything else 0.
    pub fn cell_mask(&self) -> MaskImage {
        let mut ids = std::collections::BTreeMap::new();
        let labels = self
            .label_map
            .iter()
            .zip(&self.region_map)
            .map(|(&kind, &region)| {
                if kind == PixelKind::Motile {
                    let next = ids.len() as u32 + 1;
                    *ids.entry(region).or_insert(next)
                } else {
                    0
                }
            })
            .collect();
        MaskImage::new(self.width, self.height, labels).expect("dimensions match by construction")
    }
}

/// `4π·z/λ`: interferometric phase of an axial displacement `z` travelled
/// twice (round trip).
pub fn phase_from_displacement(z_nm: f64, wavelength_nm: f64) -> f64 {
    4.0 * PI * z_nm / wavelength_nm
}

/// Samples the bulk-motion trace `z(t)` in nm.
pub fn motion_trace(config: &SimConfig, motion: &MotionSpec) -> Result<Vec<f64>> {
    motion_trace_on(config, motion, MOTION_STREAM)
}

fn motion_rng(config: &SimConfig, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(stream);
    rng
}

fn motion_trace_on(config: &SimConfig, motion: &MotionSpec, stream: u64) -> Result<Vec<f64>> {
    let n = config.frames;
    match motion {
        MotionSpec::None => Ok(vec![0.0; n]),
        MotionSpec::Sinusoid {
            amplitude_nm,
            frequency_hz,
            phase,
        } => {
            if !(amplitude_nm.is_finite() && frequency_hz.is_finite() && phase.is_finite()) {
                return Err(Error::param("bulk_motion", "sinusoid parameters must be finite"));
            }
            Ok((0..n)
                .map(|t| {
                    let time = t as f64 / config.frame_rate_hz;
                    amplitude_nm * (2.0 * PI * frequency_hz * time + phase).sin()
                })
                .collect())
        }
        MotionSpec::RandomWalk { std_nm_per_frame } => {
            if !(*std_nm_per_frame >= 0.0 && std_nm_per_frame.is_finite()) {
                return Err(Error::param("bulk_motion.std_nm_per_frame", "must be >= 0"));
            }
            let mut rng = motion_rng(config, stream);
            let mut z = 0.0;
            Ok((0..n)
                .map(|t| {
                    if t > 0 {
                        let step: f64 = rng.sample(StandardNormal);
                        z += std_nm_per_frame * step;
                    }
                    z
                })
                .collect())
        }
        MotionSpec::Trace { z_nm } => {
            if z_nm.len() != n {
                return Err(Error::InvalidScene(format!(
                    "motion trace has {} samples for {n} frames",
                    z_nm.len()
                )));
            }
            if z_nm.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidScene("motion trace contains non-finite values".into()));
            }
            Ok(z_nm.clone())
        }
        MotionSpec::Jitter { std_nm } => {
            if !(*std_nm >= 0.0 && std_nm.is_finite()) {
                return Err(Error::param("bulk_motion.std_nm", "must be >= 0"));
            }
            let mut rng = motion_rng(config, stream);
            Ok((0..n)
                .map(|_| std_nm * rng.sample::<f64, _>(StandardNormal))
                .collect())
        }
        MotionSpec::Sum { components } => {
            let mut z = vec![0.0; n];
            for (i, c) in components.iter().enumerate() {
                let part = motion_trace_on(config, c, stream.wrapping_sub((i as u64 + 1) << 32))?;
                for (a, b) in z.iter_mut().zip(part) {
                    *a += b;
                }
            }
            Ok(z)
        }
    }
}

/// Resolves regions to a per-pixel region index (`None` = background).
fn rasterize_scene(config: &SimConfig, scene: &SceneSpec) -> Result<Vec<Option<usize>>> {
    let mut owner: Vec<Option<usize>> = vec![None; config.width * config.height];
    for (i, region) in scene.regions.iter().enumerate() {
        match region.kind {
            RegionKind::Background => {}
            RegionKind::StaticReflector { r_s } | RegionKind::Motile { r_s, .. } => {
                if !(r_s >= 0.0 && r_s.is_finite()) {
                    return Err(Error::InvalidScene(format!(
                        "region {i}: reflectivity must be finite and >= 0"
                    )));
                }
            }
        }
        if let RegionKind::Motile { walk, .. } = &region.kind {
            walk.validate()
                .map_err(|e| Error::InvalidScene(format!("region {i}: {e}")))?;
        }
        for p in region.pixels.rasterize(config.width, config.height) {
            if let Some(j) = owner[p] {
                return Err(Error::InvalidScene(format!(
                    "regions {j} and {i} overlap at pixel ({}, {})",
                    p % config.width,
                    p / config.width
                )));
            }
            owner[p] = Some(i);
        }
    }
    Ok(owner)
}

/// Generates a stack from the interference model together with its ground
/// truth.
pub fn simulate_stack(config: &SimConfig, scene: &SceneSpec) -> Result<(Stack, SimGroundTruth)> {
    config.validate()?;
    let owner = rasterize_scene(config, scene)?;
    let z = motion_trace(config, &scene.bulk_motion)?;
    let bulk_phase: Vec<f64> = z
        .iter()
        .map(|&zt| phase_from_displacement(zt, config.wavelength_nm))
        .collect();

    let n = config.width * config.height;
    let frames = config.frames;
    let scale = config.intensity_scale();
    let series: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let kind = owner[p].map_or(RegionKind::Background, |i| scene.regions[i].kind);
            pixel_series(config, scale, p as u64, kind, &bulk_phase)
        })
        .collect();

    let mut data = vec![0f32; n * frames];
    for (p, s) in series.iter().enumerate() {
        for (t, &v) in s.iter().enumerate() {
            data[t * n + p] = v;
        }
    }
    let stack = Stack::new(config.width, config.height, frames, data)?
        .with_metadata(Some(config.frame_rate_hz), Some(config.wavelength_nm));

    let mut label_map = Vec::with_capacity(n);
    let mut region_map = Vec::with_capacity(n);
    let mut motility_map = Vec::with_capacity(n);
    for o in &owner {
        let kind = o.map(|i| scene.regions[i].kind);
        label_map.push(match kind {
            None | Some(RegionKind::Background) => PixelKind::Background,
            Some(RegionKind::StaticReflector { .. }) => PixelKind::StaticReflector,
            Some(RegionKind::Motile { .. }) => PixelKind::Motile,
        });
        region_map.push(o.map_or(0, |i| i as u32 + 1));
        motility_map.push(match kind {
            Some(RegionKind::Motile { walk, .. }) => walk.std(),
            _ => 0.0,
        });
    }
    let truth = SimGroundTruth {
        width: config.width,
        height: config.height,
        label_map,
        region_map,
        motility_map,
        z_trace_nm: z,
    };
    Ok((stack, truth))
}

fn pixel_series(
    config: &SimConfig,
    scale: f64,
    stream: u64,
    kind: RegionKind,
    bulk_phase: &[f64],
) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(stream);
    let mut phase = rng.random_range(0.0..2.0 * PI);
    let (r, walk) = match kind {
        RegionKind::Background => (0.0, None),
        RegionKind::StaticReflector { r_s } => (r_s, None),
        RegionKind::Motile { r_s, walk } => (r_s, Some(walk)),
    };
    let incoherent = r + config.r_inc + config.r_ref;
    let fringe = 2.0 * (r * config.r_ref).sqrt();
    let noise = config.camera_noise_std;
    bulk_phase
        .iter()
        .enumerate()
        .map(|(t, &psi)| {
            if let (Some(w), true) = (walk, t > 0) {
                let step: f64 = rng.sample(StandardNormal);
                phase += w.drift() + w.std() * step;
            }
            let mut v = scale * (incoherent + fringe * (phase + psi).cos());
            if noise > 0.0 {
                let e: f64 = rng.sample(StandardNormal);
                v += noise * e;
            }
            v as f32
        })
        .collect()
}

/// Ready-made scenes used by the CLI and the validation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneTemplate {
    /// Bright static fibres over dim, fast-decorrelating motile cells,
    /// under [`lung_motion`].
    LungLike,
    /// Dim cells with drifting (biased) phase walks over a noise background.
    MacaqueLike,
    /// Sparse fibres and dim drifting cells under random-walk bulk motion.
    LiverLike,
}

impl SceneTemplate {
    pub fn build(self, width: usize, height: usize, layout_seed: u64) -> SceneSpec {
        match self {
            SceneTemplate::LungLike => SceneSpec {
                bulk_motion: lung_motion(),
                ..lung_like(width, height, layout_seed)
            },
            SceneTemplate::MacaqueLike => macaque_like(width, height, layout_seed),
            SceneTemplate::LiverLike => liver_like(width, height, layout_seed),
        }
    }
}

/// Fibre reflectivity in the lung-like template.
pub const FIBER_REFLECTIVITY: f64 = 0.05;
/// Cell reflectivity in the lung-like template.
pub const CELL_REFLECTIVITY: f64 = 1e-4;

struct Layout {
    width: usize,
    height: usize,
    occupied: Vec<bool>,
    rng: ChaCha8Rng,
    regions: Vec<Region>,
}

impl Layout {
    fn new(width: usize, height: usize, seed: u64) -> Self {
        Self {
            width,
            height,
            occupied: vec![false; width * height],
            rng: ChaCha8Rng::seed_from_u64(seed),
            regions: Vec::new(),
        }
    }

    /// Random straight fibres merged into a single static region covering
    /// roughly `coverage` of the frame.
    fn fibers(&mut self, r_s: f64, coverage: f64, thickness: f64) {
        let (w, h) = (self.width as f64, self.height as f64);
        let target = (coverage * (self.width * self.height) as f64) as usize;
        let mut pixels = Vec::new();
        let mut covered = 0;
        let mut attempts = 0;
        while covered < target && attempts < 1000 {
            attempts += 1;
            let line = PixelSet::Line {
                x0: self.rng.random_range(0.0..w),
                y0: self.rng.random_range(0.0..h),
                x1: self.rng.random_range(0.0..w),
                y1: self.rng.random_range(0.0..h),
                thickness,
            };
            for p in line.rasterize(self.width, self.height) {
                if !self.occupied[p] {
                    self.occupied[p] = true;
                    pixels.push([p % self.width, p / self.width]);
                    covered += 1;
                }
            }
        }
        if !pixels.is_empty() {
            self.regions.push(Region {
                pixels: PixelSet::Pixels { pixels },
                kind: RegionKind::StaticReflector { r_s },
            });
        }
    }

    /// Non-overlapping disks until `coverage` is reached or placement fails.
    fn cells(&mut self, coverage: f64, radius: (f64, f64), kind: impl Fn(&mut ChaCha8Rng) -> RegionKind) {
        let target = (coverage * (self.width * self.height) as f64) as usize;
        let mut covered = 0;
        let mut failures = 0;
        while covered < target && failures < 2000 {
            let r = self.rng.random_range(radius.0..=radius.1);
            let disk = PixelSet::Disk {
                cx: self.rng.random_range(0.0..self.width as f64),
                cy: self.rng.random_range(0.0..self.height as f64),
                radius: r,
            };
            let px = disk.rasterize(self.width, self.height);
            if px.len() < 4 || px.iter().any(|&p| self.occupied[p]) {
                failures += 1;
                continue;
            }
            for &p in &px {
                self.occupied[p] = true;
            }
            covered += px.len();
            let kind = kind(&mut self.rng);
            self.regions.push(Region { pixels: disk, kind });
        }
    }

    /// Cells on a jittered grid with one pixel of clearance.
    fn cell_grid(&mut self, pitch: f64, radius: f64, kind: impl Fn(&mut ChaCha8Rng) -> RegionKind) {
        let jitter = ((pitch - 2.0 * radius - 2.0) / 2.0).max(0.0);
        let mut cy = pitch / 2.0;
        while cy + radius < self.height as f64 {
            let mut cx = pitch / 2.0;
            while cx + radius < self.width as f64 {
                let disk = PixelSet::Disk {
                    cx: cx + self.rng.random_range(-jitter..=jitter),
                    cy: cy + self.rng.random_range(-jitter..=jitter),
                    radius,
                };
                let px = disk.rasterize(self.width, self.height);
                if !px.is_empty() && px.iter().all(|&p| !self.occupied[p]) {
                    for &p in &px {
                        self.occupied[p] = true;
                    }
                    let kind = kind(&mut self.rng);
                    self.regions.push(Region { pixels: disk, kind });
                }
                cx += pitch;
            }
            cy += pitch;
        }
    }

    fn finish(self, bulk_motion: MotionSpec) -> SceneSpec {
        SceneSpec {
            regions: self.regions,
            bulk_motion,
        }
    }
}

/// Sparse bright fibres (r_s = 0.05) over dim motile cells (r_s = 1e-4) whose
/// phase decorrelates within a few frames. No bulk motion; set
/// `bulk_motion` on the result.
pub fn lung_like(width: usize, height: usize, layout_seed: u64) -> SceneSpec {
    let mut layout = Layout::new(width, height, layout_seed);
    layout.fibers(FIBER_REFLECTIVITY, 0.10, 2.5);
    layout.cells(0.30, (2.5, 5.0), |_| RegionKind::Motile {
        r_s: CELL_REFLECTIVITY,
        walk: WalkSpec::CenteredGaussian { std: 0.6 },
    });
    layout.finish(MotionSpec::None)
}

/// Bulk motion of the lung-like template: 100 nm, 5 Hz axial oscillation.
pub fn lung_motion() -> MotionSpec {
    MotionSpec::Sinusoid {
        amplitude_nm: 100.0,
        frequency_hz: 5.0,
        phase: 0.0,
    }
}

/// Grid of dim cells whose phase drifts slowly (constant scatterer
/// velocity) over a background that only carries camera noise.
pub fn macaque_like(width: usize, height: usize, layout_seed: u64) -> SceneSpec {
    let mut layout = Layout::new(width, height, layout_seed);
    layout.cell_grid(12.0, 4.0, |rng| RegionKind::Motile {
        r_s: 1e-6,
        walk: WalkSpec::BiasedGaussian {
            std: 0.02,
            drift: if rng.random_bool(0.5) { 0.03 } else { -0.03 },
        },
    });
    layout.finish(MotionSpec::None)
}

/// Bulk motion of the liver-like template: slow random-walk drift
/// (0.5 nm/frame) plus 10 nm frame-to-frame vibration.
pub fn liver_motion() -> MotionSpec {
    MotionSpec::Sum {
        components: vec![
            MotionSpec::RandomWalk {
                std_nm_per_frame: 0.5,
            },
            MotionSpec::Jitter { std_nm: 10.0 },
        ],
    }
}

/// Sparse fibres and dim drifting cells under [`liver_motion`].
pub fn liver_like(width: usize, height: usize, layout_seed: u64) -> SceneSpec {
    let mut layout = Layout::new(width, height, layout_seed);
    layout.fibers(FIBER_REFLECTIVITY, 0.08, 2.0);
    layout.cell_grid(12.0, 4.0, |rng| RegionKind::Motile {
        r_s: 1e-6,
        walk: WalkSpec::BiasedGaussian {
            std: 0.02,
            drift: if rng.random_bool(0.5) { 0.03 } else { -0.03 },
        },
    });
    layout.finish(liver_motion())
}
