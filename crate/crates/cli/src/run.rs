//! Resolved run configurations and the code that executes them. Both the
//! subcommands and `replay` go through [`execute`], so a manifest snapshot
//! drives exactly the code path that produced it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use dffoct::dynamic::{dynamic_image, DynConfig, DynMethod};
use dffoct::io::{self, ImageFormat};
use dffoct::metrics::{snr_gain, snr_per_cell, write_gain_csv};
use dffoct::simulate::{simulate_stack, SceneSpec, SimConfig};
use dffoct::svdfilter::{filter_stack, FilterConfig};
use dffoct::{DynamicImage, Stack};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::manifest::StageTiming;

/// `(role, path)` pairs naming the files of a run.
pub type Files = Vec<(String, PathBuf)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
/// Externally tagged (`{"pipeline": {...}}`) so schema errors keep their
/// JSON path.
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RunConfig {
    Simulate {
        simulation: SimConfig,
        scene: SceneSpec,
    },
    Filter {
        filter: FilterConfig,
    },
    Dyn {
        dynamic: DynConfig,
    },
    Snr {},
    Pipeline {
        filter: FilterConfig,
        window_length: usize,
        window_stride: Option<usize>,
    },
}

/// Scene description accepted by `simulate --scene`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default)]
    pub config: SimConfig,
    pub scene: SceneSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSummary {
    pub n_cells: usize,
    pub mean_snr_a: f64,
    pub mean_snr_b: f64,
    pub mean_gain: f64,
    pub background_mean_a: f64,
    pub background_mean_b: f64,
}

/// Parses JSON, reporting schema violations with their location.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        CliError::User(format!("{}: at `{at}`: {}", origin.display(), e.into_inner()))
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::User(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn lookup<'a>(files: &'a Files, role: &str) -> Option<&'a Path> {
    files.iter().find(|(r, _)| r == role).map(|(_, p)| p.as_path())
}

fn need<'a>(files: &'a Files, role: &str) -> Result<&'a Path, CliError> {
    lookup(files, role).ok_or_else(|| CliError::User(format!("no file given for `{role}`")))
}

struct Stages(Vec<StageTiming>);

impl Stages {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f();
        self.0.push(StageTiming {
            stage: stage.to_string(),
            wall_time_seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn write_image_with_preview(
    image: &DynamicImage,
    outputs: &Files,
    role: &str,
    preview_role: &str,
) -> Result<(), CliError> {
    io::write_image(image, need(outputs, role)?, ImageFormat::Dstk2d)?;
    if let Some(p) = lookup(outputs, preview_role) {
        io::write_image(image, p, ImageFormat::Pgm16)?;
    }
    Ok(())
}

/// Filters `stack` and writes the filtered stack, report and artifact map
/// under the given roles.
fn run_filter(
    stack: &Stack,
    config: &FilterConfig,
    outputs: &Files,
    stack_role: &str,
) -> Result<Stack, CliError> {
    let mut out = filter_stack(stack, config)?;
    // Timing lives in the manifest so the report stays reproducible.
    out.report.wall_time_seconds = None;
    println!("rejected components: {:?}", out.report.rejected_indices);
    io::write_stack(&out.stack, need(outputs, stack_role)?)?;
    io::write_report(&out.report, need(outputs, "report")?)?;
    if let Some(p) = lookup(outputs, "artifact_image") {
        io::write_image(&out.artifact_image, p, ImageFormat::Dstk2d)?;
    }
    Ok(out.stack)
}

fn run_snr(a: &DynamicImage, b: &DynamicImage, mask: &io::MaskImage, outputs: &Files, prefix: &str) -> Result<(), CliError> {
    let ra = snr_per_cell(a, mask)?;
    let rb = snr_per_cell(b, mask)?;
    let gain = snr_gain(&ra, &rb)?;
    write_gain_csv(&gain, need(outputs, &format!("{prefix}table"))?)?;
    let summary = SnrSummary {
        n_cells: ra.n_cells,
        mean_snr_a: ra.mean_snr,
        mean_snr_b: rb.mean_snr,
        mean_gain: gain.mean_gain,
        background_mean_a: ra.background_mean,
        background_mean_b: rb.background_mean,
    };
    write_json(&summary, need(outputs, &format!("{prefix}summary"))?)
}

/// Runs `config` reading `inputs` and writing `outputs`; returns the
/// per-stage wall times.
pub fn execute(config: &RunConfig, inputs: &Files, outputs: &Files) -> Result<Vec<StageTiming>, CliError> {
    let mut stages = Stages(Vec::new());
    match config {
        RunConfig::Simulate { simulation, scene } => {
            let (stack, truth) = stages.time("simulate", || Ok(simulate_stack(simulation, scene)?))?;
            stages.time("write", || {
                io::write_stack(&stack, need(outputs, "stack")?)?;
                write_json(&truth, need(outputs, "truth")?)?;
                if let Some(p) = lookup(outputs, "mask") {
                    io::write_mask(&truth.cell_mask(), p)?;
                }
                Ok(())
            })?;
        }
        RunConfig::Filter { filter } => {
            filter.validate()?;
            let stack = stages.time("read", || Ok(io::read_stack(need(inputs, "stack")?)?))?;
            stages.time("filter", || run_filter(&stack, filter, outputs, "stack"))?;
        }
        RunConfig::Dyn { dynamic } => {
            let stack = stages.time("read", || Ok(io::read_stack(need(inputs, "stack")?)?))?;
            stages.time("dyn", || {
                let image = dynamic_image(&stack, dynamic)?;
                write_image_with_preview(&image, outputs, "image", "preview")
            })?;
        }
        RunConfig::Snr {} => {
            stages.time("snr", || {
                let a = io::read_image(need(inputs, "image_a")?)?;
                let b = io::read_image(need(inputs, "image_b")?)?;
                let mask = io::read_mask(need(inputs, "mask")?)?;
                run_snr(&a, &b, &mask, outputs, "")
            })?;
        }
        RunConfig::Pipeline {
            filter,
            window_length,
            window_stride,
        } => {
            filter.validate()?;
            let dyn_config = |method| DynConfig {
                window_length: *window_length,
                window_stride: *window_stride,
                method,
            };
            // Reject a bad window before spending time on the filter.
            let stack = stages.time("read", || {
                let stack = io::read_stack(need(inputs, "stack")?)?;
                dyn_config(DynMethod::StdDev).n_windows(stack.frames())?;
                Ok(stack)
            })?;
            let mask = lookup(inputs, "mask").map(io::read_mask).transpose()?;
            let filtered = stages.time("filter", || run_filter(&stack, filter, outputs, "filtered"))?;
            let sd = stages.time("dyn_std", || {
                let image = dynamic_image(&filtered, &dyn_config(DynMethod::StdDev))?;
                write_image_with_preview(&image, outputs, "dyn_std", "dyn_std_preview")?;
                Ok(image)
            })?;
            let cs = stages.time("dyn_cumsum", || {
                let image = dynamic_image(&filtered, &dyn_config(DynMethod::CumsumMax))?;
                write_image_with_preview(&image, outputs, "dyn_cumsum", "dyn_cumsum_preview")?;
                Ok(image)
            })?;
            if let Some(mask) = mask {
                stages.time("snr", || run_snr(&sd, &cs, &mask, outputs, "snr_"))?;
            }
        }
    }
    Ok(stages.0)
}
