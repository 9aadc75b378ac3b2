//! `dffoct`: simulate, filter and analyse dynamic full-field OCT stacks.
//!
//! Every subcommand writes a JSON manifest recording input hashes, the fully
//! resolved configuration, stage timings and output hashes; `dffoct replay`
//! re-runs a manifest and checks the outputs are byte-identical.

mod error;
mod manifest;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dffoct::dynamic::{DynConfig, DynMethod};
use dffoct::simulate::{MotionSpec, SceneTemplate, SimConfig};
use dffoct::svdfilter::{Detector, FilterConfig};

use error::CliError;
use manifest::{records, Manifest, TOOL};
use run::{execute, parse_json, Files, RunConfig, SceneFile};

#[derive(Parser)]
#[command(name = "dffoct", version, about = "SVD motion-artifact filtering and dynamic contrast for D-FFOCT stacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a stack with ground truth from a scene file or template.
    Simulate(SimulateArgs),
    /// Remove motion-artifact components from a stack.
    Filter(FilterArgs),
    /// Compute a dynamic image (windowed std or cumulative-sum maximum).
    Dyn(DynArgs),
    /// Per-cell SNR of two dynamic images and the gain of B over A.
    Snr(SnrArgs),
    /// filter, then std and cumsum dynamic images, then SNR if a mask is given.
    Pipeline(PipelineArgs),
    /// Re-run a manifest and check the outputs are byte-identical.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum Template {
    LungLike,
    MacaqueLike,
    LiverLike,
}

impl From<Template> for SceneTemplate {
    fn from(t: Template) -> Self {
        match t {
            Template::LungLike => SceneTemplate::LungLike,
            Template::MacaqueLike => SceneTemplate::MacaqueLike,
            Template::LiverLike => SceneTemplate::LiverLike,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene JSON (`{"config": {...}, "scene": {...}}`).
    #[arg(long, required_unless_present = "template", conflicts_with = "template")]
    scene: Option<PathBuf>,
    #[arg(long, value_enum)]
    template: Option<Template>,
    /// Frame width; overrides the scene file.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Drop the scene's bulk motion (motion-free twin of a scene).
    #[arg(long)]
    static_sample: bool,
    /// Noise seed (and layout seed for templates).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_stack: PathBuf,
    /// Ground-truth JSON (pixel classes, regions, motility, z trace).
    #[arg(long)]
    out_truth: PathBuf,
    /// Cell label mask (16-bit PGM) for the `snr` and `pipeline` commands.
    #[arg(long)]
    out_mask: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct FilterFlags {
    /// Flag |ΔZCR| above this many standard deviations.
    #[arg(long, default_value_t = 3.0)]
    threshold_mult: f64,
    /// Process the frame in tiles of WxH pixels.
    #[arg(long, value_parser = parse_tile)]
    tile: Option<(usize, usize)>,
    /// Remove these components instead of running the detector.
    #[arg(long, value_delimiter = ',')]
    manual_indices: Option<Vec<usize>>,
    /// Highest component index (exclusive) the detector may flag, or `all`.
    #[arg(long, default_value = "8", value_parser = parse_limit)]
    max_candidates: Limit,
    /// Decompose without subtracting each pixel's temporal mean.
    #[arg(long)]
    no_center: bool,
    /// Bytes available to concurrent tiles: a number, `auto` (75% of
    /// available memory) or `none`.
    #[arg(long, default_value = "auto", value_parser = parse_limit)]
    memory_budget: Limit,
    /// Process tiles one at a time.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Per-pixel energy of the removed components (.dstk image).
    #[arg(long)]
    artifact_image: Option<PathBuf>,
    #[command(flatten)]
    flags: FilterFlags,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Std,
    Cumsum,
}

#[derive(Args)]
struct DynArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "std")]
    method: Method,
    /// Window length in frames.
    #[arg(long, default_value_t = 50)]
    tau: usize,
    /// Window stride in frames (default: tau).
    #[arg(long)]
    stride: Option<usize>,
    /// Min-max scaled 16-bit PGM preview.
    #[arg(long)]
    preview: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SnrArgs {
    #[arg(long)]
    image_a: PathBuf,
    #[arg(long)]
    image_b: PathBuf,
    /// Cell label mask; label 0 is background.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out_csv: PathBuf,
    /// JSON summary (default: the CSV path with a .json extension).
    #[arg(long)]
    out_summary: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    input: PathBuf,
    /// Cell label mask; enables the SNR stage.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    outdir: PathBuf,
    #[command(flatten)]
    flags: FilterFlags,
    #[arg(long, default_value_t = 50)]
    tau: usize,
    #[arg(long)]
    stride: Option<usize>,
    /// Also write 16-bit PGM previews of the dynamic images.
    #[arg(long)]
    previews: bool,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Write the outputs here (same file names) instead of their recorded
    /// paths.
    #[arg(long)]
    outdir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
enum Limit {
    Auto,
    Unbounded,
    Value(u64),
}

fn parse_limit(s: &str) -> Result<Limit, String> {
    match s {
        "auto" => Ok(Limit::Auto),
        "all" | "none" => Ok(Limit::Unbounded),
        _ => s.parse().map(Limit::Value).map_err(|_| format!("expected a number, got `{s}`")),
    }
}

fn parse_tile(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let dim = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad tile dimension `{v}`"));
    Ok((dim(w)?, dim(h)?))
}

/// 75% of `MemAvailable`, or `None` where it cannot be read.
fn available_memory_budget() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let kib: u64 = info
        .lines()
        .find_map(|l| l.strip_prefix("MemAvailable:"))?
        .trim()
        .trim_end_matches("kB")
        .trim()
        .parse()
        .ok()?;
    Some(kib * 1024 / 4 * 3)
}

impl FilterFlags {
    fn resolve(&self) -> Result<FilterConfig, CliError> {
        let max_candidate_index = match self.max_candidates {
            Limit::Value(n) => Some(n as usize),
            Limit::Unbounded => None,
            Limit::Auto => return Err(CliError::User("--max-candidates takes a number or `all`".into())),
        };
        let memory_budget_bytes = match self.memory_budget {
            Limit::Value(b) => Some(b),
            Limit::Unbounded => None,
            Limit::Auto => available_memory_budget(),
        };
        let config = FilterConfig {
            threshold_multiplier: self.threshold_mult,
            max_candidate_index,
            tile: self.tile,
            detector: match &self.manual_indices {
                Some(idx) => Detector::Manual(idx.clone()),
                None => Detector::DzcrThreshold,
            },
            center_pixels: !self.no_center,
            memory_budget_bytes,
            parallel_tiles: !self.serial,
        };
        config.validate()?;
        Ok(config)
    }
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    if path.is_absolute() {
        return Ok(path.to_path_buf());
    }
    let cwd = std::env::current_dir().map_err(|e| CliError::io(Path::new("."), e))?;
    Ok(cwd.join(path))
}

fn files(pairs: &[(&str, &Path)]) -> Result<Files, CliError> {
    pairs.iter().map(|(role, p)| Ok((role.to_string(), absolute(p)?))).collect()
}

fn push_opt(pairs: &mut Vec<(&'static str, PathBuf)>, role: &'static str, path: &Option<PathBuf>) {
    if let Some(p) = path {
        pairs.push((role, p.clone()));
    }
}

fn owned(pairs: &[(&'static str, PathBuf)]) -> Result<Files, CliError> {
    files(&pairs.iter().map(|(r, p)| (*r, p.as_path())).collect::<Vec<_>>())
}

fn default_manifest(primary: &Path) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Executes `config` and writes its manifest.
fn run_and_record(config: RunConfig, inputs: Files, outputs: Files, manifest_path: &Path) -> Result<Manifest, CliError> {
    let input_records = records(&inputs)?;
    for (_, p) in &outputs {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    let stages = execute(&config, &inputs, &outputs)?;
    let manifest = Manifest {
        tool: TOOL.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        inputs: input_records,
        config,
        stages,
        outputs: records(&outputs)?,
    };
    manifest.write(manifest_path)?;
    Ok(manifest)
}

fn simulate(a: SimulateArgs) -> Result<Manifest, CliError> {
    let (mut sim, scene) = match (&a.scene, a.template) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let file: SceneFile = parse_json(&text, path)?;
            (file.config, file.scene)
        }
        (None, Some(t)) => {
            let sim = SimConfig::new(a.width.unwrap_or(128), a.height.unwrap_or(128), a.frames.unwrap_or(512));
            let scene = SceneTemplate::from(t).build(sim.width, sim.height, a.seed.unwrap_or(0));
            (sim, scene)
        }
        (None, None) => unreachable!("clap requires --scene or --template"),
    };
    sim.width = a.width.unwrap_or(sim.width);
    sim.height = a.height.unwrap_or(sim.height);
    sim.frames = a.frames.unwrap_or(sim.frames);
    sim.rng_seed = a.seed.unwrap_or(sim.rng_seed);
    let mut scene = scene;
    if a.static_sample {
        scene.bulk_motion = MotionSpec::None;
    }

    let mut inputs = Vec::new();
    if let Some(p) = &a.scene {
        inputs.push(("scene", p.clone()));
    }
    let mut outputs = vec![("stack", a.out_stack.clone()), ("truth", a.out_truth.clone())];
    push_opt(&mut outputs, "mask", &a.out_mask);
    let manifest = a.manifest.unwrap_or_else(|| default_manifest(&a.out_stack));
    run_and_record(
        RunConfig::Simulate { simulation: sim, scene },
        owned(&inputs)?,
        owned(&outputs)?,
        &manifest,
    )
}

fn filter(a: FilterArgs) -> Result<Manifest, CliError> {
    let config = RunConfig::Filter {
        filter: a.flags.resolve()?,
    };
    let mut outputs = vec![("stack", a.output.clone()), ("report", a.report.clone())];
    push_opt(&mut outputs, "artifact_image", &a.artifact_image);
    let manifest = a.manifest.unwrap_or_else(|| default_manifest(&a.output));
    run_and_record(config, files(&[("stack", &a.input)])?, owned(&outputs)?, &manifest)
}

fn dynamic(a: DynArgs) -> Result<Manifest, CliError> {
    let method = match a.method {
        Method::Std => DynMethod::StdDev,
        Method::Cumsum => DynMethod::CumsumMax,
    };
    let config = RunConfig::Dyn {
        dynamic: DynConfig {
            window_length: a.tau,
            window_stride: a.stride,
            method,
        },
    };
    let mut outputs = vec![("image", a.output.clone())];
    push_opt(&mut outputs, "preview", &a.preview);
    let manifest = a.manifest.unwrap_or_else(|| default_manifest(&a.output));
    run_and_record(config, files(&[("stack", &a.input)])?, owned(&outputs)?, &manifest)
}

fn snr(a: SnrArgs) -> Result<Manifest, CliError> {
    let summary = a.out_summary.unwrap_or_else(|| a.out_csv.with_extension("json"));
    let inputs = files(&[("image_a", &a.image_a), ("image_b", &a.image_b), ("mask", &a.mask)])?;
    let outputs = files(&[("table", &a.out_csv), ("summary", &summary)])?;
    let manifest = a.manifest.unwrap_or_else(|| default_manifest(&a.out_csv));
    run_and_record(RunConfig::Snr {}, inputs, outputs, &manifest)
}

fn pipeline(a: PipelineArgs) -> Result<Manifest, CliError> {
    let config = RunConfig::Pipeline {
        filter: a.flags.resolve()?,
        window_length: a.tau,
        window_stride: a.stride,
    };
    let d = &a.outdir;
    let mut inputs = vec![("stack", a.input.clone())];
    push_opt(&mut inputs, "mask", &a.mask);
    let mut outputs = vec![
        ("filtered", d.join("filtered.dstk")),
        ("report", d.join("report.json")),
        ("artifact_image", d.join("artifact.dstk")),
        ("dyn_std", d.join("dyn_std.dstk")),
        ("dyn_cumsum", d.join("dyn_cumsum.dstk")),
    ];
    if a.previews {
        outputs.push(("dyn_std_preview", d.join("dyn_std.pgm")));
        outputs.push(("dyn_cumsum_preview", d.join("dyn_cumsum.pgm")));
    }
    if a.mask.is_some() {
        outputs.push(("snr_table", d.join("snr.csv")));
        outputs.push(("snr_summary", d.join("snr.json")));
    }
    run_and_record(config, owned(&inputs)?, owned(&outputs)?, &d.join("manifest.json"))
}

fn replay(a: ReplayArgs) -> Result<Manifest, CliError> {
    let recorded = Manifest::read(&a.manifest)?;
    if recorded.tool != TOOL {
        return Err(CliError::User(format!("manifest was written by `{}`", recorded.tool)));
    }
    for input in &recorded.inputs {
        let now = manifest::sha256_file(&input.path)?;
        if now != input.sha256 {
            return Err(CliError::User(format!(
                "input `{}` ({}) changed since the recorded run",
                input.role,
                input.path.display()
            )));
        }
    }
    let inputs: Files = recorded.inputs.iter().map(|r| (r.role.clone(), r.path.clone())).collect();
    let outputs: Files = match &a.outdir {
        Some(dir) => recorded
            .outputs
            .iter()
            .map(|r| {
                let name = r.path.file_name().ok_or_else(|| {
                    CliError::User(format!("output path {} has no file name", r.path.display()))
                })?;
                Ok((r.role.clone(), absolute(&dir.join(name))?))
            })
            .collect::<Result<_, CliError>>()?,
        None => recorded.outputs.iter().map(|r| (r.role.clone(), r.path.clone())).collect(),
    };
    let manifest_path = match &a.outdir {
        Some(dir) => dir.join("manifest.json"),
        None => a.manifest.clone(),
    };
    let rerun = run_and_record(recorded.config.clone(), inputs, outputs, &manifest_path)?;
    let differing: Vec<String> = recorded
        .outputs
        .iter()
        .zip(&rerun.outputs)
        .filter(|(old, new)| old.sha256 != new.sha256)
        .map(|(old, _)| old.role.clone())
        .collect();
    if !differing.is_empty() {
        return Err(CliError::Mismatch(format!(
            "replay differs from the recorded run in: {}",
            differing.join(", ")
        )));
    }
    println!("replay reproduced {} outputs byte for byte", rerun.outputs.len());
    Ok(rerun)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Filter(a) => filter(a),
        Command::Dyn(a) => dynamic(a),
        Command::Snr(a) => snr(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(manifest) => {
            for out in &manifest.outputs {
                println!("{:<18} {}", out.role, out.path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_and_limit_parsing() {
        assert_eq!(parse_tile("256x128"), Ok((256, 128)));
        assert_eq!(parse_tile("8X8"), Ok((8, 8)));
        assert!(parse_tile("256").is_err());
        assert!(parse_tile("ax2").is_err());
        assert!(matches!(parse_limit("all"), Ok(Limit::Unbounded)));
        assert!(matches!(parse_limit("auto"), Ok(Limit::Auto)));
        assert!(matches!(parse_limit("12"), Ok(Limit::Value(12))));
        assert!(parse_limit("-1").is_err());
    }

    #[test]
    fn default_flags_resolve_to_library_defaults() {
        let cli = Cli::try_parse_from(["dffoct", "filter", "--input", "a", "--output", "b", "--report", "c", "--memory-budget", "none"]).unwrap();
        let Command::Filter(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.flags.resolve().unwrap(), FilterConfig::default());
    }

    #[test]
    fn manual_indices_select_manual_detector() {
        let cli = Cli::try_parse_from(["dffoct", "filter", "--input", "a", "--output", "b", "--report", "c", "--manual-indices", "0,1"]).unwrap();
        let Command::Filter(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.flags.resolve().unwrap().detector, Detector::Manual(vec![0, 1]));
    }

    #[test]
    fn scene_and_template_are_exclusive() {
        let base = ["dffoct", "simulate", "--out-stack", "s", "--out-truth", "t"];
        assert!(Cli::try_parse_from(base).is_err());
        let both = [&base[..], &["--scene", "x.json", "--template", "lung-like"]].concat();
        assert!(Cli::try_parse_from(both).is_err());
    }

    #[test]
    fn manifest_sits_next_to_primary_output() {
        assert_eq!(default_manifest(Path::new("out/f.dstk")), PathBuf::from("out/f.dstk.manifest.json"));
    }

    #[test]
    fn memory_budget_is_below_available() {
        if let Some(b) = available_memory_budget() {
            assert!(b > 0);
        }
    }
}
