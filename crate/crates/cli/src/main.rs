use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use hybridloc::geomatch::FloorPlan;
use hybridloc::imaging::{angular_error, load_image, save_image, Transfer};
use hybridloc::landmark::Pixel;
use hybridloc::pipeline::{
    detect_floor_corners, emit_overlay, run_benchmark, run_pipeline, BenchConfig, Diagnostics, EstimatorChoice,
    PipelineConfig,
};
use hybridloc::radiomap::{build_radio_map, wlan_locate, write_access_points, RadioMap, RssiVector};
use hybridloc::synthscene::{radio_setup, random_hallway, render, GroundTruth, HallwayParams, SceneSpec};

#[derive(Parser, Debug)]
#[command(name = "hybridloc", version, about = "Hallway positioning from a camera frame and a WLAN scan")]
struct Cli {
    /// Pipeline configuration (JSON); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Illuminant estimator, e.g. `grey_world`, `white_patch:0.98`, `grey_edge:1,6,1`, `iic` or `none`.
    #[arg(long, global = true)]
    estimator: Option<EstimatorChoice>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Image files hold linear values instead of sRGB.
    #[arg(long, global = true)]
    linear: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the illuminant of an image.
    Illum {
        image: PathBuf,
        /// Ground truth JSON written by `simulate`; adds the angular error.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Detect floor corners and write an overlay.
    Detect { image: PathBuf },
    /// Render a scene with its truth, floor plan, radio map and a WLAN observation.
    Simulate {
        /// Scene JSON; a random hallway is generated from the seed when omitted.
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        survey_spacing: f64,
        #[arg(long, default_value_t = 10)]
        survey_samples: usize,
    },
    /// WLAN-only fix from an RSSI observation.
    Locate {
        /// Observation JSON: access point id to RSSI in dBm.
        rssi: PathBuf,
        /// Radio map CSV; defaults to the config's map.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Full run on one frame and one observation.
    Pipeline {
        image: PathBuf,
        rssi: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Batch evaluation on generated hallways.
    Bench {
        /// Benchmark settings (JSON).
        #[arg(long)]
        bench: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

struct Context {
    config: PipelineConfig,
    transfer: Transfer,
    out: Option<PathBuf>,
    seed: Option<u64>,
}

impl Context {
    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .with_context(|| format!("no {what} given on the command line or in the config"))
}

fn load_map(path: &Path) -> Result<RadioMap> {
    RadioMap::load(path).with_context(|| format!("loading radio map {}", path.display()))
}

fn illum(ctx: &Context, image: &Path, truth: Option<&Path>) -> Result<()> {
    let img = load_image(image, ctx.transfer).with_context(|| format!("loading {}", image.display()))?;
    let estimate = ctx.config.estimator.estimate(&img)?;
    let error = match (truth, estimate) {
        (Some(t), Some(e)) => Some(angular_error(&e, &read_json::<GroundTruth>(t)?.illuminant)),
        _ => None,
    };
    let report = json!({
        "estimator": ctx.config.estimator.to_string(),
        "illuminant": estimate,
        "angular_error_deg": error,
    });
    if let Some(dir) = &ctx.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("illuminant.json"), &report)?;
    }
    print_json(&report);
    Ok(())
}

fn corner_pixels(diag: &Diagnostics) -> Vec<Pixel> {
    diag.corners.iter().map(|c| c.position).collect()
}

fn detect(ctx: &Context, image: &Path) -> Result<()> {
    let img = load_image(image, ctx.transfer).with_context(|| format!("loading {}", image.display()))?;
    let mut diag = Diagnostics::default();
    detect_floor_corners(&ctx.config, &img, &mut diag)?;
    let dir = ctx.out_dir()?;
    emit_overlay(&img, &corner_pixels(&diag), &dir.join("overlay.ppm"), ctx.transfer)?;
    let report = json!({
        "illuminant": diag.illuminant,
        "regions": diag.region_count,
        "corners": diag.corners,
    });
    write_json(&dir.join("corners.json"), &report)?;
    print_json(&report);
    Ok(())
}

fn simulate(ctx: &Context, scene: Option<&Path>, spacing: f64, samples: usize) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed.unwrap_or(ctx.config.seed));
    let spec = match scene {
        Some(p) => SceneSpec::load(p).with_context(|| format!("loading scene {}", p.display()))?,
        None => random_hallway(&mut rng, &HallwayParams::default()),
    };
    let (img, truth) = render(&spec)?;
    let (aps, area) = radio_setup(&spec);
    let map = build_radio_map(&aps, area, spacing, samples, &mut rng)?;
    let observed = RssiVector::observe(&aps, spec.true_pose.position, &mut rng);

    let dir = ctx.out_dir()?;
    save_image(&img, dir.join("image.ppm"), ctx.transfer)?;
    spec.save(&dir.join("scene.json"))?;
    write_json(&dir.join("truth.json"), &truth)?;
    truth.plan.save(&dir.join("plan.json"))?;
    map.save(&dir.join("radio_map.csv"))?;
    write_access_points(&aps, fs::File::create(dir.join("aps.csv"))?)?;
    write_json(&dir.join("observation.json"), &observed)?;
    print_json(&json!({
        "out": dir,
        "pose": truth.pose,
        "corners": truth.corners.len(),
        "fingerprints": map.fingerprints().len(),
    }));
    Ok(())
}

fn locate(ctx: &Context, rssi: &Path, map: Option<PathBuf>) -> Result<()> {
    let map = load_map(&required(map, &ctx.config.radio_map_path, "radio map")?)?;
    let observed: RssiVector = read_json(rssi)?;
    let fix = wlan_locate(&map, &observed, ctx.config.wlan_k)?;
    if let Some(dir) = &ctx.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("fix.json"), &fix)?;
    }
    print_json(&serde_json::to_value(fix)?);
    Ok(())
}

fn pipeline(ctx: &Context, image: &Path, rssi: &Path, plan: Option<PathBuf>, map: Option<PathBuf>) -> Result<()> {
    let plan_path = required(plan, &ctx.config.plan_path, "floor plan")?;
    let plan = FloorPlan::load(&plan_path).with_context(|| format!("loading plan {}", plan_path.display()))?;
    let map = load_map(&required(map, &ctx.config.radio_map_path, "radio map")?)?;
    let img = load_image(image, ctx.transfer).with_context(|| format!("loading {}", image.display()))?;
    let observed: RssiVector = read_json(rssi)?;
    let (fix, diag) = run_pipeline(&ctx.config, &plan, &map, &img, &observed)?;
    if let Some(dir) = &ctx.out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("fix.json"), &fix)?;
        write_json(&dir.join("diagnostics.json"), &diag)?;
        emit_overlay(&img, &corner_pixels(&diag), &dir.join("overlay.ppm"), ctx.transfer)?;
    }
    print_json(&json!({
        "fix": fix,
        "corners": diag.corners.len(),
        "inliers": diag.hypothesis.as_ref().map(|h| h.inliers.len()),
        "vision_failure": diag.vision_failure.as_ref().map(|e| e.to_string()),
    }));
    Ok(())
}

fn bench(ctx: &Context, settings: Option<&Path>, trials: Option<usize>) -> Result<()> {
    let mut bench: BenchConfig = match settings {
        Some(p) => read_json(p)?,
        None => BenchConfig::default(),
    };
    if let Some(s) = ctx.seed {
        bench.seed = s;
    }
    if let Some(t) = trials {
        bench.trials = t;
    }
    let report = run_benchmark(&ctx.config, &bench);
    let dir = ctx.out_dir()?;
    report.write(&dir).with_context(|| format!("writing report to {}", dir.display()))?;
    println!("{}", report.summary_json());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(e) = cli.estimator {
        config.estimator = e;
    }
    config.validate()?;
    let ctx = Context {
        config,
        transfer: if cli.linear { Transfer::Linear } else { Transfer::Srgb },
        out: cli.out,
        seed: cli.seed,
    };
    match cli.command {
        Command::Illum { image, truth } => illum(&ctx, &image, truth.as_deref()),
        Command::Detect { image } => detect(&ctx, &image),
        Command::Simulate {
            scene,
            survey_spacing,
            survey_samples,
        } => simulate(&ctx, scene.as_deref(), survey_spacing, survey_samples),
        Command::Locate { rssi, map } => locate(&ctx, &rssi, map),
        Command::Pipeline { image, rssi, plan, map } => pipeline(&ctx, &image, &rssi, plan, map),
        Command::Bench { bench: b, trials } => bench(&ctx, b.as_deref(), trials),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
