use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use wetmap_core::classifiers::Algorithm;
use wetmap_core::metrics::{BhattacharyyaForm, NotAvailable};
use wetmap_core::pipeline::{self, ConfigOverrides, PipelineConfig};
use wetmap_core::preprocess::NdwiConvention;
use wetmap_core::scenegen::SceneSpec;
use wetmap_core::{Error, Result};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

/// Object-based wetland cover mapping from multi-date reflectance stacks.
#[derive(Parser, Debug)]
#[command(name = "wetmap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Date filter, clip and median composite.
    Composite(ConfigArgs),
    /// Seven-band feature image from the composite.
    Features(ConfigArgs),
    /// SNIC segments and per-segment statistics.
    Segment(ConfigArgs),
    /// Split points, train the configured classifier and map every segment.
    TrainClassify(ConfigArgs),
    /// Accuracy, class areas and separability for the configured classifier.
    Assess(ConfigArgs),
    /// Train, map and assess all four classifiers on one split.
    Compare(ConfigArgs),
    /// Color a class raster into a PNG with a legend sidecar.
    Render(RenderArgs),
    /// Generate a synthetic scene with a ready-to-run config.
    Synth(SynthArgs),
    /// Every stage from composite through compare.
    Run(ConfigArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Pipeline configuration JSON.
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// cart, rf, nb or svm.
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// nir_green or mcfeeters.
    #[arg(long)]
    ndwi: Option<String>,
    #[arg(long)]
    seed_spacing: Option<usize>,
    #[arg(long)]
    compactness: Option<f64>,
    /// standard or as_printed.
    #[arg(long)]
    bhattacharyya: Option<String>,
    /// marker or zero.
    #[arg(long)]
    not_available: Option<String>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Class raster; defaults to the configured classifier's map in the output directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// PNG path; defaults to map_<algo>.png in the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory to write the scene into.
    #[arg(short, long)]
    out: PathBuf,
    /// Scene description JSON; without it the built-in wetland demo is used.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Class mean separation in noise standard deviations (demo scene only).
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Classifier written into the generated config.
    #[arg(long, default_value = "rf")]
    classifier: String,
}

fn bad_flag<T>(flag: &str, v: &str) -> Result<T> {
    Err(Error::Config(format!("invalid value {v:?} for --{flag}")))
}

fn parse_ndwi(v: &str) -> Result<NdwiConvention> {
    match v.to_ascii_lowercase().as_str() {
        "nir_green" | "nirgreen" => Ok(NdwiConvention::NirGreen),
        "mcfeeters" => Ok(NdwiConvention::McFeeters),
        _ => bad_flag("ndwi", v),
    }
}

fn parse_form(v: &str) -> Result<BhattacharyyaForm> {
    match v.to_ascii_lowercase().as_str() {
        "standard" => Ok(BhattacharyyaForm::Standard),
        "as_printed" | "as-printed" => Ok(BhattacharyyaForm::AsPrinted),
        _ => bad_flag("bhattacharyya", v),
    }
}

fn parse_na(v: &str) -> Result<NotAvailable> {
    match v.to_ascii_lowercase().as_str() {
        "marker" | "na" => Ok(NotAvailable::Marker),
        "zero" => Ok(NotAvailable::Zero),
        _ => bad_flag("not-available", v),
    }
}

impl ConfigArgs {
    fn overrides(&self) -> Result<ConfigOverrides> {
        Ok(ConfigOverrides {
            output_dir: self.output_dir.clone(),
            classifier: self.classifier.as_deref().map(str::parse).transpose()?,
            split_seed: self.split_seed,
            train_fraction: self.train_fraction,
            ndwi_convention: self.ndwi.as_deref().map(parse_ndwi).transpose()?,
            seed_spacing: self.seed_spacing,
            compactness: self.compactness,
            bhattacharyya_form: self.bhattacharyya.as_deref().map(parse_form).transpose()?,
            not_available: self.not_available.as_deref().map(parse_na).transpose()?,
        })
    }

    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        cfg.apply(&self.overrides()?);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{:.2}", v * 100.0))
}

fn print_comparison(c: &pipeline::Comparison) {
    println!("{:<6} {:>8}", "model", "OA %");
    for r in &c.rows {
        println!("{:<6} {:>8.2}", r.algorithm.as_str(), r.overall_accuracy * 100.0);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Composite(a) => {
            let cfg = a.load()?;
            let p = pipeline::run_composite(&cfg)?;
            println!(
                "composite {}x{} from {} images ({} outside the date window)",
                p.width,
                p.height,
                p.input_count,
                p.excluded_by_date
            );
        }
        Command::Features(a) => {
            let cfg = a.load()?;
            let f = pipeline::run_features(&cfg)?;
            println!("features: {}", f.raster().band_names().join(", "));
        }
        Command::Segment(a) => {
            let cfg = a.load()?;
            let (map, _) = pipeline::run_segment(&cfg)?;
            println!("{} segments", map.segment_count());
        }
        Command::TrainClassify(a) => {
            let cfg = a.load()?;
            let (model, _) = pipeline::run_train_classify(&cfg)?;
            println!("trained {}; map in {}", model.algorithm().as_str(), cfg.output(&pipeline::classes_file(cfg.classifier)).display());
        }
        Command::Assess(a) => {
            let cfg = a.load()?;
            let r = pipeline::run_assess(&cfg)?;
            println!("{} overall accuracy {:.2}% on {} samples", r.algorithm.as_str(), r.accuracy.overall_accuracy * 100.0, r.accuracy.sample_count);
            println!("{:<20} {:>10} {:>10} {:>12}", "class", "PA %", "UA %", "area ha");
            for (c, area) in r.accuracy.classes.iter().zip(&r.class_areas) {
                println!("{:<20} {:>10} {:>10} {:>12.2}", c.class_name, pct(c.producers), pct(c.users), area.area_ha);
            }
        }
        Command::Compare(a) => {
            let cfg = a.load()?;
            print_comparison(&pipeline::run_compare(&cfg)?);
        }
        Command::Run(a) => {
            let cfg = a.load()?;
            print_comparison(&pipeline::run_all(&cfg)?);
        }
        Command::Render(r) => {
            let cfg = r.config.load()?;
            let input = r.input.unwrap_or_else(|| cfg.output(&pipeline::classes_file(cfg.classifier)));
            let output = r.output.unwrap_or_else(|| cfg.output(&pipeline::map_file(cfg.classifier)));
            if !input.exists() {
                return Err(Error::Config(format!("class raster {} does not exist", input.display())));
            }
            let legend = pipeline::run_render(&input, &cfg.classes, cfg.palette.as_deref(), &output)?;
            println!("wrote {} ({} classes)", output.display(), legend.len());
        }
        Command::Synth(s) => {
            let classifier: Algorithm = s.classifier.parse()?;
            let spec = match &s.spec {
                Some(path) => load_spec(path)?,
                None => SceneSpec::wetland_demo(s.separation, s.seed),
            };
            let out = pipeline::run_synth(&spec, &s.out, classifier)?;
            println!("wrote {} images; config {}", out.image_paths.len(), out.config_path.display());
        }
    }
    Ok(())
}

fn load_spec(path: &Path) -> Result<SceneSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    SceneSpec::from_json(&text).map_err(|e| match e {
        Error::Json(e) => Error::Config(format!("invalid scene spec: {e}")),
        other => other,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    info!("{cli:?}");
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_DATA })
        }
    }
}
