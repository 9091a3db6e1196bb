use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plate_intake::autoencoder::{build_training_corpus, train_autoencoder, Autoencoder, TrainingImage};
use plate_intake::classifier::{train_meal_head, HeadRegistry};
use plate_intake::config::PipelineConfig;
use plate_intake::dataset::{generate_plate_series, load_manifest, read_plan_file, write_manifest, MealPlan, PlateSeries};
use plate_intake::pipeline::{evaluate_manifest, reference_plates, time_stages, EvalSettings, Models};
use plate_intake::report::{self, ReportMeta, TIMING_CSV};

mod error;

use error::{Failure, Kind};

/// RGB-D plate images to per-food intake and nutrient agreement reports.
#[derive(Debug, Parser)]
#[command(name = "plate-intake", version)]
struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted; relative paths
    /// then resolve against the working directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for series-level work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic plate series for every meal of the plan.
    GenData {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the feature autoencoder on plates of a manifest.
    TrainAe {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train per-meal classification heads on reference plates.
    TrainMeal {
        /// Meal id; every meal of the plan when omitted.
        #[arg(long)]
        meal: Option<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        ae: Option<PathBuf>,
        /// Head registry directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline over a manifest and write CSV reports.
    Evaluate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate evaluation CSVs into summary tables and agreement plots.
    Report {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Per-stage wall-clock time per plate.
    Timing {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => {
            let cwd = std::env::current_dir().map_err(|e| Failure::new(Kind::Usage, e.to_string()))?;
            PipelineConfig::default().with_base_dir(cwd)
        }
    };
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn meta(cfg: &PipelineConfig) -> ReportMeta {
    ReportMeta { config_hash: cfg.hash(), seed: cfg.seed }
}

fn plans(cfg: &PipelineConfig) -> Result<Vec<(MealPlan, plate_intake::dataset::MealDesign, Vec<plate_intake::dataset::ClassGeometry>)>, Failure> {
    let path = cfg.plan_path();
    let file = read_plan_file(&path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(file.resolve(base)?.into_iter().map(|(p, g, d)| (p, d.clone(), g)).collect())
}

fn meal_plans(cfg: &PipelineConfig) -> Result<Vec<MealPlan>, Failure> {
    Ok(plans(cfg)?.into_iter().map(|(p, _, _)| p).collect())
}

fn or_cwd(cfg: &PipelineConfig, arg: &Option<PathBuf>, default: PathBuf) -> PathBuf {
    arg.as_deref().map_or(default, |p| if p.is_absolute() { p.to_path_buf() } else { cfg.base_dir().join(p) })
}

/// Seed of series `j` of meal `i`.
fn series_seed(seed: u64, i: usize, j: usize) -> u64 {
    seed.wrapping_mul(1_000_000).wrapping_add((i * 1000 + j) as u64)
}

fn gen_data(cfg: &PipelineConfig, out: &Option<PathBuf>) -> Result<(), Failure> {
    let dir = or_cwd(cfg, out, cfg.data_dir());
    let opts = cfg.generate_options();
    let mut all: Vec<PlateSeries> = Vec::new();
    for (i, (plan, design, geometry)) in plans(cfg)?.iter().enumerate() {
        for j in 0..design.series {
            all.push(generate_plate_series(plan, geometry, &design.levels, series_seed(cfg.seed, i, j), &opts)?);
        }
    }
    let manifest = write_manifest(&dir, &all)?;
    println!("{} series, {} plates -> {}", all.len(), all.iter().map(|s| s.plates.len()).sum::<usize>(), manifest.display());
    Ok(())
}

fn train_ae(cfg: &PipelineConfig, manifest: &Option<PathBuf>, out: &Option<PathBuf>) -> Result<(), Failure> {
    let series = load_manifest(&or_cwd(cfg, manifest, cfg.manifest_path()))?;
    let base: Vec<TrainingImage> = series
        .iter()
        .flat_map(|s| &s.plates)
        .filter(|p| p.food_mask().count() > 0)
        .map(TrainingImage::from_plate)
        .collect();
    let corpus = build_training_corpus(&base, &cfg.autoencoder_augment, cfg.seed);
    let ae = train_autoencoder(&corpus, &cfg.autoencoder_config())?;
    let path = or_cwd(cfg, out, cfg.autoencoder_path());
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Failure::new(Kind::Data, e.to_string()).at(Some(parent)))?;
    }
    ae.save(&path)?;
    println!(
        "{} images, {} epochs, best validation loss {:.6} -> {}",
        corpus.len(),
        ae.history.len(),
        ae.best_validation_loss,
        path.display()
    );
    Ok(())
}

fn load_models(cfg: &PipelineConfig, ae: &Option<PathBuf>, heads: Option<&Path>) -> Result<Models, Failure> {
    let ae_path = or_cwd(cfg, ae, cfg.autoencoder_path());
    let extractor = Autoencoder::load(&ae_path).map_err(|e| Failure::from(e).at(Some(&ae_path)))?.extractor();
    let heads = match heads {
        Some(dir) => HeadRegistry::load(&dir.join("heads.json"))?,
        None => HeadRegistry::default(),
    };
    Ok(Models { extractor, heads })
}

fn train_meal(
    cfg: &PipelineConfig,
    meal: &Option<String>,
    manifest: &Option<PathBuf>,
    ae: &Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<(), Failure> {
    let dir = or_cwd(cfg, out, cfg.heads_dir());
    let index = dir.join("heads.json");
    let models = load_models(cfg, ae, index.exists().then_some(dir.as_path()))?;
    let mut registry = models.heads;
    let series = load_manifest(&or_cwd(cfg, manifest, cfg.manifest_path()))?;
    let plans = meal_plans(cfg)?;
    let selected: Vec<&MealPlan> = match meal {
        Some(id) => vec![plans
            .iter()
            .find(|p| &p.meal_id == id)
            .ok_or_else(|| Failure::new(Kind::Usage, format!("meal `{id}` is not in the plan")))?],
        None => plans.iter().collect(),
    };
    for plan in selected {
        let refs = reference_plates(&series, &plan.meal_id);
        let plates: Vec<_> = refs.iter().collect();
        let head = train_meal_head(&models.extractor, &plates, plan, &cfg.head_config())?;
        let t = head.training.as_ref().expect("freshly trained head");
        println!(
            "{}: {} classes, {} parameters, {} epochs, validation top-1 {:.4}",
            plan.meal_id,
            head.n_classes(),
            head.parameter_count(),
            t.epochs_run,
            t.validation_accuracy
        );
        registry.insert(head);
    }
    registry.save(&dir)?;
    Ok(())
}

fn settings(cfg: &PipelineConfig) -> EvalSettings {
    EvalSettings {
        calibration: cfg.calibration,
        mask_source: cfg.segmentation.source,
        baseline: cfg.segmentation.baseline,
        plate_radius_cm: cfg.generate.plate_radius_cm,
        texture: cfg.texture,
    }
}

fn evaluate(cfg: &PipelineConfig, manifest: &Option<PathBuf>, out: &Option<PathBuf>) -> Result<(), Failure> {
    let models = load_models(cfg, &None, Some(&cfg.heads_dir()))?;
    let plans = meal_plans(cfg)?;
    let manifest = or_cwd(cfg, manifest, cfg.manifest_path());
    let eval = evaluate_manifest(&manifest, &plans, &models, &settings(cfg))?;
    let dir = or_cwd(cfg, out, cfg.report_dir());
    let files = report::write_evaluation(&eval, &dir, &meta(cfg))?;
    for f in &files {
        println!("{}", f.display());
    }
    let failures: Vec<_> = eval.failures().collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::partial(&failures))
    }
}

fn report_cmd(cfg: &PipelineConfig, dir: &Option<PathBuf>) -> Result<(), Failure> {
    for f in report::write_summary(&or_cwd(cfg, dir, cfg.report_dir()))? {
        println!("{}", f.display());
    }
    Ok(())
}

fn timing(cfg: &PipelineConfig, manifest: &Option<PathBuf>) -> Result<(), Failure> {
    let models = load_models(cfg, &None, Some(&cfg.heads_dir()))?;
    let series = load_manifest(&or_cwd(cfg, manifest, cfg.manifest_path()))?;
    let rows = time_stages(&series, &meal_plans(cfg)?, &models, &settings(cfg))?;
    let dir = cfg.report_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Failure::new(Kind::Data, e.to_string()).at(Some(&dir)))?;
    report::write_timing(&rows, &dir.join(TIMING_CSV), &meta(cfg))?;
    for r in &rows {
        println!("{:<18} {:>6} plates {:>10.4} s/plate", r.stage.to_string(), r.plates, r.mean_seconds());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(Kind::Usage, e.to_string()))?;
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::GenData { out } => gen_data(&cfg, out),
        Command::TrainAe { manifest, out } => train_ae(&cfg, manifest, out),
        Command::TrainMeal { meal, manifest, ae, out } => train_meal(&cfg, meal, manifest, ae, out),
        Command::Evaluate { manifest, out } => evaluate(&cfg, manifest, out),
        Command::Report { dir } => report_cmd(&cfg, dir),
        Command::Timing { manifest } => timing(&cfg, manifest),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(Kind::Usage.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.kind.exit_code() as u8)
        }
    }
}
