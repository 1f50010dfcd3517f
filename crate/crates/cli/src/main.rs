use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mtmc_core::eval::format_report_table;
use mtmc_core::pipeline::{
    eval_mtmc, eval_sct, run_eval, run_reid, run_track, run_train, write_eval_outputs, EvalMode, MaxDist,
    PipelineConfig,
};
use mtmc_core::simgen::{write_scenario, SimConfig, PIPELINE_FILE};
use mtmc_core::sct::TrackerKind;
use mtmc_core::Error;

#[derive(Parser)]
#[command(name = "mtmc", version, about = "Multi-camera vehicle tracking from detection files")]
struct Cli {
    /// Log verbosity (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-camera scenario.
    Simgen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cameras: Option<usize>,
        #[arg(long)]
        vehicles: Option<usize>,
        #[arg(long)]
        parked: Option<usize>,
        #[arg(long)]
        clutter: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        miss_rate: Option<f64>,
        #[arg(long)]
        spurious_rate: Option<f64>,
        #[arg(long)]
        train_vehicles: Option<usize>,
    },
    /// Region filter, per-camera tracking and variance filter.
    Track {
        #[command(flatten)]
        common: Common,
        /// max-overlap, sort or deepsort.
        #[arg(long)]
        tracker: Option<TrackerKind>,
        #[arg(long)]
        no_roi: bool,
        #[arg(long)]
        no_variance: bool,
    },
    /// Train the appearance embedding with the triplet loss.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Merge per-camera tracks into global identities.
    Reid {
        #[command(flatten)]
        common: Common,
        /// "auto" or a distance.
        #[arg(long)]
        max_dist: Option<String>,
        /// Model checkpoint (defaults to <out>/model.txt).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "sct")]
        mode: String,
        /// Ground truth file or directory (instead of the configuration's).
        #[arg(long, requires = "pred")]
        gt: Option<PathBuf>,
        /// Prediction file or directory.
        #[arg(long, requires = "gt")]
        pred: Option<PathBuf>,
    },
}

fn load_pipeline(common: &Common) -> anyhow::Result<PipelineConfig> {
    let Some(path) = &common.config else {
        return Err(Error::Config("--config is required".into()).into());
    };
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_table(title: &str, table: &str) {
    println!("{title}");
    print!("{table}");
}

/// `(name, gt, pred)` triples for single-camera evaluation of explicit paths. Directories
/// pair each prediction `<name>.txt` with `<gt>/<name>.txt` or `<gt>/<name>/gt.txt`.
fn sct_pairs(gt: &Path, pred: &Path) -> anyhow::Result<Vec<(String, PathBuf, PathBuf)>> {
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if pred.is_file() {
        return Ok(vec![(stem(pred), gt.to_path_buf(), pred.to_path_buf())]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(pred)
        .with_context(|| format!("reading {}", pred.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    let mut pairs = Vec::new();
    for p in files {
        let name = stem(&p);
        let candidates = [gt.join(format!("{name}.txt")), gt.join(&name).join("gt.txt")];
        match candidates.into_iter().find(|c| c.is_file()) {
            Some(g) => pairs.push((name, g, p)),
            None => log::warn!("no ground truth for {}", p.display()),
        }
    }
    if pairs.is_empty() {
        bail!(Error::Config(format!(
            "no prediction files in {} have matching ground truth in {}",
            pred.display(),
            gt.display()
        )));
    }
    Ok(pairs)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simgen {
            common,
            cameras,
            vehicles,
            parked,
            clutter,
            noise,
            miss_rate,
            spurious_rate,
            train_vehicles,
        } => {
            let mut cfg = match &common.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    toml::from_str::<SimConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
                }
                None => SimConfig::default(),
            };
            let set = |dst: &mut usize, v: Option<usize>| {
                if let Some(v) = v {
                    *dst = v;
                }
            };
            set(&mut cfg.cameras, cameras);
            set(&mut cfg.vehicles, vehicles);
            set(&mut cfg.parked_per_camera, parked);
            set(&mut cfg.clutter_per_camera, clutter);
            set(&mut cfg.train_vehicles, train_vehicles);
            let setf = |dst: &mut f64, v: Option<f64>| {
                if let Some(v) = v {
                    *dst = v;
                }
            };
            setf(&mut cfg.noise_std, noise);
            setf(&mut cfg.miss_rate, miss_rate);
            setf(&mut cfg.spurious_rate, spurious_rate);
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let s = write_scenario(&common.out, &cfg)
                .with_context(|| format!("writing scenario to {}", common.out.display()))?;
            println!(
                "wrote {} cameras, {} vehicles, {} ground-truth boxes to {}",
                s.cameras.len(),
                cfg.vehicles,
                s.global_gt.len(),
                common.out.display()
            );
            println!("pipeline config: {}", common.out.join(PIPELINE_FILE).display());
        }
        Command::Track {
            common,
            tracker,
            no_roi,
            no_variance,
        } => {
            let mut cfg = load_pipeline(&common)?;
            if let Some(t) = tracker {
                cfg.tracker = t;
            }
            cfg.roi.enabled &= !no_roi;
            cfg.variance.enabled &= !no_variance;
            for cam in run_track(&cfg, &common.out)? {
                println!(
                    "{}: {} tracks ({} detections outside region, {} stationary tracks removed)",
                    cam.camera,
                    cam.tracks.len(),
                    cam.roi_removed,
                    cam.variance_removed.len()
                );
            }
        }
        Command::Train {
            common,
            epochs,
            learning_rate,
            margin,
        } => {
            let mut cfg = load_pipeline(&common)?;
            if let Some(v) = epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = learning_rate {
                cfg.train.learning_rate = v;
            }
            if let Some(v) = margin {
                cfg.train.margin = v;
            }
            let outcome = run_train(&cfg, &common.out)?;
            println!(
                "final loss {:.6}, calibrated max_dist {}",
                outcome.loss_history.last().copied().unwrap_or(0.0),
                outcome
                    .checkpoint
                    .calibrated_max_dist
                    .map_or("none".to_string(), |d| format!("{d:.6}"))
            );
        }
        Command::Reid {
            common,
            max_dist,
            model,
        } => {
            let mut cfg = load_pipeline(&common)?;
            if let Some(v) = max_dist {
                cfg.reid.max_dist = v.parse::<MaxDist>()?;
            }
            if model.is_some() {
                cfg.reid.model = model;
            }
            let outcome = run_reid(&cfg, &common.out)?;
            println!(
                "{} tracks -> {} global identities (max_dist {:.6})",
                outcome.map.len(),
                outcome.map.global_count(),
                outcome.max_dist
            );
        }
        Command::Eval {
            common,
            mode,
            gt,
            pred,
        } => {
            let mode: EvalMode = mode.parse()?;
            let iou = match &common.config {
                Some(_) => load_pipeline(&common)?.eval.iou_threshold,
                None => mtmc_core::eval::IOU_THRESHOLD,
            };
            let summary = match (gt, pred) {
                (Some(gt), Some(pred)) => {
                    let summary = match mode {
                        EvalMode::Sct => eval_sct(&sct_pairs(&gt, &pred)?, iou)?,
                        EvalMode::Mtmc => eval_mtmc(&gt, &pred, iou)?,
                    };
                    write_eval_outputs(&common.out, mode, &summary)?;
                    summary
                }
                _ => run_eval(&load_pipeline(&common)?, &common.out, mode)?,
            };
            print_table(&format!("{} evaluation", mode.name()), &format_report_table(&summary));
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or(2, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
