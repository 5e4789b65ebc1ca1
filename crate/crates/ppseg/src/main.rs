use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use ppseg::bench::{grouping_bench, throughput, write_bench_csv, GroupingBench};
use ppseg::config::RunConfig;
use ppseg::{checkpoint, dataset, eval, io, plotdata, train, Error, Result};
use ppseg_core::projection::project;
use ppseg_core::synth::SceneConfig;
use ppseg_core::{KnnConfig, Model, Variant};

#[derive(Parser)]
#[command(name = "ppseg", version, about = "Projected-point LiDAR semantic segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project a scan to a range image and dump its valid pixels as CSV.
    Project {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sequence directory with velodyne/ and labels/.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        /// Overrides train.epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Label scans with a trained model.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// A .bin file or a sequence directory.
        #[arg(long)]
        input: PathBuf,
        /// A .label file for one scan, a directory otherwise.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        knn: KnnArgs,
    },
    /// Score a trained model on a labeled sequence.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        knn: KnnArgs,
        /// Per-class IoU table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time FPS + ball query against projected sampling and grouping.
    Bench {
        #[arg(long, default_value_t = 120_000)]
        n: usize,
        #[arg(long, default_value_t = 2048)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also sweep model throughput over k and image width.
        #[arg(long)]
        throughput: bool,
    },
    /// Train and score one model per window size.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Held-out sequence; the training data is scored when absent.
        #[arg(long)]
        eval_data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a labeled synthetic sequence (use `data.labels = synthetic`).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = 100)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        beams: usize,
        #[arg(long, default_value_t = 512)]
        azimuth: usize,
    },
}

#[derive(Args)]
struct KnnArgs {
    /// Refine per-point labels with range-image k-NN voting.
    #[arg(long)]
    knn: bool,
    #[arg(long)]
    knn_window: Option<usize>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    knn_sigma: Option<f64>,
}

impl KnnArgs {
    fn resolve(&self, from_config: Option<KnnConfig>) -> Result<Option<KnnConfig>> {
        let explicit = self.knn || self.knn_window.is_some() || self.knn_k.is_some() || self.knn_sigma.is_some();
        if !explicit {
            return Ok(from_config);
        }
        let base = from_config.unwrap_or_default();
        let cfg = KnnConfig {
            window: self.knn_window.unwrap_or(base.window),
            k: self.knn_k.unwrap_or(base.k),
            sigma: self.knn_sigma.unwrap_or(base.sigma),
        };
        cfg.validate()?;
        Ok(Some(cfg))
    }
}

fn read_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::parse(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => Ok(RunConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Model and config rebuilt from a checkpoint.
fn load_model(path: &Path) -> Result<(Model, RunConfig)> {
    let ckpt = checkpoint::load(path)?;
    let cfg = RunConfig::parse(&ckpt.config)?;
    let map = dataset::label_map(&cfg.labels)?;
    let mut model = Model::new(cfg.arch(map.num_classes())?.build()?)?;
    checkpoint::restore(&mut model, &ckpt, &path.display().to_string())?;
    Ok((model, cfg))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Project { scan, config, out } => {
            let cfg = read_config(config.as_deref())?;
            let cloud = io::read_scan(&scan)?;
            let image = project(&cloud, &cfg.projection)?;
            info!(
                "{} points -> {} of {} pixels valid",
                cloud.len(),
                image.valid_count(),
                image.pixels()
            );
            let mut w = csv::Writer::from_writer(output(out.as_deref())?);
            w.write_record(["row", "col", "x", "y", "z", "range", "remission", "point"])?;
            for pix in 0..image.pixels() {
                let Some(pt) = image.pix2pt[pix] else { continue };
                let p = image.xyz(pix);
                w.write_record([
                    (pix / image.width).to_string(),
                    (pix % image.width).to_string(),
                    p[0].to_string(),
                    p[1].to_string(),
                    p[2].to_string(),
                    image.range(pix).to_string(),
                    image.remission(pix).to_string(),
                    pt.to_string(),
                ])?;
            }
            w.flush().map_err(csv::Error::from)?;
        }
        Command::Train {
            config,
            data,
            out,
            loss_csv,
            epochs,
        } => {
            let mut cfg = read_config(config.as_deref())?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let map = dataset::label_map(&cfg.labels)?;
            let classes = cfg.classes.unwrap_or(map.num_classes());
            cfg.classes = Some(classes);
            let ds = dataset::load(&data, &map)?;
            if ds.clouds.iter().all(|c| c.label.is_none()) {
                return Err(Error::format(data.display().to_string(), "no label files found"));
            }
            let mut model = Model::new(cfg.arch(classes)?.build()?)?;
            info!(
                "training {} parameters on {} scans for {} epochs",
                model.params.total_len(),
                ds.clouds.len(),
                cfg.train.epochs
            );
            let outcome = train::train(&mut model, &ds.clouds, &cfg.train, |r, _| {
                if r.step % 10 == 0 {
                    info!("step {} epoch {} loss {:.5}", r.step, r.epoch, r.loss);
                }
            })?;
            checkpoint::save(&out, &cfg.to_text(), &model.params)?;
            if let Some(p) = loss_csv {
                train::write_loss_csv(create(&p)?, &outcome.records)?;
            }
            if let Some(e) = outcome.aborted {
                warn!("training aborted; {} holds the last good parameters", out.display());
                return Err(e.into());
            }
            info!("wrote {}", out.display());
        }
        Command::Infer {
            checkpoint,
            input,
            out,
            knn,
        } => {
            let (model, cfg) = load_model(&checkpoint)?;
            let knn = knn.resolve(cfg.knn)?;
            let map = dataset::label_map(&cfg.labels)?;
            if input.is_file() {
                let cloud = io::read_scan(&input)?;
                let pred = model.predict(&cloud, knn.as_ref())?;
                io::write_predictions(&out, &pred.points, &map)?;
            } else {
                let files = io::list_scans(&input)?;
                let clouds = files.iter().map(|f| io::read_scan(&f.scan)).collect::<Result<Vec<_>>>()?;
                let preds = eval::predict_all(&model, &clouds, knn.as_ref())?;
                std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                for (f, p) in files.iter().zip(&preds) {
                    let stem = f.scan.file_stem().expect("scan file name");
                    io::write_predictions(&out.join(stem).with_extension("label"), p, &map)?;
                }
            }
            info!("wrote {}", out.display());
        }
        Command::Eval {
            checkpoint,
            data,
            knn,
            csv,
        } => {
            let (model, cfg) = load_model(&checkpoint)?;
            let knn = knn.resolve(cfg.knn)?;
            let map = dataset::label_map(&cfg.labels)?;
            let ds = dataset::load(&data, &map)?;
            let preds = eval::predict_all(&model, &ds.clouds, knn.as_ref())?;
            let e = eval::score(&ds.clouds, &preds, model.spec.num_classes)?;
            let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{:.4}", x));
            let names = map.names();
            for (c, iou) in e.iou.iter().enumerate() {
                println!("{:<16} {}", names.get(c).map_or("?", String::as_str), fmt(*iou));
            }
            println!("mIoU     {}", fmt(e.miou));
            println!("accuracy {}", fmt(e.accuracy));
            println!("points   {}", e.confusion.total());
            if let Some(p) = csv {
                let mut w = csv::Writer::from_writer(create(&p)?);
                w.write_record(["class", "name", "iou"])?;
                for (c, iou) in e.iou.iter().enumerate() {
                    let name = names.get(c).cloned().unwrap_or_default();
                    w.write_record([c.to_string(), name, iou.map(|v| v.to_string()).unwrap_or_default()])?;
                }
                w.flush().map_err(csv::Error::from)?;
            }
        }
        Command::Bench {
            n,
            m,
            k,
            radius,
            reps,
            csv,
            throughput: sweep,
        } => {
            let rows = grouping_bench(&GroupingBench {
                n,
                m,
                k,
                radius,
                reps,
                seed: 0,
            })?;
            for r in &rows {
                println!("{:<10} n={} M={} k={} median {:.3} ms", r.method, r.n, r.m, r.k, r.median_ms);
            }
            if let [a, b] = &rows[..] {
                println!("speedup {:.1}x", a.median_ms / b.median_ms);
            }
            write_bench_csv(output(csv.as_deref())?, &rows)?;
            if sweep {
                for (kk, w) in [(3, 512), (5, 512), (7, 512), (5, 1024), (5, 2048)] {
                    let t = throughput(Variant::PointNet, kk, w, reps)?;
                    println!("k={} 64x{} {:.2} scans/s", t.k, t.width, t.scans_per_sec);
                }
            }
        }
        Command::Ablate {
            config,
            data,
            eval_data,
            ks,
            reps,
            csv,
        } => {
            let cfg = read_config(config.as_deref())?;
            let map = dataset::label_map(&cfg.labels)?;
            let classes = cfg.classes.unwrap_or(map.num_classes());
            let train_set = dataset::load(&data, &map)?;
            let eval_set = match eval_data {
                Some(d) => dataset::load(&d, &map)?.clouds,
                None => train_set.clouds.clone(),
            };
            let rows = ppseg::ablate::ablate(&cfg, classes, &train_set.clouds, &eval_set, &ks, reps)?;
            plotdata::emit_plotdata(output(csv.as_deref())?, &rows)?;
        }
        Command::Synth {
            out,
            count,
            seed,
            beams,
            azimuth,
        } => {
            let cfg = SceneConfig {
                beams,
                ..SceneConfig::default()
            }
            .with_azimuth_steps(azimuth);
            dataset::write_synthetic(&out, count, seed, &cfg)?;
            info!("wrote {count} scans to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(v) = std::env::var("PPSEG_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    warn!("PPSEG_THREADS ignored: {e}");
                }
            }
            _ => {
                eprintln!("error: PPSEG_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
