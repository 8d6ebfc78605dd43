//! Command-line surface: dataset synthesis, augmentation, training,
//! prediction, evaluation, the loss A/B crispness experiment, and PR-curve
//! replotting. Every command is deterministic for a fixed config and seed
//! when threads = 1.

pub mod config;

pub use config::{LossMode, RunConfig};

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    augment, load_dataset, load_edge_map, load_image, load_manifest, save_annotation,
    save_edge_map, save_image, save_manifest, stream_seed, synth_generate, AugmentSpec, Image,
    Sample, SynthSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    crispness_block, crispness_report, pr_sweep, read_pr_csv, report_block, write_pr_csv,
    write_pr_svg, write_text, EvalReport,
};
use crate::loss::{EdgeMap, GroundTruth};
use crate::model::{load_checkpoint_file, save_checkpoint_file, Network};
use crate::tensor::Tensor4;

#[derive(Parser, Debug)]
#[command(
    name = "crispedge",
    version,
    about = "Crisp boundary detection: synthesis, training, and benchmarking"
)]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 (the default) is fully deterministic.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Flat key=value run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic boundary dataset (images, annotations, manifest).
    Synth {
        /// Number of samples.
        #[arg(long)]
        count: usize,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
    },
    /// Expand a dataset with scale, rotation and flip variants.
    Augment {
        /// Manifest of the dataset to expand.
        #[arg(long)]
        manifest: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Random scales drawn per sample.
        #[arg(long)]
        scales: Option<usize>,
        #[arg(long)]
        scale_min: Option<f64>,
        #[arg(long)]
        scale_max: Option<f64>,
        /// Rotation steps over the full circle.
        #[arg(long)]
        rotations: Option<usize>,
    },
    /// Train a network; writes model.ckpt, loss_log.csv and config.txt.
    Train {
        /// Overrides train_manifest from the config.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Overrides out_dir from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write 16-bit edge probability maps for a set of images.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest file or a directory of .pgm/.ppm images.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Average predictions over 0.5x/1.0x/1.5x resolutions.
        #[arg(long)]
        multiscale: bool,
    },
    /// PR sweep of stored predictions against ground truth.
    Eval {
        /// Directory holding {id}.pred.pgm files.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        thresholds: Option<usize>,
        #[arg(long)]
        max_dist_fraction: Option<f64>,
        /// Thin predictions with NMS before sweeping.
        #[arg(long)]
        nms: bool,
    },
    /// Train fusion vs weighted-ce from identical initialization and compare
    /// boundary crispness.
    Ab {
        /// Overrides out_dir from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a PR curve SVG from its CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {}", e)))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Synth {
            count,
            out,
            width,
            height,
        } => cmd_synth(cfg, *count, out, *width, *height),
        Command::Augment {
            manifest,
            out,
            scales,
            scale_min,
            scale_max,
            rotations,
        } => {
            let mut spec = AugmentSpec {
                seed: cfg.seed,
                ..AugmentSpec::default()
            };
            if let Some(s) = scales {
                spec.scales_per_sample = *s;
            }
            if let Some(s) = scale_min {
                spec.scale_min = *s;
            }
            if let Some(s) = scale_max {
                spec.scale_max = *s;
            }
            if let Some(r) = rotations {
                spec.rotations = *r;
            }
            cmd_augment(manifest, out, &spec)
        }
        Command::Train { manifest, out } => {
            let mut cfg = cfg.clone();
            if let Some(m) = manifest {
                cfg.train_manifest = m.display().to_string();
            }
            if let Some(o) = out {
                cfg.out_dir = o.display().to_string();
            }
            cmd_train(&cfg)
        }
        Command::Predict {
            checkpoint,
            images,
            out,
            multiscale,
        } => cmd_predict(checkpoint, images, out, *multiscale || cfg.multiscale),
        Command::Eval {
            pred,
            manifest,
            out,
            thresholds,
            max_dist_fraction,
            nms,
        } => {
            let mut ecfg = cfg.eval_config();
            if let Some(k) = thresholds {
                ecfg.thresholds = *k;
            }
            if let Some(f) = max_dist_fraction {
                ecfg.max_dist_fraction = *f;
            }
            ecfg.apply_nms = *nms || cfg.nms;
            ecfg.validate()?;
            cmd_eval(pred, manifest, out, &ecfg)
        }
        Command::Ab { out } => {
            let mut cfg = cfg.clone();
            if let Some(o) = out {
                cfg.out_dir = o.display().to_string();
            }
            cmd_ab(&cfg)
        }
        Command::Plot { csv, out } => cmd_plot(csv, out),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Pointing a command at a path that does not exist is a usage error, not an
/// I/O failure; I/O exit codes are reserved for files that exist but cannot
/// be read or parsed.
fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "{} not found: {}",
            what,
            path.display()
        )))
    }
}

/// Writes images/, annotations/ and manifest.tsv for a sample set.
fn write_dataset(out: &Path, samples: &[Sample]) -> Result<()> {
    let images = out.join("images");
    let annotations = out.join("annotations");
    create_dir(&images)?;
    create_dir(&annotations)?;
    let mut pairs = Vec::with_capacity(samples.len());
    for s in samples {
        let ext = if s.image.channels() == 1 { "pgm" } else { "ppm" };
        let img_rel = format!("images/{}.{}", s.id, ext);
        let ann_rel = format!("annotations/{}.pgm", s.id);
        save_image(&out.join(&img_rel), &s.image)?;
        save_annotation(&out.join(&ann_rel), &s.truth)?;
        pairs.push((img_rel, ann_rel));
    }
    save_manifest(&out.join("manifest.tsv"), &pairs)
}

pub fn cmd_synth(
    cfg: &RunConfig,
    count: usize,
    out: &Path,
    width: Option<usize>,
    height: Option<usize>,
) -> Result<()> {
    let mut spec = SynthSpec {
        seed: cfg.seed,
        ..SynthSpec::default()
    };
    if let Some(w) = width {
        spec.width = w;
    }
    if let Some(h) = height {
        spec.height = h;
    }
    let samples = synth_generate(&spec, count)?;
    write_dataset(out, &samples)?;
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

pub fn cmd_augment(manifest: &Path, out: &Path, spec: &AugmentSpec) -> Result<()> {
    require_exists(manifest, "manifest")?;
    let data = load_dataset(manifest)?;
    let mut expanded = Vec::new();
    let mut dropped = 0usize;
    for sample in &data {
        let outcome = augment(sample, spec)?;
        dropped += outcome.dropped;
        expanded.extend(outcome.samples);
    }
    write_dataset(out, &expanded)?;
    println!(
        "augmented {} samples into {} variants ({} dropped below minimum size) in {}",
        data.len(),
        expanded.len(),
        dropped,
        out.display()
    );
    Ok(())
}

/// Gray-reduces or passes the image through so its channel count matches the
/// network input.
fn adapt_channels(image: &Image, want: usize) -> Result<Image> {
    if image.channels() == want {
        Ok(image.clone())
    } else if want == 1 {
        Ok(image.to_gray())
    } else {
        Err(Error::Usage(format!(
            "image has {} channels but the network expects {}",
            image.channels(),
            want
        )))
    }
}

/// Top-left crop to multiples of `d`, keeping labels exact. Used for
/// training, where resampling the annotation would blur it.
fn crop_training_pair(sample: &Sample, want_channels: usize, d: usize) -> Result<(Tensor4, GroundTruth)> {
    let image = adapt_channels(&sample.image, want_channels)?;
    let (h, w) = (image.h(), image.w());
    let (ch, cw) = ((h / d) * d, (w / d) * d);
    if ch == 0 || cw == 0 {
        return Err(Error::Usage(format!(
            "sample {} is {}x{}, smaller than the network's {} px granularity",
            sample.id, h, w, d
        )));
    }
    let mut tensor = Tensor4::zeros(1, image.channels(), ch, cw);
    for c in 0..image.channels() {
        let src = image.plane(c);
        let dst = tensor.plane_mut(0, c);
        for r in 0..ch {
            dst[r * cw..r * cw + cw].copy_from_slice(&src[r * w..r * w + cw]);
        }
    }
    let gt_src = sample.truth.values();
    let mut gt = Vec::with_capacity(ch * cw);
    for r in 0..ch {
        gt.extend_from_slice(&gt_src[r * w..r * w + cw]);
    }
    Ok((tensor, GroundTruth::new(ch, cw, gt)?))
}

/// Replicate-pads on the right/bottom up to multiples of `d`.
fn pad_to_multiple(image: &Image, d: usize) -> Tensor4 {
    let (h, w) = (image.h(), image.w());
    let ph = h.div_ceil(d) * d;
    let pw = w.div_ceil(d) * d;
    let mut tensor = Tensor4::zeros(1, image.channels(), ph, pw);
    for c in 0..image.channels() {
        let src = image.plane(c);
        let dst = tensor.plane_mut(0, c);
        for r in 0..ph {
            let sr = r.min(h - 1);
            for col in 0..pw {
                dst[r * pw + col] = src[sr * w + col.min(w - 1)];
            }
        }
    }
    tensor
}

/// Runs the network on an image of any size: the input is replicate-padded
/// to the network's granularity and the probability map cropped back.
pub fn predict_image(net: &Network, image: &Image, multiscale: bool) -> Result<EdgeMap> {
    let image = adapt_channels(image, net.config().in_channels)?;
    let (h, w) = (image.h(), image.w());
    let tensor = pad_to_multiple(&image, net.config().downsample_factor());
    let probs = if multiscale {
        net.multiscale_predict(&tensor)?
    } else {
        net.predict(&tensor)?
    };
    if (probs.h(), probs.w()) == (h, w) {
        return Ok(probs);
    }
    let pw = probs.w();
    let mut vals = Vec::with_capacity(h * w);
    for r in 0..h {
        vals.extend_from_slice(&probs.values()[r * pw..r * pw + w]);
    }
    EdgeMap::new(h, w, vals)
}

/// Shared training loop: deterministic per-epoch shuffle, mini-batches,
/// running loss log in CSV form. Returns the trained network, the log, the
/// last batch loss and the step count.
pub fn train_network(cfg: &RunConfig, data: &[Sample]) -> Result<(Network, String, f64, usize)> {
    if data.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    let mut net = Network::new(cfg.network_config())?;
    let d = net.config().downsample_factor();
    let fusion = cfg.fusion_config();
    let mut pairs = Vec::with_capacity(data.len());
    for sample in data {
        pairs.push(crop_training_pair(sample, cfg.in_channels, d)?);
    }
    let mut log = String::from("epoch,step,loss\n");
    let mut step = 0usize;
    let mut last = f64::NAN;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, "epoch-shuffle", epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let images: Vec<Tensor4> = chunk.iter().map(|&i| pairs[i].0.clone()).collect();
            let truths: Vec<GroundTruth> = chunk.iter().map(|&i| pairs[i].1.clone()).collect();
            let loss = net.train_step(&images, &truths, &fusion, cfg.lr, cfg.weight_decay)?;
            step += 1;
            last = loss;
            log.push_str(&format!("{},{},{:.6}\n", epoch, step, loss));
        }
    }
    Ok((net, log, last, step))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    if cfg.train_manifest.is_empty() {
        return Err(Error::Usage(
            "train_manifest is not set (config key or --manifest)".into(),
        ));
    }
    require_exists(Path::new(&cfg.train_manifest), "manifest")?;
    let data = load_dataset(Path::new(&cfg.train_manifest))?;
    let (net, log, last, steps) = train_network(cfg, &data)?;
    let out = Path::new(&cfg.out_dir);
    create_dir(out)?;
    save_checkpoint_file(&net, &out.join("model.ckpt"))?;
    write_text(&out.join("loss_log.csv"), &log)?;
    write_text(&out.join("config.txt"), &cfg.dump())?;
    println!(
        "trained {} epochs ({} steps) on {} samples, final batch loss {:.6}, artifacts in {}",
        cfg.epochs,
        steps,
        data.len(),
        last,
        out.display()
    );
    Ok(())
}

/// Image list for prediction: a manifest file (image column) or a directory
/// of .pgm/.ppm files, ordered by name.
fn list_images(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        let entries = load_manifest(path)?;
        return Ok(entries
            .into_iter()
            .map(|e| (e.id, e.image_path))
            .collect());
    }
    let mut files = Vec::new();
    let dir = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    for entry in dir {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        let is_image = p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e == "pgm" || e == "ppm");
        if is_image {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            files.push((id, p));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Usage(format!(
            "no .pgm/.ppm images found in {}",
            path.display()
        )));
    }
    Ok(files)
}

pub fn cmd_predict(checkpoint: &Path, images: &Path, out: &Path, multiscale: bool) -> Result<()> {
    require_exists(checkpoint, "checkpoint")?;
    require_exists(images, "image source")?;
    let net = load_checkpoint_file(checkpoint)?;
    let list = list_images(images)?;
    create_dir(out)?;
    for (id, path) in &list {
        let image = load_image(path)?;
        let probs = predict_image(&net, &image, multiscale)?;
        save_edge_map(&out.join(format!("{}.pred.pgm", id)), &probs)?;
    }
    println!(
        "wrote {} prediction maps to {}{}",
        list.len(),
        out.display(),
        if multiscale { " (multiscale)" } else { "" }
    );
    Ok(())
}

/// The PR point at the ODS threshold, as (recall, precision) for plotting.
fn ods_point(report: &EvalReport) -> Option<(f64, f64)> {
    report
        .points
        .iter()
        .find(|p| p.threshold == report.ods_threshold)
        .map(|p| (p.recall, p.precision))
}

fn load_eval_inputs(pred_dir: &Path, manifest: &Path) -> Result<(Vec<EdgeMap>, Vec<GroundTruth>)> {
    require_exists(manifest, "manifest")?;
    require_exists(pred_dir, "prediction directory")?;
    let data = load_dataset(manifest)?;
    let mut preds = Vec::with_capacity(data.len());
    let mut gts = Vec::with_capacity(data.len());
    for sample in data {
        let pred_path = pred_dir.join(format!("{}.pred.pgm", sample.id));
        let pred = load_edge_map(&pred_path)?;
        if (pred.h(), pred.w()) != (sample.truth.h(), sample.truth.w()) {
            return Err(Error::shape(
                format!("prediction for {}", sample.id),
                format!("{}x{}", sample.truth.h(), sample.truth.w()),
                format!("{}x{}", pred.h(), pred.w()),
            ));
        }
        preds.push(pred);
        gts.push(sample.truth);
    }
    Ok((preds, gts))
}

pub fn cmd_eval(
    pred_dir: &Path,
    manifest: &Path,
    out: &Path,
    ecfg: &crate::eval::EvalConfig,
) -> Result<()> {
    let (preds, gts) = load_eval_inputs(pred_dir, manifest)?;
    let report = pr_sweep(&preds, &gts, ecfg)?;
    create_dir(out)?;
    let mut text = report_block(&report, "");
    text.push_str(&format!("thresholds={}\n", ecfg.thresholds));
    text.push_str(&format!("max_dist_fraction={}\n", ecfg.max_dist_fraction));
    text.push_str(&format!("nms={}\n", ecfg.apply_nms));
    write_text(&out.join("report.txt"), &text)?;
    write_pr_csv(&report.points, &out.join("pr.csv"))?;
    write_pr_svg(&report.points, ods_point(&report), &out.join("pr.svg"))?;
    println!(
        "ODS {:.4} at t={:.2}, OIS {:.4} over {} images, report in {}",
        report.ods_f,
        report.ods_threshold,
        report.ois_f,
        gts.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_ab(cfg: &RunConfig) -> Result<()> {
    if cfg.train_manifest.is_empty() || cfg.test_manifest.is_empty() {
        return Err(Error::Usage(
            "ab needs both train_manifest and test_manifest".into(),
        ));
    }
    require_exists(Path::new(&cfg.train_manifest), "train manifest")?;
    require_exists(Path::new(&cfg.test_manifest), "test manifest")?;
    let train_data = load_dataset(Path::new(&cfg.train_manifest))?;
    let test_data = load_dataset(Path::new(&cfg.test_manifest))?;
    let out = Path::new(&cfg.out_dir);
    create_dir(out)?;

    let mut rows = Vec::new();
    let mut report_text = String::new();
    for loss in [LossMode::WeightedCe, LossMode::Fusion] {
        let mut arm_cfg = cfg.clone();
        arm_cfg.loss = loss;
        let (net, log, _, _) = train_network(&arm_cfg, &train_data)?;
        let tag = loss.name().replace('-', "_");
        write_text(&out.join(format!("{}_loss_log.csv", tag)), &log)?;
        save_checkpoint_file(&net, &out.join(format!("{}.ckpt", tag)))?;
        let mut preds = Vec::with_capacity(test_data.len());
        let mut gts = Vec::with_capacity(test_data.len());
        for sample in &test_data {
            preds.push(predict_image(&net, &sample.image, cfg.multiscale)?);
            gts.push(sample.truth.clone());
        }
        let crisp = crispness_report(&preds, &gts, &cfg.eval_config())?;
        report_text.push_str(&crispness_block(&crisp, &format!("{}_", tag)));
        rows.push((loss.name().to_string(), crisp));
    }
    write_text(&out.join("ab_report.txt"), &report_text)?;

    println!(
        "{:<13} {:>12} {:>13} {:>16}",
        "loss", "pre_nms_ods", "post_nms_ods", "thickness_ratio"
    );
    for (name, crisp) in &rows {
        println!(
            "{:<13} {:>12.4} {:>13.4} {:>16.2}",
            name, crisp.pre_nms.ods_f, crisp.post_nms.ods_f, crisp.thickness_ratio
        );
    }
    println!("details in {}", out.join("ab_report.txt").display());
    Ok(())
}

pub fn cmd_plot(csv: &Path, out: &Path) -> Result<()> {
    require_exists(csv, "csv")?;
    let points = read_pr_csv(csv)?;
    let best = points
        .iter()
        .max_by(|a, b| a.f.partial_cmp(&b.f).expect("finite f"))
        .map(|p| (p.recall, p.precision));
    write_pr_svg(&points, best, out)?;
    println!("plotted {} points to {}", points.len(), out.display());
    Ok(())
}
