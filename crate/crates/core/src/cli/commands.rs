use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use crate::autodiff::{OptimizerState, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::eval::{binarize, detect, EvalReport, ProbMap};
use crate::gradsuite;
use crate::kv;
use crate::model::checkpoint::{decode_checkpoint, decode_container, encode_checkpoint, encode_container, peek_config};
use crate::model::{LogoNet, Precision};
use crate::pipeline::{self, check_layout, evaluate_dataset, image_tensor, RunConfig, Regime};
use crate::synth::{
    for_each_triplet, make_classes, pnm, read_dataset, split_one_shot, split_train_val, triplet_count,
    DatasetWriter, Layout, LogoClass,
};

/// Record counts of a (possibly dry) `gen-data` run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenDataSummary {
    pub regime: Regime,
    pub classes: usize,
    pub per_class: usize,
    pub triplets: u64,
    pub train: u64,
    pub val: u64,
    pub test: u64,
    pub test_classes: usize,
}

impl GenDataSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "regime        {}", self.regime);
        let _ = writeln!(s, "classes       {}", self.classes);
        let _ = writeln!(s, "per_class     {}", self.per_class);
        let _ = writeln!(s, "triplets      {}", self.triplets);
        let _ = writeln!(s, "train         {}", self.train);
        let _ = writeln!(s, "val           {}", self.val);
        if self.regime == Regime::OneShot {
            let _ = writeln!(s, "test_classes  {}", self.test_classes);
            let _ = writeln!(s, "test          {}", self.test);
        }
        s
    }
}

/// Streams `classes` into a 90/10 train/val pair of files.
fn write_split(
    cfg: &RunConfig,
    classes: &[LogoClass],
    seed: u64,
    train_path: &Path,
    val_path: &Path,
) -> Result<()> {
    let layout = Layout {
        query_size: cfg.model.query_size,
        target_size: cfg.model.target_size,
    };
    let n = triplet_count(classes.len(), cfg.per_class)? as usize;
    let (train_idx, val_idx) = split_train_val(n, seed);
    let mut is_val = vec![false; n];
    for i in val_idx {
        is_val[i] = true;
    }
    let mut train = DatasetWriter::create(train_path, layout, classes, train_idx.len() as u64)?;
    let mut val = DatasetWriter::create(val_path, layout, classes, (n - train_idx.len()) as u64)?;
    let mut i = 0;
    for_each_triplet(classes, cfg.per_class, seed, &cfg.gen_params(), |t| {
        if is_val[i] {
            val.push(&t)?;
        } else {
            train.push(&t)?;
        }
        i += 1;
        Ok(())
    })?;
    train.finish()?;
    val.finish()
}

pub fn cmd_gen_data(cfg: &RunConfig, out: Option<&Path>, dry_run: bool) -> Result<GenDataSummary> {
    let total = triplet_count(cfg.classes, cfg.per_class)?;
    let (train_classes, test_classes) = match cfg.regime {
        Regime::Traditional => (cfg.classes, 0),
        Regime::OneShot => {
            if cfg.train_classes == 0 || cfg.train_classes >= cfg.classes {
                return Err(Error::Config(format!(
                    "one_shot needs 0 < train_classes < classes, got {} of {}",
                    cfg.train_classes, cfg.classes
                )));
            }
            (cfg.train_classes, cfg.classes - cfg.train_classes)
        }
    };
    let pool = triplet_count(train_classes, cfg.per_class)?;
    let summary = GenDataSummary {
        regime: cfg.regime,
        classes: cfg.classes,
        per_class: cfg.per_class,
        triplets: total,
        val: pool / 10,
        train: pool - pool / 10,
        test: total - pool,
        test_classes,
    };
    if dry_run {
        return Ok(summary);
    }
    let dir = out.ok_or_else(|| Error::Config("gen-data needs an output directory".into()))?;
    cfg.gen_params().scene.validate()?;
    fs::create_dir_all(dir)?;
    let classes = make_classes(cfg.seed, cfg.classes)?;
    match cfg.regime {
        Regime::Traditional => {
            write_split(cfg, &classes, cfg.seed, &dir.join("train.osds"), &dir.join("val.osds"))?;
        }
        Regime::OneShot => {
            let (train, test) = split_one_shot(&classes, cfg.seed, cfg.train_classes)?;
            write_split(cfg, &train, cfg.seed, &dir.join("train.osds"), &dir.join("val.osds"))?;
            let layout = Layout {
                query_size: cfg.model.query_size,
                target_size: cfg.model.target_size,
            };
            let mut w = DatasetWriter::create(dir.join("test.osds"), layout, &test, summary.test)?;
            for_each_triplet(&test, cfg.per_class, cfg.seed, &cfg.gen_params(), |t| w.push(&t))?;
            w.finish()?;
        }
    }
    fs::write(dir.join("config.txt"), kv::render(&cfg.to_pairs()))?;
    Ok(summary)
}

fn encode_optimizer<T: Scalar>(opt: &OptimizerState<T>, iteration: u64) -> Result<Vec<u8>> {
    let tensors: Vec<Tensor<T>> = opt
        .velocity()
        .iter()
        .map(|v| Tensor::new(vec![v.len()], v.clone()))
        .collect::<Result<_>>()?;
    let named: Vec<(String, &Tensor<T>)> = tensors
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("velocity.{i}"), t))
        .collect();
    encode_container(&[("iteration".to_string(), iteration.to_string())], &named)
}

fn decode_optimizer<T: Scalar>(bytes: &[u8], opt: &mut OptimizerState<T>) -> Result<u64> {
    let (meta, tensors) = decode_container::<T>(bytes)?;
    let iteration = meta
        .iter()
        .find(|(k, _)| k == "iteration")
        .ok_or_else(|| Error::format("optimizer state has no iteration"))
        .and_then(|(k, v)| kv::parse_value(k, v))?;
    opt.set_velocity(tensors.into_iter().map(|(_, t)| t.into_data()).collect())?;
    Ok(iteration)
}

/// Writes checkpoint and optimizer state for `done` completed iterations.
fn save_state<T: Scalar>(dir: &Path, net: &LogoNet<T>, opt: &OptimizerState<T>, done: u64) -> Result<()> {
    let ckpt = encode_checkpoint(net, Some(done))?;
    fs::write(dir.join(format!("checkpoint-{done:07}.oslr")), &ckpt)?;
    // Write-then-rename keeps `latest` consistent if the run is interrupted.
    let tmp = dir.join("latest.oslr.tmp");
    fs::write(&tmp, &ckpt)?;
    fs::rename(&tmp, dir.join("latest.oslr"))?;
    let tmp = dir.join("latest.opt.tmp");
    fs::write(&tmp, encode_optimizer(opt, done)?)?;
    fs::rename(&tmp, dir.join("latest.opt"))?;
    Ok(())
}

fn train_typed<T: Scalar>(cfg: &RunConfig, data: &Path, dir: &Path, resume: bool, log: &mut dyn Write) -> Result<()> {
    let dataset = read_dataset(data)?;
    fs::create_dir_all(dir)?;
    let (mut net, start) = if resume {
        let (net, it) = decode_checkpoint::<T>(&fs::read(dir.join("latest.oslr"))?)?;
        (net, it.unwrap_or(0))
    } else {
        (LogoNet::<T>::new(cfg.model.clone(), cfg.seed)?, 0)
    };
    check_layout(&net.config, dataset.layout())?;
    let mut opt = cfg.optimizer(&net)?;
    if resume {
        let it = decode_optimizer(&fs::read(dir.join("latest.opt"))?, &mut opt)?;
        if it != start {
            return Err(Error::format(format!(
                "optimizer state is at iteration {it}, checkpoint at {start}"
            )));
        }
    }
    let samples = pipeline::to_samples::<T>(&dataset)?;
    let log_path = dir.join("loss.csv");
    if !resume || !log_path.exists() {
        fs::write(&log_path, "iteration,loss\n")?;
    }
    let mut csv = OpenOptions::new().append(true).open(&log_path)?;
    fs::write(dir.join("config.txt"), kv::render(&cfg.to_pairs()))?;
    let every = cfg.checkpoint_every.max(1);
    let result = pipeline::train_range(&mut net, &mut opt, &samples, cfg, start, cfg.iterations, |it, loss, net, opt| {
        writeln!(csv, "{it},{loss}")?;
        let done = it + 1;
        if done % every == 0 || done == cfg.iterations {
            save_state(dir, net, opt, done)?;
            writeln!(log, "iteration {done:>7}  loss {loss:.6}")?;
        }
        Ok(())
    });
    if let Err(e @ Error::NonFinite { .. }) = result {
        let _ = writeln!(log, "non-finite loss; last good checkpoint is {}", dir.join("latest.oslr").display());
        return Err(e);
    }
    result?;
    if start >= cfg.iterations {
        save_state(dir, &net, &opt, start)?;
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, dir: &Path, resume: bool, log: &mut dyn Write) -> Result<()> {
    match cfg.model.precision {
        Precision::Single => train_typed::<f32>(cfg, data, dir, resume, log),
        Precision::Double => train_typed::<f64>(cfg, data, dir, resume, log),
    }
}

fn eval_typed<T: Scalar>(cfg: &RunConfig, bytes: &[u8], data: &Path) -> Result<EvalReport> {
    let (net, _) = decode_checkpoint::<T>(bytes)?;
    let dataset = read_dataset(data)?;
    evaluate_dataset(&net, &dataset, cfg.k, &cfg.eval_options())
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, data: &Path, dir: &Path) -> Result<EvalReport> {
    let bytes = fs::read(checkpoint)?;
    let report = match peek_config(&bytes)?.precision {
        Precision::Single => eval_typed::<f32>(cfg, &bytes, data)?,
        Precision::Double => eval_typed::<f64>(cfg, &bytes, data)?,
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.txt"), report.to_text())?;
    fs::write(dir.join("report.csv"), report.to_csv())?;
    Ok(report)
}

fn load_rgb(path: &Path, side: usize, what: &str) -> Result<Vec<u8>> {
    let img = pnm::read(path)?;
    if img.channels != 3 || img.width != side || img.height != side {
        return Err(Error::format(format!(
            "{what} image must be a {side}x{side} PPM, got {}x{} with {} channel(s)",
            img.width, img.height, img.channels
        )));
    }
    Ok(img.data)
}

fn predict_typed<T: Scalar>(bytes: &[u8], query: &Path, target: &Path) -> Result<(ProbMap, Vec<u8>)> {
    let (net, _) = decode_checkpoint::<T>(bytes)?;
    let (q, t) = (net.config.query_size, net.config.target_size);
    let qb = load_rgb(query, q, "query")?;
    let tb = load_rgb(target, t, "target")?;
    let prob = net.predict_mask(&image_tensor::<T>(&qb, q, 3)?, &image_tensor::<T>(&tb, t, 3)?)?;
    Ok((ProbMap::from_tensor(&prob)?, tb))
}

/// Box outline colour in overlays.
pub const OVERLAY_COLOR: [u8; 3] = [255, 0, 0];

pub fn cmd_infer(cfg: &RunConfig, checkpoint: &Path, query: &Path, target: &Path, dir: &Path) -> Result<String> {
    let bytes = fs::read(checkpoint)?;
    let (prob, mut overlay) = match peek_config(&bytes)?.precision {
        Precision::Single => predict_typed::<f32>(&bytes, query, target)?,
        Precision::Double => predict_typed::<f64>(&bytes, query, target)?,
    };
    let (h, w) = (prob.height, prob.width);
    let mask = binarize(&prob, cfg.threshold);
    let boxes = detect(&prob, &mask, cfg.global_box, 0)?;
    for b in &boxes {
        for y in b.y_min..=b.y_max {
            for x in b.x_min..=b.x_max {
                if y == b.y_min || y == b.y_max || x == b.x_min || x == b.x_max {
                    let o = (y * w + x) * 3;
                    overlay[o..o + 3].copy_from_slice(&OVERLAY_COLOR);
                }
            }
        }
    }
    fs::create_dir_all(dir)?;
    let gray = |data: Vec<u8>| pnm::Image {
        width: w,
        height: h,
        channels: 1,
        data,
    };
    pnm::write(
        dir.join("mask.pgm"),
        &gray(prob.data.iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect()),
    )?;
    pnm::write(dir.join("binary.pgm"), &gray(mask.to_bytes()))?;
    pnm::write(
        dir.join("overlay.ppm"),
        &pnm::Image {
            width: w,
            height: h,
            channels: 3,
            data: overlay,
        },
    )?;
    let mut text = String::from("# x_min y_min x_max y_max score\n");
    for b in &boxes {
        let _ = writeln!(
            text,
            "{} {} {} {} {:.6}",
            b.x_min,
            b.y_min,
            b.x_max,
            b.y_max,
            b.score.unwrap_or(0.0)
        );
    }
    fs::write(dir.join("boxes.txt"), &text)?;
    Ok(text)
}

/// Prints one line per check; returns whether all passed.
pub fn cmd_gradcheck(seeds: u64, out: &mut dyn Write) -> Result<bool> {
    let mut all = true;
    writeln!(out, "{:<28} {:>12}  result", "check", "max_rel_err")?;
    for name in gradsuite::check_names() {
        let r = gradsuite::run_check(name, seeds, None)?;
        all &= r.passed();
        writeln!(
            out,
            "{:<28} {:>12.3e}  {}",
            r.name,
            r.max_rel_err,
            if r.passed() { "pass" } else { "FAIL" }
        )?;
    }
    writeln!(out, "tolerance {:e}, {seeds} seed(s) per check", gradsuite::TOLERANCE)?;
    Ok(all)
}
