//! Subcommand implementations. Each returns the JSON summary printed on
//! stdout; errors bubble to `main` for exit-code mapping.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use lidar_denoise::augment::{augment_weather, splitmix64, WeatherParams};
use lidar_denoise::autolabel::{
    accumulate_reference, label_clutter, reference_self_check, AutolabelParams, WeatherClass,
};
use lidar_denoise::codec::{read_frame, write_frame};
use lidar_denoise::eval::{degradation_report, iou_scores, ConfusionMatrix, CLASS_NAMES};
use lidar_denoise::filters::{dror_filter, ror_filter, sor_filter, DrorParams, MaskFlag};
use lidar_denoise::nnet::{
    self, predict_and_denoise, LossReduction, TrainConfig, WeatherNet, WeatherNetSpec,
};
use lidar_denoise::project::{crop_fov, crop_labels};
use lidar_denoise::synth::{generate_dataset, DatasetSpec};
use lidar_denoise::{Error, Frame, LabelImage, Result, SensorModel};

use crate::{
    AugmentArgs, AutolabelArgs, Cli, EvalArgs, FilterArgs, PredictArgs, ReportArgs, SynthArgs,
    TrainArgs,
};

/// Sorted *.lri files directly inside `dir`.
fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "lri"))
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(Error::EmptyInput(format!("no .lri frames in {}", dir.display())));
    }
    Ok(frames)
}

fn file_name(path: &Path) -> String {
    path.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

/// [`read_frame`] with the file named in any error message.
fn read_frame_at(path: &Path) -> Result<(Frame, Option<LabelImage>)> {
    read_frame(path).map_err(|err| match err {
        Error::Decode { offset, reason } => Error::Decode {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => Error::Decode {
            offset: 0,
            reason: format!("{}: {other}", path.display()),
        },
    })
}

/// Apply `work` to every path on `workers` threads, preserving input
/// order in the result. Each item is computed exactly once, so outputs
/// are identical for any worker count.
fn par_map_frames<T: Send>(
    paths: &[PathBuf],
    workers: u64,
    work: impl Fn(&Path) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let workers = (workers as usize).clamp(1, paths.len().max(1));
    if workers == 1 {
        return paths.iter().map(|p| work(p)).collect();
    }
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = paths.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = paths.get(i) else { break };
                *slots[i].lock().expect("slot lock") = Some(work(path));
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("worker filled every slot"))
        .collect()
}

fn parse_class(name: &str) -> Result<WeatherClass> {
    match name {
        "rain" => Ok(WeatherClass::Rain),
        "fog" => Ok(WeatherClass::Fog),
        other => Err(Error::InvalidParameter(format!(
            "unknown weather class '{other}' (expected rain or fog)"
        ))),
    }
}

fn log(cli: &Cli, msg: impl AsRef<str>) {
    if cli.verbose {
        eprintln!("{}", msg.as_ref());
    }
}

pub fn synth(cli: &Cli, args: &SynthArgs) -> Result<Value> {
    let spec = match &args.spec {
        Some(path) => serde_json::from_str::<DatasetSpec>(&fs::read_to_string(path)?)?,
        None => DatasetSpec::desk_default(),
    };
    let sensor = SensorModel::default();
    log(cli, format!("generating {} scenes into {}", spec.scenes.len(), args.out.display()));
    let manifest = generate_dataset(&spec, &sensor, cli.seed, &args.out)?;
    let frames: BTreeMap<&String, usize> =
        manifest.frames.iter().map(|(split, list)| (split, list.len())).collect();
    Ok(json!({
        "command": "synth",
        "out": args.out,
        "seed": cli.seed,
        "scenes": manifest.references.keys().collect::<Vec<_>>(),
        "frames": frames,
        "reference_frames": manifest.references.values().map(Vec::len).sum::<usize>(),
    }))
}

pub fn augment(cli: &Cli, args: &AugmentArgs) -> Result<Value> {
    let base = match (&args.params, &args.preset) {
        (Some(path), _) => serde_json::from_str::<WeatherParams>(&fs::read_to_string(path)?)?,
        (None, Some(preset)) => WeatherParams::from_preset(preset, cli.seed)?,
        (None, None) => {
            return Err(Error::InvalidParameter(
                "augment needs --preset or --params".into(),
            ))
        }
    };
    fs::create_dir_all(&args.out)?;
    let mut totals = json!({"frames": 0, "eligible": 0, "lost": 0, "scattered": 0, "clutter": 0});
    for (index, path) in list_frames(&args.input)?.iter().enumerate() {
        let (frame, _) = read_frame_at(path)?;
        // one independent stream per frame, all derived from the master seed
        let params = WeatherParams {
            seed: splitmix64(cli.seed ^ splitmix64(index as u64)),
            ..base.clone()
        };
        let (augmented, labels, stats) = augment_weather(&frame, &params)?;
        write_frame(&args.out.join(file_name(path)), &augmented, Some(&labels))?;
        log(cli, format!("{}: {} scattered, {} lost", file_name(path), stats.scattered, stats.lost));
        totals["frames"] = json!(totals["frames"].as_u64().unwrap() + 1);
        totals["eligible"] = json!(totals["eligible"].as_u64().unwrap() + stats.eligible as u64);
        totals["lost"] = json!(totals["lost"].as_u64().unwrap() + stats.lost as u64);
        totals["scattered"] = json!(totals["scattered"].as_u64().unwrap() + stats.scattered as u64);
        totals["clutter"] = json!(
            totals["clutter"].as_u64().unwrap()
                + labels.labels.iter().filter(|l| l.is_clutter()).count() as u64
        );
    }
    Ok(json!({
        "command": "augment",
        "out": args.out,
        "seed": cli.seed,
        "beta": base.beta,
        "scatter_rate": base.scatter_rate,
        "totals": totals,
    }))
}

pub fn autolabel(cli: &Cli, args: &AutolabelArgs) -> Result<Value> {
    let params = AutolabelParams {
        delta_r: args.delta_r,
        weather_class: parse_class(&args.class)?,
    };
    let reference_frames: Vec<Frame> = list_frames(&args.reference)?
        .iter()
        .map(|p| read_frame_at(p).map(|(f, _)| f))
        .collect::<Result<_>>()?;
    let stack = accumulate_reference(&reference_frames)?;
    fs::create_dir_all(&args.out)?;
    let mut clutter = 0usize;
    let mut valid = 0usize;
    let mut frames = 0usize;
    for path in list_frames(&args.input)? {
        let (frame, _) = read_frame_at(&path)?;
        let labels = label_clutter(&frame, &stack, &params)?;
        clutter += labels.labels.iter().filter(|l| l.is_clutter()).count();
        valid += labels.count(lidar_denoise::Label::Valid);
        frames += 1;
        write_frame(&args.out.join(file_name(&path)), &frame, Some(&labels))?;
    }
    log(cli, format!("labeled {frames} frames against {} references", reference_frames.len()));
    let self_check = if args.self_check {
        let report = reference_self_check(&reference_frames, &params, reference_frames[0].cols)?;
        Some(json!({
            "mean_false_rate": report.mean_per_pixel_false_rate,
            "std_false_rate": report.std_per_pixel_false_rate,
            "pixels_per_frame": report.pixels_per_frame,
        }))
    } else {
        None
    };
    Ok(json!({
        "command": "autolabel",
        "out": args.out,
        "frames": frames,
        "clutter_pixels": clutter,
        "valid_pixels": valid,
        "self_check": self_check,
    }))
}

pub fn filter(cli: &Cli, args: &FilterArgs) -> Result<Value> {
    let class = parse_class(&args.class)?;
    let sensor = SensorModel::default();
    fs::create_dir_all(&args.out)?;
    if !matches!(args.method.as_str(), "dror" | "ror" | "sor") {
        return Err(Error::InvalidParameter(format!(
            "unknown filter method '{}' (expected dror, ror or sor)",
            args.method
        )));
    }
    let paths = list_frames(&args.input)?;
    let results = par_map_frames(&paths, cli.workers, |path| {
        let (frame, _) = read_frame_at(path)?;
        let mask = match args.method.as_str() {
            "dror" => dror_filter(
                &frame,
                &sensor,
                &DrorParams {
                    min_neighbors: args.min_neighbors,
                    ..DrorParams::default()
                },
            )?,
            "ror" => ror_filter(&frame, &sensor, args.radius, args.min_neighbors)?,
            _ => sor_filter(&frame, &sensor, args.k, args.std_mult)?,
        };
        Ok((file_name(path), frame, mask))
    })?;
    let mut kept = 0usize;
    let mut removed = 0usize;
    let mut frames = 0usize;
    for (name, frame, mask) in &results {
        kept += mask.count(MaskFlag::Keep);
        removed += mask.count(MaskFlag::Clutter);
        frames += 1;
        write_frame(&args.out.join(name), frame, Some(&mask.to_labels(class)))?;
    }
    log(cli, format!("{}: kept {kept}, removed {removed}", args.method));
    Ok(json!({
        "command": "filter",
        "method": args.method,
        "out": args.out,
        "frames": frames,
        "kept": kept,
        "removed": removed,
    }))
}

fn parse_widths(text: &str) -> Result<Vec<usize>> {
    let widths: Vec<usize> = text
        .split(',')
        .map(|w| w.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidParameter(format!("bad --widths '{text}': {e}")))?;
    if widths.is_empty() || widths.contains(&0) {
        return Err(Error::InvalidParameter("widths must be positive".into()));
    }
    Ok(widths)
}

fn parse_crop(text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split(',').collect();
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|e| Error::InvalidParameter(format!("bad --crop '{text}': {e}")))
    };
    match parts.as_slice() {
        [start, width] => Ok((parse(start)?, parse(width)?)),
        _ => Err(Error::InvalidParameter(format!(
            "bad --crop '{text}': expected START,WIDTH"
        ))),
    }
}

/// Labeled frames from a directory, cast to the training scalar and
/// optionally cropped.
fn load_training_set<T: lidar_denoise::scalar::Real>(
    dir: &Path,
    crop: Option<(usize, usize)>,
) -> Result<Vec<(lidar_denoise::RangeImage<T>, LabelImage)>> {
    let mut out = Vec::new();
    for path in list_frames(dir)? {
        let (frame, labels) = read_frame_at(&path)?;
        let labels = labels.ok_or_else(|| {
            Error::EmptyInput(format!("{} carries no labels", path.display()))
        })?;
        let (frame, labels) = match crop {
            Some((start, width)) => (
                crop_fov(&frame, start, width)?,
                crop_labels(&labels, start, width)?,
            ),
            None => (frame, labels),
        };
        out.push((frame.cast::<T>(), labels));
    }
    Ok(out)
}

pub fn train(cli: &Cli, args: &TrainArgs) -> Result<Value> {
    match args.dtype.as_str() {
        "f32" => train_typed::<f32>(cli, args),
        "f64" => train_typed::<f64>(cli, args),
        other => Err(Error::InvalidParameter(format!(
            "unknown dtype '{other}' (expected f32 or f64)"
        ))),
    }
}

fn train_typed<T: lidar_denoise::scalar::Real>(cli: &Cli, args: &TrainArgs) -> Result<Value> {
    let widths = parse_widths(&args.widths)?;
    let crop = args.crop.as_deref().map(parse_crop).transpose()?;
    let reduction = match args.reduction.as_str() {
        "mean" => LossReduction::Mean,
        "sum" => LossReduction::Sum,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown reduction '{other}' (expected mean or sum)"
            )))
        }
    };
    let dataset = load_training_set::<T>(&args.data, crop)?;
    let class_weights = match args.class_weights.as_str() {
        "balanced" | "balanced-sqrt" => {
            let labels: Vec<&LabelImage> = dataset.iter().map(|(_, l)| l).collect();
            let mut weights = nnet::balanced_class_weights(&labels);
            if args.class_weights == "balanced-sqrt" {
                weights = weights.map(f64::sqrt);
            }
            weights
        }
        text => {
            let parts: Vec<f64> = text
                .split(',')
                .map(|w| w.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidParameter(format!("bad --class-weights '{text}': {e}")))?;
            <[f64; 3]>::try_from(parts).map_err(|_| {
                Error::InvalidParameter(format!(
                    "bad --class-weights '{text}': expected VALID,RAIN,FOG, 'balanced' or 'balanced-sqrt'"
                ))
            })?
        }
    };
    if !(args.lr_decay > 0.0 && args.lr_decay <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "bad --lr-decay {}: expected a value in (0, 1]",
            args.lr_decay
        )));
    }
    let mut net = WeatherNet::<T>::init(WeatherNetSpec::reduced(&widths), cli.seed);
    let config = TrainConfig {
        adam: nnet::AdamConfig {
            learning_rate: args.learning_rate,
            lr_decay: args.lr_decay,
            ..nnet::AdamConfig::desk()
        },
        epochs: args.epochs,
        batch_size: args.batch_size,
        reduction,
        seed: cli.seed,
        checkpoint_dir: None,
        dropout: !args.no_dropout,
        class_weights,
    };
    log(cli, format!("training on {} frames, {} parameters", dataset.len(), net.param_count()));
    let report = nnet::train(&mut net, &dataset, &config)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    nnet::checkpoint::save(&args.out, &net, args.epochs.saturating_sub(1), cli.seed)?;
    Ok(json!({
        "command": "train",
        "checkpoint": args.out,
        "frames": dataset.len(),
        "parameters": net.param_count(),
        "class_weights": class_weights,
        "epoch_losses": report.epoch_losses,
        "final_loss": report.final_loss,
    }))
}

pub fn predict(cli: &Cli, args: &PredictArgs) -> Result<Value> {
    let (net, header) = nnet::checkpoint::load::<f32>(&args.checkpoint)?;
    log(cli, format!("checkpoint from epoch {}, seed {}", header.epoch, header.seed));
    fs::create_dir_all(&args.out)?;
    if let Some(dir) = &args.denoised_out {
        fs::create_dir_all(dir)?;
    }
    let paths = list_frames(&args.input)?;
    let results = par_map_frames(&paths, cli.workers, |path| {
        let (frame, _) = read_frame_at(path)?;
        let (labels, denoised) = predict_and_denoise(&net, &frame)?;
        Ok((file_name(path), frame, labels, denoised))
    })?;
    let mut clutter = 0usize;
    let mut frames = 0usize;
    for (name, frame, labels, denoised) in &results {
        clutter += labels.labels.iter().filter(|l| l.is_clutter()).count();
        frames += 1;
        write_frame(&args.out.join(name), frame, Some(labels))?;
        if let Some(dir) = &args.denoised_out {
            write_frame(&dir.join(name), denoised, None)?;
        }
    }
    Ok(json!({
        "command": "predict",
        "out": args.out,
        "frames": frames,
        "clutter_pixels": clutter,
    }))
}

pub fn eval(cli: &Cli, args: &EvalArgs) -> Result<Value> {
    let mut conf = ConfusionMatrix::default();
    let mut frames = 0usize;
    for pred_path in list_frames(&args.pred)? {
        let gt_path = args.gt.join(file_name(&pred_path));
        let (_, pred) = read_frame_at(&pred_path)?;
        let (_, gt) = read_frame_at(&gt_path)?;
        let pred = pred.ok_or_else(|| {
            Error::EmptyInput(format!("{} carries no labels", pred_path.display()))
        })?;
        let gt = gt.ok_or_else(|| {
            Error::EmptyInput(format!("{} carries no labels", gt_path.display()))
        })?;
        conf.update(&pred, &gt)?;
        frames += 1;
    }
    let iou = iou_scores(&conf)?;
    log(cli, format!("scored {frames} frames, {} labeled pixels", conf.total()));
    let per_class: BTreeMap<&str, Option<f64>> = CLASS_NAMES
        .iter()
        .zip(iou.per_class)
        .map(|(name, v)| (*name, v))
        .collect();
    Ok(json!({
        "command": "eval",
        "frames": frames,
        "pixels": conf.total(),
        "confusion": conf.counts,
        "iou": per_class,
        "mean_iou": iou.mean,
    }))
}

pub fn report(cli: &Cli, args: &ReportArgs) -> Result<Value> {
    let mut table_rows = Vec::new();
    for entry in &args.evals {
        let (name, path) = entry.split_once('=').ok_or_else(|| {
            Error::InvalidParameter(format!("bad --eval '{entry}': expected name=path.json"))
        })?;
        let summary: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        let class_iou = |class: &str| summary["iou"][class].as_f64();
        table_rows.push(json!({
            "method": name,
            "valid": class_iou("valid"),
            "rain": class_iou("rain"),
            "fog": class_iou("fog"),
            "mean": summary["mean_iou"].as_f64(),
        }));
    }
    if let Some(out) = &args.table_out {
        let mut csv = String::from("method,valid_iou,rain_iou,fog_iou,mean_iou\n");
        for row in &table_rows {
            let cell = |key: &str| {
                row[key]
                    .as_f64()
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_default()
            };
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                row["method"].as_str().unwrap_or(""),
                cell("valid"),
                cell("rain"),
                cell("fog"),
                cell("mean"),
            ));
        }
        fs::write(out, csv)?;
        log(cli, format!("wrote table to {}", out.display()));
    }
    let mut ratio_rows = Vec::new();
    if let Some(dir) = &args.labeled {
        for path in list_frames(dir)? {
            let (_, labels) = read_frame_at(&path)?;
            let labels = labels.ok_or_else(|| {
                Error::EmptyInput(format!("{} carries no labels", path.display()))
            })?;
            let degradation = degradation_report(&labels, None)?;
            ratio_rows.push(json!({
                "file": file_name(&path),
                "clutter_pixels": degradation.clutter_pixels,
                "valid_pixels": degradation.valid_pixels,
                "clutter_ratio": degradation.clutter_ratio,
            }));
        }
        if let Some(out) = &args.ratios_out {
            let mut csv = String::from("file,clutter_pixels,valid_pixels,clutter_ratio\n");
            for row in &ratio_rows {
                csv.push_str(&format!(
                    "{},{},{},{:.6}\n",
                    row["file"].as_str().unwrap_or(""),
                    row["clutter_pixels"],
                    row["valid_pixels"],
                    row["clutter_ratio"].as_f64().unwrap_or(f64::NAN),
                ));
            }
            fs::write(out, csv)?;
            log(cli, format!("wrote ratios to {}", out.display()));
        }
    }
    Ok(json!({
        "command": "report",
        "table": table_rows,
        "ratios": ratio_rows,
    }))
}
