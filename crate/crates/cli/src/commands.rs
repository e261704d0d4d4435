use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pointsift::autodiff::gradcheck::operator_suite;
use pointsift::data::{multiscale_shape, save_xyzl, toy_scene, MultiScaleConfig, ToySceneConfig};
use pointsift::nn::{tiny_network_gradcheck, Network, NetworkConfig};
use pointsift::training::{
    compare_grouping as run_grouping, coverage_experiment, evaluate, format_coverage, format_grouping, format_log,
    grouping_variants, load_checkpoint, parse_config, prepare_all, save_checkpoint, scale_awareness_experiment,
    train as run_training, ActivationNorm, ConfusionMatrix, MetricsReport, TrainConfig,
};
use pointsift::PointCloud;

use crate::dataset::{self, format_manifest, ManifestRow, MANIFEST};
use crate::presets;
use crate::{
    CliError, CliResult, CompareArgs, CoverageArgs, DataKind, EvalArgs, GenDataArgs, GradcheckArgs, Norm,
    ScaleExpArgs, TrainArgs,
};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Seed of the `i`-th generated scene.
pub(crate) fn scene_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn sidecar(ckpt: &Path, suffix: &str) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn thread_count(flag: Option<usize>, deterministic: bool) -> usize {
    match flag {
        Some(t) => t.max(1),
        None if deterministic => 1,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Writes `csv` to `out` and prints `summary`, or prints `csv` when there
/// is no output file and sends `summary` to stderr.
fn emit(out: Option<&Path>, csv: &str, summary: &str) -> CliResult<()> {
    match out {
        Some(p) => {
            write_file(p, csv)?;
            println!("{summary}");
        }
        None => {
            print!("{csv}");
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn network_config(config: Option<&Path>, ckpt: &Path) -> CliResult<NetworkConfig> {
    let path = config.map_or_else(|| sidecar(ckpt, ".cfg"), Path::to_path_buf);
    Ok(parse_config(&read_text(&path)?)?.0)
}

pub fn gen_data(a: &GenDataArgs) -> CliResult<()> {
    let (lo, hi) = match a.kind {
        DataKind::Toy => (0.3, 0.6),
        DataKind::Multiscale => (0.1, 3.2),
    };
    let (smin, smax) = (a.scale_min.unwrap_or(lo), a.scale_max.unwrap_or(hi));
    if !(smin > 0.0 && smin <= smax && smax.is_finite()) {
        return Err(CliError::usage("invalid scale range"));
    }
    if a.scenes == 0 {
        return Err(CliError::usage("--scenes must be positive"));
    }
    if a.kind == DataKind::Multiscale && a.classes != 2 && a.classes != 3 {
        return Err(CliError::usage("multiscale shapes are labeled sphere/cuboid"));
    }
    fs::create_dir_all(&a.out).map_err(|e| CliError::usage(format!("cannot write to {}: {e}", a.out.display())))?;
    let mut rows = Vec::with_capacity(a.scenes);
    for i in 0..a.scenes {
        let seed = scene_seed(a.seed, i);
        let (name, scene) = match a.kind {
            DataKind::Toy => {
                let cfg = ToySceneConfig {
                    points: a.points,
                    classes: a.classes,
                    scale_min: smin,
                    scale_max: smax,
                    ..ToySceneConfig::default()
                };
                (format!("scene_{i:05}.xyzl"), toy_scene(&cfg, seed)?)
            }
            DataKind::Multiscale => {
                let cfg = MultiScaleConfig {
                    points: a.points,
                    scale_min: smin,
                    scale_max: smax,
                };
                (format!("shape_{i:05}.xyzl"), multiscale_shape(&cfg, seed)?)
            }
        };
        save_xyzl(&scene.cloud, &a.out.join(&name))?;
        rows.push(ManifestRow::for_scene(name, &scene, seed));
    }
    write_file(&a.out.join(MANIFEST), format_manifest(&rows))?;
    println!("wrote {} files and {MANIFEST} to {}", rows.len(), a.out.display());
    Ok(())
}

fn report_line(prefix: &str, r: &MetricsReport) -> String {
    format!("{prefix} accuracy={:.6} miou={:.6}", r.overall_accuracy, r.mean_iou)
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let (net_cfg, mut tc) = parse_config(&read_text(&a.config)?)?;
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    tc.threads = thread_count(a.threads, a.deterministic);
    let (_, clouds) = dataset::load(&a.data)?;
    let mut net = Network::new(net_cfg.clone())?;
    let data = prepare_all(&net, &clouds, tc.threads)?;
    let held_out = match &a.eval_data {
        Some(dir) => Some(prepare_all(&net, &dataset::load(dir)?.1, tc.threads)?),
        None => None,
    };
    let log = run_training(&mut net, &data, &tc, held_out.as_deref(), |r| {
        eprintln!("epoch {} step {} loss {:.6} accuracy {:.4} miou {:.4}", r.epoch, r.step, r.loss, r.accuracy, r.miou);
    })?;

    save_checkpoint(&net, &a.out)?;
    write_file(&sidecar(&a.out, ".cfg"), net_cfg.to_text() + &tc.to_text())?;
    let log_path = a.log.clone().unwrap_or_else(|| sidecar(&a.out, ".log.csv"));
    write_file(&log_path, format_log(&log))?;
    match log.last() {
        Some(r) => println!(
            "final epoch={} step={} loss={:.6} accuracy={:.6} miou={:.6}",
            r.epoch, r.step, r.loss, r.accuracy, r.miou
        ),
        None => {
            let r = evaluate(&net, held_out.as_deref().unwrap_or(&data), tc.threads)?;
            println!("{}", report_line("final epoch=0 step=0", &r));
        }
    }
    Ok(())
}

fn metrics_csv(scenes: usize, points: u64, r: &MetricsReport) -> String {
    let mut s = String::from("scenes,points,accuracy,miou");
    for c in 0..r.per_class_iou.len() {
        let _ = write!(s, ",iou_{c}");
    }
    let _ = write!(s, "\n{scenes},{points},{},{}", r.overall_accuracy, r.mean_iou);
    for iou in &r.per_class_iou {
        // Undefined IoU (class absent from labels and predictions) stays empty.
        match iou {
            Some(v) => {
                let _ = write!(s, ",{v}");
            }
            None => s.push(','),
        }
    }
    s.push('\n');
    s
}

fn labels_of<'a>(cloud: &'a PointCloud, name: &str) -> CliResult<&'a [u32]> {
    cloud
        .labels()
        .ok_or_else(|| CliError::usage(format!("{name} has no label column")))
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let (names, clouds) = dataset::load(&a.data)?;
    let points: u64 = clouds.iter().map(|c| c.len() as u64).sum();
    let report = match (&a.predictions, &a.ckpt) {
        (Some(pred_dir), _) => {
            let mut pairs = Vec::with_capacity(names.len());
            for (name, cloud) in names.iter().zip(&clouds) {
                let pred = pointsift::data::load_xyzl(&pred_dir.join(name))?;
                let labels = labels_of(cloud, name)?.to_vec();
                let preds = labels_of(&pred, name)?.to_vec();
                if preds.len() != labels.len() {
                    return Err(CliError::usage(format!("{name}: {} predictions for {} points", preds.len(), labels.len())));
                }
                pairs.push((labels, preds));
            }
            let seen = pairs.iter().flat_map(|(l, p)| l.iter().chain(p)).max().map_or(0, |&m| m as usize + 1);
            let classes = a.classes.unwrap_or(seen.max(2));
            let mut cm = ConfusionMatrix::new(classes);
            for (l, p) in &pairs {
                cm.add(l, p)?;
            }
            cm.report()
        }
        (None, Some(ckpt)) => {
            let net = load_checkpoint(network_config(a.config.as_deref(), ckpt)?, ckpt)?;
            let data = prepare_all(&net, &clouds, thread_count(a.threads, false))?;
            evaluate(&net, &data, thread_count(a.threads, false))?
        }
        (None, None) => return Err(CliError::usage("eval needs --ckpt or --predictions")),
    };
    write_file(&a.out, metrics_csv(clouds.len(), points, &report))?;
    println!("{}", report_line(&format!("scenes={} points={points}", clouds.len()), &report));
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs) -> CliResult<()> {
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut offender = (String::new(), 0.0f64);
    let mut record = |op: String, err: f64, seed: u64| {
        match worst.iter_mut().find(|(n, _)| *n == op) {
            Some(w) => w.1 = w.1.max(err),
            None => worst.push((op.clone(), err)),
        }
        // NaN errors count as failures.
        if !(err <= offender.1) {
            offender = (format!("{op} (seed {seed})"), err);
        }
    };
    for seed in a.seed..a.seed + a.seeds.max(1) {
        for (op, err) in operator_suite(seed)? {
            record(op, err, seed);
        }
        for (param, err) in tiny_network_gradcheck(seed)? {
            record(format!("network:{param}"), err, seed);
        }
    }
    let mut csv = String::from("operation,max_relative_error\n");
    for (op, err) in &worst {
        let _ = writeln!(csv, "{op},{err:e}");
    }
    print!("{csv}");
    if !(offender.1 < GRADCHECK_TOLERANCE) {
        return Err(CliError::check(format!(
            "gradient check failed: worst offender {} with relative error {:e} (tolerance {GRADCHECK_TOLERANCE:e})",
            offender.0, offender.1
        )));
    }
    eprintln!("all gradients within {GRADCHECK_TOLERANCE:e}; worst {} at {:e}", offender.0, offender.1);
    Ok(())
}

fn toy_clouds(points: usize, scenes: usize, seed: u64) -> CliResult<Vec<PointCloud>> {
    let cfg = ToySceneConfig {
        points,
        ..ToySceneConfig::default()
    };
    (0..scenes)
        .map(|i| Ok(toy_scene(&cfg, scene_seed(seed, i))?.cloud))
        .collect()
}

pub fn coverage(a: &CoverageArgs) -> CliResult<()> {
    let variants = match &a.config {
        Some(p) => presets::with_ball_only(parse_config(&read_text(p)?)?.0),
        None => presets::coverage_pipelines(),
    };
    let clouds = match &a.data {
        Some(dir) => dataset::load(dir)?.1,
        None => toy_clouds(variants[0].1.input_points, a.scenes, a.seed)?,
    };
    let rows = coverage_experiment(&variants, &clouds)?;
    let mut summary = String::new();
    for r in &rows {
        let _ = writeln!(
            summary,
            "{} stage {}: captured {:.1}/{} on average, below full in {}/{} scenes",
            r.variant, r.stage, r.mean_captured, r.stage_size, r.scenes_below_full, r.scenes
        );
    }
    emit(a.out.as_deref(), &format_coverage(&rows), summary.trim_end())
}

pub fn scale_exp(a: &ScaleExpArgs) -> CliResult<()> {
    let net = load_checkpoint(network_config(a.config.as_deref(), &a.ckpt)?, &a.ckpt)?;
    let rows = dataset::read_manifest(&a.data)?
        .ok_or_else(|| CliError::usage(format!("{} has no {MANIFEST} with shape scales", a.data.display())))?;
    let mut clouds = Vec::with_capacity(rows.len());
    let mut scales = Vec::with_capacity(rows.len());
    for r in &rows {
        if r.scales.len() != 1 {
            return Err(CliError::usage(format!("{} holds {} shapes, expected one", r.filename, r.scales.len())));
        }
        clouds.push(pointsift::data::load_xyzl(&a.data.join(&r.filename))?);
        scales.push(r.scales[0]);
    }
    let norm = match a.norm {
        Norm::Raw => ActivationNorm::Raw,
        Norm::Standardized => ActivationNorm::Standardized,
    };
    let report = scale_awareness_experiment(&net, &clouds, &scales, a.scale_min, a.scale_max, norm)?;
    let summary = format!(
        "alignment rate {:.4} over {} shapes with {} modules (chance {:.4})",
        report.rate,
        scales.len(),
        report.modules,
        1.0 / report.modules as f64
    );
    emit(a.out.as_deref(), &report.to_csv(a.scale_min, a.scale_max), &summary)
}

pub fn compare_grouping(a: &CompareArgs) -> CliResult<()> {
    let (reference, mut tc) = match &a.config {
        Some(p) => parse_config(&read_text(p)?)?,
        None => (presets::segmentation(8), TrainConfig::default()),
    };
    tc.epochs = a.epochs;
    tc.threads = thread_count(a.threads, true);
    let (_, mut train_set) = dataset::load(&a.data)?;
    let test_set = match &a.test {
        Some(dir) => dataset::load(dir)?.1,
        None => {
            let keep = train_set.len() - train_set.len() / 5;
            if keep == 0 || keep == train_set.len() {
                return Err(CliError::usage("need at least 5 scenes to hold out a fifth"));
            }
            train_set.split_off(keep)
        }
    };
    if a.seeds.is_empty() {
        return Err(CliError::usage("--seeds is empty"));
    }
    let variants = grouping_variants(&reference)?;
    let runs = run_grouping(&variants, &train_set, &test_set, &tc, &a.seeds)?;
    let mut summary = String::new();
    let mut wins = 0;
    for &seed in &a.seeds {
        let acc = |v: &str| runs.iter().find(|r| r.seed == seed && r.variant == v).map_or(0.0, |r| r.final_accuracy());
        let (base, ball, ps) = (acc("baseline"), acc("ball_query"), acc("pointsift"));
        wins += usize::from(ps >= base);
        let _ = writeln!(summary, "seed {seed}: baseline {base:.4} ball_query {ball:.4} pointsift {ps:.4}");
    }
    let _ = write!(summary, "pointsift >= baseline in {wins}/{} seeds", a.seeds.len());
    emit(a.out.as_deref(), &format_grouping(&runs), &summary)
}
