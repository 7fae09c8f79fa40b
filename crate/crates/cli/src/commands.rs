use std::fs;
use std::path::{Path, PathBuf};

use pointbank::bench::{benchmark, estimate_flops, FLOP_FORMULA};
use pointbank::fewshot::{fewshot_episode, EpisodeSpec};
use pointbank::io::formats::{format_xyz, read_cloud, reduce_to, write_cloud, SampleFormat};
use pointbank::io::manifest::{CategorySpec, SampleRef};
use pointbank::io::report::{sweep_csv, Metric};
use pointbank::metrics::{evaluate_classification, evaluate_segmentation};
use pointbank::{
    build_cls_bank, build_seg_bank, load_bank, save_bank, synthetic, Bank, ClsBank, DatasetManifest, Encoder,
    Error, EvalReport, PipelineConfig, PointCloud, Precision, Result, SegBank, Split, Task,
};

use crate::args::*;

const DEFAULT_POINTS: usize = 1024;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bank(BankCommand::Build(a)) => bank_build(a),
        Command::Classify(a) => classify(a),
        Command::Segment(a) => segment(a),
        Command::Eval(a) => eval(a),
        Command::Fewshot(a) => fewshot(a),
        Command::Bench(a) => bench(a),
        Command::Sweep(a) => sweep(a),
        Command::Convert(a) => convert(a),
        Command::Synth(a) => synth(a),
    }
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

fn config_for(manifest: &DatasetManifest, pipeline: &PipelineArgs) -> Result<PipelineConfig> {
    let cfg = pipeline.config(manifest.task, manifest.points);
    cfg.validate()?;
    Ok(cfg)
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn report_for(kind: &str, cfg: &PipelineConfig, seed: u64, manifest: Option<&DatasetManifest>) -> Result<EvalReport> {
    let mut r = EvalReport::new(kind, serde_json::to_value(cfg)?, cfg.config_hash_hex(), seed);
    if let Some(m) = manifest {
        r.dataset_hash = Some(m.dataset_hash()?);
    }
    Ok(r)
}

fn write_report(report: &EvalReport, dir: Option<&Path>, stem: &str) -> Result<()> {
    if let Some(dir) = dir {
        let (csv, json) = report.write(dir, stem)?;
        eprintln!("wrote {} and {}", csv.display(), json.display());
    }
    Ok(())
}

/// Loads a bank built with `cfg`; a `--gamma` flag overrides the stored one.
fn open_bank(path: &Path, cfg: &PipelineConfig, gamma_flag: Option<f64>) -> Result<Bank> {
    let mut bank = load_bank(path, Some(&cfg.config_hash()))?;
    if let Some(g) = gamma_flag {
        match &mut bank {
            Bank::Cls(b) => b.gamma = g,
            Bank::Seg(b) => b.gamma = g,
        }
    }
    Ok(bank)
}

fn cls_bank(bank: Bank, path: &Path) -> Result<ClsBank> {
    match bank {
        Bank::Cls(b) => Ok(b),
        Bank::Seg(_) => Err(usage(format!("{} is a segmentation bank", path.display()))),
    }
}

fn seg_bank(bank: Bank, path: &Path) -> Result<SegBank> {
    match bank {
        Bank::Seg(b) => Ok(b),
        Bank::Cls(_) => Err(usage(format!("{} is a classification bank", path.display()))),
    }
}

fn clouds(samples: Vec<(PointCloud, usize)>) -> Vec<PointCloud> {
    samples.into_iter().map(|(c, _)| c).collect()
}

fn build_bank(manifest: &DatasetManifest, encoder: &Encoder, proto_keep: Option<f64>, seed: u64) -> Result<Bank> {
    let points = encoder.config().points;
    let train = manifest.load_split(Split::Train, points)?;
    match manifest.task {
        Task::Cls => {
            if proto_keep.is_some() {
                return Err(usage("--proto-keep applies to segmentation banks only"));
            }
            Ok(Bank::Cls(build_cls_bank(&train, manifest.class_names.clone(), encoder)?))
        }
        Task::Seg => {
            let mut bank = build_seg_bank(&clouds(train), &manifest.part_table(), encoder)?;
            if let Some(keep) = proto_keep {
                bank.subsample(keep, seed)?;
            }
            Ok(Bank::Seg(bank))
        }
    }
}

fn bank_build(a: BuildArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let cfg = config_for(&manifest, &a.pipeline)?;
    let encoder = Encoder::new(cfg)?;
    let mut bank = build_bank(&manifest, &encoder, a.proto_keep, a.seed)?;
    if a.fp16_bank {
        bank.set_precision(Precision::F16);
    }
    save_bank(&bank, &a.out)?;
    let (entries, dim) = match &bank {
        Bank::Cls(b) => (b.len(), b.dim()),
        Bank::Seg(b) => (b.num_prototypes(), b.dim()),
    };
    println!(
        "bank: {} entries of dim {dim}, config {}",
        entries,
        encoder.config().config_hash_hex()
    );
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let cfg = a.pipeline.config(Task::Cls, DEFAULT_POINTS);
    cfg.validate()?;
    let bank = cls_bank(open_bank(&a.bank, &cfg, a.pipeline.gamma)?, &a.bank)?;
    let encoder = Encoder::new(cfg)?;
    for path in &a.inputs {
        let cloud = reduce_to(read_cloud(path)?, encoder.config().points)?;
        let desc = encoder.encode_classification(&cloud)?;
        let p = bank.classify(&desc.vector)?;
        println!("{}\t{}\t{:.4}", path.display(), bank.class_names[p.label], p.scores[p.label]);
    }
    Ok(())
}

fn segment(a: SegmentArgs) -> Result<()> {
    let cfg = a.pipeline.config(Task::Seg, DEFAULT_POINTS);
    cfg.validate()?;
    let bank = seg_bank(open_bank(&a.bank, &cfg, a.pipeline.gamma)?, &a.bank)?;
    let encoder = Encoder::new(cfg)?;
    let cloud = reduce_to(read_cloud(&a.input)?, encoder.config().points)?;
    let category = a
        .category
        .or(cloud.category())
        .ok_or_else(|| usage("sample has no category; pass --category"))?;
    let desc = encoder.encode_segmentation(&cloud)?;
    let labels: Vec<u16> = bank
        .segment(category, desc.matrix.view())?
        .into_iter()
        .map(|p| p.label as u16)
        .collect();
    let labeled = PointCloud::new(cloud.points().to_vec())?
        .with_labels(labels)?
        .with_category(category);
    let text = format_xyz(&labeled);
    match &a.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let task: Task = a.task.into();
    // flag errors take precedence over data errors
    a.pipeline.config(task, DEFAULT_POINTS).validate()?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    if manifest.task != task {
        return Err(usage(format!("manifest is for {:?}, not {:?}", manifest.task, task)));
    }
    let cfg = config_for(&manifest, &a.pipeline)?;
    let bank = open_bank(&a.bank, &cfg, a.pipeline.gamma)?;
    let encoder = Encoder::new(cfg.clone())?;
    let samples = manifest.load_split(a.split.into(), cfg.points)?;
    let mut report = report_for(&format!("eval-{}", kind_name(task)), &cfg, a.seed, Some(&manifest))?;
    report.push("samples", samples.len() as f64);
    match task {
        Task::Cls => {
            let bank = cls_bank(bank, &a.bank)?;
            let e = evaluate_classification(&bank, &encoder, &samples)?;
            report.push("accuracy_pct", 100.0 * e.accuracy);
            println!("accuracy: {:.2}% over {} samples", 100.0 * e.accuracy, samples.len());
        }
        Task::Seg => {
            let bank = seg_bank(bank, &a.bank)?;
            let e = evaluate_segmentation(&bank, &encoder, &clouds(samples))?;
            report.push("instance_miou_pct", 100.0 * e.instance_miou);
            println!("instance mIoU: {:.2}% over {} shapes", 100.0 * e.instance_miou, e.per_shape.len());
        }
    }
    write_report(&report, a.report.as_deref(), "eval")
}

fn kind_name(task: Task) -> &'static str {
    match task {
        Task::Cls => "cls",
        Task::Seg => "seg",
    }
}

fn fewshot(a: FewshotArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    if manifest.task != Task::Cls {
        return Err(usage("few-shot episodes need a classification manifest"));
    }
    if a.episodes == 0 {
        return Err(usage("--episodes must be >= 1"));
    }
    let cfg = config_for(&manifest, &a.pipeline)?;
    let encoder = Encoder::new(cfg.clone())?;
    let pool = manifest.load_split(a.split.into(), cfg.points)?;
    let spec = EpisodeSpec {
        ways: a.ways,
        shots: a.shots,
        queries: a.queries,
    };
    let accs: Vec<f64> = (0..a.episodes as u64)
        .map(|e| fewshot_episode(&pool, &encoder, spec, a.seed.wrapping_add(e)))
        .collect::<Result<_>>()?;
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = if accs.len() > 1 {
        accs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let ci95 = 1.96 * (var / n).sqrt();
    println!(
        "{}-way {}-shot: {:.2}% +/- {:.2} over {} episodes",
        a.ways,
        a.shots,
        100.0 * mean,
        100.0 * ci95,
        a.episodes
    );
    let mut report = report_for("fewshot", &cfg, a.seed, Some(&manifest))?;
    report
        .push("ways", a.ways as f64)
        .push("shots", a.shots as f64)
        .push("episodes", n)
        .push("accuracy_pct", 100.0 * mean)
        .push("ci95_pct", 100.0 * ci95);
    write_report(&report, a.report.as_deref(), "fewshot")
}

fn bench_metrics(
    cfg: &PipelineConfig,
    task: Task,
    encoder: &Encoder,
    samples: &[PointCloud],
    bank: Option<&Bank>,
    repetitions: usize,
    warmup: usize,
) -> Result<Vec<Metric>> {
    let flops = estimate_flops(cfg, task)?;
    let b = benchmark(encoder, samples, task, bank, repetitions, warmup)?;
    let peak_mb = b.peak_bytes.map_or(f64::NAN, |p| p as f64 / (1024.0 * 1024.0));
    Ok(vec![
        Metric {
            name: "gflops".into(),
            value: flops.gflops(),
        },
        Metric {
            name: "ms_per_sample".into(),
            value: b.ms_per_sample,
        },
        Metric {
            name: "peak_mb".into(),
            value: peak_mb,
        },
    ])
}

fn bench(a: BenchArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let cfg = config_for(&manifest, &a.pipeline)?;
    let bank = a
        .bank
        .as_deref()
        .map(|p| open_bank(p, &cfg, a.pipeline.gamma))
        .transpose()?;
    let encoder = Encoder::new(cfg.clone())?;
    let mut samples = clouds(manifest.load_split(Split::Test, cfg.points)?);
    samples.truncate(a.samples.max(1));
    let metrics = bench_metrics(
        &cfg,
        manifest.task,
        &encoder,
        &samples,
        bank.as_ref(),
        a.repetitions,
        a.warmup,
    )?;
    let mut report = report_for("bench", &cfg, a.seed, Some(&manifest))?;
    report.push("samples", samples.len() as f64);
    for m in &metrics {
        println!("{}: {}", m.name, m.value);
        report.push(&m.name, m.value);
    }
    report.notes.push(FLOP_FORMULA.to_string());
    write_report(&report, a.report.as_deref(), "bench")
}

fn integral(param: &str, v: f64) -> Result<usize> {
    if v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(usage(format!("{param} values must be positive integers, got {v}")))
    }
}

fn apply_sweep(base: &PipelineConfig, param: SweepParam, v: f64) -> Result<PipelineConfig> {
    let mut cfg = base.clone();
    match param {
        SweepParam::Dim => {
            let d = integral("dim", v)?;
            cfg.encoding.dim = d;
            cfg.encoding.fourier_l = (d / 12).max(1);
        }
        SweepParam::K => cfg.stages.k = integral("k", v)?,
        SweepParam::Stages => cfg.stages.stages = integral("stages", v)?,
        SweepParam::FixedSigma => cfg.encoding.fixed_sigma = Some(v),
        SweepParam::FixedBlend => cfg.encoding.fixed_blend = Some(v),
    }
    cfg.validate()?;
    Ok(cfg)
}

fn param_name(p: SweepParam) -> &'static str {
    match p {
        SweepParam::Dim => "dim",
        SweepParam::K => "k",
        SweepParam::Stages => "stages",
        SweepParam::FixedSigma => "fixed_sigma",
        SweepParam::FixedBlend => "fixed_blend",
    }
}

fn sweep(a: SweepArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let base = config_for(&manifest, &a.pipeline)?;
    let mut values = a.values.clone();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(usage("sweep values must be finite"));
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    let train = manifest.load_split(Split::Train, base.points)?;
    let test = manifest.load_split(Split::Test, base.points)?;
    let timed: Vec<PointCloud> = test
        .iter()
        .take(a.bench_samples.max(1))
        .map(|(c, _)| c.clone())
        .collect();
    let mut rows = Vec::with_capacity(values.len());
    for &v in &values {
        let cfg = apply_sweep(&base, a.param, v)?;
        let encoder = Encoder::new(cfg.clone())?;
        let (quality, bank) = match manifest.task {
            Task::Cls => {
                let bank = build_cls_bank(&train, manifest.class_names.clone(), &encoder)?;
                let e = evaluate_classification(&bank, &encoder, &test)?;
                (
                    Metric {
                        name: "accuracy_pct".into(),
                        value: 100.0 * e.accuracy,
                    },
                    Bank::Cls(bank),
                )
            }
            Task::Seg => {
                let train_clouds: Vec<PointCloud> = train.iter().map(|(c, _)| c.clone()).collect();
                let test_clouds: Vec<PointCloud> = test.iter().map(|(c, _)| c.clone()).collect();
                let bank = build_seg_bank(&train_clouds, &manifest.part_table(), &encoder)?;
                let e = evaluate_segmentation(&bank, &encoder, &test_clouds)?;
                (
                    Metric {
                        name: "instance_miou_pct".into(),
                        value: 100.0 * e.instance_miou,
                    },
                    Bank::Seg(bank),
                )
            }
        };
        let mut metrics = vec![quality];
        metrics.extend(bench_metrics(
            &cfg,
            manifest.task,
            &encoder,
            &timed,
            Some(&bank),
            a.repetitions,
            2,
        )?);
        eprintln!("{}={v} done", param_name(a.param));
        rows.push((v, metrics));
    }
    let csv = sweep_csv(param_name(a.param), &rows);
    match &a.out {
        Some(path) => fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn convert(a: ConvertArgs) -> Result<()> {
    let cloud = read_cloud(&a.input)?;
    write_cloud(&a.output, &cloud, SampleFormat::from_path(&a.output))?;
    println!("{} points -> {}", cloud.len(), a.output.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.per_class == 0 || a.points == 0 {
        return Err(usage("--per-class and --points must be positive"));
    }
    let ext = if a.packed { "npc" } else { "xyz" };
    let format = if a.packed { SampleFormat::Packed } else { SampleFormat::Xyz };
    for split in ["train", "test"] {
        fs::create_dir_all(a.out.join(split))?;
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut write = |split: &str, name: String, cloud: &PointCloud, label: usize| -> Result<()> {
        let rel = PathBuf::from(split).join(format!("{name}.{ext}"));
        write_cloud(&a.out.join(&rel), cloud, format)?;
        let entry = SampleRef { path: rel, label };
        if split == "train" {
            train.push(entry);
        } else {
            test.push(entry);
        }
        Ok(())
    };
    // Train and test seeds come from disjoint ranges.
    let seed_of = |split: usize, i: usize| a.seed.wrapping_mul(1_000_003).wrapping_add((split * 500_000 + i) as u64);
    let task: Task = a.task.into();
    let (class_names, categories) = match task {
        Task::Cls => {
            for (s, split) in ["train", "test"].into_iter().enumerate() {
                for (class, name) in synthetic::SHAPE_NAMES.iter().enumerate() {
                    for i in 0..a.per_class {
                        let cloud = synthetic::shape(class, a.points, seed_of(s, class * a.per_class + i));
                        write(split, format!("{name}_{i:04}"), &cloud, class)?;
                    }
                }
            }
            (synthetic::SHAPE_NAMES.iter().map(|s| s.to_string()).collect(), Vec::new())
        }
        Task::Seg => {
            for (s, split) in ["train", "test"].into_iter().enumerate() {
                for i in 0..a.per_class {
                    let cloud = synthetic::two_spheres(a.points, seed_of(s, i));
                    write(split, format!("two_spheres_{i:04}"), &cloud, 0)?;
                }
            }
            let cat = CategorySpec {
                name: "two_spheres".into(),
                parts: vec![0, 1],
            };
            (Vec::new(), vec![cat])
        }
    };
    let manifest = DatasetManifest {
        root: a.out.clone(),
        task,
        points: a.points,
        class_names,
        categories,
        train,
        test,
    };
    let path = a.out.join("manifest.json");
    manifest.save(&path)?;
    println!(
        "wrote {} train and {} test samples; manifest {}",
        manifest.train.len(),
        manifest.test.len(),
        path.display()
    );
    Ok(())
}
