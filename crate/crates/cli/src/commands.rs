use std::path::Path;

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use semsoft::loss::{
    multi_label_binary_loss, semantic_kd_loss, semantic_softmax_loss, single_label_ce, BinaryLossConfig,
    ConfidenceRule, HierarchyWeights, KdOptions, KdReduction, KdWeighting, TeacherOutput, WeightMode,
};
use semsoft::metrics::{map_scores, semantic_accuracy, top_k_accuracy, PredictionBatch};
use semsoft::prep::{filter_infrequent, load_manifest, make_val_split, squish_resize, PixelBuffer, PrepError};
use semsoft::trainer::{
    compare_schemes, default_taxonomy, finite_difference_check, generate_synthetic_dataset, random_edge_list,
    sample_count_sweep, trace_to_jsonl, KdMode, Scheme, SyntheticDataset, ToyModel, TrainError, DEFAULT_STEP,
};
use semsoft::{DagPolicy, Taxonomy};

use crate::config::RunConfig;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn prep_err(e: PrepError) -> CliError {
    match e {
        PrepError::InvalidArgument(m) => CliError::Usage(m),
        other => CliError::data(other),
    }
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::InvalidConfig(_) | TrainError::InvalidSpec(_) | TrainError::TeacherMismatch(_) => {
            CliError::Usage(e.to_string())
        }
        other => CliError::data(other),
    }
}

/// Writes `contents` to `path` and the provenance sidecar `<path>.meta.json`.
fn write_artifact(path: &Path, contents: &[u8], command: &str, seed: u64, config: Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    let meta = json!({ "command": command, "seed": seed, "config": config });
    let meta_path = format!("{}.meta.json", path.display());
    let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    text.push('\n');
    std::fs::write(&meta_path, text).with_context(|| format!("writing {meta_path}"))?;
    Ok(())
}

fn load_taxonomy(path: &Path, policy: DagPolicy) -> Result<Taxonomy> {
    Taxonomy::from_tsv_path(path, policy).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn taxonomy_stats(tsv: &Path, policy: DagPolicy) -> Result<()> {
    let t = load_taxonomy(tsv, policy)?;
    println!("hierarchy\tclasses");
    for (k, n) in t.stats().iter().enumerate() {
        println!("{k}\t{n}");
    }
    println!("total\t{}", t.num_classes());
    Ok(())
}

pub fn prep_filter(input: &Path, output: &Path, min: usize, seed: u64) -> Result<()> {
    let m = load_manifest(input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let kept = filter_infrequent(&m, min).map_err(prep_err)?;
    let config = json!({ "input": input, "output": output, "min": min });
    write_artifact(output, kept.to_jsonl_string().as_bytes(), "prep filter", seed, config)?;
    eprintln!(
        "kept {} of {} records, {} classes",
        kept.len(),
        m.len(),
        kept.class_counts().len()
    );
    Ok(())
}

pub fn prep_split(input: &Path, output: &Path, per_class: usize, seed: u64) -> Result<()> {
    let m = load_manifest(input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let split = make_val_split(&m, per_class, seed).map_err(prep_err)?;
    let config = json!({ "input": input, "output": output, "per_class": per_class });
    write_artifact(output, split.to_jsonl_string().as_bytes(), "prep split", seed, config)?;
    eprintln!(
        "assigned {per_class} validation samples to each of {} classes",
        split.class_counts().len()
    );
    Ok(())
}

pub fn prep_resize(input: &Path, output: &Path, size: usize, seed: u64) -> Result<()> {
    let file = std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let img = PixelBuffer::read_from(std::io::BufReader::new(file)).map_err(CliError::data)?;
    let out = squish_resize(&img, size).map_err(prep_err)?;
    let mut bytes = Vec::new();
    out.write_to(&mut bytes).expect("writing to memory");
    let config = json!({ "input": input, "output": output, "size": size });
    write_artifact(output, &bytes, "prep resize", seed, config)
}

pub fn labels_expand(tsv: &Path, class_id: &str, policy: DagPolicy) -> Result<()> {
    let t = load_taxonomy(tsv, policy)?;
    let index = t.index_of(class_id).map_err(CliError::data)?;
    let names: Vec<&str> = t
        .ancestor_indices(index)
        .into_iter()
        .map(|c| t.class(c).name.as_str())
        .collect();
    println!("{}", names.join(", "));
    Ok(())
}

pub fn weights(tsv: &Path, manifest: Option<&Path>, mode: WeightMode, output: Option<&Path>, seed: u64) -> Result<()> {
    let t = load_taxonomy(tsv, DagPolicy::default())?;
    let m = manifest
        .map(|p| load_manifest(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
        .transpose()?;
    if mode == WeightMode::Empirical && m.is_none() {
        return Err(CliError::Usage("--mode empirical needs --manifest".into()));
    }
    let w = HierarchyWeights::compute(&t, m.as_ref(), mode).map_err(CliError::data)?;
    let text = serde_json::to_string(&w).expect("weights serialize") + "\n";
    print!("{text}");
    if let Some(out) = output {
        let config = json!({ "taxonomy": tsv, "manifest": manifest, "mode": mode });
        write_artifact(out, text.as_bytes(), "weights", seed, config)?;
    }
    Ok(())
}

/// Taxonomy and synthetic dataset described by `cfg`.
fn setup(cfg: &RunConfig) -> Result<(Taxonomy, SyntheticDataset)> {
    let t = if cfg.paths.taxonomy.is_empty() {
        default_taxonomy()
    } else {
        load_taxonomy(Path::new(&cfg.paths.taxonomy), DagPolicy::default())?
    };
    let data = generate_synthetic_dataset(&t, &cfg.data).map_err(train_err)?;
    Ok((t, data))
}

fn initial_model(cfg: &RunConfig, t: &Taxonomy) -> ToyModel {
    let hidden = (cfg.model.hidden > 0).then_some(cfg.model.hidden);
    ToyModel::new(cfg.data.feature_dim, hidden, t.num_classes(), cfg.seed)
}

fn load_model(path: &Path) -> Result<ToyModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_teacher(cfg: &RunConfig) -> Result<Option<ToyModel>> {
    match (cfg.train.kd, cfg.paths.teacher.is_empty()) {
        (KdMode::Off, _) => Ok(None),
        (_, true) => Err(CliError::Usage("distillation needs paths.teacher".into())),
        (_, false) => load_model(Path::new(&cfg.paths.teacher)).map(Some),
    }
}

fn echo_config(cfg: &RunConfig) {
    println!("effective config: {}", cfg.to_flat_json());
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<()> {
    echo_config(cfg);
    let (t, data) = setup(cfg)?;
    let teacher = load_teacher(cfg)?;
    let outcome =
        semsoft::trainer::train(&initial_model(cfg, &t), &data, &t, &cfg.train, teacher.as_ref()).map_err(train_err)?;

    let model_json = serde_json::to_string(&outcome.model).expect("model serializes") + "\n";
    write_artifact(
        &out.join("model.json"),
        model_json.as_bytes(),
        "train",
        cfg.seed,
        cfg.to_flat_json(),
    )?;
    let trace = trace_to_jsonl(&outcome.trace);
    write_artifact(
        &out.join("trace.jsonl"),
        trace.as_bytes(),
        "train",
        cfg.seed,
        cfg.to_flat_json(),
    )?;
    if let Some(last) = outcome.trace.last() {
        println!(
            "epoch {}: loss {:.6}, held-out weighted top-1 {:.4}, per hierarchy {:?}",
            last.epoch, last.loss, last.weighted_total, last.per_hierarchy_top1
        );
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig, model_path: &Path, metrics: &[String], output: Option<&Path>) -> Result<()> {
    for m in metrics {
        if !["top1", "top5", "semantic", "map"].contains(&m.as_str()) {
            return Err(CliError::Usage(format!("unknown metric `{m}`")));
        }
    }
    let (t, data) = setup(cfg)?;
    let model = load_model(model_path)?;
    if model.output_dim() != t.num_classes() || model.input_dim() != cfg.data.feature_dim {
        return Err(CliError::Data(
            "model dimensions do not match the configured data".into(),
        ));
    }
    let val = data.val_indices();
    let logits: Vec<Vec<f64>> = val.iter().map(|&i| model.logits(&data.features[i])).collect();

    let mut report = serde_json::Map::new();
    for m in metrics {
        let value = match m.as_str() {
            "top1" | "top5" => {
                let labels = val.iter().map(|&i| data.labels[i]).collect();
                let batch = PredictionBatch::new(logits.clone(), labels).map_err(CliError::data)?;
                json!(top_k_accuracy(&batch, if m == "top1" { 1 } else { 5 }).map_err(CliError::data)?)
            }
            "semantic" => {
                let labels = val.iter().map(|&i| t.expand_index(data.labels[i])).collect();
                let batch = PredictionBatch::new(logits.clone(), labels).map_err(CliError::data)?;
                serde_json::to_value(semantic_accuracy(&batch, &t).map_err(CliError::data)?).expect("serializes")
            }
            _ => {
                let labels = val
                    .iter()
                    .map(|&i| {
                        let mut y = vec![false; t.num_classes()];
                        for c in t.ancestor_indices(data.labels[i]) {
                            y[c] = true;
                        }
                        y
                    })
                    .collect();
                let batch = PredictionBatch::new(logits.clone(), labels).map_err(CliError::data)?;
                serde_json::to_value(map_scores(&batch).map_err(CliError::data)?).expect("serializes")
            }
        };
        report.insert(m.clone(), value);
    }
    let text = serde_json::to_string_pretty(&Value::Object(report)).expect("report serializes") + "\n";
    print!("{text}");
    if let Some(out) = output {
        let mut config = cfg.to_flat_json();
        config["eval.model"] = json!(model_path);
        config["eval.metrics"] = json!(metrics);
        write_artifact(out, text.as_bytes(), "eval", cfg.seed, config)?;
    }
    Ok(())
}

pub fn compare(cfg: &RunConfig, names: &[String], output: &Path) -> Result<()> {
    let schemes = names
        .iter()
        .map(|s| s.parse::<Scheme>().map_err(CliError::Usage))
        .collect::<Result<Vec<_>>>()?;
    echo_config(cfg);
    let (t, data) = setup(cfg)?;
    let teacher = load_teacher(cfg)?;
    let table = compare_schemes(
        &initial_model(cfg, &t),
        &data,
        &t,
        &cfg.train,
        &schemes,
        teacher.as_ref(),
    )
    .map_err(train_err)?;
    let csv = table.to_csv();
    let mut config = cfg.to_flat_json();
    config["compare.schemes"] = json!(schemes.iter().map(Scheme::as_str).collect::<Vec<_>>());
    write_artifact(output, csv.as_bytes(), "compare", cfg.seed, config)?;
    print!("{csv}");
    Ok(())
}

pub fn sweep(cfg: &RunConfig, counts: &[usize], output: &Path) -> Result<()> {
    echo_config(cfg);
    if cfg.train.kd != KdMode::Off {
        return Err(CliError::Usage(
            "sweep trains without distillation; set train.kd=off".into(),
        ));
    }
    let (t, data) = setup(cfg)?;
    let points = sample_count_sweep(&initial_model(cfg, &t), &data, &t, &cfg.train, counts).map_err(train_err)?;
    let mut csv = String::from("train_samples,weighted_total");
    for k in 0..t.num_hierarchies() {
        csv.push_str(&format!(",h{k}"));
    }
    csv.push('\n');
    for p in &points {
        csv.push_str(&format!("{},{}", p.train_samples, p.report.weighted_total));
        for h in &p.report.per_hierarchy_top1 {
            csv.push_str(&format!(",{}", h.accuracy));
        }
        csv.push('\n');
    }
    let mut config = cfg.to_flat_json();
    config["sweep.counts"] = json!(counts);
    write_artifact(output, csv.as_bytes(), "sweep", cfg.seed, config)?;
    print!("{csv}");
    Ok(())
}

fn logits(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

pub fn grad_check(instances: usize, tolerance: f64, seed: u64) -> Result<()> {
    if instances == 0 || tolerance.is_nan() || tolerance <= 0.0 {
        return Err(CliError::Usage("--instances and --tolerance must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<(&str, f64)> = Vec::new();
    let check = |f: &dyn Fn(&[f64]) -> f64, x: &[f64], g: &[f64]| finite_difference_check(f, x, g, DEFAULT_STEP);

    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(2..30);
        let z = logits(&mut rng, n);
        let target = rng.random_range(0..n);
        let r = single_label_ce(&z, target, 0.2).map_err(CliError::data)?;
        worst = worst.max(check(&|x| single_label_ce(x, target, 0.2).unwrap().total, &z, &r.grad));
    }
    rows.push(("single_label_ce", worst));

    for (name, cfg) in [
        ("binary_bce", BinaryLossConfig::cross_entropy()),
        ("binary_focal", BinaryLossConfig::focal()),
        ("binary_asymmetric", BinaryLossConfig::asymmetric()),
    ] {
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let n = rng.random_range(1..30);
            let z = logits(&mut rng, n);
            let y: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let r = multi_label_binary_loss(&z, &y, &cfg).map_err(CliError::data)?;
            // per-logit terms are independent; check each on its own
            for j in 0..n {
                let f = |x: &[f64]| multi_label_binary_loss(x, &y[j..=j], &cfg).unwrap().total;
                worst = worst.max(check(&f, &z[j..=j], &r.grad[j..=j]));
            }
        }
        rows.push((name, worst));
    }

    let mut sem_worst = 0.0f64;
    let mut kd_worst = 0.0f64;
    for i in 0..instances {
        let t = loop {
            let nodes = rng.random_range(1..40);
            if let Ok(t) = Taxonomy::from_edges(&random_edge_list(&mut rng, nodes, 0.2), DagPolicy::Reject) {
                break t;
            }
        };
        let c = rng.random_range(0..t.num_classes());
        let label = t.expand_index(c);
        let w = HierarchyWeights::compute(&t, None, WeightMode::ClassMass).map_err(CliError::data)?;
        let z = logits(&mut rng, t.num_classes());
        let r = semantic_softmax_loss(&z, &label, &w, &t, 0.2).map_err(CliError::data)?;
        let f = |x: &[f64]| semantic_softmax_loss(x, &label, &w, &t, 0.2).unwrap().total;
        sem_worst = sem_worst.max(check(&f, &z, &r.grad));

        let teacher =
            TeacherOutput::from_logits(logits(&mut rng, t.num_classes()), &label, &t, ConfidenceRule::AtOrAbove)
                .map_err(CliError::data)?;
        let opts = KdOptions {
            weighting: [KdWeighting::ConfidenceWeighted, KdWeighting::Vanilla][i % 2],
            reduction: KdReduction::Mean,
        };
        let r = semantic_kd_loss(&z, &teacher, &label, &t, opts).map_err(CliError::data)?;
        let f = |x: &[f64]| semantic_kd_loss(x, &teacher, &label, &t, opts).unwrap().total;
        kd_worst = kd_worst.max(check(&f, &z, &r.grad));
    }
    rows.push(("semantic_softmax_loss", sem_worst));
    rows.push(("semantic_kd_loss", kd_worst));

    let mut failed = Vec::new();
    for (name, err) in &rows {
        let ok = *err < tolerance;
        println!("{name}\t{err:.3e}\t{}", if ok { "ok" } else { "FAIL" });
        if !ok {
            failed.push(*name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "gradient check above {tolerance:e}: {}",
            failed.join(", ")
        )))
    }
}
