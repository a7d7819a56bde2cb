//! Acceptance checks. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use rand::Rng;
use semsoft::loss::{
    estimate_teacher_confidence, multi_label_binary_loss, semantic_kd_loss, semantic_softmax_loss, single_label_ce,
    split_logits, stable_softmax, BinaryLossConfig, ConfidenceRule, HierarchyWeights, KdOptions, KdReduction,
    KdWeighting, LossError, TeacherOutput, WeightMode,
};
use semsoft::metrics::{average_precision, map_scores, PredictionBatch};
use semsoft::prep::{
    filter_infrequent, make_val_split, squish_resize, DatasetManifest, PixelBuffer, SampleRecord, Split,
    DEFAULT_MIN_SAMPLES, DEFAULT_RESOLUTION, DEFAULT_VAL_PER_CLASS,
};
use semsoft::trainer::{
    compare_schemes, default_taxonomy, generate_synthetic_dataset, sample_count_sweep, trace_to_jsonl, train, Scheme,
    SyntheticDatasetSpec, ToyModel, TrainConfig,
};
use semsoft::{RawEdge, RawEdgeList, Taxonomy};

use common::{
    brute_ap, calibration, fd_rel_err, gradient_image, level_of, moving_average3, naive_bilinear, parent_map,
    parent_walk, random_forest, random_instance, random_logits, rng,
};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradient_correctness() -> Result<String, String> {
    const TOL: f64 = 1e-4;
    let mut r = rng(101);
    let mut worst = BTreeMap::new();
    let mut record = |name: &'static str, err: f64| -> Result<(), String> {
        let w = worst.entry(name).or_insert(0.0f64);
        *w = w.max(err);
        ensure(err < TOL, || format!("{name}: relative error {err:.3e}"))
    };

    for _ in 0..150 {
        let n = r.random_range(1..30);
        let z = random_logits(&mut r, n, 3.0);
        let target = r.random_range(0..n);
        let eps = r.random_range(0.0..0.5);
        let res = single_label_ce(&z, target, eps).unwrap();
        record(
            "single_label_ce",
            fd_rel_err(|x| single_label_ce(x, target, eps).unwrap().total, &z, &res.grad),
        )?;
    }

    let configs = [
        ("bce", BinaryLossConfig::cross_entropy()),
        ("focal", BinaryLossConfig::focal()),
        ("asl", BinaryLossConfig::asymmetric()),
    ];
    for (name, cfg) in configs {
        for _ in 0..120 {
            let n = r.random_range(1..30);
            let z = random_logits(&mut r, n, 3.0);
            let y: Vec<bool> = (0..n).map(|_| r.random()).collect();
            let res = multi_label_binary_loss(&z, &y, &cfg).unwrap();
            // independent per-logit terms: difference each on its own
            for j in 0..n {
                let term = |x: &[f64]| multi_label_binary_loss(x, &y[j..=j], &cfg).unwrap().total;
                record(name, fd_rel_err(term, &z[j..=j], &res.grad[j..=j]))?;
            }
        }
    }

    for _ in 0..150 {
        let (t, c) = random_instance(&mut r, 40);
        let label = t.expand_index(c);
        let w = HierarchyWeights::compute(&t, None, WeightMode::ClassMass).unwrap();
        let eps = r.random_range(0.0..0.5);
        let z = random_logits(&mut r, t.num_classes(), 3.0);
        let res = semantic_softmax_loss(&z, &label, &w, &t, eps).unwrap();
        let f = |x: &[f64]| semantic_softmax_loss(x, &label, &w, &t, eps).unwrap().total;
        record("semantic_softmax_loss", fd_rel_err(f, &z, &res.grad))?;
    }

    for i in 0..150 {
        let (t, c) = random_instance(&mut r, 40);
        let label = t.expand_index(c);
        let zs = random_logits(&mut r, t.num_classes(), 3.0);
        let zt = random_logits(&mut r, t.num_classes(), 3.0);
        let teacher = TeacherOutput::from_logits(zt, &label, &t, ConfidenceRule::AtOrAbove).unwrap();
        let opts = KdOptions {
            weighting: [KdWeighting::ConfidenceWeighted, KdWeighting::Vanilla][i % 2],
            reduction: [KdReduction::Mean, KdReduction::Sum][(i / 2) % 2],
        };
        let res = semantic_kd_loss(&zs, &teacher, &label, &t, opts).unwrap();
        let f = |x: &[f64]| semantic_kd_loss(x, &teacher, &label, &t, opts).unwrap().total;
        record("semantic_kd_loss", fd_rel_err(f, &zs, &res.grad))?;
    }

    let summary: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    Ok(format!("max rel. err. < {TOL:e}: {}", summary.join(", ")))
}

fn gradient_masking() -> Result<String, String> {
    let mut r = rng(102);
    let mut masked = 0usize;
    for _ in 0..500 {
        let (t, c) = random_instance(&mut r, 60);
        let label = t.expand_index(c);
        let z = random_logits(&mut r, t.num_classes(), 4.0);
        let w = HierarchyWeights::compute(&t, None, WeightMode::ClassMass).unwrap();
        let res = semantic_softmax_loss(&z, &label, &w, &t, 0.2).unwrap();
        for k in level_of(&t, c) + 1..t.num_hierarchies() {
            for g in t.partition(k) {
                ensure(res.grad[g] == 0.0, || {
                    format!("logit {g} at hierarchy {k} has gradient {}", res.grad[g])
                })?;
                masked += 1;
            }
        }
    }
    Ok(format!("500 pairs, {masked} inactive logits all exactly 0"))
}

fn scheme_reduction() -> Result<String, String> {
    let mut r = rng(103);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let n = r.random_range(1..25);
        let entries = (0..n).map(|i| RawEdge::new(format!("k{i:02}"), None, "")).collect();
        let t = Taxonomy::from_edges(&RawEdgeList::new(entries), Default::default()).unwrap();
        let c = r.random_range(0..n);
        let z = random_logits(&mut r, n, 5.0);
        let eps = r.random_range(0.0..0.9);
        let sem = semantic_softmax_loss(&z, &t.expand_index(c), &HierarchyWeights::uniform(1), &t, eps).unwrap();
        let flat = single_label_ce(&z, c, eps).unwrap();
        worst = worst.max((sem.total - flat.total).abs());
        for (a, b) in sem.grad.iter().zip(&flat.grad) {
            worst = worst.max((a - b).abs());
        }

        let y: Vec<bool> = (0..n).map(|_| r.random()).collect();
        let bin = multi_label_binary_loss(&z, &y, &BinaryLossConfig::new(0.0, 0.0).unwrap()).unwrap();
        let bce: f64 = z
            .iter()
            .zip(&y)
            .map(|(zi, yi)| {
                let p = 1.0 / (1.0 + (-zi).exp());
                if *yi {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum();
        worst = worst.max((bin.total - bce).abs());
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("max deviation {worst:.1e} < 1e-12"))
}

fn normalization() -> Result<String, String> {
    let mut r = rng(104);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (t, _) = random_instance(&mut r, 60);
        let z = random_logits(&mut r, t.num_classes(), 30.0);
        for group in split_logits(&z, &t).unwrap() {
            let s: f64 = stable_softmax(group).unwrap().iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    ensure(worst < 1e-9, || format!("max |Σp - 1| = {worst:.3e}"))?;
    Ok(format!("1000 inputs, max |Σp - 1| = {worst:.1e}"))
}

fn balancing() -> Result<String, String> {
    let mut r = rng(105);
    let mut worst_ulps = 0.0f64;
    for _ in 0..200 {
        let (t, _) = random_instance(&mut r, 40);
        let mut records = Vec::new();
        // at least one sample at a deepest class keeps every hierarchy active
        let deepest = t.partition(t.num_hierarchies() - 1).start;
        records.push(SampleRecord::new("s0000", t.class(deepest).class_id.clone(), None));
        for s in 1..r.random_range(2..300) {
            let c = r.random_range(0..t.num_classes());
            let split = [None, Some(Split::Train), Some(Split::Val)][r.random_range(0..3)];
            records.push(SampleRecord::new(
                format!("s{s:04}"),
                t.class(c).class_id.clone(),
                split,
            ));
        }
        let m = DatasetManifest::new(records).unwrap();
        let w = HierarchyWeights::compute(&t, Some(&m), WeightMode::Empirical).map_err(|e| e.to_string())?;
        for k in 0..t.num_hierarchies() {
            let active: Vec<&SampleRecord> = m
                .records()
                .iter()
                .filter(|rec| rec.split != Some(Split::Val))
                .filter(|rec| level_of(&t, t.index_of(&rec.class_id).unwrap()) >= k)
                .collect();
            // exact: count · (1/O_k) = 1 with count = O_k
            ensure(active.len() as u64 == w.occurrences[k], || {
                format!(
                    "hierarchy {k}: {} active samples, O_k = {}",
                    active.len(),
                    w.occurrences[k]
                )
            })?;
            ensure(w.weights[k] == 1.0 / w.occurrences[k] as f64, || {
                format!("W_{k} is not 1/O_{k}")
            })?;
            let sum: f64 = active.iter().map(|_| w.weights[k]).sum();
            let ulps = (sum - 1.0).abs() / f64::EPSILON;
            worst_ulps = worst_ulps.max(ulps);
            ensure(ulps <= active.len() as f64, || {
                format!("hierarchy {k}: float sum {sum}")
            })?;
        }
    }
    let t = default_taxonomy();
    match HierarchyWeights::compute(&t, None, WeightMode::AsPrinted) {
        Err(LossError::DegenerateWeight { hierarchy: 0 }) => {}
        other => return Err(format!("as_printed gave {other:?}")),
    }
    Ok(format!(
        "count_k = O_k exactly on 200 manifests (float sum within {worst_ulps:.0} ulp); as_printed -> DegenerateWeight(0)"
    ))
}

fn taxonomy_oracles() -> Result<String, String> {
    let mut r = rng(106);
    let mut nodes = 0;
    for _ in 0..500 {
        let edges = random_forest(&mut r, 300);
        let t = Taxonomy::from_edges(&edges, Default::default()).map_err(|e| e.to_string())?;
        let parents = parent_map(&edges);
        let mut seen = vec![false; t.num_classes()];
        for e in &edges.entries {
            let chain = parent_walk(&parents, &e.class_id);
            let level = chain.len() - 1;
            let (k, j) = t.logit_position(&e.class_id).unwrap();
            ensure(k == level, || format!("{}: level {k}, oracle {level}", e.class_id))?;
            ensure(t.ancestor_chain(&e.class_id).unwrap() == chain, || {
                format!("{}: chain differs", e.class_id)
            })?;
            let label = t.expand_label(&e.class_id).unwrap();
            for (h, entry) in label.per_hierarchy().iter().enumerate() {
                let expected = (h <= level).then(|| t.logit_position(&chain[h]).unwrap().1);
                ensure(*entry == expected, || {
                    format!("{}: label entry {h} differs", e.class_id)
                })?;
            }
            let g = t.global_index(k, j);
            ensure(!seen[g] && t.class(g).class_id == e.class_id, || {
                format!("index {g} reused")
            })?;
            seen[g] = true;
        }
        ensure(seen.iter().all(|&s| s), || "logit index not onto".into())?;
        nodes += edges.entries.len();
    }
    Ok(format!(
        "500 forests, {nodes} classes, levels/chains/labels exact, index bijective"
    ))
}

fn preprocessing_constants() -> Result<String, String> {
    ensure(
        DEFAULT_MIN_SAMPLES == 500 && DEFAULT_VAL_PER_CLASS == 50 && DEFAULT_RESOLUTION == 224,
        || "default constants changed".into(),
    )?;
    let mut records = Vec::new();
    for (class, n) in [("small", 499usize), ("exact", 500), ("large", 731)] {
        for i in 0..n {
            records.push(SampleRecord::new(format!("{class}{i:04}"), class, None));
        }
    }
    let m = DatasetManifest::new(records).unwrap();
    let f = filter_infrequent(&m, DEFAULT_MIN_SAMPLES).map_err(|e| e.to_string())?;
    let counts = f.class_counts();
    ensure(
        !counts.contains_key("small") && counts["exact"] == 500 && counts["large"] == 731,
        || format!("filter kept {counts:?}"),
    )?;

    let a = make_val_split(&f, DEFAULT_VAL_PER_CLASS, 17).map_err(|e| e.to_string())?;
    let b = make_val_split(&f, DEFAULT_VAL_PER_CLASS, 17).map_err(|e| e.to_string())?;
    ensure(a.to_jsonl_string() == b.to_jsonl_string(), || {
        "split not deterministic".into()
    })?;
    let mut val: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in a.records().iter().filter(|r| r.split == Some(Split::Val)) {
        *val.entry(&rec.class_id).or_default() += 1;
    }
    ensure(val.values().all(|&v| v == 50) && val.len() == 2, || {
        format!("val counts {val:?}")
    })?;

    let img = gradient_image(448, 336);
    let out = squish_resize(&img, DEFAULT_RESOLUTION).map_err(|e| e.to_string())?;
    let worst = out
        .data()
        .iter()
        .zip(naive_bilinear(&img, 224, 224))
        .map(|(a, b)| (*a as f64 - b).abs())
        .fold(0.0, f64::max);
    ensure(worst < 1e-6, || format!("resize deviates by {worst:.3e}"))?;

    let mut r = rng(107);
    let square = PixelBuffer::new(224, 224, (0..224 * 224 * 3).map(|_| r.random::<f32>()).collect()).unwrap();
    ensure(squish_resize(&square, 224).unwrap() == square, || {
        "224x224 resize is not the identity".into()
    })?;
    Ok(format!(
        "499 dropped / 500 kept, 50 val per class, resize max dev {worst:.1e}, identity exact"
    ))
}

fn teacher_confidence() -> Result<String, String> {
    let mut r = rng(108);
    for i in 0..200 {
        let n: usize = if i % 2 == 0 { 40 } else { r.random_range(1..400) };
        let raw: Vec<f64> = (0..n).map(|_| r.random::<f64>().powi(4)).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let mut sorted = probs.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let expected: f64 = sorted[..n.div_ceil(20)].iter().sum();
        let k = r.random_range(1..5);
        let got = estimate_teacher_confidence(&probs, k - 1, k, ConfidenceRule::AtOrAbove).unwrap();
        ensure((got - expected).abs() < 1e-15, || format!("N={n}: {got} vs {expected}"))?;
        for gt in k..k + 3 {
            let p = estimate_teacher_confidence(&probs, gt, k, ConfidenceRule::AtOrAbove).unwrap();
            ensure(p == 1.0, || format!("gt {gt} >= k {k} gave {p}"))?;
        }
    }
    Ok("P = 1 for gt >= k; top-⌈N/20⌉ sum matches full sort on 200 distributions".into())
}

fn metric_oracles() -> Result<String, String> {
    let ap = average_precision(&[0.9, 0.8, 0.7], &[false, true, true]).unwrap();
    ensure((ap - 7.0 / 12.0).abs() < 1e-15, || format!("hand case gave {ap}"))?;

    let mut r = rng(109);
    let mut instances = 0;
    let tied = |r: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| r.random_range(0..4) as f64 * 0.25).collect()
    };
    for n in 1..=6usize {
        for mask in 1u32..(1 << n) {
            let rel: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            for _ in 0..5 {
                let s = tied(&mut r, n);
                let got = average_precision(&s, &rel).unwrap();
                let want = brute_ap(&s, &rel).unwrap();
                ensure((got - want).abs() < 1e-15, || {
                    format!("AP {got} vs {want} on {s:?} / {rel:?}")
                })?;
                instances += 1;
            }
        }
    }
    for classes in 1..=5usize {
        for samples in 1..=6usize {
            for _ in 0..40 {
                let logits: Vec<Vec<f64>> = (0..samples).map(|_| tied(&mut r, classes)).collect();
                let labels: Vec<Vec<bool>> = (0..samples)
                    .map(|_| (0..classes).map(|_| r.random_bool(0.4)).collect())
                    .collect();
                let micro = brute_ap(&logits.concat(), &labels.concat());
                let per_class: Vec<f64> = (0..classes)
                    .filter_map(|c| {
                        let s: Vec<f64> = logits.iter().map(|row| row[c]).collect();
                        let y: Vec<bool> = labels.iter().map(|row| row[c]).collect();
                        brute_ap(&s, &y)
                    })
                    .collect();
                let got = map_scores(&PredictionBatch::new(logits, labels).unwrap());
                match (micro, got) {
                    (None, Err(_)) => {}
                    (Some(micro), Ok(rep)) => {
                        let macro_map = per_class.iter().sum::<f64>() / per_class.len() as f64;
                        ensure(
                            (rep.micro_map - micro).abs() < 1e-15 && (rep.macro_map - macro_map).abs() < 1e-15,
                            || format!("mAP {rep:?} vs ({micro}, {macro_map})"),
                        )?;
                    }
                    (m, g) => return Err(format!("oracle {m:?} but got {g:?}")),
                }
                instances += 1;
            }
        }
    }
    Ok(format!("7/12 hand case; {instances} small instances match brute force"))
}

fn toy_training() -> Result<String, String> {
    let cal = calibration();
    let t = default_taxonomy();
    let data = generate_synthetic_dataset(&t, &cal.dataset).map_err(|e| e.to_string())?;
    let model = ToyModel::new(cal.dataset.feature_dim, None, t.num_classes(), cal.model_seed);
    let cfg = TrainConfig {
        epochs: cal.epochs,
        seed: cal.train_seed,
        ..TrainConfig::default()
    };

    let mut notes = Vec::new();
    for scheme in Scheme::ALL {
        let out = train(&model, &data, &t, &TrainConfig { scheme, ..cfg.clone() }, None).map_err(|e| e.to_string())?;
        let (l0, l5) = (out.trace[0].loss, out.trace[5].loss);
        ensure(l5 < l0, || format!("{scheme}: loss {l0} -> {l5}"))?;
        if scheme == Scheme::SemanticSoftmax {
            for k in 0..t.num_hierarchies() {
                let series: Vec<f64> = out.trace[..5].iter().map(|r| r.train_per_hierarchy_top1[k]).collect();
                let smooth = moving_average3(&series);
                ensure(smooth.windows(2).all(|w| w[1] >= w[0]), || {
                    format!("hierarchy {k} train accuracy {series:?}")
                })?;
            }
            let h0 = out.trace.last().unwrap().per_hierarchy_top1[0];
            ensure(h0 >= cal.semantic_h0_top1_threshold, || {
                format!("semantic h0 top-1 {h0} < {}", cal.semantic_h0_top1_threshold)
            })?;
            notes.push(format!(
                "semantic h0 top-1 {h0:.3} >= {}",
                cal.semantic_h0_top1_threshold
            ));
        }
    }

    let spec = SyntheticDatasetSpec {
        samples_per_leaf: cal.sweep_samples_per_leaf,
        ..cal.dataset.clone()
    };
    let big = generate_synthetic_dataset(&t, &spec).map_err(|e| e.to_string())?;
    let sweep = sample_count_sweep(&model, &big, &t, &cfg, &cal.sweep_counts).map_err(|e| e.to_string())?;
    let totals: Vec<f64> = sweep.iter().map(|p| p.report.weighted_total).collect();
    ensure(totals.windows(2).all(|w| w[1] >= w[0] - cal.sweep_tolerance), || {
        format!("sweep {totals:?}")
    })?;
    let shown: Vec<String> = totals.iter().map(|v| format!("{v:.4}")).collect();
    notes.push(format!("sweep [{}] within {}", shown.join(", "), cal.sweep_tolerance));
    Ok(format!("loss(5) < loss(0) for all schemes; {}", notes.join("; ")))
}

fn determinism() -> Result<String, String> {
    let run = || -> Result<(String, String), String> {
        let cal = calibration();
        let t = default_taxonomy();
        let data = generate_synthetic_dataset(&t, &cal.dataset).map_err(|e| e.to_string())?;
        let model = ToyModel::new(cal.dataset.feature_dim, Some(8), t.num_classes(), cal.model_seed);
        let cfg = TrainConfig {
            epochs: 4,
            seed: cal.train_seed,
            ..TrainConfig::default()
        };
        let trace = trace_to_jsonl(&train(&model, &data, &t, &cfg, None).map_err(|e| e.to_string())?.trace);
        let table = compare_schemes(&model, &data, &t, &cfg, &Scheme::ALL, None).map_err(|e| e.to_string())?;
        Ok((trace, table.to_csv()))
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for i in 0..2 {
        let (trace, csv) = run()?;
        let (tp, cp) = (
            dir.path().join(format!("trace{i}.jsonl")),
            dir.path().join(format!("compare{i}.csv")),
        );
        std::fs::write(&tp, trace).map_err(|e| e.to_string())?;
        std::fs::write(&cp, csv).map_err(|e| e.to_string())?;
        files.push((std::fs::read(tp).unwrap(), std::fs::read(cp).unwrap()));
    }
    ensure(files[0].0 == files[1].0, || "train trace differs between runs".into())?;
    ensure(files[0].1 == files[1].1, || "compare CSV differs between runs".into())?;
    Ok(format!(
        "trace ({} B) and comparison CSV ({} B) byte-identical",
        files[0].0.len(),
        files[0].1.len()
    ))
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 11] = [
        ("gradient correctness", gradient_correctness),
        ("gradient masking", gradient_masking),
        ("scheme reduction", scheme_reduction),
        ("normalization", normalization),
        ("balancing invariant", balancing),
        ("taxonomy oracles", taxonomy_oracles),
        ("preprocessing constants", preprocessing_constants),
        ("teacher confidence", teacher_confidence),
        ("metric oracles", metric_oracles),
        ("toy training", toy_training),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {:>2}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:>2}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
