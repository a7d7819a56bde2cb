use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ToyModel;
use super::synthetic::SyntheticDataset;
use super::TrainError;
use crate::loss::{
    multi_label_binary_loss, semantic_kd_loss, semantic_softmax_loss, single_label_ce, BinaryLossConfig,
    ConfidenceRule, HierarchyWeights, KdOptions, KdReduction, KdWeighting, LossResult, TeacherOutput, WeightMode,
};
use crate::metrics::{semantic_accuracy, PredictionBatch, SemanticAccuracyReport};
use crate::taxonomy::{SemanticLabel, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SingleLabel,
    MultiLabel,
    SemanticSoftmax,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::SingleLabel, Scheme::MultiLabel, Scheme::SemanticSoftmax];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SingleLabel => "single_label",
            Self::MultiLabel => "multi_label",
            Self::SemanticSoftmax => "semantic_softmax",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "single_label" => Ok(Self::SingleLabel),
            "multi" | "multi_label" => Ok(Self::MultiLabel),
            "semantic" | "semantic_softmax" => Ok(Self::SemanticSoftmax),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdMode {
    #[default]
    Off,
    Vanilla,
    ConfidenceWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scheme: Scheme,
    pub kd: KdMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub weight_mode: WeightMode,
    pub smoothing: f64,
    /// Coefficient of the distillation term in `task + λ·KD`.
    pub lambda_kd: f64,
    /// When false only the distillation term is optimized.
    pub task_loss: bool,
    pub weight_decay: f64,
    pub binary: BinaryLossConfig,
    pub confidence_rule: ConfidenceRule,
    pub kd_reduction: KdReduction,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::SemanticSoftmax,
            kd: KdMode::Off,
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.01,
            optimizer: Optimizer::adam(),
            weight_mode: WeightMode::Empirical,
            smoothing: crate::loss::DEFAULT_SMOOTHING,
            lambda_kd: 1.0,
            task_loss: true,
            weight_decay: 0.0,
            binary: BinaryLossConfig::default(),
            confidence_rule: ConfidenceRule::AtOrAbove,
            kd_reduction: KdReduction::Mean,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return bad(format!("smoothing {} outside [0, 1)", self.smoothing));
        }
        if self.weight_decay < 0.0 || self.lambda_kd < 0.0 {
            return bad("weight_decay and lambda_kd must be non-negative".into());
        }
        if !self.task_loss && self.kd == KdMode::Off {
            return bad("task loss disabled with distillation off leaves nothing to optimize".into());
        }
        self.binary
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }

    fn kd_options(&self) -> Option<KdOptions> {
        let weighting = match self.kd {
            KdMode::Off => return None,
            KdMode::Vanilla => KdWeighting::Vanilla,
            KdMode::ConfidenceWeighted => KdWeighting::ConfidenceWeighted,
        };
        Some(KdOptions {
            weighting,
            reduction: self.kd_reduction,
        })
    }
}

/// One line of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean objective over the training split after this epoch.
    pub loss: f64,
    /// Held-out top-1 per hierarchy.
    pub per_hierarchy_top1: Vec<f64>,
    pub weighted_total: f64,
    pub train_per_hierarchy_top1: Vec<f64>,
    pub train_weighted_total: f64,
}

/// Serializes a trace as JSONL, one epoch per line.
pub fn trace_to_jsonl(trace: &[EpochRecord]) -> String {
    let mut out = String::new();
    for rec in trace {
        out.push_str(&serde_json::to_string(rec).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub trace: Vec<EpochRecord>,
}

/// Everything needed to evaluate the per-sample objective.
pub struct Objective<'a> {
    taxonomy: &'a Taxonomy,
    cfg: &'a TrainConfig,
    weights: HierarchyWeights,
    kd: Option<KdOptions>,
}

impl<'a> Objective<'a> {
    /// Builds the objective, deriving hierarchy weights from the training labels.
    pub fn new(taxonomy: &'a Taxonomy, cfg: &'a TrainConfig, train_labels: &[usize]) -> Result<Self, TrainError> {
        cfg.validate()?;
        let weights = match cfg.weight_mode {
            _ if cfg.scheme != Scheme::SemanticSoftmax => HierarchyWeights::uniform(taxonomy.num_hierarchies()),
            WeightMode::Empirical => HierarchyWeights::from_label_levels(
                taxonomy.num_hierarchies(),
                train_labels.iter().map(|&l| taxonomy.class(l).hierarchy),
            )?,
            mode => HierarchyWeights::compute(taxonomy, None, mode)?,
        };
        Ok(Self {
            taxonomy,
            cfg,
            weights,
            kd: cfg.kd_options(),
        })
    }

    pub fn weights(&self) -> &HierarchyWeights {
        &self.weights
    }

    /// Task loss (unless disabled) plus `λ·KD` (when a teacher is given).
    pub fn evaluate(
        &self,
        logits: &[f64],
        label_class: usize,
        teacher_logits: Option<&[f64]>,
    ) -> Result<LossResult, TrainError> {
        let t = self.taxonomy;
        let label = t.expand_index(label_class);
        let mut result = if self.cfg.task_loss {
            self.task_loss(logits, label_class, &label)?
        } else {
            LossResult {
                total: 0.0,
                per_hierarchy: vec![0.0; t.num_hierarchies()],
                grad: vec![0.0; logits.len()],
            }
        };
        if let (Some(opts), Some(teacher)) = (self.kd, teacher_logits) {
            let teacher = TeacherOutput::from_logits(teacher.to_vec(), &label, t, self.cfg.confidence_rule)?;
            let kd = semantic_kd_loss(logits, &teacher, &label, t, opts)?;
            result.total += self.cfg.lambda_kd * kd.total;
            for (g, k) in result.grad.iter_mut().zip(&kd.grad) {
                *g += self.cfg.lambda_kd * k;
            }
        }
        Ok(result)
    }

    fn task_loss(&self, logits: &[f64], label_class: usize, label: &SemanticLabel) -> Result<LossResult, TrainError> {
        let t = self.taxonomy;
        Ok(match self.cfg.scheme {
            Scheme::SingleLabel => single_label_ce(logits, label_class, self.cfg.smoothing)?,
            Scheme::MultiLabel => {
                let mut targets = vec![false; t.num_classes()];
                for c in t.ancestor_indices(label_class) {
                    targets[c] = true;
                }
                multi_label_binary_loss(logits, &targets, &self.cfg.binary)?
            }
            Scheme::SemanticSoftmax => semantic_softmax_loss(logits, label, &self.weights, t, self.cfg.smoothing)?,
        })
    }
}

/// Semantic accuracy of `model` on the samples at `indices`, scored against
/// their recorded labels.
pub fn evaluate_model(
    model: &ToyModel,
    data: &SyntheticDataset,
    indices: &[usize],
    t: &Taxonomy,
) -> Result<SemanticAccuracyReport, TrainError> {
    let logits = indices.iter().map(|&i| model.logits(&data.features[i])).collect();
    let labels = indices.iter().map(|&i| t.expand_index(data.labels[i])).collect();
    Ok(semantic_accuracy(&PredictionBatch::new(logits, labels)?, t)?)
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

fn check_shapes(
    model: &ToyModel,
    data: &SyntheticDataset,
    t: &Taxonomy,
    teacher: Option<&ToyModel>,
) -> Result<(), TrainError> {
    if model.output_dim() != t.num_classes() {
        return Err(TrainError::ShapeMismatch(format!(
            "model has {} outputs, taxonomy has {} classes",
            model.output_dim(),
            t.num_classes()
        )));
    }
    if let Some(x) = data.features.iter().find(|x| x.len() != model.input_dim()) {
        return Err(TrainError::ShapeMismatch(format!(
            "feature length {} but model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    if let Some(&l) = data.labels.iter().find(|&&l| l >= t.num_classes()) {
        return Err(TrainError::ShapeMismatch(format!("label {l} outside taxonomy")));
    }
    if let Some(teacher) = teacher {
        if teacher.input_dim() != model.input_dim() || teacher.output_dim() != model.output_dim() {
            return Err(TrainError::ShapeMismatch(
                "teacher and student dimensions differ".into(),
            ));
        }
    }
    Ok(())
}

/// Mini-batch training with analytic loss gradients.
///
/// Each epoch visits the training split in a seeded random order; after each
/// epoch the full training objective and the held-out semantic accuracy are
/// recorded.
pub fn train(
    model: &ToyModel,
    data: &SyntheticDataset,
    t: &Taxonomy,
    cfg: &TrainConfig,
    teacher: Option<&ToyModel>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    match (cfg.kd, teacher) {
        (KdMode::Off, Some(_)) => return Err(TrainError::TeacherMismatch("teacher given with distillation off")),
        (KdMode::Vanilla | KdMode::ConfidenceWeighted, None) => {
            return Err(TrainError::TeacherMismatch("distillation needs a teacher"))
        }
        _ => {}
    }
    check_shapes(model, data, t, teacher)?;

    let train_idx = data.train_indices();
    let val_idx = data.val_indices();
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| data.labels[i]).collect();
    let objective = Objective::new(t, cfg, &train_labels)?;
    let teacher_logits: Option<Vec<Vec<f64>>> = teacher.map(|m| data.features.iter().map(|x| m.logits(x)).collect());

    let mut model = model.clone();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState {
        m: vec![0.0; model.num_params()],
        v: vec![0.0; model.num_params()],
        step: 0,
    };
    let mut order = train_idx.clone();
    let mut grad = vec![0.0; model.num_params()];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let x = &data.features[i];
                let fwd = model.forward(x);
                let tl = teacher_logits.as_ref().map(|v| v[i].as_slice());
                let r = objective.evaluate(&fwd.logits, data.labels[i], tl)?;
                batch_loss += r.total;
                let dlogits: Vec<f64> = r.grad.iter().map(|g| g * scale).collect();
                model.backward(x, &fwd, &dlogits, &mut grad);
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_no });
            }
            apply_update(&mut model, &grad, cfg, &mut adam);
        }

        let mut loss = 0.0;
        for &i in &train_idx {
            let tl = teacher_logits.as_ref().map(|v| v[i].as_slice());
            loss += objective
                .evaluate(&model.logits(&data.features[i]), data.labels[i], tl)?
                .total;
        }
        loss /= train_idx.len().max(1) as f64;
        let held_out = evaluate_model(&model, data, &val_idx, t)?;
        let on_train = evaluate_model(&model, data, &train_idx, t)?;
        trace.push(EpochRecord {
            epoch,
            loss,
            per_hierarchy_top1: held_out.accuracies(),
            weighted_total: held_out.weighted_total,
            train_per_hierarchy_top1: on_train.accuracies(),
            train_weighted_total: on_train.weighted_total,
        });
    }
    Ok(TrainOutcome { model, trace })
}

fn apply_update(model: &mut ToyModel, grad: &[f64], cfg: &TrainConfig, adam: &mut AdamState) {
    let lr = cfg.learning_rate;
    let wd = cfg.weight_decay;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, g) in model.params_mut().iter_mut().zip(grad) {
                *p -= lr * (g + wd * *p);
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            adam.step += 1;
            let c1 = 1.0 - beta1.powi(adam.step);
            let c2 = 1.0 - beta2.powi(adam.step);
            for (((p, g), m), v) in model
                .params_mut()
                .iter_mut()
                .zip(grad)
                .zip(adam.m.iter_mut())
                .zip(adam.v.iter_mut())
            {
                let g = g + wd * *p;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}
