//! Training loops and losses.
//!
//! Pre-training distills pooled teacher layers into the student's prediction
//! heads, with one lambda draw per optimization step shared by the whole
//! batch. Guidance (boundary BCE) and quantity losses are computed from the
//! raw alpha weights only, never the modified ones. Downstream, the student
//! is frozen and a small classifier head is trained jointly with the
//! sigmoid-parameterized lambda.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphamod::{
    lambda_from_theta, sample_lambda, theta_from_lambda, LambdaControl, SampleRange,
};
use crate::cif::{self, AlphaWeights, CompressedSequence};
use crate::data_io::{TaskData, TaskKind, Utterance};
use crate::diffmath::{Graph, Matrix, NodeId};
use crate::error::{Error, Result};
use crate::model::{StudentConfig, StudentModel, TeacherModel};

const LAMBDA_STREAM: u64 = 0x4c41_4d42_4441; // keeps lambda draws on their own RNG stream

/// Externally provided segment structure for one utterance. A set bit marks
/// the last frame of a segment, so the segment count is the popcount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceTargets {
    boundaries: Vec<u8>,
    num_segments: usize,
}

impl GuidanceTargets {
    pub fn new(boundaries: Vec<u8>) -> Result<GuidanceTargets> {
        if boundaries.is_empty() {
            return Err(Error::Empty("guidance boundaries".into()));
        }
        if boundaries.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArg("boundary bits must be 0 or 1".into()));
        }
        let num_segments = boundaries.iter().filter(|&&b| b == 1).count();
        Ok(GuidanceTargets { boundaries, num_segments })
    }

    pub fn boundaries(&self) -> &[u8] {
        &self.boundaries
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    BoundaryBce,
    Quantity,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub sample_range: SampleRange,
    pub distill_weight: f64,
    pub guidance_weight: f64,
    pub quantity_weight: f64,
    pub cosine_weight: f64,
    pub guidance_mode: GuidanceMode,
    pub model: StudentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 42,
            steps: 400,
            batch_size: 8,
            learning_rate: 0.05,
            sample_range: SampleRange::full(),
            distill_weight: 1.0,
            guidance_weight: 1.0,
            quantity_weight: 0.5,
            cosine_weight: 1.0,
            guidance_mode: GuidanceMode::Both,
            model: StudentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for (name, w) in [
            ("distill_weight", self.distill_weight),
            ("guidance_weight", self.guidance_weight),
            ("quantity_weight", self.quantity_weight),
            ("cosine_weight", self.cosine_weight),
        ] {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }
}

// ── Losses ──────────────────────────────────────────────────────────────

/// Distillation loss on the tape: mean over heads of
/// L1(head, target) - w_cos * mean_n log sigmoid(cos(head_n, target_n)).
/// Targets are pooled teacher layers entering as constants.
pub fn distill_loss_node(
    g: &mut Graph,
    heads: &[NodeId],
    targets: &[Matrix],
    cosine_weight: f64,
) -> Result<NodeId> {
    if heads.is_empty() || heads.len() != targets.len() {
        return Err(Error::Length(format!(
            "distill heads {} vs teacher layers {}",
            heads.len(),
            targets.len()
        )));
    }
    let mut acc: Option<NodeId> = None;
    for (h, t) in heads.iter().zip(targets) {
        let hv = g.value(*h);
        if (hv.rows(), hv.cols()) != (t.rows(), t.cols()) {
            return Err(Error::Length(format!(
                "head output {}x{} vs pooled teacher {}x{}: segmentation was not shared",
                hv.rows(),
                hv.cols(),
                t.rows(),
                t.cols()
            )));
        }
        let tn = g.leaf(t.clone());
        let l1 = g.l1_loss(*h, tn)?;
        let pair = if cosine_weight != 0.0 {
            let cos = g.cosine_rows(*h, tn)?;
            let sig = g.sigmoid(cos);
            let logsig = g.log(sig);
            let mean_logsig = g.mean(logsig);
            let penalty = g.scale(mean_logsig, -cosine_weight);
            g.add(l1, penalty)?
        } else {
            l1
        };
        acc = Some(match acc {
            None => pair,
            Some(a) => g.add(a, pair)?,
        });
    }
    Ok(g.scale(acc.expect("nonempty"), 1.0 / heads.len() as f64))
}

/// Plain distillation loss over already pooled sequences.
pub fn distill_loss(
    student: &[CompressedSequence],
    teacher: &[CompressedSequence],
    cosine_weight: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let heads: Vec<NodeId> = student.iter().map(|c| g.leaf(c.frames.clone())).collect();
    let targets: Vec<Matrix> = teacher.iter().map(|c| c.frames.clone()).collect();
    let loss = distill_loss_node(&mut g, &heads, &targets, cosine_weight)?;
    Ok(g.value(loss).get(0, 0))
}

/// Mean binary cross-entropy between raw alpha and the boundary indicator.
/// Alpha is clamped to [1e-7, 1 - 1e-7] first.
pub fn guidance_bce_node(
    g: &mut Graph,
    alpha_raw: NodeId,
    targets: &GuidanceTargets,
) -> Result<NodeId> {
    let t_len = g.value(alpha_raw).numel();
    if t_len != targets.len() {
        return Err(Error::Length(format!(
            "alpha length {t_len} vs boundary length {}",
            targets.len()
        )));
    }
    let bits: Vec<f64> = targets.boundaries().iter().map(|&b| b as f64).collect();
    let inv_bits: Vec<f64> = bits.iter().map(|b| 1.0 - b).collect();
    let b = g.leaf(Matrix::column(bits)?);
    let not_b = g.leaf(Matrix::column(inv_bits)?);
    let a = g.clamp(alpha_raw, 1e-7, 1.0 - 1e-7);
    let log_a = g.log(a);
    let neg_a = g.scale(a, -1.0);
    let one_minus_a = g.add_const(neg_a, 1.0);
    let log_one_minus = g.log(one_minus_a);
    let pos = g.mul(b, log_a)?;
    let neg = g.mul(not_b, log_one_minus)?;
    let total = g.add(pos, neg)?;
    let mean = g.mean(total);
    Ok(g.scale(mean, -1.0))
}

/// |sum(alpha) - num_segments|.
pub fn quantity_loss_node(
    g: &mut Graph,
    alpha_raw: NodeId,
    targets: &GuidanceTargets,
) -> Result<NodeId> {
    let s = g.sum(alpha_raw);
    let centered = g.add_const(s, -(targets.num_segments() as f64));
    Ok(g.abs(centered))
}

/// Standalone guidance loss with selectable form. `both` combines boundary
/// BCE with the quantity term at weight 0.5.
pub fn guidance_loss_node(
    g: &mut Graph,
    alpha_raw: NodeId,
    targets: &GuidanceTargets,
    mode: GuidanceMode,
) -> Result<NodeId> {
    match mode {
        GuidanceMode::BoundaryBce => guidance_bce_node(g, alpha_raw, targets),
        GuidanceMode::Quantity => quantity_loss_node(g, alpha_raw, targets),
        GuidanceMode::Both => {
            let bce = guidance_bce_node(g, alpha_raw, targets)?;
            let qty = quantity_loss_node(g, alpha_raw, targets)?;
            let half = g.scale(qty, 0.5);
            g.add(bce, half)
        }
    }
}

/// Plain guidance loss over alpha values.
pub fn guidance_loss(
    alpha: &AlphaWeights,
    targets: &GuidanceTargets,
    mode: GuidanceMode,
) -> Result<f64> {
    let mut g = Graph::new();
    let a = g.leaf(Matrix::column(alpha.values().to_vec())?);
    let loss = guidance_loss_node(&mut g, a, targets, mode)?;
    Ok(g.value(loss).get(0, 0))
}

// ── Pre-training ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub lambda: f64,
    pub distill: f64,
    pub guidance: f64,
    pub quantity: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lambda,distill,guidance,quantity,total\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step, r.lambda, r.distill, r.guidance, r.quantity, r.total
            ));
        }
        out
    }
}

/// Per-step lambda source. A degenerate uniform range draws from the stream
/// but always yields its endpoint, so it reproduces the fixed variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSampler {
    Uniform(SampleRange),
    Fixed(f64),
}

impl LambdaSampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            LambdaSampler::Uniform(range) => sample_lambda(rng, range),
            LambdaSampler::Fixed(lambda) => *lambda,
        }
    }
}

pub struct PretrainOutcome {
    pub student: StudentModel,
    pub trace: LossTrace,
}

/// Once-for-all pre-training: draw lambda per step from the config's sample
/// range, distill at that compression rate, and step every parameter by
/// plain gradient descent.
pub fn ofa_pretrain(
    cfg: &TrainConfig,
    corpus: &[Utterance],
    student: StudentModel,
    teacher: &TeacherModel,
) -> Result<PretrainOutcome> {
    run_pretrain(cfg, corpus, student, teacher, &LambdaSampler::Uniform(cfg.sample_range))
}

/// Specialist baseline: identical loop with lambda pinned.
pub fn fixed_lambda_pretrain(
    cfg: &TrainConfig,
    corpus: &[Utterance],
    student: StudentModel,
    teacher: &TeacherModel,
    lambda: f64,
) -> Result<PretrainOutcome> {
    run_pretrain(cfg, corpus, student, teacher, &LambdaSampler::Fixed(lambda))
}

pub fn run_pretrain(
    cfg: &TrainConfig,
    corpus: &[Utterance],
    mut student: StudentModel,
    teacher: &TeacherModel,
    sampler: &LambdaSampler,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus".into()));
    }
    let mut lambda_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(LAMBDA_STREAM));
    let shapes: Vec<(usize, usize)> = student
        .named_params()
        .iter()
        .map(|(_, m)| (m.rows(), m.cols()))
        .collect();
    let mut trace = LossTrace::default();
    let inv_batch = 1.0 / cfg.batch_size as f64;

    for step in 0..cfg.steps {
        let lambda = sampler.draw(&mut lambda_rng);
        let lamctl = LambdaControl::fixed(lambda)?;
        let mut grads: Vec<Matrix> = shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        let (mut d_acc, mut g_acc, mut q_acc, mut t_acc) = (0.0, 0.0, 0.0, 0.0);

        for i in 0..cfg.batch_size {
            let utt = &corpus[(step * cfg.batch_size + i) % corpus.len()];
            let mut g = Graph::new();
            let fwd = student.forward(&mut g, &utt.features, &lamctl)?;
            let teacher_layers = teacher.forward(&utt.features)?;
            let mod_alpha = AlphaWeights::new(g.value(fwd.alpha_mod).data().to_vec())?;
            let pooled: Vec<Matrix> =
                cif::pool_teacher(&teacher_layers, &mod_alpha, &fwd.segmentation)?
                    .into_iter()
                    .map(|c| c.frames)
                    .collect();
            let dloss = distill_loss_node(&mut g, &fwd.head_outputs, &pooled, cfg.cosine_weight)?;
            let bce = guidance_bce_node(&mut g, fwd.alpha_raw, &utt.targets)?;
            let qty = quantity_loss_node(&mut g, fwd.alpha_raw, &utt.targets)?;
            let wd = g.scale(dloss, cfg.distill_weight);
            let wg = g.scale(bce, cfg.guidance_weight);
            let wq = g.scale(qty, cfg.quantity_weight);
            let partial = g.add(wd, wg)?;
            let total = g.add(partial, wq)?;
            g.backward(total)?;

            for (slot, pid) in grads.iter_mut().zip(&fwd.param_ids) {
                if let Some(grad) = g.grad(*pid) {
                    for (s, gv) in slot.data_mut().iter_mut().zip(grad) {
                        *s += gv * inv_batch;
                    }
                }
            }
            d_acc += g.value(dloss).get(0, 0) * inv_batch;
            g_acc += g.value(bce).get(0, 0) * inv_batch;
            q_acc += g.value(qty).get(0, 0) * inv_batch;
            t_acc += g.value(total).get(0, 0) * inv_batch;
        }

        if !t_acc.is_finite() {
            return Err(Error::Divergence { step, value: t_acc });
        }
        for (param, grad) in student.params_mut().into_iter().zip(&grads) {
            for (p, gv) in param.data_mut().iter_mut().zip(grad.data()) {
                *p -= cfg.learning_rate * gv;
            }
        }
        trace.rows.push(TraceRow {
            step,
            lambda,
            distill: d_acc,
            guidance: g_acc,
            quantity: q_acc,
            total: t_acc,
        });
    }
    Ok(PretrainOutcome { student, trace })
}

/// Mean distillation loss over a corpus at a fixed lambda, no updates.
pub fn eval_distill_loss(
    student: &StudentModel,
    teacher: &TeacherModel,
    corpus: &[Utterance],
    lambda: f64,
    cosine_weight: f64,
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Empty("evaluation corpus".into()));
    }
    let lamctl = LambdaControl::fixed(lambda)?;
    let mut total = 0.0;
    for utt in corpus {
        let mut g = Graph::new();
        let fwd = student.forward(&mut g, &utt.features, &lamctl)?;
        let teacher_layers = teacher.forward(&utt.features)?;
        let mod_alpha = AlphaWeights::new(g.value(fwd.alpha_mod).data().to_vec())?;
        let pooled: Vec<Matrix> = cif::pool_teacher(&teacher_layers, &mod_alpha, &fwd.segmentation)?
            .into_iter()
            .map(|c| c.frames)
            .collect();
        let loss = distill_loss_node(&mut g, &fwd.head_outputs, &pooled, cosine_weight)?;
        total += g.value(loss).get(0, 0);
    }
    Ok(total / corpus.len() as f64)
}

// ── Adaptive compression-rate learning ──────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub head_lr: f64,
    pub theta_lr: f64,
    pub theta_momentum: f64,
    /// Weight of the soft efficiency preference (mean modified alpha mass);
    /// pushes lambda up when the task metric is indifferent.
    pub compress_weight: f64,
    pub inits: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            seed: 42,
            steps: 300,
            batch_size: 8,
            head_lr: 0.5,
            theta_lr: 1e-3,
            theta_momentum: 0.9,
            compress_weight: 0.05,
            inits: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptRun {
    pub lambda_init: f64,
    pub lambda_trajectory: Vec<f64>,
    pub final_lambda: f64,
    pub final_train_loss: f64,
    pub eval_metric: f64,
    pub saturation_warning: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptOutcome {
    pub runs: Vec<AdaptRun>,
    /// Index of the run with the best evaluation metric, mirroring how a
    /// grid search picks its operating point.
    pub best: usize,
}

impl AdaptOutcome {
    pub fn best_run(&self) -> &AdaptRun {
        &self.runs[self.best]
    }
}

struct HeadParams {
    w: Matrix,
    b: Matrix,
}

/// Learn lambda on a downstream task with the student frozen: the classifier
/// head trains by gradient descent, theta by gradient descent with momentum.
/// Each initialization draws its starting compression rate from the
/// pre-training range.
pub fn adapt_lambda(
    student: &StudentModel,
    task: &TaskData,
    cfg: &AdaptConfig,
    lambda_max: f64,
) -> Result<AdaptOutcome> {
    let mut runs = Vec::with_capacity(cfg.inits);
    for init in 0..cfg.inits {
        let run = adapt_single(student, task, cfg, lambda_max, init as u64, true, None)?;
        runs.push(run);
    }
    let best = runs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.eval_metric.total_cmp(&b.1.eval_metric))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(AdaptOutcome { runs, best })
}

/// Head-only training at a grid of fixed lambdas; returns (lambda, metric)
/// per point. The oracle adaptive learning is compared against.
pub fn grid_search_lambda(
    student: &StudentModel,
    task: &TaskData,
    cfg: &AdaptConfig,
    lambda_max: f64,
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    if points < 2 {
        return Err(Error::InvalidArg("grid needs at least 2 points".into()));
    }
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        let lambda = lambda_max * i as f64 / (points - 1) as f64;
        let run = adapt_single(student, task, cfg, lambda_max, i as u64, false, Some(lambda))?;
        out.push((lambda, run.eval_metric));
    }
    Ok(out)
}

fn adapt_single(
    student: &StudentModel,
    task: &TaskData,
    cfg: &AdaptConfig,
    lambda_max: f64,
    salt: u64,
    train_theta: bool,
    fixed_lambda: Option<f64>,
) -> Result<AdaptRun> {
    if task.train.is_empty() || task.eval.is_empty() {
        return Err(Error::Empty("task corpus".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let lambda_init = match fixed_lambda {
        Some(l) => l,
        None => rng.gen_range(0.05 * lambda_max..=0.95 * lambda_max),
    };
    let mut theta = theta_from_lambda(lambda_init, lambda_max);
    let d = student.cfg.model_dim;
    let classes = task.num_classes;
    let s = (6.0 / (d + classes) as f64).sqrt();
    let mut head = HeadParams {
        w: Matrix::from_fn(d, classes, |_, _| rng.gen_range(-s..=s)),
        b: Matrix::zeros(1, classes),
    };
    let mut velocity = 0.0f64;
    let mut trajectory = Vec::with_capacity(cfg.steps);
    let mut train_loss = 0.0;
    let epoch_steps = task.train.len().div_ceil(cfg.batch_size);
    let mut zero_grad_run = 0usize;
    let mut saturation_warning = false;
    let inv_batch = 1.0 / cfg.batch_size as f64;

    for step in 0..cfg.steps {
        let mut dw = Matrix::zeros(d, classes);
        let mut db = Matrix::zeros(1, classes);
        let mut dtheta = 0.0f64;
        let mut loss_acc = 0.0;
        for i in 0..cfg.batch_size {
            let utt = &task.train[(step * cfg.batch_size + i) % task.train.len()];
            let lamctl = match fixed_lambda {
                Some(l) => LambdaControl::fixed(l)?,
                None => LambdaControl::trainable(theta, lambda_max)?,
            };
            let mut g = Graph::new();
            let fwd = student.forward(&mut g, &utt.features, &lamctl)?;
            let wn = g.leaf(head.w.clone());
            let bn = g.leaf(head.b.clone());
            let task_loss = task_loss_node(&mut g, &fwd, wn, bn, utt, task.kind)?;
            let total = if cfg.compress_weight > 0.0 {
                let mass = g.sum(fwd.alpha_mod);
                let frac = g.scale(mass, cfg.compress_weight / utt.features.rows() as f64);
                g.add(task_loss, frac)?
            } else {
                task_loss
            };
            g.backward(total)?;
            accumulate_scaled(&mut dw, g.grad(wn), inv_batch);
            accumulate_scaled(&mut db, g.grad(bn), inv_batch);
            if let Some(t) = fwd.theta {
                if let Some(gt) = g.grad(t) {
                    dtheta += gt[0] * inv_batch;
                }
            }
            loss_acc += g.value(total).get(0, 0) * inv_batch;
        }
        if !loss_acc.is_finite() {
            return Err(Error::Divergence { step, value: loss_acc });
        }
        for (p, gv) in head.w.data_mut().iter_mut().zip(dw.data()) {
            *p -= cfg.head_lr * gv;
        }
        for (p, gv) in head.b.data_mut().iter_mut().zip(db.data()) {
            *p -= cfg.head_lr * gv;
        }
        if train_theta {
            velocity = cfg.theta_momentum * velocity + dtheta;
            theta -= cfg.theta_lr * velocity;
            if dtheta == 0.0 {
                zero_grad_run += 1;
                if zero_grad_run >= epoch_steps {
                    saturation_warning = true;
                }
            } else {
                zero_grad_run = 0;
            }
        }
        let lambda_now = fixed_lambda.unwrap_or_else(|| lambda_from_theta(theta, lambda_max));
        trajectory.push(lambda_now);
        train_loss = loss_acc;
    }

    let final_lambda = fixed_lambda.unwrap_or_else(|| lambda_from_theta(theta, lambda_max));
    let eval_metric = eval_accuracy(student, &head.w, &head.b, task, final_lambda)?;
    Ok(AdaptRun {
        lambda_init,
        lambda_trajectory: trajectory,
        final_lambda,
        final_train_loss: train_loss,
        eval_metric,
        saturation_warning,
    })
}

fn accumulate_scaled(acc: &mut Matrix, grad: Option<&[f64]>, scale: f64) {
    if let Some(gv) = grad {
        for (a, g) in acc.data_mut().iter_mut().zip(gv) {
            *a += g * scale;
        }
    }
}

/// Cross-entropy on the compressed representation. Utterance tasks pool the
/// mixer output to a single mean vector; frame tasks replicate each output
/// frame back over the input frames it covers.
fn task_loss_node(
    g: &mut Graph,
    fwd: &crate::model::ForwardPass,
    head_w: NodeId,
    head_b: NodeId,
    utt: &Utterance,
    kind: TaskKind,
) -> Result<NodeId> {
    match kind {
        TaskKind::Utterance => {
            let label = utt
                .utt_label
                .ok_or_else(|| Error::Config("utterance label missing".into()))?;
            let n = g.value(fwd.mixer_out).rows();
            let ones = g.leaf(Matrix::from_fn(1, n, |_, _| 1.0 / n as f64));
            let pooled = g.matmul(ones, fwd.mixer_out)?;
            let logits = g.matmul(pooled, head_w)?;
            let logits = g.add_row_vec(logits, head_b)?;
            let classes = g.value(head_b).cols();
            cross_entropy_node(g, logits, &[label], classes)
        }
        TaskKind::Frame => {
            let labels = utt
                .frame_labels
                .as_ref()
                .ok_or_else(|| Error::Config("frame labels missing".into()))?;
            let map = fwd.segmentation.frame_to_segment();
            let up = g.gather_rows(fwd.mixer_out, map)?;
            let logits = g.matmul(up, head_w)?;
            let logits = g.add_row_vec(logits, head_b)?;
            let classes = g.value(head_b).cols();
            cross_entropy_node(g, logits, labels, classes)
        }
    }
}

/// Mean negative log softmax probability of the given labels, one per row.
fn cross_entropy_node(
    g: &mut Graph,
    logits: NodeId,
    labels: &[usize],
    classes: usize,
) -> Result<NodeId> {
    let rows = g.value(logits).rows();
    if labels.len() != rows {
        return Err(Error::Length(format!(
            "{} labels for {} logit rows",
            labels.len(),
            rows
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArg(format!("label {bad} out of {classes} classes")));
    }
    let probs = g.softmax_rows(logits);
    let onehot = g.leaf(Matrix::from_fn(rows, classes, |r, c| {
        (labels[r] == c) as i32 as f64
    }));
    let picked = g.mul(probs, onehot)?;
    let ones = g.leaf(Matrix::from_fn(classes, 1, |_, _| 1.0));
    let row_p = g.matmul(picked, ones)?;
    let row_p = g.clamp(row_p, 1e-12, 1.0);
    let logp = g.log(row_p);
    let mean = g.mean(logp);
    Ok(g.scale(mean, -1.0))
}

/// Classification accuracy at a fixed lambda with a trained head.
pub fn eval_accuracy(
    student: &StudentModel,
    head_w: &Matrix,
    head_b: &Matrix,
    task: &TaskData,
    lambda: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for utt in &task.eval {
        let (mixer_out, seg) = student.compress(&utt.features, lambda)?;
        match task.kind {
            TaskKind::Utterance => {
                let n = mixer_out.rows();
                let mean = Matrix::from_fn(1, n, |_, _| 1.0 / n as f64).matmul(&mixer_out)?;
                let logits = mean.matmul(head_w)?.add_row_vec(head_b)?;
                let pred = argmax(logits.row(0));
                total += (Some(pred) == utt.utt_label) as i32 as f64;
            }
            TaskKind::Frame => {
                let labels = utt
                    .frame_labels
                    .as_ref()
                    .ok_or_else(|| Error::Config("frame labels missing".into()))?;
                let map = seg.frame_to_segment();
                let mut correct = 0usize;
                for (t, &k) in map.iter().enumerate() {
                    let row = Matrix::from_vec(1, mixer_out.cols(), mixer_out.row(k).to_vec())?;
                    let logits = row.matmul(head_w)?.add_row_vec(head_b)?;
                    if argmax(logits.row(0)) == labels[t] {
                        correct += 1;
                    }
                }
                total += correct as f64 / map.len() as f64;
            }
        }
    }
    Ok(total / task.eval.len() as f64)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn compressed(values: Vec<f64>, rows: usize, cols: usize) -> CompressedSequence {
        CompressedSequence {
            frames: Matrix::from_vec(rows, cols, values).unwrap(),
            spans: vec![],
        }
    }

    #[test]
    fn distill_identity_has_only_cosine_term() {
        let x = compressed(vec![0.3, -0.7, 1.1, 0.4], 2, 2);
        let loss = distill_loss(&[x.clone()], &[x.clone()], 1.0).unwrap();
        // -log sigmoid(1) per frame
        assert!((loss - 0.3132616875182228).abs() < 1e-12, "loss = {loss}");
        let pure_l1 = distill_loss(&[x.clone()], &[x], 0.0).unwrap();
        assert_eq!(pure_l1, 0.0);
    }

    #[test]
    fn distill_hand_case() {
        let a = compressed(vec![2.0], 1, 1);
        let b = compressed(vec![0.0], 1, 1);
        let loss = distill_loss(&[a], &[b], 0.0).unwrap();
        assert_eq!(loss, 2.0);
    }

    #[test]
    fn distill_shape_mismatch_rejected() {
        let a = compressed(vec![1.0, 2.0], 2, 1);
        let b = compressed(vec![1.0], 1, 1);
        assert!(matches!(
            distill_loss(&[a.clone()], &[b], 0.0),
            Err(Error::Length(_))
        ));
        assert!(matches!(distill_loss(&[a], &[], 0.0), Err(Error::Length(_))));
    }

    #[test]
    fn guidance_perfect_prediction_is_tiny() {
        let targets = GuidanceTargets::new(vec![0, 1, 0, 1]).unwrap();
        let alpha = AlphaWeights::new(vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let bce = guidance_loss(&alpha, &targets, GuidanceMode::BoundaryBce).unwrap();
        assert!(bce <= 1e-6, "bce = {bce}");
    }

    #[test]
    fn guidance_uniform_half_is_ln2() {
        let targets = GuidanceTargets::new(vec![1, 0, 0, 1, 0]).unwrap();
        let alpha = AlphaWeights::new(vec![0.5; 5]).unwrap();
        let bce = guidance_loss(&alpha, &targets, GuidanceMode::BoundaryBce).unwrap();
        assert!((bce - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn quantity_hand_case() {
        let targets = GuidanceTargets::new(vec![0, 1, 0, 1]).unwrap();
        assert_eq!(targets.num_segments(), 2);
        let alpha = AlphaWeights::new(vec![0.4, 0.5, 0.3, 0.6]).unwrap();
        let q = guidance_loss(&alpha, &targets, GuidanceMode::Quantity).unwrap();
        assert!((q - 0.2).abs() < 1e-12);
    }

    #[test]
    fn guidance_both_combines_at_half_weight() {
        let targets = GuidanceTargets::new(vec![0, 1]).unwrap();
        let alpha = AlphaWeights::new(vec![0.3, 0.9]).unwrap();
        let bce = guidance_loss(&alpha, &targets, GuidanceMode::BoundaryBce).unwrap();
        let qty = guidance_loss(&alpha, &targets, GuidanceMode::Quantity).unwrap();
        let both = guidance_loss(&alpha, &targets, GuidanceMode::Both).unwrap();
        assert!((both - (bce + 0.5 * qty)).abs() < 1e-12);
    }

    #[test]
    fn guidance_rejects_bad_targets() {
        assert!(GuidanceTargets::new(vec![]).is_err());
        assert!(GuidanceTargets::new(vec![0, 2]).is_err());
        let targets = GuidanceTargets::new(vec![1, 0]).unwrap();
        let alpha = AlphaWeights::new(vec![0.5; 3]).unwrap();
        assert!(matches!(
            guidance_loss(&alpha, &targets, GuidanceMode::BoundaryBce),
            Err(Error::Length(_))
        ));
    }
}
