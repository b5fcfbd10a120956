//! Toy-scale student and teacher.
//!
//! Student: frame-wise linear encoder -> alpha module (linear + sigmoid) ->
//! lambda modification -> integrate-and-fire pooling -> a short stack of
//! exact-softmax self-attention blocks with feed-forward residuals -> one
//! linear prediction head per distilled teacher layer. At inference the
//! heads are discarded and the mixer output is the compressed
//! representation. Teacher: a frozen seeded encoder producing layer
//! representations at full input length.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphamod::{
    lambda_node_from_theta, modify_alpha_node, LambdaControl, LambdaMode, SampleRange,
};
use crate::checkpoint;
use crate::cif::{self, AlphaWeights, CifOptions, Segmentation};
use crate::diffmath::{Graph, Matrix, NodeId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentConfig {
    pub input_dim: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub mixer_blocks: usize,
    pub distill_heads: usize,
    pub teacher_dim: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig {
            input_dim: 8,
            model_dim: 16,
            ffn_dim: 32,
            mixer_blocks: 2,
            distill_heads: 2,
            teacher_dim: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MixerBlock {
    wq: Matrix,
    bq: Matrix,
    wk: Matrix,
    bk: Matrix,
    wv: Matrix,
    bv: Matrix,
    wo: Matrix,
    bo: Matrix,
    ffn_w1: Matrix,
    ffn_b1: Matrix,
    ffn_w2: Matrix,
    ffn_b2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    w: Matrix,
    b: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub cfg: StudentConfig,
    enc_w1: Matrix,
    enc_b1: Matrix,
    enc_w2: Matrix,
    enc_b2: Matrix,
    alpha_w: Matrix,
    alpha_b: Matrix,
    blocks: Vec<MixerBlock>,
    heads: Vec<Head>,
}

/// Everything the training losses need from one student forward pass.
pub struct ForwardPass {
    pub alpha_raw: NodeId,
    pub alpha_mod: NodeId,
    pub segmentation: Segmentation,
    pub compressed: NodeId,
    pub mixer_out: NodeId,
    pub head_outputs: Vec<NodeId>,
    pub lambda: NodeId,
    pub theta: Option<NodeId>,
    pub lambda_value: f64,
    /// Leaf ids aligned with [`StudentModel::named_params`] order.
    pub param_ids: Vec<NodeId>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-s..=s))
}

impl StudentModel {
    pub fn new_seeded(cfg: StudentConfig, seed: u64) -> StudentModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.model_dim;
        let enc_w1 = xavier(&mut rng, cfg.input_dim, d);
        let enc_b1 = Matrix::zeros(1, d);
        let enc_w2 = xavier(&mut rng, d, d);
        let enc_b2 = Matrix::zeros(1, d);
        let alpha_w = xavier(&mut rng, d, 1);
        let alpha_b = Matrix::zeros(1, 1);
        let blocks = (0..cfg.mixer_blocks)
            .map(|_| MixerBlock {
                wq: xavier(&mut rng, d, d),
                bq: Matrix::zeros(1, d),
                wk: xavier(&mut rng, d, d),
                bk: Matrix::zeros(1, d),
                wv: xavier(&mut rng, d, d),
                bv: Matrix::zeros(1, d),
                wo: xavier(&mut rng, d, d),
                bo: Matrix::zeros(1, d),
                ffn_w1: xavier(&mut rng, d, cfg.ffn_dim),
                ffn_b1: Matrix::zeros(1, cfg.ffn_dim),
                ffn_w2: xavier(&mut rng, cfg.ffn_dim, d),
                ffn_b2: Matrix::zeros(1, d),
            })
            .collect();
        let heads = (0..cfg.distill_heads)
            .map(|_| Head {
                w: xavier(&mut rng, d, cfg.teacher_dim),
                b: Matrix::zeros(1, cfg.teacher_dim),
            })
            .collect();
        StudentModel {
            cfg,
            enc_w1,
            enc_b1,
            enc_w2,
            enc_b2,
            alpha_w,
            alpha_b,
            blocks,
            heads,
        }
    }

    /// Parameters in canonical (checkpoint and update) order.
    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("enc.w1".into(), &self.enc_w1),
            ("enc.b1".into(), &self.enc_b1),
            ("enc.w2".into(), &self.enc_w2),
            ("enc.b2".into(), &self.enc_b2),
            ("alpha.w".into(), &self.alpha_w),
            ("alpha.b".into(), &self.alpha_b),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("mixer.{i}.wq"), &b.wq));
            out.push((format!("mixer.{i}.bq"), &b.bq));
            out.push((format!("mixer.{i}.wk"), &b.wk));
            out.push((format!("mixer.{i}.bk"), &b.bk));
            out.push((format!("mixer.{i}.wv"), &b.wv));
            out.push((format!("mixer.{i}.bv"), &b.bv));
            out.push((format!("mixer.{i}.wo"), &b.wo));
            out.push((format!("mixer.{i}.bo"), &b.bo));
            out.push((format!("mixer.{i}.ffn_w1"), &b.ffn_w1));
            out.push((format!("mixer.{i}.ffn_b1"), &b.ffn_b1));
            out.push((format!("mixer.{i}.ffn_w2"), &b.ffn_w2));
            out.push((format!("mixer.{i}.ffn_b2"), &b.ffn_b2));
        }
        for (i, h) in self.heads.iter().enumerate() {
            out.push((format!("head.{i}.w"), &h.w));
            out.push((format!("head.{i}.b"), &h.b));
        }
        out
    }

    /// Mutable views in the same order as [`Self::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = vec![
            &mut self.enc_w1,
            &mut self.enc_b1,
            &mut self.enc_w2,
            &mut self.enc_b2,
            &mut self.alpha_w,
            &mut self.alpha_b,
        ];
        for b in &mut self.blocks {
            out.push(&mut b.wq);
            out.push(&mut b.bq);
            out.push(&mut b.wk);
            out.push(&mut b.bk);
            out.push(&mut b.wv);
            out.push(&mut b.bv);
            out.push(&mut b.wo);
            out.push(&mut b.bo);
            out.push(&mut b.ffn_w1);
            out.push(&mut b.ffn_b1);
            out.push(&mut b.ffn_w2);
            out.push(&mut b.ffn_b2);
        }
        for h in &mut self.heads {
            out.push(&mut h.w);
            out.push(&mut h.b);
        }
        out
    }

    pub fn num_scalar_params(&self) -> usize {
        self.named_params().iter().map(|(_, m)| m.numel()).sum()
    }

    /// Full pre-training pipeline on the tape.
    pub fn forward(
        &self,
        g: &mut Graph,
        features: &Matrix,
        lam: &LambdaControl,
    ) -> Result<ForwardPass> {
        if features.cols() != self.cfg.input_dim {
            return Err(Error::Dimension(format!(
                "features dim {} vs model input dim {}",
                features.cols(),
                self.cfg.input_dim
            )));
        }
        let mut param_ids = Vec::new();
        let mut leaf = |g: &mut Graph, m: &Matrix| {
            let id = g.leaf(m.clone());
            param_ids.push(id);
            id
        };
        let enc_w1 = leaf(g, &self.enc_w1);
        let enc_b1 = leaf(g, &self.enc_b1);
        let enc_w2 = leaf(g, &self.enc_w2);
        let enc_b2 = leaf(g, &self.enc_b2);
        let alpha_w = leaf(g, &self.alpha_w);
        let alpha_b = leaf(g, &self.alpha_b);
        let block_ids: Vec<[NodeId; 12]> = self
            .blocks
            .iter()
            .map(|b| {
                [
                    leaf(g, &b.wq),
                    leaf(g, &b.bq),
                    leaf(g, &b.wk),
                    leaf(g, &b.bk),
                    leaf(g, &b.wv),
                    leaf(g, &b.bv),
                    leaf(g, &b.wo),
                    leaf(g, &b.bo),
                    leaf(g, &b.ffn_w1),
                    leaf(g, &b.ffn_b1),
                    leaf(g, &b.ffn_w2),
                    leaf(g, &b.ffn_b2),
                ]
            })
            .collect();
        let head_ids: Vec<[NodeId; 2]> = self
            .heads
            .iter()
            .map(|h| [leaf(g, &h.w), leaf(g, &h.b)])
            .collect();

        let x = g.leaf(features.clone());
        let h = encoder_apply(g, x, enc_w1, enc_b1, enc_w2, enc_b2)?;
        let alpha_raw = alpha_apply(g, h, alpha_w, alpha_b)?;

        let (lambda, theta) = match lam.mode {
            LambdaMode::Trainable { theta } => {
                let t = g.scalar(theta);
                (lambda_node_from_theta(g, t, lam.lambda_max), Some(t))
            }
            _ => (g.scalar(lam.value), None),
        };
        let lambda_value = g.value(lambda).get(0, 0);

        let alpha_mod = modify_alpha_node(g, alpha_raw, lambda)?;
        let mod_weights = AlphaWeights::new(g.value(alpha_mod).data().to_vec())?;
        let segmentation = cif::integrate_and_fire(&mod_weights, &CifOptions::default())?;
        let compressed = cif::pool_node(g, h, alpha_mod, &segmentation)?;

        let mut y = compressed;
        for ids in &block_ids {
            y = mixer_block_apply(g, y, ids, self.cfg.model_dim)?;
        }
        let mixer_out = y;

        let head_outputs = head_ids
            .iter()
            .map(|[w, b]| {
                let p = g.matmul(mixer_out, *w)?;
                g.add_row_vec(p, *b)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(ForwardPass {
            alpha_raw,
            alpha_mod,
            segmentation,
            compressed,
            mixer_out,
            head_outputs,
            lambda,
            theta,
            lambda_value,
            param_ids,
        })
    }

    /// Inference path with the prediction heads discarded: features to
    /// compressed representation (mixer output).
    pub fn compress(&self, features: &Matrix, lambda: f64) -> Result<(Matrix, Segmentation)> {
        let mut g = Graph::new();
        let fwd = self.forward(&mut g, features, &LambdaControl::fixed(lambda)?)?;
        Ok((g.value(fwd.mixer_out).clone(), fwd.segmentation))
    }

    /// Encoder alone on a fresh set of leaves (profiling and tests).
    pub fn encoder_forward(&self, g: &mut Graph, features: &Matrix) -> Result<NodeId> {
        let x = g.leaf(features.clone());
        let w1 = g.leaf(self.enc_w1.clone());
        let b1 = g.leaf(self.enc_b1.clone());
        let w2 = g.leaf(self.enc_w2.clone());
        let b2 = g.leaf(self.enc_b2.clone());
        encoder_apply(g, x, w1, b1, w2, b2)
    }

    /// Alpha module alone: one sigmoid weight per frame of `encoder_out`.
    pub fn alpha_forward(&self, g: &mut Graph, encoder_out: NodeId) -> Result<NodeId> {
        let w = g.leaf(self.alpha_w.clone());
        let b = g.leaf(self.alpha_b.clone());
        alpha_apply(g, encoder_out, w, b)
    }

    /// Mixer stack alone on a fresh set of leaves (profiling and tests).
    pub fn mixer_forward(&self, g: &mut Graph, input: NodeId) -> Result<NodeId> {
        let mut y = input;
        for b in &self.blocks {
            let ids = [
                g.leaf(b.wq.clone()),
                g.leaf(b.bq.clone()),
                g.leaf(b.wk.clone()),
                g.leaf(b.bk.clone()),
                g.leaf(b.wv.clone()),
                g.leaf(b.bv.clone()),
                g.leaf(b.wo.clone()),
                g.leaf(b.bo.clone()),
                g.leaf(b.ffn_w1.clone()),
                g.leaf(b.ffn_b1.clone()),
                g.leaf(b.ffn_w2.clone()),
                g.leaf(b.ffn_b2.clone()),
            ];
            y = mixer_block_apply(g, y, &ids, self.cfg.model_dim)?;
        }
        Ok(y)
    }

    pub fn save_checkpoint(
        &self,
        path: &Path,
        teacher: &TeacherModel,
        range: &SampleRange,
    ) -> Result<()> {
        let mut blocks: Vec<(String, Matrix)> = self
            .named_params()
            .into_iter()
            .map(|(n, m)| (n, m.clone()))
            .collect();
        for (n, m) in teacher.named_params() {
            blocks.push((n, m.clone()));
        }
        let c = &self.cfg;
        blocks.push((
            "meta.dims".into(),
            Matrix::from_vec(
                1,
                6,
                vec![
                    c.input_dim as f64,
                    c.model_dim as f64,
                    c.ffn_dim as f64,
                    c.mixer_blocks as f64,
                    c.distill_heads as f64,
                    c.teacher_dim as f64,
                ],
            )?,
        ));
        blocks.push((
            "meta.lambda_range".into(),
            Matrix::from_vec(1, 2, vec![range.low, range.high])?,
        ));
        checkpoint::save(path, &blocks)
    }

    pub fn load_checkpoint(path: &Path) -> Result<(StudentModel, TeacherModel, SampleRange)> {
        let blocks = checkpoint::load(path)?;
        let get = |name: &str| -> Result<&Matrix> {
            blocks
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m)
                .ok_or_else(|| Error::Config(format!("checkpoint missing block {name}")))
        };
        let dims = get("meta.dims")?;
        if dims.numel() != 6 {
            return Err(Error::Config("meta.dims must hold 6 values".into()));
        }
        let cfg = StudentConfig {
            input_dim: dims.data()[0] as usize,
            model_dim: dims.data()[1] as usize,
            ffn_dim: dims.data()[2] as usize,
            mixer_blocks: dims.data()[3] as usize,
            distill_heads: dims.data()[4] as usize,
            teacher_dim: dims.data()[5] as usize,
        };
        let range_m = get("meta.lambda_range")?;
        if range_m.numel() != 2 {
            return Err(Error::Config("meta.lambda_range must hold 2 values".into()));
        }
        let range = SampleRange::new(range_m.data()[0], range_m.data()[1])?;

        let mut student = StudentModel::new_seeded(cfg, 0);
        let names: Vec<String> = student.named_params().iter().map(|(n, _)| n.clone()).collect();
        for (name, slot) in names.iter().zip(student.params_mut()) {
            let m = get(name)?;
            if (m.rows(), m.cols()) != (slot.rows(), slot.cols()) {
                return Err(Error::Config(format!(
                    "checkpoint block {name} has shape {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    slot.rows(),
                    slot.cols()
                )));
            }
            *slot = m.clone();
        }

        let tcfg = TeacherConfig {
            input_dim: cfg.input_dim,
            dim: cfg.teacher_dim,
            layers: cfg.distill_heads,
        };
        let mut teacher = TeacherModel::new_seeded(tcfg, 0);
        let tnames: Vec<String> = teacher.named_params().iter().map(|(n, _)| n.clone()).collect();
        for (name, slot) in tnames.iter().zip(teacher.params_mut()) {
            let m = get(name)?;
            if (m.rows(), m.cols()) != (slot.rows(), slot.cols()) {
                return Err(Error::Config(format!("checkpoint block {name} shape mismatch")));
            }
            *slot = m.clone();
        }
        Ok((student, teacher, range))
    }
}

fn encoder_apply(
    g: &mut Graph,
    x: NodeId,
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
) -> Result<NodeId> {
    let h1 = g.matmul(x, w1)?;
    let h1 = g.add_row_vec(h1, b1)?;
    let h1 = g.tanh(h1);
    let h2 = g.matmul(h1, w2)?;
    let h2 = g.add_row_vec(h2, b2)?;
    Ok(g.tanh(h2))
}

fn alpha_apply(g: &mut Graph, h: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let z = g.matmul(h, w)?;
    let z = g.add_row_vec(z, b)?;
    Ok(g.sigmoid(z))
}

fn mixer_block_apply(
    g: &mut Graph,
    y: NodeId,
    ids: &[NodeId; 12],
    model_dim: usize,
) -> Result<NodeId> {
    let [wq, bq, wk, bk, wv, bv, wo, bo, fw1, fb1, fw2, fb2] = *ids;
    let q = g.matmul(y, wq)?;
    let q = g.add_row_vec(q, bq)?;
    let k = g.matmul(y, wk)?;
    let k = g.add_row_vec(k, bk)?;
    let v = g.matmul(y, wv)?;
    let v = g.add_row_vec(v, bv)?;
    let scores = g.matmul_tb(q, k)?;
    let scores = g.scale(scores, 1.0 / (model_dim as f64).sqrt());
    let attn = g.softmax_rows(scores);
    let ctx = g.matmul(attn, v)?;
    let proj = g.matmul(ctx, wo)?;
    let proj = g.add_row_vec(proj, bo)?;
    let y = g.add(y, proj)?;
    let hidden = g.matmul(y, fw1)?;
    let hidden = g.add_row_vec(hidden, fb1)?;
    let hidden = g.tanh(hidden);
    let ffn = g.matmul(hidden, fw2)?;
    let ffn = g.add_row_vec(ffn, fb2)?;
    g.add(y, ffn)
}

// ── Teacher ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub input_dim: usize,
    pub dim: usize,
    pub layers: usize,
}

/// Frozen after construction; deterministic given input.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel {
    pub cfg: TeacherConfig,
    enc_w: Matrix,
    enc_b: Matrix,
    layer_w: Vec<Matrix>,
    layer_b: Vec<Matrix>,
}

impl TeacherModel {
    pub fn new_seeded(cfg: TeacherConfig, seed: u64) -> TeacherModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc_w = xavier(&mut rng, cfg.input_dim, cfg.dim);
        let enc_b = Matrix::zeros(1, cfg.dim);
        let mut layer_w = Vec::new();
        let mut layer_b = Vec::new();
        for _ in 0..cfg.layers {
            layer_w.push(xavier(&mut rng, cfg.dim, cfg.dim));
            layer_b.push(Matrix::zeros(1, cfg.dim));
        }
        TeacherModel { cfg, enc_w, enc_b, layer_w, layer_b }
    }

    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("teacher.enc.w".into(), &self.enc_w),
            ("teacher.enc.b".into(), &self.enc_b),
        ];
        for i in 0..self.layer_w.len() {
            out.push((format!("teacher.layer.{i}.w"), &self.layer_w[i]));
            out.push((format!("teacher.layer.{i}.b"), &self.layer_b[i]));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = vec![&mut self.enc_w, &mut self.enc_b];
        for (w, b) in self.layer_w.iter_mut().zip(self.layer_b.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Layer representations, all at full input length. Plain arithmetic:
    /// nothing is recorded, no gradient can flow here.
    pub fn forward(&self, features: &Matrix) -> Result<Vec<Matrix>> {
        if features.cols() != self.cfg.input_dim {
            return Err(Error::Dimension(format!(
                "teacher input dim {} vs {}",
                features.cols(),
                self.cfg.input_dim
            )));
        }
        let mut h = features
            .matmul(&self.enc_w)?
            .add_row_vec(&self.enc_b)?
            .map(f64::tanh);
        let mut layers = Vec::with_capacity(self.cfg.layers);
        for (w, b) in self.layer_w.iter().zip(&self.layer_b) {
            h = h.matmul(w)?.add_row_vec(b)?.map(f64::tanh);
            layers.push(h.clone());
        }
        Ok(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphamod::LAMBDA_MAX;

    fn toy_features(t: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(t, d, |_, _| rng.gen_range(-1.0..=1.0))
    }

    #[test]
    fn zero_alpha_params_give_half_weights() {
        let cfg = StudentConfig::default();
        let mut student = StudentModel::new_seeded(cfg, 3);
        student.alpha_w = Matrix::zeros(cfg.model_dim, 1);
        student.alpha_b = Matrix::zeros(1, 1);
        let feats = toy_features(6, cfg.input_dim, 1);
        let mut g = Graph::new();
        let fwd = student
            .forward(&mut g, &feats, &LambdaControl::fixed(1.0).unwrap())
            .unwrap();
        for &v in g.value(fwd.alpha_raw).data() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn saturated_negative_bias_forces_single_fire() {
        let cfg = StudentConfig::default();
        let mut student = StudentModel::new_seeded(cfg, 3);
        student.alpha_b = Matrix::scalar(-40.0);
        let feats = toy_features(6, cfg.input_dim, 2);
        let mut g = Graph::new();
        let fwd = student
            .forward(&mut g, &feats, &LambdaControl::fixed(1.0).unwrap())
            .unwrap();
        assert_eq!(fwd.segmentation.num_segments(), 1);
        assert!(fwd.segmentation.events[0].is_tail);
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = StudentConfig::default();
        let student = StudentModel::new_seeded(cfg, 7);
        let feats = toy_features(10, cfg.input_dim, 4);
        let lam = LambdaControl::fixed(0.8).unwrap();
        let mut g1 = Graph::new();
        let f1 = student.forward(&mut g1, &feats, &lam).unwrap();
        let mut g2 = Graph::new();
        let f2 = student.forward(&mut g2, &feats, &lam).unwrap();
        assert_eq!(g1.value(f1.mixer_out), g2.value(f2.mixer_out));
        assert_eq!(
            StudentModel::new_seeded(cfg, 7).named_params(),
            student.named_params()
        );
    }

    #[test]
    fn lambda_endpoints_control_output_length() {
        let cfg = StudentConfig::default();
        let student = StudentModel::new_seeded(cfg, 11);
        let t = 12;
        let feats = toy_features(t, cfg.input_dim, 5);

        let mut g0 = Graph::new();
        let f0 = student
            .forward(&mut g0, &feats, &LambdaControl::fixed(0.0).unwrap())
            .unwrap();
        assert_eq!(f0.segmentation.num_segments(), t);
        for h in &f0.head_outputs {
            assert_eq!(g0.value(*h).rows(), t);
        }

        let mut g2 = Graph::new();
        let f2 = student
            .forward(&mut g2, &feats, &LambdaControl::fixed(LAMBDA_MAX).unwrap())
            .unwrap();
        assert_eq!(f2.segmentation.num_segments(), 1);
        for h in &f2.head_outputs {
            assert_eq!(g2.value(*h).rows(), 1);
        }
    }

    #[test]
    fn lambda_one_equals_unmodified_pipeline() {
        let cfg = StudentConfig::default();
        let student = StudentModel::new_seeded(cfg, 13);
        let feats = toy_features(9, cfg.input_dim, 6);
        let mut g = Graph::new();
        let fwd = student
            .forward(&mut g, &feats, &LambdaControl::fixed(1.0).unwrap())
            .unwrap();
        // At lambda = 1 the modified weights are the raw weights, bit for bit.
        assert_eq!(fwd.alpha_raw, fwd.alpha_mod);

        // And the pooled output matches pooling directly on raw alpha.
        let alpha = AlphaWeights::new(g.value(fwd.alpha_raw).data().to_vec()).unwrap();
        let seg = cif::integrate_and_fire(&alpha, &CifOptions::default()).unwrap();
        let mut ge = Graph::new();
        let enc = student.encoder_forward(&mut ge, &feats).unwrap();
        let pooled = cif::pool_segments(
            &ge.value(enc).clone(),
            &alpha,
            &seg,
        )
        .unwrap();
        let got = g.value(fwd.compressed);
        assert_eq!(pooled.frames.rows(), got.rows());
        for (a, b) in pooled.frames.data().iter().zip(got.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn head_count_matches_teacher_layers() {
        let cfg = StudentConfig::default();
        let student = StudentModel::new_seeded(cfg, 17);
        let teacher = TeacherModel::new_seeded(
            TeacherConfig {
                input_dim: cfg.input_dim,
                dim: cfg.teacher_dim,
                layers: cfg.distill_heads,
            },
            99,
        );
        let feats = toy_features(8, cfg.input_dim, 7);
        let layers = teacher.forward(&feats).unwrap();
        assert_eq!(layers.len(), cfg.distill_heads);
        for l in &layers {
            assert_eq!(l.rows(), 8);
            assert_eq!(l.cols(), cfg.teacher_dim);
        }
        // Frozen determinism
        assert_eq!(layers, teacher.forward(&feats).unwrap());
        // Seeded reproducibility
        let again = TeacherModel::new_seeded(teacher.cfg, 99);
        assert_eq!(again, teacher);
        let _ = student;
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = StudentConfig::default();
        let student = StudentModel::new_seeded(cfg, 21);
        let teacher = TeacherModel::new_seeded(
            TeacherConfig {
                input_dim: cfg.input_dim,
                dim: cfg.teacher_dim,
                layers: cfg.distill_heads,
            },
            22,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("student.ofac");
        let range = SampleRange::extended();
        student.save_checkpoint(&path, &teacher, &range).unwrap();
        let (s2, t2, r2) = StudentModel::load_checkpoint(&path).unwrap();
        assert_eq!(s2, student);
        assert_eq!(t2, teacher);
        assert_eq!(r2, range);
    }
}
