//! Analytic multiply-accumulate cost model for the mixer stack plus the
//! alpha module, and frame-period bookkeeping for lambda sweeps.
//!
//! Per layer at sequence length n: 4nd^2 for the q/k/v/o projections, 2n^2 d
//! for attention scores and mixing, 2ndf for the feed-forward pair. The
//! alpha module always runs at full input length because it precedes
//! subsampling.

use serde::{Deserialize, Serialize};

use crate::alphamod::SampleRange;
use crate::cif::AlphaWeights;
use crate::data_io::Utterance;
use crate::diffmath::Graph;
use crate::error::{Error, Result};
use crate::model::{StudentConfig, StudentModel, TeacherModel};
use crate::training::distill_loss_node;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacsConfig {
    pub hidden_dim: u64,
    pub ffn_dim: u64,
    pub num_layers: u64,
    /// Per-frame cost of the alpha module. The reference configuration
    /// charges a kernel-3 convolution over the hidden width: 3 d^2.
    pub alpha_macs_per_frame: u64,
    pub base_period_ms: f64,
}

impl Default for MacsConfig {
    fn default() -> Self {
        MacsConfig::reference()
    }
}

impl MacsConfig {
    /// Documented reference scale: d = 768, f = 3072, 2 layers, 20 ms frames.
    pub fn reference() -> MacsConfig {
        MacsConfig {
            hidden_dim: 768,
            ffn_dim: 3072,
            num_layers: 2,
            alpha_macs_per_frame: 3 * 768 * 768,
            base_period_ms: 20.0,
        }
    }

    /// Cost model matching the toy student exactly: its alpha module is a
    /// single frame-wise linear, d MACs per frame.
    pub fn from_student(cfg: &StudentConfig, base_period_ms: f64) -> MacsConfig {
        MacsConfig {
            hidden_dim: cfg.model_dim as u64,
            ffn_dim: cfg.ffn_dim as u64,
            num_layers: cfg.mixer_blocks as u64,
            alpha_macs_per_frame: cfg.model_dim as u64,
            base_period_ms,
        }
    }

    fn layer_quadratic(&self, n: u64) -> u64 {
        2 * n * n * self.hidden_dim
    }

    fn layer_linear(&self, n: u64) -> u64 {
        4 * n * self.hidden_dim * self.hidden_dim
    }

    fn layer_ffn(&self, n: u64) -> u64 {
        2 * n * self.hidden_dim * self.ffn_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacsReport {
    pub attention_quadratic: u64,
    pub attention_linear: u64,
    pub ffn: u64,
    pub alpha_module: u64,
    pub total: u64,
    pub reduction: f64,
}

/// Cost of running the mixer stack at length `n` with the alpha module
/// charged at the same length.
pub fn transformer_macs(n: u64, cfg: &MacsConfig) -> MacsReport {
    let attention_quadratic = cfg.num_layers * cfg.layer_quadratic(n);
    let attention_linear = cfg.num_layers * cfg.layer_linear(n);
    let ffn = cfg.num_layers * cfg.layer_ffn(n);
    let alpha_module = n * cfg.alpha_macs_per_frame;
    MacsReport {
        attention_quadratic,
        attention_linear,
        ffn,
        alpha_module,
        total: attention_quadratic + attention_linear + ffn + alpha_module,
        reduction: 0.0,
    }
}

/// Compressed-run cost breakdown against the uncompressed baseline. The
/// alpha module is charged at the full base length in both.
pub fn reduction_report(n_base: u64, n_comp: u64, cfg: &MacsConfig) -> Result<MacsReport> {
    if n_comp > n_base || n_base == 0 {
        return Err(Error::InvalidArg(format!(
            "compressed length {n_comp} exceeds base length {n_base}"
        )));
    }
    let base_total = transformer_macs(n_base, cfg).total;
    let attention_quadratic = cfg.num_layers * cfg.layer_quadratic(n_comp);
    let attention_linear = cfg.num_layers * cfg.layer_linear(n_comp);
    let ffn = cfg.num_layers * cfg.layer_ffn(n_comp);
    let alpha_module = n_base * cfg.alpha_macs_per_frame;
    let total = attention_quadratic + attention_linear + ffn + alpha_module;
    Ok(MacsReport {
        attention_quadratic,
        attention_linear,
        ffn,
        alpha_module,
        total,
        reduction: 1.0 - total as f64 / base_total as f64,
    })
}

/// Fractional MACs saved by running at `n_comp` instead of `n_base`.
pub fn macs_reduction(n_base: u64, n_comp: u64, cfg: &MacsConfig) -> Result<f64> {
    Ok(reduction_report(n_base, n_comp, cfg)?.reduction)
}

/// Milliseconds of input represented by one output frame.
pub fn frame_period(input_frames: usize, fires: usize, base_period_ms: f64) -> Result<f64> {
    if fires == 0 {
        return Err(Error::InvalidArg("frame_period needs at least one fire".into()));
    }
    Ok(base_period_ms * input_frames as f64 / fires as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub frame_period_ms: f64,
    pub mean_fires: f64,
    pub loss: f64,
    pub macs_reduction: f64,
    pub extrapolated: bool,
}

/// Evaluate the student over the corpus at each lambda, without updates.
/// Rows come back sorted by lambda; values outside `pretrain_range` are
/// flagged as extrapolated.
pub fn sweep(
    student: &StudentModel,
    teacher: &TeacherModel,
    corpus: &[Utterance],
    lambdas: &[f64],
    macs_cfg: &MacsConfig,
    pretrain_range: Option<&SampleRange>,
) -> Result<Vec<SweepRow>> {
    if corpus.is_empty() {
        return Err(Error::Empty("sweep corpus".into()));
    }
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(sorted.len());
    for &lambda in &sorted {
        let lamctl = crate::alphamod::LambdaControl::fixed(lambda)?;
        let (mut period_acc, mut fires_acc, mut loss_acc, mut red_acc) = (0.0, 0.0, 0.0, 0.0);
        for utt in corpus {
            let mut g = Graph::new();
            let fwd = student.forward(&mut g, &utt.features, &lamctl)?;
            let teacher_layers = teacher.forward(&utt.features)?;
            let mod_alpha = AlphaWeights::new(g.value(fwd.alpha_mod).data().to_vec())?;
            let pooled: Vec<_> =
                crate::cif::pool_teacher(&teacher_layers, &mod_alpha, &fwd.segmentation)?
                    .into_iter()
                    .map(|c| c.frames)
                    .collect();
            let loss = distill_loss_node(&mut g, &fwd.head_outputs, &pooled, 1.0)?;
            let t_len = utt.features.rows();
            let fires = fwd.segmentation.num_segments();
            period_acc += frame_period(t_len, fires, utt.frame_period_ms)?;
            fires_acc += fires as f64;
            loss_acc += g.value(loss).get(0, 0);
            red_acc += macs_reduction(t_len as u64, fires as u64, macs_cfg)?;
        }
        let n = corpus.len() as f64;
        rows.push(SweepRow {
            lambda,
            frame_period_ms: period_acc / n,
            mean_fires: fires_acc / n,
            loss: loss_acc / n,
            macs_reduction: red_acc / n,
            extrapolated: pretrain_range.map(|r| !r.contains(lambda)).unwrap_or(false),
        });
    }
    Ok(rows)
}

/// CSV per the sweep interface, with a trailing flag column marking rows
/// evaluated outside the pre-training range.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda,frame_period_ms,mean_fires,loss,macs_reduction,extrapolated\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.lambda,
            r.frame_period_ms,
            r.mean_fires,
            r.loss,
            r.macs_reduction,
            r.extrapolated as u8
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_formula_case() {
        // n=1, d=1, f=1, L=1, alpha cost 0: 4 + 2 + 2 = 8 MACs.
        let cfg = MacsConfig {
            hidden_dim: 1,
            ffn_dim: 1,
            num_layers: 1,
            alpha_macs_per_frame: 0,
            base_period_ms: 20.0,
        };
        let r = transformer_macs(1, &cfg);
        assert_eq!(r.total, 8);
        assert_eq!(r.attention_linear, 4);
        assert_eq!(r.attention_quadratic, 2);
        assert_eq!(r.ffn, 2);
    }

    #[test]
    fn polynomial_scaling() {
        let cfg = MacsConfig {
            hidden_dim: 16,
            ffn_dim: 32,
            num_layers: 1,
            alpha_macs_per_frame: 0,
            base_period_ms: 20.0,
        };
        let a = transformer_macs(10, &cfg);
        let b = transformer_macs(20, &cfg);
        assert_eq!(b.attention_quadratic, 4 * a.attention_quadratic);
        assert_eq!(b.attention_linear, 2 * a.attention_linear);
        assert_eq!(b.ffn, 2 * a.ffn);
    }

    #[test]
    fn components_sum_to_total() {
        let cfg = MacsConfig::reference();
        for n in [1u64, 5, 111, 500] {
            let r = transformer_macs(n, &cfg);
            assert_eq!(
                r.total,
                r.attention_quadratic + r.attention_linear + r.ffn + r.alpha_module
            );
        }
    }

    #[test]
    fn reference_reductions_near_reported_values() {
        let cfg = MacsConfig::reference();
        let n_base = 500u64; // ten seconds at 20 ms
        let n90 = (n_base as f64 * 20.0 / 90.0).round() as u64;
        let n960 = (n_base as f64 * 20.0 / 960.0).round() as u64;
        let r90 = macs_reduction(n_base, n90, &cfg).unwrap();
        let r960 = macs_reduction(n_base, n960, &cfg).unwrap();
        assert!((r90 - 0.687).abs() < 0.05, "20->90ms reduction {r90}");
        assert!((r960 - 0.906).abs() < 0.05, "20->960ms reduction {r960}");
    }

    #[test]
    fn reduction_edge_cases() {
        let cfg = MacsConfig::reference();
        assert_eq!(macs_reduction(500, 500, &cfg).unwrap(), 0.0);
        assert!(macs_reduction(10, 20, &cfg).is_err());
        // Monotone as the compressed length shrinks.
        let mut prev = -1.0;
        for n in (1..=500).rev().step_by(25) {
            let r = macs_reduction(500, n, &cfg).unwrap();
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn frame_period_cases() {
        assert_eq!(frame_period(500, 500, 20.0).unwrap(), 20.0);
        let p = frame_period(500, 111, 20.0).unwrap();
        assert!((p - 90.09009009009009).abs() < 1e-9);
        assert_eq!(frame_period(48, 1, 20.0).unwrap(), 960.0);
        assert!(frame_period(10, 0, 20.0).is_err());
        // Algebraic inverse within rounding.
        let back = p * 111.0 / 500.0;
        assert!((back - 20.0).abs() < 1e-12);
    }
}
