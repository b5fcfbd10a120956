//! Continuous Integrate-and-Fire segmentation and weighted pooling.
//!
//! A weight sequence alpha is scanned left to right; an output frame fires
//! whenever the running accumulator crosses the threshold. The frame at each
//! crossing is split: `left_weight` completes the current segment, the rest
//! carries into the next. Each output frame is the alpha-weighted sum of its
//! segment, with no normalization (a full segment's weights sum to the
//! threshold).

use crate::diffmath::{Graph, Matrix, NodeId};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 1.0;
pub const DEFAULT_TAIL_THRESHOLD: f64 = 0.5;
pub const DEFAULT_EPS: f64 = 1e-9;

/// Per-frame weights in [0, 1] (post-sigmoid range).
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaWeights {
    values: Vec<f64>,
}

impl AlphaWeights {
    /// Validates finiteness and the [0, 1] range. Values within 1e-9 of the
    /// range (rounding dust from upstream arithmetic) are clamped in.
    pub fn new(values: Vec<f64>) -> Result<AlphaWeights> {
        if values.is_empty() {
            return Err(Error::Empty("alpha weights".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("alpha weights".into()));
        }
        if let Some(&bad) = values.iter().find(|&&v| !(-1e-9..=1.0 + 1e-9).contains(&v)) {
            return Err(Error::InvalidArg(format!(
                "alpha weight {bad} outside [0, 1]"
            )));
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(AlphaWeights { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// One firing of the integrator.
///
/// For a regular event, `left_weight` is the portion of the boundary frame's
/// alpha that completes the accumulator to the threshold; the remainder
/// carries into the next segment. For a tail or forced event, `left_weight`
/// holds the entire remaining accumulation.
#[derive(Debug, Clone, PartialEq)]
pub struct FireEvent {
    pub fire_frame: usize,
    pub left_weight: f64,
    pub is_tail: bool,
}

/// One output frame's source range with per-frame effective weights.
/// `start..=end` are input frame indices; `weights[i]` belongs to frame
/// `start + i`. Adjacent spans overlap at split boundary frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpan {
    pub start: usize,
    pub end: usize,
    pub weights: Vec<f64>,
}

impl SegmentSpan {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Firing scan options.
#[derive(Debug, Clone, Copy)]
pub struct CifOptions {
    pub threshold: f64,
    pub tail_threshold: f64,
    pub eps: f64,
}

impl Default for CifOptions {
    fn default() -> Self {
        CifOptions {
            threshold: DEFAULT_THRESHOLD,
            tail_threshold: DEFAULT_TAIL_THRESHOLD,
            eps: DEFAULT_EPS,
        }
    }
}

/// The result of [`integrate_and_fire`]: events plus the weight spans that
/// partition the input frames (boundary frames split by weight).
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub events: Vec<FireEvent>,
    pub spans: Vec<SegmentSpan>,
    pub source_length: usize,
    pub threshold: f64,
}

impl Segmentation {
    pub fn num_segments(&self) -> usize {
        self.events.len()
    }

    /// Discrete view of the segmentation for tape replay: positions only.
    pub fn layout(&self) -> CifLayout {
        CifLayout {
            source_len: self.source_length,
            threshold: self.threshold,
            events: self
                .events
                .iter()
                .map(|e| CifEventPos { frame: e.fire_frame, is_tail: e.is_tail })
                .collect(),
        }
    }

    /// For each input frame, the index of the output frame it contributes
    /// the most weight to (earlier segment wins ties).
    pub fn frame_to_segment(&self) -> Vec<usize> {
        let mut best = vec![(0usize, -1.0f64); self.source_length];
        for (k, span) in self.spans.iter().enumerate() {
            for (i, &w) in span.weights.iter().enumerate() {
                let t = span.start + i;
                if w > best[t].1 {
                    best[t] = (k, w);
                }
            }
        }
        best.into_iter().map(|(k, _)| k).collect()
    }
}

/// Event positions without weights; the piecewise-constant part of a
/// segmentation that the backward pass treats as fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct CifLayout {
    pub source_len: usize,
    pub threshold: f64,
    pub events: Vec<CifEventPos>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CifEventPos {
    pub frame: usize,
    pub is_tail: bool,
}

/// Scan the alpha sequence, firing whenever the accumulator reaches the
/// threshold (within `eps`). A residual of at least `tail_threshold` fires a
/// final tail frame; an otherwise empty result fires one forced event
/// spanning the whole utterance.
pub fn integrate_and_fire(alpha: &AlphaWeights, opts: &CifOptions) -> Result<Segmentation> {
    if opts.threshold <= 0.0 {
        return Err(Error::InvalidArg(format!(
            "threshold {} must be positive",
            opts.threshold
        )));
    }
    let values = alpha.values();
    let t_len = values.len();
    let mut events = Vec::new();
    let mut acc = 0.0f64;
    for (t, &a) in values.iter().enumerate() {
        if acc + a >= opts.threshold - opts.eps {
            let left = (opts.threshold - acc).clamp(0.0, a);
            events.push(FireEvent { fire_frame: t, left_weight: left, is_tail: false });
            acc = a - left;
        } else {
            acc += a;
        }
    }
    if acc >= opts.tail_threshold && !events.is_empty() {
        events.push(FireEvent { fire_frame: t_len - 1, left_weight: acc, is_tail: true });
    }
    if events.is_empty() {
        // No crossing anywhere: force a single event over the whole utterance.
        events.push(FireEvent { fire_frame: t_len - 1, left_weight: acc, is_tail: true });
    }
    let layout = CifLayout {
        source_len: t_len,
        threshold: opts.threshold,
        events: events
            .iter()
            .map(|e| CifEventPos { frame: e.fire_frame, is_tail: e.is_tail })
            .collect(),
    };
    let spans = spans_for_layout(values, &layout);
    Ok(Segmentation {
        events,
        spans,
        source_length: t_len,
        threshold: opts.threshold,
    })
}

/// Number of fire events under default options.
pub fn fire_count(alpha: &AlphaWeights) -> Result<usize> {
    Ok(integrate_and_fire(alpha, &CifOptions::default())?.events.len())
}

/// N x D compressed frames plus the spans that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSequence {
    pub frames: Matrix,
    pub spans: Vec<SegmentSpan>,
}

/// Pool features into one output row per segment: the alpha-weighted sum
/// over the segment's span. A span whose weights are exactly all zero (only
/// possible for a forced event over all-zero alpha) pools to the arithmetic
/// mean of its frames.
pub fn pool_segments(
    features: &Matrix,
    alpha: &AlphaWeights,
    seg: &Segmentation,
) -> Result<CompressedSequence> {
    if features.rows() != alpha.len() || features.rows() != seg.source_length {
        return Err(Error::Length(format!(
            "pool_segments: features {} frames, alpha {}, segmentation {}",
            features.rows(),
            alpha.len(),
            seg.source_length
        )));
    }
    let dim = features.cols();
    let mut out = Matrix::zeros(seg.spans.len(), dim);
    for (k, span) in seg.spans.iter().enumerate() {
        for (i, &w) in span.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = features.row(span.start + i);
            for c in 0..dim {
                out.data_mut()[k * dim + c] += w * row[c];
            }
        }
    }
    Ok(CompressedSequence { frames: out, spans: seg.spans.clone() })
}

/// Apply the student's segmentation and alpha weights to each teacher layer.
/// Plain arithmetic only: no gradient flows to the teacher.
pub fn pool_teacher(
    teacher_layers: &[Matrix],
    alpha: &AlphaWeights,
    seg: &Segmentation,
) -> Result<Vec<CompressedSequence>> {
    teacher_layers
        .iter()
        .map(|layer| pool_segments(layer, alpha, seg))
        .collect()
}

/// Differentiable pooling: weight matrix from the alpha node under the fixed
/// segmentation, then a recorded matmul against the features node.
pub fn pool_node(
    graph: &mut Graph,
    features: NodeId,
    alpha: NodeId,
    seg: &Segmentation,
) -> Result<NodeId> {
    let w = graph.cif_weights(alpha, seg.layout())?;
    graph.matmul(w, features)
}

// ── Span construction (shared by the plain and recorded paths) ─────────

/// Replay the accumulate-and-split rule over fixed event positions,
/// producing per-segment spans. Accumulation order matches the firing scan
/// exactly, so weights are bit-identical to the ones the scan saw. Spans
/// whose weights are all exactly zero are replaced by a uniform average row.
pub(crate) fn spans_for_layout(alpha: &[f64], layout: &CifLayout) -> Vec<SegmentSpan> {
    let mut spans = raw_spans(alpha, layout);
    for span in &mut spans {
        if span.total_weight() == 0.0 {
            let len = span.weights.len();
            span.weights = vec![1.0 / len as f64; len];
        }
    }
    spans
}

/// Spans without the zero-weight fallback applied.
fn raw_spans(alpha: &[f64], layout: &CifLayout) -> Vec<SegmentSpan> {
    let t_len = layout.source_len;
    let threshold = layout.threshold;
    let mut spans = Vec::with_capacity(layout.events.len());
    let mut acc = 0.0f64;
    let mut pending_carry: Option<f64> = None;
    let mut span_start = 0usize;
    let mut next_frame = 0usize;
    for ev in &layout.events {
        let mut weights = Vec::new();
        if let Some(c) = pending_carry {
            weights.push(c);
        }
        if !ev.is_tail {
            for t in next_frame..ev.frame {
                weights.push(alpha[t]);
                acc += alpha[t];
            }
            let left = (threshold - acc).clamp(0.0, alpha[ev.frame]);
            weights.push(left);
            spans.push(SegmentSpan { start: span_start, end: ev.frame, weights });
            let residual = alpha[ev.frame] - left;
            pending_carry = Some(residual);
            span_start = ev.frame;
            next_frame = ev.frame + 1;
            acc = residual;
        } else {
            for t in next_frame..t_len {
                weights.push(alpha[t]);
                acc += alpha[t];
            }
            spans.push(SegmentSpan { start: span_start, end: t_len - 1, weights });
            next_frame = t_len;
        }
    }
    spans
}

/// Dense N x T effective-weight matrix for the recorded pooling op.
pub(crate) fn dense_weight_matrix(alpha: &[f64], layout: &CifLayout) -> Matrix {
    let spans = spans_for_layout(alpha, layout);
    let mut out = Matrix::zeros(spans.len(), layout.source_len);
    for (k, span) in spans.iter().enumerate() {
        for (i, &w) in span.weights.iter().enumerate() {
            out.set(k, span.start + i, w);
        }
    }
    out
}

/// Vector-Jacobian product of [`dense_weight_matrix`] w.r.t. alpha.
///
/// With event positions fixed, every entry is linear in alpha: interior
/// frames carry their own alpha; a boundary frame's left weight is
/// k*threshold minus the prefix sum before it; a carried residual is the
/// prefix sum through its frame minus the thresholds already consumed.
/// Uniform fallback rows are constant and contribute nothing.
pub(crate) fn weight_matrix_grad_alpha(
    alpha: &[f64],
    layout: &CifLayout,
    d_weights: &[f64],
) -> Vec<f64> {
    let t_len = layout.source_len;
    let raw = raw_spans(alpha, layout);
    let mut d_alpha = vec![0.0; t_len];
    for (k, (span, ev)) in raw.iter().zip(&layout.events).enumerate() {
        if span.total_weight() == 0.0 {
            continue;
        }
        let row = &d_weights[k * t_len..(k + 1) * t_len];
        let mut interior_from = span.start;
        if k >= 1 {
            // Carried residual at the previous boundary frame: +1 on every
            // alpha up to and including that frame.
            let g = row[span.start];
            if g != 0.0 {
                for slot in &mut d_alpha[0..=span.start] {
                    *slot += g;
                }
            }
            interior_from = span.start + 1;
        }
        if !ev.is_tail {
            for t in interior_from..ev.frame {
                d_alpha[t] += row[t];
            }
            // Left weight at the boundary: -1 on every alpha before it.
            let g = row[ev.frame];
            if g != 0.0 {
                for slot in &mut d_alpha[0..ev.frame] {
                    *slot -= g;
                }
            }
        } else {
            for t in interior_from..t_len {
                d_alpha[t] += row[t];
            }
        }
    }
    d_alpha
}
