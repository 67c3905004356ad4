//! Attribution network, bi-stream classifier and their ablated variants.
//!
//! Parameter names:
//!
//! | name | shape |
//! |---|---|
//! | `anet.fc1.weight` / `.bias` | `[M·D, H]` / `[H]` |
//! | `anet.fc2.weight` / `.bias` | `[H, 2]` / `[2]` |
//! | `cnet.compress.filter` | `[1, k_c, 1]` |
//! | `cnet.shared_conv.filter` / `.bias` | `[8, 5, 1]` / `[8]` |
//! | `cnet.{emotion,content}.fc{1,2}.weight` / `.bias` | `[8·(L-4)·D, 32]`, `[32, 32]` |
//! | `cnet.fusion.weight` / `.bias` | `[32·streams, K]` / `[K]` |
//! | `attention.fc{1,2}.weight` / `.bias`, `attention.score.*` | `[D,128]`, `[128,128]`, `[128,1]` |

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{Gradients, Graph, Mode, Var};
use crate::params::{GradBuffer, ParamId, ParamStore};
use crate::span::{self, Alpha};
use crate::{Error, Result, Scalar, Tensor};

/// Which network is built: the full model, one of its ablations, or the
/// temporal-attention baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Content stream only; no attribution network.
    CStream,
    /// Emotion stream with supervised attribution; no content stream.
    EStream,
    /// Emotion stream, attribution trained only through classification.
    UnsupE,
    /// Both streams, attribution trained only through classification.
    CUnsupE,
    /// Attention-pooled sequence fed to the emotion stream, plus content stream.
    Attention,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::CStream,
        Variant::EStream,
        Variant::UnsupE,
        Variant::CUnsupE,
        Variant::Attention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::CStream => "c_stream",
            Variant::EStream => "e_stream",
            Variant::UnsupE => "unsup_e",
            Variant::CUnsupE => "c_unsup_e",
            Variant::Attention => "attention",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }

    pub fn has_anet(self) -> bool {
        matches!(self, Variant::Full | Variant::EStream | Variant::UnsupE | Variant::CUnsupE)
    }

    pub fn has_emotion_stream(self) -> bool {
        self != Variant::CStream
    }

    pub fn has_content_stream(self) -> bool {
        matches!(self, Variant::Full | Variant::CStream | Variant::CUnsupE | Variant::Attention)
    }

    pub fn has_attention(self) -> bool {
        self == Variant::Attention
    }

    /// Whether the gated square loss on α supervises the attribution network.
    pub fn supervised_attribution(self) -> bool {
        matches!(self, Variant::Full | Variant::EStream)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub classes: usize,
    pub dim: usize,
    /// Input length `M`.
    pub frames: usize,
    /// Segment length `L`.
    pub segment: usize,
    pub anet_hidden: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub stream_units: usize,
    pub attention_hidden: usize,
    pub keep: f64,
}

impl ModelConfig {
    pub fn new(variant: Variant, classes: usize, dim: usize, frames: usize) -> Self {
        Self {
            variant,
            classes,
            dim,
            frames,
            segment: 20,
            anet_hidden: 128,
            conv_filters: 8,
            conv_kernel: 5,
            stream_units: 32,
            attention_hidden: 128,
            keep: 0.75,
        }
    }

    /// Stride and kernel of the content compression: `s = ⌊M/L⌋`,
    /// `k = M - s (L - 1)`, which yields exactly `L` output rows.
    pub fn compress_geometry(&self) -> (usize, usize) {
        compress_geometry(self.frames, self.segment)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidArgument(m));
        if self.classes < 2 || self.dim == 0 {
            return bad(alloc::format!("need >= 2 classes and D >= 1 (got K={}, D={})", self.classes, self.dim));
        }
        if self.segment < 2 || self.frames < self.segment {
            return bad(alloc::format!(
                "need M >= L >= 2 (got M={}, L={}); resample upstream",
                self.frames,
                self.segment
            ));
        }
        if self.segment < self.conv_kernel {
            return bad(alloc::format!(
                "segment length L={} shorter than the shared conv kernel {}",
                self.segment,
                self.conv_kernel
            ));
        }
        if !(self.keep > 0.0 && self.keep <= 1.0) {
            return bad(alloc::format!("keep ratio {} outside (0, 1]", self.keep));
        }
        Ok(())
    }

    fn stream_flat(&self) -> usize {
        self.conv_filters * (self.segment - self.conv_kernel + 1) * self.dim
    }

    fn streams(&self) -> usize {
        self.variant.has_emotion_stream() as usize + self.variant.has_content_stream() as usize
    }
}

pub fn compress_geometry(frames: usize, segment: usize) -> (usize, usize) {
    let stride = frames / segment;
    (stride, frames - stride * (segment - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StreamIds {
    fc1: Dense,
    fc2: Dense,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct LayerIds {
    anet: Option<(Dense, Dense)>,
    compress: Option<ParamId>,
    conv: Option<(ParamId, ParamId)>,
    emotion: Option<StreamIds>,
    content: Option<StreamIds>,
    fusion: Option<Dense>,
    attention: Option<(Dense, Dense, Dense)>,
}

/// A network instance: configuration plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    ids: LayerIds,
}

/// Which stream a sub-network belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Emotion,
    Content,
}

impl<T: Scalar> Model<T> {
    /// Fresh model: Xavier-uniform weights, zero biases, zero-initialized
    /// attribution head (so α̂ = (0.5, 0)) and fusion layer (uniform output),
    /// averaging compression filter.
    pub fn init(config: ModelConfig, rng: &mut crate::Rng) -> Result<Self> {
        config.validate()?;
        let mut p = ParamStore::new();
        let mut ids = LayerIds::default();
        let c = config;
        let dense = |p: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize, zero: bool, rng: &mut crate::Rng| {
            let w = if zero {
                Tensor::zeros(&[fan_in, fan_out])
            } else {
                Tensor::xavier_uniform(&[fan_in, fan_out], fan_in, fan_out, rng)
            };
            Dense {
                w: p.insert(&alloc::format!("{name}.weight"), w),
                b: p.insert(&alloc::format!("{name}.bias"), Tensor::zeros(&[fan_out])),
            }
        };
        if c.variant.has_anet() {
            let fc1 = dense(&mut p, "anet.fc1", c.frames * c.dim, c.anet_hidden, false, rng);
            let fc2 = dense(&mut p, "anet.fc2", c.anet_hidden, 2, true, rng);
            ids.anet = Some((fc1, fc2));
        }
        if c.variant.has_attention() {
            let fc1 = dense(&mut p, "attention.fc1", c.dim, c.attention_hidden, false, rng);
            let fc2 = dense(&mut p, "attention.fc2", c.attention_hidden, c.attention_hidden, false, rng);
            let score = dense(&mut p, "attention.score", c.attention_hidden, 1, false, rng);
            ids.attention = Some((fc1, fc2, score));
        }
        if c.variant.has_content_stream() {
            let (_, k) = c.compress_geometry();
            let filt = Tensor::full(&[1, k, 1], T::from_f64(1.0 / k as f64));
            ids.compress = Some(p.insert("cnet.compress.filter", filt));
        }
        let (f, k) = (c.conv_filters, c.conv_kernel);
        let conv_w = Tensor::xavier_uniform(&[f, k, 1], k, f * k, rng);
        let conv_w = p.insert("cnet.shared_conv.filter", conv_w);
        let conv_b = p.insert("cnet.shared_conv.bias", Tensor::zeros(&[f]));
        ids.conv = Some((conv_w, conv_b));
        let flat = c.stream_flat();
        let u = c.stream_units;
        if c.variant.has_emotion_stream() {
            ids.emotion = Some(StreamIds {
                fc1: dense(&mut p, "cnet.emotion.fc1", flat, u, false, rng),
                fc2: dense(&mut p, "cnet.emotion.fc2", u, u, false, rng),
            });
        }
        if c.variant.has_content_stream() {
            ids.content = Some(StreamIds {
                fc1: dense(&mut p, "cnet.content.fc1", flat, u, false, rng),
                fc2: dense(&mut p, "cnet.content.fc2", u, u, false, rng),
            });
        }
        ids.fusion = Some(dense(&mut p, "cnet.fusion", u * c.streams(), c.classes, true, rng));
        Ok(Self { config, params: p, ids })
    }

    /// Rebuilds a model of `config` holding `params` (e.g. from a checkpoint).
    pub fn from_params(config: ModelConfig, params: &ParamStore<T>) -> Result<Self> {
        let mut m = Self::init(config, &mut crate::rng_from_seed(0))?;
        m.params.load_from(params)?;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Parameters belonging to the attribution network.
    pub fn anet_param_ids(&self) -> Vec<ParamId> {
        match self.ids.anet {
            Some((a, b)) => alloc::vec![a.w, a.b, b.w, b.b],
            None => Vec::new(),
        }
    }

    /// Parameters belonging to the classification network (compression,
    /// shared conv, both streams, fusion).
    pub fn cnet_param_ids(&self) -> Vec<ParamId> {
        let mut v = Vec::new();
        v.extend(self.ids.compress);
        if let Some((w, b)) = self.ids.conv {
            v.extend([w, b]);
        }
        for s in [self.ids.emotion, self.ids.content].into_iter().flatten() {
            v.extend([s.fc1.w, s.fc1.b, s.fc2.w, s.fc2.b]);
        }
        if let Some(f) = self.ids.fusion {
            v.extend([f.w, f.b]);
        }
        v
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let mut params = ParamStore::new();
        for (n, t) in self.params.iter() {
            params.insert(n, t.cast());
        }
        Model {
            config: self.config,
            params,
            ids: self.ids.clone(),
        }
    }

    /// Shape sanity for an input sequence.
    pub fn check_input(&self, frames: &Tensor<T>) -> Result<()> {
        let want = [self.config.frames, self.config.dim];
        if frames.shape() != want {
            return Err(Error::ShapeMismatch {
                op: "model input",
                left: want.to_vec(),
                right: frames.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// A forward tape over one model with each parameter bound at most once.
pub struct Session<'p, T: Scalar> {
    pub graph: Graph<'p, T>,
    model: &'p Model<T>,
    bound: Vec<Option<Var>>,
    pub mode: Mode,
}

impl<'p, T: Scalar> Session<'p, T> {
    pub fn new(model: &'p Model<T>, mode: Mode) -> Self {
        Self {
            graph: Graph::new(),
            model,
            bound: alloc::vec![None; model.params.len()],
            mode,
        }
    }

    pub fn model(&self) -> &'p Model<T> {
        self.model
    }

    fn p(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.graph.param(self.model.params.get(id));
        self.bound[id.0] = Some(v);
        v
    }

    fn dense(&mut self, x: Var, d: Dense) -> Result<Var> {
        let (w, b) = (self.p(d.w), self.p(d.b));
        self.graph.affine(x, w, b)
    }

    fn missing(what: &str) -> Error {
        Error::InvalidArgument(alloc::format!("model has no {what}"))
    }

    /// Attribution network: `[M, D] -> α̂ = (sigmoid, tanh)` of a two-layer MLP.
    pub fn anet(&mut self, frames: Var, rng: &mut crate::Rng) -> Result<Var> {
        let (fc1, fc2) = self.model.ids.anet.ok_or_else(|| Self::missing("attribution network"))?;
        let n = self.graph.value(frames).len();
        let flat = self.graph.reshape(frames, &[n])?;
        let h = self.dense(flat, fc1)?;
        let h = self.graph.relu(h);
        let h = self.graph.dropout(h, self.model.config.keep, self.mode, rng)?;
        let z = self.dense(h, fc2)?;
        self.graph.alpha_head(z)
    }

    /// Learned temporal compression `[M, D] -> [L, D]`.
    pub fn compress(&mut self, frames: Var) -> Result<Var> {
        let id = self.model.ids.compress.ok_or_else(|| Self::missing("content stream"))?;
        let c = self.model.config;
        let m = self.graph.value(frames).rows();
        if m < c.segment {
            return Err(Error::InvalidArgument(alloc::format!(
                "cannot compress M={m} frames to L={}; resample first",
                c.segment
            )));
        }
        let (stride, _) = compress_geometry(m, c.segment);
        let f = self.p(id);
        let y = self.graph.conv2d(frames, f, (stride, 1))?;
        let d = self.graph.value(frames).cols();
        self.graph.reshape(y, &[c.segment, d])
    }

    /// One stream: shared conv, ReLU, two FC layers with ReLU and dropout.
    pub fn stream(&mut self, segment: Var, which: Stream, rng: &mut crate::Rng) -> Result<Var> {
        let ids = match which {
            Stream::Emotion => self.model.ids.emotion,
            Stream::Content => self.model.ids.content,
        }
        .ok_or_else(|| Self::missing("requested stream"))?;
        let (cw, cb) = self.model.ids.conv.ok_or_else(|| Self::missing("shared conv"))?;
        let keep = self.model.config.keep;
        let (cw, cb) = (self.p(cw), self.p(cb));
        let y = self.graph.conv2d(segment, cw, (1, 1))?;
        let y = self.graph.channel_bias(y, cb)?;
        let y = self.graph.relu(y);
        let n = self.graph.value(y).len();
        let y = self.graph.reshape(y, &[n])?;
        let y = self.dense(y, ids.fc1)?;
        let y = self.graph.relu(y);
        let y = self.graph.dropout(y, keep, self.mode, rng)?;
        let y = self.dense(y, ids.fc2)?;
        let y = self.graph.relu(y);
        self.graph.dropout(y, keep, self.mode, rng)
    }

    /// Attention pooling: per-frame MLP score, softmax over time, convex
    /// combination of frames. Returns `(pooled [D], weights [M])`.
    pub fn attention(&mut self, frames: Var) -> Result<(Var, Var)> {
        let (fc1, fc2, score) = self.model.ids.attention.ok_or_else(|| Self::missing("attention"))?;
        let m = self.graph.value(frames).rows();
        let h = self.dense(frames, fc1)?;
        let h = self.graph.relu(h);
        let h = self.dense(h, fc2)?;
        let h = self.graph.relu(h);
        let s = self.dense(h, score)?;
        let s = self.graph.reshape(s, &[m])?;
        let w = self.graph.softmax(s);
        let row = self.graph.reshape(w, &[1, m])?;
        let pooled = self.graph.matmul(row, frames)?;
        let d = self.graph.value(pooled).len();
        let pooled = self.graph.reshape(pooled, &[d])?;
        Ok((pooled, w))
    }

    /// Fusion of available stream outputs followed by softmax.
    pub fn classify(&mut self, emotion: Option<Var>, content: Option<Var>) -> Result<Var> {
        let fusion = self.model.ids.fusion.ok_or_else(|| Self::missing("fusion layer"))?;
        let feat = match (emotion, content) {
            (Some(e), Some(c)) => self.graph.concat(e, c)?,
            (Some(x), None) | (None, Some(x)) => x,
            (None, None) => return Err(Self::missing("stream output")),
        };
        let z = self.dense(feat, fusion)?;
        Ok(self.graph.softmax(z))
    }

    /// Emotion-stream input for a given α node (sampled segment).
    pub fn emotion_segment(&mut self, frames: Var, alpha: Var) -> Result<Var> {
        let l = self.model.config.segment;
        self.graph.sample_segment(frames, alpha, l)
    }

    /// Classifier probabilities given an α node for the sampler (ignored by
    /// variants without an attribution network).
    pub fn class_probs(&mut self, frames: Var, alpha: Option<Var>, rng: &mut crate::Rng) -> Result<Var> {
        let v = self.model.config.variant;
        let emotion = if v.has_attention() {
            let (pooled, _) = self.attention(frames)?;
            let seg = self.graph.tile_rows(pooled, self.model.config.segment)?;
            Some(self.stream(seg, Stream::Emotion, rng)?)
        } else if v.has_emotion_stream() {
            let a = alpha.ok_or_else(|| Self::missing("α for the emotion stream"))?;
            let seg = self.emotion_segment(frames, a)?;
            Some(self.stream(seg, Stream::Emotion, rng)?)
        } else {
            None
        };
        let content = if v.has_content_stream() {
            let seg = self.compress(frames)?;
            Some(self.stream(seg, Stream::Content, rng)?)
        } else {
            None
        };
        self.classify(emotion, content)
    }

    /// Backward from `root` with seed `scale`, adding parameter gradients
    /// into `buf`. The returned gradients keep the non-parameter leaves.
    pub fn accumulate(&self, root: Var, scale: T, buf: &mut GradBuffer<T>) -> Gradients<T> {
        let mut routes = alloc::vec![None; self.graph.len()];
        for (i, v) in self.bound.iter().enumerate() {
            if let Some(v) = v {
                routes[v.index()] = Some(i);
            }
        }
        self.graph.backward_into(root, scale, &routes, buf.slots_mut())
    }
}

/// Inference output for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub confidence: f64,
    /// Raw (unclamped) attribution output.
    pub alpha: Option<Alpha>,
    /// Rounded 1-based frame span.
    pub span: Option<(usize, usize)>,
    /// Attention weights over frames (attention variant only).
    pub attention: Option<Vec<f64>>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Model<T> {
    /// Inference: attribution output rounded to whole frames, the emotion
    /// stream reads the rounded segment, dropout disabled.
    pub fn predict(&self, frames: &Tensor<T>) -> Result<ModelOutput> {
        self.check_input(frames)?;
        let mut rng = crate::rng_from_seed(0);
        let mut s = Session::new(self, Mode::Infer);
        let fv = s.graph.input(frames);
        let m = self.config.frames;
        let (alpha, span, alpha_var) = if self.config.variant.has_anet() {
            let a = s.anet(fv, &mut rng)?;
            let d = s.graph.value(a).data();
            let raw = Alpha::new(d[0].as_f64(), d[1].as_f64());
            let clamped = span::clamp_alpha(raw, m, span::MIN_SEGMENT_FRAMES);
            let (ts, te) = span::span_from_alpha(clamped, m);
            let (rs, re) = span::round_span(ts, te, m);
            let rounded = span::alpha_from_span(rs as f64, re as f64, m)?;
            let av = s.graph.constant(Tensor::from_f64(&[2], &rounded.to_array())?);
            (Some(raw), Some((rs, re)), Some(av))
        } else {
            (None, None, None)
        };
        let probs = s.class_probs(fv, alpha_var, &mut rng)?;
        let probs: Vec<f64> = s.graph.value(probs).data().iter().map(|x| x.as_f64()).collect();
        let predicted = argmax(&probs);
        let attention = if self.config.variant.has_attention() {
            let mut s2 = Session::new(self, Mode::Infer);
            let fv = s2.graph.input(frames);
            let (_, w) = s2.attention(fv)?;
            Some(s2.graph.value(w).data().iter().map(|x| x.as_f64()).collect())
        } else {
            None
        };
        Ok(ModelOutput {
            confidence: probs[predicted],
            probs,
            predicted,
            alpha,
            span,
            attention,
        })
    }
}
