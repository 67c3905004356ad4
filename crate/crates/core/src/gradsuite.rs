//! Randomized 64-bit gradient checks of every differentiable operation, the
//! attention path, and the full joint objective on a two-video microbatch.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::data::{EmotionLabel, FeatureSequence};
use crate::gradcheck::{grad_check, GradCheckReport};
use crate::graph::{Graph, Mode, Var};
use crate::model::{Model, ModelConfig, Session, Variant};
use crate::params::GradBuffer;
use crate::span::{self, Alpha};
use crate::train::{joint_loss, Branch, GradientFlow};
use crate::{Error, Result, Tensor};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < TOLERANCE
    }
}

type Build = fn(&mut Graph<'_, f64>, &[Var], &mut crate::Rng) -> Result<Var>;

/// Checks `build` at `params`; the output is reduced to a scalar by
/// a fixed random projection so that constant-sum outputs still test every
/// Jacobian entry.
fn check_graph(name: &'static str, params: Vec<Tensor<f64>>, seed: u64, build: Build) -> Result<OpCheck> {
    let mut failure: Option<Error> = None;
    let mut projection: Option<Tensor<f64>> = None;
    let report = grad_check(&params, STEP, |ps| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p)).collect();
        let mut rng = crate::rng_from_seed(seed ^ 0x5eed);
        let y = match build(&mut g, &vars, &mut rng) {
            Ok(y) => y,
            Err(e) => {
                failure.get_or_insert(e);
                return (0.0, ps.iter().map(|p| Tensor::zeros(p.shape())).collect());
            }
        };
        let n = g.value(y).len();
        let w = projection
            .get_or_insert_with(|| Tensor::randn(&[n, 1], 1.0, &mut crate::rng_from_seed(seed ^ 0xfeed)))
            .clone();
        let flat = g.reshape(y, &[n]).expect("same size");
        let wv = g.constant(w);
        let bv = g.constant(Tensor::zeros(&[1]));
        let proj = g.affine(flat, wv, bv).expect("shapes agree");
        let root = g.sum(proj);
        let value = g.value(root).data()[0];
        let grads = g.backward(root);
        let out = vars
            .iter()
            .zip(ps)
            .map(|(&v, p)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        (value, out)
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(OpCheck { name, report }),
    }
}

fn randn(shape: &[usize], rng: &mut crate::Rng) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, rng)
}

/// Valid normalized segment parameters away from the clamp boundaries.
fn random_alpha(rng: &mut crate::Rng) -> Tensor<f64> {
    let a1 = rng.random_range(0.35..0.75);
    let a2 = rng.random_range(-0.2..0.2);
    Tensor::from_f64(&[2], &[a1, a2]).expect("two values")
}

fn op_checks(seed: u64) -> Result<Vec<OpCheck>> {
    let mut rng = crate::rng_from_seed(seed);
    let mut out = Vec::new();
    let r = &mut rng;
    out.push(check_graph("dense_affine", vec![randn(&[3, 4], r), randn(&[4, 5], r), randn(&[5], r)], seed, |g, v, _| {
        g.affine(v[0], v[1], v[2])
    })?);
    out.push(check_graph("matmul", vec![randn(&[3, 4], r), randn(&[4, 2], r)], seed, |g, v, _| g.matmul(v[0], v[1]))?);
    out.push(check_graph("conv2d_valid", vec![randn(&[12, 6], r), randn(&[2, 5, 1], r)], seed, |g, v, _| {
        g.conv2d(v[0], v[1], (1, 1))
    })?);
    out.push(check_graph("conv2d_strided", vec![randn(&[13, 4], r), randn(&[3, 3, 2], r)], seed, |g, v, _| {
        g.conv2d(v[0], v[1], (2, 1))
    })?);
    out.push(check_graph("channel_bias", vec![randn(&[2, 3, 4], r), randn(&[2], r)], seed, |g, v, _| {
        g.channel_bias(v[0], v[1])
    })?);
    out.push(check_graph("relu", vec![randn(&[3, 4], r)], seed, |g, v, _| Ok(g.relu(v[0])))?);
    out.push(check_graph("dropout", vec![randn(&[3, 4], r)], seed, |g, v, rng| {
        g.dropout(v[0], 0.75, Mode::Train, rng)
    })?);
    out.push(check_graph("reshape_concat_tile", vec![randn(&[3], r), randn(&[1, 2], r)], seed, |g, v, _| {
        let b = g.reshape(v[1], &[2])?;
        let c = g.concat(v[0], b)?;
        g.tile_rows(c, 4)
    })?);
    out.push(check_graph("softmax", vec![randn(&[6], r)], seed, |g, v, _| Ok(g.softmax(v[0])))?);
    out.push(check_graph("softmax_cross_entropy", vec![randn(&[6], r)], seed, |g, v, _| {
        let p = g.softmax(v[0]);
        g.cross_entropy(p, 2)
    })?);
    out.push(check_graph("alpha_head", vec![randn(&[2], r)], seed, |g, v, _| g.alpha_head(v[0]))?);
    out.push(check_graph("sample_segment", vec![randn(&[12, 3], r), random_alpha(r)], seed, |g, v, _| {
        g.sample_segment(v[0], v[1], 6)
    })?);
    out.push(check_graph("square_loss", vec![randn(&[2], r)], seed, |g, v, _| g.square_loss(v[0], &[0.3, -0.2]))?);
    out.push(check_graph("sum_add_scale", vec![randn(&[2, 3], r), randn(&[2, 3], r)], seed, |g, v, _| {
        let a = g.add(v[0], v[1])?;
        let s = g.scale(a, -1.7);
        let t = g.sum(v[0]);
        let u = g.sum(s);
        g.add(t, u)
    })?);
    Ok(out)
}

fn small_config(variant: Variant) -> ModelConfig {
    let mut c = ModelConfig::new(variant, 3, 4, 12);
    c.segment = 6;
    c.anet_hidden = 8;
    c.stream_units = 6;
    c.attention_hidden = 5;
    c
}

/// Model with every parameter drawn at random (no zero-initialized layers).
fn random_model(config: ModelConfig, rng: &mut crate::Rng) -> Result<Model<f64>> {
    let mut m = Model::<f64>::init(config, rng)?;
    for t in m.params_mut().values_mut() {
        let scale = 1.0 / libm::sqrt(t.shape()[0] as f64);
        *t = Tensor::randn(t.shape(), scale, rng);
    }
    Ok(m)
}

fn with_params(model: &Model<f64>, ps: &[Tensor<f64>]) -> Model<f64> {
    let mut m = model.clone();
    for (dst, src) in m.params_mut().values_mut().iter_mut().zip(ps) {
        *dst = src.clone();
    }
    m
}

fn buffer_to_list(model: &Model<f64>, buf: &GradBuffer<f64>) -> Vec<Tensor<f64>> {
    model
        .params()
        .values()
        .iter()
        .zip(buf.slots())
        .map(|(p, g)| g.clone().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect()
}

fn attention_check(seed: u64) -> Result<OpCheck> {
    let mut rng = crate::rng_from_seed(seed ^ 0xa77e);
    let model = random_model(small_config(Variant::Attention), &mut rng)?;
    let frames = randn(&[12, 4], &mut rng);
    let mut params: Vec<Tensor<f64>> = model.params().values().to_vec();
    params.push(frames);
    let mut failure = None;
    let report = grad_check(&params, STEP, |ps| {
        let (mps, fr) = ps.split_at(ps.len() - 1);
        let m = with_params(&model, mps);
        let mut rng = crate::rng_from_seed(seed);
        let mut s = Session::new(&m, Mode::Train);
        let fv = s.graph.param(&fr[0]);
        let res = (|| {
            let p = s.class_probs(fv, None, &mut rng)?;
            s.graph.cross_entropy(p, 1)
        })();
        match res {
            Ok(root) => {
                let mut buf = GradBuffer::for_store(m.params());
                let mut grads = s.accumulate(root, 1.0, &mut buf);
                let mut list = buffer_to_list(&m, &buf);
                list.push(grads.take(fv).unwrap_or_else(|| Tensor::zeros(fr[0].shape())));
                (s.graph.value(root).data()[0], list)
            }
            Err(e) => {
                failure.get_or_insert(e);
                (0.0, ps.iter().map(|p| Tensor::zeros(p.shape())).collect())
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(OpCheck {
            name: "attention_e_stream",
            report,
        }),
    }
}

/// Full model, joint objective, classification gradients allowed to reach
/// the attribution network so every parameter is exercised.
fn joint_check(seed: u64) -> Result<OpCheck> {
    let mut rng = crate::rng_from_seed(seed ^ 0x101e);
    let config = small_config(Variant::Full);
    let m = config.frames;
    let beta = 0.6;
    // redraw until video A's gate is open: a very short predicted span can
    // lose too much tIoU to integer rounding of its ground truth
    let mut setup = None;
    for _ in 0..64 {
        let model = random_model(config, &mut rng)?;
        let fa = randn(&[m, 4], &mut rng);
        let fb = randn(&[m, 4], &mut rng);

        // predicted span of video A under the same dropout draw the check uses
        let mut probe_rng = crate::rng_from_seed(seed);
        let mut s = Session::new(&model, Mode::Train);
        let fv = s.graph.input(&fa);
        let a = s.anet(fv, &mut probe_rng)?;
        let d = s.graph.value(a).data();
        let clamped = span::clamp_alpha(Alpha::new(d[0], d[1]), m, span::MIN_SEGMENT_FRAMES);
        let (ts, te) = span::span_from_alpha(clamped, m);
        let open_span = span::round_span(ts, te, m);
        let closed_span = if ts > 2.5 { (1, 2) } else { (m - 1, m) };

        let seq_a = FeatureSequence::new("open".into(), fa, EmotionLabel(1), Some(open_span))?;
        let seq_b = FeatureSequence::new("closed".into(), fb, EmotionLabel(2), Some(closed_span))?;
        let out = joint_loss(
            &model,
            &[&seq_a, &seq_b],
            beta,
            GradientFlow::Full,
            Mode::Train,
            &mut crate::rng_from_seed(seed),
            None,
        )?;
        let branches: Vec<Branch> = out.examples.iter().map(|e| e.branch).collect();
        if branches == [Branch::Classification, Branch::Attribution] {
            setup = Some((model, seq_a, seq_b));
            break;
        }
    }
    let (model, seq_a, seq_b) =
        setup.ok_or_else(|| Error::InvalidArgument("could not build a microbatch with one open and one closed gate".into()))?;
    let batch = [&seq_a, &seq_b];
    let mut failure: Option<String> = None;
    let report = grad_check(model.params().values(), STEP, |ps| {
        let mm = with_params(&model, ps);
        let mut buf = GradBuffer::for_store(mm.params());
        let mut rng = crate::rng_from_seed(seed);
        match joint_loss(&mm, &batch, beta, GradientFlow::Full, Mode::Train, &mut rng, Some(&mut buf)) {
            Ok(out) => (out.loss, buffer_to_list(&mm, &buf)),
            Err(e) => {
                failure.get_or_insert(alloc::format!("{e}"));
                (0.0, ps.iter().map(|p| Tensor::zeros(p.shape())).collect())
            }
        }
    });
    match failure {
        Some(e) => Err(Error::InvalidArgument(e)),
        None => Ok(OpCheck {
            name: "joint_objective",
            report,
        }),
    }
}

/// Every check for one seed.
pub fn run(seed: u64) -> Result<Vec<OpCheck>> {
    let mut out = op_checks(seed)?;
    out.push(attention_check(seed)?);
    out.push(joint_check(seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_seed_passes() {
        for c in run(3).unwrap() {
            assert!(c.passed(), "{} {:?}", c.name, c.report);
        }
    }
}
