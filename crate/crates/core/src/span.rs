//! Segment parameterization and the differentiable segment sampler.
//!
//! A segment of an `M`-frame sequence is described either by continuous frame
//! times `(t_s, t_e)` or by normalized parameters `α = (α1, α2)`:
//!
//! ```text
//! α1 = (t_e - t_s) / M          t_s = M/2 (α2 - α1 + 1)
//! α2 = (t_e + t_s) / M - 1      t_e = M/2 (α1 + α2 + 1)
//! ```
//!
//! Continuous time runs over `[0, M]`; position `p ∈ [1, M]` reads frame `p`
//! (1-based), positions below 1 replicate the first frame.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar, Tensor};

/// Normalized segment parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub a1: f64,
    pub a2: f64,
}

impl Alpha {
    pub const fn new(a1: f64, a2: f64) -> Self {
        Self { a1, a2 }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.a1, self.a2]
    }
}

/// Ground-truth or predicted segment in continuous frame times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionSpan {
    pub start: f64,
    pub end: f64,
}

impl AttributionSpan {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::InvalidSpan {
                t_s: start,
                t_e: end,
                len: 0,
            });
        }
        Ok(Self { start, end })
    }

    pub fn alpha(&self, len: usize) -> Result<Alpha> {
        alpha_from_span(self.start, self.end, len)
    }

    pub fn from_alpha(alpha: Alpha, len: usize) -> Self {
        let (start, end) = span_from_alpha(alpha, len);
        Self { start, end }
    }

    pub fn contains_frame(&self, frame: usize) -> bool {
        let f = frame as f64;
        f >= self.start && f <= self.end
    }
}

pub fn alpha_from_span(t_s: f64, t_e: f64, len: usize) -> Result<Alpha> {
    if len == 0 || !(t_s.is_finite() && t_e.is_finite()) || t_e <= t_s {
        return Err(Error::InvalidSpan { t_s, t_e, len });
    }
    let m = len as f64;
    Ok(Alpha {
        a1: (t_e - t_s) / m,
        a2: (t_e + t_s) / m - 1.0,
    })
}

/// Continuous `(t_s, t_e)` for `alpha`; no rounding or clamping.
pub fn span_from_alpha(alpha: Alpha, len: usize) -> (f64, f64) {
    let half = len as f64 / 2.0;
    (
        half * (alpha.a2 - alpha.a1 + 1.0),
        half * (alpha.a1 + alpha.a2 + 1.0),
    )
}

/// Inference-time span: round to the nearest frame (halves away from zero),
/// clamp into `[1, M]`, and keep `t_e > t_s`.
pub fn round_span(t_s: f64, t_e: f64, len: usize) -> (usize, usize) {
    let m = len.max(2);
    let clamp = |v: f64| -> usize {
        let r = libm::round(v);
        if r.is_nan() || r < 1.0 {
            1
        } else if r > m as f64 {
            m
        } else {
            r as usize
        }
    };
    let (mut s, mut e) = (clamp(t_s), clamp(t_e));
    if e <= s {
        if s < m {
            e = s + 1;
        } else {
            s = m - 1;
            e = m;
        }
    }
    (s, e)
}

/// Projects `alpha` so the segment covers at least `min_frames / M` and the
/// implied `[t_s, t_e]` lies inside `[0, M]`. Idempotent.
pub fn clamp_alpha(alpha: Alpha, len: usize, min_frames: usize) -> Alpha {
    let (a1, a2, _) = clamp_with_jacobian(alpha.a1, alpha.a2, len, min_frames);
    Alpha::new(a1, a2)
}

fn clamp_with_jacobian<T: Scalar>(a1: T, a2: T, len: usize, min_frames: usize) -> (T, T, [T; 4]) {
    let one = T::one();
    let zero = T::zero();
    let lo1 = T::from_f64((min_frames as f64 / len as f64).min(1.0));
    let (c1, j11) = if a1 < lo1 {
        (lo1, zero)
    } else if a1 > one {
        (one, zero)
    } else {
        (a1, one)
    };
    let (lo2, hi2) = (c1 - one, one - c1);
    let (c2, j21, j22) = if a2 < lo2 {
        (lo2, j11, zero)
    } else if a2 > hi2 {
        (hi2, -j11, zero)
    } else {
        (a2, zero, one)
    };
    (c1, c2, [j11, zero, j21, j22])
}

/// Minimum segment length, in frames, enforced by the sampler.
pub const MIN_SEGMENT_FRAMES: usize = 2;

/// Interpolation record for one output row of the sampler.
#[derive(Debug, Clone, Copy)]
pub struct SampleRow<T> {
    /// 0-based lower and upper bracketing frames (equal at the edges).
    pub lo: usize,
    pub hi: usize,
    /// Weight of `hi`.
    pub w: T,
    /// d(position) / d(clamped α1).
    pub dp_da1: T,
    /// d(position) / d(clamped α2), i.e. `M / 2`.
    pub dp_da2: T,
}

/// Sample `samples` rows from `frames` (`[M, D]`) along the clamped segment of
/// `(a1, a2)`. Returns the rows, per-row interpolation records, and the
/// Jacobian of the clamp (`[[∂α1'/∂α1, ∂α1'/∂α2], [∂α2'/∂α1, ∂α2'/∂α2]]`).
pub(crate) fn sample_forward<T: Scalar>(
    frames: &Tensor<T>,
    a1: T,
    a2: T,
    samples: usize,
) -> Result<(Tensor<T>, Vec<SampleRow<T>>, [T; 4])> {
    if samples < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "segment length L={samples} must be at least 2"
        )));
    }
    let m = frames.rows();
    if m < 2 || frames.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "sample_segment",
            left: frames.shape().to_vec(),
            right: alloc::vec![samples],
        });
    }
    let d = frames.cols();
    let (c1, c2, jac) = clamp_with_jacobian(a1, a2, m, MIN_SEGMENT_FRAMES);
    let mf = T::from_f64(m as f64);
    let half = mf / T::from_f64(2.0);
    let t_s = half * (c2 - c1 + T::one());
    let t_e = half * (c1 + c2 + T::one());
    let denom = T::from_f64((samples - 1) as f64);
    let tol = T::epsilon() * T::from_f64(64.0) * mf;

    let fd = frames.data();
    let mut out = alloc::vec![T::zero(); samples * d];
    let mut rows = Vec::with_capacity(samples);
    for l in 0..samples {
        let frac = T::from_f64(l as f64) / denom;
        let p = t_s * (T::one() - frac) + t_e * frac;
        let r = p.round();
        let (base, w) = if (p - r).abs() <= tol { (r, T::zero()) } else { (p.floor(), p - p.floor()) };
        let base = base.as_f64();
        let clamp_frame = |f: f64| -> usize {
            if f < 1.0 {
                0
            } else if f > m as f64 {
                m - 1
            } else {
                f as usize - 1
            }
        };
        let lo = clamp_frame(base);
        let hi = clamp_frame(base + 1.0);
        let row = SampleRow {
            lo,
            hi,
            w,
            dp_da1: half * (T::from_f64(2.0) * frac - T::one()),
            dp_da2: half,
        };
        let o = &mut out[l * d..(l + 1) * d];
        let (flo, fhi) = (&fd[lo * d..(lo + 1) * d], &fd[hi * d..(hi + 1) * d]);
        if w == T::zero() {
            o.copy_from_slice(flo);
        } else {
            for ((ov, &a), &b) in o.iter_mut().zip(flo).zip(fhi) {
                *ov = (T::one() - w) * a + w * b;
            }
        }
        rows.push(row);
    }
    Ok((Tensor::new(&[samples, d], out)?, rows, jac))
}

pub(crate) fn sample_backward_frames<T: Scalar>(
    frame_shape: &[usize],
    rows: &[SampleRow<T>],
    g: &Tensor<T>,
) -> Tensor<T> {
    let d = frame_shape[1];
    let mut gf = Tensor::zeros(frame_shape);
    let gfd = gf.data_mut();
    for (l, row) in rows.iter().enumerate() {
        let gr = &g.data()[l * d..(l + 1) * d];
        let wl = T::one() - row.w;
        for (k, &gv) in gr.iter().enumerate() {
            gfd[row.lo * d + k] = gfd[row.lo * d + k] + wl * gv;
            if row.w != T::zero() {
                gfd[row.hi * d + k] = gfd[row.hi * d + k] + row.w * gv;
            }
        }
    }
    gf
}

/// Gradient with respect to the clamped `(α1', α2')`.
pub(crate) fn sample_backward_alpha<T: Scalar>(frames: &Tensor<T>, rows: &[SampleRow<T>], g: &Tensor<T>) -> (T, T) {
    let d = frames.cols();
    let fd = frames.data();
    let (mut d1, mut d2) = (T::zero(), T::zero());
    for (l, row) in rows.iter().enumerate() {
        if row.lo == row.hi {
            continue;
        }
        let gr = &g.data()[l * d..(l + 1) * d];
        let (flo, fhi) = (&fd[row.lo * d..(row.lo + 1) * d], &fd[row.hi * d..(row.hi + 1) * d]);
        let dl_dp = gr
            .iter()
            .zip(flo.iter().zip(fhi))
            .fold(T::zero(), |acc, (&gv, (&a, &b))| acc + gv * (b - a));
        d1 = d1 + dl_dp * row.dp_da1;
        d2 = d2 + dl_dp * row.dp_da2;
    }
    (d1, d2)
}

/// Samples an `samples × D` segment from `frames` at (clamped) `alpha`.
pub fn sample_segment<T: Scalar>(frames: &Tensor<T>, alpha: Alpha, samples: usize) -> Result<Tensor<T>> {
    sample_forward(frames, T::from_f64(alpha.a1), T::from_f64(alpha.a2), samples).map(|(t, _, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn alpha_examples() {
        let a = alpha_from_span(0.0, 100.0, 100).unwrap();
        assert_eq!((a.a1, a.a2), (1.0, 0.0));
        let a = alpha_from_span(20.0, 60.0, 100).unwrap();
        assert!(close(a.a1, 0.4, 1e-12) && close(a.a2, -0.2, 1e-12));
        assert!(alpha_from_span(5.0, 5.0, 100).is_err());
        assert!(alpha_from_span(6.0, 5.0, 100).is_err());
    }

    #[test]
    fn span_examples() {
        assert_eq!(span_from_alpha(Alpha::new(1.0, 0.0), 100), (0.0, 100.0));
        let (s, e) = span_from_alpha(Alpha::new(0.4, -0.2), 100);
        assert!(close(s, 20.0, 1e-9) && close(e, 60.0, 1e-9));
        let (s, e) = span_from_alpha(Alpha::new(0.5, 0.0), 30);
        assert_eq!((s, e), (7.5, 22.5));
        assert_eq!(round_span(s, e, 30), (8, 23));
    }

    #[test]
    fn round_span_clamps_into_range() {
        assert_eq!(round_span(-3.0, 0.2, 30), (1, 2));
        assert_eq!(round_span(29.8, 40.0, 30), (29, 30));
        assert_eq!(round_span(0.0, 100.0, 100), (1, 100));
    }

    #[test]
    fn clamp_examples() {
        let a = Alpha::new(0.4, -0.2);
        assert_eq!(clamp_alpha(a, 100, 2), a);
        assert_eq!(clamp_alpha(Alpha::new(1.5, 0.0), 100, 2), Alpha::new(1.0, 0.0));
        let c = clamp_alpha(Alpha::new(0.4, 0.9), 100, 2);
        assert!(close(c.a1, 0.4, 1e-15) && close(c.a2, 0.6, 1e-12));
        let (_, te) = span_from_alpha(c, 100);
        assert!(close(te, 100.0, 1e-9));
        let tiny = clamp_alpha(Alpha::new(0.001, 0.0), 100, 2);
        assert!(close(tiny.a1, 0.02, 1e-15));
    }

    #[test]
    fn integer_aligned_sampling_is_slicing() {
        let mut rng = crate::rng_from_seed(3);
        let frames = Tensor::<f64>::randn(&[30, 7], 1.0, &mut rng);
        let alpha = alpha_from_span(5.0, 24.0, 30).unwrap();
        let seg = sample_segment(&frames, alpha, 20).unwrap();
        for l in 0..20 {
            assert_eq!(seg.row(l), frames.row(4 + l));
        }
    }

    #[test]
    fn constant_sequence_gives_constant_rows() {
        let v = [0.5, -1.25, 3.0];
        let data: Vec<f64> = (0..12).flat_map(|_| v).collect();
        let frames = Tensor::<f64>::new(&[12, 3], data).unwrap();
        for alpha in [Alpha::new(0.3, 0.1), Alpha::new(0.9, -0.7), Alpha::new(1.4, 2.0)] {
            let seg = sample_segment(&frames, alpha, 9).unwrap();
            for l in 0..9 {
                for (a, b) in seg.row(l).iter().zip(v) {
                    assert!(close(*a, b, 1e-12));
                }
            }
        }
    }

    #[test]
    fn short_grid_rejected() {
        let frames = Tensor::<f64>::zeros(&[10, 2]);
        assert!(sample_segment(&frames, Alpha::new(0.5, 0.0), 1).is_err());
    }

    #[test]
    fn alpha_gradient_matches_finite_differences() {
        let mut rng = crate::rng_from_seed(11);
        let frames = Tensor::<f64>::randn(&[17, 5], 1.0, &mut rng);
        let weights = Tensor::<f64>::randn(&[6, 5], 1.0, &mut rng);
        let f = |a: &[f64; 2]| -> f64 {
            let s = sample_segment(&frames, Alpha::new(a[0], a[1]), 6).unwrap();
            s.data().iter().zip(weights.data()).map(|(x, w)| x * w).sum()
        };
        for alpha in [[0.37, 0.11], [0.61, -0.23], [0.52, 0.31]] {
            let at = Tensor::<f64>::from_f64(&[2], &alpha).unwrap();
            let mut g = Graph::new();
            let fv = g.input(&frames);
            let av = g.param(&at);
            let s = g.sample_segment(fv, av, 6).unwrap();
            let wv = g.input(&weights);
            // weighted sum via square trick: sum(s * w) = sum over rows of dot
            let flat = g.reshape(s, &[30]).unwrap();
            let wflat = g.reshape(wv, &[30, 1]).unwrap();
            let row = g.reshape(flat, &[1, 30]).unwrap();
            let y = g.matmul(row, wflat).unwrap();
            let y = g.sum(y);
            assert!(close(g.value(y).data()[0], f(&alpha), 1e-12));
            let grads = g.backward(y);
            let ga = grads.get(av).unwrap().data().to_vec();
            let h = 1e-6;
            for k in 0..2 {
                let (mut p, mut m) = (alpha, alpha);
                p[k] += h;
                m[k] -= h;
                let num = (f(&p) - f(&m)) / (2.0 * h);
                let rel = (num - ga[k]).abs() / num.abs().max(ga[k].abs()).max(1e-8);
                assert!(rel < 1e-4, "k={k} analytic {} numeric {num}", ga[k]);
            }
        }
    }

    #[test]
    fn clamp_path_gradient_matches_finite_differences() {
        // α2 pushes the segment past t_e = M, so the clamp is active
        let mut rng = crate::rng_from_seed(5);
        let frames = Tensor::<f64>::randn(&[20, 3], 1.0, &mut rng);
        let f = |a: [f64; 2]| -> f64 {
            sample_segment(&frames, Alpha::new(a[0], a[1]), 5).unwrap().sum()
        };
        let alpha = [0.43, 0.8];
        let at = Tensor::<f64>::from_f64(&[2], &alpha).unwrap();
        let mut g = Graph::new();
        let fv = g.input(&frames);
        let av = g.param(&at);
        let s = g.sample_segment(fv, av, 5).unwrap();
        let y = g.sum(s);
        let ga = g.backward(y).get(av).unwrap().data().to_vec();
        assert_eq!(ga[1], 0.0);
        let h = 1e-6;
        let num = (f([alpha[0] + h, alpha[1]]) - f([alpha[0] - h, alpha[1]])) / (2.0 * h);
        assert!((num - ga[0]).abs() / num.abs().max(1e-8) < 1e-4);
    }
}
