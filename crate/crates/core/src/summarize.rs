//! Emotion-oriented keyframe selection as a min-cost path with a max-diameter
//! constraint, solved by dynamic programming.
//!
//! A plan `h_1 = 1 < h_2 < ... < h_P = M` is feasible when every gap is at most
//! `K_max`, every window `[h_p, h_{p+1}]` has feature diameter at most `D_max`,
//! and `P <= T_max`. Its cost is `Σ_p cost(h_p)` with `cost = 1` inside the
//! emotional span and `2` outside.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tensor::{cosine, euclidean};
use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummarizationConfig {
    pub k_max: usize,
    pub d_max: f64,
    pub t_max: usize,
    /// Emotional span, 1-based inclusive; `None` makes every frame cost 2.
    pub span: Option<(usize, usize)>,
}

impl SummarizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max < 1 || !(self.d_max > 0.0) || self.t_max < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "need K_max >= 1, D_max > 0, T_max >= 2 (got {}, {}, {})",
                self.k_max,
                self.d_max,
                self.t_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPlan {
    /// Selected 1-based frame indices, strictly increasing.
    pub frames: Vec<usize>,
    pub cost: u64,
    /// Diameter of each window `[h_p, h_{p+1}]`.
    pub diameters: Vec<f64>,
}

pub fn frame_cost(frame: usize, span: Option<(usize, usize)>) -> u64 {
    match span {
        Some((s, e)) if frame >= s && frame <= e => 1,
        _ => 2,
    }
}

/// Largest pairwise Euclidean distance among rows `a..=b` (1-based).
pub fn segment_diameter<T: Scalar>(frames: &Tensor<T>, a: usize, b: usize) -> f64 {
    let mut best = 0.0f64;
    for i in a..=b {
        for j in i + 1..=b {
            best = best.max(euclidean(frames.row(i - 1), frames.row(j - 1)));
        }
    }
    best
}

fn first_infeasible_pair<T: Scalar>(frames: &Tensor<T>, d_max: f64) -> Option<(usize, usize, f64)> {
    (1..frames.rows()).find_map(|i| {
        let d = euclidean(frames.row(i - 1), frames.row(i));
        (d > d_max).then_some((i, i + 1, d))
    })
}

/// Window diameters for every start `a` and gap `g <= k`:
/// `diam[a][g] = max(diam[a][g-1], diam[a+1][g-1], d(a, a+g))`.
struct Diameters {
    k: usize,
    table: Vec<f64>,
}

impl Diameters {
    fn new<T: Scalar>(frames: &Tensor<T>, k: usize) -> Self {
        let m = frames.rows();
        let width = k + 1;
        let mut table = vec![0.0f64; m * width];
        for g in 1..=k {
            for a in 0..m.saturating_sub(g) {
                let d = euclidean(frames.row(a), frames.row(a + g));
                let inner = table[a * width + g - 1].max(table[(a + 1) * width + g - 1]);
                table[a * width + g] = inner.max(d);
            }
        }
        Self { k, table }
    }

    /// Diameter of 1-based window `[a, b]`, `b - a <= k`.
    fn get(&self, a: usize, b: usize) -> f64 {
        self.table[(a - 1) * (self.k + 1) + (b - a)]
    }
}

const INF: u64 = u64::MAX;

fn check_inputs<T: Scalar>(frames: &Tensor<T>, cfg: &SummarizationConfig) -> Result<usize> {
    cfg.validate()?;
    let m = frames.rows();
    if frames.shape().len() != 2 || m < 2 {
        return Err(Error::InvalidArgument("summarization needs at least 2 frames".into()));
    }
    if let Some((first, second, distance)) = first_infeasible_pair(frames, cfg.d_max) {
        return Err(Error::InfeasiblePair {
            first,
            second,
            distance,
            d_max: cfg.d_max,
        });
    }
    Ok(m)
}

/// Minimum-cost plan in `O(M · K_max · T_max)` after `O(M · K_max · D)`
/// distance precomputation. Among optimal plans, the one with the fewest
/// frames is returned.
pub fn dp_summarize<T: Scalar>(frames: &Tensor<T>, cfg: &SummarizationConfig) -> Result<SummaryPlan> {
    let m = check_inputs(frames, cfg)?;
    let k = cfg.k_max.min(m - 1);
    let t_max = cfg.t_max.min(m);
    let diam = Diameters::new(frames, k);
    let cost: Vec<u64> = (0..=m).map(|i| frame_cost(i, cfg.span)).collect();

    // prev[h] = N(t-1, h); back[t][h] = predecessor of h in the best t-frame prefix
    let mut prev = vec![INF; m + 1];
    prev[1] = 0;
    let mut back = vec![0u32; (t_max + 1) * (m + 1)];
    let mut best: Option<(u64, usize)> = None;
    for t in 2..=t_max {
        let mut cur = vec![INF; m + 1];
        let mut any = false;
        for h in 2..=m {
            let lo = h.saturating_sub(k).max(1);
            let mut bv = INF;
            let mut bp = 0;
            for hp in lo..h {
                if prev[hp] == INF || diam.get(hp, h) > cfg.d_max {
                    continue;
                }
                let v = prev[hp] + cost[hp];
                if v < bv {
                    bv = v;
                    bp = hp;
                }
            }
            if bv != INF {
                cur[h] = bv;
                back[t * (m + 1) + h] = bp as u32;
                any = true;
            }
        }
        if cur[m] != INF {
            let total = cur[m] + cost[m];
            if best.is_none_or(|(c, _)| total < c) {
                best = Some((total, t));
            }
        }
        if !any {
            break;
        }
        prev = cur;
    }
    let (total, count) = best.ok_or(Error::InfeasibleLength {
        frames: m,
        k_max: cfg.k_max,
        t_max: cfg.t_max,
    })?;
    let mut plan = vec![0usize; count];
    let mut h = m;
    for t in (1..=count).rev() {
        plan[t - 1] = h;
        if t > 1 {
            h = back[t * (m + 1) + h] as usize;
        }
    }
    let diameters = plan.windows(2).map(|w| diam.get(w[0], w[1])).collect();
    Ok(SummaryPlan {
        frames: plan,
        cost: total,
        diameters,
    })
}

/// Largest `M` accepted by [`brute_force_summarize`].
pub const BRUTE_FORCE_MAX_FRAMES: usize = 14;

/// Exhaustive search over all subsets containing the first and last frame.
/// Ties: fewer frames, then lexicographically smaller.
pub fn brute_force_summarize<T: Scalar>(frames: &Tensor<T>, cfg: &SummarizationConfig) -> Result<SummaryPlan> {
    let m = frames.rows();
    if m > BRUTE_FORCE_MAX_FRAMES {
        return Err(Error::InvalidArgument(alloc::format!(
            "brute force limited to M <= {BRUTE_FORCE_MAX_FRAMES}, got {m}"
        )));
    }
    let m = check_inputs(frames, cfg)?;
    let interior = m - 2;
    let mut best: Option<SummaryPlan> = None;
    for mask in 0u32..(1u32 << interior) {
        let mut plan = vec![1usize];
        plan.extend((0..interior).filter(|b| mask & (1 << b) != 0).map(|b| b + 2));
        plan.push(m);
        if plan.len() > cfg.t_max {
            continue;
        }
        if plan.windows(2).any(|w| w[1] - w[0] > cfg.k_max) {
            continue;
        }
        let diameters: Vec<f64> = plan.windows(2).map(|w| segment_diameter(frames, w[0], w[1])).collect();
        if diameters.iter().any(|&d| d > cfg.d_max) {
            continue;
        }
        let cost = plan.iter().map(|&h| frame_cost(h, cfg.span)).sum();
        let cand = SummaryPlan {
            frames: plan,
            cost,
            diameters,
        };
        let better = match &best {
            None => true,
            Some(b) => (cand.cost, cand.frames.len(), &cand.frames) < (b.cost, b.frames.len(), &b.frames),
        };
        if better {
            best = Some(cand);
        }
    }
    best.ok_or(Error::InfeasibleLength {
        frames: m,
        k_max: cfg.k_max,
        t_max: cfg.t_max,
    })
}

/// Checks every plan constraint from scratch and that `plan.cost` is the
/// sum of frame costs.
pub fn verify_plan<T: Scalar>(frames: &Tensor<T>, cfg: &SummarizationConfig, plan: &SummaryPlan) -> Result<()> {
    let m = frames.rows();
    let h = &plan.frames;
    let fail = |msg: alloc::string::String| Err(Error::InvalidArgument(msg));
    if h.first() != Some(&1) || h.last() != Some(&m) {
        return fail(alloc::format!("plan {h:?} must start at 1 and end at {m}"));
    }
    if h.len() > cfg.t_max {
        return fail(alloc::format!("plan has {} frames, T_max is {}", h.len(), cfg.t_max));
    }
    for w in h.windows(2) {
        if w[1] <= w[0] || w[1] - w[0] > cfg.k_max {
            return fail(alloc::format!("gap {} -> {} violates K_max {}", w[0], w[1], cfg.k_max));
        }
        let d = segment_diameter(frames, w[0], w[1]);
        if d > cfg.d_max {
            return fail(alloc::format!("window [{}, {}] diameter {d} exceeds D_max {}", w[0], w[1], cfg.d_max));
        }
    }
    let cost: u64 = h.iter().map(|&f| frame_cost(f, cfg.span)).sum();
    if cost != plan.cost {
        return fail(alloc::format!("plan cost {} but frame costs sum to {cost}", plan.cost));
    }
    Ok(())
}

/// `count` evenly spaced frames including the first and last (deduplicated).
pub fn uniform_baseline(len: usize, count: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    if count <= 1 || len == 1 {
        return vec![1];
    }
    let mut v: Vec<usize> = (0..count)
        .map(|j| libm::round(1.0 + j as f64 * (len - 1) as f64 / (count - 1) as f64) as usize)
        .collect();
    v.dedup();
    v
}

/// The `count` frames most similar (cosine) to the mean frame, in index order.
pub fn score_baseline<T: Scalar>(frames: &Tensor<T>, count: usize) -> Vec<usize> {
    let m = frames.rows();
    let d = frames.cols();
    let mut mean = vec![0.0f64; d];
    for i in 0..m {
        for (a, &b) in mean.iter_mut().zip(frames.row(i)) {
            *a += b.as_f64() / m as f64;
        }
    }
    let mut scored: Vec<(f64, usize)> = (0..m)
        .map(|i| {
            let row: Vec<f64> = frames.row(i).iter().map(|x| x.as_f64()).collect();
            (cosine(&row, &mean), i + 1)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut picked: Vec<usize> = scored.into_iter().take(count).map(|(_, i)| i).collect();
    picked.sort_unstable();
    picked
}

/// A random small instance for comparing [`dp_summarize`] with
/// [`brute_force_summarize`]: `M <= max_frames`, features in `[0, 4)^D`.
pub fn random_instance(rng: &mut crate::Rng, max_frames: usize) -> (Tensor<f64>, SummarizationConfig) {
    use rand::Rng as _;
    let m = rng.random_range(2..=max_frames.max(2));
    let d = rng.random_range(1..=3usize);
    let data: Vec<f64> = (0..m * d).map(|_| rng.random_range(0.0..4.0)).collect();
    let frames = Tensor::from_f64(&[m, d], &data).expect("shape matches data");
    // D_max around the typical adjacent distance keeps a mix of feasible
    // and infeasible instances.
    let d_max = rng.random_range(0.5..4.0) * libm::sqrt(d as f64);
    let span = if rng.random_bool(0.8) {
        let a = rng.random_range(1..=m);
        let b = rng.random_range(a..=m);
        Some((a, b))
    } else {
        None
    };
    let cfg = SummarizationConfig {
        k_max: rng.random_range(1..=m),
        d_max,
        t_max: rng.random_range(2..=m.max(2)),
        span,
    };
    (frames, cfg)
}

/// Outcome of one oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTrial {
    pub frames: usize,
    /// Optimal cost, `None` when both solvers report infeasibility.
    pub cost: Option<u64>,
    pub agree: bool,
}

/// Runs both solvers on `trials` random instances; a trial agrees when both
/// find the same cost (and the DP plan verifies) or both are infeasible.
pub fn oracle_trials(trials: usize, seed: u64) -> Vec<OracleTrial> {
    let mut rng = crate::rng_from_seed(seed);
    (0..trials)
        .map(|_| {
            let (frames, cfg) = random_instance(&mut rng, 12);
            let dp = dp_summarize(&frames, &cfg);
            let bf = brute_force_summarize(&frames, &cfg);
            let (cost, agree) = match (&dp, &bf) {
                (Ok(a), Ok(b)) => (Some(a.cost), a.cost == b.cost && verify_plan(&frames, &cfg, a).is_ok()),
                (Err(a), Err(b)) => (None, a.is_infeasible() && b.is_infeasible()),
                _ => (None, false),
            };
            OracleTrial {
                frames: frames.rows(),
                cost,
                agree,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq1d(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[v.len(), 1], v).unwrap()
    }

    fn cfg(k: usize, d: f64, t: usize, span: Option<(usize, usize)>) -> SummarizationConfig {
        SummarizationConfig {
            k_max: k,
            d_max: d,
            t_max: t,
            span,
        }
    }

    #[test]
    fn costs() {
        assert_eq!(frame_cost(3, Some((3, 4))), 1);
        assert_eq!(frame_cost(1, Some((3, 4))), 2);
        assert_eq!(frame_cost(3, None), 2);
    }

    #[test]
    fn diameters() {
        let f = seq1d(&[0.0, 1.0, 5.0]);
        assert_eq!(segment_diameter(&f, 2, 2), 0.0);
        assert_eq!(segment_diameter(&f, 1, 3), 5.0);
        assert_eq!(segment_diameter(&seq1d(&[2.0; 6]), 1, 6), 0.0);
        let table = Diameters::new(&f, 2);
        assert_eq!(table.get(1, 3), 5.0);
        assert_eq!(table.get(1, 2), 1.0);
    }

    #[test]
    fn identical_frames_pick_endpoints() {
        let f = seq1d(&[1.0; 6]);
        let c = cfg(5, 10.0, 6, Some((3, 4)));
        let dp = dp_summarize(&f, &c).unwrap();
        assert_eq!(dp.frames, vec![1, 6]);
        assert_eq!(dp.cost, 4);
        assert_eq!(brute_force_summarize(&f, &c).unwrap().cost, 4);
    }

    #[test]
    fn two_clusters_force_boundary_frames() {
        let f = seq1d(&[0.0, 0.1, 0.2, 5.0, 5.1, 5.2]);
        // the 3->4 jump is 4.8; D_max allows it only as an adjacent window
        let c = cfg(5, 5.0, 6, Some((3, 4)));
        let dp = dp_summarize(&f, &c).unwrap();
        let bf = brute_force_summarize(&f, &c).unwrap();
        assert_eq!(dp.cost, bf.cost);
        verify_plan(&f, &c, &dp).unwrap();
        assert!(dp.frames.iter().any(|&h| h <= 3) && dp.frames.iter().any(|&h| h >= 4));
        assert!(dp.frames.windows(2).all(|w| !(w[0] < 3 && w[1] > 4)));
    }

    #[test]
    fn unit_gap_selects_everything() {
        let f = seq1d(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let c = cfg(1, 10.0, 10, Some((2, 3)));
        let dp = dp_summarize(&f, &c).unwrap();
        assert_eq!(dp.frames, vec![1, 2, 3, 4, 5]);
        assert_eq!(dp.cost, 2 + 1 + 1 + 2 + 2);
    }

    #[test]
    fn two_frames_only_plan() {
        let f = seq1d(&[0.0, 1.0]);
        let c = cfg(3, 2.0, 2, None);
        assert_eq!(brute_force_summarize(&f, &c).unwrap().frames, vec![1, 2]);
        assert_eq!(dp_summarize(&f, &c).unwrap().frames, vec![1, 2]);
    }

    #[test]
    fn infeasible_verdicts_agree() {
        let f = seq1d(&[0.0, 0.1, 3.0, 3.1]);
        let c = cfg(3, 1.0, 4, None);
        let e1 = dp_summarize(&f, &c).unwrap_err();
        let e2 = brute_force_summarize(&f, &c).unwrap_err();
        assert_eq!(e1, e2);
        assert!(matches!(e1, Error::InfeasiblePair { first: 2, second: 3, .. }));

        let f = seq1d(&[0.0; 10]);
        let c = cfg(2, 1.0, 3, None);
        let e1 = dp_summarize(&f, &c).unwrap_err();
        assert_eq!(e1, brute_force_summarize(&f, &c).unwrap_err());
        assert!(matches!(e1, Error::InfeasibleLength { .. }));
    }

    #[test]
    fn brute_force_size_limit() {
        let f = seq1d(&[0.0; 15]);
        assert!(brute_force_summarize(&f, &cfg(3, 1.0, 15, None)).is_err());
    }

    #[test]
    fn baselines() {
        assert_eq!(uniform_baseline(30, 3), vec![1, 16, 30]);
        assert_eq!(uniform_baseline(30, 6), vec![1, 7, 13, 18, 24, 30]);
        let f = seq1d(&[1.0, 1.0, -1.0, 1.0]);
        assert_eq!(score_baseline(&f, 3), vec![1, 2, 4]);
    }
}
