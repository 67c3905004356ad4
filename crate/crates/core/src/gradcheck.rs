//! Central finite-difference gradient checking (64-bit).

use alloc::vec::Vec;

use crate::Tensor;

/// Per-coordinate relative error denominator floor.
pub const REL_FLOOR: f64 = 1e-6;

/// Largest `|a - b| / max(|a|, |b|, 1e-6)` over paired coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Central differences `(f(θ+h) - f(θ-h)) / 2h` for every coordinate of `theta`.
pub fn numeric_gradient(theta: &Tensor<f64>, h: f64, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut work = theta.clone();
    let mut out = Tensor::zeros(theta.shape());
    for i in 0..theta.len() {
        let orig = work.data()[i];
        work.data_mut()[i] = orig + h;
        let fp = f(&work);
        work.data_mut()[i] = orig - h;
        let fm = f(&work);
        work.data_mut()[i] = orig;
        out.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, element index)` of the worst coordinate.
    pub worst: (usize, usize),
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_values: (f64, f64),
    pub coordinates: usize,
}

/// Compares the reverse-mode gradient returned by `f` against central
/// differences of its value, over every coordinate of every tensor in `params`.
///
/// `f` must return the scalar objective and one gradient tensor per entry of
/// `params`, in order.
pub fn grad_check<F>(params: &[Tensor<f64>], h: f64, mut f: F) -> GradCheckReport
where
    F: FnMut(&[Tensor<f64>]) -> (f64, Vec<Tensor<f64>>),
{
    let (_, analytic) = f(params);
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        worst_values: (0.0, 0.0),
        coordinates: 0,
    };
    for (ti, g) in analytic.iter().enumerate() {
        for i in 0..work[ti].len() {
            let orig = work[ti].data()[i];
            work[ti].data_mut()[i] = orig + h;
            let fp = f(&work).0;
            work[ti].data_mut()[i] = orig - h;
            let fm = f(&work).0;
            work[ti].data_mut()[i] = orig;
            let num = (fp - fm) / (2.0 * h);
            let a = g.data()[i];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(REL_FLOOR);
            report.coordinates += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (ti, i);
                report.worst_values = (a, num);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn sum_has_unit_gradient() {
        let mut rng = crate::rng_from_seed(0);
        let p = Tensor::<f64>::randn(&[3, 4], 1.0, &mut rng);
        let r = grad_check(&[p], 1e-5, |ps| {
            let mut g = Graph::new();
            let v = g.param(&ps[0]);
            let s = g.sum(v);
            let grads = g.backward(s);
            let gv = grads.get(v).unwrap().clone();
            assert!(gv.data().iter().all(|&x| x == 1.0));
            (g.value(s).data()[0], alloc::vec![gv])
        });
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn constant_has_zero_gradient() {
        let p = Tensor::<f64>::full(&[5], 0.3);
        let r = grad_check(&[p], 1e-5, |_| (4.0, alloc::vec![Tensor::zeros(&[5])]));
        assert!(r.max_rel_error < 1e-10);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(max_relative_error(&[0.0], &[0.0]), 0.0);
        assert!((max_relative_error(&[1e-9], &[0.0]) - 1e-3).abs() < 1e-12);
        assert!((max_relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
    }
}
