//! Error metrics, empirical convergence rates and the data-rank diagnostic.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::geometry::Mesh;
use crate::greedy::FitTrace;
use crate::linalg::{self, Matrix};
use crate::math;
use crate::problems::KernelOracle;

/// Mean over rows of `‖u_j - ũ_j‖ / ‖u_j‖` in the mesh norm.
pub fn relative_l2_solutions(predicted: &Matrix, reference: &Matrix, mesh: &Mesh) -> Result<f64> {
    check_len("predicted vs reference rows", reference.rows(), predicted.rows())?;
    check_len("predicted vs reference columns", reference.cols(), predicted.cols())?;
    check_len("solutions vs mesh", mesh.len(), reference.cols())?;
    if reference.rows() == 0 {
        return Err(Error::Metric("no solutions to compare".into()));
    }
    let w = mesh.weights();
    let mut diff = alloc::vec![0.0; reference.cols()];
    let mut acc = linalg::Neumaier::default();
    for j in 0..reference.rows() {
        let (u, p) = (reference.row(j), predicted.row(j));
        let denom = linalg::weighted_dot(w, u, u);
        if !(denom > 0.0) {
            return Err(Error::Metric(format!("reference solution {j} has zero norm")));
        }
        for ((d, a), b) in diff.iter_mut().zip(u).zip(p) {
            *d = a - b;
        }
        acc.add(math::sqrt(linalg::weighted_dot(w, &diff, &diff) / denom));
    }
    Ok(acc.value() / reference.rows() as f64)
}

/// `‖G - G̃‖ / ‖G‖` on the product of the output and input meshes, for
/// kernel tables with rows over `output` and columns over `input`.
pub fn relative_l2_tables(model: &Matrix, reference: &Matrix, output: &Mesh, input: &Mesh) -> Result<f64> {
    check_len("kernel table rows", output.len(), reference.rows())?;
    check_len("kernel table columns", input.len(), reference.cols())?;
    check_len("model table rows", reference.rows(), model.rows())?;
    check_len("model table columns", reference.cols(), model.cols())?;
    let w = input.weights();
    let mut num = linalg::Neumaier::default();
    let mut den = linalg::Neumaier::default();
    let mut diff = alloc::vec![0.0; input.len()];
    for (s, &ws) in output.weights().iter().enumerate() {
        let (g, m) = (reference.row(s), model.row(s));
        for ((d, a), b) in diff.iter_mut().zip(g).zip(m) {
            *d = a - b;
        }
        num.add(ws * linalg::weighted_dot(w, &diff, &diff));
        den.add(ws * linalg::weighted_dot(w, g, g));
    }
    let den = den.value();
    if !(den > 0.0) {
        return Err(Error::Metric("reference kernel has zero norm".into()));
    }
    Ok(math::sqrt(num.value() / den))
}

/// Relative kernel error against an analytic oracle.
pub fn relative_l2_kernel(model: &Matrix, oracle: &KernelOracle, output: &Mesh, input: &Mesh) -> Result<f64> {
    let reference = oracle.table(output, input)?;
    relative_l2_tables(model, &reference, output, input)
}

/// `|a - b|` elementwise.
pub fn pointwise_abs_error(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len("pointwise error operands", a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect())
}

/// Least-squares line through `(ln n, ln metric)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (usize, usize),
    pub r_squared: f64,
    pub points: usize,
}

/// Trace columns a rate can be fitted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricColumn {
    Residual,
    EpsU,
    EpsG,
}

impl MetricColumn {
    pub fn name(self) -> &'static str {
        match self {
            MetricColumn::Residual => "residual_H",
            MetricColumn::EpsU => "eps_u",
            MetricColumn::EpsG => "eps_G",
        }
    }

    pub fn extract(self, trace: &FitTrace) -> Vec<(usize, f64)> {
        match self {
            MetricColumn::Residual => trace.residuals(),
            MetricColumn::EpsU => trace.eps_u(),
            MetricColumn::EpsG => trace.eps_g(),
        }
    }
}

/// Fits `metric ≈ C n^slope` over points with `n_lo <= n <= n_hi` and a
/// positive metric.
pub fn fit_rate(points: &[(usize, f64)], window: (usize, usize)) -> Result<RateFit> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::RateFit(format!("window [{lo}, {hi}] is empty")));
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, v)| *n >= lo.max(1) && *n <= hi && *v > 0.0 && v.is_finite())
        .map(|&(n, v)| (math::ln(n as f64), math::ln(v)))
        .collect();
    if xy.len() < 3 {
        return Err(Error::RateFit(format!(
            "{} usable points in window [{lo}, {hi}], need at least 3",
            xy.len()
        )));
    }
    let m = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / m;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::RateFit("all points share one n".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        window,
        r_squared,
        points: xy.len(),
    })
}

pub fn fit_trace_rate(trace: &FitTrace, column: MetricColumn, window: (usize, usize)) -> Result<RateFit> {
    fit_rate(&column.extract(trace), window)
}

/// Predicted approximation exponent `1/2 + (2k + 1) / (2d)` for ReLU^k
/// atoms in `d` input dimensions.
pub fn theoretical_rate(k: u32, d: usize) -> f64 {
    0.5 + (2.0 * f64::from(k) + 1.0) / (2.0 * d as f64)
}

pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-8;

/// Singular values of the data matrix and the number above
/// `threshold_rel · σ_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub singular_values: Vec<f64>,
    pub effective_rank: usize,
}

pub fn data_rank_diagnostic(f: &Matrix, threshold_rel: f64) -> RankReport {
    let singular_values = linalg::singular_values(f);
    let cut = threshold_rel * singular_values.first().copied().unwrap_or(0.0);
    let effective_rank = singular_values.iter().filter(|&&s| s > cut).count();
    RankReport {
        singular_values,
        effective_rank,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::uniform_grid_1d;
    use crate::greedy::TraceRecord;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn solution_error_examples() {
        let mesh = uniform_grid_1d(0.0, 1.0, 5).unwrap();
        let u = Matrix::from_fn(3, 5, |j, t| 1.0 + j as f64 * t as f64);
        assert_eq!(relative_l2_solutions(&u, &u, &mesh).unwrap(), 0.0);
        let zero = Matrix::zeros(3, 5);
        assert!((relative_l2_solutions(&zero, &u, &mesh).unwrap() - 1.0).abs() < 1e-15);
        let err = relative_l2_solutions(&u, &zero, &mesh).unwrap_err();
        assert!(format!("{err}").contains("solution 0"));
    }

    #[test]
    fn solution_error_by_hand() {
        let mesh = uniform_grid_1d(0.0, 1.0, 5).unwrap();
        let u = Matrix::from_rows(&[
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.5, -1.0, 0.0, 2.0, 1.0],
            vec![3.0, 3.0, 3.0, 3.0, 3.0],
        ])
        .unwrap();
        let p = Matrix::from_rows(&[
            vec![1.0, 2.0, 3.0, 4.0, 4.0],
            vec![0.5, -1.0, 1.0, 2.0, 1.0],
            vec![3.0, 3.0, 3.0, 3.0, 0.0],
        ])
        .unwrap();
        // rows: |d|² = 1, 1, 9; |u|² = 55, 6.25, 45 (common weight cancels)
        let expect = (libm::sqrt(1.0 / 55.0) + libm::sqrt(1.0 / 6.25) + libm::sqrt(9.0 / 45.0)) / 3.0;
        assert!((relative_l2_solutions(&p, &u, &mesh).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn kernel_error_examples() {
        let mesh = uniform_grid_1d(0.0, 1.0, 7).unwrap();
        let oracle = KernelOracle::Poisson1d;
        let g = oracle.table(&mesh, &mesh).unwrap();
        assert_eq!(relative_l2_kernel(&g, &oracle, &mesh, &mesh).unwrap(), 0.0);
        let zero = Matrix::zeros(7, 7);
        assert!((relative_l2_kernel(&zero, &oracle, &mesh, &mesh).unwrap() - 1.0).abs() < 1e-15);
        assert!(relative_l2_tables(&g, &zero, &mesh, &mesh).is_err());
    }

    #[test]
    fn abs_error_examples() {
        assert_eq!(pointwise_abs_error(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(pointwise_abs_error(&[1.0, -2.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        let a = [0.3, -0.7, 2.5];
        let b = [1.0, 0.2, -0.5];
        let e = pointwise_abs_error(&a, &b).unwrap();
        for i in 0..3 {
            assert_eq!(e[i], if a[i] > b[i] { a[i] - b[i] } else { b[i] - a[i] });
        }
        assert!(pointwise_abs_error(&a, &b[..2]).is_err());
    }

    #[test]
    fn exact_power_laws() {
        let pts: Vec<(usize, f64)> = (1..=64).map(|n| (n, libm::pow(n as f64, -1.25))).collect();
        let fit = fit_rate(&pts, (2, 64)).unwrap();
        assert!((fit.slope + 1.25).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let pts: Vec<(usize, f64)> = (1..=64).map(|n| (n, 37.0 / n as f64)).collect();
        assert!((fit_rate(&pts, (16, 64)).unwrap().slope + 1.0).abs() < 1e-10);
        assert!(fit_rate(&pts, (16, 17)).is_err());
        assert!(fit_rate(&pts, (20, 16)).is_err());
    }

    #[test]
    fn trace_columns() {
        let trace = FitTrace {
            records: (0..10)
                .map(|n| TraceRecord {
                    n,
                    residual_h: 1.0 / (n as f64 + 1.0),
                    eps_u: (n % 2 == 0).then(|| 2.0 / (n as f64 + 1.0)),
                    eps_g: None,
                    score: 0.0,
                    gram_cond: 1.0,
                    coef_l1: 0.0,
                })
                .collect(),
        };
        assert_eq!(MetricColumn::EpsU.extract(&trace).len(), 5);
        assert!(fit_trace_rate(&trace, MetricColumn::EpsG, (1, 9)).is_err());
        assert!(fit_trace_rate(&trace, MetricColumn::Residual, (1, 9)).unwrap().slope < 0.0);
    }

    #[test]
    fn theoretical_exponents() {
        assert_eq!(theoretical_rate(1, 3), 1.0);
        assert_eq!(theoretical_rate(1, 2), 1.25);
        assert_eq!(theoretical_rate(1, 4), 0.875);
    }

    #[test]
    fn rank_examples() {
        let eye = Matrix::from_fn(4, 6, |i, j| if i == j { 1.0 } else { 0.0 });
        let r = data_rank_diagnostic(&eye, DEFAULT_RANK_THRESHOLD);
        assert_eq!(r.effective_rank, 4);
        assert!(r.singular_values.iter().all(|s| (s - 1.0).abs() < 1e-14));
        let dup = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let r = data_rank_diagnostic(&dup, DEFAULT_RANK_THRESHOLD);
        assert_eq!(r.effective_rank, 2);
        assert!(r.singular_values[2] <= 1e-12 * r.singular_values[0]);
    }

    proptest! {
        #[test]
        fn solution_error_is_scale_invariant(c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3], seed in 0u64..1000) {
            let mesh = uniform_grid_1d(0.0, 1.0, 6).unwrap();
            let f = |j: usize, t: usize, s: u64| libm::sin((j * 7 + t) as f64 + s as f64) + 2.0;
            let u = Matrix::from_fn(3, 6, |j, t| f(j, t, seed));
            let p = Matrix::from_fn(3, 6, |j, t| f(j, t, seed + 1));
            let base = relative_l2_solutions(&p, &u, &mesh).unwrap();
            let mut cu = u.clone();
            let mut cp = p.clone();
            cu.as_mut_slice().iter_mut().for_each(|v| *v *= c);
            cp.as_mut_slice().iter_mut().for_each(|v| *v *= c);
            let scaled = relative_l2_solutions(&cp, &cu, &mesh).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-13 * base.max(1e-300));
        }

        #[test]
        fn singular_values_are_sorted(seed in 0u64..1000, r in 1usize..8, c in 1usize..8) {
            let m = Matrix::from_fn(r, c, |i, j| libm::sin((i * 13 + j * 7) as f64 + seed as f64));
            let s = data_rank_diagnostic(&m, DEFAULT_RANK_THRESHOLD).singular_values;
            prop_assert!(s.iter().all(|v| *v >= 0.0));
            prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
