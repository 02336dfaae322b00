use std::sync::Arc;

use approx::assert_relative_eq;
use greenfit_core::data::DataSet;
use greenfit_core::dictionary::{Atom, Sign};
use greenfit_core::geometry::{sunflower_disk, uniform_grid_1d, Mesh};
use greenfit_core::greedy::{OgaConfig, Termination};
use greenfit_core::kernel_oga::{evaluate_kernel, fit_kernel, predict, predict_many, FitHooks, KernelFitConfig};
use greenfit_core::linalg::Matrix;
use greenfit_core::pointwise_oga::{assemble_kernel, fit_pointwise, predict_pointwise, predict_pointwise_many};
use greenfit_core::problems::{synthesize_dataset, GpConfig, KernelOracle, Split};
use proptest::prelude::*;

fn poisson(m: usize, train: usize, test: usize) -> (DataSet, DataSet) {
    let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, m).unwrap());
    let split = Split { train, test };
    let (a, b) = synthesize_dataset(&KernelOracle::Poisson1d, &mesh, &mesh, &GpConfig::new(0.05, 3), split, true).unwrap();
    (a, b.unwrap())
}

fn residuals_decrease(trace: &[greenfit_core::greedy::TraceRecord]) {
    let r0 = trace[0].residual_h;
    for w in trace.windows(2) {
        assert!(w[1].residual_h <= w[0].residual_h + 1e-12 * r0, "{} -> {}", w[0].residual_h, w[1].residual_h);
    }
}

#[test]
fn kernel_fit_reduces_test_error() {
    let (train, test) = poisson(41, 60, 20);
    let config = KernelFitConfig::new(OgaConfig::new(24, 128, 1, 5));
    let hooks = FitHooks {
        eval: Some(&test),
        oracle: Some(&KernelOracle::Poisson1d),
        progress: None,
    };
    let model = fit_kernel(&train, &config, hooks).unwrap();
    let trace = &model.model.trace.records;
    residuals_decrease(trace);
    let first = trace[0].eps_u.unwrap();
    let last = trace.last().unwrap().eps_u.unwrap();
    assert_relative_eq!(first, 1.0, epsilon = 1e-12);
    assert!(last < 0.2 * first, "eps_u {last}");
    assert!(trace.last().unwrap().eps_g.unwrap() < 0.5);
}

#[test]
fn kernel_predictions_agree_with_table() {
    let (train, test) = poisson(31, 40, 5);
    let model = fit_kernel(&train, &KernelFitConfig::new(OgaConfig::new(10, 64, 1, 1)), FitHooks::default()).unwrap();
    let mesh = train.input_mesh();
    let table = evaluate_kernel(&model, mesh, mesh).unwrap();
    let many = predict_many(&model, test.forcings().values()).unwrap();
    for j in 0..test.len() {
        let f = test.forcings().row(j);
        let one = predict(&model, f).unwrap();
        for (i, &p) in one.iter().enumerate() {
            let direct: f64 = (0..mesh.len()).map(|t| table.get(i, t) * mesh.weights()[t] * f[t]).sum();
            assert_relative_eq!(p, direct, epsilon = 1e-12, max_relative = 1e-10);
            assert_relative_eq!(p, many.get(j, i), epsilon = 1e-14, max_relative = 1e-12);
        }
    }
}

#[test]
fn pointwise_fit_matches_its_kernel_rows() {
    let mesh = Arc::new(sunflower_disk(60, 1.0).unwrap());
    let oracle = KernelOracle::Cosine { dim: 2, wave: 1.0 };
    let split = Split { train: 30, test: 10 };
    let (train, test) = synthesize_dataset(&oracle, &mesh, &mesh, &GpConfig::new(0.3, 2), split, true).unwrap();
    let test = test.unwrap();
    let sensors = [0, 9, 31, 59];
    let hooks = FitHooks {
        eval: Some(&test),
        oracle: Some(&oracle),
        progress: None,
    };
    let fit = fit_pointwise(&train, &OgaConfig::new(12, 64, 1, 8), Some(&sensors), hooks).unwrap();
    assert!(fit.breakdowns.is_empty());
    for m in &fit.model.models {
        residuals_decrease(&m.trace.records);
        assert_ne!(m.termination, Termination::ProjectionBreakdown);
    }
    let rows = assemble_kernel(&fit.model).unwrap();
    let many = predict_pointwise_many(&fit.model, test.forcings().values()).unwrap();
    for j in 0..test.len() {
        let f = test.forcings().row(j);
        let p = predict_pointwise(&fit.model, f).unwrap();
        for (c, &v) in p.iter().enumerate() {
            let direct: f64 = (0..mesh.len()).map(|t| rows.get(c, t) * mesh.weights()[t] * f[t]).sum();
            assert_relative_eq!(v, direct, epsilon = 1e-12, max_relative = 1e-10);
            assert_relative_eq!(v, many.get(j, c), epsilon = 1e-14, max_relative = 1e-12);
        }
    }
    let last = fit.trace.last().unwrap();
    assert!(last.eps_u.unwrap() < 0.5);
}

#[test]
fn repeated_fits_are_identical() {
    let (train, _) = poisson(25, 20, 5);
    let cfg = OgaConfig::new(8, 32, 1, 11);
    let a = fit_pointwise(&train, &cfg, Some(&[3, 12]), FitHooks::default()).unwrap();
    let b = fit_pointwise(&train, &cfg, Some(&[3, 12]), FitHooks::default()).unwrap();
    assert_eq!(a, b);
    let c = fit_kernel(&train, &KernelFitConfig::new(cfg.clone()), FitHooks::default()).unwrap();
    let d = fit_kernel(&train, &KernelFitConfig::new(cfg), FitHooks::default()).unwrap();
    assert_eq!(c, d);
}

fn planted(mesh: &Arc<Mesh>, atom: &Atom, n: usize) -> DataSet {
    let m = mesh.len();
    let g = atom.evaluate_on(mesh).unwrap();
    // Forcings are shifted indicator-like bumps so the data has full rank.
    let f = Matrix::from_fn(n, m, |j, t| if (t + j) % n == 0 { 1.0 } else { 0.1 * ((j * 3 + t) % 5) as f64 });
    let w = mesh.weights();
    let u = Matrix::from_fn(n, m, |j, _| (0..m).map(|t| g[t] * w[t] * f.get(j, t)).sum());
    DataSet::from_parts(mesh.clone(), mesh.clone(), f, u, false).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pointwise_predictions_are_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..50) {
        let (train, test) = poisson(21, 16, 4);
        let fit = fit_pointwise(&train, &OgaConfig::new(5, 16, 1, seed), Some(&[4, 10]), FitHooks::default()).unwrap();
        let f1 = test.forcings().row(0);
        let f2 = test.forcings().row(1);
        let mix: Vec<f64> = f1.iter().zip(f2).map(|(x, y)| a * x + b * y).collect();
        let p = predict_pointwise(&fit.model, &mix).unwrap();
        let p1 = predict_pointwise(&fit.model, f1).unwrap();
        let p2 = predict_pointwise(&fit.model, f2).unwrap();
        for i in 0..p.len() {
            let expect = a * p1[i] + b * p2[i];
            prop_assert!((p[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn planted_ridge_is_recovered_by_each_sensor(bias in -0.8f64..-0.1, sensor in 0usize..17) {
        let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, 17).unwrap());
        let atom = Atom::new(Sign::Plus, vec![1.0], bias, 1).unwrap();
        let data = planted(&mesh, &atom, 17);
        // Sampled dictionaries rarely contain the planted atom exactly.
        let fit = fit_pointwise(&data, &OgaConfig::new(6, 256, 1, 3), Some(&[sensor]), FitHooks::default()).unwrap();
        let trace = &fit.model.models[0].trace.records;
        let r0 = trace[0].residual_h;
        let last = trace.last().unwrap().residual_h;
        prop_assert!(last <= 0.2 * r0 || r0 == 0.0, "{last} vs {r0}");
    }
}
