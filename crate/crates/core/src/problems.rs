//! Analytic kernels, Gaussian-process forcings and dataset synthesis.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::DataSet;
use crate::error::{check_len, invalid, Error, Result};
use crate::geometry::Mesh;
use crate::linalg::{self, gemm, Matrix};
use crate::math;
use crate::products::{l2_norm, FieldSet};

/// Nodes closer than this count as coincident for the log singularity.
pub const COINCIDENCE_TOL: f64 = 1e-12;
/// Distance substituted for coincident nodes in the log kernel.
pub const LOG_CLAMP: f64 = 1e-8;
const DOMAIN_TOL: f64 = 1e-12;

fn check_unit_interval(x: f64, y: f64) -> Result<()> {
    let inside = |v: f64| (-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&v);
    if inside(x) && inside(y) {
        Ok(())
    } else {
        Err(invalid(format!("({x}, {y}) lies outside [0, 1]²")))
    }
}

/// Green's function of `u'' = f` on `[0, 1]` with homogeneous Dirichlet
/// conditions.
pub fn poisson1d_green(x: f64, y: f64) -> Result<f64> {
    check_unit_interval(x, y)?;
    Ok(poisson_unchecked(x, y))
}

#[inline]
fn poisson_unchecked(x: f64, y: f64) -> f64 {
    if x <= y {
        x * (y - 1.0)
    } else {
        y * (x - 1.0)
    }
}

fn check_resonance(k: f64) -> Result<()> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(invalid(format!("wave number {k} must be positive")));
    }
    if math::sin(k).abs() < 1e-12 {
        return Err(invalid(format!("wave number {k} is resonant (sin K = 0)")));
    }
    Ok(())
}

/// Green's function of `u'' + K² u = f` on `[0, 1]` with homogeneous
/// Dirichlet conditions: `sin(K min) sin(K (max - 1)) / (K sin K)`.
pub fn helmholtz1d_green(x: f64, y: f64, k: f64) -> Result<f64> {
    check_unit_interval(x, y)?;
    check_resonance(k)?;
    Ok(helmholtz_unchecked(x, y, k))
}

#[inline]
fn helmholtz_unchecked(x: f64, y: f64, k: f64) -> f64 {
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    math::sin(k * lo) * math::sin(k * (hi - 1.0)) / (k * math::sin(k))
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    math::sqrt(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `cos(k π |x - y|)`
pub fn cosine_kernel(x: &[f64], y: &[f64], wave: f64) -> Result<f64> {
    check_len("cosine kernel points", x.len(), y.len())?;
    Ok(math::cos(wave * PI * distance(x, y)))
}

/// `ln|x - y| cos(2π |x - y|)`, with the distance clamped to
/// [`LOG_CLAMP`] for coincident points.
pub fn logcos_kernel(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len("log-cosine kernel points", x.len(), y.len())?;
    Ok(logcos_of_distance(distance(x, y)))
}

#[inline]
fn logcos_of_distance(r: f64) -> f64 {
    if r <= COINCIDENCE_TOL {
        math::ln(LOG_CLAMP)
    } else {
        math::ln(r) * math::cos(2.0 * PI * r)
    }
}

#[inline]
fn t_ln_abs(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * math::ln(t.abs())
    }
}

/// Cell integral `∫_{y_k - h/2}^{y_k + h/2} ln|x - y| dy` of the log kernel
/// over one grid cell of width `h`.
pub fn log_kernel_discrete(x: f64, y_k: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("cell width {h} must be positive")));
    }
    let d = (x - y_k).abs();
    Ok(t_ln_abs(d + 0.5 * h) - t_ln_abs(d - 0.5 * h) - h)
}

/// Analytic kernels selectable by name.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelOracle {
    Poisson1d,
    Helmholtz1d { wave: f64 },
    Cosine { dim: usize, wave: f64 },
    LogCos { dim: usize },
    /// Cell-averaged log kernel on a grid of spacing `h`, i.e. the cell
    /// integral divided by `h`.
    LogDiscrete { h: f64 },
}

impl KernelOracle {
    pub const NAMES: [&'static str; 5] = ["poisson1d", "helmholtz1d", "cosine", "logcos", "logdiscrete"];

    /// Builds an oracle from its name; `wave` is the Helmholtz `K` or the
    /// cosine wave number, `h` the grid spacing for `logdiscrete`.
    pub fn from_name(name: &str, dim: usize, wave: Option<f64>, h: Option<f64>) -> Result<Self> {
        let oracle = match name {
            "poisson1d" => KernelOracle::Poisson1d,
            "helmholtz1d" => KernelOracle::Helmholtz1d {
                wave: wave.unwrap_or(15.0),
            },
            "cosine" => KernelOracle::Cosine {
                dim,
                wave: wave.unwrap_or(1.0),
            },
            "logcos" => KernelOracle::LogCos { dim },
            "logdiscrete" => KernelOracle::LogDiscrete {
                h: h.ok_or_else(|| invalid("logdiscrete needs a grid spacing"))?,
            },
            other => {
                return Err(invalid(format!(
                    "unknown kernel '{other}'; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        oracle.validate()?;
        Ok(oracle)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelOracle::Helmholtz1d { wave } => check_resonance(wave),
            KernelOracle::Cosine { dim, wave } => {
                if dim == 0 || !wave.is_finite() {
                    return Err(invalid("cosine kernel needs dim >= 1 and a finite wave number"));
                }
                Ok(())
            }
            KernelOracle::LogCos { dim: 0 } => Err(invalid("log-cosine kernel needs dim >= 1")),
            KernelOracle::LogDiscrete { h } if !(h > 0.0) => Err(invalid("grid spacing must be positive")),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelOracle::Poisson1d => "poisson1d",
            KernelOracle::Helmholtz1d { .. } => "helmholtz1d",
            KernelOracle::Cosine { .. } => "cosine",
            KernelOracle::LogCos { .. } => "logcos",
            KernelOracle::LogDiscrete { .. } => "logdiscrete",
        }
    }

    /// Human-readable parameter summary.
    pub fn describe(&self) -> String {
        match self {
            KernelOracle::Poisson1d => String::from("poisson1d"),
            KernelOracle::Helmholtz1d { wave } => format!("helmholtz1d K={wave}"),
            KernelOracle::Cosine { dim, wave } => format!("cosine dim={dim} wave={wave}"),
            KernelOracle::LogCos { dim } => format!("logcos dim={dim}"),
            KernelOracle::LogDiscrete { h } => format!("logdiscrete h={h}"),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            KernelOracle::Poisson1d | KernelOracle::Helmholtz1d { .. } | KernelOracle::LogDiscrete { .. } => 1,
            KernelOracle::Cosine { dim, .. } | KernelOracle::LogCos { dim } => dim,
        }
    }

    /// `G(x, y)`; points must have the oracle's dimension and lie in its
    /// domain (checked by [`KernelOracle::table`]).
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelOracle::Poisson1d => poisson_unchecked(x[0], y[0]),
            KernelOracle::Helmholtz1d { wave } => helmholtz_unchecked(x[0], y[0], wave),
            KernelOracle::Cosine { wave, .. } => math::cos(wave * PI * distance(x, y)),
            KernelOracle::LogCos { .. } => logcos_of_distance(distance(x, y)),
            KernelOracle::LogDiscrete { h } => {
                let d = (x[0] - y[0]).abs();
                (t_ln_abs(d + 0.5 * h) - t_ln_abs(d - 0.5 * h) - h) / h
            }
        }
    }

    fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        self.validate()?;
        check_len("oracle/mesh dimension", self.dim(), mesh.dim())?;
        if matches!(self, KernelOracle::Poisson1d | KernelOracle::Helmholtz1d { .. }) {
            for z in mesh.nodes() {
                check_unit_interval(z[0], 0.5)?;
            }
        }
        Ok(())
    }

    /// Kernel table `G(x_s, y_t)` with rows over `output` and columns over
    /// `input`.
    pub fn table(&self, output: &Mesh, input: &Mesh) -> Result<Matrix> {
        self.table_rows(output, input, 0, output.len())
    }

    /// Rows `lo..hi` of [`KernelOracle::table`].
    pub fn table_rows(&self, output: &Mesh, input: &Mesh, lo: usize, hi: usize) -> Result<Matrix> {
        self.check_mesh(output)?;
        self.check_mesh(input)?;
        if lo > hi || hi > output.len() {
            return Err(invalid("row range out of bounds"));
        }
        let mut t = Matrix::zeros(hi - lo, input.len());
        for s in lo..hi {
            let x = output.node(s);
            for (v, y) in t.row_mut(s - lo).iter_mut().zip(input.nodes()) {
                *v = self.evaluate(x, y);
            }
        }
        Ok(t)
    }
}

/// Squared-exponential Gaussian process for random forcings.
#[derive(Clone, Debug, PartialEq)]
pub struct GpConfig {
    pub length_scale: f64,
    pub variance: f64,
    pub jitter: f64,
    /// The low-rank factor stops once every conditional variance is at or
    /// below `truncation · variance`.
    pub truncation: f64,
    pub seed: u64,
}

impl GpConfig {
    pub fn new(length_scale: f64, seed: u64) -> Self {
        Self {
            length_scale,
            variance: 1.0,
            jitter: 1e-12,
            truncation: 1e-10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0) || !self.length_scale.is_finite() {
            return Err(invalid("length scale must be positive"));
        }
        if !(self.variance > 0.0) || !(self.jitter > 0.0) || !(self.truncation >= 0.0) {
            return Err(invalid("variance and jitter must be positive"));
        }
        Ok(())
    }
}

const MAX_JITTER: f64 = 1e-4;

/// Covariance `variance · exp(-|x - x'|² / (2 ℓ²)) + jitter · δ`.
pub fn covariance_matrix(mesh: &Mesh, config: &GpConfig) -> Result<Matrix> {
    config.validate()?;
    let n = mesh.len();
    Ok(Matrix::from_fn(n, n, |i, j| covariance_entry(mesh, config, config.jitter, i, j)))
}

#[inline]
fn covariance_entry(mesh: &Mesh, config: &GpConfig, jitter: f64, i: usize, j: usize) -> f64 {
    let r2: f64 = mesh
        .node(i)
        .iter()
        .zip(mesh.node(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mut c = config.variance * math::exp(-r2 / (2.0 * config.length_scale * config.length_scale));
    if i == j {
        c += jitter;
    }
    c
}

fn check_distinct(mesh: &Mesh) -> Result<()> {
    let mut order: Vec<usize> = (0..mesh.len()).collect();
    order.sort_by(|&a, &b| {
        mesh.node(a)
            .iter()
            .zip(mesh.node(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    for w in order.windows(2) {
        if mesh.node(w[0]) == mesh.node(w[1]) {
            return Err(invalid(format!("mesh nodes {} and {} coincide", w[0], w[1])));
        }
    }
    Ok(())
}

/// Low-rank factor `L` (rows = nodes) with `L Lᵀ ≈ C`, via a diagonally
/// pivoted Cholesky; the jitter grows tenfold up to `1e-4` if the
/// covariance proves numerically indefinite.
pub fn gp_factor(mesh: &Mesh, config: &GpConfig) -> Result<Matrix> {
    config.validate()?;
    check_distinct(mesh)?;
    let n = mesh.len();
    let tol = config.truncation * config.variance;
    let mut jitter = config.jitter;
    loop {
        let diag = vec![config.variance + jitter; n];
        let attempt = linalg::pivoted_cholesky(
            &diag,
            |p, out| {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = covariance_entry(mesh, config, jitter, i, p);
                }
            },
            tol,
            1e3 * f64::EPSILON * (config.variance + jitter),
        );
        match attempt {
            Ok(pc) => {
                let r = pc.columns.len();
                return Ok(Matrix::from_fn(n, r, |i, k| pc.columns[k][i]));
            }
            Err(_) if jitter * 10.0 <= MAX_JITTER => jitter *= 10.0,
            Err(e) => {
                return Err(Error::Generation(format!(
                    "covariance factorization failed with jitter {jitter}: {e}"
                )))
            }
        }
    }
}

/// `N` draws of the zero-mean process at the mesh nodes, one per row.
pub fn sample_gp_forcings(mesh: &Arc<Mesh>, n_samples: usize, config: &GpConfig) -> Result<FieldSet> {
    let factor = gp_factor(mesh, config)?;
    let r = factor.cols();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut z = Matrix::zeros(n_samples, r);
    for v in z.as_mut_slice() {
        *v = StandardNormal.sample(&mut rng);
    }
    let f = gemm(1.0, &z, false, &factor, true)?;
    FieldSet::new(f, mesh.clone())
}

/// Responses `u_j = G ⋆ f_j` on `output` for each forcing row, computing
/// the oracle table in row blocks.
pub fn compute_responses(oracle: &KernelOracle, input: &Mesh, output: &Mesh, forcings: &Matrix) -> Result<Matrix> {
    check_len("forcings vs input mesh", input.len(), forcings.cols())?;
    let mut weighted = forcings.clone();
    weighted.scale_columns(input.weights());
    let (n, m_u) = (forcings.rows(), output.len());
    let mut u = Matrix::zeros(n, m_u);
    const BLOCK: usize = 256;
    let mut lo = 0;
    while lo < m_u {
        let hi = (lo + BLOCK).min(m_u);
        let table = oracle.table_rows(output, input, lo, hi)?;
        let part = gemm(1.0, &weighted, false, &table, true)?;
        for j in 0..n {
            u.row_mut(j)[lo..hi].copy_from_slice(part.row(j));
        }
        lo = hi;
    }
    Ok(u)
}

/// Rescales each pair by `1 / ‖f_j‖`.
pub fn normalize_pairs(f: &mut Matrix, u: &mut Matrix, input: &Mesh) -> Result<()> {
    for j in 0..f.rows() {
        let norm = l2_norm(f.row(j), input)?;
        if !(norm > 0.0) {
            return Err(invalid(format!("forcing {j} has zero norm and cannot be normalized")));
        }
        f.row_mut(j).iter_mut().for_each(|v| *v /= norm);
        u.row_mut(j).iter_mut().for_each(|v| *v /= norm);
    }
    Ok(())
}

/// Train/test sizes of a synthesized data set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: usize,
    pub test: usize,
}

/// Samples forcings, integrates the oracle against them, optionally
/// normalizes, and splits into the first `train` and next `test` pairs.
pub fn synthesize_dataset(
    oracle: &KernelOracle,
    input: &Arc<Mesh>,
    output: &Arc<Mesh>,
    gp: &GpConfig,
    split: Split,
    normalize: bool,
) -> Result<(DataSet, Option<DataSet>)> {
    if split.train == 0 {
        return Err(invalid("training split must be non-empty"));
    }
    let all = synthesize_pairs(oracle, input, output, gp, split.train + split.test, normalize)?;
    all.split(split.train, split.test)
}

/// `n` unsplit pairs, as used by [`synthesize_dataset`].
pub fn synthesize_pairs(
    oracle: &KernelOracle,
    input: &Arc<Mesh>,
    output: &Arc<Mesh>,
    gp: &GpConfig,
    n: usize,
    normalize: bool,
) -> Result<DataSet> {
    let mut f = sample_gp_forcings(input, n, gp)?.into_values();
    let mut u = compute_responses(oracle, input, output, &f)?;
    if normalize {
        normalize_pairs(&mut f, &mut u, input)?;
    }
    DataSet::from_parts(input.clone(), output.clone(), f, u, normalize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sunflower_disk, uniform_grid_1d};
    use crate::products::kernel_apply;
    use proptest::prelude::*;

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson1d_green(0.5, 0.5).unwrap(), -0.25);
        for y in [0.0, 0.3, 1.0] {
            assert_eq!(poisson1d_green(0.0, y).unwrap(), 0.0);
            assert_eq!(poisson1d_green(1.0, y).unwrap(), 0.0);
        }
        assert!(poisson1d_green(1.5, 0.2).is_err());
    }

    #[test]
    fn helmholtz_examples() {
        for y in [0.0, 0.25, 0.7, 1.0] {
            assert!(helmholtz1d_green(0.0, y, 15.0).unwrap().abs() < 1e-15);
            assert!(helmholtz1d_green(1.0, y, 15.0).unwrap().abs() < 1e-15);
        }
        // independent evaluation: sin(15·0.3)·sin(15·(0.7 − 1))/(15·sin 15)
        let v = helmholtz1d_green(0.3, 0.7, 15.0).unwrap();
        assert!((v - (-0.097_963_298_909_957_9)).abs() < 1e-14, "{v}");
        assert!(helmholtz1d_green(0.3, 0.7, 2.0 * PI).is_err());
    }

    #[test]
    fn helmholtz_solves_the_ode() {
        // u'' + K² u = f with f = 1 and u(0) = u(1) = 0 has
        // u = (1 - cos Kx - (1 - cos K) sin Kx / sin K) / K²
        let k: f64 = 15.0;
        let mesh = uniform_grid_1d(0.0, 1.0, 2001).unwrap();
        let table = KernelOracle::Helmholtz1d { wave: k }.table(&mesh, &mesh).unwrap();
        let u = kernel_apply(&table, &vec![1.0; 2001], &mesh).unwrap();
        let mut err: f64 = 0.0;
        for (s, x) in mesh.nodes().enumerate() {
            let x = x[0];
            let exact = (1.0 - libm::cos(k * x) - (1.0 - libm::cos(k)) * libm::sin(k * x) / libm::sin(k)) / (k * k);
            err = err.max((u[s] - exact).abs());
        }
        assert!(err < 2e-3, "{err}");
    }

    #[test]
    fn cosine_and_logcos_examples() {
        assert_eq!(cosine_kernel(&[0.3, 0.4], &[0.3, 0.4], 1.0).unwrap(), 1.0);
        assert!((cosine_kernel(&[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap() + 1.0).abs() < 1e-15);
        let (x, y) = ([0.1, 0.2], [0.4, -0.3]);
        let r = libm::sqrt(0.09 + 0.25);
        assert!((cosine_kernel(&x, &y, 4.0).unwrap() - libm::cos(4.0 * PI * r)).abs() < 1e-13);
        assert_eq!(logcos_kernel(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let v = logcos_kernel(&[0.0], &[0.5]).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-15);
        let c = logcos_kernel(&[0.2, 0.2, 0.2], &[0.2, 0.2, 0.2]).unwrap();
        assert!(c.is_finite() && (c - libm::log(1e-8)).abs() < 1e-15);
    }

    #[test]
    fn log_kernel_discrete_examples() {
        let h = 0.1;
        let mid = log_kernel_discrete(0.3, 0.3, h).unwrap();
        assert!((mid - (-0.399_573_227_355_399_1)).abs() < 1e-15, "{mid}");
        for eps in [1e-7, 1e-9] {
            assert!((log_kernel_discrete(0.3 + eps, 0.3, h).unwrap() - mid).abs() < 1e-6);
            assert!((log_kernel_discrete(0.3 - eps, 0.3, h).unwrap() - mid).abs() < 1e-6);
        }
        // far field: the cell integral of ln|x - y| is h ln d - h³ / (24 d²) + ...
        for d in [0.5, 1.0, 1.7] {
            let v = log_kernel_discrete(d, 0.0, h).unwrap();
            let leading = h * libm::log(d);
            assert!((v - leading).abs() <= 2.0 * h * h * h / (24.0 * d * d), "{d}");
        }
        assert!(log_kernel_discrete(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn oracle_names_round_trip() {
        for name in KernelOracle::NAMES {
            let o = KernelOracle::from_name(name, 1, None, Some(0.1)).unwrap();
            assert_eq!(o.name(), name);
        }
        assert!(KernelOracle::from_name("bessel", 1, None, None).is_err());
        assert!(KernelOracle::from_name("logdiscrete", 1, None, None).is_err());
    }

    #[test]
    fn covariance_diagonal_is_variance_plus_jitter() {
        let mesh = uniform_grid_1d(0.0, 1.0, 6).unwrap();
        let cfg = GpConfig {
            variance: 2.0,
            jitter: 1e-6,
            ..GpConfig::new(0.3, 1)
        };
        let c = covariance_matrix(&mesh, &cfg).unwrap();
        for i in 0..6 {
            assert_eq!(c.get(i, i), 2.0 + 1e-6);
        }
    }

    #[test]
    fn coincident_nodes_are_rejected() {
        let mesh = Arc::new(Mesh::with_volume(1, vec![0.0, 0.5, 0.5], 1.0).unwrap());
        assert!(sample_gp_forcings(&mesh, 2, &GpConfig::new(0.1, 0)).is_err());
    }

    #[test]
    fn factor_reproduces_covariance() {
        let mesh = sunflower_disk(60, 1.0).unwrap();
        let cfg = GpConfig::new(0.3, 0);
        let l = gp_factor(&mesh, &cfg).unwrap();
        let c = covariance_matrix(&mesh, &cfg).unwrap();
        let llt = gemm(1.0, &l, false, &l, true).unwrap();
        for (a, b) in llt.as_slice().iter().zip(c.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn longer_length_scales_give_lower_rank() {
        let mesh = sunflower_disk(200, 1.0).unwrap();
        let short = gp_factor(&mesh, &GpConfig::new(0.1, 0)).unwrap().cols();
        let long = gp_factor(&mesh, &GpConfig::new(0.5, 0)).unwrap().cols();
        assert!(long < short, "{long} vs {short}");
    }

    #[test]
    fn sample_mean_is_near_zero() {
        let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, 5).unwrap());
        let f = sample_gp_forcings(&mesh, 10_000, &GpConfig::new(0.2, 17)).unwrap();
        let mean: f64 = (0..10_000).map(|j| f.row(j)[2]).sum::<f64>() / 1e4;
        assert!(mean.abs() <= 4.0 / 100.0, "{mean}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, 30).unwrap());
        let a = sample_gp_forcings(&mesh, 4, &GpConfig::new(0.1, 5)).unwrap();
        let b = sample_gp_forcings(&mesh, 4, &GpConfig::new(0.1, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_kernel_and_constant_forcing() {
        let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, 9).unwrap());
        let zero = KernelOracle::Cosine { dim: 1, wave: 0.5 };
        let f = Matrix::from_fn(1, 9, |_, _| 2.0);
        let u = compute_responses(&zero, &mesh, &mesh, &f).unwrap();
        for s in 0..9 {
            let x = mesh.node(s)[0];
            let mut hand = 0.0;
            for t in 0..9 {
                let y = mesh.node(t)[0];
                hand += (1.0 / 9.0) * libm::cos(0.5 * PI * (x - y).abs()) * 2.0;
            }
            assert!((u.get(0, s) - hand).abs() < 1e-14);
        }
    }

    #[test]
    fn synthesized_poisson_protocol() {
        let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, 101).unwrap());
        let split = Split { train: 20, test: 7 };
        let (train, test) =
            synthesize_dataset(&KernelOracle::Poisson1d, &mesh, &mesh, &GpConfig::new(0.05, 7), split, true).unwrap();
        assert_eq!(train.len(), 20);
        assert_eq!(test.unwrap().len(), 7);
        for j in 0..20 {
            let n = l2_norm(train.forcings().row(j), &mesh).unwrap();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn green_functions_are_symmetric_and_vanish_on_boundary(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            prop_assert_eq!(poisson1d_green(x, y).unwrap(), poisson1d_green(y, x).unwrap());
            prop_assert_eq!(helmholtz1d_green(x, y, 15.0).unwrap(), helmholtz1d_green(y, x, 15.0).unwrap());
            prop_assert!(helmholtz1d_green(0.0, y, 15.0).unwrap().abs() <= 1e-15);
            prop_assert!(helmholtz1d_green(1.0, y, 15.0).unwrap().abs() <= 1e-15);
            prop_assert_eq!(poisson1d_green(1.0, y).unwrap(), 0.0);
        }

        #[test]
        fn responses_are_linear(c in -5.0f64..5.0, seed in any::<u64>()) {
            let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, 12).unwrap());
            let f = sample_gp_forcings(&mesh, 1, &GpConfig::new(0.2, seed)).unwrap().into_values();
            let mut cf = f.clone();
            cf.as_mut_slice().iter_mut().for_each(|v| *v *= c);
            let o = KernelOracle::Helmholtz1d { wave: 15.0 };
            let u = compute_responses(&o, &mesh, &mesh, &f).unwrap();
            let cu = compute_responses(&o, &mesh, &mesh, &cf).unwrap();
            for (a, b) in u.as_slice().iter().zip(cu.as_slice()) {
                prop_assert!((c * a - b).abs() <= 1e-13 * (1.0 + b.abs()));
            }
        }
    }
}
