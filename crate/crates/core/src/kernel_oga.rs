//! Greedy estimation of a full kernel `G(x, y)` with atoms on the
//! concatenated point `[x, y]`, under the data semi-inner product.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::DataSet;
use crate::dictionary::Atom;
use crate::error::{check_len, invalid, Error, Result};
use crate::geometry::{bias_bounds_product, BiasBounds, Mesh};
use crate::greedy::{run_oga, GreedyModel, GreedyProblem, Observer, OgaConfig, TraceRecord};
use crate::linalg::{gemm, Matrix};
use crate::math;
use crate::metrics::{relative_l2_solutions, relative_l2_tables};
use crate::problems::KernelOracle;
use crate::products::mean_weighted_row_dot;

/// Default cap on cached atom responses, in bytes.
pub const DEFAULT_CACHE_BYTES: usize = 3 << 30;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelFitConfig {
    pub oga: OgaConfig,
    /// Upper bound on the memory held by cached atom responses.
    pub max_cache_bytes: usize,
}

impl KernelFitConfig {
    pub fn new(oga: OgaConfig) -> Self {
        Self {
            oga,
            max_cache_bytes: DEFAULT_CACHE_BYTES,
        }
    }
}

/// Kernel expansion `Σ α_i g_i([x, y])` with its meshes.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelModel {
    pub model: GreedyModel,
    pub input: Arc<Mesh>,
    pub output: Arc<Mesh>,
}

impl KernelModel {
    pub fn new(model: GreedyModel, input: Arc<Mesh>, output: Arc<Mesh>) -> Result<Self> {
        let dim = input.dim() + output.dim();
        if let Some(a) = model.atoms.iter().find(|a| a.dim() != dim) {
            return Err(invalid(format!("atom dimension {} differs from {dim}", a.dim())));
        }
        check_len("kernel coefficients", model.atoms.len(), model.coefficients.len())?;
        Ok(Self { model, input, output })
    }
}

/// Optional diagnostics attached to a fit.
#[derive(Default)]
pub struct FitHooks<'a> {
    /// Pairs used for `ε_u`; the training data when absent.
    pub eval: Option<&'a DataSet>,
    /// Analytic kernel for `ε_G`.
    pub oracle: Option<&'a KernelOracle>,
    pub progress: Option<&'a mut dyn FnMut(&TraceRecord)>,
}

/// Per-row offsets `a_s = β + w_x · x_s` and per-column offsets
/// `b_t = w_y · y_t` of an atom on the product mesh.
fn split_preactivation(atom: &Atom, output: &Mesh, input: &Mesh) -> (Vec<f64>, Vec<f64>) {
    let dx = output.dim();
    let (wx, wy) = atom.direction.split_at(dx);
    let a = output
        .nodes()
        .map(|x| {
            let mut t = atom.bias;
            for (w, v) in wx.iter().zip(x) {
                t += w * v;
            }
            t
        })
        .collect();
    let b = input
        .nodes()
        .map(|y| wy.iter().zip(y).map(|(w, v)| w * v).sum())
        .collect();
    (a, b)
}

/// Atom values `g(x_s, y_t)`, rows over the output mesh.
pub fn atom_table(atom: &Atom, output: &Mesh, input: &Mesh) -> Result<Matrix> {
    check_len("atom vs product dimension", output.dim() + input.dim(), atom.dim())?;
    let (a, b) = split_preactivation(atom, output, input);
    let sign = atom.sign.value();
    let mut t = Matrix::zeros(a.len(), b.len());
    for (s, &as_) in a.iter().enumerate() {
        for (v, &bt) in t.row_mut(s).iter_mut().zip(&b) {
            *v = sign * math::relu_pow(as_ + bt, atom.power);
        }
    }
    Ok(t)
}

/// Prefix sums for scoring ridges when the input mesh is one-dimensional:
/// along each output row the active set of `σ_k(a_s + w_y y)` is a prefix
/// or suffix of the sorted input nodes, so the score reduces to a binary
/// search and `k + 1` moment sums.
struct SortedMoments {
    /// Input nodes in ascending order.
    y: Vec<f64>,
    order: Vec<usize>,
    power: u32,
    /// `moments[p][s * (m + 1) + i] = Σ_{i' < i} y_{i'}^p M(s, order[i'])`
    moments: Vec<Vec<f64>>,
    binom: Vec<f64>,
}

impl SortedMoments {
    fn new(input: &Mesh, power: u32) -> Self {
        let mut order: Vec<usize> = (0..input.len()).collect();
        order.sort_by(|&a, &b| input.node(a)[0].total_cmp(&input.node(b)[0]));
        let y = order.iter().map(|&t| input.node(t)[0]).collect();
        Self {
            y,
            order,
            power,
            moments: vec![Vec::new(); power as usize + 1],
            binom: (0..=power).map(|p| math::binomial(power, p)).collect(),
        }
    }

    fn refresh(&mut self, field: &Matrix) {
        let m = self.y.len();
        for (p, buf) in self.moments.iter_mut().enumerate() {
            buf.clear();
            buf.reserve(field.rows() * (m + 1));
            for s in 0..field.rows() {
                let row = field.row(s);
                let mut acc = 0.0;
                buf.push(0.0);
                for (i, &t) in self.order.iter().enumerate() {
                    acc += math::powi(self.y[i], p as u32) * row[t];
                    buf.push(acc);
                }
            }
        }
    }

    /// `Σ_s Σ_t σ_k(a_s + w y_t) M(s, t)`
    fn score(&self, a: &[f64], w: f64) -> f64 {
        let m = self.y.len();
        let k = self.power;
        let mut total = 0.0;
        for (s, &as_) in a.iter().enumerate() {
            // active index range [lo, hi) in sorted order
            let (lo, hi) = if w > 0.0 {
                (self.y.partition_point(|&y| !(as_ + w * y > 0.0)), m)
            } else if w < 0.0 {
                (0, self.y.partition_point(|&y| as_ + w * y > 0.0))
            } else if as_ > 0.0 {
                (0, m)
            } else {
                (0, 0)
            };
            if lo >= hi {
                continue;
            }
            let base = s * (m + 1);
            let mut row = 0.0;
            for p in 0..=k {
                let buf = &self.moments[p as usize];
                let sum = buf[base + hi] - buf[base + lo];
                row += self.binom[p as usize] * math::powi(as_, k - p) * math::powi(w, p) * sum;
            }
            total += row;
        }
        total
    }
}

/// Greedy problem for the whole kernel.
pub struct KernelProblem<'a> {
    data: &'a DataSet,
    /// `F diag(w)`
    fw: Matrix,
    bounds: BiasBounds,
    power: u32,
    target_sq: f64,
    /// `G_i ⋆ f_j` per selected atom, `N x m_u` each.
    cache: Vec<Matrix>,
    residual: Matrix,
    field: Matrix,
    moments: Option<SortedMoments>,
}

impl<'a> KernelProblem<'a> {
    pub fn new(data: &'a DataSet, power: u32) -> Result<Self> {
        let input = data.input_mesh();
        let output = data.output_mesh();
        let mut fw = data.forcings().values().clone();
        fw.scale_columns(input.weights());
        let u = data.responses().values();
        let target_sq = mean_weighted_row_dot(u, u, output.weights());
        let moments = (input.dim() == 1).then(|| SortedMoments::new(input, power));
        let mut p = Self {
            data,
            fw,
            bounds: bias_bounds_product(output, input)?,
            power,
            target_sq,
            cache: Vec::new(),
            residual: u.clone(),
            field: Matrix::zeros(output.len(), input.len()),
            moments,
        };
        p.refresh_field();
        Ok(p)
    }

    fn refresh_field(&mut self) {
        let n = self.data.len() as f64;
        // M = (1/N) diag(ω) Rᵀ F diag(w)
        let mut m = gemm(1.0 / n, &self.residual, true, &self.fw, false).expect("shapes checked at construction");
        for (s, ws) in self.data.output_mesh().weights().iter().enumerate() {
            m.row_mut(s).iter_mut().for_each(|v| *v *= ws);
        }
        self.field = m;
        if let Some(mom) = self.moments.as_mut() {
            mom.refresh(&self.field);
        }
    }

    fn responses_of(&self, atom: &Atom) -> Matrix {
        let t = atom_table(atom, self.data.output_mesh(), self.data.input_mesh()).expect("dimension checked");
        gemm(1.0, &self.fw, false, &t, true).expect("shapes checked at construction")
    }

    /// Direct correlation `Σ_{s,t} g(x_s, y_t) M(s, t)`, skipping the
    /// sorted-moment shortcut.
    pub fn direct_correlation(&self, atom: &Atom) -> f64 {
        let (a, b) = split_preactivation(atom, self.data.output_mesh(), self.data.input_mesh());
        let mut total = 0.0;
        for (s, &as_) in a.iter().enumerate() {
            let row = self.field.row(s);
            let mut acc = 0.0;
            for (&bt, &m) in b.iter().zip(row) {
                acc += math::relu_pow(as_ + bt, self.power) * m;
            }
            total += acc;
        }
        atom.sign.value() * total
    }

    pub fn residual(&self) -> &Matrix {
        &self.residual
    }
}

impl GreedyProblem for KernelProblem<'_> {
    fn atom_dim(&self) -> usize {
        self.data.input_mesh().dim() + self.data.output_mesh().dim()
    }

    fn bias_bounds(&self) -> BiasBounds {
        self.bounds
    }

    fn target_norm_sq(&self) -> f64 {
        self.target_sq
    }

    fn correlation(&self, atom: &Atom) -> f64 {
        match &self.moments {
            Some(mom) => {
                let (a, _) = split_preactivation(atom, self.data.output_mesh(), self.data.input_mesh());
                let w = atom.direction[atom.dim() - 1];
                atom.sign.value() * mom.score(&a, w)
            }
            None => self.direct_correlation(atom),
        }
    }

    fn atom_norm_sq(&self, atom: &Atom) -> f64 {
        let g = self.responses_of(atom);
        mean_weighted_row_dot(&g, &g, self.data.output_mesh().weights())
    }

    fn push_atom(&mut self, atom: &Atom) -> Result<()> {
        check_len("atom dimension", self.atom_dim(), atom.dim())?;
        self.cache.push(self.responses_of(atom));
        Ok(())
    }

    fn pop_atom(&mut self) {
        self.cache.pop();
    }

    fn gram_entry(&self, i: usize, j: usize) -> f64 {
        mean_weighted_row_dot(&self.cache[i], &self.cache[j], self.data.output_mesh().weights())
    }

    fn rhs_entry(&self, i: usize) -> f64 {
        mean_weighted_row_dot(self.data.responses().values(), &self.cache[i], self.data.output_mesh().weights())
    }

    fn update_residual(&mut self, alpha: &[f64]) -> f64 {
        let mut r = self.data.responses().values().clone();
        for (a, g) in alpha.iter().zip(&self.cache) {
            crate::linalg::axpy(-a, g.as_slice(), r.as_mut_slice());
        }
        self.residual = r;
        self.refresh_field();
        let sq = mean_weighted_row_dot(&self.residual, &self.residual, self.data.output_mesh().weights());
        math::sqrt(sq.max(0.0))
    }

    fn selected_correlation(&self, i: usize) -> f64 {
        mean_weighted_row_dot(&self.residual, &self.cache[i], self.data.output_mesh().weights())
    }
}

/// Kernel table `Σ α_i g_i(x_s, y_t)` from atoms and coefficients.
pub fn kernel_table(atoms: &[Atom], coefficients: &[f64], output: &Mesh, input: &Mesh) -> Result<Matrix> {
    check_len("kernel coefficients", atoms.len(), coefficients.len())?;
    let mut table = Matrix::zeros(output.len(), input.len());
    for (atom, &c) in atoms.iter().zip(coefficients) {
        check_len("atom vs product dimension", output.dim() + input.dim(), atom.dim())?;
        let (a, b) = split_preactivation(atom, output, input);
        let sc = c * atom.sign.value();
        for (s, &as_) in a.iter().enumerate() {
            for (v, &bt) in table.row_mut(s).iter_mut().zip(&b) {
                *v += sc * math::relu_pow(as_ + bt, atom.power);
            }
        }
    }
    Ok(table)
}

/// Kernel values of the model on a pair of meshes.
pub fn evaluate_kernel(model: &KernelModel, output: &Mesh, input: &Mesh) -> Result<Matrix> {
    kernel_table(&model.model.atoms, &model.model.coefficients, output, input)
}

/// `u(x_s) = Σ_t w_t G_n(x_s, y_t) f(y_t)` on the model's meshes.
pub fn predict(model: &KernelModel, f: &[f64]) -> Result<Vec<f64>> {
    let t = evaluate_kernel(model, &model.output, &model.input)?;
    crate::products::kernel_apply(&t, f, &model.input)
}

/// Responses for every row of `forcings`.
pub fn predict_many(model: &KernelModel, forcings: &Matrix) -> Result<Matrix> {
    let t = evaluate_kernel(model, &model.output, &model.input)?;
    crate::products::kernel_apply_many(&t, forcings, &model.input)
}

/// Diagnostics observer shared by the kernel fits.
pub(crate) struct KernelMonitor<'a> {
    eval: &'a DataSet,
    oracle_table: Option<Matrix>,
    progress: Option<&'a mut dyn FnMut(&TraceRecord)>,
}

impl<'a> KernelMonitor<'a> {
    pub(crate) fn new(train: &'a DataSet, hooks: FitHooks<'a>) -> Result<Self> {
        let eval = hooks.eval.unwrap_or(train);
        if eval.input_mesh() != train.input_mesh() || eval.output_mesh() != train.output_mesh() {
            return Err(invalid("evaluation data must share the training meshes"));
        }
        let oracle_table = match hooks.oracle {
            Some(o) => Some(o.table(train.output_mesh(), train.input_mesh())?),
            None => None,
        };
        Ok(Self {
            eval,
            oracle_table,
            progress: hooks.progress,
        })
    }
}

impl Observer for KernelMonitor<'_> {
    fn diagnostics(&mut self, atoms: &[Atom], coefficients: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
        let (out, inp) = (self.eval.output_mesh(), self.eval.input_mesh());
        let table = kernel_table(atoms, coefficients, out, inp)?;
        let pred = crate::products::kernel_apply_many(&table, self.eval.forcings().values(), inp)?;
        let eps_u = relative_l2_solutions(&pred, self.eval.responses().values(), out)?;
        let eps_g = match &self.oracle_table {
            Some(g) => Some(relative_l2_tables(&table, g, out, inp)?),
            None => None,
        };
        Ok((Some(eps_u), eps_g))
    }

    fn on_record(&mut self, record: &TraceRecord) {
        if let Some(p) = self.progress.as_mut() {
            p(record);
        }
    }
}

/// Fits the kernel behind `data` by the greedy algorithm.
pub fn fit_kernel<'a>(data: &'a DataSet, config: &KernelFitConfig, hooks: FitHooks<'a>) -> Result<KernelModel> {
    config.oga.validate()?;
    let per_atom = data.len() * data.output_mesh().len() * core::mem::size_of::<f64>();
    let need = per_atom.saturating_mul(config.oga.n_max);
    if need > config.max_cache_bytes {
        return Err(Error::ResourceLimit(format!(
            "{} atoms need {need} bytes of cached responses, over the cap of {}",
            config.oga.n_max, config.max_cache_bytes
        )));
    }
    let mut problem = KernelProblem::new(data, config.oga.power)?;
    let mut monitor = KernelMonitor::new(data, hooks)?;
    let model = run_oga(&mut problem, &config.oga, &mut monitor)?;
    KernelModel::new(model, data.input_mesh().clone(), data.output_mesh().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{sample_dictionary, RandomDictionary, Sign};
    use crate::geometry::{sunflower_disk, uniform_grid_1d};
    use crate::greedy::{orthogonality_defect, run_oga_with, Silent};
    use crate::problems::{compute_responses, sample_gp_forcings, GpConfig};
    use crate::products::{kernel_apply, semi_inner};

    fn data_1d(m: usize, n: usize, oracle: &KernelOracle, seed: u64) -> DataSet {
        let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, m).unwrap());
        let f = sample_gp_forcings(&mesh, n, &GpConfig::new(0.1, seed)).unwrap().into_values();
        let u = compute_responses(oracle, &mesh, &mesh, &f).unwrap();
        DataSet::from_parts(mesh.clone(), mesh, f, u, false).unwrap()
    }

    #[test]
    fn sorted_moments_match_direct_scores() {
        let data = data_1d(60, 7, &KernelOracle::Helmholtz1d { wave: 15.0 }, 1);
        for k in [0u32, 1, 2] {
            let p = KernelProblem::new(&data, k).unwrap();
            let dict = sample_dictionary(2, k, p.bias_bounds(), 64, 5).unwrap();
            for atom in &dict.atoms {
                let fast = p.correlation(atom);
                let slow = p.direct_correlation(atom);
                let scale: f64 = p.field.as_slice().iter().map(|v| v.abs()).sum::<f64>() * 4.0;
                assert!((fast - slow).abs() <= 1e-12 * scale, "k={k}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn planted_atom_kernel_is_recovered() {
        let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, 30).unwrap());
        let planted = Atom::new(Sign::Plus, vec![0.6, -0.8], 0.3, 1).unwrap();
        let t = atom_table(&planted, &mesh, &mesh).unwrap();
        let f = sample_gp_forcings(&mesh, 5, &GpConfig::new(0.2, 3)).unwrap().into_values();
        let u = crate::products::kernel_apply_many(&t, &f, &mesh).unwrap();
        let data = DataSet::from_parts(mesh.clone(), mesh.clone(), f, u, false).unwrap();
        let mut p = KernelProblem::new(&data, 1).unwrap();
        let cfg = OgaConfig::new(1, 8, 1, 0);
        let model = run_oga_with(
            &mut p,
            &cfg,
            &mut |it| {
                Ok(RandomDictionary {
                    atoms: vec![planted.clone(), planted.negated()],
                    seed: it as u64,
                    n_samples: 1,
                })
            },
            &mut Silent,
        )
        .unwrap();
        assert_eq!(model.atoms[0], planted);
        assert!(model.trace.last().unwrap().residual_h <= 1e-10 * model.initial_residual.max(1.0));
    }

    #[test]
    fn evaluate_kernel_matches_term_sums() {
        let out = Arc::new(sunflower_disk(12, 1.0).unwrap());
        let inp = Arc::new(uniform_grid_1d(-1.0, 1.0, 9).unwrap());
        let b = bias_bounds_product(&out, &inp).unwrap();
        let dict = sample_dictionary(3, 1, b, 10, 4).unwrap();
        let atoms: Vec<Atom> = dict.ridges().cloned().collect();
        let coefs: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) / 3.0).collect();
        let table = kernel_table(&atoms, &coefs, &out, &inp).unwrap();
        for s in 0..12 {
            for t in 0..9 {
                let mut z = out.node(s).to_vec();
                z.extend_from_slice(inp.node(t));
                let direct: f64 = atoms.iter().zip(&coefs).map(|(a, c)| c * a.evaluate(&z)).sum();
                assert!((table.get(s, t) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
            }
        }
        let zero = kernel_table(&atoms, &[0.0; 10], &out, &inp).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
        let single = kernel_table(&atoms[..1], &[1.0], &out, &inp).unwrap();
        let row = atom_table(&atoms[0], &out, &inp).unwrap();
        assert_eq!(single, row);
    }

    #[test]
    fn poisson_fit_decreases_and_satisfies_invariants() {
        let data = data_1d(41, 30, &KernelOracle::Poisson1d, 2);
        let oracle = KernelOracle::Poisson1d;
        let cfg = KernelFitConfig::new(OgaConfig::new(24, 128, 1, 11));
        let mut rows = 0;
        let mut progress = |_: &TraceRecord| rows += 1;
        let hooks = FitHooks {
            eval: None,
            oracle: Some(&oracle),
            progress: Some(&mut progress),
        };
        let model = fit_kernel(&data, &cfg, hooks).unwrap();
        assert_eq!(rows, model.model.trace.records.len());
        let tr = &model.model.trace.records;
        let r0 = model.model.initial_residual;
        for w in tr.windows(2) {
            assert!(w[1].residual_h <= w[0].residual_h + 1e-12 * r0);
        }
        assert!(tr.last().unwrap().residual_h < 0.1 * r0);
        assert!(tr.last().unwrap().eps_g.unwrap() < 0.5);

        // the trained model reproduces the residual identity and orthogonality
        let mut p = KernelProblem::new(&data, 1).unwrap();
        for a in &model.model.atoms {
            p.push_atom(a).unwrap();
        }
        let res = p.update_residual(&model.model.coefficients);
        assert!(orthogonality_defect(&p, model.model.len()) <= 1e-8);
        let pred = predict_many(&model, data.forcings().values()).unwrap();
        let mut diff = data.responses().values().clone();
        diff.as_mut_slice().iter_mut().zip(pred.as_slice()).for_each(|(a, b)| *a -= b);
        let direct = mean_weighted_row_dot(&diff, &diff, data.output_mesh().weights());
        assert!((direct - res * res).abs() <= 1e-10 * res * res);

        // and the semi-inner product of the error kernel agrees
        let g = oracle.table(data.output_mesh(), data.input_mesh()).unwrap();
        let mut e = evaluate_kernel(&model, data.output_mesh(), data.input_mesh()).unwrap();
        e.as_mut_slice().iter_mut().zip(g.as_slice()).for_each(|(a, b)| *a = b - *a);
        let h = semi_inner(&e, &e, data.forcings(), data.output_mesh()).unwrap();
        assert!((h - res * res).abs() <= 1e-9 * res * res);
    }

    #[test]
    fn predict_examples() {
        let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, 11).unwrap());
        let planted = Atom::new(Sign::Minus, vec![0.6, 0.8], -0.2, 1).unwrap();
        let model = KernelModel::new(
            GreedyModel {
                atoms: vec![planted.clone()],
                coefficients: vec![2.0],
                trace: Default::default(),
                termination: crate::greedy::Termination::Completed,
                initial_residual: 0.0,
            },
            mesh.clone(),
            mesh.clone(),
        )
        .unwrap();
        assert!(predict(&model, &[0.0; 11]).unwrap().iter().all(|&v| v == 0.0));
        let f: Vec<f64> = (0..11).map(|t| libm::cos(t as f64)).collect();
        let mut t = atom_table(&planted, &mesh, &mesh).unwrap();
        t.as_mut_slice().iter_mut().for_each(|v| *v *= 2.0);
        let reference = kernel_apply(&t, &f, &mesh).unwrap();
        let got = predict(&model, &f).unwrap();
        for (a, b) in got.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn cache_cap_is_enforced() {
        let data = data_1d(21, 4, &KernelOracle::Poisson1d, 2);
        let mut cfg = KernelFitConfig::new(OgaConfig::new(100, 8, 1, 0));
        cfg.max_cache_bytes = 1000;
        assert!(matches!(fit_kernel(&data, &cfg, FitHooks::default()), Err(Error::ResourceLimit(_))));
    }
}
