//! Point-wise kernel estimation: one independent `d`-input greedy fit of
//! the slice `G(· | x_s)` per output sensor `x_s`.

use alloc::borrow::Cow;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::DataSet;
use crate::dictionary::{derive_seed, sample_dictionary, Atom};
use crate::error::{check_len, invalid, Result};
use crate::geometry::{bias_bounds, BiasBounds, Mesh};
use crate::greedy::{
    FitTrace, GreedyModel, GreedyProblem, Observer, OgaConfig, OgaRun, Proposal, Termination, TraceRecord,
};
use crate::kernel_oga::FitHooks;
use crate::linalg::{self, gemm, Matrix, Neumaier};
use crate::math;

/// Per-sensor greedy models over the input mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseModel {
    /// Output node index of each fitted sensor, ascending.
    pub sensors: Vec<usize>,
    pub models: Vec<GreedyModel>,
    pub input: Arc<Mesh>,
    pub output: Arc<Mesh>,
}

impl PointwiseModel {
    pub fn new(sensors: Vec<usize>, models: Vec<GreedyModel>, input: Arc<Mesh>, output: Arc<Mesh>) -> Result<Self> {
        check_len("sensor models", sensors.len(), models.len())?;
        validate_sensors(&sensors, output.len())?;
        for m in &models {
            if let Some(a) = m.atoms.iter().find(|a| a.dim() != input.dim()) {
                return Err(invalid(format!("sensor atom dimension {} differs from {}", a.dim(), input.dim())));
            }
            check_len("sensor coefficients", m.atoms.len(), m.coefficients.len())?;
        }
        Ok(Self {
            sensors,
            models,
            input,
            output,
        })
    }

    /// Sub-mesh of the fitted sensors.
    pub fn sensor_mesh(&self) -> Result<Mesh> {
        self.output.select(&self.sensors)
    }
}

fn validate_sensors(sensors: &[usize], m_u: usize) -> Result<()> {
    if sensors.is_empty() {
        return Err(invalid("at least one sensor is required"));
    }
    if sensors.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("sensor indices must be strictly increasing"));
    }
    if let Some(&s) = sensors.iter().find(|&&s| s >= m_u) {
        return Err(invalid(format!("sensor {s} is outside the {m_u}-node output mesh")));
    }
    Ok(())
}

/// Evenly strided subset of `count` sensors out of `m_u`.
pub fn strided_sensors(m_u: usize, count: usize) -> Vec<usize> {
    if count >= m_u {
        return (0..m_u).collect();
    }
    (0..count).map(|i| i * m_u / count).collect()
}

/// Inputs shared by every sensor.
struct Shared<'a> {
    data: &'a DataSet,
    /// `F diag(w)`
    fw: Matrix,
    bounds: BiasBounds,
}

impl Shared<'_> {
    /// `(1/N) (F diag(w))ᵀ ρ` for each residual, as one product. Every
    /// field goes through here so a sensor's numbers do not depend on which
    /// other sensors share the product.
    fn fields(&self, residuals: &[&[f64]]) -> Vec<Vec<f64>> {
        let n = self.fw.rows();
        let r = Matrix::from_fn(n, residuals.len(), |j, c| residuals[c][j]);
        let v = gemm(1.0 / n as f64, &self.fw, true, &r, false).expect("shapes agree");
        columns(&v)
    }

    /// Responses `F diag(w) g` of each atom, as one product.
    fn responses(&self, atoms: &[&Atom]) -> Vec<Vec<f64>> {
        let mesh = self.data.input_mesh();
        let values: Vec<Vec<f64>> = atoms
            .iter()
            .map(|a| mesh.nodes().map(|y| a.evaluate(y)).collect())
            .collect();
        let g = Matrix::from_fn(mesh.len(), atoms.len(), |t, c| values[c][t]);
        columns(&gemm(1.0, &self.fw, false, &g, false).expect("shapes agree"))
    }
}

fn columns(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|c| (0..m.rows()).map(|r| m.get(r, c)).collect()).collect()
}

/// Greedy problem of a single sensor under `⟨g, h⟩_s = (1/N) Σ_j (g, f_j)(h, f_j)`.
pub struct SensorProblem<'a> {
    shared: &'a Shared<'a>,
    target: Vec<f64>,
    /// `(g_i, f_j)` for each selected atom.
    cache: Vec<Vec<f64>>,
    residual: Vec<f64>,
    /// `v_t = (1/N) w_t Σ_j ρ_j f_j(y_t)`, or `None` when stale.
    field: Option<Vec<f64>>,
    /// Responses of an atom about to be pushed, computed in a batch.
    pending: Option<(Atom, Vec<f64>)>,
}

impl<'a> SensorProblem<'a> {
    fn new(shared: &'a Shared<'a>, sensor: usize) -> Self {
        let u = shared.data.responses().values();
        let target: Vec<f64> = (0..u.rows()).map(|j| u.get(j, sensor)).collect();
        Self {
            shared,
            residual: target.clone(),
            target,
            cache: Vec::new(),
            field: None,
            pending: None,
        }
    }

    fn n_pairs(&self) -> f64 {
        self.target.len() as f64
    }

    fn field(&self) -> Cow<'_, [f64]> {
        match &self.field {
            Some(v) => Cow::Borrowed(v),
            None => Cow::Owned(self.shared.fields(&[&self.residual]).swap_remove(0)),
        }
    }

    fn responses_of(&self, atom: &Atom) -> Vec<f64> {
        self.shared.responses(&[atom]).swap_remove(0)
    }

    fn mean_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        linalg::dot(a, b) / self.n_pairs()
    }
}

/// Brings every stale field up to date with one product.
fn refresh_fields(shared: &Shared<'_>, problems: &mut [&mut SensorProblem<'_>]) {
    let stale: Vec<usize> = (0..problems.len()).filter(|&i| problems[i].field.is_none()).collect();
    if stale.is_empty() {
        return;
    }
    let residuals: Vec<&[f64]> = stale.iter().map(|&i| problems[i].residual.as_slice()).collect();
    for (i, v) in stale.iter().zip(shared.fields(&residuals)) {
        problems[*i].field = Some(v);
    }
}

impl GreedyProblem for SensorProblem<'_> {
    fn atom_dim(&self) -> usize {
        self.shared.data.input_mesh().dim()
    }

    fn bias_bounds(&self) -> BiasBounds {
        self.shared.bounds
    }

    fn target_norm_sq(&self) -> f64 {
        self.mean_dot(&self.target, &self.target)
    }

    fn correlation(&self, atom: &Atom) -> f64 {
        let mut acc = Neumaier::default();
        for (y, v) in self.shared.data.input_mesh().nodes().zip(self.field().iter()) {
            acc.add(atom.evaluate(y) * v);
        }
        acc.value()
    }

    fn score_ridges(&self, ridges: &[&Atom]) -> Vec<f64> {
        let mesh = self.shared.data.input_mesh();
        let d = mesh.dim();
        let r = ridges.len();
        // Directions stored per coordinate so the inner loop runs over ridges.
        let w: Vec<Vec<f64>> = (0..d).map(|c| ridges.iter().map(|a| a.direction[c]).collect()).collect();
        let bias: Vec<f64> = ridges.iter().map(|a| a.bias).collect();
        let power = ridges.first().map_or(1, |a| a.power);
        let mut scores = vec![0.0; r];
        let mut pre = vec![0.0; r];
        for (y, &v) in mesh.nodes().zip(self.field().iter()) {
            pre.copy_from_slice(&bias);
            for (wc, &yc) in w.iter().zip(y) {
                for (p, &x) in pre.iter_mut().zip(wc) {
                    *p += yc * x;
                }
            }
            if power == 1 {
                for (s, &p) in scores.iter_mut().zip(&pre) {
                    *s += p.max(0.0) * v;
                }
            } else {
                for (s, &p) in scores.iter_mut().zip(&pre) {
                    *s += math::relu_pow(p, power) * v;
                }
            }
        }
        for (s, a) in scores.iter_mut().zip(ridges) {
            *s *= a.sign.value();
        }
        scores
    }

    fn atom_norm_sq(&self, atom: &Atom) -> f64 {
        let a = self.responses_of(atom);
        self.mean_dot(&a, &a)
    }

    fn push_atom(&mut self, atom: &Atom) -> Result<()> {
        check_len("sensor atom dimension", self.atom_dim(), atom.dim())?;
        let a = match self.pending.take() {
            Some((p, a)) if p == *atom => a,
            _ => self.responses_of(atom),
        };
        self.cache.push(a);
        Ok(())
    }

    fn pop_atom(&mut self) {
        self.cache.pop();
    }

    fn gram_entry(&self, i: usize, j: usize) -> f64 {
        self.mean_dot(&self.cache[i], &self.cache[j])
    }

    fn rhs_entry(&self, i: usize) -> f64 {
        self.mean_dot(&self.target, &self.cache[i])
    }

    fn update_residual(&mut self, alpha: &[f64]) -> f64 {
        self.residual.copy_from_slice(&self.target);
        for (a, g) in alpha.iter().zip(&self.cache) {
            linalg::axpy(-a, g, &mut self.residual);
        }
        self.field = None;
        math::sqrt(self.mean_dot(&self.residual, &self.residual).max(0.0))
    }

    fn selected_correlation(&self, i: usize) -> f64 {
        self.mean_dot(&self.residual, &self.cache[i])
    }
}

/// Diagnostics of one sensor at one cadence point.
#[derive(Clone, Debug)]
struct SensorSample {
    n: usize,
    /// `(u_j(x_s) - ũ_j(x_s))²` over the evaluation pairs.
    sq_err: Vec<f64>,
    /// `Σ_t w_t (G - G̃)²(x_s, y_t)`
    kernel_err: Option<f64>,
}

/// Records the kernel row `Σ α_i g_i` at each cadence point; the errors are
/// computed together once the fit is over.
struct SensorMonitor<'a> {
    mesh: &'a Mesh,
    /// Node values of the atoms seen so far.
    values: Vec<Vec<f64>>,
    rows: Vec<(usize, Vec<f64>)>,
}

impl<'a> SensorMonitor<'a> {
    fn new(mesh: &'a Mesh) -> Self {
        Self {
            mesh,
            values: Vec::new(),
            rows: Vec::new(),
        }
    }

    fn samples(self, eval: &DataSet, fw_eval: &Matrix, sensor: usize, oracle_row: Option<&[f64]>) -> Vec<SensorSample> {
        if self.rows.is_empty() {
            return Vec::new();
        }
        let k = Matrix::from_fn(self.mesh.len(), self.rows.len(), |t, c| self.rows[c].1[t]);
        let pred = gemm(1.0, fw_eval, false, &k, false).expect("shapes agree");
        let u = eval.responses().values();
        self.rows
            .iter()
            .enumerate()
            .map(|(c, (n, row))| {
                let sq_err = (0..u.rows())
                    .map(|j| {
                        let d = u.get(j, sensor) - pred.get(j, c);
                        d * d
                    })
                    .collect();
                let kernel_err = oracle_row.map(|g| {
                    let diff: Vec<f64> = g.iter().zip(row).map(|(a, b)| a - b).collect();
                    linalg::weighted_dot(self.mesh.weights(), &diff, &diff)
                });
                SensorSample {
                    n: *n,
                    sq_err,
                    kernel_err,
                }
            })
            .collect()
    }
}

impl Observer for SensorMonitor<'_> {
    fn diagnostics(&mut self, atoms: &[Atom], coefficients: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
        for atom in &atoms[self.values.len()..] {
            self.values.push(self.mesh.nodes().map(|y| atom.evaluate(y)).collect());
        }
        let mut row = vec![0.0; self.mesh.len()];
        for (c, v) in coefficients.iter().zip(&self.values) {
            linalg::axpy(*c, v, &mut row);
        }
        self.rows.push((atoms.len(), row));
        Ok((None, None))
    }
}

/// Result of a point-wise fit: the models plus the trace aggregated over
/// sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseFit {
    pub model: PointwiseModel,
    pub trace: FitTrace,
    /// Sensors whose fit ended in a projection breakdown.
    pub breakdowns: Vec<usize>,
}

struct SensorOutcome {
    model: GreedyModel,
    samples: Vec<SensorSample>,
}

/// Read-only inputs of a chunk of sensor fits.
struct Context<'a> {
    shared: &'a Shared<'a>,
    eval: &'a DataSet,
    fw_eval: &'a Matrix,
    oracle: Option<&'a Matrix>,
    config: &'a OgaConfig,
}

/// Fits a chunk of sensors in lockstep, sharing the field and response
/// products between them. Each sensor still sees exactly the arithmetic of
/// a lone fit.
fn fit_chunk(ctx: &Context<'_>, chunk: &[usize]) -> Result<Vec<SensorOutcome>> {
    let shared = ctx.shared;
    let mesh = shared.data.input_mesh();
    let (dim, bounds) = (mesh.dim(), shared.bounds);
    let (k, n_r) = (ctx.config.power, ctx.config.dict_size);
    let mut problems: Vec<SensorProblem<'_>> = chunk.iter().map(|&s| SensorProblem::new(shared, s)).collect();
    let mut monitors: Vec<SensorMonitor<'_>> = chunk.iter().map(|_| SensorMonitor::new(mesh)).collect();
    let configs: Vec<OgaConfig> = chunk
        .iter()
        .map(|&s| {
            let mut cfg = ctx.config.clone();
            cfg.seed = derive_seed(ctx.config.seed, s as u64);
            cfg
        })
        .collect();
    let mut runs = Vec::with_capacity(chunk.len());
    for ((p, m), cfg) in problems.iter_mut().zip(&mut monitors).zip(&configs) {
        runs.push(OgaRun::start(p, cfg, m)?);
    }
    let mut active: Vec<usize> = (0..chunk.len()).collect();
    while !active.is_empty() {
        {
            let mut live: Vec<&mut SensorProblem<'_>> = problems
                .iter_mut()
                .enumerate()
                .filter(|(i, _)| active.contains(i))
                .map(|(_, p)| p)
                .collect();
            refresh_fields(shared, &mut live);
        }
        let mut picks = Vec::new();
        let mut still = Vec::with_capacity(active.len());
        for &i in &active {
            let seed = configs[i].seed;
            let mut dict = |it: usize| sample_dictionary(dim, k, bounds, n_r, derive_seed(seed, it as u64));
            match runs[i].propose(&problems[i], &mut dict)? {
                Proposal::Done => continue,
                Proposal::Stagnant => {}
                Proposal::Atom(pick) => picks.push((i, pick)),
            }
            still.push(i);
        }
        active = still;
        let atoms: Vec<&Atom> = picks.iter().map(|(_, p)| &p.atom).collect();
        let responses = shared.responses(&atoms);
        for ((i, pick), a) in picks.into_iter().zip(responses) {
            problems[i].pending = Some((pick.atom.clone(), a));
            runs[i].commit(&mut problems[i], pick, &mut monitors[i])?;
        }
    }
    let mut out = Vec::with_capacity(chunk.len());
    for ((run, mut monitor), &s) in runs.into_iter().zip(monitors).zip(chunk) {
        let model = run.finish(&mut monitor)?;
        let oracle_row = ctx.oracle.map(|t| t.row(s));
        let samples = monitor.samples(ctx.eval, ctx.fw_eval, s, oracle_row);
        out.push(SensorOutcome { model, samples });
    }
    Ok(out)
}

/// Sensors fitted in lockstep before their results are folded, in order,
/// into the aggregate trace.
const CHUNK: usize = 16;

/// Fits every sensor (or the given subset) independently.
pub fn fit_pointwise<'a>(
    data: &'a DataSet,
    config: &OgaConfig,
    sensors: Option<&[usize]>,
    hooks: FitHooks<'a>,
) -> Result<PointwiseFit> {
    config.validate()?;
    let input = data.input_mesh();
    let output = data.output_mesh();
    let sensors: Vec<usize> = match sensors {
        Some(s) => s.to_vec(),
        None => (0..output.len()).collect(),
    };
    validate_sensors(&sensors, output.len())?;
    let eval = hooks.eval.unwrap_or(data);
    if eval.input_mesh() != input || eval.output_mesh() != output {
        return Err(invalid("evaluation data must share the training meshes"));
    }
    let oracle_table = match hooks.oracle {
        Some(o) => Some(o.table(output, input)?),
        None => None,
    };
    let mut fw = data.forcings().values().clone();
    fw.scale_columns(input.weights());
    let mut fw_eval = eval.forcings().values().clone();
    fw_eval.scale_columns(input.weights());
    let shared = Shared {
        data,
        fw,
        bounds: bias_bounds(input)?,
    };
    let ctx = Context {
        shared: &shared,
        eval,
        fw_eval: &fw_eval,
        oracle: oracle_table.as_ref(),
        config,
    };

    #[cfg(feature = "parallel")]
    let group = CHUNK * rayon::current_num_threads();
    #[cfg(not(feature = "parallel"))]
    let group = CHUNK;
    let mut agg = Aggregator::new(eval, &sensors, oracle_table.as_ref(), config)?;
    let mut models = Vec::with_capacity(sensors.len());
    let mut breakdowns = Vec::new();
    for block in sensors.chunks(group) {
        #[cfg(feature = "parallel")]
        let outcomes: Vec<Result<Vec<SensorOutcome>>> = {
            use rayon::prelude::*;
            block.par_chunks(CHUNK).map(|c| fit_chunk(&ctx, c)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let outcomes: Vec<Result<Vec<SensorOutcome>>> = block.chunks(CHUNK).map(|c| fit_chunk(&ctx, c)).collect();
        let mut done = Vec::with_capacity(block.len());
        for o in outcomes {
            done.extend(o?);
        }
        for (&s, outcome) in block.iter().zip(done) {
            if outcome.model.termination == Termination::ProjectionBreakdown {
                breakdowns.push(s);
            }
            agg.fold(s, &outcome);
            models.push(outcome.model);
        }
    }
    let trace = agg.finish(&models, hooks.progress);
    Ok(PointwiseFit {
        model: PointwiseModel::new(sensors, models, input.clone(), output.clone())?,
        trace,
        breakdowns,
    })
}

/// Running sums over sensors at fixed cadence points.
struct Aggregator {
    /// Cadence points `n`, ascending.
    points: Vec<usize>,
    /// `Σ_s ω_s (u - ũ)²` per point and evaluation pair.
    err: Vec<Vec<f64>>,
    /// `Σ_s ω_s u²` per evaluation pair.
    norm: Vec<f64>,
    kernel_err: Vec<f64>,
    kernel_norm: Option<f64>,
    /// `Σ_s ω_s res_s²(n)` for `n = 0..=n_max`.
    residual: Vec<f64>,
    score: Vec<(f64, usize)>,
    cond: Vec<f64>,
    coef_l1: Vec<f64>,
    weights: Vec<f64>,
    n_max: usize,
}

impl Aggregator {
    fn new(eval: &DataSet, sensors: &[usize], oracle: Option<&Matrix>, config: &OgaConfig) -> Result<Self> {
        let n_max = config.n_max;
        let mut points: Vec<usize> = (0..=n_max).filter(|&n| n == 0 || config.cadence.hits(n, n_max)).collect();
        points.dedup();
        let u = eval.responses().values();
        let weights = eval.output_mesh().weights().to_vec();
        let mut norm = vec![0.0; eval.len()];
        for (j, nj) in norm.iter_mut().enumerate() {
            let mut acc = Neumaier::default();
            for &s in sensors {
                acc.add(weights[s] * u.get(j, s) * u.get(j, s));
            }
            *nj = acc.value();
            if !(*nj > 0.0) {
                return Err(crate::error::Error::Metric(format!(
                    "reference solution {j} vanishes on the selected sensors"
                )));
            }
        }
        let kernel_norm = oracle.map(|g| {
            let w = eval.input_mesh().weights();
            let mut acc = Neumaier::default();
            for &s in sensors {
                acc.add(weights[s] * linalg::weighted_dot(w, g.row(s), g.row(s)));
            }
            acc.value()
        });
        Ok(Self {
            err: vec![vec![0.0; eval.len()]; points.len()],
            kernel_err: vec![0.0; points.len()],
            points,
            norm,
            kernel_norm,
            residual: vec![0.0; n_max + 1],
            score: vec![(0.0, 0); n_max + 1],
            cond: vec![1.0; n_max + 1],
            coef_l1: vec![0.0; n_max + 1],
            weights,
            n_max,
        })
    }

    fn fold(&mut self, sensor: usize, outcome: &SensorOutcome) {
        let ws = self.weights[sensor];
        let records = &outcome.model.trace.records;
        // carry each sensor's last record forward once it stops
        let mut k = 0;
        for n in 0..=self.n_max {
            while k + 1 < records.len() && records[k + 1].n <= n {
                k += 1;
            }
            let r = &records[k];
            self.residual[n] += ws * r.residual_h * r.residual_h;
            self.coef_l1[n] += r.coef_l1;
            if r.n == n {
                self.score[n].0 += r.score;
                self.score[n].1 += 1;
                self.cond[n] = self.cond[n].max(r.gram_cond);
            }
        }
        let mut k = 0;
        for (c, &n) in self.points.iter().enumerate() {
            while k + 1 < outcome.samples.len() && outcome.samples[k + 1].n <= n {
                k += 1;
            }
            let sample = &outcome.samples[k];
            for (e, d) in self.err[c].iter_mut().zip(&sample.sq_err) {
                *e += ws * d;
            }
            if let Some(ke) = sample.kernel_err {
                self.kernel_err[c] += ws * ke;
            }
        }
    }

    fn finish(&self, models: &[GreedyModel], mut progress: Option<&mut (dyn FnMut(&TraceRecord) + '_)>) -> FitTrace {
        let reached = models
            .iter()
            .filter_map(|m| m.trace.last().map(|r| r.n))
            .max()
            .unwrap_or(0);
        let mut records = Vec::with_capacity(reached + 1);
        for n in 0..=reached {
            let (eps_u, eps_g) = match self.points.binary_search(&n) {
                Ok(c) => {
                    let mut acc = Neumaier::default();
                    for (e, d) in self.err[c].iter().zip(&self.norm) {
                        acc.add(math::sqrt(e / d));
                    }
                    let eps_u = acc.value() / self.norm.len() as f64;
                    let eps_g = self.kernel_norm.map(|g| math::sqrt(self.kernel_err[c] / g));
                    (Some(eps_u), eps_g)
                }
                Err(_) => (None, None),
            };
            let (sum, count) = self.score[n];
            let record = TraceRecord {
                n,
                residual_h: math::sqrt(self.residual[n]),
                eps_u,
                eps_g,
                score: if count > 0 { sum / count as f64 } else { 0.0 },
                gram_cond: self.cond[n],
                coef_l1: self.coef_l1[n],
            };
            if let Some(p) = progress.as_mut() {
                p(&record);
            }
            records.push(record);
        }
        FitTrace { records }
    }
}

/// `u(x_s) = Σ_t w_t G_s(y_t) f(y_t)` for each fitted sensor.
pub fn predict_pointwise(model: &PointwiseModel, f: &[f64]) -> Result<Vec<f64>> {
    check_len("forcing vs input mesh", model.input.len(), f.len())?;
    let table = assemble_kernel(model)?;
    crate::products::kernel_apply(&table, f, &model.input)
}

/// Predictions for every row of `forcings`, columns over fitted sensors.
pub fn predict_pointwise_many(model: &PointwiseModel, forcings: &Matrix) -> Result<Matrix> {
    let table = assemble_kernel(model)?;
    crate::products::kernel_apply_many(&table, forcings, &model.input)
}

/// Kernel rows `G̃(x_s, ·)` of the fitted sensors on the input mesh.
pub fn assemble_kernel(model: &PointwiseModel) -> Result<Matrix> {
    let mut table = Matrix::zeros(model.models.len(), model.input.len());
    for (r, m) in model.models.iter().enumerate() {
        let row = m.evaluate_on(&model.input)?;
        table.row_mut(r).copy_from_slice(&row);
    }
    Ok(table)
}
