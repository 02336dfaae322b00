//! Orthogonal greedy engine.
//!
//! Each iteration samples a fresh random dictionary, picks the atom with the
//! largest correlation against the current residual, and re-projects the
//! target onto the span of all selected atoms by solving the Gram system.
//! The inner-product structure is supplied by a [`GreedyProblem`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dictionary::{derive_seed, sample_dictionary, Atom, RandomDictionary};
use crate::error::{invalid, Result};
use crate::geometry::{BiasBounds, Mesh};
use crate::linalg::{self, Cholesky};
use crate::math;

/// Inner-product structure and residual bookkeeping for one greedy fit.
///
/// The problem owns the selected atoms' cached fields. The engine pushes an
/// atom, asks for the new Gram row and right-hand side entry, solves, and
/// hands the coefficients back through [`GreedyProblem::update_residual`].
pub trait GreedyProblem: Sync {
    /// Input dimension of the atoms.
    fn atom_dim(&self) -> usize;

    fn bias_bounds(&self) -> BiasBounds;

    /// `‖target‖²`
    fn target_norm_sq(&self) -> f64;

    /// `⟨residual, atom⟩` for the current residual.
    fn correlation(&self, atom: &Atom) -> f64;

    /// `⟨atom, atom⟩`; only needed for normalized scoring.
    fn atom_norm_sq(&self, atom: &Atom) -> f64;

    fn push_atom(&mut self, atom: &Atom) -> Result<()>;

    fn pop_atom(&mut self);

    /// `⟨g_i, g_j⟩` between selected atoms.
    fn gram_entry(&self, i: usize, j: usize) -> f64;

    /// `⟨target, g_i⟩`
    fn rhs_entry(&self, i: usize) -> f64;

    /// Sets the residual to `target - Σ α_i g_i` and returns its norm.
    fn update_residual(&mut self, alpha: &[f64]) -> f64;

    /// `⟨residual, g_i⟩` for a selected atom.
    fn selected_correlation(&self, i: usize) -> f64;

    /// Correlations of the positive member of each ridge. Problems with a
    /// faster batched path override this.
    fn score_ridges(&self, ridges: &[&Atom]) -> Vec<f64> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            ridges.par_iter().map(|a| self.correlation(a)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            ridges.iter().map(|a| self.correlation(a)).collect()
        }
    }
}

/// When diagnostics are computed: every iteration up to `dense_until`, then
/// every `stride`-th, plus the last one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cadence {
    pub dense_until: usize,
    pub stride: usize,
}

impl Default for Cadence {
    fn default() -> Self {
        Self {
            dense_until: 64,
            stride: 8,
        }
    }
}

impl Cadence {
    pub fn hits(&self, n: usize, n_max: usize) -> bool {
        n <= self.dense_until || n == n_max || (self.stride > 0 && n.is_multiple_of(self.stride))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OgaConfig {
    pub n_max: usize,
    /// Sampled ridges per iteration; the dictionary holds twice as many
    /// signed atoms.
    pub dict_size: usize,
    pub power: u32,
    pub seed: u64,
    /// Divide scores by `‖g‖` before the argmax.
    pub normalized_scoring: bool,
    pub cadence: Cadence,
    /// Cholesky results with a larger condition estimate go through the
    /// eigen-truncated solve.
    pub cond_threshold: f64,
    pub truncation: f64,
    pub stagnation_tol: f64,
    pub stagnation_patience: usize,
}

impl OgaConfig {
    pub fn new(n_max: usize, dict_size: usize, power: u32, seed: u64) -> Self {
        Self {
            n_max,
            dict_size,
            power,
            seed,
            normalized_scoring: false,
            cadence: Cadence::default(),
            cond_threshold: 1e12,
            truncation: 1e-12,
            stagnation_tol: 1e-14,
            stagnation_patience: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(invalid("n_max must be at least 1"));
        }
        if self.dict_size == 0 {
            return Err(invalid("dictionary size must be at least 1"));
        }
        if !(self.truncation > 0.0 && self.truncation < 1.0) {
            return Err(invalid("truncation threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    /// Number of atoms in the model.
    pub n: usize,
    pub residual_h: f64,
    pub eps_u: Option<f64>,
    pub eps_g: Option<f64>,
    /// Score of the atom selected at this step (0 for the initial record).
    pub score: f64,
    pub gram_cond: f64,
    /// `Σ |α_i|`
    pub coef_l1: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitTrace {
    pub records: Vec<TraceRecord>,
}

impl FitTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// `(n, residual_h)` pairs.
    pub fn residuals(&self) -> Vec<(usize, f64)> {
        self.records.iter().map(|r| (r.n, r.residual_h)).collect()
    }

    /// `(n, eps_u)` where computed.
    pub fn eps_u(&self) -> Vec<(usize, f64)> {
        self.records.iter().filter_map(|r| r.eps_u.map(|e| (r.n, e))).collect()
    }

    /// `(n, eps_G)` where computed.
    pub fn eps_g(&self) -> Vec<(usize, f64)> {
        self.records.iter().filter_map(|r| r.eps_g.map(|e| (r.n, e))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Completed,
    Stagnated,
    /// The Gram system for the atom that would have been number `n + 1`
    /// could not be solved; the model holds the last good projection.
    ProjectionBreakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyModel {
    pub atoms: Vec<Atom>,
    pub coefficients: Vec<f64>,
    pub trace: FitTrace,
    pub termination: Termination,
    pub initial_residual: f64,
}

impl GreedyModel {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `Σ α_i g_i(z)`
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        let mut acc = linalg::Neumaier::default();
        for (a, c) in self.atoms.iter().zip(&self.coefficients) {
            acc.add(c * a.evaluate(z));
        }
        acc.value()
    }

    /// Values at every node of `mesh`.
    pub fn evaluate_on(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        if let Some(a) = self.atoms.first() {
            crate::error::check_len("model/mesh dimension", a.dim(), mesh.dim())?;
        }
        Ok(mesh.nodes().map(|z| self.evaluate(z)).collect())
    }
}

/// Diagnostics and progress hooks for a running fit.
pub trait Observer {
    /// `(eps_u, eps_G)` for the current model, at cadence points.
    fn diagnostics(&mut self, _atoms: &[Atom], _coefficients: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
        Ok((None, None))
    }

    fn on_record(&mut self, _record: &TraceRecord) {}
}

/// Observer that does nothing.
pub struct Silent;

impl Observer for Silent {}

/// Argmax over the signed atoms `(+c_i, -c_i)`; strict comparison keeps the
/// lowest index on ties. Returns `(atom index, score)`.
pub fn select_index(ridge_scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in ridge_scores.iter().enumerate() {
        for (k, s) in [(2 * i, c), (2 * i + 1, -c)] {
            if !s.is_finite() {
                continue;
            }
            match best {
                Some((_, b)) if s <= b => {}
                _ => best = Some((k, s)),
            }
        }
    }
    best
}

/// Outcome of [`select_atom`].
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub atom: Atom,
    /// Raw correlation of the chosen atom with the residual.
    pub score: f64,
    pub stagnant: bool,
}

/// Scores a dictionary against the problem's residual and returns the best
/// atom. `stagnation_level` is the score magnitude at or below which the
/// selection counts as stagnant.
pub fn select_atom<P: GreedyProblem + ?Sized>(
    dict: &RandomDictionary,
    problem: &P,
    normalized: bool,
    stagnation_level: f64,
) -> Result<Selection> {
    if dict.is_empty() {
        return Err(invalid("cannot select from an empty dictionary"));
    }
    let ridges: Vec<&Atom> = dict.ridges().collect();
    let raw = problem.score_ridges(&ridges);
    let ranked: Vec<f64> = if normalized {
        ridges
            .iter()
            .zip(&raw)
            .map(|(a, &c)| {
                let n = problem.atom_norm_sq(a);
                if n > 0.0 {
                    c / math::sqrt(n)
                } else {
                    0.0
                }
            })
            .collect()
    } else {
        raw.clone()
    };
    let (index, _) = select_index(&ranked).unwrap_or((0, 0.0));
    let score = if index % 2 == 0 {
        raw[index / 2]
    } else {
        -raw[index / 2]
    };
    Ok(Selection {
        index,
        atom: dict.atoms[index].clone(),
        score,
        stagnant: !(score.abs() > stagnation_level),
    })
}

/// Solution of one Gram system.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub alpha: Vec<f64>,
    pub condition: f64,
    pub truncated: bool,
}

/// Cholesky solve with an eigen-truncated fallback for ill-conditioned or
/// indefinite matrices.
pub fn solve_gram(gram: &[f64], n: usize, rhs: &[f64], cond_threshold: f64, truncation: f64) -> Option<Projection> {
    if let Some(ch) = Cholesky::factor(gram, n) {
        let condition = ch.condition_estimate();
        if condition <= cond_threshold {
            let alpha = ch.solve(rhs);
            if alpha.iter().all(|a| a.is_finite()) {
                return Some(Projection {
                    alpha,
                    condition,
                    truncated: false,
                });
            }
        }
    }
    truncated_projection(gram, n, rhs, truncation)
}

fn truncated_projection(gram: &[f64], n: usize, rhs: &[f64], truncation: f64) -> Option<Projection> {
    let (alpha, condition, _) = linalg::truncated_symmetric_solve(gram, n, rhs, truncation)?;
    alpha.iter().all(|a| a.is_finite()).then_some(Projection {
        alpha,
        condition,
        truncated: true,
    })
}

/// Truncated correction sweeps starting from the previous coefficients
/// padded with a zero for the new atom. Each sweep solves the truncated
/// system against the current residual correlations.
fn refine_from<P: GreedyProblem + ?Sized>(
    problem: &mut P,
    gram: &[f64],
    n: usize,
    previous: &[f64],
    truncation: f64,
) -> Option<(Projection, f64)> {
    const SWEEPS: usize = 3;
    let mut alpha = previous.to_vec();
    alpha.resize(n, 0.0);
    let mut res = problem.update_residual(&alpha);
    let mut condition = 1.0;
    for _ in 0..SWEEPS {
        let c: Vec<f64> = (0..n).map(|i| problem.selected_correlation(i)).collect();
        let (delta, cond, _) = linalg::truncated_symmetric_solve(gram, n, &c, truncation)?;
        condition = cond;
        let trial: Vec<f64> = alpha.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let r = problem.update_residual(&trial);
        if !(r.is_finite() && r < res) {
            break;
        }
        alpha = trial;
        res = r;
    }
    problem.update_residual(&alpha);
    res.is_finite().then_some((
        Projection {
            alpha,
            condition,
            truncated: true,
        },
        res,
    ))
}

/// Runs the greedy loop with dictionaries sampled from the problem's bias
/// bounds, one fresh dictionary per iteration.
pub fn run_oga<P: GreedyProblem + ?Sized>(
    problem: &mut P,
    config: &OgaConfig,
    observer: &mut dyn Observer,
) -> Result<GreedyModel> {
    let dim = problem.atom_dim();
    let bounds = problem.bias_bounds();
    let (k, n_r, seed) = (config.power, config.dict_size, config.seed);
    run_oga_with(
        problem,
        config,
        &mut |it| sample_dictionary(dim, k, bounds, n_r, derive_seed(seed, it as u64)),
        observer,
    )
}

/// Greedy loop with a caller-supplied dictionary per iteration (numbered
/// from 1).
pub fn run_oga_with<P: GreedyProblem + ?Sized>(
    problem: &mut P,
    config: &OgaConfig,
    dictionaries: &mut dyn FnMut(usize) -> Result<RandomDictionary>,
    observer: &mut dyn Observer,
) -> Result<GreedyModel> {
    let mut run = OgaRun::start(problem, config, observer)?;
    loop {
        match run.propose(problem, dictionaries)? {
            Proposal::Done => break,
            Proposal::Stagnant => {}
            Proposal::Atom(pick) => run.commit(problem, pick, observer)?,
        }
    }
    run.finish(observer)
}

/// Outcome of [`OgaRun::propose`].
#[derive(Clone, Debug, PartialEq)]
pub enum Proposal {
    /// The run has terminated; call [`OgaRun::finish`].
    Done,
    /// The iteration found no usable atom; propose again.
    Stagnant,
    /// Push this atom with [`OgaRun::commit`].
    Atom(Selection),
}

/// A greedy fit advanced one step at a time, so that several independent
/// runs can share batched work between the selection and projection steps.
pub struct OgaRun {
    config: OgaConfig,
    atoms: Vec<Atom>,
    alpha: Vec<f64>,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    trace: FitTrace,
    residual: f64,
    r0: f64,
    tolerance: f64,
    stagnation_level: f64,
    stagnant_run: usize,
    iteration: usize,
    termination: Option<Termination>,
}

impl OgaRun {
    /// Validates the configuration and records the `n = 0` state.
    pub fn start<P: GreedyProblem + ?Sized>(
        problem: &mut P,
        config: &OgaConfig,
        observer: &mut dyn Observer,
    ) -> Result<Self> {
        config.validate()?;
        let target_sq = problem.target_norm_sq();
        if !target_sq.is_finite() || target_sq < 0.0 {
            return Err(invalid(format!("target has invalid squared norm {target_sq}")));
        }
        let r0 = math::sqrt(target_sq);
        let residual = problem.update_residual(&[]);
        let (eps_u, eps_g) = observer.diagnostics(&[], &[])?;
        let first = TraceRecord {
            n: 0,
            residual_h: residual,
            eps_u,
            eps_g,
            score: 0.0,
            gram_cond: 1.0,
            coef_l1: 0.0,
        };
        observer.on_record(&first);
        Ok(Self {
            config: config.clone(),
            atoms: Vec::new(),
            alpha: Vec::new(),
            gram: Vec::new(),
            rhs: Vec::new(),
            trace: FitTrace { records: vec![first] },
            residual,
            r0,
            tolerance: 1e-12 * r0,
            stagnation_level: config.stagnation_tol * target_sq,
            stagnant_run: 0,
            iteration: 0,
            termination: None,
        })
    }

    pub fn is_done(&self) -> bool {
        self.termination.is_some() || self.atoms.len() >= self.config.n_max
    }

    /// Selected atoms so far.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Samples the next dictionary and selects from it against the current
    /// residual.
    pub fn propose<P: GreedyProblem + ?Sized>(
        &mut self,
        problem: &P,
        dictionaries: &mut dyn FnMut(usize) -> Result<RandomDictionary>,
    ) -> Result<Proposal> {
        if self.is_done() {
            return Ok(Proposal::Done);
        }
        self.iteration += 1;
        let dict = dictionaries(self.iteration)?;
        if dict.dim() != problem.atom_dim() {
            return Err(invalid(format!(
                "dictionary dimension {} does not match atom dimension {}",
                dict.dim(),
                problem.atom_dim()
            )));
        }
        let pick = select_atom(&dict, problem, self.config.normalized_scoring, self.stagnation_level)?;
        if pick.stagnant {
            self.stagnant_run += 1;
            if self.stagnant_run >= self.config.stagnation_patience {
                self.termination = Some(Termination::Stagnated);
                return Ok(Proposal::Done);
            }
            return Ok(Proposal::Stagnant);
        }
        self.stagnant_run = 0;
        Ok(Proposal::Atom(pick))
    }

    /// Pushes the proposed atom, re-projects, and records the iteration. A
    /// failed projection restores the previous model and ends the run.
    pub fn commit<P: GreedyProblem + ?Sized>(
        &mut self,
        problem: &mut P,
        pick: Selection,
        observer: &mut dyn Observer,
    ) -> Result<()> {
        let config = &self.config;
        problem.push_atom(&pick.atom)?;
        let n = self.atoms.len() + 1;
        let row: Vec<f64> = (0..n).map(|i| problem.gram_entry(n - 1, i)).collect();
        self.gram = grow_symmetric(&self.gram, n - 1, &row);
        self.rhs.push(problem.rhs_entry(n - 1));
        let (gram, rhs, residual, tolerance) = (&self.gram, &self.rhs, self.residual, self.tolerance);

        let mut accepted = None;
        if let Some(p) = solve_gram(gram, n, rhs, config.cond_threshold, config.truncation) {
            let res = problem.update_residual(&p.alpha);
            if res.is_finite() && res <= residual + tolerance {
                accepted = Some((p, res));
            } else if !p.truncated {
                if let Some(q) = truncated_projection(gram, n, rhs, config.truncation) {
                    let res = problem.update_residual(&q.alpha);
                    if res.is_finite() && res <= residual + tolerance {
                        accepted = Some((q, res));
                    }
                }
            }
        }
        if accepted.as_ref().is_none_or(|(p, _)| p.truncated) {
            if let Some((q, res)) = refine_from(problem, gram, n, &self.alpha, config.truncation) {
                if res <= residual + tolerance && accepted.as_ref().is_none_or(|(_, r)| res < *r) {
                    accepted = Some((q, res));
                }
            }
            if let Some((p, _)) = &accepted {
                problem.update_residual(&p.alpha);
            }
        }
        let Some((p, res)) = accepted else {
            problem.pop_atom();
            self.rhs.pop();
            self.gram = shrink_symmetric(&self.gram, n);
            problem.update_residual(&self.alpha);
            self.termination = Some(Termination::ProjectionBreakdown);
            return Ok(());
        };

        self.atoms.push(pick.atom);
        self.alpha = p.alpha;
        self.residual = res;
        let (eps_u, eps_g) = if config.cadence.hits(n, config.n_max) {
            observer.diagnostics(&self.atoms, &self.alpha)?
        } else {
            (None, None)
        };
        let record = TraceRecord {
            n,
            residual_h: res,
            eps_u,
            eps_g,
            score: pick.score,
            gram_cond: p.condition,
            coef_l1: self.alpha.iter().map(|a| a.abs()).sum(),
        };
        observer.on_record(&record);
        self.trace.records.push(record);
        Ok(())
    }

    /// Closes the run, making sure the final record carries diagnostics.
    pub fn finish(mut self, observer: &mut dyn Observer) -> Result<GreedyModel> {
        if let Some(last) = self.trace.records.last_mut() {
            if last.n > 0 && last.eps_u.is_none() && last.eps_g.is_none() {
                let (eps_u, eps_g) = observer.diagnostics(&self.atoms, &self.alpha)?;
                last.eps_u = eps_u;
                last.eps_g = eps_g;
            }
        }
        Ok(GreedyModel {
            atoms: self.atoms,
            coefficients: self.alpha,
            trace: self.trace,
            termination: self.termination.unwrap_or(Termination::Completed),
            initial_residual: self.r0,
        })
    }
}

/// Drops the last row and column of an `n x n` matrix.
fn shrink_symmetric(g: &[f64], n: usize) -> Vec<f64> {
    let m = n - 1;
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        out.extend_from_slice(&g[i * n..i * n + m]);
    }
    out
}

fn grow_symmetric(old: &[f64], n_old: usize, row: &[f64]) -> Vec<f64> {
    let n = n_old + 1;
    let mut g = vec![0.0; n * n];
    for i in 0..n_old {
        g[i * n..i * n + n_old].copy_from_slice(&old[i * n_old..(i + 1) * n_old]);
    }
    for (i, &v) in row.iter().enumerate() {
        g[(n - 1) * n + i] = v;
        g[i * n + n - 1] = v;
    }
    g
}

/// Largest `|⟨r, g_i⟩| / (‖target‖ ‖g_i‖)` over the selected atoms.
pub fn orthogonality_defect<P: GreedyProblem + ?Sized>(problem: &P, n_atoms: usize) -> f64 {
    let scale = math::sqrt(problem.target_norm_sq());
    (0..n_atoms)
        .map(|i| {
            let g = math::sqrt(problem.gram_entry(i, i));
            let d = scale * g;
            if d > 0.0 {
                problem.selected_correlation(i).abs() / d
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Plain `L²(Ω)` fitting problem: the target is a function on a mesh.
pub struct L2Problem<'a> {
    mesh: &'a Mesh,
    target: Vec<f64>,
    residual: Vec<f64>,
    bounds: BiasBounds,
    /// Weighted residual `w ⊙ r`, refreshed on every update.
    weighted: Vec<f64>,
    fields: Vec<Vec<f64>>,
}

impl<'a> L2Problem<'a> {
    pub fn new(target: &[f64], mesh: &'a Mesh) -> Result<Self> {
        crate::error::check_len("target vs mesh", mesh.len(), target.len())?;
        if target.iter().any(|v| !v.is_finite()) {
            return Err(invalid("target values must be finite"));
        }
        Ok(Self {
            mesh,
            target: target.to_vec(),
            residual: target.to_vec(),
            bounds: crate::geometry::bias_bounds(mesh)?,
            weighted: target.iter().zip(mesh.weights()).map(|(t, w)| t * w).collect(),
            fields: Vec::new(),
        })
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }
}

impl GreedyProblem for L2Problem<'_> {
    fn atom_dim(&self) -> usize {
        self.mesh.dim()
    }

    fn bias_bounds(&self) -> BiasBounds {
        self.bounds
    }

    fn target_norm_sq(&self) -> f64 {
        linalg::weighted_dot(self.mesh.weights(), &self.target, &self.target)
    }

    fn correlation(&self, atom: &Atom) -> f64 {
        let mut acc = linalg::Neumaier::default();
        for (z, r) in self.mesh.nodes().zip(&self.weighted) {
            acc.add(atom.evaluate(z) * r);
        }
        acc.value()
    }

    fn atom_norm_sq(&self, atom: &Atom) -> f64 {
        let g: Vec<f64> = self.mesh.nodes().map(|z| atom.evaluate(z)).collect();
        linalg::weighted_dot(self.mesh.weights(), &g, &g)
    }

    fn push_atom(&mut self, atom: &Atom) -> Result<()> {
        self.fields.push(atom.evaluate_on(self.mesh)?);
        Ok(())
    }

    fn pop_atom(&mut self) {
        self.fields.pop();
    }

    fn gram_entry(&self, i: usize, j: usize) -> f64 {
        linalg::weighted_dot(self.mesh.weights(), &self.fields[i], &self.fields[j])
    }

    fn rhs_entry(&self, i: usize) -> f64 {
        linalg::weighted_dot(self.mesh.weights(), &self.target, &self.fields[i])
    }

    fn update_residual(&mut self, alpha: &[f64]) -> f64 {
        self.residual.copy_from_slice(&self.target);
        for (a, g) in alpha.iter().zip(&self.fields) {
            linalg::axpy(-a, g, &mut self.residual);
        }
        for ((wr, r), w) in self.weighted.iter_mut().zip(&self.residual).zip(self.mesh.weights()) {
            *wr = r * w;
        }
        math::sqrt(linalg::dot(&self.weighted, &self.residual).max(0.0))
    }

    fn selected_correlation(&self, i: usize) -> f64 {
        linalg::dot(&self.weighted, &self.fields[i])
    }
}

/// Greedy approximation of a function sampled on a mesh in `L²(Ω)`.
pub fn fit_function(target: &[f64], mesh: &Mesh, config: &OgaConfig) -> Result<GreedyModel> {
    let mut problem = L2Problem::new(target, mesh)?;
    run_oga(&mut problem, config, &mut Silent)
}
