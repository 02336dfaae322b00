//! Command implementations, shared by the binary and the tests.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use greenfit_core::data::DataSet;
use greenfit_core::geometry::{sunflower_disk, tensor_grid, uniform_grid_1d, Mesh};
use greenfit_core::greedy::{FitTrace, OgaConfig, Termination, TraceRecord};
use greenfit_core::kernel_oga::{evaluate_kernel, fit_kernel, predict_many, FitHooks, KernelFitConfig, DEFAULT_CACHE_BYTES};
use greenfit_core::linalg::Matrix;
use greenfit_core::metrics::{self, fit_trace_rate, MetricColumn, RateFit};
use greenfit_core::pointwise_oga::{assemble_kernel, fit_pointwise, predict_pointwise_many};
use greenfit_core::problems::{synthesize_pairs, GpConfig, KernelOracle};

use crate::config::{parse_sensors, parse_window, EvalOpts, GenerateOpts, RateOpts, TrainOpts};
use crate::dataio::{self, DatasetMeta, Manifest, RunManifest, SavedModel};

/// Refuses to reuse a non-empty directory unless forced.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = !dir.is_dir() || std::fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            bail!("{} already exists; pass --force to overwrite", dir.display());
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

// ---------------------------------------------------------------- generate

#[derive(Clone, Debug, PartialEq)]
pub enum MeshSpec {
    /// Nodes per axis on `[0,1]^dim`.
    Grid(usize),
    /// Sunflower cloud on the unit disk.
    Disk(usize),
    File { path: PathBuf, volume: Option<f64> },
}

impl MeshSpec {
    pub fn build(&self, dim: usize) -> Result<Mesh> {
        Ok(match self {
            MeshSpec::Grid(m) if dim == 1 => uniform_grid_1d(0.0, 1.0, *m)?,
            MeshSpec::Grid(m) => tensor_grid(0.0, 1.0, *m, dim)?,
            MeshSpec::Disk(m) => {
                if dim != 2 {
                    bail!("a disk mesh needs dim 2, not {dim}");
                }
                sunflower_disk(*m, 1.0)?
            }
            MeshSpec::File { path, volume } => {
                let mesh = dataio::load_mesh(path, *volume)?;
                if mesh.dim() != dim {
                    bail!("{} has dimension {}, the problem needs {dim}", path.display(), mesh.dim());
                }
                mesh
            }
        })
    }
}

/// Fully resolved `generate` settings.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSpec {
    pub problem: String,
    pub dim: usize,
    pub wave: Option<f64>,
    pub h: Option<f64>,
    pub mesh: MeshSpec,
    pub train: usize,
    pub test: usize,
    pub gp_scale: f64,
    pub seed: u64,
    pub normalize: bool,
    pub out: PathBuf,
}

impl GenerateSpec {
    pub fn from_opts(o: &GenerateOpts) -> Result<Self> {
        let problem = o.problem.clone().context("--problem is required")?;
        let one_d = matches!(problem.as_str(), "poisson1d" | "helmholtz1d" | "logdiscrete");
        let dim = if one_d {
            if let Some(d) = o.dim.filter(|&d| d != 1) {
                bail!("{problem} is one-dimensional, not {d}-dimensional");
            }
            1
        } else {
            o.dim.unwrap_or(2)
        };
        let mesh = match (&o.mesh, o.disk, o.grid) {
            (Some(p), _, _) => MeshSpec::File {
                path: p.clone(),
                volume: o.mesh_volume,
            },
            (None, Some(m), _) => MeshSpec::Disk(m),
            (None, None, Some(m)) => MeshSpec::Grid(m),
            (None, None, None) => match dim {
                1 => MeshSpec::Grid(501),
                2 => MeshSpec::Disk(833),
                _ => MeshSpec::Grid(17),
            },
        };
        let (train, test) = if dim == 1 { (500, 200) } else { (1000, 500) };
        Ok(Self {
            problem,
            dim,
            wave: o.wave,
            h: o.h,
            mesh,
            train: o.train.unwrap_or(train),
            test: o.test.unwrap_or(test),
            gp_scale: o.gp_scale.unwrap_or(if dim == 1 { 0.01 } else { 0.2 }),
            seed: o.seed.unwrap_or(0),
            normalize: o.normalize.unwrap_or(true),
            out: o.out.clone().context("--out is required")?,
        })
    }

    pub fn oracle(&self, mesh: &Mesh) -> Result<KernelOracle> {
        let h = match (self.h, &self.mesh) {
            (Some(h), _) => Some(h),
            (None, MeshSpec::Grid(m)) if *m > 1 => Some(1.0 / (*m - 1) as f64),
            _ if mesh.len() > 1 && mesh.dim() == 1 => Some(mesh.volume() / (mesh.len() - 1) as f64),
            _ => None,
        };
        Ok(KernelOracle::from_name(&self.problem, self.dim, self.wave, h)?)
    }
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub dir: PathBuf,
    pub hash: String,
    pub data: DataSet,
    pub meta: DatasetMeta,
}

pub fn generate(spec: &GenerateSpec, force: bool) -> Result<Generated> {
    prepare_dir(&spec.out, force)?;
    let mesh = Arc::new(spec.mesh.build(spec.dim)?);
    let oracle = spec.oracle(&mesh)?;
    let gp = GpConfig::new(spec.gp_scale, spec.seed);
    if spec.train == 0 {
        bail!("the training split must be non-empty");
    }
    let data = synthesize_pairs(&oracle, &mesh, &mesh, &gp, spec.train + spec.test, spec.normalize)?;
    let meta = DatasetMeta {
        oracle: Some(oracle),
        gp_length_scale: Some(spec.gp_scale),
        seed: Some(spec.seed),
        train: spec.train,
        test: spec.test,
    };
    let hash = dataio::save_dataset(&spec.out, &data, &meta)?;
    Ok(Generated {
        dir: spec.out.clone(),
        hash,
        data,
        meta,
    })
}

// ---------------------------------------------------------------- train

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Oga,
    Pwoga,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "oga" => Ok(Mode::Oga),
            "pwoga" => Ok(Mode::Pwoga),
            other => bail!("unknown mode '{other}'; expected oga or pwoga"),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Oga => "oga",
            Mode::Pwoga => "pwoga",
        })
    }
}

/// Fully resolved `train` settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSpec {
    pub data: PathBuf,
    pub out: PathBuf,
    pub mode: Mode,
    pub n_max: usize,
    pub dict: usize,
    pub power: u32,
    pub seed: u64,
    pub sensors: Option<String>,
    pub train: Option<usize>,
    pub test: Option<usize>,
    pub normalized_scoring: bool,
    pub cache_bytes: usize,
}

impl TrainSpec {
    pub fn from_opts(o: &TrainOpts) -> Result<Self> {
        Ok(Self {
            data: o.data.clone().context("--data is required")?,
            out: o.out.clone().context("--out is required")?,
            mode: Mode::parse(o.mode.as_deref().unwrap_or("oga"))?,
            n_max: o.nmax.unwrap_or(256),
            dict: o.dict.unwrap_or(512),
            power: o.power.unwrap_or(1),
            seed: o.seed.unwrap_or(0),
            sensors: o.sensors.clone(),
            train: o.train,
            test: o.test,
            normalized_scoring: o.normalized_scoring.unwrap_or(false),
            cache_bytes: o.cache_bytes.unwrap_or(DEFAULT_CACHE_BYTES),
        })
    }

    pub fn oga_config(&self) -> OgaConfig {
        let mut c = OgaConfig::new(self.n_max, self.dict, self.power, self.seed);
        c.normalized_scoring = self.normalized_scoring;
        c
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: SavedModel,
    /// Kernel trace, or the sensor aggregate for point-wise runs.
    pub trace: FitTrace,
    pub breakdowns: Vec<usize>,
    pub termination: String,
    pub run: RunManifest,
}

impl Trained {
    pub fn broke_down(&self) -> bool {
        !self.breakdowns.is_empty()
    }

    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.trace.last()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"))
}

/// One human-readable progress line.
pub fn progress_line(r: &TraceRecord) -> String {
    format!(
        "n={:<5} residual_H={:.4e} eps_u={} eps_G={} score={:.3e} cond={:.2e} sum|a|={:.3e}",
        r.n,
        r.residual_h,
        fmt_opt(r.eps_u),
        fmt_opt(r.eps_g),
        r.score,
        r.gram_cond,
        r.coef_l1
    )
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Completed => "completed",
        Termination::Stagnated => "stagnated",
        Termination::ProjectionBreakdown => "breakdown",
    }
}

/// Trains and writes `model.bin`, `trace.csv` and `run.txt`. A projection
/// breakdown still writes the last good model.
pub fn train(spec: &TrainSpec, force: bool, verbose: bool) -> Result<Trained> {
    let stored = dataio::load_dataset(&spec.data)?;
    let (n_train, n_test) = (
        spec.train.unwrap_or(stored.meta.train),
        spec.test.unwrap_or(if spec.train.is_some() { 0 } else { stored.meta.test }),
    );
    let (train_set, test_set) = stored.data.split(n_train, n_test)?;
    prepare_dir(&spec.out, force)?;
    let oracle = stored.meta.oracle.clone();
    let config = spec.oga_config();
    let mut print = |r: &TraceRecord| eprintln!("{}", progress_line(r));
    let progress: Option<&mut dyn FnMut(&TraceRecord)> = if verbose { Some(&mut print) } else { None };
    let hooks = FitHooks {
        eval: test_set.as_ref(),
        oracle: oracle.as_ref(),
        progress,
    };

    let (model, trace, breakdowns, termination, sensors, trace_csv) = match spec.mode {
        Mode::Oga => {
            if spec.sensors.is_some() {
                bail!("--sensors applies to pwoga mode only");
            }
            let mut kc = KernelFitConfig::new(config.clone());
            kc.max_cache_bytes = spec.cache_bytes;
            let km = fit_kernel(&train_set, &kc, hooks)?;
            let t = km.model.termination;
            let breakdowns = if t == Termination::ProjectionBreakdown { vec![0] } else { vec![] };
            let csv = dataio::kernel_trace_csv(&km.model.trace);
            let trace = km.model.trace.clone();
            (SavedModel::Kernel(km), trace, breakdowns, termination_name(t).to_string(), None, csv)
        }
        Mode::Pwoga => {
            let m_u = train_set.output_mesh().len();
            let sensors = spec.sensors.as_deref().map(|s| parse_sensors(s, m_u)).transpose()?;
            let fit = fit_pointwise(&train_set, &config, sensors.as_deref(), hooks)?;
            let mut counts = [0usize; 3];
            for m in &fit.model.models {
                counts[termination_tag(m.termination)] += 1;
            }
            let termination = format!(
                "completed={} stagnated={} breakdown={}",
                counts[0], counts[1], counts[2]
            );
            let csv = dataio::pointwise_trace_csv(&fit.trace, &fit.model);
            (
                SavedModel::Pointwise(fit.model),
                fit.trace,
                fit.breakdowns,
                termination,
                spec.sensors.clone(),
                csv,
            )
        }
    };

    dataio::save_model(&spec.out.join(dataio::MODEL_FILE), &model)?;
    dataio::write_text(&spec.out.join(dataio::TRACE_FILE), &trace_csv)?;
    let run = RunManifest {
        mode: spec.mode.to_string(),
        seed: spec.seed,
        dict_size: spec.dict,
        power: spec.power,
        n_max: spec.n_max,
        normalized: stored.data.normalized,
        dataset: std::fs::canonicalize(&spec.data).unwrap_or_else(|_| spec.data.clone()),
        dataset_hash: stored.hash.clone(),
        train: n_train,
        test: n_test,
        sensors,
        termination: termination.clone(),
        tool_version: dataio::TOOL_VERSION.to_string(),
    };
    run.save(&spec.out.join(dataio::RUN_MANIFEST))?;
    Ok(Trained {
        model,
        trace,
        breakdowns,
        termination,
        run,
    })
}

fn termination_tag(t: Termination) -> usize {
    match t {
        Termination::Completed => 0,
        Termination::Stagnated => 1,
        Termination::ProjectionBreakdown => 2,
    }
}

// ---------------------------------------------------------------- eval

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub kind: &'static str,
    pub pairs: usize,
    pub eps_u: f64,
    pub eps_g: Option<f64>,
    /// `|u - ũ|` per evaluation pair and output node (or sensor).
    pub errors: Matrix,
}

fn model_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(dataio::MODEL_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Scores a stored model on the held-out split of its dataset.
pub fn eval(opts: &EvalOpts) -> Result<EvalReport> {
    let model_path = opts.model.clone().context("--model is required")?;
    let run = model_path
        .is_dir()
        .then(|| model_path.join(dataio::RUN_MANIFEST))
        .filter(|p| p.exists())
        .map(|p| RunManifest::load(&p))
        .transpose()?;
    let model = dataio::load_model(&model_file(&model_path))?;
    let data_dir = match (&opts.data, &run) {
        (Some(d), _) => d.clone(),
        (None, Some(r)) => {
            r.verify()?;
            r.dataset.clone()
        }
        (None, None) => bail!("--data is required when the model has no run manifest"),
    };
    let stored = dataio::load_dataset(&data_dir)?;
    let (n_train, n_test) = run.as_ref().map_or((stored.meta.train, stored.meta.test), |r| (r.train, r.test));
    let (train_set, test_set) = stored.data.split(n_train, n_test)?;
    let data = test_set.unwrap_or(train_set);
    if data.input_mesh().as_ref() != model.input().as_ref() || data.output_mesh().as_ref() != model.output().as_ref() {
        bail!("the model was trained on different meshes than {}", data_dir.display());
    }
    let oracle = match &opts.oracle {
        Some(name) => Some(KernelOracle::from_name(
            name,
            opts.oracle_dim.unwrap_or(model.input().dim()),
            opts.oracle_wave,
            stored.meta.oracle.as_ref().and_then(|o| match o {
                KernelOracle::LogDiscrete { h } => Some(*h),
                _ => None,
            }),
        )?),
        None => stored.meta.oracle.clone(),
    };
    if opts.eps_g == Some(true) && oracle.is_none() {
        bail!("the kernel error needs an oracle; pass --oracle or use a dataset generated from a named kernel");
    }

    let (pred, reference, out_mesh, kernel) = match &model {
        SavedModel::Kernel(k) => {
            let pred = predict_many(k, data.forcings().values())?;
            let kernel = oracle
                .as_ref()
                .map(|_| evaluate_kernel(k, &k.output, &k.input))
                .transpose()?;
            (pred, data.responses().values().clone(), k.output.as_ref().clone(), kernel)
        }
        SavedModel::Pointwise(p) => {
            let pred = predict_pointwise_many(p, data.forcings().values())?;
            let u = data.responses().values();
            let reference = Matrix::from_fn(u.rows(), p.sensors.len(), |j, c| u.get(j, p.sensors[c]));
            let kernel = oracle.as_ref().map(|_| assemble_kernel(p)).transpose()?;
            (pred, reference, p.sensor_mesh()?, kernel)
        }
    };
    let eps_u = metrics::relative_l2_solutions(&pred, &reference, &out_mesh)?;
    let eps_g = match (&oracle, &kernel) {
        (Some(o), Some(table)) => Some(metrics::relative_l2_kernel(table, o, &out_mesh, model.input())?),
        _ => None,
    };
    let diff = metrics::pointwise_abs_error(pred.as_slice(), reference.as_slice())?;
    let errors = Matrix::from_vec(pred.rows(), pred.cols(), diff)?;
    let report = EvalReport {
        kind: model.kind(),
        pairs: data.len(),
        eps_u,
        eps_g,
        errors,
    };
    if let Some(out) = &opts.out {
        std::fs::create_dir_all(out)?;
        let mut m = Manifest::new();
        m.set("kind", "eval");
        m.set("model", model_path.display());
        m.set("dataset", data_dir.display());
        m.set("pairs", report.pairs);
        m.set("eps_u", dataio::fmt_f64(report.eps_u));
        if let Some(g) = report.eps_g {
            m.set("eps_G", dataio::fmt_f64(g));
        }
        m.save(&out.join("metrics.txt"))?;
        dataio::write_text(&out.join("errors.csv"), &dataio::matrix_to_csv(&report.errors))?;
    }
    Ok(report)
}

// ---------------------------------------------------------------- rate

fn trace_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(dataio::TRACE_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn parse_metric(s: &str) -> Result<MetricColumn> {
    match s {
        "residual_H" | "residual" => Ok(MetricColumn::Residual),
        "eps_u" => Ok(MetricColumn::EpsU),
        "eps_G" | "eps_g" => Ok(MetricColumn::EpsG),
        other => bail!("unknown metric '{other}'; expected residual_H, eps_u or eps_G"),
    }
}

pub fn rate(opts: &RateOpts) -> Result<Vec<(MetricColumn, RateFit)>> {
    let path = trace_file(&opts.trace.clone().context("--trace is required")?);
    let table = dataio::load_trace(&path)?;
    let trace = table.trace(opts.sensor.as_deref());
    let last = trace
        .last()
        .with_context(|| format!("{} has no rows for the requested sensor", path.display()))?
        .n;
    let window = match &opts.window {
        Some(w) => parse_window(w)?,
        None => (16, last),
    };
    let fits = match &opts.metric {
        Some(m) => {
            let col = parse_metric(m)?;
            vec![(col, fit_trace_rate(&trace, col, window)?)]
        }
        None => {
            let mut fits = Vec::new();
            let mut first_err = None;
            for col in [MetricColumn::Residual, MetricColumn::EpsU, MetricColumn::EpsG] {
                match fit_trace_rate(&trace, col, window) {
                    Ok(f) => fits.push((col, f)),
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            if fits.is_empty() {
                return Err(first_err.expect("three attempts").into());
            }
            fits
        }
    };
    if let Some(out) = &opts.out {
        dataio::write_text(out, &rate_csv(&fits))?;
    }
    Ok(fits)
}

pub fn rate_csv(fits: &[(MetricColumn, RateFit)]) -> String {
    let mut s = String::from("metric,slope,intercept,n_lo,n_hi,r_squared,points\n");
    for (c, f) in fits {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.name(),
            dataio::fmt_f64(f.slope),
            dataio::fmt_f64(f.intercept),
            f.window.0,
            f.window.1,
            dataio::fmt_f64(f.r_squared),
            f.points
        ));
    }
    s
}
