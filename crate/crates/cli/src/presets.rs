//! End-to-end experiment presets: generate, train, evaluate, fit rates and
//! compare against target bands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use greenfit_core::greedy::FitTrace;
use greenfit_core::metrics::{data_rank_diagnostic, fit_trace_rate, MetricColumn, DEFAULT_RANK_THRESHOLD};

use crate::commands::{self, EvalReport, GenerateSpec, MeshSpec, Mode, TrainSpec, Trained};
use crate::config::EvalOpts;
use crate::dataio;

pub const PRESETS: [&str; 7] = [
    "poisson1d",
    "helmholtz1d",
    "cosine2d-disk",
    "pwoga-2d",
    "pwoga-3d-smooth",
    "pwoga-3d-logcos",
    "overfit-svd",
];

const DEFAULT_SEED: u64 = 7;

/// Optional changes to a preset, mainly for quick or partial runs.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub nmax: Option<usize>,
    pub dict: Option<usize>,
    pub sensors: Option<String>,
}

/// One measured quantity against its target.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub name: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
}

impl Band {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: format!("<= {limit}"),
            pass: value <= limit,
        }
    }

    fn holds(name: &str, value: f64, target: &str, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            target: target.into(),
            pass,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReproReport {
    pub preset: String,
    pub bands: Vec<Band>,
    pub runs: Vec<Trained>,
    pub evals: Vec<EvalReport>,
    /// Effective ranks of the forcing matrices, by GP length scale.
    pub ranks: Vec<(f64, usize)>,
    pub summary: PathBuf,
}

impl ReproReport {
    pub fn breakdown(&self) -> bool {
        self.runs.iter().any(Trained::broke_down)
    }

    pub fn passed(&self) -> bool {
        !self.breakdown() && self.bands.iter().all(|b| b.pass)
    }
}

/// Largest increase between consecutive residuals, relative to the first.
pub fn max_residual_increase(trace: &FitTrace) -> f64 {
    let r0 = trace.records.first().map_or(1.0, |r| r.residual_h).max(f64::MIN_POSITIVE);
    trace
        .records
        .windows(2)
        .map(|w| (w[1].residual_h - w[0].residual_h) / r0)
        .fold(0.0, f64::max)
}

fn monotone_band(runs: &[Trained]) -> Band {
    let worst = runs
        .iter()
        .flat_map(|t| match &t.model {
            dataio::SavedModel::Kernel(k) => vec![max_residual_increase(&k.model.trace)],
            dataio::SavedModel::Pointwise(p) => p.models.iter().map(|m| max_residual_increase(&m.trace)).collect(),
        })
        .fold(0.0, f64::max);
    Band::at_most("residual_increase", worst, 1e-12)
}

fn final_eps(trace: &FitTrace) -> f64 {
    trace.eps_u().last().map_or(f64::NAN, |p| p.1)
}

fn slope_band(name: &str, trace: &FitTrace, window: (usize, usize), limit: f64) -> Band {
    match fit_trace_rate(trace, MetricColumn::EpsU, window) {
        Ok(f) => Band::at_most(name, f.slope, limit),
        Err(_) => Band::holds(name, f64::NAN, &format!("<= {limit}"), false),
    }
}

struct Pipeline {
    generate: GenerateSpec,
    train: TrainSpec,
}

fn pipeline(
    dir: &Path,
    problem: &str,
    dim: usize,
    wave: Option<f64>,
    mesh: MeshSpec,
    split: (usize, usize),
    gp_scale: f64,
    mode: Mode,
    n_max: usize,
    sensors: Option<&str>,
    o: &Overrides,
) -> Pipeline {
    let seed = o.seed.unwrap_or(DEFAULT_SEED);
    let data = dir.join("data");
    Pipeline {
        generate: GenerateSpec {
            problem: problem.into(),
            dim,
            wave,
            h: None,
            mesh,
            train: split.0,
            test: split.1,
            gp_scale,
            seed,
            normalize: true,
            out: data.clone(),
        },
        train: TrainSpec {
            data,
            out: dir.join("run"),
            mode,
            n_max: o.nmax.unwrap_or(n_max),
            dict: o.dict.unwrap_or(512),
            power: 1,
            seed,
            sensors: o.sensors.clone().or(sensors.map(String::from)),
            train: None,
            test: None,
            normalized_scoring: false,
            cache_bytes: greenfit_core::kernel_oga::DEFAULT_CACHE_BYTES,
        },
    }
}

fn run_pipeline(p: &Pipeline, force: bool, verbose: bool) -> Result<(Trained, EvalReport)> {
    commands::generate(&p.generate, force)?;
    let trained = commands::train(&p.train, force, verbose)?;
    let eval = commands::eval(&EvalOpts {
        model: Some(p.train.out.clone()),
        out: Some(p.train.out.clone()),
        ..Default::default()
    })?;
    Ok((trained, eval))
}

/// Runs a preset into `out/<preset>` and writes `summary.txt` there.
pub fn repro(preset: &str, out: &Path, o: &Overrides, force: bool, verbose: bool) -> Result<ReproReport> {
    if !PRESETS.contains(&preset) {
        bail!("unknown preset '{preset}'; expected one of {}", PRESETS.join(", "));
    }
    let dir = out.join(preset);
    commands::prepare_dir(&dir, force)?;
    let mut report = ReproReport {
        preset: preset.into(),
        bands: Vec::new(),
        runs: Vec::new(),
        evals: Vec::new(),
        ranks: Vec::new(),
        summary: dir.join("summary.txt"),
    };
    if preset == "overfit-svd" {
        overfit(&dir, o, force, verbose, &mut report)?;
    } else {
        single(preset, &dir, o, force, verbose, &mut report)?;
    }
    dataio::write_text(&report.summary, &summary_text(&report, o))?;
    Ok(report)
}

fn single(preset: &str, dir: &Path, o: &Overrides, force: bool, verbose: bool, report: &mut ReproReport) -> Result<()> {
    let p = match preset {
        "poisson1d" => pipeline(dir, "poisson1d", 1, None, MeshSpec::Grid(501), (500, 200), 0.01, Mode::Oga, 256, None, o),
        "helmholtz1d" => pipeline(dir, "helmholtz1d", 1, Some(15.0), MeshSpec::Grid(501), (500, 200), 0.01, Mode::Oga, 512, None, o),
        "cosine2d-disk" => pipeline(dir, "cosine", 2, Some(1.0), MeshSpec::Disk(833), (1000, 500), 0.2, Mode::Oga, 64, None, o),
        "pwoga-2d" => pipeline(dir, "cosine", 2, Some(1.0), MeshSpec::Disk(833), (1000, 500), 0.2, Mode::Pwoga, 256, None, o),
        "pwoga-3d-smooth" => pipeline(dir, "cosine", 3, Some(2.0), MeshSpec::Grid(17), (1000, 1000), 0.2, Mode::Pwoga, 256, Some("every:64"), o),
        "pwoga-3d-logcos" => pipeline(dir, "logcos", 3, None, MeshSpec::Grid(17), (1000, 1000), 0.2, Mode::Pwoga, 256, Some("every:64"), o),
        _ => unreachable!("checked by the caller"),
    };
    let n_max = p.train.n_max;
    let (trained, eval) = run_pipeline(&p, force, verbose)?;
    let rate = commands::rate(&crate::config::RateOpts {
        trace: Some(p.train.out.clone()),
        out: Some(p.train.out.join("rate.csv")),
        ..Default::default()
    });
    if let Err(e) = &rate {
        if verbose {
            eprintln!("rate fit skipped: {e:#}");
        }
    }
    let trace = &trained.trace;
    let bands = &mut report.bands;
    bands.push(monotone_band(std::slice::from_ref(&trained)));
    match preset {
        "poisson1d" => {
            bands.push(slope_band("eps_u_slope", trace, (16, n_max), -1.0));
            bands.push(Band::at_most("eps_u", eval.eps_u, 1e-2));
            bands.push(Band::at_most("eps_G", eval.eps_g.unwrap_or(f64::NAN), 2e-2));
        }
        "helmholtz1d" => {
            bands.push(slope_band("eps_u_slope", trace, (64, n_max), -0.8));
            bands.push(Band::at_most("eps_u", eval.eps_u, 5e-2));
        }
        "pwoga-2d" => {
            bands.push(slope_band("eps_u_slope", trace, (16, n_max), -1.0));
            bands.push(Band::at_most("eps_u", eval.eps_u, 1e-2));
        }
        "pwoga-3d-smooth" => {
            bands.push(slope_band("eps_u_slope", trace, (16, n_max), -0.8));
            bands.push(Band::at_most("eps_u", eval.eps_u, 5e-3));
        }
        _ => {
            // qualitative presets: the error must come down from its start
            let first = trace.records.first().map_or(f64::NAN, |r| r.residual_h);
            let last = trace.last().map_or(f64::NAN, |r| r.residual_h);
            bands.push(Band::holds("residual_ratio", last / first, "< 1", last < first));
        }
    }
    report.evals.push(eval);
    report.runs.push(trained);
    Ok(())
}

/// First atom count at which `eps_u <= level`, if any.
pub fn first_reaching(points: &[(usize, f64)], level: f64) -> Option<usize> {
    points.iter().find(|p| p.1 <= level).map(|p| p.0)
}

/// Whether `fast` reaches every ε_u level attained by `slow` no later.
pub fn reaches_no_later(fast: &[(usize, f64)], slow: &[(usize, f64)]) -> bool {
    slow.iter().all(|&(n_slow, level)| {
        let n_slow = first_reaching(slow, level).unwrap_or(n_slow);
        first_reaching(fast, level).is_some_and(|n_fast| n_fast <= n_slow)
    })
}

fn overfit(dir: &Path, o: &Overrides, force: bool, verbose: bool, report: &mut ReproReport) -> Result<()> {
    let scales = [0.1, 0.2, 0.5];
    let mut rank_csv = String::from("length_scale,effective_rank,sigma_max,sigma_min\n");
    let mut pipelines = Vec::new();
    for &ell in &scales {
        let sub = dir.join(format!("ell{ell}"));
        let p = pipeline(&sub, "cosine", 2, Some(4.0), MeshSpec::Disk(833), (1000, 500), ell, Mode::Pwoga, 256, Some("every:32"), o);
        let g = commands::generate(&p.generate, force)?;
        let (train, _) = g.data.split(g.meta.train, g.meta.test)?;
        let rank = data_rank_diagnostic(train.forcings().values(), DEFAULT_RANK_THRESHOLD);
        let (smax, smin) = (
            rank.singular_values.first().copied().unwrap_or(0.0),
            rank.singular_values.last().copied().unwrap_or(0.0),
        );
        let _ = writeln!(
            rank_csv,
            "{ell},{},{},{}",
            rank.effective_rank,
            dataio::fmt_f64(smax),
            dataio::fmt_f64(smin)
        );
        report.ranks.push((ell, rank.effective_rank));
        pipelines.push((ell, p));
    }
    dataio::write_text(&dir.join("rank.csv"), &rank_csv)?;
    let rank = |ell: f64| report.ranks.iter().find(|r| r.0 == ell).map_or(0, |r| r.1) as f64;
    report.bands.push(Band::holds(
        "rank_gap",
        rank(0.1) - rank(0.5),
        "> 0",
        rank(0.5) < rank(0.1),
    ));

    for (ell, p) in pipelines.iter().filter(|(ell, _)| *ell != 0.2) {
        let trained = commands::train(&p.train, force, verbose)?;
        let eval = commands::eval(&EvalOpts {
            model: Some(p.train.out.clone()),
            out: Some(p.train.out.clone()),
            ..Default::default()
        })?;
        if verbose {
            eprintln!("ell={ell}: eps_u={:.4e} eps_G={:?}", eval.eps_u, eval.eps_g);
        }
        report.runs.push(trained);
        report.evals.push(eval);
    }
    let (smooth, rough) = (&report.runs[1].trace, &report.runs[0].trace);
    report.bands.push(monotone_band(&report.runs));
    let faster = reaches_no_later(&smooth.eps_u(), &rough.eps_u());
    report.bands.push(Band::holds(
        "eps_u_levels_no_later",
        final_eps(smooth) / final_eps(rough),
        "every eps_u level reached no later for ell=0.5",
        faster,
    ));
    let (g_smooth, g_rough) = (
        report.evals[1].eps_g.unwrap_or(f64::NAN),
        report.evals[0].eps_g.unwrap_or(f64::NAN),
    );
    report.bands.push(Band::holds(
        "eps_G_ratio",
        g_smooth / g_rough,
        "> 1",
        g_smooth > g_rough,
    ));
    Ok(())
}

fn summary_text(r: &ReproReport, o: &Overrides) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "preset={}", r.preset);
    let _ = writeln!(s, "seed={}", o.seed.unwrap_or(DEFAULT_SEED));
    for (ell, rank) in &r.ranks {
        let _ = writeln!(s, "rank.ell{ell}={rank}");
    }
    for (i, e) in r.evals.iter().enumerate() {
        let _ = writeln!(s, "eval{i}.eps_u={}", dataio::fmt_f64(e.eps_u));
        if let Some(g) = e.eps_g {
            let _ = writeln!(s, "eval{i}.eps_G={}", dataio::fmt_f64(g));
        }
    }
    for (i, t) in r.runs.iter().enumerate() {
        let _ = writeln!(s, "run{i}.termination={}", t.termination);
    }
    for b in &r.bands {
        let _ = writeln!(
            s,
            "band.{}={:.6e} target {} {}",
            b.name,
            b.value,
            b.target,
            if b.pass { "PASS" } else { "FAIL" }
        );
    }
    let _ = writeln!(s, "result={}", if r.passed() { "PASS" } else { "FAIL" });
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_crossing_order() {
        let fast = [(0, 1.0), (1, 0.5), (2, 0.1)];
        let slow = [(0, 1.0), (1, 0.6), (2, 0.3)];
        assert!(reaches_no_later(&fast, &slow));
        assert!(!reaches_no_later(&slow, &fast));
        assert_eq!(first_reaching(&slow, 0.4), Some(2));
    }

    #[test]
    fn residual_increase_is_relative() {
        use greenfit_core::greedy::TraceRecord;
        let rec = |n, r| TraceRecord {
            n,
            residual_h: r,
            eps_u: None,
            eps_g: None,
            score: 0.0,
            gram_cond: 1.0,
            coef_l1: 0.0,
        };
        let t = FitTrace {
            records: vec![rec(0, 2.0), rec(1, 1.0), rec(2, 1.5)],
        };
        assert_eq!(max_residual_increase(&t), 0.25);
    }
}
