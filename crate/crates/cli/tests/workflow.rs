use std::fs;
use std::path::Path;

use greenfit::commands::{self, GenerateSpec, MeshSpec, Mode, TrainSpec};
use greenfit::config::{EvalOpts, RateOpts};
use greenfit::dataio::{self, SavedModel};
use greenfit::presets::{self, Overrides};
use greenfit_core::kernel_oga::{predict_many, DEFAULT_CACHE_BYTES};
use greenfit_core::pointwise_oga::predict_pointwise_many;

fn generate_spec(out: &Path) -> GenerateSpec {
    GenerateSpec {
        problem: "poisson1d".into(),
        dim: 1,
        wave: None,
        h: None,
        mesh: MeshSpec::Grid(41),
        train: 40,
        test: 10,
        gp_scale: 0.05,
        seed: 3,
        normalize: true,
        out: out.to_path_buf(),
    }
}

fn train_spec(data: &Path, out: &Path, mode: Mode, n_max: usize, sensors: Option<&str>) -> TrainSpec {
    TrainSpec {
        data: data.to_path_buf(),
        out: out.to_path_buf(),
        mode,
        n_max,
        dict: 64,
        power: 1,
        seed: 5,
        sensors: sensors.map(String::from),
        train: None,
        test: None,
        normalized_scoring: false,
        cache_bytes: DEFAULT_CACHE_BYTES,
    }
}

#[test]
fn dataset_round_trip_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    let g = commands::generate(&generate_spec(&dir), false).unwrap();
    let stored = dataio::load_dataset(&dir).unwrap();
    assert_eq!(stored.data, g.data);
    assert_eq!(stored.hash, g.hash);
    assert_eq!(stored.meta, g.meta);
    assert_eq!(dataio::dataset_hash(&dir).unwrap(), g.hash);
}

#[test]
fn generate_refuses_existing_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    commands::generate(&generate_spec(&dir), false).unwrap();
    let err = commands::generate(&generate_spec(&dir), false).unwrap_err();
    assert!(format!("{err:#}").contains("--force"), "{err:#}");
    commands::generate(&generate_spec(&dir), true).unwrap();
}

#[test]
fn corrupted_files_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    commands::generate(&generate_spec(&dir), false).unwrap();
    let f_path = dir.join(dataio::F_FILE);
    let text = fs::read_to_string(&f_path).unwrap();
    let kept: Vec<&str> = text.lines().take(49).collect();
    fs::write(&f_path, kept.join("\n")).unwrap();
    let err = dataio::load_dataset(&dir).unwrap_err().to_string();
    assert!(err.contains("does not match"), "{err}");

    // Without the recorded hash the short file is caught by its row count.
    let m_path = dir.join(dataio::MANIFEST);
    let manifest = fs::read_to_string(&m_path).unwrap();
    let stripped: String = manifest
        .lines()
        .filter(|l| !l.starts_with("sha256.F.csv"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&m_path, stripped).unwrap();
    let err = dataio::load_dataset(&dir).unwrap_err().to_string();
    assert!(err.contains("F.csv, row 50"), "{err}");
}

#[test]
fn trained_models_reload_and_predict_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let g = commands::generate(&generate_spec(&data), false).unwrap();
    let forcings = g.data.forcings().values();

    let run = tmp.path().join("oga");
    let t = commands::train(&train_spec(&data, &run, Mode::Oga, 10, None), false, false).unwrap();
    let loaded = dataio::load_model(&run.join(dataio::MODEL_FILE)).unwrap();
    let (SavedModel::Kernel(a), SavedModel::Kernel(b)) = (&t.model, &loaded) else {
        panic!("expected kernel models");
    };
    assert_eq!(a, b);
    assert_eq!(b.model.len(), 10);
    assert_eq!(predict_many(a, forcings).unwrap(), predict_many(b, forcings).unwrap());

    let run = tmp.path().join("pwoga");
    let t = commands::train(&train_spec(&data, &run, Mode::Pwoga, 6, Some("every:5")), false, false).unwrap();
    let loaded = dataio::load_model(&run.join(dataio::MODEL_FILE)).unwrap();
    let (SavedModel::Pointwise(a), SavedModel::Pointwise(b)) = (&t.model, &loaded) else {
        panic!("expected point-wise models");
    };
    assert_eq!(a, b);
    assert_eq!(b.sensors.len(), 5);
    assert_eq!(
        predict_pointwise_many(a, forcings).unwrap(),
        predict_pointwise_many(b, forcings).unwrap()
    );

    let table = dataio::load_trace(&run.join(dataio::TRACE_FILE)).unwrap();
    let agg = table.trace(None);
    assert_eq!(agg.records.len(), t.trace.records.len());
    for (x, y) in agg.records.iter().zip(&t.trace.records) {
        assert_eq!((x.n, x.residual_h, x.eps_u), (y.n, y.residual_h, y.eps_u));
    }
}

#[test]
fn eval_of_empty_model_reports_unit_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    commands::generate(&generate_spec(&data), false).unwrap();
    let run = tmp.path().join("run");
    commands::train(&train_spec(&data, &run, Mode::Oga, 4, None), false, false).unwrap();

    // Zero the coefficients: the prediction vanishes, so eps_u is exactly 1.
    let file = run.join(dataio::MODEL_FILE);
    let SavedModel::Kernel(mut k) = dataio::load_model(&file).unwrap() else {
        panic!("expected a kernel model");
    };
    k.model.coefficients.iter_mut().for_each(|c| *c = 0.0);
    dataio::save_model(&file, &SavedModel::Kernel(k)).unwrap();
    let report = commands::eval(&EvalOpts {
        model: Some(run.clone()),
        out: Some(tmp.path().join("eval")),
        ..Default::default()
    })
    .unwrap();
    assert_eq!(report.pairs, 10);
    assert_eq!(report.eps_u, 1.0);
    assert_eq!(report.eps_g, Some(1.0));
    let metrics = fs::read_to_string(tmp.path().join("eval/metrics.txt")).unwrap();
    assert!(metrics.contains("eps_u=1.0000000000000000e0"), "{metrics}");
}

#[test]
fn rate_recovers_a_power_law() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from(dataio::TRACE_HEADER);
    csv.push('\n');
    for n in 1..=64usize {
        let e = 3.0 * (n as f64).powf(-1.25);
        csv.push_str(&format!("{n},{e},{e},,0,1\n"));
    }
    let path = tmp.path().join("trace.csv");
    fs::write(&path, csv).unwrap();
    let opts = RateOpts {
        trace: Some(path.clone()),
        window: Some("4..64".into()),
        metric: Some("eps_u".into()),
        ..Default::default()
    };
    let fits = commands::rate(&opts).unwrap();
    assert!((fits[0].1.slope + 1.25).abs() < 1e-10, "{}", fits[0].1.slope);

    let narrow = RateOpts {
        window: Some("70..90".into()),
        ..opts
    };
    assert!(commands::rate(&narrow).is_err());
}

#[test]
fn unknown_preset_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let err = presets::repro("poisson2d", tmp.path(), &Overrides::default(), false, false).unwrap_err();
    assert!(err.to_string().contains("unknown preset"), "{err}");
}
