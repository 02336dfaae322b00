//! On-disk formats: dataset directories, model files, traces and run
//! manifests.
//!
//! A dataset directory holds `manifest.txt` (key=value metadata),
//! `mesh_in.csv`, `mesh_out.csv`, `F.csv` and `U.csv`. Matrices are stored
//! one function per row with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use greenfit_core::data::DataSet;
use greenfit_core::dictionary::{Atom, Sign};
use greenfit_core::geometry::Mesh;
use greenfit_core::greedy::{FitTrace, GreedyModel, Termination, TraceRecord};
use greenfit_core::kernel_oga::KernelModel;
use greenfit_core::linalg::Matrix;
use greenfit_core::pointwise_oga::PointwiseModel;
use greenfit_core::problems::KernelOracle;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.txt";
pub const MESH_IN: &str = "mesh_in.csv";
pub const MESH_OUT: &str = "mesh_out.csv";
pub const F_FILE: &str = "F.csv";
pub const U_FILE: &str = "U.csv";
pub const MODEL_FILE: &str = "model.bin";
pub const TRACE_FILE: &str = "trace.csv";
pub const RUN_MANIFEST: &str = "run.txt";

const DATA_FILES: [&str; 4] = [MESH_IN, MESH_OUT, F_FILE, U_FILE];
const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}: {source}", file.display())]
    Io { file: PathBuf, source: io::Error },
    #[error("{}, row {row}: {msg}", file.display())]
    Parse { file: PathBuf, row: usize, msg: String },
    #[error("{}: {msg}", file.display())]
    Format { file: PathBuf, msg: String },
    #[error("{}: content hash {found} does not match the manifest ({expected})", file.display())]
    Hash { file: PathBuf, expected: String, found: String },
    #[error(transparent)]
    Core(#[from] greenfit_core::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

fn format_err(file: &Path, msg: impl Into<String>) -> DataError {
    DataError::Format {
        file: file.to_path_buf(),
        msg: msg.into(),
    }
}

fn read(file: &Path) -> Result<Vec<u8>> {
    fs::read(file).map_err(|source| DataError::Io {
        file: file.to_path_buf(),
        source,
    })
}

fn read_text(file: &Path) -> Result<String> {
    String::from_utf8(read(file)?).map_err(|_| format_err(file, "not valid UTF-8"))
}

fn write(file: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(file, bytes).map_err(|source| DataError::Io {
        file: file.to_path_buf(),
        source,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Lossless decimal form of a double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------- manifest

/// Ordered `key=value` text with `#` comments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing any earlier value.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str, file: &Path) -> Result<Self> {
        let mut m = Manifest::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| DataError::Parse {
                file: file.to_path_buf(),
                row: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, found '{line}'")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(parse_err("empty key".into()));
            }
            if m.get(k).is_some() {
                return Err(parse_err(format!("duplicate key '{k}'")));
            }
            m.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(m)
    }

    pub fn load(file: &Path) -> Result<Self> {
        Self::parse(&read_text(file)?, file)
    }

    pub fn save(&self, file: &Path) -> Result<()> {
        write(file, self.render().as_bytes())
    }

    /// Required typed value.
    pub fn value<T: std::str::FromStr>(&self, key: &str, file: &Path) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| format_err(file, format!("missing key '{key}'")))?;
        raw.parse()
            .map_err(|_| format_err(file, format!("key '{key}' has malformed value '{raw}'")))
    }

    /// Optional typed value.
    pub fn opt_value<T: std::str::FromStr>(&self, key: &str, file: &Path) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.value(key, file).map(Some),
        }
    }
}

// ---------------------------------------------------------------- csv

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut s = String::with_capacity(m.rows() * m.cols() * 24);
    for row in m.row_iter() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&fmt_f64(*v));
        }
        s.push('\n');
    }
    s
}

fn parse_row(line: &str, file: &Path, row: usize) -> Result<Vec<f64>> {
    line.split(',')
        .enumerate()
        .map(|(c, field)| {
            let field = field.trim();
            field.parse::<f64>().map_err(|_| DataError::Parse {
                file: file.to_path_buf(),
                row,
                msg: format!("column {}: '{field}' is not a number", c + 1),
            })
        })
        .collect()
}

/// Parses a headerless matrix; rows are numbered from 1 in errors.
pub fn csv_to_matrix(text: &str, file: &Path, expected_rows: Option<usize>, cols: usize) -> Result<Matrix> {
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(line, file, i + 1)?;
        if row.len() != cols {
            return Err(DataError::Parse {
                file: file.to_path_buf(),
                row: i + 1,
                msg: format!("expected {cols} values, found {}", row.len()),
            });
        }
        values.extend(row);
        rows += 1;
    }
    if let Some(n) = expected_rows {
        if rows != n {
            return Err(DataError::Parse {
                file: file.to_path_buf(),
                row: rows + 1,
                msg: format!("expected {n} rows, file ends after {rows}"),
            });
        }
    }
    Ok(Matrix::from_vec(rows, cols, values)?)
}

pub fn mesh_to_csv(mesh: &Mesh) -> String {
    let mut s: String = (0..mesh.dim()).map(|c| format!("x{c},")).collect();
    s.push_str("weight\n");
    for (z, w) in mesh.nodes().zip(mesh.weights()) {
        for v in z {
            s.push_str(&fmt_f64(*v));
            s.push(',');
        }
        s.push_str(&fmt_f64(*w));
        s.push('\n');
    }
    s
}

/// Parses a mesh with header `x0,..,x{d-1}[,weight]`. Without a weight
/// column the nodes share `volume` equally.
pub fn csv_to_mesh(text: &str, file: &Path, volume: Option<f64>) -> Result<Mesh> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| format_err(file, "empty mesh file"))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let weighted = names.last() == Some(&"weight");
    let dim = names.len() - usize::from(weighted);
    if dim == 0 || names[..dim].iter().enumerate().any(|(c, n)| *n != format!("x{c}")) {
        return Err(DataError::Parse {
            file: file.to_path_buf(),
            row: 1,
            msg: format!("header must be x0,..,x{{d-1}}[,weight], found '{header}'"),
        });
    }
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (i, line) in lines {
        let row = parse_row(line, file, i + 1)?;
        if row.len() != names.len() {
            return Err(DataError::Parse {
                file: file.to_path_buf(),
                row: i + 1,
                msg: format!("expected {} values, found {}", names.len(), row.len()),
            });
        }
        nodes.extend_from_slice(&row[..dim]);
        if weighted {
            weights.push(row[dim]);
        }
    }
    let mesh = if weighted {
        Mesh::new(dim, nodes, weights)
    } else {
        let volume = volume.ok_or_else(|| format_err(file, "mesh has no weight column and no domain volume was given"))?;
        Mesh::with_volume(dim, nodes, volume)
    };
    mesh.map_err(|e| format_err(file, e.to_string()))
}

pub fn load_mesh(file: &Path, volume: Option<f64>) -> Result<Mesh> {
    csv_to_mesh(&read_text(file)?, file, volume)
}

pub fn save_mesh(file: &Path, mesh: &Mesh) -> Result<()> {
    write(file, mesh_to_csv(mesh).as_bytes())
}

// ---------------------------------------------------------------- datasets

/// How a dataset was produced, and its intended split.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub oracle: Option<KernelOracle>,
    pub gp_length_scale: Option<f64>,
    pub seed: Option<u64>,
    pub train: usize,
    pub test: usize,
}

impl DatasetMeta {
    pub fn external(train: usize, test: usize) -> Self {
        Self {
            oracle: None,
            gp_length_scale: None,
            seed: None,
            train,
            test,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StoredDataset {
    pub data: DataSet,
    pub meta: DatasetMeta,
    /// Digest over the per-file hashes.
    pub hash: String,
}

impl StoredDataset {
    pub fn split(&self) -> Result<(DataSet, Option<DataSet>)> {
        Ok(self.data.split(self.meta.train, self.meta.test)?)
    }
}

fn combined_hash(hashes: &[String]) -> String {
    sha256_hex(hashes.join("\n").as_bytes())
}

fn write_oracle(m: &mut Manifest, oracle: &KernelOracle) {
    m.set("oracle", oracle.name());
    m.set("oracle.dim", oracle.dim());
    match *oracle {
        KernelOracle::Helmholtz1d { wave } | KernelOracle::Cosine { wave, .. } => m.set("oracle.wave", fmt_f64(wave)),
        KernelOracle::LogDiscrete { h } => m.set("oracle.h", fmt_f64(h)),
        _ => {}
    }
}

fn read_oracle(m: &Manifest, file: &Path) -> Result<Option<KernelOracle>> {
    let Some(name) = m.get("oracle") else {
        return Ok(None);
    };
    let dim = m.value("oracle.dim", file)?;
    let wave = m.opt_value("oracle.wave", file)?;
    let h = m.opt_value("oracle.h", file)?;
    KernelOracle::from_name(name, dim, wave, h)
        .map(Some)
        .map_err(|e| format_err(file, e.to_string()))
}

/// Writes the dataset files and manifest; returns the dataset hash.
pub fn save_dataset(dir: &Path, data: &DataSet, meta: &DatasetMeta) -> Result<String> {
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        file: dir.to_path_buf(),
        source,
    })?;
    let contents = [
        mesh_to_csv(data.input_mesh()),
        mesh_to_csv(data.output_mesh()),
        matrix_to_csv(data.forcings().values()),
        matrix_to_csv(data.responses().values()),
    ];
    let mut m = Manifest::new();
    m.set("kind", "dataset");
    m.set("format_version", FORMAT_VERSION);
    m.set("tool_version", TOOL_VERSION);
    m.set("pairs", data.len());
    m.set("train", meta.train);
    m.set("test", meta.test);
    m.set("normalized", data.normalized);
    if let Some(o) = &meta.oracle {
        write_oracle(&mut m, o);
    }
    if let Some(l) = meta.gp_length_scale {
        m.set("gp.length_scale", fmt_f64(l));
    }
    if let Some(s) = meta.seed {
        m.set("seed", s);
    }
    let mut hashes = Vec::new();
    for (name, text) in DATA_FILES.iter().zip(&contents) {
        write(&dir.join(name), text.as_bytes())?;
        let h = sha256_hex(text.as_bytes());
        m.set(&format!("sha256.{name}"), &h);
        hashes.push(h);
    }
    m.save(&dir.join(MANIFEST))?;
    Ok(combined_hash(&hashes))
}

/// Loads and verifies a dataset directory. Hash keys are optional so that
/// hand-assembled imports load; when present they must match.
pub fn load_dataset(dir: &Path) -> Result<StoredDataset> {
    let mpath = dir.join(MANIFEST);
    let m = Manifest::load(&mpath)?;
    if let Some(kind) = m.get("kind") {
        if kind != "dataset" {
            return Err(format_err(&mpath, format!("expected kind=dataset, found '{kind}'")));
        }
    }
    let version: u32 = m.opt_value("format_version", &mpath)?.unwrap_or(FORMAT_VERSION);
    if version != FORMAT_VERSION {
        return Err(format_err(
            &mpath,
            format!("format version {version} is not supported (expected {FORMAT_VERSION})"),
        ));
    }
    let volume_in = m.opt_value("mesh_in.volume", &mpath)?;
    let volume_out = m.opt_value("mesh_out.volume", &mpath)?;
    let mut texts = Vec::new();
    let mut hashes = Vec::new();
    for name in DATA_FILES {
        let file = dir.join(name);
        let bytes = read(&file)?;
        let h = sha256_hex(&bytes);
        if let Some(expected) = m.get(&format!("sha256.{name}")) {
            if expected != h {
                return Err(DataError::Hash {
                    file,
                    expected: expected.to_string(),
                    found: h,
                });
            }
        }
        hashes.push(h);
        texts.push(String::from_utf8(bytes).map_err(|_| format_err(&file, "not valid UTF-8"))?);
    }
    let input = Arc::new(csv_to_mesh(&texts[0], &dir.join(MESH_IN), volume_in)?);
    let output = Arc::new(csv_to_mesh(&texts[1], &dir.join(MESH_OUT), volume_out)?);
    let pairs: Option<usize> = m.opt_value("pairs", &mpath)?;
    let f = csv_to_matrix(&texts[2], &dir.join(F_FILE), pairs, input.len())?;
    let u = csv_to_matrix(&texts[3], &dir.join(U_FILE), Some(f.rows()), output.len())?;
    let normalized = m.opt_value("normalized", &mpath)?.unwrap_or(false);
    let data = DataSet::from_parts(input, output, f, u, normalized)?;
    let train = m.opt_value("train", &mpath)?.unwrap_or(data.len());
    let test = m.opt_value("test", &mpath)?.unwrap_or(data.len() - train.min(data.len()));
    if train == 0 || train + test > data.len() {
        return Err(format_err(
            &mpath,
            format!("split {train}+{test} does not fit {} pairs", data.len()),
        ));
    }
    let meta = DatasetMeta {
        oracle: read_oracle(&m, &mpath)?,
        gp_length_scale: m.opt_value("gp.length_scale", &mpath)?,
        seed: m.opt_value("seed", &mpath)?,
        train,
        test,
    };
    Ok(StoredDataset {
        data,
        meta,
        hash: combined_hash(&hashes),
    })
}

/// Recomputes the dataset hash from the files on disk.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let mut hashes = Vec::new();
    for name in DATA_FILES {
        hashes.push(sha256_hex(&read(&dir.join(name))?));
    }
    Ok(combined_hash(&hashes))
}

// ---------------------------------------------------------------- models

const MAGIC: &[u8; 8] = b"GRNFIT\x00M";
const MODEL_VERSION: u32 = 1;
const KIND_KERNEL: u8 = 1;
const KIND_POINTWISE: u8 = 2;

/// A trained model of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Kernel(KernelModel),
    Pointwise(PointwiseModel),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Kernel(_) => "oga",
            SavedModel::Pointwise(_) => "pwoga",
        }
    }

    pub fn input(&self) -> &Arc<Mesh> {
        match self {
            SavedModel::Kernel(m) => &m.input,
            SavedModel::Pointwise(m) => &m.input,
        }
    }

    pub fn output(&self) -> &Arc<Mesh> {
        match self {
            SavedModel::Kernel(m) => &m.output,
            SavedModel::Pointwise(m) => &m.output,
        }
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn opt(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.u8(1);
                self.f64(x);
            }
            None => self.u8(0),
        }
    }
    fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }
    /// Length-prefixed sub-block.
    fn block(&mut self, body: Writer) {
        self.len(body.0.len());
        self.0.extend(body.0);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> DataError {
        format_err(self.file, format!("byte {}: {}", self.pos, msg.into()))
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated, needed {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len())
            .ok_or_else(|| self.err(format!("implausible length {v}")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn opt(&mut self) -> Result<Option<f64>> {
        match self.u8()? {
            0 => Ok(None),
            1 => self.f64().map(Some),
            t => Err(self.err(format!("bad option tag {t}"))),
        }
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn block(&mut self) -> Result<Reader<'a>> {
        let n = self.len()?;
        let start = self.pos;
        self.take(n)?;
        Ok(Reader {
            bytes: &self.bytes[..start + n],
            pos: start,
            file: self.file,
        })
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err("trailing bytes"));
        }
        Ok(())
    }
}

fn put_mesh(w: &mut Writer, mesh: &Mesh) {
    let mut b = Writer::default();
    b.u32(mesh.dim() as u32);
    b.f64s(mesh.coordinates());
    b.f64s(mesh.weights());
    w.block(b);
}

fn get_mesh(r: &mut Reader<'_>) -> Result<Arc<Mesh>> {
    let mut b = r.block()?;
    let dim = b.u32()? as usize;
    let nodes = b.f64s()?;
    let weights = b.f64s()?;
    b.finish()?;
    Mesh::new(dim, nodes, weights)
        .map(Arc::new)
        .map_err(|e| b.err(e.to_string()))
}

fn termination_tag(t: Termination) -> u8 {
    match t {
        Termination::Completed => 0,
        Termination::Stagnated => 1,
        Termination::ProjectionBreakdown => 2,
    }
}

fn put_greedy(w: &mut Writer, m: &GreedyModel) {
    let mut b = Writer::default();
    b.len(m.atoms.len());
    for a in &m.atoms {
        b.u8(matches!(a.sign, Sign::Minus) as u8);
        b.u32(a.power);
        b.f64s(&a.direction);
        b.f64(a.bias);
    }
    b.f64s(&m.coefficients);
    b.u8(termination_tag(m.termination));
    b.f64(m.initial_residual);
    b.len(m.trace.records.len());
    for r in &m.trace.records {
        b.len(r.n);
        b.f64(r.residual_h);
        b.opt(r.eps_u);
        b.opt(r.eps_g);
        b.f64(r.score);
        b.f64(r.gram_cond);
        b.f64(r.coef_l1);
    }
    w.block(b);
}

fn get_greedy(r: &mut Reader<'_>) -> Result<GreedyModel> {
    let mut b = r.block()?;
    let n = b.len()?;
    let mut atoms = Vec::with_capacity(n);
    for _ in 0..n {
        let sign = match b.u8()? {
            0 => Sign::Plus,
            1 => Sign::Minus,
            t => return Err(b.err(format!("bad sign tag {t}"))),
        };
        let power = b.u32()?;
        let direction = b.f64s()?;
        let bias = b.f64()?;
        atoms.push(Atom::new(sign, direction, bias, power).map_err(|e| b.err(e.to_string()))?);
    }
    let coefficients = b.f64s()?;
    if coefficients.len() != atoms.len() {
        return Err(b.err("coefficient count differs from atom count"));
    }
    let termination = match b.u8()? {
        0 => Termination::Completed,
        1 => Termination::Stagnated,
        2 => Termination::ProjectionBreakdown,
        t => return Err(b.err(format!("bad termination tag {t}"))),
    };
    let initial_residual = b.f64()?;
    let count = b.len()?;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        records.push(TraceRecord {
            n: b.len()?,
            residual_h: b.f64()?,
            eps_u: b.opt()?,
            eps_g: b.opt()?,
            score: b.f64()?,
            gram_cond: b.f64()?,
            coef_l1: b.f64()?,
        });
    }
    b.finish()?;
    Ok(GreedyModel {
        atoms,
        coefficients,
        trace: FitTrace { records },
        termination,
        initial_residual,
    })
}

pub fn model_to_bytes(model: &SavedModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(MODEL_VERSION);
    match model {
        SavedModel::Kernel(k) => {
            w.u8(KIND_KERNEL);
            put_mesh(&mut w, &k.input);
            put_mesh(&mut w, &k.output);
            put_greedy(&mut w, &k.model);
        }
        SavedModel::Pointwise(p) => {
            w.u8(KIND_POINTWISE);
            put_mesh(&mut w, &p.input);
            put_mesh(&mut w, &p.output);
            w.len(p.sensors.len());
            for (s, m) in p.sensors.iter().zip(&p.models) {
                w.len(*s);
                put_greedy(&mut w, m);
            }
        }
    }
    w.0
}

pub fn model_from_bytes(bytes: &[u8], file: &Path) -> Result<SavedModel> {
    let mut r = Reader { bytes, pos: 0, file };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(format_err(file, "not a model file (bad magic)"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(format_err(
            file,
            format!("model format version {version} is not supported (expected {MODEL_VERSION})"),
        ));
    }
    let kind = r.u8()?;
    let input = get_mesh(&mut r)?;
    let output = get_mesh(&mut r)?;
    let model = match kind {
        KIND_KERNEL => {
            let g = get_greedy(&mut r)?;
            SavedModel::Kernel(KernelModel::new(g, input, output).map_err(|e| r.err(e.to_string()))?)
        }
        KIND_POINTWISE => {
            let n = r.len()?;
            let mut sensors = Vec::with_capacity(n);
            let mut models = Vec::with_capacity(n);
            for _ in 0..n {
                sensors.push(r.len()?);
                models.push(get_greedy(&mut r)?);
            }
            SavedModel::Pointwise(PointwiseModel::new(sensors, models, input, output).map_err(|e| r.err(e.to_string()))?)
        }
        t => return Err(r.err(format!("unknown model kind {t}"))),
    };
    r.finish()?;
    Ok(model)
}

pub fn save_model(file: &Path, model: &SavedModel) -> Result<()> {
    write(file, &model_to_bytes(model))
}

pub fn load_model(file: &Path) -> Result<SavedModel> {
    model_from_bytes(&read(file)?, file)
}

// ---------------------------------------------------------------- traces

pub const TRACE_HEADER: &str = "n,residual_H,eps_u,eps_G,score,gram_cond";
/// Sensor label of the aggregate rows of a point-wise trace.
pub const AGGREGATE: &str = "all";

fn opt_field(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One CSV row, without newline.
pub fn trace_row(r: &TraceRecord, sensor: Option<&str>) -> String {
    let mut s = format!(
        "{},{},{},{},{},{}",
        r.n,
        fmt_f64(r.residual_h),
        opt_field(r.eps_u),
        opt_field(r.eps_g),
        fmt_f64(r.score),
        fmt_f64(r.gram_cond)
    );
    if let Some(label) = sensor {
        s.push(',');
        s.push_str(label);
    }
    s
}

pub fn kernel_trace_csv(trace: &FitTrace) -> String {
    let mut s = format!("{TRACE_HEADER}\n");
    for r in &trace.records {
        s.push_str(&trace_row(r, None));
        s.push('\n');
    }
    s
}

/// Aggregate rows first, then each sensor's own trace.
pub fn pointwise_trace_csv(aggregate: &FitTrace, model: &PointwiseModel) -> String {
    let mut s = format!("{TRACE_HEADER},sensor\n");
    for r in &aggregate.records {
        s.push_str(&trace_row(r, Some(AGGREGATE)));
        s.push('\n');
    }
    for (sensor, m) in model.sensors.iter().zip(&model.models) {
        let label = sensor.to_string();
        for r in &m.trace.records {
            s.push_str(&trace_row(r, Some(&label)));
            s.push('\n');
        }
    }
    s
}

/// Parsed `trace.csv`; `coef_l1` is not persisted and reads as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub has_sensor: bool,
    pub rows: Vec<(Option<String>, TraceRecord)>,
}

impl TraceTable {
    /// Rows of one sensor label, or all rows of a kernel trace.
    pub fn trace(&self, sensor: Option<&str>) -> FitTrace {
        let records = self
            .rows
            .iter()
            .filter(|(s, _)| !self.has_sensor || s.as_deref() == Some(sensor.unwrap_or(AGGREGATE)))
            .map(|(_, r)| r.clone())
            .collect();
        FitTrace { records }
    }
}

pub fn parse_trace(text: &str, file: &Path) -> Result<TraceTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| format_err(file, "empty trace"))?;
    let has_sensor = match header.trim() {
        h if h == TRACE_HEADER => false,
        h if h == format!("{TRACE_HEADER},sensor") => true,
        h => {
            return Err(DataError::Parse {
                file: file.to_path_buf(),
                row: 1,
                msg: format!("unexpected header '{h}'"),
            })
        }
    };
    let width = 6 + usize::from(has_sensor);
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let perr = |msg: String| DataError::Parse {
            file: file.to_path_buf(),
            row,
            msg,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(perr(format!("expected {width} fields, found {}", fields.len())));
        }
        let num = |c: usize| -> Result<f64> {
            fields[c]
                .parse()
                .map_err(|_| perr(format!("column {}: '{}' is not a number", c + 1, fields[c])))
        };
        let opt = |c: usize| -> Result<Option<f64>> {
            if fields[c].is_empty() {
                Ok(None)
            } else {
                num(c).map(Some)
            }
        };
        let record = TraceRecord {
            n: fields[0]
                .parse()
                .map_err(|_| perr(format!("column 1: '{}' is not an atom count", fields[0])))?,
            residual_h: num(1)?,
            eps_u: opt(2)?,
            eps_g: opt(3)?,
            score: num(4)?,
            gram_cond: num(5)?,
            coef_l1: 0.0,
        };
        rows.push((has_sensor.then(|| fields[6].to_string()), record));
    }
    Ok(TraceTable { has_sensor, rows })
}

pub fn load_trace(file: &Path) -> Result<TraceTable> {
    parse_trace(&read_text(file)?, file)
}

pub fn write_text(file: &Path, text: &str) -> Result<()> {
    write(file, text.as_bytes())
}

// ---------------------------------------------------------------- runs

/// Everything needed to reconstruct a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub mode: String,
    pub seed: u64,
    pub dict_size: usize,
    pub power: u32,
    pub n_max: usize,
    pub normalized: bool,
    pub dataset: PathBuf,
    pub dataset_hash: String,
    pub train: usize,
    pub test: usize,
    pub sensors: Option<String>,
    pub termination: String,
    pub tool_version: String,
}

impl RunManifest {
    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("kind", "run");
        m.set("format_version", FORMAT_VERSION);
        m.set("tool_version", &self.tool_version);
        m.set("mode", &self.mode);
        m.set("seed", self.seed);
        m.set("dict_size", self.dict_size);
        m.set("power", self.power);
        m.set("n_max", self.n_max);
        m.set("normalized", self.normalized);
        m.set("dataset", self.dataset.display());
        m.set("dataset_hash", &self.dataset_hash);
        m.set("train", self.train);
        m.set("test", self.test);
        if let Some(s) = &self.sensors {
            m.set("sensors", s);
        }
        m.set("termination", &self.termination);
        m
    }

    pub fn save(&self, file: &Path) -> Result<()> {
        self.to_manifest().save(file)
    }

    pub fn load(file: &Path) -> Result<Self> {
        let m = Manifest::load(file)?;
        if m.get("kind") != Some("run") {
            return Err(format_err(file, "not a run manifest"));
        }
        Ok(Self {
            mode: m.value("mode", file)?,
            seed: m.value("seed", file)?,
            dict_size: m.value("dict_size", file)?,
            power: m.value("power", file)?,
            n_max: m.value("n_max", file)?,
            normalized: m.value("normalized", file)?,
            dataset: m.value::<String>("dataset", file)?.into(),
            dataset_hash: m.value("dataset_hash", file)?,
            train: m.value("train", file)?,
            test: m.value("test", file)?,
            sensors: m.get("sensors").map(str::to_string),
            termination: m.value("termination", file)?,
            tool_version: m.value("tool_version", file)?,
        })
    }

    /// Checks that the referenced dataset still has the recorded content.
    pub fn verify(&self) -> Result<()> {
        let found = dataset_hash(&self.dataset)?;
        if found != self.dataset_hash {
            return Err(DataError::Hash {
                file: self.dataset.clone(),
                expected: self.dataset_hash.clone(),
                found,
            });
        }
        Ok(())
    }
}
