//! Command options. Each struct parses both from flags and from a section
//! of a TOML config file; flags win over the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::Deserialize;

/// Optional TOML file with one table per command.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub generate: Option<GenerateOpts>,
    pub train: Option<TrainOpts>,
    pub eval: Option<EvalOpts>,
    pub rate: Option<RateOpts>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config file {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

/// Fills every unset field of `$a` from `$b`.
macro_rules! fill_from {
    ($a:expr, $b:expr; $($f:ident),* $(,)?) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f.take(); } )*
    };
}

#[derive(Args, Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GenerateOpts {
    /// Kernel: poisson1d, helmholtz1d, cosine, logcos or logdiscrete.
    #[arg(long)]
    pub problem: Option<String>,
    /// Spatial dimension for cosine and logcos.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Helmholtz K or cosine wave number.
    #[arg(long)]
    pub wave: Option<f64>,
    /// Cell width of the discrete log kernel (defaults to the grid spacing).
    #[arg(long)]
    pub h: Option<f64>,
    /// Uniform grid on [0,1]^dim with this many nodes per axis.
    #[arg(long, conflicts_with_all = ["disk", "mesh"])]
    pub grid: Option<usize>,
    /// Sunflower point cloud with this many nodes on the unit disk.
    #[arg(long, conflicts_with = "mesh")]
    pub disk: Option<usize>,
    /// Mesh CSV with header x0,..[,weight].
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Domain volume for a mesh file without weights.
    #[arg(long)]
    pub mesh_volume: Option<f64>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// GP length scale of the forcings.
    #[arg(long)]
    pub gp_scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rescale each pair to a unit-norm forcing (default true).
    #[arg(long)]
    pub normalize: Option<bool>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl GenerateOpts {
    pub fn fill(&mut self, mut file: Self) {
        fill_from!(self, file; problem, dim, wave, h, grid, disk, mesh, mesh_volume, train, test, gp_scale, seed, normalize, out);
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainOpts {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// oga (whole kernel) or pwoga (one fit per output sensor).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub nmax: Option<usize>,
    /// Dictionary samples per iteration; each gives a ± pair of atoms.
    #[arg(long)]
    pub dict: Option<usize>,
    /// ReLU power k.
    #[arg(long)]
    pub power: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sensor subset for pwoga: `a..b`, `i,j,k` or `every:n`.
    #[arg(long)]
    pub sensors: Option<String>,
    /// Override the dataset's training split.
    #[arg(long)]
    pub train: Option<usize>,
    /// Override the dataset's test split.
    #[arg(long)]
    pub test: Option<usize>,
    /// Score atoms by correlation over norm.
    #[arg(long)]
    pub normalized_scoring: Option<bool>,
    /// Cap on cached atom responses in bytes (oga mode).
    #[arg(long)]
    pub cache_bytes: Option<usize>,
}

impl TrainOpts {
    pub fn fill(&mut self, mut file: Self) {
        fill_from!(self, file; data, out, mode, nmax, dict, power, seed, sensors, train, test, normalized_scoring, cache_bytes);
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvalOpts {
    /// Run directory or model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset directory (defaults to the one recorded with the run).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Kernel oracle for the kernel error, overriding the dataset's.
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long)]
    pub oracle_dim: Option<usize>,
    #[arg(long)]
    pub oracle_wave: Option<f64>,
    /// Fail unless the kernel error can be computed.
    #[arg(long)]
    pub eps_g: Option<bool>,
    /// Directory for metrics.txt and errors.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl EvalOpts {
    pub fn fill(&mut self, mut file: Self) {
        fill_from!(self, file; model, data, oracle, oracle_dim, oracle_wave, eps_g, out);
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RateOpts {
    /// Trace file or run directory.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Fit window `lo..hi` in atom counts (default 16..last).
    #[arg(long)]
    pub window: Option<String>,
    /// Sensor label of a point-wise trace (default: the aggregate).
    #[arg(long)]
    pub sensor: Option<String>,
    /// Restrict to one column: residual_H, eps_u or eps_G.
    #[arg(long)]
    pub metric: Option<String>,
    /// CSV file for the fitted rates.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RateOpts {
    pub fn fill(&mut self, mut file: Self) {
        fill_from!(self, file; trace, window, sensor, metric, out);
    }
}

/// Parses `lo..hi`.
pub fn parse_window(s: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = s
        .split_once("..")
        .with_context(|| format!("window '{s}' is not of the form lo..hi"))?;
    let lo: usize = a.trim().parse().with_context(|| format!("bad window start '{a}'"))?;
    let hi: usize = b.trim().parse().with_context(|| format!("bad window end '{b}'"))?;
    if lo >= hi {
        bail!("window {lo}..{hi} is empty");
    }
    Ok((lo, hi))
}

/// Parses a sensor selection against `m_u` output nodes: `a..b` (half
/// open), `i,j,k`, or `every:n` for `n` evenly strided sensors.
pub fn parse_sensors(s: &str, m_u: usize) -> anyhow::Result<Vec<usize>> {
    let s = s.trim();
    let mut out: Vec<usize> = if let Some(n) = s.strip_prefix("every:") {
        let n: usize = n.parse().with_context(|| format!("bad sensor count '{n}'"))?;
        if n == 0 {
            bail!("sensor count must be positive");
        }
        greenfit_core::pointwise_oga::strided_sensors(m_u, n)
    } else if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.parse().with_context(|| format!("bad sensor range start '{a}'"))?;
        let b: usize = b.parse().with_context(|| format!("bad sensor range end '{b}'"))?;
        (a..b).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().with_context(|| format!("bad sensor index '{v}'")))
            .collect::<anyhow::Result<_>>()?
    };
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        bail!("sensor selection '{s}' is empty");
    }
    if let Some(&bad) = out.iter().find(|&&i| i >= m_u) {
        bail!("sensor {bad} is outside the {m_u}-node output mesh");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::parse("[train]\nnmax = 8\nbogus = 1\n").is_err());
        assert!(ConfigFile::parse("[nope]\n").is_err());
        let c = ConfigFile::parse("[train]\nnmax = 8\nmode = \"pwoga\"\n").unwrap();
        assert_eq!(c.train.unwrap().nmax, Some(8));
    }

    #[test]
    fn flags_win_over_file() {
        let mut flags = TrainOpts {
            nmax: Some(4),
            ..Default::default()
        };
        let file = TrainOpts {
            nmax: Some(8),
            dict: Some(64),
            ..Default::default()
        };
        flags.fill(file);
        assert_eq!((flags.nmax, flags.dict), (Some(4), Some(64)));
    }

    #[test]
    fn sensor_selections() {
        assert_eq!(parse_sensors("0..4", 10).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_sensors("5, 1,5", 10).unwrap(), vec![1, 5]);
        assert_eq!(parse_sensors("every:2", 10).unwrap(), vec![0, 5]);
        assert!(parse_sensors("0..20", 10).is_err());
        assert!(parse_sensors("3..3", 10).is_err());
    }

    #[test]
    fn windows() {
        assert_eq!(parse_window("16..256").unwrap(), (16, 256));
        assert!(parse_window("16").is_err());
        assert!(parse_window("9..3").is_err());
    }
}
