//! Randomized dictionaries of signed ReLU^k ridge functions
//! `±max(0, w·z + β)^k` with `w` on the unit sphere and `β` in the bias
//! bounds of the domain.
//!
//! Directions are drawn through hyperspherical coordinates: angles uniform
//! on `[0, π]^(d-2) × [0, 2π)`, mapped to `S^(d-1)`. Each sampled
//! `(direction, bias)` contributes both signs, at consecutive indices.
//! Sampling uses ChaCha20 seeded from a 64-bit seed, so dictionaries are
//! bit-reproducible.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{check_len, invalid, Result};
use crate::geometry::{BiasBounds, Mesh};
use crate::linalg::Matrix;
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn from_value(v: f64) -> Result<Self> {
        if v == 1.0 {
            Ok(Sign::Plus)
        } else if v == -1.0 {
            Ok(Sign::Minus)
        } else {
            Err(invalid(format!("atom sign must be ±1, got {v}")))
        }
    }
}

/// One dictionary element `sign · σ_k(direction · z + bias)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub sign: Sign,
    pub direction: Vec<f64>,
    pub bias: f64,
    pub power: u32,
}

impl Atom {
    pub fn new(sign: Sign, direction: Vec<f64>, bias: f64, power: u32) -> Result<Self> {
        if direction.is_empty() {
            return Err(invalid("atom direction must be non-empty"));
        }
        let norm = math::sqrt(direction.iter().map(|v| v * v).sum());
        if (norm - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("atom direction has norm {norm}, expected 1")));
        }
        if !bias.is_finite() {
            return Err(invalid("atom bias must be finite"));
        }
        Ok(Self {
            sign,
            direction,
            bias,
            power,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// `w · z + β`
    #[inline]
    pub fn preactivation(&self, z: &[f64]) -> f64 {
        let mut t = self.bias;
        for (w, x) in self.direction.iter().zip(z) {
            t += w * x;
        }
        t
    }

    #[inline]
    pub fn evaluate(&self, z: &[f64]) -> f64 {
        self.sign.value() * math::relu_pow(self.preactivation(z), self.power)
    }

    /// Same ridge function with the opposite sign.
    pub fn negated(&self) -> Self {
        let sign = match self.sign {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        };
        Self {
            sign,
            ..self.clone()
        }
    }

    /// Values at every node of `mesh`.
    pub fn evaluate_on(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        check_len("atom/mesh dimension", self.dim(), mesh.dim())?;
        Ok(mesh.nodes().map(|z| self.evaluate(z)).collect())
    }
}

/// Maps hyperspherical angles `φ ∈ [0, π]^(d-2) × [0, 2π)` to a unit
/// vector in `R^d`.
pub fn hypersphere_map(phi: &[f64]) -> Result<Vec<f64>> {
    let d = phi.len() + 1;
    if d < 2 {
        return Err(invalid("hypersphere map needs at least one angle"));
    }
    for (j, &a) in phi.iter().enumerate() {
        let ok = if j + 1 < phi.len() {
            (0.0..=PI).contains(&a)
        } else {
            (0.0..2.0 * PI).contains(&a)
        };
        if !ok {
            return Err(invalid(format!("angle φ_{} = {a} out of range", j + 1)));
        }
    }
    Ok(hypersphere_unchecked(phi))
}

fn hypersphere_unchecked(phi: &[f64]) -> Vec<f64> {
    let d = phi.len() + 1;
    let mut out = Vec::with_capacity(d);
    let mut sin_prod = 1.0;
    for &a in phi {
        out.push(sin_prod * math::cos(a));
        sin_prod *= math::sin(a);
    }
    out.push(sin_prod);
    out
}

/// Mixes a base seed with a stream index (splitmix64 finalizer); used for
/// per-iteration dictionaries and per-sensor seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    // 53 random mantissa bits, uniform on [0, 1)
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A random discretization of the dictionary: `2 · n_samples` atoms, the
/// pair `(2i, 2i + 1)` sharing direction and bias with signs `+` and `-`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomDictionary {
    pub atoms: Vec<Atom>,
    pub seed: u64,
    pub n_samples: usize,
}

impl RandomDictionary {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms.first().map_or(0, Atom::dim)
    }

    /// The positive-sign member of each sampled pair.
    pub fn ridges(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter().step_by(2)
    }
}

/// Draws `n_samples` (direction, bias) pairs uniformly from the parameter
/// space and emits both signs of each. For `d = 1` the direction is `+1`;
/// the sign supplies the reflection.
pub fn sample_dictionary(
    dim: usize,
    power: u32,
    bounds: BiasBounds,
    n_samples: usize,
    seed: u64,
) -> Result<RandomDictionary> {
    if dim == 0 {
        return Err(invalid("dictionary dimension must be positive"));
    }
    if n_samples == 0 {
        return Err(invalid("dictionary needs at least one sample"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut atoms = Vec::with_capacity(2 * n_samples);
    let mut phi = alloc::vec![0.0; dim.saturating_sub(1)];
    let width = bounds.c2 - bounds.c1;
    for _ in 0..n_samples {
        let direction = if dim == 1 {
            alloc::vec![1.0]
        } else {
            let last = phi.len() - 1;
            for (j, a) in phi.iter_mut().enumerate() {
                let span = if j == last { 2.0 * PI } else { PI };
                *a = span * unit_f64(&mut rng);
            }
            hypersphere_unchecked(&phi)
        };
        let bias = bounds.c1 + width * unit_f64(&mut rng);
        let plus = Atom {
            sign: Sign::Plus,
            direction,
            bias,
            power,
        };
        let minus = plus.negated();
        atoms.push(plus);
        atoms.push(minus);
    }
    Ok(RandomDictionary {
        atoms,
        seed,
        n_samples,
    })
}

/// Table of atom values, one row per atom and one column per node.
pub fn evaluate_atoms(dict: &RandomDictionary, mesh: &Mesh) -> Result<Matrix> {
    check_len("dictionary/mesh dimension", dict.dim(), mesh.dim())?;
    let mut table = Matrix::zeros(dict.len(), mesh.len());
    for (pair, ridge) in dict.atoms.chunks(2).enumerate() {
        let plus = ridge[0].sign.value();
        for (t, z) in mesh.nodes().enumerate() {
            let v = math::relu_pow(ridge[0].preactivation(z), ridge[0].power);
            table.set(2 * pair, t, plus * v);
            if ridge.len() > 1 {
                table.set(2 * pair + 1, t, ridge[1].sign.value() * v);
            }
        }
    }
    Ok(table)
}
