//! Quadrature meshes and the bias range of ridge dictionaries over them.
//!
//! Every integral in the crate is a weighted sum over mesh nodes. Generated
//! meshes use equal Monte-Carlo weights `volume / m`, including structured
//! grids; imported point clouds may carry their own weights.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg;
use crate::math;

/// Default cap on the number of nodes a product mesh may hold.
pub const DEFAULT_PRODUCT_CAP: usize = 1 << 26;

/// Quadrature nodes and non-negative weights over a domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    dim: usize,
    /// Node coordinates, row-major `len x dim`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
    volume: f64,
}

impl Mesh {
    /// Builds a mesh from flat coordinates and explicit weights. The volume
    /// is the weight sum.
    pub fn new(dim: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("mesh dimension must be positive"));
        }
        if !nodes.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "{} coordinates do not split into {dim}-vectors",
                nodes.len()
            )));
        }
        check_len("mesh weights", nodes.len() / dim, weights.len())?;
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(invalid("mesh coordinates must be finite"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(invalid(format!("quadrature weight {w} is not a non-negative real")));
        }
        let volume = linalg::sum(&weights);
        if weights.is_empty() || !(volume > 0.0) {
            return Err(invalid("mesh must have positive total weight"));
        }
        Ok(Self {
            dim,
            nodes,
            weights,
            volume,
        })
    }

    /// Equal weights `volume / m` on the given nodes.
    pub fn with_volume(dim: usize, nodes: Vec<f64>, volume: f64) -> Result<Self> {
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(invalid("domain volume must be positive"));
        }
        if dim == 0 || !nodes.len().is_multiple_of(dim) || nodes.is_empty() {
            return Err(invalid("node coordinates do not form a non-empty mesh"));
        }
        let m = nodes.len() / dim;
        let weights = alloc::vec![volume / m as f64; m];
        Self::new(dim, nodes, weights)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim)
    }

    /// Flat row-major coordinates.
    pub fn coordinates(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total weight.
    #[inline]
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Quadrature of nodal values.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        check_len("integrand", self.len(), values.len())?;
        Ok(linalg::dot(&self.weights, values))
    }

    /// Largest Euclidean norm over the nodes.
    pub fn radius(&self) -> f64 {
        self.nodes()
            .map(|x| math::sqrt(x.iter().map(|v| v * v).sum::<f64>()))
            .fold(0.0, f64::max)
    }

    /// Sub-mesh on the listed nodes, keeping their weights.
    pub fn select(&self, indices: &[usize]) -> Result<Mesh> {
        let mut nodes = Vec::with_capacity(indices.len() * self.dim);
        let mut weights = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(invalid(format!("node index {i} out of range")));
            }
            nodes.extend_from_slice(self.node(i));
            weights.push(self.weights[i]);
        }
        Mesh::new(self.dim, nodes, weights)
    }
}

/// Admissible range `[c1, c2]` for dictionary biases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasBounds {
    pub c1: f64,
    pub c2: f64,
}

impl BiasBounds {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 <= c2) || !c1.is_finite() || !c2.is_finite() {
            return Err(invalid(format!("bias bounds [{c1}, {c2}] are not ordered")));
        }
        Ok(Self { c1, c2 })
    }

    /// Symmetric bounds `[-rho, rho]`.
    pub fn symmetric(rho: f64) -> Result<Self> {
        Self::new(-rho, rho)
    }
}

/// `m` equispaced nodes on `[a, b]`, endpoints included, each carrying the
/// equal weight `(b - a) / m`.
pub fn uniform_grid_1d(a: f64, b: f64, m: usize) -> Result<Mesh> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(invalid(format!("grid range [{a}, {b}] is empty")));
    }
    if m < 2 {
        return Err(invalid("a grid needs at least two nodes"));
    }
    let h = (b - a) / (m - 1) as f64;
    let nodes = (0..m)
        .map(|i| if i == m - 1 { b } else { a + h * i as f64 })
        .collect();
    Mesh::with_volume(1, nodes, b - a)
}

/// Tensor-product mesh with nodes `[x_s, y_t]` in `s`-major order and
/// weights `w_s * w_t`.
pub fn product_mesh(mx: &Mesh, my: &Mesh) -> Result<Mesh> {
    product_mesh_capped(mx, my, DEFAULT_PRODUCT_CAP)
}

pub fn product_mesh_capped(mx: &Mesh, my: &Mesh, max_nodes: usize) -> Result<Mesh> {
    let count = mx
        .len()
        .checked_mul(my.len())
        .filter(|&c| c <= max_nodes)
        .ok_or_else(|| {
            Error::ResourceLimit(format!(
                "product mesh of {} x {} nodes exceeds the cap of {max_nodes}",
                mx.len(),
                my.len()
            ))
        })?;
    let dim = mx.dim + my.dim;
    let mut nodes = Vec::with_capacity(count * dim);
    let mut weights = Vec::with_capacity(count);
    for (x, wx) in mx.nodes().zip(&mx.weights) {
        for (y, wy) in my.nodes().zip(&my.weights) {
            nodes.extend_from_slice(x);
            nodes.extend_from_slice(y);
            weights.push(wx * wy);
        }
    }
    Mesh::new(dim, nodes, weights)
}

/// `m` nodes per axis on `[a, b]^dim` with equal weights.
pub fn tensor_grid(a: f64, b: f64, m: usize, dim: usize) -> Result<Mesh> {
    if dim == 0 {
        return Err(invalid("grid dimension must be positive"));
    }
    let axis = uniform_grid_1d(a, b, m)?;
    let mut mesh = axis.clone();
    for _ in 1..dim {
        mesh = product_mesh(&mesh, &axis)?;
    }
    Ok(mesh)
}

/// Quasi-uniform point cloud on the disk of the given radius (Vogel
/// spiral), with equal weights `pi r^2 / m`.
pub fn sunflower_disk(m: usize, radius: f64) -> Result<Mesh> {
    if m == 0 || !(radius > 0.0) {
        return Err(invalid("disk point cloud needs m >= 1 and a positive radius"));
    }
    let golden = core::f64::consts::PI * (3.0 - math::sqrt(5.0));
    let mut nodes = Vec::with_capacity(2 * m);
    for i in 0..m {
        let r = radius * math::sqrt((i as f64 + 0.5) / m as f64);
        let theta = golden * i as f64;
        nodes.push(r * math::cos(theta));
        nodes.push(r * math::sin(theta));
    }
    Mesh::with_volume(2, nodes, core::f64::consts::PI * radius * radius)
}

/// Bias bounds `[-rho, rho]` with `rho = max_i |x_i|`: over the whole unit
/// sphere, `w . x` ranges exactly over `[-|x|, |x|]`.
pub fn bias_bounds(mesh: &Mesh) -> Result<BiasBounds> {
    if mesh.is_empty() {
        return Err(invalid("bias bounds of an empty mesh"));
    }
    BiasBounds::symmetric(mesh.radius())
}

/// Bias bounds for ridge functions of the concatenated point `[x, y]`,
/// without materializing the product mesh.
pub fn bias_bounds_product(mx: &Mesh, my: &Mesh) -> Result<BiasBounds> {
    if mx.is_empty() || my.is_empty() {
        return Err(invalid("bias bounds of an empty mesh"));
    }
    let (rx, ry) = (mx.radius(), my.radius());
    BiasBounds::symmetric(math::sqrt(rx * rx + ry * ry))
}
