//! Discrete inner products: `L²` over a mesh, the data semi-inner product
//! `⟨G1, G2⟩_H = (1/N) Σ_j (G1 ⋆ f_j, G2 ⋆ f_j)`, and the correlation field
//! that turns greedy scoring into a single weighted sum per atom.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Result};
use crate::geometry::Mesh;
use crate::linalg::{self, gemm, Matrix};

/// `N` functions sampled on a mesh, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSet {
    values: Matrix,
    mesh: Arc<Mesh>,
}

impl FieldSet {
    pub fn new(values: Matrix, mesh: Arc<Mesh>) -> Result<Self> {
        check_len("field columns vs mesh nodes", mesh.len(), values.cols())?;
        if values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(invalid("field values must be finite"));
        }
        Ok(Self { values, mesh })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Number of functions.
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.values.row(j)
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
            mesh: self.mesh.clone(),
        }
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }
}

/// `M(s, t) = scale · ω_s · w_t · Σ_j r_j(x_s) f_j(y_t)`, so that the score
/// of a kernel `g` against the residuals is `Σ_{s,t} g(x_s, y_t) M(s, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationField {
    pub values: Matrix,
    pub scale: f64,
}

impl CorrelationField {
    /// Score of a kernel table (`m_u x m_f`).
    pub fn score(&self, table: &Matrix) -> Result<f64> {
        check_len("kernel table rows", self.values.rows(), table.rows())?;
        check_len("kernel table columns", self.values.cols(), table.cols())?;
        Ok(linalg::dot(self.values.as_slice(), table.as_slice()))
    }
}

/// `Σ_t w_t u_t v_t`
pub fn l2_inner(u: &[f64], v: &[f64], mesh: &Mesh) -> Result<f64> {
    check_len("l2_inner lhs", mesh.len(), u.len())?;
    check_len("l2_inner rhs", mesh.len(), v.len())?;
    Ok(linalg::weighted_dot(mesh.weights(), u, v))
}

fn check_table(table: &Matrix, input: &Mesh, output_len: Option<usize>) -> Result<()> {
    check_len("kernel table columns vs input mesh", input.len(), table.cols())?;
    if let Some(m) = output_len {
        check_len("kernel table rows vs output mesh", m, table.rows())?;
    }
    Ok(())
}

/// `(G ⋆ f)(x_s) = Σ_t w_t G(x_s, y_t) f(y_t)` for one forcing.
pub fn kernel_apply(table: &Matrix, f: &[f64], input: &Mesh) -> Result<Vec<f64>> {
    check_table(table, input, None)?;
    check_len("forcing vs input mesh", input.len(), f.len())?;
    Ok(table
        .row_iter()
        .map(|g| linalg::weighted_dot(input.weights(), g, f))
        .collect())
}

/// `G ⋆ f_j` for every row of `forcings`, as an `N x m_u` matrix.
pub fn kernel_apply_many(table: &Matrix, forcings: &Matrix, input: &Mesh) -> Result<Matrix> {
    check_table(table, input, None)?;
    check_len("forcings vs input mesh", input.len(), forcings.cols())?;
    let mut weighted = forcings.clone();
    weighted.scale_columns(input.weights());
    gemm(1.0, &weighted, false, table, true)
}

/// `⟨G1, G2⟩_H` over the forcings in `data`, with responses living on
/// `output`.
pub fn semi_inner(g1: &Matrix, g2: &Matrix, data: &FieldSet, output: &Mesh) -> Result<f64> {
    let input = data.mesh();
    check_table(g1, input, Some(output.len()))?;
    check_table(g2, input, Some(output.len()))?;
    if data.is_empty() {
        return Err(invalid("semi-inner product needs at least one forcing"));
    }
    let a = kernel_apply_many(g1, data.values(), input)?;
    let b = kernel_apply_many(g2, data.values(), input)?;
    Ok(mean_weighted_row_dot(&a, &b, output.weights()))
}

/// `(1/N) Σ_j Σ_s ω_s a_js b_js`
pub(crate) fn mean_weighted_row_dot(a: &Matrix, b: &Matrix, weights: &[f64]) -> f64 {
    let mut acc = linalg::Neumaier::default();
    for (ra, rb) in a.row_iter().zip(b.row_iter()) {
        acc.add(linalg::weighted_dot(weights, ra, rb));
    }
    acc.value() / a.rows() as f64
}

/// Correlation field of residuals `R` (on the output mesh) against the
/// forcings `F` (on the input mesh).
pub fn correlation_field(residuals: &FieldSet, forcings: &FieldSet) -> Result<CorrelationField> {
    let n = residuals.len();
    check_len("residual vs forcing count", forcings.len(), n)?;
    if n == 0 {
        return Err(invalid("correlation field needs at least one pair"));
    }
    let scale = 1.0 / n as f64;
    let mut m = gemm(scale, residuals.values(), true, forcings.values(), false)?;
    let omega = residuals.mesh().weights();
    let w = forcings.mesh().weights();
    for (s, row) in (0..m.rows()).zip(omega) {
        for (v, wt) in m.row_mut(s).iter_mut().zip(w) {
            *v *= row * wt;
        }
    }
    Ok(CorrelationField { values: m, scale })
}

/// Discrete `L²` norm of a function on a mesh.
pub fn l2_norm(u: &[f64], mesh: &Mesh) -> Result<f64> {
    let s = l2_inner(u, u, mesh)?;
    if s < 0.0 {
        return Err(invalid(format!("negative squared norm {s}")));
    }
    Ok(crate::math::sqrt(s))
}
