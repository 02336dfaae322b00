//! Paired forcing/response samples.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Result};
use crate::geometry::Mesh;
use crate::linalg::Matrix;
use crate::products::FieldSet;

/// `N` pairs `(f_j, u_j)`: forcings on the input mesh, responses on the
/// output mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    forcings: FieldSet,
    responses: FieldSet,
    /// Whether every pair was rescaled to a unit-norm forcing.
    pub normalized: bool,
}

impl DataSet {
    pub fn new(forcings: FieldSet, responses: FieldSet, normalized: bool) -> Result<Self> {
        check_len("forcing vs response count", forcings.len(), responses.len())?;
        if forcings.is_empty() {
            return Err(invalid("a data set needs at least one pair"));
        }
        Ok(Self {
            forcings,
            responses,
            normalized,
        })
    }

    pub fn from_parts(
        input: Arc<Mesh>,
        output: Arc<Mesh>,
        f: Matrix,
        u: Matrix,
        normalized: bool,
    ) -> Result<Self> {
        Self::new(FieldSet::new(f, input)?, FieldSet::new(u, output)?, normalized)
    }

    pub fn len(&self) -> usize {
        self.forcings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forcings.is_empty()
    }

    pub fn forcings(&self) -> &FieldSet {
        &self.forcings
    }

    pub fn responses(&self) -> &FieldSet {
        &self.responses
    }

    pub fn input_mesh(&self) -> &Arc<Mesh> {
        self.forcings.mesh()
    }

    pub fn output_mesh(&self) -> &Arc<Mesh> {
        self.responses.mesh()
    }

    /// Sub-set of the listed pairs, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&j) = rows.iter().find(|&&j| j >= self.len()) {
            return Err(invalid(alloc::format!("pair index {j} out of range")));
        }
        Self::new(self.forcings.select(rows), self.responses.select(rows), self.normalized)
    }

    /// First `train` pairs and the following `test` pairs.
    pub fn split(&self, train: usize, test: usize) -> Result<(Self, Option<Self>)> {
        if train == 0 || train + test > self.len() {
            return Err(invalid(alloc::format!(
                "split ({train}, {test}) does not fit {} pairs",
                self.len()
            )));
        }
        let a: Vec<usize> = (0..train).collect();
        let b: Vec<usize> = (train..train + test).collect();
        let test_set = if test > 0 { Some(self.select(&b)?) } else { None };
        Ok((self.select(&a)?, test_set))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::uniform_grid_1d;

    #[test]
    fn split_is_ordered_and_checked() {
        let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, 3).unwrap());
        let f = Matrix::from_fn(5, 3, |j, t| (j * 3 + t) as f64);
        let ds = DataSet::from_parts(mesh.clone(), mesh, f.clone(), f, false).unwrap();
        let (a, b) = ds.split(3, 2).unwrap();
        assert_eq!(a.forcings().row(2), &[6.0, 7.0, 8.0]);
        assert_eq!(b.unwrap().responses().row(0), &[9.0, 10.0, 11.0]);
        assert!(ds.split(4, 2).is_err());
        assert!(ds.select(&[7]).is_err());
    }

    #[test]
    fn mismatched_counts_are_rejected() {
        let mesh = Arc::new(uniform_grid_1d(0.0, 1.0, 3).unwrap());
        let f = Matrix::zeros(2, 3);
        let u = Matrix::zeros(3, 3);
        assert!(DataSet::from_parts(mesh.clone(), mesh, f, u, false).is_err());
    }
}
