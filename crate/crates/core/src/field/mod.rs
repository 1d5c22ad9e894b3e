//! Domain geometry, cell-centered sampling, and field ingestion.
//!
//! A [`ScalarField`] holds samples of `S` on a uniform cell-centered grid over a
//! box. Values are stored row-major with axis 0 slowest, so the flat index of
//! the multi-index `(k_0, .., k_{d-1})` is `((k_0 * n_1) + k_1) * n_2 + k_2`.

mod catalog;
mod csv;
mod pgm;

pub use catalog::{catalog, TestFunction, CATALOG_NAMES};
pub use csv::{load_field_csv, read_field_csv, save_field_csv, write_field_csv};
pub use pgm::{load_image_pgm, read_image_pgm, write_pgm, PgmEncoding};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Axis-aligned box `[lo_0, hi_0] x .. x [lo_{d-1}, hi_{d-1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        check_dim(lo.len())?;
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !a.is_finite() || !b.is_finite() || b <= a {
                return Err(Error::InvalidDomain(format!(
                    "axis {i}: need finite lo < hi, got [{a}, {b}]"
                )));
            }
        }
        Ok(BoxDomain { lo, hi })
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxDomain::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn max_width(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).fold(0.0, f64::max)
    }

    /// Lebesgue measure of the box.
    pub fn measure(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// Samples per axis of a uniform grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    n: Vec<usize>,
}

impl GridSpec {
    pub fn new(n: Vec<usize>) -> Result<Self> {
        check_dim(n.len())?;
        if let Some(axis) = n.iter().position(|&k| k == 0) {
            return Err(Error::GridTooSmall { axis, n: 0, min: 1 });
        }
        let mut total: usize = 1;
        for &k in &n {
            total = total
                .checked_mul(k)
                .ok_or_else(|| Error::InvalidDomain("sample count overflows usize".into()))?;
        }
        Ok(GridSpec { n })
    }

    pub fn uniform(d: usize, n: usize) -> Result<Self> {
        GridSpec::new(vec![n; d])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell width `(hi_i - lo_i) / n_i` on every axis.
    pub fn spacing(&self, domain: &BoxDomain) -> Vec<f64> {
        (0..self.dim())
            .map(|i| domain.width(i) / self.n[i] as f64)
            .collect()
    }

    /// Fail unless every axis has at least `min` samples.
    pub fn require_min(&self, min: usize) -> Result<()> {
        match self.n.iter().position(|&k| k < min) {
            Some(axis) => Err(Error::GridTooSmall {
                axis,
                n: self.n[axis],
                min,
            }),
            None => Ok(()),
        }
    }

    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            out[axis] = flat % self.n[axis];
            flat /= self.n[axis];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.n)
            .fold(0, |acc, (&k, &n)| acc * n + k)
    }
}

/// Samples of `S` at the cell centers of a grid over a box.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    domain: BoxDomain,
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: BoxDomain, grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if domain.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: grid.dim(),
            });
        }
        if values.len() != grid.len() {
            return Err(Error::CountMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ScalarField {
            domain,
            grid,
            values,
        })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.grid.spacing(&self.domain)
    }

    /// Cell center of the sample with flat index `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.grid.unravel(flat, &mut idx);
        cell_center(&self.domain, &self.grid, &idx)
    }

    /// Returns a copy with `c` added to every sample.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        ScalarField::new(
            self.domain.clone(),
            self.grid.clone(),
            self.values.iter().map(|v| v + c).collect(),
        )
    }
}

pub fn cell_center(domain: &BoxDomain, grid: &GridSpec, idx: &[usize]) -> Vec<f64> {
    idx.iter()
        .enumerate()
        .map(|(i, &k)| {
            let dx = domain.width(i) / grid.n()[i] as f64;
            domain.lo()[i] + (k as f64 + 0.5) * dx
        })
        .collect()
}

/// Evaluates `f` at every cell center of `grid` over `domain`.
pub fn sample_field(f: &TestFunction, domain: &BoxDomain, grid: &GridSpec) -> Result<ScalarField> {
    if f.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: domain.dim(),
        });
    }
    if grid.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: grid.dim(),
        });
    }
    let mut idx = vec![0; grid.dim()];
    let mut values = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        grid.unravel(flat, &mut idx);
        let v = f.eval(&cell_center(domain, grid, &idx));
        if !v.is_finite() {
            return Err(Error::NonFinite(flat));
        }
        values.push(v);
    }
    ScalarField::new(domain.clone(), grid.clone(), values)
}

pub(crate) fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        Err(Error::UnsupportedDimension(d))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic1d_four_cells() {
        let f = catalog("quadratic1d").unwrap();
        let dom = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
        let field = sample_field(&f, &dom, &GridSpec::new(vec![4]).unwrap()).unwrap();
        assert_eq!(field.values(), &[0.28125, 0.03125, 0.03125, 0.28125]);
    }

    #[test]
    fn constant_field_is_constant() {
        let f = TestFunction::constant(2, 3.0);
        let dom = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let field = sample_field(&f, &dom, &GridSpec::uniform(2, 9).unwrap()).unwrap();
        assert!(field.values().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn cosine1d_first_cell() {
        let f = catalog("cosine1d").unwrap();
        let field = sample_field(&f, f.domain(), &GridSpec::new(vec![8]).unwrap()).unwrap();
        assert_relative_eq!(field.values()[0], 0.923_879_532_511_286_7, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let f = catalog("quadratic2d").unwrap();
        let dom = BoxDomain::cube(1, -1.0, 1.0).unwrap();
        let err = sample_field(&f, &dom, &GridSpec::new(vec![8]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn non_finite_evaluation_is_rejected() {
        let f = TestFunction::constant(1, f64::NAN);
        let dom = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let err = sample_field(&f, &dom, &GridSpec::new(vec![8]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(0)));
    }

    #[test]
    fn no_sample_on_the_boundary() {
        let f = catalog("quadratic3d").unwrap();
        let grid = GridSpec::new(vec![8, 9, 10]).unwrap();
        let field = sample_field(&f, f.domain(), &grid).unwrap();
        for k in 0..grid.len() {
            let x = field.point(k);
            for (i, v) in x.iter().enumerate() {
                assert!(*v > f.domain().lo()[i] && *v < f.domain().hi()[i]);
            }
        }
    }

    #[test]
    fn bad_domains() {
        assert!(BoxDomain::new(vec![1.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![0.0; 4], vec![1.0; 4]).is_err());
        assert!(BoxDomain::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(GridSpec::new(vec![4, 0]).is_err());
    }

    #[test]
    fn ravel_round_trip() {
        let g = GridSpec::new(vec![3, 4, 5]).unwrap();
        let mut idx = [0; 3];
        for flat in 0..g.len() {
            g.unravel(flat, &mut idx);
            assert_eq!(g.ravel(&idx), flat);
        }
    }
}
