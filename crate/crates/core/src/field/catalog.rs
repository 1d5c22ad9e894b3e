use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::BoxDomain;
use crate::error::{Error, Result};

pub const CATALOG_NAMES: [&str; 6] = [
    "quadratic1d",
    "cosine1d",
    "doublewell1d",
    "quadratic2d",
    "sinusoid2d",
    "quadratic3d",
];

#[derive(Clone, Debug)]
enum Kind {
    /// `S = x^T A x / 2`
    Quadratic(DMatrix<f64>),
    Cosine1d,
    DoubleWell1d,
    Sinusoid2d,
    Constant(f64),
    /// `S = c . x`
    Linear(Vec<f64>),
}

/// An analytic `S` with exact gradient and Hessian, plus the box it is meant
/// to be sampled on.
#[derive(Clone, Debug)]
pub struct TestFunction {
    name: String,
    dim: usize,
    kind: Kind,
    domain: BoxDomain,
    grad_bound: f64,
    periods: Vec<Option<f64>>,
}

/// Looks up a catalog entry by name. `quadratic2d` uses `A = diag(2, 1)`;
/// see [`TestFunction::quadratic`] for other matrices.
pub fn catalog(name: &str) -> Result<TestFunction> {
    let f = match name {
        "quadratic1d" => TestFunction::quadratic_named(name, DMatrix::from_element(1, 1, 1.0))?,
        "cosine1d" => TestFunction {
            name: name.into(),
            dim: 1,
            kind: Kind::Cosine1d,
            domain: BoxDomain::new(vec![0.0], vec![2.0 * PI])?,
            grad_bound: 1.0,
            periods: vec![Some(2.0 * PI)],
        },
        "doublewell1d" => TestFunction {
            name: name.into(),
            dim: 1,
            kind: Kind::DoubleWell1d,
            domain: BoxDomain::new(vec![-2.0], vec![2.0])?,
            grad_bound: 6.0,
            periods: vec![None],
        },
        "quadratic2d" => TestFunction::quadratic_named(
            name,
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
        )?,
        "sinusoid2d" => TestFunction {
            name: name.into(),
            dim: 2,
            kind: Kind::Sinusoid2d,
            domain: BoxDomain::cube(2, 0.0, 2.0 * PI)?,
            grad_bound: 1.0,
            periods: vec![Some(2.0 * PI); 2],
        },
        "quadratic3d" => TestFunction::quadratic_named(name, DMatrix::identity(3, 3))?,
        other => return Err(Error::UnknownFunction(other.to_string())),
    };
    Ok(f)
}

impl TestFunction {
    /// `S = x^T A x / 2` on `[-1, 1]^d` for a symmetric positive-definite `A`.
    pub fn quadratic(a: DMatrix<f64>) -> Result<Self> {
        let name = format!("quadratic{}d", a.nrows());
        TestFunction::quadratic_named(&name, a)
    }

    fn quadratic_named(name: &str, a: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: a.ncols(),
            });
        }
        let asym = (&a - a.transpose()).abs().max();
        if asym > 1e-12 * a.abs().max().max(1.0) {
            return Err(Error::Precondition("quadratic form must be symmetric".into()));
        }
        if a.clone().cholesky().is_none() {
            return Err(Error::Precondition(
                "quadratic form must be positive definite".into(),
            ));
        }
        // max over the box [-1,1]^d of |A x|_inf is the largest absolute row sum
        let grad_bound = a
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(TestFunction {
            name: name.into(),
            dim: d,
            kind: Kind::Quadratic(a),
            domain: BoxDomain::cube(d, -1.0, 1.0)?,
            grad_bound,
            periods: vec![None; d],
        })
    }

    /// `S = c` on `[-1, 1]^d`.
    pub fn constant(d: usize, c: f64) -> Self {
        TestFunction {
            name: "constant".into(),
            dim: d,
            kind: Kind::Constant(c),
            domain: BoxDomain::cube(d, -1.0, 1.0).expect("valid cube"),
            grad_bound: 0.0,
            periods: vec![None; d],
        }
    }

    /// `S = c . x` on `[-1, 1]^d`.
    pub fn linear(c: Vec<f64>) -> Self {
        let d = c.len();
        let grad_bound = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
        TestFunction {
            name: "linear".into(),
            dim: d,
            kind: Kind::Linear(c),
            domain: BoxDomain::cube(d, -1.0, 1.0).expect("valid cube"),
            grad_bound,
            periods: vec![None; d],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The box this function is meant to be sampled on.
    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// Known max of `|grad S|_inf` over [`TestFunction::domain`].
    pub fn grad_bound(&self) -> f64 {
        self.grad_bound
    }

    /// Period of `S` along `axis`, if it is periodic in that coordinate.
    pub fn period(&self, axis: usize) -> Option<f64> {
        self.periods[axis]
    }

    /// Whether `domain` spans a whole number of periods along `axis`, so the
    /// two faces of the box are the same point of a circle.
    pub fn wraps(&self, domain: &BoxDomain, axis: usize) -> bool {
        match self.periods[axis] {
            Some(p) => {
                let k = domain.width(axis) / p;
                k >= 1.0 - 1e-12 && (k - k.round()).abs() <= 1e-12 * k.max(1.0)
            }
            None => false,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Quadratic(a) => {
                let mut s = 0.0;
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        s += x[i] * a[(i, j)] * x[j];
                    }
                }
                0.5 * s
            }
            Kind::Cosine1d => x[0].cos(),
            Kind::DoubleWell1d => {
                let x2 = x[0] * x[0];
                0.25 * x2 * x2 - 0.5 * x2
            }
            Kind::Sinusoid2d => x[0].cos() + x[1].cos(),
            Kind::Constant(c) => *c,
            Kind::Linear(c) => c.iter().zip(x).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Quadratic(a) => (0..self.dim)
                .map(|i| (0..self.dim).map(|j| a[(i, j)] * x[j]).sum())
                .collect(),
            Kind::Cosine1d => vec![-x[0].sin()],
            Kind::DoubleWell1d => vec![x[0] * x[0] * x[0] - x[0]],
            Kind::Sinusoid2d => vec![-x[0].sin(), -x[1].sin()],
            Kind::Constant(_) => vec![0.0; self.dim],
            Kind::Linear(c) => c.clone(),
        }
    }

    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            Kind::Quadratic(a) => a.clone(),
            Kind::Cosine1d => DMatrix::from_element(1, 1, -x[0].cos()),
            Kind::DoubleWell1d => DMatrix::from_element(1, 1, 3.0 * x[0] * x[0] - 1.0),
            Kind::Sinusoid2d => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-x[0].cos(), -x[1].cos()]))
            }
            Kind::Constant(_) | Kind::Linear(_) => DMatrix::zeros(self.dim, self.dim),
        }
    }
}
