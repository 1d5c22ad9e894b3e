//! Stationary points of `Psi(x; u) = S(x) - u.x` and what follows from them:
//! the closed-form gradient density, the stationary-phase approximation of
//! the scaled transform, and the cross terms between pairs of points.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{BinGrid, GradientDensity};
use crate::error::{Error, Result};
use crate::field::{BoxDomain, TestFunction};
use crate::wavefn::Tau;

pub const DEFAULT_SEEDS_PER_AXIS: usize = 32;
pub const MAX_NEWTON_ITERATIONS: usize = 50;
/// Residual tolerance, relative to `max(1, grad_bound, |u|_inf)`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Roots closer than this fraction of the domain width are the same root.
pub const DEDUPE_TOL: f64 = 1e-6;
/// Roots within this fraction of an axis width of a face are dropped.
pub const BOUNDARY_MARGIN: f64 = 1e-3;
/// A Hessian eigenvalue below this in magnitude marks `u` as a critical
/// value (density undefined). Newton stalls near `sqrt(RESIDUAL_TOL)` at a
/// double root, so this must sit well above that.
pub const SINGULAR_EIGENVALUE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub x: Vec<f64>,
    pub det_hess: f64,
    pub signature: i32,
    /// `Psi(x; u) = S(x) - u.x`
    pub phase_offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryPointSet {
    pub u: Vec<f64>,
    pub count: usize,
    pub points: Vec<StationaryPoint>,
}

impl StationaryPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(1/mu) sum_k 1/|det H_k|`
    pub fn density(&self, measure: f64) -> f64 {
        self.points.iter().map(|p| 1.0 / p.det_hess.abs()).sum::<f64>() / measure
    }

    fn phasor(p: &StationaryPoint, tau: f64) -> Complex64 {
        let phase = p.phase_offset / tau + p.signature as f64 * PI / 4.0;
        Complex64::from_polar(1.0 / p.det_hess.abs().sqrt(), phase)
    }

    /// Leading stationary-phase term of `F_tau(u)` for interior points.
    pub fn transform(&self, measure: f64, tau: Tau) -> Complex64 {
        let sum: Complex64 = self
            .points
            .iter()
            .map(|p| Self::phasor(p, tau.value()))
            .sum();
        sum / measure.sqrt()
    }

    /// Interference term between points `k` and `l` in `|F_tau|^2`.
    pub fn cross_term(&self, measure: f64, tau: Tau, k: usize, l: usize) -> Result<Complex64> {
        let len = self.points.len();
        for index in [k, l] {
            if index >= len {
                return Err(Error::IndexOutOfRange { index, len });
            }
        }
        if k == l {
            return Err(Error::Precondition("cross term needs k != l".into()));
        }
        let a = Self::phasor(&self.points[k], tau.value());
        let b = Self::phasor(&self.points[l], tau.value());
        Ok(a * b.conj() / measure)
    }
}

/// `(#positive - #negative)` eigenvalues of a symmetric matrix.
pub fn hessian_signature(h: &DMatrix<f64>) -> Result<i32> {
    let d = h.nrows();
    let scale = h.abs().max();
    let det = h.determinant();
    if scale == 0.0 || det.abs() <= 1e-12 * scale.powi(d as i32) {
        return Err(Error::SingularMatrix { det });
    }
    let eig = h.clone().symmetric_eigen();
    Ok(eig
        .eigenvalues
        .iter()
        .map(|&l| if l > 0.0 { 1 } else { -1 })
        .sum())
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Multi-start Newton on `grad S(x) = u` from a `seeds_per_axis^d` interior
/// lattice. Axes on which `f` is periodic over the whole domain are treated
/// as circles; elsewhere roots near a face are dropped.
pub fn find_stationary_points(
    f: &TestFunction,
    domain: &BoxDomain,
    u: &[f64],
    seeds_per_axis: usize,
) -> Result<StationaryPointSet> {
    let d = f.dim();
    if domain.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: domain.dim(),
        });
    }
    if u.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: u.len(),
        });
    }
    if seeds_per_axis == 0 {
        return Err(Error::Precondition("need at least one seed per axis".into()));
    }
    let wraps: Vec<bool> = (0..d).map(|i| f.wraps(domain, i)).collect();
    let tol = RESIDUAL_TOL * 1f64.max(f.grad_bound()).max(inf_norm(u));
    let dedupe = DEDUPE_TOL * domain.max_width();

    let residual = |x: &[f64]| -> Vec<f64> {
        f.grad(x).iter().zip(u).map(|(g, ui)| g - ui).collect()
    };
    let wrap = |x: &mut [f64]| {
        for i in 0..d {
            if wraps[i] {
                let lo = domain.lo()[i];
                x[i] = lo + (x[i] - lo).rem_euclid(domain.width(i));
            }
        }
    };
    let far_outside = |x: &[f64]| {
        (0..d).any(|i| {
            !wraps[i]
                && (x[i] < domain.lo()[i] - domain.width(i) || x[i] > domain.hi()[i] + domain.width(i))
        })
    };

    let total = seeds_per_axis.pow(d as u32);
    let mut roots: Vec<Vec<f64>> = Vec::new();
    let mut seed_idx = vec![0usize; d];
    'seeds: for s in 0..total {
        let mut rem = s;
        for i in (0..d).rev() {
            seed_idx[i] = rem % seeds_per_axis;
            rem /= seeds_per_axis;
        }
        let mut x: Vec<f64> = (0..d)
            .map(|i| {
                domain.lo()[i]
                    + (seed_idx[i] as f64 + 0.5) * domain.width(i) / seeds_per_axis as f64
            })
            .collect();

        let mut converged = false;
        for _ in 0..=MAX_NEWTON_ITERATIONS {
            let g = residual(&x);
            if inf_norm(&g) <= tol {
                converged = true;
                break;
            }
            let h = f.hess(&x);
            let step = match h.lu().solve(&DVector::from_vec(g)) {
                Some(step) if step.iter().all(|v| v.is_finite()) => step,
                _ => continue 'seeds,
            };
            for i in 0..d {
                x[i] -= step[i];
            }
            wrap(&mut x);
            if far_outside(&x) {
                continue 'seeds;
            }
        }
        if !converged {
            continue;
        }

        let interior = (0..d).all(|i| {
            wraps[i] || {
                let margin = BOUNDARY_MARGIN * domain.width(i);
                x[i] > domain.lo()[i] + margin && x[i] < domain.hi()[i] - margin
            }
        });
        if !interior {
            continue;
        }
        let duplicate = roots.iter().any(|r| {
            (0..d).all(|i| {
                let mut delta = (r[i] - x[i]).abs();
                if wraps[i] {
                    delta = delta.min(domain.width(i) - delta);
                }
                delta <= dedupe
            })
        });
        if !duplicate {
            roots.push(x);
        }
    }

    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut points = Vec::with_capacity(roots.len());
    for x in roots {
        let h = f.hess(&x);
        let det = h.determinant();
        let smallest = h
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, l| m.min(l.abs()));
        if smallest < SINGULAR_EIGENVALUE {
            return Err(Error::UndefinedDensity {
                u: u.to_vec(),
                det,
            });
        }
        let signature = hessian_signature(&h)?;
        let phase_offset = f.eval(&x) - x.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        points.push(StationaryPoint {
            x,
            det_hess: det,
            signature,
            phase_offset,
        });
    }
    Ok(StationaryPointSet {
        u: u.to_vec(),
        count: points.len(),
        points,
    })
}

/// `P(u) = (1/mu) sum_k 1/|det H_k|`, zero when no interior point maps to `u`.
pub fn analytic_density(f: &TestFunction, domain: &BoxDomain, u: &[f64]) -> Result<f64> {
    let set = find_stationary_points(f, domain, u, DEFAULT_SEEDS_PER_AXIS)?;
    Ok(set.density(domain.measure()))
}

/// [`analytic_density`] at every bin center. Bins where the density is
/// undefined get value 0 and are flagged in `mask`.
pub fn oracle_density_grid(
    f: &TestFunction,
    domain: &BoxDomain,
    grid: &BinGrid,
) -> Result<GradientDensity> {
    if grid.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: grid.dim(),
        });
    }
    let seeds = seeds_for_dim(f.dim());
    let measure = domain.measure();
    let evaluated: Vec<Option<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            find_stationary_points(f, domain, &grid.center(k), seeds)
                .ok()
                .map(|s| s.density(measure))
        })
        .collect();
    let mask: Vec<bool> = evaluated.iter().map(Option::is_none).collect();
    let values = evaluated.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    let mut density = GradientDensity::new(grid.clone(), values)?;
    density.mask = Some(mask);
    Ok(density)
}

/// Flags bins that contain a critical value: the stationary-point count is
/// not constant over sample points spread across the bin, or the density is
/// undefined at one of them.
pub fn critical_value_mask(f: &TestFunction, domain: &BoxDomain, grid: &BinGrid) -> Vec<bool> {
    let d = grid.dim();
    let offsets: &[f64] = if d == 1 {
        &[-0.49, -0.25, 0.0, 0.25, 0.49]
    } else {
        &[-0.49, 0.0, 0.49]
    };
    let per = offsets.len();
    let seeds = seeds_for_dim(d);
    (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let center = grid.center(k);
            let mut first = None;
            for s in 0..per.pow(d as u32) {
                let mut rem = s;
                let mut u = center.clone();
                for i in (0..d).rev() {
                    u[i] += offsets[rem % per] * grid.axes()[i].step;
                    rem /= per;
                }
                match find_stationary_points(f, domain, &u, seeds) {
                    Err(_) => return true,
                    Ok(set) => match first {
                        None => first = Some(set.count),
                        Some(c) if c != set.count => return true,
                        _ => {}
                    },
                }
            }
            false
        })
        .collect()
}

fn seeds_for_dim(d: usize) -> usize {
    match d {
        1 => DEFAULT_SEEDS_PER_AXIS,
        2 => 16,
        _ => 8,
    }
}

/// Stationary-phase main term of `F_tau(u)`; zero when no interior point
/// maps to `u`.
pub fn spa_transform(f: &TestFunction, domain: &BoxDomain, u: &[f64], tau: Tau) -> Result<Complex64> {
    let set = find_stationary_points(f, domain, u, DEFAULT_SEEDS_PER_AXIS)?;
    Ok(set.transform(domain.measure(), tau))
}

pub fn cross_term_magnitude(
    f: &TestFunction,
    domain: &BoxDomain,
    u: &[f64],
    tau: Tau,
    k: usize,
    l: usize,
) -> Result<Complex64> {
    let set = find_stationary_points(f, domain, u, DEFAULT_SEEDS_PER_AXIS)?;
    if set.len() < 2 {
        return Err(Error::Precondition(format!(
            "cross terms need at least two stationary points, found {}",
            set.len()
        )));
    }
    set.cross_term(domain.measure(), tau, k, l)
}
