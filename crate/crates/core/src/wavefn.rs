//! The wave-function estimator.
//!
//! For samples of `S` on a cell-centered grid over `prod [a_i, b_i]`, the
//! scaled transform
//!
//! ```text
//! F(u) = (2 pi tau)^{-d/2} mu^{-1/2} * integral exp(i (S(x) - u.x) / tau) dx
//! ```
//!
//! is evaluated on the lattice `u_i = 2 pi tau m_i / (b_i - a_i)` by one FFT of
//! `phi = exp(i S / tau)`. `|F|^2` is the power spectrum; with `|phi| = 1` the
//! discrete Parseval identity gives total mass exactly one, up to rounding.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::density::{BinAxis, BinGrid, GradientDensity};
use crate::error::{Error, Result};
use crate::fft::{fft_nd, frequency_slot};
use crate::field::{BoxDomain, GridSpec, ScalarField};

/// Smallest grid accepted by the estimator, per axis.
pub const MIN_SAMPLES_PER_AXIS: usize = 8;

/// Default Nyquist margin for [`choose_tau`].
pub const DEFAULT_MARGIN: f64 = 1.5;

/// Fraction of each axis covered by the optional boundary taper.
pub const TAPER_FRACTION: f64 = 0.05;

/// The free parameter `tau > 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Tau(f64);

impl Tau {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Tau(value))
        } else {
            Err(Error::InvalidTau(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Infinity-norm ball `{u : |u - center|_inf <= radius}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallRegion {
    center: Vec<f64>,
    radius: f64,
}

impl BallRegion {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Precondition(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Precondition("ball center must be finite".into()));
        }
        Ok(BallRegion { center, radius })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Lebesgue measure `(2 alpha)^d`.
    pub fn measure(&self) -> f64 {
        (2.0 * self.radius).powi(self.center.len() as i32)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    /// Raised-cosine taper on `phi` over the outer 5% of each axis.
    pub taper: bool,
}

/// `phi_k = exp(i S_k / tau)`.
pub fn wave_function(field: &ScalarField, tau: Tau) -> Vec<Complex64> {
    let inv = 1.0 / tau.value();
    field
        .values()
        .iter()
        .map(|&s| Complex64::from_polar(1.0, s * inv))
        .collect()
}

/// Per-axis largest representable `|u_i| = pi tau / dx_i`.
pub fn nyquist_range(domain: &BoxDomain, grid: &GridSpec, tau: Tau) -> Vec<f64> {
    grid.spacing(domain)
        .iter()
        .map(|dx| PI * tau.value() / dx)
        .collect()
}

/// Fails unless every axis represents gradients up to `required`.
pub fn check_nyquist(domain: &BoxDomain, grid: &GridSpec, tau: Tau, required: f64) -> Result<()> {
    for (axis, range) in nyquist_range(domain, grid, tau).into_iter().enumerate() {
        if range < required {
            return Err(Error::Nyquist {
                axis,
                range,
                required,
            });
        }
    }
    Ok(())
}

/// Smallest `tau` whose Nyquist range is at least `margin * grad_bound` on
/// every axis.
pub fn choose_tau(field: &ScalarField, grad_bound: f64, margin: f64) -> Result<Tau> {
    if !(grad_bound > 0.0) || !grad_bound.is_finite() {
        return Err(Error::InvalidGradBound(grad_bound));
    }
    if !(margin > 0.0) {
        return Err(Error::Precondition(format!("margin must be positive, got {margin}")));
    }
    let dx = field.spacing().into_iter().fold(0.0, f64::max);
    Tau::new(margin * grad_bound * dx / PI)
}

/// The gradient-space lattice an FFT of this field lands on.
pub fn spectrum_grid(domain: &BoxDomain, grid: &GridSpec, tau: Tau) -> Result<BinGrid> {
    let axes = (0..grid.dim())
        .map(|i| {
            let n = grid.n()[i];
            let du = 2.0 * PI * tau.value() / domain.width(i);
            BinAxis::new(-((n / 2) as f64) * du, du, n)
        })
        .collect::<Result<Vec<_>>>()?;
    BinGrid::new(axes)
}

/// Complex `F_tau` on the spectrum lattice, DC-centered, row-major.
#[derive(Clone, Debug)]
pub struct ComplexSpectrum {
    pub grid: BinGrid,
    pub values: Vec<Complex64>,
    pub tau: Tau,
}

impl ComplexSpectrum {
    pub fn value_at(&self, u: &[f64]) -> Option<Complex64> {
        self.grid.locate(u).map(|k| self.values[k])
    }
}

/// Computes `F_tau` on the spectrum lattice, including the phase of the
/// first cell center so values compare directly with the continuum integral.
pub fn scaled_transform(
    field: &ScalarField,
    tau: Tau,
    options: &SpectrumOptions,
) -> Result<ComplexSpectrum> {
    let grid = field.grid();
    grid.require_min(MIN_SAMPLES_PER_AXIS)?;
    let domain = field.domain();
    let d = field.dim();
    let shape = grid.n().to_vec();

    let mut data = wave_function(field, tau);
    if options.taper {
        apply_taper(&mut data, grid);
    }
    fft_nd(&mut data, &shape, FftDirection::Forward);

    let dx = field.spacing();
    let cell: f64 = dx.iter().product();
    let scale = cell / ((2.0 * PI * tau.value()).powf(d as f64 / 2.0) * domain.measure().sqrt());

    // exp(-i u.x_0 / tau) with x_0 the first cell center, per axis and frequency
    let phase_tables: Vec<Vec<Complex64>> = (0..d)
        .map(|i| {
            let n = shape[i];
            let offset = domain.lo()[i] / domain.width(i) + 0.5 / n as f64;
            (0..n)
                .map(|c| {
                    let m = c as i64 - (n / 2) as i64;
                    let turns = (m as f64 * offset).rem_euclid(1.0);
                    Complex64::from_polar(1.0, -2.0 * PI * turns)
                })
                .collect()
        })
        .collect();

    let sgrid = spectrum_grid(domain, grid, tau)?;
    let total = grid.len();
    let mut values = vec![Complex64::default(); total];
    let mut idx = vec![0usize; d];
    let mut src = vec![0usize; d];
    for (k, out) in values.iter_mut().enumerate() {
        sgrid.unravel(k, &mut idx);
        let mut phase = Complex64::new(scale, 0.0);
        for i in 0..d {
            let m = idx[i] as i64 - (shape[i] / 2) as i64;
            src[i] = frequency_slot(m, shape[i]);
            phase *= phase_tables[i][idx[i]];
        }
        *out = data[grid.ravel(&src)] * phase;
    }
    Ok(ComplexSpectrum {
        grid: sgrid,
        values,
        tau,
    })
}

/// Power spectrum `|F_tau|^2` as a density over gradient space. The mass
/// before renormalization is kept in `diagnostics.pre_norm_mass`.
pub fn power_spectrum_density(field: &ScalarField, tau: Tau) -> Result<GradientDensity> {
    power_spectrum_density_with(field, tau, &SpectrumOptions::default())
}

pub fn power_spectrum_density_with(
    field: &ScalarField,
    tau: Tau,
    options: &SpectrumOptions,
) -> Result<GradientDensity> {
    let spec = scaled_transform(field, tau, options)?;
    let values = spec.values.iter().map(|z| z.norm_sqr()).collect();
    let mut density = GradientDensity::new(spec.grid, values)?;
    density.tau = Some(tau.value());
    let raw = density.normalize();
    density.diagnostics.pre_norm_mass = Some(raw);
    Ok(density)
}

fn apply_taper(data: &mut [Complex64], grid: &GridSpec) {
    let d = grid.dim();
    let weights: Vec<Vec<f64>> = grid
        .n()
        .iter()
        .map(|&n| {
            let width = (TAPER_FRACTION * n as f64).max(1.0);
            (0..n)
                .map(|k| {
                    let edge = (k.min(n - 1 - k) as f64 + 0.5) / width;
                    if edge >= 1.0 {
                        1.0
                    } else {
                        0.5 * (1.0 - (PI * edge).cos())
                    }
                })
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; d];
    for (k, v) in data.iter_mut().enumerate() {
        grid.unravel(k, &mut idx);
        let w: f64 = (0..d).map(|i| weights[i][idx[i]]).product();
        *v *= w;
    }
}

/// Mass of a density inside an infinity-norm ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallIntegral {
    /// Sum over bins whose centers lie in the ball, times the bin volume.
    pub mass: f64,
    /// `mass / (2 alpha)^d`.
    pub mean: f64,
    pub bins: usize,
}

pub fn integrate_ball(density: &GradientDensity, region: &BallRegion) -> Result<BallIntegral> {
    let d = density.dim();
    if region.center().len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: region.center().len(),
        });
    }
    let lo: Vec<f64> = region.center().iter().map(|c| c - region.radius()).collect();
    let hi: Vec<f64> = region.center().iter().map(|c| c + region.radius()).collect();
    if !density.grid.covers(&lo, &hi) {
        return Err(Error::RegionOutOfRange(format!(
            "ball {:?} +/- {} not inside the covered range",
            region.center(),
            region.radius()
        )));
    }
    for (i, a) in density.grid.axes().iter().enumerate() {
        if region.radius() >= 0.5 * (a.hi_edge() - a.lo_edge()) {
            return Err(Error::RegionOutOfRange(format!(
                "radius {} is not below half the covered range on axis {i}",
                region.radius()
            )));
        }
    }

    // per-axis index ranges of centers inside the ball
    let mut ranges = Vec::with_capacity(d);
    for (i, a) in density.grid.axes().iter().enumerate() {
        let first = ((lo[i] - a.start) / a.step).ceil().max(0.0) as usize;
        let last = ((hi[i] - a.start) / a.step).floor();
        if last < first as f64 {
            ranges.push(0..0);
        } else {
            ranges.push(first..(last as usize + 1).min(a.len));
        }
    }
    let shape = density.grid.shape();
    let mut sum = 0.0;
    let mut bins = 0;
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.start).collect();
    if ranges.iter().all(|r| !r.is_empty()) {
        'outer: loop {
            let flat = idx.iter().zip(&shape).fold(0, |acc, (&k, &n)| acc * n + k);
            sum += density.values[flat];
            bins += 1;
            for axis in (0..d).rev() {
                idx[axis] += 1;
                if idx[axis] < ranges[axis].end {
                    continue 'outer;
                }
                idx[axis] = ranges[axis].start;
            }
            break;
        }
    }
    let mass = sum * density.bin_volume();
    Ok(BallIntegral {
        mass,
        mean: mass / region.measure(),
        bins,
    })
}
