//! Sweeps over `tau`, `alpha` and `N`, error metrics, log-log rate fits, and
//! timing benchmarks.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    charfn_density, finite_diff_gradients, histogram_density, monte_carlo_density, GradientSamples,
    SampleSource,
};
use crate::density::{BinGrid, GradientDensity};
use crate::error::{Error, Result};
use crate::field::{sample_field, BoxDomain, GridSpec, TestFunction};
use crate::spa::{analytic_density, critical_value_mask, find_stationary_points, spa_transform, DEFAULT_SEEDS_PER_AXIS};
use crate::wavefn::{
    check_nyquist, choose_tau, integrate_ball, power_spectrum_density, scaled_transform, BallRegion,
    SpectrumOptions, Tau, DEFAULT_MARGIN,
};

/// Bins per axis of the grid estimators are compared on.
pub const COMPARISON_BINS: usize = 65;
/// Half-width of the comparison grid, as a multiple of the gradient bound.
pub const COMPARISON_EXTENT: f64 = 1.3;

pub const DECAY_MIN_SLOPE: f64 = 0.8;
pub const SPA_MIN_SLOPE: f64 = 0.4;
pub const N_RATE_MAX_SLOPE: f64 = -0.7;
pub const CONCORDANCE_MAX_L1: f64 = 0.08;
pub const WAVEFN_EXPONENT: (f64, f64) = (0.9, 1.3);
pub const CHARFN_EXPONENT: (f64, f64) = (0.8, 1.2);
/// Allowed spread of charfn time per `M * lattice` unit around its median.
pub const CHARFN_UNIT_COST_SPREAD: f64 = 0.25;
pub const BENCH_REPEATS: usize = 5;

/// Per-bin exclusion flags; `true` bins are never read by comparisons.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorMask {
    excluded: Vec<bool>,
}

impl ErrorMask {
    pub fn none(len: usize) -> Self {
        ErrorMask {
            excluded: vec![false; len],
        }
    }

    pub fn from_flags(excluded: Vec<bool>) -> Self {
        ErrorMask { excluded }
    }

    /// Excludes every bin not entirely inside the box `[lo, hi]`.
    pub fn outside_box(grid: &BinGrid, lo: &[f64], hi: &[f64]) -> Self {
        let mut idx = vec![0usize; grid.dim()];
        let excluded = (0..grid.len())
            .map(|k| {
                grid.unravel(k, &mut idx);
                grid.axes().iter().enumerate().any(|(i, a)| {
                    let c = a.center(idx[i]);
                    c - 0.5 * a.step < lo[i] - 1e-12 || c + 0.5 * a.step > hi[i] + 1e-12
                })
            })
            .collect();
        ErrorMask { excluded }
    }

    /// The mask stored on a density, or nothing excluded.
    pub fn of(density: &GradientDensity) -> Self {
        match &density.mask {
            Some(m) => ErrorMask::from_flags(m.clone()),
            None => ErrorMask::none(density.values.len()),
        }
    }

    pub fn union(&self, other: &ErrorMask) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch(format!(
                "masks of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(ErrorMask {
            excluded: self.excluded.iter().zip(&other.excluded).map(|(a, b)| *a || *b).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.excluded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.excluded.is_empty()
    }

    pub fn is_excluded(&self, k: usize) -> bool {
        self.excluded[k]
    }

    pub fn flags(&self) -> &[bool] {
        &self.excluded
    }

    pub fn masked_fraction(&self) -> f64 {
        if self.excluded.is_empty() {
            return 0.0;
        }
        self.excluded.iter().filter(|b| **b).count() as f64 / self.excluded.len() as f64
    }
}

/// `sum |a - b| * bin_volume` over the bins `mask` leaves in.
pub fn l1_error(a: &GradientDensity, b: &GradientDensity, mask: &ErrorMask) -> Result<f64> {
    if !a.grid.same_as(&b.grid) {
        return Err(Error::GridMismatch("densities live on different bin grids".into()));
    }
    if mask.len() != a.values.len() {
        return Err(Error::GridMismatch(format!(
            "mask has {} bins, densities have {}",
            mask.len(),
            a.values.len()
        )));
    }
    let sum: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .enumerate()
        .filter(|(k, _)| !mask.is_excluded(*k))
        .map(|(_, (x, y))| (x - y).abs())
        .sum();
    Ok(sum * a.bin_volume())
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<Fit> {
    if x.len() != y.len() {
        return Err(Error::CountMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Precondition(format!(
            "log-log fit needs two positive points, have {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("log-log fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(Fit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    TauSweep,
    AlphaSweep,
    NSweep,
    Decay,
    SpaAgreement,
    Bench,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::TauSweep => "tau_sweep",
            SweepKind::AlphaSweep => "alpha_sweep",
            SweepKind::NSweep => "n_sweep",
            SweepKind::Decay => "decay",
            SweepKind::SpaAgreement => "spa_agreement",
            SweepKind::Bench => "bench",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub axis_name: String,
    pub axis: Vec<f64>,
    pub metrics: BTreeMap<String, Vec<f64>>,
    /// Scalars derived from the whole sweep (oracle values, CVs, ...).
    pub summary: BTreeMap<String, f64>,
    pub fit: Option<Fit>,
    pub pass: Option<bool>,
}

impl SweepReport {
    fn new(kind: SweepKind, axis_name: &str, axis: Vec<f64>) -> Result<Self> {
        if axis.is_empty() {
            return Err(Error::Precondition(format!("{} needs a non-empty {axis_name} list", kind.as_str())));
        }
        let increasing = axis.windows(2).all(|w| w[1] > w[0]);
        let decreasing = axis.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::Precondition(format!("{axis_name} values must be strictly monotone")));
        }
        Ok(SweepReport {
            kind,
            axis_name: axis_name.into(),
            axis,
            metrics: BTreeMap::new(),
            summary: BTreeMap::new(),
            fit: None,
            pass: None,
        })
    }

    fn push_metric(&mut self, name: &str, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.axis.len());
        self.metrics.insert(name.into(), values);
    }

    pub fn metric(&self, name: &str) -> Option<&[f64]> {
        self.metrics.get(name).map(Vec::as_slice)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per axis point per metric.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "kind,{},metric,value", self.axis_name)?;
        for (name, values) in &self.metrics {
            for (x, v) in self.axis.iter().zip(values) {
                writeln!(w, "{},{x},{name},{v}", self.kind.as_str())?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// `tau_0, tau_0/2, ..., tau_0/2^(count-1)`.
pub fn halving(tau0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| tau0 / 2f64.powi(k as i32)).collect()
}

/// The `COMPARISON_BINS`-per-axis grid over `+/- COMPARISON_EXTENT * grad_bound`.
pub fn comparison_grid(f: &TestFunction) -> Result<BinGrid> {
    let r = COMPARISON_EXTENT * f.grad_bound();
    BinGrid::cube(f.dim(), -r, r, COMPARISON_BINS)
}

/// Fraction of `{x : grad S(x) <= u}` in 1-D, from the roots of `S' = u`.
fn cdf_1d(f: &TestFunction, domain: &BoxDomain, u: f64) -> Result<f64> {
    let set = find_stationary_points(f, domain, &[u], DEFAULT_SEEDS_PER_AXIS)?;
    let mut cuts = vec![domain.lo()[0]];
    cuts.extend(set.points.iter().map(|p| p.x[0]));
    cuts.push(domain.hi()[0]);
    let below: f64 = cuts
        .windows(2)
        .filter(|w| f.grad(&[0.5 * (w[0] + w[1])])[0] <= u)
        .map(|w| w[1] - w[0])
        .sum();
    Ok(below / domain.width(0))
}

/// Exact mass of the analytic density in `[lo, hi]` for 1-D functions.
pub fn oracle_interval_mass(f: &TestFunction, domain: &BoxDomain, lo: f64, hi: f64) -> Result<f64> {
    if f.dim() != 1 {
        return Err(Error::UnsupportedDimension(f.dim()));
    }
    Ok(cdf_1d(f, domain, hi)? - cdf_1d(f, domain, lo)?)
}

/// Bin averages of the analytic density: exact interval masses in 1-D, a
/// `4^d` midpoint rule per bin otherwise. Bins holding a critical value are
/// masked.
pub fn binned_oracle(f: &TestFunction, domain: &BoxDomain, grid: &BinGrid) -> Result<GradientDensity> {
    let d = f.dim();
    if grid.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: grid.dim(),
        });
    }
    let critical = critical_value_mask(f, domain, grid);
    const SUB: usize = 4;
    let evaluated: Vec<Option<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            if critical[k] {
                return None;
            }
            let c = grid.center(k);
            if d == 1 {
                let h = 0.5 * grid.axes()[0].step;
                return oracle_interval_mass(f, domain, c[0] - h, c[0] + h)
                    .ok()
                    .map(|m| m / grid.bin_volume());
            }
            let mut acc = 0.0;
            for s in 0..SUB.pow(d as u32) {
                let mut rem = s;
                let mut u = c.clone();
                for i in (0..d).rev() {
                    let off = (rem % SUB) as f64 + 0.5;
                    u[i] += (off / SUB as f64 - 0.5) * grid.axes()[i].step;
                    rem /= SUB;
                }
                acc += analytic_density(f, domain, &u).ok()?;
            }
            Some(acc / SUB.pow(d as u32) as f64)
        })
        .collect();
    let mask: Vec<bool> = evaluated.iter().map(Option::is_none).collect();
    let values = evaluated.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    let mut density = GradientDensity::new(grid.clone(), values)?;
    density.mask = Some(mask);
    Ok(density)
}

/// Oracle mass of an infinity-norm ball: exact in 1-D, a midpoint rule with
/// `64^d` points otherwise.
pub fn oracle_ball_mass(f: &TestFunction, domain: &BoxDomain, region: &BallRegion) -> Result<f64> {
    let d = f.dim();
    let (c, r) = (region.center(), region.radius());
    if c.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: c.len(),
        });
    }
    if d == 1 {
        return oracle_interval_mass(f, domain, c[0] - r, c[0] + r);
    }
    let sub = 64usize;
    let h = 2.0 * r / sub as f64;
    let total = sub.pow(d as u32);
    let sum = (0..total)
        .into_par_iter()
        .map(|s| {
            let mut rem = s;
            let mut u = vec![0.0; d];
            for i in (0..d).rev() {
                u[i] = c[i] - r + ((rem % sub) as f64 + 0.5) * h;
                rem /= sub;
            }
            analytic_density(f, domain, &u)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum::<f64>();
    Ok(sum * h.powi(d as i32))
}

/// Wavefn density at `tau`, rebinned onto `target`.
pub fn wavefn_on_grid(
    f: &TestFunction,
    domain: &BoxDomain,
    grid: &GridSpec,
    tau: Tau,
    target: &BinGrid,
) -> Result<GradientDensity> {
    let field = sample_field(f, domain, grid)?;
    let mut d = power_spectrum_density(&field, tau)?.rebin(target)?;
    d.tau = Some(tau.value());
    Ok(d)
}

/// Ball mass, pointwise value and L1 error against the binned oracle for
/// each `tau`, plus the fit of `|ball mass - oracle mass|` against `tau`.
pub fn tau_sweep(
    f: &TestFunction,
    domain: &BoxDomain,
    grid: &GridSpec,
    taus: &[f64],
    region: &BallRegion,
) -> Result<SweepReport> {
    let mut report = SweepReport::new(SweepKind::TauSweep, "tau", taus.to_vec())?;
    let taus = taus.iter().map(|&t| Tau::new(t)).collect::<Result<Vec<_>>>()?;
    for &t in &taus {
        check_nyquist(domain, grid, t, f.grad_bound())?;
    }
    let cmp = comparison_grid(f)?;
    let oracle = binned_oracle(f, domain, &cmp)?;
    let mask = ErrorMask::of(&oracle);
    let oracle_mass = oracle_ball_mass(f, domain, region)?;
    let field = sample_field(f, domain, grid)?;

    let rows = taus
        .par_iter()
        .map(|&t| -> Result<[f64; 4]> {
            let p = power_spectrum_density(&field, t)?;
            let ball = integrate_ball(&p, region)?;
            let point = p.value_at(region.center()).ok_or_else(|| {
                Error::RegionOutOfRange(format!("{:?} outside the spectrum", region.center()))
            })?;
            let l1 = l1_error(&p.rebin(&cmp)?, &oracle, &mask)?;
            Ok([ball.mass, ball.mean, point, l1])
        })
        .collect::<Result<Vec<_>>>()?;

    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let mass_err: Vec<f64> = col(0).iter().map(|m| (m - oracle_mass).abs()).collect();
    report.fit = fit_loglog(&report.axis, &mass_err).ok();
    report.summary.insert("oracle_ball_mass".into(), oracle_mass);
    report.summary.insert("ball_mass_cv".into(), coefficient_of_variation(&col(0)));
    report.summary.insert("pointwise_cv".into(), coefficient_of_variation(&col(2)));
    report.summary.insert("masked_fraction".into(), mask.masked_fraction());
    let last = *mass_err.last().expect("non-empty sweep");
    report.pass = Some(last <= 0.1 * oracle_mass);
    report.push_metric("ball_mass", col(0));
    report.push_metric("ball_mean", col(1));
    report.push_metric("pointwise", col(2));
    report.push_metric("l1", col(3));
    report.push_metric("ball_mass_error", mass_err);
    Ok(report)
}

/// Mean over shrinking balls around `u0` at one small `tau`. Passes if the
/// smallest ball is within 5% of the analytic density.
pub fn alpha_sweep(
    f: &TestFunction,
    domain: &BoxDomain,
    grid: &GridSpec,
    tau: Tau,
    u0: &[f64],
    alphas: &[f64],
) -> Result<SweepReport> {
    let mut report = SweepReport::new(SweepKind::AlphaSweep, "alpha", alphas.to_vec())?;
    check_nyquist(domain, grid, tau, f.grad_bound())?;
    let field = sample_field(f, domain, grid)?;
    let p = power_spectrum_density(&field, tau)?;
    let min_bin = p.grid.axes().iter().fold(0.0, |m: f64, a| m.max(a.step));
    let smallest = alphas.iter().fold(f64::INFINITY, |m, a| m.min(*a));
    if smallest < min_bin {
        return Err(Error::Precondition(format!(
            "alpha {smallest} is narrower than one bin ({min_bin})"
        )));
    }
    let density = analytic_density(f, domain, u0)?;
    let means = alphas
        .iter()
        .map(|&a| Ok(integrate_ball(&p, &BallRegion::new(u0.to_vec(), a)?)?.mean))
        .collect::<Result<Vec<f64>>>()?;
    let errors: Vec<f64> = means.iter().map(|m| (m - density).abs()).collect();
    report.summary.insert("analytic_density".into(), density);
    report.pass = Some(*errors.last().expect("non-empty sweep") <= 0.05 * density);
    report.fit = fit_loglog(&report.axis, &errors).ok();
    report.push_metric("ball_mean", means);
    report.push_metric("abs_error", errors);
    Ok(report)
}

/// `P_tau(u0)` for a `u0` outside the gradient range, with the slope of its
/// decay in `tau`.
pub fn decay_check(
    f: &TestFunction,
    domain: &BoxDomain,
    grid: &GridSpec,
    u0: &[f64],
    taus: &[f64],
) -> Result<SweepReport> {
    let mut report = SweepReport::new(SweepKind::Decay, "tau", taus.to_vec())?;
    let set = find_stationary_points(f, domain, u0, DEFAULT_SEEDS_PER_AXIS)?;
    if !set.is_empty() {
        return Err(Error::Precondition(format!(
            "u0 = {u0:?} is inside the gradient range ({} stationary points)",
            set.len()
        )));
    }
    let reach = u0.iter().fold(f.grad_bound(), |m, x| m.max(x.abs()));
    let taus = taus.iter().map(|&t| Tau::new(t)).collect::<Result<Vec<_>>>()?;
    for &t in &taus {
        check_nyquist(domain, grid, t, reach)?;
    }
    let field = sample_field(f, domain, grid)?;
    let values = taus
        .par_iter()
        .map(|&t| {
            let p = power_spectrum_density(&field, t)?;
            p.value_at(u0)
                .ok_or_else(|| Error::RegionOutOfRange(format!("{u0:?} outside the spectrum")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let fit = fit_loglog(&report.axis, &values)?;
    report.pass = Some(fit.slope >= DECAY_MIN_SLOPE);
    report.fit = Some(fit);
    report.push_metric("pointwise", values);
    Ok(report)
}

/// `|F_fft - F_spa|` at the lattice point nearest `u`, per `tau`.
pub fn spa_agreement(
    f: &TestFunction,
    domain: &BoxDomain,
    grid: &GridSpec,
    u: &[f64],
    taus: &[f64],
) -> Result<SweepReport> {
    let mut report = SweepReport::new(SweepKind::SpaAgreement, "tau", taus.to_vec())?;
    let set = find_stationary_points(f, domain, u, DEFAULT_SEEDS_PER_AXIS)?;
    if set.is_empty() {
        return Err(Error::Precondition(format!("no stationary point maps to {u:?}")));
    }
    let taus = taus.iter().map(|&t| Tau::new(t)).collect::<Result<Vec<_>>>()?;
    for &t in &taus {
        check_nyquist(domain, grid, t, f.grad_bound())?;
    }
    let field = sample_field(f, domain, grid)?;
    let rows = taus
        .par_iter()
        .map(|&t| -> Result<[f64; 2]> {
            let spec = scaled_transform(&field, t, &SpectrumOptions::default())?;
            let k = spec
                .grid
                .locate(u)
                .ok_or_else(|| Error::RegionOutOfRange(format!("{u:?} outside the spectrum")))?;
            let um = spec.grid.center(k);
            let fft: Complex64 = spec.values[k];
            let spa = spa_transform(f, domain, &um, t)?;
            Ok([(fft - spa).norm(), fft.norm()])
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let fit = fit_loglog(&report.axis, &errors)?;
    report.pass = Some(fit.slope >= SPA_MIN_SLOPE);
    report.fit = Some(fit);
    report.push_metric("abs_error", errors);
    report.push_metric("fft_modulus", rows.iter().map(|r| r[1]).collect());
    Ok(report)
}

/// L1 error against the binned oracle on the comparison grid, with
/// `tau = c_tau / N`, for each `N`.
pub fn n_rate_1d(f: &TestFunction, domain: &BoxDomain, n_list: &[usize], c_tau: f64) -> Result<SweepReport> {
    if f.dim() != 1 {
        return Err(Error::UnsupportedDimension(f.dim()));
    }
    let axis: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    let mut report = SweepReport::new(SweepKind::NSweep, "n", axis)?;
    let mut cases = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let grid = GridSpec::new(vec![n])?;
        let tau = Tau::new(c_tau / n as f64)?;
        check_nyquist(domain, &grid, tau, f.grad_bound())?;
        cases.push((grid, tau));
    }
    let cmp = comparison_grid(f)?;
    let oracle = binned_oracle(f, domain, &cmp)?;
    let mask = ErrorMask::of(&oracle);
    let errors = cases
        .par_iter()
        .map(|(grid, tau)| l1_error(&wavefn_on_grid(f, domain, grid, *tau, &cmp)?, &oracle, &mask))
        .collect::<Result<Vec<f64>>>()?;
    let fit = fit_loglog(&report.axis, &errors)?;
    report.pass = Some(fit.slope <= N_RATE_MAX_SLOPE);
    report.fit = Some(fit);
    report.summary.insert("c_tau".into(), c_tau);
    report.summary.insert("masked_fraction".into(), mask.masked_fraction());
    report.push_metric("l1", errors);
    Ok(report)
}

/// Pairwise L1 distances between all estimators on one fixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub function: String,
    pub estimators: Vec<String>,
    /// Row-major `estimators.len()` square matrix.
    pub l1: Vec<Vec<f64>>,
    pub masked_fraction: f64,
    pub tau: f64,
    pub clipped_mass: f64,
    pub max_l1: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct CompareConfig {
    /// Samples per axis for wavefn, charfn and finite differences.
    pub n: usize,
    pub monte_carlo_samples: usize,
    pub seed: u64,
    pub bins: usize,
    /// Charfn runs on a lattice this many times finer than `bins` and is
    /// rebinned; one-to-one lattices ring visibly at integrable singularities.
    pub charfn_oversample: usize,
}

impl CompareConfig {
    pub fn for_dim(d: usize) -> Self {
        CompareConfig {
            n: match d {
                1 => 4096,
                2 => 256,
                _ => 32,
            },
            monte_carlo_samples: 10_000_000,
            seed: 0,
            bins: COMPARISON_BINS,
            charfn_oversample: match d {
                1 => 4,
                _ => 1,
            },
        }
    }
}

/// Runs wavefn, charfn, finite-difference histogram, Monte Carlo and the
/// binned oracle on the comparison grid and tabulates pairwise L1.
pub fn compare_estimators(f: &TestFunction, domain: &BoxDomain, cfg: &CompareConfig) -> Result<Comparison> {
    let d = f.dim();
    let r = COMPARISON_EXTENT * f.grad_bound();
    let cmp = BinGrid::cube(d, -r, r, cfg.bins)?;
    let grid = GridSpec::uniform(d, cfg.n)?;
    let field = sample_field(f, domain, &grid)?;
    let tau = choose_tau(&field, f.grad_bound(), DEFAULT_MARGIN)?;

    let oracle = binned_oracle(f, domain, &cmp)?;
    let mask = ErrorMask::of(&oracle);
    let wave = power_spectrum_density(&field, tau)?.rebin(&cmp)?;
    let analytic: Vec<f64> = (0..grid.len()).flat_map(|k| f.grad(&field.point(k))).collect();
    let samples = GradientSamples::new(d, analytic, SampleSource::Analytic)?;
    let fine_bins = cfg.bins * cfg.charfn_oversample.max(1);
    let fine = BinGrid::cube(d, -r, r, fine_bins)?;
    let charfn_fine = charfn_density(&samples, domain.measure(), fine_bins, &fine)?;
    let charfn = charfn_fine.rebin(&cmp)?;
    let hist = histogram_density(&finite_diff_gradients(&field)?, &cmp)?;
    let mc = monte_carlo_density(f, domain, cfg.monte_carlo_samples, &cmp, cfg.seed)?;

    let names = ["wavefn", "charfn", "histogram", "monte_carlo", "oracle"];
    let all = [&wave, &charfn, &hist, &mc, &oracle];
    let mut l1 = vec![vec![0.0; names.len()]; names.len()];
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let e = l1_error(all[i], all[j], &mask)?;
            l1[i][j] = e;
            l1[j][i] = e;
        }
    }
    let max_l1 = l1.iter().flatten().fold(0.0, |m: f64, v| m.max(*v));
    Ok(Comparison {
        function: f.name().into(),
        estimators: names.iter().map(|s| s.to_string()).collect(),
        l1,
        masked_fraction: mask.masked_fraction(),
        tau: tau.value(),
        clipped_mass: charfn_fine.diagnostics.clipped_mass.unwrap_or(0.0),
        max_l1,
        pass: max_l1 <= CONCORDANCE_MAX_L1,
    })
}

/// Median wall time of `repeats` runs of `job`, in seconds.
pub fn median_time<T>(repeats: usize, mut job: impl FnMut() -> T) -> f64 {
    let mut times: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(job());
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    /// 1-D sample counts for the wavefn estimator.
    pub wave_sizes: Vec<usize>,
    /// Sample counts for the charfn estimator at a fixed lattice.
    pub charfn_samples: Vec<usize>,
    pub charfn_lattice: usize,
    /// `N = M = lattice` size of the head-to-head charfn run.
    pub head_to_head: usize,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            wave_sizes: (14..=20).map(|k| 1usize << k).collect(),
            charfn_samples: (10..=14).map(|k| 1usize << k).collect(),
            charfn_lattice: 512,
            head_to_head: 4096,
            repeats: BENCH_REPEATS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub wavefn: SweepReport,
    pub charfn: SweepReport,
    pub charfn_head_to_head_seconds: f64,
    pub wavefn_largest_seconds: f64,
    pub pass: bool,
}

fn quadratic_samples(m: usize) -> Result<GradientSamples> {
    let data = (0..m).map(|k| -1.0 + (k as f64 + 0.5) * 2.0 / m as f64).collect();
    GradientSamples::new(1, data, SampleSource::Analytic)
}

/// Timings of both estimators on one thread. Wavefn is fit against `N`,
/// charfn against `M` at a fixed lattice.
pub fn complexity_bench(cfg: &BenchConfig) -> Result<BenchSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    pool.install(|| bench_inner(cfg))
}

fn bench_inner(cfg: &BenchConfig) -> Result<BenchSummary> {
    let f = crate::field::catalog("quadratic1d")?;
    let mut wave = SweepReport::new(
        SweepKind::Bench,
        "n",
        cfg.wave_sizes.iter().map(|&n| n as f64).collect(),
    )?;
    let mut wave_times = Vec::new();
    for &n in &cfg.wave_sizes {
        let field = sample_field(&f, f.domain(), &GridSpec::new(vec![n])?)?;
        let tau = choose_tau(&field, f.grad_bound(), DEFAULT_MARGIN)?;
        power_spectrum_density(&field, tau)?;
        wave_times.push(median_time(cfg.repeats, || power_spectrum_density(&field, tau)));
    }
    let wave_fit = fit_loglog(&wave.axis, &wave_times)?;
    wave.pass = Some((WAVEFN_EXPONENT.0..=WAVEFN_EXPONENT.1).contains(&wave_fit.slope));
    wave.fit = Some(wave_fit);
    wave.push_metric("wall_time", wave_times.clone());

    let k = cfg.charfn_lattice;
    let grid = BinGrid::cube(1, -1.3, 1.3, k)?;
    let mut charfn = SweepReport::new(
        SweepKind::Bench,
        "m",
        cfg.charfn_samples.iter().map(|&m| m as f64).collect(),
    )?;
    let mut cf_times = Vec::new();
    for &m in &cfg.charfn_samples {
        let s = quadratic_samples(m)?;
        cf_times.push(median_time(cfg.repeats, || charfn_density(&s, 2.0, k, &grid)));
    }
    let unit: Vec<f64> = cf_times
        .iter()
        .zip(&cfg.charfn_samples)
        .map(|(t, &m)| t / (m * k) as f64)
        .collect();
    let mut sorted = unit.clone();
    sorted.sort_by(f64::total_cmp);
    let median_unit = sorted[sorted.len() / 2];
    let spread = unit
        .iter()
        .fold(0.0, |acc: f64, u| acc.max((u / median_unit - 1.0).abs()));
    let cf_fit = fit_loglog(&charfn.axis, &cf_times)?;
    charfn.pass = Some(
        (CHARFN_EXPONENT.0..=CHARFN_EXPONENT.1).contains(&cf_fit.slope)
            && spread <= CHARFN_UNIT_COST_SPREAD,
    );
    charfn.fit = Some(cf_fit);
    charfn.summary.insert("lattice".into(), k as f64);
    charfn.summary.insert("unit_cost_spread".into(), spread);
    charfn.push_metric("wall_time", cf_times);
    charfn.push_metric("unit_cost", unit);

    let h = cfg.head_to_head;
    let s = quadratic_samples(h)?;
    let hgrid = BinGrid::cube(1, -1.3, 1.3, h)?;
    let head = median_time(cfg.repeats, || charfn_density(&s, 2.0, h, &hgrid));
    let largest = *wave_times.last().expect("non-empty sizes");
    let pass = wave.pass == Some(true) && charfn.pass == Some(true) && head > largest;
    Ok(BenchSummary {
        wavefn: wave,
        charfn,
        charfn_head_to_head_seconds: head,
        wavefn_largest_seconds: largest,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::BinAxis;
    use crate::field::catalog;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn uniform(value: f64) -> GradientDensity {
        GradientDensity::new(BinGrid::cube(1, -1.0, 1.0, 40).unwrap(), vec![value; 40]).unwrap()
    }

    #[test]
    fn l1_examples() {
        let a = uniform(0.5);
        let b = uniform(0.45);
        let none = ErrorMask::none(40);
        assert_eq!(l1_error(&a, &a, &none).unwrap(), 0.0);
        assert_relative_eq!(l1_error(&a, &b, &none).unwrap(), 0.1, epsilon = 1e-12);
        let other = GradientDensity::new(BinGrid::cube(1, -1.0, 1.0, 20).unwrap(), vec![0.5; 20]).unwrap();
        assert!(matches!(l1_error(&a, &other, &none), Err(Error::GridMismatch(_))));
        let mut flags = vec![false; 40];
        flags[..20].iter_mut().for_each(|f| *f = true);
        let half = ErrorMask::from_flags(flags);
        assert_relative_eq!(l1_error(&a, &b, &half).unwrap(), 0.05, epsilon = 1e-12);
        assert_eq!(half.masked_fraction(), 0.5);
    }

    proptest! {
        #[test]
        fn l1_is_symmetric(a in prop::collection::vec(0.0f64..3.0, 16), b in prop::collection::vec(0.0f64..3.0, 16)) {
            let grid = BinGrid::cube(1, -2.0, 2.0, 16).unwrap();
            let da = GradientDensity::new(grid.clone(), a).unwrap();
            let db = GradientDensity::new(grid, b).unwrap();
            let m = ErrorMask::none(16);
            prop_assert_eq!(l1_error(&da, &db, &m).unwrap(), l1_error(&db, &da, &m).unwrap());
        }

        #[test]
        fn fit_recovers_power_laws(slope in -3.0f64..3.0, c in 0.1f64..10.0) {
            let x: Vec<f64> = (0..6).map(|k| 2f64.powi(k)).collect();
            let y: Vec<f64> = x.iter().map(|v| c * v.powf(slope)).collect();
            let fit = fit_loglog(&x, &y).unwrap();
            prop_assert!((fit.slope - slope).abs() < 1e-10);
            prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
            prop_assert!(fit.r2 > 1.0 - 1e-9);
        }
    }

    #[test]
    fn outside_box_mask() {
        let grid = BinGrid::cube(1, -1.3, 1.3, 65).unwrap();
        let m = ErrorMask::outside_box(&grid, &[-0.9], &[0.9]);
        let kept: Vec<f64> = grid.axes()[0]
            .centers()
            .into_iter()
            .enumerate()
            .filter(|(k, _)| !m.is_excluded(*k))
            .map(|(_, c)| c)
            .collect();
        assert_eq!(kept.len(), 45);
        assert!(kept.iter().all(|c| c.abs() <= 0.88 + 1e-9));
    }

    #[test]
    fn report_rejects_bad_axes() {
        assert!(SweepReport::new(SweepKind::TauSweep, "tau", vec![]).is_err());
        assert!(SweepReport::new(SweepKind::TauSweep, "tau", vec![1.0, 0.5, 0.7]).is_err());
        assert!(SweepReport::new(SweepKind::TauSweep, "tau", vec![1.0, 0.5, 0.25]).is_ok());
    }

    #[test]
    fn report_serializes_to_json_and_tidy_csv() {
        let mut r = SweepReport::new(SweepKind::Decay, "tau", vec![0.1, 0.05]).unwrap();
        r.push_metric("pointwise", vec![1.0, 0.5]);
        r.push_metric("l1", vec![0.2, 0.1]);
        let json = r.to_json().unwrap();
        let back: SweepReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kind,tau,metric,value");
        assert_eq!(lines.len(), 5);
        assert!(lines.contains(&"decay,0.05,pointwise,0.5"));
    }

    #[test]
    fn interval_mass_matches_arcsine_cdf() {
        let c = catalog("cosine1d").unwrap();
        let cdf = |u: f64| 0.5 + u.asin() / std::f64::consts::PI;
        for (lo, hi) in [(-0.3, 0.2), (0.45, 0.55), (0.9, 0.99), (-0.999, 0.999)] {
            let m = oracle_interval_mass(&c, c.domain(), lo, hi).unwrap();
            assert_relative_eq!(m, cdf(hi) - cdf(lo), epsilon = 1e-9);
        }
        let d = catalog("doublewell1d").unwrap();
        let total = oracle_interval_mass(&d, d.domain(), -6.5, 6.5).unwrap();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn binned_oracle_masks_fold_bins() {
        let c = catalog("cosine1d").unwrap();
        let grid = comparison_grid(&c).unwrap();
        let o = binned_oracle(&c, c.domain(), &grid).unwrap();
        let m = ErrorMask::of(&o);
        assert!(m.masked_fraction() <= 0.05);
        assert!(m.is_excluded(grid.locate(&[1.0]).unwrap()));
        let mass: f64 = o.values.iter().sum::<f64>() * grid.bin_volume();
        // everything except the two bins straddling +/-1
        assert_relative_eq!(mass, 2.0 * 0.98f64.asin() / std::f64::consts::PI, epsilon = 1e-9);
        let q = catalog("quadratic2d").unwrap();
        let grid = BinGrid::new(vec![
            BinAxis::from_edges(-2.4, 2.4, 12).unwrap(),
            BinAxis::from_edges(-1.2, 1.2, 12).unwrap(),
        ])
        .unwrap();
        let o = binned_oracle(&q, q.domain(), &grid).unwrap();
        assert_relative_eq!(o.value_at(&[0.1, 0.1]).unwrap(), 0.125, epsilon = 1e-12);
    }

    #[test]
    fn ball_mass_oracle_in_2d() {
        let q = catalog("quadratic2d").unwrap();
        // density 1/(4 * 2) inside [-2,2]x[-1,1]
        let m = oracle_ball_mass(&q, q.domain(), &BallRegion::new(vec![0.5, 0.0], 0.2).unwrap()).unwrap();
        assert_relative_eq!(m, 0.16 / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn tau_sweep_on_quadratic() {
        let f = catalog("quadratic1d").unwrap();
        let grid = GridSpec::new(vec![1 << 14]).unwrap();
        let region = BallRegion::new(vec![0.3], 0.05).unwrap();
        let r = tau_sweep(&f, f.domain(), &grid, &halving(2e-3, 6), &region).unwrap();
        assert_relative_eq!(r.summary["oracle_ball_mass"], 0.05, epsilon = 1e-12);
        let err = r.metric("ball_mass_error").unwrap();
        assert!(*err.last().unwrap() <= 0.005);
        let l1 = r.metric("l1").unwrap();
        for w in l1.windows(2) {
            assert!(w[1] <= 1.1 * w[0], "l1 {l1:?}");
        }
        assert_eq!(r.pass, Some(true));
        assert!(tau_sweep(&f, f.domain(), &grid, &[], &region).is_err());
        assert!(matches!(
            tau_sweep(&f, f.domain(), &grid, &[1e-6], &region),
            Err(Error::Nyquist { .. })
        ));
    }

    #[test]
    fn alpha_sweep_examples() {
        let f = catalog("quadratic1d").unwrap();
        let grid = GridSpec::new(vec![1 << 14]).unwrap();
        let tau = Tau::new(2e-4).unwrap();
        let r = alpha_sweep(&f, f.domain(), &grid, tau, &[0.0], &[0.4, 0.2, 0.1, 0.05]).unwrap();
        assert!(r.metric("ball_mean").unwrap().iter().all(|m| (m - 0.5).abs() <= 0.03));
        assert!(matches!(
            alpha_sweep(&f, f.domain(), &grid, tau, &[0.0], &[0.1, 1e-5]),
            Err(Error::Precondition(_))
        ));

        let c = catalog("cosine1d").unwrap();
        let grid = GridSpec::new(vec![1 << 16]).unwrap();
        let tau = Tau::new(1e-4).unwrap();
        let r = alpha_sweep(&c, c.domain(), &grid, tau, &[0.5], &[0.4, 0.2, 0.1, 0.05]).unwrap();
        let e = r.metric("abs_error").unwrap();
        assert!(e[3] < e[0]);
        assert_eq!(r.pass, Some(true));
    }

    #[test]
    fn decay_rejects_points_inside_the_range() {
        let f = catalog("quadratic1d").unwrap();
        let grid = GridSpec::new(vec![1 << 12]).unwrap();
        assert!(matches!(
            decay_check(&f, f.domain(), &grid, &[0.5], &halving(0.01, 4)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn decay_on_doublewell() {
        let f = catalog("doublewell1d").unwrap();
        let grid = GridSpec::new(vec![1 << 16]).unwrap();
        let r = decay_check(&f, f.domain(), &grid, &[10.0], &halving(0.05, 8)).unwrap();
        assert!(r.fit.unwrap().slope >= DECAY_MIN_SLOPE, "{:?}", r.fit);
    }

    #[test]
    fn spa_agreement_rejects_constant_fields() {
        let k = TestFunction::constant(1, 1.0);
        let grid = GridSpec::new(vec![256]).unwrap();
        assert!(spa_agreement(&k, k.domain(), &grid, &[0.0], &[0.1, 0.05]).is_err());
    }

    #[test]
    fn estimators_agree_on_the_arcsine_law() {
        let c = catalog("cosine1d").unwrap();
        let cmp = compare_estimators(&c, c.domain(), &CompareConfig::for_dim(1)).unwrap();
        assert!(cmp.pass, "{:?}", cmp.l1);
        assert!(cmp.masked_fraction <= 0.05);
        assert!(cmp.clipped_mass <= 0.02, "clipped {}", cmp.clipped_mass);
    }

    #[test]
    fn charfn_clipping_stays_small_on_quadratic() {
        let q = catalog("quadratic1d").unwrap();
        let cmp = compare_estimators(&q, q.domain(), &CompareConfig::for_dim(1)).unwrap();
        assert!(cmp.clipped_mass <= 0.02, "clipped {}", cmp.clipped_mass);
    }

    #[test]
    fn interior_of_quadratic2d_is_flat() {
        // grad S = (2 x, y) maps the box onto [-2,2]x[-1,1] with density 1/8
        let q = catalog("quadratic2d").unwrap();
        let grid = GridSpec::uniform(2, 256).unwrap();
        let field = sample_field(&q, q.domain(), &grid).unwrap();
        let tau = choose_tau(&field, q.grad_bound(), DEFAULT_MARGIN).unwrap();
        let target = BinGrid::new(vec![
            BinAxis::from_edges(-1.6, 1.6, 8).unwrap(),
            BinAxis::from_edges(-0.8, 0.8, 8).unwrap(),
        ])
        .unwrap();
        let d = wavefn_on_grid(&q, q.domain(), &grid, tau, &target).unwrap();
        for v in &d.values {
            assert!((v - 0.125).abs() < 0.01, "{v}");
        }
    }

    #[test]
    fn n_rate_accepts_irregular_lists() {
        let f = catalog("quadratic1d").unwrap();
        let r = n_rate_1d(&f, f.domain(), &[1000, 3000, 7000], 1.0).unwrap();
        assert_eq!(r.axis, vec![1000.0, 3000.0, 7000.0]);
        assert!(r.fit.unwrap().slope < 0.0);
        assert!(n_rate_1d(&f, f.domain(), &[1024], 0.1).is_err());
    }
}
