//! Reference estimators that work from gradient samples rather than from `S`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::density::{BinGrid, GradientDensity};
use crate::error::{Error, Result};
use crate::fft::{fft_nd, frequency_slot};
use crate::field::{BoxDomain, ScalarField, TestFunction};

pub const MIN_MONTE_CARLO_SAMPLES: usize = 10_000;
pub const MIN_OMEGA_PER_AXIS: usize = 16;
const MC_CHUNK: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSource {
    Analytic,
    FiniteDifference,
}

/// `M` gradient vectors stored flat, `d` reals each.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSamples {
    dim: usize,
    data: Vec<f64>,
    source: SampleSource,
}

#[derive(Debug, Serialize, Deserialize)]
struct SamplesHeader {
    d: usize,
    count: usize,
    source: SampleSource,
    layout: String,
}

impl GradientSamples {
    pub fn new(dim: usize, data: Vec<f64>, source: SampleSource) -> Result<Self> {
        crate::field::check_dim(dim)?;
        if data.is_empty() {
            return Err(Error::EmptySamples);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::CountMismatch {
                expected: (data.len() / dim + 1) * dim,
                got: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(GradientSamples { dim, data, source })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn source(&self) -> SampleSource {
        self.source
    }

    pub fn get(&self, m: usize) -> &[f64] {
        &self.data[m * self.dim..(m + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Sidecar header path for a binary sample file.
    pub fn header_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }

    /// Writes little-endian f64 values to `path` and a JSON header to
    /// `<path>.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for v in &self.data {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let header = SamplesHeader {
            d: self.dim,
            count: self.len(),
            source: self.source,
            layout: "row-major f64 little-endian".into(),
        };
        let hpath = Self::header_path(path);
        let json = serde_json::to_string_pretty(&header)?;
        std::fs::write(&hpath, json).map_err(|e| Error::io(&hpath, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let hpath = Self::header_path(path);
        let text = std::fs::read_to_string(&hpath).map_err(|e| Error::io(&hpath, e))?;
        let header: SamplesHeader = serde_json::from_str(&text)?;
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let expected = header.count * header.d;
        if bytes.len() != expected * 8 {
            return Err(Error::CountMismatch {
                expected,
                got: bytes.len() / 8,
            });
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        GradientSamples::new(header.d, data, header.source)
    }
}

/// Central differences at every grid point at least one cell away from the
/// boundary; `M = prod(n_i - 2)`.
pub fn finite_diff_gradients(field: &ScalarField) -> Result<GradientSamples> {
    let grid = field.grid();
    grid.require_min(3)?;
    let d = field.dim();
    let n = grid.n();
    let dx = field.spacing();
    let strides: Vec<usize> = (0..d).map(|i| n[i + 1..].iter().product()).collect();
    let inner: Vec<usize> = n.iter().map(|k| k - 2).collect();
    let count: usize = inner.iter().product();
    let values = field.values();

    let mut data = Vec::with_capacity(count * d);
    let mut idx = vec![0usize; d];
    for m in 0..count {
        let mut rem = m;
        for i in (0..d).rev() {
            idx[i] = rem % inner[i] + 1;
            rem /= inner[i];
        }
        let flat = grid.ravel(&idx);
        for i in 0..d {
            let fwd = values[flat + strides[i]];
            let back = values[flat - strides[i]];
            data.push((fwd - back) / (2.0 * dx[i]));
        }
    }
    GradientSamples::new(d, data, SampleSource::FiniteDifference)
}

/// Histogram normalized over the samples that land inside `grid`; the rest
/// are counted in `diagnostics.out_of_range`.
pub fn histogram_density(samples: &GradientSamples, grid: &BinGrid) -> Result<GradientDensity> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if grid.dim() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: samples.dim(),
        });
    }
    let mut counts = vec![0u64; grid.len()];
    let mut outside = 0usize;
    for s in samples.iter() {
        match grid.locate(s) {
            Some(k) => counts[k] += 1,
            None => outside += 1,
        }
    }
    counts_to_density(grid, &counts, outside)
}

fn counts_to_density(grid: &BinGrid, counts: &[u64], outside: usize) -> Result<GradientDensity> {
    let inside: u64 = counts.iter().sum();
    if inside == 0 {
        return Err(Error::Precondition(format!(
            "all {outside} samples fall outside the bin grid"
        )));
    }
    let scale = 1.0 / (inside as f64 * grid.bin_volume());
    let values = counts.iter().map(|&c| c as f64 * scale).collect();
    let mut d = GradientDensity::new(grid.clone(), values)?;
    d.diagnostics.out_of_range = Some(outside);
    Ok(d)
}

/// Histogram of `grad S(X)` for `M` uniform draws of `X` on `domain`.
///
/// Draws come in fixed chunks, each from its own ChaCha stream keyed by
/// `(seed, chunk)`, so the result does not depend on thread count.
pub fn monte_carlo_density(
    f: &TestFunction,
    domain: &BoxDomain,
    m: usize,
    grid: &BinGrid,
    seed: u64,
) -> Result<GradientDensity> {
    if m < MIN_MONTE_CARLO_SAMPLES {
        return Err(Error::Precondition(format!(
            "need at least {MIN_MONTE_CARLO_SAMPLES} samples, got {m}"
        )));
    }
    let d = f.dim();
    if domain.dim() != d || grid.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if domain.dim() != d { domain.dim() } else { grid.dim() },
        });
    }
    let chunks = m.div_ceil(MC_CHUNK);
    let (counts, outside) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let take = MC_CHUNK.min(m - c * MC_CHUNK);
            let mut counts = vec![0u64; grid.len()];
            let mut outside = 0usize;
            let mut x = vec![0.0; d];
            for _ in 0..take {
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = domain.lo()[i] + domain.width(i) * rng.gen::<f64>();
                }
                match grid.locate(&f.grad(&x)) {
                    Some(k) => counts[k] += 1,
                    None => outside += 1,
                }
            }
            (counts, outside)
        })
        .reduce(
            || (vec![0u64; grid.len()], 0usize),
            |(mut a, oa), (b, ob)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, oa + ob)
            },
        );
    counts_to_density(grid, &counts, outside)
}

/// DC-centered frequency lattice `omega_k = k * step` per axis, with
/// `k` in `[-floor(K/2), ceil(K/2))`.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaLattice {
    steps: Vec<f64>,
    counts: Vec<usize>,
}

impl OmegaLattice {
    /// The lattice dual to `grid`: spacing `2 pi / range` and `K` equal to
    /// the number of bins on each axis.
    pub fn dual_to(grid: &BinGrid, omega_per_axis: usize) -> Result<Self> {
        if omega_per_axis < MIN_OMEGA_PER_AXIS {
            return Err(Error::Precondition(format!(
                "need at least {MIN_OMEGA_PER_AXIS} frequencies per axis, got {omega_per_axis}"
            )));
        }
        let mut steps = Vec::with_capacity(grid.dim());
        for (i, a) in grid.axes().iter().enumerate() {
            if a.len != omega_per_axis {
                return Err(Error::GridMismatch(format!(
                    "axis {i} has {} bins but the lattice has {omega_per_axis} frequencies",
                    a.len
                )));
            }
            steps.push(2.0 * PI / (a.len as f64 * a.step));
        }
        Ok(OmegaLattice {
            counts: vec![omega_per_axis; grid.dim()],
            steps,
        })
    }

    pub fn dim(&self) -> usize {
        self.steps.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest `|omega_i|`, i.e. `pi / bin width` for a dual lattice.
    pub fn omega_max(&self, axis: usize) -> f64 {
        (self.counts[axis] / 2) as f64 * self.steps[axis]
    }

    fn frequency(&self, axis: usize, c: usize) -> i64 {
        c as i64 - (self.counts[axis] / 2) as i64
    }

    /// The lattice point with flat (row-major, DC-centered) index `k`.
    pub fn point(&self, mut k: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.dim()];
        for i in (0..self.dim()).rev() {
            let c = k % self.counts[i];
            k /= self.counts[i];
            w[i] = self.frequency(i, c) as f64 * self.steps[i];
        }
        w
    }

    pub fn index_of_zero(&self) -> usize {
        self.counts.iter().fold(0, |acc, &n| acc * n + n / 2)
    }
}

/// `psi(omega) = (1/mu) sum_m (mu / M) exp(i omega . g_m)` by direct summation,
/// in the lattice's DC-centered row-major order. Cost is `M * lattice.len()`.
pub fn characteristic_function(
    samples: &GradientSamples,
    mu_omega: f64,
    lattice: &OmegaLattice,
) -> Result<Vec<Complex64>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(mu_omega > 0.0) {
        return Err(Error::Precondition(format!("domain measure must be positive, got {mu_omega}")));
    }
    if lattice.dim() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: lattice.dim(),
            got: samples.dim(),
        });
    }
    let weight = (mu_omega / samples.len() as f64) / mu_omega;
    Ok((0..lattice.len())
        .into_par_iter()
        .map(|k| {
            let w = lattice.point(k);
            let mut acc = Complex64::new(0.0, 0.0);
            for g in samples.iter() {
                let phase: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
                let (s, c) = phase.sin_cos();
                acc.re += c;
                acc.im += s;
            }
            acc * weight
        })
        .collect())
}

/// Density by inverting the empirical characteristic function on the
/// lattice dual to `grid`. Negative lobes are clipped; the removed mass is in
/// `diagnostics.clipped_mass`.
pub fn charfn_density(
    samples: &GradientSamples,
    mu_omega: f64,
    omega_per_axis: usize,
    grid: &BinGrid,
) -> Result<GradientDensity> {
    if grid.dim() != samples.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: samples.dim(),
        });
    }
    let lattice = OmegaLattice::dual_to(grid, omega_per_axis)?;
    let psi = characteristic_function(samples, mu_omega, &lattice)?;
    invert_characteristic(&psi, &lattice, grid)
}

/// `p(u_j) = prod(d omega / 2 pi) sum_k psi(omega_k) exp(-i omega_k . u_j)`
/// evaluated on the bin centers with one FFT.
pub fn invert_characteristic(
    psi: &[Complex64],
    lattice: &OmegaLattice,
    grid: &BinGrid,
) -> Result<GradientDensity> {
    let d = grid.dim();
    let shape = grid.shape();
    if psi.len() != lattice.len() || shape != lattice.counts {
        return Err(Error::GridMismatch("lattice does not match bin grid".into()));
    }
    let mut buf = vec![Complex64::default(); psi.len()];
    let mut idx = vec![0usize; d];
    let mut slot = vec![0usize; d];
    for (k, value) in psi.iter().enumerate() {
        let mut rem = k;
        for i in (0..d).rev() {
            idx[i] = rem % shape[i];
            rem /= shape[i];
        }
        let mut shift = 0.0;
        for i in 0..d {
            let m = lattice.frequency(i, idx[i]);
            shift += m as f64 * lattice.steps[i] * grid.axes()[i].start;
            slot[i] = frequency_slot(m, shape[i]);
        }
        let flat = slot.iter().zip(&shape).fold(0, |acc, (&s, &n)| acc * n + s);
        buf[flat] = value * Complex64::from_polar(1.0, -shift);
    }
    fft_nd(&mut buf, &shape, FftDirection::Forward);

    let scale: f64 = lattice.steps.iter().map(|s| s / (2.0 * PI)).product();
    let vol = grid.bin_volume();
    let mut clipped = 0.0;
    let values: Vec<f64> = buf
        .iter()
        .map(|z| {
            let v = z.re * scale;
            if v < 0.0 {
                clipped -= v * vol;
                0.0
            } else {
                v
            }
        })
        .collect();
    let mut density = GradientDensity::new(grid.clone(), values)?;
    let raw = density.normalize();
    density.diagnostics.pre_norm_mass = Some(raw);
    density.diagnostics.clipped_mass = Some(clipped);
    Ok(density)
}
