//! Binned densities over gradient space.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::check_dim;

/// Uniformly spaced bin centers `start + j * step`, `j = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinAxis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl BinAxis {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() || len == 0 {
            return Err(Error::GridMismatch(format!(
                "invalid bin axis start={start} step={step} len={len}"
            )));
        }
        Ok(BinAxis { start, step, len })
    }

    /// `len` equal bins tiling `[lo, hi]`.
    pub fn from_edges(lo: f64, hi: f64, len: usize) -> Result<Self> {
        if !(hi > lo) || len == 0 {
            return Err(Error::GridMismatch(format!("invalid bin range [{lo}, {hi}]")));
        }
        let step = (hi - lo) / len as f64;
        BinAxis::new(lo + 0.5 * step, step, len)
    }

    pub fn center(&self, j: usize) -> f64 {
        self.start + j as f64 * self.step
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.center(j)).collect()
    }

    pub fn lo_edge(&self) -> f64 {
        self.start - 0.5 * self.step
    }

    pub fn hi_edge(&self) -> f64 {
        self.start + (self.len as f64 - 0.5) * self.step
    }

    pub fn locate(&self, u: f64) -> Option<usize> {
        let j = ((u - self.lo_edge()) / self.step).floor();
        (j >= 0.0 && j < self.len as f64).then_some(j as usize)
    }

    fn approx_eq(&self, other: &BinAxis) -> bool {
        let tol = 1e-9 * self.step;
        self.len == other.len
            && (self.start - other.start).abs() <= tol
            && (self.step - other.step).abs() <= 1e-12 * self.step
    }

    /// `(fine_index, coarse_index, fraction of the fine bin inside the coarse bin)`.
    fn overlaps(&self, target: &BinAxis) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for j in 0..self.len {
            let a = self.center(j) - 0.5 * self.step;
            let b = a + self.step;
            let first = ((a - target.lo_edge()) / target.step).floor().max(0.0) as usize;
            let mut k = first;
            while k < target.len {
                let ta = target.center(k) - 0.5 * target.step;
                let tb = ta + target.step;
                if ta >= b {
                    break;
                }
                let ov = b.min(tb) - a.max(ta);
                if ov > 0.0 {
                    out.push((j, k, ov / self.step));
                }
                k += 1;
            }
        }
        out
    }
}

/// Tensor product of [`BinAxis`]; flat index is row-major, axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    axes: Vec<BinAxis>,
}

impl BinGrid {
    pub fn new(axes: Vec<BinAxis>) -> Result<Self> {
        check_dim(axes.len())?;
        Ok(BinGrid { axes })
    }

    /// The same `len` bins tiling `[lo, hi]` on every one of `d` axes.
    pub fn cube(d: usize, lo: f64, hi: f64, len: usize) -> Result<Self> {
        BinGrid::new(vec![BinAxis::from_edges(lo, hi, len)?; d])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[BinAxis] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step).product()
    }

    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for (axis, a) in self.axes.iter().enumerate().rev() {
            out[axis] = flat % a.len;
            flat /= a.len;
        }
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .zip(&self.axes)
            .map(|(&j, a)| a.center(j))
            .collect()
    }

    /// Flat index of the bin containing `u`.
    pub fn locate(&self, u: &[f64]) -> Option<usize> {
        if u.len() != self.dim() {
            return None;
        }
        let mut flat = 0;
        for (a, &v) in self.axes.iter().zip(u) {
            flat = flat * a.len + a.locate(v)?;
        }
        Some(flat)
    }

    /// Whether the closed box `[lo_i, hi_i]` lies within the covered range.
    pub fn covers(&self, lo: &[f64], hi: &[f64]) -> bool {
        self.axes
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(a, (l, h))| *l >= a.lo_edge() && *h <= a.hi_edge())
    }

    pub fn same_as(&self, other: &BinGrid) -> bool {
        self.dim() == other.dim()
            && self
                .axes
                .iter()
                .zip(&other.axes)
                .all(|(a, b)| a.approx_eq(b))
    }
}

/// Side information an estimator reports alongside its density.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `sum(values) * bin_volume` before renormalization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre_norm_mass: Option<f64>,
    /// Mass removed by clipping negative lobes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clipped_mass: Option<f64>,
    /// Samples that fell outside the bin grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_of_range: Option<usize>,
}

/// Density per unit gradient-space volume on a [`BinGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientDensity {
    pub grid: BinGrid,
    pub values: Vec<f64>,
    /// The `tau` that produced this density; `None` for oracles and baselines.
    pub tau: Option<f64>,
    /// Bins flagged by the producer as unreliable (`true` = excluded).
    pub mask: Option<Vec<bool>>,
    pub diagnostics: Diagnostics,
}

impl GradientDensity {
    pub fn new(grid: BinGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::CountMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(GradientDensity {
            grid,
            values,
            tau: None,
            mask: None,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn bin_volume(&self) -> f64 {
        self.grid.bin_volume()
    }

    /// `sum(values) * bin_volume`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.bin_volume()
    }

    /// Scales values so that the total mass is one; returns the prior mass.
    pub fn normalize(&mut self) -> f64 {
        let m = self.mass();
        if m > 0.0 {
            let s = 1.0 / m;
            self.values.iter_mut().for_each(|v| *v *= s);
        }
        m
    }

    /// Value of the bin containing `u`.
    pub fn value_at(&self, u: &[f64]) -> Option<f64> {
        self.grid.locate(u).map(|k| self.values[k])
    }

    /// Center of the largest bin (first one on ties).
    pub fn argmax(&self) -> Vec<f64> {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        self.grid.center(best)
    }

    /// Overlap-weighted, mass-conserving transfer onto `target`. Mass outside
    /// `target` is dropped; parts of `target` this density does not cover
    /// receive nothing.
    pub fn rebin(&self, target: &BinGrid) -> Result<GradientDensity> {
        if target.dim() != self.dim() {
            return Err(Error::GridMismatch(format!(
                "cannot rebin {}-d density onto {}-d grid",
                self.dim(),
                target.dim()
            )));
        }
        let mut shape = self.grid.shape();
        let vol = self.bin_volume();
        let mut mass: Vec<f64> = self.values.iter().map(|v| v * vol).collect();
        for axis in 0..self.dim() {
            let weights = self.grid.axes[axis].overlaps(&target.axes[axis]);
            let new_len = target.axes[axis].len;
            mass = contract_axis(&mass, &shape, axis, &weights, new_len);
            shape[axis] = new_len;
        }
        let tvol = target.bin_volume();
        let values = mass.into_iter().map(|m| m / tvol).collect();
        let mut out = GradientDensity::new(target.clone(), values)?;
        out.tau = self.tau;
        Ok(out)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// CSV with a `#` metadata line, a column header `u_1,..,u_d,value`, and
    /// one row per bin in flat order.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let tau = self
            .tau
            .map(|t| t.to_string())
            .unwrap_or_else(|| "none".into());
        let axes: Vec<String> = self
            .grid
            .axes
            .iter()
            .map(|a| format!("{}:{}:{}", a.start, a.step, a.len))
            .collect();
        writeln!(
            w,
            "# d={} tau={} bin_volume={} axes={}",
            self.dim(),
            tau,
            self.bin_volume(),
            axes.join(";")
        )?;
        let cols: Vec<String> = (1..=self.dim()).map(|i| format!("u_{i}")).collect();
        writeln!(w, "{},value", cols.join(","))?;
        let mut idx = vec![0; self.dim()];
        for (k, v) in self.values.iter().enumerate() {
            self.grid.unravel(k, &mut idx);
            for (axis, j) in idx.iter().enumerate() {
                write!(w, "{},", self.grid.axes[axis].center(*j))?;
            }
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<GradientDensity> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        GradientDensity::read_csv(file)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<GradientDensity> {
        let mut lines = BufReader::new(r).lines();
        let mut next = |n: usize| -> Result<Option<String>> {
            lines.next().transpose().map_err(|e| Error::Parse {
                line: n,
                msg: e.to_string(),
            })
        };
        let meta = next(1)?.ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
        let body = meta
            .strip_prefix('#')
            .ok_or_else(|| Error::MalformedHeader("missing metadata line".into()))?;
        let mut tau = None;
        let mut axes = None;
        for tok in body.split_whitespace() {
            match tok.split_once('=') {
                Some(("tau", "none")) => {}
                Some(("tau", t)) => {
                    tau = Some(t.parse::<f64>().map_err(|_| {
                        Error::MalformedHeader(format!("bad tau `{t}`"))
                    })?)
                }
                Some(("axes", a)) => {
                    let parsed: Result<Vec<BinAxis>> = a
                        .split(';')
                        .map(|spec| {
                            let parts: Vec<&str> = spec.split(':').collect();
                            let bad = || Error::MalformedHeader(format!("bad axis `{spec}`"));
                            if parts.len() != 3 {
                                return Err(bad());
                            }
                            BinAxis::new(
                                parts[0].parse().map_err(|_| bad())?,
                                parts[1].parse().map_err(|_| bad())?,
                                parts[2].parse().map_err(|_| bad())?,
                            )
                        })
                        .collect();
                    axes = Some(parsed?);
                }
                Some(("d", _)) | Some(("bin_volume", _)) => {}
                _ => return Err(Error::MalformedHeader(format!("unexpected `{tok}`"))),
            }
        }
        let grid = BinGrid::new(axes.ok_or_else(|| Error::MalformedHeader("missing axes".into()))?)?;
        next(2)?.ok_or_else(|| Error::MalformedHeader("missing column header".into()))?;
        let mut values = Vec::with_capacity(grid.len());
        let mut n = 2;
        while let Some(line) = next(n + 1)? {
            n += 1;
            if line.trim().is_empty() {
                continue;
            }
            let last = line.rsplit(',').next().unwrap_or("");
            values.push(last.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: n,
                msg: format!("bad value `{last}`"),
            })?);
        }
        let mut d = GradientDensity::new(grid, values)?;
        d.tau = tau;
        Ok(d)
    }
}

fn contract_axis(
    data: &[f64],
    shape: &[usize],
    axis: usize,
    weights: &[(usize, usize, f64)],
    new_len: usize,
) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    let mut out = vec![0.0; outer * new_len * inner];
    for o in 0..outer {
        for &(j, k, w) in weights {
            let src = (o * len + j) * inner;
            let dst = (o * new_len + k) * inner;
            for i in 0..inner {
                out[dst + i] += w * data[src + i];
            }
        }
    }
    out
}
